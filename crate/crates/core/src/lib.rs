//! Teaching non-humanoid agents to dance from a contrastive optical-flow/music
//! reward model.
//!
//! The crate is organised along the pipeline:
//!
//! * [`audio`] decodes WAV files and produces the 35-column per-frame music
//!   feature track at 60 FPS (envelope, MFCC, chroma, peak and beat one-hots).
//! * [`env`] holds the simulated agents (cart-pole and a planar 3-link arm),
//!   their renderer and trajectory files.
//! * [`flow`] estimates dense optical flow between rendered frames.
//! * [`nn`] is a small dense/conv/attention substrate with explicit backward
//!   passes and Adam.
//! * [`reward`] is the contrastive reward model (flow and music encoders,
//!   projection heads, InfoNCE, cosine reward).
//! * [`rl`] trains dancers with PPO against the frozen reward model.
//! * [`choreo`] synthesises music-synchronised reference dancers used as the
//!   paired training corpus.
//! * [`metrics`] computes kinematic beats, BeatAlign and F1@note scores.
//! * [`baselines`] implements BPM-based control and the flow-matching reward.

pub mod audio;
pub mod baselines;
pub mod choreo;
pub mod container;
pub mod env;
pub mod error;
pub mod flow;
pub mod frame;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod reward;
pub mod rl;

pub use error::{Error, Result};

/// Frame rate shared by music features, simulation and rendering.
pub const FPS: usize = 60;

/// Derives an independent seed for stream `stream` of a base seed
/// (SplitMix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

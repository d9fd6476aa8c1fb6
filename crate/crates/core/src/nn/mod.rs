//! Minimal neural-network substrate: dense, convolution, GELU, LayerNorm and
//! a single-head attention block, each with an explicit backward pass, plus
//! Adam and a float32 checkpoint container.

mod adam;
mod attention;
mod checkpoint;
mod conv;
mod dense;
mod gradcheck;
mod layernorm;
pub mod linalg;
mod ops;
mod params;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig};
pub use attention::{positional_encoding, AttentionBlock, AttentionCache};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, NNCK_MAGIC};
pub use conv::Conv2d;
pub use dense::Dense;
pub use gradcheck::{grad_check, relative_error};
pub use layernorm::{LayerNorm, LayerNormCache};
pub use ops::{gelu, gelu_backward, gelu_scalar, softmax_rows};
pub use params::{Grads, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("duplicate parameter {0:?}")]
    DuplicateParam(String),
    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::Shape { op, detail: detail.into() }
}

"""Smoke test for the rhythmotion Python extension.

Build and install it first, e.g.

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

or build with cargo and put the library on the path as rhythmotion.so:

    cargo build --release -p rhythmotion-py --features extension-module
    cp target/release/librhythmotion_py.so python/rhythmotion.so

Optional arguments: a reward-model checkpoint and a policy checkpoint, which
are then loaded and run over the synthetic track.
"""

import math
import sys

import rhythmotion as rm


def click_track(bpm, secs, sr=22050):
    n = int(secs * sr)
    out = [0.0] * n
    period = 60.0 / bpm
    t = 0.5
    while t < secs - 0.05:
        start = int(t * sr)
        for k in range(int(0.03 * sr)):
            out[start + k] += 0.8 * math.exp(-k / (0.005 * sr)) * math.sin(2 * math.pi * 1000 * k / sr)
        t += period
    return out


def square(w, h, x0, y0, side):
    return [1.0 if x0 <= x < x0 + side and y0 <= y < y0 + side else 0.0 for y in range(h) for x in range(w)]


def main():
    track = rm.MusicTrack.from_samples(click_track(120.0, 8.0), 22050)
    print(track)
    assert track.frames == 8 * rm.FPS
    assert len(track.row(0)) == rm.FEATURE_DIM
    assert abs(track.tempo_bpm - 120.0) <= 2.0, track.tempo_bpm

    assert rm.beat_align([10, 20], [10, 20]) == 1.0
    assert abs(rm.beat_align([0], [3]) - math.exp(-9 / 18)) < 1e-12
    p, r, f1 = rm.f1_at_note([10, 40], [10, 70], 120.0, 16)
    assert (p, r, f1) == (0.5, 0.5, 0.5)

    z = [[1.0, 0.0, 0.0]] * 8
    assert abs(rm.info_nce(z, z, 0.1) - math.log(8)) < 1e-9

    w = h = 32
    u, v = rm.estimate_flow(square(w, h, 10, 10, 8), square(w, h, 11, 10, 8), w, h)
    inner = [u[y * w + x] for y in range(12, 16) for x in range(12, 16)]
    mean_u = sum(inner) / len(inner)
    assert abs(mean_u - 1.0) < 0.5, mean_u

    env = rm.Env("cartpole")
    state = env.reset(track, seed=1)
    assert len(state) == 4
    qdots = []
    for k in range(120):
        out = env.step([k // 15 % 2])
        qdots.append(out["state"][2:])
        if out["done"]:
            break
    assert len(out["frame"]) == env.resolution ** 2
    start = env.music_frame - len(qdots)
    velocity = [math.sqrt(sum(q * q for q in qd)) for qd in qdots]
    report = rm.evaluate(velocity, track, first_frame=start)
    assert 0.0 <= report["beat_align"] <= 1.0
    print("cart-pole beat_align", round(report["beat_align"], 3))

    if len(sys.argv) > 2:
        model = rm.RewardModel.load(sys.argv[1])
        policy = rm.Policy.load(sys.argv[2])
        dance = policy.dance(track, reward_model=model)
        print(policy.agent, "dance:", len(dance["actions"]), "actions, mean cosine", round(dance["mean_score"], 3))

    print("ok")


if __name__ == "__main__":
    main()

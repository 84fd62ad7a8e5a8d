"""Deterministic synthetic depth-action benchmark.

Each class is a set of parametric joint trajectories; joints are rendered
as Gaussian intensity blobs onto [-1, 1] depth frames, with the exact
blob centers written out as the skeleton annotation (the training-only
side channel). Everything is a pure function of (config, seed) via a
counter-based Philox generator, so regeneration is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NUM_JOINTS, DatasetConfig
from .encoder import philox_rng
from .tensor import ValidationError
from .tensorio import load_tensor, save_tensor

PRNG_NAME = "philox4x64"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ActionSpec:
    class_id: int
    frame_size: int
    joint_base: np.ndarray   # (S, 2) rest position, pixels
    joint_amp: np.ndarray    # (S, 2) oscillation amplitude, pixels
    freq: float              # cycles per sequence
    phase: float
    drift_amp: float         # whole-body translation amplitude
    z_amp: float
    blob_sigma: float
    jitter: float
    occlusion: str           # "none" or "lower_body"


def default_specs(cfg: DatasetConfig) -> list[ActionSpec]:
    """One spec per class. Classes differ both in posture (a per-class
    whole-body offset) and in dynamics (frequency, phase, and which limbs
    carry the motion), each by a clear margin."""
    s = cfg.frame_size / 32.0
    base = np.array([[16, 9], [10, 14], [22, 14], [12, 23], [20, 23], [16, 17]],
                    dtype=np.float64) * s
    offsets = np.array([[-3, -2], [3, -2], [-3, 2], [3, 2]], dtype=np.float64) * s
    specs = []
    for c in range(cfg.K):
        amp = np.array([[1.5, 1.0],
                        [2.5, 1.5], [2.5, 1.5],
                        [1.5, 2.0], [1.5, 2.0],
                        [0.5, 0.5]], dtype=np.float64) * s
        # alternate which limbs move most so classes differ in motion too
        if c % 2 == 1:
            amp = amp[[0, 3, 4, 1, 2, 5]]
        specs.append(ActionSpec(
            class_id=c,
            frame_size=cfg.frame_size,
            joint_base=base + offsets[c % len(offsets)],
            joint_amp=amp,
            freq=1.0 + 0.75 * c,
            phase=0.9 * c,
            drift_amp=0.5 * s,
            z_amp=0.5,
            blob_sigma=cfg.blob_sigma,
            jitter=cfg.jitter,
            occlusion=cfg.occlusion,
        ))
    return specs


def _trajectories(spec: ActionSpec, T: int) -> np.ndarray:
    """Noise-free joint tracks, (T, S, 3)."""
    tau = np.arange(T) / max(T - 1, 1)
    ang = 2.0 * np.pi * spec.freq * tau + spec.phase
    out = np.zeros((T, NUM_JOINTS, 3))
    for s in range(NUM_JOINTS):
        ph = 2.0 * np.pi * s / NUM_JOINTS
        out[:, s, 0] = spec.joint_base[s, 0] + spec.joint_amp[s, 0] * np.sin(ang + ph)
        out[:, s, 1] = spec.joint_base[s, 1] + spec.joint_amp[s, 1] * np.cos(ang + ph)
        out[:, s, 2] = spec.z_amp * np.sin(ang + 0.5 * ph)
    drift = spec.drift_amp * np.sin(2.0 * np.pi * 0.3 * tau + spec.phase)
    out[:, :, 0] += drift[:, None]
    out[:, :, 1] += drift[:, None]
    return out


def render_frame(joints_xy: np.ndarray, size: int, sigma: float,
                 occlusion: str) -> np.ndarray:
    """Background -1, blobs rising toward +1 at the joint centers."""
    ys, xs = np.mgrid[0:size, 0:size]
    peak = np.zeros((size, size))
    for x, y in joints_xy:
        d2 = (xs - x) ** 2 + (ys - y) ** 2
        np.maximum(peak, np.exp(-d2 / (2.0 * sigma * sigma)), out=peak)
    frame = -1.0 + 2.0 * peak
    if occlusion == "lower_body":
        frame[int(0.6 * size):, :] = 0.0
    return frame


def generate_sequence(spec: ActionSpec, seed: int, T: int):
    """Render one sequence; returns (frames (T,H,W), skeleton (T,S,3))."""
    if T < 2:
        raise ValidationError("sequence length must be at least 2")
    rng = philox_rng(seed)
    skel = _trajectories(spec, T)
    skel[:, :, :2] += rng.normal(0.0, spec.jitter, size=(T, NUM_JOINTS, 2))
    lo, hi = 1.0, spec.frame_size - 2.0
    if np.any(skel[:, :, :2] < lo) or np.any(skel[:, :, :2] > hi):
        raise ValidationError("trajectory exits the frame")
    frames = np.stack([
        render_frame(skel[t, :, :2], spec.frame_size, spec.blob_sigma, spec.occlusion)
        for t in range(T)
    ])
    return frames, skel


def sequence_seed(base_seed: int, class_id: int, index: int) -> int:
    """Stable per-sequence seed derived from (base, class, index)."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(class_id, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _split_counts(per_class: int, fracs) -> list[int]:
    counts = [int(round(f * per_class)) for f in fracs]
    counts[0] += per_class - sum(counts)
    return counts


def build_dataset(cfg: DatasetConfig, out_dir) -> Path:
    """Write sequence tensors plus a JSON manifest; returns the manifest path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IOError(f"cannot create output directory {out}: {e}") from e
    specs = default_specs(cfg)
    counts = _split_counts(cfg.per_class, cfg.split_fracs)
    splits = {"train": [], "val": [], "test": []}
    split_names = list(splits)
    for c in range(cfg.K):
        idx = 0
        for split_name, n in zip(split_names, counts):
            for _ in range(n):
                seed = sequence_seed(cfg.base_seed, c, idx)
                length_rng = philox_rng(seed, 1)
                T = int(length_rng.integers(cfg.t_min, cfg.t_max + 1))
                frames, skel = generate_sequence(specs[c], seed, T)
                stem = f"seq_c{c}_i{idx:03d}"
                save_tensor(out / f"{stem}_frames.ptns", frames)
                save_tensor(out / f"{stem}_skel.ptns", skel)
                splits[split_name].append({
                    "frames": f"{stem}_frames.ptns",
                    "skeleton": f"{stem}_skel.ptns",
                    "label": c,
                    "seed": seed,
                    "length": T,
                })
                idx += 1
    manifest = {
        "version": MANIFEST_VERSION,
        "K": cfg.K,
        "prng": PRNG_NAME,
        "frame_size": cfg.frame_size,
        "num_joints": NUM_JOINTS,
        "splits": splits,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def load_split(manifest: dict, manifest_path, split: str, with_skeleton: bool):
    """Load (frames, skeleton-or-None, label) triples for one split.

    With ``with_skeleton`` False the skeleton files are never touched,
    which is the testing-time contract for privileged information.
    """
    root = Path(manifest_path).parent
    out = []
    for entry in manifest["splits"][split]:
        frames = load_tensor(root / entry["frames"])
        skel = load_tensor(root / entry["skeleton"]) if with_skeleton else None
        out.append((frames, skel, int(entry["label"])))
    return out

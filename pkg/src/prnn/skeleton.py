"""Skeleton preprocessing: hip-centering, temporal smoothing, keypoint
normalization for the regression targets."""

from __future__ import annotations

import numpy as np
from scipy.signal import savgol_filter

from .config import HIP_INDEX, NUM_JOINTS
from .tensor import DimensionError, ValidationError


def normalize_skeleton(raw: np.ndarray, hip_index: int = HIP_INDEX) -> np.ndarray:
    """Translate every frame so the hip-center joint sits at the origin.

    ``raw`` is (T, S, 3); the translation is per frame.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise DimensionError(f"skeleton must be (T, S, 3), got {raw.shape}")
    if hip_index >= raw.shape[1]:
        raise ValidationError(f"hip joint index {hip_index} out of range")
    return raw - raw[:, hip_index:hip_index + 1, :]


def sg_smooth(series: np.ndarray, window: int = 5, order: int = 2) -> np.ndarray:
    """Savitzky-Golay smoothing along the time axis.

    Edges are handled by fitting the boundary polynomial directly so that
    polynomial series up to ``order`` pass through unchanged. ``series`` is
    (T, ...) with time first; series shorter than the window are returned
    unchanged.
    """
    series = np.asarray(series, dtype=np.float64)
    if window % 2 == 0:
        raise ValidationError("window must be odd")
    if order >= window:
        raise ValidationError("polynomial order must be below the window size")
    if series.shape[0] < window:
        return series.copy()
    return savgol_filter(series, window, order, axis=0, mode="interp")


def smooth_skeleton(skel: np.ndarray, window: int = 5, order: int = 2) -> np.ndarray:
    """Smooth each joint coordinate track of a (T, S, 3) skeleton."""
    return sg_smooth(skel, window, order)


def normalize_keypoints(pixels: np.ndarray, center, width: float, height: float) -> np.ndarray:
    """Map pixel (x, y) keypoints into [-1, 1] wrt the input region."""
    if width <= 0 or height <= 0:
        raise ValidationError(f"degenerate region {width}x{height}")
    pixels = np.asarray(pixels, dtype=np.float64)
    cx, cy = center
    out = np.empty_like(pixels)
    out[..., 0] = 2.0 * (pixels[..., 0] - cx) / width
    out[..., 1] = 2.0 * (pixels[..., 1] - cy) / height
    return np.clip(out, -1.0, 1.0)


def denormalize_keypoints(norm: np.ndarray, center, width: float, height: float) -> np.ndarray:
    if width <= 0 or height <= 0:
        raise ValidationError(f"degenerate region {width}x{height}")
    norm = np.asarray(norm, dtype=np.float64)
    cx, cy = center
    out = np.empty_like(norm)
    out[..., 0] = norm[..., 0] * width / 2.0 + cx
    out[..., 1] = norm[..., 1] * height / 2.0 + cy
    return out


def regression_targets(skel: np.ndarray, frame_size: int) -> np.ndarray:
    """Per-frame (S, 2) regression targets from a raw (T, S, 3) skeleton.

    Smooths, then normalizes (x, y) against the full-frame region; the
    depth coordinate is dropped (the secondary task is 2-D).
    """
    skel = np.asarray(skel, dtype=np.float64)
    if skel.shape[1] != NUM_JOINTS:
        raise DimensionError(f"expected {NUM_JOINTS} joints, got {skel.shape[1]}")
    sm = smooth_skeleton(skel)
    c = frame_size / 2.0
    return normalize_keypoints(sm[:, :, :2], (c, c), frame_size, frame_size)


def pretrain_skeleton_input(skel: np.ndarray) -> np.ndarray:
    """Per-frame flattened (3S,) hip-centered smoothed joints, the side
    input to the joint depth+skeleton embedding layer."""
    sm = smooth_skeleton(normalize_skeleton(skel))
    return sm.reshape(sm.shape[0], -1)

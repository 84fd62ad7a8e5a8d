"""Latent-class EM machinery: posterior estimation over the bridging
matrix, the label-disturbance sampler, the closed-form bridging-matrix
update, and the model log-likelihood."""

from __future__ import annotations

import numpy as np

from .tensor import ValidationError


class DegeneratePosteriorError(ValidationError):
    """The posterior normalizer vanished (all-zero bridging column)."""


def init_bridging(K: int, eps: float = 0.1) -> np.ndarray:
    """Smoothed-identity initial bridging matrix (1-eps)I + eps/K."""
    return (1.0 - eps) * np.eye(K) + eps / K


def check_row_stochastic(m: np.ndarray, tol: float = 1e-9):
    if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > tol):
        raise ValidationError("bridging matrix is not row-stochastic")


def estep_latent_pi(logits: np.ndarray, label: int, m: np.ndarray) -> np.ndarray:
    """Posterior u over classes given secondary-task logits and label.

    u_k = M[k, g] * exp(s_k) / sum_l M[l, g] * exp(s_l), with
    max-subtraction for stability.
    """
    logits = np.asarray(logits, dtype=np.float64)
    K = logits.size
    if not 0 <= label < K:
        raise ValidationError(f"label {label} out of range for K={K}")
    check_row_stochastic(m)
    col = m[:, label]
    if np.all(col == 0.0):
        raise DegeneratePosteriorError(
            f"bridging column for class {label} is identically zero"
        )
    w = col * np.exp(logits - logits.max())
    total = w.sum()
    if total <= 0.0:
        raise DegeneratePosteriorError("posterior normalizer vanished")
    return w / total


def sample_disturbed_target(u: np.ndarray, label: int, alpha: float,
                            rng: np.random.Generator) -> np.ndarray:
    """Draw a training target: the latent posterior u with probability
    1 - (K-1)/K * alpha, otherwise a deliberately wrong one-hot label.

    The wrong-label branch injects noise as a regularizer; each wrong
    class carries probability alpha/K.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    u = np.asarray(u, dtype=np.float64)
    K = u.size
    probs = np.full(K, alpha / K)
    probs[label] = 1.0 - (K - 1) * alpha / K
    drawn = int(rng.choice(K, p=probs))
    if drawn == label:
        return u.copy()
    target = np.zeros(K)
    target[drawn] = 1.0
    return target


def mstep_bridging(us: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    """Closed-form bridging update M[k, l] = sum_j u[j, k] d(l = g_j) / sum_j u[j, k].

    Rows with zero posterior mass fall back to uniform.
    """
    us = np.asarray(us, dtype=np.float64)
    labels = np.asarray(labels)
    if us.ndim != 2 or us.shape[0] == 0:
        raise ValidationError("mstep needs at least one posterior")
    if us.shape[0] != labels.size:
        raise ValidationError("posterior/label count mismatch")
    m = np.zeros((K, K))
    for j in range(us.shape[0]):
        m[:, labels[j]] += us[j]
    mass = us.sum(axis=0)
    for k in range(K):
        if mass[k] > 0.0:
            m[k] /= mass[k]
        else:
            m[k] = 1.0 / K
    return m


def q_loglik(logits: np.ndarray, labels: np.ndarray, m: np.ndarray) -> float:
    """Log-likelihood sum_j log sum_k softmax(s_j)_k * M[k, g_j],
    evaluated in log space."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels)
    check_row_stochastic(m)
    total = 0.0
    for j in range(logits.shape[0]):
        s = logits[j]
        col = m[:, labels[j]]
        smax = s.max()
        # log sum_k exp(s_k - smax) * col_k  -  log sum_k exp(s_k - smax)
        e = np.exp(s - smax)
        total += np.log(e @ col) - np.log(e.sum())
    return float(total)

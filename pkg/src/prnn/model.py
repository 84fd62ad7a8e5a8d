"""Full model assembly: parameter init, forward passes and the training
losses for all three stages."""

from __future__ import annotations

import numpy as np

from .config import NUM_JOINTS, EncoderConfig, LSTMConfig
from .encoder import encode_sequence, init_encoder_params, philox_rng
from .optim import ParameterStore
from .recurrent import init_lstm_params, rnn_forward
from .encoder import glorot_uniform
from .tensor import (DimensionError, Tensor, ValidationError, add, affine,
                     concat, cross_entropy, matmul, mul, scale, scalar_sum,
                     softmax, sub, sum_all, tanh_act, transpose, unstack,
                     zeros)

REG_DIM = 2 * NUM_JOINTS  # (x, y) per joint, per frame


def init_model_params(enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig, K: int,
                      skel_dim: int, t_max: int, seed: int,
                      with_pi_embed: bool) -> ParameterStore:
    """Build a fresh parameter store for the whole network.

    ``skel_dim`` is the flattened per-frame skeleton length (3S); the
    embedding side branch is registered only when ``with_pi_embed``.
    """
    rng = philox_rng(seed, 0)
    store = ParameterStore()
    init_encoder_params(store, enc_cfg, rng)
    d = enc_cfg.feature_dim
    store.register("embed.w", glorot_uniform(rng, (d, d), d, d))
    store.register("embed.b", np.zeros(d))
    if with_pi_embed:
        store.register("embed.we", glorot_uniform(rng, (d, skel_dim), skel_dim, d))
    init_lstm_params(store, lstm_cfg, d, K, rng)
    nh = lstm_cfg.hidden_units
    store.register("head.reg.w", glorot_uniform(rng, (REG_DIM, nh), nh, REG_DIM))
    store.register("head.reg.b", np.zeros(REG_DIM))
    b_dim = REG_DIM * t_max
    store.register("head.pi.w", glorot_uniform(rng, (K, b_dim), b_dim, K))
    store.register("head.pi.b", np.zeros(K))
    return store


def pretrain_embed(x: Tensor, skel_flat, store: ParameterStore) -> Tensor:
    """Joint embedding x' = tanh(W x + We e + b); ``skel_flat`` may be None
    for the depth-only path (the side branch is simply absent)."""
    pre = affine(store["embed.w"], x, store["embed.b"])
    if skel_flat is not None:
        if "embed.we" not in store:
            raise ValidationError("model has no skeleton embedding branch")
        e = skel_flat if isinstance(skel_flat, Tensor) else Tensor(skel_flat)
        if store["embed.we"].data.shape[1] != e.data.shape[0]:
            raise DimensionError(
                f"skeleton length {e.data.shape[0]} != embedding input "
                f"{store['embed.we'].data.shape[1]}"
            )
        pre = add(pre, matmul(store["embed.we"], e))
    return tanh_act(pre)


def forward_sequence(store: ParameterStore, frames: np.ndarray,
                     enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig,
                     skel_embed: np.ndarray | None = None,
                     want_regression: bool = False):
    """Encode a depth sequence and run the recurrent stack.

    Returns (per-frame ClassDistribution list, per-frame regression output
    list or None). ``skel_embed`` is the (T, 3S) pretraining side input.
    Over-long sequences keep their most recent max_unroll frames.
    """
    T = frames.shape[0]
    if T == 0:
        raise ValidationError("empty depth sequence")
    if T > lstm_cfg.max_unroll:
        frames = frames[-lstm_cfg.max_unroll:]
        if skel_embed is not None:
            skel_embed = skel_embed[-lstm_cfg.max_unroll:]
        T = frames.shape[0]
    xs = encode_sequence(frames, store, enc_cfg)  # (T, feature_dim)
    pre = add(matmul(xs, transpose(store["embed.w"])), store["embed.b"])
    if skel_embed is not None:
        if "embed.we" not in store:
            raise ValidationError("model has no skeleton embedding branch")
        pre = add(pre, matmul(Tensor(skel_embed), transpose(store["embed.we"])))
    feats = unstack(tanh_act(pre))
    dists, hiddens = rnn_forward(feats, store, lstm_cfg)
    regs = None
    if want_regression:
        regs = [affine(store["head.reg.w"], h, store["head.reg.b"]) for h in hiddens]
    return dists, regs


def predicted_skeleton_vector(regs: list, t_max: int) -> Tensor:
    """Concatenate per-frame regression outputs, zero-padded to REG_DIM*t_max."""
    total = REG_DIM * t_max
    parts = list(regs)
    used = REG_DIM * len(parts)
    if used > total:
        raise DimensionError(f"sequence longer than t_max={t_max}")
    if used < total:
        parts.append(zeros(total - used))
    return concat(parts)


def skeleton_to_logits(b_vec: Tensor, store: ParameterStore) -> Tensor:
    if b_vec.data.shape != store["head.pi.w"].data.shape[1:]:
        raise DimensionError(
            f"concatenated skeleton length {b_vec.data.shape} != "
            f"{store['head.pi.w'].data.shape[1:]}"
        )
    return affine(store["head.pi.w"], b_vec, store["head.pi.b"])


# ---------------------------------------------------------------------------
# losses

def classification_loss(dist, label: int) -> Tensor:
    """Final-frame cross entropy against a one-hot ground-truth label."""
    K = dist.probs.data.size
    if not 0 <= label < K:
        raise ValidationError(f"label {label} out of range for K={K}")
    onehot = np.zeros(K)
    onehot[label] = 1.0
    return cross_entropy(onehot, dist.probs)


def regression_loss(reg: Tensor, target: np.ndarray) -> Tensor:
    """Mean-per-joint squared distance between predicted and target (x, y)."""
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if reg.data.shape != t.shape:
        raise DimensionError(
            f"regression output {reg.data.shape} != target {t.shape}"
        )
    diff = sub(reg, Tensor(t))
    return scale(sum_all(mul(diff, diff)), 1.0 / NUM_JOINTS)


def sequence_multitask_loss(store: ParameterStore, frames, reg_targets,
                            label: int, lam: float,
                            enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig,
                            want_b: bool = False):
    """Per-sequence multi-task loss: final-frame classification plus
    lam-weighted per-frame regression. Optionally also returns the
    concatenated predicted-skeleton vector."""
    T = frames.shape[0]
    if T > lstm_cfg.max_unroll:
        reg_targets = reg_targets[-lstm_cfg.max_unroll:]
    dists, regs = forward_sequence(store, frames, enc_cfg, lstm_cfg,
                                   want_regression=True)
    loss = classification_loss(dists[-1], label)
    if lam > 0.0:
        reg_terms = [regression_loss(r, reg_targets[t]) for t, r in enumerate(regs)]
        loss = add(loss, scale(scalar_sum(reg_terms), lam))
    if want_b:
        return loss, predicted_skeleton_vector(regs, lstm_cfg.max_unroll)
    return loss


def multitask_loss(store: ParameterStore, batch: list, lam: float,
                   enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig) -> Tensor:
    """Summed multi-task loss over a minibatch of (frames, reg_targets, label)."""
    if lam < 0:
        raise ValidationError("lam must be nonnegative")
    terms = [sequence_multitask_loss(store, f, rt, g, lam, enc_cfg, lstm_cfg)
             for f, rt, g in batch]
    return scalar_sum(terms)


def refining_sequence_loss(store: ParameterStore, frames, target_u: np.ndarray,
                           label: int, beta: float,
                           enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig) -> Tensor:
    """Per-sequence refining loss: cross entropy of the final-frame
    prediction against the (possibly disturbed) latent target, plus a
    beta-weighted softmax loss on the secondary-branch logits."""
    dists, regs = forward_sequence(store, frames, enc_cfg, lstm_cfg,
                                   want_regression=True)
    loss = cross_entropy(target_u, dists[-1].probs)
    if beta > 0.0:
        b_vec = predicted_skeleton_vector(regs, lstm_cfg.max_unroll)
        logits = skeleton_to_logits(b_vec, store)
        K = logits.data.size
        onehot = np.zeros(K)
        onehot[label] = 1.0
        loss = add(loss, scale(cross_entropy(onehot, softmax(logits)), beta))
    return loss


def refining_loss(store: ParameterStore, batch: list, beta: float,
                  enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig) -> Tensor:
    """Summed refining loss over (frames, sampled_target, label) triples."""
    terms = [refining_sequence_loss(store, f, u, g, beta, enc_cfg, lstm_cfg)
             for f, u, g in batch]
    return scalar_sum(terms)


def secondary_logits(store: ParameterStore, frames,
                     enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig) -> np.ndarray:
    """Secondary-branch class logits for one sequence (no tape needed)."""
    _, regs = forward_sequence(store, frames, enc_cfg, lstm_cfg,
                               want_regression=True)
    b_vec = predicted_skeleton_vector(regs, lstm_cfg.max_unroll)
    return skeleton_to_logits(b_vec, store).data.copy()


def predict_sequence(store: ParameterStore, frames,
                     enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig) -> np.ndarray:
    """Per-frame class probabilities (T, K) from depth only."""
    dists, _ = forward_sequence(store, frames, enc_cfg, lstm_cfg)
    return np.stack([d.probs.data for d in dists])

"""The three-step training procedure and its stage orchestration:
pre-training with the joint depth+skeleton embedding, multi-task
learning, and EM refinement with the latent-class bridging matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .em import estep_latent_pi, init_bridging, mstep_bridging, q_loglik, \
    sample_disturbed_target
from .encoder import philox_rng
from .metrics import accuracy
from .model import (classification_loss, forward_sequence, init_model_params,
                    multitask_loss, refining_loss, secondary_logits)
from .optim import ParameterStore, adam_step
from .skeleton import pretrain_skeleton_input, regression_targets
from .tensor import Tape, ValidationError, scalar_sum
from .tensorio import save_params, save_tensor


class NumericError(RuntimeError):
    """A loss or likelihood became non-finite."""


@dataclass
class SeqData:
    frames: np.ndarray       # (T, H, W)
    reg_targets: np.ndarray  # (T, S, 2) normalized keypoints
    skel_embed: np.ndarray   # (T, 3S) hip-centered smoothed joints
    label: int


def prepare(sequences: list, frame_size: int) -> list[SeqData]:
    """Precompute regression targets and embedding inputs per sequence."""
    out = []
    for frames, skel, label in sequences:
        if skel is None:
            raise ValidationError("training data requires skeleton annotations")
        out.append(SeqData(
            frames=frames,
            reg_targets=regression_targets(skel, frame_size),
            skel_embed=pretrain_skeleton_input(skel),
            label=label,
        ))
    return out


def _minibatches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch):
        yield order[i:i + batch]


def _val_tuples(val_data: list[SeqData]):
    return [(d.frames, None, d.label) for d in val_data]


def _val_accuracy_with_pi(store, val_data, cfg: ExperimentConfig) -> float:
    """Validation accuracy along the joint depth+skeleton input path, used
    while that path is the one being trained."""
    hits = 0
    for d in val_data:
        dists, _ = forward_sequence(store, d.frames, cfg.encoder, cfg.lstm,
                                    skel_embed=d.skel_embed)
        hits += int(np.argmax(dists[-1].probs.data)) == d.label
    return hits / len(val_data)


class EarlyStopper:
    """Keep the best-validation snapshot; stop once patience runs out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_err = np.inf
        self.best_snap = None
        self.since_best = 0

    def update(self, err: float, store: ParameterStore) -> bool:
        if err < self.best_err - 1e-12:
            self.best_err = err
            self.best_snap = store.snapshot()
            self.since_best = 0
        else:
            self.since_best += 1
        return self.since_best > self.patience


def run_pretrain(train_data: list[SeqData], val_data: list[SeqData],
                 cfg: ExperimentConfig, store: ParameterStore = None,
                 use_pi: bool = True, epochs: int = None):
    """Train encoder + embedding + recurrent stack with the final-frame
    softmax loss, feeding the skeleton side input when ``use_pi``.

    Returns (best parameter snapshot, per-epoch log)."""
    if not train_data:
        raise ValidationError("empty training set")
    enc_cfg, lstm_cfg = cfg.encoder, cfg.lstm
    hp = cfg.hyper
    if store is None:
        skel_dim = train_data[0].skel_embed.shape[1]
        store = init_model_params(enc_cfg, lstm_cfg, hp.K, skel_dim,
                                  lstm_cfg.max_unroll, cfg.seed, with_pi_embed=use_pi)
    if epochs is None:
        epochs = cfg.train.pretrain_epochs
    names = [n for n in store.names()
             if not n.startswith(("head.reg", "head.pi"))]
    rng = philox_rng(cfg.seed, 1 if use_pi else 10)

    def val_acc_fn():
        if use_pi:
            return _val_accuracy_with_pi(store, val_data, cfg)
        return accuracy(store, _val_tuples(val_data), hp.K, enc_cfg, lstm_cfg)

    stopper = EarlyStopper(cfg.train.patience)
    stopper.update(1.0 - val_acc_fn(), store)
    log = []
    for epoch in range(epochs):
        total = 0.0
        for batch_idx in _minibatches(len(train_data), hp.batch, rng):
            with Tape() as tape:
                terms = []
                for i in batch_idx:
                    d = train_data[i]
                    side = d.skel_embed if use_pi else None
                    dists, _ = forward_sequence(store, d.frames, enc_cfg, lstm_cfg,
                                                skel_embed=side)
                    terms.append(classification_loss(dists[-1], d.label))
                loss = scalar_sum(terms)
            if not np.isfinite(loss.item()):
                raise NumericError("non-finite pretraining loss")
            grads = tape.backward(loss)
            adam_step(store, store.collect(grads, names), hp.lr, names=names)
            total += loss.item()
        val_acc = val_acc_fn()
        log.append({"iteration": epoch + 1, "Q": None,
                    "losses": {"train": total}, "val_accuracy": val_acc})
        if stopper.update(1.0 - val_acc, store):
            break
    return stopper.best_snap, log


def run_learning(train_data: list[SeqData], val_data: list[SeqData],
                 cfg: ExperimentConfig, pretrained: dict):
    """Multi-task stage: drop the skeleton embedding branch, train on the
    joint classification + regression objective from the pretrained init."""
    if not train_data:
        raise ValidationError("empty training set")
    enc_cfg, lstm_cfg = cfg.encoder, cfg.lstm
    hp = cfg.hyper
    snap = {n: a for n, a in pretrained.items() if n != "embed.we"}
    store = ParameterStore()
    store.load_snapshot(snap)
    names = [n for n in store.names() if not n.startswith("head.pi")]
    rng = philox_rng(cfg.seed, 2)
    stopper = EarlyStopper(cfg.train.patience)
    stopper.update(1.0 - accuracy(store, _val_tuples(val_data), hp.K, enc_cfg, lstm_cfg),
                   store)
    log = []
    for epoch in range(cfg.train.learn_epochs):
        total = 0.0
        for batch_idx in _minibatches(len(train_data), hp.batch, rng):
            batch = [(train_data[i].frames, train_data[i].reg_targets,
                      train_data[i].label) for i in batch_idx]
            with Tape() as tape:
                loss = multitask_loss(store, batch, hp.lam, enc_cfg, lstm_cfg)
            if not np.isfinite(loss.item()):
                raise NumericError("non-finite multi-task loss")
            grads = tape.backward(loss)
            adam_step(store, store.collect(grads, names), hp.lr, names=names)
            total += loss.item()
        val_acc = accuracy(store, _val_tuples(val_data), hp.K, enc_cfg, lstm_cfg)
        log.append({"iteration": epoch + 1, "Q": None,
                    "losses": {"train": total}, "val_accuracy": val_acc})
        if stopper.update(1.0 - val_acc, store):
            break
    return stopper.best_snap, log


def run_refining(train_data: list[SeqData], val_data: list[SeqData],
                 cfg: ExperimentConfig, learned: dict):
    """EM refinement: alternate latent-posterior estimation, one optimizer
    epoch on the latent-target loss, and the closed-form bridging update.

    Returns (best snapshot, bridging matrix, per-iteration log)."""
    enc_cfg, lstm_cfg = cfg.encoder, cfg.lstm
    hp = cfg.hyper
    store = ParameterStore()
    store.load_snapshot(dict(learned))
    labels = np.array([d.label for d in train_data])
    m = init_bridging(hp.K)
    if hp.em_max_iters == 0:
        return store.snapshot(), m, []
    names = [n for n in store.names() if n != "embed.we"]
    rng = philox_rng(cfg.seed, 3)
    best_snap = store.snapshot()
    best_m = m.copy()
    best_err = 1.0 - accuracy(store, _val_tuples(val_data), hp.K, enc_cfg, lstm_cfg)
    log = []
    prev_q = None
    for it in range(hp.em_max_iters):
        # E-step: latent posteriors from the secondary branch
        logits = np.stack([secondary_logits(store, d.frames, enc_cfg, lstm_cfg)
                           for d in train_data])
        us = np.stack([estep_latent_pi(logits[j], labels[j], m)
                       for j in range(len(train_data))])
        # M-step part 1: one optimizer epoch on the latent-target loss
        total = 0.0
        for batch_idx in _minibatches(len(train_data), hp.batch, rng):
            batch = []
            for i in batch_idx:
                target = sample_disturbed_target(us[i], labels[i], hp.alpha, rng)
                batch.append((train_data[i].frames, target, train_data[i].label))
            with Tape() as tape:
                loss = refining_loss(store, batch, hp.beta, enc_cfg, lstm_cfg)
            if not np.isfinite(loss.item()):
                raise NumericError("non-finite refining loss")
            grads = tape.backward(loss)
            adam_step(store, store.collect(grads, names), hp.lr, names=names)
            total += loss.item()
        # M-step part 2: closed-form bridging update with parameters fixed
        logits = np.stack([secondary_logits(store, d.frames, enc_cfg, lstm_cfg)
                           for d in train_data])
        q_before = q_loglik(logits, labels, m)
        us = np.stack([estep_latent_pi(logits[j], labels[j], m)
                       for j in range(len(train_data))])
        m = mstep_bridging(us, labels, hp.K)
        q_after = q_loglik(logits, labels, m)
        if not (np.isfinite(q_before) and np.isfinite(q_after)):
            raise NumericError("non-finite log-likelihood in refinement")
        val_acc = accuracy(store, _val_tuples(val_data), hp.K, enc_cfg, lstm_cfg)
        log.append({"iteration": it + 1, "Q": q_after,
                    "losses": {"train": total, "Q_before_bridge": q_before},
                    "val_accuracy": val_acc})
        if 1.0 - val_acc < best_err - 1e-12:
            best_err = 1.0 - val_acc
            best_snap = store.snapshot()
            best_m = m.copy()
        if prev_q is not None and abs(q_after - prev_q) <= hp.em_tol * max(1.0, abs(q_after)):
            break
        prev_q = q_after
    return best_snap, best_m, log


STAGES_BY_VARIANT = {
    "vanilla_cnn_rnn": ("vanilla",),
    "prnn_no_pretrain": ("learn", "refine"),
    "prnn_no_refine": ("pretrain", "learn"),
    "prnn_full": ("pretrain", "learn", "refine"),
}


def train_variant(cfg: ExperimentConfig, train_raw: list, val_raw: list,
                  out_dir=None):
    """Run the configured variant's stages; optionally checkpoint each one.

    Returns (final snapshot, bridging matrix or None, per-stage logs)."""
    frame_size = cfg.dataset.frame_size
    train_data = prepare(train_raw, frame_size)
    val_data = prepare(val_raw, frame_size)
    stages = STAGES_BY_VARIANT[cfg.variant]
    logs: dict[str, list] = {}
    snap = None
    bridging = None

    def checkpoint(stage, snapshot, log, matrix=None):
        logs[stage] = log
        if out_dir is not None:
            d = Path(out_dir) / stage
            save_params(d, snapshot)
            if matrix is not None:
                save_tensor(d / "bridging_matrix.ptns", matrix)
            (d / "log.json").write_text(json.dumps(log, indent=2, sort_keys=True))

    if cfg.variant == "vanilla_cnn_rnn":
        epochs = cfg.train.pretrain_epochs + cfg.train.learn_epochs
        snap, log = run_pretrain(train_data, val_data, cfg, use_pi=False,
                                 epochs=epochs)
        checkpoint("vanilla", snap, log)
        return snap, None, logs

    if "pretrain" in stages:
        snap, log = run_pretrain(train_data, val_data, cfg, use_pi=True)
        checkpoint("pretrain", snap, log)
    else:
        # learning from scratch: fresh init, no joint-embedding stage
        skel_dim = train_data[0].skel_embed.shape[1]
        store = init_model_params(cfg.encoder, cfg.lstm, cfg.hyper.K, skel_dim,
                                  cfg.lstm.max_unroll, cfg.seed, with_pi_embed=False)
        snap = store.snapshot()

    snap, log = run_learning(train_data, val_data, cfg, snap)
    checkpoint("learn", snap, log)

    if "refine" in stages:
        snap, bridging, log = run_refining(train_data, val_data, cfg, snap)
        checkpoint("refine", snap, log, matrix=bridging)
    return snap, bridging, logs


def train_three_step(cfg: ExperimentConfig, train_raw: list, val_raw: list,
                     out_dir=None):
    """Pre-training -> learning -> refining, one round, with checkpoints."""
    full = ExperimentConfig(dataset=cfg.dataset, encoder_preset=cfg.encoder_preset,
                            lstm=cfg.lstm, hyper=cfg.hyper, train=cfg.train,
                            variant="prnn_full", seed=cfg.seed)
    return train_variant(full, train_raw, val_raw, out_dir=out_dir)

"""Evaluation: confusion matrix, per-class and mean accuracy, per-frame
confidence traces. Consumes depth sequences only."""

from __future__ import annotations

import numpy as np

from .config import EncoderConfig, LSTMConfig
from .model import predict_sequence
from .optim import ParameterStore


def confusion_matrix(true_labels, pred_labels, K: int) -> np.ndarray:
    cm = np.zeros((K, K), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        cm[t, p] += 1
    return cm


def mean_accuracy(cm: np.ndarray) -> float:
    """Mean of the confusion-matrix diagonal normalized per class."""
    accs = per_class_accuracy(cm)
    return float(np.mean(accs)) if accs.size else 0.0


def per_class_accuracy(cm: np.ndarray) -> np.ndarray:
    counts = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(counts > 0, np.diag(cm) / np.maximum(counts, 1), 0.0)
    return acc


def evaluate(store: ParameterStore, sequences: list, K: int,
             enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig,
             want_traces: bool = False) -> dict:
    """Deterministic metrics over (frames, _, label) triples.

    Prediction is the argmax of the final-frame class distribution.
    """
    true_labels, pred_labels, traces = [], [], []
    for frames, _, label in sequences:
        probs = predict_sequence(store, frames, enc_cfg, lstm_cfg)
        true_labels.append(label)
        pred_labels.append(int(np.argmax(probs[-1])))
        if want_traces:
            traces.append(probs)
    cm = confusion_matrix(true_labels, pred_labels, K)
    out = {
        "mean_accuracy": mean_accuracy(cm),
        "per_class_accuracy": per_class_accuracy(cm).tolist(),
        "confusion": cm.tolist(),
    }
    if want_traces:
        out["traces"] = traces
    return out


def accuracy(store: ParameterStore, sequences: list, K: int,
             enc_cfg: EncoderConfig, lstm_cfg: LSTMConfig) -> float:
    return evaluate(store, sequences, K, enc_cfg, lstm_cfg)["mean_accuracy"]

"""LSTM stack over feature sequences plus the classification head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import LSTMConfig
from .encoder import glorot_uniform
from .optim import ParameterStore
from .tensor import (Tensor, ValidationError, add, affine, matmul, mul,
                     sigmoid_act, softmax, tanh_act, zeros)

GATES = ("i", "f", "o", "c")


@dataclass
class LSTMState:
    h: list  # hidden vector per layer
    c: list  # memory cell per layer

    @staticmethod
    def zero(cfg: LSTMConfig) -> "LSTMState":
        return LSTMState(h=[zeros(cfg.hidden_units) for _ in range(cfg.num_layers)],
                         c=[zeros(cfg.hidden_units) for _ in range(cfg.num_layers)])


@dataclass
class ClassDistribution:
    logits: Tensor
    probs: Tensor


def init_lstm_params(store: ParameterStore, cfg: LSTMConfig, input_dim: int,
                     num_classes: int, rng: np.random.Generator):
    """Gate weights via normalized init; forget-gate bias starts at 1.0."""
    in_dim = input_dim
    for layer in range(1, cfg.num_layers + 1):
        nh = cfg.hidden_units
        if cfg.cell == "lstm":
            for g in GATES:
                store.register(f"rnn.layer{layer}.w{g}",
                               glorot_uniform(rng, (nh, in_dim), in_dim, nh))
                store.register(f"rnn.layer{layer}.u{g}",
                               glorot_uniform(rng, (nh, nh), nh, nh))
                bias = np.full(nh, 1.0) if g == "f" else np.zeros(nh)
                store.register(f"rnn.layer{layer}.b{g}", bias)
        else:
            store.register(f"rnn.layer{layer}.w",
                           glorot_uniform(rng, (nh, in_dim), in_dim, nh))
            store.register(f"rnn.layer{layer}.u",
                           glorot_uniform(rng, (nh, nh), nh, nh))
            store.register(f"rnn.layer{layer}.b", np.zeros(nh))
        in_dim = nh
    store.register("head.cls.w",
                   glorot_uniform(rng, (num_classes, cfg.hidden_units),
                                  cfg.hidden_units, num_classes))
    store.register("head.cls.b", np.zeros(num_classes))


def lstm_step(x: Tensor, state: LSTMState, store: ParameterStore,
              cfg: LSTMConfig) -> LSTMState:
    """One time step through the full stack; layer l>1 consumes layer l-1's h."""
    new_h, new_c = [], []
    inp = x
    for layer in range(1, cfg.num_layers + 1):
        h_prev, c_prev = state.h[layer - 1], state.c[layer - 1]
        if cfg.cell == "lstm":
            def gate(g, act):
                pre = add(add(matmul(store[f"rnn.layer{layer}.w{g}"], inp),
                              matmul(store[f"rnn.layer{layer}.u{g}"], h_prev)),
                          store[f"rnn.layer{layer}.b{g}"])
                return act(pre)

            i = gate("i", sigmoid_act)
            f = gate("f", sigmoid_act)
            o = gate("o", sigmoid_act)
            cand = gate("c", tanh_act)
            c_new = add(mul(f, c_prev), mul(i, cand))
            h_new = mul(o, tanh_act(c_new))
        else:  # vanilla recurrence: h_t = tanh(W x + U h + b)
            pre = add(add(matmul(store[f"rnn.layer{layer}.w"], inp),
                          matmul(store[f"rnn.layer{layer}.u"], h_prev)),
                      store[f"rnn.layer{layer}.b"])
            h_new = tanh_act(pre)
            c_new = c_prev
        new_h.append(h_new)
        new_c.append(c_new)
        inp = h_new
    return LSTMState(h=new_h, c=new_c)


def class_head(h: Tensor, store: ParameterStore) -> ClassDistribution:
    logits = tanh_act(affine(store["head.cls.w"], h, store["head.cls.b"]))
    return ClassDistribution(logits=logits, probs=softmax(logits))


def rnn_forward(features: list, store: ParameterStore, cfg: LSTMConfig):
    """Run the stack from a zero state over a feature sequence.

    Returns (per-frame ClassDistribution list, per-frame top-layer h list).
    Sequences longer than max_unroll keep only the most recent frames.
    """
    if not features:
        raise ValidationError("rnn_forward on an empty sequence")
    if len(features) > cfg.max_unroll:
        features = features[-cfg.max_unroll:]
    state = LSTMState.zero(cfg)
    dists, hiddens = [], []
    for x in features:
        state = lstm_step(x, state, store, cfg)
        top = state.h[-1]
        hiddens.append(top)
        dists.append(class_head(top, store))
    return dists, hiddens

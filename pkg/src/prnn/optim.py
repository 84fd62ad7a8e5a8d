"""Parameter storage and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Gradients, Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


class ParameterStore:
    """Named map from parameter path to tensor plus per-parameter Adam state.

    Registration order is preserved; iteration over names is deterministic.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._adam: dict[str, AdamState] = {}

    def register(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice")
        t = Tensor(np.array(data, dtype=np.float64))
        self._params[name] = t
        self._adam[name] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
        return t

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def drop(self, name: str):
        del self._params[name]
        del self._adam[name]

    def adam_state(self, name: str) -> AdamState:
        return self._adam[name]

    def collect(self, grads: Gradients, names=None) -> dict[str, np.ndarray]:
        """Gradient arrays per parameter name; zeros for untouched ones."""
        if names is None:
            names = self.names()
        return {n: grads.wrt(self._params[n]) for n in names}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]):
        for n, arr in snap.items():
            if n not in self._params:
                self.register(n, arr)
            else:
                self._params[n].data[...] = arr
        for n in list(self._params):
            if n not in snap:
                self.drop(n)

    def reset_adam(self):
        for n, t in self._params.items():
            self._adam[n] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))


def adam_step(store: ParameterStore, gradients: dict[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              names=None):
    """In-place bias-corrected Adam update over the named parameters."""
    if names is None:
        names = list(gradients)
    for name in names:
        if name not in gradients:
            raise KeyError(f"missing gradient for parameter {name!r}")
        g = gradients[name]
        p = store[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}"
            )
        st = store.adam_state(name)
        st.t += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * g * g
        mhat = st.m / (1.0 - beta1 ** st.t)
        vhat = st.v / (1.0 - beta2 ** st.t)
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)

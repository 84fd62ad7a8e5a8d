import numpy as np
import pytest

from prnn.optim import ParameterStore, adam_step
from prnn.tensor import Tape, Tensor, mul, sum_all


def make_store():
    store = ParameterStore()
    store.register("w", [1.0, -2.0, 3.0])
    return store


def test_duplicate_registration_rejected():
    store = make_store()
    with pytest.raises(ValueError):
        store.register("w", [0.0])


def test_first_step_is_signed_lr():
    store = make_store()
    g = np.array([0.5, -0.1, 2.0])
    before = store["w"].data.copy()
    adam_step(store, {"w": g}, lr=0.01)
    # bias correction makes the first update ~ lr * sign(g)
    assert np.allclose(store["w"].data, before - 0.01 * np.sign(g), atol=1e-6)


def test_zero_gradient_no_change():
    store = make_store()
    before = store["w"].data.copy()
    adam_step(store, {"w": np.zeros(3)}, lr=0.1)
    assert np.array_equal(store["w"].data, before)
    assert store.adam_state("w").t == 1


def test_missing_gradient_key_errors():
    store = make_store()
    with pytest.raises(KeyError):
        adam_step(store, {}, lr=0.1, names=["w"])


def test_descends_quadratic():
    """10 Adam steps on f(w)=w^2 from w=1 strictly decrease f."""
    store = ParameterStore()
    store.register("w", [1.0])
    vals = []
    for _ in range(10):
        with Tape() as tape:
            loss = sum_all(mul(store["w"], store["w"]))
        vals.append(loss.item())
        grads = tape.backward(loss)
        adam_step(store, store.collect(grads), lr=0.1)
    vals.append(store["w"].data[0] ** 2)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_snapshot_roundtrip():
    store = make_store()
    snap = store.snapshot()
    store["w"].data[:] = 0.0
    store.load_snapshot(snap)
    assert np.array_equal(store["w"].data, [1.0, -2.0, 3.0])


def test_gradient_shape_mismatch():
    store = make_store()
    with pytest.raises(ValueError):
        adam_step(store, {"w": np.zeros(4)}, lr=0.1)

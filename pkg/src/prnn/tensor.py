"""Dense fp64 tensors with reverse-mode automatic differentiation.

Every operation records a backward closure on the active :class:`Tape`.
Calling ``tape.backward(loss)`` replays those closures in exact reverse
order and accumulates gradients keyed by tensor identity, which keeps
the reduction order fixed and the whole pass deterministic.
"""

from __future__ import annotations

import numpy as np

LOG_EPS = 1e-12  # clip floor applied to probabilities before log


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ValidationError(ValueError):
    """Raised when a value violates a documented precondition."""


class Tensor:
    """A dense fp64 array plus shape metadata. Data is row-major."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(data) -> Tensor:
    """Wrap raw data as a tensor (gradients may still flow to it)."""
    return Tensor(data)


class Gradients:
    """Gradient accumulators keyed by tensor identity."""

    def __init__(self):
        self._buf = {}
        self._keep = {}  # id -> tensor, guards against id reuse

    def seed(self, t: Tensor):
        self._buf[id(t)] = np.ones_like(t.data)
        self._keep[id(t)] = t

    def get(self, t: Tensor):
        return self._buf.get(id(t))

    def add(self, t: Tensor, g: np.ndarray):
        cur = self._buf.get(id(t))
        if cur is None:
            self._buf[id(t)] = np.array(g, dtype=np.float64)
            self._keep[id(t)] = t
        else:
            cur += g

    def wrt(self, t: Tensor) -> np.ndarray:
        """Gradient for ``t``, zeros if it never entered the graph."""
        g = self._buf.get(id(t))
        if g is None:
            return np.zeros_like(t.data)
        return g


class Tape:
    """Ordered record of primitive ops; backward replays them reversed."""

    _stack: list["Tape"] = []

    def __init__(self):
        self._ops = []

    @classmethod
    def active(cls):
        return cls._stack[-1] if cls._stack else None

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._stack.pop()
        return False

    def record(self, backward_fn):
        self._ops.append(backward_fn)

    def backward(self, loss: Tensor) -> Gradients:
        if loss.data.shape != ():
            raise DimensionError(
                f"backward expects a scalar loss, got shape {loss.data.shape}"
            )
        grads = Gradients()
        grads.seed(loss)
        for fn in reversed(self._ops):
            fn(grads)
        return grads


def _record(fn):
    tape = Tape.active()
    if tape is not None:
        tape.record(fn)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, _unbroadcast(go, a.shape))
        grads.add(b, _unbroadcast(go, b.shape))

    _record(bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, _unbroadcast(go, a.shape))
        grads.add(b, _unbroadcast(-go, b.shape))

    _record(bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, _unbroadcast(go * b.data, a.shape))
        grads.add(b, _unbroadcast(go * a.data, b.shape))

    _record(bwd)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, go * c)

    _record(bwd)
    return out


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise DimensionError(
            f"matmul supports rank 1-2 operands, got {a.shape} x {b.shape}"
        )
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}"
        )
    out = Tensor(a.data @ b.data)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            grads.add(a, go @ bd.T)
            grads.add(b, ad.T @ go)
        elif ad.ndim == 2 and bd.ndim == 1:
            grads.add(a, np.outer(go, bd))
            grads.add(b, ad.T @ go)
        elif ad.ndim == 1 and bd.ndim == 2:
            grads.add(a, bd @ go)
            grads.add(b, np.outer(ad, go))
        else:  # vector dot vector -> scalar
            grads.add(a, go * bd)
            grads.add(b, go * ad)

    _record(bwd)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, go.reshape(a.shape))

    _record(bwd)
    return out


def concat(parts: list[Tensor]) -> Tensor:
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError(f"concat expects vectors, got shape {p.shape}")
    out = Tensor(np.concatenate([p.data for p in parts]))
    sizes = [p.data.size for p in parts]

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        off = 0
        for p, n in zip(parts, sizes):
            grads.add(p, go[off:off + n])
            off += n

    _record(bwd)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got {a.shape}")
    out = Tensor(a.data.T.copy())

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, go.T)

    _record(bwd)
    return out


def unstack(a: Tensor) -> list[Tensor]:
    """Split along the first axis into views usable as separate tensors."""
    rows = [Tensor(a.data[i]) for i in range(a.data.shape[0])]

    def bwd(grads):
        acc = None
        for i, r in enumerate(rows):
            g = grads.get(r)
            if g is not None:
                if acc is None:
                    acc = np.zeros_like(a.data)
                acc[i] = g
        if acc is not None:
            grads.add(a, acc)

    _record(bwd)
    return rows


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, np.full(a.shape, go))

    _record(bwd)
    return out


# ---------------------------------------------------------------------------
# activations

def relu_act(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, go * (a.data > 0.0))

    _record(bwd)
    return out


def tanh_act(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, go * (1.0 - y * y))

    _record(bwd)
    return out


def sigmoid_act(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(a, go * y * (1.0 - y))

    _record(bwd)
    return out


# ---------------------------------------------------------------------------
# convolution and pooling

def conv2d_same(x: Tensor, k: Tensor, b: Tensor) -> Tensor:
    """3x3 stride-1 "same" convolution over an HxWxCin map.

    A leading batch axis (NxHxWxCin) is accepted and convolved per item.
    """
    if x.data.ndim not in (3, 4):
        raise DimensionError(f"conv2d_same input must be HxWxC, got {x.shape}")
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    n, h, w, cin = xd.shape
    if k.data.shape[:3] != (3, 3, cin):
        raise DimensionError(
            f"kernel shape {k.shape} incompatible with input channels {cin}"
        )
    cout = k.data.shape[3]
    if b.data.shape != (cout,):
        raise DimensionError(f"bias shape {b.shape} != ({cout},)")

    xp = np.zeros((n, h + 2, w + 2, cin))
    xp[:, 1:-1, 1:-1] = xd
    acc = np.zeros((n * h * w, cout))
    for di in range(3):
        for dj in range(3):
            patch = xp[:, di:di + h, dj:dj + w].reshape(n * h * w, cin)
            acc += patch @ k.data[di, dj]
    res = acc.reshape(n, h, w, cout) + b.data
    out = Tensor(res if batched else res[0])

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        gof = go.reshape(n * h * w, cout)
        grads.add(b, gof.sum(axis=0))
        gk = np.zeros_like(k.data)
        gxp = np.zeros_like(xp)
        for di in range(3):
            for dj in range(3):
                patch = xp[:, di:di + h, dj:dj + w].reshape(n * h * w, cin)
                gk[di, dj] = patch.T @ gof
                gxp[:, di:di + h, dj:dj + w] += (gof @ k.data[di, dj].T).reshape(n, h, w, cin)
        grads.add(k, gk)
        gx = gxp[:, 1:-1, 1:-1]
        grads.add(x, gx if batched else gx[0])

    _record(bwd)
    return out


def maxpool2(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; odd edges padded with -inf.

    Ties break toward the first (row-major earliest) element. A leading
    batch axis is accepted.
    """
    if x.data.ndim not in (3, 4):
        raise DimensionError(f"maxpool2 input must be HxWxC, got {x.shape}")
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    n, h, w, c = xd.shape
    if h < 1 or w < 1:
        raise ValidationError("maxpool2 on empty input")
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    xp = np.full((n, 2 * h2, 2 * w2, c), -np.inf)
    xp[:, :h, :w] = xd
    win = xp.reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h2, w2, 4, c)
    idx = win.argmax(axis=3)  # first max wins: row-major tie-break
    res = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    out = Tensor(res if batched else res[0])

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        god = go if batched else go[None]
        mask = idx[:, :, :, None, :] == np.arange(4)[None, None, None, :, None]
        gwin = mask * god[:, :, :, None, :]
        gxp = gwin.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5) \
                  .reshape(n, 2 * h2, 2 * w2, c)
        gx = gxp[:, :h, :w]
        grads.add(x, gx if batched else gx[0])

    _record(bwd)
    return out


# ---------------------------------------------------------------------------
# probabilistic heads

def softmax(logits: Tensor) -> Tensor:
    """Numerically stable softmax over a logit vector."""
    z = logits.data
    if z.ndim != 1 or z.size < 1:
        raise DimensionError(f"softmax expects a nonempty vector, got {logits.shape}")
    if not np.all(np.isfinite(z)):
        raise ValidationError("softmax logits must be finite")
    e = np.exp(z - z.max())
    p = e / e.sum()
    out = Tensor(p)

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        grads.add(logits, p * (go - float(go @ p)))

    _record(bwd)
    return out


def _check_simplex(v: np.ndarray, name: str):
    if abs(v.sum() - 1.0) > 1e-9 or np.any(v < -1e-12):
        raise ValidationError(f"{name} is not on the probability simplex (sum={v.sum()})")


def cross_entropy(target, predicted: Tensor) -> Tensor:
    """-sum(target * log predicted) with the prediction clipped at LOG_EPS.

    ``target`` is treated as a constant distribution (one-hot or soft);
    gradients flow to ``predicted`` only.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    p = predicted.data
    if t.shape != p.shape:
        raise DimensionError(f"cross_entropy shapes disagree: {t.shape} vs {p.shape}")
    _check_simplex(t, "target")
    _check_simplex(p, "predicted")
    pc = np.maximum(p, LOG_EPS)
    out = Tensor(-(t * np.log(pc)).sum())

    def bwd(grads):
        go = grads.get(out)
        if go is None:
            return
        g = np.where(p > LOG_EPS, -t / pc, 0.0)
        grads.add(predicted, go * g)

    _record(bwd)
    return out


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """w @ x + b, the workhorse for all dense layers."""
    return add(matmul(w, x), b)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def scalar_sum(terms: list[Tensor]) -> Tensor:
    """Left-to-right sum of scalar tensors (fixed reduction order)."""
    if not terms:
        raise ValidationError("scalar_sum of no terms")
    acc = terms[0]
    for t in terms[1:]:
        acc = add(acc, t)
    return acc

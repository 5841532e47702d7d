"""Dense float64 tensors, a reverse-mode gradient tape, and a seeded RNG.

Everything else in the library computes on these three pieces. The op set is
deliberately small: matrix-vector product, elementwise arithmetic and
activations, concatenation/slicing, softmax, a fused softmax-cross-entropy,
and a fused diagonal-Gaussian KL divergence. Each op records itself on the
active :class:`Tape` so a single reverse sweep yields gradients for every
parameter, including through recurrences (backpropagation through time).
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "Tape",
    "RandomSource",
    "tensor",
    "zeros",
    "matvec",
    "add",
    "sub",
    "mul",
    "sigmoid",
    "tanh",
    "exp",
    "scale",
    "total",
    "concat",
    "subvector",
    "column",
    "softmax",
    "softmax_cross_entropy",
    "gaussian_kl",
    "backward",
    "sample_standard_normal",
]


class Tensor:
    """Immutable rank-1 or rank-2 array of float64 values."""

    __slots__ = ("data",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim not in (1, 2):
            raise DimensionError(f"tensors are rank 1 or 2, got rank {arr.ndim}")
        if arr.ndim == 2 and arr.size == 0:
            raise DimensionError("rank-2 tensors must be non-empty")
        _check_finite(arr, "tensor")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def tolist(self):
        return self.data.tolist()

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value produced by {op}")


def _wrap(arr: np.ndarray, op: str) -> Tensor:
    """Fast construction path for op results (already float64, owned)."""
    _check_finite(arr, op)
    arr.setflags(write=False)
    t = object.__new__(Tensor)
    object.__setattr__(t, "data", arr)
    return t


def tensor(values) -> Tensor:
    return Tensor(values)


def zeros(shape) -> Tensor:
    if isinstance(shape, int):
        shape = (shape,)
    return _wrap(np.zeros(shape), "zeros")


# ---------------------------------------------------------------------------
# gradient tape
# ---------------------------------------------------------------------------

_ACTIVE: Optional["Tape"] = None

# A backward rule maps the output gradient to one gradient array per input
# (None for inputs that do not need gradients).
_BackwardRule = Callable[[np.ndarray], tuple]


class Tape:
    """Records ops in execution order; replays them in reverse for gradients.

    Single-owner: enter it as a context manager around the forward pass,
    call :meth:`backward` on a scalar loss, then read per-tensor gradients
    with :meth:`grad`. Nodes are identified by tensor object identity, so
    the tape keeps strong references to every tensor it has seen.
    """

    def __init__(self):
        self._ops: list = []  # (out_id, in_ids, backward_rule)
        self._index: dict = {}  # id(tensor) -> node id
        self._tensors: list = []  # strong refs, node id -> Tensor
        self._grads: Optional[list] = None

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise ContractError("a Tape is already active; tapes do not nest")
        _ACTIVE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE
        _ACTIVE = None

    def _node(self, t: Tensor) -> int:
        nid = self._index.get(id(t))
        if nid is None:
            nid = len(self._tensors)
            self._index[id(t)] = nid
            self._tensors.append(t)
        return nid

    def _record(self, out: Tensor, inputs: tuple, rule: _BackwardRule) -> None:
        in_ids = tuple(self._node(t) for t in inputs)
        self._ops.append((self._node(out), in_ids, rule))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(node) for every node reachable from *loss*."""
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        lid = self._index.get(id(loss))
        if lid is None:
            raise ContractError("loss tensor was not computed on this tape")
        grads: list = [None] * len(self._tensors)
        grads[lid] = np.ones_like(loss.data)
        for out_id, in_ids, rule in reversed(self._ops):
            g = grads[out_id]
            if g is None:
                continue
            for in_id, gi in zip(in_ids, rule(g)):
                if gi is None:
                    continue
                buf = grads[in_id]
                if buf is None:
                    buf = grads[in_id] = np.zeros(self._tensors[in_id].shape)
                buf += gi
        self._grads = grads

    def grad(self, t: Tensor) -> Tensor:
        """Gradient of the last backward() loss w.r.t. *t* (zeros if unused)."""
        if self._grads is None:
            raise ContractError("backward() has not run on this tape")
        nid = self._index.get(id(t))
        g = self._grads[nid] if nid is not None else None
        if g is None:
            return zeros(t.shape)
        return _wrap(g.copy(), "grad")


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def _require_vector(x: Tensor, op: str) -> None:
    if x.rank != 1:
        raise DimensionError(f"{op} needs a rank-1 tensor, got shape {x.shape}")


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def matvec(m: Tensor, x: Tensor) -> Tensor:
    if m.rank != 2 or x.rank != 1:
        raise DimensionError(f"matvec needs (rank-2, rank-1), got {m.shape} and {x.shape}")
    if m.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec shapes incompatible: {m.shape} x {x.shape}")
    out = _wrap(m.data @ x.data, "matvec")
    if _ACTIVE is not None:
        md, xd = m.data, x.data
        _ACTIVE._record(out, (m, x), lambda g: (np.outer(g, xd), md.T @ g))
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    out = _wrap(a.data + b.data, "add")
    if _ACTIVE is not None:
        _ACTIVE._record(out, (a, b), lambda g: (g, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    out = _wrap(a.data - b.data, "sub")
    if _ACTIVE is not None:
        _ACTIVE._record(out, (a, b), lambda g: (g, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    out = _wrap(a.data * b.data, "mul")
    if _ACTIVE is not None:
        ad, bd = a.data, b.data
        _ACTIVE._record(out, (a, b), lambda g: (g * bd, g * ad))
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _wrap(expit(x.data), "sigmoid")
    if _ACTIVE is not None:
        y = out.data
        _ACTIVE._record(out, (x,), lambda g: (g * y * (1.0 - y),))
    return out


def tanh(x: Tensor) -> Tensor:
    out = _wrap(np.tanh(x.data), "tanh")
    if _ACTIVE is not None:
        y = out.data
        _ACTIVE._record(out, (x,), lambda g: (g * (1.0 - y * y),))
    return out


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = _wrap(np.exp(x.data), "exp")
    if _ACTIVE is not None:
        y = out.data
        _ACTIVE._record(out, (x,), lambda g: (g * y,))
    return out


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _wrap(x.data * c, "scale")
    if _ACTIVE is not None:
        _ACTIVE._record(out, (x,), lambda g: (g * c,))
    return out


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a length-1 tensor."""
    out = _wrap(np.array([x.data.sum()]), "total")
    if _ACTIVE is not None:
        shape = x.shape
        _ACTIVE._record(out, (x,), lambda g: (np.full(shape, g[0]),))
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    _require_vector(a, "concat")
    _require_vector(b, "concat")
    out = _wrap(np.concatenate([a.data, b.data]), "concat")
    if _ACTIVE is not None:
        n = a.shape[0]
        _ACTIVE._record(out, (a, b), lambda g: (g[:n], g[n:]))
    return out


def subvector(x: Tensor, start: int, stop: int) -> Tensor:
    _require_vector(x, "subvector")
    n = x.shape[0]
    if not (0 <= start < stop <= n):
        raise DimensionError(f"subvector [{start}:{stop}] out of range for length {n}")
    out = _wrap(x.data[start:stop].copy(), "subvector")
    if _ACTIVE is not None:

        def rule(g, n=n, start=start, stop=stop):
            gx = np.zeros(n)
            gx[start:stop] = g
            return (gx,)

        _ACTIVE._record(out, (x,), rule)
    return out


def column(m: Tensor, j: int) -> Tensor:
    """Column *j* of a rank-2 tensor as a vector (one-hot matvec shortcut)."""
    if m.rank != 2:
        raise DimensionError(f"column needs a rank-2 tensor, got shape {m.shape}")
    if not (0 <= j < m.shape[1]):
        raise DimensionError(f"column {j} out of range for shape {m.shape}")
    out = _wrap(m.data[:, j].copy(), "column")
    if _ACTIVE is not None:
        shape = m.shape

        def rule(g, shape=shape, j=j):
            gm = np.zeros(shape)
            gm[:, j] = g
            return (gm,)

        _ACTIVE._record(out, (m,), rule)
    return out


def softmax(x: Tensor) -> Tensor:
    _require_vector(x, "softmax")
    if x.shape[0] == 0:
        raise DimensionError("softmax needs a non-empty input")
    z = x.data - x.data.max()
    e = np.exp(z)
    out = _wrap(e / e.sum(), "softmax")
    if _ACTIVE is not None:
        y = out.data
        _ACTIVE._record(out, (x,), lambda g: (y * (g - np.dot(g, y)),))
    return out


def softmax_cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] as a scalar, numerically stable."""
    _require_vector(logits, "softmax_cross_entropy")
    n = logits.shape[0]
    if not (0 <= target < n):
        raise DimensionError(f"target {target} out of range for {n} logits")
    z = logits.data - logits.data.max()
    e = np.exp(z)
    se = e.sum()
    loss = math.log(se) - z[target]
    out = _wrap(np.array([loss]), "softmax_cross_entropy")
    if _ACTIVE is not None:
        probs = e / se

        def rule(g, probs=probs, target=target):
            gx = probs * g[0]
            gx[target] -= g[0]
            return (gx,)

        _ACTIVE._record(out, (logits,), rule)
    return out


def gaussian_kl(mu_q: Tensor, sigma_q: Tensor, mu_p: Tensor, sigma_p: Tensor) -> Tensor:
    """KL(N(mu_q, diag sigma_q^2) || N(mu_p, diag sigma_p^2)) as a scalar.

    Per dimension: log(sigma_p/sigma_q) + (sigma_q^2 + (mu_q-mu_p)^2)
    / (2 sigma_p^2) - 1/2, summed over dimensions.
    """
    for t in (sigma_q, mu_p, sigma_p):
        _require_same_shape(mu_q, t, "gaussian_kl")
    sq, sp = sigma_q.data, sigma_p.data
    if (sq <= 0).any() or (sp <= 0).any():
        raise NumericError("gaussian_kl requires strictly positive sigmas")
    diff = mu_q.data - mu_p.data
    sp2 = sp * sp
    val = np.log(sp / sq) + (sq * sq + diff * diff) / (2.0 * sp2) - 0.5
    out = _wrap(np.array([val.sum()]), "gaussian_kl")
    if _ACTIVE is not None:

        def rule(g, diff=diff, sq=sq, sp=sp, sp2=sp2):
            s = g[0]
            g_mu_q = s * diff / sp2
            g_sq = s * (sq / sp2 - 1.0 / sq)
            g_sp = s * (1.0 / sp - (sq * sq + diff * diff) / (sp2 * sp))
            return (g_mu_q, g_sq, -g_mu_q, g_sp)

        _ACTIVE._record(out, (mu_q, sigma_q, mu_p, sigma_p), rule)
    return out


# ---------------------------------------------------------------------------
# random source
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class RandomSource:
    """Counter-based splitmix64 stream with Box-Muller normal draws.

    The same seed yields the same sequence of draws on every platform; a
    source is single-owner and must not be shared across concurrent tasks.
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(int(seed) & _MASK64)
        self._count = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        z = self._seed + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform01(self, n: int) -> np.ndarray:
        """n uniforms in (0, 1]."""
        if n < 1:
            raise ContractError("draw count must be >= 1")
        return ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def uniform(self, n: int, low: float, high: float) -> Tensor:
        return _wrap(low + (high - low) * self.uniform01(n), "uniform")

    def uniform_matrix(self, rows: int, cols: int, low: float, high: float) -> Tensor:
        flat = low + (high - low) * self.uniform01(rows * cols)
        return _wrap(flat.reshape(rows, cols), "uniform")

    def standard_normal(self, n: int) -> Tensor:
        if n < 1:
            raise ContractError("draw count must be >= 1")
        pairs = (n + 1) // 2
        u = self.uniform01(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return _wrap(out[:n].copy(), "standard_normal")

    def randbelow(self, bound: int) -> int:
        if bound < 1:
            raise ContractError("bound must be >= 1")
        return int(self._raw(1)[0] % np.uint64(bound))

    def shuffle(self, items: list) -> None:
        """In-place seeded Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def sample_standard_normal(rs: RandomSource, n: int) -> Tensor:
    return rs.standard_normal(n)

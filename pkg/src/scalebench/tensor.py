"""Dense tensors with metered allocation and a reverse-mode gradient tape.

Every tensor produced by an op in this module reserves its bytes on the
active :class:`AllocationMeter` *before* the numpy computation runs, so a
budget violation is raised without touching real memory.  Bytes are
returned to the meter when the tensor is garbage collected; views share the
allocation of their base.

When a :class:`GradientTape` is active and any input of an op is tracked,
the op is recorded together with its adjoint rule.
"""

from __future__ import annotations

import contextlib
import contextvars
import functools
import math
import threading
from collections import defaultdict
from typing import Callable, Sequence

import numpy as np

from .errors import AllMasked, OutOfBudget, UnrecordedInput, ZeroVector

PRECISIONS = {"single": np.float32, "double": np.float64}

_METER: contextvars.ContextVar["AllocationMeter | None"] = contextvars.ContextVar(
    "scalebench_meter", default=None
)
_TAPE: contextvars.ContextVar["GradientTape | None"] = contextvars.ContextVar(
    "scalebench_tape", default=None
)


def dtype_of(precision: str) -> type:
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(PRECISIONS)}") from None


def word_size(precision: str) -> int:
    return np.dtype(dtype_of(precision)).itemsize


# ---------------------------------------------------------------------------
# allocation metering


class Allocation:
    """Handle for bytes held on a meter; ``release`` is idempotent."""

    __slots__ = ("_meter", "nbytes", "tag", "_live")

    def __init__(self, meter: "AllocationMeter", nbytes: int, tag: str):
        self._meter = meter
        self.nbytes = nbytes
        self.tag = tag
        self._live = True

    @property
    def live(self) -> bool:
        return self._live

    def release(self) -> None:
        if self._live:
            self._live = False
            self._meter._free(self.nbytes, self.tag)


class AllocationMeter:
    """Counts live bytes, tracks the peak, and enforces an optional budget."""

    def __init__(self, budget_bytes: int | None = None):
        if budget_bytes is not None and budget_bytes < 0:
            raise ValueError("budget_bytes must be non-negative")
        self.budget_bytes = budget_bytes
        self.current_bytes = 0
        self.peak_bytes = 0
        self._by_tag: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def alloc(self, nbytes: int, tag: str = "activation") -> Allocation:
        nbytes = int(nbytes)
        if nbytes <= 0:
            raise ValueError("allocation size must be positive")
        with self._lock:
            if self.budget_bytes is not None and self.current_bytes + nbytes > self.budget_bytes:
                raise OutOfBudget(nbytes, self.current_bytes, self.budget_bytes)
            self.current_bytes += nbytes
            self._by_tag[tag] += nbytes
            if self.current_bytes > self.peak_bytes:
                self.peak_bytes = self.current_bytes
        return Allocation(self, nbytes, tag)

    def check(self, nbytes: int) -> None:
        """Raise :class:`OutOfBudget` if ``nbytes`` more would not fit."""
        with self._lock:
            if self.budget_bytes is not None and self.current_bytes + nbytes > self.budget_bytes:
                raise OutOfBudget(int(nbytes), self.current_bytes, self.budget_bytes)

    def _free(self, nbytes: int, tag: str) -> None:
        with self._lock:
            self.current_bytes -= nbytes
            self._by_tag[tag] -= nbytes

    def reset_peak(self) -> None:
        with self._lock:
            self.peak_bytes = self.current_bytes

    def tagged(self, tag: str) -> int:
        """Live bytes currently held under ``tag``."""
        with self._lock:
            return self._by_tag.get(tag, 0)

    @contextlib.contextmanager
    def active(self):
        """Route tensor allocations in this context to this meter."""
        token = _METER.set(self)
        try:
            yield self
        finally:
            _METER.reset(token)

    def __repr__(self) -> str:
        return (
            f"AllocationMeter(current={self.current_bytes}, peak={self.peak_bytes}, "
            f"budget={self.budget_bytes})"
        )


def meter_reset_peak(meter: AllocationMeter) -> None:
    meter.reset_peak()


def meter_guarded_alloc(meter: AllocationMeter, nbytes: int, tag: str = "activation") -> Allocation:
    return meter.alloc(nbytes, tag)


def active_meter() -> AllocationMeter | None:
    return _METER.get()


def _reserve(shape: tuple[int, ...], dtype, tag: str) -> Allocation | None:
    meter = _METER.get()
    if meter is None:
        return None
    nbytes = math.prod(shape) * np.dtype(dtype).itemsize
    if nbytes == 0:
        return None
    return meter.alloc(nbytes, tag)


@contextlib.contextmanager
def workspace(shape: tuple[int, ...], dtype, tag: str = "workspace"):
    """Meter an op-internal scratch buffer for the duration of the block."""
    alloc = _reserve(shape, dtype, tag)
    try:
        yield
    finally:
        if alloc is not None:
            alloc.release()


# ---------------------------------------------------------------------------
# tensors


class Tensor:
    """Immutable dense array whose bytes are accounted on a meter."""

    __slots__ = ("data", "_alloc", "_base", "__weakref__")

    def __init__(self, data, precision: str | None = None, tag: str = "activation"):
        arr = np.asarray(data)
        dtype = dtype_of(precision) if precision else (
            arr.dtype if arr.dtype in (np.float32, np.float64) else np.float64
        )
        alloc = _reserve(arr.shape, dtype, tag)
        try:
            arr = np.array(arr, dtype=dtype, order="C", copy=True)
        except BaseException:
            if alloc is not None:
                alloc.release()
            raise
        arr.flags.writeable = False
        self.data = arr
        self._alloc = alloc
        self._base = None

    @classmethod
    def _wrap(cls, data: np.ndarray, alloc: Allocation | None, base: "Tensor | None" = None) -> "Tensor":
        t = cls.__new__(cls)
        if not isinstance(data, np.ndarray):
            data = np.asarray(data)  # 0-d ufunc results come back as scalars
        data.flags.writeable = False
        t.data = data
        t._alloc = alloc
        t._base = base
        return t

    def __del__(self):
        alloc = getattr(self, "_alloc", None)
        if alloc is not None:
            alloc.release()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def precision(self) -> str:
        return "double" if self.data.dtype == np.float64 else "single"

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, precision={self.precision})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_view(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, precision: str | None = None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, precision)


def cast(t: Tensor, precision: str, tag: str = "param") -> Tensor:
    if t.precision == precision:
        return t
    return Tensor(t.data, precision, tag=tag)


# ---------------------------------------------------------------------------
# tape


class GradientTape:
    """Records ops on tracked tensors and replays them backward.

    With ``verify=True`` every recorded op must run in double precision and
    gradients are accumulated as float64.
    """

    def __init__(self, verify: bool = False):
        self.verify = verify
        self._records: list[tuple[Tensor, tuple, Callable]] = []
        self._tracked: set[int] = set()
        self._watched: dict[int, Tensor] = {}
        self._token = None

    def __enter__(self) -> "GradientTape":
        self._token = _TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE.reset(self._token)
        self._token = None

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            if self.verify and t.dtype != np.float64:
                raise TypeError("verification tape requires double-precision inputs")
            self._watched[id(t)] = t
            self._tracked.add(id(t))

    def tracks(self, t) -> bool:
        return isinstance(t, Tensor) and id(t) in self._tracked

    @property
    def num_records(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, parents: tuple, backward: Callable) -> None:
        if self.verify and out.dtype != np.float64:
            raise TypeError("verification tape recorded a single-precision op")
        self._records.append((out, parents, backward))
        self._tracked.add(id(out))

    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of scalar ``target`` with respect to each watched source."""
        if target.data.size != 1:
            raise ValueError("gradient target must be a scalar tensor")
        for s in sources:
            if id(s) not in self._watched:
                raise UnrecordedInput(f"{s!r} was never watched by this tape")
        acc_dtype = np.float64 if self.verify else target.dtype
        grads: dict[int, np.ndarray] = {}
        if self.tracks(target):
            grads[id(target)] = np.ones(target.shape, dtype=acc_dtype)
        for out, parents, backward in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            # sources may themselves be recorded outputs; keep their gradient
            if id(out) in self._watched:
                grads[id(out)] = g
            parent_grads = backward(g)
            for p, gp in zip(parents, parent_grads):
                if gp is None or not self.tracks(p):
                    continue
                gp = _unbroadcast(np.asarray(gp, dtype=acc_dtype), p.shape)
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + gp
                else:
                    grads[key] = gp
        return [
            grads.get(id(s), np.zeros(s.shape, dtype=acc_dtype)).astype(acc_dtype, copy=False)
            for s in sources
        ]


def tape_gradients(tape: GradientTape, scalar_output: Tensor, watched_inputs: Sequence[Tensor]):
    return tape.gradient(scalar_output, watched_inputs)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _emit(
    shape: tuple[int, ...],
    dtype,
    compute: Callable[[], np.ndarray],
    parents: tuple = (),
    backward: Callable | None = None,
    tag: str = "activation",
) -> Tensor:
    alloc = _reserve(tuple(shape), dtype, tag)
    try:
        data = compute()
    except BaseException:
        if alloc is not None:
            alloc.release()
        raise
    out = Tensor._wrap(data, alloc)
    _maybe_record(out, parents, backward)
    return out


def _maybe_record(out: Tensor, parents: tuple, backward: Callable | None) -> None:
    tape = _TAPE.get()
    if tape is not None and backward is not None and any(tape.tracks(p) for p in parents):
        tape._record(out, parents, backward)


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def _result_dtype(*xs):
    dts = [x.dtype for x in xs if isinstance(x, Tensor)]
    return np.float64 if any(d == np.float64 for d in dts) else (dts[0] if dts else np.float64)


# ---------------------------------------------------------------------------
# elementwise ops


def _binary(a, b, fn, backward_factory):
    ad, bd = _data(a), _data(b)
    dtype = _result_dtype(a, b)
    shape = np.broadcast_shapes(np.shape(ad), np.shape(bd))
    return _emit(
        shape,
        dtype,
        lambda: np.asarray(fn(ad, bd), dtype=dtype),
        (a, b),
        backward_factory(ad, bd),
    )


def add(a, b) -> Tensor:
    return _binary(a, b, np.add, lambda ad, bd: lambda g: (g, g))


def sub(a, b) -> Tensor:
    return _binary(a, b, np.subtract, lambda ad, bd: lambda g: (g, -g))


def mul(a, b) -> Tensor:
    return _binary(a, b, np.multiply, lambda ad, bd: lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    return _binary(
        a, b, np.divide, lambda ad, bd: lambda g: (g / bd, -g * ad / (bd * bd))
    )


def _unary(x: Tensor, fn, grad_fn) -> Tensor:
    xd = x.data
    return _emit(x.shape, x.dtype, lambda: fn(xd), (x,), lambda g: (grad_fn(g, xd),))


def exp(x: Tensor) -> Tensor:
    xd = x.data
    out = _emit(x.shape, x.dtype, lambda: np.exp(xd), (x,), None)
    out_data = out.data
    _maybe_record(out, (x,), lambda g: (g * out_data,))
    return out


def log(x: Tensor) -> Tensor:
    return _unary(x, np.log, lambda g, xd: g / xd)


def sqrt(x: Tensor) -> Tensor:
    return _unary(x, np.sqrt, lambda g, xd: g * 0.5 / np.sqrt(xd))


def square(x: Tensor) -> Tensor:
    return _unary(x, np.square, lambda g, xd: 2.0 * g * xd)


def _sigmoid(xd: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * xd))


def sigmoid(x: Tensor) -> Tensor:
    return _unary(
        x,
        lambda xd: _sigmoid(xd).astype(xd.dtype, copy=False),
        lambda g, xd: g * _sigmoid(xd) * (1.0 - _sigmoid(xd)),
    )


def silu(x: Tensor) -> Tensor:
    def compute(xd):
        out = np.negative(xd)
        np.exp(out, out=out)
        out += 1.0
        return np.divide(xd, out, out=out)

    def grad(g, xd):
        s = _sigmoid(xd)
        return g * s * (1.0 + xd * (1.0 - s))

    return _unary(x, compute, grad)


def softplus(x: Tensor) -> Tensor:
    return _unary(
        x,
        lambda xd: np.logaddexp(xd.dtype.type(0), xd),
        lambda g, xd: g * _sigmoid(xd),
    )


# ---------------------------------------------------------------------------
# shape ops (views share their base's allocation)


def _view(base: Tensor, data: np.ndarray, backward: Callable) -> Tensor:
    out = Tensor._wrap(data, None, base)
    _maybe_record(out, (base,), backward)
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape
    xd = x.data
    if xd.flags.c_contiguous:
        return _view(x, xd.reshape(shape), lambda g: (g.reshape(src),))
    new_shape = _resolve_shape(xd.size, shape)
    return _emit(
        new_shape,
        xd.dtype,
        lambda: np.ascontiguousarray(xd).reshape(new_shape),
        (x,),
        lambda g: (g.reshape(src),),
    )


def _resolve_shape(size: int, shape) -> tuple[int, ...]:
    shape = list(shape)
    if -1 in shape:
        known = math.prod(n for n in shape if n != -1)
        shape[shape.index(-1)] = size // known if known else 0
    if math.prod(shape) != size:
        raise ValueError(f"cannot reshape {size} elements into {tuple(shape)}")
    return tuple(shape)


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _view(x, x.data.transpose(axes), lambda g: (g.transpose(inverse),))


def contiguous(x: Tensor) -> Tensor:
    if x.data.flags.c_contiguous:
        return x
    xd = x.data
    return _emit(x.shape, xd.dtype, lambda: np.ascontiguousarray(xd), (x,), lambda g: (g,))


def slice_view(x: Tensor, index) -> Tensor:
    xd = x.data
    view = xd[index]
    if not np.shares_memory(view, xd):
        raise TypeError("only basic (view) indexing is supported")
    src_shape, dtype = x.shape, xd.dtype

    def backward(g):
        full = np.zeros(src_shape, dtype=np.result_type(g, dtype))
        full[index] = g
        return (full,)

    return _view(x, view, backward)


# ---------------------------------------------------------------------------
# reductions and linear algebra


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data
    src = x.shape
    axes = set(range(x.ndim)) if axis is None else {a % x.ndim for a in np.atleast_1d(axis)}
    shape = tuple(
        1 if i in axes else n for i, n in enumerate(src) if keepdims or i not in axes
    )

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src),)

    return _emit(
        shape, xd.dtype, lambda: np.asarray(xd.sum(axis=axis, keepdims=keepdims), dtype=xd.dtype),
        (x,), backward,
    )


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / float(count))


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm over every element, as a scalar tensor."""
    return sqrt(tsum(square(x)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError("matmul operands must be at least 2-d")
    if ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul shape mismatch {ad.shape} @ {bd.shape}")
    batch = np.broadcast_shapes(ad.shape[:-2], bd.shape[:-2])
    shape = (*batch, ad.shape[-2], bd.shape[-1])
    dtype = _result_dtype(a, b)

    def backward(g):
        return (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g)

    return _emit(shape, dtype, lambda: np.matmul(ad, bd).astype(dtype, copy=False), (a, b), backward)


def embed(weight: Tensor, ids) -> Tensor:
    """Row gather ``weight[ids]``."""
    ids = np.asarray(ids, dtype=np.int64)
    wd = weight.data

    def backward(g):
        full = np.zeros(wd.shape, dtype=g.dtype)
        np.add.at(full, ids, g)
        return (full,)

    return _emit((len(ids), wd.shape[1]), wd.dtype, lambda: wd[ids], (weight,), backward)


# ---------------------------------------------------------------------------
# fused model primitives


def softmax_rows(m: Tensor) -> Tensor:
    """Softmax along the last axis; ``-inf`` entries map to exactly 0."""
    md = _data(m)
    if not isinstance(m, Tensor):
        m = Tensor(md)
    if md.shape[-1] == 0:
        raise ValueError("softmax over an empty axis")
    if np.isneginf(md).all(axis=-1).any():
        raise AllMasked("softmax row is entirely masked")
    def compute():
        buf = md - md.max(axis=-1, keepdims=True)
        np.exp(buf, out=buf)
        buf /= buf.sum(axis=-1, keepdims=True)
        return buf

    def backward(g):
        p = out_data
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    out = _emit(md.shape, md.dtype, compute, (m,), None, tag="attention")
    out_data = out.data
    _maybe_record(out, (m,), backward)
    return out


def rms_norm(x: Tensor, weight: Tensor, eps: float = 1e-6) -> Tensor:
    xd, wd = x.data, weight.data
    dtype = _result_dtype(x, weight)

    def inv_rms():
        return 1.0 / np.sqrt(np.mean(xd * xd, axis=-1, keepdims=True) + eps)

    def backward(g):
        r = inv_rms()
        gw_in = g * wd
        d = xd.shape[-1]
        gx = r * gw_in - xd * (r ** 3) * (gw_in * xd).sum(axis=-1, keepdims=True) / d
        gw = (g * xd * r).reshape(-1, d).sum(axis=0)
        return (gx, gw)

    def compute():
        out = np.multiply(xd, inv_rms(), dtype=dtype)
        out *= wd
        return out

    return _emit(xd.shape, dtype, compute, (x, weight), backward)


def rotate_half(xd: np.ndarray) -> np.ndarray:
    half = xd.shape[-1] // 2
    return np.concatenate([-xd[..., half:], xd[..., :half]], axis=-1)


def _rotate_half_t(ud: np.ndarray) -> np.ndarray:
    half = ud.shape[-1] // 2
    return np.concatenate([ud[..., half:], -ud[..., :half]], axis=-1)


@functools.lru_cache(maxsize=32)
def _rope_cache(n: int, head_dim: int, base: float, dtype_name: str):
    inv = 1.0 / (base ** (np.arange(0, head_dim, 2, dtype=np.float64) / head_dim))
    angles = np.outer(np.arange(n, dtype=np.float64), inv)
    angles = np.concatenate([angles, angles], axis=-1)
    cos, sin = np.cos(angles).astype(dtype_name), np.sin(angles).astype(dtype_name)
    cos.flags.writeable = False
    sin.flags.writeable = False
    return cos, sin


def rope_tables(n: int, head_dim: int, base: float, dtype) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (n, head_dim) in rotate-half layout (cached)."""
    return _rope_cache(n, head_dim, float(base), np.dtype(dtype).name)


def rope(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotary position embedding over the last axis; ``x`` is (..., N, d_k)."""
    xd = x.data
    half = xd.shape[-1] // 2

    def compute():
        out = np.multiply(xd, cos)
        out[..., :half] -= xd[..., half:] * sin[:, :half]
        out[..., half:] += xd[..., :half] * sin[:, half:]
        return out

    return _emit(
        xd.shape, xd.dtype, compute, (x,), lambda g: (g * cos + _rotate_half_t(g * sin),)
    )


def causal_conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Depthwise causal convolution: ``x`` (N, C), ``weight`` (C, K), ``bias`` (C,)."""
    xd, wd, bd = x.data, weight.data, bias.data
    n, c = xd.shape
    k = wd.shape[1]
    dtype = _result_dtype(x, weight, bias)

    def compute():
        padded = np.concatenate([np.zeros((k - 1, c), dtype=xd.dtype), xd], axis=0)
        out = np.broadcast_to(bd, (n, c)).astype(dtype, copy=True)
        for j in range(k):
            out += padded[j : j + n] * wd[:, j]
        return out

    def backward(g):
        padded = np.concatenate([np.zeros((k - 1, c), dtype=xd.dtype), xd], axis=0)
        gpad = np.zeros((n + k - 1, c), dtype=g.dtype)
        gw = np.empty(wd.shape, dtype=g.dtype)
        for j in range(k):
            gpad[j : j + n] += g * wd[:, j]
            gw[:, j] = (g * padded[j : j + n]).sum(axis=0)
        return (gpad[k - 1 :], gw, g.sum(axis=0))

    with workspace((n + k - 1, c), dtype):
        return _emit((n, c), dtype, compute, (x, weight, bias), backward)


def causal_mask(n: int, precision: str = "single") -> Tensor:
    """Additive (n, n) mask: 0 on and below the diagonal, ``-inf`` above."""
    dtype = dtype_of(precision)

    def compute():
        m = np.zeros((n, n), dtype=dtype)
        m[np.triu_indices(n, 1)] = -np.inf
        return m

    return _emit((n, n), dtype, compute, tag="mask")


# ---------------------------------------------------------------------------
# plain-array helpers


def cosine_distance(u, v) -> float:
    """``1 - u.v / (|u| |v|)``, clipped to [0, 2]."""
    u = np.asarray(_data(u), dtype=np.float64).reshape(-1)
    v = np.asarray(_data(v), dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError("vectors must have equal length")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine distance of a zero vector is undefined")
    return float(np.clip(1.0 - float(u @ v) / (nu * nv), 0.0, 2.0))


def finite_difference_gradient(
    fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``fn`` at ``x`` (double precision)."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(approx: np.ndarray, reference: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise ``|a - r| / max(|a|, |r|)``, with the denominator
    floored at ``floor * max|reference|`` so near-zero entries are judged
    absolutely."""
    approx = np.asarray(approx, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = float(np.max(np.abs(reference))) if reference.size else 0.0
    denom = np.maximum(np.maximum(np.abs(reference), np.abs(approx)), floor * scale)
    denom = np.where(denom == 0.0, 1.0, denom)
    return float(np.max(np.abs(approx - reference) / denom)) if reference.size else 0.0


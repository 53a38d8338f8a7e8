"""Small reverse-mode autodiff over dense float64 arrays.

A :class:`Tape` records every operation whose inputs live on it.  Leaves are
created with :meth:`Tape.param` (named, gradients returned by
:func:`backward`) or :meth:`Tape.constant`.  Tensors built without a tape are
plain values: operations on them are evaluated eagerly and nothing is
recorded, which is the inference path.

Broadcasting is deliberately absent except for the row-vector bias of
:func:`affine`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "Tensor",
    "ShapeError",
    "TapeError",
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "matmul",
    "affine",
    "silu",
    "sqrt",
    "concat",
    "sum",
    "mean",
    "norm_l2",
    "backward",
]


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    """A dense float64 array, optionally attached to a tape."""

    __slots__ = ("data", "tape", "name")

    def __init__(self, data, tape: "Tape | None" = None, name: str | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        _check_finite(arr, name or "tensor")
        self.data = arr
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


class Tape:
    """Ordered record of executed operations.

    One tape serves one forward/backward pass; after :func:`backward` it is
    consumed and refuses further use.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._params: dict[str, Tensor] = {}
        self.consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def param(self, name: str, data) -> Tensor:
        if name in self._params:
            raise TapeError(f"parameter {name!r} already registered on this tape")
        self._check_open()
        t = Tensor(data, tape=self, name=name)
        self._params[name] = t
        return t

    def constant(self, data) -> Tensor:
        return Tensor(data)

    def params(self, arrays: dict[str, np.ndarray]) -> dict[str, Tensor]:
        return {name: self.param(name, value) for name, value in arrays.items()}

    def _check_open(self):
        if self.consumed:
            raise TapeError("tape already consumed by backward()")

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], grad_fn: Callable):
        self._check_open()
        self._nodes.append((out, inputs, grad_fn))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, what: str):
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values produced by {what}")


def _tape_of(inputs: Iterable[Tensor]) -> "Tape | None":
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise TapeError("operands belong to different tapes")
            tape = t.tape
    return tape


def _make(op: str, value: np.ndarray, inputs: tuple[Tensor, ...], grad_fn: Callable) -> Tensor:
    _check_finite(value, op)
    tape = _tape_of(inputs)
    out = Tensor.__new__(Tensor)
    out.data = value
    out.tape = tape
    out.name = None
    if tape is not None:
        tape._record(out, inputs, grad_fn)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- forward ops ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _make("add_scalar", a.data + c, (a,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _make("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` with ``b`` a row vector added to every row."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: incompatible shapes {x.shape} and {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"affine: bias shape {b.shape} does not match {w.shape}")
    xd, wd = x.data, w.data

    def grad_fn(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _make("affine", xd @ wd + b.data, (x, w, b), grad_fn)


def silu(a: Tensor) -> Tensor:
    x = a.data
    e = np.exp(-np.abs(x))  # never overflows
    sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = x * sig
    return _make("silu", out, (a,), lambda g: (g * (sig + out * (1.0 - sig)),))


def sqrt(a: Tensor) -> Tensor:
    if (a.data < 0).any():
        raise FloatingPointError("sqrt of negative value")
    out = np.sqrt(a.data)
    return _make("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise ShapeError(f"concat: shape mismatch {ref} vs {t.shape} along axis {axis}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    value = np.concatenate([t.data for t in tensors], axis=axis)
    return _make("concat", value, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    """Sum of all entries (scalar) or along ``axis`` keeping that dimension."""
    if axis is None:
        shape = a.shape
        return _make("sum", np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))
    value = a.data.sum(axis=axis, keepdims=True)
    shape = a.shape
    return _make("sum", value, (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.size
    shape = a.shape
    return _make("mean", np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / n),))


def norm_l2(a: Tensor) -> Tensor:
    """Euclidean norm of all entries."""
    value = np.sqrt(np.sum(a.data * a.data))
    ad = a.data

    def grad_fn(g):
        if value == 0.0:
            return (np.zeros_like(ad),)
        return (float(g) * ad / value,)

    return _make("norm_l2", np.asarray(value), (a,), grad_fn)


# -- reverse pass -----------------------------------------------------------

def backward(loss: Tensor) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(param) for every named parameter on the loss's tape.

    Parameters that do not influence ``loss`` get an all-zero gradient.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    tape = loss.tape
    if tape is None:
        raise TapeError("backward: loss was not produced on a tape")
    tape._check_open()

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, grad_fn in reversed(tape._nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, grad_fn(g)):
            if inp.tape is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64)
    tape.consumed = True

    result = {}
    for name, p in tape._params.items():
        g = grads.get(id(p))
        result[name] = np.zeros_like(p.data) if g is None else np.reshape(g, p.shape)
    return result

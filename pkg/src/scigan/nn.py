"""Small dense neural-network substrate on top of numpy.

Values are wrapped in :class:`Var`. Operations evaluated while a :class:`Tape`
is active are recorded, and :func:`backward` replays their adjoints in reverse
order. Outside a tape the same operations are plain numpy evaluation, which is
what inference paths use.
"""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

CHECKPOINT_MAGIC = "SCIGAN-PARAMS"
CHECKPOINT_VERSION = 1

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid", "softmax")


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class TrainingDivergence(RuntimeError):
    """Raised when a loss or gradient stops being finite."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class Var:
    """An array value that may participate in reverse-mode differentiation."""

    __slots__ = ("value", "requires_grad", "name")
    # keep numpy from broadcasting ``ndarray op Var`` elementwise over objects
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return vmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


class Tape:
    """Ordered record of primitive operations.

    Use as a context manager; while active, every operation whose inputs
    require gradients appends ``(output, inputs, adjoint)`` to ``nodes``.
    """

    def __init__(self):
        self.nodes: list[tuple[Var, tuple[Var, ...], Callable]] = []

    def __enter__(self):
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: Var, inputs: tuple[Var, ...], adjoint: Callable):
        self.nodes.append((out, inputs, adjoint))


_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _emit(value, inputs: tuple[Var, ...], adjoint: Callable) -> Var:
    tape = active_tape()
    if tape is not None and any(v.requires_grad for v in inputs):
        out = Var(value, requires_grad=True)
        tape.record(out, inputs, adjoint)
        return out
    return Var(value)


def backward(tape: Tape, loss: Var, wrt: Iterable[Var] | None = None) -> dict[Var, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to recorded leaves.

    Returns a dict keyed by the leaf :class:`Var` objects. If ``wrt`` is given,
    every listed variable appears in the result (zeros when ``loss`` does not
    depend on it).
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    produced = set()
    for out, inputs, adjoint in reversed(tape.nodes):
        produced.add(id(out))
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, adjoint(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    leaves: dict[int, Var] = {}
    for _, inputs, _ in tape.nodes:
        for inp in inputs:
            if inp.requires_grad and id(inp) not in produced:
                leaves[id(inp)] = inp
    result = {leaves[k]: g for k, g in grads.items() if k in leaves}
    if wrt is not None:
        for v in wrt:
            if v not in result:
                result[v] = np.zeros_like(v.value)
    return result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---- primitive operations -------------------------------------------------


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _emit(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _emit(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _emit(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _emit(
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / b.value**2, b.shape),
        ),
    )


def neg(a) -> Var:
    a = as_var(a)
    return _emit(-a.value, (a,), lambda g: (-g,))


def square(a) -> Var:
    a = as_var(a)
    return _emit(a.value**2, (a,), lambda g: (2.0 * a.value * g,))


def matmul(a, w) -> Var:
    """``a @ w`` where ``a`` has shape (..., n) and ``w`` is (n, p)."""
    a, w = as_var(a), as_var(w)
    if w.ndim != 2:
        raise DimensionError(f"right operand must be a matrix, got shape {w.shape}")
    if a.shape[-1] != w.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {w.shape}")

    def adjoint(g):
        ga = g @ w.value.T if a.requires_grad else None
        gw = None
        if w.requires_grad:
            n, p = w.shape
            gw = a.value.reshape(-1, n).T @ g.reshape(-1, p)
        return ga, gw

    return _emit(a.value @ w.value, (a, w), adjoint)


def vsum(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def adjoint(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit(out, (a,), adjoint)


def vmean(a, axis=None, keepdims=False) -> Var:
    a = as_var(a)
    count = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return vsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def relu(a) -> Var:
    a = as_var(a)
    mask = a.value > 0
    return _emit(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def tanh(a) -> Var:
    a = as_var(a)
    t = np.tanh(a.value)
    return _emit(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a) -> Var:
    a = as_var(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a) -> Var:
    a = as_var(a)
    e = np.exp(a.value)
    return _emit(e, (a,), lambda g: (g * e,))


def log(a) -> Var:
    a = as_var(a)
    return _emit(np.log(a.value), (a,), lambda g: (g / a.value,))


def clip(a, lo: float, hi: float) -> Var:
    """Clamp values; the gradient is zero where the clamp is active."""
    a = as_var(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _emit(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def softmax(a, axis: int = -1) -> Var:
    a = as_var(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def adjoint(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _emit(s, (a,), adjoint)


def concat(parts: Sequence, axis: int = -1) -> Var:
    parts = tuple(as_var(p) for p in parts)
    out = np.concatenate([p.value for p in parts], axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def adjoint(g):
        grads = []
        for i in range(len(parts)):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(bounds[i], bounds[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _emit(out, parts, adjoint)


def stack(parts: Sequence, axis: int = 0) -> Var:
    parts = [as_var(p) for p in parts]
    ax = axis % (parts[0].ndim + 1)
    expanded = [reshape(p, p.shape[:ax] + (1,) + p.shape[ax:]) for p in parts]
    return concat(expanded, axis=ax)


def reshape(a, shape) -> Var:
    a = as_var(a)
    return _emit(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, index) -> Var:
    a = as_var(a)

    def adjoint(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return (full,)

    return _emit(a.value[index], (a,), adjoint)


def take_along(a, indices: np.ndarray, axis: int) -> Var:
    """``np.take_along_axis`` with a scatter-add adjoint."""
    a = as_var(a)
    indices = np.asarray(indices)

    def adjoint(g):
        full = np.zeros_like(a.value)
        # indices may repeat, so accumulate explicitly
        idx = list(np.indices(indices.shape, sparse=True))
        idx[axis] = indices
        np.add.at(full, tuple(idx), g)
        return (full,)

    return _emit(np.take_along_axis(a.value, indices, axis=axis), (a,), adjoint)


def where(mask: np.ndarray, a, b) -> Var:
    """Elementwise select; ``mask`` is a constant boolean array."""
    a, b = as_var(a), as_var(b)
    mask = np.asarray(mask, dtype=bool)
    return _emit(
        np.where(mask, a.value, b.value),
        (a, b),
        lambda g: (_unbroadcast(np.where(mask, g, 0.0), a.shape), _unbroadcast(np.where(mask, 0.0, g), b.shape)),
    )


_ACT_FN = {
    "identity": lambda v: v,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
}


def activate(x, name: str) -> Var:
    try:
        return _ACT_FN[name](as_var(x))
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}") from None


# ---- modules --------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Module:
    """Container of named parameters and child modules, in insertion order."""

    def __init__(self):
        self._params: dict[str, Var] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, value) -> Var:
        v = Var(value, requires_grad=True, name=name)
        self._params[name] = v
        return v

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Var]]:
        out = [(prefix + n, p) for n, p in self._params.items()]
        for cname, child in self._children.items():
            out.extend(child.named_parameters(f"{prefix}{cname}."))
        return out

    def parameters(self) -> list[Var]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.value.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} != {p.value.shape}")
            p.value = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


@contextmanager
def frozen(*modules: Module):
    """Treat the modules' parameters as constants inside the block."""
    params = [p for m in modules for p in m.parameters()]
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, s in zip(params, saved):
            p.requires_grad = s


class DenseLayer(Module):
    """Fully connected layer ``activation(x @ W + b)`` over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity", rng: np.random.Generator | None = None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        self.W = self.add_param("W", glorot_uniform(rng, in_dim, out_dim))
        self.b = self.add_param("b", np.zeros(out_dim))

    def forward(self, x) -> Var:
        return dense_forward(self, x)


def dense_forward(layer: DenseLayer, x) -> Var:
    x = as_var(x)
    if x.shape[-1] != layer.in_dim:
        raise DimensionError(f"layer expects {layer.in_dim} input columns, got {x.shape[-1]}")
    return activate(matmul(x, layer.W) + layer.b, layer.activation)


class MLP(Module):
    """Stack of dense layers; softmax may only appear last."""

    def __init__(self, sizes: Sequence[int], hidden_activation: str = "relu", out_activation: str = "identity", rng=None):
        super().__init__()
        if hidden_activation == "softmax":
            raise ValueError("softmax is only allowed as the terminal activation")
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = out_activation if i == len(sizes) - 2 else hidden_activation
            self.layers.append(self.add_child(f"l{i}", DenseLayer(a, b, act, rng)))

    def forward(self, x) -> Var:
        for layer in self.layers:
            x = layer(x)
        return x


# ---- optimisation ---------------------------------------------------------


@dataclass
class AdamState:
    params: list[Var]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.value) for p in self.params]
            self.v = [np.zeros_like(p.value) for p in self.params]


def adam_step(state: AdamState, grads: dict[Var, np.ndarray]) -> AdamState:
    """In-place bias-corrected Adam update of ``state.params``."""
    gs = []
    for p in state.params:
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.value)
        elif g.shape != p.value.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.value.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient for {p.name}", step=state.step, param=p.name)
        gs.append(g)
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for i, (p, g) in enumerate(zip(state.params, gs)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        p.value = p.value - state.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
    return state


# ---- checkpoints ----------------------------------------------------------


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    """Write named arrays as versioned JSON (floats round-trip exactly)."""
    doc = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "arrays": [
            {"name": n, "shape": list(np.shape(a)), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for n, a in arrays.items()
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    arrays = {
        a["name"]: np.asarray(a["data"], dtype=np.float64).reshape(a["shape"]) for a in doc["arrays"]
    }
    return arrays, doc["meta"]

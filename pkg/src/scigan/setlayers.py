"""Permutation-invariant and permutation-equivariant layers over sets.

Sets are batched as arrays of shape ``(batch, m, channels)``; a single set may
also be given as ``(m, channels)``.
"""

from __future__ import annotations

import numpy as np

from .nn import DenseLayer, DimensionError, Module, Var, activate, as_var, glorot_uniform, matmul, take_along


def canonical_order(u: np.ndarray) -> np.ndarray:
    """Indices that sort each set's elements lexicographically by channel."""
    keys = tuple(u[..., c] for c in reversed(range(u.shape[-1])))
    return np.lexsort(keys, axis=-1)


class InvariantLayer(Module):
    """``sigma(sum_i phi(u_i))`` with ``phi`` a dense layer into ``q`` channels.

    Elements are put in a canonical order before pooling. The math is the
    same sum, but the floating-point result then no longer depends on the
    input order, so invariance holds bit for bit.
    """

    def __init__(self, element_dim: int, q: int, activation: str = "relu", rng=None):
        super().__init__()
        self.element_dim, self.q, self.activation = element_dim, q, activation
        self.phi = self.add_child("phi", DenseLayer(element_dim, q, "identity", rng))

    def forward(self, u) -> Var:
        return invariant_forward(self, u)


def invariant_forward(layer: InvariantLayer, elements) -> Var:
    u = as_var(elements)
    single = u.ndim == 2
    if single:
        u = u.reshape((1,) + u.shape)
    if u.ndim != 3 or u.shape[1] < 1:
        raise ValueError(f"expected a nonempty set of shape (batch, m, d), got {u.shape}")
    if u.shape[2] != layer.element_dim:
        raise DimensionError(f"elements have dimension {u.shape[2]}, layer expects {layer.element_dim}")
    order = canonical_order(u.value)[..., None]
    u = take_along(u, np.broadcast_to(order, u.shape), axis=1)
    out = activate(layer.phi(u).sum(axis=1), layer.activation)
    return out[0] if single else out


class EquivariantLayer(Module):
    """``sigma(u_i @ lam + (sum_j u_j) @ gam + v @ theta + b)`` for every element i.

    ``lam`` and ``gam`` are channel-mixing matrices; with one channel they are
    the scalar identity and pooling weights. ``theta`` maps the auxiliary input
    ``v`` (absent when ``aux_dim == 0``) and is broadcast to every element.
    """

    def __init__(self, in_channels: int, out_channels: int, aux_dim: int = 0, activation: str = "relu", rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels, self.aux_dim = in_channels, out_channels, aux_dim
        self.activation = activation
        self.lam = self.add_param("lam", glorot_uniform(rng, in_channels, out_channels))
        self.gam = self.add_param("gam", glorot_uniform(rng, in_channels, out_channels))
        self.theta = self.add_param("theta", glorot_uniform(rng, aux_dim, out_channels)) if aux_dim else None
        self.b = self.add_param("b", np.zeros(out_channels))

    def forward(self, u, v=None) -> Var:
        return equivariant_forward(self, u, v)


def equivariant_forward(layer: EquivariantLayer, u, v=None) -> Var:
    u = as_var(u)
    single = u.ndim == 2
    if single:
        u = u.reshape((1,) + u.shape)
        if v is not None:
            v = as_var(v).reshape((1, -1))
    if u.ndim != 3 or u.shape[1] < 1:
        raise ValueError(f"expected a nonempty set of shape (batch, m, c), got {u.shape}")
    if u.shape[2] != layer.in_channels:
        raise DimensionError(f"elements have {u.shape[2]} channels, layer expects {layer.in_channels}")
    pooled = u.sum(axis=1, keepdims=True)
    pre = matmul(u, layer.lam) + matmul(pooled, layer.gam) + layer.b
    if layer.aux_dim:
        if v is None:
            raise ValueError("layer has auxiliary weights but no auxiliary input was given")
        v = as_var(v)
        if v.shape[-1] != layer.aux_dim:
            raise DimensionError(f"auxiliary input has dimension {v.shape[-1]}, expected {layer.aux_dim}")
        aux = matmul(v, layer.theta)
        pre = pre + aux.reshape((aux.shape[0], 1, aux.shape[1]))
    elif v is not None:
        raise DimensionError("layer takes no auxiliary input")
    out = activate(pre, layer.activation)
    return out[0] if single else out

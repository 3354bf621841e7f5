"""Generator, inference and discriminator networks.

Every discriminator consumes ``pairs``: a list with one ``(batch, n_w, 2)``
array per treatment holding the (dosage, outcome) elements of that treatment's
sampled set. ``set_layers=False`` swaps the invariant/equivariant blocks for
plain fully connected networks over the flattened pairs (ablation variants).
"""

from __future__ import annotations

import numpy as np

from . import nn
from .nn import MLP, DenseLayer, Module, Var, as_var, concat
from .setlayers import EquivariantLayer, InvariantLayer


def onehot(w, k: int) -> np.ndarray:
    w = np.asarray(w, dtype=int)
    out = np.zeros(w.shape + (k,))
    np.put_along_axis(out, w[..., None], 1.0, axis=-1)
    return out


class MultiHeadNet(Module):
    """Shared trunk ``g`` followed by per-treatment heads ``g_w(latent, d)``.

    With ``multitask=False`` a single head receives ``latent ⊕ onehot(w) ⊕ d``.
    """

    def __init__(self, in_dim: int, k: int, hidden: int = 64, trunk_layers: int = 2,
                 head_layers: int = 2, multitask: bool = True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.k, self.hidden, self.multitask = in_dim, k, hidden, multitask
        self.trunk = self.add_child("trunk", MLP([in_dim] + [hidden] * trunk_layers, "relu", "relu", rng))
        head_in = hidden + 1 + (0 if multitask else k)
        sizes = [head_in] + [hidden] * head_layers + [1]
        if multitask:
            self.heads = [self.add_child(f"head{w}", MLP(sizes, "relu", "identity", rng)) for w in range(k)]
        else:
            self.heads = [self.add_child("head", MLP(sizes, "relu", "identity", rng))]

    def latent(self, inputs) -> Var:
        return self.trunk(inputs)

    def head(self, latent: Var, w: int, d) -> Var:
        """Outcomes for treatment ``w`` at dosages ``d`` of shape (batch, m)."""
        if not 0 <= w < self.k:
            raise IndexError(f"unknown treatment {w}")
        latent = as_var(latent)
        d = np.asarray(d, dtype=np.float64)
        if d.ndim == 1:
            d = np.broadcast_to(d, (latent.shape[0], d.shape[0]))
        b, m = d.shape
        h = latent.reshape((b, 1, self.hidden))
        h = nn.mul(h, np.ones((1, m, 1)))
        parts = [h, d[..., None]]
        if not self.multitask:
            parts.insert(1, np.broadcast_to(onehot(w, self.k), (b, m, self.k)))
            net = self.heads[0]
        else:
            net = self.heads[w]
        return net(concat(parts, axis=-1)).reshape((b, m))

    def factual(self, latent: Var, w: np.ndarray, d: np.ndarray) -> Var:
        """Outcome at each row's own (w, d); shape (batch,)."""
        w = np.asarray(w, dtype=int)
        d = np.asarray(d, dtype=np.float64)[:, None]
        if not self.multitask:
            b = len(w)
            h = as_var(latent)
            return self.heads[0](concat([h, onehot(w, self.k), d], axis=-1)).reshape((b,))
        out = None
        for t in range(self.k):
            col = self.head(latent, t, d).reshape((len(w),))
            out = col if out is None else nn.where(w == t, col, out)
        return out


class GeneratorNet(MultiHeadNet):
    """Counterfactual generator; trunk input is ``x ⊕ onehot(w_f) ⊕ d_f ⊕ y_f ⊕ z``."""

    def __init__(self, p: int, k: int, noise_dim: int = 16, hidden: int = 64, head_layers: int = 2,
                 multitask: bool = True, rng=None):
        super().__init__(p + k + 2 + noise_dim, k, hidden, 2, head_layers, multitask, rng)
        self.p, self.noise_dim = p, noise_dim

    def encode(self, x, w_f, d_f, y_f, z) -> Var:
        inputs = np.column_stack([x, onehot(w_f, self.k), d_f, y_f, z])
        return self.latent(inputs)


def generator_forward(gen: GeneratorNet, x, w_f, d_f, y_f, z, queries) -> list[Var]:
    """Generated outcome per query ``(w, d)``; ``d`` is a scalar or per-row array."""
    latent = gen.encode(x, w_f, d_f, y_f, z)
    b = latent.shape[0]
    out = []
    for w, d in queries:
        d = np.broadcast_to(np.asarray(d, dtype=np.float64), (b,))
        out.append(gen.head(latent, w, d[:, None]).reshape((b,)))
    return out


class InferenceNet(MultiHeadNet):
    """Same layout as the generator, conditioned on features only."""

    def __init__(self, p: int, k: int, hidden: int = 64, head_layers: int = 2, multitask: bool = True, rng=None):
        super().__init__(p, k, hidden, 2, head_layers, multitask, rng)
        self.p = p

    def predict(self, x, w: int, d) -> np.ndarray:
        """Outcomes for treatment ``w``; ``d`` is (G,) shared or (N, G) per row."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = np.asarray(d, dtype=np.float64)
        squeeze = d.ndim == 0
        d = np.atleast_1d(d)
        out = self.head(self.latent(x), w, d).value
        return out[:, 0] if squeeze else out


def _flatten_pairs(pairs) -> Var:
    b = pairs[0].shape[0]
    return concat([as_var(p).reshape((b, -1)) for p in pairs], axis=-1)


class TreatmentDiscriminator(Module):
    """k-way softmax over treatments from ``x`` and invariant set summaries."""

    def __init__(self, p: int, k: int, n_w: int, hidden: int = 64, inv_dim: int = 16,
                 set_layers: bool = True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.k, self.n_w, self.set_layers = k, n_w, set_layers
        if set_layers:
            self.inv = [self.add_child(f"inv{w}", InvariantLayer(2, inv_dim, "relu", rng)) for w in range(k)]
            in_dim = p + k * inv_dim
        else:
            in_dim = p + k * n_w * 2
        self.trunk = self.add_child("trunk", MLP([in_dim, hidden, hidden, k], "relu", "softmax", rng))

    def forward(self, x, pairs) -> Var:
        if self.set_layers:
            summary = [layer(u) for layer, u in zip(self.inv, pairs)]
        else:
            summary = [_flatten_pairs(pairs)]
        return self.trunk(concat([as_var(x)] + summary, axis=-1))


class DosageDiscriminator(Module):
    """Softmax over the n_w sampled dosages of one treatment."""

    def __init__(self, p: int, n_w: int, eqv_dim: int = 16, hidden: int = 64, set_layers: bool = True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_w, self.set_layers = n_w, set_layers
        if set_layers:
            self.eq1 = self.add_child("eq1", EquivariantLayer(2, eqv_dim, p, "relu", rng))
            self.eq2 = self.add_child("eq2", EquivariantLayer(eqv_dim, eqv_dim, 0, "relu", rng))
            self.readout = self.add_child("readout", DenseLayer(eqv_dim, 1, "identity", rng))
        else:
            self.net = self.add_child("net", MLP([p + 2 * n_w, hidden, hidden, n_w], "relu", "softmax", rng))

    def forward(self, x, pairs_w) -> Var:
        if not self.set_layers:
            return self.net(concat([as_var(x), _flatten_pairs([pairs_w])], axis=-1))
        h = self.eq2(self.eq1(pairs_w, x))
        logits = self.readout(h)
        return nn.softmax(logits.reshape(logits.shape[:2]), axis=-1)


class SingleDiscriminator(Module):
    """One softmax over all ``k * n_w`` treatment-dosage positions.

    The block for treatment w is equivariant in that treatment's pairs and
    invariant in the other treatments' pairs.
    """

    def __init__(self, p: int, k: int, n_w: int, hidden: int = 64, inv_dim: int = 16, eqv_dim: int = 16,
                 set_layers: bool = True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.k, self.n_w, self.set_layers = k, n_w, set_layers
        if set_layers:
            self.inv = [self.add_child(f"inv{w}", InvariantLayer(2, inv_dim, "relu", rng)) for w in range(k)]
            aux = p + k * inv_dim
            self.eq1 = [self.add_child(f"eq1_{w}", EquivariantLayer(2, eqv_dim, aux, "relu", rng)) for w in range(k)]
            self.eq2 = [self.add_child(f"eq2_{w}", EquivariantLayer(eqv_dim, eqv_dim, 0, "relu", rng)) for w in range(k)]
            self.readout = [self.add_child(f"readout{w}", DenseLayer(eqv_dim, 1, "identity", rng)) for w in range(k)]
        else:
            self.net = self.add_child("net", MLP([p + 2 * k * n_w, hidden, hidden, k * n_w], "relu", "softmax", rng))

    def forward(self, x, pairs) -> Var:
        if not self.set_layers:
            return self.net(concat([as_var(x), _flatten_pairs(pairs)], axis=-1))
        v = concat([as_var(x)] + [layer(u) for layer, u in zip(self.inv, pairs)], axis=-1)
        blocks = []
        for w, u in enumerate(pairs):
            h = self.eq2[w](self.eq1[w](u, v))
            logits = self.readout[w](h)
            blocks.append(logits.reshape(logits.shape[:2]))
        return nn.softmax(concat(blocks, axis=-1), axis=-1)

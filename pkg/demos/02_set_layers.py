"""Permutation-invariant and permutation-equivariant layers.

Run: python demos/02_set_layers.py
"""

import numpy as np

from scigan.setlayers import EquivariantLayer, InvariantLayer, equivariant_forward, invariant_forward

rng = np.random.default_rng(1)
# a set of five (dosage, outcome) pairs
u = np.column_stack([rng.random(5), rng.normal(size=5)])
perm = rng.permutation(5)

inv = InvariantLayer(2, 4, "relu", rng)
print("invariant output      ", invariant_forward(inv, u).value)
print("same set, reordered   ", invariant_forward(inv, u[perm]).value)

eq = EquivariantLayer(2, 3, aux_dim=2, activation="tanh", rng=rng)
v = rng.normal(size=2)
out = equivariant_forward(eq, u, v).value
out_perm = equivariant_forward(eq, u[perm], v).value
print("equivariant max |f(Pu) - P f(u)| =", np.max(np.abs(out_perm - out[perm])))

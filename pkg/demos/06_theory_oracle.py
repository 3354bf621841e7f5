"""Exact enumeration on toy problems: the optimal discriminator, the weighted
KL identity, and when the hierarchical discriminator matches the joint one.

Run: python demos/06_theory_oracle.py
"""

import numpy as np

from scigan import theory as T

rng = np.random.default_rng(5)
prob = T.random_problem(rng, k=2, n=2, values=3)
disc = T.optimal_discriminator(prob)
best = T.exact_disc_loss(prob, disc)
gaps = [T.exact_disc_loss(prob, T.perturb_discriminator(disc, rng)) - best for _ in range(200)]
print(f"optimal loss {best:.4f}, smallest gap over 200 perturbations {min(gaps):.2e}")

lhs, rhs = T.kl_identity_check(prob)
print(f"weighted identity: {lhs:.6f} vs {rhs:.6f}")
print(f"unweighted residual: {T.unweighted_kl_residual(prob):.4f}")

fac = T.factorizing_problem(rng)
print("factorizing problem, hierarchical deviation:", T.hierarchical_factorization_check(fac))
corr = T.correlated_problem(rng)
print("correlated problem, hierarchical deviation: ", T.hierarchical_factorization_check(corr, require_factorization=False))

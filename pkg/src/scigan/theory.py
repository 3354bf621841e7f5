"""Exact enumeration checks of the optimal-discriminator results on small
finite problems.

A :class:`ToyProblem` has ``k`` treatments with ``n`` dosage positions each,
flattened to ``T = k * n`` positions ``t = w * n + j``. Each position's outcome
takes one of ``values`` discrete levels, so the joint outcome vector ranges
over ``S = values ** T`` states. ``densities[w, j]`` is the joint outcome
distribution when the factual position is ``(w, j)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np


@dataclass
class ToyProblem:
    k: int
    n: int
    values: int
    propensity: np.ndarray  # (k, n)
    densities: np.ndarray   # (k, n, S)

    def __post_init__(self):
        self.propensity = np.asarray(self.propensity, dtype=np.float64).reshape(self.k, self.n)
        self.densities = np.asarray(self.densities, dtype=np.float64).reshape(self.k, self.n, -1)
        if self.densities.shape[2] != self.n_states:
            raise ValueError(f"expected {self.n_states} outcome states, got {self.densities.shape[2]}")
        if np.any(self.propensity < 0) or abs(self.propensity.sum() - 1.0) > 1e-12:
            raise ValueError("propensity must be a distribution over positions")
        if np.any(self.densities < 0) or np.any(np.abs(self.densities.sum(axis=2) - 1.0) > 1e-12):
            raise ValueError("each density must sum to 1 over outcome states")

    @property
    def positions(self) -> int:
        return self.k * self.n

    @property
    def n_states(self) -> int:
        return self.values ** (self.k * self.n)

    def outcome_grid(self) -> np.ndarray:
        """(S, T) outcome level per position for every state."""
        return np.array(list(itertools.product(range(self.values), repeat=self.positions)))

    def weighted(self) -> np.ndarray:
        """``a[t, s] = p~(t) * p_t(s)``."""
        return (self.propensity[..., None] * self.densities).reshape(self.positions, -1)

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "values": self.values,
                "propensity": self.propensity.tolist(), "densities": self.densities.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ToyProblem":
        return cls(doc["k"], doc["n"], doc["values"], np.array(doc["propensity"]), np.array(doc["densities"]))


def save_problem(problem: ToyProblem, path):
    with open(path, "w") as fh:
        json.dump(problem.to_dict(), fh)


def load_problem(path) -> ToyProblem:
    with open(path) as fh:
        return ToyProblem.from_dict(json.load(fh))


@dataclass
class TabularDiscriminator:
    """``table[s, t]``: probability that position ``t`` is factual given state ``s``."""

    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if np.any(self.table < 0) or np.any(self.table > 1):
            raise ValueError("discriminator entries must lie in [0, 1]")
        if np.any(np.abs(self.table.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("discriminator rows must sum to 1")


def _xlogy(a, b):
    a = np.asarray(a, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a == 0, 0.0, a * np.log(np.where(a == 0, 1.0, b)))


def optimal_discriminator(problem: ToyProblem) -> TabularDiscriminator:
    """Bayes posterior of the factual position given the outcome state.

    States with zero mass under every position carry no loss weight; they get
    a uniform row.
    """
    a = problem.weighted().T  # (S, T)
    total = a.sum(axis=1, keepdims=True)
    uniform = np.full_like(a, 1.0 / problem.positions)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.where(total > 0, a / np.where(total > 0, total, 1.0), uniform)
    return TabularDiscriminator(table)


def exact_disc_loss(problem: ToyProblem, disc: TabularDiscriminator) -> float:
    """Expected factual-position cross-entropy, enumerated over positions and states."""
    a = problem.weighted().T  # (S, T)
    rest = a.sum(axis=1, keepdims=True) - a
    return float(-(_xlogy(a, disc.table) + _xlogy(rest, 1.0 - disc.table)).sum())


def perturb_discriminator(disc: TabularDiscriminator, rng: np.random.Generator, concentration: float = 50.0) -> TabularDiscriminator:
    """Dirichlet jitter of every row, centred on the original row."""
    t = np.clip(disc.table, 1e-9, None)
    t = t / t.sum(axis=1, keepdims=True)
    rows = np.array([rng.dirichlet(concentration * r) for r in t])
    return TabularDiscriminator(rows)


def propensity_constant(problem: ToyProblem) -> float:
    """Sum over positions of ``p log p + (1 - p) log(1 - p)``, independent of the generator."""
    p = problem.propensity.ravel()
    return float((_xlogy(p, p) + _xlogy(1.0 - p, 1.0 - p)).sum())


def _kl(p, q) -> float:
    return float((_xlogy(p, p) - _xlogy(p, q)).sum())


def kl_terms(problem: ToyProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-position ``KL(p_t || p_hat)`` and ``KL(q_t || p_hat)``.

    ``p_hat`` is the propensity mixture of all densities and ``q_t`` the
    mixture of the positions other than ``t``, renormalised.
    """
    a = problem.weighted()
    p_hat = a.sum(axis=0)
    dens = problem.densities.reshape(problem.positions, -1)
    prop = problem.propensity.ravel()
    own, other = np.zeros(problem.positions), np.zeros(problem.positions)
    for t in range(problem.positions):
        own[t] = _kl(dens[t], p_hat)
        if prop[t] < 1.0:
            other[t] = _kl((p_hat - a[t]) / (1.0 - prop[t]), p_hat)
    return own, other


def kl_identity_check(problem: ToyProblem) -> tuple[float, float]:
    """Both sides of the KL decomposition of the optimal-discriminator value.

    lhs is the log-likelihood at the optimum minus :func:`propensity_constant`.
    rhs is ``sum_t p~_t KL(p_t || p_hat) + (1 - p~_t) KL(q_t || p_hat)``.
    """
    lhs = -exact_disc_loss(problem, optimal_discriminator(problem)) - propensity_constant(problem)
    own, other = kl_terms(problem)
    prop = problem.propensity.ravel()
    rhs = float((prop * own + (1.0 - prop) * other).sum())
    return lhs, rhs


def unweighted_kl_residual(problem: ToyProblem) -> float:
    """Gap between the log-likelihood at the optimum (minus ``sum_t log p~_t``)
    and the plain unweighted sum of the two KL terms."""
    prop = problem.propensity.ravel()
    lhs = -exact_disc_loss(problem, optimal_discriminator(problem)) - float(np.log(prop).sum())
    own, other = kl_terms(problem)
    return float(lhs - (own + other).sum())


def _block_axes(problem: ToyProblem, w: int) -> tuple[int, ...]:
    return tuple(ax for ax in range(problem.positions) if not w * problem.n <= ax < (w + 1) * problem.n)


def block_marginals(problem: ToyProblem) -> np.ndarray:
    """``m[w, j, b]``: marginal of ``densities[w, j]`` on treatment ``w``'s block state ``b``."""
    V, n = problem.values, problem.n
    shape = (V,) * problem.positions
    out = np.zeros((problem.k, n, V ** n))
    for w in range(problem.k):
        axes = _block_axes(problem, w)
        for j in range(n):
            out[w, j] = problem.densities[w, j].reshape(shape).sum(axis=axes).ravel()
    return out


def _block_index(problem: ToyProblem, w: int) -> np.ndarray:
    """Block state index of every joint state for treatment ``w``."""
    grid = problem.outcome_grid()[:, w * problem.n:(w + 1) * problem.n]
    weights = problem.values ** np.arange(problem.n - 1, -1, -1)
    return grid @ weights


def factorization_gap(problem: ToyProblem) -> float:
    """Largest change across dosages of ``p_{w,j}(y) / p_{w,j}(y_w)``.

    Zero when, for every treatment, the outcomes outside its block are
    conditionally independent of the factual dosage within it.
    """
    marg = block_marginals(problem)
    gap = 0.0
    for w in range(problem.k):
        idx = _block_index(problem, w)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(marg[w][:, idx] > 0, problem.densities[w] / np.where(marg[w][:, idx] > 0, marg[w][:, idx], 1.0), np.nan)
        spread = np.nanmax(ratios, axis=0) - np.nanmin(ratios, axis=0)
        if np.any(np.isfinite(spread)):
            gap = max(gap, float(np.nanmax(spread)))
    return gap


def hierarchical_optimum(problem: ToyProblem) -> tuple[np.ndarray, np.ndarray]:
    """Optimal treatment and dosage discriminators as tables.

    Returns ``dW[s, w]`` over joint states and ``dw[w][b, j]`` over block states.
    """
    a = problem.weighted().T.reshape(-1, problem.k, problem.n)  # (S, k, n)
    total = a.sum(axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        dW = np.where(total[:, None] > 0, a.sum(axis=2) / np.where(total > 0, total, 1.0)[:, None], 1.0 / problem.k)
    marg = block_marginals(problem)
    dws = []
    for w in range(problem.k):
        prop = problem.propensity[w]
        cond = prop / prop.sum() if prop.sum() > 0 else np.full(problem.n, 1.0 / problem.n)
        num = (cond[:, None] * marg[w]).T  # (B, n)
        den = num.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            dws.append(np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0 / problem.n))
    return dW, dws


def hierarchical_factorization_check(problem: ToyProblem, require_factorization: bool = True, tol: float = 1e-12) -> float:
    """Max absolute gap between the hierarchical product and the joint optimum.

    Only states with positive mass are compared. By default a problem whose
    outcome blocks do not factorise is rejected; pass
    ``require_factorization=False`` to measure the gap anyway.
    """
    if require_factorization and factorization_gap(problem) > tol:
        raise ValueError("outcome blocks are not conditionally independent across treatments")
    dW, dws = hierarchical_optimum(problem)
    joint = optimal_discriminator(problem).table.reshape(-1, problem.k, problem.n)
    product = np.stack([dW[:, w:w + 1] * dws[w][_block_index(problem, w)] for w in range(problem.k)], axis=1)
    live = problem.weighted().sum(axis=0) > 0
    return float(np.max(np.abs(product - joint)[live]))


def random_problem(rng: np.random.Generator, k: int = 2, n: int = 2, values: int = 2, concentration: float = 1.0) -> ToyProblem:
    """Arbitrary (generally non-factorising) problem with Dirichlet tables."""
    S = values ** (k * n)
    prop = rng.dirichlet(np.full(k * n, concentration)).reshape(k, n)
    dens = rng.dirichlet(np.full(S, concentration), size=(k, n))
    return ToyProblem(k, n, values, prop, dens)


def factorizing_problem(rng: np.random.Generator, k: int = 2, n: int = 2, values: int = 2) -> ToyProblem:
    """Problem with ``p_{w,j}(y) = a_{w,j}(y_w) * r_w(y_rest)``, ``r_w`` shared across ``j``."""
    B = values ** n
    R = values ** (n * (k - 1))
    prop = rng.dirichlet(np.ones(k * n)).reshape(k, n)
    shape = (values,) * (k * n)
    dens = np.zeros((k, n, values ** (k * n)))
    for w in range(k):
        rest = rng.dirichlet(np.ones(R))
        for j in range(n):
            block = rng.dirichlet(np.ones(B))
            joint = np.outer(block, rest).reshape((values,) * n + (values,) * (n * (k - 1)))
            # move the block axes into treatment w's slot
            order = list(range(n, n + n * w)) + list(range(n)) + list(range(n + n * w, n * k))
            dens[w, j] = np.transpose(joint, order).reshape(shape).ravel()
    return ToyProblem(k, n, values, prop, dens)


def correlated_problem(rng: np.random.Generator, k: int = 2, n: int = 2, values: int = 2, strength: float = 0.9) -> ToyProblem:
    """Counterexample: the outcomes outside block ``w`` copy the factual dosage index."""
    base = factorizing_problem(rng, k, n, values)
    grid = base.outcome_grid()
    dens = base.densities.copy()
    for w in range(k):
        others = [t for t in range(k * n) if not w * n <= t < (w + 1) * n]
        for j in range(n):
            # upweight states whose first outside coordinate matches j
            boost = np.where(grid[:, others[0]] == j % values, 1.0 + strength * 10, 1.0)
            dens[w, j] = dens[w, j] * boost
            dens[w, j] /= dens[w, j].sum()
    return ToyProblem(k, n, values, base.propensity, dens)

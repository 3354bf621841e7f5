"""Semi-synthetic dose-response benchmark.

Features are unit-norm rows. Each treatment has three random unit vectors and
one of three response shapes; dosages are drawn from a Beta distribution with
its mode at the optimal dosage, and treatments from a softmax over the
responses at those dosages.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SHAPES = ("quadratic", "sinusoidal", "cubic")
RATIO_CLAMP = 1e8
SPLIT_FRACTIONS = (0.64, 0.16, 0.20)


@dataclass(frozen=True)
class TreatmentParams:
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    shape: str = "quadratic"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown response shape {self.shape!r}")


@dataclass
class SimulationConfig:
    C: float = 10.0
    alpha: float = 2.0
    kappa: float = 2.0
    noise_sd: float = 0.2
    num_treatments: int = 3
    shapes: tuple[str, ...] | None = None
    dosage_levels: int | None = None

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.shapes is not None:
            self.shapes = tuple(self.shapes)
            if len(self.shapes) != self.num_treatments:
                raise ValueError("need one shape per treatment")
        if self.dosage_levels is not None and self.dosage_levels < 2:
            raise ValueError("dosage_levels must be >= 2")

    @property
    def unbiased(self) -> bool:
        return self.alpha == 1 and self.kappa == 0


@dataclass
class Dataset:
    X: np.ndarray
    w_f: np.ndarray
    d_f: np.ndarray
    y_f: np.ndarray
    split: dict[str, np.ndarray]
    noise: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, name: str) -> "Dataset":
        idx = self.split[name]
        return Dataset(
            self.X[idx], self.w_f[idx], self.d_f[idx], self.y_f[idx],
            split={"all": np.arange(len(idx))},
            noise=None if self.noise is None else self.noise[idx],
            meta=dict(self.meta),
        )


@dataclass
class ResponseModel:
    params: list[TreatmentParams]
    config: SimulationConfig = field(default_factory=SimulationConfig)

    @property
    def k(self) -> int:
        return len(self.params)

    def __call__(self, w: int, x, d):
        return true_response(self, w, x, d)


DIRECTIONS = ("normal", "positive")


def sample_treatment_params(seed, feature_dim: int, k: int, shapes=None, direction: str = "normal") -> list[TreatmentParams]:
    """Three Gaussian directions per treatment, each normalised to unit length.

    Shapes cycle quadratic, sinusoidal, cubic unless ``shapes`` is given.
    ``direction="positive"`` folds the Gaussian draws into the positive
    orthant. With nonnegative features this keeps ``v3'x`` away from zero, so
    the sine frequency and the cubic's ``b`` stay bounded.
    """
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    rng = np.random.default_rng(seed)
    out = []
    for w in range(k):
        u = rng.standard_normal((3, feature_dim))
        if direction == "positive":
            u = np.abs(u)
        v = u / np.linalg.norm(u, axis=1, keepdims=True)
        shape = shapes[w] if shapes is not None else SHAPES[w % len(SHAPES)]
        out.append(TreatmentParams(v[0], v[1], v[2], shape))
    return out


def _safe_ratio(num, den):
    den = np.asarray(den, dtype=np.float64)
    small = np.abs(den) < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(small, 0.0, num / np.where(small, 1.0, den))
    # a vanishing denominator pushes the ratio to the clamp, keeping num's sign
    clamped = np.where(np.asarray(num) >= 0, RATIO_CLAMP, -RATIO_CLAMP)
    return np.clip(np.where(small, clamped, r), -RATIO_CLAMP, RATIO_CLAMP)


def _projections(tp: TreatmentParams, x):
    x = np.asarray(x, dtype=np.float64)
    # row-wise reductions give the same bits for one row or a batch
    return (x * tp.v1).sum(axis=-1), (x * tp.v2).sum(axis=-1), (x * tp.v3).sum(axis=-1)


def shape_coefficient(tp: TreatmentParams, x):
    """The x-dependent coefficient each shape uses besides ``v1'x``.

    quadratic: (v2'x, v3'x); sinusoidal: v2'x / v3'x; cubic: b.
    """
    _, a2, a3 = _projections(tp, x)
    if tp.shape == "quadratic":
        return a2, a3
    if tp.shape == "sinusoidal":
        return _safe_ratio(a2, a3)
    return 0.75 * _safe_ratio(a2, a3)


def true_response(model: ResponseModel, w: int, x, d):
    """Noiseless outcome of treatment ``w`` at dosage ``d``.

    ``x`` is ``(p,)`` or ``(N, p)``; ``d`` broadcasts against the leading
    axes, so ``d`` of shape ``(N, G)`` gives an ``(N, G)`` result when ``x``
    is ``(N, p)`` (pass ``d[None, :]`` for a shared grid).
    """
    if not 0 <= w < model.k:
        raise IndexError(f"unknown treatment {w}")
    tp = model.params[w]
    C = model.config.C
    a1, _, _ = _projections(tp, x)
    d = np.asarray(d, dtype=np.float64)
    x_ndim = np.ndim(x)
    if x_ndim == 2 and d.ndim >= 1:
        a1 = a1.reshape((-1,) + (1,) * (d.ndim - 1))
    if tp.shape == "quadratic":
        a2, a3 = shape_coefficient(tp, x)
        if x_ndim == 2 and d.ndim >= 1:
            a2 = a2.reshape(a1.shape)
            a3 = a3.reshape(a1.shape)
        return C * (a1 + 12.0 * a2 * d - 12.0 * a3 * d**2)
    coef = shape_coefficient(tp, x)
    if x_ndim == 2 and d.ndim >= 1:
        coef = coef.reshape(a1.shape)
    if tp.shape == "sinusoidal":
        return C * (a1 + np.sin(np.pi * coef * d))
    return C * (a1 + 12.0 * d * (d - coef) ** 2)


def _interior_candidates(tp: TreatmentParams, x_row) -> list[float]:
    """Interior critical points at which the shape can attain its maximum."""
    if tp.shape == "quadratic":
        a2, a3 = shape_coefficient(tp, x_row)
        if a3 == 0:
            return []
        # vertex a2 / (2 a3); a maximum only when the parabola opens downward
        return [float(_safe_ratio(a2, 2.0 * a3))]
    if tp.shape == "sinusoidal":
        r = float(shape_coefficient(tp, x_row))
        if r > 0:
            return [0.5 / r]
        if r < 0:
            return [1.5 / -r]
        return []
    return [float(shape_coefficient(tp, x_row)) / 3.0]


def optimal_dosage_closed_form(model: ResponseModel, w: int, x):
    """Exact maximiser of the treatment's response over [0, 1].

    The interior candidate is the analytic critical point (the vertex
    ``v2'x / (2 v3'x)`` for the quadratic, the first crest of the sine, and
    ``b / 3`` for the cubic). It is clipped to [0, 1] and compared with both
    endpoints; ties go to the lowest dosage. For the cubic this reproduces
    "``b/3`` if ``b >= 0.75`` else 1" exactly, including the tie at 0.75.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return np.array([optimal_dosage_closed_form(model, w, row) for row in x])
    tp = model.params[w]
    cands = sorted({0.0, 1.0, *[min(max(c, 0.0), 1.0) for c in _interior_candidates(tp, x)]})
    vals = np.array([float(true_response(model, w, x, c)) for c in cands])
    # analytically equal maxima (the cubic at b = 0.75) differ only by rounding
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    return cands[int(np.flatnonzero(vals >= vals.max() - tol)[0])]


def sample_beta(rng: np.random.Generator, a, b):
    """Beta(a, b) draws as ``G_a / (G_a + G_b)`` with independent gammas."""
    ga = rng.standard_gamma(a)
    gb = rng.standard_gamma(b)
    return ga / (ga + gb)


def beta_parameter(alpha: float, d_star):
    """Second Beta parameter putting the mode at ``d_star``.

    ``d_star == 0`` uses the value for ``d_star == 1``; the caller mirrors.
    """
    d_star = np.asarray(d_star, dtype=np.float64)
    d_eff = np.where(d_star == 0, 1.0, d_star)
    return (alpha - 1.0) / d_eff + 2.0 - alpha


def assign_dosage(d_star, alpha: float, rng: np.random.Generator):
    """Biased dosage draw(s) with mode at ``d_star``; vectorised over ``d_star``."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    d_star = np.asarray(d_star, dtype=np.float64)
    beta = beta_parameter(alpha, d_star)
    draw = sample_beta(rng, np.full(d_star.shape, float(alpha)), beta)
    out = np.where(d_star == 0, 1.0 - draw, draw)
    return float(out) if out.ndim == 0 else out


def softmax_probabilities(values, kappa: float):
    z = kappa * np.asarray(values, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def assign_treatment(responses, kappa: float, rng: np.random.Generator):
    """Categorical draw with probabilities ``softmax(kappa * responses)``.

    ``responses`` is ``(k,)`` for one sample or ``(N, k)`` for many.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    probs = softmax_probabilities(responses, kappa)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    idx = (u[:, None] >= cdf).sum(axis=1)
    idx = np.minimum(idx, probs.shape[1] - 1)
    return int(idx[0]) if single else idx


def dosage_grid(levels: int) -> np.ndarray:
    return np.arange(levels) / (levels - 1)


def snap_dosage(d, levels: int):
    """Nearest point of ``{j / (levels - 1)}``; exact midpoints go down."""
    if levels < 2:
        raise ValueError("need at least two dosage levels")
    d = np.asarray(d, dtype=np.float64)
    idx = np.clip(np.ceil(d * (levels - 1) - 0.5), 0, levels - 1) + 0.0  # drops the sign of -0.0
    return idx / (levels - 1)


def split_indices(n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    perm = rng.permutation(n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def make_dataset(features, model: ResponseModel, config: SimulationConfig | None, rng: np.random.Generator) -> Dataset:
    """Draw dosages, treatments and noisy factual outcomes for every row."""
    config = config or model.config
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("features must be a nonempty (N, p) matrix")
    n, k = X.shape[0], model.k
    d_star = np.column_stack([optimal_dosage_closed_form(model, w, X) for w in range(k)])
    dosages = np.column_stack([assign_dosage(d_star[:, w], config.alpha, rng) for w in range(k)])
    if config.dosage_levels is not None:
        dosages = snap_dosage(dosages, config.dosage_levels)
    responses = np.column_stack([true_response(model, w, X, dosages[:, w]) for w in range(k)])
    w_f = assign_treatment(responses, config.kappa, rng)
    d_f = dosages[np.arange(n), w_f]
    noise = rng.normal(0.0, config.noise_sd, size=n) if config.noise_sd > 0 else np.zeros(n)
    y_f = responses[np.arange(n), w_f] + noise
    split = split_indices(n, rng)
    return Dataset(X, w_f.astype(int), d_f, y_f, split, noise=noise)


def discretize_dosages(dataset: Dataset, beta_levels: int, model: ResponseModel | None = None) -> Dataset:
    """Snap factual dosages to the grid; with ``model`` the outcomes follow."""
    d_new = snap_dosage(dataset.d_f, beta_levels)
    y_new = dataset.y_f
    if model is not None:
        noise = dataset.noise if dataset.noise is not None else 0.0
        y_new = np.array([
            true_response(model, int(w), x, d) for w, x, d in zip(dataset.w_f, dataset.X, d_new)
        ]) + noise
    meta = dict(dataset.meta, dosage_levels=beta_levels)
    return Dataset(dataset.X, dataset.w_f, d_new, y_new, dataset.split, dataset.noise, meta)


def normalize_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalise an all-zero feature row")
    return X / norms


def synth_features(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    return normalize_rows(rng.random((n, p)))


def save_features(path, X, header=None):
    X = np.asarray(X, dtype=np.float64)
    header = header or [f"x{j}" for j in range(X.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in X:
            writer.writerow([repr(float(v)) for v in row])


def load_features(path, normalize: bool = True) -> np.ndarray:
    """Read a headed numeric CSV; rows are scaled to unit norm by default."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    X = np.array(rows)
    return normalize_rows(X) if normalize else X


# ---- dataset bundles -------------------------------------------------------


def model_to_dict(model: ResponseModel) -> dict:
    cfg = model.config
    return {
        "C": cfg.C, "alpha": cfg.alpha, "kappa": cfg.kappa, "noise_sd": cfg.noise_sd,
        "num_treatments": cfg.num_treatments, "dosage_levels": cfg.dosage_levels,
        "shapes": [tp.shape for tp in model.params],
        "treatments": [
            {"shape": tp.shape, "v1": tp.v1.tolist(), "v2": tp.v2.tolist(), "v3": tp.v3.tolist()}
            for tp in model.params
        ],
    }


def model_from_dict(doc: dict) -> ResponseModel:
    params = [
        TreatmentParams(np.array(t["v1"]), np.array(t["v2"]), np.array(t["v3"]), t["shape"])
        for t in doc["treatments"]
    ]
    cfg = SimulationConfig(
        C=doc["C"], alpha=doc["alpha"], kappa=doc["kappa"], noise_sd=doc["noise_sd"],
        num_treatments=len(params), shapes=tuple(doc["shapes"]), dosage_levels=doc.get("dosage_levels"),
    )
    return ResponseModel(params, cfg)


def save_dataset(dataset: Dataset, path):
    """CSV bundle: sample_id, features..., w_f, d_f, y_f, split."""
    labels = np.empty(dataset.n, dtype=object)
    for name, idx in dataset.split.items():
        labels[idx] = name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *[f"x{j}" for j in range(dataset.p)], "w_f", "d_f", "y_f", "split"])
        for i in range(dataset.n):
            writer.writerow([
                i, *[repr(float(v)) for v in dataset.X[i]],
                int(dataset.w_f[i]), repr(float(dataset.d_f[i])), repr(float(dataset.y_f[i])), labels[i],
            ])


def load_dataset(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        fcols = [c for c in header if c.startswith("x")]
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no samples")
    X, w, d, y, s = [], [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            X.append([float(v) for v in row[1:1 + len(fcols)]])
            w.append(int(row[-4]))
            d.append(float(row[-3]))
            y.append(float(row[-2]))
            s.append(row[-1])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    s = np.array(s)
    split = {name: np.flatnonzero(s == name) for name in ("train", "val", "test")}
    return Dataset(np.array(X), np.array(w), np.array(d), np.array(y), split)


def write_manifest(path, model: ResponseModel, **extra):
    doc = {"model": model_to_dict(model), "unbiased": model.config.unbiased, **extra}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def read_manifest(path) -> tuple[ResponseModel, dict]:
    doc = json.loads(Path(path).read_text())
    return model_from_dict(doc["model"]), doc

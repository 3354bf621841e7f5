"""Dose-response evaluation: integrated squared error, dosage policy error and
policy error against the noiseless ground truth."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .simulate import ResponseModel, optimal_dosage_closed_form, true_response

CSV_COLUMNS = ("run_id", "model", "seed", "kappa", "alpha", "sqrt_mise", "sqrt_dpe", "sqrt_pe", "grid_n", "wall_time_s")
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ResponseOracle:
    """Noiseless truth with closed-form optimal dosages."""

    def __init__(self, model: ResponseModel):
        self.model = model

    @property
    def k(self) -> int:
        return self.model.k

    def response(self, x, w: int, d) -> np.ndarray:
        """(N, G) outcomes; ``d`` is (G,) shared or (N, G) per row."""
        x = np.atleast_2d(x)
        d = np.asarray(d, dtype=np.float64)
        if d.ndim == 1:
            d = d[None, :]
        return np.broadcast_to(true_response(self.model, w, x, d), (x.shape[0], d.shape[-1])).copy()

    predict = response

    def optimal_dosage(self, x, w: int) -> np.ndarray:
        return np.asarray(optimal_dosage_closed_form(self.model, w, np.atleast_2d(x)), dtype=np.float64)


def _as_predict(model):
    return model.predict if hasattr(model, "predict") else model


def find_optimal_dosage(curve, grid_n: int = 257, tol: float = 1e-8) -> float:
    """Maximiser of a scalar curve on [0, 1]; ties resolve to the lowest dosage."""
    batch = lambda d: np.asarray(curve(d[0]), dtype=np.float64)[None, :]
    return float(find_optimal_dosages(batch, 1, grid_n, tol)[0])


def find_optimal_dosages(curves, n: int, grid_n: int = 257, tol: float = 1e-8) -> np.ndarray:
    """Vectorised maximisation of ``n`` curves.

    ``curves(d)`` maps an (n, m) dosage array to (n, m) outcomes. A grid scan
    locates the best grid point, then golden-section search runs on the two
    neighbouring cells. The refined point replaces the grid point only when it
    is strictly better, which keeps flat curves at the lowest dosage.
    """
    grid = np.linspace(0.0, 1.0, grid_n)
    vals = curves(np.broadcast_to(grid, (n, grid_n)))
    i = np.argmax(vals, axis=1)
    rows = np.arange(n)
    best_d, best_v = grid[i], vals[rows, i]
    lo = grid[np.maximum(i - 1, 0)]
    hi = grid[np.minimum(i + 1, grid_n - 1)]
    c = hi - INV_PHI * (hi - lo)
    e = lo + INV_PHI * (hi - lo)
    fc, fe = _split(curves(np.column_stack([c, e])))
    steps = max(0, math.ceil(math.log(tol / (2.0 / (grid_n - 1))) / math.log(INV_PHI)))
    for _ in range(steps):
        left = fc >= fe
        hi = np.where(left, e, hi)
        lo = np.where(left, lo, c)
        new_c = hi - INV_PHI * (hi - lo)
        new_e = lo + INV_PHI * (hi - lo)
        probe = np.where(left, new_c, new_e)
        fp = curves(probe[:, None])[:, 0]
        fc, fe = np.where(left, fp, fe), np.where(left, fc, fp)
        c, e = np.where(left, new_c, e), np.where(left, c, new_e)
    cand = np.where(fc >= fe, c, e)
    fcand = np.maximum(fc, fe)
    better = fcand > best_v
    return np.where(better, cand, best_d)


def _split(v):
    return v[:, 0], v[:, 1]


def _model_curves(predict, X, w):
    return lambda d: np.asarray(predict(X, w, d), dtype=np.float64)


def mise_per_sample(model, oracle: ResponseOracle, X, grid_n: int = 65) -> np.ndarray:
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    predict = _as_predict(model)
    grid = np.linspace(0.0, 1.0, grid_n)
    total = np.zeros(len(X))
    for w in range(oracle.k):
        err = (oracle.response(X, w, grid) - predict(X, w, grid)) ** 2
        total += np.trapezoid(err, grid, axis=1)
    return total / oracle.k


def mise(model, oracle: ResponseOracle, X, grid_n: int = 65) -> float:
    return float(np.mean(mise_per_sample(model, oracle, X, grid_n)))


def _policies(model, oracle, X, grid_n):
    """Model-optimal dosage and model value at it, per treatment: (k, N) arrays."""
    predict = _as_predict(model)
    d_hat = np.stack([find_optimal_dosages(_model_curves(predict, X, w), len(X), grid_n) for w in range(oracle.k)])
    v_hat = np.stack([predict(X, w, d_hat[w][:, None])[:, 0] for w in range(oracle.k)])
    return d_hat, v_hat


def _truth_at(oracle, X, w, d):
    return oracle.response(X, w, np.asarray(d)[:, None])[:, 0]


def dpe_per_sample(model, oracle: ResponseOracle, X, grid_n: int = 257, _policy=None) -> np.ndarray:
    d_hat, _ = _policy or _policies(model, oracle, X, grid_n)
    total = np.zeros(len(X))
    for w in range(oracle.k):
        best = _truth_at(oracle, X, w, oracle.optimal_dosage(X, w))
        total += (best - _truth_at(oracle, X, w, d_hat[w])) ** 2
    return total / oracle.k


def dpe(model, oracle: ResponseOracle, X, grid_n: int = 257) -> float:
    return float(np.mean(dpe_per_sample(model, oracle, X, grid_n)))


def pe_per_sample(model, oracle: ResponseOracle, X, grid_n: int = 257, _policy=None) -> np.ndarray:
    d_hat, v_hat = _policy or _policies(model, oracle, X, grid_n)
    rows = np.arange(len(X))
    true_best = np.stack([_truth_at(oracle, X, w, oracle.optimal_dosage(X, w)) for w in range(oracle.k)]).max(axis=0)
    w_hat = np.argmax(v_hat, axis=0)
    chosen = np.stack([_truth_at(oracle, X, w, d_hat[w]) for w in range(oracle.k)])[w_hat, rows]
    return (true_best - chosen) ** 2


def pe(model, oracle: ResponseOracle, X, grid_n: int = 257) -> float:
    return float(np.mean(pe_per_sample(model, oracle, X, grid_n)))


@dataclass
class EvalReport:
    mise: float
    dpe: float
    pe: float
    grid_n: int
    model: str = ""
    seed: int = 0
    run_id: str = ""
    kappa: float = float("nan")
    alpha: float = float("nan")
    wall_time_s: float = 0.0
    per_sample: dict = field(default_factory=dict, repr=False)

    @property
    def sqrt_mise(self) -> float:
        return math.sqrt(max(self.mise, 0.0))

    @property
    def sqrt_dpe(self) -> float:
        return math.sqrt(max(self.dpe, 0.0))

    @property
    def sqrt_pe(self) -> float:
        return math.sqrt(max(self.pe, 0.0))

    def row(self) -> dict:
        return {"run_id": self.run_id, "model": self.model, "seed": self.seed, "kappa": self.kappa,
                "alpha": self.alpha, "sqrt_mise": self.sqrt_mise, "sqrt_dpe": self.sqrt_dpe,
                "sqrt_pe": self.sqrt_pe, "grid_n": self.grid_n, "wall_time_s": self.wall_time_s}

    def to_json(self) -> str:
        doc = self.row()
        doc.update(mise=self.mise, dpe=self.dpe, pe=self.pe,
                   per_sample={k: np.asarray(v).tolist() for k, v in self.per_sample.items()})
        return json.dumps(doc, indent=2, sort_keys=True)

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow([_fmt(v) for v in self.row().values()])
        return buf.getvalue()


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def evaluate(predictor, oracle: ResponseOracle, X, grid_n: int = 65, opt_grid_n: int = 257, **labels) -> EvalReport:
    """All three metrics on the rows of ``X``; ``labels`` fill the report's id fields."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    policy = _policies(predictor, oracle, X, opt_grid_n)
    per = {
        "mise": mise_per_sample(predictor, oracle, X, grid_n),
        "dpe": dpe_per_sample(predictor, oracle, X, opt_grid_n, policy),
        "pe": pe_per_sample(predictor, oracle, X, opt_grid_n, policy),
    }
    return EvalReport(float(per["mise"].mean()), float(per["dpe"].mean()), float(per["pe"].mean()),
                      grid_n, per_sample=per, **labels)


class ConstantModel:
    """Predicts one value everywhere (reference floor for the metrics)."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, x, w, d):
        d = np.asarray(d)
        n = np.atleast_2d(x).shape[0]
        return np.full((n, d.shape[-1] if d.ndim else 1), self.value)


def write_results_csv(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow([_fmt(v) for v in r.row().values()])


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected result columns {reader.fieldnames}")
        return list(reader)

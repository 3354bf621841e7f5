"""Experiment plumbing shared by the command line and the demos: run
configuration, seed derivation, model training and persistence, evaluation
tables, sweeps and random hyperparameter search."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .baselines import BASELINE_VARIANTS, BaselineConfig, BaselineNet, baseline_fit
from .gan import VARIANTS, SciganModel, TrainConfig, fit_scigan, generator_curves
from .metrics import CSV_COLUMNS, EvalReport, ResponseOracle, evaluate
from .simulate import (
    Dataset,
    ResponseModel,
    SimulationConfig,
    discretize_dosages,
    load_features,
    make_dataset,
    sample_treatment_params,
    synth_features,
)

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "SCIGAN_OUTPUT_ROOT"
SEED_OFFSETS = {"features": 0, "params": 1000, "assignment": 2000, "train": 3000, "baseline": 4000, "hpo": 5000}
MODEL_NAMES = tuple(VARIANTS) + BASELINE_VARIANTS
SWEEP_AXES = ("kappa", "alpha", "beta_levels", "n_w")
HPO_SPACE = {"batch_size": (64, 128, 256), "hidden_units": (32, 64, 128), "inv_eqv_dim": (16, 32, 64, 128)}


def component_seed(master: int, component: str) -> int:
    return int(master) + SEED_OFFSETS[component]


@dataclass
class SimulationSettings:
    n: int = 1000
    p: int = 10
    k: int = 3
    C: float = 10.0
    alpha: float = 2.0
    kappa: float = 2.0
    noise_sd: float = 0.2
    direction: str = "positive"
    features: str = ""
    dosage_levels: int | None = None

    def config(self) -> SimulationConfig:
        return SimulationConfig(C=self.C, alpha=self.alpha, kappa=self.kappa, noise_sd=self.noise_sd,
                                num_treatments=self.k)


@dataclass
class RunConfig:
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    grid_n: int = 65
    opt_grid_n: int = 257
    seeds: tuple = tuple(range(10))
    models: tuple = ("scigan", "mlp_m")
    output: str = "results"
    record_wall_time: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must be nonempty")
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ValueError(f"unknown model {m!r}; choose from {MODEL_NAMES}")


def _parse_value(raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(int(s) if s.lstrip("-").isdigit() else s for s in items)
    if raw.lower() in ("", "none"):
        return None
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:
        try:
            return int(raw)
        except ValueError:
            return float(raw)
    return raw


def _apply(obj, key: str, raw: str):
    names = {f.name for f in dataclasses.fields(obj)}
    if key not in names:
        raise KeyError(f"unknown setting {key!r} for {type(obj).__name__}")
    setattr(obj, key, _parse_value(raw, getattr(obj, key)))


def apply_setting(cfg: RunConfig, dotted: str, raw: str):
    """Set ``section.key`` (sections: simulation, train, baseline, run, metrics)."""
    section, _, key = dotted.partition(".")
    if not key:
        raise ValueError(f"setting must look like section.key, got {dotted!r}")
    if section in ("simulation", "train", "baseline"):
        _apply(getattr(cfg, section), key, raw)
    elif section in ("run", "metrics"):
        _apply(cfg, key, raw)
    else:
        raise KeyError(f"unknown config section {section!r}")


def load_run_config(path=None, overrides=()) -> RunConfig:
    """INI file (optional) then ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                apply_setting(cfg, f"{section}.{key}", raw)
    for item in overrides:
        dotted, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        apply_setting(cfg, dotted.strip(), raw)
    cfg.train.__post_init__()
    cfg.__post_init__()
    return cfg


def resolve_output(path) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def simulate(settings: SimulationSettings, master_seed: int) -> tuple[Dataset, ResponseModel]:
    feat_rng = np.random.default_rng(component_seed(master_seed, "features"))
    X = load_features(settings.features) if settings.features else synth_features(settings.n, settings.p, feat_rng)
    params = sample_treatment_params(component_seed(master_seed, "params"), X.shape[1], settings.k,
                                     direction=settings.direction)
    model = ResponseModel(params, settings.config())
    ds = make_dataset(X, model, settings.config(), np.random.default_rng(component_seed(master_seed, "assignment")))
    if settings.dosage_levels:
        ds = discretize_dosages(ds, settings.dosage_levels, model)
    ds.meta.update(master_seed=master_seed, direction=settings.direction)
    return ds, model


def train_model(name: str, dataset: Dataset, cfg: RunConfig, master_seed: int, k: int):
    """Returns ``(model, history)``; history is empty for the baselines."""
    if name in BASELINE_VARIANTS:
        bcfg = dataclasses.replace(cfg.baseline, seed=component_seed(master_seed, "baseline"))
        return baseline_fit(dataset, name, bcfg, k=k), []
    tcfg = dataclasses.replace(cfg.train, seed=component_seed(master_seed, "train"),
                               dosage_levels=cfg.simulation.dosage_levels or cfg.train.dosage_levels)
    model = fit_scigan(dataset, tcfg, VARIANTS[name], k=k)
    return model, model.gan.history


def save_model(path, model):
    arrays, meta = model.checkpoint()
    nn.save_checkpoint(path, arrays, meta)


def load_model(path):
    arrays, meta = nn.load_checkpoint(path)
    kind = meta.get("kind")
    if kind == "scigan":
        return SciganModel.from_checkpoint(arrays, meta)
    if kind in BASELINE_VARIANTS:
        return BaselineNet.from_checkpoint(arrays, meta)
    raise ValueError(f"checkpoint {path} has unknown model kind {kind!r}")


def evaluate_model(model, name: str, oracle: ResponseOracle, dataset: Dataset, cfg: RunConfig, seed: int,
                   wall_time: float = 0.0, run_id: str = "") -> EvalReport:
    X = dataset.X[dataset.split["test"]]
    sim = cfg.simulation
    return evaluate(model, oracle, X, cfg.grid_n, cfg.opt_grid_n, model=name, seed=seed,
                    run_id=run_id or f"{name}-s{seed}", kappa=sim.kappa, alpha=sim.alpha,
                    wall_time_s=wall_time if cfg.record_wall_time else 0.0)


def run_cell(cfg: RunConfig, seed: int, models=None) -> list[EvalReport]:
    """Simulate, train every model and evaluate on the test split."""
    ds, truth = simulate(cfg.simulation, seed)
    oracle = ResponseOracle(truth)
    reports = []
    for name in models or cfg.models:
        start = time.perf_counter()
        model, _ = train_model(name, ds, cfg, seed, truth.k)
        reports.append(evaluate_model(model, name, oracle, ds, cfg, seed, time.perf_counter() - start))
    return reports


def aggregate(reports) -> list[dict]:
    """Mean and population std per model over the reported seeds."""
    out = []
    for name in dict.fromkeys(r.model for r in reports):
        rows = [r for r in reports if r.model == name]
        entry = {"model": name, "n_seeds": len(rows)}
        for metric in ("sqrt_mise", "sqrt_dpe", "sqrt_pe"):
            vals = np.array([getattr(r, metric) for r in rows])
            entry[f"{metric}_mean"] = float(vals.mean())
            entry[f"{metric}_std"] = float(vals.std())
        out.append(entry)
    return out


def write_summary(path, summary: list[dict]):
    cols = ["model", "n_seeds"] + [f"{m}_{s}" for m in ("sqrt_mise", "sqrt_dpe", "sqrt_pe") for s in ("mean", "std")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in summary:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])


def _sweep_config(cfg: RunConfig, axis: str, value) -> tuple[RunConfig, tuple]:
    c = dataclasses.replace(cfg, simulation=dataclasses.replace(cfg.simulation), train=dataclasses.replace(cfg.train))
    models = cfg.models
    if axis == "kappa":
        c.simulation.kappa = float(value)
    elif axis == "alpha":
        if value < 1:
            raise ValueError("alpha must be >= 1")
        c.simulation.alpha = float(value)
    elif axis == "beta_levels":
        if value < 2:
            raise ValueError("beta_levels must be >= 2")
        c.simulation.dosage_levels = int(value)
    elif axis == "n_w":
        c.train.n_w = int(value)
        models = ("scigan", "scigan-single")
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    return c, models


SWEEP_COLUMNS = ("axis", "value") + CSV_COLUMNS


def sweep(cfg: RunConfig, axis: str, values, out_dir) -> list[dict]:
    """One train/evaluate cycle per (axis value, seed). Failed cells are kept as
    rows with empty metrics and the sweep moves on."""
    out_dir = Path(out_dir)
    for v in values:
        _sweep_config(cfg, axis, v)
    rows = []
    for v in values:
        c, models = _sweep_config(cfg, axis, v)
        for seed in cfg.seeds:
            try:
                for r in run_cell(c, seed, models):
                    rows.append({"axis": axis, "value": v, **r.row()})
            except Exception as exc:  # noqa: BLE001 - recorded as a missing cell
                log.warning("sweep cell %s=%s seed %s failed: %s", axis, v, seed, exc)
                for name in models:
                    rows.append({"axis": axis, "value": v, "run_id": f"{name}-s{seed}", "model": name, "seed": seed,
                                 "kappa": c.simulation.kappa, "alpha": c.simulation.alpha, "sqrt_mise": "",
                                 "sqrt_dpe": "", "sqrt_pe": "", "grid_n": c.grid_n, "wall_time_s": ""})
    with open(out_dir / f"sweep_{axis}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    write_plot_data(rows, axis, out_dir)
    return rows


def write_plot_data(rows, axis: str, out_dir):
    """Two-column ``value mean`` files, one per model and metric; missing cells are skipped."""
    out_dir = Path(out_dir)
    for name in dict.fromkeys(r["model"] for r in rows):
        for metric in ("sqrt_mise", "sqrt_dpe", "sqrt_pe"):
            lines = [f"# {axis} {metric}"]
            for v in dict.fromkeys(r["value"] for r in rows):
                vals = [r[metric] for r in rows if r["model"] == name and r["value"] == v and r[metric] != ""]
                if vals:
                    lines.append(f"{v} {float(np.mean(vals))!r}")
            (out_dir / f"{axis}_{name}_{metric}.dat").write_text("\n".join(lines) + "\n")


def sample_hpo_config(rng: np.random.Generator) -> dict:
    return {key: int(rng.choice(choices)) for key, choices in HPO_SPACE.items()}


def hpo_score(model: SciganModel, dataset: Dataset, grid_n: int = 65, seed: int = 0) -> tuple[float, float]:
    """Validation factual MSE plus MISE of the inference net against generator-completed curves."""
    va = dataset.split["val"]
    X, w, d, y = dataset.X[va], dataset.w_f[va].astype(int), dataset.d_f[va], dataset.y_f[va]
    inet = model.inference
    pred = model.gan.scaler.inverse(inet.factual(inet.latent(X), w, d).value)
    mse = float(np.mean((pred - y) ** 2))
    grid = np.linspace(0.0, 1.0, grid_n)
    rng = np.random.default_rng(seed)
    total = 0.0
    for t in range(model.k):
        gen = generator_curves(model.gan, X, w, d, y, t, grid, rng)
        total += float(np.trapezoid((gen - model.predict(X, t, grid)) ** 2, grid, axis=1).mean())
    return mse, total / model.k


HPO_COLUMNS = ("trial",) + tuple(HPO_SPACE) + ("val_factual_mse", "generator_mise", "score")


def hpo(cfg: RunConfig, budget: int, master_seed: int = 0, out_dir=None) -> tuple[dict, list[dict]]:
    """Random search; returns the best sampled config and the full trial log."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(component_seed(master_seed, "hpo"))
    ds, truth = simulate(cfg.simulation, master_seed)
    trials = []
    for trial in range(budget):
        params = sample_hpo_config(rng)
        tcfg = dataclasses.replace(cfg.train, seed=component_seed(master_seed, "train") + trial, **params)
        model = fit_scigan(ds, tcfg, "scigan", k=truth.k)
        mse, gmise = hpo_score(model, ds, cfg.grid_n, seed=trial)
        trials.append({"trial": trial, **params, "val_factual_mse": mse, "generator_mise": gmise, "score": mse + gmise})
    best = min(trials, key=lambda r: (r["score"] if math.isfinite(r["score"]) else math.inf, r["trial"]))
    if out_dir is not None:
        with open(Path(out_dir) / "hpo_trials.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, HPO_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in trials:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return {key: best[key] for key in HPO_SPACE}, trials

"""Factual-only supervised references: a plain MLP and a multitask MLP-M."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .gan import OutcomeScaler, _batch
from .nn import AdamState, Tape, TrainingDivergence, adam_step, backward, square
from .networks import InferenceNet
from .simulate import Dataset

BASELINE_VARIANTS = ("mlp", "mlp_m")


@dataclass
class BaselineConfig:
    hidden_units: int = 64
    head_layers: int = 2
    batch_size: int = 128
    learning_rate: float = 1e-3
    max_iterations: int = 10000
    eval_every: int = 50
    patience: int = 10
    seed: int = 0


@dataclass
class BaselineNet:
    """Trained network plus outcome scaling. ``mlp`` feeds ``onehot(w)`` to one head."""

    variant: str
    net: InferenceNet
    scaler: OutcomeScaler
    config: BaselineConfig
    best_iteration: int = 0
    best_val_mse: float = float("nan")

    @property
    def k(self) -> int:
        return self.net.k

    def predict(self, x, w: int, d) -> np.ndarray:
        return baseline_predict(self, x, w, d)

    def checkpoint(self) -> tuple[dict, dict]:
        meta = {"kind": self.variant, "k": self.k, "p": self.net.p,
                "config": asdict(self.config), "scaler": asdict(self.scaler)}
        return self.net.state_dict(), meta

    @classmethod
    def from_checkpoint(cls, arrays: dict, meta: dict) -> "BaselineNet":
        cfg = BaselineConfig(**meta["config"])
        net = InferenceNet(meta["p"], meta["k"], cfg.hidden_units, cfg.head_layers, meta["kind"] == "mlp_m")
        net.load_state_dict(arrays)
        return cls(meta["kind"], net, OutcomeScaler(**meta["scaler"]), cfg)


def baseline_predict(model: BaselineNet, x, w: int, d) -> np.ndarray:
    return model.scaler.inverse(model.net.predict(x, w, d))


def _factual_mse(net: InferenceNet, X, w, d, y) -> float:
    return float(np.mean((net.factual(net.latent(X), w, d).value - y) ** 2))


def baseline_fit(dataset: Dataset, variant: str = "mlp_m", config: BaselineConfig | None = None,
                 k: int | None = None) -> BaselineNet:
    """Adam on factual squared error, keeping the best validation checkpoint."""
    if variant not in BASELINE_VARIANTS:
        raise ValueError(f"unknown baseline variant {variant!r}")
    config = config or BaselineConfig()
    tr = dataset.split.get("train", np.arange(dataset.n))
    va = dataset.split.get("val", tr)
    if len(tr) == 0:
        raise ValueError("training split is empty")
    if len(va) == 0:
        va = tr
    k = k if k is not None else int(dataset.w_f.max()) + 1
    scaler = OutcomeScaler.fit(dataset.y_f[tr])
    X, w, d, y = dataset.X[tr], dataset.w_f[tr].astype(int), dataset.d_f[tr], scaler.transform(dataset.y_f[tr])
    Xv, wv, dv, yv = dataset.X[va], dataset.w_f[va].astype(int), dataset.d_f[va], scaler.transform(dataset.y_f[va])
    init_rng, rng = (np.random.default_rng(s) for s in np.random.SeedSequence([config.seed, 2]).spawn(2))
    net = InferenceNet(X.shape[1], k, config.hidden_units, config.head_layers, variant == "mlp_m", init_rng)
    opt = AdamState(net.parameters(), lr=config.learning_rate)

    best = (_factual_mse(net, Xv, wv, dv, yv), 0, net.state_dict())
    stale = 0
    for it in range(1, config.max_iterations + 1):
        b = _batch(rng, X, w, d, y, config.batch_size)
        with Tape() as tape:
            loss = square(net.factual(net.latent(b.x), b.w_f, b.d_f) - b.y).mean()
        if not np.isfinite(loss.value):
            raise TrainingDivergence(f"non-finite baseline loss at iteration {it}", iteration=it, loss=float(loss.value))
        adam_step(opt, backward(tape, loss))
        if it % config.eval_every == 0:
            val = _factual_mse(net, Xv, wv, dv, yv)
            if val < best[0]:
                best, stale = (val, it, net.state_dict()), 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    net.load_state_dict(best[2])
    return BaselineNet(variant, net, scaler, config, best[1], best[0] * scaler.std ** 2)

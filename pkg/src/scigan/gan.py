"""Losses and adversarial training of the counterfactual generator, plus
distillation of the generator into an inference network."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import nn
from .nn import AdamState, Tape, TrainingDivergence, Var, adam_step, backward, frozen
from .networks import (
    DosageDiscriminator,
    GeneratorNet,
    InferenceNet,
    SingleDiscriminator,
    TreatmentDiscriminator,
    onehot,
)
from .simulate import Dataset, dosage_grid

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    n_w: int = 5
    supervised_weight: float = 1.0
    n_d: int = 1
    n_g: int = 1
    batch_size: int = 128
    gan_iterations: int = 5000
    inference_iterations: int = 10000
    noise_dim: int = 16
    hidden_units: int = 64
    inv_eqv_dim: int = 16
    head_layers: int = 2
    learning_rate: float = 1e-3
    seed: int = 0
    dosage_levels: int | None = None

    def __post_init__(self):
        for name in ("n_w", "n_d", "n_g", "batch_size", "gan_iterations", "inference_iterations",
                     "noise_dim", "hidden_units", "inv_eqv_dim", "head_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.supervised_weight < 0:
            raise ValueError("supervised_weight must be >= 0")
        if self.dosage_levels is not None and self.dosage_levels < 2:
            raise ValueError("dosage_levels must be >= 2")


@dataclass(frozen=True)
class Variant:
    """Which model components are switched on."""

    supervised: bool = True
    multitask: bool = True
    hierarchical: bool = True
    set_layers: bool = True


VARIANTS = {
    "baseline": Variant(False, False, False, False),
    "+supervised": Variant(True, False, False, False),
    "+multitask": Variant(True, True, False, False),
    "+hierarchical": Variant(True, True, True, False),
    "scigan": Variant(True, True, True, True),
    "scigan-single": Variant(True, True, False, True),
}


@dataclass
class OutcomeScaler:
    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, y) -> "OutcomeScaler":
        y = np.asarray(y, dtype=np.float64)
        std = float(y.std())
        return cls(float(y.mean()), std if std > 0 else 1.0)

    def transform(self, y):
        return (np.asarray(y) - self.mean) / self.std

    def inverse(self, y):
        return np.asarray(y) * self.std + self.mean


@dataclass
class DosageSampleSet:
    """Sampled dosage levels per (row, treatment) and the factual slot."""

    dosages: np.ndarray        # (B, k, n_w)
    w_f: np.ndarray            # (B,)
    factual_index: np.ndarray  # (B,) position of d_f inside treatment w_f's set

    @property
    def n_w(self) -> int:
        return self.dosages.shape[2]

    def mask(self, w: int) -> np.ndarray:
        """(B, n_w) boolean, true at the factual slot of rows treated with w."""
        m = np.zeros((len(self.w_f), self.n_w), dtype=bool)
        rows = np.flatnonzero(self.w_f == w)
        m[rows, self.factual_index[rows]] = True
        return m

    def position(self) -> np.ndarray:
        """Flattened factual position ``w_f * n_w + index``."""
        return self.w_f * self.n_w + self.factual_index

    def validate(self, d_f):
        rows = np.arange(len(self.w_f))
        own = self.dosages[rows, self.w_f]
        hits = (own == np.asarray(d_f)[:, None]).sum(axis=1)
        if np.any(hits != 1) or np.any(own[rows, self.factual_index] != d_f):
            raise ValueError("factual dosage must appear exactly once in the factual treatment's set")


def sample_dosage_sets(rng: np.random.Generator, w_f, d_f, k: int, n_w: int,
                       levels: int | None = None) -> DosageSampleSet:
    """Fresh dosage sets for a batch, with d_f placed in the factual set.

    Continuous mode draws uniforms on [0, 1]; discrete mode draws without
    replacement from the ``levels``-point grid (so ``n_w`` is capped there).
    """
    w_f = np.asarray(w_f, dtype=int)
    d_f = np.asarray(d_f, dtype=np.float64)
    b = len(w_f)
    rows = np.arange(b)
    if levels is None:
        dos = rng.random((b, k, n_w))
        idx = rng.integers(n_w, size=b)
        dos[rows, w_f, idx] = d_f
        return DosageSampleSet(dos, w_f, idx)
    grid = dosage_grid(levels)
    n = min(n_w, levels)
    picks = np.argsort(rng.random((b, k, levels)), axis=-1)[..., :n]
    dos = grid[picks]
    own = dos[rows, w_f]
    present = np.isclose(own, d_f[:, None], rtol=0, atol=1e-12)
    idx = rng.integers(n, size=b)
    has = present.any(axis=1)
    idx[has] = present[has].argmax(axis=1)
    dos[rows, w_f, idx] = d_f
    return DosageSampleSet(dos, w_f, idx)


def tilde_outcomes(generated: list, y_f, sets: DosageSampleSet) -> list:
    """Per-treatment (B, n_w) outcomes with y_f substituted at the factual slot."""
    y_f = np.asarray(y_f, dtype=np.float64)[:, None]
    return [nn.where(sets.mask(w), y_f, out) for w, out in enumerate(generated)]


def make_pairs(tilde: list, sets: DosageSampleSet) -> list:
    """(dosage, outcome) elements, one (B, n_w, 2) array per treatment."""
    out = []
    for w, yt in enumerate(tilde):
        yt = nn.as_var(yt)
        b, n = yt.shape
        out.append(nn.concat([sets.dosages[:, w, :, None], yt.reshape((b, n, 1))], axis=-1))
    return out


def build_tilde_y(gen: GeneratorNet, batch, sets: DosageSampleSet, z) -> tuple[list, list]:
    """Generator outputs at every sampled dosage, then the factual substitution.

    Returns ``(pairs, generated)`` where ``generated`` holds the raw generator
    outputs (used for the supervised loss at the factual slot).
    """
    sets.validate(batch.d_f)
    latent = gen.encode(batch.x, batch.w_f, batch.d_f, batch.y, z)
    generated = [gen.head(latent, w, sets.dosages[:, w]) for w in range(gen.k)]
    return make_pairs(tilde_outcomes(generated, batch.y, sets), sets), generated


def _bce_rows(probs, target: np.ndarray) -> Var:
    """Per-row sum of binary cross-entropies over the last axis."""
    probs = nn.as_var(probs)
    pos = nn.log(nn.clip(probs, PROB_FLOOR, 1.0))
    negl = nn.log(nn.clip(1.0 - probs, PROB_FLOOR, 1.0))
    return -(target * pos + (1.0 - target) * negl).sum(axis=-1)


def supervised_loss(factual_pred, y_f) -> Var:
    """Mean squared error at the factual treatment-dosage pair."""
    return nn.square(nn.as_var(factual_pred) - np.asarray(y_f, dtype=np.float64)).mean()


def treatment_disc_loss(probs, w_f) -> Var:
    probs = nn.as_var(probs)
    return _bce_rows(probs, onehot(w_f, probs.shape[-1])).mean()


def dosage_disc_loss(probs, factual_index, gate) -> Var:
    """Cross-entropy over dosage slots, averaged over rows with ``gate`` set."""
    probs = nn.as_var(probs)
    gate = np.asarray(gate, dtype=bool)
    count = int(gate.sum())
    if count == 0:
        return Var(0.0)
    target = onehot(np.where(gate, factual_index, 0), probs.shape[-1])
    return (_bce_rows(probs, target) * (gate / count)).sum()


def hierarchical_combine(dw_out, dose_outs: list) -> Var:
    """``D_H[w, j] = D_W[w] * D_w[j]``, flattened to (B, k * n_w)."""
    dw_out = nn.as_var(dw_out)
    blocks = [dw_out[:, w:w + 1] * nn.as_var(d) for w, d in enumerate(dose_outs)]
    return nn.concat(blocks, axis=-1)


def position_loss(probs, positions) -> Var:
    """Cross-entropy of the factual position against all other positions."""
    probs = nn.as_var(probs)
    return _bce_rows(probs, onehot(positions, probs.shape[-1])).mean()


single_disc_loss = position_loss


def generator_gan_loss(dh_probs, positions, sup_loss, supervised_weight: float) -> Var:
    """Generator objective: the discriminator's log-likelihood plus weighted L_S.

    Minimising it drives the discriminators' cross-entropy up.
    """
    adv = -position_loss(dh_probs, positions)
    if supervised_weight == 0:
        return adv
    return adv + supervised_weight * nn.as_var(sup_loss)


@dataclass
class Batch:
    x: np.ndarray
    w_f: np.ndarray
    d_f: np.ndarray
    y: np.ndarray


def _batch(rng, X, w, d, y, size) -> Batch:
    n = len(y)
    idx = rng.choice(n, size=min(size, n), replace=False) if size <= n else rng.integers(n, size=size)
    return Batch(X[idx], w[idx], d[idx], y[idx])


@dataclass
class Discriminators:
    treatment: TreatmentDiscriminator | None = None
    dosage: list = field(default_factory=list)
    single: SingleDiscriminator | None = None

    def modules(self):
        return [m for m in (self.treatment, self.single) if m is not None] + list(self.dosage)

    def parameters(self):
        return [p for m in self.modules() for p in m.parameters()]

    def hierarchical_probs(self, x, pairs):
        pw = self.treatment(x, pairs)
        pd = [dd(x, pairs[w]) for w, dd in enumerate(self.dosage)]
        return pw, pd

    def position_probs(self, x, pairs) -> Var:
        if self.single is not None:
            return self.single(x, pairs)
        pw, pd = self.hierarchical_probs(x, pairs)
        return hierarchical_combine(pw, pd)


def build_discriminators(p, k, config: TrainConfig, variant: Variant, rng) -> Discriminators:
    n_w = config.n_w if config.dosage_levels is None else min(config.n_w, config.dosage_levels)
    h, q = config.hidden_units, config.inv_eqv_dim
    if variant.hierarchical:
        return Discriminators(
            treatment=TreatmentDiscriminator(p, k, n_w, h, q, variant.set_layers, rng),
            dosage=[DosageDiscriminator(p, n_w, q, h, variant.set_layers, rng) for _ in range(k)],
        )
    return Discriminators(single=SingleDiscriminator(p, k, n_w, h, q, q, variant.set_layers, rng))


@dataclass
class GanResult:
    generator: GeneratorNet
    discriminators: Discriminators
    scaler: OutcomeScaler
    config: TrainConfig
    variant: Variant
    k: int
    history: list = field(default_factory=list)


def _train_arrays(dataset: Dataset):
    idx = dataset.split.get("train", np.arange(dataset.n))
    return dataset.X[idx], dataset.w_f[idx].astype(int), dataset.d_f[idx], dataset.y_f[idx]


def _check_finite(iteration, **losses):
    if not all(np.isfinite(v) for v in losses.values()):
        raise TrainingDivergence(f"non-finite loss at iteration {iteration}: {losses}", iteration=iteration, **losses)


def _update(opt: AdamState, grads, iteration, **losses):
    """Adam step whose divergence error also names the iteration and losses."""
    try:
        adam_step(opt, grads)
    except TrainingDivergence as exc:
        raise TrainingDivergence(f"{exc} at iteration {iteration}", iteration=iteration,
                                 **losses, **exc.diagnostics) from None


def gan_train(dataset: Dataset, config: TrainConfig, variant: Variant | str = "scigan", k: int | None = None) -> GanResult:
    """Alternate discriminator and generator updates on the training split."""
    if isinstance(variant, str):
        variant = VARIANTS[variant]
    X, w, d, y = _train_arrays(dataset)
    if len(y) == 0:
        raise ValueError("training split is empty")
    k = k if k is not None else int(dataset.w_f.max()) + 1
    scaler = OutcomeScaler.fit(y)
    ys = scaler.transform(y)
    init_rng, rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    p = X.shape[1]
    gen = GeneratorNet(p, k, config.noise_dim, config.hidden_units, config.head_layers, variant.multitask, init_rng)
    discs = build_discriminators(p, k, config, variant, init_rng)
    opt_g = AdamState(gen.parameters(), lr=config.learning_rate)
    opt_d = AdamState(discs.parameters(), lr=config.learning_rate)
    lam = config.supervised_weight if variant.supervised else 0.0
    B = config.batch_size
    history = []

    for it in range(config.gan_iterations):
        for _ in range(config.n_d):
            batch = _batch(rng, X, w, d, ys, B)
            z = rng.random((len(batch.y), config.noise_dim))
            sets = sample_dosage_sets(rng, batch.w_f, batch.d_f, k, config.n_w, config.dosage_levels)
            pairs, _ = build_tilde_y(gen, batch, sets, z)
            pairs = [pr.value for pr in pairs]
            with Tape() as tape:
                if variant.hierarchical:
                    pw, pd = discs.hierarchical_probs(batch.x, pairs)
                    lw = treatment_disc_loss(pw, batch.w_f)
                    lds = [dosage_disc_loss(pd[t], sets.factual_index, batch.w_f == t) for t in range(k)]
                    total = lw + sum(lds[1:], lds[0])
                    lw_val, ld_val = float(lw.value), float(np.mean([l.value for l in lds]))
                else:
                    total = single_disc_loss(discs.single(batch.x, pairs), sets.position())
                    lw_val, ld_val = float(total.value), float("nan")
            _check_finite(it, L_W=lw_val, L_d=ld_val if variant.hierarchical else 0.0)
            _update(opt_d, backward(tape, total), it, L_W=lw_val, L_d=ld_val)

        for _ in range(config.n_g):
            batch = _batch(rng, X, w, d, ys, B)
            z = rng.random((len(batch.y), config.noise_dim))
            sets = sample_dosage_sets(rng, batch.w_f, batch.d_f, k, config.n_w, config.dosage_levels)
            with Tape() as tape, frozen(*discs.modules()):
                pairs, generated = build_tilde_y(gen, batch, sets, z)
                stacked = nn.stack(generated, axis=1)
                rows = np.arange(len(batch.y))
                ls = supervised_loss(stacked[rows, batch.w_f, sets.factual_index], batch.y)
                gl = generator_gan_loss(discs.position_probs(batch.x, pairs), sets.position(), ls, lam)
            ls_val, gl_val = float(ls.value), float(gl.value)
            _check_finite(it, L_S=ls_val, generator_loss=gl_val)
            _update(opt_g, backward(tape, gl, wrt=gen.parameters()), it, L_S=ls_val, generator_loss=gl_val)

        history.append({"iteration": it, "L_S": ls_val, "L_W": lw_val, "mean_L_d": ld_val, "generator_loss": gl_val})
        if it % 1000 == 0:
            log.debug("gan iteration %d: L_S=%.4f L_W=%.4f L_d=%.4f G=%.4f", it, ls_val, lw_val, ld_val, gl_val)

    return GanResult(gen, discs, scaler, config, variant, k, history)


def generator_curves(result: GanResult, X, w_f, d_f, y_f, treatment: int, dosages, rng) -> np.ndarray:
    """Generated outcomes (original units) for treatment ``treatment`` at ``dosages`` (G,)."""
    gen, scaler = result.generator, result.scaler
    z = rng.random((len(y_f), gen.noise_dim))
    latent = gen.encode(X, w_f, d_f, scaler.transform(y_f), z)
    return scaler.inverse(gen.head(latent, treatment, np.asarray(dosages, dtype=np.float64)).value)


def discriminator_accuracy(result: GanResult, dataset: Dataset, rng, size: int = 512) -> float:
    """How often the discriminator's top position is the factual one."""
    X, w, d, y = _train_arrays(dataset)
    ys = result.scaler.transform(y)
    batch = _batch(rng, X, w, d, ys, size)
    cfg = result.config
    z = rng.random((len(batch.y), cfg.noise_dim))
    sets = sample_dosage_sets(rng, batch.w_f, batch.d_f, result.k, cfg.n_w, cfg.dosage_levels)
    pairs, _ = build_tilde_y(result.generator, batch, sets, z)
    probs = result.discriminators.position_probs(batch.x, [pr.value for pr in pairs]).value
    return float(np.mean(probs.argmax(axis=1) == sets.position()))


def inference_train(dataset: Dataset, gan: GanResult, config: TrainConfig | None = None) -> InferenceNet:
    """Fit the inference network to generator-completed dosage-outcome sets."""
    config = config or gan.config
    X, w, d, y = _train_arrays(dataset)
    ys = gan.scaler.transform(y)
    k = gan.k
    init_rng, rng = (np.random.default_rng(s) for s in np.random.SeedSequence([config.seed, 1]).spawn(2))
    inet = InferenceNet(X.shape[1], k, config.hidden_units, config.head_layers, gan.variant.multitask, init_rng)
    opt = AdamState(inet.parameters(), lr=config.learning_rate)
    for it in range(config.inference_iterations):
        batch = _batch(rng, X, w, d, ys, config.batch_size)
        z = rng.random((len(batch.y), config.noise_dim))
        sets = sample_dosage_sets(rng, batch.w_f, batch.d_f, k, config.n_w, config.dosage_levels)
        pairs, _ = build_tilde_y(gan.generator, batch, sets, z)
        targets = [pr.value[..., 1] for pr in pairs]
        with Tape() as tape:
            loss = inference_loss(inet, batch.x, sets, targets)
        if not np.isfinite(loss.value):
            raise TrainingDivergence(f"non-finite inference loss at iteration {it}", iteration=it, L_I=float(loss.value))
        _update(opt, backward(tape, loss), it, L_I=float(loss.value))
    return inet


def inference_loss(inet: InferenceNet, x, sets: DosageSampleSet, targets: list) -> Var:
    """Mean squared error against the completed outcome sets."""
    latent = inet.latent(x)
    terms = [nn.square(inet.head(latent, t, sets.dosages[:, t]) - targets[t]).mean() for t in range(inet.k)]
    return sum(terms[1:], terms[0]) * (1.0 / inet.k)


def infer(inet: InferenceNet, x, w: int, d) -> np.ndarray:
    """Inference-network outcomes (standardised units) at dosages ``d`` in [0, 1]."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0) or np.any(d > 1):
        raise ValueError("dosages must lie in [0, 1]")
    return inet.predict(x, w, d)


@dataclass
class SciganModel:
    """Trained generator and inference network with the outcome scaling."""

    gan: GanResult
    inference: InferenceNet

    @property
    def k(self) -> int:
        return self.gan.k

    def predict(self, x, w: int, d) -> np.ndarray:
        return self.gan.scaler.inverse(infer(self.inference, x, w, d))

    def checkpoint(self) -> tuple[dict, dict]:
        arrays = {f"generator.{n}": v for n, v in self.gan.generator.state_dict().items()}
        arrays.update({f"inference.{n}": v for n, v in self.inference.state_dict().items()})
        meta = {
            "kind": "scigan",
            "k": self.k,
            "p": self.inference.p,
            "config": asdict(self.gan.config),
            "variant": asdict(self.gan.variant),
            "scaler": asdict(self.gan.scaler),
        }
        return arrays, meta

    @classmethod
    def from_checkpoint(cls, arrays: dict, meta: dict) -> "SciganModel":
        cfg = TrainConfig(**meta["config"])
        variant = Variant(**meta["variant"])
        k, p = meta["k"], meta["p"]
        gen = GeneratorNet(p, k, cfg.noise_dim, cfg.hidden_units, cfg.head_layers, variant.multitask)
        gen.load_state_dict({n[len("generator."):]: a for n, a in arrays.items() if n.startswith("generator.")})
        inet = InferenceNet(p, k, cfg.hidden_units, cfg.head_layers, variant.multitask)
        inet.load_state_dict({n[len("inference."):]: a for n, a in arrays.items() if n.startswith("inference.")})
        gan = GanResult(gen, Discriminators(), OutcomeScaler(**meta["scaler"]), cfg, variant, k)
        return cls(gan, inet)


def fit_scigan(dataset: Dataset, config: TrainConfig, variant: Variant | str = "scigan", k: int | None = None) -> SciganModel:
    gan = gan_train(dataset, config, variant, k)
    return SciganModel(gan, inference_train(dataset, gan, config))


def write_training_log(history: list, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "L_S", "L_W", "mean_L_d", "generator_loss"])
        for row in history:
            writer.writerow([row["iteration"], repr(row["L_S"]), repr(row["L_W"]), repr(row["mean_L_d"]),
                             repr(row["generator_loss"])])


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)

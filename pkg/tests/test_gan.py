import math

import numpy as np
import pytest

from scigan import gan as G
from scigan import nn
from scigan import simulate as sim
from scigan.networks import (DosageDiscriminator, GeneratorNet, InferenceNet, SingleDiscriminator,
                             TreatmentDiscriminator, generator_forward)

from conftest import max_fd_error, randomize_biases

SMALL = dict(hidden_units=16, inv_eqv_dim=4, noise_dim=3, batch_size=32)


def toy_dataset(n=200, p=5, k=3, noise=0.0, seed=0, shapes=None, **cfg):
    rng = np.random.default_rng(seed)
    model = sim.ResponseModel(sim.sample_treatment_params(seed + 1, p, k, shapes, direction="positive"),
                              sim.SimulationConfig(noise_sd=noise, num_treatments=k, **cfg))
    return sim.make_dataset(sim.synth_features(n, p, rng), model, None, rng), model


def batch_of(ds, size, seed=0):
    rng = np.random.default_rng(seed)
    return G._batch(rng, ds.X, ds.w_f, ds.d_f, ds.y_f, size)


class TestLossValues:
    def test_treatment_uniform_two(self):
        loss = G.treatment_disc_loss(np.full((4, 2), 0.5), np.array([0, 1, 1, 0]))
        assert float(loss.value) == pytest.approx(2 * math.log(2), abs=1e-12)
        assert float(loss.value) == pytest.approx(1.3863, abs=1e-4)

    def test_treatment_perfect(self):
        w = np.array([0, 2, 1])
        assert float(G.treatment_disc_loss(nn.Var(np.eye(3)[w]), w).value) < 1e-10

    def test_dosage_uniform_five(self):
        probs = np.full((3, 5), 0.2)
        loss = G.dosage_disc_loss(probs, np.array([0, 3, 4]), np.array([True, True, False]))
        expected = -(math.log(0.2) + 4 * math.log(0.8))
        assert float(loss.value) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(2.5020, abs=1e-4)

    def test_dosage_gating(self):
        probs = np.array([[0.9, 0.1], [0.5, 0.5]])
        gated = G.dosage_disc_loss(probs, np.array([0, 1]), np.array([True, False]))
        alone = G.dosage_disc_loss(probs[:1], np.array([0]), np.array([True]))
        assert float(gated.value) == pytest.approx(float(alone.value), abs=1e-15)

    def test_dosage_no_gated_rows(self):
        loss = G.dosage_disc_loss(np.full((2, 3), 1 / 3), np.array([0, 1]), np.array([False, False]))
        assert float(loss.value) == 0.0

    def test_dosage_perfect(self):
        idx = np.array([1, 0])
        assert float(G.dosage_disc_loss(np.eye(3)[idx], idx, np.array([True, True])).value) < 1e-10

    def test_single_uniform_ten(self):
        loss = G.single_disc_loss(np.full((2, 10), 0.1), np.array([3, 7]))
        expected = -(math.log(0.1) + 9 * math.log(0.9))
        assert float(loss.value) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(3.2508, abs=1e-4)

    def test_single_perfect(self):
        pos = np.array([9, 0])
        assert float(G.single_disc_loss(np.eye(10)[pos], pos).value) < 1e-10

    def test_single_matches_hierarchical_on_uniform_factors(self):
        k, n = 2, 5
        dh = G.hierarchical_combine(np.full((3, k), 1 / k), [np.full((3, n), 1 / n)] * k)
        pos = np.array([0, 6, 9])
        a = G.position_loss(dh, pos).value
        b = G.single_disc_loss(np.full((3, k * n), 1 / (k * n)), pos).value
        assert float(a) == pytest.approx(float(b), abs=1e-12)

    def test_clamp_keeps_losses_finite(self):
        loss = G.treatment_disc_loss(np.array([[0.0, 1.0]]), np.array([0]))
        assert float(loss.value) == pytest.approx(-2 * math.log(1e-12), rel=1e-9)

    def test_losses_nonnegative(self, rng):
        for _ in range(20):
            p = rng.dirichlet(np.ones(4), size=6)
            assert float(G.position_loss(p, rng.integers(4, size=6)).value) >= 0
            assert float(G.treatment_disc_loss(p, rng.integers(4, size=6)).value) >= 0


class TestCombine:
    def test_hand_example(self):
        out = G.hierarchical_combine(np.array([[0.7, 0.3]]), [np.array([[0.6, 0.4]]), np.array([[0.5, 0.5]])])
        np.testing.assert_allclose(out.value, [[0.42, 0.28, 0.15, 0.15]], atol=1e-15)

    def test_uniform(self):
        out = G.hierarchical_combine(np.full((1, 3), 1 / 3), [np.full((1, 4), 0.25)] * 3)
        np.testing.assert_allclose(out.value, 1 / 12, atol=1e-15)

    def test_sums_to_one(self, rng):
        dw = nn.softmax(rng.normal(size=(5, 3)))
        dd = [nn.softmax(rng.normal(size=(5, 4))) for _ in range(3)]
        np.testing.assert_allclose(G.hierarchical_combine(dw, dd).value.sum(axis=1), 1.0, atol=1e-12)


class TestSupervised:
    def test_exact_reproduction(self):
        y = np.array([1.0, 2.0, 3.0])
        assert float(G.supervised_loss(y, y).value) == 0.0

    def test_constant_offset(self):
        assert float(G.supervised_loss(np.full(4, 2.0), np.full(4, 3.0)).value) == 1.0

    def test_brute_force(self):
        pred, y = np.array([0.5, -1.0, 2.0]), np.array([1.0, 1.0, 1.0])
        brute = sum((a - b) ** 2 for a, b in zip(pred, y)) / 3
        assert float(G.supervised_loss(pred, y).value) == pytest.approx(brute, abs=1e-15)

    def test_generator_gan_loss_weight_zero(self, rng):
        probs, pos = nn.softmax(rng.normal(size=(4, 6))), rng.integers(6, size=4)
        gl = G.generator_gan_loss(probs, pos, nn.Var(3.0), 0.0)
        assert float(gl.value) == -float(G.position_loss(probs, pos).value)
        gl = G.generator_gan_loss(probs, pos, nn.Var(3.0), 2.0)
        assert float(gl.value) == pytest.approx(-float(G.position_loss(probs, pos).value) + 6.0)


class TestDosageSets:
    def test_continuous(self, rng):
        w, d = rng.integers(3, size=50), rng.random(50)
        sets = G.sample_dosage_sets(rng, w, d, 3, 5)
        assert sets.dosages.shape == (50, 3, 5)
        sets.validate(d)
        assert np.all(sets.dosages[np.arange(50), w, sets.factual_index] == d)
        assert np.all((sets.dosages >= 0) & (sets.dosages <= 1))

    def test_discrete_without_replacement(self, rng):
        grid = sim.dosage_grid(7)
        w, d = rng.integers(2, size=40), grid[rng.integers(7, size=40)]
        sets = G.sample_dosage_sets(rng, w, d, 2, 5, levels=7)
        sets.validate(d)
        for row in sets.dosages.reshape(-1, 5):
            assert len(set(row)) == 5 and set(row) <= set(grid)

    def test_discrete_caps_set_size(self, rng):
        sets = G.sample_dosage_sets(rng, np.zeros(4, int), np.zeros(4), 2, 5, levels=3)
        assert sets.n_w == 3

    def test_missing_factual_rejected(self, rng):
        sets = G.sample_dosage_sets(rng, np.array([0]), np.array([0.5]), 2, 3)
        sets.dosages[0, 0, sets.factual_index[0]] = 0.25
        with pytest.raises(ValueError):
            sets.validate(np.array([0.5]))

    def test_masks_and_positions(self):
        sets = G.DosageSampleSet(np.zeros((2, 2, 3)), np.array([1, 0]), np.array([2, 1]))
        assert sets.mask(1).tolist() == [[False, False, True], [False, False, False]]
        assert sets.position().tolist() == [5, 1]


def constant_generator(k, p, c, noise_dim=3):
    gen = GeneratorNet(p, k, noise_dim, 8, 1, True, np.random.default_rng(0))
    for head in gen.heads:
        last = head.layers[-1]
        last.W.value = np.zeros_like(last.W.value)
        last.b.value = np.array([c])
    return gen


class TestTildeY:
    def setup_method(self):
        self.ds, _ = toy_dataset(60, 4, 3)
        self.batch = batch_of(self.ds, 16)
        self.rng = np.random.default_rng(1)
        self.sets = G.sample_dosage_sets(self.rng, self.batch.w_f, self.batch.d_f, 3, 5)

    def test_constant_generator(self):
        gen = constant_generator(3, 4, 0.25)
        pairs, _ = G.build_tilde_y(gen, self.batch, self.sets, self.rng.random((16, 3)))
        assert sum(p.shape[1] for p in pairs) == 15
        for w, pr in enumerate(pairs):
            outcomes = pr.value[..., 1]
            mask = self.sets.mask(w)
            np.testing.assert_array_equal(outcomes[mask], self.batch.y[self.batch.w_f == w])
            assert np.all(outcomes[~mask] == 0.25)
            np.testing.assert_array_equal(pr.value[..., 0], self.sets.dosages[:, w])

    def test_single_factual_entry(self):
        gen = GeneratorNet(4, 3, 3, 8, 1, True, np.random.default_rng(2))
        pairs, _ = G.build_tilde_y(gen, self.batch, self.sets, self.rng.random((16, 3)))
        flat = np.concatenate([p.value[..., 1] for p in pairs], axis=1)
        for i in range(16):
            hits = np.flatnonzero(flat[i] == self.batch.y[i])
            assert hits.tolist() == [self.sets.position()[i]]

    def test_rejects_sets_without_factual(self):
        gen = constant_generator(3, 4, 0.0)
        bad = G.DosageSampleSet(self.sets.dosages.copy(), self.sets.w_f, self.sets.factual_index)
        bad.dosages[0, bad.w_f[0], bad.factual_index[0]] += 0.5
        with pytest.raises(ValueError):
            G.build_tilde_y(gen, self.batch, bad, np.zeros((16, 3)))


class TestGeneratorForward:
    def setup_method(self):
        self.gen = GeneratorNet(4, 3, 3, 16, 2, True, np.random.default_rng(3))
        randomize_biases(self.gen, np.random.default_rng(4))
        rng = np.random.default_rng(5)
        self.args = (rng.random((6, 4)), rng.integers(3, size=6), rng.random(6), rng.normal(size=6), rng.random((6, 3)))

    def test_repeated_query_identical(self):
        a, b = generator_forward(self.gen, *self.args, [(1, 0.3), (1, 0.3)])
        np.testing.assert_array_equal(a.value, b.value)

    def test_heads_differ(self):
        outs = generator_forward(self.gen, *self.args, [(0, 0.3), (1, 0.3), (2, 0.3)])
        assert not np.allclose(outs[0].value, outs[1].value)
        assert not np.allclose(outs[1].value, outs[2].value)

    def test_unknown_treatment(self):
        with pytest.raises(IndexError):
            generator_forward(self.gen, *self.args, [(3, 0.5)])

    def test_gradients(self):
        loss = lambda: sum(nn.vsum(nn.square(o)) for o in generator_forward(self.gen, *self.args, [(0, 0.2), (2, 0.9)]))
        assert max_fd_error(loss, self.gen.parameters(), samples=15) < 1e-4

    def test_single_head_variant(self):
        gen = GeneratorNet(4, 3, 3, 16, 2, False, np.random.default_rng(3))
        outs = generator_forward(gen, *self.args, [(0, 0.2), (2, 0.2)])
        assert not np.allclose(outs[0].value, outs[1].value)


def random_pairs(rng, b, k, n):
    return [np.concatenate([rng.random((b, n, 1)), rng.normal(size=(b, n, 1))], axis=-1) for _ in range(k)]


class TestDiscriminatorSymmetries:
    def test_treatment_invariance_exact(self, rng):
        disc = TreatmentDiscriminator(4, 3, 5, 16, 6, True, rng)
        x, pairs = rng.random((2, 4)), random_pairs(rng, 2, 3, 5)
        ref = disc(x, pairs).value
        np.testing.assert_allclose(ref.sum(axis=1), 1.0, atol=1e-12)
        for _ in range(100):
            w = rng.integers(3)
            perm = rng.permutation(5)
            shuffled = [p[:, perm] if t == w else p for t, p in enumerate(pairs)]
            assert np.array_equal(disc(x, shuffled).value, ref)

    def test_dosage_equivariance(self, rng):
        disc = DosageDiscriminator(4, 5, 6, 16, True, rng)
        randomize_biases(disc, rng)
        x, pairs = rng.random((2, 4)), random_pairs(rng, 2, 1, 5)[0]
        ref = disc(x, pairs).value
        np.testing.assert_allclose(ref.sum(axis=1), 1.0, atol=1e-12)
        for _ in range(100):
            perm = rng.permutation(5)
            assert np.max(np.abs(disc(x, pairs[:, perm]).value - ref[:, perm])) <= 1e-12

    def test_single_block_symmetries(self, rng):
        k, n = 3, 4
        disc = SingleDiscriminator(4, k, n, 16, 5, 6, True, rng)
        randomize_biases(disc, rng)
        x, pairs = rng.random((2, 4)), random_pairs(rng, 2, k, n)
        ref = disc(x, pairs).value
        assert ref.shape == (2, k * n)
        np.testing.assert_allclose(ref.sum(axis=1), 1.0, atol=1e-12)
        for _ in range(100):
            w = rng.integers(k)
            perm = rng.permutation(n)
            shuffled = [p[:, perm] if t == w else p for t, p in enumerate(pairs)]
            out = disc(x, shuffled).value.reshape(2, k, n)
            expect = ref.reshape(2, k, n).copy()
            expect[:, w] = expect[:, w][:, perm]
            assert np.max(np.abs(out - expect)) <= 1e-12


class TestLossGradients:
    """Central differences through every discriminator, generator and inference loss."""

    def setup_method(self):
        self.rng = np.random.default_rng(8)
        self.ds, _ = toy_dataset(40, 4, 2)
        self.batch = batch_of(self.ds, 6)
        self.sets = G.sample_dosage_sets(self.rng, self.batch.w_f, self.batch.d_f, 2, 3)
        self.gen = GeneratorNet(4, 2, 3, 8, 1, True, self.rng)
        randomize_biases(self.gen, self.rng)
        self.z = self.rng.random((6, 3))
        pairs, _ = G.build_tilde_y(self.gen, self.batch, self.sets, self.z)
        self.pairs = [p.value for p in pairs]

    def test_treatment_loss(self):
        disc = TreatmentDiscriminator(4, 2, 3, 8, 4, True, self.rng)
        randomize_biases(disc, self.rng)
        loss = lambda: G.treatment_disc_loss(disc(self.batch.x, self.pairs), self.batch.w_f)
        assert max_fd_error(loss, disc.parameters(), samples=12) < 1e-4

    def test_dosage_loss(self):
        disc = DosageDiscriminator(4, 3, 4, 8, True, self.rng)
        randomize_biases(disc, self.rng)
        gate = self.batch.w_f == 1
        loss = lambda: G.dosage_disc_loss(disc(self.batch.x, self.pairs[1]), self.sets.factual_index, gate)
        assert max_fd_error(loss, disc.parameters(), samples=12) < 1e-4

    def test_single_loss(self):
        disc = SingleDiscriminator(4, 2, 3, 8, 4, 4, True, self.rng)
        randomize_biases(disc, self.rng)
        loss = lambda: G.single_disc_loss(disc(self.batch.x, self.pairs), self.sets.position())
        assert max_fd_error(loss, disc.parameters(), samples=10) < 1e-4

    @pytest.mark.parametrize("name", sorted(G.VARIANTS))
    def test_generator_loss(self, name):
        variant = G.VARIANTS[name]
        cfg = G.TrainConfig(n_w=3, hidden_units=8, inv_eqv_dim=4, noise_dim=3)
        gen = GeneratorNet(4, 2, 3, 8, 1, variant.multitask, self.rng)
        randomize_biases(gen, self.rng)
        discs = G.build_discriminators(4, 2, cfg, variant, self.rng)

        def loss():
            pairs, generated = G.build_tilde_y(gen, self.batch, self.sets, self.z)
            rows = np.arange(6)
            ls = G.supervised_loss(nn.stack(generated, axis=1)[rows, self.batch.w_f, self.sets.factual_index], self.batch.y)
            return G.generator_gan_loss(discs.position_probs(self.batch.x, pairs), self.sets.position(), ls, 1.0)

        with nn.frozen(*discs.modules()):
            assert max_fd_error(loss, gen.parameters(), samples=8) < 1e-4

    def test_inference_loss(self):
        inet = InferenceNet(4, 2, 8, 1, True, self.rng)
        randomize_biases(inet, self.rng)
        targets = [p[..., 1] for p in self.pairs]
        loss = lambda: G.inference_loss(inet, self.batch.x, self.sets, targets)
        assert max_fd_error(loss, inet.parameters(), samples=10) < 1e-4


class TestConfig:
    def test_defaults(self):
        cfg = G.TrainConfig()
        assert (cfg.n_w, cfg.supervised_weight, cfg.n_d, cfg.n_g) == (5, 1.0, 1, 1)
        assert (cfg.gan_iterations, cfg.inference_iterations, cfg.noise_dim) == (5000, 10000, 16)
        assert (cfg.hidden_units, cfg.inv_eqv_dim, cfg.head_layers, cfg.batch_size) == (64, 16, 2, 128)

    def test_validation(self):
        for bad in ({"n_w": 0}, {"n_d": 0}, {"supervised_weight": -1.0}, {"dosage_levels": 1}):
            with pytest.raises(ValueError):
                G.TrainConfig(**bad)

    def test_variants(self):
        assert G.VARIANTS["baseline"] == G.Variant(False, False, False, False)
        assert G.VARIANTS["scigan"] == G.Variant(True, True, True, True)
        assert not G.VARIANTS["scigan-single"].hierarchical

    def test_scaler_round_trip(self, rng):
        y = rng.normal(5.0, 3.0, size=100)
        s = G.OutcomeScaler.fit(y)
        assert np.max(np.abs(s.inverse(s.transform(y)) - y)) <= 1e-10
        assert G.OutcomeScaler.fit(np.ones(3)).std == 1.0


@pytest.fixture(scope="module")
def toy_run():
    ds, model = toy_dataset(200, 5, 3, noise=0.0, seed=3)
    cfg = G.TrainConfig(gan_iterations=2000, inference_iterations=1500, seed=4, **SMALL)
    gan = G.gan_train(ds, cfg, "scigan")
    inet = G.inference_train(ds, gan, cfg)
    return ds, model, cfg, gan, G.SciganModel(gan, inet)


class TestTraining:
    def test_bit_identical_repeat(self):
        ds, _ = toy_dataset(60, 4, 2)
        cfg = G.TrainConfig(gan_iterations=15, seed=9, **SMALL)
        for variant in ("scigan", "scigan-single", "baseline"):
            a, b = G.gan_train(ds, cfg, variant), G.gan_train(ds, cfg, variant)
            for (_, p), (_, q) in zip(a.generator.named_parameters(), b.generator.named_parameters()):
                assert np.array_equal(p.value, q.value)
            np.testing.assert_equal(a.history, b.history)

    def test_history_rows(self):
        ds, _ = toy_dataset(60, 4, 2)
        gan = G.gan_train(ds, G.TrainConfig(gan_iterations=7, **SMALL), "scigan")
        assert [h["iteration"] for h in gan.history] == list(range(7))
        assert set(gan.history[0]) == {"iteration", "L_S", "L_W", "mean_L_d", "generator_loss"}

    def test_supervised_loss_decreases(self, toy_run):
        hist = toy_run[3].history
        assert np.mean([h["L_S"] for h in hist[1990:2000]]) < np.mean([h["L_S"] for h in hist[:10]])
        assert hist[-1]["L_S"] < hist[0]["L_S"]

    def test_discriminator_not_saturated(self, toy_run):
        ds, _, _, gan, _ = toy_run
        assert G.discriminator_accuracy(gan, ds, np.random.default_rng(0)) < 0.95

    def test_losses_finite_at_init(self):
        ds, _ = toy_dataset(60, 4, 2)
        gan = G.gan_train(ds, G.TrainConfig(gan_iterations=1, **SMALL), "scigan")
        assert all(np.isfinite(v) for v in gan.history[0].values())

    def test_large_weight_drives_factual_error_down(self):
        ds, _ = toy_dataset(64, 4, 2, seed=5)
        X, w, d, y = G._train_arrays(ds)
        scaler = G.OutcomeScaler.fit(y)
        ys = scaler.transform(y)
        rng = np.random.default_rng(0)
        gen = GeneratorNet(4, 2, 3, 16, 1, True, rng)
        discs = G.build_discriminators(4, 2, G.TrainConfig(**SMALL), G.VARIANTS["scigan"], rng)
        opt = nn.AdamState(gen.parameters(), lr=1e-3)
        z = rng.random((len(y), 3))
        batch = G.Batch(X, w, d, ys)
        errors = []
        for _ in range(100):
            sets = G.sample_dosage_sets(rng, w, d, 2, 5)
            with nn.Tape() as tape, nn.frozen(*discs.modules()):
                pairs, generated = G.build_tilde_y(gen, batch, sets, z)
                fact = nn.stack(generated, axis=1)[np.arange(len(y)), w, sets.factual_index]
                ls = G.supervised_loss(fact, ys)
                gl = G.generator_gan_loss(discs.position_probs(X, pairs), sets.position(), ls, 1e4)
            errors.append(float(ls.value))
            nn.adam_step(opt, nn.backward(tape, gl, wrt=gen.parameters()))
        assert np.all(np.diff(errors) < 0)

    def test_empty_training_split(self):
        ds, _ = toy_dataset(20, 3, 2)
        ds.split["train"] = np.array([], dtype=int)
        with pytest.raises(ValueError):
            G.gan_train(ds, G.TrainConfig(gan_iterations=1, **SMALL))

    def test_divergence_reports_diagnostics(self):
        ds, _ = toy_dataset(40, 3, 2)
        ds.y_f[:] = np.nan
        ds.y_f[0] = 1.0
        with pytest.raises(nn.TrainingDivergence) as info:
            G.gan_train(ds, G.TrainConfig(gan_iterations=3, **SMALL))
        assert "iteration" in info.value.diagnostics


class TruthGenerator:
    """Stand-in generator that returns the true response in standardised units."""

    def __init__(self, model, scaler, k):
        self.model, self.scaler, self.k, self.noise_dim = model, scaler, k, 3

    def encode(self, x, w_f, d_f, y_f, z):
        return nn.Var(np.asarray(x))

    def head(self, latent, w, d):
        return nn.Var(self.scaler.transform(sim.true_response(self.model, w, latent.value, d)))


class TestInference:
    def test_distills_a_perfect_generator(self):
        ds, model = toy_dataset(400, 4, 2, noise=0.0, seed=6, shapes=("quadratic", "quadratic"))
        cfg = G.TrainConfig(inference_iterations=3000, hidden_units=32, noise_dim=3, batch_size=64, seed=1)
        scaler = G.OutcomeScaler.fit(ds.y_f[ds.split["train"]])
        gan = G.GanResult(TruthGenerator(model, scaler, 2), G.Discriminators(), scaler, cfg, G.VARIANTS["scigan"], 2)
        inet = G.inference_train(ds, gan, cfg)
        te = ds.split["test"]
        grid = np.linspace(0, 1, 65)
        errs = [np.trapezoid((scaler.inverse(G.infer(inet, ds.X[te], w, grid))
                              - sim.true_response(model, w, ds.X[te], grid[None, :])) ** 2, grid, axis=1).mean()
                for w in range(2)]
        assert np.mean(errs) < 0.05 * model.config.C

    def test_targets_use_factual_outcomes(self):
        ds, model = toy_dataset(30, 4, 2)
        gen = constant_generator(2, 4, 123.0)
        batch = batch_of(ds, 10)
        sets = G.sample_dosage_sets(np.random.default_rng(0), batch.w_f, batch.d_f, 2, 4)
        pairs, _ = G.build_tilde_y(gen, batch, sets, np.zeros((10, 3)))
        targets = np.stack([p.value[..., 1] for p in pairs], axis=1)
        rows = np.arange(10)
        np.testing.assert_array_equal(targets[rows, batch.w_f, sets.factual_index], batch.y)
        assert np.sum(targets == 123.0) == 10 * 2 * 4 - 10

    def test_infer_contract(self, toy_run):
        ds, model, _, _, scigan = toy_run
        inet = scigan.inference
        x = ds.X[:3]
        grid = np.linspace(0, 1, 65)
        out = G.infer(inet, x, 1, grid)
        assert out.shape == (3, 65) and np.all(np.isfinite(out))
        np.testing.assert_array_equal(out, G.infer(inet, x, 1, grid))
        with pytest.raises(ValueError):
            G.infer(inet, x, 0, [1.2])
        with pytest.raises(IndexError):
            G.infer(inet, x, 3, [0.5])

    def test_trained_curves_are_smooth(self, toy_run):
        ds, model, _, _, scigan = toy_run
        curves = np.concatenate([scigan.predict(ds.X, w, np.linspace(0, 1, 65)) for w in range(3)])
        assert np.max(np.abs(np.diff(curves, axis=1))) < 0.5 * model.config.C

    def test_checkpoint_round_trip(self, toy_run, tmp_path):
        ds, _, _, _, scigan = toy_run
        arrays, meta = scigan.checkpoint()
        nn.save_checkpoint(tmp_path / "m.json", arrays, meta)
        back = G.SciganModel.from_checkpoint(*nn.load_checkpoint(tmp_path / "m.json"))
        grid = np.linspace(0, 1, 9)
        for w in range(3):
            np.testing.assert_array_equal(back.predict(ds.X, w, grid), scigan.predict(ds.X, w, grid))

    def test_training_log(self, toy_run, tmp_path):
        G.write_training_log(toy_run[3].history, tmp_path / "log.csv")
        lines = (tmp_path / "log.csv").read_text().splitlines()
        assert lines[0] == "iteration,L_S,L_W,mean_L_d,generator_loss"
        assert len(lines) == 1 + 2000

"""Train the adversarial counterfactual generator and its inference network,
then compare against a multitask MLP and a constant predictor.

Takes under a minute on one core. Run: python demos/04_train_scigan.py
"""

import numpy as np

from scigan import BaselineConfig, ResponseOracle, TrainConfig, baseline_fit, fit_scigan, mise
from scigan import simulate as sim
from scigan.metrics import ConstantModel

rng = np.random.default_rng(3)
X = sim.synth_features(600, 8, rng)
truth = sim.ResponseModel(sim.sample_treatment_params(3, 8, 2, direction="positive"), sim.SimulationConfig(num_treatments=2))
ds = sim.make_dataset(X, truth, truth.config, rng)
oracle, test = ResponseOracle(truth), ds.X[ds.split["test"]]

cfg = TrainConfig(gan_iterations=1000, inference_iterations=1000, learning_rate=3e-4, supervised_weight=5.0, seed=3)
model = fit_scigan(ds, cfg, "scigan", k=2)
last = model.gan.history[-1]
print(f"last GAN iteration: treatment disc loss {last['L_W']:.3f}, supervised loss {last['L_S']:.4f}")

mlp = baseline_fit(ds, "mlp_m", BaselineConfig(seed=3), k=2)
const = ConstantModel(ds.y_f[ds.split["train"]].mean())
for name, m in [("scigan", model), ("mlp_m", mlp), ("constant", const)]:
    print(f"{name:9s} sqrt MISE {np.sqrt(mise(m, oracle, test)):.3f}")

grid = np.linspace(0, 1, 5)
print("true curve     ", np.round(oracle.response(test[:1], 0, grid)[0], 2))
print("predicted curve", np.round(model.predict(test[:1], 0, grid)[0], 2))

"""Semi-synthetic observational data with treatment and dosage selection bias.

Run: python demos/03_simulate_data.py
"""

import numpy as np

from scigan import simulate as sim

rng = np.random.default_rng(2)
X = sim.synth_features(1000, 10, rng)
model = sim.ResponseModel(sim.sample_treatment_params(7, 10, 3, direction="positive"), sim.SimulationConfig(kappa=2.0, alpha=2.0))
ds = sim.make_dataset(X, model, model.config, rng)

print("treatment counts      ", np.bincount(ds.w_f, minlength=3))
print("split sizes           ", {k: len(v) for k, v in ds.split.items()})
for w in range(3):
    d_star = sim.optimal_dosage_closed_form(model, w, X)
    taken = ds.w_f == w
    gap = np.mean(np.abs(ds.d_f[taken] - d_star[taken]))
    print(f"treatment {w} ({model.params[w].shape:10s}) mean |d_f - d*| = {gap:.3f}")

# the closed-form optimum agrees with a brute-force grid
grid = np.linspace(0, 1, 10001)
curve = sim.true_response(model, 0, X[:1], grid[None, :])[0]
print("closed form", float(sim.optimal_dosage_closed_form(model, 0, X[:1])[0]), "grid", grid[np.argmax(curve)])

coarse = sim.discretize_dosages(ds, 5, model)
print("dosages after snapping to 5 levels", np.unique(coarse.d_f))

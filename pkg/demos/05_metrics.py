"""Dose-response metrics and optimal-dosage search.

Run: python demos/05_metrics.py
"""

import numpy as np

from scigan import ResponseOracle, evaluate, find_optimal_dosage
from scigan import simulate as sim

rng = np.random.default_rng(4)
truth = sim.ResponseModel(sim.sample_treatment_params(4, 6, 3), sim.SimulationConfig())
oracle = ResponseOracle(truth)
X = sim.synth_features(50, 6, rng)


class Shifted:
    def predict(self, x, w, d):
        return oracle.response(x, w, d) + 0.5


print("oracle  ", evaluate(oracle, oracle, X).row())
print("shifted ", evaluate(Shifted(), oracle, X).row(), "(MISE = 0.25, policies unchanged)")

print("argmax of 1 - (d - 0.3)^2:", find_optimal_dosage(lambda d: 1 - (d - 0.3) ** 2))
print("argmax of a flat curve:   ", find_optimal_dosage(lambda d: np.zeros_like(d)))

import numpy as np
import pytest

from scigan import nn


def max_fd_error(loss_fn, params, h=1e-5, samples=None, rng=None):
    """Largest relative gap between tape gradients and central differences.

    ``loss_fn`` builds a scalar Var from the current parameter values. With
    ``samples`` set, only that many random coordinates per parameter are probed.
    """
    with nn.Tape() as tape:
        loss = loss_fn()
    grads = nn.backward(tape, loss, wrt=params)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p in params:
        coords = list(np.ndindex(p.shape))
        if samples is not None and len(coords) > samples:
            coords = [coords[i] for i in rng.choice(len(coords), samples, replace=False)]
        for idx in coords:
            old = p.value[idx]
            p.value[idx] = old + h
            up = float(loss_fn().value)
            p.value[idx] = old - h
            down = float(loss_fn().value)
            p.value[idx] = old
            fd = (up - down) / (2 * h)
            an = float(grads[p][idx])
            scale = max(abs(fd), abs(an), 1e-6)
            worst = max(worst, abs(fd - an) / scale)
    return worst

def randomize_biases(module, rng):
    # zero biases can put a relu exactly on its kink, where no derivative exists
    for name, p in module.named_parameters():
        if name.endswith("b"):
            p.value = rng.normal(scale=0.5, size=p.shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

"""Reverse-mode autodiff and Adam: fit a small MLP to a 1-d curve.

Run: python demos/01_autodiff_and_adam.py
"""

import numpy as np

from scigan import nn

rng = np.random.default_rng(0)
x = np.linspace(-1, 1, 64)[:, None]
y = np.sin(3 * x)

# every op recorded inside a Tape can be differentiated afterwards
a = nn.Var(np.array([2.0, -1.0]), requires_grad=True)
with nn.Tape() as tape:
    loss = nn.vsum(nn.square(a) * 3.0)
print("d/da sum(3 a^2) =", nn.backward(tape, loss)[a], "(expected 6a)")

net = nn.MLP([1, 32, 32, 1], "tanh", rng=rng)
opt = nn.AdamState(net.parameters(), lr=1e-2)
for step in range(1, 1501):
    with nn.Tape() as tape:
        loss = nn.vmean(nn.square(net(x) - y))
    nn.adam_step(opt, nn.backward(tape, loss))
    if step % 300 == 0:
        print(f"step {step:4d}  mse {float(loss.value):.5f}")

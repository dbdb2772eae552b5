"""
The tape-based autodiff underneath
==================================

Everything in the model is built from a few dozen numpy ops that record
their own backward rules. Gradients are checked against central differences.
"""

import numpy as np

from anaphor_re import autograd as ag
from anaphor_re.checks import op_checks

rng = np.random.default_rng(0)

# a tiny two-layer net
W1 = ag.Tensor(rng.normal(size=(4, 8)), requires_grad=True)
W2 = ag.Tensor(rng.normal(size=(8, 1)), requires_grad=True)
x = ag.Tensor(rng.normal(size=(5, 4)))

loss = ag.mean(ag.tanh(x @ W1) @ W2)
ag.backward(loss)
print("loss", loss.item())
print("dL/dW2 (first 3):", W2.grad[:3, 0])

# finite differences agree
err = ag.grad_check(lambda w: ag.mean(ag.tanh(x @ w) @ W2), W1.numpy().copy())
print(f"max relative error on W1: {err:.2e}")

# masked softmax gives exact zeros
s = ag.softmax(ag.Tensor([[1.0, -np.inf, 2.0]]), axis=-1)
print("masked softmax:", s.values)

# the full per-op suite (a few seeds here; the CLI runs 20)
for r in op_checks(seeds=3)[:8]:
    print(f"  {r.name:<16} {r.max_error:.1e}")

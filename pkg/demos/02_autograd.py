"""The numpy autodiff tape in five lines, then checked against finite differences."""

import numpy as np

from valet import tensor as T
from valet.tensor import Tape, Tensor, backward

rng = np.random.default_rng(0)

w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
x = Tensor(rng.standard_normal((2, 4)))

with Tape() as tape:
    loss = T.tsum(T.gelu(T.matmul(x, w)))
    backward(loss)

print("loss:", loss.item())
print("dL/dw (tape):\n", w.grad)

# central finite differences, 64-bit
eps = 1e-6
fd = np.zeros_like(w.data)
for i in np.ndindex(w.shape):
    w.data[i] += eps
    up = T.tsum(T.gelu(T.matmul(x, w))).item()
    w.data[i] -= 2 * eps
    dn = T.tsum(T.gelu(T.matmul(x, w))).item()
    w.data[i] += eps
    fd[i] = (up - dn) / (2 * eps)

err = np.linalg.norm(w.grad - fd) / np.linalg.norm(fd)
print(f"relative error vs finite differences: {err:.2e}")

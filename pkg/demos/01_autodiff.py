"""The autodiff engine: build a small graph, backpropagate, check gradients.

    python demos/01_autodiff.py
"""

import numpy as np

from videossl.autodiff import (
    Parameter, Tensor, backward, conv3d, global_avg_pool, grad_check, linear, log, mul, pool3d, relu,
    softmax, sum_all,
)

rng = np.random.default_rng(0)

# a batch of two 3-channel clips, 4 frames of 8x8
x = Tensor(rng.standard_normal((2, 3, 4, 8, 8)))
w1 = Parameter("w1", rng.standard_normal((5, 3, 3, 3, 3)) * 0.2)
b1 = Parameter("b1", np.zeros(5))
w2 = Parameter("w2", rng.standard_normal((4, 5)) * 0.5)
b2 = Parameter("b2", np.zeros(4))
y = np.eye(4)[[0, 3]]


def loss():
    h = pool3d(relu(conv3d(x, w1, b1, padding=1)), "max", (1, 2, 2))
    p = softmax(linear(global_avg_pool(h), w2, b2))
    return sum_all(mul(log(p), -y)) * 0.5


L = loss()
print("loss", L.item())
backward(L)
print("grad shapes", {p.name: p.grad.shape for p in (w1, b1, w2, b2)})

# central differences agree with the analytic gradient
err = grad_check(loss, [w1, b1, w2, b2], max_samples=30)
print(f"max relative error vs finite differences: {err:.2e}")

# the convolution is im2col plus a matrix product; compare one output by hand
out = conv3d(x, w1, b1, padding=1).data
xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
by_hand = (xp[0, :, 0:3, 2:5, 4:7] * w1.data[2]).sum() + b1.data[2]
print("conv output [0, 2, 0, 2, 4]:", out[0, 2, 0, 2, 4], "by hand:", by_hand)

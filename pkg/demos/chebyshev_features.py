"""
Chebyshev features and the ChebyKAN layer
=========================================

A ChebyKAN layer squashes each input with tanh, expands it into
Chebyshev polynomials T_0..T_d evaluated through the angle form
cos(n * arccos(t)), and mixes the expanded channels with a grouped
convolution followed by per-channel standardization.
"""

import numpy as np

from chebyodo import tensor as T
from chebyodo.chebykan import ChebyKANConfig, ChebyKANLayer, cheb_angle, cheb_features
from chebyodo.tensor import Tensor

# The angle form agrees with the three-term recurrence T_{n+1} = 2t T_n - T_{n-1}.
x = np.random.default_rng(0).normal(scale=2.0, size=10_000)
t = np.tanh(x)
rec = [np.ones_like(t), t]
for _ in range(7):
    rec.append(2 * t * rec[-1] - rec[-2])
angle_form = cheb_features(Tensor(x.reshape(1, -1)), 8).data
print("max |angle form - recurrence| over 10^4 scalars, n <= 8:", np.abs(angle_form - np.stack(rec)).max())

# Large inputs saturate tanh; the arccos argument is clamped just inside
# [-1, 1] so the angle (and its gradient) stays finite.
print("angle at x = 0, 1, 30:", cheb_angle(Tensor([0.0, 1.0, 30.0])).data)

# Features are laid out channel-major: channel c owns rows c*(d+1) .. c*(d+1)+d.
feats = cheb_features(Tensor(np.array([[0.3, -0.2], [1.1, 0.7]])), 3).data
print("feature block for a 2-channel, 2-sample input at degree 3:")
print(np.round(feats, 4))

# A layer with 6 inputs, 8 outputs and 2 groups carries an (8, 6*4/2, 3) kernel.
layer = ChebyKANLayer(ChebyKANConfig(6, 8, groups=2, degree=3), np.random.default_rng(1))
print("conv weight shape:", layer.conv_weight.shape)

y = layer(Tensor(np.random.default_rng(2).normal(size=(4, 6, 200))))
print("output shape:", y.shape)
print("per-channel mean / std after standardization:",
      float(np.abs(y.data.mean(axis=-1)).max()), float(y.data.std(axis=-1).mean()))

# Gradients flow through tanh, arccos and the cosine expansion.
loss = T.reduce("mean", T.square(y))
loss.backward()
print("gradient norm of the conv weight:", float(np.linalg.norm(layer.conv_weight.grad)))

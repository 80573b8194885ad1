"""
Kernel attention without an N x N matrix
========================================

Kernel attention replaces softmax(q k^T) with a feature-map product
phi(q) phi(k)^T, whose kernel approximates exp(rho^2 / sigma) where rho
is the Pearson correlation of two rows. Multiplying phi(k)^T v first
keeps the cost linear in the number of tokens N.
"""

import math

import numpy as np

from chebyodo.eksa import complexity_bench, corr_sq, feature_map, kernel_gap, linear_attention
from chebyodo.tensor import Tensor

rng = np.random.default_rng(0)

# The squared correlation ignores scale and offset of either row.
q, k = rng.normal(size=16), rng.normal(size=16)
print("corr_sq(q, k)          =", corr_sq(q, k))
print("corr_sq(-3 q + 7, k)   =", corr_sq(-3 * q + 7, k))

# With one element per row the feature product is a partial sum of e.
print("\nm   phi(q).phi(k)      relative error vs e")
for m in range(0, 10):
    val = float(feature_map(Tensor([[0.7]]), m, 1.0).data[0] @ feature_map(Tensor([[-2.0]]), m, 1.0).data[0])
    print(f"{m:<3} {val:.10f}     {abs(val - math.e) / math.e:.3e}")

# For longer rows the elementwise powers only approximate the exponential kernel.
for length in (4, 16):
    gaps = [kernel_gap(rng.normal(size=length), rng.normal(size=length), 8) for _ in range(200)]
    print(f"\nL = {length:2d}: median |phi.phi - exp(rho^2)| = {np.median(gaps):.3f}, max = {np.max(gaps):.3f}")

# Reassociation is exact up to rounding.
q, k, v = (Tensor(rng.normal(size=(64, 16))) for _ in range(3))
pq, pk = feature_map(q, 2, 1.0), feature_map(k, 2, 1.0)
linear = linear_attention(pq, pk, v, normalize=False).data
quadratic = (pq.data @ pk.data.T) @ v.data
print("\nmax |phi_q (phi_k^T v) - (phi_q phi_k^T) v| =", np.abs(linear - quadratic).max())

# Timing: softmax attention grows quadratically in N, kernel attention linearly.
rows = complexity_bench([128, 256, 512, 1024], seq_len=32, repetitions=5, tokens_per_call=4096)
print("\n   N   softmax us   kernel us")
for n, ts, te in rows:
    print(f"{n:5d} {ts:12.1f} {te:11.1f}")

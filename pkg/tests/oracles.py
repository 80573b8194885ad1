"""Brute-force reference implementations used as test oracles.

Everything here is written with explicit Python loops over scalars so it
shares no code path with the vectorized package implementations.
"""

import math

import numpy as np


def matmul_loop(a, b):
    m, k = a.shape
    k2, p = b.shape
    assert k == k2
    out = np.zeros((m, p))
    for i in range(m):
        for j in range(p):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def conv1d_loop(x, w, stride=1, padding=0, groups=1):
    """Grouped cross-correlation of one (Cin, L) signal, one output at a time."""
    cin, length = x.shape
    cout, cg, k = w.shape
    xp = np.zeros((cin, length + 2 * padding))
    xp[:, padding : padding + length] = x
    lout = (length + 2 * padding - k) // stride + 1
    per_out = cout // groups
    out = np.zeros((cout, lout))
    for o in range(cout):
        g = o // per_out
        for j in range(lout):
            s = 0.0
            for c in range(cg):
                for t in range(k):
                    s += w[o, c, t] * xp[g * cg + c, j * stride + t]
            out[o, j] = s
    return out


def chebyshev_recurrence(t, degree):
    """[T_0(t), ..., T_degree(t)] by T_{n+1} = 2 t T_n - T_{n-1}."""
    vals = [1.0 + 0.0 * t, t]
    for _ in range(2, degree + 1):
        vals.append(2 * t * vals[-1] - vals[-2])
    return vals[: degree + 1]


def pearson_sq(q, k):
    n = len(q)
    mq = sum(q) / n
    mk = sum(k) / n
    sqk = sum((a - mq) * (b - mk) for a, b in zip(q, k))
    sqq = sum((a - mq) ** 2 for a in q)
    skk = sum((b - mk) ** 2 for b in k)
    return sqk * sqk / (sqq * skk)


def softmax_attention_loop(q, k, v, gamma):
    n, length = q.shape
    out = np.zeros_like(v)
    for i in range(n):
        scores = [sum(q[i, t] * k[j, t] for t in range(length)) / math.sqrt(gamma) for j in range(n)]
        top = max(scores)
        weights = [math.exp(s - top) for s in scores]
        z = sum(weights)
        for j in range(n):
            out[i] += weights[j] / z * v[j]
    return out


def ate_loop(pred, gt):
    total = 0.0
    for (px, py), (gx, gy) in zip(pred, gt):
        total += (px - gx) ** 2 + (py - gy) ** 2
    return math.sqrt(total / len(pred))


def rte_loop(pred, gt, n):
    total, count = 0.0, 0
    for i in range(len(pred) - n):
        dx = (pred[i + n][0] - pred[i][0]) - (gt[i + n][0] - gt[i][0])
        dy = (pred[i + n][1] - pred[i][1]) - (gt[i + n][1] - gt[i][1])
        total += dx * dx + dy * dy
        count += 1
    return math.sqrt(total / count)


def pde_loop(pred, gt):
    length = 0.0
    for i in range(1, len(gt)):
        length += math.hypot(gt[i][0] - gt[i - 1][0], gt[i][1] - gt[i - 1][1])
    return math.hypot(pred[-1][0] - gt[-1][0], pred[-1][1] - gt[-1][1]) / length


def mse_loop(pred, target):
    total, count = 0.0, 0
    for p_row, t_row in zip(pred, target):
        for p, t in zip(p_row, t_row):
            total += (p - t) ** 2
            count += 1
    return total / count

"""Kernel-based self-attention with linear cost in the token axis.

Tokens are the rows of an (N, L) feature map: N feature channels, each a
length-L signal. Similarity between two rows is the squared Pearson
correlation, turned into the kernel ``exp(rho^2 / sigma)``. A truncated
Taylor series of that kernel gives an explicit feature map, so attention can
be evaluated as ``phi(q) @ (phi(k).T @ v)`` without ever forming the N x N
matrix.

Feature map of a row ``x`` (``xh`` is ``x`` centred and scaled to unit norm,
powers are elementwise)::

    [1, xh**2 / (sqrt(1!) sigma**(1/2)), xh**4 / (sqrt(2!) sigma**(2/2)), ...,
        xh**(2m) / (sqrt(m!) sigma**(m/2))]

For L == 1 the inner product of two feature rows is exactly the truncated
series of ``exp(rho^2 / sigma)``. For L > 1 elementwise powers make it an
approximation; ``kernel_gap`` measures how far off it is.
"""

from __future__ import annotations

import contextlib
import csv
import ctypes
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .nn import Module, param
from .tensor import Tensor

# Rows whose centred norm is below this fraction of their raw norm count as constant.
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class EksaConfig:
    feature_dim: int = 512
    seq_len: int = 25
    taylor_order: int = 2
    sigma: float = 1.0
    normalize_output: bool = True
    kernel_size: int = 3

    def __post_init__(self):
        if self.sigma <= 0:
            raise ContractError("sigma must be > 0")
        if self.taylor_order < 0:
            raise ContractError("taylor_order must be >= 0")
        if self.feature_dim < 1 or self.seq_len < 1:
            raise ContractError("feature_dim and seq_len must be positive")


def corr_sq(q_row, k_row) -> float:
    """Squared Pearson correlation of two vectors.

    A row with zero variance correlates with nothing (returns 0). Length-1
    rows cannot be centred, so they are compared by sign only (returns 1 for
    two nonzero values).
    """
    q = np.asarray(q_row, dtype=np.float64).reshape(-1)
    k = np.asarray(k_row, dtype=np.float64).reshape(-1)
    if q.shape != k.shape:
        raise ShapeError(f"corr_sq: lengths {q.size} and {k.size} differ")
    if q.size > 1:
        qc, kc = q - q.mean(), k - k.mean()
    else:
        qc, kc = q, k
    nq, nk = np.linalg.norm(qc), np.linalg.norm(kc)
    if nq <= DEGENERATE_RTOL * np.linalg.norm(q) or nk <= DEGENERATE_RTOL * np.linalg.norm(k):
        return 0.0
    rho = float(qc @ kc) / (nq * nk)
    return rho * rho


def _unit_rows(x: Tensor) -> Tensor:
    """Centre each row (when L > 1) and scale it to unit L2 norm; constant rows -> 0."""
    if x.shape[-1] > 1:
        centered = x - T.expand(T.reduce("mean", x, -1), x.shape)
    else:
        centered = x
    norm = T.reduce("l2norm", centered, -1)
    raw = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    degenerate = norm.data <= DEGENERATE_RTOL * raw
    keep = Tensor((~degenerate).astype(np.float64))
    inv = T.div(keep, norm + Tensor(degenerate.astype(np.float64)))
    return centered * T.expand(inv, x.shape)


def taylor_features(xh: Tensor, m: int, sigma: float) -> Tensor:
    """Constant term plus scaled even elementwise powers of already-normalized rows."""
    if m < 0 or sigma <= 0:
        raise ContractError("feature_map needs m >= 0 and sigma > 0")
    ones = Tensor(np.ones(xh.shape[:-1] + (1,)))
    if m == 0:
        return ones
    sq = T.square(xh)
    terms = [ones]
    power = sq
    for n in range(1, m + 1):
        if n > 1:
            power = power * sq
        terms.append(T.scale(power, 1.0 / (math.sqrt(math.factorial(n)) * sigma ** (n / 2))))
    return T.concat(terms, axis=-1)


def feature_map(x: Tensor, m: int, sigma: float) -> Tensor:
    """Truncated Taylor feature map, (..., N, L) -> (..., N, 1 + m * L)."""
    if m < 0 or sigma <= 0:
        raise ContractError("feature_map needs m >= 0 and sigma > 0")
    if m == 0:
        return Tensor(np.ones(x.shape[:-1] + (1,)))
    return taylor_features(_unit_rows(x), m, sigma)


def softmax_attention(q: Tensor, k: Tensor, v: Tensor, gamma: float | None = None) -> Tensor:
    """Reference ``softmax(q k^T / sqrt(gamma)) v`` with rows as tokens; O(N^2 L)."""
    if not (q.shape == k.shape == v.shape):
        raise ShapeError(f"softmax_attention: shapes {q.shape}, {k.shape}, {v.shape} differ")
    gamma = float(q.shape[-1]) if gamma is None else float(gamma)
    scores = T.scale(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(gamma))
    return T.matmul(T.softmax(scores, -1), v)


def linear_attention(phi_q: Tensor, phi_k: Tensor, v: Tensor, normalize: bool) -> Tensor:
    """``phi_q @ (phi_k^T @ v)``, optionally divided row-wise by ``phi_q @ (phi_k^T @ 1)``."""
    kv = T.matmul(T.swapaxes(phi_k, -1, -2), v)
    out = T.matmul(phi_q, kv)
    if normalize:
        ksum = T.swapaxes(T.reduce("sum", phi_k, -2), -1, -2)
        den = T.matmul(phi_q, ksum)
        out = out / T.expand(den, out.shape)
    return out


class Projection(Module):
    """1x1 convolution followed by a depthwise convolution, N -> N channels."""

    def __init__(self, channels: int, kernel_size: int, rng: np.random.Generator):
        self.kernel_size = kernel_size
        self.pointwise = param(rng.normal(0.0, 1.0 / np.sqrt(channels), size=(channels, channels, 1)))
        self.depthwise = param(rng.normal(0.0, 1.0 / np.sqrt(kernel_size), size=(channels, 1, kernel_size)))

    def forward(self, x: Tensor) -> Tensor:
        y = T.conv1d(x, self.pointwise)
        return T.conv1d(y, self.depthwise, padding=self.kernel_size // 2, depthwise=True)

    def set_identity(self) -> None:
        n = self.pointwise.shape[0]
        self.pointwise.data[...] = np.eye(n)[:, :, None]
        self.depthwise.data[...] = 0.0
        self.depthwise.data[:, 0, self.kernel_size // 2] = 1.0


class EksaLayer(Module):
    def __init__(self, config: EksaConfig = EksaConfig(), rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        n = config.feature_dim
        self.q_proj = Projection(n, config.kernel_size, rng)
        self.k_proj = Projection(n, config.kernel_size, rng)
        self.v_proj = Projection(n, config.kernel_size, rng)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.ndim not in (2, 3) or x.shape[-2:] != (cfg.feature_dim, cfg.seq_len):
            raise ShapeError(f"EKSA expects (..., {cfg.feature_dim}, {cfg.seq_len}), got {x.shape}")
        q, k, v = self.q_proj(x), self.k_proj(x), self.v_proj(x)
        phi_q = feature_map(q, cfg.taylor_order, cfg.sigma)
        phi_k = feature_map(k, cfg.taylor_order, cfg.sigma)
        return linear_attention(phi_q, phi_k, v, cfg.normalize_output)


def eksa_forward(layer: EksaLayer, x: Tensor) -> Tensor:
    return layer.forward(x)


def kernel_gap(q: np.ndarray, k: np.ndarray, m: int, sigma: float = 1.0) -> float:
    """Relative gap between the truncated feature inner product and ``exp(rho^2 / sigma)``."""
    phi_q = feature_map(Tensor(np.atleast_2d(q)), m, sigma).data[0]
    phi_k = feature_map(Tensor(np.atleast_2d(k)), m, sigma).data[0]
    exact = math.exp(corr_sq(q, k) / sigma)
    return abs(float(phi_q @ phi_k) - exact) / exact


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------


def _time_once(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def complexity_bench(
    n_grid: Sequence[int],
    seq_len: int = 32,
    repetitions: int = 21,
    taylor_order: int = 2,
    sigma: float = 1.0,
    tokens_per_call: int = 8192,
    seed: int = 0,
) -> list[tuple[int, float, float]]:
    """Median wall-clock time (microseconds) of one attention evaluation, softmax vs. kernel.

    Projections are left out; both paths start from the same q, k, v. Every
    timed call stacks ``tokens_per_call // N`` independent inputs (at least
    one), so each call touches the same number of tokens and the fixed Python
    dispatch cost per call is a constant share at every N. Reported times are
    divided by that stack size. Repetitions sweep the whole grid in turn, so
    a slow spell on a shared machine hits every grid point alike.
    """
    n_grid = list(n_grid)
    if n_grid != sorted(n_grid):
        raise ContractError("n_grid must be sorted ascending")
    rng = np.random.default_rng(seed)
    jobs = []
    for n in n_grid:
        batch = max(1, tokens_per_call // n)
        q, k, v = (Tensor(rng.normal(size=(batch, n, seq_len))) for _ in range(3))

        def run_softmax(q=q, k=k, v=v):
            softmax_attention(q, k, v)

        def run_eksa(q=q, k=k, v=v):
            phi_q = feature_map(q, taylor_order, sigma)
            phi_k = feature_map(k, taylor_order, sigma)
            linear_attention(phi_q, phi_k, v, True)

        jobs.append((n, batch, run_softmax, run_eksa))
    times = {n: ([], []) for n in n_grid}
    with T.no_grad(), _steady_allocator():
        for _, _, run_softmax, run_eksa in jobs:
            for _ in range(3):
                run_softmax()
                run_eksa()
        for _ in range(repetitions):
            for n, _, run_softmax, run_eksa in jobs:
                times[n][0].append(_time_once(run_softmax))
                times[n][1].append(_time_once(run_eksa))
    rows = []
    for n, batch, _, _ in jobs:
        t_soft, t_eksa = (float(np.median(ts)) / batch * 1e6 for ts in times[n])
        rows.append((n, t_soft, t_eksa))
    return rows


@contextlib.contextmanager
def _steady_allocator():
    """Keep large numpy buffers on the glibc heap while timing.

    By default glibc hands blocks above ~32 MB to mmap and returns them on
    free, so every call page-faults them back in; the fault cost then shows up
    as a jump in the timings at whichever N crosses the threshold.
    """
    try:
        libc = ctypes.CDLL("libc.so.6")
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        yield
        return
    m_trim_threshold, m_mmap_max = -1, -4
    mallopt(m_mmap_max, 0)
    mallopt(m_trim_threshold, 1 << 30)
    try:
        yield
    finally:
        mallopt(m_mmap_max, 65536)
        mallopt(m_trim_threshold, 128 * 1024)


def write_bench_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t_softmax_us", "t_eksa_us"])
        for n, ts, te in rows:
            w.writerow([n, f"{ts:.3f}", f"{te:.3f}"])

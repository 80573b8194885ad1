"""Central finite-difference checks for autodiff gradients."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor


@dataclass
class GradCheckResult:
    name: str
    rel_error: float
    coords_checked: int

    def passed(self, tol: float = 1e-4) -> bool:
        return bool(np.isfinite(self.rel_error) and self.rel_error < tol)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)`` over the sampled coordinates.

    A vector norm is used rather than a per-coordinate ratio so that
    coordinates whose true gradient is ~0 do not dominate.
    """
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / den)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[tuple[str, Tensor]],
    n_coords: int = 64,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> list[GradCheckResult]:
    """Compare autodiff gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values each
    call. Up to ``n_coords`` coordinates per parameter are sampled.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for _, p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    results = []
    for name, p in params:
        analytic_full = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        k = min(n_coords, flat.size)
        idx = rng.choice(flat.size, size=k, replace=False)
        numeric = np.empty(k)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            numeric[j] = (fp - fm) / (2 * h)
        analytic = analytic_full.reshape(-1)[idx]
        results.append(GradCheckResult(name, relative_error(analytic, numeric), k))
    for _, p in params:
        p.zero_grad()
    return results


# ---------------------------------------------------------------------------
# suite used by the command line
# ---------------------------------------------------------------------------


@dataclass
class SuiteRow:
    family: str
    result: GradCheckResult
    tol: float

    @property
    def passed(self) -> bool:
        return self.result.passed(self.tol)


@contextlib.contextmanager
def inject_fault(op_name: str, factor: float = 1.5):
    """Temporarily scale the backward rule of ``op_name`` by ``factor``."""
    if op_name not in T.BACKWARD:
        raise ContractError(f"unknown op {op_name!r}; known: {', '.join(sorted(T.BACKWARD))}")
    original = T.BACKWARD[op_name]

    def wrong(ctx, g):
        return tuple(None if d is None else d * factor for d in original(ctx, g))

    T.BACKWARD[op_name] = wrong
    try:
        yield
    finally:
        T.BACKWARD[op_name] = original


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    w = Tensor(rng.normal(size=out.shape))
    return lambda y: T.reduce("sum", y * w)


def _module_case(module, x: np.ndarray, rng: np.random.Generator):
    xt = Tensor(x, requires_grad=True)
    with T.no_grad():
        probe = module(Tensor(x))
    weigh = _weighted_sum(probe, rng)
    return (lambda: weigh(module(xt))), [("input", xt)] + list(module.named_parameters())


def _op_cases(rng: np.random.Generator):
    """(op name, loss_fn, params) for every differentiable primitive."""

    def leaf(*shape, lo=None, hi=None):
        data = rng.normal(size=shape) if lo is None else rng.uniform(lo, hi, size=shape)
        return Tensor(data, requires_grad=True)

    def case(name, fn, *leaves):
        with T.no_grad():
            weigh = _weighted_sum(fn(*leaves), rng)
        return name, (lambda: weigh(fn(*leaves))), [(f"{name}.arg{i}", t) for i, t in enumerate(leaves)]

    yield case("tanh", T.tanh, leaf(3, 5))
    yield case("arccos", T.arccos, leaf(3, 5, lo=-0.9, hi=0.9))
    yield case("cos", T.cos, leaf(3, 5))
    yield case("sin", T.sin, leaf(3, 5))
    yield case("cos_multiples", lambda x: T.cos_multiples(x, 4), leaf(2, 3, 5))
    yield case("exp", T.exp, leaf(3, 5))
    yield case("square", T.square, leaf(3, 5))
    yield case("sqrt", T.sqrt, leaf(3, 5, lo=0.5, hi=2.0))
    yield case("relu", T.relu, leaf(3, 5))
    yield case("neg", T.neg, leaf(3, 5))
    yield case("scale", lambda x: T.scale(x, -2.5), leaf(3, 5))
    yield case("clamp", lambda x: T.clamp(x, -0.5, 0.5), leaf(3, 5))
    yield case("add", T.add, leaf(3, 5), leaf(1, 1))
    yield case("sub", T.sub, leaf(3, 5), leaf(3, 5))
    yield case("mul", T.mul, leaf(3, 5), leaf(1))
    yield case("div", T.div, leaf(3, 5), leaf(3, 5, lo=0.5, hi=2.0))
    yield case("matmul", T.matmul, leaf(2, 3, 4), leaf(4, 5))
    yield case("conv1d", lambda x, w: T.conv1d(x, w, stride=2, padding=1, groups=2), leaf(2, 4, 9), leaf(6, 2, 3))
    yield case("conv1d[depthwise]", lambda x, w: T.conv1d(x, w, padding=1, depthwise=True),
               leaf(2, 4, 9), leaf(4, 1, 3))
    yield case("sum", lambda x: T.reduce("sum", x, 1), leaf(3, 5))
    yield case("mean", lambda x: T.reduce("mean", x, -1), leaf(3, 5))
    yield case("l2norm", lambda x: T.reduce("l2norm", x, -1), leaf(3, 5))
    yield case("reshape", lambda x: T.reshape(x, (5, 3)), leaf(3, 5))
    yield case("swapaxes", lambda x: T.swapaxes(x, 0, 1), leaf(3, 5))
    yield case("expand", lambda x: T.expand(x, (3, 5)), leaf(3, 1))
    yield case("concat", lambda a, b: T.concat([a, b], axis=-1), leaf(3, 2), leaf(3, 4))
    yield case("getitem", lambda x: T.getitem(x, (slice(None), [0, 2, 2])), leaf(3, 5))
    yield case("softmax", lambda x: T.softmax(x, -1), leaf(3, 5))


def layer_cases(rng: np.random.Generator):
    """(family, loss_fn, params) for each layer family on small configs."""
    from .backbone import ResBlock
    from .chebykan import ChebyKANConfig, ChebyKANLayer
    from .eksa import EksaConfig, EksaLayer
    from .model import Head

    yield ("chebykan", *_module_case(ChebyKANLayer(ChebyKANConfig(6, 4, groups=2, degree=3), rng),
                                     rng.normal(size=(2, 6, 16)), rng))
    yield ("resblock", *_module_case(ResBlock(4, 8, 2, 3, 1, 3, rng), rng.normal(size=(2, 4, 16)), rng))
    yield ("resblock[identity]", *_module_case(ResBlock(4, 4, 1, 2, 2, 3, rng), rng.normal(size=(2, 4, 12)), rng))
    for normalize in (True, False):
        layer = EksaLayer(EksaConfig(feature_dim=8, seq_len=6, taylor_order=2, normalize_output=normalize), rng)
        yield (f"eksa[normalize_output={normalize}]", *_module_case(layer, rng.normal(size=(2, 8, 6)), rng))
    yield ("head", *_module_case(Head(16, (8, 4, 2), rng), rng.normal(size=(3, 16)), rng))


def run_suite(n_coords: int = 32, h: float = 1e-5, tol: float = 1e-4, seed: int = 0,
              ops: bool = True, layers: bool = True) -> list[SuiteRow]:
    rng = np.random.default_rng(seed)
    cases = []
    if ops:
        cases += [(f"op:{name}", fn, params) for name, fn, params in _op_cases(rng)]
    if layers:
        cases += list(layer_cases(rng))
    rows = []
    for family, fn, params in cases:
        for res in check_gradients(fn, params, n_coords, h, rng):
            rows.append(SuiteRow(family, res, tol))
    return rows

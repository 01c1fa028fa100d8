"""Modulation-variance optimization and parameter sweeps."""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .channel import ChannelParams
from .keyrate import ProtocolSpec, QuadratureSettings, RateBreakdown, key_rate

__all__ = [
    "FixedKappa",
    "OptimizeKappa",
    "KappaOptimum",
    "AmbiguousOptimumWarning",
    "optimize_kappa",
    "grid_scan",
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "run_sweep",
    "worker_count",
]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class AmbiguousOptimumWarning(UserWarning):
    """The coarse scan found several separated local maxima."""


@dataclass(frozen=True)
class FixedKappa:
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("kappa must be > 0")


@dataclass(frozen=True)
class OptimizeKappa:
    lo: float = 0.1
    hi: float = 3.0
    tol: float = 1e-3

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("need 0 < lo < hi")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class KappaOptimum:
    kappa: float
    rate: float
    boundary: bool
    ambiguous: bool
    breakdown: RateBreakdown
    evaluations: int


def _search_quad(quad: QuadratureSettings, search_nodes: int | None) -> QuadratureSettings:
    nodes = quad.nodes if search_nodes is None else min(quad.nodes, search_nodes)
    return replace(quad, nodes=nodes, check=False)


def grid_scan(eta, delta, protocol: ProtocolSpec, kappas, quad: QuadratureSettings | None = None):
    """Rates at each ``kappa`` (no doubling check)."""
    quad = replace(quad or QuadratureSettings(), check=False)
    return np.array([key_rate(ChannelParams(eta, delta, k), protocol, quad).rate for k in kappas])


def _local_maxima(rates):
    r = np.asarray(rates)
    left = np.concatenate([[-np.inf], r[:-1]])
    right = np.concatenate([r[1:], [-np.inf]])
    peak = (r > left) & (r >= right)
    # a plateau at or below zero (no key anywhere) is not a distinct optimum
    peak &= r > 0
    return np.nonzero(peak)[0]


def optimize_kappa(
    eta: float,
    delta: float,
    protocol: ProtocolSpec,
    bounds: tuple[float, float] = (0.1, 3.0),
    tol: float = 1e-3,
    quad: QuadratureSettings | None = None,
    scan_points: int = 30,
    search_nodes: int | None = 100,
) -> KappaOptimum:
    """Maximize the key rate over the modulation variance.

    A coarse geometric scan brackets the best point, then golden-section
    search narrows the bracket to ``tol``. The returned breakdown is
    re-evaluated at ``quad`` (with its doubling check) at the final kappa.
    ``boundary`` is set when the maximizer sits within ``tol`` of a bound;
    ``ambiguous`` when the scan shows more than one separated local maximum.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    quad = quad or QuadratureSettings()
    sq = _search_quad(quad, search_nodes)
    evals = 0

    def rate(k):
        nonlocal evals
        evals += 1
        return key_rate(ChannelParams(eta, delta, k), protocol, sq).rate

    scan = np.geomspace(lo, hi, max(int(scan_points), 3))
    rates = np.array([rate(k) for k in scan])
    peaks = _local_maxima(rates)
    ambiguous = len(peaks) > 1 and float(np.ptp(scan[peaks])) > tol
    if ambiguous:
        warnings.warn(
            f"key rate has {len(peaks)} local maxima in kappa at eta={eta}, delta={delta}, "
            f"{protocol.label}; returning the largest",
            AmbiguousOptimumWarning,
            stacklevel=2,
        )
    best = int(np.argmax(rates))
    a = scan[max(best - 1, 0)]
    b = scan[min(best + 1, len(scan) - 1)]

    # golden-section search on [a, b]
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = rate(c), rate(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = rate(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = rate(d)
    candidates = [(fc, c), (fd, d), (rates[best], scan[best])]
    k_star = max(candidates, key=lambda t: t[0])[1]
    k_star = float(min(max(k_star, lo), hi))
    boundary = k_star - lo <= tol or hi - k_star <= tol

    breakdown = key_rate(ChannelParams(eta, delta, k_star), protocol, quad)
    evals += 1
    return KappaOptimum(k_star, breakdown.rate, boundary, ambiguous, breakdown, evals)


@dataclass(frozen=True)
class SweepSpec:
    eta_grid: tuple[float, ...]
    delta_list: tuple[float, ...]
    protocols: tuple[ProtocolSpec, ...]
    kappa_policy: FixedKappa | OptimizeKappa = field(default_factory=OptimizeKappa)
    quad: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self):
        for name in ("eta_grid", "delta_list", "protocols"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class SweepRow:
    eta: float
    delta: float
    protocol: ProtocolSpec
    kappa: float
    breakdown: RateBreakdown | None
    boundary: bool = False
    ambiguous: bool = False
    error: str | None = None

    @property
    def rate(self) -> float:
        return self.breakdown.rate if self.breakdown is not None else float("nan")


@dataclass
class SweepResult:
    rows: list[SweepRow]
    metadata: dict


def worker_count() -> int:
    """Workers allowed by ``CVKEY_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("CVKEY_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("CVKEY_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _evaluate_point(eta, delta, protocol, policy, quad) -> SweepRow:
    try:
        if isinstance(policy, FixedKappa):
            bd = key_rate(ChannelParams(eta, delta, policy.value), protocol, quad)
            return SweepRow(eta, delta, protocol, policy.value, bd)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AmbiguousOptimumWarning)
            opt = optimize_kappa(eta, delta, protocol, (policy.lo, policy.hi), policy.tol, quad)
        return SweepRow(eta, delta, protocol, opt.kappa, opt.breakdown, opt.boundary, opt.ambiguous)
    except Exception as exc:  # one bad point must not sink the sweep
        kappa = policy.value if isinstance(policy, FixedKappa) else float("nan")
        bd = getattr(exc, "breakdown", None)
        return SweepRow(eta, delta, protocol, kappa, bd, error=f"{type(exc).__name__}: {exc}")


def run_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Evaluate every (eta, delta, protocol) point, eta-major.

    Rows come back in grid order whatever the number of workers.
    """
    points = [(eta, delta, prot) for eta in spec.eta_grid for delta in spec.delta_list for prot in spec.protocols]
    workers = worker_count() if workers is None else max(int(workers), 1)
    args = [(eta, delta, prot, spec.kappa_policy, spec.quad) for eta, delta, prot in points]
    if workers == 1 or len(points) == 1:
        rows = [_evaluate_point(*a) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: _evaluate_point(*a), args))
    policy = spec.kappa_policy
    metadata = {
        "version": __version__,
        "nodes": spec.quad.nodes,
        "quadrature_tol": spec.quad.tol,
        "kappa_policy": "fixed" if isinstance(policy, FixedKappa) else "optimize",
        "kappa_bounds": None if isinstance(policy, FixedKappa) else [policy.lo, policy.hi],
        "kappa_tol": None if isinstance(policy, FixedKappa) else policy.tol,
    }
    return SweepResult(rows, metadata)

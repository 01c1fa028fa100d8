"""Secret key rate lower bound integrated over all effective binary channels.

The rate is a double integral over the announced moduli ``|alpha_x|`` and
``|beta_x|`` of the per-channel advantage

    dI = 1 - f(e) h(e) - chi

weighted by the announcement densities. With postselection only channels with
``dI > 0`` contribute.

Quadrature: each half-line is truncated where the Gaussian weights are
negligible and integrated with Gauss-Legendre rules. With postselection the
inner ``|beta_x|`` integral is split at the zeros of ``dI`` so that every
panel sees a smooth integrand; the outer ``|alpha_x|`` integral is likewise
split where the retained region opens up.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import eve_info
from .channel import (
    ChannelParams,
    ReducedAnnouncement,
    _channel_info,
    _h2,
    marginal_beta_x,
    prior_alpha_x,
)

__all__ = [
    "Reconciliation",
    "ECKind",
    "ECModel",
    "ProtocolSpec",
    "QuadratureSettings",
    "RateBreakdown",
    "ConvergenceError",
    "CASCADE_TABLE",
    "cascade_fit_coefficients",
    "ec_efficiency",
    "delta_I",
    "key_rate",
    "integration_limits",
]

BETA_SIGMAS = 6.0
# advantages at or below this are treated as no advantage (roundoff floor)
PS_THRESHOLD = 1e-12

# (error rate, efficiency) pairs measured for CASCADE
CASCADE_TABLE = ((0.01, 1.16), (0.05, 1.16), (0.1, 1.22), (0.15, 1.32))


class Reconciliation(enum.Enum):
    DR = "dr"
    RR = "rr"
    TWO_WAY = "2way"


class ECKind(enum.Enum):
    IDEAL = "ideal"
    CASCADE_FIT = "cascade"
    CUSTOM = "custom"


@functools.lru_cache(maxsize=None)
def cascade_fit_coefficients() -> tuple[float, float]:
    """Least-squares line ``f = intercept + slope * e`` through ``CASCADE_TABLE``."""
    e, f = np.array(CASCADE_TABLE).T
    slope, intercept = np.polyfit(e, f, 1)
    return float(intercept), float(slope)


@dataclass(frozen=True)
class ECModel:
    """Error-correction inefficiency ``f(e) >= 1``."""

    kind: ECKind = ECKind.IDEAL
    custom_points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        kind = ECKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ECKind.CUSTOM:
            pts = self.custom_points
            if pts is None or len(pts) < 2:
                raise ValueError("CUSTOM efficiency model needs at least 2 (e, f) points")
            pts = tuple(sorted((float(e), float(f)) for e, f in pts))
            es = [p[0] for p in pts]
            if len(set(es)) != len(es):
                raise ValueError("CUSTOM efficiency points need distinct error rates")
            if any(not math.isfinite(v) for p in pts for v in p):
                raise ValueError("CUSTOM efficiency points must be finite")
            object.__setattr__(self, "custom_points", pts)
        elif self.custom_points is not None:
            raise ValueError(f"custom_points only apply to CUSTOM, not {kind.name}")

    @property
    def label(self) -> str:
        return self.kind.value

    def _evaluate(self, e):
        if self.kind is ECKind.IDEAL:
            return np.ones_like(e)
        if self.kind is ECKind.CASCADE_FIT:
            intercept, slope = cascade_fit_coefficients()
            f = intercept + slope * e
        else:
            pe, pf = np.array(self.custom_points).T
            f = np.interp(e, pe, pf)
            # np.interp holds the end values; continue the end segments instead
            lo = e < pe[0]
            hi = e > pe[-1]
            f = np.where(lo, pf[0] + (e - pe[0]) * (pf[1] - pf[0]) / (pe[1] - pe[0]), f)
            f = np.where(hi, pf[-1] + (e - pe[-1]) * (pf[-1] - pf[-2]) / (pe[-1] - pe[-2]), f)
        return np.maximum(f, 1.0)


def ec_efficiency(e, model: ECModel):
    """Inefficiency factor of the error correction at error rate ``e``."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(~np.isfinite(e_arr)) or np.any(e_arr < 0.0) or np.any(e_arr > 0.5):
        raise ValueError("error rate must lie in [0, 1/2]")
    f = model._evaluate(e_arr)
    return float(f) if f.ndim == 0 else f


@dataclass(frozen=True)
class ProtocolSpec:
    reconciliation: Reconciliation
    postselection: bool = False
    ec_model: ECModel = field(default_factory=ECModel)

    def __post_init__(self):
        object.__setattr__(self, "reconciliation", Reconciliation(self.reconciliation))
        if not isinstance(self.postselection, bool):
            raise TypeError("postselection must be a bool")

    @property
    def label(self) -> str:
        """Short name such as ``rr-ps`` (error correction not included)."""
        return self.reconciliation.value + ("-ps" if self.postselection else "")

    @classmethod
    def from_label(cls, label: str, ec_model: ECModel | None = None) -> "ProtocolSpec":
        name = label.strip().lower()
        ps = name.endswith("-ps")
        if ps:
            name = name[:-3]
        try:
            rec = Reconciliation(name)
        except ValueError:
            raise ValueError(f"unknown protocol {label!r}") from None
        return cls(rec, ps, ec_model if ec_model is not None else ECModel())


@dataclass(frozen=True)
class QuadratureSettings:
    """Node count per panel and the doubling-test tolerance.

    ``check=False`` skips the doubling test (used inside optimizers).
    """

    nodes: int = 200
    tol: float = 1e-6
    check: bool = True
    bisect_steps: int = 60

    def __post_init__(self):
        if int(self.nodes) < 2:
            raise ValueError("need at least 2 quadrature nodes")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class RateBreakdown:
    """Key rate and its parts, all in bits per signal.

    ``rate == mutual_info - ec_penalty - eve_info`` where every term is
    integrated over the retained channels only.
    """

    rate: float
    mutual_info: float
    eve_info: float
    ec_penalty: float
    ps_survival: float
    quadrature_error_estimate: float
    nodes: int

    def as_dict(self) -> dict:
        return {
            "rate": self.rate,
            "mutual_info": self.mutual_info,
            "eve_info": self.eve_info,
            "ec_penalty": self.ec_penalty,
            "ps_survival": self.ps_survival,
            "quadrature_error_estimate": self.quadrature_error_estimate,
            "nodes": self.nodes,
        }


class ConvergenceError(RuntimeError):
    """Doubling the node count moved the rate by more than the tolerance."""

    def __init__(self, message: str, breakdown: RateBreakdown):
        super().__init__(message)
        self.breakdown = breakdown


def _chi(info, rec: Reconciliation):
    args = (
        np.asarray(info.error_rate),
        np.asarray(info.c0_sq),
        np.asarray(info.c1_sq),
        np.asarray(info.cp_sq),
        np.asarray(info.cm_sq),
    )
    if rec is Reconciliation.DR:
        return eve_info._chi_dr(*args)
    if rec is Reconciliation.RR:
        return eve_info._chi_rr(*args)
    return eve_info._chi_2way(*args)


def _terms(a, b, params: ChannelParams, spec: ProtocolSpec):
    """Per-node (shannon, penalty, chi) with dI = shannon - penalty - chi."""
    info = _channel_info(a, b, params)
    e = np.asarray(info.error_rate)
    h = _h2(e)
    f = spec.ec_model._evaluate(e)
    return 1.0 - h, (f - 1.0) * h, _chi(info, spec.reconciliation)


def _advantage(a, b, params, spec):
    shannon, penalty, chi = _terms(a, b, params, spec)
    return shannon - penalty - chi


def delta_I(ann: ReducedAnnouncement, params: ChannelParams, spec: ProtocolSpec):
    """Advantage of Alice and Bob over Eve on one effective binary channel."""
    a = np.asarray(ann.alpha_x_abs, dtype=float)
    b = np.asarray(ann.beta_x_abs, dtype=float)
    d = _advantage(a, b, params, spec)
    return float(d) if np.ndim(d) == 0 else d


def integration_limits(params: ChannelParams) -> tuple[float, float]:
    """Global truncation points for ``|alpha_x|`` and ``|beta_x|``."""
    rk = math.sqrt(params.kappa)
    a_max = rk * (6.0 + 6.0 * rk)
    return a_max, float(beta_limit(a_max, params))


def beta_limit(alpha_x_abs, params: ChannelParams):
    """Upper ``|beta_x|`` cut for a given ``|alpha_x|``: mean plus ``BETA_SIGMAS`` deviations."""
    sigma = math.sqrt((2.0 + params.delta) / 4.0)
    return math.sqrt(params.eta) * np.asarray(alpha_x_abs, dtype=float) + BETA_SIGMAS * sigma


@functools.lru_cache(maxsize=32)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _panel_nodes(lo, hi, n):
    """Nodes/weights for GL rules on panels ``[lo, hi]`` (arrays of shape (m,))."""
    x, w = _gauss_legendre(n)
    half = 0.5 * (np.asarray(hi) - np.asarray(lo))
    mid = 0.5 * (np.asarray(hi) + np.asarray(lo))
    return mid[..., None] + half[..., None] * x, half[..., None] * w


def _bisect(fn, lo, hi, f_lo, steps):
    """Vectorized bisection; ``f_lo`` and ``fn(hi)`` have opposite signs."""
    lo = lo.copy()
    hi = hi.copy()
    pos_lo = f_lo > 0.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        pos_mid = fn(mid) > 0.0
        same = pos_mid == pos_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _inner_panels(a, b_max, params, spec, n, steps):
    """Break ``[0, b_max[i]]`` at the sign changes of dI for each outer node ``a[i]``.

    Sign changes are located on the ``n``-point GL probe grid and refined by
    bisection. Returns flat arrays (owner index, lo, hi) of the retained panels.
    """
    x, _ = _gauss_legendre(n)
    unit = np.concatenate([[0.0], 0.5 * (x + 1.0), [1.0]])
    probe = b_max[:, None] * unit[None, :]
    aa = np.broadcast_to(a[:, None], probe.shape)
    d = _advantage(aa, probe, params, spec)
    pos = d > PS_THRESHOLD
    change = pos[:, 1:] != pos[:, :-1]
    rows, cols = np.nonzero(change)
    roots = _bisect(
        lambda bb: _advantage(a[rows], bb, params, spec),
        probe[rows, cols],
        probe[rows, cols + 1],
        d[rows, cols],
        steps,
    )
    idx = np.arange(len(a))
    keys = np.concatenate([idx, rows, idx])
    vals = np.concatenate([np.zeros(len(a)), roots, b_max])
    order = np.lexsort((vals, keys))
    keys, vals = keys[order], vals[order]
    same = keys[1:] == keys[:-1]
    owner, lo, hi = keys[:-1][same], vals[:-1][same], vals[1:][same]
    keep = hi > lo
    owner, lo, hi = owner[keep], lo[keep], hi[keep]
    mid_d = _advantage(a[owner], 0.5 * (lo + hi), params, spec)
    keep = mid_d > PS_THRESHOLD
    return owner[keep], lo[keep], hi[keep]


def _has_advantage(a, params, spec, unit):
    """Whether dI > threshold anywhere on the probe grid ``unit * b_max(a)``."""
    probe = beta_limit(a, params)[:, None] * unit[None, :]
    aa = np.broadcast_to(a[:, None], probe.shape)
    return np.any(_advantage(aa, probe, params, spec) > PS_THRESHOLD, axis=1)


def _outer_panels(a_max, params, spec, n, steps):
    """Split ``[0, a_max]`` where the set of retained channels opens or closes.

    Returns (lo, hi) arrays of the outer panels that carry retained channels.
    """
    x, _ = _gauss_legendre(n)
    unit = np.concatenate([[0.0], 0.5 * (x + 1.0), [1.0]])
    grid = np.concatenate([[0.0], 0.5 * a_max * (x + 1.0), [a_max]])
    flag = _has_advantage(grid, params, spec, unit)
    idx = np.nonzero(flag[1:] != flag[:-1])[0]
    lo, hi = grid[idx].copy(), grid[idx + 1].copy()
    f_lo = flag[idx]
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        same = _has_advantage(mid, params, spec, unit) == f_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    edges = np.concatenate([[0.0], 0.5 * (lo + hi), [a_max]])
    # a panel is live if the grid flagged any point inside it
    live = np.array([bool(np.any(flag[(grid >= l) & (grid <= h)])) for l, h in zip(edges[:-1], edges[1:])])
    live &= edges[1:] > edges[:-1]
    return edges[:-1][live], edges[1:][live]


def _integrate(params: ChannelParams, spec: ProtocolSpec, n_outer: int, n_inner: int, steps: int):
    """Returns (rate, shannon, penalty, chi, survival)."""
    a_max, _ = integration_limits(params)
    if spec.postselection:
        a_lo, a_hi = _outer_panels(a_max, params, spec, n_outer, steps)
    else:
        a_lo, a_hi = np.array([0.0]), np.array([a_max])
    a, wa = _panel_nodes(a_lo, a_hi, n_outer)
    a, wa = a.ravel(), wa.ravel()
    wa = wa * prior_alpha_x(a, params)
    b_max = beta_limit(a, params)

    if spec.postselection:
        owner, lo, hi = _inner_panels(a, b_max, params, spec, n_inner, steps)
    else:
        owner, lo, hi = np.arange(len(a)), np.zeros(len(a)), b_max
    b, wb = _panel_nodes(lo, hi, n_inner)
    aa = np.broadcast_to(a[owner][:, None], b.shape)
    w = wa[owner][:, None] * wb * marginal_beta_x(b, aa, params)
    shannon, penalty, chi = _terms(aa, b, params, spec)
    # fixed-shape numpy sums are pairwise, so the result is reproducible
    i_ab, pen, eve, surv = (float(np.sum(w * t)) for t in (shannon, penalty, chi, np.ones_like(w)))
    if not spec.postselection:
        surv = 1.0
    return i_ab - pen - eve, i_ab, pen, eve, surv


def key_rate(
    params: ChannelParams,
    spec: ProtocolSpec,
    quad: QuadratureSettings | None = None,
) -> RateBreakdown:
    """Integrate the per-channel advantage over all announcements.

    With ``quad.check`` the integral is repeated at twice the node count and
    ``ConvergenceError`` is raised if the rate moves by more than ``quad.tol``.
    The reported values are those at ``quad.nodes``.
    """
    quad = quad or QuadratureSettings()
    n = int(quad.nodes)
    rate, i_ab, pen, eve, surv = _integrate(params, spec, n, n, quad.bisect_steps)
    err = float("nan")
    if quad.check:
        rate2 = _integrate(params, spec, 2 * n, 2 * n, quad.bisect_steps)[0]
        err = abs(rate2 - rate)
    out = RateBreakdown(
        rate=rate,
        mutual_info=i_ab,
        eve_info=eve,
        ec_penalty=pen,
        ps_survival=min(max(surv, 0.0), 1.0),
        quadrature_error_estimate=err,
        nodes=n,
    )
    if quad.check and not err <= quad.tol:
        raise ConvergenceError(
            f"rate moved by {err:.3g} when doubling {n} nodes (tolerance {quad.tol:g})", out
        )
    return out

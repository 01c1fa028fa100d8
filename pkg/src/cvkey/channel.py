"""Classical statistics of the Gaussian-modulated coherent-state protocol.

Alice draws a complex amplitude with per-quadrature variance ``kappa``, Bob
heterodynes the state after a lossy channel of transmittivity ``eta`` that adds
excess noise ``delta``. Both parties announce ``|x|`` and the imaginary part of
their amplitudes; the imaginary parts drop out of every rate-relevant quantity,
so everything here is expressed over the half-line variables ``|alpha_x|`` and
``|beta_x|``.

All functions broadcast over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

__all__ = [
    "ChannelParams",
    "ReducedAnnouncement",
    "BinaryChannelInfo",
    "prior_alpha_x",
    "marginal_beta_x",
    "error_rate",
    "binary_entropy",
    "binary_channel_info",
    "squeezing_from_noise",
    "noise_from_squeezing",
    "separability_guard",
]

# Rounding slack accepted on probabilities before rejecting them.
PROB_TOL = 1e-12

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class ChannelParams:
    """Transmittivity, excess noise and modulation variance.

    Out-of-range values raise ``ValueError``; nothing is clamped.
    """

    eta: float
    delta: float
    kappa: float

    def __post_init__(self):
        for name in ("eta", "delta", "kappa"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise TypeError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    def with_kappa(self, kappa: float) -> "ChannelParams":
        return ChannelParams(self.eta, self.delta, kappa)


@dataclass(frozen=True)
class ReducedAnnouncement:
    """Announced moduli ``(|alpha_x|, |beta_x|)`` of one effective binary channel.

    Fields may be scalars or broadcastable arrays.
    """

    alpha_x_abs: float | np.ndarray
    beta_x_abs: float | np.ndarray

    def __post_init__(self):
        for name in ("alpha_x_abs", "beta_x_abs"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} must be finite")
            if np.any(value < 0.0):
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class BinaryChannelInfo:
    """Per-channel error rate, Eve's state overlaps and basis coefficients.

    ``c0_sq``/``c1_sq`` expand Eve's bit-conditioned states and ``cp_sq``/``cm_sq``
    her sign-conditioned ones; ``c0_sq - c1_sq == overlap_A`` and
    ``cp_sq - cm_sq == overlap_B``.
    """

    error_rate: float | np.ndarray
    overlap_A: float | np.ndarray
    overlap_B: float | np.ndarray
    c0_sq: float | np.ndarray
    c1_sq: float | np.ndarray
    cp_sq: float | np.ndarray
    cm_sq: float | np.ndarray

    @classmethod
    def from_overlaps(cls, A, B, e) -> "BinaryChannelInfo":
        """Build the record straight from ``(A, B, e)``.

        Useful when the overlaps are sampled directly rather than derived from
        an announcement.
        """
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        e = np.asarray(e, dtype=float)
        if np.any((A <= 0.0) | (A > 1.0)) or np.any((B <= 0.0) | (B > 1.0)):
            raise ValueError("overlaps must lie in (0, 1]")
        if np.any((e < 0.0) | (e > 0.5)):
            raise ValueError("error rate must lie in [0, 1/2]")
        return cls._build(e, A, 1.0 - A, B, 1.0 - B)

    @classmethod
    def _build(cls, e, A, one_minus_A, B, one_minus_B):
        return cls(
            error_rate=_unwrap(e),
            overlap_A=_unwrap(A),
            overlap_B=_unwrap(B),
            c0_sq=_unwrap(0.5 * (1.0 + A)),
            c1_sq=_unwrap(0.5 * one_minus_A),
            cp_sq=_unwrap(0.5 * (1.0 + B)),
            cm_sq=_unwrap(0.5 * one_minus_B),
        )


def _unwrap(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def prior_alpha_x(alpha_x_abs, params: ChannelParams):
    """Density of Alice announcing ``|alpha_x|`` on ``[0, inf)``."""
    a = np.asarray(alpha_x_abs, dtype=float)
    if np.any(a < 0.0):
        raise ValueError("alpha_x_abs must be >= 0")
    k = params.kappa
    return _unwrap(math.sqrt(2.0 / (math.pi * k)) * np.exp(-a * a / (2.0 * k)))


def marginal_beta_x(beta_x_abs, alpha_x_abs, params: ChannelParams):
    """Density of Bob announcing ``|beta_x|`` given Alice announced ``|alpha_x|``."""
    b = np.asarray(beta_x_abs, dtype=float)
    a = np.asarray(alpha_x_abs, dtype=float)
    if np.any(a < 0.0) or np.any(b < 0.0):
        raise ValueError("amplitudes must be >= 0")
    width = 2.0 + params.delta
    shift = math.sqrt(params.eta) * a
    norm = math.sqrt(2.0 / (math.pi * width))
    return _unwrap(norm * (np.exp(-2.0 * (b + shift) ** 2 / width) + np.exp(-2.0 * (b - shift) ** 2 / width)))


def _error_rate(a, b, params: ChannelParams):
    t = 8.0 * math.sqrt(params.eta) * a * b / (2.0 + params.delta)
    # expit(-t) == 1 / (1 + exp(t)) without overflow for large t
    return expit(-t)


def error_rate(ann: ReducedAnnouncement, params: ChannelParams):
    """Bit-flip probability of the effective binary channel labelled by ``ann``."""
    a = np.asarray(ann.alpha_x_abs, dtype=float)
    b = np.asarray(ann.beta_x_abs, dtype=float)
    return _unwrap(_error_rate(a, b, params))


def binary_entropy(e):
    """Shannon entropy in bits of a binary symmetric channel with flip rate ``e``.

    Values within ``PROB_TOL`` outside ``[0, 1]`` are clamped; anything farther
    out raises ``ValueError``.
    """
    p = np.asarray(e, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < -PROB_TOL) or np.any(p > 1.0 + PROB_TOL):
        raise ValueError("binary_entropy needs probabilities in [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    return _unwrap(_h2(p))


def _h2(p):
    return -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / _LN2


def _overlap_exponents(a, b, params: ChannelParams):
    kA = 1.0 - params.eta / (1.0 + params.delta)
    kB = params.delta / (1.0 + params.delta)
    return -a * a * kA, -b * b * kB


def binary_channel_info(ann: ReducedAnnouncement, params: ChannelParams) -> BinaryChannelInfo:
    """Error rate, overlaps and coefficient moduli for one announcement.

    ``1 - A`` and ``1 - B`` go through ``expm1`` so the small coefficients stay
    accurate when the overlaps approach one.
    """
    a = np.asarray(ann.alpha_x_abs, dtype=float)
    b = np.asarray(ann.beta_x_abs, dtype=float)
    return _channel_info(a, b, params)


def _channel_info(a, b, params: ChannelParams) -> BinaryChannelInfo:
    xa, xb = _overlap_exponents(a, b, params)
    return BinaryChannelInfo._build(
        _error_rate(a, b, params), np.exp(xa), -np.expm1(xa), np.exp(xb), -np.expm1(xb)
    )


def squeezing_from_noise(delta: float, eta: float) -> float:
    """Two-mode squeezing ``r`` of an entangling cloner that produces ``delta``.

    Inverts ``delta = 2 sinh(r)**2 (1 - eta)``.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if delta == 0.0:
        return 0.0
    if eta == 1.0:
        raise ValueError("a transparent channel (eta=1) cannot carry excess noise")
    return math.asinh(math.sqrt(delta / (2.0 * (1.0 - eta))))


def noise_from_squeezing(r: float, eta: float) -> float:
    return 2.0 * math.sinh(r) ** 2 * (1.0 - eta)


def separability_guard(params: ChannelParams) -> bool:
    """True when ``delta < 2 eta``, i.e. the correlations can still be entangled."""
    return params.delta < 2.0 * params.eta

"""Closed-form entropies of Eve's conditional states and her Holevo bounds.

Eve's four pure states factor as ``|e_i>|e_k>`` with ``<e_0|e_1> = A`` and
``<e_+|e_-> = B``, so every spectrum needed here reduces to 2x2 blocks. For a
block with diagonal ``(x, y)`` and off-diagonal ``(1 - 2e) sqrt(x y)`` the
eigenvalues are

    lam = (x + y)/2 +- sqrt((x - y)**2 + 4 x y (1 - 2e)**2) / 2

and the smaller one is recovered as ``4 e (1 - e) x y / lam_big`` to avoid
cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .channel import BinaryChannelInfo

__all__ = [
    "ConsistencyError",
    "EveSpectra",
    "HolevoBounds",
    "spectrum_full",
    "spectrum_dr",
    "spectrum_rr",
    "spectrum_2way",
    "spectra",
    "entropy",
    "chi_dr",
    "chi_rr",
    "chi_2way",
    "holevo_bounds",
]

EIG_TOL = 1e-12
SUM_TOL = 1e-8

_LN2 = math.log(2.0)


class ConsistencyError(ArithmeticError):
    """An eigenvalue left [0, 1] by more than rounding allows."""


@dataclass(frozen=True)
class EveSpectra:
    """Eigenvalue sets, each stacked along the last axis."""

    lambda_full: np.ndarray
    lambda_dr: np.ndarray
    lambda_rr: np.ndarray
    lambda_2way: np.ndarray


@dataclass(frozen=True)
class HolevoBounds:
    chi_dr: float | np.ndarray
    chi_rr: float | np.ndarray
    chi_2way: float | np.ndarray


def _arrays(info: BinaryChannelInfo):
    return tuple(
        np.asarray(v, dtype=float)
        for v in (info.error_rate, info.c0_sq, info.c1_sq, info.cp_sq, info.cm_sq)
    )


def _clamp(lam):
    if np.any(lam < -EIG_TOL) or np.any(lam > 1.0 + EIG_TOL) or np.any(np.isnan(lam)):
        raise ConsistencyError("eigenvalue outside [0, 1] beyond rounding tolerance")
    return np.clip(lam, 0.0, 1.0)


def _block_pair(x, y, e):
    """Eigenvalues (big, small) of [[x, g], [g, y]] with g**2 = (1-2e)**2 x y."""
    s = x + y
    root = np.sqrt((x - y) ** 2 + 4.0 * x * y * (1.0 - 2.0 * e) ** 2)
    big = 0.5 * (s + root)
    with np.errstate(invalid="ignore", divide="ignore"):
        small = np.where(big > 0.0, 4.0 * e * (1.0 - e) * x * y / big, 0.0)
    return big, small


def _full(e, c0, c1, cp, cm):
    l1, l2 = _block_pair(c0 * cm, c1 * cp, e)
    l3, l4 = _block_pair(c0 * cp, c1 * cm, e)
    return np.stack([l1, l2, l3, l4], axis=-1)


def _two_level(e, u, v):
    # u + v == 1; product u v is the only input
    big, small = _block_pair(u, v, e)
    return np.stack([big, small], axis=-1)


def spectrum_full(info: BinaryChannelInfo) -> np.ndarray:
    """Four eigenvalues of Eve's state averaged over bit and sign."""
    return _clamp(_full(*_arrays(info)))


def spectrum_dr(info: BinaryChannelInfo) -> np.ndarray:
    """Nontrivial eigenvalues of Eve's state conditioned on Alice's bit.

    The full spectrum is ``{1, 0}`` tensor these two values.
    """
    e, _, _, cp, cm = _arrays(info)
    return _clamp(_two_level(e, cp, cm))


def spectrum_rr(info: BinaryChannelInfo) -> np.ndarray:
    """Nontrivial eigenvalues of Eve's state conditioned on Bob's sign."""
    e, c0, c1, _, _ = _arrays(info)
    return _clamp(_two_level(e, c0, c1))


def spectrum_2way(info: BinaryChannelInfo) -> np.ndarray:
    """Eigenvalues of Eve's state once the error position is public."""
    _, c0, c1, cp, cm = _arrays(info)
    return _clamp(np.stack([c0 * cm + c1 * cp, c0 * cp + c1 * cm], axis=-1))


def spectra(info: BinaryChannelInfo) -> EveSpectra:
    return EveSpectra(
        lambda_full=spectrum_full(info),
        lambda_dr=spectrum_dr(info),
        lambda_rr=spectrum_rr(info),
        lambda_2way=spectrum_2way(info),
    )


def _entropy(lam):
    return -np.sum(xlogy(lam, lam), axis=-1) / _LN2


def entropy(eigenvalues) -> float | np.ndarray:
    """Von Neumann entropy in bits of a spectrum given along the last axis.

    Raises ``ValueError`` if a set does not sum to one within ``SUM_TOL``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(np.abs(lam.sum(axis=-1) - 1.0) > SUM_TOL):
        raise ValueError("eigenvalues must sum to 1")
    return _scalar(_entropy(_clamp(lam)))


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _chi_dr(e, c0, c1, cp, cm, s_full=None):
    if s_full is None:
        s_full = _entropy(_clamp(_full(e, c0, c1, cp, cm)))
    return s_full - _entropy(_clamp(_two_level(e, cp, cm)))


def _chi_rr(e, c0, c1, cp, cm, s_full=None):
    if s_full is None:
        s_full = _entropy(_clamp(_full(e, c0, c1, cp, cm)))
    return s_full - _entropy(_clamp(_two_level(e, c0, c1)))


def _chi_2way(e, c0, c1, cp, cm):
    return _entropy(_clamp(np.stack([c0 * cm + c1 * cp, c0 * cp + c1 * cm], axis=-1)))


def chi_dr(info: BinaryChannelInfo):
    """Holevo bound on Eve's knowledge of Alice's bit."""
    return _scalar(_chi_dr(*_arrays(info)))


def chi_rr(info: BinaryChannelInfo):
    """Holevo bound on Eve's knowledge of Bob's sign bit."""
    return _scalar(_chi_rr(*_arrays(info)))


def chi_2way(info: BinaryChannelInfo):
    """Eve's bound when error positions are revealed by interactive correction."""
    return _scalar(_chi_2way(*_arrays(info)))


def holevo_bounds(info: BinaryChannelInfo) -> HolevoBounds:
    args = _arrays(info)
    s_full = _entropy(_clamp(_full(*args)))
    return HolevoBounds(
        chi_dr=_scalar(_chi_dr(*args, s_full=s_full)),
        chi_rr=_scalar(_chi_rr(*args, s_full=s_full)),
        chi_2way=_scalar(_chi_2way(*args)),
    )

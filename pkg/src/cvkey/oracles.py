"""Brute-force cross-checks for the closed forms in ``channel`` and ``eve_info``.

Nothing in this module imports ``eve_info``: the Gram oracle diagonalizes the
mixtures numerically, and the Monte-Carlo sampler simulates the prepare and
measure protocol directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams

__all__ = [
    "EigensolverError",
    "GramSpectra",
    "jacobi_eigvalsh",
    "gram_eigen_oracle",
    "McConfig",
    "McResult",
    "mc_sample_run",
]

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 50


class EigensolverError(RuntimeError):
    pass


def jacobi_eigvalsh(mats, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues of a stack of real symmetric matrices by cyclic Jacobi rotations.

    Works on shape ``(..., n, n)`` and returns ascending eigenvalues of shape
    ``(..., n)``. Sweeps stop once every off-diagonal entry is below ``tol``
    times the Frobenius norm.
    """
    a = np.array(mats, dtype=float, copy=True)
    n = a.shape[-1]
    batch = a.shape[:-2]
    a = a.reshape((-1, n, n))
    scale = np.maximum(np.sqrt(np.sum(a * a, axis=(1, 2))), np.finfo(float).tiny)
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.max(np.abs(a[:, off_mask]), axis=1) if n > 1 else np.zeros(len(a))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = np.abs(apq) > 0.0
                if not np.any(active):
                    continue
                app = a[:, p, p]
                aqq = a[:, q, q]
                with np.errstate(divide="ignore", invalid="ignore"):
                    tau = np.where(active, (aqq - app) / (2.0 * apq), 0.0)
                t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (p, q) plane rotation
                ap = a[:, :, p].copy()
                aq = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * ap - s[:, None] * aq
                a[:, :, q] = s[:, None] * ap + c[:, None] * aq
                rp = a[:, p, :].copy()
                rq = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * rp - s[:, None] * rq
                a[:, q, :] = s[:, None] * rp + c[:, None] * rq
    else:
        raise EigensolverError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    eig = np.sort(np.diagonal(a, axis1=1, axis2=2), axis=1)
    return eig.reshape(batch + (n,))


@dataclass(frozen=True)
class GramSpectra:
    """Numerical spectra, each sorted descending along the last axis."""

    full: np.ndarray
    dr: np.ndarray
    rr: np.ndarray
    two_way: np.ndarray


def _mixture_spectrum(gram, weights):
    # nonzero spectrum of sum_i w_i |v_i><v_i| equals that of sqrt(W) G sqrt(W)
    root = np.sqrt(weights)
    m = root[..., :, None] * gram * root[..., None, :]
    return jacobi_eigvalsh(m)[..., ::-1]


def _pair_gram(overlap):
    one = np.ones_like(overlap)
    return np.stack([np.stack([one, overlap], -1), np.stack([overlap, one], -1)], -2)


def gram_eigen_oracle(A, B, e) -> GramSpectra:
    """Spectra of Eve's mixtures from the overlap matrix of her four pure states.

    States are ordered ``(0+, 0-, 1+, 1-)``; the Gram matrix is
    ``[[1, A], [A, 1]] kron [[1, B], [B, 1]]``. Inputs broadcast.
    """
    A, B, e = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (A, B, e)))
    if np.any((A <= 0) | (A > 1)) or np.any((B <= 0) | (B > 1)) or np.any((e < 0) | (e > 0.5)):
        raise ValueError("need A, B in (0, 1] and e in [0, 1/2]")
    ga = _pair_gram(A)
    gb = _pair_gram(B)
    gram = np.einsum("...ij,...kl->...ikjl", ga, gb).reshape(A.shape + (4, 4))
    w_full = 0.5 * np.stack([1 - e, e, e, 1 - e], axis=-1)
    w_pair = np.stack([1 - e, e], axis=-1)
    half = np.full(A.shape + (2,), 0.5)
    return GramSpectra(
        full=_mixture_spectrum(gram, w_full),
        # bit 0: states (0+, 0-) overlap B
        dr=_mixture_spectrum(gb, w_pair),
        # sign +: states (0+, 1+) overlap A
        rr=_mixture_spectrum(ga, w_pair),
        # no error: states (0+, 1-) overlap A*B
        two_way=_mixture_spectrum(_pair_gram(A * B), half),
    )


@dataclass(frozen=True)
class McConfig:
    """Monte-Carlo settings; identical config gives identical counts."""

    sample_count: int
    rng_seed: int = 0
    alpha_edges: tuple = tuple(np.linspace(0.0, 3.0, 7))
    beta_edges: tuple = tuple(np.linspace(0.0, 3.0, 7))
    chunk_size: int = 1 << 18

    def __post_init__(self):
        if int(self.sample_count) < 1:
            raise ValueError("sample_count must be >= 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        for name in ("alpha_edges", "beta_edges"):
            edges = np.asarray(getattr(self, name), dtype=float)
            if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
                raise ValueError(f"{name} must be increasing, nonnegative, with >= 2 entries")
            object.__setattr__(self, name, tuple(float(x) for x in edges))


@dataclass
class McResult:
    counts: np.ndarray
    errors: np.ndarray
    beta_hist: np.ndarray
    total: int
    alpha_edges: np.ndarray
    beta_edges: np.ndarray
    error_freq: np.ndarray = field(init=False)
    std_error: np.ndarray = field(init=False)
    mutual_info: float = field(init=False)

    def __post_init__(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            self.error_freq = np.where(self.counts > 0, self.errors / self.counts, np.nan)
            p = self.error_freq
            self.std_error = np.where(self.counts > 0, np.sqrt(p * (1 - p) / self.counts), np.nan)
        # plug-in estimate: each bin treated as one binary symmetric channel
        p = np.where(self.counts > 0, self.error_freq, 0.5)
        h = np.zeros_like(p)
        inside = (p > 0) & (p < 1)
        h[inside] = -(p[inside] * np.log2(p[inside]) + (1 - p[inside]) * np.log2(1 - p[inside]))
        self.mutual_info = float(np.sum(self.counts * (1.0 - h)) / self.total)


def mc_sample_run(params: ChannelParams, cfg: McConfig) -> McResult:
    """Simulate Gaussian modulation, the noisy lossy channel and heterodyne detection.

    Alice's quadratures have variance ``kappa``; Bob's outcome is centred on
    ``sqrt(eta) alpha`` with per-quadrature variance ``(2 + delta)/4``. Bits are
    the signs of the real parts. Each chunk draws from its own child seed so the
    result does not depend on how chunks are scheduled.
    """
    a_edges = np.asarray(cfg.alpha_edges)
    b_edges = np.asarray(cfg.beta_edges)
    counts = np.zeros((len(a_edges) - 1, len(b_edges) - 1), dtype=np.int64)
    errors = np.zeros_like(counts)
    beta_hist = np.zeros(len(b_edges) - 1, dtype=np.int64)

    total = int(cfg.sample_count)
    n_chunks = -(-total // cfg.chunk_size)
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(n_chunks)
    sd_alpha = math.sqrt(params.kappa)
    sd_noise = math.sqrt((2.0 + params.delta) / 4.0)
    gain = math.sqrt(params.eta)
    for i, seed in enumerate(seeds):
        n = min(cfg.chunk_size, total - i * cfg.chunk_size)
        rng = np.random.default_rng(seed)
        # imaginary parts are announced in full and never enter the statistics
        ax = rng.normal(0.0, sd_alpha, n)
        bx = gain * ax + rng.normal(0.0, sd_noise, n)
        flip = (ax >= 0) != (bx >= 0)
        a_abs = np.abs(ax)
        b_abs = np.abs(bx)
        c, _, _ = np.histogram2d(a_abs, b_abs, bins=(a_edges, b_edges))
        ce, _, _ = np.histogram2d(a_abs[flip], b_abs[flip], bins=(a_edges, b_edges))
        counts += c.astype(np.int64)
        errors += ce.astype(np.int64)
        beta_hist += np.histogram(b_abs, bins=b_edges)[0]
    return McResult(counts, errors, beta_hist, total, a_edges, b_edges)

"""Cross-check suites comparing closed forms against the brute-force oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .channel import (
    BinaryChannelInfo,
    ChannelParams,
    ReducedAnnouncement,
    error_rate,
    marginal_beta_x,
    prior_alpha_x,
)
from .eve_info import spectra
from .keyrate import ConvergenceError, ProtocolSpec, QuadratureSettings, integration_limits, key_rate
from .oracles import McConfig, gram_eigen_oracle, mc_sample_run

GRAM_TOL = 1e-10
MC_SIGMAS = 3.0
CHI2_ALPHA = 0.01
# expected counts below this make the normal approximation unreliable
MIN_EXPECTED = 5
QUADRATURE_TOL = 1e-6

# parameter points exercised by the convergence suite: (eta, delta, kappa)
QUADRATURE_POINTS = (
    (0.9, 0.0, 1.0),
    (0.5, 0.0, 1.0),
    (0.1, 0.0, 1.0),
    (0.8, 0.02, 1.5),
    (0.5, 0.1, 1.0),
    (0.5, 0.2, 0.5),
    (0.2, 0.1, 3.0),
    (0.5, 0.3, 0.1),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def random_overlaps(n: int, seed: int):
    """Uniform (A, B, e) on (0, 1] x (0, 1] x [0, 1/2]."""
    rng = np.random.default_rng(seed)
    return 1.0 - rng.random(n), 1.0 - rng.random(n), 0.5 * rng.random(n)


def check_gram(seed: int = 7, n: int = 100_000, tol: float = GRAM_TOL) -> list[CheckResult]:
    A, B, e = random_overlaps(n, seed)
    oracle = gram_eigen_oracle(A, B, e)
    closed = spectra(BinaryChannelInfo.from_overlaps(A, B, e))
    out = []
    for name, mine, ref in (
        ("full spectrum", closed.lambda_full, oracle.full),
        ("bit-conditioned spectrum", closed.lambda_dr, oracle.dr),
        ("sign-conditioned spectrum", closed.lambda_rr, oracle.rr),
        ("error-revealed spectrum", closed.lambda_2way, oracle.two_way),
    ):
        err = float(np.max(np.abs(np.sort(mine, axis=-1)[..., ::-1] - ref)))
        out.append(CheckResult(f"gram/{name}", err <= tol, f"max |diff| = {err:.2e} over {n} samples (tol {tol:g})"))
    sums = max(float(np.max(np.abs(s.sum(axis=-1) - 1.0))) for s in (oracle.full, oracle.dr, oracle.rr, oracle.two_way))
    neg = min(float(np.min(s)) for s in (oracle.full, oracle.dr, oracle.rr, oracle.two_way))
    out.append(CheckResult("gram/oracle normalization", sums <= 1e-12 and neg >= -1e-12, f"max |sum-1| = {sums:.2e}, min eig = {neg:.2e}"))
    return out


def _gl(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return 0.5 * (hi + lo) + half * x, half * w


def expected_bin_stats(params: ChannelParams, alpha_edges, beta_edges, nodes: int = 48):
    """Probability mass and error mass of each (|alpha_x|, |beta_x|) bin.

    Integrates the announcement densities and the closed-form error rate
    over each bin with Gauss-Legendre rules.
    """
    alpha_edges = np.asarray(alpha_edges, dtype=float)
    beta_edges = np.asarray(beta_edges, dtype=float)
    mass = np.zeros((len(alpha_edges) - 1, len(beta_edges) - 1))
    err = np.zeros_like(mass)
    for i in range(len(alpha_edges) - 1):
        a, wa = _gl(alpha_edges[i], alpha_edges[i + 1], nodes)
        wa = wa * prior_alpha_x(a, params)
        for j in range(len(beta_edges) - 1):
            b, wb = _gl(beta_edges[j], beta_edges[j + 1], nodes)
            aa, bb = np.meshgrid(a, b, indexing="ij")
            w = wa[:, None] * wb[None, :] * marginal_beta_x(bb, aa, params)
            mass[i, j] = np.sum(w)
            err[i, j] = np.sum(w * error_rate(ReducedAnnouncement(aa, bb), params))
    return mass, err


def expected_beta_hist(params: ChannelParams, beta_edges, nodes: int = 400):
    """Probability of ``|beta_x|`` falling in each bin, averaged over Alice's prior."""
    a_max, _ = integration_limits(params)
    a, wa = _gl(0.0, a_max, nodes)
    wa = wa * prior_alpha_x(a, params)
    probs = []
    for lo, hi in zip(beta_edges[:-1], beta_edges[1:]):
        b, wb = _gl(lo, hi, 64)
        dens = marginal_beta_x(b[None, :], a[:, None], params)
        probs.append(float(np.sum(wa[:, None] * wb[None, :] * dens)))
    return np.array(probs)


def error_rate_bins_ok(counts, errors, expected_e, sigmas: float = MC_SIGMAS):
    """Compare binned error counts with their expected rates.

    Bins expecting at least ``MIN_EXPECTED`` errors and non-errors use the
    normal ``sigmas``-standard-error rule. Sparser bins, where that rule is
    meaningless, use the exact two-sided binomial tail at the same level.
    Returns ``(passed, worst_z_dense, n_sparse)``.
    """
    counts = np.asarray(counts)
    errors = np.asarray(errors)
    e = np.asarray(expected_e, dtype=float)
    used = counts > 0
    dense = used & (counts * e >= MIN_EXPECTED) & (counts * (1 - e) >= MIN_EXPECTED)
    sparse = used & ~dense
    se = np.sqrt(e * (1 - e) / np.maximum(counts, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.abs(errors / np.maximum(counts, 1) - e) / se
    worst = float(np.max(z[dense])) if dense.any() else 0.0
    level = 2.0 * stats.norm.sf(sigmas)
    n, k, q = counts[sparse], errors[sparse], e[sparse]
    p_two = np.minimum(1.0, 2.0 * np.minimum(stats.binom.cdf(k, n, q), stats.binom.sf(k - 1, n, q)))
    passed = bool(np.all(z[dense] <= sigmas) and np.all(p_two >= level))
    return passed, worst, int(sparse.sum())


def check_mc(
    params: ChannelParams = ChannelParams(0.5, 0.1, 1.0),
    samples: int = 1_000_000,
    seed: int = 7,
    alpha_edges=tuple(np.linspace(0.0, 3.0, 7)),
    beta_edges=tuple(np.linspace(0.0, 3.0, 7)),
) -> list[CheckResult]:
    cfg = McConfig(samples, seed, alpha_edges, beta_edges)
    res = mc_sample_run(params, cfg)
    mass, err_mass = expected_bin_stats(params, cfg.alpha_edges, cfg.beta_edges)
    ok, worst, n_sparse = error_rate_bins_ok(res.counts, res.errors, err_mass / mass)
    out = [
        CheckResult(
            "mc/error rate per bin",
            ok,
            f"{int((res.counts > 0).sum())} bins, worst deviation {worst:.2f} standard errors "
            f"(limit {MC_SIGMAS:g}); {n_sparse} sparse bins by exact binomial tail",
        )
    ]
    p_bins = expected_beta_hist(params, np.asarray(cfg.beta_edges))
    observed = np.append(res.beta_hist, samples - res.beta_hist.sum())
    expected = samples * np.append(p_bins, 1.0 - p_bins.sum())
    stat, pval = stats.chisquare(observed, expected)
    out.append(
        CheckResult(
            "mc/|beta_x| histogram chi-square",
            bool(pval > CHI2_ALPHA),
            f"chi2 = {stat:.2f} on {len(observed) - 1} dof, p = {pval:.3f} (reject below {CHI2_ALPHA:g})",
        )
    )
    return out


def check_quadrature(
    points=QUADRATURE_POINTS,
    protocols=("dr", "dr-ps", "rr", "rr-ps", "2way", "2way-ps"),
    quad: QuadratureSettings | None = None,
) -> list[CheckResult]:
    quad = quad or QuadratureSettings(tol=QUADRATURE_TOL)
    worst = 0.0
    failures = []
    for eta, delta, kappa in points:
        for label in protocols:
            try:
                bd = key_rate(ChannelParams(eta, delta, kappa), ProtocolSpec.from_label(label), quad)
                change = bd.quadrature_error_estimate
            except ConvergenceError as exc:
                change = exc.breakdown.quadrature_error_estimate
                failures.append(f"{label}@({eta},{delta},{kappa})")
            worst = max(worst, change)
    detail = f"{len(points) * len(protocols)} evaluations, worst doubling change {worst:.2e} (tol {quad.tol:g})"
    if failures:
        detail += "; failed: " + ", ".join(failures)
    return [CheckResult("quadrature/doubling", not failures and math.isfinite(worst), detail)]

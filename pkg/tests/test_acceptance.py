"""Acceptance criteria, one reported line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""
import time
import warnings

import numpy as np
import pytest

from cvkey.channel import ChannelParams, separability_guard
from cvkey.keyrate import ECKind, ECModel, ProtocolSpec, key_rate
from cvkey.optimizer import AmbiguousOptimumWarning, optimize_kappa
from cvkey.verify import check_gram, check_mc

STARTED = time.perf_counter()
TOL_G = 1e-9
DELTAS_FINE = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)
EC = {"ideal": ECModel(), "cascade": ECModel(ECKind.CASCADE_FIT)}

# every breakdown reported by criteria 3-9, keyed by (eta, delta, kappa, protocol, ec)
EVALUATED: dict = {}
_OPTIMA: dict = {}


def _spec(label, ec):
    return ProtocolSpec.from_label(label, EC[ec])


def rate_at(eta, delta, kappa, label, ec="ideal"):
    bd = key_rate(ChannelParams(eta, delta, kappa), _spec(label, ec))
    EVALUATED[(eta, delta, kappa, label, ec)] = bd
    return bd.rate


def optimum(eta, delta, label, ec="ideal"):
    key = (eta, delta, label, ec)
    if key not in _OPTIMA:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AmbiguousOptimumWarning)
            opt = optimize_kappa(eta, delta, _spec(label, ec))
        _OPTIMA[key] = opt
        EVALUATED[(eta, delta, opt.kappa, label, ec)] = opt.breakdown
    return _OPTIMA[key]


def record(report, number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
    print(line)
    report.append(line)
    assert passed, line


def test_criterion_01_gram_oracle(acceptance_report):
    t0 = time.perf_counter()
    results = check_gram(seed=7, n=100_000, tol=1e-10)
    elapsed = time.perf_counter() - t0
    worst = "; ".join(r.detail for r in results if r.name.startswith("gram/") and "spectrum" in r.name)
    passed = all(r.passed for r in results) and elapsed < 30
    record(acceptance_report, 1, "closed-form spectra vs Gram oracle (1e5 samples)", passed, f"{worst.split(';')[0]}, {elapsed:.1f} s")


def test_criterion_02_monte_carlo(acceptance_report):
    t0 = time.perf_counter()
    results = check_mc(ChannelParams(0.5, 0.1, 1.0), samples=1_000_000, seed=7)
    elapsed = time.perf_counter() - t0
    passed = all(r.passed for r in results) and elapsed < 60
    record(acceptance_report, 2, "Monte-Carlo channel check", passed, " | ".join(r.detail for r in results) + f", {elapsed:.1f} s")


def test_criterion_03_noiseless_two_way_equals_dr(acceptance_report):
    worst = 0.0
    for loss in (0.1, 0.3, 0.5, 0.7, 0.9):
        eta = round(1 - loss, 12)
        worst = max(worst, abs(rate_at(eta, 0.0, 1.0, "2way-ps") - rate_at(eta, 0.0, 1.0, "dr-ps")))
        worst = max(worst, abs(optimum(eta, 0.0, "2way-ps").rate - optimum(eta, 0.0, "dr-ps").rate))
    record(acceptance_report, 3, "delta=0: two-way+PS coincides with DR+PS", worst < 1e-6, f"max |dG| = {worst:.2e} (limit 1e-6)")


def test_criterion_04_postselection_dominance(acceptance_report):
    worst_gap = np.inf
    min_ps = np.inf
    n = 0
    for loss in (0.1, 0.3, 0.5, 0.7, 0.9):
        eta = round(1 - loss, 12)
        for delta in (0.0, 0.02, 0.1, 0.2):
            for rec in ("dr", "rr", "2way"):
                ps = rate_at(eta, delta, 1.0, rec + "-ps")
                plain = rate_at(eta, delta, 1.0, rec)
                worst_gap = min(worst_gap, ps - plain)
                min_ps = min(min_ps, ps)
                n += 1
    passed = worst_gap >= -TOL_G and min_ps >= 0
    record(
        acceptance_report, 4, "postselection never lowers G", passed,
        f"{n} pairs at kappa=1, min G(PS)-G = {worst_gap:.2e}, min G(PS) = {min_ps:.2e}",
    )


def test_criterion_05_noise_monotonicity(acceptance_report):
    bad = []
    for label in ("dr-ps", "rr"):
        for loss in (0.2, 0.5, 0.8):
            eta = round(1 - loss, 12)
            g = [optimum(eta, d, label).rate for d in DELTAS_FINE]
            if np.any(np.diff(g) > 1e-12):
                bad.append(f"{label}@loss={loss}")
    detail = "6 sequences over delta in {0..0.1}" + (f"; increases in {bad}" if bad else ", all non-increasing")
    record(acceptance_report, 5, "optimized G non-increasing in excess noise", not bad, detail)


def test_criterion_06_rr_beats_dr_with_postselection(acceptance_report):
    worst = np.inf
    where = None
    for delta in (0.0, 0.1, 0.2, 0.3):
        for loss in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
            eta = round(1 - loss, 12)
            diff = optimum(eta, delta, "rr-ps").rate - optimum(eta, delta, "dr-ps").rate
            if diff < worst:
                worst, where = diff, (loss, delta)
    record(
        acceptance_report, 6, "RR+PS >= DR+PS", worst >= -TOL_G,
        f"36 points, min G(RR+PS)-G(DR+PS) = {worst:.2e} at (loss, delta) = {where}",
    )


def test_criterion_07_benchmark_point(acceptance_report):
    rr = optimum(0.5, 0.2, "rr-ps")
    tw = optimum(0.5, 0.2, "2way-ps")
    passed = rr.rate > 0 and tw.rate > 0
    record(
        acceptance_report, 7, "eta=0.5, delta=0.2 yields key", passed,
        f"RR+PS G = {rr.rate:.4e} (kappa* = {rr.kappa:.3f}); two-way+PS G = {tw.rate:.4e} (kappa* = {tw.kappa:.3f})",
    )


def test_criterion_08_interior_optimum(acceptance_report):
    interior, no_key, problems = 0, [], []
    for label in ("dr-ps", "rr", "rr-ps"):
        for loss in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
            eta = round(1 - loss, 12)
            opt = optimum(eta, 0.02, label)
            if not 0.1 <= opt.kappa <= 3.0:
                problems.append(f"{label}@{loss}: kappa*={opt.kappa}")
            elif opt.rate > 0:
                if opt.boundary or opt.ambiguous:
                    problems.append(f"{label}@{loss}: kappa*={opt.kappa:.3f} not interior")
                else:
                    interior += 1
            else:
                # no key anywhere in the range: there is no optimum to be interior
                scan = [rate_at(eta, 0.02, k, label) for k in np.geomspace(0.1, 3.0, 40)]
                if max(scan) > 0:
                    problems.append(f"{label}@{loss}: optimizer missed positive rate {max(scan):.2e}")
                else:
                    no_key.append(f"{label}@loss={loss} (max G over kappa = {max(scan):.2e})")
    detail = f"{interior} interior optima in (0.1, 3)"
    if no_key:
        detail += "; no key for any kappa in [0.1, 3] at " + ", ".join(no_key)
    if problems:
        detail += "; problems: " + "; ".join(problems)
    record(acceptance_report, 8, "delta=0.02 optimal kappa lies inside [0.1, 3]", not problems, detail)


def test_criterion_09_error_correction_penalty(acceptance_report):
    worst = -np.inf
    n = 0
    for loss in (0.1, 0.5, 0.9):
        eta = round(1 - loss, 12)
        for delta in (0.0, 0.04, 0.1):
            for label in ("dr", "dr-ps", "rr", "rr-ps", "2way", "2way-ps"):
                worst = max(worst, rate_at(eta, delta, 1.0, label, "cascade") - rate_at(eta, delta, 1.0, label))
                n += 1
    gaps = []
    for delta in DELTAS_FINE:
        for label in ("rr-ps", "2way-ps"):
            worst = max(worst, optimum(0.5, delta, label, "cascade").rate - optimum(0.5, delta, label).rate)
            n += 1
        gaps.append(optimum(0.5, delta, "rr-ps", "cascade").rate - optimum(0.5, delta, "2way-ps", "cascade").rate)
    shrinking = bool(np.all(np.diff(gaps) < 0))
    passed = worst <= 1e-12 and shrinking
    record(
        acceptance_report, 9, "CASCADE never beats ideal EC; RR+PS lead over two-way shrinks with delta", passed,
        f"{n} comparisons, max G(cascade)-G(ideal) = {worst:.2e}; gap at loss 0.5: "
        + " > ".join(f"{g:.3e}" for g in gaps),
    )


def test_criterion_10_convergence_and_runtime(acceptance_report):
    if not EVALUATED:
        pytest.skip("needs criteria 3-9 from the same session")
    errs = np.array([bd.quadrature_error_estimate for bd in EVALUATED.values()])
    separable_with_key = [
        k for k, bd in EVALUATED.items() if bd.rate > 1e-9 and not separability_guard(ChannelParams(k[0], k[1], k[2]))
    ]
    elapsed = time.perf_counter() - STARTED
    passed = bool(np.all(errs < 1e-6)) and not separable_with_key and elapsed < 600
    record(
        acceptance_report, 10, "doubling certificate and runtime", passed,
        f"{len(errs)} reported points, max |G(N)-G(2N)| = {errs.max():.2e} (limit 1e-6); "
        f"positive key only where delta < 2 eta; suite time {elapsed:.0f} s (limit 600)",
    )

import warnings

import numpy as np
import pytest

from cvkey import optimizer
from cvkey.channel import ChannelParams
from cvkey.keyrate import ProtocolSpec, QuadratureSettings, RateBreakdown, key_rate
from cvkey.optimizer import (
    AmbiguousOptimumWarning,
    FixedKappa,
    OptimizeKappa,
    SweepSpec,
    grid_scan,
    optimize_kappa,
    run_sweep,
    worker_count,
)

RR = ProtocolSpec.from_label("rr")
RR_PS = ProtocolSpec.from_label("rr-ps")
DR_PS = ProtocolSpec.from_label("dr-ps")


def test_policies_validate():
    with pytest.raises(ValueError):
        OptimizeKappa(3.0, 0.1)
    with pytest.raises(ValueError):
        OptimizeKappa(0.1, 3.0, 0.0)
    with pytest.raises(ValueError):
        FixedKappa(0.0)
    with pytest.raises(ValueError):
        optimize_kappa(0.5, 0.1, RR, bounds=(0.0, 1.0))


def test_lossless_optimum_runs_to_upper_bound():
    rates = []
    for hi in (1.0, 2.0, 3.0):
        opt = optimize_kappa(1.0, 0.0, DR_PS, bounds=(0.1, hi))
        assert opt.boundary
        assert opt.kappa == pytest.approx(hi, abs=1e-3)
        rates.append(opt.rate)
    assert np.all(np.diff(rates) >= 0)


def test_interior_optimum_at_fig1_point():
    opt = optimize_kappa(0.5, 0.02, RR_PS)
    assert 0.1 < opt.kappa < 3.0
    assert not opt.boundary and not opt.ambiguous
    assert opt.rate > 0
    assert opt.breakdown.quadrature_error_estimate < 1e-6


def test_golden_section_matches_grid_scan():
    eta, delta, tol = 0.6, 0.02, 1e-3
    opt = optimize_kappa(eta, delta, RR, tol=tol)
    quad = QuadratureSettings(nodes=100)
    coarse = np.linspace(0.1, 3.0, 300)
    k0 = coarse[np.argmax(grid_scan(eta, delta, RR, coarse, quad))]
    step = coarse[1] - coarse[0]
    # second 300-point scan one coarse step either side resolves below tol
    fine = np.linspace(k0 - step, k0 + step, 300)
    k_grid = fine[np.argmax(grid_scan(eta, delta, RR, fine, quad))]
    assert abs(opt.kappa - k_grid) <= tol
    assert opt.rate >= key_rate(ChannelParams(eta, delta, k_grid), RR).rate - 1e-9


def test_golden_section_matches_grid_scan_with_postselection():
    eta, delta = 0.5, 0.1
    opt = optimize_kappa(eta, delta, DR_PS)
    grid = np.linspace(0.1, 3.0, 300)
    rates = grid_scan(eta, delta, DR_PS, grid, QuadratureSettings(nodes=100))
    assert abs(opt.kappa - grid[np.argmax(rates)]) <= grid[1] - grid[0]
    assert opt.rate >= rates.max() - 1e-9


def _fake_rate(shape):
    def fake(params, spec, quad=None):
        r = float(shape(params.kappa))
        return RateBreakdown(r, r, 0.0, 0.0, 1.0, 0.0, 10)

    return fake


def test_two_peaks_flagged_ambiguous(monkeypatch):
    bimodal = lambda k: np.exp(-((k - 0.5) / 0.1) ** 2) + 0.9 * np.exp(-((k - 2.0) / 0.2) ** 2)  # noqa: E731
    monkeypatch.setattr(optimizer, "key_rate", _fake_rate(bimodal))
    with pytest.warns(AmbiguousOptimumWarning):
        opt = optimize_kappa(0.5, 0.1, RR)
    assert opt.ambiguous
    assert opt.kappa == pytest.approx(0.5, abs=2e-3)


def test_single_peak_not_ambiguous(monkeypatch):
    monkeypatch.setattr(optimizer, "key_rate", _fake_rate(lambda k: -((k - 1.3) ** 2)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        opt = optimize_kappa(0.5, 0.1, RR)
    assert not opt.ambiguous and not opt.boundary
    assert opt.kappa == pytest.approx(1.3, abs=1e-3)


def test_flat_zero_rate_is_not_ambiguous(monkeypatch):
    monkeypatch.setattr(optimizer, "key_rate", _fake_rate(lambda k: 0.0))
    opt = optimize_kappa(0.5, 0.1, RR)
    assert not opt.ambiguous and opt.rate == 0.0


def test_single_point_sweep_equals_key_rate():
    spec = SweepSpec((0.5,), (0.1,), (RR_PS,), FixedKappa(1.0))
    res = run_sweep(spec)
    assert len(res.rows) == 1
    assert res.rows[0].breakdown == key_rate(ChannelParams(0.5, 0.1, 1.0), RR_PS)
    assert res.metadata["kappa_policy"] == "fixed"


def test_sweep_order_and_parallel_determinism():
    spec = SweepSpec((0.9, 0.5), (0.0, 0.1), (DR_PS, RR), FixedKappa(1.0), QuadratureSettings(nodes=60))
    serial = run_sweep(spec, workers=1)
    parallel = run_sweep(spec, workers=4)
    keys = [(r.eta, r.delta, r.protocol.label) for r in serial.rows]
    assert keys == [(e, d, p) for e in (0.9, 0.5) for d in (0.0, 0.1) for p in ("dr-ps", "rr")]
    assert serial.rows == parallel.rows


def test_sweep_captures_failures():
    spec = SweepSpec((1.5, 0.5), (0.1,), (RR,), FixedKappa(1.0))
    res = run_sweep(spec, workers=1)
    assert res.rows[0].error and "eta" in res.rows[0].error
    assert np.isnan(res.rows[0].rate)
    assert res.rows[1].error is None and np.isfinite(res.rows[1].rate)


def test_sweep_reports_nonconvergence_per_row():
    spec = SweepSpec((0.5,), (0.1,), (RR_PS,), FixedKappa(1.0), QuadratureSettings(nodes=3))
    row = run_sweep(spec).rows[0]
    assert "ConvergenceError" in row.error
    assert row.breakdown is not None


def test_sweep_validates_grids():
    with pytest.raises(ValueError):
        SweepSpec((), (0.1,), (RR,))


def test_optimized_sweep_fig3_subset():
    spec = SweepSpec((0.7, 0.5), (0.0, 0.1), (DR_PS, RR_PS))
    rows = run_sweep(spec, workers=2).rows
    for i in range(0, len(rows), 2):
        dr, rr = rows[i], rows[i + 1]
        assert rr.rate >= dr.rate - 1e-9
        assert 0.1 <= dr.kappa <= 3.0 and 0.1 <= rr.kappa <= 3.0


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CVKEY_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CVKEY_THREADS", "0")
    assert worker_count() >= 1
    monkeypatch.setenv("CVKEY_THREADS", "-1")
    with pytest.raises(ValueError):
        worker_count()

"""
Tests for the thresholding readout.

Tests the joint count pmfs (normalisation, T = 0, jump truncation), the
decision map tie rule, the error budget at 60 us, the detection-time
optimum, the Monte-Carlo cross-check and the fast-readout power scan.

Run: uv run python tests/test_threshold.py
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.readout.jumps import HyperfineState, ReadoutModel, reference_model
from src.readout.threshold import (
    DEFAULT_POWER_FACTORS,
    ErrorReport,
    JointPmf,
    best_power_factor,
    count_caps,
    count_pmf,
    decision_map,
    fast_readout_scenario,
    optimize_detection_time,
    tm_errors,
    tm_monte_carlo,
)

F1, F2 = HyperfineState.F1, HyperfineState.F2


# ── Test 1: Joint pmf normalisation ─────────────────────────────

def test_pmf_normalisation():
    """TEST 1: table + tail = 1; truncated mass folded; marginal means."""
    print("=" * 60)
    print("TEST 1: Joint pmf normalisation")
    print("=" * 60)

    model = reference_model()
    T = 60e-6
    for state in (F1, F2):
        pmf = count_pmf(model, state, T)
        total = pmf.table.sum() + pmf.tail_mass
        print(f"  {state.value}: caps {pmf.caps}, sum + tail = {total:.12f}, "
              f"truncated {pmf.truncated_mass:.2e}")
        assert total == pytest.approx(1.0, abs=1e-10)
        assert pmf.table.min() >= 0.0
        assert pmf.tail_mass < 1e-8

    # Jumps move a small share of the time into F2, so the F1 transmission mean is barely reduced
    mean_R, mean_T = count_pmf(model, F1, T).marginal_means()
    assert mean_T == pytest.approx(model.r_T_F1 * T, rel=0.01)
    assert mean_T < model.r_T_F1 * T
    assert mean_R > model.r_R_F1 * T

    no_jumps = count_pmf(model, F1, T, max_jumps=0)
    assert no_jumps.truncated_mass == pytest.approx(1.0 - math.exp(-T / model.tau_F1), rel=1e-9)
    assert no_jumps.table.sum() + no_jumps.tail_mass == pytest.approx(1.0, abs=1e-10)
    print("  max_jumps=0 folds the jump mass into the no-jump term  OK")
    print("PASS\n")


# ── Test 2: Limits and argument checks ──────────────────────────

def test_pmf_limits():
    """TEST 2: T = 0 is a delta at (0, 0); infinite lifetimes give product Poissons."""
    print("=" * 60)
    print("TEST 2: Pmf limits")
    print("=" * 60)

    model = reference_model()
    zero = count_pmf(model, F2, 0.0)
    assert zero.table[0, 0] == 1.0
    assert zero.table.sum() == 1.0

    frozen = ReadoutModel(1.4e3, 8.9e5, 1.9e5, 4.4e5, math.inf, math.inf)
    T = 20e-6
    pmf = count_pmf(frozen, F2, T)
    c_R = np.arange(pmf.caps[0] + 1)
    c_T = np.arange(pmf.caps[1] + 1)
    expected = np.outer(stats.poisson.pmf(c_R, frozen.r_R_F2 * T), stats.poisson.pmf(c_T, frozen.r_T_F2 * T))
    assert np.allclose(pmf.table, expected, rtol=1e-10, atol=1e-15)
    print("  T = 0 delta and no-jump product Poisson  OK")

    with pytest.raises(ValueError):
        count_pmf(model, F1, -1e-6)
    with pytest.raises(ValueError):
        count_pmf(model, F1, 10e-6, max_jumps=-1)
    cap_R, cap_T = count_caps(model, 60e-6)
    assert cap_R >= 12 and cap_T >= 12
    print("PASS\n")


# ── Test 3: Decision map ────────────────────────────────────────

def test_decision_map_rules():
    """TEST 3: Ties go to F2, disjoint supports partition exactly, grids must match."""
    print("=" * 60)
    print("TEST 3: Decision map")
    print("=" * 60)

    table = np.full((3, 3), 1 / 9)
    same = decision_map(JointPmf(1e-6, F1, table, 0.0), JointPmf(1e-6, F2, table.copy(), 0.0))
    assert same.table.all()

    a = np.zeros((2, 2))
    a[0, 0] = 1.0
    b = np.zeros((2, 2))
    b[1, 1] = 1.0
    split = decision_map(JointPmf(1e-6, F1, a, 0.0), JointPmf(1e-6, F2, b, 0.0))
    assert not split.table[0, 0] and split.table[1, 1]
    # Zero in both counts as a tie
    assert split.table[0, 1] and split.table[1, 0]
    assert list(split.classify([0, 1, 5], [0, 1, 0])) == [False, True, False]
    print("  Tie rule, disjoint supports and out-of-cap lookup  OK")

    with pytest.raises(ValueError):
        decision_map(JointPmf(1e-6, F1, a, 0.0), JointPmf(1e-6, F2, table, 0.0))
    with pytest.raises(ValueError):
        decision_map(JointPmf(1e-6, F1, a, 0.0), JointPmf(2e-6, F2, b, 0.0))
    print("PASS\n")


# ── Test 4: Error budget at 60 us ───────────────────────────────

def test_tm_errors_reference():
    """TEST 4: eps_F1 ~ 7.0e-4 and eps_F2 ~ 9.1e-4 within 15% at T = 60 us."""
    print("=" * 60)
    print("TEST 4: Thresholding errors at 60 us")
    print("=" * 60)

    report = tm_errors(reference_model(), 60e-6)
    print(f"  eps_F1 = {report.eps_F1:.3e}, eps_F2 = {report.eps_F2:.3e}, "
          f"F = {report.fidelity:.5f}")
    assert report.method == "TM"
    assert report.eps_F1 == pytest.approx(7.0e-4, rel=0.15)
    assert report.eps_F2 == pytest.approx(9.1e-4, rel=0.15)
    assert report.eps == 0.5 * (report.eps_F1 + report.eps_F2)
    assert report.fidelity == 1.0 - report.eps

    one_jump = tm_errors(reference_model(), 60e-6, max_jumps=1)
    assert one_jump.eps == pytest.approx(report.eps, rel=0.05)
    print(f"  max_jumps=1 gives eps = {one_jump.eps:.3e}")

    data = report.to_dict()
    assert data["method"] == "TM" and data["caps"] == list(count_caps(reference_model(), 60e-6))
    print("PASS\n")


# ── Test 5: Detection-time optimum ──────────────────────────────

def test_optimize_detection_time():
    """TEST 5: Interior minimum between 40 and 80 us."""
    print("=" * 60)
    print("TEST 5: Detection-time optimization")
    print("=" * 60)

    grid = np.arange(20, 121, 10) * 1e-6
    result = optimize_detection_time(reference_model(), grid)
    for r in result.curve:
        print(f"  T = {r.detection_time * 1e6:5.0f} us: eps = {r.eps:.3e}")
    print(f"  T_opt = {result.T_opt * 1e6:.0f} us")
    assert 40e-6 <= result.T_opt <= 80e-6
    assert result.curve[0].eps > result.report.eps < result.curve[-1].eps
    assert result.report.eps == min(r.eps for r in result.curve)

    with pytest.raises(ValueError):
        optimize_detection_time(reference_model(), [])
    print("PASS\n")


# ── Test 6: Monte-Carlo cross-check ─────────────────────────────

def test_tm_monte_carlo_agrees():
    """TEST 6: Simulated misclassification frequencies bracket the analytic errors."""
    print("=" * 60)
    print("TEST 6: TM analytic vs Monte-Carlo")
    print("=" * 60)

    model = reference_model()
    T = 60e-6
    analytic = tm_errors(model, T)
    mc = tm_monte_carlo(model, T, n_trials=40_000, master_seed=11, confidence=0.9999)
    print(f"  MC eps_F1 = {mc.eps_F1:.3e} {mc.ci_F1}, analytic {analytic.eps_F1:.3e}")
    print(f"  MC eps_F2 = {mc.eps_F2:.3e} {mc.ci_F2}, analytic {analytic.eps_F2:.3e}")
    assert mc.method == "TM-MC" and mc.n_trials == 40_000
    assert mc.ci_F1[0] <= analytic.eps_F1 <= mc.ci_F1[1]
    assert mc.ci_F2[0] <= analytic.eps_F2 <= mc.ci_F2[1]

    again = tm_monte_carlo(model, T, n_trials=40_000, master_seed=11, confidence=0.9999)
    assert again == mc

    with pytest.raises(ValueError):
        tm_monte_carlo(model, T, n_trials=0, master_seed=1)
    print("PASS\n")


# ── Test 7: Fast readout ────────────────────────────────────────

def test_fast_readout_power_scan():
    """TEST 7: More probe power helps a short window until saturation caps it."""
    print("=" * 60)
    print("TEST 7: Fast readout")
    print("=" * 60)

    model = reference_model()
    T = 20e-6
    factor, best, reports = best_power_factor(model, T, [1.0, 2.0, 4.0])
    for r in reports:
        print(f"  power x{r.details['power_factor']:.0f}: eps = {r.eps:.3e}")
    assert all(r.method == "TM-fast" for r in reports)
    assert reports[2].eps < reports[0].eps
    assert best.eps == min(r.eps for r in reports)
    assert factor in (2.0, 4.0)

    dead = ReadoutModel(**{**model.to_dict(), "dead_time": 50e-9})
    fast = fast_readout_scenario(dead, T, power_factor=8.0)
    sat = fast.details["saturated_rates_per_s"]
    assert sat["r_R_F2"] < 8 * model.r_R_F2
    assert sat["r_R_F2"] == pytest.approx(8 * model.r_R_F2 / (1 + 8 * model.r_R_F2 * 50e-9))

    with pytest.raises(ValueError):
        best_power_factor(model, T, [])
    print("PASS\n")


# ── Test 8: Error report checks ─────────────────────────────────

def test_error_report_validation():
    """TEST 8: Probabilities outside [0, 1] are rejected."""
    print("=" * 60)
    print("TEST 8: ErrorReport validation")
    print("=" * 60)

    report = ErrorReport(1e-3, 3e-3, "TM", 60e-6)
    assert report.eps == pytest.approx(2e-3)
    assert report.fidelity == pytest.approx(0.998)
    for bad in ((-1e-3, 0.0), (0.0, 1.5)):
        with pytest.raises(ValueError):
            ErrorReport(*bad, "TM", 60e-6)
    print("PASS\n")


# ── Test 9: 2 us readout with dead time ─────────────────────────

def test_fast_readout_two_microseconds():
    """TEST 9: The default power scan reaches eps <= 6e-3 in 2 us despite a 50 ns dead time."""
    print("=" * 60)
    print("TEST 9: 2 us readout over the default power scan")
    print("=" * 60)

    T = 2e-6
    dead = ReadoutModel(**{**reference_model().to_dict(), "dead_time": 50e-9})
    factor, best, reports = best_power_factor(dead, T, DEFAULT_POWER_FACTORS)
    for r in reports:
        print(f"  power x{r.details['power_factor']:>5.0f}: eps = {r.eps:.3e}")
    print(f"  best x{factor:.0f}: fidelity {best.fidelity:.4f}")
    assert best.eps <= 6e-3
    assert factor == 50.0

    eps = [r.eps for r in reports]
    assert all(b < a for a, b in zip(eps[:6], eps[1:6]))
    # Saturation takes over beyond x50
    assert eps[6] > eps[5]

    kept = [r.details["saturated_rates_per_s"]["r_R_F2"] / (f * dead.r_R_F2)
            for f, r in zip(DEFAULT_POWER_FACTORS, reports)]
    assert all(b < a for a, b in zip(kept, kept[1:]))
    print(f"  detected fraction of r_R_F2: {kept[0]:.3f} at x1 -> {kept[-1]:.3f} at x100")

    ideal = fast_readout_scenario(reference_model(), T, power_factor=20.0)
    assert ideal.eps < reports[4].eps
    print(f"  x20 without dead time {ideal.eps:.3e}, with {reports[4].eps:.3e}")
    print("PASS\n")


# ── Main ──────────────────────────────────────────────────────────

def main():
    test_pmf_normalisation()
    test_pmf_limits()
    test_decision_map_rules()
    test_tm_errors_reference()
    test_optimize_detection_time()
    test_tm_monte_carlo_agrees()
    test_fast_readout_power_scan()
    test_error_report_validation()
    test_fast_readout_two_microseconds()

    print("=" * 60)
    print("ALL TESTS PASSED")
    print("=" * 60)


if __name__ == "__main__":
    main()

"""
Tests for transmission / reflection spectra.

Tests ground populations, the empty-cavity and two-level spectra, worker
independence, the g0 / delta_ca band, the coupling fit, the full two-mode
87Rb model, mirror symmetry and Fock-truncation convergence.

Run: uv run python tests/test_spectrum.py
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.atoms.levels import TWO_PI, build_rb87_d2, build_two_level, empty_scheme
from src.cavity.lindblad import CavityConfig
from src.cavity.spectrum import (
    fit_coupling,
    ground_population,
    probe_point,
    spectrum,
    spectrum_band,
    uniform_ground_population,
)

MHZ = TWO_PI * 1e6
KAPPA = 53 * MHZ


def _two_level(g0=240 * MHZ):
    scheme = build_two_level(gamma=3 * MHZ)
    cavity = CavityConfig(kappa=KAPPA, g0=g0, drive_amplitude=0.01 * KAPPA, n_max=3)
    return scheme, cavity, uniform_ground_population(scheme)


# ── Test 1: Ground populations ──────────────────────────────────

def test_ground_populations():
    """TEST 1: Uniform and labelled populations, with their error cases."""
    print("=" * 60)
    print("TEST 1: Ground populations")
    print("=" * 60)

    scheme = build_rb87_d2(B=0.0, light_shift=0.0)
    uniform = uniform_ground_population(scheme)
    assert uniform.sum() == pytest.approx(1.0)
    assert np.count_nonzero(uniform) == 5

    pop = ground_population(scheme, {"g(2,1)": 1.0, "g(2,-1)": 3.0})
    assert pop[scheme.index("g(2,-1)")] == pytest.approx(0.75)
    print("  Uniform over 5 sublevels; labelled weights normalised  OK")

    with pytest.raises(KeyError):
        ground_population(scheme, {"g(1,0)": 1.0})
    with pytest.raises(ValueError):
        ground_population(scheme, {"e(3,0)": 1.0})
    with pytest.raises(ValueError):
        ground_population(scheme, {"g(2,0)": 0.0})
    with pytest.raises(ValueError):
        spectrum(scheme, CavityConfig(kappa=KAPPA, g0=0.0, drive_amplitude=1.0, n_max=1),
                 np.ones(scheme.n_levels) / scheme.n_levels, [0.0])
    print("  Unknown, excited, all-zero and non-ground populations rejected")
    print("PASS\n")


# ── Test 2: Empty cavity ────────────────────────────────────────

def test_empty_cavity_spectrum():
    """TEST 2: Lorentzian peaked at zero detuning, reflection dip on resonance."""
    print("=" * 60)
    print("TEST 2: Empty-cavity spectrum")
    print("=" * 60)

    scheme = empty_scheme()
    cavity = CavityConfig(kappa=KAPPA, g0=0.0, drive_amplitude=0.01 * KAPPA, n_max=3)
    detunings = np.linspace(-200, 200, 41) * MHZ
    points = spectrum(scheme, cavity, uniform_ground_population(scheme), detunings)

    peak = max(points, key=lambda p: p.transmission_rel)
    assert peak.delta_lc == 0.0
    assert peak.transmission_rel == pytest.approx(1.0, rel=1e-6)
    assert peak.reflection_rel == pytest.approx(0.0, abs=1e-6)
    for p in points:
        expected = KAPPA**2 / (KAPPA**2 + p.delta_lc**2)
        assert p.transmission_rel == pytest.approx(expected, rel=1e-6)
    print(f"  {len(points)} points, peak T = {peak.transmission_rel:.6f} at 0 MHz")

    with pytest.raises(ValueError):
        probe_point(scheme, replace(cavity, drive_amplitude=0.0), np.array([1.0]), 0.0)
    print("PASS\n")


# ── Test 3: Normal-mode splitting ───────────────────────────────

def test_two_level_normal_modes():
    """TEST 3: Transmission maxima at +-(240 +- 10) MHz for g0/2pi = 240 MHz."""
    print("=" * 60)
    print("TEST 3: Vacuum Rabi splitting")
    print("=" * 60)

    scheme, cavity, pop = _two_level()
    for sign in (1, -1):
        grid = sign * np.arange(200, 281, 1.0) * MHZ
        points = spectrum(scheme, cavity, pop, grid)
        peak = max(points, key=lambda p: p.transmission_rel)
        print(f"  Peak at {peak.delta_lc / MHZ:+.0f} MHz, T = {peak.transmission_rel:.3f}")
        assert abs(abs(peak.delta_lc / MHZ) - 240) <= 10
        assert 200 < abs(peak.delta_lc / MHZ) < 280

    center = probe_point(scheme, cavity, pop, 0.0)
    assert center.transmission_rel < 0.01
    print(f"  Transmission at zero detuning {center.transmission_rel:.2e}")
    print("PASS\n")


# ── Test 4: Worker independence ─────────────────────────────────

def test_workers_do_not_change_results():
    """TEST 4: A process pool returns the same points in the same order."""
    print("=" * 60)
    print("TEST 4: Worker independence")
    print("=" * 60)

    scheme, cavity, pop = _two_level()
    grid = np.linspace(-300, 300, 7) * MHZ
    serial = spectrum(scheme, cavity, pop, grid, workers=1)
    pooled = spectrum(scheme, cavity, pop, grid, workers=2)
    assert serial == pooled
    print(f"  {len(grid)} points identical with 1 and 2 workers")
    print("PASS\n")


# ── Test 5: Spectrum band ───────────────────────────────────────

def test_spectrum_band_envelope():
    """TEST 5: The band brackets the nominal spectrum."""
    print("=" * 60)
    print("TEST 5: Spectrum band")
    print("=" * 60)

    scheme, cavity, pop = _two_level()
    grid = np.linspace(-300, 300, 13) * MHZ
    nominal = spectrum(scheme, cavity, pop, grid)
    band = spectrum_band(scheme, cavity, pop, grid, delta_g0=10 * MHZ, delta_ca_spread=5 * MHZ)
    assert len(band) == len(nominal)
    for b, p in zip(band, nominal):
        assert b.transmission_low <= p.transmission_rel <= b.transmission_high
        assert b.reflection_low <= p.reflection_rel <= b.reflection_high
    widest = max(b.transmission_high - b.transmission_low for b in band)
    assert widest > 0
    print(f"  Widest transmission band {widest:.3f}")
    print("PASS\n")


# ── Test 6: Coupling fit ────────────────────────────────────────

def test_fit_coupling_recovers_g0():
    """TEST 6: Fitting a synthetic spectrum returns the g0 it was made with."""
    print("=" * 60)
    print("TEST 6: Coupling fit")
    print("=" * 60)

    scheme, cavity, pop = _two_level(g0=235 * MHZ)
    grid = np.arange(-300, 301, 5.0) * MHZ
    measured = [p.transmission_rel for p in spectrum(scheme, cavity, pop, grid)]

    fit = fit_coupling(scheme, replace(cavity, g0=200 * MHZ), pop, grid, measured,
                       g0_bounds=(200 * MHZ, 280 * MHZ))
    print(f"  Fitted g0/2pi = {fit.g0 / MHZ:.3f} MHz in {fit.evaluations} evaluations")
    assert fit.g0 / MHZ == pytest.approx(235, abs=0.5)

    with pytest.raises(ValueError, match="Known residuals"):
        fit_coupling(scheme, cavity, pop, grid, measured, (200 * MHZ, 280 * MHZ), residual="log")
    with pytest.raises(ValueError):
        fit_coupling(scheme, cavity, pop, grid, measured[:-1], (200 * MHZ, 280 * MHZ))
    print("PASS\n")


# ── Test 7: Full two-mode model ─────────────────────────────────

def test_full_model_population_dependence():
    """TEST 7: m_F != 0 population adds a third peak between the normal modes, near -80 MHz."""
    print("=" * 60)
    print("TEST 7: Full 87Rb model")
    print("=" * 60)

    scheme = build_rb87_d2(B=0.0, light_shift=95 * MHZ)
    cavity = CavityConfig(kappa=KAPPA, g0=240 * MHZ, birefringent_splitting=540 * MHZ,
                          modes=2, driven_mode=0, drive_amplitude=0.01 * KAPPA, n_max=1)
    grid_mhz = np.arange(-130, -39, 10.0)
    grid = grid_mhz * MHZ
    only_zero = [p.transmission_rel for p in
                 spectrum(scheme, cavity, ground_population(scheme, {"g(2,0)": 1.0}), grid)]
    uniform = [p.transmission_rel for p in
               spectrum(scheme, cavity, uniform_ground_population(scheme), grid)]
    for d, t0, tu in zip(grid_mhz, only_zero, uniform):
        print(f"  {d:+5.0f} MHz: m_F=0 only {t0:.4f}, uniform {tu:.4f}")
    assert np.all(np.isfinite(only_zero)) and np.all(np.isfinite(uniform))

    # m_F = 0 has no pi coupling to F'=2: transmission falls steadily toward the atomic line
    assert all(b < a for a, b in zip(only_zero, only_zero[1:]))

    # F'=2 coupling of m_F != 0 opens a middle dressed mode with its own maximum
    peaks = [i for i in range(1, len(uniform) - 1)
             if uniform[i] > uniform[i - 1] and uniform[i] > uniform[i + 1]]
    assert peaks, "no interior maximum in the uniform-population spectrum"
    where = grid_mhz[max(peaks, key=lambda i: uniform[i])]
    print(f"  Third peak at {where:+.0f} MHz")
    assert -120 <= where <= -50
    print("PASS\n")


# ── Test 8: Symmetry and photon-number convergence ──────────────

def test_two_level_symmetry_and_truncation():
    """TEST 8: T(d) = T(-d) at delta_ca = 0; one more Fock state changes nothing."""
    print("=" * 60)
    print("TEST 8: Symmetry and Fock truncation")
    print("=" * 60)

    scheme, cavity, pop = _two_level()
    offsets = np.arange(0, 401, 40.0) * MHZ
    right = spectrum(scheme, cavity, pop, offsets)
    left = spectrum(scheme, cavity, pop, -offsets)
    asymmetry = max(abs(r.transmission_rel - l.transmission_rel) for r, l in zip(right, left))
    print(f"  max |T(d) - T(-d)| = {asymmetry:.2e}")
    assert asymmetry <= 1e-6

    grid = np.array([-240.0, -100.0, 0.0, 60.0, 240.0]) * MHZ
    base = spectrum(scheme, cavity, pop, grid)
    larger = spectrum(scheme, replace(cavity, n_max=cavity.n_max + 1), pop, grid)
    eps_over_kappa = cavity.drive_amplitude / cavity.kappa
    for a, b in zip(base, larger):
        # Weak drive: mean photon number well below 0.1
        assert a.transmission_rel * eps_over_kappa**2 < 0.1
        change = abs(b.transmission_rel - a.transmission_rel)
        assert change <= 1e-6 * max(a.transmission_rel, 1e-12)
    print(f"  n_max {cavity.n_max} -> {cavity.n_max + 1}: relative change below 1e-6 at {len(grid)} detunings")
    print("PASS\n")


# ── Main ──────────────────────────────────────────────────────────

def main():
    test_ground_populations()
    test_empty_cavity_spectrum()
    test_two_level_normal_modes()
    test_workers_do_not_change_results()
    test_spectrum_band_envelope()
    test_fit_coupling_recovers_g0()
    test_full_model_population_dependence()
    test_two_level_symmetry_and_truncation()

    print("=" * 60)
    print("ALL TESTS PASSED")
    print("=" * 60)


if __name__ == "__main__":
    main()

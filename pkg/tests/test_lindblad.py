"""
Tests for the master-equation solver.

Tests operator construction, trace preservation of the Liouvillian, the
steady-state invariants, agreement with the weak-drive closed form and
the empty-cavity Lorentzian.

Run: uv run python tests/test_lindblad.py
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.atoms.levels import TWO_PI, build_rb87_d2, build_two_level, empty_scheme
from src.cavity.lindblad import (
    CavityConfig,
    SolverError,
    analytic_two_level,
    annihilation,
    build_hamiltonian,
    build_liouvillian,
    collapse_operators,
    steady_state,
    trace_defect,
)

MHZ = TWO_PI * 1e6


def _two_level_setup(g0=240 * MHZ, eps_over_kappa=1e-4, delta_ca=0.0):
    scheme = build_two_level(gamma=3 * MHZ)
    kappa = 53 * MHZ
    cavity = CavityConfig(kappa=kappa, g0=g0, delta_ca=delta_ca,
                          drive_amplitude=eps_over_kappa * kappa, n_max=3)
    return scheme, cavity


# ── Test 1: Operators ───────────────────────────────────────────

def test_operators():
    """TEST 1: Commutator of a, Hermitian Hamiltonian, CavityConfig checks."""
    print("=" * 60)
    print("TEST 1: Operators")
    print("=" * 60)

    a = annihilation(0, 2, 3, 1)
    assert a.dimension == 8
    commutator = (a.matrix @ a.dagger().matrix - a.dagger().matrix @ a.matrix).toarray()
    # [a, a^dag] = 1 below the truncation edge
    diag = np.real(np.diag(commutator)).reshape(2, 4)
    assert np.allclose(diag[:, :3], 1.0)
    print("  [a, a^dag] = 1 below n_max  OK")

    scheme = build_rb87_d2(B=1.0, light_shift=95 * MHZ)
    cavity = CavityConfig(kappa=53 * MHZ, g0=240 * MHZ, birefringent_splitting=540 * MHZ,
                          modes=2, drive_amplitude=0.5 * MHZ, n_max=1)
    H = build_hamiltonian(scheme, cavity, delta_lc=-30 * MHZ)
    assert H.dimension == 20 * 4
    assert H.hermiticity_defect() < 1e-14
    print(f"  Two-mode Rb87 Hamiltonian: dim {H.dimension}, Hermitian  OK")

    for bad in (dict(kappa=0.0, g0=1.0), dict(kappa=1.0, g0=1.0, n_max=0),
                dict(kappa=1.0, g0=1.0, modes=3), dict(kappa=1.0, g0=1.0, driven_mode=1)):
        with pytest.raises(ValueError):
            CavityConfig(**bad)
    print("  Invalid cavity configs rejected")
    print("PASS\n")


# ── Test 2: Trace preservation ──────────────────────────────────

def test_liouvillian_trace_preserving():
    """TEST 2: Tr(L(rho)) = 0 for every rho; negative rates rejected."""
    print("=" * 60)
    print("TEST 2: Liouvillian trace preservation")
    print("=" * 60)

    scheme = build_rb87_d2(B=1.0, light_shift=95 * MHZ)
    cavity = CavityConfig(kappa=53 * MHZ, g0=240 * MHZ, birefringent_splitting=540 * MHZ,
                          modes=2, drive_amplitude=0.5 * MHZ, n_max=1)
    H = build_hamiltonian(scheme, cavity, 0.0)
    ops = collapse_operators(scheme, cavity, home_level=scheme.index("g(2,1)"), reset_rate=6 * MHZ)
    L = build_liouvillian(H, ops)
    defect = trace_defect(L)
    print(f"  Trace defect: {defect:.2e}")
    assert defect < 1e-12

    with pytest.raises(ValueError):
        build_liouvillian(H, [(ops[0][0], -1.0)])
    with pytest.raises(ValueError):
        collapse_operators(scheme, cavity, home_level=scheme.index("e(3,0)"))
    print("PASS\n")


# ── Test 3: Steady-state invariants ─────────────────────────────

def test_steady_state_invariants():
    """TEST 3: Unit trace, Hermitian, positive; residual below tolerance."""
    print("=" * 60)
    print("TEST 3: Steady-state invariants")
    print("=" * 60)

    scheme, cavity = _two_level_setup(eps_over_kappa=0.3)
    L = build_liouvillian(build_hamiltonian(scheme, cavity, 10 * MHZ),
                          collapse_operators(scheme, cavity))
    rho = steady_state(L)
    m = rho.matrix
    assert abs(np.trace(m) - 1.0) < 1e-12
    assert np.max(np.abs(m - m.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(m).min() > -1e-10
    residual = np.linalg.norm(L.matrix @ m.reshape(-1, order="F"))
    print(f"  Residual ||L rho|| = {residual:.2e}")

    with pytest.raises(SolverError):
        steady_state(L, tol=1e-30, max_refinements=0)
    print("  Unreachable tolerance raises SolverError")
    print("PASS\n")


# ── Test 4: Weak-drive oracle ───────────────────────────────────

def test_two_level_matches_closed_form():
    """TEST 4: i<a> matches the linear-response amplitude on 41 detunings.

    Errors are taken relative to the resonant empty-cavity amplitude eps/kappa.
    """
    print("=" * 60)
    print("TEST 4: Two-level oracle")
    print("=" * 60)

    for delta_ca in (0.0, 40 * MHZ):
        scheme, cavity = _two_level_setup(delta_ca=delta_ca)
        a = annihilation(0, scheme.n_levels, cavity.n_max, cavity.modes)
        eps = cavity.drive_amplitude
        worst = 0.0
        for delta_lc in np.linspace(-400, 400, 41) * MHZ:
            H = build_hamiltonian(scheme, cavity, delta_lc)
            rho = steady_state(build_liouvillian(H, collapse_operators(scheme, cavity)))
            alpha = 1j * rho.expect(a)
            expected = analytic_two_level(
                g=cavity.g0, kappa=cavity.kappa, gamma=scheme.gamma,
                delta_c=-delta_lc, delta_a=-(delta_ca + delta_lc), eps=eps,
            )
            rel = abs(alpha - expected.amplitude) / (eps / cavity.kappa)
            worst = max(worst, rel)
        print(f"  delta_ca = {delta_ca / MHZ:.0f} MHz: worst relative error {worst:.2e}")
        assert worst <= 1e-6
    print("PASS\n")


# ── Test 5: Empty cavity ────────────────────────────────────────

def test_empty_cavity_lorentzian():
    """TEST 5: Photon number follows eps^2 / (kappa^2 + delta^2)."""
    print("=" * 60)
    print("TEST 5: Empty-cavity Lorentzian")
    print("=" * 60)

    scheme = empty_scheme()
    kappa = 53 * MHZ
    cavity = CavityConfig(kappa=kappa, g0=0.0, drive_amplitude=0.01 * kappa, n_max=3)
    a = annihilation(0, 1, cavity.n_max, 1)
    n_op = a.dagger().matrix @ a.matrix
    for delta in (-100 * MHZ, -kappa, 0.0, kappa, 200 * MHZ):
        rho = steady_state(build_liouvillian(build_hamiltonian(scheme, cavity, delta),
                                             collapse_operators(scheme, cavity)))
        photons = np.real(np.sum(n_op.multiply(rho.matrix.T)))
        transmission = photons * kappa**2 / cavity.drive_amplitude**2
        expected = kappa**2 / (kappa**2 + delta**2)
        print(f"  delta = {delta / MHZ:+7.1f} MHz: T = {transmission:.6f} (expected {expected:.6f})")
        assert transmission == pytest.approx(expected, rel=1e-6)
    print("PASS\n")


# ── Test 6: Reflection of the closed form ───────────────────────

def test_closed_form_limits():
    """TEST 6: Empty resonant cavity is impedance matched; g=0 gives a Lorentzian."""
    print("=" * 60)
    print("TEST 6: Closed-form limits")
    print("=" * 60)

    kappa = 53 * MHZ
    on_resonance = analytic_two_level(g=0.0, kappa=kappa, gamma=3 * MHZ,
                                      delta_c=0.0, delta_a=0.0, eps=1.0)
    assert on_resonance.transmission == pytest.approx(1.0)
    assert on_resonance.reflection == pytest.approx(0.0, abs=1e-15)

    off = analytic_two_level(g=0.0, kappa=kappa, gamma=3 * MHZ,
                             delta_c=kappa, delta_a=0.0, eps=1.0)
    assert off.transmission == pytest.approx(0.5)
    print(f"  Resonant: T = {on_resonance.transmission}, R = {on_resonance.reflection:.1e}")
    print("PASS\n")


# ── Main ──────────────────────────────────────────────────────────

def main():
    test_operators()
    test_liouvillian_trace_preserving()
    test_steady_state_invariants()
    test_two_level_matches_closed_form()
    test_empty_cavity_lorentzian()
    test_closed_form_limits()

    print("=" * 60)
    print("ALL TESTS PASSED")
    print("=" * 60)


if __name__ == "__main__":
    main()

"""
Steady-state transmission and reflection spectra of the atom-cavity system.

Each laser-cavity detuning is an independent steady-state solve. The ground
distribution is held fixed: for every populated ground level a separate
steady state is found with decay and reset channels returning population to
that level, and the observables are averaged with the population weights.
"""

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy.optimize import minimize_scalar

from ..atoms.levels import LevelScheme
from .lindblad import (
    CavityConfig,
    OperatorMatrix,
    annihilation,
    build_hamiltonian,
    build_liouvillian,
    collapse_operators,
    steady_state,
)


@dataclass(frozen=True)
class SpectrumPoint:
    delta_lc: float
    transmission_rel: float
    reflection_rel: float


@dataclass(frozen=True)
class BandPoint:
    delta_lc: float
    transmission_low: float
    transmission_high: float
    reflection_low: float
    reflection_high: float


@dataclass(frozen=True)
class CouplingFit:
    g0: float
    residual: float
    evaluations: int


# ── Ground populations ────────────────────────────────────────────

def uniform_ground_population(scheme: LevelScheme) -> np.ndarray:
    """Equal weight on every ground level of the scheme."""
    pop = np.zeros(scheme.n_levels)
    ground = scheme.ground_indices
    pop[ground] = 1.0 / len(ground)
    return pop


def ground_population(scheme: LevelScheme, weights: dict[str, float]) -> np.ndarray:
    """
    Population vector from {label: weight}; weights are normalised.

    Raises:
        KeyError: On an unknown label.
        ValueError: If a weight is negative, a label is not a ground level,
                    or all weights are zero.
    """
    pop = np.zeros(scheme.n_levels)
    for label, w in weights.items():
        i = scheme.index(label)
        if i not in scheme.ground_indices:
            raise ValueError(f"'{label}' is not a ground level")
        if w < 0:
            raise ValueError(f"population weight of '{label}' is negative")
        pop[i] = w
    total = pop.sum()
    if total <= 0:
        raise ValueError("ground population weights sum to zero")
    return pop / total


def _check_population(scheme: LevelScheme, population) -> np.ndarray:
    pop = np.asarray(population, dtype=float)
    if pop.shape != (scheme.n_levels,):
        raise ValueError(
            f"population has {pop.size} entries, scheme has {scheme.n_levels} levels"
        )
    if np.any(pop < 0) or abs(pop.sum() - 1.0) > 1e-9:
        raise ValueError(f"population must be non-negative and sum to 1, sums to {pop.sum()}")
    excited = scheme.excited_indices
    if excited and np.any(pop[excited] > 0):
        raise ValueError("population must be confined to ground levels")
    return pop


# ── Single point ──────────────────────────────────────────────────

def probe_point(
    scheme: LevelScheme,
    cavity: CavityConfig,
    population: np.ndarray,
    delta_lc: float,
    reset_rate: float | None = None,
) -> SpectrumPoint:
    """
    Transmission and reflection at one laser-cavity detuning.

    transmission_rel = sum_k <a_k^dag a_k> kappa^2 / eps^2 (1 for the empty
    cavity on resonance); reflection_rel = |1 - 2 kappa_ext alpha / eps|^2 with
    alpha = i<a_driven>, averaged over the ground population.

    Raises:
        ValueError: If the drive amplitude is not positive.
        SolverError: Propagated from the steady-state solve.
    """
    eps = cavity.drive_amplitude
    if not eps > 0:
        raise ValueError("spectra need a positive drive_amplitude")
    if reset_rate is None:
        reset_rate = 2 * scheme.gamma

    n, n_max, modes = scheme.n_levels, cavity.n_max, cavity.modes
    H = build_hamiltonian(scheme, cavity, delta_lc)
    fields = [annihilation(k, n, n_max, modes) for k in range(modes)]
    numbers = [
        OperatorMatrix((a.matrix.conj().T @ a.matrix).tocsr(), n, n_max, modes) for a in fields
    ]
    driven = fields[cavity.driven_mode]

    photons = 0.0
    reflection = 0.0
    for home in np.flatnonzero(population):
        weight = population[home]
        ops = collapse_operators(scheme, cavity, home_level=int(home), reset_rate=reset_rate)
        rho = steady_state(build_liouvillian(H, ops))
        photons += weight * sum(rho.expect(op).real for op in numbers)
        alpha = 1j * rho.expect(driven)
        reflection += weight * abs(1.0 - 2.0 * cavity.kappa_ext * alpha / eps) ** 2

    return SpectrumPoint(
        delta_lc=float(delta_lc),
        transmission_rel=float(photons * cavity.kappa**2 / eps**2),
        reflection_rel=float(reflection),
    )


# ── Sweeps ────────────────────────────────────────────────────────

def spectrum(
    scheme: LevelScheme,
    cavity: CavityConfig,
    ground_population,
    detunings,
    reset_rate: float | None = None,
    workers: int = 1,
) -> list[SpectrumPoint]:
    """
    Sweep the laser-cavity detuning.

    Args:
        scheme: Atomic level scheme.
        cavity: Cavity configuration (drive_amplitude > 0).
        ground_population: Fixed distribution over levels (ground only, sums to 1).
        detunings: Laser-cavity detunings (rad/s).
        reset_rate: Ground reset rate toward the probed level; defaults to 2*gamma.
        workers: Process count; results come back in input order.

    Returns:
        One SpectrumPoint per detuning.
    """
    pop = _check_population(scheme, ground_population)
    grid = [float(d) for d in detunings]
    if not all(np.isfinite(grid)):
        raise ValueError("detunings must be finite")

    point = partial(probe_point, scheme, cavity, pop, reset_rate=reset_rate)
    if workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, grid))
    return [point(d) for d in grid]


def spectrum_band(
    scheme: LevelScheme,
    cavity: CavityConfig,
    ground_population,
    detunings,
    delta_g0: float,
    delta_ca_spread: float,
    reset_rate: float | None = None,
    workers: int = 1,
) -> list[BandPoint]:
    """
    Envelope of the spectrum when g0 and delta_ca each vary by +-spread.

    The nine combinations of {-, 0, +} in both parameters are evaluated and the
    pointwise minimum and maximum are returned.
    """
    curves = []
    for sg, sd in itertools.product((-1, 0, 1), repeat=2):
        variant = replace(
            cavity,
            g0=cavity.g0 + sg * delta_g0,
            delta_ca=cavity.delta_ca + sd * delta_ca_spread,
        )
        curves.append(spectrum(scheme, variant, ground_population, detunings,
                               reset_rate=reset_rate, workers=workers))

    band = []
    for column in zip(*curves):
        t = [p.transmission_rel for p in column]
        r = [p.reflection_rel for p in column]
        band.append(BandPoint(column[0].delta_lc, min(t), max(t), min(r), max(r)))
    return band


def fit_coupling(
    scheme: LevelScheme,
    cavity: CavityConfig,
    ground_population,
    detunings,
    measured,
    g0_bounds: tuple[float, float],
    residual: str = "transmission",
    reset_rate: float | None = None,
    xatol: float = 2 * np.pi * 1e4,
) -> CouplingFit:
    """
    Least-squares fit of g0 to a measured transmission spectrum.

    Args:
        residual: "transmission" compares relative transmissions directly,
                  "amplitude" compares their square roots (field amplitudes).
        g0_bounds: Search interval (rad/s).
        xatol: Absolute tolerance on g0 (rad/s).

    Raises:
        ValueError: On an unknown residual or mismatched data lengths.
    """
    if residual not in ("transmission", "amplitude"):
        raise ValueError(f"Unknown residual '{residual}'. Known residuals: transmission, amplitude")
    grid = list(detunings)
    data = np.asarray(measured, dtype=float)
    if data.shape != (len(grid),):
        raise ValueError(f"{data.size} measurements for {len(grid)} detunings")
    lo, hi = g0_bounds
    if not 0 <= lo < hi:
        raise ValueError(f"invalid g0 bounds {g0_bounds}")

    transform = np.sqrt if residual == "amplitude" else (lambda x: x)
    target = transform(np.clip(data, 0.0, None))

    def cost(g0: float) -> float:
        points = spectrum(scheme, replace(cavity, g0=g0), ground_population, grid,
                          reset_rate=reset_rate)
        model = transform(np.array([p.transmission_rel for p in points]))
        return float(np.sum((model - target) ** 2))

    result = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                             options={"xatol": xatol})
    return CouplingFit(g0=float(result.x), residual=float(result.fun), evaluations=int(result.nfev))

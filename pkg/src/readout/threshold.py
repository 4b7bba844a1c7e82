"""
Thresholding readout: joint count distributions and their error budget.

For a detection window T the joint distribution of total reflection and
transmission counts is an exact mixture over quantum-jump configurations.
A configuration with k jumps is summarised by the time u spent in the other
state, whose density is

    lam0^j0 lam1^j1 exp(-lam0 (T-u) - lam1 u) (T-u)^(m0-1)/(m0-1)! u^(m1-1)/(m1-1)!

with m0 (m1) sojourns in the initial (other) state and j0 (j1) jumps out of it.
The u-integral is done by Gauss-Legendre quadrature with a doubling check.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import poisson

from ..cavity.lindblad import SolverError
from .jumps import HyperfineState, ReadoutModel, simulate_counts_batch
from .streams import blocks, stream, wilson_interval

TAIL_LIMIT = 1e-8
QUADRATURE_NODES = 64
QUADRATURE_TOL = 1e-10
_MAX_NODES = 1024

# Probe-power multipliers scanned by the fast readout
DEFAULT_POWER_FACTORS = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)


# ── Types ─────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class JointPmf:
    """
    P(c_R, c_T) on [0, cap_R] x [0, cap_T] for one initial state.

    `tail_mass` is the probability outside the caps; `truncated_mass` the
    probability of more than max_jumps jumps, folded into the last term.
    """

    detection_time: float
    initial_state: HyperfineState
    table: np.ndarray
    tail_mass: float
    truncated_mass: float = 0.0
    max_jumps: int = 2

    @property
    def caps(self) -> tuple[int, int]:
        return self.table.shape[0] - 1, self.table.shape[1] - 1

    def marginal_means(self) -> tuple[float, float]:
        c_R = np.arange(self.table.shape[0])
        c_T = np.arange(self.table.shape[1])
        return float(c_R @ self.table.sum(axis=1)), float(c_T @ self.table.sum(axis=0))


@dataclass(frozen=True, eq=False)
class DecisionMap:
    """table[c_R, c_T] is True where the outcome is classified F2."""

    table: np.ndarray
    detection_time: float

    @property
    def caps(self) -> tuple[int, int]:
        return self.table.shape[0] - 1, self.table.shape[1] - 1

    def classify(self, c_R, c_T) -> np.ndarray:
        """Vectorised lookup; outcomes beyond the caps read as F1."""
        decision, _ = self.classify_with_mask(c_R, c_T)
        return decision

    def classify_with_mask(self, c_R, c_T) -> tuple[np.ndarray, np.ndarray]:
        """(decision, inside) where inside flags outcomes within the caps."""
        c_R = np.asarray(c_R)
        c_T = np.asarray(c_T)
        cap_R, cap_T = self.caps
        inside = (c_R <= cap_R) & (c_T <= cap_T)
        decision = np.zeros(c_R.shape, dtype=bool)
        decision[inside] = self.table[c_R[inside], c_T[inside]]
        return decision, inside


@dataclass(frozen=True)
class ErrorReport:
    """
    Conditional misclassification probabilities of one readout method.

    Usage:
        report = tm_errors(reference_model(), 60e-6)
        print(report.eps, report.fidelity)
    """

    eps_F1: float
    eps_F2: float
    method: str
    detection_time: float
    ci_F1: tuple[float, float] | None = None
    ci_F2: tuple[float, float] | None = None
    n_trials: int | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("eps_F1", "eps_F2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} is outside [0, 1]")

    @property
    def eps(self) -> float:
        return 0.5 * (self.eps_F1 + self.eps_F2)

    @property
    def fidelity(self) -> float:
        return 1.0 - self.eps

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "detection_time_s": self.detection_time,
            "eps_F1": self.eps_F1,
            "eps_F2": self.eps_F2,
            "eps": self.eps,
            "fidelity": self.fidelity,
            "ci_F1": list(self.ci_F1) if self.ci_F1 else None,
            "ci_F2": list(self.ci_F2) if self.ci_F2 else None,
            "n_trials": self.n_trials,
            **self.details,
        }


@dataclass(frozen=True)
class OptimizationResult:
    T_opt: float
    report: ErrorReport
    curve: list[ErrorReport]


# ── Joint count distributions ─────────────────────────────────────

def count_caps(model: ReadoutModel, T: float) -> tuple[int, int]:
    """Per channel max(ceil(mu + 12 sqrt(mu)), 12), mu the larger state mean."""
    mu = np.maximum(model.rates(HyperfineState.F1), model.rates(HyperfineState.F2)) * T
    caps = [max(math.ceil(m + 12.0 * math.sqrt(m)), 12) for m in mu]
    return caps[0], caps[1]


def _sojourns(k: int) -> tuple[int, int, int, int]:
    """(m0, m1, j0, j1) for k jumps starting in the initial state."""
    if k % 2:
        m = (k + 1) // 2
        return m, m, m, m - 1
    return k // 2 + 1, k // 2, k // 2, k // 2


def _jump_density(k: int, u: np.ndarray, T: float, lam0: float, lam1: float) -> np.ndarray:
    m0, m1, j0, j1 = _sojourns(k)
    log_v = np.zeros_like(u)
    with np.errstate(divide="ignore"):
        if m0 > 1:
            log_v += (m0 - 1) * np.log(T - u) - math.lgamma(m0)
        if m1 > 1:
            log_v += (m1 - 1) * np.log(u) - math.lgamma(m1)
    if (j0 and lam0 == 0) or (j1 and lam1 == 0):
        return np.zeros_like(u)
    prefactor = (lam0**j0) * (lam1**j1)
    return prefactor * np.exp(-lam0 * (T - u) - lam1 * u + log_v)


def _mixture(model, state, T, max_jumps, caps, n_nodes):
    """Component tables, masses and tails for k = 0..max_jumps."""
    other = state.other
    r0, r1 = model.rates(state), model.rates(other)
    lam0, lam1 = model.jump_rate(state), model.jump_rate(other)
    c_R = np.arange(caps[0] + 1)
    c_T = np.arange(caps[1] + 1)

    def tables(u, w):
        mean_R = r0[0] * (T - u) + r1[0] * u
        mean_T = r0[1] * (T - u) + r1[1] * u
        P_R = poisson.pmf(c_R[None, :], mean_R[:, None])
        P_T = poisson.pmf(c_T[None, :], mean_T[:, None])
        sf_R = poisson.sf(caps[0], mean_R)
        sf_T = poisson.sf(caps[1], mean_T)
        table = np.einsum("i,ir,it->rt", w, P_R, P_T)
        tail = float(np.sum(w * (sf_R + sf_T - sf_R * sf_T)))
        return table, tail

    x, wx = leggauss(n_nodes)
    u = 0.5 * T * (x + 1.0)
    wu = 0.5 * T * wx

    components = []
    no_jump = math.exp(-lam0 * T)
    table, tail = tables(np.array([0.0]), np.array([no_jump]))
    components.append((no_jump, table, tail))
    for k in range(1, max_jumps + 1):
        wf = wu * _jump_density(k, u, T, lam0, lam1)
        table, tail = tables(u, wf)
        components.append((float(wf.sum()), table, tail))
    return components


def count_pmf(
    model: ReadoutModel,
    initial_state: HyperfineState,
    T: float,
    max_jumps: int = 2,
    caps: tuple[int, int] | None = None,
) -> JointPmf:
    """
    Exact joint pmf of total (c_R, c_T) counts in a window T.

    The probability of more than max_jumps jumps is folded into the
    highest-order term that carries mass and reported as truncated_mass.

    Raises:
        ValueError: On T < 0 or max_jumps < 0.
        SolverError: If the quadrature does not converge or the tail beyond
                     the caps exceeds 1e-8 (use larger caps).
    """
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if max_jumps < 0:
        raise ValueError(f"max_jumps must be >= 0, got {max_jumps}")
    state = HyperfineState(initial_state)
    if caps is None:
        caps = count_caps(model, T)

    if T == 0:
        table = np.zeros((caps[0] + 1, caps[1] + 1))
        table[0, 0] = 1.0
        return JointPmf(0.0, state, table, 0.0, 0.0, max_jumps)

    n_nodes = QUADRATURE_NODES
    previous = _mixture(model, state, T, max_jumps, caps, n_nodes)
    while True:
        if max_jumps == 0:
            current = previous
            break
        n_nodes *= 2
        if n_nodes > _MAX_NODES:
            raise SolverError(f"jump-time quadrature did not converge within {_MAX_NODES} nodes")
        current = _mixture(model, state, T, max_jumps, caps, n_nodes)
        diff = max(np.max(np.abs(a[1] - b[1])) for a, b in zip(previous, current))
        if diff <= QUADRATURE_TOL:
            break
        previous = current

    masses = [c[0] for c in current]
    truncated = max(0.0, 1.0 - sum(masses))
    last = max(k for k, m in enumerate(masses) if m > 0)
    table = np.zeros((caps[0] + 1, caps[1] + 1))
    tail = 0.0
    for k, (mass, comp, comp_tail) in enumerate(current):
        scale = (mass + truncated) / mass if k == last else 1.0
        table += scale * comp
        tail += scale * comp_tail

    if tail > TAIL_LIMIT:
        raise SolverError(
            f"probability beyond caps {caps} is {tail:.3e} > {TAIL_LIMIT:.0e}; increase the caps",
            residual=tail,
        )
    return JointPmf(float(T), state, table, float(tail), float(truncated), max_jumps)


# ── Decisions and errors ──────────────────────────────────────────

def decision_map(p_F1: JointPmf, p_F2: JointPmf) -> DecisionMap:
    """
    Classify a cell as F2 where p_F2 >= p_F1 (ties go to F2).

    Raises:
        ValueError: If the two pmfs are not on the same grid and window.
    """
    if p_F1.table.shape != p_F2.table.shape:
        raise ValueError(f"pmf grids differ: {p_F1.table.shape} vs {p_F2.table.shape}")
    if p_F1.detection_time != p_F2.detection_time:
        raise ValueError("pmfs were built for different detection times")
    return DecisionMap(p_F2.table >= p_F1.table, p_F1.detection_time)


def tm_errors(
    model: ReadoutModel,
    T: float,
    max_jumps: int = 2,
    caps: tuple[int, int] | None = None,
) -> ErrorReport:
    """
    Thresholding errors: eps_F1 = sum over F2 cells of p_F1, eps_F2 = sum over
    F1 cells of p_F2, each plus its tail mass.
    """
    if caps is None:
        caps = count_caps(model, T)
    p_F1 = count_pmf(model, HyperfineState.F1, T, max_jumps, caps)
    p_F2 = count_pmf(model, HyperfineState.F2, T, max_jumps, caps)
    dmap = decision_map(p_F1, p_F2)
    eps_F1 = min(1.0, float(p_F1.table[dmap.table].sum()) + p_F1.tail_mass)
    eps_F2 = min(1.0, float(p_F2.table[~dmap.table].sum()) + p_F2.tail_mass)
    return ErrorReport(
        eps_F1, eps_F2, "TM", float(T),
        details={
            "max_jumps": max_jumps,
            "caps": list(caps),
            "tail_mass_F1": p_F1.tail_mass,
            "tail_mass_F2": p_F2.tail_mass,
            "truncated_mass_F1": p_F1.truncated_mass,
            "truncated_mass_F2": p_F2.truncated_mass,
        },
    )


def optimize_detection_time(model: ReadoutModel, T_grid, max_jumps: int = 2) -> OptimizationResult:
    """
    Grid argmin of eps over detection times; ties go to the smaller T.

    Raises:
        ValueError: On an empty grid.
    """
    grid = sorted(float(t) for t in T_grid)
    if not grid:
        raise ValueError("T_grid is empty")
    curve = [tm_errors(model, T, max_jumps) for T in grid]
    best = 0
    for i, report in enumerate(curve):
        if report.eps < curve[best].eps:
            best = i
    return OptimizationResult(grid[best], curve[best], curve)


# ── Monte-Carlo check ─────────────────────────────────────────────

def _tm_block(model, state, T, dmap, master_seed, block):
    index, size = block
    rng = stream(master_seed, "tm_mc", state, index)
    batch = simulate_counts_batch(model, state, T, size, rng, n_bins=1)
    c_R, c_T = batch.counts[:, 0, 0], batch.counts[:, 0, 1]
    decision, inside = dmap.classify_with_mask(c_R, c_T)
    wrong = decision if state is HyperfineState.F1 else ~decision
    return int(np.sum(wrong | ~inside))


def tm_monte_carlo(
    model: ReadoutModel,
    T: float,
    n_trials: int,
    master_seed: int,
    max_jumps: int = 2,
    workers: int = 1,
    confidence: float = 0.95,
) -> ErrorReport:
    """
    Misclassification frequencies of the analytic decision map on simulated
    total counts. Outcomes beyond the caps count as errors.
    """
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    caps = count_caps(model, T)
    dmap = decision_map(
        count_pmf(model, HyperfineState.F1, T, max_jumps, caps),
        count_pmf(model, HyperfineState.F2, T, max_jumps, caps),
    )
    errors = {}
    for state in (HyperfineState.F1, HyperfineState.F2):
        work = partial(_tm_block, model, state, T, dmap, master_seed)
        parts = blocks(n_trials)
        if workers > 1 and len(parts) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                errors[state] = sum(pool.map(work, parts))
        else:
            errors[state] = sum(work(b) for b in parts)

    return ErrorReport(
        errors[HyperfineState.F1] / n_trials,
        errors[HyperfineState.F2] / n_trials,
        "TM-MC", float(T),
        ci_F1=wilson_interval(errors[HyperfineState.F1], n_trials, confidence),
        ci_F2=wilson_interval(errors[HyperfineState.F2], n_trials, confidence),
        n_trials=n_trials,
        details={"errors_F1": errors[HyperfineState.F1], "errors_F2": errors[HyperfineState.F2],
                 "master_seed": master_seed, "confidence": confidence},
    )


# ── Fast readout ──────────────────────────────────────────────────

def fast_readout_scenario(
    model: ReadoutModel,
    T: float,
    power_factor: float = 1.0,
    max_jumps: int = 2,
) -> ErrorReport:
    """TM errors with probe power scaled by `power_factor` and dead-time saturation applied."""
    scaled = model.scaled(power_factor).saturated()
    report = tm_errors(scaled, T, max_jumps)
    details = dict(report.details)
    details.update({
        "power_factor": power_factor,
        "dead_time_s": model.dead_time,
        "saturated_rates_per_s": {
            "r_R_F2": scaled.r_R_F2, "r_T_F2": scaled.r_T_F2,
            "r_R_F1": scaled.r_R_F1, "r_T_F1": scaled.r_T_F1,
        },
    })
    return ErrorReport(report.eps_F1, report.eps_F2, "TM-fast", report.detection_time, details=details)


def best_power_factor(
    model: ReadoutModel,
    T: float,
    power_factors,
    max_jumps: int = 2,
) -> tuple[float, ErrorReport, list[ErrorReport]]:
    """Scan probe powers; returns (best factor, its report, all reports)."""
    factors = [float(f) for f in power_factors]
    if not factors:
        raise ValueError("power_factors is empty")
    reports = [fast_readout_scenario(model, T, f, max_jumps) for f in factors]
    best = min(range(len(factors)), key=lambda i: (reports[i].eps, factors[i]))
    return factors[best], reports[best], reports

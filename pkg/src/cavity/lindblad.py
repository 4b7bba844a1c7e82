"""
Driven atom-cavity master equation.

Builds the rotating-frame Hamiltonian of a multi-level atom coupled to one or
two cavity polarization modes, the Lindblad superoperator, and its steady
state. Also provides the weak-drive closed form for a two-level atom.

Conventions: kappa is the cavity field decay rate (half width), gamma the
atomic coherence decay rate; collapse operators carry sqrt(2*kappa) and
sqrt(2*gamma). Operators act on atom (x) mode_0 (x) mode_1.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm
from scipy.sparse.linalg import splu

from ..atoms.levels import GROUND, LevelScheme

# Liouvillians up to this dimension are solved densely
_DENSE_LIMIT = 2500

_SQRT_HALF = 1.0 / math.sqrt(2.0)


class SolverError(RuntimeError):
    """Raised when a numerical solve misses its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


# ── Configuration types ───────────────────────────────────────────

@dataclass(frozen=True)
class CavityConfig:
    """
    Cavity parameters (all rates in rad/s).

    Mode 0 is pi-polarized and is the higher-frequency mode; mode 1 is the
    orthogonal linear mode, `birefringent_splitting` below it. The driven
    mode sits at w_c = w_a + delta_ca.
    """

    kappa: float
    g0: float
    birefringent_splitting: float = 0.0
    delta_ca: float = 0.0
    modes: int = 1
    driven_mode: int = 0
    drive_amplitude: float = 0.0
    n_max: int = 3
    mirror_loss_fraction: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.modes not in (1, 2):
            raise ValueError(f"modes must be 1 or 2, got {self.modes}")
        if not 0 <= self.driven_mode < self.modes:
            raise ValueError(
                f"driven_mode={self.driven_mode} is out of range for {self.modes} mode(s)"
            )
        if not 0 <= self.mirror_loss_fraction < 1:
            raise ValueError("mirror_loss_fraction must be in [0, 1)")

    @property
    def kappa_ext(self) -> float:
        """Decay rate through the input mirror (symmetric mirrors)."""
        return 0.5 * self.kappa * (1.0 - self.mirror_loss_fraction)

    def mode_offset(self, k: int) -> float:
        """Frequency of mode k relative to the driven mode."""
        base = (0.0, -self.birefringent_splitting)
        return base[k] - base[self.driven_mode]

    def polarization_weight(self, k: int, polarization: str) -> float:
        """Projection of a transition's polarization onto mode k."""
        if self.modes == 1:
            return 1.0
        if k == 0:
            return 1.0 if polarization == "pi" else 0.0
        return {"pi": 0.0, "sigma+": -_SQRT_HALF, "sigma-": _SQRT_HALF}[polarization]


@dataclass(frozen=True)
class OperatorMatrix:
    """Sparse operator on the joint atom (x) Fock space."""

    matrix: sp.csr_matrix
    n_levels: int
    n_max: int
    modes: int

    @property
    def dimension(self) -> int:
        return self.n_levels * (self.n_max + 1) ** self.modes

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conj().T.tocsr(), self.n_levels, self.n_max, self.modes)

    def hermiticity_defect(self) -> float:
        """||H - H^dagger|| / ||H|| (Frobenius); 0 for the zero operator."""
        scale = sparse_norm(self.matrix)
        if scale == 0:
            return 0.0
        return sparse_norm(self.matrix - self.matrix.conj().T) / scale


@dataclass(frozen=True)
class DensityOperator:
    matrix: np.ndarray
    n_levels: int
    n_max: int
    modes: int

    def expect(self, op: OperatorMatrix) -> complex:
        """Tr(op rho)."""
        return complex(np.sum(op.matrix.multiply(self.matrix.T)))

    def validate(self, tol: float = 1e-9, eig_tol: float = 1e-8) -> None:
        """
        Check trace, hermiticity and positivity.

        Raises:
            SolverError: If any density-operator invariant is violated.
        """
        trace = np.trace(self.matrix)
        if abs(trace - 1.0) > tol:
            raise SolverError(f"steady state has trace {trace}")
        defect = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if defect > tol:
            raise SolverError(f"steady state is not Hermitian (defect {defect:.3e})")
        lowest = np.linalg.eigvalsh(self.matrix).min()
        if lowest < -eig_tol:
            raise SolverError(f"steady state has negative eigenvalue {lowest:.3e}")


@dataclass(frozen=True)
class Liouvillian:
    """Column-stacked superoperator: vec(L(rho)) = matrix @ vec(rho)."""

    matrix: sp.csr_matrix
    n_levels: int
    n_max: int
    modes: int

    @property
    def dimension(self) -> int:
        return self.n_levels * (self.n_max + 1) ** self.modes


@dataclass(frozen=True)
class TwoLevelResponse:
    amplitude: complex
    transmission: float
    reflection: float


# ── Operators ─────────────────────────────────────────────────────

def _field_identity(n_max: int, modes: int) -> sp.csr_matrix:
    return sp.identity((n_max + 1) ** modes, format="csr", dtype=complex)


def annihilation(k: int, n_levels: int, n_max: int, modes: int) -> OperatorMatrix:
    """Annihilation operator of mode k on the joint space."""
    single = sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1,
                      shape=(n_max + 1, n_max + 1), format="csr", dtype=complex)
    eye = sp.identity(n_max + 1, format="csr", dtype=complex)
    field = single
    if modes == 2:
        field = sp.kron(single, eye) if k == 0 else sp.kron(eye, single)
    full = sp.kron(sp.identity(n_levels, format="csr", dtype=complex), field, format="csr")
    return OperatorMatrix(full, n_levels, n_max, modes)


def atomic_operator(i: int, j: int, n_levels: int, n_max: int, modes: int) -> OperatorMatrix:
    """|i><j| on the atom, identity on the field."""
    atom = sp.csr_matrix(([1.0 + 0j], ([i], [j])), shape=(n_levels, n_levels))
    full = sp.kron(atom, _field_identity(n_max, modes), format="csr")
    return OperatorMatrix(full, n_levels, n_max, modes)


def reference_transition(scheme: LevelScheme):
    """
    The transition whose frequency defines w_a: the strongest pi transition,
    or the strongest transition when the scheme has no pi transition.
    Returns None for a scheme without transitions.
    """
    if not scheme.transitions:
        return None
    pi = [t for t in scheme.transitions if t.polarization == "pi"]
    pool = pi or list(scheme.transitions)
    return max(pool, key=lambda t: abs(t.relative_dipole))


def atomic_frequency(scheme: LevelScheme) -> float:
    t = reference_transition(scheme)
    if t is None:
        return 0.0
    return scheme.levels[t.excited].energy - scheme.levels[t.ground].energy


def build_hamiltonian(scheme: LevelScheme, cavity: CavityConfig, delta_lc: float) -> OperatorMatrix:
    """
    Rotating-frame, rotating-wave Hamiltonian at laser-cavity detuning delta_lc.

    H = sum_k (w_k - w_l) a_k^dag a_k + sum_l (E_l - [l excited] w_l) |l><l|
        + sum_t sum_k g0 d_t w_k(t) (a_k sigma_t^+ + h.c.) + eps (a_d + a_d^dag)

    Raises:
        ValueError: If the scheme has no levels.
    """
    n = scheme.n_levels
    if n < 1:
        raise ValueError("level scheme has no levels")
    n_max, modes = cavity.n_max, cavity.modes
    dim = n * (n_max + 1) ** modes

    laser = atomic_frequency(scheme) + cavity.delta_ca + delta_lc

    diag_atom = np.array([
        lv.energy - (laser if lv.manifold != GROUND else 0.0) for lv in scheme.levels
    ])
    H = sp.kron(sp.diags(diag_atom.astype(complex)), _field_identity(n_max, modes), format="csr")

    ops = [annihilation(k, n, n_max, modes).matrix for k in range(modes)]
    for k, a in enumerate(ops):
        H = H + (cavity.mode_offset(k) - delta_lc) * (a.conj().T @ a)

    coupling = sp.csr_matrix((dim, dim), dtype=complex)
    for t in scheme.transitions:
        raising = atomic_operator(t.excited, t.ground, n, n_max, modes).matrix
        for k, a in enumerate(ops):
            g = cavity.g0 * t.relative_dipole * cavity.polarization_weight(k, t.polarization)
            if g != 0.0:
                coupling = coupling + g * (raising @ a)
    H = H + coupling + coupling.conj().T

    a_d = ops[cavity.driven_mode]
    H = H + cavity.drive_amplitude * (a_d + a_d.conj().T)

    return OperatorMatrix(H.tocsr(), n, n_max, modes)


def collapse_operators(
    scheme: LevelScheme,
    cavity: CavityConfig,
    home_level: int | None = None,
    reset_rate: float = 0.0,
) -> list[tuple[OperatorMatrix, float]]:
    """
    Dissipators as (operator, rate) pairs; the collapse operator is sqrt(rate)*op.

    - sqrt(2 kappa) a_k for every mode
    - sqrt(2 gamma) sum_t d_t |g><e| for each polarization channel
    - decay outside the scheme returns to `home_level`
    - optional ground reset |home><g| at `reset_rate` for every other ground level
    """
    n, n_max, modes = scheme.n_levels, cavity.n_max, cavity.modes
    dim = n * (n_max + 1) ** modes
    if home_level is None:
        ref = reference_transition(scheme)
        home_level = ref.ground if ref is not None else scheme.ground_indices[0]
    if scheme.levels[home_level].manifold != GROUND:
        raise ValueError(f"home level '{scheme.levels[home_level].label}' is not a ground level")

    result = [(annihilation(k, n, n_max, modes), 2 * cavity.kappa) for k in range(modes)]

    for pol in ("sigma-", "pi", "sigma+"):
        channel = sp.csr_matrix((dim, dim), dtype=complex)
        used = False
        for t in scheme.transitions:
            if t.polarization == pol:
                channel = channel + t.relative_dipole * atomic_operator(
                    t.ground, t.excited, n, n_max, modes).matrix
                used = True
        if used:
            result.append((OperatorMatrix(channel.tocsr(), n, n_max, modes), 2 * scheme.gamma))

    for e in scheme.excited_indices:
        leak = scheme.outside_branching[e]
        if leak > 0:
            result.append((atomic_operator(home_level, e, n, n_max, modes), 2 * scheme.gamma * leak))

    if reset_rate > 0:
        for g in scheme.ground_indices:
            if g != home_level:
                result.append((atomic_operator(home_level, g, n, n_max, modes), reset_rate))

    return result


# ── Liouvillian and steady state ──────────────────────────────────

def build_liouvillian(
    H: OperatorMatrix,
    collapse_ops: list[tuple[OperatorMatrix, float]],
) -> Liouvillian:
    """
    L(rho) = -i[H, rho] + sum_k rate_k (C_k rho C_k^dag - 1/2 {C_k^dag C_k, rho}).

    Raises:
        ValueError: On a negative rate or an operator of the wrong dimension.
    """
    d = H.dimension
    eye = sp.identity(d, format="csr", dtype=complex)
    Hm = H.matrix
    L = -1j * (sp.kron(eye, Hm) - sp.kron(Hm.T, eye))

    for op, rate in collapse_ops:
        if rate < 0:
            raise ValueError(f"collapse rate must be >= 0, got {rate}")
        if op.matrix.shape != (d, d):
            raise ValueError(
                f"collapse operator has shape {op.matrix.shape}, expected {(d, d)}"
            )
        if rate == 0:
            continue
        C = op.matrix
        CdC = C.conj().T @ C
        L = L + rate * (
            sp.kron(C.conj(), C)
            - 0.5 * sp.kron(eye, CdC)
            - 0.5 * sp.kron(CdC.T, eye)
        )

    return Liouvillian(L.tocsr(), H.n_levels, H.n_max, H.modes)


def _trace_row(d: int) -> np.ndarray:
    return np.arange(d) * (d + 1)


def trace_defect(L: Liouvillian) -> float:
    """max |Tr(L(.))| relative to max |L|; zero for a trace-preserving map."""
    d = L.dimension
    row = np.zeros(d * d, dtype=complex)
    row[_trace_row(d)] = 1.0
    scale = abs(L.matrix).max()
    if scale == 0:
        return 0.0
    return float(np.abs(L.matrix.T @ row).max() / scale)


def steady_state(L: Liouvillian, tol: float = 1e-9, max_refinements: int = 3) -> DensityOperator:
    """
    Solve L(rho) = 0 with Tr(rho) = 1.

    One diagonal row of L is replaced by the (scaled) trace functional and the
    resulting linear system is solved directly, densely for small systems and
    by sparse LU otherwise, with iterative refinement.

    Raises:
        SolverError: If the residual ||L(rho)|| exceeds tol * ||L|| after the
                     refinement budget, or rho violates a density-operator invariant.
    """
    d = L.dimension
    n2 = d * d
    A = L.matrix
    scale = abs(A).max() or 1.0

    mask = np.ones(n2)
    mask[0] = 0.0
    trace_cols = _trace_row(d)
    M = sp.diags(mask) @ A + sp.csr_matrix(
        (np.full(d, scale, dtype=complex), (np.zeros(d, dtype=int), trace_cols)),
        shape=(n2, n2),
    )
    rhs = np.zeros(n2, dtype=complex)
    rhs[0] = scale

    try:
        if n2 <= _DENSE_LIMIT:
            dense = M.toarray()
            solve = lambda b: np.linalg.solve(dense, b)  # noqa: E731
        else:
            lu = splu(M.tocsc())
            solve = lu.solve
        x = solve(rhs)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        raise SolverError(f"steady state is not unique: {exc}") from exc
    norm_L = sparse_norm(A) or 1.0
    residual = np.linalg.norm(A @ x)
    for _ in range(max_refinements):
        if residual <= 0.1 * tol * norm_L:
            break
        x = x + solve(rhs - M @ x)
        residual = np.linalg.norm(A @ x)

    rho = x.reshape((d, d), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real

    residual = np.linalg.norm(A @ rho.reshape(n2, order="F"))
    if residual > tol * norm_L:
        raise SolverError(
            f"steady state residual {residual:.3e} exceeds {tol:.1e} * ||L|| = {tol * norm_L:.3e}",
            residual=residual,
        )

    state = DensityOperator(rho, L.n_levels, L.n_max, L.modes)
    state.validate()
    return state


# ── Weak-drive closed form ────────────────────────────────────────

def analytic_two_level(
    g: float,
    kappa: float,
    gamma: float,
    delta_c: float,
    delta_a: float,
    eps: float,
    kappa_ext: float | None = None,
) -> TwoLevelResponse:
    """
    Linear-response intracavity amplitude of a driven two-level atom-cavity system.

    alpha = eps (gamma + i delta_a) / [(kappa + i delta_c)(gamma + i delta_a) + g^2]

    delta_c and delta_a are cavity and atom detunings from the drive. The
    amplitude is referenced to the input-field phase. Transmission is relative
    to the empty cavity on resonance; reflection is |1 - 2 kappa_ext alpha/eps|^2.
    """
    if kappa_ext is None:
        kappa_ext = 0.5 * kappa
    atom = gamma + 1j * delta_a
    alpha = eps * atom / ((kappa + 1j * delta_c) * atom + g**2)
    transmission = abs(alpha * kappa / eps) ** 2
    reflection = abs(1.0 - 2.0 * kappa_ext * alpha / eps) ** 2
    return TwoLevelResponse(complex(alpha), float(transmission), float(reflection))

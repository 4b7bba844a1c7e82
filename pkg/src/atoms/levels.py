"""
Atomic level schemes for the cavity readout model.

Builds generic and 87Rb D2 level schemes with linear Zeeman shifts, a scalar
excited-state light shift and relative dipole coefficients obtained from
Clebsch-Gordan algebra. Also computes dispersive cavity shifts.

All energies and rates are angular frequencies (rad/s).
"""

import configparser
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction

TWO_PI = 2 * math.pi

# Bohr magneton over Planck constant
MU_B_MHZ_PER_GAUSS = 1.39962449361

# 87Rb D2 line constants (MHz)
RB87_NUCLEAR_SPIN = Fraction(3, 2)
RB87_GROUND_SPLITTING_MHZ = 6834.682611
RB87_EXCITED_OFFSETS_MHZ = {3: 0.0, 2: -266.650, 1: -423.597, 0: -495.815}
RB87_GROUND_G_F = {1: -0.5, 2: 0.5}
RB87_EXCITED_G_F = {0: 0.0, 1: 2.0 / 3.0, 2: 2.0 / 3.0, 3: 2.0 / 3.0}

GROUND = "ground"
EXCITED = "excited"

POLARIZATIONS = {-1: "sigma-", 0: "pi", 1: "sigma+"}
_DELTA_M = {name: dm for dm, name in POLARIZATIONS.items()}

_BRANCHING_TOL = 1e-9


# ── Angular momentum algebra ──────────────────────────────────────

def _twice(value, name: str) -> int:
    """Return 2*value as an int, rejecting anything that is not a half-integer."""
    doubled = Fraction(value).limit_denominator(1000) * 2
    if doubled.denominator != 1 or abs(float(doubled) - 2 * float(value)) > 1e-9:
        raise ValueError(f"{name}={value} is not an integer or half-integer")
    return int(doubled)


def _fact(n: int) -> int:
    return math.factorial(n)


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """
    Condon-Shortley Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M>.

    Evaluated with the explicit Racah sum in exact rational arithmetic;
    only the final square root is taken in floating point.

    Raises:
        ValueError: If any argument is not a valid angular momentum
                    (negative j, |m| > j, or m and j of different parity).
    """
    tj1, tm1 = _twice(j1, "j1"), _twice(m1, "m1")
    tj2, tm2 = _twice(j2, "j2"), _twice(m2, "m2")
    tJ, tM = _twice(J, "J"), _twice(M, "M")

    for tj, tm, label in ((tj1, tm1, "j1"), (tj2, tm2, "j2"), (tJ, tM, "J")):
        if tj < 0:
            raise ValueError(f"{label} must be non-negative, got {tj / 2}")
        if abs(tm) > tj or (tj - tm) % 2:
            raise ValueError(f"projection {tm / 2} is invalid for {label}={tj / 2}")

    if tm1 + tm2 != tM:
        return 0.0
    if tJ < abs(tj1 - tj2) or tJ > tj1 + tj2 or (tj1 + tj2 + tJ) % 2:
        return 0.0

    a = (tj1 + tj2 - tJ) // 2
    b = (tj1 - tm1) // 2
    c = (tj2 + tm2) // 2
    d = (tJ - tj2 + tm1) // 2
    e = (tJ - tj1 - tm2) // 2

    prefactor = Fraction(
        (tJ + 1)
        * _fact((tJ + tj1 - tj2) // 2)
        * _fact((tJ - tj1 + tj2) // 2)
        * _fact(a),
        _fact((tj1 + tj2 + tJ) // 2 + 1),
    )
    prefactor *= (
        _fact((tJ + tM) // 2) * _fact((tJ - tM) // 2)
        * _fact(b) * _fact((tj1 + tm1) // 2)
        * _fact((tj2 - tm2) // 2) * _fact(c)
    )

    total = Fraction(0)
    for k in range(max(0, -d, -e), min(a, b, c) + 1):
        denom = (
            _fact(k) * _fact(a - k) * _fact(b - k) * _fact(c - k)
            * _fact(d + k) * _fact(e + k)
        )
        total += Fraction(-1 if k % 2 else 1, denom)

    if total == 0:
        return 0.0
    magnitude = math.sqrt(prefactor * total * total)
    return magnitude if total > 0 else -magnitude


def hyperfine_dipole(j_ground, j_excited, nuclear_spin, F, m, F_exc, m_exc) -> float:
    """
    Relative dipole coefficient between |F m> and |F' m'> of one fine-structure line.

    The hyperfine states are expanded in the uncoupled |J m_J; I m_I> basis and
    the dipole acts on J only, so the coefficient is a sum of products of three
    Clebsch-Gordan coefficients. For every excited level the squares summed over
    all ground levels of the line equal 1.
    """
    q = Fraction(m_exc) - Fraction(m)
    if abs(q) > 1:
        return 0.0

    two_i = _twice(nuclear_spin, "I")
    total = 0.0
    for two_mi in range(-two_i, two_i + 1, 2):
        m_i = Fraction(two_mi, 2)
        m_j = Fraction(m) - m_i
        m_j_exc = Fraction(m_exc) - m_i
        if abs(m_j) > j_ground or abs(m_j_exc) > j_excited:
            continue
        total += (
            clebsch_gordan(j_ground, m_j, nuclear_spin, m_i, F, m)
            * clebsch_gordan(j_excited, m_j_exc, nuclear_spin, m_i, F_exc, m_exc)
            * clebsch_gordan(j_ground, m_j, 1, q, j_excited, m_j_exc)
        )
    return total


# ── Level scheme types ────────────────────────────────────────────

@dataclass(frozen=True)
class Level:
    label: str
    F: float
    m_F: float
    energy: float
    manifold: str


@dataclass(frozen=True)
class Transition:
    ground: int
    excited: int
    polarization: str
    relative_dipole: float


@dataclass(frozen=True)
class LevelScheme:
    """
    Immutable atomic level scheme.

    `outside_branching[i]` is the share of the decay of excited level i that
    ends in ground levels not represented in the scheme (zero for ground levels).

    Usage:
        scheme = build_rb87_d2(B=1.0, light_shift=TWO_PI * 95e6)
        t = scheme.find_transition("g(2,2)", "e(3,3)")
        g_eff = coupling_strength(scheme, TWO_PI * 215e6, t)
    """

    levels: tuple[Level, ...]
    transitions: tuple[Transition, ...]
    gamma: float
    outside_branching: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.outside_branching:
            object.__setattr__(self, "outside_branching", (0.0,) * len(self.levels))
        self.validate()

    # ── Lookup ─────────────────────────────────────────────────

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def ground_indices(self) -> list[int]:
        return [i for i, lv in enumerate(self.levels) if lv.manifold == GROUND]

    @property
    def excited_indices(self) -> list[int]:
        return [i for i, lv in enumerate(self.levels) if lv.manifold == EXCITED]

    def index(self, label: str) -> int:
        """
        Index of a level by label.

        Raises:
            KeyError: If the label isn't in the scheme.
        """
        for i, lv in enumerate(self.levels):
            if lv.label == label:
                return i
        raise KeyError(
            f"Unknown level '{label}'. "
            f"Known levels: {', '.join(lv.label for lv in self.levels)}"
        )

    def find_transition(self, ground: str | int, excited: str | int) -> Transition:
        """
        Look up the transition between two levels.

        Raises:
            KeyError: If no dipole-allowed transition connects them.
        """
        gi = ground if isinstance(ground, int) else self.index(ground)
        ei = excited if isinstance(excited, int) else self.index(excited)
        for t in self.transitions:
            if t.ground == gi and t.excited == ei:
                return t
        raise KeyError(
            f"No transition between '{self.levels[gi].label}' and "
            f"'{self.levels[ei].label}' in this scheme"
        )

    # ── Invariants ─────────────────────────────────────────────

    def validate(self) -> None:
        """
        Check the scheme invariants.

        Raises:
            ValueError: On a selection-rule violation, broken branching
                        normalisation, non-finite energy or gamma <= 0.
        """
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if len(self.outside_branching) != len(self.levels):
            raise ValueError("outside_branching must have one entry per level")
        for lv in self.levels:
            if lv.manifold not in (GROUND, EXCITED):
                raise ValueError(f"Level '{lv.label}' has unknown manifold '{lv.manifold}'")
            if not math.isfinite(lv.energy):
                raise ValueError(f"Level '{lv.label}' has non-finite energy")

        weight = [0.0] * len(self.levels)
        for t in self.transitions:
            g, e = self.levels[t.ground], self.levels[t.excited]
            if g.manifold != GROUND or e.manifold != EXCITED:
                raise ValueError(f"Transition {g.label}->{e.label} must go ground->excited")
            dm = round(e.m_F - g.m_F)
            if abs(e.m_F - g.m_F - dm) > 1e-9 or POLARIZATIONS.get(dm) != t.polarization:
                raise ValueError(
                    f"Transition {g.label}->{e.label} has delta m={e.m_F - g.m_F} "
                    f"but polarization '{t.polarization}'"
                )
            if abs(t.relative_dipole) > 1 + 1e-12:
                raise ValueError(f"Transition {g.label}->{e.label} has |dipole| > 1")
            weight[t.excited] += t.relative_dipole**2

        for i in self.excited_indices:
            total = weight[i] + self.outside_branching[i]
            if abs(total - 1.0) > _BRANCHING_TOL:
                raise ValueError(
                    f"Branching of '{self.levels[i].label}' sums to {total:.12f}, expected 1"
                )

    # ── Derived schemes ────────────────────────────────────────

    def subset(self, labels: list[str]) -> "LevelScheme":
        """
        Restrict the scheme to the given levels.

        Decay channels into dropped ground levels move to outside_branching.
        """
        keep = [self.index(label) for label in labels]
        remap = {old: new for new, old in enumerate(keep)}
        transitions = tuple(
            replace(t, ground=remap[t.ground], excited=remap[t.excited])
            for t in self.transitions
            if t.ground in remap and t.excited in remap
        )
        outside = []
        for old in keep:
            if self.levels[old].manifold == GROUND:
                outside.append(0.0)
                continue
            kept = sum(t.relative_dipole**2 for t in self.transitions
                       if t.excited == old and t.ground in remap)
            outside.append(max(0.0, 1.0 - kept))
        return LevelScheme(
            levels=tuple(self.levels[i] for i in keep),
            transitions=transitions,
            gamma=self.gamma,
            outside_branching=tuple(outside),
        )

    # ── Serialisation ──────────────────────────────────────────

    def to_config(self) -> str:
        """Render the scheme as a sectioned key/value document."""
        parser = configparser.ConfigParser(interpolation=None)
        parser["scheme"] = {"gamma_rad_per_s": repr(self.gamma)}
        for i, lv in enumerate(self.levels):
            parser[f"level.{i}"] = {
                "label": lv.label,
                "f": repr(float(lv.F)),
                "m_f": repr(float(lv.m_F)),
                "energy_rad_per_s": repr(lv.energy),
                "manifold": lv.manifold,
                "outside_branching": repr(self.outside_branching[i]),
            }
        for k, t in enumerate(self.transitions):
            parser[f"transition.{k}"] = {
                "ground": str(t.ground),
                "excited": str(t.excited),
                "polarization": t.polarization,
                "relative_dipole": repr(t.relative_dipole),
            }
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_config(cls, text: str) -> "LevelScheme":
        """Parse a document written by to_config()."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(text)
        levels, outside, transitions = [], [], []
        level_sections = sorted(
            (s for s in parser.sections() if s.startswith("level.")),
            key=lambda s: int(s.split(".")[1]),
        )
        for name in level_sections:
            sec = parser[name]
            levels.append(Level(
                label=sec["label"],
                F=float(sec["f"]),
                m_F=float(sec["m_f"]),
                energy=float(sec["energy_rad_per_s"]),
                manifold=sec["manifold"],
            ))
            outside.append(float(sec.get("outside_branching", "0.0")))
        transition_sections = sorted(
            (s for s in parser.sections() if s.startswith("transition.")),
            key=lambda s: int(s.split(".")[1]),
        )
        for name in transition_sections:
            sec = parser[name]
            transitions.append(Transition(
                ground=int(sec["ground"]),
                excited=int(sec["excited"]),
                polarization=sec["polarization"],
                relative_dipole=float(sec["relative_dipole"]),
            ))
        return cls(
            levels=tuple(levels),
            transitions=tuple(transitions),
            gamma=float(parser["scheme"]["gamma_rad_per_s"]),
            outside_branching=tuple(outside),
        )


# ── Builders ──────────────────────────────────────────────────────

def _level_label(manifold: str, F: int, m: int) -> str:
    prefix = "g" if manifold == GROUND else "e"
    return f"{prefix}({F},{m})"


def build_rb87_d2(
    B: float,
    light_shift: float,
    gamma: float = TWO_PI * 3e6,
) -> LevelScheme:
    """
    87Rb D2 scheme: the five F=2 ground sublevels and the F'=1,2,3 manifolds.

    Args:
        B: Magnetic field in gauss (linear Zeeman regime).
        light_shift: Scalar shift added to every excited energy (rad/s).
        gamma: Excited-state decay rate (rad/s).

    Returns:
        LevelScheme with 20 levels. Decay into F=1 is recorded in
        outside_branching.
    """
    if B < 0:
        raise ValueError(f"B must be >= 0, got {B}")

    J_g, J_e, I = Fraction(1, 2), Fraction(3, 2), RB87_NUCLEAR_SPIN
    zeeman = TWO_PI * MU_B_MHZ_PER_GAUSS * 1e6 * B

    levels: list[Level] = []
    for m in range(-2, 3):
        levels.append(Level(_level_label(GROUND, 2, m), 2, m,
                            zeeman * RB87_GROUND_G_F[2] * m, GROUND))
    for F_exc in (3, 2, 1):
        for m in range(-F_exc, F_exc + 1):
            energy = (TWO_PI * RB87_EXCITED_OFFSETS_MHZ[F_exc] * 1e6
                      + zeeman * RB87_EXCITED_G_F[F_exc] * m
                      + light_shift)
            levels.append(Level(_level_label(EXCITED, F_exc, m), F_exc, m, energy, EXCITED))

    transitions: list[Transition] = []
    outside = [0.0] * len(levels)
    for ei, exc in enumerate(levels):
        if exc.manifold != EXCITED:
            continue
        for gi, gnd in enumerate(levels):
            if gnd.manifold != GROUND or abs(exc.m_F - gnd.m_F) > 1:
                continue
            d = hyperfine_dipole(J_g, J_e, I, gnd.F, gnd.m_F, exc.F, exc.m_F)
            if abs(d) > 1e-14:
                dm = int(exc.m_F - gnd.m_F)
                transitions.append(Transition(gi, ei, POLARIZATIONS[dm], d))
        outside[ei] = sum(
            hyperfine_dipole(J_g, J_e, I, 1, m, exc.F, exc.m_F) ** 2
            for m in range(-1, 2)
        )

    return LevelScheme(tuple(levels), tuple(transitions), gamma, tuple(outside))


def build_two_level(gamma: float = TWO_PI * 3e6, detuning: float = 0.0) -> LevelScheme:
    """Generic two-level atom: ground 'g', excited 'e' at `detuning`, pi-coupled."""
    levels = (
        Level("g", 0, 0, 0.0, GROUND),
        Level("e", 1, 0, detuning, EXCITED),
    )
    return LevelScheme(levels, (Transition(0, 1, "pi", 1.0),), gamma)


def empty_scheme(gamma: float = TWO_PI * 3e6) -> LevelScheme:
    """A single ground level with no transitions: the empty-cavity reference."""
    return LevelScheme((Level("g", 0, 0, 0.0, GROUND),), (), gamma)


# ── Couplings and shifts ──────────────────────────────────────────

def coupling_strength(scheme: LevelScheme, g0: float, transition) -> float:
    """
    Effective single-photon coupling of one transition (rad/s).

    Args:
        scheme: The level scheme.
        g0: Maximum coupling (cycling transition).
        transition: A Transition of the scheme or a (ground, excited) label pair.

    Raises:
        KeyError: If the transition doesn't exist in the scheme.
    """
    if not isinstance(transition, Transition):
        ground, excited = transition
        transition = scheme.find_transition(ground, excited)
    elif transition not in scheme.transitions:
        raise KeyError(f"Transition {transition} is not part of this scheme")
    return g0 * transition.relative_dipole


def dispersive_shift(g_eff: float, detuning: float) -> float:
    """Cavity resonance shift per far-detuned atom, g_eff**2 / detuning (rad/s)."""
    if detuning == 0:
        raise ValueError("dispersive shift is undefined at zero detuning")
    return g_eff**2 / detuning


def rb87_f1_dispersive_shift(
    g0: float,
    m_F: int = 1,
    polarization: str = "pi",
    cavity_detuning: float = 0.0,
) -> float:
    """
    Dispersive shift of a cavity tuned to F=2 -> F'=3 caused by one F=1 atom.

    Sums g_eff**2 / delta over the F=1 -> F'=0,1,2 transitions of the given
    polarization, each with its own hyperfine-resolved detuning.

    Args:
        g0: Maximum coupling (rad/s).
        m_F: Ground sublevel of the F=1 atom.
        polarization: Cavity polarization seen by the atom.
        cavity_detuning: Cavity offset from the F=2 -> F'=3 line (rad/s).
    """
    if polarization not in _DELTA_M:
        raise ValueError(f"Unknown polarization '{polarization}'")
    q = _DELTA_M[polarization]
    J_g, J_e, I = Fraction(1, 2), Fraction(3, 2), RB87_NUCLEAR_SPIN

    shift = 0.0
    for F_exc, offset_mhz in RB87_EXCITED_OFFSETS_MHZ.items():
        m_exc = m_F + q
        if F_exc == 3 or abs(m_exc) > F_exc:
            continue
        d = hyperfine_dipole(J_g, J_e, I, 1, m_F, F_exc, m_exc)
        if d == 0.0:
            continue
        detuning = cavity_detuning - TWO_PI * 1e6 * (RB87_GROUND_SPLITTING_MHZ + offset_mhz)
        shift += dispersive_shift(g0 * d, detuning)
    return shift

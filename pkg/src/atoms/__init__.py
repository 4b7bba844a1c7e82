from .levels import (
    EXCITED,
    GROUND,
    TWO_PI,
    Level,
    LevelScheme,
    Transition,
    build_rb87_d2,
    build_two_level,
    clebsch_gordan,
    coupling_strength,
    dispersive_shift,
    empty_scheme,
    hyperfine_dipole,
    rb87_f1_dispersive_shift,
)

__all__ = [
    "EXCITED",
    "GROUND",
    "TWO_PI",
    "Level",
    "LevelScheme",
    "Transition",
    "build_rb87_d2",
    "build_two_level",
    "clebsch_gordan",
    "coupling_strength",
    "dispersive_shift",
    "empty_scheme",
    "hyperfine_dipole",
    "rb87_f1_dispersive_shift",
]

from .lindblad import (
    CavityConfig,
    DensityOperator,
    Liouvillian,
    OperatorMatrix,
    SolverError,
    analytic_two_level,
    build_hamiltonian,
    build_liouvillian,
    collapse_operators,
    steady_state,
)
from .spectrum import (
    SpectrumPoint,
    fit_coupling,
    ground_population,
    spectrum,
    spectrum_band,
    uniform_ground_population,
)

__all__ = [
    "CavityConfig",
    "DensityOperator",
    "Liouvillian",
    "OperatorMatrix",
    "SolverError",
    "SpectrumPoint",
    "analytic_two_level",
    "build_hamiltonian",
    "build_liouvillian",
    "collapse_operators",
    "fit_coupling",
    "ground_population",
    "spectrum",
    "spectrum_band",
    "steady_state",
    "uniform_ground_population",
]

from .statistics import (
    PrepModel,
    PreparationErrors,
    PrepSimulation,
    PulseDistribution,
    detection_histogram,
    dispersive_transmission,
    false_positive_prob,
    first_pulse_success_weight,
    jump_during_window,
    mean_pulses,
    multi_atom_prob,
    preparation_errors,
    pulse_success_prob,
    pulses_pmf,
    simulate_preparation,
    with_preparation_errors,
)

__all__ = [
    "PrepModel",
    "PreparationErrors",
    "PrepSimulation",
    "PulseDistribution",
    "detection_histogram",
    "dispersive_transmission",
    "false_positive_prob",
    "first_pulse_success_weight",
    "jump_during_window",
    "mean_pulses",
    "multi_atom_prob",
    "preparation_errors",
    "pulse_success_prob",
    "pulses_pmf",
    "simulate_preparation",
    "with_preparation_errors",
]

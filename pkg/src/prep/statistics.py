"""
Single-atom preparation statistics.

Atoms are extracted one microwave pulse at a time from a reservoir whose size
is Poisson distributed (post-selected to n <= n_cap). After each pulse a
transmission measurement decides whether an atom arrived: counts at or below
the threshold mean "atom present". A failed pulse leaves the reservoir
unchanged; runs without success within max_pulses are discarded.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np
from scipy.special import gammaincc, pdtr
from scipy.stats import poisson

from ..readout.streams import blocks, stream, wilson_interval
from ..readout.threshold import ErrorReport


@dataclass(frozen=True)
class PrepModel:
    """
    Reservoir and detection parameters of the preparation protocol.

    Usage:
        model = PrepModel()
        print(multi_atom_prob(model), mean_pulses(model))
    """

    n_bar: float = 1.5
    p_transfer: float = 0.042
    max_pulses: int = 50
    lambda_low: float = 0.3
    lambda_high: float = 22.0
    count_threshold: int = 5
    n_cap: int = 5
    detection_window: float = 20e-6

    def __post_init__(self):
        if not self.n_bar > 0:
            raise ValueError(f"n_bar must be > 0, got {self.n_bar}")
        if not 0.0 <= self.p_transfer <= 1.0:
            raise ValueError(f"p_transfer must be in [0, 1], got {self.p_transfer}")
        if self.max_pulses < 1:
            raise ValueError(f"max_pulses must be >= 1, got {self.max_pulses}")
        if not 0 <= self.lambda_low < self.lambda_high:
            raise ValueError(
                f"need 0 <= lambda_low < lambda_high, got {self.lambda_low}, {self.lambda_high}"
            )
        if self.count_threshold < 0:
            raise ValueError(f"count_threshold must be >= 0, got {self.count_threshold}")
        if self.n_cap < 0:
            raise ValueError(f"n_cap must be >= 0, got {self.n_cap}")

    def reservoir_weights(self) -> np.ndarray:
        """Poisson(n_bar) restricted to n = 0..n_cap and renormalised."""
        w = poisson.pmf(np.arange(self.n_cap + 1), self.n_bar)
        return w / w.sum()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PulseDistribution:
    """pmf[j] = P(first success on pulse j + 1); discard = P(no success)."""

    pmf: np.ndarray
    discard: float


@dataclass(frozen=True)
class PreparationErrors:
    """Probability that the prepared state has already jumped."""

    p_F2: float
    p_F1: float


@dataclass(frozen=True)
class PrepSimulation:
    n_trials: int
    successes: int
    multi_atom: int
    discarded: int
    pulse_counts: np.ndarray

    @property
    def multi_atom_fraction(self) -> float:
        return self.multi_atom / self.successes if self.successes else 0.0

    def multi_atom_interval(self, confidence: float = 0.95) -> tuple[float, float]:
        return wilson_interval(self.multi_atom, self.successes, confidence)


# ── Pulse statistics ──────────────────────────────────────────────

def pulse_success_prob(n: int, p: float) -> float:
    """P(at least one of n atoms transfers) = 1 - (1 - p)^n."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    return -math.expm1(n * math.log1p(-p)) if p < 1 else (1.0 if n > 0 else 0.0)


def _success_probs(model: PrepModel) -> np.ndarray:
    return np.array([pulse_success_prob(n, model.p_transfer) for n in range(model.n_cap + 1)])


def pulses_pmf(model: PrepModel) -> PulseDistribution:
    """Distribution of the pulse index of the first success, plus the discard probability."""
    w = model.reservoir_weights()
    s = _success_probs(model)
    j = np.arange(model.max_pulses)
    per_n = s[:, None] * (1.0 - s[:, None]) ** j[None, :]
    pmf = w @ per_n
    discard = float(w @ (1.0 - s) ** model.max_pulses)
    return PulseDistribution(pmf, discard)


def mean_pulses(model: PrepModel) -> float:
    """Mean number of pulses of the successful runs."""
    dist = pulses_pmf(model)
    success = 1.0 - dist.discard
    if success <= 0:
        raise ValueError("preparation never succeeds for this model")
    return float(np.arange(1, model.max_pulses + 1) @ dist.pmf / success)


def multi_atom_prob(model: PrepModel) -> float:
    """
    P(the successful pulse transferred two or more atoms | success).

    The transfer count on a pulse is Binomial(n, p); the pulse that ends the
    run is the first with k >= 1, so its k is Binomial conditioned on k >= 1.
    With the default model (n_bar = 1.5) this is 0.0203; 2.6% corresponds to
    n_bar ~ 1.9.
    """
    w = model.reservoir_weights()
    p = model.p_transfer
    numerator = 0.0
    denominator = 0.0
    for n in range(1, model.n_cap + 1):
        s = pulse_success_prob(n, p)
        if s == 0:
            continue
        reach = w[n] * (1.0 - (1.0 - s) ** model.max_pulses)
        several = 1.0 - binomial_at_most_one(n, p)
        numerator += reach * several / s
        denominator += reach
    return numerator / denominator if denominator > 0 else 0.0


def binomial_at_most_one(n: int, p: float) -> float:
    """P(Binomial(n, p) <= 1)."""
    return (1.0 - p) ** n + n * p * (1.0 - p) ** (n - 1)


def simulate_preparation(
    model: PrepModel,
    n_trials: int,
    master_seed: int,
    workers: int = 1,
) -> PrepSimulation:
    """Monte-Carlo of the full protocol: reservoir draw, pulses, binomial transfers."""
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    work = partial(_prep_block, model, master_seed)
    parts = blocks(n_trials)
    if workers > 1 and len(parts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, parts))
    else:
        results = [work(b) for b in parts]

    pulse_counts = np.sum([r[3] for r in results], axis=0)
    return PrepSimulation(
        n_trials=n_trials,
        successes=sum(r[0] for r in results),
        multi_atom=sum(r[1] for r in results),
        discarded=sum(r[2] for r in results),
        pulse_counts=pulse_counts,
    )


def _prep_block(model: PrepModel, master_seed: int, block) -> tuple[int, int, int, np.ndarray]:
    index, size = block
    rng = stream(master_seed, "prep", None, index)
    n = rng.choice(model.n_cap + 1, size=size, p=model.reservoir_weights())
    transferred = np.zeros(size, dtype=np.int64)
    pulse = np.zeros(size, dtype=np.int64)
    for j in range(1, model.max_pulses + 1):
        waiting = transferred == 0
        if not waiting.any():
            break
        k = rng.binomial(n, model.p_transfer)
        hit = waiting & (k > 0)
        transferred[hit] = k[hit]
        pulse[hit] = j
    success = transferred > 0
    counts = np.bincount(pulse[success] - 1, minlength=model.max_pulses)
    return int(success.sum()), int(np.sum(transferred >= 2)), int(size - success.sum()), counts


# ── Detection statistics ──────────────────────────────────────────

def detection_histogram(model: PrepModel, weight_success: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Two-component Poisson mixture of transmission counts in the detection window.

    Returns:
        (values, probabilities) for counts 0 .. ceil(lambda_high + 12 sqrt(lambda_high)).
    """
    if not 0.0 <= weight_success <= 1.0:
        raise ValueError(f"weight_success must be in [0, 1], got {weight_success}")
    cap = max(math.ceil(model.lambda_high + 12.0 * math.sqrt(model.lambda_high)), 12)
    values = np.arange(cap + 1)
    probs = (weight_success * poisson.pmf(values, model.lambda_low)
             + (1.0 - weight_success) * poisson.pmf(values, model.lambda_high))
    return values, probs


def first_pulse_success_weight(model: PrepModel) -> float:
    """Share of first-pulse detection windows that contain an atom."""
    return float(model.reservoir_weights() @ _success_probs(model))


def false_positive_prob(lambda_high: float, threshold: float) -> float:
    """P(Poisson(lambda_high) <= threshold): an empty cavity read as an atom."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    if lambda_high < 0:
        raise ValueError(f"lambda_high must be >= 0, got {lambda_high}")
    if math.isinf(threshold) or lambda_high == 0:
        return 1.0
    return float(pdtr(math.floor(threshold), lambda_high))


def false_positive_gamma(lambda_high: float, threshold: int) -> float:
    """The same CDF as a regularized upper incomplete gamma function."""
    return float(gammaincc(math.floor(threshold) + 1, lambda_high))


def false_negative_prob(lambda_low: float, threshold: float) -> float:
    """P(Poisson(lambda_low) > threshold): a transferred atom missed."""
    return 1.0 - false_positive_prob(lambda_low, threshold)


# ── Jumps, dispersive counting and error composition ──────────────

def jump_during_window(t: float, tau: float) -> float:
    """1 - exp(-t / tau)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if math.isinf(tau):
        return 0.0
    return -math.expm1(-t / tau)


def dispersive_transmission(n_atoms: int, shift_per_atom: float, kappa: float) -> float:
    """On-resonance transmission with n dispersively shifted atoms, 1 / (1 + (n s / kappa)^2)."""
    if n_atoms < 0:
        raise ValueError(f"n_atoms must be >= 0, got {n_atoms}")
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    return 1.0 / (1.0 + (n_atoms * shift_per_atom / kappa) ** 2)


def preparation_errors(
    window_F2: float,
    window_F1: float,
    tau_F2: float,
    tau_F1: float,
) -> PreparationErrors:
    """Jump probabilities between preparation and readout for each prepared state."""
    return PreparationErrors(
        p_F2=jump_during_window(window_F2, tau_F2),
        p_F1=jump_during_window(window_F1, tau_F1),
    )


def with_preparation_errors(report: ErrorReport, prep: PreparationErrors) -> ErrorReport:
    """
    Errors seen when the prepared state is itself wrong with probability p.

    eps_F1' = (1 - p_F1) eps_F1 + p_F1 (1 - eps_F2), and symmetrically for F2.
    """
    eps_F1 = (1.0 - prep.p_F1) * report.eps_F1 + prep.p_F1 * (1.0 - report.eps_F2)
    eps_F2 = (1.0 - prep.p_F2) * report.eps_F2 + prep.p_F2 * (1.0 - report.eps_F1)
    details = dict(report.details)
    details.update({"prep_error_F1": prep.p_F1, "prep_error_F2": prep.p_F2,
                    "detection_only_eps_F1": report.eps_F1,
                    "detection_only_eps_F2": report.eps_F2})
    return ErrorReport(
        eps_F1, eps_F2, f"{report.method}+prep", report.detection_time,
        n_trials=report.n_trials, details=details,
    )

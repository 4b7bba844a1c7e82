"""
Maximum-likelihood readout over binned count traces.

The hyperfine state is a two-state continuous-time Markov chain sampled once
per bin. The initial state s0 precedes bin 0; bin i is reached from bin i-1
(bin 0 from s0) through P = expm(Q * bin_width), and each bin emits independent
Poisson counts at the rates of its state. q_s0 is the total likelihood of the
trace given s0, accumulated with the forward recursion in the log domain.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from scipy.linalg import expm
from scipy.special import logsumexp
from scipy.stats import poisson

from .jumps import CountTrace, HyperfineState, ReadoutModel, bin_count, simulate_counts_batch
from .streams import blocks, stream, wilson_interval
from .threshold import ErrorReport

# State order used by every array in this module
STATES = (HyperfineState.F1, HyperfineState.F2)

MIN_MLM_TRIALS = 100_000


@dataclass(frozen=True)
class ClassifierResult:
    state: HyperfineState
    log_q_F2: float
    log_q_F1: float

    @property
    def log_ratio(self) -> float:
        return self.log_q_F2 - self.log_q_F1


@dataclass(frozen=True)
class BinChoice:
    n_bins: int
    detection_time: float
    converged: bool
    history: list[ErrorReport]


# ── Model pieces ──────────────────────────────────────────────────

def transition_log_matrix(model: ReadoutModel) -> np.ndarray:
    """log P[s, s'] for one bin, states ordered (F1, F2)."""
    l1 = model.jump_rate(HyperfineState.F1)
    l2 = model.jump_rate(HyperfineState.F2)
    Q = np.array([[-l1, l1], [l2, -l2]])
    P = np.clip(expm(Q * model.bin_width), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return np.log(P)


def emission_log_probs(counts: np.ndarray, model: ReadoutModel) -> np.ndarray:
    """
    log p(c_R, c_T | s) per bin.

    Args:
        counts: Array (..., N, 2) of (c_R, c_T).

    Returns:
        Array (..., N, 2) with the last axis over (F1, F2).
    """
    counts = np.asarray(counts)
    out = []
    for state in STATES:
        mean = model.rates(state) * model.bin_width
        out.append(poisson.logpmf(counts[..., 0], mean[0]) + poisson.logpmf(counts[..., 1], mean[1]))
    return np.stack(out, axis=-1)


def forward_log_likelihoods(counts: np.ndarray, model: ReadoutModel) -> np.ndarray:
    """
    log q_s0 for a batch of traces.

    Args:
        counts: Array (n_traces, N, 2).

    Returns:
        Array (n_traces, 2): log q_F1, log q_F2.
    """
    counts = np.asarray(counts)
    if counts.ndim == 2:
        counts = counts[None, ...]
    log_P = transition_log_matrix(model)
    log_e = emission_log_probs(counts, model)
    n_bins = counts.shape[1]

    result = np.empty((counts.shape[0], 2))
    for s0 in range(2):
        alpha = log_P[s0][None, :] + log_e[:, 0, :]
        for i in range(1, n_bins):
            alpha = logsumexp(alpha[:, :, None] + log_P[None, :, :], axis=1) + log_e[:, i, :]
        result[:, s0] = logsumexp(alpha, axis=1)
    return result


# ── Classification ────────────────────────────────────────────────

def ml_classify(trace: CountTrace, model: ReadoutModel) -> ClassifierResult:
    """
    Classify a trace as F2 when log q_F2 >= log q_F1.

    Raises:
        ValueError: If the trace bin width differs from the model's.
    """
    if abs(trace.bin_width - model.bin_width) > 1e-12 * model.bin_width:
        raise ValueError(
            f"trace bin width {trace.bin_width} s does not match model bin width {model.bin_width} s"
        )
    log_q = forward_log_likelihoods(trace.counts, model)[0]
    state = HyperfineState.F2 if log_q[1] >= log_q[0] else HyperfineState.F1
    return ClassifierResult(state, float(log_q[1]), float(log_q[0]))


# ── Monte-Carlo error estimate ────────────────────────────────────

def _mlm_block(model, state, T, n_bins, master_seed, block):
    index, size = block
    rng = stream(master_seed, "mlm", state, index)
    batch = simulate_counts_batch(model, state, T, size, rng, n_bins=n_bins)
    log_q = forward_log_likelihoods(batch.counts, model)
    says_f2 = log_q[:, 1] >= log_q[:, 0]
    wrong = says_f2 if state is HyperfineState.F1 else ~says_f2
    return int(np.sum(wrong))


def mlm_errors(
    model: ReadoutModel,
    T: float,
    n_bins: int | None = None,
    n_trials: int = MIN_MLM_TRIALS,
    master_seed: int = 0,
    workers: int = 1,
    confidence: float = 0.95,
    min_trials: int = MIN_MLM_TRIALS,
) -> ErrorReport:
    """
    Monte-Carlo error rates of the maximum-likelihood classifier.

    Args:
        n_bins: Bins in the window; defaults to T / model.bin_width.
        n_trials: Simulated traces per initial state.
        min_trials: Smallest accepted n_trials.

    Returns:
        ErrorReport with Wilson score intervals.
    """
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if n_trials < min_trials:
        raise ValueError(f"n_trials must be >= {min_trials}, got {n_trials}")
    if n_bins is None:
        n_bins = bin_count(T, model.bin_width)
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    binned = replace(model, bin_width=T / n_bins)

    errors = {}
    for state in STATES:
        work = partial(_mlm_block, binned, state, T, n_bins, master_seed)
        parts = blocks(n_trials)
        if workers > 1 and len(parts) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                errors[state] = sum(pool.map(work, parts))
        else:
            errors[state] = sum(work(b) for b in parts)

    e1, e2 = errors[HyperfineState.F1], errors[HyperfineState.F2]
    return ErrorReport(
        e1 / n_trials, e2 / n_trials, "MLM", float(T),
        ci_F1=wilson_interval(e1, n_trials, confidence),
        ci_F2=wilson_interval(e2, n_trials, confidence),
        n_trials=n_trials,
        details={"n_bins": n_bins, "bin_width_s": T / n_bins, "errors_F1": e1, "errors_F2": e2,
                 "master_seed": master_seed, "confidence": confidence},
    )


def choose_bin_count(
    model: ReadoutModel,
    n_trials: int,
    master_seed: int,
    start_bins: int = 2,
    max_bins: int = 40,
    step: int = 2,
    rel_change: float = 0.05,
    workers: int = 1,
    min_trials: int = MIN_MLM_TRIALS,
) -> BinChoice:
    """
    Lengthen the window bin by bin (at model.bin_width) until the MLM error
    changes by less than `rel_change` relative to the previous length.
    """
    if start_bins < 1 or step < 1 or max_bins < start_bins:
        raise ValueError("need 1 <= start_bins <= max_bins and step >= 1")
    history: list[ErrorReport] = []
    n = start_bins
    while n <= max_bins:
        T = n * model.bin_width
        report = mlm_errors(model, T, n, n_trials, master_seed, workers, min_trials=min_trials)
        if history:
            prev = history[-1].eps
            if prev > 0 and abs(report.eps - prev) < rel_change * prev:
                history.append(report)
                return BinChoice(n, T, True, history)
        history.append(report)
        n += step
    last = history[-1]
    return BinChoice(last.details["n_bins"], last.detection_time, False, history)

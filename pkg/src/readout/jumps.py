"""
Quantum-jump trajectories and dual-channel photon-count traces.

The probed atom hops between the hyperfine ground states F=1 and F=2 with
exponentially distributed dwell times. While in a state it produces Poisson
counts in reflection (R) and transmission (T) at that state's detected rates.
Dead time is modelled at the rate level.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, replace
from enum import StrEnum
from pathlib import Path

import numpy as np

from ..storage.export import write_csv, write_json
from .streams import RNG_ALGORITHM, stream


class HyperfineState(StrEnum):
    F1 = "F1"
    F2 = "F2"

    @property
    def other(self) -> "HyperfineState":
        return HyperfineState.F1 if self is HyperfineState.F2 else HyperfineState.F2


# ── Rate model ────────────────────────────────────────────────────

def effective_rate(r, dead_time: float):
    """
    Non-paralyzable dead-time corrected rate r / (1 + r * dead_time).

    Works on scalars and arrays; r = inf saturates at 1/dead_time.

    Raises:
        ValueError: On a negative rate or dead time.
    """
    if dead_time < 0:
        raise ValueError(f"dead_time must be >= 0, got {dead_time}")
    rate = np.asarray(r, dtype=float)
    if np.any(rate < 0):
        raise ValueError("count rates must be >= 0")
    if dead_time == 0:
        out = rate
    else:
        with np.errstate(invalid="ignore"):
            out = np.where(np.isinf(rate), 1.0 / dead_time, rate / (1.0 + rate * dead_time))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ReadoutModel:
    """
    Detected count rates (1/s) and lifetimes (s) of the two hyperfine states.

    Lifetimes may be math.inf to switch quantum jumps off.

    Usage:
        model = reference_model()
        fast = model.scaled(20).saturated()
    """

    r_T_F2: float
    r_R_F2: float
    r_T_F1: float
    r_R_F1: float
    tau_F2: float
    tau_F1: float
    dead_time: float = 0.0
    bin_width: float = 5e-6
    background_R: float = 0.0
    background_T: float = 0.0

    def __post_init__(self):
        rates = {
            "r_T_F2": self.r_T_F2, "r_R_F2": self.r_R_F2,
            "r_T_F1": self.r_T_F1, "r_R_F1": self.r_R_F1,
            "background_R": self.background_R, "background_T": self.background_T,
        }
        for name, value in rates.items():
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        for name, value in (("tau_F2", self.tau_F2), ("tau_F1", self.tau_F1)):
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not self.bin_width > 0:
            raise ValueError(f"bin_width must be > 0, got {self.bin_width}")
        if self.dead_time < 0:
            raise ValueError(f"dead_time must be >= 0, got {self.dead_time}")

    def rates(self, state: HyperfineState) -> np.ndarray:
        """(r_R, r_T) detected in `state`, background included."""
        if HyperfineState(state) is HyperfineState.F2:
            return np.array([self.r_R_F2 + self.background_R, self.r_T_F2 + self.background_T])
        return np.array([self.r_R_F1 + self.background_R, self.r_T_F1 + self.background_T])

    def lifetime(self, state: HyperfineState) -> float:
        return self.tau_F2 if HyperfineState(state) is HyperfineState.F2 else self.tau_F1

    def jump_rate(self, state: HyperfineState) -> float:
        tau = self.lifetime(state)
        return 0.0 if math.isinf(tau) else 1.0 / tau

    def scaled(self, power_factor: float) -> "ReadoutModel":
        """Probe power scaled by f: count rates x f, lifetimes / f."""
        if not power_factor > 0:
            raise ValueError(f"power_factor must be > 0, got {power_factor}")
        f = power_factor
        return replace(
            self,
            r_T_F2=self.r_T_F2 * f, r_R_F2=self.r_R_F2 * f,
            r_T_F1=self.r_T_F1 * f, r_R_F1=self.r_R_F1 * f,
            tau_F2=self.tau_F2 / f, tau_F1=self.tau_F1 / f,
        )

    def saturated(self) -> "ReadoutModel":
        """All rates passed through effective_rate; dead time then reset to 0."""
        d = self.dead_time
        return replace(
            self,
            r_T_F2=effective_rate(self.r_T_F2 + self.background_T, d),
            r_R_F2=effective_rate(self.r_R_F2 + self.background_R, d),
            r_T_F1=effective_rate(self.r_T_F1 + self.background_T, d),
            r_R_F1=effective_rate(self.r_R_F1 + self.background_R, d),
            background_R=0.0,
            background_T=0.0,
            dead_time=0.0,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def reference_model(bin_width: float = 5e-6) -> ReadoutModel:
    """Rates and lifetimes measured on the fiber-cavity 87Rb readout."""
    return ReadoutModel(
        r_T_F2=1.4e3, r_R_F2=8.9e5,
        r_T_F1=1.9e5, r_R_F1=4.4e5,
        tau_F2=52e-3, tau_F1=26e-3,
        bin_width=bin_width,
    )


# ── Trajectories and traces ───────────────────────────────────────

@dataclass(frozen=True)
class Trajectory:
    initial_state: HyperfineState
    jump_times: tuple[float, ...]
    total_time: float

    def __post_init__(self):
        times = self.jump_times
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.total_time):
            raise ValueError("jump times must lie in [0, total_time]")

    def state_at(self, t: float) -> HyperfineState:
        n = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.initial_state if n % 2 == 0 else self.initial_state.other

    def segments(self) -> list[tuple[float, float, HyperfineState]]:
        edges = [0.0, *self.jump_times, self.total_time]
        state = self.initial_state
        out = []
        for a, b in zip(edges, edges[1:]):
            out.append((a, b, state))
            state = state.other
        return out


@dataclass(frozen=True, eq=False)
class CountTrace:
    """N bins of (c_R, c_T) counts."""

    counts: np.ndarray
    bin_width: float
    origin: str = "simulated"

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[1] != 2 or counts.shape[0] < 1:
            raise ValueError(f"counts must have shape (N >= 1, 2), got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def totals(self) -> tuple[int, int]:
        c_R, c_T = self.counts.sum(axis=0)
        return int(c_R), int(c_T)


def _as_rng(rng_seed, purpose: str, state, index: int) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return stream(int(rng_seed), purpose, state, index)


def simulate_trajectory(
    model: ReadoutModel,
    initial_state: HyperfineState,
    T: float,
    rng_seed,
    trial: int = 0,
) -> Trajectory:
    """
    Alternating exponential dwell times starting in `initial_state`.

    Args:
        rng_seed: Master seed (int) or a numpy Generator.
        trial: Trial index used to key the stream when a seed is given.
    """
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    state = HyperfineState(initial_state)
    rng = _as_rng(rng_seed, "trajectory", state, trial)
    t = 0.0
    jumps = []
    current = state
    while True:
        tau = model.lifetime(current)
        if math.isinf(tau):
            break
        t += rng.exponential(tau)
        if t >= T:
            break
        jumps.append(t)
        current = current.other
    return Trajectory(state, tuple(jumps), T)


def bin_count(T: float, bin_width: float) -> int:
    """
    Number of bins of `bin_width` in T.

    Raises:
        ValueError: If T is not an integer multiple of bin_width.
    """
    n = round(T / bin_width)
    if n < 1 or abs(n * bin_width - T) > 1e-9 * max(T, bin_width):
        raise ValueError(f"T={T} s is not an integer number of {bin_width} s bins")
    return n


def occupancy(trajectory: Trajectory, edges: np.ndarray) -> np.ndarray:
    """Time spent in F2 within each bin [edges[i], edges[i+1])."""
    lo, hi = edges[:-1], edges[1:]
    occ = np.zeros(lo.size)
    for a, b, state in trajectory.segments():
        if state is HyperfineState.F2:
            occ += np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    return occ


def sample_counts(
    trajectory: Trajectory,
    model: ReadoutModel,
    rng_seed,
    trial: int = 0,
) -> CountTrace:
    """
    Poisson counts per bin with means weighted by the time spent in each state.

    Raises:
        ValueError: If the trajectory length is not a whole number of bins.
    """
    n = bin_count(trajectory.total_time, model.bin_width)
    edges = np.arange(n + 1) * model.bin_width
    edges[-1] = trajectory.total_time
    in_f2 = occupancy(trajectory, edges)
    in_f1 = np.diff(edges) - in_f2
    means = (np.outer(in_f2, model.rates(HyperfineState.F2))
             + np.outer(in_f1, model.rates(HyperfineState.F1)))
    rng = _as_rng(rng_seed, "counts", trajectory.initial_state, trial)
    return CountTrace(rng.poisson(means), model.bin_width, origin="simulated")


# ── Vectorised batches ────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CountBatch:
    """counts[trial, bin, channel] with channel 0 = R, 1 = T."""

    counts: np.ndarray
    n_jumps: np.ndarray
    bin_width: float
    initial_state: HyperfineState


def simulate_counts_batch(
    model: ReadoutModel,
    initial_state: HyperfineState,
    T: float,
    n_trials: int,
    rng: np.random.Generator,
    n_bins: int = 1,
) -> CountBatch:
    """
    Simulate n_trials trajectories and their binned counts in one go.

    The bin width is T / n_bins, independent of model.bin_width.
    """
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    state = HyperfineState(initial_state)
    other = state.other

    boundaries = [np.zeros(n_trials)]
    t = np.zeros(n_trials)
    active = np.ones(n_trials, dtype=bool)
    k = 0
    while active.any():
        tau = model.lifetime(state if k % 2 == 0 else other)
        if math.isinf(tau):
            break
        t = t + rng.exponential(tau, size=n_trials)
        active &= t < T
        boundaries.append(np.where(active, t, T))
        k += 1
    boundaries.append(np.full(n_trials, T))
    B = np.stack(boundaries, axis=1)

    width = T / n_bins
    edges = np.arange(n_bins + 1) * width
    edges[-1] = T
    lo, hi = edges[:-1], edges[1:]
    in_initial = np.zeros((n_trials, n_bins))
    for s in range(0, B.shape[1] - 1, 2):
        a, b = B[:, s][:, None], B[:, s + 1][:, None]
        in_initial += np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    in_other = np.diff(edges)[None, :] - in_initial

    means = (in_initial[:, :, None] * model.rates(state)[None, None, :]
             + in_other[:, :, None] * model.rates(other)[None, None, :])
    counts = rng.poisson(np.clip(means, 0.0, None))
    n_jumps = np.sum(B[:, 1:-1] < T, axis=1)
    return CountBatch(counts, n_jumps, width, state)


# ── Export ────────────────────────────────────────────────────────

def write_trace(
    trace: CountTrace,
    out_dir: Path,
    metadata: dict,
    stem: str = "trace",
) -> list[Path]:
    """Write <stem>.csv (bin_index,t_start_s,c_R,c_T) and <stem>.meta.json."""
    out_dir = Path(out_dir)
    rows = [
        (i, i * trace.bin_width, int(c[0]), int(c[1]))
        for i, c in enumerate(trace.counts)
    ]
    csv_path = write_csv(out_dir / f"{stem}.csv", ["bin_index", "t_start_s", "c_R", "c_T"], rows)
    meta = {"origin": trace.origin, "bin_width_s": trace.bin_width,
            "n_bins": trace.n_bins, "rng": RNG_ALGORITHM, **metadata}
    json_path = write_json(out_dir / f"{stem}.meta.json", meta)
    return [csv_path, json_path]


def read_trace(path: Path, bin_width: float | None = None) -> CountTrace:
    """
    Load a trace written by write_trace (or any CSV with c_R,c_T columns).

    The bin width comes from the sidecar when present.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    counts = np.array([[int(r["c_R"]), int(r["c_T"])] for r in rows], dtype=np.int64)
    if bin_width is None:
        meta_path = path.with_name(path.name.removesuffix(".csv") + ".meta.json")
        if not meta_path.exists():
            raise ValueError(f"No bin width given and no sidecar next to {path}")
        bin_width = json.loads(meta_path.read_text(encoding="utf-8"))["bin_width_s"]
    return CountTrace(counts, float(bin_width), origin="injected")

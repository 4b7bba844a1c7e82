"""
The six CLI subcommands.

Each command takes a validated RunConfig, prints its progress, writes its
files into config.out_dir and returns a CommandResult with the written paths
and a few headline numbers for the run ledger. Output bytes depend only on
the config file and the master seed.
"""

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..atoms.levels import TWO_PI
from ..cavity.spectrum import fit_coupling, spectrum, spectrum_band
from ..config.loader import MHZ, MS, US, RunConfig
from ..prep.statistics import (
    detection_histogram,
    dispersive_transmission,
    false_negative_prob,
    false_positive_gamma,
    false_positive_prob,
    first_pulse_success_weight,
    jump_during_window,
    mean_pulses,
    multi_atom_prob,
    preparation_errors,
    pulses_pmf,
    simulate_preparation,
    with_preparation_errors,
)
from ..readout.jumps import HyperfineState, sample_counts, simulate_trajectory, write_trace
from ..readout.likelihood import MIN_MLM_TRIALS, choose_bin_count, mlm_errors
from ..readout.streams import RNG_ALGORITHM
from ..readout.threshold import (
    best_power_factor,
    count_caps,
    count_pmf,
    decision_map,
    optimize_detection_time,
    tm_errors,
    tm_monte_carlo,
)
from ..storage.export import write_csv, write_json


@dataclass
class CommandResult:
    """Files a command wrote and the numbers worth recording for the run."""

    files: list[Path] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)


def _banner(title: str, config: RunConfig) -> None:
    print("=" * 60)
    print(f"{title} - {config.get('run', 'name')}")
    print("=" * 60)
    print(f"  Config: {config.path} (sha256 {config.sha256[:12]})")
    print(f"  Seed: {config.master_seed}  Workers: {config.workers}")


def _provenance(config: RunConfig) -> dict:
    """Fields stamped into every JSON output. No timestamps, no worker count."""
    return {
        "run_name": config.get("run", "name"),
        "config_sha256": config.sha256,
        "master_seed": config.master_seed,
    }


# ── spectrum ──────────────────────────────────────────────────────

def _read_measured(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Measured spectrum CSV with delta_lc_hz and transmission_rel columns."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"measured spectrum {path} has no rows")
    for column in ("delta_lc_hz", "transmission_rel"):
        if column not in rows[0]:
            raise KeyError(f"measured spectrum {path} lacks column '{column}'. "
                           f"Found columns: {', '.join(rows[0])}")
    detunings = np.array([float(r["delta_lc_hz"]) for r in rows]) * TWO_PI
    measured = np.array([float(r["transmission_rel"]) for r in rows])
    return detunings, measured


def cmd_spectrum(config: RunConfig) -> CommandResult:
    """Transmission and reflection versus laser-cavity detuning."""
    _banner("Cavity Readout - Spectrum", config)
    out = config.out_dir
    result = CommandResult()
    s = config.values["spectrum"]

    scheme = config.scheme()
    cavity = config.cavity()
    population = config.population(scheme)
    reset_rate = config.reset_rate(scheme)
    detunings = config.detunings()
    wants_band = s["band_g0_mhz"] > 0 or s["band_delta_ca_mhz"] > 0
    stages = 1 + int(wants_band) + int(bool(s["measured_csv"]))
    stage = 1

    print(f"\n[{stage}/{stages}] Solving {len(detunings)} steady states "
          f"({scheme.n_levels} levels, {cavity.modes} mode(s), n_max={cavity.n_max})...")
    points = spectrum(scheme, cavity, population, detunings,
                      reset_rate=reset_rate, workers=config.workers)
    rows = [(p.delta_lc / TWO_PI, p.transmission_rel, p.reflection_rel) for p in points]
    result.files.append(write_csv(out / "spectrum.csv",
                                  ["delta_lc_hz", "transmission_rel", "reflection_rel"], rows))
    peak = max(points, key=lambda p: p.transmission_rel)
    result.summary["peak_transmission_rel"] = peak.transmission_rel
    result.summary["peak_delta_lc_mhz"] = peak.delta_lc / MHZ
    print(f"  Peak transmission {peak.transmission_rel:.4g} at {peak.delta_lc / MHZ:+.1f} MHz")

    if wants_band:
        stage += 1
        print(f"\n[{stage}/{stages}] Spectrum band (g0 +-{s['band_g0_mhz']} MHz, "
              f"delta_ca +-{s['band_delta_ca_mhz']} MHz)...")
        band = spectrum_band(scheme, cavity, population, detunings,
                             s["band_g0_mhz"] * MHZ, s["band_delta_ca_mhz"] * MHZ,
                             reset_rate=reset_rate, workers=config.workers)
        result.files.append(write_csv(
            out / "spectrum_band.csv",
            ["delta_lc_hz", "transmission_low", "transmission_high", "reflection_low", "reflection_high"],
            [(b.delta_lc / TWO_PI, b.transmission_low, b.transmission_high,
              b.reflection_low, b.reflection_high) for b in band],
        ))
        print(f"  {len(band)} band points")

    if s["measured_csv"]:
        stage += 1
        measured_path = Path(s["measured_csv"])
        if not measured_path.is_absolute():
            measured_path = config.path.parent / measured_path
        print(f"\n[{stage}/{stages}] Fitting g0 to {measured_path.name} ({s['fit_residual']} residual)...")
        fit_detunings, measured = _read_measured(measured_path)
        fit = fit_coupling(scheme, cavity, population, fit_detunings, measured,
                           (s["fit_g0_min_mhz"] * MHZ, s["fit_g0_max_mhz"] * MHZ),
                           residual=s["fit_residual"], reset_rate=reset_rate)
        result.files.append(write_json(out / "spectrum_fit.json", {
            **_provenance(config),
            "g0_mhz": fit.g0 / MHZ,
            "residual": fit.residual,
            "residual_kind": s["fit_residual"],
            "evaluations": fit.evaluations,
            "points": len(measured),
        }))
        result.summary["fit_g0_mhz"] = fit.g0 / MHZ
        print(f"  g0/2pi = {fit.g0 / MHZ:.2f} MHz after {fit.evaluations} evaluations")

    return result


# ── trace ─────────────────────────────────────────────────────────

def cmd_trace(config: RunConfig) -> CommandResult:
    """One simulated quantum-jump record binned for plotting."""
    _banner("Cavity Readout - Trace", config)
    t = config.values["trace"]
    model = replace(config.readout_model(), bin_width=t["bin_width_us"] * US)
    state = HyperfineState(t["initial_state"])
    duration = t["duration_ms"] * MS

    print(f"\n[1/2] Simulating {t['duration_ms']} ms starting in {state}...")
    trajectory = simulate_trajectory(model, state, duration, config.master_seed)
    trace = sample_counts(trajectory, model, config.master_seed)
    print(f"  {len(trajectory.jump_times)} jump(s), {trace.n_bins} bins")

    print("\n[2/2] Writing trace...")
    files = write_trace(trace, config.out_dir, {
        **_provenance(config),
        "initial_state": str(state),
        "duration_s": duration,
        "jump_times_s": list(trajectory.jump_times),
        "model": model.to_dict(),
    })
    c_R, c_T = trace.totals
    return CommandResult(files, {"n_jumps": len(trajectory.jump_times),
                                 "total_c_R": c_R, "total_c_T": c_T})


# ── pmf ───────────────────────────────────────────────────────────

def cmd_pmf(config: RunConfig) -> CommandResult:
    """Joint count pmfs of both states and the decision map on one grid."""
    _banner("Cavity Readout - Joint count pmfs", config)
    p = config.values["pmf"]
    model = config.readout_model()
    T = p["detection_time_us"] * US
    caps = count_caps(model, T)

    print(f"\n[1/2] Count pmfs at T = {p['detection_time_us']} us, caps {caps}...")
    p_F1 = count_pmf(model, HyperfineState.F1, T, p["max_jumps"], caps)
    p_F2 = count_pmf(model, HyperfineState.F2, T, p["max_jumps"], caps)
    dmap = decision_map(p_F1, p_F2)

    print("\n[2/2] Writing pmf grid...")
    rows = []
    for c_R in range(caps[0] + 1):
        for c_T in range(caps[1] + 1):
            rows.append((c_R, c_T, p_F1.table[c_R, c_T], p_F2.table[c_R, c_T],
                         2 if dmap.table[c_R, c_T] else 1))
    files = [write_csv(config.out_dir / "pmf.csv", ["c_R", "c_T", "p_F1", "p_F2", "decision"], rows)]
    means_F1, means_F2 = p_F1.marginal_means(), p_F2.marginal_means()
    files.append(write_json(config.out_dir / "pmf.meta.json", {
        **_provenance(config),
        "detection_time_s": T,
        "max_jumps": p["max_jumps"],
        "caps": list(caps),
        "tail_mass_F1": p_F1.tail_mass,
        "tail_mass_F2": p_F2.tail_mass,
        "truncated_mass_F1": p_F1.truncated_mass,
        "truncated_mass_F2": p_F2.truncated_mass,
        "mean_counts_F1": {"c_R": means_F1[0], "c_T": means_F1[1]},
        "mean_counts_F2": {"c_R": means_F2[0], "c_T": means_F2[1]},
        "decision_codes": {"1": "F1", "2": "F2"},
    }))
    print(f"  {len(rows)} cells, {int(dmap.table.sum())} classified F2")
    return CommandResult(files, {"cells": len(rows), "tail_mass_F1": p_F1.tail_mass,
                                 "tail_mass_F2": p_F2.tail_mass})


# ── errors ────────────────────────────────────────────────────────

def cmd_errors(config: RunConfig) -> CommandResult:
    """Error rates of thresholding and maximum-likelihood readout."""
    _banner("Cavity Readout - Readout errors", config)
    e = config.values["errors"]
    model = config.readout_model()
    seed, workers = config.master_seed, config.workers
    reports = {}
    extras: dict = {}

    stages = ["TM"]
    if e["mlm_trials"]:
        stages.append("MLM")
    if e["tm_mc_trials"]:
        stages.append("TM-MC")
    if e["choose_bins"]:
        stages.append("bins")
    if e["fast_readout"]:
        stages.append("fast")
    step = iter(range(1, len(stages) + 1))

    T_tm = e["tm_time_us"] * US
    print(f"\n[{next(step)}/{len(stages)}] Thresholding at T = {e['tm_time_us']} us...")
    reports["TM"] = tm_errors(model, T_tm, e["max_jumps"])
    print(f"  eps_F1 = {reports['TM'].eps_F1:.3e}, eps_F2 = {reports['TM'].eps_F2:.3e}")

    if e["mlm_trials"]:
        T_mlm = e["mlm_time_us"] * US
        print(f"\n[{next(step)}/{len(stages)}] Maximum likelihood at T = {e['mlm_time_us']} us, "
              f"{e['mlm_trials']} trials per state...")
        reports["MLM"] = mlm_errors(model, T_mlm, e["mlm_bins"] or None, e["mlm_trials"],
                                    seed, workers, e["confidence"])
        print(f"  eps_F1 = {reports['MLM'].eps_F1:.3e}, eps_F2 = {reports['MLM'].eps_F2:.3e} "
              f"({reports['MLM'].details['n_bins']} bins)")

    if e["tm_mc_trials"]:
        print(f"\n[{next(step)}/{len(stages)}] Thresholding Monte-Carlo, {e['tm_mc_trials']} trials per state...")
        reports["TM-MC"] = tm_monte_carlo(model, T_tm, e["tm_mc_trials"], seed, e["max_jumps"],
                                          workers, e["confidence"])
        print(f"  eps_F1 = {reports['TM-MC'].eps_F1:.3e}, eps_F2 = {reports['TM-MC'].eps_F2:.3e}")

    if e["prep_window_f2_us"] > 0 or e["prep_window_f1_us"] > 0:
        prep = preparation_errors(e["prep_window_f2_us"] * US, e["prep_window_f1_us"] * US,
                                  model.tau_F2, model.tau_F1)
        for name in [n for n in ("TM", "MLM") if n in reports]:
            reports[f"{name}+prep"] = with_preparation_errors(reports[name], prep)
        print(f"  Preparation errors: p_F2 = {prep.p_F2:.3e}, p_F1 = {prep.p_F1:.3e}")

    if e["choose_bins"]:
        trials = e["mlm_trials"] or MIN_MLM_TRIALS
        print(f"\n[{next(step)}/{len(stages)}] Choosing the MLM bin count ({trials} trials per length)...")
        choice = choose_bin_count(model, trials, seed, workers=workers)
        extras["bin_choice"] = {
            "n_bins": choice.n_bins,
            "detection_time_s": choice.detection_time,
            "converged": choice.converged,
            "curve": [{"n_bins": r.details["n_bins"], "eps": r.eps} for r in choice.history],
        }
        print(f"  {choice.n_bins} bins ({'converged' if choice.converged else 'not converged'})")

    if e["fast_readout"]:
        f = config.values["fast"]
        print(f"\n[{next(step)}/{len(stages)}] Fast readout at T = {f['detection_time_us']} us, "
              f"dead time {f['dead_time_ns']} ns...")
        factor, best, scan = best_power_factor(config.fast_model(), f["detection_time_us"] * US,
                                               f["power_factors"], e["max_jumps"])
        reports["TM-fast"] = best
        extras["fast_scan"] = [
            {"power_factor": r.details["power_factor"], "eps": r.eps, "fidelity": r.fidelity} for r in scan
        ]
        print(f"  best power factor {factor:g}: fidelity {best.fidelity:.4f}")

    path = write_json(config.out_dir / "errors.json", {
        **_provenance(config),
        "rng": RNG_ALGORITHM,
        "model": model.to_dict(),
        "reports": {name: r.to_dict() for name, r in reports.items()},
        **extras,
    })
    summary = {}
    for name, r in reports.items():
        summary[f"{name}.eps_F1"] = r.eps_F1
        summary[f"{name}.eps_F2"] = r.eps_F2
    return CommandResult([path], summary)


# ── optimize ──────────────────────────────────────────────────────

def cmd_optimize(config: RunConfig) -> CommandResult:
    """Thresholding error versus detection time and its minimum."""
    _banner("Cavity Readout - Detection time", config)
    o = config.values["optimize"]
    model = config.readout_model()
    grid = config.optimize_grid()

    print(f"\n[1/2] Thresholding errors on {len(grid)} detection times "
          f"({o['start_us']}..{o['stop_us']} us)...")
    result = optimize_detection_time(model, grid, o["max_jumps"])
    interior = result.T_opt not in (float(grid[0]), float(grid[-1]))
    print(f"  T_opt = {result.T_opt / US:.1f} us, eps = {result.report.eps:.3e}"
          + ("" if interior else " (at the grid edge)"))

    print("\n[2/2] Writing curve...")
    rows = [(r.detection_time, r.eps_F1, r.eps_F2, r.eps, r.fidelity) for r in result.curve]
    files = [
        write_csv(config.out_dir / "optimize.csv",
                  ["detection_time_s", "eps_F1", "eps_F2", "eps", "fidelity"], rows),
        write_json(config.out_dir / "optimize.json", {
            **_provenance(config),
            "T_opt_s": result.T_opt,
            "interior_minimum": interior,
            "report": result.report.to_dict(),
        }),
    ]
    return CommandResult(files, {"T_opt_us": result.T_opt / US, "eps": result.report.eps})


# ── prepare ───────────────────────────────────────────────────────

def cmd_prepare(config: RunConfig) -> CommandResult:
    """Single-atom preparation statistics."""
    _banner("Cavity Readout - Preparation", config)
    p = config.values["prep"]
    model = config.prep_model()
    readout = config.readout_model()
    kappa = config.cavity().kappa
    out = config.out_dir
    files = []
    stages = 4 if p["mc_trials"] else 3

    print(f"\n[1/{stages}] Pulse statistics (n_bar = {model.n_bar}, p = {model.p_transfer})...")
    dist = pulses_pmf(model)
    multi = multi_atom_prob(model)
    mean = mean_pulses(model)
    cumulative = np.cumsum(dist.pmf)
    files.append(write_csv(out / "prepare_pulses.csv", ["pulse", "probability", "cumulative"],
                           [(j + 1, dist.pmf[j], cumulative[j]) for j in range(model.max_pulses)]))
    print(f"  multi-atom probability {multi:.4f}, mean pulses {mean:.2f}, discard {dist.discard:.3e}")

    print(f"\n[2/{stages}] Detection statistics (threshold {model.count_threshold})...")
    weight = p["weight_success"]
    if weight is None:
        weight = first_pulse_success_weight(model)
    values, probs = detection_histogram(model, weight)
    files.append(write_csv(out / "prepare_histogram.csv", ["value", "probability"],
                           zip(values.tolist(), probs)))
    fp = false_positive_prob(model.lambda_high, model.count_threshold)
    fn = false_negative_prob(model.lambda_low, model.count_threshold)
    print(f"  false positive {fp:.4e}, false negative {fn:.4e}")

    print(f"\n[3/{stages}] Dispersive atom counting...")
    shift = config.shift_per_atom()
    counting = [
        {"n_atoms": n, "transmission_rel": dispersive_transmission(n, shift, kappa)}
        for n in range(p["atoms_counted"] + 1)
    ]
    files.append(write_csv(out / "prepare_dispersive.csv", ["n_atoms", "transmission_rel"],
                           [(c["n_atoms"], c["transmission_rel"]) for c in counting]))
    print(f"  shift per atom {shift / MHZ:+.2f} MHz")

    report = {
        **_provenance(config),
        "model": model.to_dict(),
        "multi_atom_prob": multi,
        "mean_pulses": mean,
        "discard_prob": dist.discard,
        "weight_success": weight,
        "false_positive_prob": fp,
        "false_positive_gamma": false_positive_gamma(model.lambda_high, model.count_threshold),
        "false_negative_prob": fn,
        "shift_per_atom_mhz": shift / MHZ,
        "dispersive_counting": counting,
        "jump_in_window_F2": jump_during_window(model.detection_window, readout.tau_F2),
        "jump_in_window_F1": jump_during_window(model.detection_window, readout.tau_F1),
    }
    summary = {"multi_atom_prob": multi, "false_positive_prob": fp, "mean_pulses": mean}

    if p["mc_trials"]:
        print(f"\n[4/{stages}] Protocol Monte-Carlo, {p['mc_trials']} runs...")
        sim = simulate_preparation(model, p["mc_trials"], config.master_seed, config.workers)
        lo, hi = sim.multi_atom_interval()
        report["simulation"] = {
            "n_trials": sim.n_trials,
            "successes": sim.successes,
            "multi_atom": sim.multi_atom,
            "discarded": sim.discarded,
            "multi_atom_fraction": sim.multi_atom_fraction,
            "multi_atom_ci": [lo, hi],
            "rng": RNG_ALGORITHM,
        }
        summary["simulated_multi_atom_fraction"] = sim.multi_atom_fraction
        print(f"  multi-atom fraction {sim.multi_atom_fraction:.4f} [{lo:.4f}, {hi:.4f}]")

    files.append(write_json(out / "prepare.json", report))
    return CommandResult(files, summary)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "trace": cmd_trace,
    "pmf": cmd_pmf,
    "errors": cmd_errors,
    "optimize": cmd_optimize,
    "prepare": cmd_prepare,
}

"""
Run configuration.

A run is described by an INI-style file with one section per concern. Keys
carry their unit in the name (kappa_mhz, tau_f2_ms, dead_time_ns, ...);
frequencies are ordinary frequencies and are converted to rad/s here, once.
Every problem found while loading is reported with its line number.
"""

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from rapidfuzz import process

from ..atoms.levels import TWO_PI, build_rb87_d2, build_two_level, empty_scheme, rb87_f1_dispersive_shift
from ..cavity.lindblad import CavityConfig
from ..cavity.spectrum import ground_population, uniform_ground_population
from ..prep.statistics import PrepModel
from ..readout.jumps import ReadoutModel
from ..readout.likelihood import MIN_MLM_TRIALS
from ..readout.threshold import DEFAULT_POWER_FACTORS

MHZ = TWO_PI * 1e6
US = 1e-6
MS = 1e-3
NS = 1e-9


class ConfigError(ValueError):
    """Configuration could not be loaded; `diagnostics` holds one line per problem."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


# ── Value parsers ─────────────────────────────────────────────────

def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _text(text: str) -> str:
    return text.strip()


def _float_list(text: str) -> list[float]:
    return [_float(part) for part in re.split(r"[,\s]+", text.strip()) if part]


def _choice(*options: str):
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {value!r}")
        return value
    parse.__name__ = "one of " + "|".join(options)
    return parse


# (parser, default); a default of None means "derived from other values"
_SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "name": (_text, "run"),
    },
    "atom": {
        "scheme": (_choice("rb87_d2", "two_level", "empty"), "rb87_d2"),
        "b_gauss": (_float, 0.0),
        "light_shift_mhz": (_float, 0.0),
        "gamma_mhz": (_float, 3.0),
        "two_level_detuning_mhz": (_float, 0.0),
        "levels": (_text, ""),
        "population": (_text, "uniform"),
        "reset_rate_mhz": (_float, None),
    },
    "cavity": {
        "kappa_mhz": (_float, 53.0),
        "g0_mhz": (_float, 215.0),
        "birefringence_mhz": (_float, 0.0),
        "delta_ca_mhz": (_float, 0.0),
        "modes": (_int, 1),
        "driven_mode": (_int, 0),
        "drive_over_kappa": (_float, 0.01),
        "n_max": (_int, 3),
        "mirror_loss_fraction": (_float, 0.0),
    },
    "spectrum": {
        "start_mhz": (_float, -400.0),
        "stop_mhz": (_float, 400.0),
        "points": (_int, 81),
        "band_g0_mhz": (_float, 0.0),
        "band_delta_ca_mhz": (_float, 0.0),
        "measured_csv": (_text, ""),
        "fit_residual": (_choice("transmission", "amplitude"), "transmission"),
        "fit_g0_min_mhz": (_float, 150.0),
        "fit_g0_max_mhz": (_float, 300.0),
    },
    "readout": {
        "r_t_f2_per_s": (_float, 1.4e3),
        "r_r_f2_per_s": (_float, 8.9e5),
        "r_t_f1_per_s": (_float, 1.9e5),
        "r_r_f1_per_s": (_float, 4.4e5),
        "tau_f2_ms": (_float, 52.0),
        "tau_f1_ms": (_float, 26.0),
        "dead_time_ns": (_float, 0.0),
        "bin_width_us": (_float, 5.0),
        "background_r_per_s": (_float, 0.0),
        "background_t_per_s": (_float, 0.0),
    },
    "trace": {
        "initial_state": (_choice("F1", "F2"), "F2"),
        "duration_ms": (_float, 20.0),
        "bin_width_us": (_float, 10.0),
    },
    "pmf": {
        "detection_time_us": (_float, 60.0),
        "max_jumps": (_int, 2),
    },
    "errors": {
        "tm_time_us": (_float, 60.0),
        "mlm_time_us": (_float, 100.0),
        "mlm_bins": (_int, 0),
        "mlm_trials": (_int, MIN_MLM_TRIALS),
        "tm_mc_trials": (_int, 0),
        "max_jumps": (_int, 2),
        "confidence": (_float, 0.95),
        "prep_window_f2_us": (_float, 0.0),
        "prep_window_f1_us": (_float, 0.0),
        "choose_bins": (_bool, False),
        "fast_readout": (_bool, False),
    },
    "optimize": {
        "start_us": (_float, 10.0),
        "stop_us": (_float, 200.0),
        "step_us": (_float, 5.0),
        "max_jumps": (_int, 2),
    },
    "fast": {
        "detection_time_us": (_float, 2.0),
        "power_factors": (_float_list, list(DEFAULT_POWER_FACTORS)),
        "dead_time_ns": (_float, 50.0),
    },
    "prep": {
        "n_bar": (_float, 1.5),
        "p_transfer": (_float, 0.042),
        "max_pulses": (_int, 50),
        "lambda_low": (_float, 0.3),
        "lambda_high": (_float, 22.0),
        "count_threshold": (_int, 5),
        "n_cap": (_int, 5),
        "detection_window_us": (_float, 20.0),
        "mc_trials": (_int, 0),
        "weight_success": (_float, None),
        "atoms_counted": (_int, 5),
        "shift_per_atom_mhz": (_float, None),
    },
}


def known_sections() -> list[str]:
    return list(_SCHEMA)


def _suggest(name: str, choices) -> str:
    match = process.extractOne(name, list(choices), score_cutoff=60)
    return f" (did you mean '{match[0]}'?)" if match else ""


def _line_index(text: str) -> tuple[dict[str, int], dict[tuple[str, str], int]]:
    """Line numbers of section headers and keys."""
    sections: dict[str, int] = {}
    keys: dict[tuple[str, str], int] = {}
    current = None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    option = re.compile(r"^([^\s=:#;][^=:]*?)\s*[=:]")
    for lineno, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, lineno)
            continue
        m = option.match(line)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip().lower()), lineno)
    return sections, keys


# ── RunConfig ─────────────────────────────────────────────────────

@dataclass
class RunConfig:
    """
    Validated run configuration plus the CLI run options.

    Usage:
        config = load_config("configs/readout_errors.cfg", master_seed=7)
        model = config.readout_model()
    """

    path: Path
    sha256: str
    values: dict[str, dict[str, object]]
    section_lines: dict[str, int] = field(default_factory=dict)
    key_lines: dict[tuple[str, str], int] = field(default_factory=dict)
    master_seed: int = 0
    workers: int = 1
    out_dir: Path = Path("out")

    def get(self, section: str, key: str):
        return self.values[section][key]

    def where(self, section: str, key: str | None = None) -> str:
        """path:line of a key (or its section) for diagnostics."""
        line = self.key_lines.get((section, key)) if key else None
        if line is None:
            line = self.section_lines.get(section, 0)
        return f"{self.path}:{line}"

    # ── Physical models ────────────────────────────────────────

    def scheme(self):
        atom = self.values["atom"]
        gamma = TWO_PI * 1e6 * atom["gamma_mhz"]
        kind = atom["scheme"]
        if kind == "two_level":
            scheme = build_two_level(gamma, atom["two_level_detuning_mhz"] * MHZ)
        elif kind == "empty":
            scheme = empty_scheme(gamma)
        else:
            scheme = build_rb87_d2(atom["b_gauss"], atom["light_shift_mhz"] * MHZ, gamma)
        labels = [s.strip() for s in atom["levels"].split(";") if s.strip()]
        if labels:
            scheme = scheme.subset(labels)
        return scheme

    def population(self, scheme) -> np.ndarray:
        text = self.values["atom"]["population"]
        if text.lower() == "uniform":
            return uniform_ground_population(scheme)
        weights = {}
        for part in text.split(";"):
            if not part.strip():
                continue
            label, sep, weight = part.rpartition("=")
            if not sep:
                raise ValueError(f"population entry {part.strip()!r} should look like label=weight")
            weights[label.strip()] = float(weight)
        return ground_population(scheme, weights)

    def reset_rate(self, scheme) -> float:
        rate = self.values["atom"]["reset_rate_mhz"]
        return 2 * scheme.gamma if rate is None else rate * MHZ

    def cavity(self) -> CavityConfig:
        c = self.values["cavity"]
        kappa = c["kappa_mhz"] * MHZ
        return CavityConfig(
            kappa=kappa,
            g0=c["g0_mhz"] * MHZ,
            birefringent_splitting=c["birefringence_mhz"] * MHZ,
            delta_ca=c["delta_ca_mhz"] * MHZ,
            modes=c["modes"],
            driven_mode=c["driven_mode"],
            drive_amplitude=c["drive_over_kappa"] * kappa,
            n_max=c["n_max"],
            mirror_loss_fraction=c["mirror_loss_fraction"],
        )

    def detunings(self) -> np.ndarray:
        s = self.values["spectrum"]
        return np.linspace(s["start_mhz"], s["stop_mhz"], s["points"]) * MHZ

    def readout_model(self) -> ReadoutModel:
        r = self.values["readout"]
        return ReadoutModel(
            r_T_F2=r["r_t_f2_per_s"], r_R_F2=r["r_r_f2_per_s"],
            r_T_F1=r["r_t_f1_per_s"], r_R_F1=r["r_r_f1_per_s"],
            tau_F2=r["tau_f2_ms"] * MS, tau_F1=r["tau_f1_ms"] * MS,
            dead_time=r["dead_time_ns"] * NS,
            bin_width=r["bin_width_us"] * US,
            background_R=r["background_r_per_s"],
            background_T=r["background_t_per_s"],
        )

    def fast_model(self) -> ReadoutModel:
        return replace(self.readout_model(), dead_time=self.values["fast"]["dead_time_ns"] * NS)

    def prep_model(self) -> PrepModel:
        p = self.values["prep"]
        return PrepModel(
            n_bar=p["n_bar"],
            p_transfer=p["p_transfer"],
            max_pulses=p["max_pulses"],
            lambda_low=p["lambda_low"],
            lambda_high=p["lambda_high"],
            count_threshold=p["count_threshold"],
            n_cap=p["n_cap"],
            detection_window=p["detection_window_us"] * US,
        )

    def shift_per_atom(self) -> float:
        """Dispersive shift per F=1 atom (rad/s); computed from g0 unless configured."""
        value = self.values["prep"]["shift_per_atom_mhz"]
        if value is None:
            return rb87_f1_dispersive_shift(self.values["cavity"]["g0_mhz"] * MHZ)
        return value * MHZ

    def optimize_grid(self) -> np.ndarray:
        o = self.values["optimize"]
        n = int(math.floor((o["stop_us"] - o["start_us"]) / o["step_us"] + 1e-9)) + 1
        return (o["start_us"] + o["step_us"] * np.arange(n)) * US


# ── Loading ───────────────────────────────────────────────────────

def _parse_values(path: Path, text: str, diagnostics: list[str]):
    parser = configparser.ConfigParser(
        interpolation=None,
        inline_comment_prefixes=("#",),
        default_section="__defaults__",
    )
    try:
        parser.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        diagnostics.append(f"{path}:{exc.lineno}: duplicate key '{exc.option}' in [{exc.section}]")
        return None
    except configparser.DuplicateSectionError as exc:
        diagnostics.append(f"{path}:{exc.lineno}: duplicate section [{exc.section}]")
        return None
    except configparser.MissingSectionHeaderError as exc:
        diagnostics.append(f"{path}:{exc.lineno}: key outside any section: {exc.line.strip()!r}")
        return None
    except configparser.ParsingError as exc:
        for lineno, line in exc.errors:
            diagnostics.append(f"{path}:{lineno}: cannot parse {line.strip()!r}")
        return None
    return parser


def load_config(
    path: str | Path,
    master_seed: int = 0,
    workers: int = 1,
    out_dir: str | Path = "out",
) -> RunConfig:
    """
    Read and validate a run configuration.

    Args:
        path: Config file.
        master_seed: Monte-Carlo master seed (unsigned 64-bit).
        workers: Process count for parallel sections.
        out_dir: Output directory.

    Raises:
        ConfigError: With one diagnostic per problem (unknown section or key,
                     malformed value, violated model invariant).
    """
    path = Path(path)
    diagnostics: list[str] = []
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError([f"{path}: config is not valid UTF-8"]) from exc

    if not 0 <= master_seed < 2**64:
        diagnostics.append(f"seed {master_seed} is outside the unsigned 64-bit range")
    if workers < 1:
        diagnostics.append(f"workers must be >= 1, got {workers}")

    parser = _parse_values(path, text, diagnostics)
    if parser is None:
        raise ConfigError(diagnostics)
    section_lines, key_lines = _line_index(text)

    values: dict[str, dict[str, object]] = {
        name: {key: default for key, (_, default) in keys.items()}
        for name, keys in _SCHEMA.items()
    }
    for section in parser.sections():
        line = section_lines.get(section, 0)
        if section not in _SCHEMA:
            diagnostics.append(
                f"{path}:{line}: unknown section [{section}]{_suggest(section, _SCHEMA)}"
            )
            continue
        schema = _SCHEMA[section]
        for key, raw_value in parser.items(section):
            kline = key_lines.get((section, key), line)
            if key not in schema:
                diagnostics.append(
                    f"{path}:{kline}: unknown key '{key}' in [{section}]{_suggest(key, schema)}"
                )
                continue
            parse, _ = schema[key]
            try:
                values[section][key] = parse(raw_value)
            except ValueError as exc:
                diagnostics.append(f"{path}:{kline}: [{section}] {key}: {exc}")

    config = RunConfig(
        path=path,
        sha256=hashlib.sha256(raw).hexdigest(),
        values=values,
        section_lines=section_lines,
        key_lines=key_lines,
        master_seed=master_seed,
        workers=workers,
        out_dir=Path(out_dir),
    )
    if not diagnostics:
        _validate_models(config, diagnostics)
    if diagnostics:
        raise ConfigError(diagnostics)
    return config


def _check(diagnostics: list[str], config: RunConfig, section: str, key: str | None, build):
    try:
        return build()
    except (ValueError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        label = f"[{section}] {key}" if key else f"[{section}]"
        diagnostics.append(f"{config.where(section, key)}: {label}: {message}")
        return None


def _validate_models(config: RunConfig, diagnostics: list[str]) -> None:
    """Build every model once so invariant violations surface at load time."""
    v = config.values
    scheme = _check(diagnostics, config, "atom", None, config.scheme)
    if scheme is not None:
        _check(diagnostics, config, "atom", "population", lambda: config.population(scheme))
    _check(diagnostics, config, "cavity", None, config.cavity)
    _check(diagnostics, config, "readout", None, config.readout_model)
    _check(diagnostics, config, "fast", "dead_time_ns", config.fast_model)
    _check(diagnostics, config, "prep", None, config.prep_model)

    rules = [
        ("spectrum", "points", v["spectrum"]["points"] >= 1, "must be >= 1"),
        ("spectrum", "stop_mhz", v["spectrum"]["stop_mhz"] >= v["spectrum"]["start_mhz"],
         "must be >= start_mhz"),
        ("cavity", "drive_over_kappa", v["cavity"]["drive_over_kappa"] > 0, "must be > 0"),
        ("atom", "reset_rate_mhz",
         v["atom"]["reset_rate_mhz"] is None or v["atom"]["reset_rate_mhz"] >= 0, "must be >= 0"),
        ("trace", "duration_ms", v["trace"]["duration_ms"] > 0, "must be > 0"),
        ("trace", "bin_width_us", v["trace"]["bin_width_us"] > 0, "must be > 0"),
        ("pmf", "detection_time_us", v["pmf"]["detection_time_us"] >= 0, "must be >= 0"),
        ("pmf", "max_jumps", v["pmf"]["max_jumps"] >= 0, "must be >= 0"),
        ("errors", "tm_time_us", v["errors"]["tm_time_us"] >= 0, "must be >= 0"),
        ("errors", "mlm_time_us", v["errors"]["mlm_time_us"] > 0, "must be > 0"),
        ("errors", "mlm_bins", v["errors"]["mlm_bins"] >= 0, "must be >= 0 (0 = from bin width)"),
        ("errors", "mlm_trials",
         v["errors"]["mlm_trials"] == 0 or v["errors"]["mlm_trials"] >= MIN_MLM_TRIALS,
         f"must be 0 (disabled) or >= {MIN_MLM_TRIALS}"),
        ("errors", "tm_mc_trials", v["errors"]["tm_mc_trials"] >= 0, "must be >= 0"),
        ("errors", "max_jumps", v["errors"]["max_jumps"] >= 0, "must be >= 0"),
        ("errors", "confidence", 0 < v["errors"]["confidence"] < 1, "must be in (0, 1)"),
        ("errors", "prep_window_f2_us", v["errors"]["prep_window_f2_us"] >= 0, "must be >= 0"),
        ("errors", "prep_window_f1_us", v["errors"]["prep_window_f1_us"] >= 0, "must be >= 0"),
        ("optimize", "step_us", v["optimize"]["step_us"] > 0, "must be > 0"),
        ("optimize", "stop_us", v["optimize"]["stop_us"] >= v["optimize"]["start_us"],
         "must be >= start_us"),
        ("optimize", "start_us", v["optimize"]["start_us"] > 0, "must be > 0"),
        ("fast", "detection_time_us", v["fast"]["detection_time_us"] > 0, "must be > 0"),
        ("fast", "power_factors",
         bool(v["fast"]["power_factors"]) and all(f > 0 for f in v["fast"]["power_factors"]),
         "must be a non-empty list of positive numbers"),
        ("prep", "mc_trials", v["prep"]["mc_trials"] >= 0, "must be >= 0"),
        ("prep", "weight_success",
         v["prep"]["weight_success"] is None or 0 <= v["prep"]["weight_success"] <= 1,
         "must be in [0, 1]"),
        ("prep", "atoms_counted", v["prep"]["atoms_counted"] >= 0, "must be >= 0"),
    ]
    for section, key, ok, message in rules:
        if not ok:
            diagnostics.append(f"{config.where(section, key)}: [{section}] {key} {message}")

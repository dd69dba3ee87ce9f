"""Experiment configuration: flat INI files with fixed sections.

Example::

    [scenario]
    kind = static
    I = 6
    J = 3
    T = 5000
    seed = 1
    gamma = 20

    [run]
    algorithms = lda, maxsinr, random, oracle
    seeds = 0-19
    out_dir = out/static
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ldaho.scenarios import DelaySpec, ScenarioConfig, ScenarioKind

ALGORITHMS = ("lda", "lda2", "maxsinr", "random", "oracle")
OUT_DIR_ENV = "LDAHO_OUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class LdaOverrides:
    rounding: str = "coupled"
    grad_at: str = "mixed"
    beta: float | None = None
    theta_scale: float = 1.0


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    algorithms: list[str] = field(default_factory=lambda: ["lda", "lda2", "maxsinr", "random"])
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    out_dir: str = "out"
    format: str = "csv"
    forecaster: str = "none"
    oracle_budget: int = 4096
    lda: LdaOverrides = field(default_factory=LdaOverrides)
    source_text: str = ""

    def digest(self) -> str:
        return hashlib.sha256(canonical_text(self).encode()).hexdigest()


# section -> {key: (ScenarioConfig attribute, parser)}
def _float_pair(v):
    lo, hi = _float_list(v)
    return (lo, hi)


def _float_list(v):
    return tuple(float(p) for p in v.replace(";", ",").split(",") if p.strip())


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_str(v):
    return v.strip() or None


_SCENARIO_KEYS = {
    "scenario": {
        "kind": ("kind", lambda v: ScenarioKind(v.strip().lower())),
        "i": ("I", int),
        "j": ("J", int),
        "t": ("T", int),
        "seed": ("seed", int),
        "gamma": ("gamma", float),
        "sinr_range_db": ("sinr_range_db", _float_pair),
        "volatile_period": ("volatile_period", int),
        "bandwidth_pool_mhz": ("bandwidth_pool_mhz", _float_list),
        "sinr_path": ("sinr_path", _opt_str),
        "bs_path": ("bs_path", _opt_str),
        "ue_path": ("ue_path", _opt_str),
    },
    "delay": {
        "spec": ("delay_spec", lambda v: DelaySpec(v.strip().lower())),
        "table_path": ("delay_table_path", _opt_str),
        "time_varying": ("delay_time_varying", _bool),
        "slot_length_ms": ("slot_length_ms", float),
    },
    "mobility": {
        "randomness": ("randomness", float),
        "speed_range": ("speed_range", _float_pair),
        "speed_var_range": ("speed_var_range", _float_pair),
        "heading_sigma_rad": ("heading_sigma_rad", float),
        "speed_cap": ("speed_cap", float),
    },
    "channel": {
        "pathloss_exponent": ("pathloss_exponent", float),
        "ref_loss_db": ("ref_loss_db", float),
        "shadowing_db": ("shadowing_db", float),
        "shadow_corr_m": ("shadow_corr_m", float),
        "extent_m": ("extent_m", float),
        "min_distance_m": ("min_distance_m", float),
        "tx_power_w": ("tx_power_w", float),
        "n_freq_groups": ("n_freq_groups", int),
        "noise_psd_dbm_hz": ("noise_psd_dbm_hz", float),
        "noise_figure_db": ("noise_figure_db", float),
        "sinr_clip_db": ("sinr_clip_db", _float_pair),
        "rat_mix": ("rat_mix", _float_list),
    },
}

_RUN_KEYS = {"algorithms", "seeds", "out_dir", "format", "forecaster", "oracle_budget"}
_LDA_KEYS = {"rounding": str, "grad_at": str, "beta": float, "theta_scale": float}


def parse_seeds(text: str) -> list[int]:
    """``"0-4"`` or ``"1, 3, 5"`` (ranges inclusive, may be mixed)."""
    out = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty seed list")
    return out


def parse_algorithms(text: str) -> list[str]:
    algos = [a.strip().lower() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise ValueError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    return algos


def _parse(cp: configparser.ConfigParser, text: str) -> ExperimentConfig:
    scen = {}
    for section in cp.sections():
        sec = section.lower()
        if sec in _SCENARIO_KEYS:
            table = _SCENARIO_KEYS[sec]
            for key, raw in cp.items(section):
                if key not in table:
                    raise ConfigError(f"unknown key '{key}' in section [{section}]")
                attr, conv = table[key]
                try:
                    scen[attr] = conv(raw)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
        elif sec not in ("run", "lda"):
            raise ConfigError(f"unknown section [{section}]")
    try:
        scenario = ScenarioConfig(**scen)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[scenario] {exc}") from None

    exp = ExperimentConfig(scenario=scenario, source_text=text)
    exp.out_dir = os.environ.get(OUT_DIR_ENV, exp.out_dir)
    if cp.has_section("run"):
        for key, raw in cp.items("run"):
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown key '{key}' in section [run]")
            try:
                if key == "algorithms":
                    exp.algorithms = parse_algorithms(raw)
                elif key == "seeds":
                    exp.seeds = parse_seeds(raw)
                elif key == "oracle_budget":
                    exp.oracle_budget = int(raw)
                else:
                    setattr(exp, key, raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[run] {key}: {exc}") from None
    if cp.has_section("lda"):
        kw = {}
        for key, raw in cp.items("lda"):
            if key not in _LDA_KEYS:
                raise ConfigError(f"unknown key '{key}' in section [lda]")
            try:
                kw[key] = _LDA_KEYS[key](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[lda] {key}: {exc}") from None
        exp.lda = LdaOverrides(**kw)
    validate(exp)
    return exp


def validate(exp: ExperimentConfig) -> None:
    if exp.format not in ("csv", "json"):
        raise ConfigError(f"[run] format: expected csv or json, got {exp.format!r}")
    fc = exp.forecaster
    if not (fc in ("none", "oracle") or fc.startswith("file:")):
        raise ConfigError(f"[run] forecaster: expected none, oracle or file:<path>, got {fc!r}")
    if exp.lda.rounding not in ("coupled", "independent"):
        raise ConfigError(f"[lda] rounding: expected coupled or independent, got {exp.lda.rounding!r}")
    if exp.lda.grad_at not in ("mixed", "implemented"):
        raise ConfigError(f"[lda] grad_at: expected mixed or implemented, got {exp.lda.grad_at!r}")
    if exp.oracle_budget < 1:
        raise ConfigError("[run] oracle_budget must be >= 1")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return _parse(cp, text)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def canonical_text(exp: ExperimentConfig) -> str:
    """Stable rendering of every effective setting, used for the digest."""
    lines = []
    for f in fields(exp.scenario):
        v = getattr(exp.scenario, f.name)
        if isinstance(v, dict):
            v = sorted((getattr(k, "value", k), p) for k, p in v.items())
        lines.append(f"scenario.{f.name}={getattr(v, 'value', v)!r}")
    for name in ("algorithms", "seeds", "forecaster", "oracle_budget"):
        lines.append(f"run.{name}={getattr(exp, name)!r}")
    for f in fields(exp.lda):
        lines.append(f"lda.{f.name}={getattr(exp.lda, f.name)!r}")
    return "\n".join(lines)


def with_gamma(exp: ExperimentConfig, gamma: float) -> ExperimentConfig:
    return replace(exp, scenario=replace(exp.scenario, gamma=gamma))

"""Seeded multi-run experiments, metrics and their emission."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ldaho.benchmarks import (
    OracleBudgetError,
    OraclePath,
    dynamic_regret,
    lda_2norm_runner,
    max_sinr_choices,
    oracle_dp,
    random_choices,
)
from ldaho.config import ExperimentConfig, canonical_text
from ldaho.lda import ForecasterHook, LdaParams, derive_params, run_lda
from ldaho.net_model import DelayModel, PathScore, ScenarioTrace, score_fractional, score_path
from ldaho.scenarios import Scenario, TraceParseError, _read_rows, generate

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SLOT_COLUMNS = ("slot", "algorithm", "seed", "g", "h", "f", "cum_g", "cum_h", "cum_f",
                "ho", "throughput", "f_frac", "regret")
LDA_VARIANTS = ("lda", "lda2")


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    score: PathScore
    f_frac: np.ndarray | None = None  # objective of the fractional mixes (LDA variants)
    regret: np.ndarray | None = None  # average dynamic regret series
    grad_norm_max: float | None = None
    G_f: float | None = None
    expert_movement: np.ndarray | None = None
    expert_bound: np.ndarray | None = None
    params: LdaParams | None = None
    final_weights: np.ndarray | None = None  # meta weights after the last slot (forecaster last)

    @property
    def discretization_error(self) -> float | None:
        if self.f_frac is None:
            return None
        frac = self.f_frac.sum()
        return float((frac - self.score.f.sum()) / abs(frac))

    @property
    def switches_per_ue(self) -> float:
        return float(self.score.switches.mean())


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunRecord]
    kappa: float
    a_max: float
    gamma: float
    shape: tuple[int, int, int]
    oracle: OraclePath | None = None
    refusal: str | None = None
    files: list[Path] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 2 if self.refusal else 0

    def by_algorithm(self, algo: str) -> list[RunRecord]:
        return [r for r in self.runs if r.algorithm == algo]


# --- forecasts -------------------------------------------------------------------


def load_forecast(path, T: int, I: int, J: int) -> np.ndarray:  # noqa: E741
    """Read ``slot,ue_id,bs_id[,x]`` rows into a ``(T, I, J)`` array.

    ``x`` defaults to 1. A (slot, UE) pair without rows repeats its previous
    slot's row (uniform before the first one). Every given row must sum to 1.
    """
    xs = np.full((T, I, J), np.nan)
    given = np.zeros((T, I), dtype=bool)
    for n, row in _read_rows(path, ("slot", "ue_id", "bs_id")):
        try:
            t, i, j = int(row["slot"]), int(row["ue_id"]), int(row["bs_id"])
            x = float(row.get("x") or 1.0)
        except ValueError as exc:
            raise TraceParseError(path, n, str(exc)) from None
        if not (0 <= t < T and 0 <= i < I and 0 <= j < J) or not 0 <= x <= 1:
            raise TraceParseError(path, n, f"out of range: slot={t} ue={i} bs={j} x={x}")
        if not given[t, i]:
            xs[t, i] = 0.0
            given[t, i] = True
        xs[t, i, j] = x
    prev = np.full((I, J), 1.0 / J)
    for t in range(T):
        xs[t][~given[t]] = prev[~given[t]]
        bad = np.abs(xs[t].sum(axis=1) - 1.0) > 1e-6
        if bad.any():
            raise ValueError(f"{path}: forecast for slot {t} ue {int(np.argmax(bad))} does not sum to 1")
        prev = xs[t]
    return xs


def _forecast_for(exp: ExperimentConfig, trace: ScenarioTrace, oracle: OraclePath | None):
    fc = exp.forecaster
    if fc == "none":
        return None
    if fc == "oracle":
        return None if oracle is None else oracle.x_star
    return load_forecast(fc[len("file:"):], trace.T, trace.I, trace.J)


# --- single runs -------------------------------------------------------------------


def _lda_params(exp: ExperimentConfig, trace: ScenarioTrace, learner: DelayModel) -> LdaParams:
    p = derive_params(trace.I, trace.J, trace.T, learner.a_max, learner.gamma)
    if exp.lda.beta is not None:
        p = replace(p, beta=exp.lda.beta)
    if exp.lda.theta_scale != 1.0:
        p = replace(p, thetas=p.thetas * exp.lda.theta_scale)
    return p


def run_one(scenario: Scenario, exp: ExperimentConfig, algo: str, seed: int,
            oracle: OraclePath | None = None, forecast: np.ndarray | None = None) -> RunRecord:
    trace, delay = scenario.trace, scenario.delay
    if algo == "oracle":
        if oracle is None:
            raise ValueError("oracle path not available")
        return RunRecord(algo, seed, score_path(trace, delay, oracle.choices))
    if algo == "maxsinr":
        return RunRecord(algo, seed, score_path(trace, delay, max_sinr_choices(trace)))
    if algo == "random":
        rng = np.random.default_rng([seed, 1])
        return RunRecord(algo, seed, score_path(trace, delay, random_choices(trace.T, trace.I, trace.J, rng)))
    if algo not in LDA_VARIANTS:
        raise ValueError(f"unknown algorithm {algo!r}")

    # both variants share one random stream per seed
    rng = np.random.default_rng([seed, 0])
    hook = ForecasterHook(None if forecast is None else (lambda t: forecast[t]))
    learner = delay if algo == "lda" else DelayModel.ones(trace.I, trace.J, delay.gamma)
    params = _lda_params(exp, trace, learner)
    kw = dict(params=params, forecaster=hook, rounding=exp.lda.rounding, grad_at=exp.lda.grad_at)
    run = run_lda(trace, delay, rng, **kw) if algo == "lda" else lda_2norm_runner(trace, delay, rng, **kw)
    score = score_path(trace, delay, run.x_impl)
    frac = score_fractional(trace, delay, run.x_m)
    G_f = run.grad_norm_max + delay.gamma * np.sqrt(delay.a_max)
    return RunRecord(
        algo, seed, score,
        f_frac=frac.f,
        grad_norm_max=run.grad_norm_max,
        G_f=float(G_f),
        expert_movement=run.expert_movement,
        expert_bound=params.thetas * trace.T * params.G_A,
        params=params,
        final_weights=run.weights[-1],
    )


def _run_job(args):
    scenario, exp, algo, seed, oracle, forecast = args
    return run_one(scenario, exp, algo, seed, oracle, forecast)


def run_on_scenario(scenario: Scenario, exp: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Every (algorithm, seed) pair of ``exp`` on an already generated scenario."""
    trace, delay = scenario.trace, scenario.delay
    oracle, refusal = None, None
    if "oracle" in exp.algorithms or exp.forecaster == "oracle":
        try:
            oracle = oracle_dp(trace, delay, budget=exp.oracle_budget)
        except OracleBudgetError as exc:
            refusal = f"oracle refused: {exc}"
            log.error(refusal)
    forecast = _forecast_for(exp, trace, oracle)
    algos = [a for a in exp.algorithms if a != "oracle" or oracle is not None]
    tasks = [(scenario, exp, a, s, oracle, forecast) for a in algos for s in exp.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_job, tasks))
    else:
        runs = [_run_job(t) for t in tasks]
    if oracle is not None:
        for r in runs:
            r.regret = dynamic_regret(r.score.f, oracle)
    return ExperimentResult(exp, runs, trace.kappa, delay.a_max, delay.gamma,
                            (trace.T, trace.I, trace.J), oracle, refusal)


def run_experiment(exp: ExperimentConfig, out_dir=None, jobs: int = 1) -> ExperimentResult:
    scenario = generate(exp.scenario)
    result = run_on_scenario(scenario, exp, jobs)
    if out_dir is not None:
        result.files = emit_metrics(result, out_dir, exp.format)
    return result


def gamma_sweep(exp: ExperimentConfig, gammas, out_dir=None, jobs: int = 1) -> dict[float, ExperimentResult]:
    """One experiment per gamma on a single shared trace and delay draw."""
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("gamma list is empty")
    scenario = generate(exp.scenario)
    results = {}
    for g in gammas:
        sc = replace(scenario, delay=scenario.delay.with_gamma(g))
        e = replace(exp, scenario=replace(exp.scenario, gamma=g))
        res = run_on_scenario(sc, e, jobs)
        if out_dir is not None:
            res.files = emit_metrics(res, Path(out_dir) / f"gamma_{g:g}", exp.format)
        results[g] = res
    if out_dir is not None:
        write_sweep_table(results, Path(out_dir) / "sweep.csv")
    return results


# --- emission -------------------------------------------------------------------------


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _slot_rows(run: RunRecord):
    """Typed per-slot rows in ``SLOT_COLUMNS`` order (None for absent values)."""
    s = run.score
    cg, ch, cf = np.cumsum(s.g), np.cumsum(s.h), np.cumsum(s.f)
    frac = run.f_frac.tolist() if run.f_frac is not None else [None] * len(s.f)
    reg = run.regret.tolist() if run.regret is not None else [None] * len(s.f)
    cols = zip(s.g.tolist(), s.h.tolist(), s.f.tolist(), cg.tolist(), ch.tolist(), cf.tolist(),
               s.ho.tolist(), s.throughput.tolist(), frac, reg)
    for t, vals in enumerate(cols):
        yield [t, run.algorithm, run.seed, *vals]


def _jsonable(v):
    if v is None or isinstance(v, (str, bool, int)):
        return v
    if isinstance(v, float):
        return v if np.isfinite(v) else None
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return str(getattr(v, "value", v))


def run_summary(run: RunRecord) -> dict:
    s = run.score
    d = {
        "algorithm": run.algorithm,
        "seed": run.seed,
        "total_g": float(s.g.sum()),
        "total_h": float(s.h.sum()),
        "total_ho": float(s.ho.sum()),
        "total_f": float(s.f.sum()),
        "total_throughput_bps": float(s.throughput.sum()),
        "switches_per_ue": run.switches_per_ue,
        "discretization_error": run.discretization_error,
        "regret_final": None if run.regret is None else float(run.regret[-1]),
    }
    if run.params is not None:
        p = run.params
        d.update({
            "total_f_fractional": float(run.f_frac.sum()),
            "grad_norm_max": run.grad_norm_max,
            "G_f": run.G_f,
            "K": p.K,
            "beta": p.beta,
            "thetas": p.thetas,
            "expert_movement": run.expert_movement,
            "expert_bound": run.expert_bound,
            "final_weights": run.final_weights,
        })
    return d


def aggregate(runs: list[RunRecord]) -> dict:
    """Seed averages for one algorithm."""
    f = np.mean([r.score.f.sum() for r in runs])
    out = {
        "seeds": len(runs),
        "mean_total_g": float(np.mean([r.score.g.sum() for r in runs])),
        "mean_total_h": float(np.mean([r.score.h.sum() for r in runs])),
        "mean_total_ho": float(np.mean([r.score.ho.sum() for r in runs])),
        "mean_total_f": float(f),
        "mean_total_throughput_bps": float(np.mean([r.score.throughput.sum() for r in runs])),
        "mean_switches_per_ue": float(np.mean([r.switches_per_ue for r in runs])),
    }
    if runs[0].regret is not None:
        out["mean_regret_final"] = float(np.mean([r.regret[-1] for r in runs]))
    if runs[0].f_frac is not None:
        frac = np.mean([r.f_frac.sum() for r in runs])
        out["discretization_error"] = float((frac - f) / abs(frac))
    return out


def summary_document(result: ExperimentResult) -> dict:
    exp = result.config
    T, I, J = result.shape  # noqa: E741
    algos = list(dict.fromkeys(r.algorithm for r in result.runs))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config_digest": exp.digest(),
        "config": dict(line.split("=", 1) for line in canonical_text(exp).splitlines()),
        "T": T, "I": I, "J": J,
        "gamma": result.gamma,
        "a_max": result.a_max,
        "kappa_bps": result.kappa,
        "units": "g, f in log10(bit/s); the optimizer's normalized values are lower by I*log10(kappa_bps) per slot",
        "seeds": exp.seeds,
        "algorithms": algos,
        "oracle": None if result.oracle is None else {
            "total_f": result.oracle.total_f, "P_T": result.oracle.P_T},
        "refusal": result.refusal,
        "aggregates": {a: aggregate(result.by_algorithm(a)) for a in algos},
        "runs": [run_summary(r) for r in result.runs],
    }
    return _jsonable(doc)


def emit_metrics(result: ExperimentResult, out_dir, fmt: str = "csv") -> list[Path]:
    """Per-slot series plus ``summary.json``; returns the written paths."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if fmt == "csv":
        p = out / "slots.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SLOT_COLUMNS)
            for run in result.runs:
                for row in _slot_rows(run):
                    w.writerow(row[:3] + [_num(v) for v in row[3:]])
    else:
        p = out / "slots.json"
        doc = {"schema_version": SCHEMA_VERSION, "columns": list(SLOT_COLUMNS),
               "rows": [row for run in result.runs for row in _slot_rows(run)]}
        p.write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")
    paths.append(p)
    s = out / "summary.json"
    s.write_text(json.dumps(summary_document(result), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths.append(s)
    return paths


SWEEP_COLUMNS = ("gamma", "algorithm", "cum_g", "neg_h", "cum_f", "total_ho", "switches_per_ue")


def sweep_rows(results: dict[float, ExperimentResult]):
    for g, res in results.items():
        for a in dict.fromkeys(r.algorithm for r in res.runs):
            agg = aggregate(res.by_algorithm(a))
            yield [repr(g), a, repr(agg["mean_total_g"]), repr(-agg["mean_total_h"]),
                   repr(agg["mean_total_f"]), repr(agg["mean_total_ho"]), repr(agg["mean_switches_per_ue"])]


def write_sweep_table(results: dict[float, ExperimentResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(sweep_rows(results))
    return path

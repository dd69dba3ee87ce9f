"""Comparison policies and the clairvoyant dynamic-programming oracle."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ldaho.lda import ForecasterHook, LdaParams, LdaRun, run_lda
from ldaho.net_model import (
    DelayModel,
    ScenarioTrace,
    _xlogy10,
    all_log_capacity,
    one_hot,
    score_path,
)

DEFAULT_ORACLE_BUDGET = 4096


class OracleBudgetError(ValueError):
    """The exact oracle's state space exceeds the configured budget."""


def max_sinr_policy(trace: ScenarioTrace, t: int) -> np.ndarray:
    """Every UE picks the BS with the best SINR in the previous slot
    (slot 0 uses its own SINR); ties go to the lowest BS index."""
    s = trace.sinr_db[max(t - 1, 0)]
    return one_hot(np.argmax(s, axis=1), trace.J)


def max_sinr_choices(trace: ScenarioTrace) -> np.ndarray:
    best = np.argmax(trace.sinr_db, axis=2)
    return np.concatenate([best[:1], best[:-1]], axis=0)


def random_policy(I: int, J: int, rng: np.random.Generator) -> np.ndarray:  # noqa: E741
    return one_hot(rng.integers(0, J, size=I), J)


def random_choices(T: int, I: int, J: int, rng: np.random.Generator) -> np.ndarray:  # noqa: E741
    """A fresh uniform association every slot."""
    return rng.integers(0, J, size=(T, I))


def lda_2norm_runner(
    trace: ScenarioTrace,
    delay: DelayModel,
    rng: np.random.Generator,
    params: LdaParams | None = None,
    forecaster: ForecasterHook | None = None,
    rounding: str = "coupled",
    grad_at: str = "mixed",
) -> LdaRun:
    """LDA that believes every handover weight is 1 (plain Euclidean cost).

    Only the learner sees the all-ones model; score the returned path with
    the scenario's real ``delay``.
    """
    unit = DelayModel.ones(trace.I, trace.J, delay.gamma)
    return run_lda(trace, unit, rng, params=params, forecaster=forecaster, rounding=rounding, grad_at=grad_at)


# --- oracle ------------------------------------------------------------------


@dataclass
class OraclePath:
    choices: np.ndarray  # (T, I) BS index per UE
    f: np.ndarray  # per-slot objective along the path
    total_f: float
    P_T: float  # sum_t ||x*_t - x*_{t-1}||_{A_t}
    J: int = 0

    @property
    def x_star(self) -> np.ndarray:
        return np.stack([one_hot(c, self.J) for c in self.choices])


def enumerate_states(I: int, J: int) -> np.ndarray:  # noqa: E741
    """All J**I integral associations as BS-index rows, in lexicographic order."""
    return np.array(list(itertools.product(range(J), repeat=I)), dtype=np.int64).reshape(-1, I)


def _state_distance(a: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Pairwise ||s - s'||_A between integral states for delay weights ``a``."""
    n, I = states.shape  # noqa: E741
    J = a.shape[1]
    d2 = np.zeros((n, n))
    off = 1.0 - np.eye(J)
    for i in range(I):
        per_ue = (a[i][:, None] + a[i][None, :]) * off
        col = states[:, i]
        d2 += per_ue[col][:, col]
    return np.sqrt(d2)


def oracle_dp(
    trace: ScenarioTrace,
    delay: DelayModel,
    gamma: float | None = None,
    budget: int = DEFAULT_ORACLE_BUDGET,
) -> OraclePath:
    """Exact maximizer of sum_t f_t over integral association sequences.

    Forward DP over the J**I states with per-step argmax ties resolved to the
    lexicographically smallest state.
    """
    T, I, J = trace.T, trace.I, trace.J  # noqa: E741
    n = J**I
    if n > budget:
        raise OracleBudgetError(
            f"oracle state space J^I = {J}^{I} = {n} exceeds budget {budget} (J^I*T = {n * T})"
        )
    if gamma is None:
        gamma = delay.gamma
    states = enumerate_states(I, J)
    loads = np.stack([np.bincount(s, minlength=J) for s in states]).astype(float)
    ylogy = _xlogy10(loads).sum(axis=1)
    log_c = all_log_capacity(trace)
    g = np.zeros((T, n))
    for i in range(I):
        g += log_c[:, i, states[:, i]]
    g -= ylogy[None, :]

    dist = _state_distance(delay.at(0), states) if delay.static_flag else None
    back = np.zeros((T, n), dtype=np.int32)
    val = g[0].copy()
    for t in range(1, T):
        dt = dist if dist is not None else _state_distance(delay.at(t), states)
        cand = val[None, :] - gamma * dt
        back[t] = np.argmax(cand, axis=1)
        val = g[t] + cand[np.arange(n), back[t]]

    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(val))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    choices = states[path]
    score = score_path(trace, delay.with_gamma(gamma), choices)
    return OraclePath(choices, score.f, float(score.f.sum()), float(score.ho.sum()), J)


def dynamic_regret(run_f: np.ndarray, oracle: OraclePath | np.ndarray) -> np.ndarray:
    """Average dynamic regret (cumulative oracle-minus-run objective over t)."""
    of = oracle.f if isinstance(oracle, OraclePath) else np.asarray(oracle)
    run_f = np.asarray(run_f, dtype=float)
    if run_f.shape != of.shape:
        raise ValueError(f"horizon mismatch: {run_f.shape} vs {of.shape}")
    return np.cumsum(of - run_f) / np.arange(1, len(of) + 1)

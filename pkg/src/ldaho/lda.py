"""Learning Dynamic Associations: a Hedge meta-learner over online
gradient-ascent experts with different step sizes.

Each slot the experts' fractional decisions are mixed by the meta weights,
the mix is rounded to an integral association, and one gradient of the
throughput utility is broadcast back to every expert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ldaho.net_model import (
    DelayModel,
    ScenarioTrace,
    grad_from_logc,
    gradient_bound,
    one_hot,
)


@dataclass(frozen=True)
class LdaParams:
    K: int
    thetas: np.ndarray
    beta: float
    D: float
    G: float
    D_A: float
    G_A: float
    D_A_star: float
    a_max: float
    nu: float
    gamma: float
    T: int


def derive_params(I: int, J: int, T: int, a_max: float, gamma: float = 1.0) -> LdaParams:  # noqa: E741
    """Expert count, expert steps and meta step from the problem size.

    >>> derive_params(100, 10, 5000, 1.0).K
    8
    """
    if T < 1 or I < 1 or J < 1:
        raise ValueError(f"I, J, T must be >= 1 (got I={I}, J={J}, T={T})")
    if not a_max > 0:
        raise ValueError(f"a_max must be > 0 (got {a_max})")
    D = math.sqrt(2 * I)
    G = gradient_bound(I, J)
    sa = math.sqrt(a_max)
    D_A, G_A, D_A_star = sa * D, sa * G, D / sa
    K = math.ceil(math.log2(math.sqrt(1 + 2 * T))) + 1
    base = math.sqrt(D_A**2 / (T * (G**2 + 2 * G_A)))
    thetas = base * 2.0 ** np.arange(K)
    nu = (2 * G * D + D_A) ** 2 * (D_A + 1 / 8)
    beta = 1 / math.sqrt(T * nu)
    return LdaParams(K, thetas, beta, D, G, D_A, G_A, D_A_star, a_max, nu, gamma, T)


def init_weights(K: int) -> np.ndarray:
    k = np.arange(1, K + 1, dtype=float)
    w = (1 + 1 / K) / (k * (k + 1))
    # the closed form telescopes to exactly 1; renormalize away rounding
    return w / w.sum()


def project_simplex_rows(z: np.ndarray) -> np.ndarray:
    """Euclidean projection of every last-axis row onto the probability simplex."""
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    u = -np.sort(-z, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    # cond holds on a prefix; the last True index gives the support size
    rho = n - np.argmax(cond[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, (rho - 1)[..., None], axis=-1) / rho[..., None]
    return np.maximum(z - tau, 0.0)


def meta_mix(experts: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted combination of expert decisions; ``experts`` is ``(K, I, J)``."""
    x = np.tensordot(w, experts, axes=1)
    # rows drift off the simplex only by rounding; keep them exact
    return np.clip(x, 0.0, 1.0)


def quantize(x_m: np.ndarray, rng: np.random.Generator | None = None, u: np.ndarray | None = None) -> np.ndarray:
    """Per-UE categorical draw with probabilities ``x_m[i]``.

    Each UE picks the BS whose cumulative-probability interval contains its
    uniform ``u[i]``; fresh uniforms come from ``rng`` when ``u`` is omitted.
    """
    I, J = x_m.shape  # noqa: E741
    cdf = np.cumsum(x_m, axis=1)
    cdf[:, -1] = np.inf
    if u is None:
        u = rng.random(I)
    u = u * x_m.sum(axis=1)
    choice = np.minimum((cdf <= u[:, None]).sum(axis=1), J - 1)
    return one_hot(choice, J)


def surrogate_loss(
    grad: np.ndarray,
    x_t: np.ndarray,
    xk: np.ndarray,
    xk_prev: np.ndarray,
    delay: DelayModel,
    t: int,
) -> np.ndarray:
    """Partially linearized gain of expert decision(s) ``xk``.

    Accepts a single ``(I, J)`` decision or a ``(K, I, J)`` stack and returns
    a scalar or a length-K array accordingly.
    """
    a = delay.at(t)
    lin = np.sum(grad * (xk - x_t), axis=(-2, -1))
    d = xk - xk_prev
    move = np.sqrt(np.sum(a * d * d, axis=(-2, -1)))
    return lin - delay.gamma * move


def update_weights(w: np.ndarray, losses: np.ndarray, beta: float) -> np.ndarray:
    """Exponential reweighting w_k exp(beta * l_k), normalized in log space."""
    with np.errstate(divide="ignore"):  # underflowed weights stay at zero
        z = np.log(w) + beta * np.asarray(losses, dtype=float)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def expert_ascent(xk: np.ndarray, grad: np.ndarray, theta_k) -> np.ndarray:
    """Projected gradient-ascent step; ``theta_k`` may be a per-expert vector
    broadcasting over a ``(K, I, J)`` stack."""
    theta = np.asarray(theta_k, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, None, None]
    return project_simplex_rows(xk + theta * grad)


# --- the full algorithm -----------------------------------------------------


Provider = Callable[[int], np.ndarray]


@dataclass
class ForecasterHook:
    """Supplies a fractional association at the start of each slot; the
    meta-learner treats it as one extra, never-updated expert."""

    provider: Provider | None = None

    @property
    def enabled(self) -> bool:
        return self.provider is not None


@dataclass
class LdaState:
    params: LdaParams
    experts: np.ndarray
    prev_experts: np.ndarray
    w: np.ndarray
    rng: np.random.Generator
    grad_at: str = "mixed"
    u: np.ndarray | None = None  # persistent per-UE uniforms for coupled rounding
    forecast_prev: np.ndarray | None = None
    x_m: np.ndarray | None = None
    x_impl: np.ndarray | None = None
    t: int = 0
    movement: np.ndarray = field(default=None)  # cumulative A-norm movement per expert

    @property
    def K(self) -> int:
        return self.params.K


def init_state(
    params: LdaParams,
    I: int,  # noqa: E741
    J: int,
    rng: np.random.Generator,
    forecaster: bool = False,
    rounding: str = "coupled",
    grad_at: str = "mixed",
) -> LdaState:
    """Random-vertex experts and the prior weights.

    ``rounding="coupled"`` draws one uniform per UE for the whole run, so the
    rounding of consecutive mixes is positively correlated (each slot is still
    an unbiased draw); ``"independent"`` redraws every slot.

    ``grad_at`` selects where the broadcast gradient is taken: at the mixed
    fractional decision (``"mixed"``) or at the implemented integral one
    (``"implemented"``). The latter lets large-step experts lock into
    two-slot cycles driven by the load term.
    """
    if rounding not in ("coupled", "independent"):
        raise ValueError(f"unknown rounding {rounding!r}")
    if grad_at not in ("mixed", "implemented"):
        raise ValueError(f"unknown grad_at {grad_at!r}")
    experts = np.stack([one_hot(rng.integers(0, J, size=I), J) for _ in range(params.K)])
    w = init_weights(params.K + 1 if forecaster else params.K)
    u = rng.random(I) if rounding == "coupled" else None
    return LdaState(
        grad_at=grad_at,
        u=u,
        params=params,
        experts=experts,
        prev_experts=experts.copy(),
        w=w,
        rng=rng,
        movement=np.zeros(params.K),
    )


@dataclass
class StepInfo:
    x_impl: np.ndarray
    x_m: np.ndarray
    grad: np.ndarray
    losses: np.ndarray


def lda_step(
    state: LdaState,
    trace: ScenarioTrace,
    delay: DelayModel,
    t: int,
    forecaster: ForecasterHook | None = None,
    log_c: np.ndarray | None = None,
) -> tuple[np.ndarray, LdaState, StepInfo]:
    """Play one slot and update the state in place (it is also returned).

    ``delay`` is the model the learner optimizes against; it must carry
    ``gamma``. ``log_c`` may be passed to reuse precomputed normalized
    log-capacities for slot ``t``.
    """
    if log_c is None:
        log_c = trace.log_capacity(t)
    experts, prev = state.experts, state.prev_experts

    if forecaster is not None and forecaster.enabled:
        xp = np.asarray(forecaster.provider(t), dtype=float)
        xp_prev = xp if state.forecast_prev is None else state.forecast_prev
        experts = np.concatenate([experts, xp[None]])
        prev = np.concatenate([prev, xp_prev[None]])
        state.forecast_prev = xp

    x_m = meta_mix(experts, state.w)
    x_t = quantize(x_m, state.rng, state.u)
    grad = grad_from_logc(log_c, x_m if state.grad_at == "mixed" else x_t)
    losses = surrogate_loss(grad, x_t, experts, prev, delay, t)
    state.w = update_weights(state.w, losses, state.params.beta)

    a = delay.at(t)
    new = expert_ascent(state.experts, grad, state.params.thetas)
    d = new - state.experts
    state.movement += np.sqrt(np.sum(a * d * d, axis=(1, 2)))
    state.prev_experts = state.experts
    state.experts = new
    state.x_m, state.x_impl = x_m, x_t
    state.t = t + 1
    return x_t, state, StepInfo(x_t, x_m, grad, losses)


@dataclass
class LdaRun:
    """Trajectory of one LDA run."""

    x_impl: np.ndarray  # (T, I) chosen BS per UE
    x_m: np.ndarray  # (T, I, J) fractional mixes
    weights: np.ndarray  # (T, K') weights used in each slot
    grad_norm_max: float
    expert_movement: np.ndarray  # (K,) cumulative A-norm movement per expert
    params: LdaParams


def run_lda(
    trace: ScenarioTrace,
    delay: DelayModel,
    rng: np.random.Generator,
    params: LdaParams | None = None,
    forecaster: ForecasterHook | None = None,
    rounding: str = "coupled",
    grad_at: str = "mixed",
) -> LdaRun:
    """Run LDA over the whole horizon against the learner's delay model."""
    T, I, J = trace.T, trace.I, trace.J  # noqa: E741
    if params is None:
        params = derive_params(I, J, T, delay.a_max, delay.gamma)
    fc = forecaster if forecaster is not None and forecaster.enabled else None
    state = init_state(params, I, J, rng, forecaster=fc is not None, rounding=rounding, grad_at=grad_at)

    x_impl = np.empty((T, I), dtype=np.int64)
    x_ms = np.empty((T, I, J))
    weights = np.empty((T, len(state.w)))
    gmax = 0.0
    for t in range(T):
        weights[t] = state.w
        x_t, state, info = lda_step(state, trace, delay, t, fc)
        x_impl[t] = np.argmax(x_t, axis=1)
        x_ms[t] = info.x_m
        gmax = max(gmax, float(np.linalg.norm(info.grad)))
    return LdaRun(x_impl, x_ms, weights, gmax, state.movement.copy(), params)


def regret_bound(params: LdaParams, G_f: float, P_T: float, I: int, J: int, n_experts: int | None = None) -> float:  # noqa: E741
    """Upper bound on expected dynamic regret after ``params.T`` slots.

    Uses the expert whose step is the largest one not exceeding the ideal
    step for path length ``P_T`` (the first expert if none qualifies), and
    adds the rounding term ``G_f * T * sqrt(I - I/J)``.
    """
    T, G, G_A, D_A = params.T, params.G, params.G_A, params.D_A
    reach = D_A**2 + 2 * params.D_A_star * P_T
    theta_star = math.sqrt(reach / (T * (G**2 + 2 * G_A)))
    k = int(np.searchsorted(params.thetas, theta_star, side="right"))
    k = min(max(k, 1), params.K)
    w1 = init_weights(n_experts or params.K)[k - 1]
    meta = math.sqrt(params.nu) * (1 + math.log(1 / w1))
    expert = math.sqrt(G**2 + 2 * G_A) * math.sqrt(reach)
    return math.sqrt(T) * (meta + expert) + G_f * T * math.sqrt(I - I / J)


__all__ = [
    "ForecasterHook",
    "LdaParams",
    "LdaRun",
    "LdaState",
    "derive_params",
    "expert_ascent",
    "init_state",
    "init_weights",
    "lda_step",
    "meta_mix",
    "project_simplex_rows",
    "quantize",
    "regret_bound",
    "run_lda",
    "surrogate_loss",
    "update_weights",
]

"""Network layer: SINR, capacities, the log-utility throughput objective and
the A-norm handover cost.

Associations are plain ``(I, J)`` float arrays. A row is a UE, a column a BS;
every row lies on the probability simplex. Integral associations have one-hot
rows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

LOG10_E = 1.0 / np.log(10.0)
Y_FLOOR = 1e-6
SINR_FLOOR_DB = -10.0
ROW_TOL = 1e-9


class Rat(str, enum.Enum):
    G2 = "G2"
    G3 = "G3"
    G4_5NSA = "G4_5NSA"


class UeType(str, enum.Enum):
    DONGLE = "Dongle"
    IOT = "IoT"
    FEATURE_PHONE = "FeaturePhone"
    MODEM = "Modem"
    SMARTPHONE = "Smartphone"
    TABLET = "Tablet"
    WLAN_ROUTER = "WlanRouter"
    WEARABLE = "Wearable"


@dataclass(frozen=True)
class BsConfig:
    id: int
    bandwidth_hz: float
    tx_power_w: float = 20.0
    rat: Rat = Rat.G4_5NSA
    freq_group: int = 0
    location: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError(f"BS {self.id}: bandwidth_hz must be > 0")
        if not self.tx_power_w > 0:
            raise ValueError(f"BS {self.id}: tx_power_w must be > 0")
        object.__setattr__(self, "rat", Rat(self.rat))


@dataclass(frozen=True)
class GaussMarkovParams:
    mean_speed: float
    speed_var: float
    randomness: float = 0.5

    def __post_init__(self):
        if not 1.0 <= self.mean_speed <= 28.0:
            raise ValueError(f"mean speed {self.mean_speed} outside [1, 28] m/s")
        if not 0.0 <= self.speed_var <= 14.0:
            raise ValueError(f"speed variance {self.speed_var} outside [0, 14]")
        if not 0.0 <= self.randomness <= 1.0:
            raise ValueError(f"randomness {self.randomness} outside [0, 1]")


@dataclass(frozen=True)
class UeConfig:
    id: int
    ue_type: UeType = UeType.SMARTPHONE
    mobility: GaussMarkovParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "ue_type", UeType(self.ue_type))


@dataclass(eq=False)
class ScenarioTrace:
    """Per-slot average SINR (dB) for every UE-BS pair, shape ``(T, I, J)``.

    ``kappa`` is the global capacity normalizer (bit/s): the optimizer works
    with ``log10(c / kappa)``. It defaults to the smallest capacity in the
    trace so every normalized capacity is >= 1.
    """

    sinr_db: np.ndarray
    bs: list[BsConfig]
    ue: list[UeConfig]
    kappa: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sinr_db = np.asarray(self.sinr_db, dtype=float)
        if self.sinr_db.ndim != 3:
            raise ValueError("sinr_db must have shape (T, I, J)")
        T, I, J = self.sinr_db.shape
        if len(self.bs) != J or len(self.ue) != I:
            raise ValueError(
                f"metadata mismatch: sinr is {T}x{I}x{J}, got {len(self.ue)} UEs and {len(self.bs)} BSs"
            )
        if not np.all(np.isfinite(self.sinr_db)):
            raise ValueError("sinr_db contains non-finite entries")
        if self.kappa is None:
            # capacity is increasing in SINR, so the minimum sits at each column's lowest SINR
            s_min = self.sinr_db.min(axis=(0, 1))
            self.kappa = float(np.min(self.bandwidth_hz * np.log2(1.0 + sinr_linear(s_min))))

    @property
    def T(self) -> int:
        return self.sinr_db.shape[0]

    @property
    def I(self) -> int:  # noqa: E743
        return self.sinr_db.shape[1]

    @property
    def J(self) -> int:
        return self.sinr_db.shape[2]

    @cached_property
    def bandwidth_hz(self) -> np.ndarray:
        return np.array([b.bandwidth_hz for b in self.bs], dtype=float)

    def capacity(self, t: int) -> np.ndarray:
        """Unscaled capacities c_ij(t) in bit/s."""
        return self.bandwidth_hz * np.log2(1.0 + sinr_linear(self.sinr_db[t]))

    def log_capacity(self, t: int) -> np.ndarray:
        """Normalized log10 capacities used by the optimizer."""
        return np.log10(self.capacity(t)) - np.log10(self.kappa)


@dataclass(eq=False)
class DelayModel:
    """Diagonal handover-delay weights.

    ``a`` is ``(I, J)`` for a slot-invariant model or ``(T, I, J)`` when the
    delays change per slot.
    """

    a: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.ndim not in (2, 3):
            raise ValueError("delay weights must be (I, J) or (T, I, J)")
        if np.any(self.a < 0) or not np.all(np.isfinite(self.a)):
            raise ValueError("delay weights must be finite and nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @property
    def static_flag(self) -> bool:
        return self.a.ndim == 2

    @property
    def a_max(self) -> float:
        return float(self.a.max())

    def at(self, t: int) -> np.ndarray:
        return self.a if self.static_flag else self.a[t]

    def with_gamma(self, gamma: float) -> "DelayModel":
        return DelayModel(self.a, gamma)

    @classmethod
    def ones(cls, I: int, J: int, gamma: float = 1.0) -> "DelayModel":  # noqa: E741
        return cls(np.ones((I, J)), gamma)


# --- associations -----------------------------------------------------------


def one_hot(choice, J: int) -> np.ndarray:
    choice = np.asarray(choice, dtype=int)
    x = np.zeros((choice.size, J))
    x[np.arange(choice.size), choice] = 1.0
    return x


def is_row_stochastic(x: np.ndarray, tol: float = ROW_TOL) -> bool:
    x = np.asarray(x)
    return bool(
        np.all(x >= -tol) and np.all(x <= 1 + tol) and np.all(np.abs(x.sum(axis=-1) - 1.0) <= tol)
    )


def is_integral(x: np.ndarray) -> bool:
    x = np.asarray(x)
    return bool(np.all((x == 0) | (x == 1)) and np.all(x.sum(axis=-1) == 1))


def check_association(x: np.ndarray, name: str = "x") -> None:
    if not is_row_stochastic(x):
        raise ValueError(f"{name} is not row-stochastic")


# --- objective --------------------------------------------------------------


def sinr_linear(s_db):
    return np.power(10.0, np.asarray(s_db, dtype=float) / 10.0)


def capacity(trace: ScenarioTrace, t: int, i: int, j: int) -> float:
    """Shannon capacity w_j log2(1 + s_ij(t)) in bit/s."""
    return float(trace.bs[j].bandwidth_hz * np.log2(1.0 + sinr_linear(trace.sinr_db[t, i, j])))


def _xlogy10(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    pos = y > 0
    out[pos] = y[pos] * np.log10(y[pos])
    return out


def g_from_logc(log_c: np.ndarray, x: np.ndarray) -> float:
    y = x.sum(axis=0)
    return float(np.sum(x * log_c) - np.sum(_xlogy10(y)))


def grad_from_logc(log_c: np.ndarray, x: np.ndarray, y_floor: float = Y_FLOOR) -> np.ndarray:
    y = np.maximum(x.sum(axis=0), y_floor)
    return log_c - np.log10(y)[None, :] - LOG10_E


def g_value(trace: ScenarioTrace, t: int, x: np.ndarray) -> float:
    """Throughput utility sum x_ij log10 c_ij - sum_j y_j log10 y_j."""
    return g_from_logc(trace.log_capacity(t), np.asarray(x, dtype=float))


def g_gradient(trace: ScenarioTrace, t: int, x: np.ndarray, y_floor: float = Y_FLOOR) -> np.ndarray:
    """Gradient of :func:`g_value`; BS loads are clamped at ``y_floor``."""
    return grad_from_logc(trace.log_capacity(t), np.asarray(x, dtype=float), y_floor)


def a_norm(a: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(a * v * v)))


def switching_cost(delay: DelayModel, t: int, x: np.ndarray, x_prev: np.ndarray) -> float:
    """Handover cost magnitude gamma * ||x - x_prev||_{A_t} (nonnegative)."""
    return delay.gamma * a_norm(delay.at(t), np.asarray(x) - np.asarray(x_prev))


def f_value(
    trace: ScenarioTrace, delay: DelayModel, t: int, x: np.ndarray, x_prev: np.ndarray
) -> float:
    return g_value(trace, t, x) - switching_cost(delay, t, x, x_prev)


def gradient_bound(I: int, J: int) -> float:  # noqa: E741
    """Nominal gradient-norm constant sqrt(IJ (log10 J + 1/ln 10)^2)."""
    return float(np.sqrt(I * J) * (np.log10(J) + LOG10_E))


# --- reporting --------------------------------------------------------------


def throughput(
    trace: ScenarioTrace, t: int, x: np.ndarray, x_prev: np.ndarray, a: np.ndarray
) -> float:
    """Sum rate (bit/s) under equal-share scheduling with handover disruption.

    A UE that changed BS loses the fraction ``min(1, a_old + a_new)`` of the
    slot; ``x`` and ``x_prev`` must be integral.
    """
    c = trace.capacity(t)
    y = x.sum(axis=0)
    cur = np.argmax(x, axis=1)
    prev = np.argmax(x_prev, axis=1)
    rows = np.arange(x.shape[0])
    d = np.where(cur != prev, np.minimum(1.0, a[rows, cur] + a[rows, prev]), 0.0)
    return float(np.sum(c[rows, cur] * (1.0 - d) / y[cur]))


def all_log_capacity(trace: ScenarioTrace) -> np.ndarray:
    """Normalized log10 capacities for every slot, shape ``(T, I, J)``."""
    c = trace.bandwidth_hz * np.log2(1.0 + sinr_linear(trace.sinr_db))
    return np.log10(c) - np.log10(trace.kappa)


@dataclass
class PathScore:
    """Per-slot scores of an association sequence.

    ``g`` and ``f`` are in unscaled units (log10 of bit/s); subtract
    ``I * log10(trace.kappa)`` per slot to get the optimizer's normalized
    values.
    """

    g: np.ndarray
    ho: np.ndarray  # unweighted ||x_t - x_{t-1}||_{A_t}
    h: np.ndarray  # gamma * ho
    f: np.ndarray
    throughput: np.ndarray | None = None  # bit/s, integral paths only
    switches: np.ndarray | None = None  # per-UE handover counts, integral paths only


def score_path(trace: ScenarioTrace, delay: DelayModel, choices: np.ndarray) -> PathScore:
    """Score integral BS choices ``(T, I)`` slot by slot.

    The association before the first slot is taken to be the first slot's
    own decision, so no run pays an initial handover.
    """
    choices = np.asarray(choices, dtype=np.int64)
    T, I = choices.shape  # noqa: E741
    J = trace.J
    rows = np.arange(I)
    g = np.empty(T)
    ho = np.empty(T)
    tp = np.empty(T)
    switches = np.zeros(I, dtype=np.int64)
    prev = choices[0]
    for t in range(T):
        cur = choices[t]
        c = trace.capacity(t)
        y = np.bincount(cur, minlength=J).astype(float)
        g[t] = np.sum(np.log10(c[rows, cur])) - np.sum(_xlogy10(y))
        a = delay.at(t)
        moved = cur != prev
        ho[t] = np.sqrt(np.sum((a[rows, cur] + a[rows, prev]) * moved))
        d = np.where(moved, np.minimum(1.0, a[rows, cur] + a[rows, prev]), 0.0)
        tp[t] = np.sum(c[rows, cur] * (1.0 - d) / y[cur])
        switches += moved
        prev = cur
    h = delay.gamma * ho
    return PathScore(g, ho, h, g - h, tp, switches)


def score_fractional(trace: ScenarioTrace, delay: DelayModel, xs: np.ndarray) -> PathScore:
    """Score a fractional sequence ``(T, I, J)`` in the same units as :func:`score_path`."""
    T = xs.shape[0]
    g = np.empty(T)
    ho = np.empty(T)
    prev = xs[0]
    for t in range(T):
        g[t] = g_from_logc(np.log10(trace.capacity(t)), xs[t])
        ho[t] = a_norm(delay.at(t), xs[t] - prev)
        prev = xs[t]
    h = delay.gamma * ho
    return PathScore(g, ho, h, g - h)

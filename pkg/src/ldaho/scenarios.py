"""Scenario construction: synthetic SINR traces, Gauss-Markov mobility with a
log-distance channel, handover-delay models, and CSV trace ingestion."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ldaho.net_model import (
    SINR_FLOOR_DB,
    BsConfig,
    DelayModel,
    GaussMarkovParams,
    Rat,
    ScenarioTrace,
    UeConfig,
    UeType,
)

log = logging.getLogger(__name__)


class ScenarioKind(str, enum.Enum):
    STATIC = "static"
    VOLATILE = "volatile"
    MOBILITY = "mobility"
    EXTERNAL = "external"


class DelaySpec(str, enum.Enum):
    UNIFORM_UNIT = "uniform_unit"
    MEASURED_TABLE = "measured_table"


class TraceParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path, self.lineno = path, lineno


class TraceSchemaError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.STATIC
    I: int = 100  # noqa: E741
    J: int = 10
    T: int = 5000
    seed: int = 0
    gamma: float = 20.0
    sinr_range_db: tuple[float, float] = (10.0, 30.0)
    volatile_period: int = 5
    bandwidth_pool_mhz: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    delay_spec: DelaySpec = DelaySpec.UNIFORM_UNIT
    delay_table_path: str | None = None
    delay_time_varying: bool = False
    slot_length_ms: float = 1000.0
    # Gauss-Markov mobility
    randomness: float = 0.5
    speed_range: tuple[float, float] = (1.0, 28.0)
    speed_var_range: tuple[float, float] = (0.0, 14.0)
    heading_sigma_rad: float = 0.5
    speed_cap: float = 40.0
    # synthetic channel (not from measurements)
    pathloss_exponent: float = 3.5
    ref_loss_db: float = 15.3
    shadowing_db: float = 8.0
    shadow_corr_m: float = 50.0
    extent_m: float = 1000.0
    min_distance_m: float = 10.0
    tx_power_w: float = 20.0
    n_freq_groups: int = 3
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 7.0
    sinr_clip_db: tuple[float, float] = (-10.0, 40.0)
    rat_mix: tuple[float, float, float] = (0.80, 0.12, 0.08)  # 4G/5G-NSA, 3G, 2G
    ue_type_mix: dict = field(
        default_factory=lambda: {
            UeType.SMARTPHONE: 0.5,
            UeType.MODEM: 0.1,
            UeType.IOT: 0.1,
            UeType.TABLET: 0.1,
            UeType.DONGLE: 0.05,
            UeType.FEATURE_PHONE: 0.05,
            UeType.WLAN_ROUTER: 0.05,
            UeType.WEARABLE: 0.05,
        }
    )
    # external traces
    sinr_path: str | None = None
    bs_path: str | None = None
    ue_path: str | None = None

    def __post_init__(self):
        self.kind = ScenarioKind(self.kind)
        self.delay_spec = DelaySpec(self.delay_spec)
        if self.kind is not ScenarioKind.EXTERNAL and min(self.I, self.J, self.T) < 1:
            raise ValueError("I, J and T must be >= 1")
        if self.volatile_period < 1:
            raise ValueError("volatile_period must be >= 1")
        lo, hi = self.sinr_range_db
        if not lo < hi:
            raise ValueError("sinr_range_db needs lo < hi")
        if self.slot_length_ms <= 0:
            raise ValueError("slot_length_ms must be > 0")


@dataclass
class Scenario:
    trace: ScenarioTrace
    delay: DelayModel
    config: ScenarioConfig
    positions: np.ndarray | None = None  # (T, I, 2) for mobility scenarios


# --- handover delays -----------------------------------------------------------

_ALL_TYPES = tuple(UeType)

# (mode, lo, hi) in msec. 4G/5G-NSA rows for smartphones, modems and IoT and the
# 3G/2G ranges follow the published summary statistics; the other device rows
# are placeholders inside the observed 50-110 ms band.
DEFAULT_DELAY_TABLE: dict[tuple[UeType, Rat], tuple[float, float, float]] = {}
for _u in _ALL_TYPES:
    DEFAULT_DELAY_TABLE[(_u, Rat.G4_5NSA)] = (60.0, 50.0, 110.0)
    DEFAULT_DELAY_TABLE[(_u, Rat.G3)] = (675.0, 400.0, 950.0)
    DEFAULT_DELAY_TABLE[(_u, Rat.G2)] = (925.0, 750.0, 1100.0)
DEFAULT_DELAY_TABLE[(UeType.SMARTPHONE, Rat.G4_5NSA)] = (56.0, 50.0, 62.0)
DEFAULT_DELAY_TABLE[(UeType.MODEM, Rat.G4_5NSA)] = (75.0, 50.0, 110.0)
DEFAULT_DELAY_TABLE[(UeType.IOT, Rat.G4_5NSA)] = (73.0, 50.0, 110.0)


@dataclass
class DelayTable:
    """Triangular HO-delay distribution per (UE type, RAT), in msec."""

    entries: dict[tuple[UeType, Rat], tuple[float, float, float]] = field(
        default_factory=lambda: dict(DEFAULT_DELAY_TABLE)
    )
    slot_length_ms: float = 1000.0

    def __post_init__(self):
        for key, (mode, lo, hi) in self.entries.items():
            if not (mode > 0 and lo <= mode <= hi):
                raise ValueError(f"delay table entry {key}: need 0 < mode and lo <= mode <= hi")

    def sample(self, ue_type, rat, rng, size=None):
        key = (UeType(ue_type), Rat(rat))
        if key not in self.entries:
            raise KeyError(f"no delay-table entry for (ue_type={key[0].value}, rat={key[1].value})")
        mode, lo, hi = self.entries[key]
        d = rng.triangular(lo, mode, hi, size=size) if hi > lo else np.full(size or (), mode)
        return np.clip(d / self.slot_length_ms, 0.0, 1.0)

    @classmethod
    def read(cls, path, slot_length_ms: float = 1000.0) -> "DelayTable":
        entries = {}
        for lineno, row in _read_rows(path, ("ue_type", "rat", "mean_ms", "lo_ms", "hi_ms")):
            try:
                key = (UeType(row["ue_type"]), Rat(row["rat"]))
                entries[key] = (float(row["mean_ms"]), float(row["lo_ms"]), float(row["hi_ms"]))
            except ValueError as exc:
                raise TraceParseError(path, lineno, str(exc)) from None
        return cls(entries, slot_length_ms)

    def write(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["ue_type", "rat", "mean_ms", "lo_ms", "hi_ms"])
            for (u, r), (mode, lo, hi) in self.entries.items():
                w.writerow([u.value, r.value, repr(mode), repr(lo), repr(hi)])


def build_delay_model(
    cfg: ScenarioConfig,
    ue: list[UeConfig],
    bs: list[BsConfig],
    rng: np.random.Generator,
    table: DelayTable | None = None,
) -> DelayModel:
    I, J = len(ue), len(bs)  # noqa: E741
    shape = (cfg.T, I, J) if cfg.delay_time_varying else (I, J)
    if cfg.delay_spec is DelaySpec.UNIFORM_UNIT:
        return DelayModel(rng.uniform(0.0, 1.0, size=shape), cfg.gamma)
    if table is None:
        if cfg.delay_table_path:
            table = DelayTable.read(cfg.delay_table_path, cfg.slot_length_ms)
        else:
            table = DelayTable(slot_length_ms=cfg.slot_length_ms)
    a = np.empty(shape)
    lead = shape[:-2]
    for i, u in enumerate(ue):
        for j, b in enumerate(bs):
            try:
                a[..., i, j] = table.sample(u.ue_type, b.rat, rng, size=lead or None)
            except KeyError as exc:
                raise ValueError(f"delay configuration error: {exc.args[0]}") from None
    return DelayModel(a, cfg.gamma)


# --- synthetic SINR generators -------------------------------------------------


def _synthetic_bs(cfg: ScenarioConfig, rng: np.random.Generator) -> list[BsConfig]:
    pool = np.asarray(cfg.bandwidth_pool_mhz, dtype=float) * 1e6
    bw = rng.choice(pool, size=cfg.J)
    return [BsConfig(j, float(bw[j]), cfg.tx_power_w, Rat.G4_5NSA, j) for j in range(cfg.J)]


def _synthetic_ue(cfg: ScenarioConfig, rng: np.random.Generator) -> list[UeConfig]:
    types = list(cfg.ue_type_mix)
    p = np.array([cfg.ue_type_mix[k] for k in types], dtype=float)
    picks = rng.choice(len(types), size=cfg.I, p=p / p.sum())
    return [UeConfig(i, types[picks[i]]) for i in range(cfg.I)]


def gen_static(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """SINR drawn once per pair and held for the whole horizon."""
    lo, hi = cfg.sinr_range_db
    bs = _synthetic_bs(cfg, rng)
    ue = _synthetic_ue(cfg, rng)
    s = rng.uniform(lo, hi, size=(cfg.I, cfg.J))
    sinr = np.repeat(s[None], cfg.T, axis=0)
    trace = ScenarioTrace(sinr, bs, ue, meta={"kind": "static"})
    return Scenario(trace, build_delay_model(cfg, ue, bs, rng), cfg)


def gen_volatile(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """SINR redrawn independently every ``volatile_period`` slots."""
    lo, hi = cfg.sinr_range_db
    bs = _synthetic_bs(cfg, rng)
    ue = _synthetic_ue(cfg, rng)
    n_periods = math.ceil(cfg.T / cfg.volatile_period)
    draws = rng.uniform(lo, hi, size=(n_periods, cfg.I, cfg.J))
    sinr = np.repeat(draws, cfg.volatile_period, axis=0)[: cfg.T]
    trace = ScenarioTrace(sinr, bs, ue, meta={"kind": "volatile"})
    return Scenario(trace, build_delay_model(cfg, ue, bs, rng), cfg)


@dataclass
class MobilityState:
    pos: np.ndarray  # (I, 2) meters
    speed: np.ndarray  # (I,) m/s
    heading: np.ndarray  # (I,) rad
    mean_speed: np.ndarray
    speed_sigma: np.ndarray
    randomness: np.ndarray


def gauss_markov_step(
    st: MobilityState,
    rng: np.random.Generator,
    dt: float,
    extent: float,
    heading_sigma: float,
    speed_cap: float,
) -> MobilityState:
    """One Gauss-Markov update, then move and reflect off the area walls."""
    a = st.randomness
    root = np.sqrt(1.0 - a * a)
    n = len(st.speed)
    speed = a * st.speed + (1 - a) * st.mean_speed + root * st.speed_sigma * rng.standard_normal(n)
    speed = np.clip(speed, 0.0, speed_cap)
    # heading mean is the previous heading, so the (1 - a) pull term vanishes
    heading = st.heading + root * heading_sigma * rng.standard_normal(n)
    pos = st.pos + (speed * dt)[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    for ax in range(2):
        low = pos[:, ax] < 0
        high = pos[:, ax] > extent
        pos[low, ax] = -pos[low, ax]
        pos[high, ax] = 2 * extent - pos[high, ax]
        heading = np.where(low | high, (np.pi - heading) if ax == 0 else -heading, heading)
    pos = np.clip(pos, 0.0, extent)
    return MobilityState(pos, speed, heading, st.mean_speed, st.speed_sigma, st.randomness)


def pathloss_db(d, cfg: ScenarioConfig):
    d = np.maximum(d, cfg.min_distance_m)
    return cfg.ref_loss_db + 10.0 * cfg.pathloss_exponent * np.log10(d)


def synth_sinr_db(
    ue_pos: np.ndarray,
    bs_pos: np.ndarray,
    tx_power_w: np.ndarray,
    bandwidth_hz: np.ndarray,
    freq_group: np.ndarray,
    cfg: ScenarioConfig,
    shadow_db: np.ndarray | None = None,
    clip: bool = True,
) -> np.ndarray:
    """Downlink SINR (dB) with co-channel interference and thermal noise."""
    d = np.linalg.norm(ue_pos[:, None, :] - bs_pos[None, :, :], axis=2)
    loss = pathloss_db(d, cfg)
    if shadow_db is not None:
        loss = loss - shadow_db
    rx_mw = tx_power_w[None, :] * 1e3 * 10.0 ** (-loss / 10.0)
    groups = np.unique(freq_group)
    interf = np.zeros_like(rx_mw)
    for g in groups:
        cols = freq_group == g
        interf[:, cols] = rx_mw[:, cols].sum(axis=1, keepdims=True) - rx_mw[:, cols]
    noise_mw = 10.0 ** ((cfg.noise_psd_dbm_hz + cfg.noise_figure_db) / 10.0) * bandwidth_hz
    s = 10.0 * np.log10(rx_mw / (interf + noise_mw[None, :]))
    if clip:
        s = np.clip(s, *cfg.sinr_clip_db)
    return s


def gen_mobility(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Gauss-Markov UEs over BSs scattered in a square, SINR from log-distance
    pathloss with distance-correlated shadowing (1 s slots)."""
    I, J, T = cfg.I, cfg.J, cfg.T  # noqa: E741
    ext = cfg.extent_m
    dt = cfg.slot_length_ms / 1000.0
    bs_pos = rng.uniform(0.0, ext, size=(J, 2))
    groups = rng.integers(0, cfg.n_freq_groups, size=J)
    pool = np.asarray(cfg.bandwidth_pool_mhz, dtype=float) * 1e6
    group_bw = rng.choice(pool, size=cfg.n_freq_groups)
    rats = rng.choice(np.array([Rat.G4_5NSA, Rat.G3, Rat.G2], dtype=object), size=J, p=cfg.rat_mix)
    bs = [
        BsConfig(j, float(group_bw[groups[j]]), cfg.tx_power_w, rats[j], int(groups[j]),
                 (float(bs_pos[j, 0]), float(bs_pos[j, 1])))
        for j in range(J)
    ]
    mean_speed = rng.uniform(*cfg.speed_range, size=I)
    speed_var = rng.uniform(*cfg.speed_var_range, size=I)
    types = _synthetic_ue(cfg, rng)
    ue = [
        UeConfig(i, types[i].ue_type, GaussMarkovParams(float(mean_speed[i]), float(speed_var[i]), cfg.randomness))
        for i in range(I)
    ]
    st = MobilityState(
        pos=rng.uniform(0.0, ext, size=(I, 2)),
        speed=mean_speed.copy(),
        heading=rng.uniform(-np.pi, np.pi, size=I),
        mean_speed=mean_speed,
        speed_sigma=np.sqrt(speed_var),
        randomness=np.full(I, cfg.randomness),
    )
    tx = np.array([b.tx_power_w for b in bs])
    bw = np.array([b.bandwidth_hz for b in bs])
    shadow = cfg.shadowing_db * rng.standard_normal((I, J))
    sinr = np.empty((T, I, J))
    positions = np.empty((T, I, 2))
    for t in range(T):
        if t > 0:
            prev = st.pos
            st = gauss_markov_step(st, rng, dt, ext, cfg.heading_sigma_rad, cfg.speed_cap)
            moved = np.linalg.norm(st.pos - prev, axis=1)
            rho = np.exp(-moved / cfg.shadow_corr_m)[:, None]
            shadow = rho * shadow + np.sqrt(1 - rho**2) * cfg.shadowing_db * rng.standard_normal((I, J))
        positions[t] = st.pos
        sinr[t] = synth_sinr_db(st.pos, bs_pos, tx, bw, groups, cfg, shadow)
    trace = ScenarioTrace(sinr, bs, ue, meta={"kind": "mobility"})
    return Scenario(trace, build_delay_model(cfg, ue, bs, rng), cfg, positions)


# --- external traces ------------------------------------------------------------


@dataclass
class IngestReport:
    observations: int = 0
    imputed_cells: int = 0
    floored_cells: int = 0
    duplicates: int = 0


def _read_rows(path, header: tuple[str, ...]):
    """Yield ``(lineno, row_dict)`` for a comma-delimited file with ``#`` comments."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = ((n, line) for n, line in enumerate(fh, 1) if line.strip() and not line.lstrip().startswith("#"))
        try:
            n0, first = next(lines)
        except StopIteration:
            raise TraceSchemaError(f"{path}: empty file") from None
        cols = [c.strip() for c in next(csv.reader([first]))]
        missing = [h for h in header if h not in cols]
        if missing:
            raise TraceSchemaError(f"{path}:{n0}: header missing columns {missing}")
        for n, line in lines:
            vals = next(csv.reader(io.StringIO(line)))
            if len(vals) != len(cols):
                raise TraceParseError(path, n, f"expected {len(cols)} fields, got {len(vals)}")
            yield n, dict(zip(cols, (v.strip() for v in vals)))


def _parse_int(path, n, row, key, upper=None):
    try:
        v = int(row[key])
    except ValueError:
        raise TraceParseError(path, n, f"bad {key} {row[key]!r}") from None
    if v < 0 or (upper is not None and v >= upper):
        raise TraceParseError(path, n, f"bad {key} {v}")
    return v


def read_bs_file(path) -> list[BsConfig]:
    cols = ("bs_id", "bandwidth_hz", "tx_power_w", "rat", "freq_group", "x_m", "y_m")
    out = {}
    for n, row in _read_rows(path, cols):
        j = _parse_int(path, n, row, "bs_id")
        try:
            loc = None if row["x_m"] == "" else (float(row["x_m"]), float(row["y_m"]))
            out[j] = BsConfig(j, float(row["bandwidth_hz"]), float(row["tx_power_w"]),
                              Rat(row["rat"]), int(row["freq_group"]), loc)
        except ValueError as exc:
            raise TraceParseError(path, n, str(exc)) from None
    if sorted(out) != list(range(len(out))):
        raise TraceSchemaError(f"{path}: bs_id values must be 0..J-1 without gaps")
    return [out[j] for j in range(len(out))]


def read_ue_file(path) -> list[UeConfig]:
    out = {}
    for n, row in _read_rows(path, ("ue_id", "ue_type")):
        i = _parse_int(path, n, row, "ue_id")
        try:
            out[i] = UeConfig(i, UeType(row["ue_type"]))
        except ValueError as exc:
            raise TraceParseError(path, n, str(exc)) from None
    if sorted(out) != list(range(len(out))):
        raise TraceSchemaError(f"{path}: ue_id values must be 0..I-1 without gaps")
    return [out[i] for i in range(len(out))]


def ingest_trace(sinr_path, bs_path, ue_path=None) -> tuple[ScenarioTrace, IngestReport]:
    """Load a sparse SINR observation file into a dense ``(T, I, J)`` trace.

    Missing cells hold the pair's last observation; cells before a pair's
    first observation (or never observed) get the -10 dB floor. Duplicate
    ``(slot, ue, bs)`` rows: the last one wins.
    """
    bs = read_bs_file(bs_path)
    ue = read_ue_file(ue_path) if ue_path else None
    J = len(bs)
    I_cap = len(ue) if ue is not None else None
    obs = {}
    report = IngestReport()
    T = I = 0  # noqa: E741
    for n, row in _read_rows(sinr_path, ("slot", "ue_id", "bs_id", "sinr_db")):
        t = _parse_int(sinr_path, n, row, "slot")
        i = _parse_int(sinr_path, n, row, "ue_id", I_cap)
        j = _parse_int(sinr_path, n, row, "bs_id", J)
        try:
            s = float(row["sinr_db"])
        except ValueError:
            raise TraceParseError(sinr_path, n, f"non-numeric sinr_db {row['sinr_db']!r}") from None
        if not math.isfinite(s):
            raise TraceParseError(sinr_path, n, f"non-finite sinr_db {row['sinr_db']!r}")
        if (t, i, j) in obs:
            report.duplicates += 1
            log.warning("%s:%d: duplicate observation for slot=%d ue=%d bs=%d", sinr_path, n, t, i, j)
        obs[(t, i, j)] = s
        T, I = max(T, t + 1), max(I, i + 1)  # noqa: E741
    if I_cap is not None:
        I = I_cap  # noqa: E741
    if not obs:
        raise TraceSchemaError(f"{sinr_path}: no observations")
    report.observations = len(obs)
    if ue is None:
        ue = [UeConfig(i) for i in range(I)]

    dense = np.full((T, I, J), np.nan)
    idx = np.array(list(obs.keys()))
    dense[idx[:, 0], idx[:, 1], idx[:, 2]] = np.fromiter(obs.values(), float, len(obs))
    missing = np.isnan(dense)
    report.imputed_cells = int(missing.sum())
    # forward-fill along slots; leading gaps get the floor
    seen = ~missing
    last = np.where(seen, np.arange(T)[:, None, None], 0)
    np.maximum.accumulate(last, axis=0, out=last)
    ever = np.logical_or.accumulate(seen, axis=0)
    filled = np.take_along_axis(dense, last, axis=0)
    report.floored_cells = int((~ever).sum())
    filled[~ever] = SINR_FLOOR_DB
    trace = ScenarioTrace(filled, bs, ue, meta={"kind": "external", "source": str(sinr_path)})
    return trace, report


def write_trace(trace: ScenarioTrace, out_dir) -> dict[str, Path]:
    """Export a trace (every cell) plus BS/UE metadata as CSV files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"sinr": out / "sinr.csv", "bs": out / "bs.csv", "ue": out / "ue.csv"}
    with open(paths["sinr"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "ue_id", "bs_id", "sinr_db"])
        T, I, J = trace.sinr_db.shape  # noqa: E741
        for t in range(T):
            for i in range(I):
                for j in range(J):
                    w.writerow([t, i, j, repr(float(trace.sinr_db[t, i, j]))])
    with open(paths["bs"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bs_id", "bandwidth_hz", "tx_power_w", "rat", "freq_group", "x_m", "y_m"])
        for b in trace.bs:
            x, y = b.location if b.location is not None else ("", "")
            w.writerow([b.id, repr(b.bandwidth_hz), repr(b.tx_power_w), b.rat.value, b.freq_group,
                        repr(x) if x != "" else "", repr(y) if y != "" else ""])
    with open(paths["ue"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ue_id", "ue_type"])
        for u in trace.ue:
            w.writerow([u.id, u.ue_type.value])
    return paths


def generate(cfg: ScenarioConfig) -> Scenario:
    """Build the scenario for ``cfg`` from its own seed."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind is ScenarioKind.STATIC:
        return gen_static(cfg, rng)
    if cfg.kind is ScenarioKind.VOLATILE:
        return gen_volatile(cfg, rng)
    if cfg.kind is ScenarioKind.MOBILITY:
        return gen_mobility(cfg, rng)
    if not (cfg.sinr_path and cfg.bs_path):
        raise ValueError("external scenario needs sinr_path and bs_path")
    trace, report = ingest_trace(cfg.sinr_path, cfg.bs_path, cfg.ue_path)
    trace.meta["ingest"] = report
    cfg.I, cfg.J, cfg.T = trace.I, trace.J, trace.T
    return Scenario(trace, build_delay_model(cfg, trace.ue, trace.bs, rng), cfg)

"""Scenario configuration, user topology, end-to-end runs and parameter sweeps.

A scenario run wires the whole chain together: geometry -> deterministic BS-RIS
channel -> random user drop -> per-user correlation -> statistical RIS
optimization -> Monte-Carlo hardening statistics -> max-min power control ->
per-user spectral efficiency. The conventional massive-MIMO baseline reuses the
identical estimation/statistics/power-control path with an identity "RIS" of
size M and a single training epoch.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BdrisError, ConfigError, EstimationRankError
from .estimation import (
    TrainingSchedule,
    make_pilots,
    make_training_configs,
    stack_training_matrix,
)
from .geometry import (
    SPEED_OF_LIGHT,
    BsRisChannel,
    build_bs_ris_channel,
    db_to_linear,
    make_bs_ris_geometry,
    pathloss_linear,
    upa_spatial_correlation,
)
from .power import (
    BisectionSettings,
    LinkScenario,
    bisection_maxmin,
    estimate_link_statistics,
    se_lower_bound,
    sinr_lower_bound,
)
from .ris_opt import (
    BEYOND_DIAGONAL,
    DIAGONAL,
    CostContext,
    OptimizerSettings,
    identity_ris,
    optimize,
)

ARCHITECTURES = ("bd", "d", "none")

_ARCH_TO_MANIFOLD = {"bd": BEYOND_DIAGONAL, "d": DIAGONAL}


@dataclass
class ScenarioConfig:
    """Flat scenario description; defaults follow the reference parameter table."""

    f_c_ghz: float = 2.5
    bandwidth_mhz: float = 20.0
    m_h: int = 6
    m_v: int = 4
    n_h: int = 8
    n_v: int = 4
    k: int = 4
    tau: int = 200
    tau_p: int | None = None  # None -> K
    uplink_power_mw: float = 400.0
    downlink_power_mw: float = 1200.0
    uplink_noise_dbm: float = -94.0
    downlink_noise_dbm: float = -94.0
    reflection_efficiency: float = 1.0
    gain_a_db: float = 3.0
    gain_r_db: float = 3.0
    ris_height_m: float = 10.0
    user_height_m: float = 1.5
    sector_half_angle_deg: float = 60.0
    min_distance_m: float = 10.0
    max_distance_m: float = 400.0
    azimuth_spread_deg: float = 10.0
    elevation_spread_deg: float = 5.0
    ris_gap_wavelengths: float = 5.0
    architecture: str = "bd"
    mc_count: int = 500
    seed: int = 0
    bisection_tolerance: float = 1e-4
    opt_max_iterations: int = 1000
    opt_gradient_tolerance: float | None = None
    opt_armijo_initial_step: float = 1.0
    opt_armijo_contraction: float = 0.5
    opt_armijo_decrease: float = 1e-4
    opt_safeguard: bool = True

    def __post_init__(self):
        for key in ("uplink_power_mw", "downlink_power_mw"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        for key in ("m_h", "m_v", "n_h", "n_v", "k", "tau", "mc_count"):
            value = getattr(self, key)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{key} must be a positive integer, got {value!r}")
        if self.m_h < self.m_v or self.n_h < self.n_v:
            raise ConfigError("UPA factorizations need count_h >= count_v")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}"
            )
        if self.tau_p is not None and self.tau_p < 1:
            raise ConfigError(f"tau_p must be >= 1, got {self.tau_p}")
        if self.f_c_ghz <= 0:
            raise ConfigError("f_c_ghz must be positive")
        if not self.min_distance_m > 0 or self.max_distance_m < self.min_distance_m:
            raise ConfigError("need 0 < min_distance_m <= max_distance_m")

    @property
    def m(self) -> int:
        return self.m_h * self.m_v

    @property
    def n(self) -> int:
        return self.n_h * self.n_v

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / (self.f_c_ghz * 1e9)

    @property
    def pilot_length(self) -> int:
        return self.k if self.tau_p is None else self.tau_p

    @property
    def uplink_noise_mw(self) -> float:
        return db_to_linear(self.uplink_noise_dbm)

    @property
    def downlink_noise_mw(self) -> float:
        return db_to_linear(self.downlink_noise_dbm)

    def optimizer_settings(self) -> OptimizerSettings:
        return OptimizerSettings(
            max_iterations=self.opt_max_iterations,
            gradient_tolerance=self.opt_gradient_tolerance,
            armijo_initial_step=self.opt_armijo_initial_step,
            armijo_contraction=self.opt_armijo_contraction,
            armijo_decrease=self.opt_armijo_decrease,
            safeguard_reunitarize=self.opt_safeguard,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(ScenarioConfig)}

# paper-style aliases accepted in config files and CLI overrides
_KEY_ALIASES = {
    "K": "k",
    "M_H": "m_h",
    "M_V": "m_v",
    "N_H": "n_h",
    "N_V": "n_v",
    "arch": "architecture",
    "mc": "mc_count",
}


def _canonical_key(key: str) -> str:
    name = _KEY_ALIASES.get(key, key)
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    return name


def _coerce(key: str, value):
    """Validate the JSON value against the dataclass field type."""
    if value is None:
        if key in ("tau_p", "opt_gradient_tolerance"):
            return None
        raise ConfigError(f"key {key!r} does not accept null")
    default = _FIELD_TYPES[key].default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"key {key!r} expects a boolean, got {value!r}")
        return value
    if isinstance(default, int) or key in ("tau_p",):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}")
        return value
    if isinstance(default, float) or key in ("opt_gradient_tolerance",):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"key {key!r} expects a string, got {value!r}")
        return value
    return value


def load_config(path: str | Path, overrides: dict | None = None) -> ScenarioConfig:
    """Build a config from a flat JSON file plus CLI overrides (overrides win)."""
    text = Path(path).read_text()
    if not text.strip():
        raw = {}
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a flat JSON object")
    merged: dict = {}
    for key, value in raw.items():
        merged[_canonical_key(key)] = value
    for key, value in (overrides or {}).items():
        merged[_canonical_key(key)] = value
    kwargs = {key: _coerce(key, value) for key, value in merged.items()}
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class UserDrop:
    """Random user topology in the sector served by the RIS."""

    azimuths: np.ndarray
    ground_distances: np.ndarray
    positions: np.ndarray  # (K, 3)
    height_gap: float

    @property
    def elevations(self) -> np.ndarray:
        return np.arctan2(-self.height_gap, self.ground_distances)

    @property
    def distances_3d(self) -> np.ndarray:
        return np.hypot(self.ground_distances, self.height_gap)


def drop_users(config: ScenarioConfig, rng: np.random.Generator) -> UserDrop:
    """Uniform azimuth in the sector, uniform ground distance in the annulus."""
    half = math.radians(config.sector_half_angle_deg)
    azimuths = rng.uniform(-half, half, size=config.k)
    distances = rng.uniform(config.min_distance_m, config.max_distance_m, size=config.k)
    positions = np.stack(
        [
            distances * np.cos(azimuths),
            distances * np.sin(azimuths),
            np.full(config.k, config.user_height_m),
        ],
        axis=1,
    )
    return UserDrop(azimuths, distances, positions, config.ris_height_m - config.user_height_m)


@dataclass(frozen=True)
class ResultRecord:
    """One scenario outcome, ready for CSV serialization."""

    seed: int
    arch: str
    m: int
    n: int
    k: int
    q: int
    tau_up: int
    se_per_user: tuple[float, ...]
    opt_cost: float | None
    opt_iters: int | None
    wall_ms: float

    def __post_init__(self):
        if any(se < 0 for se in self.se_per_user):
            raise BdrisError("negative spectral efficiency in record")

    @property
    def min_se(self) -> float:
        return min(self.se_per_user)

    @property
    def avg_se(self) -> float:
        return sum(self.se_per_user) / len(self.se_per_user)


def _full_rank_schedule(
    channel: BsRisChannel, n: int, m: int, rng: np.random.Generator, max_attempts: int = 20
):
    """Draw training configs, redrawing on the (measure-zero) rank-deficient event."""
    last_error = None
    for _ in range(max_attempts):
        schedule = make_training_configs(n, m, rng)
        try:
            return schedule, stack_training_matrix(channel, schedule)
        except EstimationRankError as exc:
            last_error = exc
    raise last_error


def _user_models(config: ScenarioConfig, drop: UserDrop, upa, wavelength: float):
    models = []
    az_spread = math.radians(config.azimuth_spread_deg)
    el_spread = math.radians(config.elevation_spread_deg)
    for az, el, d3 in zip(drop.azimuths, drop.elevations, drop.distances_3d):
        beta = pathloss_linear(float(d3))
        models.append(
            upa_spatial_correlation(upa, wavelength, float(az), float(el), az_spread, el_spread, beta)
        )
    return models


def run_scenario(config: ScenarioConfig) -> ResultRecord:
    """Execute the full chain for one config; deterministic given (config, seed)."""
    start = time.perf_counter()
    if config.architecture == "none":
        return run_baseline_mamimo(config)

    root = np.random.SeedSequence(config.seed)
    drop_ss, train_ss, mc_ss = root.spawn(3)
    geometry = make_bs_ris_geometry(
        config.wavelength,
        config.m_h,
        config.m_v,
        config.n_h,
        config.n_v,
        config.ris_height_m,
        config.user_height_m,
        config.ris_gap_wavelengths,
    )
    channel = build_bs_ris_channel(
        geometry, config.reflection_efficiency, config.gain_a_db, config.gain_r_db
    )
    drop = drop_users(config, np.random.default_rng(drop_ss))
    models = _user_models(config, drop, geometry.ris, config.wavelength)

    ctx = CostContext(channel.gram, [m.correlation for m in models])
    theta, trace = optimize(
        ctx, _ARCH_TO_MANIFOLD[config.architecture], config.optimizer_settings()
    )

    tau_p = config.pilot_length
    q = -(-config.n // config.m)
    tau_up = q * tau_p
    if tau_up >= config.tau:
        raise ConfigError(
            f"training would use tau_up={tau_up} of tau={config.tau} channel uses"
        )
    pilots = make_pilots(config.k, tau_p)
    _, stacked = _full_rank_schedule(
        channel, config.n, config.m, np.random.default_rng(train_ss)
    )
    scenario = LinkScenario(
        channel,
        tuple(models),
        pilots,
        stacked,
        config.uplink_power_mw,
        config.uplink_noise_mw,
        config.downlink_noise_mw,
    )
    stats = estimate_link_statistics(
        scenario, theta, config.mc_count, np.random.default_rng(mc_ss)
    )
    solution = bisection_maxmin(
        stats, config.downlink_power_mw, BisectionSettings(tolerance=config.bisection_tolerance)
    )
    ses = tuple(
        se_lower_bound(sinr_lower_bound(solution.powers, stats, user), tau_up, config.tau)
        for user in range(config.k)
    )
    wall_ms = (time.perf_counter() - start) * 1000
    return ResultRecord(
        seed=config.seed,
        arch=config.architecture,
        m=config.m,
        n=config.n,
        k=config.k,
        q=q,
        tau_up=tau_up,
        se_per_user=ses,
        opt_cost=trace.final_cost,
        opt_iters=trace.iterations,
        wall_ms=wall_ms,
    )


def run_baseline_mamimo(config: ScenarioConfig) -> ResultRecord:
    """Conventional massive MIMO over the same machinery: identity channel of
    size M, single training epoch, correlated BS-user links on the active array."""
    start = time.perf_counter()
    root = np.random.SeedSequence(config.seed)
    drop_ss, _, mc_ss = root.spawn(3)
    geometry = make_bs_ris_geometry(
        config.wavelength,
        config.m_h,
        config.m_v,
        config.n_h,
        config.n_v,
        config.ris_height_m,
        config.user_height_m,
        config.ris_gap_wavelengths,
    )
    drop = drop_users(config, np.random.default_rng(drop_ss))
    models = _user_models(config, drop, geometry.array, config.wavelength)

    m = config.m
    channel = BsRisChannel(np.eye(m, dtype=complex))
    theta = identity_ris(m)
    tau_p = config.pilot_length
    tau_up = tau_p  # Q = 1: no RIS epochs
    if tau_up >= config.tau:
        raise ConfigError(
            f"training would use tau_up={tau_up} of tau={config.tau} channel uses"
        )
    pilots = make_pilots(config.k, tau_p)
    schedule = TrainingSchedule(np.ones((1, m), dtype=complex))
    stacked = stack_training_matrix(channel, schedule)
    scenario = LinkScenario(
        channel,
        tuple(models),
        pilots,
        stacked,
        config.uplink_power_mw,
        config.uplink_noise_mw,
        config.downlink_noise_mw,
    )
    stats = estimate_link_statistics(
        scenario, theta, config.mc_count, np.random.default_rng(mc_ss)
    )
    solution = bisection_maxmin(
        stats, config.downlink_power_mw, BisectionSettings(tolerance=config.bisection_tolerance)
    )
    ses = tuple(
        se_lower_bound(sinr_lower_bound(solution.powers, stats, user), tau_up, config.tau)
        for user in range(config.k)
    )
    wall_ms = (time.perf_counter() - start) * 1000
    return ResultRecord(
        seed=config.seed,
        arch="none",
        m=m,
        n=m,
        k=config.k,
        q=1,
        tau_up=tau_up,
        se_per_user=ses,
        opt_cost=None,
        opt_iters=None,
        wall_ms=wall_ms,
    )


def upa_factorization(total: int, fixed_h: int | None = None) -> tuple[int, int]:
    """Most-square (h, v) split with h >= v; a fixed horizontal count must divide."""
    if total < 1:
        raise ConfigError(f"array size must be positive, got {total}")
    if fixed_h is not None:
        if total % fixed_h != 0:
            raise ConfigError(f"{total} elements do not factor over {fixed_h} columns")
        v = total // fixed_h
        if v > fixed_h:
            raise ConfigError(
                f"N={total} with N_H={fixed_h} would need N_V={v} > N_H"
            )
        return fixed_h, v
    for v in range(int(math.isqrt(total)), 0, -1):
        if total % v == 0:
            return total // v, v
    raise ConfigError(f"cannot factor array size {total}")  # pragma: no cover


def _apply_axis(config: ScenarioConfig, axis: str, value: int, matched: bool) -> ScenarioConfig:
    if axis == "N":
        n_h, n_v = upa_factorization(value, config.m_h if matched else None)
        return dataclasses.replace(config, n_h=n_h, n_v=n_v)
    if axis == "M":
        m_h, m_v = upa_factorization(value)
        n_h, n_v = (
            upa_factorization(config.n, m_h) if matched else (config.n_h, config.n_v)
        )
        return dataclasses.replace(config, m_h=m_h, m_v=m_v, n_h=n_h, n_v=n_v)
    if axis == "K":
        return dataclasses.replace(config, k=value)
    raise ConfigError(f"sweep axis must be N, M or K, got {axis!r}")


def run_sweep(
    config: ScenarioConfig,
    axis: str,
    values: list[int],
    architectures: list[str],
    out_path: str | Path | None = None,
    topologies: int = 20,
    matched_apertures: bool = False,
) -> list[ResultRecord]:
    """One record per (axis value, architecture, topology seed); optional CSV dump.

    With matched_apertures the fairness constraint N_H == M_H >= K is validated
    for every point before anything runs.
    """
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    for arch in architectures:
        if arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {arch!r} in sweep")
    point_configs = []
    for value in values:
        base = _apply_axis(config, axis, value, matched_apertures)
        if matched_apertures:
            if base.n_h != base.m_h or base.m_h < base.k:
                raise ConfigError(
                    f"matched-aperture sweep requires N_H == M_H >= K, got "
                    f"N_H={base.n_h}, M_H={base.m_h}, K={base.k}"
                )
        point_configs.append((value, base))

    records = []
    for _, base in point_configs:
        for arch in architectures:
            for t in range(topologies):
                cfg = dataclasses.replace(base, architecture=arch, seed=config.seed + t)
                records.append(run_scenario(cfg))
    if out_path is not None:
        append_records_csv(out_path, records)
    return records


CSV_FIXED_COLUMNS = ["seed", "arch", "M", "N", "K", "Q", "tau_up", "min_se", "avg_se"]
CSV_TRAILING_COLUMNS = ["opt_cost", "opt_iters", "wall_ms"]


def csv_header(k_max: int) -> list[str]:
    users = [f"se_user_{i + 1}" for i in range(k_max)]
    return CSV_FIXED_COLUMNS + users + CSV_TRAILING_COLUMNS


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def record_to_row(record: ResultRecord, k_max: int) -> list[str]:
    ses = list(record.se_per_user) + [None] * (k_max - record.k)
    cells = [
        record.seed,
        record.arch,
        record.m,
        record.n,
        record.k,
        record.q,
        record.tau_up,
        record.min_se,
        record.avg_se,
        *ses,
        record.opt_cost,
        record.opt_iters,
        record.wall_ms,
    ]
    return [_fmt(c) for c in cells]


def append_records_csv(path: str | Path, records: list[ResultRecord]) -> None:
    """Append rows (writing a header first on a fresh file) in one atomic write."""
    if not records:
        return
    path = Path(path)
    k_max = max(r.k for r in records)
    lines = []
    fresh = not path.exists() or path.stat().st_size == 0
    if fresh:
        lines.append(",".join(csv_header(k_max)))
    else:
        existing = path.read_text().splitlines()[0].split(",")
        if len(existing) != len(csv_header(k_max)):
            raise ConfigError(
                f"{path} was written for a different user count; use a fresh file"
            )
    for record in records:
        lines.append(",".join(record_to_row(record, k_max)))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SweepPreset:
    name: str
    config: ScenarioConfig
    axis: str
    values: tuple[int, ...]
    architectures: tuple[str, ...]
    matched_apertures: bool


def preset(name: str, seed: int = 0) -> SweepPreset:
    """Named desk-scale experiment presets.

    fig2:  BD vs D architecture over N at M=24, K=4.
    fig3a: BD vs conventional baseline over N at M=16, matched apertures.
    fig3b: BD vs conventional baseline over K at M=32, N=128, matched apertures.
    """
    if name == "fig2":
        cfg = ScenarioConfig(m_h=6, m_v=4, k=4, mc_count=300, seed=seed)
        return SweepPreset(name, cfg, "N", (16, 32), ("bd", "d"), False)
    if name == "fig3a":
        cfg = ScenarioConfig(m_h=8, m_v=2, k=4, mc_count=300, seed=seed)
        return SweepPreset(name, cfg, "N", (32, 64), ("bd", "none"), True)
    if name == "fig3b":
        cfg = ScenarioConfig(m_h=16, m_v=2, n_h=16, n_v=8, mc_count=300, seed=seed)
        return SweepPreset(name, cfg, "K", (4, 8, 12), ("bd", "none"), True)
    raise ConfigError(f"unknown sweep preset {name!r}")


def run_preset(
    name: str, out_path: str | Path | None, topologies: int = 20, seed: int = 0
) -> list[ResultRecord]:
    p = preset(name, seed)
    return run_sweep(
        p.config,
        p.axis,
        list(p.values),
        list(p.architectures),
        out_path,
        topologies,
        p.matched_apertures,
    )

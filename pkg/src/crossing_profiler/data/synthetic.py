"""Synthetic crossing scenes.

A scene is a flat approach on both sides of a raised-cosine crest, which is
C1 everywhere (the cosine's derivative vanishes at the crest edges and apex).
The drive-over channels are derived from that geometry plus a constant
collection speed: pitch follows the local grade, vertical acceleration adds
the curvature term v^2 * z'', longitudinal acceleration carries the gravity
component along the grade. GPS altitude gets a random-walk drift plus white
noise on top of a base altitude; the walking profiler covers a slightly
trimmed window of the same scene at the same spacing, so its peak lands at a
different index than the GPS peak and alignment has real work to do.

Everything is a pure function of the config's rng seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, ContractError

GRAVITY = 9.81
MIN_RECORD_LENGTH = 32


@dataclass
class SceneConfig:
    """Geometry, speed, and per-channel noise levels for one synthetic scene."""

    hump_height_m: float = 0.3
    approach_length_m: float = 11.0
    crest_half_width_m: float = 1.5
    sampling_interval_m: float = 0.01
    collection_speed_kmh: Optional[float] = None  # None: drawn uniformly in [10.5, 31.5]
    base_altitude_m: float = 250.0
    profiler_noise_sd_m: float = 0.002
    gps_noise_sd_m: float = 0.004
    gps_drift_step_sd_m: float = 0.0004
    accel_noise_sd: float = 0.05
    roll_noise_sd: float = 0.01
    pitch_noise_sd: float = 0.005
    speed_noise_sd_ms: float = 0.1
    profiler_margin_m: float = 0.5
    rng_seed: int = 0

    def validate(self) -> None:
        problems = []
        if self.hump_height_m < 0:
            problems.append(f"hump_height_m must be >= 0, got {self.hump_height_m}")
        if self.approach_length_m <= 0:
            problems.append(f"approach_length_m must be > 0, got {self.approach_length_m}")
        if self.crest_half_width_m <= 0:
            problems.append(f"crest_half_width_m must be > 0, got {self.crest_half_width_m}")
        if self.sampling_interval_m <= 0:
            problems.append(f"sampling_interval_m must be > 0, got {self.sampling_interval_m}")
        if self.collection_speed_kmh is not None and not 10.0 <= self.collection_speed_kmh <= 32.0:
            problems.append(f"collection_speed_kmh must be in [10, 32], got {self.collection_speed_kmh}")
        for name in ("profiler_noise_sd_m", "gps_noise_sd_m", "gps_drift_step_sd_m",
                     "accel_noise_sd", "roll_noise_sd", "pitch_noise_sd",
                     "speed_noise_sd_ms", "profiler_margin_m"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0, got {getattr(self, name)}")
        if problems:
            raise ConfigError("invalid scene config: " + "; ".join(problems))

    @property
    def total_length_m(self) -> float:
        return 2.0 * (self.approach_length_m + self.crest_half_width_m)


@dataclass
class RawCrossingRecord:
    """One field recording: drive-over table (N x 7) plus profiler trace (M,).

    The two series are sampled on the same spacing but cover different
    windows, so N != M in general. collection_speed_kmh is derived from the
    speed channel, which makes it survive an export/ingest round trip
    bit-exactly.
    """

    crossing_id: str
    imu_gps: np.ndarray
    profiler: np.ndarray
    imu_positions_m: np.ndarray
    profiler_positions_m: np.ndarray

    def __post_init__(self):
        self.imu_gps = np.asarray(self.imu_gps, dtype=np.float64)
        self.profiler = np.asarray(self.profiler, dtype=np.float64)
        self.imu_positions_m = np.asarray(self.imu_positions_m, dtype=np.float64)
        self.profiler_positions_m = np.asarray(self.profiler_positions_m, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.imu_gps.ndim != 2 or self.imu_gps.shape[1] != 7:
            raise ContractError(f"imu_gps must be N x 7, got shape {self.imu_gps.shape}")
        n, m = self.imu_gps.shape[0], self.profiler.shape[0]
        if n < MIN_RECORD_LENGTH or m < MIN_RECORD_LENGTH:
            raise ContractError(
                f"record {self.crossing_id!r} too short: {n} drive rows, {m} profiler rows "
                f"(minimum {MIN_RECORD_LENGTH})"
            )
        if self.imu_positions_m.shape != (n,) or self.profiler_positions_m.shape != (m,):
            raise ContractError(f"position vectors do not match table lengths in {self.crossing_id!r}")
        if np.any(self.imu_gps[:, 5] <= 0):
            raise ContractError(f"speed channel must stay strictly positive in {self.crossing_id!r}")

    @property
    def collection_speed_kmh(self) -> float:
        return float(self.imu_gps[:, 5].mean() * 3.6)

    @property
    def gps_altitude(self) -> np.ndarray:
        return self.imu_gps[:, 6]


def _crest_profile(s: np.ndarray, cfg: SceneConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elevation, grade, and curvature of the raised-cosine crest at positions s."""
    center = cfg.total_length_m / 2.0
    w = cfg.crest_half_width_m
    u = (s - center) / w
    inside = np.abs(u) <= 1.0
    elevation = np.where(inside, 0.5 * cfg.hump_height_m * (1.0 + np.cos(np.pi * u)), 0.0)
    grade = np.where(inside, -0.5 * cfg.hump_height_m * np.pi / w * np.sin(np.pi * u), 0.0)
    curvature = np.where(inside, -0.5 * cfg.hump_height_m * (np.pi / w) ** 2 * np.cos(np.pi * u), 0.0)
    return elevation, grade, curvature


def synthesize_crossing(cfg: SceneConfig, crossing_id: str = "synthetic") -> RawCrossingRecord:
    """Generate one raw record, a pure function of cfg (including rng_seed)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    ds = cfg.sampling_interval_m
    n = int(round(cfg.total_length_m / ds)) + 1
    if n < MIN_RECORD_LENGTH:
        raise ConfigError(f"scene yields only {n} samples; need at least {MIN_RECORD_LENGTH}")
    s = np.arange(n, dtype=np.float64) * ds
    elevation, grade, curvature = _crest_profile(s, cfg)

    # fixed draw order: speed target, profiler trims, then channels in column order
    if cfg.collection_speed_kmh is None:
        speed_kmh = float(rng.uniform(10.5, 31.5))
    else:
        speed_kmh = float(cfg.collection_speed_kmh)
    v = speed_kmh / 3.6

    trim_a = float(rng.uniform(0.0, cfg.profiler_margin_m))
    trim_b = float(rng.uniform(0.0, cfg.profiler_margin_m))
    ia = int(np.ceil(trim_a / ds))
    ib = n - 1 - int(np.ceil(trim_b / ds))
    if ib - ia + 1 < MIN_RECORD_LENGTH:
        raise ConfigError("profiler margins leave too few samples")

    accel_x = -GRAVITY * grade + rng.normal(0.0, cfg.accel_noise_sd, n)
    accel_y = rng.normal(0.0, cfg.accel_noise_sd, n)
    accel_z = GRAVITY + v * v * curvature + rng.normal(0.0, cfg.accel_noise_sd, n)
    roll = rng.normal(0.0, cfg.roll_noise_sd, n)
    pitch = np.arctan(grade) + rng.normal(0.0, cfg.pitch_noise_sd, n)
    speed = np.maximum(0.1, v + rng.normal(0.0, cfg.speed_noise_sd_ms, n))
    drift = np.cumsum(rng.normal(0.0, cfg.gps_drift_step_sd_m, n))
    gps_altitude = cfg.base_altitude_m + elevation + drift + rng.normal(0.0, cfg.gps_noise_sd_m, n)

    profiler = elevation[ia:ib + 1] + rng.normal(0.0, cfg.profiler_noise_sd_m, ib - ia + 1)

    imu = np.column_stack([accel_x, accel_y, accel_z, roll, pitch, speed, gps_altitude])
    return RawCrossingRecord(
        crossing_id=crossing_id,
        imu_gps=imu,
        profiler=profiler,
        imu_positions_m=s,
        profiler_positions_m=s[ia:ib + 1].copy(),
    )

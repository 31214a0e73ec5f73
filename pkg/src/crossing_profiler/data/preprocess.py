"""Turning raw crossing records into aligned training sequences.

A raw record carries two measurement streams of different lengths: the
vehicle-mounted sensor block (N samples of 7 channels) and the walking
profiler survey (M samples of ground truth elevation).  This module
normalizes the GPS altitude channel, lines the two streams up on their
shared elevation peak, trims both to the largest window that fits, and
packs the result into a single fixed-width array ready for model input.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import AlignmentError, ContractError, ShapeError

# Columns of AlignedSequence.data, in order.
NUM_SEQUENCE_COLUMNS = 8
GPS_COLUMN = 6
TARGET_COLUMN = 7

# Smallest admissible symmetric half-width around the peak.  Gives a
# window of at least 2 * 16 + 1 = 33 samples, which is the shortest
# sequence the downsampling augmentation can split further.
MIN_HALF_WIDTH = 16


@dataclass
class AlignedSequence:
    """A peak-aligned sequence of sensor features plus elevation target.

    ``data`` has one row per sample and 8 columns: the six inertial and
    speed channels, the normalized GPS altitude, and the reference
    elevation profile.  ``peak_index`` marks the row both elevation
    series peak at.
    """

    source_id: str
    data: np.ndarray
    positions_m: np.ndarray
    peak_index: int
    name: Optional[str] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.positions_m = np.asarray(self.positions_m, dtype=np.float64)
        if self.name is None:
            self.name = self.source_id
        self.validate()

    def validate(self):
        if self.data.ndim != 2 or self.data.shape[1] != NUM_SEQUENCE_COLUMNS:
            raise ShapeError(
                "sequence data must be N x %d, got %r"
                % (NUM_SEQUENCE_COLUMNS, self.data.shape)
            )
        n = self.data.shape[0]
        if n < 1:
            raise ShapeError("sequence must contain at least one row")
        if self.positions_m.shape != (n,):
            raise ShapeError(
                "positions length %r does not match %d data rows"
                % (self.positions_m.shape, n)
            )
        if not (0 <= self.peak_index < n):
            raise ShapeError(
                "peak index %d out of range for %d rows" % (self.peak_index, n)
            )
        if not np.all(np.isfinite(self.data)):
            raise ContractError("sequence data contains non-finite values")

    def __len__(self):
        return self.data.shape[0]

    @property
    def features(self) -> np.ndarray:
        """The 7 model input channels (everything but the target)."""
        return self.data[:, :TARGET_COLUMN]

    @property
    def target(self) -> np.ndarray:
        """The reference elevation profile column."""
        return self.data[:, TARGET_COLUMN]

    def copy(self) -> "AlignedSequence":
        return AlignedSequence(
            source_id=self.source_id,
            data=self.data.copy(),
            positions_m=self.positions_m.copy(),
            peak_index=self.peak_index,
            name=self.name,
        )


def normalize_gps_altitude(altitude: np.ndarray) -> np.ndarray:
    """Shift an absolute GPS altitude series so it starts at zero.

    Removes the arbitrary datum so sequences from different sites are
    comparable.  Applying it twice is a no-op.
    """
    altitude = np.asarray(altitude, dtype=np.float64)
    if altitude.ndim != 1 or altitude.shape[0] == 0:
        raise ShapeError("altitude must be a non-empty 1-D array")
    return altitude - altitude[0]


@dataclass(frozen=True)
class PeakAlignment:
    """Peak rows of the two elevation series and the trimmed half-width."""

    gps_peak: int
    profile_peak: int
    half_width: int


def align_by_peak(gps_altitude: np.ndarray, profile: np.ndarray) -> PeakAlignment:
    """Locate both elevation maxima and the largest symmetric window.

    The crossing hump is the highest point in both the GPS altitude
    trace and the surveyed profile, so the two series are registered by
    their (first-occurrence) argmax rows.  The usable window is the
    largest half-width that stays in bounds on both sides of both
    series; anything narrower than MIN_HALF_WIDTH means the peak sits
    too close to an edge to align reliably.
    """
    gps_altitude = np.asarray(gps_altitude, dtype=np.float64)
    profile = np.asarray(profile, dtype=np.float64)
    if gps_altitude.ndim != 1 or profile.ndim != 1:
        raise ShapeError("alignment inputs must be 1-D arrays")
    if gps_altitude.shape[0] == 0 or profile.shape[0] == 0:
        raise ShapeError("alignment inputs must be non-empty")
    g = int(np.argmax(gps_altitude))
    p = int(np.argmax(profile))
    half_width = min(
        g,
        gps_altitude.shape[0] - 1 - g,
        p,
        profile.shape[0] - 1 - p,
    )
    if half_width < MIN_HALF_WIDTH:
        raise AlignmentError(
            "alignment window half-width %d is below the minimum %d; "
            "an elevation peak sits too close to a series edge"
            % (half_width, MIN_HALF_WIDTH)
        )
    return PeakAlignment(gps_peak=g, profile_peak=p, half_width=half_width)


def merge_channels(
    sensors: np.ndarray, gps_altitude: np.ndarray, profile: np.ndarray
) -> np.ndarray:
    """Stack six sensor channels, GPS altitude, and the target profile.

    All three inputs must cover the same rows.  Returns an N x 8 array.
    """
    sensors = np.asarray(sensors, dtype=np.float64)
    gps_altitude = np.asarray(gps_altitude, dtype=np.float64)
    profile = np.asarray(profile, dtype=np.float64)
    if sensors.ndim != 2 or sensors.shape[1] != GPS_COLUMN:
        raise ShapeError(
            "sensor block must be N x %d, got %r" % (GPS_COLUMN, sensors.shape)
        )
    n = sensors.shape[0]
    if gps_altitude.shape != (n,):
        raise ShapeError(
            "gps altitude length %r does not match %d sensor rows"
            % (gps_altitude.shape, n)
        )
    if profile.shape != (n,):
        raise ShapeError(
            "profile length %r does not match %d sensor rows" % (profile.shape, n)
        )
    return np.column_stack([sensors, gps_altitude, profile])


def record_to_sequence(record) -> AlignedSequence:
    """Convert a raw crossing record into one aligned sequence.

    Normalizes the GPS altitude, registers the sensor stream against
    the profiler survey on their elevation peaks, trims both to the
    shared symmetric window, and merges everything into the 8-column
    layout.  The returned peak_index equals the window half-width by
    construction.
    """
    gps = normalize_gps_altitude(record.gps_altitude)
    alignment = align_by_peak(gps, record.profiler)
    w = alignment.half_width
    g0 = alignment.gps_peak - w
    g1 = alignment.gps_peak + w + 1
    p0 = alignment.profile_peak - w
    p1 = alignment.profile_peak + w + 1
    data = merge_channels(
        record.imu_gps[g0:g1, :GPS_COLUMN],
        gps[g0:g1],
        record.profiler[p0:p1],
    )
    return AlignedSequence(
        source_id=record.crossing_id,
        data=data,
        positions_m=record.imu_positions_m[g0:g1].copy(),
        peak_index=w,
    )


def resample_to_length(seq: AlignedSequence, length: int) -> AlignedSequence:
    """Linearly resample a sequence to a fixed number of rows.

    Interpolates every column (and the position axis) over an evenly
    spaced index grid.  Resampling to the current length returns an
    identical copy.  The peak index is recomputed from the resampled
    target column.
    """
    if length < 2:
        raise ShapeError("resample length must be at least 2, got %d" % length)
    n = len(seq)
    if n < 2:
        raise ShapeError("cannot resample a sequence with fewer than 2 rows")
    if length == n:
        return seq.copy()
    old_grid = np.arange(n, dtype=np.float64)
    new_grid = np.linspace(0.0, n - 1, length)
    data = np.empty((length, NUM_SEQUENCE_COLUMNS), dtype=np.float64)
    for col in range(NUM_SEQUENCE_COLUMNS):
        data[:, col] = np.interp(new_grid, old_grid, seq.data[:, col])
    positions = np.interp(new_grid, old_grid, seq.positions_m)
    peak = int(np.argmax(data[:, TARGET_COLUMN]))
    return AlignedSequence(
        source_id=seq.source_id,
        data=data,
        positions_m=positions,
        peak_index=peak,
        name=seq.name,
    )

"""CSV formats for raw records and aligned sequences.

Values are written with 17 significant digits so float64 round-trips bit
exactly. Headers are matched by name, not position; unknown or missing
columns and ragged or non-numeric rows are parse errors that name the line
(1-based, header is line 1).

A raw record is a file pair: <id>.imu.csv carries the drive-over channels
plus raw GPS altitude, <id>.profiler.csv carries the walking profiler trace.
The two have different lengths, which is why they cannot share a file.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..errors import CsvParseError
from .preprocess import AlignedSequence
from .synthetic import RawCrossingRecord

IMU_COLUMNS = ("accel_x", "accel_y", "accel_z", "roll", "pitch", "speed", "gps_altitude")
SEQUENCE_FEATURE_COLUMNS = ("accel_x", "accel_y", "accel_z", "roll", "pitch", "speed", "gps_profile")
SEQUENCE_HEADER = ("position_m",) + SEQUENCE_FEATURE_COLUMNS + ("wp_profile",)
IMU_HEADER = ("position_m",) + IMU_COLUMNS
PROFILER_HEADER = ("position_m", "elevation_m")

IMU_SUFFIX = ".imu.csv"
PROFILER_SUFFIX = ".profiler.csv"


def _format(x: float) -> str:
    return f"{x:.17g}"


def _write_table(path: Path, header: tuple[str, ...], columns: list[np.ndarray]) -> None:
    lengths = {len(c) for c in columns}
    if len(lengths) != 1:
        raise CsvParseError(f"column lengths differ: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(columns[0])):
            writer.writerow([_format(float(c[i])) for c in columns])


def _read_table(path: Path, known_columns: tuple[str, ...],
                required_columns: tuple[str, ...]) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file", line_number=1) from None
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in known_columns]
        if unknown:
            raise CsvParseError(f"{path}: unexpected column {unknown[0]!r}", line_number=1)
        if len(set(header)) != len(header):
            raise CsvParseError(f"{path}: duplicated column in header", line_number=1)
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise CsvParseError(f"{path}: missing column {missing[0]!r}", line_number=1)
        data: list[list[float]] = []
        for line_no, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                raise CsvParseError(
                    f"{path}: row has {len(cells)} cells, header has {len(header)}",
                    line_number=line_no,
                )
            parsed = []
            for name, cell in zip(header, cells):
                try:
                    value = float(cell)
                except ValueError:
                    raise CsvParseError(
                        f"{path}: non-numeric cell {cell!r} in column {name!r}",
                        line_number=line_no,
                    ) from None
                if not math.isfinite(value):
                    raise CsvParseError(
                        f"{path}: non-finite cell {cell!r} in column {name!r}",
                        line_number=line_no,
                    )
                parsed.append(value)
            data.append(parsed)
    if not data:
        raise CsvParseError(f"{path}: no data rows", line_number=1)
    table = np.asarray(data, dtype=np.float64)
    return {name: table[:, j].copy() for j, name in enumerate(header)}


# -- aligned sequences --------------------------------------------------------


def export_csv(seq: AlignedSequence, path) -> None:
    """Write one aligned sequence in the 9-column format."""
    columns = [seq.positions_m] + [seq.data[:, j] for j in range(8)]
    _write_table(Path(path), SEQUENCE_HEADER, columns)


def ingest_sequence_csv(path, *, require_target: bool = True) -> tuple[AlignedSequence, bool]:
    """Read a sequence CSV; returns the sequence and whether wp_profile was present.

    Without a target column the wp column is filled with zeros so downstream
    shapes stay uniform; callers must not report metrics in that case.
    """
    path = Path(path)
    required = SEQUENCE_HEADER if require_target else SEQUENCE_HEADER[:-1]
    cols = _read_table(path, SEQUENCE_HEADER, required)
    has_target = "wp_profile" in cols
    n = len(cols["position_m"])
    wp = cols["wp_profile"] if has_target else np.zeros(n)
    data = np.column_stack([cols[c] for c in SEQUENCE_FEATURE_COLUMNS] + [wp])
    stem = path.name[: -len(".csv")] if path.name.endswith(".csv") else path.stem
    seq = AlignedSequence(
        source_id=stem.rsplit("__", 1)[0],
        data=data,
        positions_m=cols["position_m"],
        peak_index=int(np.argmax(data[:, 7])),
        name=stem,
    )
    return seq, has_target


# -- raw records --------------------------------------------------------------


def export_raw_record(record: RawCrossingRecord, out_dir) -> tuple[Path, Path]:
    """Write the <id>.imu.csv / <id>.profiler.csv pair for one record."""
    out_dir = Path(out_dir)
    imu_path = out_dir / f"{record.crossing_id}{IMU_SUFFIX}"
    profiler_path = out_dir / f"{record.crossing_id}{PROFILER_SUFFIX}"
    _write_table(
        imu_path, IMU_HEADER,
        [record.imu_positions_m] + [record.imu_gps[:, j] for j in range(7)],
    )
    _write_table(profiler_path, PROFILER_HEADER, [record.profiler_positions_m, record.profiler])
    return imu_path, profiler_path


def ingest_csv(path) -> RawCrossingRecord:
    """Read a raw record from its .imu.csv path (the sibling profiler file is
    located by naming convention)."""
    imu_path = Path(path)
    if not imu_path.name.endswith(IMU_SUFFIX):
        raise CsvParseError(f"raw record path must end with {IMU_SUFFIX!r}: {imu_path}")
    crossing_id = imu_path.name[: -len(IMU_SUFFIX)]
    profiler_path = imu_path.parent / f"{crossing_id}{PROFILER_SUFFIX}"
    if not imu_path.exists():
        raise FileNotFoundError(f"missing raw record file: {imu_path}")
    if not profiler_path.exists():
        raise FileNotFoundError(f"missing profiler file for record {crossing_id!r}: {profiler_path}")
    imu_cols = _read_table(imu_path, IMU_HEADER, IMU_HEADER)
    prof_cols = _read_table(profiler_path, PROFILER_HEADER, PROFILER_HEADER)
    record = RawCrossingRecord(
        crossing_id=crossing_id,
        imu_gps=np.column_stack([imu_cols[c] for c in IMU_COLUMNS]),
        profiler=prof_cols["elevation_m"],
        imu_positions_m=imu_cols["position_m"],
        profiler_positions_m=prof_cols["position_m"],
    )
    return record


def list_raw_records(directory) -> list[Path]:
    """All .imu.csv files under one directory, sorted for determinism."""
    return sorted(Path(directory).glob(f"*{IMU_SUFFIX}"))

"""Recording/manifest/report I/O.

Interchange formats:
  * manifest: JSON with rate_hz, gravity_mps2, units, and an ordered list of
    (sensor_id, relative path) pairs
  * recording: CSV with header ``t,gx,gy,gz,ax,ay,az``, one row per sample
  * reports: JSON (nested) or CSV (column-per-series tables)

Floats are serialized as shortest round-trip decimals (``repr``), so a
write-then-parse cycle is bit-exact. Degree/radian conversion happens in this
module only, driven by the manifest's declared units.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping

import numpy as np

from .sensor_model import ArrayRecording, GravityModel, SensorRecording, residuals
from .estimation import estimate_bias, rms

__all__ = [
    "ParseError",
    "DataError",
    "ConfigError",
    "ArrayManifest",
    "DatasetSummary",
    "load_manifest",
    "write_manifest",
    "parse_recording_csv",
    "write_recording_csv",
    "load_array",
    "write_array",
    "dataset_summary",
    "write_report",
]

_CSV_HEADER = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
_GYRO_UNITS = ("deg/s", "rad/s")
_ACCEL_UNITS = ("m/s2",)


class ParseError(ValueError):
    """Malformed recording or report file."""


class DataError(ValueError):
    """Well-formed file with physically inconsistent content."""


class ConfigError(ValueError):
    """Invalid manifest or configuration."""


@dataclass(frozen=True)
class ArrayManifest:
    rate_hz: float
    sensor_files: tuple[tuple[str, str], ...]
    gravity_mps2: float = 9.81
    gyro_units: str = "rad/s"
    accel_units: str = "m/s2"

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ConfigError(f"rate_hz must be > 0, got {self.rate_hz}")
        if not self.sensor_files:
            raise ConfigError("manifest must list at least one sensor file")
        if self.gyro_units not in _GYRO_UNITS:
            raise ConfigError(f"unknown gyro units {self.gyro_units!r}")
        if self.accel_units not in _ACCEL_UNITS:
            raise ConfigError(f"unknown accel units {self.accel_units!r}")
        object.__setattr__(
            self, "sensor_files", tuple((str(a), str(b)) for a, b in self.sensor_files)
        )


@dataclass(frozen=True)
class DatasetSummary:
    """Per-sensor and aggregate bias/noise RMS figures (gyro in deg/s)."""

    sensor_ids: tuple[str, ...]
    gyro_bias_rms_dps: tuple[float, ...]
    gyro_noise_rms_dps: tuple[float, ...]
    accel_bias_rms: tuple[float, ...]
    accel_noise_rms: tuple[float, ...]

    def aggregates(self) -> dict:
        out = {}
        for name in (
            "gyro_bias_rms_dps",
            "gyro_noise_rms_dps",
            "accel_bias_rms",
            "accel_noise_rms",
        ):
            vals = sorted(getattr(self, name))
            # Even counts take the lower-middle element, deterministically.
            out[name] = {
                "min": vals[0],
                "median": vals[(len(vals) - 1) // 2],
                "max": vals[-1],
            }
        return out


def load_manifest(path: str | os.PathLike) -> ArrayManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    try:
        units = raw.get("units", {})
        return ArrayManifest(
            rate_hz=float(raw["rate_hz"]),
            sensor_files=tuple((s["sensor_id"], s["path"]) for s in raw["sensor_files"]),
            gravity_mps2=float(raw.get("gravity_mps2", 9.81)),
            gyro_units=units.get("gyro", "rad/s"),
            accel_units=units.get("accel", "m/s2"),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: missing or malformed manifest field: {exc}") from exc


def write_manifest(manifest: ArrayManifest, path: str | os.PathLike) -> None:
    payload = {
        "rate_hz": manifest.rate_hz,
        "gravity_mps2": manifest.gravity_mps2,
        "units": {"gyro": manifest.gyro_units, "accel": manifest.accel_units},
        "sensor_files": [
            {"sensor_id": sid, "path": rel} for sid, rel in manifest.sensor_files
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def parse_recording_csv(
    stream: IO[str] | str | os.PathLike,
    sensor_id: str,
    rate_hz: float,
    gyro_units: str = "rad/s",
) -> SensorRecording:
    """Parse one sensor CSV into an SI recording.

    ``stream`` may be an open text stream or a path. Gyro columns are
    converted from the declared units; time spacing is validated against
    ``rate_hz`` with 1e-6 s slack.
    """
    if gyro_units not in _GYRO_UNITS:
        raise ConfigError(f"unknown gyro units {gyro_units!r}")
    close = False
    if not hasattr(stream, "read"):
        stream = open(stream, "r", newline="")
        close = True
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{sensor_id}: empty file")
        if [h.strip() for h in header] != _CSV_HEADER:
            raise ParseError(
                f"{sensor_id}: bad header {header!r}, expected {','.join(_CSV_HEADER)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise ParseError(f"{sensor_id}: line {lineno}: expected 7 columns")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(f"{sensor_id}: line {lineno}: {exc}") from exc
    finally:
        if close:
            stream.close()
    if not rows:
        raise ParseError(f"{sensor_id}: no data rows")
    arr = np.array(rows)
    t = arr[:, 0]
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{sensor_id}: timestamps not strictly increasing")
    if t.size > 1 and np.max(np.abs(np.diff(t) - 1.0 / rate_hz)) > 1e-6:
        raise DataError(f"{sensor_id}: sample spacing inconsistent with {rate_hz} Hz")
    gyro = arr[:, 1:4]
    if gyro_units == "deg/s":
        gyro = np.deg2rad(gyro)
    return SensorRecording(
        sensor_id=sensor_id, rate_hz=rate_hz, t=t, gyro=gyro, accel=arr[:, 4:7]
    )


def write_recording_csv(
    recording: SensorRecording,
    dest: IO[str] | str | os.PathLike,
    gyro_units: str = "rad/s",
) -> None:
    """Write a recording as CSV with shortest round-trip float formatting."""
    if gyro_units not in _GYRO_UNITS:
        raise ConfigError(f"unknown gyro units {gyro_units!r}")
    gyro = recording.gyro
    if gyro_units == "deg/s":
        gyro = np.rad2deg(gyro)
    lines = [",".join(_CSV_HEADER)]
    for i in range(recording.n_samples):
        vals = [recording.t[i], *gyro[i], *recording.accel[i]]
        lines.append(",".join(repr(float(v)) for v in vals))
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)


def load_array(manifest_path: str | os.PathLike) -> tuple[ArrayRecording, ArrayManifest]:
    """Load all recordings named by a manifest into one aligned array."""
    manifest = load_manifest(manifest_path)
    base = Path(manifest_path).parent
    recs = []
    for sensor_id, rel in manifest.sensor_files:
        path = base / rel
        if not path.exists():
            raise DataError(f"missing recording file {path}")
        recs.append(
            parse_recording_csv(path, sensor_id, manifest.rate_hz, manifest.gyro_units)
        )
    try:
        return ArrayRecording(tuple(recs)), manifest
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def write_array(
    array: ArrayRecording,
    out_dir: str | os.PathLike,
    gravity: GravityModel,
    gyro_units: str = "rad/s",
) -> Path:
    """Write per-sensor CSVs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for rec in array.recordings:
        rel = f"{rec.sensor_id}.csv"
        write_recording_csv(rec, out / rel, gyro_units)
        files.append((rec.sensor_id, rel))
    manifest = ArrayManifest(
        rate_hz=array.rate_hz,
        sensor_files=tuple(files),
        gravity_mps2=gravity.g_magnitude,
        gyro_units=gyro_units,
    )
    manifest_path = out / "manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path


def dataset_summary(array: ArrayRecording, gravity: GravityModel) -> DatasetSummary:
    """Per-sensor bias/noise RMS table with min/median/max aggregates.

    Bias RMS is the 3-axis RMS of the bias estimate; noise RMS is the 3-axis
    RMS of the per-axis residual std after bias removal.
    """
    if array.n_samples < 2:
        raise ValueError("need at least two samples per sensor")
    ids, gb, gn, ab, an = [], [], [], [], []
    for rec in array.recordings:
        bias, _ = estimate_bias(rec, gravity)
        res = residuals(rec, gravity) - bias
        noise = res.std(axis=0, ddof=1)
        ids.append(rec.sensor_id)
        gb.append(float(np.rad2deg(rms(bias[:3]))))
        gn.append(float(np.rad2deg(rms(noise[:3]))))
        ab.append(rms(bias[3:]))
        an.append(rms(noise[3:]))
    return DatasetSummary(
        sensor_ids=tuple(ids),
        gyro_bias_rms_dps=tuple(gb),
        gyro_noise_rms_dps=tuple(gn),
        accel_bias_rms=tuple(ab),
        accel_noise_rms=tuple(an),
    )


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("reports must not contain non-finite values")
    return obj


def write_report(report, fmt: str, dest: IO[str] | str | os.PathLike) -> None:
    """Serialize a report deterministically as JSON or a columnar CSV.

    JSON accepts any nesting of dataclasses, mappings, sequences, and arrays.
    CSV requires a flat mapping of column name -> sequence of scalars (all of
    one length); an all-empty table still produces the header line.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}")
    payload = _jsonable(report)
    buf = io.StringIO()
    if fmt == "json":
        json.dump(payload, buf, indent=2)
        buf.write("\n")
    else:
        if not isinstance(payload, dict) or not all(
            isinstance(v, list) for v in payload.values()
        ):
            raise ConfigError("csv reports require a mapping of columns to sequences")
        cols = list(payload)
        lengths = {len(payload[c]) for c in cols}
        if len(lengths) > 1:
            raise ConfigError("csv report columns must share one length")
        buf.write(",".join(cols) + "\n")
        n = lengths.pop() if lengths else 0
        for i in range(n):
            buf.write(
                ",".join(
                    repr(float(payload[c][i]))
                    if isinstance(payload[c][i], float)
                    else str(payload[c][i])
                    for c in cols
                )
                + "\n"
            )
    text = buf.getvalue()
    try:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            Path(dest).write_text(text)
    except OSError as exc:
        raise IOError(f"cannot write report to {dest}: {exc}") from exc

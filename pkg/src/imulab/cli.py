"""Command-line experiment driver.

Subcommands: ``simulate`` (write synthetic recordings + manifest),
``estimate`` (noise/bias estimation products per sensor count), ``propagate``
(error-state and covariance trajectories, ratio matrices, ellipsoids), and
``report`` (one JSON bundle over a run directory). Every command is
deterministic given (config, seed); figures are emitted as CSV/JSON data
series rather than images.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    ArrayManifest,
    ConfigError,
    DataError,
    ParseError,
    dataset_summary,
    load_manifest,
    parse_recording_csv,
    write_array,
    write_report,
)
from .estimation import (
    db_ratio,
    kde_density,
    rms,
    running_std_profile,
    sort_by_quality,
)
from .ins_error_model import (
    IDX_EPS,
    IDX_P,
    IDX_V,
    NoiseSpectra,
    build_system,
    ellipsoid_from_cov,
    propagate_mean,
    q_closed,
    q_coefficient_audit,
)
from .sensor_model import (
    ArrayRecording,
    GravityModel,
    SensorErrorParams,
    draw_sensor_params,
    residuals,
    simulate_array,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass
class ExperimentConfig:
    seed: int = 0
    duration_s: float = 100.0
    rate_hz: float = 100.0
    sensors: int | list[dict] | None = 10
    manifest: str | None = None
    tau_grid: list[float] = field(default_factory=lambda: [float(t) for t in range(0, 101)])
    k_grid: list[int] = field(default_factory=lambda: [1, 10])
    out_dir: str = "imulab_out"
    fmt: str = "csv"
    noise_interpretation: str = "per_sample"
    inject_bias_walk: bool = False
    gravity_mps2: float = 9.81

    def __post_init__(self):
        if (self.sensors is None) == (self.manifest is None):
            raise ConfigError("exactly one of 'sensors' or 'manifest' must be set")
        if not self.tau_grid or not self.k_grid:
            raise ConfigError("tau_grid and k_grid must be non-empty")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.fmt!r}")
        if self.noise_interpretation not in ("per_sample", "psd"):
            raise ConfigError(
                f"unknown noise interpretation {self.noise_interpretation!r}"
            )
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ConfigError("duration_s and rate_hz must be > 0")

    @property
    def gravity(self) -> GravityModel:
        return GravityModel(self.gravity_mps2)

    def sensor_params(self) -> list[SensorErrorParams]:
        if self.sensors is None:
            raise ConfigError("this command needs synthetic sensor parameters")
        if isinstance(self.sensors, int):
            if self.sensors < 1:
                raise ConfigError("sensor count must be >= 1")
            return draw_sensor_params(self.sensors, self.seed)
        return [_params_from_dict(d) for d in self.sensors]


def _params_from_dict(d: dict) -> SensorErrorParams:
    """Build sensor params from a config dict (gyro quantities in deg/s)."""
    try:
        return SensorErrorParams(
            bias_gyro=np.deg2rad(np.asarray(d.get("bias_gyro_dps", [0, 0, 0]), float)),
            bias_accel=np.asarray(d.get("bias_accel", [0, 0, 0]), float),
            sigma_gyro=float(np.deg2rad(d.get("sigma_gyro_dps", 0.0))),
            sigma_accel=float(d.get("sigma_accel", 0.0)),
            sigma_gyro_bias=float(np.deg2rad(d.get("sigma_gyro_bias_dps", 0.0))),
            sigma_accel_bias=float(d.get("sigma_accel_bias", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sensor parameter entry: {exc}") from exc


def load_config(path: str | None, overrides: argparse.Namespace) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON in {path}: {exc}") from exc
    if getattr(overrides, "seed", None) is not None:
        raw["seed"] = overrides.seed
    if getattr(overrides, "sensors", None) is not None:
        raw["sensors"] = overrides.sensors
        raw.pop("manifest", None)
    if getattr(overrides, "rate", None) is not None:
        raw["rate_hz"] = overrides.rate
    if getattr(overrides, "duration", None) is not None:
        raw["duration_s"] = overrides.duration
    if getattr(overrides, "out", None) is not None:
        raw["out_dir"] = overrides.out
    if getattr(overrides, "format", None) is not None:
        raw["fmt"] = overrides.format
    raw.setdefault("sensors", None if raw.get("manifest") else 10)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**raw)


def _thread_count() -> int:
    val = os.environ.get("IMULAB_THREADS", "0")
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"IMULAB_THREADS must be an integer, got {val!r}")
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def _load_array(manifest_path: Path) -> tuple[ArrayRecording, ArrayManifest]:
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    workers = min(_thread_count(), len(manifest.sensor_files))

    def parse(entry):
        sensor_id, rel = entry
        path = base / rel
        if not path.exists():
            raise DataError(f"missing recording file {path}")
        return parse_recording_csv(path, sensor_id, manifest.rate_hz, manifest.gyro_units)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            recs = list(pool.map(parse, manifest.sensor_files))
    else:
        recs = [parse(e) for e in manifest.sensor_files]
    try:
        return ArrayRecording(tuple(recs)), manifest
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _resolve_manifest(config: ExperimentConfig) -> Path:
    if config.manifest is not None:
        return Path(config.manifest)
    path = Path(config.out_dir) / "recordings" / "manifest.json"
    if not path.exists():
        raise ConfigError(
            f"no manifest configured and no prior simulate output at {path}"
        )
    return path


def cmd_simulate(config: ExperimentConfig) -> int:
    params = config.sensor_params()
    array = simulate_array(
        params,
        config.gravity,
        config.duration_s,
        config.rate_hz,
        config.seed,
        inject_bias_walk=config.inject_bias_walk,
    )
    manifest_path = write_array(
        array, Path(config.out_dir) / "recordings", config.gravity
    )
    print(f"wrote {array.n_sensors} recordings ({array.n_samples} samples each) "
          f"-> {manifest_path}")
    return EXIT_OK


def _axis_rms_std(series: np.ndarray) -> float:
    """3-axis RMS of the per-axis sample std of an (N, 3) series."""
    return rms(series.std(axis=0, ddof=1))


def cmd_estimate(config: ExperimentConfig) -> int:
    manifest_path = _resolve_manifest(config)
    array, manifest = _load_array(manifest_path)
    gravity = GravityModel(manifest.gravity_mps2)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ordered, scores = sort_by_quality(array, gravity)
    write_report(
        {"order_worst_first": [sid for sid, _ in scores],
         "scores": {sid: s for sid, s in scores}},
        "json",
        out / "quality.json",
    )

    n = ordered.n_samples
    res = np.stack(
        [residuals(r, gravity) for r in ordered.recordings], axis=1
    )  # (N, K, 6)
    k_grid = sorted({k for k in config.k_grid if 1 <= k <= ordered.n_sensors})
    if not k_grid:
        raise ConfigError("k_grid has no entries within the sensor count")

    cells_gyro, cells_accel = {}, {}
    for k in k_grid:
        avg = res[:, :k, :].mean(axis=1)  # (N, 6)
        gyro, accel = avg[:, :3], avg[:, 3:]
        gyro_cal = gyro - gyro.mean(axis=0)
        accel_cal = accel - accel.mean(axis=0)

        t = ordered.recordings[0].t
        _write_table(
            {
                "t": t,
                "gyro_raw_rms_dps": np.rad2deg(np.sqrt((gyro**2).mean(axis=1))),
                "accel_raw_rms": np.sqrt((accel**2).mean(axis=1)),
                "gyro_cal_rms_dps": np.rad2deg(np.sqrt((gyro_cal**2).mean(axis=1))),
                "accel_cal_rms": np.sqrt((accel_cal**2).mean(axis=1)),
            },
            out / f"series_K{k}", config.fmt,
        )

        _write_table(_kde_table(gyro, gyro_cal, accel, accel_cal),
                     out / f"kde_K{k}", config.fmt)

        # Growing-window noise-density profile with CRLB reference lines.
        prof_g = running_std_profile(gyro_cal.mean(axis=1, keepdims=True))
        prof_a = running_std_profile(accel_cal.mean(axis=1, keepdims=True))
        sg = float(gyro_cal.mean(axis=1).std(ddof=1))
        sa = float(accel_cal.mean(axis=1).std(ddof=1))
        ends = prof_g.window_ends
        _write_table(
            {
                "window_end_s": ends / ordered.rate_hz,
                "gyro_std_dps": np.rad2deg(prof_g.std_estimates),
                "accel_std": prof_a.std_estimates,
                "gyro_crlb_sqrt_dps": np.rad2deg(sg / np.sqrt(ends)),
                "accel_crlb_sqrt": sa / np.sqrt(ends),
            },
            out / f"running_std_K{k}", config.fmt,
        )

        cells_gyro[k] = float(np.rad2deg(_axis_rms_std(gyro_cal)))
        cells_accel[k] = _axis_rms_std(accel_cal)

    evaluation = {
        "n_samples": n,
        "k_grid": k_grid,
        "gyro_dps": _evaluation_matrix(cells_gyro, n, k_grid),
        "accel": _evaluation_matrix(cells_accel, n, k_grid),
    }
    write_report(evaluation, "json", out / "evaluation_matrix.json")
    print(f"estimation products written to {out}")
    return EXIT_OK


def _kde_table(gyro, gyro_cal, accel, accel_cal) -> dict:
    table = {}
    for label, raw, cal, to_out in (
        ("gyro_dps", gyro, gyro_cal, np.rad2deg),
        ("accel", accel, accel_cal, lambda x: x),
    ):
        pooled_raw = to_out(raw).ravel()
        pooled_cal = to_out(cal).ravel()
        lo = min(pooled_raw.min(), pooled_cal.min())
        hi = max(pooled_raw.max(), pooled_cal.max())
        pad = 0.1 * (hi - lo) if hi > lo else 1.0
        grid = np.linspace(lo - pad, hi + pad, 201)
        table[f"{label}_value"] = grid
        table[f"{label}_density_raw"] = kde_density(pooled_raw, grid)
        table[f"{label}_density_cal"] = kde_density(pooled_cal, grid)
    return table


def _evaluation_matrix(cells: dict[int, float], n: int, k_grid: list[int]) -> dict:
    """Sensor-axis / time-axis evaluation matrix with improvement ratios.

    The t0 row is the per-sample noise level of the K-averaged series; the tf
    row is the uncertainty of the full-window mean, smaller by 1/sqrt(N).
    Under the variance law the column ratio is 1/sqrt(N) and the row ratio
    approaches 1/sqrt(K).
    """
    k_lo, k_hi = k_grid[0], k_grid[-1]
    t0 = {f"K{k}": cells[k] for k in k_grid}
    tf = {f"K{k}": cells[k] / np.sqrt(n) for k in k_grid}
    k_ratio = cells[k_hi] / cells[k_lo]
    n_ratio = 1.0 / np.sqrt(n)
    return {
        "t0": t0,
        "tf": tf,
        "k_ratio": k_ratio,
        "n_ratio": n_ratio,
        "nk_ratio": k_ratio * n_ratio,
        "k_ratio_db": db_ratio(k_ratio),
        "n_ratio_db": db_ratio(n_ratio),
        "expected_k_ratio": 1.0 / np.sqrt(k_hi / k_lo),
    }


def cmd_propagate(config: ExperimentConfig) -> int:
    gravity, biases, spectra_pool = _propagation_inputs(config)
    sys_m = build_system(gravity)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    taus = np.asarray(sorted(config.tau_grid), dtype=float)
    if np.any(taus < 0):
        raise ConfigError("tau_grid entries must be >= 0")
    k_max = len(biases)
    k_grid = sorted({k for k in config.k_grid if 1 <= k <= k_max})
    if not k_grid:
        raise ConfigError("k_grid has no entries within the sensor count")
    tau_f = float(taus[-1])

    results = {}
    for k in k_grid:
        bias = np.mean(biases[:k], axis=0)
        spectra = spectra_pool.scaled(1.0 / k)
        mean_traj = np.empty((taus.size, 9))
        unc_traj = np.empty((taus.size, 9))
        for i, tau in enumerate(taus):
            dp, dv, eps = propagate_mean(bias[:3], bias[3:], sys_m, tau)
            mean_traj[i] = np.abs(np.concatenate([dp, dv, eps]))
            q = q_closed(sys_m, spectra, tau)
            unc_traj[i] = np.sqrt(np.diag(q)[:9])
        _write_table(
            {"tau": taus, **_kinematic_columns(mean_traj)},
            out / f"mean_error_K{k}", config.fmt,
        )
        _write_table(
            {"tau": taus, **_kinematic_columns(unc_traj)},
            out / f"uncertainty_K{k}", config.fmt,
        )
        q_f = q_closed(sys_m, spectra, tau_f)
        dp_f, _, _ = propagate_mean(bias[:3], bias[3:], sys_m, tau_f)
        ell = ellipsoid_from_cov(q_f[IDX_P, IDX_P], dp_f)
        write_report(
            {"tau": tau_f, "centroid": ell.centroid,
             "semi_axes": ell.semi_axes, "orientation": ell.orientation},
            "json", out / f"ellipsoid_K{k}.json",
        )
        results[k] = (mean_traj[-1], unc_traj[-1])

    k_lo, k_hi = k_grid[0], k_grid[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_ratio = results[k_hi][0] / results[k_lo][0]
        unc_ratio = results[k_hi][1] / results[k_lo][1]
    mean_ratio = np.where(np.isfinite(mean_ratio), mean_ratio, 0.0)
    unc_ratio = np.where(np.isfinite(unc_ratio), unc_ratio, 0.0)
    write_report(
        {
            "tau": tau_f,
            "k_pair": [k_lo, k_hi],
            "mean_error_ratio": mean_ratio.reshape(3, 3),
            "uncertainty_ratio": unc_ratio.reshape(3, 3),
            "expected_uncertainty_ratio": 1.0 / np.sqrt(k_hi / k_lo),
        },
        "json", out / "ratio_matrices.json",
    )
    print(f"propagation products written to {out}")
    return EXIT_OK


def _kinematic_columns(traj: np.ndarray) -> dict:
    names = [f"{state}_{axis}" for state in ("dp", "dv", "eps") for axis in "xyz"]
    return {name: traj[:, j] for j, name in enumerate(names)}


def _propagation_inputs(
    config: ExperimentConfig,
) -> tuple[GravityModel, np.ndarray, NoiseSpectra]:
    """Worst-first bias list and pooled noise spectra for propagation.

    The pooled spectra average the per-sensor intensities; the array Q then
    scales the pooled single-sensor Q by 1/K (identical-sensor assumption),
    so uncertainty ratios are exact.
    """
    if config.manifest is not None or config.sensors is None:
        manifest_path = _resolve_manifest(config)
        array, manifest = _load_array(manifest_path)
        gravity = GravityModel(manifest.gravity_mps2)
        ordered, _ = sort_by_quality(array, gravity)
        biases, sig_a, sig_g = [], [], []
        for rec in ordered.recordings:
            res = residuals(rec, gravity)
            b = res.mean(axis=0)
            noise = (res - b).std(axis=0, ddof=1)
            biases.append(np.concatenate([b[3:], b[:3]]))  # accel first, then gyro
            sig_g.append(rms(noise[:3]))
            sig_a.append(rms(noise[3:]))
        spectra = NoiseSpectra.from_discrete_std(
            float(np.mean(sig_a)), float(np.mean(sig_g)),
            0.0, 0.0, manifest.rate_hz,
        )
        return gravity, np.array(biases), spectra
    gravity = config.gravity
    params = config.sensor_params()
    params.sort(key=_param_badness, reverse=True)
    biases = np.array(
        [np.concatenate([p.bias_accel, p.bias_gyro]) for p in params]
    )
    if config.noise_interpretation == "psd":
        spectra = NoiseSpectra(
            s_a=float(np.mean([p.sigma_accel**2 for p in params])),
            s_g=float(np.mean([p.sigma_gyro**2 for p in params])),
            s_ab=float(np.mean([p.sigma_accel_bias**2 for p in params])),
            s_gb=float(np.mean([p.sigma_gyro_bias**2 for p in params])),
        )
    else:
        spectra = NoiseSpectra.from_discrete_std(
            float(np.mean([p.sigma_accel for p in params])),
            float(np.mean([p.sigma_gyro for p in params])),
            float(np.mean([p.sigma_accel_bias for p in params])),
            float(np.mean([p.sigma_gyro_bias for p in params])),
            config.rate_hz,
        )
    return gravity, biases, spectra


def _param_badness(p: SensorErrorParams) -> float:
    from .estimation import _QUALITY_NORM_ACCEL, _QUALITY_NORM_GYRO

    scaled = np.concatenate(
        [p.bias_gyro / _QUALITY_NORM_GYRO, p.bias_accel / _QUALITY_NORM_ACCEL]
    )
    return rms(scaled)


def cmd_report(config: ExperimentConfig) -> int:
    out = Path(config.out_dir)
    evaluation = _read_optional_json(out / "evaluation_matrix.json")
    ratios = _read_optional_json(out / "ratio_matrices.json")
    if evaluation is None and ratios is None:
        raise ConfigError(
            f"no estimate/propagate outputs found in {out}; run those commands first"
        )

    summary = None
    try:
        manifest_path = _resolve_manifest(config)
    except ConfigError:
        manifest_path = None
    if manifest_path is not None and manifest_path.exists():
        array, manifest = _load_array(manifest_path)
        summary = dataset_summary(array, GravityModel(manifest.gravity_mps2))

    bundle = {
        "software_version": __version__,
        "gravity_mps2": config.gravity_mps2,
        "noise_interpretation": config.noise_interpretation,
        "config": {
            f.name: getattr(config, f.name) for f in dataclasses.fields(config)
        },
        "dataset_summary": None if summary is None else {
            "per_sensor": summary,
            "aggregates": summary.aggregates(),
        },
        "evaluation_matrix": evaluation,
        "ratio_matrices": ratios,
        "db_ratios": _collect_db(evaluation, ratios),
        "q_coefficient_audit": q_coefficient_audit(config.gravity),
    }
    dest = out / "report.json"
    write_report(bundle, "json", dest)
    print(f"report written to {dest}")
    return EXIT_OK


def _collect_db(evaluation, ratios) -> dict:
    out = {}
    if evaluation is not None:
        for key in ("gyro_dps", "accel"):
            out[f"{key}_k_ratio_db"] = evaluation[key]["k_ratio_db"]
            out[f"{key}_n_ratio_db"] = evaluation[key]["n_ratio_db"]
    if ratios is not None:
        unc = np.asarray(ratios["uncertainty_ratio"], dtype=float)
        positive = unc[unc > 0]
        if positive.size:
            out["uncertainty_ratio_db_mean"] = float(
                np.mean([db_ratio(v) for v in positive])
            )
    return out


def _read_optional_json(path: Path):
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt JSON: {exc}") from exc


def _write_table(columns: dict, stem: Path, fmt: str) -> None:
    columns = {k: np.asarray(v).tolist() for k, v in columns.items()}
    write_report(columns, fmt, stem.with_suffix(f".{fmt}"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imulab",
        description="Stationary IMU-array simulation, estimation, and propagation",
    )
    parser.add_argument("--version", action="version", version=f"imulab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", cmd_simulate),
        ("estimate", cmd_estimate),
        ("propagate", cmd_propagate),
        ("report", cmd_report),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--sensors", type=int)
        p.add_argument("--rate", type=float)
        p.add_argument("--duration", type=float)
        p.add_argument("--out")
        p.add_argument("--format", choices=["csv", "json"])
        p.set_defaults(func=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        config = load_config(args.config, args)
        return args.func(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Parametric estimation of stationary sensor errors.

Sample means over time and sensors, the sigma^2/(N*K) variance law and its
CRLB counterpart, growing-window noise-density profiles, KDE densities,
quality ranking of sensors, and a two-part wide-sense-stationarity check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sp_stats

from .sensor_model import ArrayRecording, GravityModel, SensorRecording
from .sensor_model import MEMS_ERROR_RANGES, residuals

__all__ = [
    "MeanEstimate",
    "RunningStdProfile",
    "WssVerdict",
    "sample_mean",
    "variance_of_mean",
    "running_std_profile",
    "rms",
    "mse",
    "fisher_crlb",
    "db_ratio",
    "kde_density",
    "sort_by_quality",
    "quality_score",
    "estimate_bias",
    "wss_check",
]


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    n_time: int
    n_sensors: int
    predicted_variance: float | None = None

    def __post_init__(self):
        if self.n_time < 1 or self.n_sensors < 1:
            raise ValueError("n_time and n_sensors must be >= 1")
        if self.predicted_variance is not None and self.predicted_variance < 0:
            raise ValueError("predicted_variance must be >= 0")


@dataclass(frozen=True)
class RunningStdProfile:
    """Estimated std of the growing-window mean, on a log grid of window ends."""

    window_ends: np.ndarray
    std_estimates: np.ndarray

    def __post_init__(self):
        we = np.asarray(self.window_ends, dtype=int)
        se = np.asarray(self.std_estimates, dtype=float)
        if we.shape != se.shape:
            raise ValueError("window_ends and std_estimates must have equal length")
        if np.any(se < 0):
            raise ValueError("std estimates must be >= 0")
        object.__setattr__(self, "window_ends", we)
        object.__setattr__(self, "std_estimates", se)

    def loglog_slope(self) -> float:
        """Least-squares slope of log10(std) vs log10(window end)."""
        mask = self.std_estimates > 0
        if np.count_nonzero(mask) < 2:
            raise ValueError("need at least two non-zero std estimates to fit a slope")
        x = np.log10(self.window_ends[mask])
        y = np.log10(self.std_estimates[mask])
        return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class WssVerdict:
    mean_drift_stat: float
    acf_whiteness_stat: float
    mean_drift_threshold: float
    acf_whiteness_threshold: float
    passed: bool


def sample_mean(data: np.ndarray, sigma: float | None = None) -> MeanEstimate:
    """Grand sample mean of an N x K measurement matrix.

    If the per-sample noise std ``sigma`` is supplied, the model-predicted
    estimator variance sigma^2/(N*K) is attached.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("data must be a non-empty N x K matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError("data must be finite")
    n, k = arr.shape
    predicted = None if sigma is None else variance_of_mean(sigma, n, k)
    return MeanEstimate(value=float(arr.mean()), n_time=n, n_sensors=k,
                        predicted_variance=predicted)


def variance_of_mean(sigma: float, n_time: int, n_sensors: int) -> float:
    """Variance of the grand mean of N*K i.i.d. samples: sigma^2 / (N*K)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if n_time < 1 or n_sensors < 1:
        raise ValueError("n_time and n_sensors must be >= 1")
    return sigma**2 / (n_time * n_sensors)


def _log_window_grid(n: int, points_per_decade: int = 10) -> np.ndarray:
    """Integer window ends from 2 to n, ~logarithmically spaced."""
    grid = np.unique(
        np.round(
            np.logspace(np.log10(2), np.log10(n), max(2, int(np.log10(n / 2) * points_per_decade) + 1))
        ).astype(int)
    )
    return grid[(grid >= 2) & (grid <= n)]


def running_std_profile(data: np.ndarray, points_per_decade: int = 10) -> RunningStdProfile:
    """Noise density of the growing-window mean of a sensor-averaged series.

    The K columns are averaged per time step; at each window end ``n`` (on a
    log grid) the estimated std of the window mean is s_n / sqrt(n), with s_n
    the sample std of the averaged series over the window. For white noise
    this decays as sigma / sqrt(n*K): slope -1/2 in log-log coordinates, and a
    time-independent 1/sqrt(K) offset between array sizes.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("data must be an N x K matrix with N >= 2")
    z = arr.mean(axis=1)
    ends = _log_window_grid(arr.shape[0], points_per_decade)
    if np.ptp(z) == 0:
        return RunningStdProfile(window_ends=ends, std_estimates=np.zeros(ends.shape))
    # Running sample std via cumulative first/second moments; centering first
    # avoids cancellation when the series mean dwarfs its spread.
    z = z - z.mean()
    c1 = np.cumsum(z)
    c2 = np.cumsum(z * z)
    n = ends.astype(float)
    var = (c2[ends - 1] - c1[ends - 1] ** 2 / n) / (n - 1)
    std = np.sqrt(np.maximum(var, 0.0)) / np.sqrt(n)
    return RunningStdProfile(window_ends=ends, std_estimates=std)


def rms(values: np.ndarray) -> float:
    """Root mean square, sqrt(mean(x^2))."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("values must be non-empty")
    return float(np.sqrt(np.mean(arr**2)))


def mse(estimates: np.ndarray, truth: float) -> float:
    """Mean squared error of a batch of estimates against a scalar truth."""
    arr = np.asarray(estimates, dtype=float)
    if arr.size == 0:
        raise ValueError("estimates must be non-empty")
    return float(np.mean((arr - truth) ** 2))


def fisher_crlb(sigma: float, n: int) -> tuple[float, float]:
    """Fisher information N/sigma^2 and CRLB sigma^2/N for a Gaussian mean."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    fisher = n / sigma**2
    return fisher, 1.0 / fisher


def db_ratio(x: float) -> float:
    """Power ratio in decibels, 10*log10(x)."""
    if x <= 0:
        raise ValueError("db_ratio requires a positive argument")
    return 10.0 * np.log10(x)


def kde_density(
    samples: np.ndarray,
    eval_points: np.ndarray,
    bandwidth: float | None = None,
) -> np.ndarray:
    """Gaussian-kernel density estimate evaluated on a grid.

    Default bandwidth is the Silverman-style rule 1.06 * std * N^(-1/5).
    The result integrates to one over a wide enough grid but, like any
    density, may exceed one pointwise.
    """
    x = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(eval_points, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    if bandwidth is None:
        s = x.std(ddof=1)
        if s == 0:
            s = 1e-12  # degenerate sample: fall back to a spike
        bandwidth = 1.06 * s * x.size ** (-0.2)
    elif bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    # Chunk the sample axis to keep the broadcast below ~10^7 doubles.
    out = np.zeros_like(grid)
    step = max(1, int(1e7 // max(grid.size, 1)))
    for i in range(0, x.size, step):
        d = (grid[None, :] - x[i : i + step, None]) / bandwidth
        out += np.exp(-0.5 * d * d).sum(axis=0)
    return out / (x.size * bandwidth * np.sqrt(2 * np.pi))


# Reference medians used to put gyro (rad/s) and accel (m/s^2) biases on a
# comparable scale inside the quality score.
_QUALITY_NORM_GYRO = float(np.deg2rad(MEMS_ERROR_RANGES["gyro_bias_rms_dps"][1]))
_QUALITY_NORM_ACCEL = float(MEMS_ERROR_RANGES["accel_bias_rms"][1])


def quality_score(recording: SensorRecording, gravity: GravityModel) -> float:
    """Scalar badness score of one sensor: RMS of its normalized 6-axis bias."""
    bias, _ = estimate_bias(recording, gravity)
    scaled = np.concatenate(
        [bias[:3] / _QUALITY_NORM_GYRO, bias[3:] / _QUALITY_NORM_ACCEL]
    )
    return rms(scaled)


def sort_by_quality(
    array: ArrayRecording, gravity: GravityModel
) -> tuple[ArrayRecording, list[tuple[str, float]]]:
    """Order sensors worst-first by bias magnitude.

    With sensors sorted this way, a K=1 slice uses the least reliable unit, so
    adding sensors can only improve the pooled estimates. Ties break on
    sensor_id to keep the order deterministic.
    """
    scored = [
        (quality_score(r, gravity), r.sensor_id, r) for r in array.recordings
    ]
    scored.sort(key=lambda item: (-item[0], item[1]))
    ordered = ArrayRecording(tuple(r for _, _, r in scored))
    return ordered, [(sid, score) for score, sid, _ in scored]


def estimate_bias(
    recording: SensorRecording, gravity: GravityModel
) -> tuple[np.ndarray, np.ndarray]:
    """Six-axis bias estimate (time-mean of residuals) and its 1-sigma error.

    The per-axis uncertainty is sample std / sqrt(N); it is zero for a
    noiseless record.
    """
    if recording.n_samples < 2:
        raise ValueError("need at least two samples to estimate bias")
    res = residuals(recording, gravity)
    bias = res.mean(axis=0)
    unc = res.std(axis=0, ddof=1) / np.sqrt(recording.n_samples)
    constant = np.ptp(res, axis=0) == 0
    bias[constant] = res[0, constant]
    unc[constant] = 0.0
    return bias, unc


def wss_check(series: np.ndarray, alpha: float = 0.01, n_lags: int = 20) -> WssVerdict:
    """Two-part wide-sense-stationarity check of a scalar series.

    Mean drift: the split-half mean difference normalized by the pooled
    std, compared against a two-sided Gaussian quantile. Whiteness: a
    Ljung-Box statistic over ``n_lags`` autocorrelation lags against a
    chi-square quantile. Both parts must clear their level-``alpha``
    thresholds for the verdict to pass.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 100:
        raise ValueError("need at least 100 samples for a stationarity check")
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")

    half = n // 2
    a, b = x[:half], x[half : 2 * half]
    pooled = np.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2)
    if pooled == 0:
        drift_stat = 0.0 if a.mean() == b.mean() else np.inf
    else:
        drift_stat = abs(a.mean() - b.mean()) / (pooled * np.sqrt(2.0 / half))
    drift_thresh = float(sp_stats.norm.ppf(1 - alpha / 2))

    z = x - x.mean()
    denom = float(z @ z)
    if denom == 0:
        lb_stat = 0.0
    else:
        acf = np.array([float(z[:-lag] @ z[lag:]) / denom for lag in range(1, n_lags + 1)])
        lb_stat = float(n * (n + 2) * np.sum(acf**2 / (n - np.arange(1, n_lags + 1))))
    lb_thresh = float(sp_stats.chi2.ppf(1 - alpha, df=n_lags))

    return WssVerdict(
        mean_drift_stat=float(drift_stat),
        acf_whiteness_stat=lb_stat,
        mean_drift_threshold=drift_thresh,
        acf_whiteness_threshold=lb_thresh,
        passed=bool(drift_stat < drift_thresh and lb_stat < lb_thresh),
    )

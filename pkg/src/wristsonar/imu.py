"""IMU preprocessing: band expansion, windowing, file ingestion.

Six raw channels (3-axis accelerometer + 3-axis gyroscope, SI units) expand
to 24 by stacking three causal 2nd-order Butterworth views next to the raw
data: a 0.22-8 Hz band for slow arm motion, an 8-32 Hz band for tremor-scale
dynamics, and everything above 32 Hz for impacts. Band edges adapt to low
sample rates by clamping at a fixed fraction of the rate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .dsp import butterworth_sos, zscore
from .errors import BandDesignError, IngestionError

log = logging.getLogger(__name__)

IMU_BANDS: tuple[tuple[float, float | None], ...] = (
    (0.22, 8.0),
    (8.0, 32.0),
    (32.0, None),  # highpass
)
IMU_FILTER_ORDER = 2
EDGE_FRACTION = 0.45  # band edges at or above this fraction of fs clamp to it
DEFAULT_WINDOW_S = 1.2
DEFAULT_STRIDE_S = 1.0 / 30.0


@dataclass(frozen=True)
class ImuWindow:
    """One z-scored IMU slice; values shaped (channels, samples)."""

    values: np.ndarray
    end_sample: int
    sample_rate: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be 2-D (channels, samples)")
        object.__setattr__(self, "values", v)


def _band_sos(low: float, high: float | None, sample_rate: float, name: str) -> np.ndarray:
    limit = EDGE_FRACTION * sample_rate
    clamped_low = low
    clamped_high = high
    if low >= limit:
        clamped_low = limit
        log.warning("IMU band %s: low edge %.3g Hz clamped to %.3g Hz at %.3g Hz sampling",
                    name, low, limit, sample_rate)
    if high is not None and high >= limit:
        clamped_high = limit
        log.warning("IMU band %s: high edge %.3g Hz clamped to %.3g Hz at %.3g Hz sampling",
                    name, high, limit, sample_rate)
    if clamped_high is not None and clamped_low >= clamped_high:
        raise BandDesignError(
            f"IMU band {name} collapsed at {sample_rate:g} Hz sampling "
            f"({clamped_low:g} >= {clamped_high:g} Hz)")
    if clamped_high is None:
        return butterworth_sos(clamped_low, None, IMU_FILTER_ORDER, sample_rate)
    return butterworth_sos(clamped_low, clamped_high, IMU_FILTER_ORDER, sample_rate)


def band_name(band: tuple[float, float | None]) -> str:
    low, high = band
    return f"{low:g}-{high:g} Hz" if high is not None else f">{low:g} Hz"


def expand_bands(samples, sample_rate: float) -> np.ndarray:
    """Expand (n, 6) raw IMU samples to (n, 24) raw + three filtered views.

    Causal filtering with zero initial state; column order is the six raw
    channels, then the six channels through each band in IMU_BANDS order.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 6:
        raise ValueError("expected raw IMU samples shaped (n, 6)")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    views = [samples]
    for band in IMU_BANDS:
        sos = _band_sos(band[0], band[1], sample_rate, band_name(band))
        views.append(signal.sosfilt(sos, samples, axis=0))
    return np.concatenate(views, axis=1)


def window_imu(expanded, sample_rate: float, window_s: float = DEFAULT_WINDOW_S,
               stride_s: float = DEFAULT_STRIDE_S) -> list[ImuWindow]:
    """Slice expanded IMU channels into z-scored sliding windows.

    Window start samples are round(k * stride_s * sample_rate), so fractional
    strides stay anchored to the true clock instead of accumulating drift.
    """
    expanded = np.asarray(expanded, dtype=np.float64)
    if expanded.ndim != 2:
        raise ValueError("expected expanded IMU samples shaped (n, channels)")
    win_len = int(round(window_s * sample_rate))
    if win_len < 2:
        raise ValueError("window too short at this sample rate")
    out = []
    n = expanded.shape[0]
    k = 0
    while True:
        start = int(round(k * stride_s * sample_rate))
        end = start + win_len
        if end > n:
            break
        out.append(window_ending_at(expanded, sample_rate, end, window_s))
        k += 1
    return out


def window_ending_at(expanded, sample_rate: float, end_sample: int,
                     window_s: float = DEFAULT_WINDOW_S) -> ImuWindow | None:
    """One z-scored window ending at end_sample, or None if out of range."""
    expanded = np.asarray(expanded, dtype=np.float64)
    win_len = int(round(window_s * sample_rate))
    start = end_sample - win_len
    if start < 0 or end_sample > expanded.shape[0]:
        return None
    block = expanded[start:end_sample].T  # (channels, samples)
    return ImuWindow(values=zscore(block, axis=1), end_sample=end_sample,
                     sample_rate=sample_rate)


def read_imu_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Read timestamp_ns + 6 SI columns; returns (timestamps_s, values (n, 6))."""
    times = []
    rows = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",") if "," in line else line.split()
                if len(parts) != 7:
                    raise IngestionError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
                try:
                    times.append(int(parts[0]) * 1e-9)
                    rows.append([float(p) for p in parts[1:]])
                except ValueError as exc:
                    raise IngestionError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    return np.asarray(times), np.asarray(rows, dtype=np.float64).reshape(-1, 6)


def resample_imu(timestamps, values, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Linearly resample irregular IMU samples onto a uniform grid.

    Returns (grid_timestamps, resampled (n, 6)); the grid runs from the first
    to the last source timestamp at 1/sample_rate spacing.
    """
    timestamps = np.asarray(timestamps, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if timestamps.ndim != 1 or timestamps.size < 2:
        raise ValueError("need at least two timestamped samples to resample")
    if np.any(np.diff(timestamps) <= 0):
        raise ValueError("timestamps must strictly increase")
    n = int(np.floor((timestamps[-1] - timestamps[0]) * sample_rate)) + 1
    grid = timestamps[0] + np.arange(n) / sample_rate
    out = np.column_stack([np.interp(grid, timestamps, values[:, c])
                           for c in range(values.shape[1])])
    return grid, out

"""Shared signal kernels: Butterworth filtering, cross-correlation, z-score.

Filtering is causal one-pass (the live pipeline cannot look ahead); constant
group delay is absorbed by start detection downstream. Filter state starts at
zero, so the first frames of any recording are warm-up and tests discard them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import signal

from .errors import InsufficientDataError

ENV_THREADS = "ECHO_SONAR_THREADS"


def max_threads() -> int:
    """Worker cap for internal parallelism, from ECHO_SONAR_THREADS."""
    raw = os.environ.get(ENV_THREADS, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class BandpassSpec:
    """Butterworth bandpass parameters; edges validated against Nyquist."""

    low_cut: float
    high_cut: float
    order: int = 5
    sample_rate: float = 48_000.0

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be >= 1")
        nyquist = self.sample_rate / 2.0
        if not 0.0 < self.low_cut < self.high_cut < nyquist:
            raise ValueError("band edges must satisfy 0 < low < high < Nyquist")


def butterworth_sos(low_cut: float | None, high_cut: float | None, order: int,
                    sample_rate: float) -> np.ndarray:
    """Second-order sections for a Butterworth band, high, or low pass.

    Derived from the analog prototype via the bilinear transform with
    frequency prewarping; returned as SOS so high orders stay numerically
    stable. Exactly one of the edges may be None.
    """
    nyquist = sample_rate / 2.0
    if low_cut is not None and high_cut is not None:
        if not 0.0 < low_cut < high_cut < nyquist:
            raise ValueError("band edges must satisfy 0 < low < high < Nyquist")
        return signal.butter(order, [low_cut, high_cut], btype="bandpass",
                             fs=sample_rate, output="sos")
    if low_cut is not None:
        if not 0.0 < low_cut < nyquist:
            raise ValueError("highpass edge must sit inside (0, Nyquist)")
        return signal.butter(order, low_cut, btype="highpass", fs=sample_rate, output="sos")
    if high_cut is not None:
        if not 0.0 < high_cut < nyquist:
            raise ValueError("lowpass edge must sit inside (0, Nyquist)")
        return signal.butter(order, high_cut, btype="lowpass", fs=sample_rate, output="sos")
    raise ValueError("at least one band edge is required")


def butterworth_bandpass(samples, spec: BandpassSpec) -> np.ndarray:
    """Causal one-pass Butterworth bandpass, zero initial state.

    Parameters
    ----------
    samples : 1-D float sequence
        Input longer than 3*order so transients are meaningful.
    spec : BandpassSpec
        Band edges, order, and sample rate.

    Returns
    -------
    np.ndarray
        Filtered signal of equal length.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("expected a 1-D sample sequence")
    if samples.size <= 3 * spec.order:
        raise InsufficientDataError(
            f"need more than {3 * spec.order} samples for an order-{spec.order} filter")
    sos = butterworth_sos(spec.low_cut, spec.high_cut, spec.order, spec.sample_rate)
    return signal.sosfilt(sos, samples)


def cross_correlate(rx, tx) -> np.ndarray:
    """Full cross-correlation of a received stream against a template.

    Slides ``tx`` across ``rx`` and takes the inner product at every overlap
    offset. Output has len(rx) + len(tx) - 1 values and no normalization; a
    template copy starting at sample s peaks at output index s + len(tx) - 1.

    Internally FFT-accelerated (overlap-add) with the worker count capped by
    ECHO_SONAR_THREADS; output stays double precision however small the
    inputs, because downstream magnitudes accumulate far beyond integer range.
    """
    rx = np.asarray(rx, dtype=np.float64)
    tx = np.asarray(tx, dtype=np.float64)
    if rx.size == 0 or tx.size == 0:
        raise ValueError("correlation inputs must be nonempty")
    if tx.size > rx.size:
        raise ValueError("template must not be longer than the signal")
    with scipy.fft.set_workers(max_threads()):
        return signal.oaconvolve(rx, tx[::-1], mode="full")


def zscore(values, axis=None) -> np.ndarray:
    """Zero-mean unit-variance normalization; constant input maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=axis, keepdims=True)
    sd = values.std(axis=axis, keepdims=True)
    out = np.zeros_like(values)
    np.divide(values - mean, np.broadcast_to(sd, values.shape), out=out,
              where=np.broadcast_to(sd > 0, values.shape))
    return out

"""Training-time augmentation of echo windows.

Three steps in a fixed order, with one shared draw sequence applied to both
channels: a vertical (range-axis) shift with zero fill, an amplitude scale
applied with probability amp_prob, and a pair of zeroed bands (one along
time, one along range) applied with probability mask_prob. Augmentation
operates on pre-normalization values and re-normalizes afterwards, so
augmented windows honour the same z-score contract as clean ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import zscore
from .echo import EchoWindow


@dataclass(frozen=True)
class AugmentSpec:
    vertical_shift_bins: int = 5          # shift drawn uniformly from [-v, +v]
    amp_prob: float = 0.8
    amp_range: tuple[float, float] = (0.95, 1.05)
    mask_prob: float = 0.8
    time_mask_cols: tuple[int, int] = (5, 15)  # inclusive width range
    range_mask_rows: tuple[int, int] = (5, 10)
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.vertical_shift_bins < 0:
            raise ValueError("vertical_shift_bins must be >= 0")
        for name in ("amp_prob", "mask_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.amp_range[0] <= self.amp_range[1]:
            raise ValueError("amp_range must be positive and ordered")
        for name in ("time_mask_cols", "range_mask_rows"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must be an ordered range of widths >= 1")


@dataclass(frozen=True)
class AppliedAugment:
    """Record of one sampled augmentation, enough to reproduce it exactly."""

    shift: int
    amp_factor: float | None          # None: the amplitude coin came up tails
    time_mask: tuple[int, int] | None  # (start col, width)
    range_mask: tuple[int, int] | None  # (start row, height)


def sample_augment(spec: AugmentSpec, rng: np.random.Generator,
                   n_rows: int, n_cols: int) -> AppliedAugment:
    """Draw one augmentation. Draw order is part of the contract."""
    shift = int(rng.integers(-spec.vertical_shift_bins, spec.vertical_shift_bins + 1))
    amp_factor = None
    if rng.random() < spec.amp_prob:
        amp_factor = float(rng.uniform(spec.amp_range[0], spec.amp_range[1]))
    time_mask = None
    range_mask = None
    if rng.random() < spec.mask_prob:
        t_width = int(rng.integers(spec.time_mask_cols[0], spec.time_mask_cols[1] + 1))
        t_width = min(t_width, n_cols)
        t_start = int(rng.integers(0, n_cols - t_width + 1))
        r_height = int(rng.integers(spec.range_mask_rows[0], spec.range_mask_rows[1] + 1))
        r_height = min(r_height, n_rows)
        r_start = int(rng.integers(0, n_rows - r_height + 1))
        time_mask = (t_start, t_width)
        range_mask = (r_start, r_height)
    return AppliedAugment(shift=shift, amp_factor=amp_factor,
                          time_mask=time_mask, range_mask=range_mask)


def apply_augment(window: EchoWindow, applied: AppliedAugment) -> EchoWindow:
    """Apply a sampled augmentation to both channels; input is never mutated.

    The shift moves content toward larger rows for positive values, zero
    filling the vacated bins; masks zero whole bands across both channels.
    The result is re-normalized per channel.
    """
    src = window.channels
    out = np.zeros_like(src)
    s = applied.shift
    if s > 0:
        out[:, s:, :] = src[:, :-s, :]
    elif s < 0:
        out[:, :s, :] = src[:, -s:, :]
    else:
        out[:] = src
    if applied.amp_factor is not None:
        out *= applied.amp_factor
    if applied.time_mask is not None:
        start, width = applied.time_mask
        out[:, :, start:start + width] = 0.0
    if applied.range_mask is not None:
        start, height = applied.range_mask
        out[:, start:start + height, :] = 0.0
    normalized = np.stack([zscore(out[0]), zscore(out[1])])
    return EchoWindow(channels=normalized, start_frame=window.start_frame,
                      frame_duration=window.frame_duration, normalized=True)


def augment_window(window: EchoWindow, spec: AugmentSpec,
                   rng: np.random.Generator | None = None) -> EchoWindow:
    """Sample and apply one augmentation; rng defaults to spec.seed."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    applied = sample_augment(spec, rng, window.channels.shape[1], window.channels.shape[2])
    return apply_augment(window, applied)

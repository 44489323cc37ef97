"""Echo-profile construction, calibration, and windowing.

The receive chain is: bandpass the recording, lock onto the transmit frame
grid once per recording (detect_start), correlate against the chirp template
and fold the correlation into a (distance, time) matrix, difference
consecutive frames to cancel static reflections, undo per-frame timing jitter
(realign_peaks) and periodic frame drift (median_drift_filter), then crop to
the sensing range and slice into normalized model windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .chirp import ChirpSpec
from .dsp import BandpassSpec, cross_correlate, zscore
from .errors import InsufficientDataError, NoSignalError

ORIGINAL = "original"
DIFFERENTIAL = "differential"

DEFAULT_RANGE_BINS = 60      # 21.4 cm of sensing range at the default chirp
DEFAULT_WINDOW_FRAMES = 96   # 1.2 s of frames per model window
DEFAULT_REALIGN_WINDOW = 50  # frames per jitter-estimation window
DEFAULT_MAX_SHIFT = 10       # bins; larger apparent shifts are left alone
DEFAULT_MEDIAN_KERNEL = 3
RENDER_CLIP = 1e10

_CONSENSUS_BINS = 2  # window estimates this close to the recording-wide row snap to it


@dataclass(frozen=True)
class EchoProfile:
    """A (distance, time) matrix of signed correlation values.

    Row r corresponds to r * range_resolution of round-trip distance relative
    to row 0; column f is one chirp frame. ``kind`` distinguishes the raw
    correlation fold from its frame-to-frame difference.
    """

    values: np.ndarray
    frame_duration: float
    kind: str = ORIGINAL

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("profile values must be a 2-D (rows, frames) array")
        if self.kind not in (ORIGINAL, DIFFERENTIAL):
            raise ValueError(f"unknown profile kind: {self.kind!r}")
        if self.frame_duration <= 0:
            raise ValueError("frame_duration must be positive")
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AlignmentResult:
    """Where the transmit frame grid starts within a recording."""

    start_index: int
    aligned: np.ndarray


@dataclass(frozen=True)
class EchoWindow:
    """One model input: stacked original and differential crops.

    ``channels`` has shape (2, range_bins, window_frames) with channel 0 the
    original profile and channel 1 the differential; ``start_frame`` indexes
    the first column of the window within the (trimmed) profile it came from.
    """

    channels: np.ndarray
    start_frame: int
    frame_duration: float
    normalized: bool = True

    def __post_init__(self) -> None:
        c = np.asarray(self.channels, dtype=np.float64)
        if c.ndim != 3 or c.shape[0] != 2:
            raise ValueError("channels must have shape (2, range_bins, window_frames)")
        object.__setattr__(self, "channels", c)


def default_bandpass(spec: ChirpSpec | None = None, order: int = 5) -> BandpassSpec:
    """Receive-side bandpass matched to the chirp sweep."""
    spec = spec or ChirpSpec()
    return BandpassSpec(low_cut=spec.f_min, high_cut=spec.f_max, order=order,
                        sample_rate=float(spec.sample_rate))


def detect_start(rx, tx) -> AlignmentResult:
    """Lock onto the transmit frame grid within a filtered recording.

    Correlates the recording against one chirp frame, takes the strongest
    peak, and maps it to the frame phase: with L = len(tx) and p the argmax
    of the correlation magnitude, start_index = (p + L - L//2) mod L. The
    returned ``aligned`` view drops everything before start_index, which
    places the strongest (direct) path at row L//2 of the folded profile.
    """
    rx = np.asarray(rx, dtype=np.float64)
    tx = np.asarray(tx, dtype=np.float64)
    frame_len = tx.size
    if rx.size < 2 * frame_len:
        raise InsufficientDataError("need at least two chirp frames of audio to lock on")
    if not np.any(rx):
        raise NoSignalError("all-zero input, nothing to lock onto")
    corr = cross_correlate(rx, tx)
    peak = int(np.argmax(np.abs(corr)))
    start = (peak + frame_len - frame_len // 2) % frame_len
    return AlignmentResult(start_index=start, aligned=rx[start:])


def compute_echo_profile(aligned, tx, sample_rate: float = 48_000.0) -> EchoProfile:
    """Correlate an aligned stream against the chirp and fold into frames.

    The full correlation y (length len(aligned) + L - 1) is truncated to a
    whole number of frames N = len(y) // L, reshaped row-major into (N, L),
    and transposed so rows are round-trip distance and columns are time.
    """
    aligned = np.asarray(aligned, dtype=np.float64)
    tx = np.asarray(tx, dtype=np.float64)
    frame_len = tx.size
    if aligned.size == 0 or aligned.size + frame_len - 1 < frame_len:
        raise InsufficientDataError("not enough samples for a single frame")
    y = cross_correlate(aligned, tx)
    n_frames = y.size // frame_len
    folded = y[: n_frames * frame_len].reshape(n_frames, frame_len).T
    return EchoProfile(values=folded, frame_duration=frame_len / sample_rate, kind=ORIGINAL)


def differential_profile(profile: EchoProfile) -> EchoProfile:
    """Frame-to-frame magnitude difference; cancels static reflections.

    Output column f = |column f+1| - |column f| of the input, one fewer
    column overall.
    """
    if profile.kind != ORIGINAL:
        raise ValueError("differential operates on original profiles")
    if profile.n_frames < 2:
        raise InsufficientDataError("differential needs at least two frames")
    mag = np.abs(profile.values)
    return EchoProfile(values=mag[:, 1:] - mag[:, :-1],
                       frame_duration=profile.frame_duration, kind=DIFFERENTIAL)


def peak_rows(profile: EchoProfile) -> np.ndarray:
    """Per-column argmax row of the magnitude; ties go to the smaller row.

    The strongest return in each column is the direct speaker-to-mic path,
    the shortest propagation path on the device.
    """
    return np.argmax(np.abs(profile.values), axis=0)


def _lower_median(values) -> int:
    ordered = np.sort(np.asarray(values))
    return int(ordered[(ordered.size - 1) // 2])


def direct_path_row(profile: EchoProfile) -> int:
    """Recording-wide direct-path row: lower median of the per-column peaks."""
    return _lower_median(peak_rows(profile))


def realign_peaks(profile: EchoProfile,
                  window_frames: int = DEFAULT_REALIGN_WINDOW,
                  max_shift: int = DEFAULT_MAX_SHIFT,
                  deviation_threshold: int = 0) -> EchoProfile:
    """Cancel per-frame timing jitter by snapping column peaks to a common row.

    Overlapping windows of ``window_frames`` columns each estimate the
    direct-path row as the median of their per-column peak rows; an estimate
    within a couple of bins of the recording-wide consensus row is snapped to
    it, so a window whose own median wobbles under jitter cannot drag its
    columns to a wrong row, while genuinely drifted segments (farther than
    the snap radius) keep their local estimate. A column whose peak deviates
    from its window's estimate by more than ``deviation_threshold`` bins, and
    by at most ``max_shift`` bins, is rolled circularly so its peak lands on
    the estimate. Circular rolls preserve the spacing between the direct path
    and every echo within the column, so hand echoes are moved rigidly with
    the direct path, never distorted.

    Already-aligned profiles pass through bit-identical, and the correction
    is idempotent: a second application finds every peak already on its
    window's estimate.
    """
    if profile.kind != ORIGINAL:
        raise ValueError("realignment operates on original profiles")
    if window_frames < 2:
        raise ValueError("window_frames must be >= 2")
    if max_shift < 1:
        raise ValueError("max_shift must be >= 1")
    rows = peak_rows(profile)
    n = profile.n_frames
    global_row = _lower_median(rows)

    hop = max(1, window_frames // 2)
    starts = list(range(0, max(n - window_frames, 0) + 1, hop))
    if starts[-1] + window_frames < n:
        starts.append(max(n - window_frames, 0))
    estimates = []
    centers = []
    for s in starts:
        e = min(s + window_frames, n)
        est = _lower_median(rows[s:e])
        if abs(est - global_row) <= _CONSENSUS_BINS:
            est = global_row
        estimates.append(est)
        centers.append((s + e - 1) / 2.0)
    centers_arr = np.asarray(centers)

    out = np.array(profile.values, copy=True)
    for col in range(n):
        w = int(np.argmin(np.abs(centers_arr - col)))  # ties take the earlier window
        dev = estimates[w] - int(rows[col])
        if deviation_threshold < abs(dev) <= max_shift:
            out[:, col] = np.roll(out[:, col], dev)
    return EchoProfile(values=out, frame_duration=profile.frame_duration, kind=profile.kind)


def median_drift_filter(profile: EchoProfile,
                        kernel_frames: int = DEFAULT_MEDIAN_KERNEL) -> EchoProfile:
    """Running per-row median across frames; suppresses frame-drift glitches.

    Each interior value is replaced by the median of ``kernel_frames``
    consecutive frames centred on it within the same row. Near the edges the
    window shrinks symmetrically (always an odd count), so the outermost
    columns pass through unchanged. Removes isolated single-frame glitches
    and minority-duty periodic artifacts without smearing echo onsets.
    """
    if kernel_frames < 3 or kernel_frames % 2 == 0:
        raise ValueError("kernel_frames must be odd and >= 3")
    v = profile.values
    n = profile.n_frames
    half = kernel_frames // 2
    out = np.array(v, copy=True)
    if n >= kernel_frames:
        windows = sliding_window_view(v, kernel_frames, axis=1)
        out[:, half:n - half] = np.median(windows, axis=2)
        edge_cols: list[int] = list(range(half)) + list(range(n - half, n))
    else:
        edge_cols = list(range(n))
    for c in edge_cols:
        r = min(half, c, n - 1 - c)
        if r > 0:
            out[:, c] = np.median(v[:, c - r:c + r + 1], axis=1)
    return EchoProfile(values=out, frame_duration=profile.frame_duration, kind=profile.kind)


def aligned_channel_pair(profile: EchoProfile,
                         diff: EchoProfile | None = None) -> tuple[EchoProfile, EchoProfile]:
    """Trim the original profile so its columns pair with differential columns.

    Differential column f is |column f+1| - |column f| of the original, so
    the original's first frame has no differential partner; dropping it
    leaves two equal-width profiles whose column i covers the same frame.
    """
    if diff is None:
        diff = differential_profile(profile)
    if profile.n_frames != diff.n_frames + 1:
        raise ValueError("differential must have exactly one fewer frame than the original")
    trimmed = EchoProfile(values=profile.values[:, 1:],
                          frame_duration=profile.frame_duration, kind=ORIGINAL)
    return trimmed, diff


def crop_channels(orig: EchoProfile, diff: EchoProfile,
                  range_bins: int = DEFAULT_RANGE_BINS,
                  reference_row: int | None = None) -> tuple[np.ndarray, int]:
    """Crop both channels to the sensing range above the zero-distance row.

    Keeps rows [reference_row, reference_row + range_bins) of both profiles;
    ``reference_row=None`` locates the direct-path row once from the original
    channel, so row 0 of the crop is the zero-distance reference and row r
    sits r range-resolution steps from the watch. Returns the stacked crop of
    shape (2, range_bins, n_frames) and the reference row used.
    """
    if orig.n_frames != diff.n_frames:
        raise ValueError("profiles must share frame alignment; see aligned_channel_pair")
    if orig.n_rows != diff.n_rows:
        raise ValueError("profiles must share row geometry")
    if range_bins < 1:
        raise ValueError("range_bins must be >= 1")
    if reference_row is None:
        reference_row = direct_path_row(orig)
    if reference_row < 0 or reference_row + range_bins > orig.n_rows:
        raise ValueError("crop extends past the profile rows")
    crop = np.stack([orig.values[reference_row:reference_row + range_bins, :],
                     diff.values[reference_row:reference_row + range_bins, :]])
    return crop, reference_row


def window_at(crop: np.ndarray, end_col: int, window_frames: int,
              frame_duration: float, normalize: bool = True) -> EchoWindow:
    """One window of ``window_frames`` columns ending at ``end_col`` inclusive."""
    start = end_col - window_frames + 1
    if start < 0 or end_col >= crop.shape[2]:
        raise InsufficientDataError("window extends past the cropped profile")
    block = np.array(crop[:, :, start:end_col + 1], copy=True)
    if normalize:
        block = np.stack([zscore(block[0]), zscore(block[1])])
    return EchoWindow(channels=block, start_frame=start,
                      frame_duration=frame_duration, normalized=normalize)


def crop_and_window(orig: EchoProfile, diff: EchoProfile,
                    range_bins: int = DEFAULT_RANGE_BINS,
                    window_frames: int = DEFAULT_WINDOW_FRAMES,
                    stride_frames: int = 1,
                    reference_row: int | None = None,
                    normalize: bool = True) -> list[EchoWindow]:
    """Crop to the sensing range and slice into model windows.

    Windows of ``window_frames`` consecutive columns advance by
    ``stride_frames``; each channel is z-score normalized per window (mean 0,
    variance 1; all-constant channels map to zeros) unless ``normalize`` is
    off, which augmentation uses before renormalizing itself. Too few frames
    for a single window yields an empty list, not an error.
    """
    if window_frames < 1 or stride_frames < 1:
        raise ValueError("window_frames and stride_frames must be >= 1")
    crop, _ = crop_channels(orig, diff, range_bins, reference_row)
    n = crop.shape[2]
    return [window_at(crop, start + window_frames - 1, window_frames,
                      orig.frame_duration, normalize)
            for start in range(0, n - window_frames + 1, stride_frames)]


def clip_for_render(profile: EchoProfile, threshold: float = RENDER_CLIP) -> np.ndarray:
    """Clamp to [-threshold, +threshold] and map affinely onto [0, 1].

    Only the render path uses this; model inputs keep raw unclipped values.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    clipped = np.clip(profile.values, -threshold, threshold)
    return (clipped + threshold) / (2.0 * threshold)

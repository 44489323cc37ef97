"""Linear up-chirp synthesis and ranging constants.

The transmitted signal is a single chirp frame tiled back to back with the
phase restarting at every frame boundary, which is what makes the frame
arithmetic downstream (start detection mod frame_len, steady-state column
equality) exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_SOUND = 343.0     # m/s in air
DEFAULT_F_MIN = 18_000.0   # Hz, bottom of the near-ultrasonic sweep
DEFAULT_F_MAX = 21_000.0   # Hz
DEFAULT_SAMPLE_RATE = 48_000
DEFAULT_FRAME_LEN = 600    # samples per chirp frame, 12.5 ms at 48 kHz


@dataclass(frozen=True)
class ChirpSpec:
    """Parameters of one transmitted chirp frame."""

    f_min: float = DEFAULT_F_MIN
    f_max: float = DEFAULT_F_MAX
    sample_rate: int = DEFAULT_SAMPLE_RATE
    frame_len: int = DEFAULT_FRAME_LEN

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.frame_len <= 0:
            raise ValueError("frame_len must be positive")
        if not 0.0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")
        if self.f_max >= self.sample_rate / 2.0:
            raise ValueError("f_max must sit below the Nyquist frequency")

    @property
    def bandwidth(self) -> float:
        return self.f_max - self.f_min

    @property
    def duration(self) -> float:
        """Frame duration in seconds."""
        return self.frame_len / self.sample_rate


def generate_chirp(spec: ChirpSpec | None = None) -> np.ndarray:
    """One frame of a linear up-chirp with phase zero at the frame start.

    Sample n equals sin(2*pi*(f_min*t + (B/(2*T))*t^2)) with t = n/sample_rate
    and T the frame duration, so the instantaneous frequency f_min + B*t/T
    rises linearly across the frame.
    """
    spec = spec or ChirpSpec()
    t = np.arange(spec.frame_len, dtype=np.float64) / spec.sample_rate
    sweep = spec.bandwidth / (2.0 * spec.duration)
    return np.sin(2.0 * np.pi * (spec.f_min * t + sweep * t * t))


def assemble_tx_stream(spec: ChirpSpec, n_frames: int) -> np.ndarray:
    """n_frames identical chirp frames back to back."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    return np.tile(generate_chirp(spec), n_frames)


def range_resolution(sample_rate: float = DEFAULT_SAMPLE_RATE,
                     speed_of_sound: float = SPEED_OF_SOUND) -> float:
    """Distance per correlation sample with round trip folded in: C / (2*Fs).

    Resolution is set by the recording rate, not the sweep bandwidth: one
    sample of round-trip delay corresponds to C/Fs of path, half of that in
    target distance. 3.57 mm at the defaults.
    """
    return speed_of_sound / (2.0 * sample_rate)


def bandwidth_resolution(bandwidth_hz: float,
                         speed_of_sound: float = SPEED_OF_SOUND) -> float:
    """Frequency-domain ranging resolution C / (2*B), kept for comparison.

    A frequency-bin ranging scheme with a 3 kHz sweep resolves only 57.2 mm,
    an order of magnitude coarser than the correlation approach above.
    """
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return speed_of_sound / (2.0 * bandwidth_hz)


def save_chirp_wav(path, spec: ChirpSpec | None = None, n_frames: int = 1,
                   amplitude: float = 0.9) -> None:
    """Write a playable chirp stream for loudspeaker deployment."""
    from .audio import write_wav_mono

    spec = spec or ChirpSpec()
    write_wav_mono(path, amplitude * assemble_tx_stream(spec, n_frames), spec.sample_rate)

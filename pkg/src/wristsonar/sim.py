"""Airborne-sonar simulator: scenes of moving reflectors rendered to a mic.

The simulator is the package's physics oracle. A scene is a set of point
reflectors on piecewise-linear distance trajectories plus a direct
speaker-to-mic path; the rendered microphone stream is the superposition of
delayed, attenuated copies of the (optionally jittered) emission, scaled by a
device output preset, with optional in-band gaussian noise or an out-of-band
music surrogate added on top.

Conventions: distances are one-way metres from the device, echoes arrive with
round-trip delay 2*d/C on top of the direct-path delay, and echo amplitude
follows reflectivity / d^2. Per-frame timing jitter models the playback
glitches of real watches: frame m of the emission reads its samples j_m early
(positive j shifts content later within the frame).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy import fft as _fft
from scipy import signal as _signal

from .chirp import SPEED_OF_SOUND, ChirpSpec, assemble_tx_stream
from .dsp import butterworth_bandpass, butterworth_sos
from .echo import default_bandpass
from .errors import IngestionError

DEVICE_OUTPUT_DBA = {"galaxy": 61.6, "xiaomi": 66.9, "pixel": 80.8}
REFERENCE_OUTPUT_DBA = 80.8  # the loudest preset maps to unit amplitude

JITTER_MODELS = ("none", "uniform", "periodic")
NOISE_MODELS = ("none", "gaussian", "music")

MUSIC_LOWPASS_HZ = 8_000.0  # music surrogate bandwidth, far below the sweep
MUSIC_LOWPASS_ORDER = 8


@dataclass(frozen=True)
class Reflector:
    """A point reflector on a piecewise-linear distance trajectory."""

    keyframes: tuple[tuple[float, float], ...]  # (time s, one-way distance m)
    reflectivity: float = 1e-3

    def __post_init__(self) -> None:
        frames = tuple((float(t), float(d)) for t, d in self.keyframes)
        if not frames:
            raise ValueError("reflector needs at least one keyframe")
        times = [t for t, _ in frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must strictly increase")
        if any(d <= 0.0 for _, d in frames):
            raise ValueError("keyframe distances must be positive")
        if self.reflectivity <= 0.0:
            raise ValueError("reflectivity must be positive")
        object.__setattr__(self, "keyframes", frames)

    def distance_at(self, t) -> np.ndarray:
        """One-way distance at time t, clamped to the end keyframes."""
        times = np.array([k[0] for k in self.keyframes])
        dists = np.array([k[1] for k in self.keyframes])
        return np.interp(t, times, dists)


@dataclass(frozen=True)
class JitterSpec:
    """Per-frame emission timing error."""

    model: str = "none"             # none | uniform | periodic
    max_samples: int = 3            # uniform: offsets drawn from [-max, +max]
    pattern: tuple[int, ...] = (0,)  # periodic: offsets tiled across frames

    def __post_init__(self) -> None:
        if self.model not in JITTER_MODELS:
            raise ValueError(f"unknown jitter model: {self.model!r}")
        if self.model == "uniform" and self.max_samples < 1:
            raise ValueError("uniform jitter needs max_samples >= 1")
        if self.model == "periodic" and not self.pattern:
            raise ValueError("periodic jitter needs a nonempty pattern")
        object.__setattr__(self, "pattern", tuple(int(p) for p in self.pattern))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive interference at the microphone."""

    model: str = "none"    # none | gaussian | music
    snr_db: float = 30.0   # gaussian: in-band SNR relative to the signal paths
    level_db: float = 80.0  # music: playback level on the device-output dBA scale

    def __post_init__(self) -> None:
        if self.model not in NOISE_MODELS:
            raise ValueError(f"unknown noise model: {self.model!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Everything the renderer needs: paths, timing errors, interference."""

    reflectors: tuple[Reflector, ...] = ()
    duration: float = 2.0
    direct_path_delay: float = 0.0  # seconds, speaker to mic across the chassis
    direct_path_gain: float = 0.5
    jitter: JitterSpec = field(default_factory=JitterSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    output_preset: str = "pixel"

    def __post_init__(self) -> None:
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.direct_path_delay < 0.0:
            raise ValueError("direct_path_delay must be >= 0")
        if self.direct_path_gain <= 0.0:
            raise ValueError("direct_path_gain must be positive")
        if self.output_preset not in DEVICE_OUTPUT_DBA:
            raise ValueError(f"unknown output preset: {self.output_preset!r}")
        # The direct path must dominate every echo, or start detection would
        # lock onto a reflector instead of the chassis path.
        for r in self.reflectors:
            for t, d in r.keyframes:
                if r.reflectivity / d**2 >= self.direct_path_gain:
                    raise ValueError(
                        f"echo gain {r.reflectivity / d**2:.3g} at t={t:g}s reaches the "
                        f"direct-path gain {self.direct_path_gain:g}; scene is unusable")


def preset_gain(preset: str) -> float:
    """Linear emission amplitude of a device preset, 1.0 for the loudest."""
    return 10.0 ** ((DEVICE_OUTPUT_DBA[preset] - REFERENCE_OUTPUT_DBA) / 20.0)


def inject_jitter(stream: np.ndarray, jitter: JitterSpec, spec: ChirpSpec,
                  seed: int = 0) -> np.ndarray:
    """Apply per-frame timing offsets to an emission stream.

    Frame m of the output reads stream[m*L - j_m : (m+1)*L - j_m]; samples
    that fall outside the stream are zero-filled. Length is preserved.
    """
    if jitter.model == "none":
        return np.array(stream, copy=True)
    frame_len = spec.frame_len
    n_frames = stream.size // frame_len
    if jitter.model == "uniform":
        rng = np.random.default_rng([seed, 0])
        offsets = rng.integers(-jitter.max_samples, jitter.max_samples + 1, size=n_frames)
    else:
        offsets = np.resize(np.array(jitter.pattern, dtype=int), n_frames)
    out = np.zeros_like(stream)
    for m, j in enumerate(offsets):
        lo = m * frame_len - int(j)
        src_lo = max(lo, 0)
        src_hi = min(lo + frame_len, stream.size)
        if src_hi <= src_lo:
            continue
        dst_lo = m * frame_len + (src_lo - lo)
        out[dst_lo:dst_lo + (src_hi - src_lo)] = stream[src_lo:src_hi]
    # samples past the last whole frame keep their timing
    out[n_frames * frame_len:] = stream[n_frames * frame_len:]
    return out


_SINC_HALF_TAPS = 16    # windowed-sinc taps per side for time-varying delays
_SINC_BETA = 6.0        # Kaiser shape; keeps droop at the sweep band negligible
_SINC_PHASES = 128      # quantized sub-sample phases in the polyphase table


def _sinc_table() -> np.ndarray:
    """Polyphase fractional-delay filters: row q delays by q/_SINC_PHASES."""
    half = _SINC_HALF_TAPS
    frac = np.arange(_SINC_PHASES + 1, dtype=np.float64)[:, None] / _SINC_PHASES
    k = np.arange(1 - half, half + 1, dtype=np.float64)[None, :]
    x = k - frac
    u = np.clip(x / half, -1.0, 1.0)
    window = np.i0(_SINC_BETA * np.sqrt(1.0 - u * u)) / np.i0(_SINC_BETA)
    return np.sinc(x) * window


_SINC_FILTERS = _sinc_table()


def _delayed(emission: np.ndarray, delay_samples) -> np.ndarray:
    """Emission delayed by a (possibly fractional, possibly varying) amount.

    Linear interpolation would attenuate content near Nyquist (the sweep band
    sits at 0.375-0.4375 of the sample rate), so constant delays use an exact
    FFT phase shift and varying delays a Kaiser-windowed-sinc interpolator
    with sub-sample phases quantized to 1/128 of a sample.
    """
    delay = np.asarray(delay_samples, dtype=np.float64)
    if delay.ndim == 0:
        return _delayed_constant(emission, float(delay))
    if float(np.ptp(delay)) == 0.0:
        return _delayed_constant(emission, float(delay.flat[0]))
    return _delayed_varying(emission, delay)


def _delayed_constant(emission: np.ndarray, delay: float) -> np.ndarray:
    n = emission.size
    pad = int(np.ceil(abs(delay))) + 1
    m = _fft.next_fast_len(n + pad)
    spectrum = _fft.rfft(emission, m)
    cycles = np.fft.rfftfreq(m)
    out = _fft.irfft(spectrum * np.exp(-2j * np.pi * cycles * delay), m)
    return out[:n]


def _delayed_varying(emission: np.ndarray, delay: np.ndarray) -> np.ndarray:
    half = _SINC_HALF_TAPS
    n = emission.size
    pos = np.arange(n, dtype=np.float64) - delay
    base = np.floor(pos).astype(np.int64)
    phase = np.rint((pos - base) * _SINC_PHASES).astype(np.int64)
    pad = half + 1
    padded = np.concatenate([np.zeros(pad), emission, np.zeros(pad)])
    out = np.zeros(n)
    for j, k in enumerate(range(1 - half, half + 1)):
        idx = np.clip(base + k + pad, 0, padded.size - 1)
        out += _SINC_FILTERS[phase, j] * padded[idx]
    return out


def simulate(scene: SceneSpec, spec: ChirpSpec | None = None,
             duration: float | None = None, seed: int = 0) -> np.ndarray:
    """Render a scene to microphone samples.

    Deterministic for a fixed seed: jitter draws from stream (seed, 0) and
    noise from (seed, 1), so scenes differing only in reflectors share their
    jitter realization and superpose exactly.
    """
    spec = spec or ChirpSpec()
    total = scene.duration if duration is None else duration
    n_frames = int(round(total * spec.sample_rate / spec.frame_len))
    if n_frames < 2:
        raise ValueError("scene too short: need at least two chirp frames")
    emission = inject_jitter(assemble_tx_stream(spec, n_frames), scene.jitter, spec, seed)
    n = emission.size
    t = np.arange(n, dtype=np.float64) / spec.sample_rate

    direct_delay = scene.direct_path_delay * spec.sample_rate
    mic = scene.direct_path_gain * _delayed(emission, direct_delay)
    for r in scene.reflectors:
        d = r.distance_at(t)
        delay = direct_delay + 2.0 * d * spec.sample_rate / SPEED_OF_SOUND
        mic = mic + (r.reflectivity / d**2) * _delayed(emission, delay)
    mic *= preset_gain(scene.output_preset)

    noise = _render_noise(scene, spec, n, signal_rms=float(np.sqrt(np.mean(mic**2))), seed=seed)
    if noise is not None:
        mic = mic + noise
    return mic


def _render_noise(scene: SceneSpec, spec: ChirpSpec, n: int,
                  signal_rms: float, seed: int) -> np.ndarray | None:
    kind = scene.noise.model
    if kind == "none":
        return None
    rng = np.random.default_rng([seed, 1])
    white = rng.standard_normal(n)
    if kind == "gaussian":
        # in-band noise: white shaped by the receive bandpass, RMS set by SNR
        shaped = butterworth_bandpass(white, default_bandpass(spec))
        target = signal_rms * 10.0 ** (-scene.noise.snr_db / 20.0)
        return shaped * (target / float(np.sqrt(np.mean(shaped**2))))
    # music surrogate: broadband content far below the sweep band, level on
    # the same dBA scale as the device presets (loudest preset = signal RMS)
    sos = butterworth_sos(None, MUSIC_LOWPASS_HZ, MUSIC_LOWPASS_ORDER, spec.sample_rate)
    shaped = _signal.sosfilt(sos, white)
    shaped = shaped / float(np.sqrt(np.mean(shaped**2)))
    amp = signal_rms * 10.0 ** ((scene.noise.level_db - REFERENCE_OUTPUT_DBA) / 20.0)
    return shaped * amp


# --- hand-shaped scenes -------------------------------------------------

# Landmarks that matter acoustically: the five fingertips plus the mid-point
# of each finger's middle segment (for the thumb, the segment between its
# second and third landmarks). Ten point reflectors per hand.
_TIP_LANDMARKS = (4, 8, 12, 16, 20)
_SEGMENT_PAIRS = ((2, 3), (6, 7), (10, 11), (14, 15), (18, 19))


@dataclass(frozen=True)
class HandGeometry:
    """How a pose maps to reflectors around the watch."""

    watch_offset: tuple[float, float, float] = (-0.015, 0.0, 0.01)  # m, behind the wrist
    tip_reflectivity: float = 4e-4
    segment_reflectivity: float = 6e-4


def _hand_distances(landmarks: np.ndarray, geometry: HandGeometry) -> list[tuple[float, float]]:
    watch = np.asarray(geometry.watch_offset, dtype=np.float64)
    out = []
    for idx in _TIP_LANDMARKS:
        out.append((float(np.linalg.norm(landmarks[idx] - watch)), geometry.tip_reflectivity))
    for a, b in _SEGMENT_PAIRS:
        mid = 0.5 * (landmarks[a] + landmarks[b])
        out.append((float(np.linalg.norm(mid - watch)), geometry.segment_reflectivity))
    return out


def hand_scene_from_pose(pose, geometry: HandGeometry | None = None,
                         **scene_kwargs) -> SceneSpec:
    """Static scene whose ten reflectors sit where a hand's fingers would.

    ``pose`` carries wrist-origin landmark positions in metres; fingertips
    and mid-segments become point reflectors at their straight-line distance
    from the watch position on the wrist.
    """
    geometry = geometry or HandGeometry()
    reflectors = tuple(
        Reflector(keyframes=((0.0, d),), reflectivity=rho)
        for d, rho in _hand_distances(np.asarray(pose.landmarks, dtype=np.float64), geometry))
    return SceneSpec(reflectors=reflectors, **scene_kwargs)


def hand_scene_from_pose_stream(poses, timestamps, geometry: HandGeometry | None = None,
                                **scene_kwargs) -> SceneSpec:
    """Moving scene tracking a pose stream: keyframes at each pose timestamp."""
    geometry = geometry or HandGeometry()
    poses = list(poses)
    times = [float(t) for t in timestamps]
    if len(poses) != len(times) or not poses:
        raise ValueError("need equally many poses and timestamps, at least one")
    per_reflector: list[list[tuple[float, float]]] = [[] for _ in range(10)]
    reflectivities = None
    for pose, t in zip(poses, times):
        dists = _hand_distances(np.asarray(pose.landmarks, dtype=np.float64), geometry)
        reflectivities = [rho for _, rho in dists]
        for i, (d, _) in enumerate(dists):
            per_reflector[i].append((t, d))
    reflectors = tuple(
        Reflector(keyframes=tuple(frames), reflectivity=rho)
        for frames, rho in zip(per_reflector, reflectivities))
    if "duration" not in scene_kwargs:
        scene_kwargs["duration"] = times[-1] + 0.1
    return SceneSpec(reflectors=reflectors, **scene_kwargs)


# --- scene files ---------------------------------------------------------

def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "duration": scene.duration,
        "direct_path_delay": scene.direct_path_delay,
        "direct_path_gain": scene.direct_path_gain,
        "output_preset": scene.output_preset,
        "jitter": {"model": scene.jitter.model,
                   "max_samples": scene.jitter.max_samples,
                   "pattern": list(scene.jitter.pattern)},
        "noise": {"model": scene.noise.model,
                  "snr_db": scene.noise.snr_db,
                  "level_db": scene.noise.level_db},
        "reflectors": [{"reflectivity": r.reflectivity,
                        "keyframes": [[t, d] for t, d in r.keyframes]}
                       for r in scene.reflectors],
    }


def scene_from_dict(data: dict) -> SceneSpec:
    try:
        jitter = JitterSpec(**{k: (tuple(v) if k == "pattern" else v)
                               for k, v in data.get("jitter", {}).items()})
        noise = NoiseSpec(**data.get("noise", {}))
        reflectors = tuple(
            Reflector(keyframes=tuple((float(t), float(d)) for t, d in r["keyframes"]),
                      reflectivity=float(r.get("reflectivity", 1e-3)))
            for r in data.get("reflectors", []))
        return SceneSpec(
            reflectors=reflectors,
            duration=float(data.get("duration", 2.0)),
            direct_path_delay=float(data.get("direct_path_delay", 0.0)),
            direct_path_gain=float(data.get("direct_path_gain", 0.5)),
            jitter=jitter, noise=noise,
            output_preset=data.get("output_preset", "pixel"))
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"bad scene description: {exc}") from exc


def save_scene(path, scene: SceneSpec) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(scene), fh, sort_keys=False)


def load_scene(path) -> SceneSpec:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise IngestionError(f"{path}: bad YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise IngestionError(f"{path}: expected a mapping at top level")
    return scene_from_dict(data)

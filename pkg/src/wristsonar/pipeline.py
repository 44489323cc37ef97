"""Dataset model, session processing, pairing, splits, and estimators.

A recording session is described by a manifest (device, hand, posture,
condition, file paths). Processing a session runs the echo chain over its
audio, expands IMU channels when present, normalizes the ground-truth poses,
and pairs every pose frame that has a full window of history with the echo
(and IMU) window ending at its timestamp. Splits operate on manifests, so
train/test membership is decided before any audio is touched.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import yaml

from . import imu as imu_mod
from .audio import read_wav_mono
from .chirp import ChirpSpec, generate_chirp
from .dsp import butterworth_bandpass
from .echo import (DEFAULT_MEDIAN_KERNEL, DEFAULT_RANGE_BINS, DEFAULT_WINDOW_FRAMES,
                   EchoWindow, aligned_channel_pair, compute_echo_profile, crop_channels,
                   default_bandpass, detect_start, median_drift_filter, realign_peaks,
                   window_at)
from .errors import IngestionError, PairingError, SplitError
from .pose import (FINGER_LANDMARKS, FINGER_ORDER, HandPose, PoseNormalization,
                   joint_bend_angles, load_pose_stream, mpjpe_mm, mwae_deg, normalize_pose)

log = logging.getLogger(__name__)

DEVICES = ("galaxy", "xiaomi", "pixel", "synthetic")
HANDS = ("left", "right")
POSTURES = ("sitting", "watch_raised", "arm_resting")
CONDITIONS = ("baseline", "music", "nearby", "walking", "altered")
SPLIT_PROTOCOLS = ("within_session", "cross_session", "cross_user")

# native IMU rates per device, Hz; used when a manifest does not override
DEVICE_IMU_RATE = {"galaxy": 100.0, "xiaomi": 50.0, "pixel": 200.0, "synthetic": 100.0}

# devices whose playback clock wanders within frames vs. across frames
MISALIGNMENT_PRONE = ("xiaomi", "pixel")
DRIFT_PRONE = ("galaxy",)


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    user_id: str
    device: str
    hand: str
    posture: str
    condition: str
    audio_path: str
    pose_path: str
    imu_path: str | None = None
    imu_rate: float | None = None
    wrist_to_little_mcp: float | None = None  # per-user hand scale override
    source_path: str | None = None

    def __post_init__(self) -> None:
        for name, value, allowed in (("device", self.device, DEVICES),
                                     ("hand", self.hand, HANDS),
                                     ("posture", self.posture, POSTURES),
                                     ("condition", self.condition, CONDITIONS)):
            if value not in allowed:
                raise IngestionError(f"manifest {name} {value!r} not one of {allowed}")


@dataclass(frozen=True)
class PairedSample:
    """One model input/target pair at a pose timestamp."""

    echo_window: EchoWindow
    pose: HandPose  # normalized ground truth
    timestamp: float
    imu_window: imu_mod.ImuWindow | None = None


@dataclass(frozen=True)
class PairedSession:
    manifest: SessionManifest
    samples: tuple[PairedSample, ...]
    preprocess_ms: np.ndarray  # per-sample echo preprocessing cost

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "preprocess_ms",
                           np.asarray(self.preprocess_ms, dtype=np.float64))


def load_manifest(path) -> SessionManifest:
    """Read a YAML session manifest; paths resolve relative to the file."""
    import os

    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise IngestionError(f"{path}: bad YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise IngestionError(f"{path}: expected a mapping at top level")
    required = ("session_id", "user_id", "device", "hand", "posture", "condition",
                "audio_path", "pose_path")
    missing = [k for k in required if k not in data]
    if missing:
        raise IngestionError(f"{path}: missing fields {missing}")
    base = os.path.dirname(os.path.abspath(str(path)))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    manifest = SessionManifest(
        session_id=str(data["session_id"]),
        user_id=str(data["user_id"]),
        device=str(data["device"]),
        hand=str(data["hand"]),
        posture=str(data["posture"]),
        condition=str(data["condition"]),
        audio_path=resolve(str(data["audio_path"])),
        pose_path=resolve(str(data["pose_path"])),
        imu_path=resolve(data.get("imu_path")),
        imu_rate=(float(data["imu_rate"]) if data.get("imu_rate") is not None else None),
        wrist_to_little_mcp=(float(data["wrist_to_little_mcp"])
                             if data.get("wrist_to_little_mcp") is not None else None),
        source_path=str(path),
    )
    for label, p in (("audio_path", manifest.audio_path), ("pose_path", manifest.pose_path),
                     ("imu_path", manifest.imu_path)):
        if p is not None and not os.path.exists(p):
            raise IngestionError(f"{path}: {label} does not exist: {p}")
    return manifest


def pair_samples(manifest: SessionManifest, chirp_spec: ChirpSpec | None = None,
                 range_bins: int = DEFAULT_RANGE_BINS,
                 window_frames: int = DEFAULT_WINDOW_FRAMES,
                 normalization: PoseNormalization | None = None,
                 realign: bool = True, median_kernel: int = DEFAULT_MEDIAN_KERNEL,
                 normalize_windows: bool = True) -> PairedSession:
    """Process one session end to end and pair pose frames with windows.

    Every pose frame whose timestamp leaves a full window of audio history
    gets the echo window whose end time is nearest to it; the profile frame
    grid is 600 samples at 48 kHz, so the nearest window end is always within
    half a frame (6.25 ms) of the pose timestamp. Pose frames before the
    first full window or past the audio are skipped; if nothing pairs at all
    the clocks do not overlap and a PairingError is raised.
    """
    spec = chirp_spec or ChirpSpec()
    if manifest.device in MISALIGNMENT_PRONE:
        log.info("device %s is misalignment-prone: peak realignment will carry "
                 "the calibration load", manifest.device)
    elif manifest.device in DRIFT_PRONE:
        log.info("device %s is drift-prone: the median drift filter will carry "
                 "the calibration load", manifest.device)

    samples, rate = read_wav_mono(manifest.audio_path)
    if rate != spec.sample_rate:
        raise IngestionError(f"{manifest.audio_path}: sample rate {rate} does not match "
                             f"the chirp spec ({spec.sample_rate})")
    tx = generate_chirp(spec)
    frame_len = spec.frame_len

    t0 = time.perf_counter()
    filtered = butterworth_bandpass(samples, default_bandpass(spec))
    t1 = time.perf_counter()
    alignment = detect_start(filtered, tx)
    profile = compute_echo_profile(alignment.aligned, tx, rate)
    t2 = time.perf_counter()
    calibrated = realign_peaks(profile) if realign else profile
    if median_kernel:
        calibrated = median_drift_filter(calibrated, median_kernel)
    orig, diff = aligned_channel_pair(calibrated)
    crop, _ = crop_channels(orig, diff, range_bins)
    t3 = time.perf_counter()
    shared_s = t3 - t0

    timestamps, poses = load_pose_stream(manifest.pose_path)
    params = normalization or PoseNormalization(
        wrist_to_little_mcp=manifest.wrist_to_little_mcp or 0.095)

    imu_expanded = None
    imu_rate = None
    if manifest.imu_path is not None:
        imu_rate = manifest.imu_rate or DEVICE_IMU_RATE[manifest.device]
        raw_t, raw_v = imu_mod.read_imu_file(manifest.imu_path)
        _, resampled = imu_mod.resample_imu(raw_t, raw_v, imu_rate)
        imu_expanded = imu_mod.expand_bands(resampled, imu_rate)

    n_cols = crop.shape[2]
    paired = []
    window_s = []
    for t, pose in zip(timestamps, poses):
        # trimmed profile column e ends at recording sample start + (e+2)*L
        end_col = int(round((t * rate - alignment.start_index) / frame_len - 2.0))
        if end_col < window_frames - 1 or end_col >= n_cols:
            continue
        w0 = time.perf_counter()
        window = window_at(crop, end_col, window_frames, orig.frame_duration,
                           normalize=normalize_windows)
        window_s.append(time.perf_counter() - w0)
        imu_window = None
        if imu_expanded is not None:
            imu_window = imu_mod.window_ending_at(imu_expanded, imu_rate,
                                                  int(round(t * imu_rate)))
        paired.append(PairedSample(echo_window=window, pose=normalize_pose(pose, params),
                                   timestamp=float(t), imu_window=imu_window))
    if not paired:
        raise PairingError(f"{manifest.session_id}: no pose frame pairs with the audio; "
                           "clocks do not overlap")
    shared_ms = shared_s * 1000.0 / len(paired)
    per_sample_ms = np.array([shared_ms + w * 1000.0 for w in window_s])
    return PairedSession(manifest=manifest, samples=tuple(paired),
                         preprocess_ms=per_sample_ms)


# --- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    protocol: str
    holdout: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.protocol not in SPLIT_PROTOCOLS:
            raise ValueError(f"unknown split protocol: {self.protocol!r}")
        object.__setattr__(self, "holdout", tuple(self.holdout))


@dataclass(frozen=True)
class SessionSelection:
    """A manifest plus the fraction of its (chronological) samples to use."""

    manifest: SessionManifest
    fraction: tuple[float, float] = (0.0, 1.0)


def split(manifests, spec: SplitSpec) -> tuple[list[SessionSelection], list[SessionSelection]]:
    """Train/test membership for the three evaluation protocols.

    cross_session: per user, every session but the last (by session_id order)
    trains; the final session tests. within_session: per user, all but the
    final two sessions train in full, and each of the final two contributes
    its first half to training and its second half to testing. cross_user:
    the holdout users' sessions all test; everyone else trains.
    """
    manifests = list(manifests)
    if not manifests:
        raise SplitError("no manifests to split")
    by_user: dict[str, list[SessionManifest]] = {}
    for m in manifests:
        by_user.setdefault(m.user_id, []).append(m)
    for user in by_user:
        by_user[user] = sorted(by_user[user], key=lambda m: m.session_id)

    train: list[SessionSelection] = []
    test: list[SessionSelection] = []
    if spec.protocol == "cross_session":
        for user in sorted(by_user):
            sessions = by_user[user]
            if len(sessions) < 2:
                raise SplitError(f"user {user} has {len(sessions)} session(s); "
                                 "cross_session needs at least 2")
            train.extend(SessionSelection(m) for m in sessions[:-1])
            test.append(SessionSelection(sessions[-1]))
    elif spec.protocol == "within_session":
        for user in sorted(by_user):
            sessions = by_user[user]
            if len(sessions) < 3:
                raise SplitError(f"user {user} has {len(sessions)} session(s); "
                                 "within_session needs at least 3")
            train.extend(SessionSelection(m) for m in sessions[:-2])
            for m in sessions[-2:]:
                train.append(SessionSelection(m, (0.0, 0.5)))
                test.append(SessionSelection(m, (0.5, 1.0)))
    else:  # cross_user
        holdout = set(spec.holdout)
        if not holdout:
            raise SplitError("cross_user needs at least one holdout user id")
        missing = holdout - set(by_user)
        if missing:
            raise SplitError(f"holdout users not in the dataset: {sorted(missing)}")
        if not set(by_user) - holdout:
            raise SplitError("cross_user would leave no training users")
        for user in sorted(by_user):
            bucket = test if user in holdout else train
            bucket.extend(SessionSelection(m) for m in by_user[user])
    return train, test


def select_samples(selection: SessionSelection, samples) -> list:
    """The chronological slice of a session's samples a selection covers."""
    samples = list(samples)
    n = len(samples)
    lo = math.floor(selection.fraction[0] * n)
    hi = math.floor(selection.fraction[1] * n)
    return samples[lo:hi]


# --- estimators ---------------------------------------------------------

class KnnEstimator:
    """Distance-weighted k-nearest-neighbour lookup in echo-window space.

    Keys are flattened normalized windows under Euclidean distance; the
    prediction averages the k nearest training poses with 1/distance weights.
    A query that exactly matches training windows returns the average of the
    exact matches.
    """

    kind = "knn"

    def __init__(self, keys: np.ndarray, poses: np.ndarray, k: int):
        keys = np.asarray(keys, dtype=np.float64)
        poses = np.asarray(poses, dtype=np.float64)
        if keys.ndim != 2 or poses.ndim != 3 or keys.shape[0] != poses.shape[0]:
            raise ValueError("keys (n, d) and poses (n, 21, 3) must align")
        if not 1 <= k <= keys.shape[0]:
            raise ValueError(f"k must lie in [1, {keys.shape[0]}]")
        self.keys = keys
        self.poses = poses
        self.k = int(k)

    def predict(self, window: EchoWindow) -> HandPose:
        x = np.asarray(window.channels, dtype=np.float64).reshape(-1)
        if x.size != self.keys.shape[1]:
            raise ValueError("query window shape does not match the training windows")
        d2 = np.einsum("nd,nd->n", self.keys - x, self.keys - x)
        order = np.argsort(d2, kind="stable")[: self.k]
        dists = np.sqrt(np.maximum(d2[order], 0.0))
        if dists[0] == 0.0:
            exact = order[dists == 0.0]
            return HandPose(self.poses[exact].mean(axis=0))
        weights = 1.0 / dists
        blended = (self.poses[order] * weights[:, None, None]).sum(axis=0) / weights.sum()
        return HandPose(blended)


class MeanPoseEstimator:
    """Baseline that always predicts the mean training pose."""

    kind = "mean"

    def __init__(self, pose: np.ndarray):
        self.pose = np.asarray(pose, dtype=np.float64)

    def predict(self, window: EchoWindow) -> HandPose:
        return HandPose(self.pose)


def _stack_training(samples) -> tuple[np.ndarray, np.ndarray]:
    samples = list(samples)
    if not samples:
        raise ValueError("training set is empty")
    keys = np.stack([s.echo_window.channels.reshape(-1) for s in samples])
    poses = np.stack([s.pose.landmarks for s in samples])
    return keys, poses


def fit_knn_estimator(train, k: int = 3) -> KnnEstimator:
    keys, poses = _stack_training(train)
    return KnnEstimator(keys, poses, k)


def fit_mean_estimator(train) -> MeanPoseEstimator:
    _, poses = _stack_training(train)
    return MeanPoseEstimator(poses.mean(axis=0))


def save_estimator(path, estimator) -> None:
    if estimator.kind == "knn":
        np.savez(path, kind="knn", keys=estimator.keys, poses=estimator.poses,
                 k=estimator.k)
    elif estimator.kind == "mean":
        np.savez(path, kind="mean", pose=estimator.pose)
    else:
        raise ValueError(f"unknown estimator kind: {estimator.kind!r}")


def load_estimator(path):
    with np.load(path, allow_pickle=False) as data:
        kind = str(data["kind"])
        if kind == "knn":
            return KnnEstimator(data["keys"], data["poses"], int(data["k"]))
        if kind == "mean":
            return MeanPoseEstimator(data["pose"])
    raise IngestionError(f"{path}: unknown estimator kind {kind!r}")


# --- evaluation -----------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    mpjpe_mm: float
    mpjae_deg: float
    mwae_deg: float
    per_finger: dict
    preprocess_ms_mean: float
    preprocess_ms_sd: float
    n_samples: int


def evaluate(estimator, samples, preprocess_ms=None) -> EvalReport:
    """Aggregate pose metrics for an estimator over paired samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot evaluate on an empty sample set")
    finger_idx = {f: np.array(FINGER_LANDMARKS[f]) for f in FINGER_ORDER}
    pos_errors = []
    ang_errors = []
    wrist_errors = []
    finger_pos = {f: [] for f in FINGER_ORDER}
    finger_ang = {f: [] for f in FINGER_ORDER}
    for s in samples:
        pred = estimator.predict(s.echo_window)
        gt = s.pose
        pos_errors.append(mpjpe_mm(pred, gt))
        angles_pred = joint_bend_angles(pred)
        angles_gt = joint_bend_angles(gt)
        ang_errors.append(float(np.mean(np.abs(angles_pred - angles_gt))))
        wrist_errors.append(mwae_deg(pred, gt))
        per_joint_mm = np.linalg.norm(pred.landmarks - gt.landmarks, axis=1) * 1000.0
        for i, f in enumerate(FINGER_ORDER):
            finger_pos[f].append(float(np.mean(per_joint_mm[finger_idx[f]])))
            finger_ang[f].append(float(np.mean(np.abs(
                angles_pred[3 * i:3 * i + 3] - angles_gt[3 * i:3 * i + 3]))))
    ms = np.asarray(preprocess_ms if preprocess_ms is not None else [], dtype=np.float64)
    per_finger = {f: {"mpjpe_mm": float(np.mean(finger_pos[f])),
                      "mpjae_deg": float(np.mean(finger_ang[f]))}
                  for f in FINGER_ORDER}
    return EvalReport(
        mpjpe_mm=float(np.mean(pos_errors)),
        mpjae_deg=float(np.mean(ang_errors)),
        mwae_deg=float(np.mean(wrist_errors)),
        per_finger=per_finger,
        preprocess_ms_mean=float(ms.mean()) if ms.size else 0.0,
        preprocess_ms_sd=float(ms.std()) if ms.size else 0.0,
        n_samples=len(samples),
    )


def report_to_text(report: EvalReport) -> str:
    """Flat 'key: value' lines; floats are repr'd so round-trips are lossless."""
    lines = [
        f"mpjpe_mm: {report.mpjpe_mm!r}",
        f"mpjae_deg: {report.mpjae_deg!r}",
        f"mwae_deg: {report.mwae_deg!r}",
    ]
    for f in FINGER_ORDER:
        for metric in ("mpjpe_mm", "mpjae_deg"):
            lines.append(f"per_finger.{f}.{metric}: {report.per_finger[f][metric]!r}")
    lines.append(f"preprocess_ms.mean: {report.preprocess_ms_mean!r}")
    lines.append(f"preprocess_ms.sd: {report.preprocess_ms_sd!r}")
    lines.append(f"n_samples: {report.n_samples}")
    return "\n".join(lines) + "\n"


def report_from_text(text: str) -> EvalReport:
    values: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(":")
        values[key.strip()] = value.strip()
    try:
        per_finger = {f: {m: float(values[f"per_finger.{f}.{m}"])
                          for m in ("mpjpe_mm", "mpjae_deg")}
                      for f in FINGER_ORDER}
        return EvalReport(
            mpjpe_mm=float(values["mpjpe_mm"]),
            mpjae_deg=float(values["mpjae_deg"]),
            mwae_deg=float(values["mwae_deg"]),
            per_finger=per_finger,
            preprocess_ms_mean=float(values["preprocess_ms.mean"]),
            preprocess_ms_sd=float(values["preprocess_ms.sd"]),
            n_samples=int(values["n_samples"]),
        )
    except KeyError as exc:
        raise IngestionError(f"report is missing field {exc}") from exc


# --- paired-session shards ----------------------------------------------

def save_paired_session(path, session: PairedSession) -> None:
    """Persist a paired session as an .npz shard.

    Windows stack to (n, 2, bins, frames); IMU windows are stored only when
    every sample has one (sessions without IMU simply omit the arrays).
    """
    samples = session.samples
    payload: dict[str, object] = {
        "windows": np.stack([s.echo_window.channels for s in samples]),
        "start_frames": np.array([s.echo_window.start_frame for s in samples]),
        "normalized": np.array([s.echo_window.normalized for s in samples]),
        "frame_duration": np.array(samples[0].echo_window.frame_duration),
        "poses": np.stack([s.pose.landmarks for s in samples]),
        "timestamps": np.array([s.timestamp for s in samples]),
        "preprocess_ms": session.preprocess_ms,
        "session_id": np.array(session.manifest.session_id),
        "user_id": np.array(session.manifest.user_id),
        "device": np.array(session.manifest.device),
        "hand": np.array(session.manifest.hand),
        "posture": np.array(session.manifest.posture),
        "condition": np.array(session.manifest.condition),
    }
    if all(s.imu_window is not None for s in samples):
        payload["imu_values"] = np.stack([s.imu_window.values for s in samples])
        payload["imu_end_samples"] = np.array([s.imu_window.end_sample for s in samples])
        payload["imu_rate"] = np.array(samples[0].imu_window.sample_rate)
    np.savez(path, **payload)


def load_paired_session(path) -> PairedSession:
    with np.load(path, allow_pickle=False) as data:
        manifest = SessionManifest(
            session_id=str(data["session_id"]),
            user_id=str(data["user_id"]),
            device=str(data["device"]),
            hand=str(data["hand"]),
            posture=str(data["posture"]),
            condition=str(data["condition"]),
            audio_path="", pose_path="",
            source_path=str(path),
        )
        windows = data["windows"]
        poses = data["poses"]
        timestamps = data["timestamps"]
        start_frames = data["start_frames"]
        normalized = data["normalized"]
        frame_duration = float(data["frame_duration"])
        preprocess_ms = data["preprocess_ms"]
        imu_values = data["imu_values"] if "imu_values" in data else None
        imu_ends = data["imu_end_samples"] if "imu_values" in data else None
        imu_rate = float(data["imu_rate"]) if "imu_values" in data else None
    samples = []
    for i in range(windows.shape[0]):
        imu_window = None
        if imu_values is not None:
            imu_window = imu_mod.ImuWindow(values=imu_values[i],
                                           end_sample=int(imu_ends[i]),
                                           sample_rate=imu_rate)
        samples.append(PairedSample(
            echo_window=EchoWindow(channels=windows[i], start_frame=int(start_frames[i]),
                                   frame_duration=frame_duration,
                                   normalized=bool(normalized[i])),
            pose=HandPose(poses[i]), timestamp=float(timestamps[i]),
            imu_window=imu_window))
    return PairedSession(manifest=manifest, samples=tuple(samples),
                         preprocess_ms=preprocess_ms)

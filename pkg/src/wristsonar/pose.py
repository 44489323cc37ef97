"""Hand-pose representation, normalization, metrics, and synthetic hands.

Landmark layout (21 points): index 0 is the wrist; each finger contributes
four points root-to-tip. Thumb 1-4, index 5-8, middle 9-12, ring 13-16,
little 17-20. Coordinates are metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePoseError, IngestionError

WRIST = 0
FINGER_ORDER = ("thumb", "index", "middle", "ring", "little")
FINGER_LANDMARKS = {
    "thumb": (1, 2, 3, 4),
    "index": (5, 6, 7, 8),
    "middle": (9, 10, 11, 12),
    "ring": (13, 14, 15, 16),
    "little": (17, 18, 19, 20),
}
INDEX_MCP = 5
LITTLE_MCP = 17

# (parent, joint, child) triples with a bend angle: three per finger, the
# wrist-adjacent root joint included via the wrist as its parent.
INTERIOR_JOINTS = tuple(
    (chain[i - 1], chain[i], chain[i + 1])
    for chain in ((WRIST,) + FINGER_LANDMARKS[f] for f in FINGER_ORDER)
    for i in range(1, 4)
)

N_LANDMARKS = 21
_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class HandPose:
    """21 landmark positions, shape (21, 3), metres."""

    landmarks: np.ndarray

    def __post_init__(self) -> None:
        lm = np.asarray(self.landmarks, dtype=np.float64)
        if lm.shape != (N_LANDMARKS, 3):
            raise ValueError(f"landmarks must have shape (21, 3), got {lm.shape}")
        if not np.all(np.isfinite(lm)):
            raise ValueError("landmarks must be finite")
        object.__setattr__(self, "landmarks", lm)


@dataclass(frozen=True, eq=False)
class PoseNormalization:
    """Canonical frame and hand scale that ground-truth poses are mapped to.

    ``reference_frame`` is the palm frame every pose is rotated into (columns
    are the target directions of the palm axes; orthonormal, det +1);
    ``wrist_to_little_mcp`` is the wrist-to-little-finger-root length every
    hand is scaled to, which removes per-user hand size.
    """

    reference_frame: np.ndarray = field(default_factory=lambda: np.eye(3))
    wrist_to_little_mcp: float = 0.095  # metres

    def __post_init__(self) -> None:
        frame = np.asarray(self.reference_frame, dtype=np.float64)
        if frame.shape != (3, 3):
            raise ValueError("reference_frame must be 3x3")
        if not np.allclose(frame @ frame.T, np.eye(3), atol=1e-9):
            raise ValueError("reference_frame must be orthonormal")
        if np.linalg.det(frame) < 0.0:
            raise ValueError("reference_frame must be right-handed (det +1)")
        if self.wrist_to_little_mcp <= 0.0:
            raise ValueError("wrist_to_little_mcp must be positive")
        object.__setattr__(self, "reference_frame", frame)


@dataclass(frozen=True)
class LossSpec:
    """Training-loss weights."""

    velocity_weight: float = 0.1


def to_wrist_relative(pose: HandPose) -> np.ndarray:
    """Landmarks translated so the wrist sits at the origin."""
    lm = pose.landmarks
    return lm - lm[WRIST]


def palm_frame(pose: HandPose) -> np.ndarray:
    """Orthonormal palm frame, columns (u, v, n).

    u points from the wrist toward the index-finger root, n is the palm
    normal (u crossed with the wrist-to-little-root direction), and v
    completes the right-handed frame. Collinear or coincident landmarks leave
    no plane to work with and raise DegeneratePoseError.
    """
    lm = pose.landmarks
    u = lm[INDEX_MCP] - lm[WRIST]
    w = lm[LITTLE_MCP] - lm[WRIST]
    nu = float(np.linalg.norm(u))
    if nu < _EPS:
        raise DegeneratePoseError("wrist and index root coincide")
    u = u / nu
    n = np.cross(u, w)
    nn = float(np.linalg.norm(n))
    if nn < _EPS:
        raise DegeneratePoseError("wrist, index root, and little root are collinear")
    n = n / nn
    v = np.cross(n, u)
    return np.column_stack([u, v, n])


def normalize_pose(pose: HandPose, params: PoseNormalization | None = None) -> HandPose:
    """Map a pose to the canonical wrist-origin frame and hand scale.

    Translates the wrist to the origin, rotates the whole hand so its palm
    frame coincides with the reference frame (full-frame alignment; nothing
    else about wrist orientation is canonicalized), and scales uniformly so
    the wrist-to-little-root length matches the configured value. The result
    is invariant to any rigid motion or uniform scaling of the input, and
    normalizing twice equals normalizing once.
    """
    params = params or PoseNormalization()
    rel = to_wrist_relative(pose)
    frame = palm_frame(pose)
    rotation = params.reference_frame @ frame.T
    rotated = rel @ rotation.T
    length = float(np.linalg.norm(rotated[LITTLE_MCP]))
    if length < _EPS:
        raise DegeneratePoseError("wrist and little root coincide")
    return HandPose(rotated * (params.wrist_to_little_mcp / length))


# --- metrics --------------------------------------------------------------

def mpjpe_mm(pred: HandPose, gt: HandPose) -> float:
    """Mean per-joint position error over the 20 non-wrist landmarks, mm."""
    diff = pred.landmarks[1:] - gt.landmarks[1:]
    return float(np.mean(np.linalg.norm(diff, axis=1))) * 1000.0


def joint_bend_angles(pose: HandPose, joints=INTERIOR_JOINTS) -> np.ndarray:
    """Bend angle at each interior joint, degrees.

    The bend is the angle between the bone arriving at the joint
    (parent -> joint) and the bone leaving it (joint -> child); 0 means the
    finger is straight there.
    """
    lm = pose.landmarks
    out = np.empty(len(joints))
    for i, (parent, joint, child) in enumerate(joints):
        b1 = lm[joint] - lm[parent]
        b2 = lm[child] - lm[joint]
        n1 = float(np.linalg.norm(b1))
        n2 = float(np.linalg.norm(b2))
        if n1 < _EPS or n2 < _EPS:
            raise DegeneratePoseError("zero-length bone at joint "
                                      f"{joint} (parent {parent}, child {child})")
        cosang = float(np.dot(b1, b2)) / (n1 * n2)
        out[i] = math.degrees(math.acos(max(-1.0, min(1.0, cosang))))
    return out


def mpjae_deg(pred: HandPose, gt: HandPose) -> float:
    """Mean absolute bend-angle difference over the 15 interior joints."""
    return float(np.mean(np.abs(joint_bend_angles(pred) - joint_bend_angles(gt))))


def mwae_deg(pred: HandPose, gt: HandPose) -> float:
    """Wrist-orientation error: geodesic angle between palm frames, degrees."""
    m = palm_frame(pred) @ palm_frame(gt).T
    cosang = (float(np.trace(m)) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, cosang))))


def composite_loss(pred_frames, gt_frames, spec: LossSpec | None = None) -> float:
    """Position MSE plus weighted velocity MSE over non-wrist coordinates.

    Both arguments are sequences of HandPose (or arrays shaped (n, 21, 3))
    covering the same frames. The position term is the mean squared
    coordinate error over the 60 non-wrist coordinates of every frame; the
    velocity term applies the same mean to frame-to-frame differences and is
    zero for a single frame.
    """
    spec = spec or LossSpec()
    pred = _frames_array(pred_frames)
    gt = _frames_array(gt_frames)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth must cover the same frames")
    p = pred[:, 1:, :].reshape(pred.shape[0], -1)
    g = gt[:, 1:, :].reshape(gt.shape[0], -1)
    position = float(np.mean((p - g) ** 2))
    velocity = 0.0
    if pred.shape[0] >= 2:
        velocity = float(np.mean((np.diff(p, axis=0) - np.diff(g, axis=0)) ** 2))
    return position + spec.velocity_weight * velocity


def _frames_array(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        arr = np.asarray(frames, dtype=np.float64)
    else:
        arr = np.stack([np.asarray(f.landmarks if isinstance(f, HandPose) else f,
                                   dtype=np.float64) for f in frames])
    if arr.ndim != 3 or arr.shape[1:] != (N_LANDMARKS, 3) or arr.shape[0] < 1:
        raise ValueError("expected frames shaped (n, 21, 3)")
    return arr


# --- synthetic hands -------------------------------------------------------

# Finger roots, pointing directions (palm plane = xy, palm normal = +z), and
# segment lengths chosen so an open hand's fingertips stay within ~0.19 m of
# the wrist. The little-finger root sits at exactly 0.095 m, the default
# normalization length.
_HAND_GEOMETRY: dict[str, tuple[tuple[float, float, float], tuple[float, float, float],
                                tuple[float, float, float]]] = {
    "thumb": ((0.030, -0.018, 0.0), (1.0, -0.55, 0.0), (0.040, 0.030, 0.026)),
    "index": ((0.092, 0.000, 0.0), (1.0, 0.06, 0.0), (0.042, 0.024, 0.022)),
    "middle": ((0.090, 0.022, 0.0), (1.0, 0.10, 0.0), (0.045, 0.026, 0.024)),
    "ring": ((0.082, 0.042, 0.0), (1.0, 0.28, 0.0), (0.041, 0.025, 0.022)),
    "little": ((0.074861, 0.058486, 0.0), (1.0, 0.42, 0.0), (0.031, 0.020, 0.019)),
}
_PALM_NORMAL = np.array([0.0, 0.0, 1.0])


def _rotate(vec: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    return (vec * math.cos(angle)
            + np.cross(axis, vec) * math.sin(angle)
            + axis * float(np.dot(axis, vec)) * (1.0 - math.cos(angle)))


def curled_hand(curl: float = 0.0, per_finger: dict[str, float] | None = None) -> HandPose:
    """A synthetic right hand with each finger bent by a per-joint angle.

    ``curl`` (radians) is the bend added at every successive joint of every
    finger; ``per_finger`` overrides it per finger name. curl 0 gives the
    canonical open hand.
    """
    per_finger = per_finger or {}
    lm = np.zeros((N_LANDMARKS, 3))
    for finger in FINGER_ORDER:
        root, direction, segments = _HAND_GEOMETRY[finger]
        angle = float(per_finger.get(finger, curl))
        idxs = FINGER_LANDMARKS[finger]
        pos = np.array(root, dtype=np.float64)
        d = np.array(direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        axis = np.cross(_PALM_NORMAL, d)  # bending tips the segment out of the palm plane
        lm[idxs[0]] = pos
        for idx, length in zip(idxs[1:], segments):
            d = _rotate(d, axis, angle)
            pos = pos + length * d
            lm[idx] = pos
    return HandPose(lm)


def canonical_open_hand() -> HandPose:
    """The flat reference hand used by tests and synthetic datasets."""
    return curled_hand(0.0)


# --- pose stream files ------------------------------------------------------

def save_pose_stream(path, timestamps, poses) -> None:
    """Write timestamp + 63 coordinates per line, comma-delimited."""
    timestamps = list(timestamps)
    poses = list(poses)
    if len(timestamps) != len(poses):
        raise ValueError("need equally many timestamps and poses")
    with open(path, "w") as fh:
        for t, pose in zip(timestamps, poses):
            coords = np.asarray(pose.landmarks if isinstance(pose, HandPose) else pose,
                                dtype=np.float64).reshape(-1)
            fh.write(",".join([repr(float(t))] + [repr(float(c)) for c in coords]) + "\n")


def load_pose_stream(path) -> tuple[np.ndarray, list[HandPose]]:
    """Read a pose stream file; returns (timestamps, poses).

    Each nonempty line holds a timestamp followed by 63 coordinates, comma or
    whitespace delimited. Lines starting with '#' are comments.
    """
    timestamps = []
    poses = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",") if "," in line else line.split()
                if len(parts) != 1 + N_LANDMARKS * 3:
                    raise IngestionError(
                        f"{path}:{lineno}: expected 64 fields, got {len(parts)}")
                try:
                    values = [float(p) for p in parts]
                except ValueError as exc:
                    raise IngestionError(f"{path}:{lineno}: {exc}") from exc
                timestamps.append(values[0])
                poses.append(HandPose(np.array(values[1:]).reshape(N_LANDMARKS, 3)))
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    return np.asarray(timestamps), poses

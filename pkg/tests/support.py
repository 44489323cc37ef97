"""Shared helpers for the test suite (not collected by pytest)."""

from __future__ import annotations

import numpy as np

from wristsonar.chirp import ChirpSpec, generate_chirp
from wristsonar.dsp import butterworth_bandpass
from wristsonar.echo import (EchoProfile, aligned_channel_pair, compute_echo_profile,
                             crop_channels, default_bandpass, detect_start, window_at)

FINGERS = ("thumb", "index", "middle", "ring", "little")


def receive_chain(mic, spec: ChirpSpec):
    """Bandpass, lock on, and fold a mic stream; returns (profile, alignment)."""
    tx = generate_chirp(spec)
    filtered = butterworth_bandpass(mic, default_bandpass(spec))
    alignment = detect_start(filtered, tx)
    profile = compute_echo_profile(alignment.aligned, tx, spec.sample_rate)
    return profile, alignment


def last_window_of(profile, end_back: int = 1, window_frames: int = 96):
    """The normalized two-channel window ending end_back columns from the end."""
    orig, diff = aligned_channel_pair(profile)
    crop, _ = crop_channels(orig, diff)
    return window_at(crop, crop.shape[2] - end_back, window_frames, orig.frame_duration)


def grasp_pose_sample(rng: np.random.Generator):
    """One grasp-family hand pose: shared curl plus small per-finger variation."""
    from wristsonar.pose import curled_hand

    shared = float(rng.uniform(0.0, 1.4))
    curls = {f: shared + float(rng.uniform(-0.15, 0.15)) for f in FINGERS}
    return curled_hand(per_finger=curls)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation matrix via QR with positive diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def curl_wave_poses(duration: float, fps: float = 30.0):
    """A smooth open-close pose stream: (timestamps, poses)."""
    from wristsonar.pose import curled_hand

    n = int(round(duration * fps))
    timestamps = np.arange(n) / fps
    poses = [curled_hand(0.7 + 0.6 * np.sin(2 * np.pi * 0.4 * t)) for t in timestamps]
    return timestamps, poses


def make_session(directory, session_id="s01", user_id="u01", device="synthetic",
                 hand="right", posture="sitting", condition="baseline",
                 duration=3.0, fps=30.0, seed=0, with_imu=False, imu_rate=100.0,
                 snr_db=None, extra_manifest=None):
    """Synthesize a full on-disk session; returns the manifest path.

    Writes <id>.wav (a rendered hand scene following a curl wave), <id>.csv
    (the matching pose stream), optionally <id>_imu.csv, and <id>.yaml with
    paths relative to the manifest.
    """
    import os

    import yaml

    from wristsonar.audio import write_wav_mono
    from wristsonar.pose import save_pose_stream
    from wristsonar.sim import NoiseSpec, hand_scene_from_pose_stream, simulate

    timestamps, poses = curl_wave_poses(duration, fps)
    kwargs = {"duration": float(timestamps[-1]) + 0.2}
    if snr_db is not None:
        kwargs["noise"] = NoiseSpec(model="gaussian", snr_db=snr_db)
    scene = hand_scene_from_pose_stream(poses, timestamps, **kwargs)
    spec = ChirpSpec()
    mic = simulate(scene, spec, seed=seed)

    directory = str(directory)
    wav_path = os.path.join(directory, f"{session_id}.wav")
    pose_path = os.path.join(directory, f"{session_id}.csv")
    write_wav_mono(wav_path, mic, spec.sample_rate)
    save_pose_stream(pose_path, timestamps, poses)

    manifest = {
        "session_id": session_id, "user_id": user_id, "device": device,
        "hand": hand, "posture": posture, "condition": condition,
        "audio_path": f"{session_id}.wav", "pose_path": f"{session_id}.csv",
    }
    if with_imu:
        imu_path = os.path.join(directory, f"{session_id}_imu.csv")
        n = int(round(duration * imu_rate))
        t = np.arange(n) / imu_rate
        rng = np.random.default_rng(seed + 1000)
        channels = [np.sin(2 * np.pi * (0.5 + 0.3 * c) * t)
                    + 0.1 * rng.standard_normal(n) for c in range(6)]
        with open(imu_path, "w") as fh:
            fh.write("# timestamp_ns ax ay az gx gy gz\n")
            for i in range(n):
                row = ",".join([str(int(round(t[i] * 1e9)))]
                               + [f"{ch[i]:.6f}" for ch in channels])
                fh.write(row + "\n")
        manifest["imu_path"] = f"{session_id}_imu.csv"
        manifest["imu_rate"] = imu_rate
    if extra_manifest:
        manifest.update(extra_manifest)
    manifest_path = os.path.join(directory, f"{session_id}.yaml")
    with open(manifest_path, "w") as fh:
        yaml.safe_dump(manifest, fh)
    return manifest_path

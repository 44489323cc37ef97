from __future__ import annotations

import numpy as np
import pytest

import oracles
from support import random_rotation
from wristsonar.errors import DegeneratePoseError, IngestionError
from wristsonar.pose import (FINGER_LANDMARKS, FINGER_ORDER, INTERIOR_JOINTS, LITTLE_MCP,
                             WRIST, HandPose, LossSpec, PoseNormalization,
                             canonical_open_hand, composite_loss, curled_hand,
                             joint_bend_angles, load_pose_stream, mpjae_deg, mpjpe_mm,
                             mwae_deg, normalize_pose, palm_frame, save_pose_stream,
                             to_wrist_relative)


def _random_pose(rng: np.random.Generator) -> HandPose:
    base = curled_hand(float(rng.uniform(0.0, 1.3)))
    wobble = 0.003 * rng.standard_normal((21, 3))
    wobble[WRIST] = 0.0
    return HandPose(base.landmarks + wobble)


class TestPalmFrame:
    def test_orthonormal_right_handed(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            frame = palm_frame(_random_pose(rng))
            assert np.allclose(frame.T @ frame, np.eye(3), atol=1e-9)
            assert np.linalg.det(frame) == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_collinear_pose(self):
        landmarks = np.zeros((21, 3))
        landmarks[:, 0] = np.linspace(0.0, 0.2, 21)  # everything on one line
        with pytest.raises(DegeneratePoseError):
            palm_frame(HandPose(landmarks))


class TestNormalization:
    def test_rotation_and_translation_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            pose = _random_pose(rng)
            reference = normalize_pose(pose)
            rotation = random_rotation(rng)
            shift = rng.uniform(-0.5, 0.5, 3)
            moved = HandPose(pose.landmarks @ rotation.T + shift)
            again = normalize_pose(moved)
            assert np.max(np.abs(again.landmarks - reference.landmarks)) <= 1e-9

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        pose = _random_pose(rng)
        reference = normalize_pose(pose)
        scaled = HandPose(pose.landmarks * 2.0)
        assert np.max(np.abs(normalize_pose(scaled).landmarks - reference.landmarks)) <= 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        pose = _random_pose(rng)
        once = normalize_pose(pose)
        twice = normalize_pose(once)
        assert np.max(np.abs(twice.landmarks - once.landmarks)) <= 1e-12

    def test_canonical_layout(self):
        rng = np.random.default_rng(4)
        out = normalize_pose(_random_pose(rng))
        assert np.allclose(out.landmarks[WRIST], 0.0, atol=1e-12)
        assert np.linalg.norm(out.landmarks[LITTLE_MCP]) == pytest.approx(0.095, abs=1e-9)
        assert np.allclose(palm_frame(out), np.eye(3), atol=1e-9)

    def test_custom_reference_scale(self):
        rng = np.random.default_rng(5)
        pose = _random_pose(rng)
        params = PoseNormalization(wrist_to_little_mcp=0.080)
        out = normalize_pose(pose, params)
        assert np.linalg.norm(out.landmarks[LITTLE_MCP]) == pytest.approx(0.080, abs=1e-9)

    def test_reference_frame_must_be_rotation(self):
        with pytest.raises(ValueError):
            PoseNormalization(reference_frame=np.eye(3) * 2.0)
        with pytest.raises(ValueError):
            PoseNormalization(reference_frame=np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(ValueError):
            PoseNormalization(wrist_to_little_mcp=0.0)

    def test_wrist_relative(self):
        rng = np.random.default_rng(6)
        pose = _random_pose(rng)
        rel = to_wrist_relative(pose)
        assert np.allclose(rel, pose.landmarks - pose.landmarks[WRIST], atol=0)


class TestHandPoseValidation:
    def test_shape(self):
        with pytest.raises(ValueError):
            HandPose(np.zeros((20, 3)))

    def test_finite(self):
        bad = np.zeros((21, 3))
        bad[4, 1] = np.nan
        with pytest.raises(ValueError):
            HandPose(bad)


class TestMetrics:
    def test_mpjpe_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b = _random_pose(rng), _random_pose(rng)
            assert mpjpe_mm(a, b) == pytest.approx(
                oracles.mean_joint_position_error_mm(a.landmarks, b.landmarks), abs=1e-9)

    def test_mpjpe_identity_zero(self):
        pose = canonical_open_hand()
        assert mpjpe_mm(pose, pose) == 0.0

    def test_mpjae_matches_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a, b = _random_pose(rng), _random_pose(rng)
            assert mpjae_deg(a, b) == pytest.approx(
                oracles.mean_bend_angle_error_deg(a.landmarks, b.landmarks), abs=1e-6)

    def test_interior_joint_layout(self):
        assert len(INTERIOR_JOINTS) == 15
        for i, finger in enumerate(FINGER_ORDER):
            chain = (WRIST,) + FINGER_LANDMARKS[finger]
            triples = INTERIOR_JOINTS[3 * i:3 * i + 3]
            for j, triple in enumerate(triples):
                assert triple == (chain[j], chain[j + 1], chain[j + 2])
        assert INTERIOR_JOINTS == tuple(oracles.interior_triples())

    def test_bend_angles_range_and_count(self):
        angles = joint_bend_angles(curled_hand(0.8))
        assert angles.shape == (15,)
        assert np.all(angles >= 0.0) and np.all(angles <= 180.0)

    def test_bend_angle_degenerate_bone(self):
        landmarks = canonical_open_hand().landmarks.copy()
        landmarks[6] = landmarks[7]  # zero-length bone inside the index chain
        with pytest.raises(DegeneratePoseError):
            joint_bend_angles(HandPose(landmarks))

    def test_mwae_known_rotation(self):
        rng = np.random.default_rng(9)
        gt = _random_pose(rng)
        for angle_deg in (5.0, 20.0, 90.0):
            angle = np.radians(angle_deg)
            axis = np.array([0.0, 0.0, 1.0])
            c, s = np.cos(angle), np.sin(angle)
            rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            pred = HandPose(gt.landmarks @ rotation.T)
            assert mwae_deg(pred, gt) == pytest.approx(angle_deg, abs=1e-6)
            assert oracles.rotation_angle_deg(
                palm_frame(pred), palm_frame(gt)) == pytest.approx(angle_deg, abs=1e-6)

    def test_mwae_identity_zero(self):
        pose = canonical_open_hand()
        assert mwae_deg(pose, pose) == pytest.approx(0.0, abs=1e-6)


class TestCompositeLoss:
    def test_frozen_two_frame_value(self):
        pred, gt = oracles.two_frame_sequences()
        value = composite_loss(pred, gt)
        assert value == pytest.approx(oracles.TWO_FRAME_COMPOSITE_LOSS, rel=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(10)
        for n_frames in (1, 2, 5):
            pred = [_random_pose(rng) for _ in range(n_frames)]
            gt = [_random_pose(rng) for _ in range(n_frames)]
            expected = oracles.composite_loss_scalar(
                [p.landmarks for p in pred], [g.landmarks for g in gt], 0.1)
            assert composite_loss(pred, gt) == pytest.approx(expected, rel=1e-12)

    def test_single_frame_has_no_velocity_term(self):
        rng = np.random.default_rng(11)
        pred, gt = [_random_pose(rng)], [_random_pose(rng)]
        light = composite_loss(pred, gt, LossSpec(velocity_weight=0.0))
        heavy = composite_loss(pred, gt, LossSpec(velocity_weight=10.0))
        assert light == pytest.approx(heavy, rel=1e-12)

    def test_velocity_weight_scales_motion_error(self):
        rng = np.random.default_rng(12)
        pred = [_random_pose(rng) for _ in range(3)]
        gt = [_random_pose(rng) for _ in range(3)]
        base = composite_loss(pred, gt, LossSpec(velocity_weight=0.0))
        with_velocity = composite_loss(pred, gt, LossSpec(velocity_weight=0.1))
        assert with_velocity > base

    def test_mismatched_lengths(self):
        pose = canonical_open_hand()
        with pytest.raises(ValueError):
            composite_loss([pose], [pose, pose])


class TestSyntheticHands:
    def test_canonical_scale(self):
        pose = canonical_open_hand()
        assert np.linalg.norm(pose.landmarks[LITTLE_MCP]) == pytest.approx(0.095, abs=2e-5)
        assert np.allclose(pose.landmarks[WRIST], 0.0)

    def test_curl_shortens_reach(self):
        open_tips = canonical_open_hand().landmarks[[4, 8, 12, 16, 20]]
        curled_tips = curled_hand(1.2).landmarks[[4, 8, 12, 16, 20]]
        assert np.all(np.linalg.norm(curled_tips, axis=1)
                      < np.linalg.norm(open_tips, axis=1))

    def test_per_finger_overrides(self):
        pose = curled_hand(0.0, per_finger={"index": 1.3})
        open_pose = canonical_open_hand()
        index_tip = np.linalg.norm(pose.landmarks[8])
        assert index_tip < np.linalg.norm(open_pose.landmarks[8])
        assert np.allclose(pose.landmarks[FINGER_LANDMARKS["ring"][-1]],
                           open_pose.landmarks[FINGER_LANDMARKS["ring"][-1]], atol=1e-12)


class TestPoseStreamFiles:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(13)
        ts = np.array([0.0, 1 / 30, 2 / 30])
        poses = [_random_pose(rng) for _ in range(3)]
        path = tmp_path / "stream.csv"
        save_pose_stream(path, ts, poses)
        back_ts, back_poses = load_pose_stream(path)
        assert np.array_equal(back_ts, ts)
        for a, b in zip(poses, back_poses):
            assert np.array_equal(a.landmarks, b.landmarks)

    def test_whitespace_and_comments(self, tmp_path):
        pose = canonical_open_hand()
        coords = " ".join(repr(float(c)) for c in pose.landmarks.reshape(-1))
        path = tmp_path / "stream.txt"
        path.write_text(f"# captured poses\n0.5 {coords}\n\n")
        ts, poses = load_pose_stream(path)
        assert ts.tolist() == [0.5]
        assert np.array_equal(poses[0].landmarks, pose.landmarks)

    def test_malformed_line_names_file_and_line(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("0.0,1.0,2.0\n")
        with pytest.raises(IngestionError, match=r"broken\.csv.*1"):
            load_pose_stream(path)

    def test_mismatched_lengths_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_pose_stream(tmp_path / "x.csv", [0.0, 1.0], [canonical_open_hand()])

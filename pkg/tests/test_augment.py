from __future__ import annotations

import numpy as np
import pytest

from wristsonar.augment import (AppliedAugment, AugmentSpec, apply_augment,
                                augment_window, sample_augment)
from wristsonar.dsp import zscore
from wristsonar.echo import EchoWindow

ROWS, COLS = 60, 96


def _window(seed: int = 0) -> EchoWindow:
    rng = np.random.default_rng(seed)
    return EchoWindow(channels=rng.standard_normal((2, ROWS, COLS)),
                      start_frame=0, frame_duration=1.0 / 80.0)


def _noop() -> AppliedAugment:
    return AppliedAugment(shift=0, amp_factor=None, time_mask=None, range_mask=None)


class TestApply:
    def test_input_window_is_not_mutated(self):
        window = _window(1)
        before = window.channels.copy()
        apply_augment(window, AppliedAugment(shift=3, amp_factor=1.04,
                                             time_mask=(10, 7), range_mask=(20, 6)))
        assert np.array_equal(window.channels, before)

    def test_positive_shift_moves_content_to_larger_rows(self):
        window = _window(2)
        out = apply_augment(window, AppliedAugment(shift=4, amp_factor=None,
                                                   time_mask=None, range_mask=None))
        shifted = np.zeros_like(window.channels)
        shifted[:, 4:, :] = window.channels[:, :-4, :]
        expected = np.stack([zscore(shifted[0]), zscore(shifted[1])])
        assert np.allclose(out.channels, expected, atol=1e-12)

    def test_negative_shift_moves_content_to_smaller_rows(self):
        window = _window(3)
        out = apply_augment(window, AppliedAugment(shift=-2, amp_factor=None,
                                                   time_mask=None, range_mask=None))
        shifted = np.zeros_like(window.channels)
        shifted[:, :-2, :] = window.channels[:, 2:, :]
        expected = np.stack([zscore(shifted[0]), zscore(shifted[1])])
        assert np.allclose(out.channels, expected, atol=1e-12)

    def test_masks_zero_both_channels(self):
        window = _window(4)
        out = apply_augment(window, AppliedAugment(shift=0, amp_factor=None,
                                                   time_mask=(30, 10),
                                                   range_mask=(12, 8)))
        masked = window.channels.copy()
        masked[:, :, 30:40] = 0.0
        masked[:, 12:20, :] = 0.0
        expected = np.stack([zscore(masked[0]), zscore(masked[1])])
        assert np.allclose(out.channels, expected, atol=1e-12)
        # the zeroed bands survive as one constant value per channel
        for ch in range(2):
            band = out.channels[ch, :, 30:40]
            assert np.ptp(band) == 0.0

    def test_amplitude_scale_is_absorbed_by_renormalization(self):
        window = _window(5)
        scaled = apply_augment(window, AppliedAugment(shift=0, amp_factor=1.05,
                                                      time_mask=None, range_mask=None))
        plain = apply_augment(window, _noop())
        assert np.allclose(scaled.channels, plain.channels, atol=1e-12)

    def test_output_is_normalized_per_channel(self):
        window = _window(6)
        out = apply_augment(window, AppliedAugment(shift=2, amp_factor=1.01,
                                                   time_mask=(0, 5), range_mask=(50, 10)))
        assert out.normalized is True
        for ch in range(2):
            assert abs(float(np.mean(out.channels[ch]))) <= 1e-9
            assert abs(float(np.std(out.channels[ch])) - 1.0) <= 1e-9

    def test_metadata_carries_over(self):
        window = EchoWindow(channels=np.random.default_rng(7).standard_normal((2, ROWS, COLS)),
                            start_frame=123, frame_duration=0.0125)
        out = apply_augment(window, _noop())
        assert out.start_frame == 123
        assert out.frame_duration == 0.0125


class TestSampling:
    def test_seeded_spec_is_deterministic(self):
        window = _window(8)
        spec = AugmentSpec(seed=42)
        first = augment_window(window, spec)
        second = augment_window(window, spec)
        assert np.array_equal(first.channels, second.channels)

    def test_explicit_rng_matches_sample_then_apply(self):
        window = _window(9)
        spec = AugmentSpec()
        applied = sample_augment(spec, np.random.default_rng(11), ROWS, COLS)
        via_helper = augment_window(window, spec, np.random.default_rng(11))
        assert np.array_equal(via_helper.channels,
                              apply_augment(window, applied).channels)

    def test_applied_record_reproduces_exactly(self):
        window = _window(10)
        applied = sample_augment(AugmentSpec(), np.random.default_rng(13), ROWS, COLS)
        assert np.array_equal(apply_augment(window, applied).channels,
                              apply_augment(window, applied).channels)

    def test_draw_geometry_stays_in_bounds(self):
        rng = np.random.default_rng(14)
        spec = AugmentSpec()
        for _ in range(500):
            applied = sample_augment(spec, rng, ROWS, COLS)
            assert -5 <= applied.shift <= 5
            if applied.amp_factor is not None:
                assert 0.95 <= applied.amp_factor <= 1.05
            # the two masks are drawn by one coin: both present or both absent
            assert (applied.time_mask is None) == (applied.range_mask is None)
            if applied.time_mask is not None:
                start, width = applied.time_mask
                assert 5 <= width <= 15 and 0 <= start and start + width <= COLS
                start, height = applied.range_mask
                assert 5 <= height <= 10 and 0 <= start and start + height <= ROWS

    def test_mask_width_clipped_to_tiny_windows(self):
        rng = np.random.default_rng(15)
        spec = AugmentSpec()
        for _ in range(200):
            applied = sample_augment(spec, rng, 8, 4)
            if applied.time_mask is not None:
                assert applied.time_mask[1] <= 4
                assert applied.range_mask[1] <= 8

    def test_step_frequencies_near_their_probabilities(self):
        rng = np.random.default_rng(16)
        spec = AugmentSpec()
        draws = [sample_augment(spec, rng, ROWS, COLS) for _ in range(2000)]
        amp_rate = np.mean([d.amp_factor is not None for d in draws])
        mask_rate = np.mean([d.time_mask is not None for d in draws])
        assert abs(amp_rate - 0.8) <= 0.05
        assert abs(mask_rate - 0.8) <= 0.05
        shifts = np.array([d.shift for d in draws])
        counts = np.bincount(shifts + 5, minlength=11)
        assert np.all(counts > 0)


class TestValidation:
    @pytest.mark.parametrize("kwargs", [
        {"vertical_shift_bins": -1},
        {"amp_prob": 1.5},
        {"mask_prob": -0.1},
        {"amp_range": (1.05, 0.95)},
        {"amp_range": (0.0, 1.0)},
        {"time_mask_cols": (0, 5)},
        {"range_mask_rows": (9, 4)},
    ])
    def test_bad_spec_rejected(self, kwargs):
        with pytest.raises(ValueError):
            AugmentSpec(**kwargs)

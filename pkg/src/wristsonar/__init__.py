"""wristsonar: wrist-worn active acoustic sensing for hand-pose tracking.

Chirp synthesis, echo-profile construction and calibration, IMU band
expansion, pose normalization and metrics, training-time augmentation, a
physics simulator for synthetic data, and session orchestration with a
reference k-NN estimator.
"""

from .augment import AppliedAugment, AugmentSpec, apply_augment, augment_window, sample_augment
from .chirp import (SPEED_OF_SOUND, ChirpSpec, assemble_tx_stream, bandwidth_resolution,
                    generate_chirp, range_resolution)
from .dsp import BandpassSpec, butterworth_bandpass, cross_correlate, zscore
from .echo import (DEFAULT_RANGE_BINS, DEFAULT_WINDOW_FRAMES, AlignmentResult, EchoProfile,
                   EchoWindow, aligned_channel_pair, clip_for_render, compute_echo_profile,
                   crop_and_window, default_bandpass, detect_start, differential_profile,
                   direct_path_row, median_drift_filter, realign_peaks)
from .errors import (BandDesignError, DegeneratePoseError, IngestionError,
                     InsufficientDataError, NoSignalError, PairingError, PipelineError,
                     SplitError)
from .imu import ImuWindow, expand_bands, read_imu_file, resample_imu, window_imu
from .pipeline import (EvalReport, KnnEstimator, MeanPoseEstimator, PairedSample,
                       PairedSession, SessionManifest, SessionSelection, SplitSpec,
                       evaluate, fit_knn_estimator, fit_mean_estimator, load_manifest,
                       pair_samples, select_samples, split)
from .pose import (HandPose, LossSpec, PoseNormalization, canonical_open_hand,
                   composite_loss, curled_hand, joint_bend_angles, mpjae_deg, mpjpe_mm,
                   mwae_deg, normalize_pose, palm_frame)
from .sim import (HandGeometry, JitterSpec, NoiseSpec, Reflector, SceneSpec,
                  hand_scene_from_pose, hand_scene_from_pose_stream, load_scene,
                  save_scene, simulate)

__version__ = "0.1.0"

"""Command-line interface: one subcommand per pipeline stage.

Every stage reads and writes files, so a full run is a sequence of
single-shot invocations: simulate -> echo -> calibrate -> window -> pair ->
fit -> evaluate, with augment and render as side branches. Exit code 0 on
success, 1 with a one-line diagnostic on domain errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import augment as augment_mod
from . import pipeline, profile_io, sim
from .audio import read_wav_mono, write_wav_mono
from .chirp import ChirpSpec, generate_chirp
from .dsp import butterworth_bandpass
from .echo import (DEFAULT_MAX_SHIFT, DEFAULT_MEDIAN_KERNEL, DEFAULT_RANGE_BINS,
                   DEFAULT_REALIGN_WINDOW, DEFAULT_WINDOW_FRAMES, RENDER_CLIP,
                   aligned_channel_pair, clip_for_render, compute_echo_profile,
                   crop_and_window, default_bandpass, detect_start, differential_profile,
                   median_drift_filter, realign_peaks)
from .errors import IngestionError, PipelineError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wristsonar",
                                     description="acoustic hand-sensing pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scene description to a WAV recording")
    p.add_argument("--scene", required=True, help="scene YAML file")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--duration", type=float, default=None, help="override scene duration (s)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("echo", help="turn a WAV recording into an echo profile")
    p.add_argument("--in", dest="in_path", required=True, help="input WAV")
    p.add_argument("--out", required=True, help="output profile container")
    p.add_argument("--differential", action="store_true",
                   help="write the frame-to-frame differential instead of the original")

    p = sub.add_parser("calibrate", help="undo timing jitter and frame drift in a profile")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-frames", type=int, default=DEFAULT_REALIGN_WINDOW)
    p.add_argument("--max-shift", type=int, default=DEFAULT_MAX_SHIFT)
    p.add_argument("--deviation-threshold", type=int, default=0)
    p.add_argument("--kernel", type=int, default=DEFAULT_MEDIAN_KERNEL,
                   help="median filter kernel (frames)")
    p.add_argument("--no-realign", action="store_true")
    p.add_argument("--no-median", action="store_true")

    p = sub.add_parser("window", help="crop a profile and slice it into model windows")
    p.add_argument("--in", dest="in_path", required=True, help="original-kind profile")
    p.add_argument("--out", required=True, help="output window shards")
    p.add_argument("--range-bins", type=int, default=DEFAULT_RANGE_BINS)
    p.add_argument("--window-frames", type=int, default=DEFAULT_WINDOW_FRAMES)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--reference-row", type=int, default=None,
                   help="zero-distance row; default: auto-detect the direct path")
    p.add_argument("--raw", action="store_true", help="skip per-window normalization")

    p = sub.add_parser("augment", help="randomly perturb window shards")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-bins", type=int, default=5)
    p.add_argument("--amp-prob", type=float, default=0.8)
    p.add_argument("--mask-prob", type=float, default=0.8)

    p = sub.add_parser("pair", help="process a session manifest into paired samples")
    p.add_argument("--manifest", required=True, help="session manifest YAML")
    p.add_argument("--out", required=True, help="output .npz shard")
    p.add_argument("--range-bins", type=int, default=DEFAULT_RANGE_BINS)
    p.add_argument("--window-frames", type=int, default=DEFAULT_WINDOW_FRAMES)

    p = sub.add_parser("split", help="compute train/test membership from manifests")
    p.add_argument("--manifests", nargs="+", required=True, help="manifest YAML files")
    p.add_argument("--protocol", required=True, choices=pipeline.SPLIT_PROTOCOLS)
    p.add_argument("--holdout", nargs="*", default=[], help="held-out user ids (cross_user)")
    p.add_argument("--out", required=True, help="output split YAML")

    p = sub.add_parser("fit", help="fit a reference estimator on paired shards")
    p.add_argument("--train", nargs="+", required=True, help="training .npz shards")
    p.add_argument("--out", required=True, help="output estimator file")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--estimator", choices=("knn", "mean"), default="knn")

    p = sub.add_parser("evaluate", help="report pose metrics for an estimator")
    p.add_argument("--model", required=True, help="estimator file from fit")
    p.add_argument("--test", nargs="+", required=True, help="test .npz shards")
    p.add_argument("--out", default=None, help="also write the report here")

    p = sub.add_parser("render", help="write a profile as an 8-bit image")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True, help="output .pgm or .png")
    p.add_argument("--clip", type=float, default=RENDER_CLIP)
    return parser


def _cmd_simulate(args) -> int:
    scene = sim.load_scene(args.scene)
    spec = ChirpSpec()
    mic = sim.simulate(scene, spec, duration=args.duration, seed=args.seed)
    write_wav_mono(args.out, mic, spec.sample_rate)
    return 0


def _profile_from_wav(path, spec: ChirpSpec):
    samples, rate = read_wav_mono(path)
    if rate != spec.sample_rate:
        raise IngestionError(f"{path}: sample rate {rate} does not match "
                             f"the chirp spec ({spec.sample_rate})")
    filtered = butterworth_bandpass(samples, default_bandpass(spec))
    alignment = detect_start(filtered, generate_chirp(spec))
    return compute_echo_profile(alignment.aligned, generate_chirp(spec), rate)


def _cmd_echo(args) -> int:
    profile = _profile_from_wav(args.in_path, ChirpSpec())
    if args.differential:
        profile = differential_profile(profile)
    profile_io.save_profile(args.out, profile)
    return 0


def _cmd_calibrate(args) -> int:
    profile = profile_io.load_profile(args.in_path)
    if not args.no_realign:
        profile = realign_peaks(profile, window_frames=args.window_frames,
                                max_shift=args.max_shift,
                                deviation_threshold=args.deviation_threshold)
    if not args.no_median:
        profile = median_drift_filter(profile, kernel_frames=args.kernel)
    profile_io.save_profile(args.out, profile)
    return 0


def _cmd_window(args) -> int:
    profile = profile_io.load_profile(args.in_path)
    orig, diff = aligned_channel_pair(profile)
    windows = crop_and_window(orig, diff, range_bins=args.range_bins,
                              window_frames=args.window_frames,
                              stride_frames=args.stride,
                              reference_row=args.reference_row,
                              normalize=not args.raw)
    profile_io.save_windows(args.out, windows)
    return 0


def _cmd_augment(args) -> int:
    windows = profile_io.load_windows(args.in_path)
    spec = augment_mod.AugmentSpec(vertical_shift_bins=args.shift_bins,
                                   amp_prob=args.amp_prob, mask_prob=args.mask_prob)
    rng = np.random.default_rng(args.seed)
    profile_io.save_windows(args.out, [augment_mod.augment_window(w, spec, rng)
                                       for w in windows])
    return 0


def _cmd_pair(args) -> int:
    manifest = pipeline.load_manifest(args.manifest)
    session = pipeline.pair_samples(manifest, range_bins=args.range_bins,
                                    window_frames=args.window_frames)
    pipeline.save_paired_session(args.out, session)
    return 0


def _cmd_split(args) -> int:
    import yaml

    manifests = [pipeline.load_manifest(p) for p in args.manifests]
    spec = pipeline.SplitSpec(protocol=args.protocol, holdout=tuple(args.holdout))
    train, test = pipeline.split(manifests, spec)

    def encode(selections):
        return [{"manifest": s.manifest.source_path, "session_id": s.manifest.session_id,
                 "fraction": [s.fraction[0], s.fraction[1]]} for s in selections]

    with open(args.out, "w") as fh:
        yaml.safe_dump({"protocol": args.protocol,
                        "train": encode(train), "test": encode(test)},
                       fh, sort_keys=False)
    return 0


def _load_shard_samples(paths):
    sessions = [pipeline.load_paired_session(p) for p in paths]
    samples = [s for session in sessions for s in session.samples]
    ms = np.concatenate([session.preprocess_ms for session in sessions])
    return samples, ms


def _cmd_fit(args) -> int:
    samples, _ = _load_shard_samples(args.train)
    if args.estimator == "knn":
        estimator = pipeline.fit_knn_estimator(samples, k=args.k)
    else:
        estimator = pipeline.fit_mean_estimator(samples)
    pipeline.save_estimator(args.out, estimator)
    return 0


def _cmd_evaluate(args) -> int:
    estimator = pipeline.load_estimator(args.model)
    samples, ms = _load_shard_samples(args.test)
    report = pipeline.evaluate(estimator, samples, preprocess_ms=ms)
    text = pipeline.report_to_text(report)
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def _cmd_render(args) -> int:
    profile = profile_io.load_profile(args.in_path)
    profile_io.save_image(args.out, clip_for_render(profile, threshold=args.clip))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "echo": _cmd_echo,
    "calibrate": _cmd_calibrate,
    "window": _cmd_window,
    "augment": _cmd_augment,
    "pair": _cmd_pair,
    "split": _cmd_split,
    "fit": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"wristsonar {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

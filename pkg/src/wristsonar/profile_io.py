"""Binary container for echo profiles and windows, plus image rendering.

Layout: a fixed 32-byte little-endian header followed by row-major float64
payload. Header fields: magic b'ECHP', version uint16, kind uint16
(0 original, 1 differential, 2 window), rows uint32, cols uint32,
frame_duration float64, aux uint32 (start_frame for windows, 0 otherwise),
flags uint8 (bit 0: normalized), 3 pad bytes. Window records stack the two
channels vertically (rows = 2 * range_bins) and may repeat back to back in
one file, one record per window.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .echo import DIFFERENTIAL, ORIGINAL, EchoProfile, EchoWindow
from .errors import IngestionError

MAGIC = b"ECHP"
VERSION = 1
KIND_ORIGINAL = 0
KIND_DIFFERENTIAL = 1
KIND_WINDOW = 2
FLAG_NORMALIZED = 0x01

_HEADER = struct.Struct("<4sHHIIdIB3x")
assert _HEADER.size == 32

_KIND_CODES = {ORIGINAL: KIND_ORIGINAL, DIFFERENTIAL: KIND_DIFFERENTIAL}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def _write_record(fh: BinaryIO, values: np.ndarray, kind: int,
                  frame_duration: float, aux: int = 0, flags: int = 0) -> None:
    rows, cols = values.shape
    fh.write(_HEADER.pack(MAGIC, VERSION, kind, rows, cols, frame_duration, aux, flags))
    fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _read_record(fh: BinaryIO, path) -> tuple[np.ndarray, int, float, int, int] | None:
    header = fh.read(_HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise IngestionError(f"{path}: truncated header")
    magic, version, kind, rows, cols, frame_duration, aux, flags = _HEADER.unpack(header)
    if magic != MAGIC:
        raise IngestionError(f"{path}: not an echo-profile container")
    if version != VERSION:
        raise IngestionError(f"{path}: unsupported container version {version}")
    payload = fh.read(rows * cols * 8)
    if len(payload) < rows * cols * 8:
        raise IngestionError(f"{path}: truncated payload")
    values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
    return values, kind, frame_duration, aux, flags


def save_profile(path, profile: EchoProfile) -> None:
    with open(path, "wb") as fh:
        _write_record(fh, profile.values, _KIND_CODES[profile.kind], profile.frame_duration)


def load_profile(path) -> EchoProfile:
    with open(path, "rb") as fh:
        record = _read_record(fh, path)
    if record is None:
        raise IngestionError(f"{path}: empty file")
    values, kind, frame_duration, _, _ = record
    if kind not in _KIND_NAMES:
        raise IngestionError(f"{path}: record is not a profile (kind {kind})")
    return EchoProfile(values=values, frame_duration=frame_duration, kind=_KIND_NAMES[kind])


def save_windows(path, windows) -> None:
    """Write EchoWindows back to back, channels stacked vertically per record."""
    with open(path, "wb") as fh:
        for w in windows:
            stacked = np.concatenate([w.channels[0], w.channels[1]], axis=0)
            flags = FLAG_NORMALIZED if w.normalized else 0
            _write_record(fh, stacked, KIND_WINDOW, w.frame_duration,
                          aux=w.start_frame, flags=flags)


def load_windows(path) -> list[EchoWindow]:
    out = []
    with open(path, "rb") as fh:
        while True:
            record = _read_record(fh, path)
            if record is None:
                break
            values, kind, frame_duration, aux, flags = record
            if kind != KIND_WINDOW:
                raise IngestionError(f"{path}: record is not a window (kind {kind})")
            if values.shape[0] % 2:
                raise IngestionError(f"{path}: window record with odd row count")
            bins = values.shape[0] // 2
            channels = np.stack([values[:bins], values[bins:]])
            out.append(EchoWindow(channels=channels, start_frame=aux,
                                  frame_duration=frame_duration,
                                  normalized=bool(flags & FLAG_NORMALIZED)))
    return out


def save_image(path, image01: np.ndarray) -> None:
    """Write a [0, 1] matrix as 8-bit grayscale; PGM by hand, PNG via Pillow."""
    img = np.asarray(image01, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image matrix")
    levels = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    suffix = str(path).lower().rsplit(".", 1)[-1]
    if suffix == "pgm":
        with open(path, "wb") as fh:
            fh.write(f"P5\n{levels.shape[1]} {levels.shape[0]}\n255\n".encode("ascii"))
            fh.write(levels.tobytes())
    elif suffix == "png":
        from PIL import Image

        Image.fromarray(levels, mode="L").save(str(path))
    else:
        raise ValueError(f"unsupported image suffix: .{suffix} (use .pgm or .png)")

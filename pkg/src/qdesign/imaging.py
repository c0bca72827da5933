"""HSV encoding of correlator samples as RGB images and the QCIM dataset format.

Pixel map (version 1): hue = min(|z| / m, 1) * 240 degrees, saturation =
(arg z + pi) / (2 pi) with arg 0 := 0, value = 1. Hue stops at blue so that
|z| = 0 and |z| = m never share a colour.
"""
from __future__ import annotations

import colorsys
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qdesign.correlators import SampleMatrix
from qdesign.errors import FormatError, ShapeError

ENCODING_VERSION = 1
HUE_MAX_DEGREES = 240.0


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (H, W, 3) uint8
    label: int

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Dataset:
    """Equally sized labelled RGB images stored as one ``(n, H, W, 3)`` array."""

    images: np.ndarray
    labels: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise ShapeError(f"images must have shape (n, H, W, 3), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, k) -> LabeledImage:
        return LabeledImage(self.images[k], int(self.labels[k]))

    @classmethod
    def from_images(cls, images: list[LabeledImage], metadata: dict | None = None) -> "Dataset":
        if not images:
            raise ValueError("cannot build a dataset from no images")
        return cls(np.stack([im.pixels for im in images]), [im.label for im in images], dict(metadata or {}))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], dict(self.metadata))

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def _round_channel(x: float) -> int:
    return int(math.floor(x * 255.0 + 0.5))


def encode_complex(z: complex, m: int) -> tuple[int, int, int]:
    """Map one complex sample to an ``(r, g, b)`` pixel."""
    if m < 1:
        raise ValueError("m must be >= 1")
    amp = abs(z)
    hue = min(amp / m, 1.0) * HUE_MAX_DEGREES
    phase = math.atan2(z.imag, z.real) if z != 0 else 0.0
    sat = (phase + math.pi) / (2 * math.pi)
    r, g, b = colorsys.hsv_to_rgb(hue / 360.0, sat, 1.0)
    return _round_channel(r), _round_channel(g), _round_channel(b)


def encode_sample_matrix(s: SampleMatrix, label: int) -> LabeledImage:
    return LabeledImage(encode_entries(s.entries, s.batch_m), int(label))


def encode_entries(entries: np.ndarray, m: int) -> np.ndarray:
    h, w = entries.shape
    pixels = np.empty((h, w, 3), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            pixels[i, j] = encode_complex(complex(entries[i, j]), m)
    return pixels


def split_dataset(d: Dataset, train_count: int, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Uniform random split without replacement into training and validation sets."""
    if not 0 < train_count < len(d):
        raise ValueError(f"train_count must lie strictly between 0 and {len(d)}, got {train_count}")
    perm = rng.permutation(len(d))
    return d.subset(np.sort(perm[:train_count])), d.subset(np.sort(perm[train_count:]))


# --- QCIM dataset files -----------------------------------------------------

QCIM_MAGIC = b"QCIM"
QCIM_VERSION = 1
_QCIM_HEADER = struct.Struct("<4sHBBBI")


def write_dataset(path, d: Dataset, write_metadata: bool = True) -> None:
    """Write the QCIM file; metadata goes to a ``<path>.json`` sidecar."""
    n, h, w, c = d.images.shape
    with open(path, "wb") as fh:
        fh.write(_QCIM_HEADER.pack(QCIM_MAGIC, QCIM_VERSION, h, w, c, n))
        for label, img in zip(d.labels, d.images):
            fh.write(struct.pack("<B", int(label)))
            fh.write(np.ascontiguousarray(img).tobytes())
    if write_metadata:
        meta = dict(d.metadata, encoding_version=ENCODING_VERSION)
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _QCIM_HEADER.size:
        raise FormatError(f"{path}: truncated QCIM header at byte offset {len(data)}")
    magic, version, h, w, c, count = _QCIM_HEADER.unpack_from(data)
    if magic != QCIM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected {QCIM_MAGIC!r}")
    if version != QCIM_VERSION:
        raise FormatError(f"{path}: unsupported QCIM version {version} at byte offset 4")
    if c != 3:
        raise FormatError(f"{path}: expected 3 channels at byte offset 8, got {c}")
    record = 1 + h * w * c
    expected = _QCIM_HEADER.size + count * record
    if len(data) != expected:
        raise FormatError(f"{path}: size mismatch at byte offset {min(len(data), expected)}; "
                          f"header declares {count} records ({expected} bytes), file has {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=_QCIM_HEADER.size).reshape(count, record)
    meta_path = Path(str(path) + ".json")
    metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    metadata.pop("encoding_version", None)
    return Dataset(raw[:, 1:].reshape(count, h, w, c).copy(), raw[:, 0].copy(), metadata)


def export_png(d: Dataset, directory) -> list[Path]:
    """Write each image as ``<class>_<index>.png``. Needs Pillow."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (img, label) in enumerate(zip(d.images, d.labels)):
        p = directory / f"{int(label)}_{k}.png"
        Image.fromarray(img, mode="RGB").save(p)
        paths.append(p)
    return paths

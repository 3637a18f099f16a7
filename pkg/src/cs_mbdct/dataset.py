"""MNIST-style IDX ingestion, contiguous splits and seeded subsampling."""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError, TruncatedFileError

IMAGE_MAGIC = 2051  # 0x00000803: unsigned byte, 3 dims
LABEL_MAGIC = 2049  # 0x00000801: unsigned byte, 1 dim


@dataclass
class ImageSet:
    """Grayscale images in [0, 1] with class labels.

    ``index`` holds each image's position in the file it was loaded from, so
    externally computed per-image features can be aligned after splitting or
    subsampling.
    """

    images: np.ndarray  # (n, H, W) float64
    labels: np.ndarray  # (n,) int64
    index: np.ndarray | None = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise ValueError(f"images must be (n, H, W), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ConsistencyError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.index is None:
            self.index = np.arange(len(self.labels), dtype=np.int64)
        else:
            self.index = np.asarray(self.index, dtype=np.int64)
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    def take(self, idx) -> ImageSet:
        idx = np.asarray(idx, dtype=np.int64)
        return ImageSet(self.images[idx], self.labels[idx], self.index[idx], dict(self.source))


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as f:
            return f.read()
    except (EOFError, gzip.BadGzipFile) as exc:
        raise TruncatedFileError(f"{path}: {exc}") from exc


def _write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        # mtime=0 keeps the compressed bytes reproducible
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(data)
    else:
        path.write_bytes(data)


def _parse_idx(data: bytes, expect_magic: int, path) -> np.ndarray:
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: missing IDX header")
    (magic,) = struct.unpack(">i", data[:4])
    if magic != expect_magic:
        raise FormatError(f"{path}: magic {magic}, expected {expect_magic}")
    ndim = data[3]
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFileError(f"{path}: truncated IDX dimension block")
    dims = struct.unpack(f">{ndim}i", data[4:header])
    n = int(np.prod(dims))
    if len(data) - header < n:
        raise TruncatedFileError(f"{path}: expected {n} payload bytes, found {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> ImageSet:
    """Load an IDX image/label pair (optionally gzip-compressed) into an ImageSet."""
    img_bytes = _read_bytes(images_path)
    lab_bytes = _read_bytes(labels_path)
    images = _parse_idx(img_bytes, IMAGE_MAGIC, images_path)
    labels = _parse_idx(lab_bytes, LABEL_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(
            f"image file has {images.shape[0]} items, label file has {labels.shape[0]}"
        )
    digest = hashlib.sha256(img_bytes + lab_bytes).hexdigest()
    source = {
        "images": str(images_path),
        "labels": str(labels_path),
        "sha256": digest,
    }
    return ImageSet(images.astype(np.float64) / 255.0, labels, source=source)


def to_idx_bytes(iset: ImageSet) -> tuple[bytes, bytes]:
    n, h, w = iset.images.shape
    pixels = np.rint(iset.images * 255.0).astype(np.uint8)
    img = struct.pack(">iiii", IMAGE_MAGIC, n, h, w) + pixels.tobytes()
    lab = struct.pack(">ii", LABEL_MAGIC, n) + iset.labels.astype(np.uint8).tobytes()
    return img, lab


def save_idx(iset: ImageSet, images_path, labels_path) -> None:
    img, lab = to_idx_bytes(iset)
    _write_bytes(images_path, img)
    _write_bytes(labels_path, lab)


def split(iset: ImageSet, train_count: int, test_count: int) -> tuple[ImageSet, ImageSet]:
    """First ``train_count`` images for training, the following ``test_count`` for testing."""
    if train_count < 0 or test_count < 0:
        raise ValueError("counts must be non-negative")
    if train_count + test_count > len(iset):
        raise ValueError(
            f"requested {train_count}+{test_count} images from a set of {len(iset)}"
        )
    train = iset.take(np.arange(train_count))
    test = iset.take(np.arange(train_count, train_count + test_count))
    return train, test


def subsample(iset: ImageSet, n: int, seed: int) -> ImageSet:
    """Draw ``n`` images uniformly without replacement (PCG64 seeded)."""
    if n < 0 or n > len(iset):
        raise ValueError(f"cannot draw {n} images from a set of {len(iset)}")
    idx = np.random.default_rng(seed).choice(len(iset), size=n, replace=False)
    return iset.take(idx)

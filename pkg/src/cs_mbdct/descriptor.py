"""Multi-scale block DCT (MB-DCT) binary descriptors.

For each keypoint and each block size, the b x b neighbourhood is transformed
with an orthonormal 2-D DCT-II, the first ``coeff_counts[i]`` AC coefficients
in zig-zag order are kept (DC is dropped), and each becomes a bit: 1 when it
exceeds the mean of the kept coefficients. Scales are concatenated in
increasing block size.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bits import n_words, pack_bits, unpack_bits
from .errors import FormatError, TruncatedFileError

DEFAULT_BLOCK_SIZES = (8, 12, 16, 24)
REFERENCE_COUNTS = {
    "E90": (15, 26, 37, 73),
    "E95": (21, 40, 63, 130),
}
ENERGY_FRACTIONS = {"E90": 0.90, "E95": 0.95, "E100": 1.0}

# Coefficient differences below this fraction of the block's peak centred
# amplitude are treated as exact ties (rounding noise on flat blocks).
TIE_RTOL = 1e-12

CACHE_MAGIC = "MBDCT"
CACHE_VERSION = "v1"


@dataclass(frozen=True)
class ScaleConfig:
    block_sizes: tuple[int, ...] = DEFAULT_BLOCK_SIZES
    coeff_counts: tuple[int, ...] | None = None
    energy_level: str = "E100"

    def __post_init__(self):
        sizes = tuple(int(b) for b in self.block_sizes)
        if not sizes or any(b < 2 for b in sizes):
            raise ValueError("block sizes must be >= 2 (a 1x1 block has no AC term)")
        if any(b2 <= b1 for b1, b2 in zip(sizes, sizes[1:])):
            raise ValueError(f"block sizes must be strictly increasing: {sizes}")
        if self.energy_level not in ENERGY_FRACTIONS:
            raise ValueError(f"unknown energy level {self.energy_level!r}")
        counts = self.coeff_counts
        if counts is None:
            if self.energy_level == "E100":
                counts = tuple(b * b - 1 for b in sizes)
            elif sizes == DEFAULT_BLOCK_SIZES:
                counts = REFERENCE_COUNTS[self.energy_level]
            else:
                raise ValueError(
                    f"no default {self.energy_level} counts for block sizes {sizes}; "
                    "pass coeff_counts (see calibrate_counts)"
                )
        counts = tuple(int(c) for c in counts)
        if len(counts) != len(sizes):
            raise ValueError("coeff_counts and block_sizes differ in length")
        for b, c in zip(sizes, counts):
            if not 1 <= c <= b * b - 1:
                raise ValueError(f"coefficient count {c} invalid for block size {b}")
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "coeff_counts", counts)

    @property
    def n_bits(self) -> int:
        return sum(self.coeff_counts)

    @property
    def layout(self) -> tuple[tuple[int, int], ...]:
        offsets = np.concatenate(([0], np.cumsum(self.coeff_counts)[:-1]))
        return tuple((int(o), c) for o, c in zip(offsets, self.coeff_counts))

    def to_dict(self) -> dict:
        return {
            "block_sizes": list(self.block_sizes),
            "coeff_counts": list(self.coeff_counts),
            "energy_level": self.energy_level,
        }


@dataclass(frozen=True, eq=False)
class BinaryDescriptor:
    words: np.ndarray  # packed uint64, see bits.py
    n_bits: int
    layout: tuple[tuple[int, int], ...] = ()
    keypoint: tuple[int, int] | None = None

    @property
    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.n_bits)

    def __eq__(self, other):
        if not isinstance(other, BinaryDescriptor):
            return NotImplemented
        return self.n_bits == other.n_bits and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.n_bits, self.words.tobytes()))


@dataclass(frozen=True)
class KeypointGrid:
    stride: int
    points: tuple[tuple[int, int], ...] = field(repr=False)

    @classmethod
    def regular(cls, height: int, width: int, stride: int) -> KeypointGrid:
        """Row-major grid anchored at (0, 0)."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        pts = tuple((r, c) for r in range(0, height, stride) for c in range(0, width, stride))
        return cls(stride, pts)

    @property
    def rows(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=np.int64)

    def __len__(self):
        return len(self.points)


@functools.lru_cache(maxsize=None)
def dct_matrix(b: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows indexed by frequency."""
    k = np.arange(b)[:, None]
    i = np.arange(b)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * b)) * np.sqrt(2.0 / b)
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def dct2(block: np.ndarray) -> np.ndarray:
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ValueError(f"dct2 needs a square block, got shape {block.shape}")
    c = dct_matrix(block.shape[0])
    return c @ block @ c.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1]:
        raise ValueError(f"idct2 needs a square block, got shape {coeffs.shape}")
    c = dct_matrix(coeffs.shape[0])
    return c.T @ coeffs @ c


@functools.lru_cache(maxsize=None)
def zigzag_order(b: int) -> tuple[tuple[int, int], ...]:
    """JPEG zig-zag scan of a b x b grid as (row, col) pairs."""
    if b < 1:
        raise ValueError("block size must be >= 1")
    order = []
    for s in range(2 * b - 1):
        diag = [(r, s - r) for r in range(max(0, s - b + 1), min(s, b - 1) + 1)]
        # even anti-diagonals run bottom-left -> top-right
        order.extend(reversed(diag) if s % 2 == 0 else diag)
    return tuple(order)


def extract_block(image: np.ndarray, center: tuple[int, int], b: int) -> np.ndarray:
    """b x b window with top-left at ``center - b // 2``, edge-replicated."""
    image = np.asarray(image)
    h, w = image.shape
    r0 = center[0] - b // 2
    c0 = center[1] - b // 2
    rows = np.clip(np.arange(r0, r0 + b), 0, h - 1)
    cols = np.clip(np.arange(c0, c0 + b), 0, w - 1)
    return image[np.ix_(rows, cols)].copy()


def _gather_blocks(images: np.ndarray, rows, cols, b: int) -> np.ndarray:
    """(N, H, W) -> (N * P, b, b) edge-replicated blocks, keypoints row-major."""
    h, w = images.shape[1:]
    offs = np.arange(b) - b // 2
    r_idx = np.clip(rows[:, None] + offs[None, :], 0, h - 1)  # (P, b)
    c_idx = np.clip(cols[:, None] + offs[None, :], 0, w - 1)
    blocks = images[:, r_idx[:, :, None], c_idx[:, None, :]]  # (N, P, b, b)
    return blocks.reshape(-1, b, b)


def _ac_coefficients(blocks: np.ndarray, count: int | None = None):
    """Zig-zag AC coefficients of many blocks plus the per-block tie tolerance.

    Blocks are mean-centred first; only DC changes, and flat blocks then give
    AC values at rounding level that the tolerance absorbs.
    """
    nblk, b, _ = blocks.shape
    centred = blocks - blocks.mean(axis=(1, 2), keepdims=True)
    tol = TIE_RTOL * np.abs(centred).max(axis=(1, 2))
    c = dct_matrix(b)
    # two flat GEMMs; the result is the transposed coefficient grid
    z = (centred.reshape(-1, b) @ c.T).reshape(nblk, b, b)
    zt = np.ascontiguousarray(z.transpose(0, 2, 1)).reshape(-1, b) @ c.T
    flat = zt.reshape(nblk, b * b)
    zz = zigzag_order(b)
    stop = len(zz) if count is None else count + 1
    idx = np.array([col * b + row for row, col in zz[1:stop]], dtype=np.int64)
    ac = flat[:, idx]
    ac[np.abs(ac) <= tol[:, None]] = 0.0
    return ac, tol


def _binarize(ac: np.ndarray, tol: np.ndarray) -> np.ndarray:
    thresh = ac.mean(axis=1, keepdims=True)
    return (ac - thresh) > tol[:, None]


def describe_bits(images: np.ndarray, grid: KeypointGrid, cfg: ScaleConfig) -> np.ndarray:
    """Unpacked descriptor bits, shape (N, P, n_bits), bool."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    n = len(images)
    rows, cols = grid.rows, grid.cols
    out = np.empty((n, len(grid), cfg.n_bits), dtype=bool)
    for (off, cnt), b in zip(cfg.layout, cfg.block_sizes):
        ac, tol = _ac_coefficients(_gather_blocks(images, rows, cols, b), cnt)
        out[:, :, off:off + cnt] = _binarize(ac, tol).reshape(n, len(grid), cnt)
    return out


def describe_batch(images: np.ndarray, grid: KeypointGrid, cfg: ScaleConfig,
                   batch: int = 64) -> np.ndarray:
    """Packed descriptors for a stack of images, shape (N, P, n_words)."""
    images = np.asarray(images, dtype=np.float64)
    out = np.empty((len(images), len(grid), n_words(cfg.n_bits)), dtype=np.uint64)
    for s in range(0, len(images), batch):
        out[s:s + batch] = pack_bits(describe_bits(images[s:s + batch], grid, cfg))
    return out


def describe_point(image: np.ndarray, keypoint: tuple[int, int], cfg: ScaleConfig) -> BinaryDescriptor:
    grid = KeypointGrid(1, (tuple(keypoint),))
    bits = describe_bits(image, grid, cfg)[0, 0]
    return BinaryDescriptor(pack_bits(bits), cfg.n_bits, cfg.layout, tuple(keypoint))


def describe_dense(image: np.ndarray, grid: KeypointGrid, cfg: ScaleConfig) -> list[BinaryDescriptor]:
    words = describe_batch(np.asarray(image)[None], grid, cfg)[0]
    return [
        BinaryDescriptor(words[i], cfg.n_bits, cfg.layout, pt)
        for i, pt in enumerate(grid.points)
    ]


def _prefix_lengths(ac: np.ndarray, energy: float) -> np.ndarray:
    """Shortest zig-zag AC prefix holding ``energy`` of the AC energy, per block."""
    if energy >= 1.0:
        return np.full(len(ac), ac.shape[1], dtype=np.int64)
    cum = np.cumsum(ac * ac, axis=1)
    total = cum[:, -1:]
    lengths = (cum < energy * total).sum(axis=1) + 1
    lengths[total[:, 0] == 0.0] = 1
    return lengths.astype(np.int64)


def calibrate_counts(images: np.ndarray, block_sizes=DEFAULT_BLOCK_SIZES, energy: float = 0.90,
                     sample_size: int = 100, stride: int = 2, seed: int = 0) -> tuple[int, ...]:
    """Average energy-preserving coefficient count per scale.

    Prefix lengths are averaged over the keypoints of each sampled image,
    then over images, and rounded (halves up).
    """
    images = np.asarray(images, dtype=np.float64)
    if sample_size < 1:
        raise ValueError("calibration sample is empty")
    if sample_size > len(images):
        raise ValueError(f"sample of {sample_size} from {len(images)} images")
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy fraction must be in (0, 1], got {energy}")
    pick = np.sort(np.random.default_rng(seed).choice(len(images), sample_size, replace=False))
    sample = images[pick]
    grid = KeypointGrid.regular(images.shape[1], images.shape[2], stride)
    counts = []
    for b in block_sizes:
        per_image = np.empty(sample_size)
        for s in range(0, sample_size, 32):
            chunk = sample[s:s + 32]
            ac, _ = _ac_coefficients(_gather_blocks(chunk, grid.rows, grid.cols, b))
            lengths = _prefix_lengths(ac, energy).reshape(len(chunk), len(grid))
            per_image[s:s + len(chunk)] = lengths.mean(axis=1)
        counts.append(int(np.floor(per_image.mean() + 0.5)))
    return tuple(counts)


def save_descriptor_cache(words: np.ndarray, cfg: ScaleConfig, path) -> None:
    """``MBDCT v1 <n_images> <desc_per_image> <bits> <scales...> <counts...>``
    then each descriptor as little-endian uint64 words, image-major."""
    words = np.asarray(words, dtype=np.uint64)
    n, p, w = words.shape
    if w != n_words(cfg.n_bits):
        raise ValueError("word count does not match the scale config")
    fields = [CACHE_MAGIC, CACHE_VERSION, n, p, cfg.n_bits, *cfg.block_sizes, *cfg.coeff_counts]
    header = (" ".join(str(f) for f in fields) + "\n").encode("ascii")
    Path(path).write_bytes(header + words.astype("<u8").tobytes())


def load_descriptor_cache(path) -> tuple[np.ndarray, ScaleConfig]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise TruncatedFileError(f"{path}: missing MBDCT header")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) < 7 or parts[0] != CACHE_MAGIC or parts[1] != CACHE_VERSION:
        raise FormatError(f"{path}: bad header")
    try:
        n, p, nbits = int(parts[2]), int(parts[3]), int(parts[4])
        rest = [int(x) for x in parts[5:]]
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer header field") from exc
    if len(rest) % 2:
        raise FormatError(f"{path}: scales and counts differ in number")
    half = len(rest) // 2
    cfg = ScaleConfig(tuple(rest[:half]), tuple(rest[half:]))
    if cfg.n_bits != nbits:
        raise FormatError(f"{path}: header bit count {nbits} != sum of counts {cfg.n_bits}")
    w = n_words(nbits)
    payload = data[nl + 1:]
    if len(payload) < 8 * n * p * w:
        raise TruncatedFileError(f"{path}: descriptor payload is short")
    if len(payload) > 8 * n * p * w:
        raise FormatError(f"{path}: trailing bytes after descriptors")
    words = np.frombuffer(payload, dtype="<u8").reshape(n, p, w).astype(np.uint64)
    return words, cfg

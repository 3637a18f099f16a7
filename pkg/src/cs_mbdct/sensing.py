"""Compressive sampling y = Psi vec(S) and transpose back-projection to proxy images.

Random matrices use numpy's PCG64 bit generator (``np.random.default_rng``)
and ``Generator.standard_normal`` filled in row-major order, scaled by
``1/sqrt(m)`` so entries are N(0, 1/m).  Images are vectorized row-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError

MATRIX_MAGIC = "PSIMAT"
MATRIX_VERSION = "v1"
_TEXT_BYTES = frozenset(b"0123456789+-.eEinfaINFA \t\r\n")


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    entries: np.ndarray  # (m, n)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=np.float64)
        if e.ndim != 2:
            raise ValueError(f"measurement matrix must be 2-D, got shape {e.shape}")
        m, n = e.shape
        if m < 1 or n < 1:
            raise ValueError("measurement matrix must be non-empty")
        if m > n:
            raise ValueError(f"m={m} exceeds n={n}; not a compressive operator")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def rate(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class Measurement:
    values: np.ndarray  # (m,)
    rate: float
    shape: tuple[int, int]


def measurement_count(rate: float, n: int) -> int:
    """m = round(rate * n), halves rounded up, at least 1."""
    if not (0.0 < rate <= 1.0):
        raise ValueError(f"measurement rate must be in (0, 1], got {rate}")
    return max(1, int(math.floor(rate * n + 0.5)))


def generate_matrix(m: int, n: int, seed: int) -> MeasurementMatrix:
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    entries = rng.standard_normal((m, n)) * (1.0 / math.sqrt(m))
    return MeasurementMatrix(entries, {"kind": "random", "seed": int(seed), "variance": 1.0 / m})


def identity_matrix(n: int) -> MeasurementMatrix:
    return MeasurementMatrix(np.eye(n), {"kind": "identity"})


def sense(image: np.ndarray, psi: MeasurementMatrix) -> Measurement:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size != psi.n:
        raise ValueError(f"image of shape {image.shape} does not match n={psi.n}")
    y = psi.entries @ image.reshape(-1)
    return Measurement(y, psi.rate, image.shape)


def back_project(y: Measurement, psi: MeasurementMatrix) -> np.ndarray:
    """Proxy image Psi^T y at the sensed image's shape; no clipping."""
    values = np.asarray(y.values, dtype=np.float64)
    if values.shape != (psi.m,):
        raise ValueError(f"measurement of length {values.size} does not match m={psi.m}")
    h, w = y.shape
    if h * w != psi.n:
        raise ValueError(f"shape {y.shape} does not match n={psi.n}")
    return (psi.entries.T @ values).reshape(h, w)


def sense_batch(images: np.ndarray, psi: MeasurementMatrix) -> np.ndarray:
    """(N, H, W) images -> (N, m) measurements."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[1] * images.shape[2] != psi.n:
        raise ValueError(f"images of shape {images.shape[1:]} do not match n={psi.n}")
    return images.reshape(len(images), -1) @ psi.entries.T


def back_project_batch(y: np.ndarray, psi: MeasurementMatrix, shape: tuple[int, int]) -> np.ndarray:
    """(N, m) measurements -> (N, H, W) proxies."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != psi.m:
        raise ValueError(f"measurements of shape {y.shape} do not match m={psi.m}")
    return (y @ psi.entries).reshape(len(y), *shape)


def proxies(images: np.ndarray, psi: MeasurementMatrix) -> np.ndarray:
    return back_project_batch(sense_batch(images, psi), psi, images.shape[1:])


def save_matrix(psi: MeasurementMatrix, path, binary: bool = True) -> None:
    """Write ``PSIMAT v1 <m> <n>`` then either a little-endian f64 block or
    ``m`` text rows of shortest round-trip decimal floats."""
    header = f"{MATRIX_MAGIC} {MATRIX_VERSION} {psi.m} {psi.n}\n".encode("ascii")
    if binary:
        payload = psi.entries.astype("<f8").tobytes()
    else:
        payload = "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in psi.entries).encode(
            "ascii"
        )
    Path(path).write_bytes(header + payload)


def load_matrix(path) -> MeasurementMatrix:
    """Read either PSIMAT encoding. A payload made only of decimal-float
    characters is parsed as text, anything else must be exactly m*n f64 values."""
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise TruncatedFileError(f"{path}: missing PSIMAT header line")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 4 or parts[0] != MATRIX_MAGIC or parts[1] != MATRIX_VERSION:
        raise FormatError(f"{path}: bad header {data[:nl]!r}")
    try:
        m, n = int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise FormatError(f"{path}: bad dimensions in header") from exc
    payload = data[nl + 1:]
    if payload and set(payload) <= _TEXT_BYTES:
        rows = payload.decode("ascii").splitlines()
        rows = [r for r in rows if r.strip()]
        if len(rows) < m or not payload.endswith(b"\n"):
            raise TruncatedFileError(f"{path}: {len(rows)} of {m} rows present")
        try:
            entries = np.array([[float(tok) for tok in r.split()] for r in rows[:m]])
        except ValueError as exc:
            raise FormatError(f"{path}: unparsable or ragged rows") from exc
        if len(rows) > m or entries.shape != (m, n):
            raise FormatError(f"{path}: expected {m}x{n} values")
    else:
        if len(payload) < 8 * m * n:
            raise TruncatedFileError(f"{path}: expected {8 * m * n} payload bytes, found {len(payload)}")
        if len(payload) > 8 * m * n:
            raise FormatError(f"{path}: trailing bytes after matrix payload")
        entries = np.frombuffer(payload, dtype="<f8").reshape(m, n).astype(np.float64)
    return MeasurementMatrix(entries, {"kind": "loaded", "path": str(path)})

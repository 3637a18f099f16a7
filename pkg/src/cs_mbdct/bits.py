"""Bit vectors packed into little-endian uint64 words.

Bit ``i`` of a vector lives in word ``i // 64`` at position ``i % 64``;
unused high bits of the last word are always zero.
"""

import numpy as np


def n_words(nbits: int) -> int:
    return (nbits + 63) // 64


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(..., nbits) 0/1 array -> (..., n_words) uint64."""
    bits = np.asarray(bits)
    nbits = bits.shape[-1]
    pad = n_words(nbits) * 64 - nbits
    if pad:
        widths = [(0, 0)] * (bits.ndim - 1) + [(0, pad)]
        bits = np.pad(bits, widths)
    packed = np.packbits(bits.astype(bool), axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, nbits: int) -> np.ndarray:
    """(..., n_words) uint64 -> (..., nbits) uint8."""
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, count=nbits, bitorder="little")

"""Bit-packing kernels for the SQC1 code stream.

Two interchangeable backends are provided: a numba ``@njit`` loop and a
vectorized numpy path built on ``np.packbits``. The numba path is used when
numba imports cleanly and ``SQTTS_DISABLE_NUMBA`` is unset (or ``0``).
Both produce byte-identical output; bits are little-endian within each byte
and code ``j`` of a frame occupies bits ``[j*width, (j+1)*width)``.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SQTTS_DISABLE_NUMBA", "0") in ("", "0")


def frame_nbytes(d, width):
    return (d * width + 7) // 8


def pack_bits_numpy(codes, width):
    """Pack a (num_frames, d) array of non-negative ints into (num_frames, nbytes) uint8."""
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    num_frames, d = codes.shape
    nbytes = frame_nbytes(d, width)
    bits = ((codes[:, :, None] >> np.arange(width)) & 1).astype(np.uint8)
    bits = bits.reshape(num_frames, d * width)
    pad = nbytes * 8 - d * width
    if pad:
        bits = np.concatenate([bits, np.zeros((num_frames, pad), np.uint8)], axis=1)
    return np.packbits(bits, axis=1, bitorder="little")


def unpack_bits_numpy(packed, d, width):
    packed = np.ascontiguousarray(packed, dtype=np.uint8)
    num_frames = packed.shape[0]
    bits = np.unpackbits(packed, axis=1, bitorder="little")[:, : d * width]
    bits = bits.reshape(num_frames, d, width).astype(np.int64)
    return (bits << np.arange(width)).sum(axis=2)


if HAVE_NUMBA:

    @njit(cache=True)
    def _pack_bits_nb(codes, width, nbytes):
        num_frames, d = codes.shape
        out = np.zeros((num_frames, nbytes), dtype=np.uint8)
        for f in range(num_frames):
            pos = 0
            for j in range(d):
                v = codes[f, j]
                for b in range(width):
                    if (v >> b) & 1:
                        out[f, pos >> 3] |= np.uint8(1 << (pos & 7))
                    pos += 1
        return out

    @njit(cache=True)
    def _unpack_bits_nb(packed, d, width):
        num_frames = packed.shape[0]
        out = np.zeros((num_frames, d), dtype=np.int64)
        for f in range(num_frames):
            pos = 0
            for j in range(d):
                v = 0
                for b in range(width):
                    if (packed[f, pos >> 3] >> (pos & 7)) & 1:
                        v |= 1 << b
                    pos += 1
                out[f, j] = v
        return out

    def pack_bits_numba(codes, width):
        codes = np.ascontiguousarray(codes, dtype=np.int64)
        return _pack_bits_nb(codes, width, frame_nbytes(codes.shape[1], width))

    def unpack_bits_numba(packed, d, width):
        return _unpack_bits_nb(np.ascontiguousarray(packed, dtype=np.uint8), d, width)

else:  # pragma: no cover
    pack_bits_numba = pack_bits_numpy
    unpack_bits_numba = unpack_bits_numpy


def pack_bits(codes, width):
    if USE_NUMBA:
        return pack_bits_numba(codes, width)
    return pack_bits_numpy(codes, width)


def unpack_bits(packed, d, width):
    if USE_NUMBA:
        return unpack_bits_numba(packed, d, width)
    return unpack_bits_numpy(packed, d, width)

"""Minimal deterministic PNG writer.

The zlib stream is produced here rather than by ``zlib.compress`` so the
bytes do not depend on which deflate implementation the interpreter links
against: one fixed-Huffman block, run-length matches at distance 1 only.
Rows use the Up filter, which turns repeated rows into zero runs.
Only checksums (CRC-32, Adler-32) come from :mod:`zlib`.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_MAX_MATCH = 258

# (base length, extra bits) for length codes 257..285
_LENGTH_BASE = [3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31, 35, 43, 51, 59,
                67, 83, 99, 115, 131, 163, 195, 227, 258]
_LENGTH_EXTRA = [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3,
                 4, 4, 4, 4, 5, 5, 5, 5, 0]


def _reverse(code: int, nbits: int) -> int:
    out = 0
    for _ in range(nbits):
        out = (out << 1) | (code & 1)
        code >>= 1
    return out


def _fixed_code(symbol: int) -> tuple[int, int]:
    if symbol < 144:
        return 0x30 + symbol, 8
    if symbol < 256:
        return 0x190 + symbol - 144, 9
    if symbol < 280:
        return symbol - 256, 7
    return 0xC0 + symbol - 280, 8


# Huffman codes go out most-significant bit first, so store them pre-reversed
_LITLEN = [(_reverse(c, n), n) for c, n in map(_fixed_code, range(288))]


def _length_symbol(length: int) -> tuple[int, int, int]:
    """(symbol, extra value, extra bit count) for a match length in 3..258."""
    for i in range(len(_LENGTH_BASE) - 1, -1, -1):
        if length >= _LENGTH_BASE[i]:
            return 257 + i, length - _LENGTH_BASE[i], _LENGTH_EXTRA[i]
    raise ValueError(length)


_LENGTH_TABLE = {n: _length_symbol(n) for n in range(3, _MAX_MATCH + 1)}


class _BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, value: int, nbits: int) -> None:
        self.acc |= value << self.nbits
        self.nbits += nbits
        while self.nbits >= 8:
            self.out.append(self.acc & 0xFF)
            self.acc >>= 8
            self.nbits -= 8

    def finish(self) -> bytes:
        if self.nbits:
            self.out.append(self.acc & 0xFF)
        self.acc = self.nbits = 0
        return bytes(self.out)


def _runs(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if data.size == 0:
        return np.empty(0, np.uint8), np.empty(0, np.int64)
    change = np.flatnonzero(data[1:] != data[:-1]) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [data.size])))
    return data[starts], lengths


def deflate(data: bytes) -> bytes:
    """Raw deflate: a single fixed-Huffman block with distance-1 run matches."""
    bw = _BitWriter()
    bw.write(1, 1)  # BFINAL
    bw.write(1, 2)  # BTYPE = fixed Huffman
    values, lengths = _runs(np.frombuffer(data, dtype=np.uint8))
    for value, length in zip(values.tolist(), lengths.tolist()):
        bw.write(*_LITLEN[value])
        remaining = length - 1
        while remaining >= 3:
            n = min(remaining, _MAX_MATCH)
            if 0 < remaining - n < 3:
                n = remaining - 3  # leave a matchable tail
            sym, extra, extra_bits = _LENGTH_TABLE[n]
            bw.write(*_LITLEN[sym])
            if extra_bits:
                bw.write(extra, extra_bits)
            bw.write(0, 5)  # distance code 0 = distance 1
            remaining -= n
        for _ in range(remaining):
            bw.write(*_LITLEN[value])
    bw.write(*_LITLEN[256])
    return bw.finish()


def zlib_stream(data: bytes) -> bytes:
    header = b"\x78\x01"  # deflate, 32K window, fastest-level hint; 0x7801 % 31 == 0
    return header + deflate(data) + struct.pack(">I", zlib.adler32(data) & 0xFFFFFFFF)


def _chunk(kind: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + kind + payload
            + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF))


def encode_png(rgb: np.ndarray) -> bytes:
    """Encode an H x W x 3 uint8 array as an 8-bit RGB PNG with no ancillary chunks."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected an H x W x 3 uint8 array")
    h, w, _ = rgb.shape
    rows = rgb.reshape(h, w * 3)
    up = rows.copy()
    up[1:] = rows[1:] - rows[:-1]  # uint8 wraps mod 256 as the Up filter requires
    filtered = np.empty((h, w * 3 + 1), dtype=np.uint8)
    filtered[:, 0] = 2
    filtered[0, 0] = 0  # Up on the first row equals None
    filtered[:, 1:] = up
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib_stream(filtered.tobytes())) + _chunk(b"IEND", b""))


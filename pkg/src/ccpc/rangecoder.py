"""Byte-oriented integer range coder over quantized CDF tables.

This is the reference coder used by the codec pipeline: integer-only
arithmetic (64-bit low / 32-bit range, byte-wise renormalization with
carry propagation), so output bytes are identical on every platform.

Payload format (also implemented by the TypeScript coder in frontend/):
  - encoder state starts at low=0, range=0xFFFFFFFF, cache=0, cache_size=1
  - every CDF has total 2**16; a symbol s maps to the interval
    [cdf[s], cdf[s+1]) scaled by range >> 16
  - renormalization emits one byte whenever range < 2**24, LZMA style
    (the first emitted byte is always the initial zero cache byte)
  - finish() flushes five more bytes; the decoder primes its 32-bit
    window by reading five bytes, discarding the leading zero
"""

from __future__ import annotations

from typing import Sequence

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class CorruptStreamError(Exception):
    """Decoder state left its legal interval or ran out of bytes."""


def validate_cdf(cdf: Sequence[int]) -> None:
    """Check a quantized CDF: first 0, last 65536, strictly increasing."""
    if len(cdf) < 2:
        raise ValueError("CDF needs at least one symbol")
    if cdf[0] != 0 or cdf[-1] != TOTAL:
        raise ValueError(f"CDF must span [0, {TOTAL}], got [{cdf[0]}, {cdf[-1]}]")
    for i in range(len(cdf) - 1):
        if cdf[i + 1] <= cdf[i]:
            raise ValueError(f"CDF not strictly increasing at index {i}")


class RangeEncoder:
    def __init__(self) -> None:
        self._low = 0
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._finished = False

    def encode(self, cdf: Sequence[int], symbol: int) -> None:
        """Encode one symbol under its CDF (total must be 2**16)."""
        if not 0 <= symbol < len(cdf) - 1:
            raise ValueError(f"symbol {symbol} out of range for {len(cdf) - 1} symbols")
        cum = int(cdf[symbol])
        freq = int(cdf[symbol + 1]) - cum
        r = self._range >> PRECISION
        self._low += r * cum
        self._range = r * freq
        while self._range < _TOP:
            self._shift_low()
            self._range <<= 8

    def _shift_low(self) -> None:
        low = self._low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            out = self._out
            out.append((self._cache + carry) & 0xFF)
            filler = (0xFF + carry) & 0xFF
            for _ in range(self._cache_size - 1):
                out.append(filler)
            self._cache = (low >> 24) & 0xFF
            self._cache_size = 0
        self._cache_size += 1
        self._low = (low << 8) & _MASK32

    def finish(self) -> bytes:
        """Flush remaining state; the encoder cannot be reused afterwards."""
        if self._finished:
            raise RuntimeError("finish() already called")
        self._finished = True
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0
        self._range = _MASK32
        self._code = 0
        for _ in range(5):
            self._code = ((self._code << 8) | self._read_byte()) & _MASK32

    def _read_byte(self) -> int:
        if self._pos >= len(self._data):
            raise CorruptStreamError("range decoder ran past end of payload")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode(self, cdf: Sequence[int]) -> int:
        """Decode one symbol; inverse of RangeEncoder.encode under the same CDF."""
        r = self._range >> PRECISION
        value = self._code // r
        if value >= TOTAL:
            raise CorruptStreamError("decoded cumulative value exceeds CDF total")
        # largest s with cdf[s] <= value
        lo, hi = 0, len(cdf) - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if int(cdf[mid]) <= value:
                lo = mid
            else:
                hi = mid
        symbol = lo
        cum = int(cdf[symbol])
        freq = int(cdf[symbol + 1]) - cum
        self._code -= r * cum
        self._range = r * freq
        if self._code >= self._range:
            raise CorruptStreamError("decoder state outside current interval")
        while self._range < _TOP:
            self._code = ((self._code << 8) | self._read_byte()) & _MASK32
            self._range <<= 8
        return symbol

    @property
    def bytes_consumed(self) -> int:
        return self._pos


def encode_symbols(symbols: Sequence[int], cdfs: Sequence[Sequence[int]]) -> bytes:
    """Encode symbols[i] under cdfs[i] and return the payload bytes."""
    if len(symbols) != len(cdfs):
        raise ValueError("need one CDF per symbol")
    enc = RangeEncoder()
    for sym, cdf in zip(symbols, cdfs):
        enc.encode(cdf, int(sym))
    return enc.finish()


def decode_symbols(data: bytes, cdfs: Sequence[Sequence[int]]) -> list[int]:
    """Decode len(cdfs) symbols from a payload produced by encode_symbols."""
    dec = RangeDecoder(data)
    return [dec.decode(cdf) for cdf in cdfs]


def measured_length_bits(symbols: Sequence[int], cdfs: Sequence[Sequence[int]]) -> int:
    """Actual payload size in bits for the given symbol/CDF sequence."""
    return 8 * len(encode_symbols(symbols, cdfs))


def ideal_length_bits(symbols: Sequence[int], cdfs: Sequence[Sequence[int]]) -> float:
    """Entropy-ideal size in bits: -sum log2(freq/total)."""
    import math

    bits = 0.0
    for sym, cdf in zip(symbols, cdfs):
        freq = int(cdf[int(sym) + 1]) - int(cdf[int(sym)])
        bits -= math.log2(freq / TOTAL)
    return bits

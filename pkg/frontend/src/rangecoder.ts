/**
 * Byte-oriented integer range coder over 16-bit quantized CDF tables.
 *
 * Payload format (identical to the Python reference coder in the ccpc
 * package, so streams are interchangeable):
 *
 *  - encoder state: low (up to 33 bits), range (32 bits, starts at
 *    0xFFFFFFFF), cache byte = 0, cacheSize = 1;
 *  - encoding symbol s under a table: r = range >>> 16;
 *    low += r * cdf[s]; range = r * (cdf[s+1] - cdf[s]);
 *  - whenever range < 2^24 one byte is shifted out of `low` (LZMA-style
 *    carry handling, so the first output byte is always the initial zero
 *    cache), then range <<= 8;
 *  - finish() shifts five more bytes; the decoder primes a 32-bit window
 *    from the first five bytes (discarding that leading zero) and mirrors
 *    the interval updates.
 *
 * All quantities are integers below 2^53, so every operation on JS
 * numbers is exact; there is no floating-point rounding anywhere in the
 * coding path.
 */

import { CDF_TOTAL, CdfTable, PRECISION, symbolFromCumulative } from "./cdf.js";

const TOP = 1 << 24;
const MASK32 = 0xffffffff;
const TWO32 = 0x100000000;

export class CorruptStreamError extends Error {}

export class RangeEncoder {
  private low = 0; // < 2^33, exact as an integer-valued double
  private range = MASK32;
  private cache = 0;
  private cacheSize = 1;
  private out: number[] = [];
  private finished = false;

  encode(cdf: CdfTable, symbol: number): void {
    if (!Number.isInteger(symbol) || symbol < 0 || symbol >= cdf.length - 1) {
      throw new RangeError(`symbol ${symbol} out of range`);
    }
    const cum = cdf[symbol];
    const freq = cdf[symbol + 1] - cum;
    const r = Math.floor(this.range / CDF_TOTAL);
    this.low += r * cum;
    this.range = r * freq;
    while (this.range < TOP) {
      this.shiftLow();
      this.range *= 256;
    }
  }

  private shiftLow(): void {
    if (this.low < 0xff000000 || this.low > MASK32) {
      const carry = Math.floor(this.low / TWO32);
      this.out.push((this.cache + carry) & 0xff);
      const filler = (0xff + carry) & 0xff;
      for (let i = 1; i < this.cacheSize; i++) {
        this.out.push(filler);
      }
      this.cache = Math.floor(this.low / 0x1000000) & 0xff;
      this.cacheSize = 0;
    }
    this.cacheSize += 1;
    this.low = (this.low % TWO32) * 256 % TWO32;
  }

  finish(): Uint8Array {
    if (this.finished) {
      throw new Error("finish() already called");
    }
    this.finished = true;
    for (let i = 0; i < 5; i++) {
      this.shiftLow();
    }
    return Uint8Array.from(this.out);
  }
}

export class RangeDecoder {
  private readonly data: Uint8Array;
  private pos = 0;
  private range = MASK32;
  private code = 0;

  constructor(data: Uint8Array) {
    this.data = data;
    for (let i = 0; i < 5; i++) {
      this.code = (this.code * 256 + this.readByte()) % TWO32;
    }
  }

  private readByte(): number {
    if (this.pos >= this.data.length) {
      throw new CorruptStreamError("range decoder ran past end of payload");
    }
    return this.data[this.pos++];
  }

  decode(cdf: CdfTable): number {
    const r = Math.floor(this.range / CDF_TOTAL);
    const value = Math.floor(this.code / r);
    if (value >= CDF_TOTAL) {
      throw new CorruptStreamError("decoded cumulative value exceeds CDF total");
    }
    const symbol = symbolFromCumulative(cdf, value);
    const cum = cdf[symbol];
    const freq = cdf[symbol + 1] - cum;
    this.code -= r * cum;
    this.range = r * freq;
    if (this.code >= this.range) {
      throw new CorruptStreamError("decoder state outside current interval");
    }
    while (this.range < TOP) {
      this.code = (this.code * 256 + this.readByte()) % TWO32;
      this.range *= 256;
    }
    return symbol;
  }

  get bytesConsumed(): number {
    return this.pos;
  }
}

export function encodeSymbols(
  symbols: ArrayLike<number>,
  cdfs: ArrayLike<CdfTable>
): Uint8Array {
  if (symbols.length !== cdfs.length) {
    throw new RangeError("need one CDF per symbol");
  }
  const enc = new RangeEncoder();
  for (let i = 0; i < symbols.length; i++) {
    enc.encode(cdfs[i], symbols[i]);
  }
  return enc.finish();
}

export function decodeSymbols(
  data: Uint8Array,
  cdfs: ArrayLike<CdfTable>
): number[] {
  const dec = new RangeDecoder(data);
  const out: number[] = [];
  for (let i = 0; i < cdfs.length; i++) {
    out.push(dec.decode(cdfs[i]));
  }
  return out;
}

/** Actual payload size in bits for the given symbol/CDF sequence. */
export function measuredLengthBits(
  symbols: ArrayLike<number>,
  cdfs: ArrayLike<CdfTable>
): number {
  return 8 * encodeSymbols(symbols, cdfs).length;
}

export { PRECISION, CDF_TOTAL };

/** Quantized cumulative distribution tables with a fixed 16-bit total. */

export const PRECISION = 16;
export const CDF_TOTAL = 1 << PRECISION; // 65536

/**
 * A CDF table is an integer array of length numSymbols + 1 with counts[0]
 * = 0, counts[last] = 65536 and every adjacent gap >= 1. Symbol s owns the
 * interval [counts[s], counts[s + 1]).
 */
export type CdfTable = ReadonlyArray<number> | Int32Array | Uint32Array;

export class CdfError extends Error {}

export function validateCdf(cdf: CdfTable): void {
  if (cdf.length < 2) {
    throw new CdfError("CDF needs at least one symbol");
  }
  if (cdf[0] !== 0 || cdf[cdf.length - 1] !== CDF_TOTAL) {
    throw new CdfError(`CDF must span [0, ${CDF_TOTAL}]`);
  }
  for (let i = 0; i + 1 < cdf.length; i++) {
    if (!Number.isInteger(cdf[i]) || cdf[i + 1] <= cdf[i]) {
      throw new CdfError(`CDF not strictly increasing at index ${i}`);
    }
  }
}

/** Largest s with cdf[s] <= value; value must lie in [0, 65536). */
export function symbolFromCumulative(cdf: CdfTable, value: number): number {
  let lo = 0;
  let hi = cdf.length - 1;
  while (hi - lo > 1) {
    const mid = (lo + hi) >>> 1;
    if (cdf[mid] <= value) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/** Ideal code length of a symbol sequence in bits: -sum log2(freq/total). */
export function idealLengthBits(
  symbols: ArrayLike<number>,
  cdfs: ArrayLike<CdfTable>
): number {
  let bits = 0;
  for (let i = 0; i < symbols.length; i++) {
    const cdf = cdfs[i];
    const s = symbols[i];
    bits -= Math.log2((cdf[s + 1] - cdf[s]) / CDF_TOTAL);
  }
  return bits;
}

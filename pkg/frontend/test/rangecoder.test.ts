import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import test from "node:test";
import { fileURLToPath } from "node:url";

import { CDF_TOTAL, CdfError, idealLengthBits, validateCdf } from "../src/cdf.js";
import {
  CorruptStreamError,
  RangeDecoder,
  decodeSymbols,
  encodeSymbols,
  measuredLengthBits,
} from "../src/rangecoder.js";

const FLUSH_BYTES = 6; // initial zero cache byte + five-byte flush

/** xorshift128 PRNG so the fuzz corpus is reproducible. */
function makeRng(seed: number): () => number {
  let x = seed >>> 0 || 1;
  let y = 362436069;
  let z = 521288629;
  let w = 88675123;
  return () => {
    const t = (x ^ (x << 11)) >>> 0;
    x = y;
    y = z;
    z = w;
    w = (w ^ (w >>> 19) ^ (t ^ (t >>> 8))) >>> 0;
    return w;
  };
}

function randomCdf(rng: () => number, numSymbols: number): number[] {
  // every symbol gets one count, the rest is spread at random
  const counts = new Array<number>(numSymbols).fill(1);
  let remaining = CDF_TOTAL - numSymbols;
  // spiky allocation: a few symbols take most of the mass
  const heavy = Math.max(1, numSymbols >>> 3);
  for (let i = 0; i < heavy && remaining > 0; i++) {
    const take = rng() % (remaining + 1);
    counts[rng() % numSymbols] += take;
    remaining -= take;
  }
  while (remaining > 0) {
    const take = Math.min(remaining, 1 + (rng() % 997));
    counts[rng() % numSymbols] += take;
    remaining -= take;
  }
  const cdf = new Array<number>(numSymbols + 1);
  cdf[0] = 0;
  for (let i = 0; i < numSymbols; i++) {
    cdf[i + 1] = cdf[i] + counts[i];
  }
  return cdf;
}

test("validateCdf accepts good tables and rejects bad ones", () => {
  validateCdf([0, 16384, 32768, 49152, 65536]);
  assert.throws(() => validateCdf([0, 0, 65536]), CdfError);
  assert.throws(() => validateCdf([0, 65535]), CdfError);
  assert.throws(() => validateCdf([1, 65536]), CdfError);
});

test("fair coin costs about one bit per symbol", () => {
  const cdf = [0, CDF_TOTAL / 2, CDF_TOTAL];
  const rng = makeRng(7);
  const symbols = Array.from({ length: 10_000 }, () => rng() % 2);
  const bits = measuredLengthBits(symbols, symbols.map(() => cdf));
  assert.ok(bits >= 10_000 && bits <= 10_000 + 256, `got ${bits}`);
});

test("near-deterministic stream stays tiny", () => {
  const cdf = [0, CDF_TOTAL - 1, CDF_TOTAL];
  const symbols = new Array<number>(10_000).fill(0);
  const bits = measuredLengthBits(symbols, symbols.map(() => cdf));
  assert.ok(bits < 40 + 8 * FLUSH_BYTES, `got ${bits}`);
});

test("exhaustive single-symbol streams over a 256-symbol alphabet", () => {
  const rng = makeRng(99);
  const cdf = randomCdf(rng, 256);
  validateCdf(cdf);
  for (let s = 0; s < 256; s++) {
    const payload = encodeSymbols([s], [cdf]);
    assert.deepEqual(decodeSymbols(payload, [cdf]), [s]);
  }
});

test("million-symbol fuzz round trip with zero mismatches", () => {
  const rng = makeRng(123456789);
  const pool: number[][] = [];
  for (let i = 0; i < 64; i++) {
    pool.push(randomCdf(rng, 2 + (rng() % 300)));
  }
  const total = 1_000_000;
  const cdfs = new Array<number[]>(total);
  const symbols = new Array<number>(total);
  for (let i = 0; i < total; i++) {
    const cdf = pool[rng() % pool.length];
    cdfs[i] = cdf;
    symbols[i] = rng() % (cdf.length - 1);
  }
  const payload = encodeSymbols(symbols, cdfs);
  const decoded = decodeSymbols(payload, cdfs);
  let mismatches = 0;
  for (let i = 0; i < total; i++) {
    if (decoded[i] !== symbols[i]) mismatches++;
  }
  assert.equal(mismatches, 0);
  const ideal = idealLengthBits(symbols, cdfs);
  const actual = 8 * payload.length;
  assert.ok(actual >= ideal, "coder beat the entropy bound");
  assert.ok(actual <= ideal * 1.001 + 256, `${actual} bits vs ideal ${ideal}`);
});

test("truncated payload raises and never yields wrong symbols silently", () => {
  const rng = makeRng(5);
  const cdf = randomCdf(rng, 64);
  const symbols = Array.from({ length: 2000 }, () => rng() % 64);
  const payload = encodeSymbols(symbols, symbols.map(() => cdf));
  const truncated = payload.slice(0, payload.length >> 1);
  const dec = new RangeDecoder(truncated);
  const decoded: number[] = [];
  assert.throws(() => {
    for (let i = 0; i < symbols.length; i++) {
      decoded.push(dec.decode(cdf));
    }
  }, CorruptStreamError);
  assert.deepEqual(decoded, symbols.slice(0, decoded.length));
});

test("random noise never produces anything but symbols or CorruptStreamError", () => {
  const rng = makeRng(17);
  const cdf = randomCdf(rng, 8);
  for (let trial = 0; trial < 50; trial++) {
    const noise = Uint8Array.from({ length: 24 }, () => rng() % 256);
    try {
      const dec = new RangeDecoder(noise);
      for (let i = 0; i < 40; i++) {
        const s = dec.decode(cdf);
        assert.ok(s >= 0 && s < 8);
      }
    } catch (err) {
      assert.ok(err instanceof CorruptStreamError);
    }
  }
});

test("interleaved two-table stream round trips", () => {
  const rng = makeRng(31);
  const a = randomCdf(rng, 17);
  const b = randomCdf(rng, 130);
  const cdfs = Array.from({ length: 5000 }, (_, i) => (i % 2 === 0 ? a : b));
  const symbols = cdfs.map((c) => rng() % (c.length - 1));
  const payload = encodeSymbols(symbols, cdfs);
  assert.deepEqual(decodeSymbols(payload, cdfs), symbols);
});

interface Vector {
  name: string;
  tables: number[][];
  table_ids: number[];
  symbols: number[];
  payload_hex: string;
}

test("byte-identical to the Python reference coder on every vector", () => {
  const here = dirname(fileURLToPath(import.meta.url));
  // dist/test/ at runtime; vectors live next to the TS sources
  const raw = readFileSync(join(here, "..", "..", "test", "vectors", "rangecoder.json"), "utf8");
  const vectors = JSON.parse(raw) as Vector[];
  assert.ok(vectors.length >= 4);
  for (const vec of vectors) {
    const cdfs = vec.table_ids.map((t) => vec.tables[t]);
    for (const table of vec.tables) validateCdf(table);
    const payload = encodeSymbols(vec.symbols, cdfs);
    assert.equal(
      Buffer.from(payload).toString("hex"),
      vec.payload_hex,
      `payload mismatch in ${vec.name}`
    );
    assert.deepEqual(decodeSymbols(payload, cdfs), vec.symbols, `decode mismatch in ${vec.name}`);
  }
});

#!/usr/bin/env python3
"""Regenerate the cross-implementation test vectors in test/vectors/.

Uses the Python reference coder from the ccpc package; the TypeScript
tests replay every case and require byte-identical payloads.
"""

import json
from pathlib import Path

import numpy as np

from ccpc.rangecoder import TOTAL, encode_symbols

OUT = Path(__file__).resolve().parent.parent / "test" / "vectors" / "rangecoder.json"


def random_cdf(rng: np.random.Generator, num_symbols: int) -> list[int]:
    weights = rng.dirichlet(np.full(num_symbols, 0.3))
    counts = 1 + rng.multinomial(TOTAL - num_symbols, weights)
    return [0, *np.cumsum(counts).tolist()]


def case(name: str, cdfs: list[list[int]], table_ids: list[int], symbols: list[int]) -> dict:
    payload = encode_symbols(symbols, [cdfs[t] for t in table_ids])
    return {
        "name": name,
        "tables": cdfs,
        "table_ids": table_ids,
        "symbols": symbols,
        "payload_hex": payload.hex(),
    }


def main() -> None:
    rng = np.random.default_rng(20240817)
    cases = []

    uniform2 = [0, TOTAL // 2, TOTAL]
    cases.append(case("fair_coin", [uniform2], [0] * 16, [int(b) for b in rng.integers(0, 2, 16)]))

    skew = [0, TOTAL - 1, TOTAL]
    cases.append(case("near_deterministic", [skew], [0] * 500, [0] * 500))

    big = random_cdf(rng, 256)
    syms = [int(v) for v in rng.integers(0, 256, size=1000)]
    cases.append(case("single_table_1k", [big], [0] * 1000, syms))

    tables = [random_cdf(rng, int(n)) for n in rng.integers(2, 200, size=8)]
    ids = [int(v) for v in rng.integers(0, 8, size=5000)]
    syms = [int(rng.integers(0, len(tables[t]) - 1)) for t in ids]
    cases.append(case("mixed_tables_5k", tables, ids, syms))

    cases.append(case("empty_stream", [uniform2], [], []))

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(cases))
    print(f"wrote {OUT} ({OUT.stat().st_size} bytes, {len(cases)} cases)")


if __name__ == "__main__":
    main()

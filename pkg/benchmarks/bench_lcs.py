"""Compare the compiled LCS kernel against the pure-Python fallback.

Usage: python3 benchmarks/bench_lcs.py [--repeats N]

Both backends run the same two-row dynamic program over pre-encoded int
sequences, so the measured gap is interpreter overhead only.
"""
import argparse
import random
import statistics
import time
from array import array

from litkg import lcs


def _encoded_pair(rng: random.Random, length: int, vocab: int):
    a = array("i", (rng.randrange(vocab) for _ in range(length)))
    b = array("i", (rng.randrange(vocab) for _ in range(length)))
    return a, b


def _time(fn, pairs, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for a, b in pairs:
            fn(a, b)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per size; best run is kept")
    args = parser.parse_args()

    rng = random.Random(11_17)
    sizes = [(64, 8), (256, 16), (1024, 64), (4096, 256)]
    print(f"active backend: {lcs.BACKEND}")
    header = f"{'length':>8} {'pairs':>6} {'python':>12} {'compiled':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for length, vocab in sizes:
        pair_count = max(1, 65536 // length)
        pairs = [_encoded_pair(rng, length, vocab) for _ in range(pair_count)]
        for a, b in pairs[:3]:
            expected = lcs.lcs_length_python(a, b)
            if lcs.BACKEND == "compiled":
                assert lcs.lcs_length_native(a, b) == expected

        py_time = _time(lcs.lcs_length_python, pairs, args.repeats)
        if lcs.BACKEND == "compiled":
            native_time = _time(lcs.lcs_length_native, pairs, args.repeats)
            speedup = py_time / native_time if native_time else float("inf")
            print(f"{length:>8} {pair_count:>6} {py_time:>11.4f}s {native_time:>11.4f}s "
                  f"{speedup:>7.1f}x")
        else:
            print(f"{length:>8} {pair_count:>6} {py_time:>11.4f}s {'n/a':>12} {'n/a':>8}")

    sample = statistics.mean(
        lcs.lcs_length([rng.randrange(4) for _ in range(512)],
                       [rng.randrange(4) for _ in range(512)])
        for _ in range(3)
    )
    print(f"\nsanity: mean LCS of three 512-token 4-symbol pairs = {sample:.1f}")


if __name__ == "__main__":
    main()

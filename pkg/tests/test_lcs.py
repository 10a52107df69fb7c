import itertools
import random

import pytest

from litkg import lcs

from oracles import lcs_enumeration, lcs_memo


def test_backend_is_reported():
    assert lcs.BACKEND in ("compiled", "python")


def test_degenerate_inputs():
    assert lcs.lcs_length([], []) == 0
    assert lcs.lcs_length([1, 2, 3], []) == 0
    assert lcs.lcs_length([], ["a"]) == 0
    assert lcs.lcs_length(["a", "b"], ["a", "b"]) == 2
    assert lcs.lcs_length([1, 2, 3], [4, 5, 6]) == 0


def test_accepts_arbitrary_hashable_tokens():
    a = ["the", "cell", ("tuple", 1), 3.5, "cell"]
    b = ["cell", ("tuple", 1), "cell", 3.5]
    assert lcs.lcs_length(a, b) == lcs_memo(a, b) == 3


def test_exhaustive_small_pairs_match_enumeration_oracle():
    # Every pair over a 3-symbol alphabet with lengths up to 4.
    pool = [
        seq
        for length in range(5)
        for seq in itertools.product(range(3), repeat=length)
    ]
    for a in pool:
        for b in pool:
            assert lcs.lcs_length(a, b) == lcs_enumeration(a, b), (a, b)


def test_seeded_pairs_match_enumeration_oracle_up_to_length_12():
    rng = random.Random(1207)
    for _ in range(1500):
        a = [rng.randrange(3) for _ in range(rng.randrange(13))]
        b = [rng.randrange(3) for _ in range(rng.randrange(13))]
        assert lcs.lcs_length(a, b) == lcs_enumeration(a, b), (a, b)


def test_seeded_long_pairs_match_memo_oracle():
    rng = random.Random(60_60)
    for _ in range(400):
        alphabet = rng.randrange(2, 9)
        a = [rng.randrange(alphabet) for _ in range(rng.randrange(61))]
        b = [rng.randrange(alphabet) for _ in range(rng.randrange(61))]
        assert lcs.lcs_length(a, b) == lcs_memo(a, b), (a, b)


def test_python_kernel_matches_public_entry_point():
    rng = random.Random(41)
    for _ in range(300):
        a = [rng.randrange(5) for _ in range(rng.randrange(40))]
        b = [rng.randrange(5) for _ in range(rng.randrange(40))]
        assert lcs.lcs_length_python(a, b) == lcs.lcs_length(a, b)


@pytest.mark.skipif(lcs.BACKEND != "compiled", reason="compiled kernel not built")
def test_native_kernel_matches_python_kernel():
    rng = random.Random(42)
    for _ in range(300):
        a = [rng.randrange(4) for _ in range(rng.randrange(50))]
        b = [rng.randrange(4) for _ in range(rng.randrange(50))]
        assert lcs.lcs_length_native(a, b) == lcs.lcs_length_python(a, b)


def test_lcs_basic_properties():
    rng = random.Random(77)
    for _ in range(200):
        a = [rng.randrange(4) for _ in range(rng.randrange(30))]
        b = [rng.randrange(4) for _ in range(rng.randrange(30))]
        got = lcs.lcs_length(a, b)
        assert got == lcs.lcs_length(b, a)
        assert 0 <= got <= min(len(a), len(b))
        assert lcs.lcs_length(a, a) == len(a)

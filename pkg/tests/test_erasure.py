import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairledger import erasure
from fairledger.errors import BadParams, InsufficientShards

import oracles

# computed by tests/oracles.py before the implementation existed
FROZEN_K2M2 = [bytes([1, 2]), bytes([3, 4]), bytes([5, 14]), bytes([7, 8])]
FROZEN_K4M4 = [bytes(p) for p in ([1, 2], [3, 4], [5, 6], [7, 8], [9, 138], [11, 188], [13, 206], [15, 240])]


def test_field_tables_match_oracle():
    for a in range(256):
        for b in range(0, 256, 7):
            assert erasure.gf_mul(a, b) == oracles.gf_mul(a, b)
    for a in range(1, 256):
        assert erasure.gf_mul(a, erasure.gf_inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        erasure.gf_inv(0)


@pytest.mark.parametrize("k,m", [(1, 1), (2, 2), (3, 3), (4, 4), (5, 3)])
def test_generator_matches_oracle(k, m):
    assert erasure.generator_matrix(k, m).tolist() == oracles.generator(k, m)
    assert erasure.generator_matrix(k, m)[:k].tolist() == np.eye(k, dtype=int).tolist()


def test_k1_is_replication():
    assert erasure.encode_shards(bytes([5, 6, 7]), 1, 1) == [bytes([5, 6, 7])] * 2


def test_striping_only():
    assert erasure.encode_shards(bytes([1, 2, 3, 4]), 2, 0) == [bytes([1, 2]), bytes([3, 4])]


def test_frozen_vectors():
    assert erasure.encode_shards(bytes([1, 2, 3, 4]), 2, 2) == FROZEN_K2M2
    assert erasure.encode_shards(bytes(range(1, 9)), 4, 4) == FROZEN_K4M4


def test_all_pairs_decode():
    shards = erasure.encode_shards(bytes([1, 2, 3, 4]), 2, 2)
    for subset in itertools.combinations(range(4), 2):
        assert erasure.decode_shards({i: shards[i] for i in subset}, 2, 2, 4) == bytes([1, 2, 3, 4])


def test_too_few_shards():
    shards = erasure.encode_shards(b"abcdef", 3, 2)
    with pytest.raises(InsufficientShards):
        erasure.decode_shards({0: shards[0], 4: shards[4]}, 3, 2, 6)


def test_padding_trimmed():
    data = b"seven b"
    shards = erasure.encode_shards(data, 3, 3)
    assert all(len(s) == 3 for s in shards)
    assert erasure.decode_shards({3: shards[3], 4: shards[4], 5: shards[5]}, 3, 3, len(data)) == data


def test_bad_params():
    with pytest.raises(BadParams):
        erasure.encode_shards(b"x", 0, 1)
    with pytest.raises(BadParams):
        erasure.encode_shards(b"", 2, 2)


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=1, max_size=300), st.sampled_from([(1, 1), (2, 2), (3, 3), (4, 4), (3, 2)]), st.data())
def test_any_k_subset_roundtrip(data, km, draw):
    k, m = km
    shards = erasure.encode_shards(data, k, m)
    assert shards == oracles.encode(data, k, m)
    subset = draw.draw(st.lists(st.integers(0, k + m - 1), min_size=k, max_size=k, unique=True))
    assert erasure.decode_shards({i: shards[i] for i in subset}, k, m, len(data)) == data

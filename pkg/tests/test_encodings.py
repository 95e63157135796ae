import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurocomp.encodings import (
    AluTable,
    CapacityError,
    MAX_TABLE_N,
    TABLE_OPS,
    binary_to_unit,
    bits_to_int,
    build_mod_table,
    decode,
    int_to_bits,
    is_word,
    one_hot,
    table_lookup,
    unit_to_binary,
)
from neurocomp.substrate import ShapeError, Tensor, grad_check

# independent integer semantics, written out here rather than imported
ORACLE = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "inc": lambda a, b: a + 1,
    "dec": lambda a, b: a - 1,
    "max": max,
    "min": min,
}


def test_one_hot_examples():
    np.testing.assert_array_equal(one_hot(2, 5), [0, 0, 1, 0, 0])
    np.testing.assert_array_equal(one_hot(0, 3), [1, 0, 0])
    with pytest.raises(IndexError):
        one_hot(5, 5)


def test_decode_examples():
    assert decode([0, 0, 1, 0, 0]) == 2
    assert decode([0.4, 0.6]) == 1
    assert decode([0.5, 0.5]) == 0
    np.testing.assert_array_equal(decode(np.eye(4)[[3, 1]]), [3, 1])


@given(st.integers(1, 64).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1))))
def test_decode_inverts_one_hot(nk):
    n, k = nk
    assert decode(one_hot(k, n)) == k and is_word(one_hot(k, n))


def test_unit_to_binary_examples():
    np.testing.assert_array_equal(unit_to_binary(one_hot(5, 8), 3).data, [1, 0, 1])
    np.testing.assert_allclose(unit_to_binary([0.5, 0.5], 1).data, [0.5])
    np.testing.assert_array_equal(unit_to_binary(one_hot(0, 16), 4).data, [0, 0, 0, 0])
    with pytest.raises(CapacityError):
        unit_to_binary(one_hot(0, 9), 3)


def test_binary_to_unit_two_bit_closed_form():
    np.testing.assert_array_equal(binary_to_unit([1.0, 0.0]).data, [0, 1, 0, 0])
    np.testing.assert_allclose(binary_to_unit([0.5, 0.5]).data, [0.25] * 4)
    # general 2-bit formula: [(1-b0)(1-b1), b0(1-b1), (1-b0)b1, b0 b1]
    b0, b1 = 0.3, 0.8
    expected = [(1 - b0) * (1 - b1), b0 * (1 - b1), (1 - b0) * b1, b0 * b1]
    np.testing.assert_allclose(binary_to_unit([b0, b1]).data, expected, rtol=0, atol=0)


@pytest.mark.parametrize("b", range(1, 7))
def test_round_trips_on_all_diracs(b):
    for k in range(2**b):
        w = one_hot(k, 2**b)
        bits = unit_to_binary(w, b).data
        np.testing.assert_array_equal(bits, int_to_bits(k, b))
        np.testing.assert_array_equal(binary_to_unit(bits).data, w)
        assert bits_to_int(bits) == k


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_binary_to_unit_is_a_distribution_with_matching_marginals(bits):
    w = binary_to_unit(bits).data
    assert is_word(w, atol=1e-12)
    np.testing.assert_allclose(unit_to_binary(w, len(bits)).data, bits, atol=1e-12)


def test_conversions_are_differentiable(rng):
    assert grad_check(lambda x: (binary_to_unit(x) * Tensor(np.arange(8.0))).sum(), rng.random(3)) < 1e-6
    assert grad_check(lambda w: (unit_to_binary(w, 3) * unit_to_binary(w, 3)).sum(), rng.random(8)) < 1e-6


def test_table_slices():
    assert decode(build_mod_table(["mul"], 5).table[0, 2, 4]) == 3
    assert decode(build_mod_table(["mul"], 9).table[0, 2, 4]) == 8
    T = build_mod_table(["add"], 7)
    for k in range(7):
        assert decode(T.table[0, 0, k]) == k


def test_table_lookup_examples():
    T = build_mod_table(["add", "mul"], 5)
    out = table_lookup(T, T.op_word("add"), one_hot(2, 5), one_hot(2, 5))
    np.testing.assert_array_equal(out.data, one_hot(4, 5))
    T7 = build_mod_table(["add", "mul"], 7)
    out = table_lookup(T7, [0.5, 0.5], one_hot(2, 7), one_hot(3, 7))
    np.testing.assert_allclose(out.data, 0.5 * one_hot(5, 7) + 0.5 * one_hot(6, 7))


def test_table_matches_integer_oracle_exhaustively_at_n8():
    n = 8
    T = build_mod_table(TABLE_OPS, n)
    for f, op in enumerate(TABLE_OPS):
        for i, j in itertools.product(range(n), repeat=2):
            want = ORACLE[op](i, j) % n if op in ORACLE else i
            out = table_lookup(T, one_hot(f, len(TABLE_OPS)), one_hot(i, n), one_hot(j, n))
            np.testing.assert_array_equal(out.data, one_hot(want, n))


def test_table_lookup_batched_and_validated():
    T = build_mod_table(["add"], 4)
    a = np.eye(4)[[1, 2, 3]]
    out = table_lookup(T, np.ones((3, 1)), a, a)
    np.testing.assert_array_equal(decode(out.data), [2, 0, 2])
    with pytest.raises(ShapeError):
        table_lookup(T, [1.0], one_hot(0, 5), one_hot(0, 4))


def test_table_capacity_cap():
    with pytest.raises(CapacityError):
        build_mod_table(["add"], MAX_TABLE_N + 1)


def test_table_serialization_round_trip(tmp_path):
    T = build_mod_table(TABLE_OPS, 6)
    path = tmp_path / "alu.bin"
    T.save(path)
    back = AluTable.load(path)
    assert back.op_names == T.op_names
    np.testing.assert_array_equal(back.table, T.table)
    assert T.to_bytes() == build_mod_table(TABLE_OPS, 6).to_bytes()
    with pytest.raises(ValueError):
        AluTable.from_bytes(b"XXXX" + T.to_bytes()[4:])

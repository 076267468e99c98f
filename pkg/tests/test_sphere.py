import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from redthreads import (BITWISE, MATCH, ComparePolicy, MajorityCorrected, Mismatch, NoMajority,
                        OutputRecord, SphereSpec, Strength, Unanimous, compare_outputs,
                        majority_vote, validate_spec)
from redthreads.errors import ShapeError, SpecError
from redthreads.sphere import payloads_match


def rec(index, **vals):
    return OutputRecord("s", index, tuple(vals.items()), 0.0)


def test_replica_counts():
    assert [s.replica_count for s in Strength] == [1, 2, 3]
    assert Strength.OFF < Strength.DETECT < Strength.CORRECT
    assert Strength.parse("Correct") is Strength.CORRECT
    with pytest.raises(ValueError):
        Strength.parse("triple")


class TestValidateSpec:
    def test_well_formed(self):
        validate_spec(SphereSpec("k", Strength.DETECT, ["A", "B"], ["k"], ["y"]))

    def test_overlap(self):
        with pytest.raises(SpecError) as e:
            validate_spec(SphereSpec("k", Strength.DETECT, ["A"], ["A"], ["y"]))
        assert e.value.kind == "OverlappingScopes"

    def test_empty_compare(self):
        with pytest.raises(SpecError) as e:
            validate_spec(SphereSpec("k", Strength.DETECT, ["A"], [], []))
        assert e.value.kind == "EmptyCompareList"

    def test_off_may_compare_nothing(self):
        validate_spec(SphereSpec("k", Strength.OFF, ["A"], [], []))

    def test_negative_tolerance(self):
        with pytest.raises(SpecError) as e:
            validate_spec(SphereSpec("k", Strength.DETECT, (), (), ["y"], ComparePolicy(-1.0)))
        assert e.value.kind == "NegativeTolerance"

    def test_single_string_is_one_name(self):
        assert SphereSpec("k", "detect", "A", (), "y").shared_vars == ("A",)


class TestCompare:
    def test_identical(self):
        assert compare_outputs(rec(0, y=3.0), rec(1, y=3.0)) is MATCH

    def test_one_ulp_family(self):
        out = compare_outputs(rec(0, y=3.0), rec(1, y=3.0 + 2 ** -20))
        assert out == Mismatch("y", (0, 1))

    def test_tolerance(self):
        assert compare_outputs(rec(0, y=1.0), rec(1, y=1.0 + 1e-12),
                               ComparePolicy.absolute(1e-9)) is MATCH

    def test_first_divergent_in_order(self):
        a = rec(0, p=1.0, q=2.0, r=3.0)
        b = rec(1, p=1.0, q=5.0, r=7.0)
        assert compare_outputs(a, b).first_divergent == "q"

    def test_signed_zero_is_a_bit_difference(self):
        assert not compare_outputs(rec(0, y=0.0), rec(1, y=-0.0)).matched
        assert compare_outputs(rec(0, y=0.0), rec(1, y=-0.0), ComparePolicy(0.0)) is MATCH

    def test_nan_bitwise_equal(self):
        n = float("nan")
        assert compare_outputs(rec(0, y=n), rec(1, y=n)) is MATCH

    def test_arrays(self):
        a = np.arange(6.0).reshape(2, 3)
        b = a.copy()
        assert compare_outputs(rec(0, y=a), rec(1, y=b)) is MATCH
        b[1, 2] = np.nextafter(b[1, 2], 10)
        assert not compare_outputs(rec(0, y=a), rec(1, y=b)).matched
        assert compare_outputs(rec(0, y=a), rec(1, y=b), ComparePolicy(1e-12)) is MATCH

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            compare_outputs(rec(0, y=np.zeros(3)), rec(1, y=np.zeros(4)))
        with pytest.raises(ShapeError):
            compare_outputs(rec(0, y=np.zeros(3)), rec(1, y=1.0))
        with pytest.raises(ShapeError):
            compare_outputs(rec(0, y=1.0), rec(1, z=1.0))
        with pytest.raises(ShapeError):
            compare_outputs(rec(0, y=1.0), OutputRecord("other", 1, (("y", 1.0),)))


class TestVote:
    def test_unanimous(self):
        v = majority_vote(rec(0, y=5), rec(1, y=5), rec(2, y=5))
        assert v == Unanimous((("y", 5),))

    def test_majority(self):
        v = majority_vote(rec(0, y=5), rec(1, y=9), rec(2, y=5))
        assert v == MajorityCorrected((("y", 5),), 1)

    def test_no_majority(self):
        assert isinstance(majority_vote(rec(0, y=1), rec(1, y=2), rec(2, y=3)), NoMajority)

    def test_per_variable_resolution(self):
        # replica 2 diverges on p, replica 0 on q: each value is still voted
        v = majority_vote(rec(0, p=1, q=7), rec(1, p=1, q=2), rec(2, p=4, q=2))
        assert v == MajorityCorrected((("p", 1), ("q", 2)), 2)


# -- properties ------------------------------------------------------------------

finite = st.floats(allow_nan=False, width=64)
payload = st.one_of(
    finite,
    st.integers(-2 ** 40, 2 ** 40),
    st.lists(finite, min_size=1, max_size=6).map(np.array),
)
names = st.lists(st.sampled_from("abcdef"), min_size=1, max_size=4, unique=True)


@st.composite
def records(draw):
    ns = draw(names)
    vals = tuple((n, draw(payload)) for n in ns)
    return OutputRecord("s", 0, vals, 0.0)


def _flip(v, bit):
    if isinstance(v, np.ndarray):
        out = v.copy()
        out.view(np.uint64)[0] ^= np.uint64(1 << bit)
        return out
    if isinstance(v, float):
        (u,) = struct.unpack("<Q", struct.pack("<d", v))
        return struct.unpack("<d", struct.pack("<Q", u ^ (1 << bit)))[0]
    return v ^ (1 << bit)


@st.composite
def corrupted(draw):
    x = draw(records())
    k = draw(st.integers(0, len(x.values) - 1))
    bit = draw(st.integers(0, 62))
    name, v = x.values[k]
    return x, x.replace_value(name, _flip(v, bit)), name


policies = st.sampled_from([BITWISE, ComparePolicy(0.0), ComparePolicy(1e-6)])


@given(records(), policies)
def test_compare_reflexive(x, pol):
    assert compare_outputs(x, x._replace(replica_index=1), pol) is MATCH


@given(corrupted(), policies)
def test_compare_symmetric(c, pol):
    x, y, _ = c
    assert compare_outputs(x, y, pol).matched == compare_outputs(y, x, pol).matched


@given(corrupted())
def test_bitwise_detects_every_single_flip(c):
    x, y, name = c
    out = compare_outputs(x, y._replace(replica_index=1))
    assert out == Mismatch(name, (0, 1))


@given(corrupted())
def test_single_corruption_is_outvoted(c):
    x, bad, _ = c
    v = majority_vote(x, x._replace(replica_index=1), bad._replace(replica_index=2))
    assert isinstance(v, MajorityCorrected)
    assert v.outvoted == 2
    assert compare_outputs(OutputRecord("s", 0, v.values), x) is MATCH


@given(corrupted(), st.permutations([0, 1, 2]))
def test_vote_permutation_invariant(c, perm):
    x, bad, _ = c
    recs = [x._replace(replica_index=0), x._replace(replica_index=1),
            bad._replace(replica_index=2)]
    shuffled = [recs[i] for i in perm]
    v = majority_vote(*shuffled)
    assert isinstance(v, MajorityCorrected)
    # the outvoted index follows the bad record wherever it went
    assert v.outvoted == 2
    assert compare_outputs(OutputRecord("s", 0, v.values), x) is MATCH


def test_bitwise_equals_zero_tolerance_on_8bit_integers():
    zero = ComparePolicy(0.0)
    for a, b in itertools.product(range(-128, 128), repeat=2):
        assert payloads_match(a, b, BITWISE) == payloads_match(a, b, zero)
    xs = np.arange(256, dtype=np.uint8)
    for shift in range(256):
        ys = np.roll(xs, shift)
        assert payloads_match(xs, ys, BITWISE) == payloads_match(xs, ys, zero)

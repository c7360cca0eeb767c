import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubeflows.lattice import Permutation, RegionSpec, Tiling
from cubeflows.movements import (
    CoupleMovement,
    CoupleSequence,
    DiscreteFlow,
    MovementError,
    SwapMovement,
    apply_movement,
    embed_swaps_as_couples,
    flow_apply_and_cost,
    format_flow,
    lower_couples_to_swaps,
    movement_as_permutation,
    movement_cost,
    parse_flow,
    validate_movement,
)

T2 = Tiling(2, 2)
T4 = Tiling(2, 4)


def test_validate_swap_examples():
    ok = SwapMovement.from_coords(T2, [((0, 0), (0, 1))])
    assert validate_movement(ok) is None
    shared = SwapMovement.from_coords(T2, [((0, 0), (0, 1)), ((0, 1), (1, 1))])
    v = validate_movement(shared)
    assert v is not None and "two pairs" in v.clause and (0, 1) in v.cubes
    diag = SwapMovement.from_coords(T2, [((0, 0), (1, 1))])
    assert validate_movement(diag) is not None


def test_validate_couples_example():
    # array length 5, 1-based indices (1,2,4,5) = 0-based (0,1,3,4): nested couples
    t = Tiling(2, 5)
    seq = CoupleSequence(RegionSpec((0, 0), (4, 0)), (0, 1, 3, 4))
    m = CoupleMovement(t, [seq])
    assert validate_movement(m) is None
    assert seq.couples() == [(0, 4), (1, 3)]
    bad = CoupleMovement(t, [CoupleSequence(RegionSpec((0, 0), (4, 0)), (0, 0))])
    assert validate_movement(bad) is not None  # strictly increasing indices required
    overlap = CoupleMovement(
        t,
        [
            CoupleSequence(RegionSpec((0, 0), (2, 0)), (0, 1)),
            CoupleSequence(RegionSpec((2, 0), (4, 0)), (0, 1)),
        ],
    )
    assert validate_movement(overlap) is not None


def test_movement_cost_examples():
    one = SwapMovement.from_coords(T2, [((0, 0), (0, 1))])
    assert movement_cost(one) == pytest.approx(0.25)
    two = SwapMovement.from_coords(T2, [((0, 0), (0, 1)), ((1, 0), (1, 1))])
    assert movement_cost(two) == pytest.approx(0.25 * math.sqrt(2))
    e = CoupleMovement(T4, [CoupleSequence(RegionSpec((0, 0), (3, 0)), (0, 3))])
    assert movement_cost(e) == pytest.approx(0.25)
    assert movement_cost(SwapMovement(T2, [])) == 0.0
    assert movement_cost(CoupleMovement(T4, [])) == 0.0


def test_cost_homogeneity_in_resolution():
    c = {}
    for n in (2, 4, 8):
        t = Tiling(2, n)
        m = SwapMovement.from_coords(t, [((0, 0), (0, 1))])
        c[n] = movement_cost(m)
    assert c[4] / c[2] == pytest.approx((4 / 2) ** (-1 - 1))
    assert c[8] / c[4] == pytest.approx((8 / 4) ** (-1 - 1))


def test_apply_movement_examples():
    ident = Permutation.identity(T2)
    m = SwapMovement.from_coords(T2, [((0, 0), (0, 1))])
    p = apply_movement(ident, m)
    assert p((0, 0)) == (0, 1) and p((0, 1)) == (0, 0)
    assert apply_movement(p, m) == ident  # involution
    t5 = Tiling(2, 6)
    e = CoupleMovement(t5, [CoupleSequence(RegionSpec((0, 0), (5, 0)), (0, 1, 3, 4))])
    q = apply_movement(Permutation.identity(t5), e)
    assert q((0, 0)) == (4, 0) and q((4, 0)) == (0, 0)
    assert q((1, 0)) == (3, 0) and q((3, 0)) == (1, 0)
    assert q((2, 0)) == (2, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_involution_property(seed):
    rng = np.random.default_rng(seed)
    t = Tiling(2, 4)
    edges = t.adjacent_pairs()
    order = rng.permutation(len(edges))
    used: set[int] = set()
    chosen = []
    for j in order[: rng.integers(1, 8)]:
        a, b = int(edges[j, 0]), int(edges[j, 1])
        if a not in used and b not in used:
            chosen.append((a, b))
            used.update((a, b))
    m = SwapMovement(t, chosen)
    p = Permutation(t, rng.permutation(16).astype(np.int64))
    assert apply_movement(apply_movement(p, m), m) == p


def test_embed_swaps_as_couples():
    one = SwapMovement.from_coords(T2, [((0, 0), (0, 1))])
    e = embed_swaps_as_couples(one)
    assert movement_cost(e) == pytest.approx(2 * movement_cost(one))
    assert len(e.sequences) == 1 and e.sequences[0].array.length == 2
    empty = embed_swaps_as_couples(SwapMovement(T2, []))
    assert movement_cost(empty) == 0.0
    t = Tiling(2, 4)
    three = SwapMovement.from_coords(t, [((0, 0), (0, 1)), ((2, 0), (2, 1)), ((3, 2), (3, 3))])
    e3 = embed_swaps_as_couples(three)
    assert len(e3.sequences) == 3
    assert movement_as_permutation(e3) == movement_as_permutation(three)


def test_lower_couples_reversal_example():
    rev = CoupleMovement(T4, [CoupleSequence(RegionSpec((0, 0), (3, 0)), (0, 1, 2, 3))])
    flow = lower_couples_to_swaps(rev)
    assert flow.duration == 4
    assert [s.swap_count for s in flow.steps] == [2, 1, 2, 1]
    assert flow.total_cost() == pytest.approx(4 ** (-2.0) * (2 * math.sqrt(2) + 2))
    assert flow.as_permutation() == movement_as_permutation(rev)
    for s in flow.steps:
        assert validate_movement(s) is None


def test_lower_couples_simple_cases():
    empty = CoupleMovement(T4, [CoupleSequence(RegionSpec((0, 0), (3, 0)), ())])
    assert lower_couples_to_swaps(empty).duration == 0
    pair = CoupleMovement(T4, [CoupleSequence(RegionSpec((1, 2), (2, 2)), (0, 1))])
    f = lower_couples_to_swaps(pair)
    assert f.duration == 1 and f.steps[0].swap_count == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_lower_couples_random(seed):
    rng = np.random.default_rng(seed)
    t = Tiling(2, 8)
    ell = int(rng.integers(2, 9))
    row = int(rng.integers(0, 8))
    k = int(rng.integers(1, ell // 2 + 1))
    idx = tuple(sorted(rng.choice(ell, 2 * k, replace=False).tolist()))
    e = CoupleMovement(t, [CoupleSequence(RegionSpec((0, row), (ell - 1, row)), idx)])
    flow = lower_couples_to_swaps(e)
    assert flow.duration <= ell
    assert flow.as_permutation() == movement_as_permutation(e)
    bound = math.sqrt(2) * ell * math.sqrt(k) * t.n ** (-1 - t.nu / 2)
    assert flow.total_cost() <= bound + 1e-12
    for s in flow.steps:
        assert validate_movement(s) is None
        assert s.swap_count <= 2 * k


def test_flow_apply_and_cost():
    ident = Permutation.identity(T2)
    m = SwapMovement.from_coords(T2, [((0, 0), (0, 1))])
    f = DiscreteFlow(T2, [m, m])
    q, cost = flow_apply_and_cost(ident, f)
    assert q == ident
    assert cost == pytest.approx(0.5)
    empty = DiscreteFlow(T2, [])
    q2, c2 = flow_apply_and_cost(ident, empty)
    assert q2 == ident and c2 == 0.0
    bad = DiscreteFlow(T2, [SwapMovement.from_coords(T2, [((0, 0), (1, 1))])])
    with pytest.raises(MovementError) as exc:
        flow_apply_and_cost(ident, bad)
    assert "step 0" in str(exc.value)


def test_flow_format_roundtrip():
    rev = CoupleMovement(T4, [CoupleSequence(RegionSpec((0, 0), (3, 0)), (0, 1, 2, 3))])
    s = SwapMovement.from_coords(T4, [((0, 0), (0, 1)), ((2, 2), (3, 2))])
    f = DiscreteFlow(T4, [s, rev])
    text = format_flow(f)
    assert text.splitlines()[0] == "nu=2 N=4"
    g = parse_flow(text)
    assert g.total_cost() == pytest.approx(f.total_cost())
    assert g.as_permutation() == f.as_permutation()


def test_flow_cost_line_verification():
    s = SwapMovement.from_coords(T4, [((0, 0), (0, 1))])
    f = DiscreteFlow(T4, [s])
    text = format_flow(f)
    assert "total_cost" not in text  # cost lines are never stored
    good = parse_flow(text + f"total_cost: {f.total_cost()!r}\n")
    assert good.total_cost() == pytest.approx(f.total_cost())
    with pytest.raises(MovementError):
        parse_flow(text + "total_cost: 123.0\n")
    with pytest.raises(MovementError):
        parse_flow("nu=2 N=4\nX: nonsense\n")

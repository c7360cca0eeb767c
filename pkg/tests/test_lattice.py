import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubeflows.lattice import (
    LatticeError,
    Permutation,
    RegionSpec,
    Tiling,
    are_adjacent,
    compose,
    cube_center,
    format_permutation,
    invert,
    l2_distance,
    parse_permutation,
    region_cubes,
    whole_region,
)


def all_permutations_2x2():
    t = Tiling(2, 2)
    cells = whole_region(t).cells(t)
    out = []
    for pm in itertools.permutations(range(4)):
        tbl = np.arange(4, dtype=np.int64)
        tbl[cells] = cells[list(pm)]
        out.append(Permutation(t, tbl))
    return t, out


def test_cube_center_examples():
    t = Tiling(2, 2)
    assert cube_center(t, (0, 0)) == (0.25, 0.25)
    assert cube_center(t, (1, 1)) == (0.75, 0.75)
    t3 = Tiling(3, 4)
    assert cube_center(t3, (3, 0, 2)) == (0.875, 0.125, 0.625)


def test_cube_center_out_of_range():
    t = Tiling(2, 2)
    with pytest.raises(LatticeError):
        cube_center(t, (0, 2))


def test_adjacency_examples():
    t = Tiling(2, 2)
    assert are_adjacent(t, (0, 0), (0, 1))
    assert not are_adjacent(t, (0, 0), (1, 1))
    assert not are_adjacent(t, (0, 0), (0, 0))


def test_l2_distance_examples():
    t = Tiling(2, 2)
    ident = Permutation.identity(t)
    assert l2_distance(ident, ident) == 0.0
    p = Permutation.from_mapping(t, {(0, 0): (0, 1), (0, 1): (0, 0)})
    assert l2_distance(p, ident) == pytest.approx(math.sqrt(1 / 8), abs=1e-12)
    # distant swap on a length-4 array, computed by direct summation over cells
    t4 = Tiling(2, 4)
    q = Permutation.from_mapping(t4, {(0, 0): (3, 0), (3, 0): (0, 0)})
    c = t4.centers()
    direct = math.sqrt(sum(np.sum((c[q.table[i]] - c[i]) ** 2) / 16 for i in range(16)))
    assert direct == pytest.approx(0.265165, abs=1e-6)
    assert l2_distance(q, Permutation.identity(t4)) == pytest.approx(direct, abs=1e-12)


def test_l2_tiling_mismatch():
    with pytest.raises(LatticeError):
        l2_distance(Permutation.identity(Tiling(2, 2)), Permutation.identity(Tiling(2, 4)))


def test_compose_invert():
    t, perms = all_permutations_2x2()
    ident = Permutation.identity(t)
    p = perms[7]
    assert compose(ident, p) == p
    assert compose(p, invert(p)) == ident
    # two disjoint adjacent swaps compose to a 4-cube move
    a = Permutation.from_mapping(t, {(0, 0): (0, 1), (0, 1): (0, 0)})
    b = Permutation.from_mapping(t, {(1, 0): (1, 1), (1, 1): (1, 0)})
    assert len(compose(a, b).moved_cells()) == 4


def test_region_cubes_ordering():
    t = Tiling(2, 4)
    assert region_cubes(t, RegionSpec((2, 1), (2, 1))) == [(2, 1)]
    arr = region_cubes(t, RegionSpec((0, 0), (3, 0)))
    assert arr == [(0, 0), (1, 0), (2, 0), (3, 0)]
    rect = region_cubes(t, RegionSpec((0, 0), (1, 1)))
    assert rect == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_region_kinds():
    assert RegionSpec((0, 0), (3, 0)).kind == "array"
    assert RegionSpec((0, 0), (0, 0)).kind == "array"
    assert RegionSpec((0, 0), (1, 1)).kind == "rectangle"
    assert RegionSpec((0, 0), (3, 0)).axis == 0
    with pytest.raises(LatticeError):
        RegionSpec((1, 0), (0, 0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=9, max_size=9))
def test_bijection_validation(vals):
    t = Tiling(2, 3)
    table = np.asarray(vals, dtype=np.int64)
    is_bij = sorted(vals) == list(range(9))
    if is_bij:
        Permutation(t, table)
    else:
        with pytest.raises(LatticeError):
            Permutation(t, table)


def test_l2_is_metric_on_2x2_exhaustive():
    t, perms = all_permutations_2x2()
    for p in perms:
        for q in perms:
            assert l2_distance(p, q) == pytest.approx(l2_distance(q, p), abs=1e-14)
    for p, q, r in itertools.islice(itertools.product(perms, perms, perms), 0, None, 97):
        assert l2_distance(p, r) <= l2_distance(p, q) + l2_distance(q, r) + 1e-12


def test_l2_left_invariance_exhaustive():
    t, perms = all_permutations_2x2()
    ident = Permutation.identity(t)
    for p in perms:
        for q in perms:
            lhs = l2_distance(p, q)
            rhs = l2_distance(compose(p, invert(q)), ident)
            assert lhs == pytest.approx(rhs, abs=1e-13)


@pytest.mark.parametrize("nu,n", [(2, 2), (2, 4), (2, 8), (3, 4)])
def test_adjacent_swap_scaling(nu, n):
    t = Tiling(nu, n)
    a = (0,) * nu
    b = (1,) + (0,) * (nu - 1)
    p = Permutation.from_mapping(t, {a: b, b: a})
    assert l2_distance(p, Permutation.identity(t)) == pytest.approx(
        math.sqrt(2.0 * n ** (-nu - 2)), rel=1e-12
    )


def test_permutation_text_roundtrip():
    t = Tiling(2, 4)
    rng = np.random.default_rng(0)
    p = Permutation(t, rng.permutation(16).astype(np.int64))
    text = format_permutation(p)
    assert text.startswith("nu=2 N=4\n")
    q = parse_permutation(text)
    assert q == p
    ident = Permutation.identity(t)
    assert parse_permutation(format_permutation(ident)) == ident


def test_permutation_text_errors():
    with pytest.raises(LatticeError):
        parse_permutation("")
    with pytest.raises(LatticeError):
        parse_permutation("nu=2 N=2\n0,0 -> 0,1\n")  # not a bijection
    with pytest.raises(LatticeError):
        parse_permutation("nu=2 N=2\n0,0 -> 0,1\n0,0 -> 1,0\n")  # duplicate entry
    with pytest.raises(LatticeError):
        parse_permutation("N=2 nu=2\n")

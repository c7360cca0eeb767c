import itertools
import math

import numpy as np
import pytest

from cubeflows.lattice import Coloring, Permutation, RegionSpec, Tiling, whole_region
from cubeflows.movements import CoupleMovement, SwapMovement, movement_as_permutation
from cubeflows.routing import (
    RoutingError,
    carry_coloring,
    color_array_flow,
    color_cube_flow,
    color_rect_flow,
    connect_coloring_sets,
    route_array,
    route_box_sparse,
    route_rectangle,
)

T4 = Tiling(2, 4)


def region_perm(t, region, images):
    cells = region.cells(t)
    tbl = np.arange(t.total, dtype=np.int64)
    tbl[cells] = cells[list(images)]
    return Permutation(t, tbl)


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------


def test_route_array_identity_is_empty():
    a = RegionSpec((0, 0), (3, 0))
    f = route_array(T4, a, Permutation.identity(T4))
    assert f.duration == 0


def test_route_array_reversal_duration():
    a = RegionSpec((0, 0), (3, 0))
    p = region_perm(T4, a, [3, 2, 1, 0])
    f = route_array(T4, a, p)
    assert f.duration == 4
    assert f.apply(p).is_identity()


@pytest.mark.parametrize("ell", [1, 2, 3, 4, 5, 6])
def test_route_array_exhaustive(ell):
    t = Tiling(2, max(2, ell))
    a = RegionSpec((0, 0), (ell - 1, 0))
    for pm in itertools.permutations(range(ell)):
        p = region_perm(t, a, list(pm))
        f = route_array(t, a, p)
        assert f.duration <= ell
        assert f.apply(p).is_identity()


def test_route_array_rejects_outside_support():
    a = RegionSpec((0, 0), (2, 0))
    p = Permutation.from_mapping(T4, {(3, 0): (3, 1), (3, 1): (3, 0)})
    with pytest.raises(RoutingError):
        route_array(T4, a, p)


def test_route_rectangle_four_cycle():
    r = RegionSpec((0, 0), (1, 1))
    p = Permutation.from_mapping(
        T4, {(0, 0): (0, 1), (0, 1): (1, 1), (1, 1): (1, 0), (1, 0): (0, 0)}
    )
    f = route_rectangle(T4, r, p)
    assert f.apply(p).is_identity()
    assert f.duration <= 2 * (2 + 2)


@pytest.mark.parametrize("seed", range(6))
def test_route_rectangle_random_3x3(seed):
    t = Tiling(2, 3)
    r = whole_region(t)
    rng = np.random.default_rng(seed)
    p = Permutation(t, rng.permutation(9).astype(np.int64))
    f = route_rectangle(t, r, p)
    assert f.apply(p).is_identity()
    assert f.duration <= 2 * 6
    f.validate()


def test_route_rectangle_3d():
    t = Tiling(3, 3)
    r = whole_region(t)
    rng = np.random.default_rng(5)
    for _ in range(3):
        p = Permutation(t, rng.permutation(27).astype(np.int64))
        f = route_rectangle(t, r, p)
        assert f.apply(p).is_identity()
        assert f.duration <= 2 * 9


def test_route_box_sparse_exact_and_cheap():
    t = Tiling(2, 16)
    r = whole_region(t)
    tbl = np.arange(256, dtype=np.int64)
    a, b = t.flat((0, 0)), t.flat((15, 15))
    tbl[a], tbl[b] = tbl[b], tbl[a]
    p = Permutation(t, tbl)
    f = route_box_sparse(t, r, p)
    assert f.apply(p).is_identity()
    f.validate()


# ---------------------------------------------------------------------------
# coloring flows
# ---------------------------------------------------------------------------


def arr_coloring(t, region, black_positions):
    cells = region.cells(t)
    return Coloring.from_cells(t, region, [int(cells[i]) for i in black_positions])


def test_color_array_flow_examples():
    a = RegionSpec((0, 0), (3, 0))
    canonical = arr_coloring(T4, a, [3])
    # already canonical -> empty flow
    assert color_array_flow(T4, a, canonical, canonical).duration == 0
    # black at position 0, target canonical: 3 rounds of 1 swap
    first = arr_coloring(T4, a, [0])
    f = color_array_flow(T4, a, first, canonical)
    assert f.duration == 3
    assert [s.swap_count for s in f.steps] == [1, 1, 1]
    assert f.total_cost() == pytest.approx(3 * 4 ** (-2.0))


def test_color_array_rounds_are_black_left_white_right():
    t = Tiling(2, 8)
    a = RegionSpec((0, 0), (7, 0))
    cf = arr_coloring(t, a, [0, 2, 5])
    ct = arr_coloring(t, a, [5, 6, 7])  # canonical
    flow = color_array_flow(t, a, cf, ct)
    col = cf
    for s in flow.steps:
        colors = col.color_of_cell()
        for x, y in s.pairs:
            assert {colors[int(x)], colors[int(y)]} == {0, 1}  # bichromatic swaps only
            # toward a canonical target the black cube sits on the low side
            assert colors[int(min(x, y))] == 1 and colors[int(max(x, y))] == 0
        col = carry_coloring(col, movement_as_permutation(s))
    assert col.colors == ct.colors


def test_color_array_conservation_error():
    a = RegionSpec((0, 0), (3, 0))
    with pytest.raises(RoutingError):
        color_array_flow(T4, a, arr_coloring(T4, a, [0]), arr_coloring(T4, a, [0, 1]))


def test_color_cube_flow_one_per_row_pushes_right():
    t = Tiling(2, 4)
    blk = whole_region(t)
    src = Coloring.from_cells(t, blk, [t.flat((0, 0)), t.flat((1, 1)), t.flat((2, 2)), t.flat((0, 3))])
    dst = Coloring.from_cells(t, blk, [t.flat((3, y)) for y in range(4)])
    flow = color_cube_flow(t, blk, src, dst)
    final = carry_coloring(src, flow.as_permutation())
    assert final.colors == dst.colors
    for s in flow.steps:
        assert isinstance(s, CoupleMovement)


def test_color_cube_flow_non_divisible_uses_auxiliary_cells():
    t = Tiling(2, 4)
    blk = whole_region(t)
    rng = np.random.default_rng(11)
    src = Coloring.from_cells(t, blk, [int(c) for c in rng.choice(16, 6, replace=False)])
    dst = Coloring.from_cells(t, blk, [int(c) for c in rng.choice(16, 6, replace=False)])
    flow = color_cube_flow(t, blk, src, dst)  # b=6, rows=4: padded by 2 auxiliary cells
    assert carry_coloring(src, flow.as_permutation()).colors == dst.colors


@pytest.mark.parametrize("s,b", [(4, 1), (4, 4), (4, 6), (4, 13), (8, 5), (8, 32), (8, 60)])
def test_color_cube_flow_random_exact(s, b):
    t = Tiling(2, s)
    blk = whole_region(t)
    rng = np.random.default_rng(s * 100 + b)
    src = Coloring.from_cells(t, blk, [int(c) for c in rng.choice(s * s, b, replace=False)])
    dst = Coloring.from_cells(t, blk, [int(c) for c in rng.choice(s * s, b, replace=False)])
    flow = color_cube_flow(t, blk, src, dst)
    assert carry_coloring(src, flow.as_permutation()).colors == dst.colors
    flow.validate()


def test_color_cube_flow_3d():
    t = Tiling(3, 4)
    blk = whole_region(t)
    rng = np.random.default_rng(2)
    src = Coloring.from_cells(t, blk, [int(c) for c in rng.choice(64, 13, replace=False)])
    dst = Coloring.from_cells(t, blk, [int(c) for c in rng.choice(64, 13, replace=False)])
    flow = color_cube_flow(t, blk, src, dst)
    assert carry_coloring(src, flow.as_permutation()).colors == dst.colors


def test_color_cube_flow_errors():
    t = Tiling(2, 4)
    blk = whole_region(t)
    rect = RegionSpec((0, 0), (3, 1))
    c1 = Coloring.from_cells(t, blk, [0])
    c2 = Coloring.from_cells(t, blk, [0, 1])
    with pytest.raises(RoutingError):
        color_cube_flow(t, blk, c1, c2)  # unequal counts
    r1 = Coloring.from_cells(t, rect, [0])
    with pytest.raises(RoutingError):
        color_cube_flow(t, rect, r1, r1)  # not a cube block


def test_color_rect_flow_degenerate_equals_array_flow():
    a = RegionSpec((0, 0), (3, 0))
    cf = arr_coloring(T4, a, [0, 2])
    ct = arr_coloring(T4, a, [2, 3])
    fa = color_array_flow(T4, a, cf, ct)
    fr = color_rect_flow(T4, a, cf, ct)
    assert fr.duration == fa.duration
    assert all(
        isinstance(x, SwapMovement) and np.array_equal(x.pairs, y.pairs)
        for x, y in zip(fr.steps, fa.steps)
    )


def test_color_rect_flow_2x4():
    rect = RegionSpec((0, 0), (3, 1))
    cf = Coloring.from_cells(T4, rect, [T4.flat((0, 0))])
    ct = Coloring.from_cells(T4, rect, [T4.flat((3, 1))])
    flow = color_rect_flow(T4, rect, cf, ct)
    assert carry_coloring(cf, flow.as_permutation()).colors == ct.colors
    # cost bound: C * max_side * sqrt(min(b, tot-b)) * n^(-1-nu/2)
    assert flow.total_cost() <= 16 * 4 * math.sqrt(1) * 4 ** (-2.0)


def test_connect_coloring_sets_moves_only_inside_box():
    t = Tiling(2, 8)
    box = RegionSpec((2, 2), (5, 5))
    rng = np.random.default_rng(3)
    cells = box.cells(t)
    src = rng.choice(cells, 5, replace=False)
    dst = rng.choice(cells, 5, replace=False)
    flow = connect_coloring_sets(t, box, src, dst)
    perm = flow.as_permutation()
    moved = perm.moved_cells()
    assert box.contains_flat(t, moved).all()
    assert set(int(perm.table[c]) for c in src) == set(int(c) for c in dst)

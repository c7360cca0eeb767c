"""Constructive routing and coloring flows with linear duration and sqrt-cost bounds.

Arrays are routed by odd-even transposition sorting (duration <= length).
Boxes use the classical multi-phase mesh scheme: stage tokens along the last
axis via a bipartite edge coloring, recurse into slices, then finish along the
last axis; duration <= 2 * (sum of side lengths), recorded as DURATION_FACTOR.

Coloring flows emit couple movements acting simultaneously on disjoint lines.
Arbitrary set moves within a line are realized as compact-to-end followed by
expand, both of which have nested couple structure by construction.
"""
from __future__ import annotations

import numpy as np

from .lattice import Coloring, LatticeError, Permutation, RegionSpec, Tiling
from .movements import (
    CoupleMovement,
    CoupleSequence,
    DiscreteFlow,
    MovementError,
    SwapMovement,
    realize_line_permutations,
)

__all__ = [
    "DURATION_FACTOR",
    "COLOR_ARRAY_FACTOR",
    "COLOR_CUBE_FACTOR",
    "route_array",
    "route_rectangle",
    "place_tokens",
    "color_array_flow",
    "color_cube_flow",
    "color_rect_flow",
    "connect_coloring_sets",
    "carry_coloring",
]

# duration of route_rectangle is at most DURATION_FACTOR * (sum of side lengths)
DURATION_FACTOR = 2
# measured ceilings for the coloring-cost constants (see tests/test_acceptance.py):
# cost <= FACTOR * size_factor * sqrt(min(b, tot-b)) * n^(-1-nu/2)
COLOR_ARRAY_FACTOR = 2.0
COLOR_CUBE_FACTOR = 16.0


class RoutingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# permutation routing
# ---------------------------------------------------------------------------


def _position_permutation(perm: Permutation, cells: np.ndarray) -> np.ndarray:
    """Positions of perm restricted to the given cells (must be invariant)."""
    pos = {int(c): i for i, c in enumerate(cells)}
    out = np.empty(len(cells), dtype=np.int64)
    for i, c in enumerate(cells):
        img = int(perm.table[int(c)])
        if img not in pos:
            raise RoutingError(f"permutation moves cube {c} outside the region")
        out[i] = pos[img]
    return out


def route_array(t: Tiling, a: RegionSpec, p: Permutation) -> DiscreteFlow:
    """Adjacent-swap flow connecting p to the identity on an array.

    Duration is at most the array length.
    """
    if a.kind != "array":
        raise RoutingError(f"region {a.lo}..{a.hi} is not an array")
    if not p.supported_in(a):
        raise RoutingError("permutation moves cubes outside the array")
    cells = a.cells(t)
    sigma_p = _position_permutation(p, cells)
    sigma = np.empty_like(sigma_p)
    sigma[sigma_p] = np.arange(len(cells))  # realize p^-1 so that flow∘p = Id
    rounds = realize_line_permutations(t, cells.reshape(1, -1), sigma.reshape(1, -1))
    return DiscreteFlow(t, rounds)


def _edge_color_bipartite(left: np.ndarray, right: np.ndarray, n_colors: int) -> np.ndarray:
    """Proper edge coloring of a bipartite multigraph with max degree <= n_colors."""
    q = len(left)
    ltab: dict[int, list[int]] = {}
    rtab: dict[int, list[int]] = {}

    def slot(table, v):
        if v not in table:
            table[v] = [-1] * n_colors
        return table[v]

    color = np.full(q, -1, dtype=np.int64)
    for e in range(q):
        u, v = int(left[e]), int(right[e])
        lu, rv = slot(ltab, u), slot(rtab, v)
        cu = lu.index(-1)
        cv = rv.index(-1)
        if cu != cv:
            # free cu at v: flip the maximal cu/cv alternating path from v.
            # The path cannot end at u (its odd edges are cu-colored and cu is
            # free at u), so cu stays free at u.
            path = []
            side, vert, want = 1, v, cu
            while True:
                table = rtab if side == 1 else ltab
                e2 = slot(table, vert)[want]
                if e2 == -1:
                    break
                path.append(e2)
                vert = int(left[e2]) if side == 1 else int(right[e2])
                side = 1 - side
                want = cv if want == cu else cu
            for e2 in path:
                old = int(color[e2])
                slot(ltab, int(left[e2]))[old] = -1
                slot(rtab, int(right[e2]))[old] = -1
            for e2 in path:
                new = cv if int(color[e2]) == cu else cu
                color[e2] = new
                slot(ltab, int(left[e2]))[new] = e2
                slot(rtab, int(right[e2]))[new] = e2
        color[e] = cu
        lu[cu] = e
        slot(rtab, v)[cu] = e
    return color


def _line_place_rounds(
    t: Tiling, lines: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
) -> list[SwapMovement]:
    """Rounds realizing, per line, tokens cur_pos -> dst_pos (others order-kept).

    lines: list of (cells, cur_positions, dst_positions); all lines same length.
    """
    if not lines:
        return []
    ell = len(lines[0][0])
    cells = np.stack([ln[0] for ln in lines])
    sig = np.tile(np.arange(ell, dtype=np.int64), (len(lines), 1))
    for k, (_, cur, dst) in enumerate(lines):
        if len(cur) == 0:
            continue
        s = np.arange(ell, dtype=np.int64)
        s[cur] = dst
        rem_cur = np.setdiff1d(np.arange(ell), cur, assume_unique=False)
        rem_dst = np.setdiff1d(np.arange(ell), dst, assume_unique=False)
        s[rem_cur] = rem_dst
        sig[k] = s
    return realize_line_permutations(t, cells, sig)


def _merge_round_lists(t: Tiling, parts: list[list[SwapMovement]]) -> list[SwapMovement]:
    depth = max((len(p) for p in parts), default=0)
    out = []
    for k in range(depth):
        pairs = [p[k].pairs for p in parts if k < len(p) and p[k].pairs.size]
        if pairs:
            out.append(SwapMovement(t, np.concatenate(pairs, axis=0)))
    return out


def place_tokens(t: Tiling, box: RegionSpec, cur: np.ndarray, dst: np.ndarray) -> list[SwapMovement]:
    """Swap rounds moving the token at cur[k] to cell dst[k] within the box.

    cur and dst are flat cell ids inside the box, each without repeats.  Cells
    not listed end up somewhere inside the box (order-preserving fills).
    """
    cur = np.asarray(cur, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if cur.size == 0 or np.array_equal(cur, dst):
        return []
    extents = box.extents
    live = [a for a, e in enumerate(extents) if e > 1]
    if not live:
        if not np.array_equal(cur, dst):
            raise RoutingError("cannot move tokens in a single-cube box")
        return []
    ccur = t.coords_array(cur)
    cdst = t.coords_array(dst)
    if len(live) == 1:
        axis = live[0]
        cells = box.cells(t)
        cur_pos = ccur[:, axis] - box.lo[axis]
        dst_pos = cdst[:, axis] - box.lo[axis]
        return _line_place_rounds(t, [(cells, cur_pos, dst_pos)])

    axis = live[-1]
    e = extents[axis]
    other = [a for a in range(box.nu) if a != axis]

    def cross_key(coords: np.ndarray) -> np.ndarray:
        key = np.zeros(len(coords), dtype=np.int64)
        for a in other:
            key = key * extents[a] + (coords[:, a] - box.lo[a])
        return key

    colors = _edge_color_bipartite(cross_key(ccur), cross_key(cdst), e)

    # phase 1: within lines along `axis`, move each token to slice colors[k]
    lines1: dict[int, tuple[np.ndarray, list, list]] = {}
    for k in range(len(cur)):
        key = int(cross_key(ccur[k : k + 1])[0])
        if key not in lines1:
            cross = [int(ccur[k][a]) for a in other]
            lines1[key] = (box.line(t, axis, cross), [], [])
        lines1[key][1].append(int(ccur[k][axis] - box.lo[axis]))
        lines1[key][2].append(int(colors[k]))
    phase1 = _line_place_rounds(
        t, [(c, np.asarray(a), np.asarray(b)) for c, a, b in lines1.values()]
    )

    # phase 2: recurse per slice z on the (nu-1 live axes) sub-box
    slices: dict[int, tuple[list, list]] = {}
    for k in range(len(cur)):
        z = int(colors[k])
        mid = ccur[k].copy()
        mid[axis] = box.lo[axis] + z
        tgt = cdst[k].copy()
        tgt[axis] = box.lo[axis] + z
        slices.setdefault(z, ([], []))
        slices[z][0].append(int(np.ravel_multi_index(tuple(mid), t.shape)))
        slices[z][1].append(int(np.ravel_multi_index(tuple(tgt), t.shape)))
    parts = []
    for z, (c2, d2) in sorted(slices.items()):
        lo = list(box.lo)
        hi = list(box.hi)
        lo[axis] = hi[axis] = box.lo[axis] + z
        sub = RegionSpec(tuple(lo), tuple(hi))
        parts.append(place_tokens(t, sub, np.asarray(c2), np.asarray(d2)))
    phase2 = _merge_round_lists(t, parts)

    # phase 3: within destination lines along `axis`
    lines3: dict[int, tuple[np.ndarray, list, list]] = {}
    for k in range(len(cur)):
        key = int(cross_key(cdst[k : k + 1])[0])
        if key not in lines3:
            cross = [int(cdst[k][a]) for a in other]
            lines3[key] = (box.line(t, axis, cross), [], [])
        lines3[key][1].append(int(colors[k]))
        lines3[key][2].append(int(cdst[k][axis] - box.lo[axis]))
    phase3 = _line_place_rounds(
        t, [(c, np.asarray(a), np.asarray(b)) for c, a, b in lines3.values()]
    )
    return phase1 + phase2 + phase3


def route_rectangle(t: Tiling, r: RegionSpec, p: Permutation) -> DiscreteFlow:
    """Adjacent-swap flow connecting p to the identity on a box region.

    Every cell is tracked as a token, so the flow is exact; duration is at
    most DURATION_FACTOR * (sum of side lengths).
    """
    if not p.supported_in(r):
        raise RoutingError("permutation moves cubes outside the region")
    cells = r.cells(t)
    if np.array_equal(p.table[cells], cells):
        return DiscreteFlow(t, [])
    inv = np.empty(t.total, dtype=np.int64)
    inv[p.table] = np.arange(t.total)
    rounds = place_tokens(t, r, cells, inv[cells])
    return DiscreteFlow(t, rounds)


def _anchored_subbox(box: RegionSpec, k: int) -> RegionSpec:
    """Smallest box anchored at box.lo (round-robin grown) holding k cells."""
    ext = [1] * box.nu
    axes = sorted(range(box.nu), key=lambda a: -box.extents[a])
    while int(np.prod(ext)) < k:
        grown = False
        for a in axes:
            if ext[a] < box.extents[a]:
                ext[a] += 1
                grown = True
                break
        if not grown:
            raise RoutingError("region too small for the requested tokens")
        if int(np.prod(ext)) >= k:
            break
    return RegionSpec(box.lo, tuple(l + e - 1 for l, e in zip(box.lo, ext)))


def route_box_sparse(t: Tiling, r: RegionSpec, p: Permutation) -> DiscreteFlow:
    """Exact routing tuned for permutations that move few cells of the box.

    The moved cells (a union of cycles, hence closed under p) are packed into
    a small anchored sub-box, permuted there with a dense route, and the
    packing flow is reversed, so all other cells return exactly.  Duration is
    at most 6 * (sum of side lengths); cost scales with the moved count.
    """
    if not p.supported_in(r):
        raise RoutingError("permutation moves cubes outside the region")
    cells = r.cells(t)
    moved = cells[p.table[cells] != cells]
    if moved.size == 0:
        return DiscreteFlow(t, [])
    if 4 * moved.size >= cells.size:
        return route_rectangle(t, r, p)
    inv = np.empty(t.total, dtype=np.int64)
    inv[p.table] = np.arange(t.total)
    dst = inv[moved]
    sub = _anchored_subbox(r, int(moved.size))
    packed = sub.cells(t)[: moved.size]
    gather = place_tokens(t, r, moved, packed)
    slot = {int(c): i for i, c in enumerate(moved)}
    beta = np.arange(t.total, dtype=np.int64)
    for i in range(moved.size):
        beta[packed[i]] = packed[slot[int(dst[i])]]
    q = np.empty_like(beta)
    q[beta] = np.arange(t.total)
    inner = route_rectangle(t, sub, Permutation(t, q))
    steps = gather + inner.steps + list(reversed(gather))
    return DiscreteFlow(t, steps)


# ---------------------------------------------------------------------------
# coloring flows
# ---------------------------------------------------------------------------


def _span_sequence(t: Tiling, line_cells: np.ndarray, positions: list[int]) -> CoupleSequence:
    """Couple sequence over the minimal sub-array spanning the given positions."""
    lo_pos, hi_pos = min(positions), max(positions)
    lo = t.coords(int(line_cells[lo_pos]))
    hi = t.coords(int(line_cells[hi_pos]))
    idx = tuple(p - lo_pos for p in sorted(positions))
    return CoupleSequence(RegionSpec(lo, hi), idx)


def _set_move_movements(
    t: Tiling, moves: list[tuple[np.ndarray, set[int], set[int]]]
) -> list[CoupleMovement]:
    """At most two couple movements carrying, per line, the set B onto the set T.

    Realized as compact-to-end then expand; both stages pair two separated
    position sets, which is exactly the nested couple format.
    """
    first: list[CoupleSequence] = []
    second: list[CoupleSequence] = []
    for cells, b_set, t_set in moves:
        if b_set == t_set:
            continue
        if len(b_set) != len(t_set):
            raise RoutingError("set move with unequal sizes")
        ell = len(cells)
        n = len(b_set)
        end = set(range(ell - n, ell))
        p1 = sorted(b_set - end)
        q1 = sorted(end - b_set)
        if p1:
            first.append(_span_sequence(t, cells, p1 + q1))
        p2 = sorted(t_set - end)
        q2 = sorted(end - t_set)
        if p2:
            second.append(_span_sequence(t, cells, p2 + q2))
    out = []
    if first:
        out.append(CoupleMovement(t, first))
    if second:
        out.append(CoupleMovement(t, second))
    return out


def _live_axes(box: RegionSpec) -> list[int]:
    return [a for a, e in enumerate(box.extents) if e > 1]


def _slice_box(box: RegionSpec, axis: int, z: int) -> RegionSpec:
    lo = list(box.lo)
    hi = list(box.hi)
    lo[axis] = hi[axis] = box.lo[axis] + z
    return RegionSpec(tuple(lo), tuple(hi))


def _balanced_quotas(q: int, e: int) -> list[int]:
    base, extra = divmod(q, e)
    return [base + (1 if z < extra else 0) for z in range(e)]


def canonical_cells(t: Tiling, box: RegionSpec, q: int) -> np.ndarray:
    """Deterministic canonical layout of q colored cubes inside a box."""
    size = box.size
    if q < 0 or q > size:
        raise RoutingError(f"cannot place {q} colored cubes in a box of {size}")
    if q > size // 2:
        comp = set(int(c) for c in canonical_cells(t, box, size - q))
        return np.asarray([c for c in box.cells(t) if int(c) not in comp], dtype=np.int64)
    if q == 0:
        return np.empty(0, dtype=np.int64)
    live = _live_axes(box)
    cells = box.cells(t)
    if len(live) <= 1:
        return cells[size - q :]
    axis = live[-1]
    quotas = _balanced_quotas(q, box.extents[axis])
    out = []
    for z, qz in enumerate(quotas):
        if qz:
            out.append(canonical_cells(t, _slice_box(box, axis, z), qz))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def _quota_assignment(counts: dict[int, int], quotas: list[int]) -> dict[int, list[int]]:
    """Per-line slice sets with the given per-slice totals (greedy Gale-Ryser)."""
    remaining = list(quotas)
    out: dict[int, list[int]] = {}
    for line, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        order = sorted(range(len(remaining)), key=lambda z: (-remaining[z], z))
        take = order[:n]
        if any(remaining[z] <= 0 for z in take):
            raise RoutingError("quota assignment infeasible")
        for z in take:
            remaining[z] -= 1
        out[line] = sorted(take)
    if any(r != 0 for r in remaining):
        raise RoutingError("quota assignment left unfilled slices")
    return out


def _canonicalize_set_flow(t: Tiling, box: RegionSpec, colored: np.ndarray) -> list[CoupleMovement]:
    """Couple movements carrying the colored set onto canonical_cells(box, q)."""
    colored = np.asarray(colored, dtype=np.int64)
    size = box.size
    q = len(colored)
    if q > size // 2:
        inside = set(int(c) for c in colored)
        comp = np.asarray([c for c in box.cells(t) if int(c) not in inside], dtype=np.int64)
        return _canonicalize_set_flow(t, box, comp)
    if q == 0:
        return []
    live = _live_axes(box)
    coords = t.coords_array(colored)
    if len(live) <= 1:
        axis = live[0] if live else 0
        cells = box.cells(t)
        b_set = set(int(c - box.lo[axis]) for c in coords[:, axis])
        t_set = set(range(box.size - q, box.size))
        return _set_move_movements(t, [(cells, b_set, t_set)])

    axis = live[-1]
    e = box.extents[axis]
    other = [a for a in range(box.nu) if a != axis]

    def cross_key(row) -> int:
        key = 0
        for a in other:
            key = key * box.extents[a] + (int(row[a]) - box.lo[a])
        return key

    by_line: dict[int, list[int]] = {}
    line_cross: dict[int, tuple[int, ...]] = {}
    for row in coords:
        k = cross_key(row)
        by_line.setdefault(k, []).append(int(row[axis]) - box.lo[axis])
        line_cross[k] = tuple(int(row[a]) for a in other)
    counts = {k: len(v) for k, v in by_line.items()}
    assign = _quota_assignment(counts, _balanced_quotas(q, e))

    moves = []
    for k, zs in by_line.items():
        cells = box.line(t, axis, line_cross[k])
        moves.append((cells, set(zs), set(assign[k])))
    stage_a = _set_move_movements(t, moves)

    parts: list[list[CoupleMovement]] = []
    for z in range(e):
        members = [k for k, zt in assign.items() if z in zt]
        if not members:
            continue
        sub = _slice_box(box, axis, z)
        pts = []
        for k in members:
            c = list(line_cross[k])
            full = c[:axis] + [box.lo[axis] + z] + c[axis:]
            pts.append(int(np.ravel_multi_index(tuple(full), t.shape)))
        parts.append(_canonicalize_set_flow(t, sub, np.asarray(pts, dtype=np.int64)))
    depth = max((len(p) for p in parts), default=0)
    stage_b = []
    for i in range(depth):
        seqs = []
        for p in parts:
            if i < len(p):
                seqs.extend(p[i].sequences)
        if seqs:
            stage_b.append(CoupleMovement(t, seqs))
    return stage_a + stage_b


def connect_coloring_sets(
    t: Tiling, box: RegionSpec, cells_from: np.ndarray, cells_to: np.ndarray
) -> DiscreteFlow:
    """Couple-movement flow whose permutation carries one cell set onto another."""
    if len(cells_from) != len(cells_to):
        raise RoutingError("colored-count conservation violated")
    f1 = _canonicalize_set_flow(t, box, cells_from)
    f2 = _canonicalize_set_flow(t, box, cells_to)
    return DiscreteFlow(t, f1 + list(reversed(f2)))


def carry_coloring(col: Coloring, perm: Permutation) -> Coloring:
    """Coloring after transporting colors along the permutation."""
    cells = col.region.cells(col.tiling)
    mapping = {}
    inside = set(int(c) for c in cells)
    for cell, c in zip(cells, col.colors):
        img = int(perm.table[int(cell)])
        if img not in inside:
            raise RoutingError("flow moves a colored cube outside the region")
        mapping[img] = c
    return Coloring(col.tiling, col.region, tuple(mapping[int(c)] for c in cells))


def _check_two_coloring_pair(cf: Coloring, ct: Coloring) -> None:
    if cf.tiling != ct.tiling or cf.region != ct.region:
        raise RoutingError("colorings live on different regions")
    if any(c not in (0, 1) for c in cf.colors + ct.colors):
        raise RoutingError("expected two-colorings (0 = white, 1 = black)")
    if cf.count(1) != ct.count(1):
        raise RoutingError(
            f"black-count conservation violated: {cf.count(1)} vs {ct.count(1)}"
        )


def color_array_flow(t: Tiling, a: RegionSpec, col_from: Coloring, col_to: Coloring) -> DiscreteFlow:
    """Adjacent-swap flow carrying one array coloring to another.

    Each forward round swaps only (black, white) pairs with the black cube on
    the lower-index side; the reversed target half swaps the mirror pairs.
    """
    if a.kind != "array":
        raise RoutingError("region is not an array")
    _check_two_coloring_pair(col_from, col_to)
    cells = a.cells(t)

    def sort_rounds(col: Coloring) -> list[SwapMovement]:
        key = np.asarray(col.colors, dtype=np.int64)
        rounds = []
        vals = key.reshape(1, -1).copy()
        cl = cells.reshape(1, -1)
        from .movements import _oddeven_round_pairs

        for r in range(len(cells)):
            if np.all(vals[:, :-1] <= vals[:, 1:]):
                break
            pairs = _oddeven_round_pairs(cl, vals, r % 2)
            if pairs.size:
                rounds.append(SwapMovement(t, pairs))
        return rounds

    flow = DiscreteFlow(t, sort_rounds(col_from) + list(reversed(sort_rounds(col_to))))
    final = carry_coloring(col_from, flow.as_permutation())
    if final.colors != col_to.colors:
        raise RoutingError("array coloring flow failed to reach the target")
    return flow


def _lex_first_whites(col: Coloring, k: int) -> np.ndarray:
    whites = col.cells_of(0)
    if len(whites) < k:
        raise RoutingError("not enough white cubes for auxiliary recoloring")
    return np.sort(whites)[:k]


def _cube_canonicalize_2d(t: Tiling, box: RegionSpec, colored: np.ndarray) -> list[CoupleMovement]:
    """Canonicalization of a square block's colored set, matching the 2-d scheme:

    fewer colored than rows: one per bottom row, pushed to the last column;
    row-divisible: equal rows, pushed into the right columns; otherwise pad
    with auxiliary yellow cells to the next multiple, push right, then align
    the yellows inside the right rectangle.
    """
    s = box.extents[0]
    b = len(colored)
    if b == 0:
        return []
    coords = t.coords_array(np.asarray(colored, dtype=np.int64))

    def rebalance_and_push(cells_coords: np.ndarray, quotas: list[int]) -> tuple[list[CoupleMovement], np.ndarray]:
        # stage a: within vertical lines (axis 1), meet per-row quotas
        by_col: dict[int, list[int]] = {}
        for x, y in cells_coords:
            by_col.setdefault(int(x), []).append(int(y) - box.lo[1])
        assign = _quota_assignment({c: len(v) for c, v in by_col.items()}, quotas)
        moves = []
        for cx, ys in by_col.items():
            cells = box.line(t, 1, (cx,))
            moves.append((cells, set(ys), set(assign[cx])))
        mv = _set_move_movements(t, moves)
        # stage b: push right within rows to the last len(row) cells
        by_row: dict[int, list[int]] = {}
        for cx, zs in assign.items():
            for z in zs:
                by_row.setdefault(z, []).append(cx - box.lo[0])
        moves2 = []
        out_cells = []
        for z, xs in sorted(by_row.items()):
            cells = box.line(t, 0, (box.lo[1] + z,))
            tset = set(range(s - len(xs), s))
            moves2.append((cells, set(xs), tset))
            out_cells.extend(int(cells[x]) for x in sorted(tset))
        mv += _set_move_movements(t, moves2)
        return mv, np.asarray(out_cells, dtype=np.int64)

    if b < s:
        quotas = [1 if z < b else 0 for z in range(s)]
        mv, _ = rebalance_and_push(coords, quotas)
        return mv
    if b % s == 0:
        mv, _ = rebalance_and_push(coords, [b // s] * s)
        return mv

    m_up = b // s + 1
    y = s * m_up - b
    col = Coloring.from_cells(t, box, [int(c) for c in colored])
    yellow = _lex_first_whites(col, y)
    padded = np.concatenate([np.asarray(colored, dtype=np.int64), yellow])
    mv, _ = rebalance_and_push(t.coords_array(padded), [m_up] * s)
    # align yellows inside the right s x m_up rectangle: one per bottom row,
    # pushed into the block's last column
    flow = DiscreteFlow(t, mv)
    perm = flow.as_permutation()
    ycur = perm.table[yellow]
    rect = RegionSpec((box.hi[0] - m_up + 1, box.lo[1]), (box.hi[0], box.hi[1]))
    ycoords = t.coords_array(ycur)
    by_col: dict[int, list[int]] = {}
    for x, yy in ycoords:
        by_col.setdefault(int(x), []).append(int(yy) - rect.lo[1])
    quotas = [1 if z < y else 0 for z in range(s)]
    assign = _quota_assignment({c: len(v) for c, v in by_col.items()}, quotas)
    moves = []
    for cx, ys in by_col.items():
        cells = rect.line(t, 1, (cx,))
        moves.append((cells, set(ys), set(assign[cx])))
    mv2 = _set_move_movements(t, moves)
    moves2 = []
    for cx, zs in assign.items():
        for z in zs:
            cells = rect.line(t, 0, (rect.lo[1] + z,))
            moves2.append((cells, {cx - rect.lo[0]}, {rect.extents[0] - 1}))
    mv2 += _set_move_movements(t, moves2)
    return mv + mv2


def color_cube_flow(t: Tiling, block: RegionSpec, col_from: Coloring, col_to: Coloring) -> DiscreteFlow:
    """Couple-movement flow carrying one block coloring into another."""
    _check_two_coloring_pair(col_from, col_to)
    ext = block.extents
    if len(set(ext)) != 1 or ext[0] < 1:
        raise RoutingError(f"region {block.lo}..{block.hi} is not a cube block")
    b = col_from.count(1)
    tot = block.size
    track = 1 if b <= tot - b else 0
    from_cells = col_from.cells_of(track)
    to_cells = col_to.cells_of(track)
    if t.nu == 2 and block.extents[0] > 1:
        f1 = _cube_canonicalize_2d(t, block, from_cells)
        f2 = _cube_canonicalize_2d(t, block, to_cells)
        flow = DiscreteFlow(t, f1 + list(reversed(f2)))
    else:
        flow = connect_coloring_sets(t, block, from_cells, to_cells)
    final = carry_coloring(col_from, flow.as_permutation())
    if final.colors != col_to.colors:
        raise RoutingError("block coloring flow failed to reach the target")
    return flow


def color_rect_flow(t: Tiling, rect: RegionSpec, col_from: Coloring, col_to: Coloring) -> DiscreteFlow:
    """Coloring flow on a general box; degenerate boxes reduce to the array flow."""
    _check_two_coloring_pair(col_from, col_to)
    if rect.kind == "array":
        return color_array_flow(t, rect, col_from, col_to)
    b = col_from.count(1)
    track = 1 if b <= rect.size - b else 0
    flow = connect_coloring_sets(t, rect, col_from.cells_of(track), col_to.cells_of(track))
    final = carry_coloring(col_from, flow.as_permutation())
    if final.colors != col_to.colors:
        raise RoutingError("rectangle coloring flow failed to reach the target")
    return flow

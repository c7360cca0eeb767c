"""Exact minimum-cost distances between permutations at desk scale.

Dijkstra over the weighted Cayley graph whose generators are either all
adjacent-swap movements (mode "S") or all couple movements with bounded array
length (mode "E").  Generator sets grow exponentially, so hard capacity limits
raise instead of truncating silently.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Permutation, RegionSpec, Tiling, whole_region
from .movements import (
    CoupleMovement,
    CoupleSequence,
    DiscreteFlow,
    Movement,
    SwapMovement,
)

__all__ = ["OracleLimits", "CapacityError", "exact_distance", "equivalence_report"]


class CapacityError(RuntimeError):
    """State space or generator set exceeds the configured limits."""


@dataclass(frozen=True)
class OracleLimits:
    max_states: int = math.factorial(10)
    max_array: int = 4
    max_generators: int = 200_000


def _region_cells(t: Tiling, region: RegionSpec | None) -> np.ndarray:
    return (region or whole_region(t)).cells(t)


def enumerate_swap_generators(t: Tiling, region: RegionSpec | None = None) -> list[SwapMovement]:
    """All nonempty sets of disjoint adjacent pairs within the region."""
    cells = set(int(c) for c in _region_cells(t, region))
    edges = [
        (int(a), int(b))
        for a, b in t.adjacent_pairs()
        if int(a) in cells and int(b) in cells
    ]
    out: list[list[tuple[int, int]]] = []

    def rec(i: int, used: set[int], chosen: list[tuple[int, int]]) -> None:
        if chosen:
            out.append(list(chosen))
        for j in range(i, len(edges)):
            a, b = edges[j]
            if a in used or b in used:
                continue
            chosen.append(edges[j])
            used.add(a)
            used.add(b)
            rec(j + 1, used, chosen)
            chosen.pop()
            used.discard(a)
            used.discard(b)

    rec(0, set(), [])
    return [SwapMovement(t, pairs) for pairs in out]


def _sub_arrays(t: Tiling, region: RegionSpec, max_len: int) -> list[RegionSpec]:
    out = []
    for axis in range(t.nu):
        for lo_ax in range(region.lo[axis], region.hi[axis] + 1):
            for hi_ax in range(lo_ax + 1, min(region.hi[axis], lo_ax + max_len - 1) + 1):
                other = [
                    range(region.lo[a], region.hi[a] + 1) if a != axis else None
                    for a in range(t.nu)
                ]

                def build(prefix: list[int], a: int) -> None:
                    if a == t.nu:
                        lo = tuple(
                            lo_ax if i == axis else prefix_map[i] for i in range(t.nu)
                        )
                        hi = tuple(
                            hi_ax if i == axis else prefix_map[i] for i in range(t.nu)
                        )
                        out.append(RegionSpec(lo, hi))
                        return
                    if a == axis:
                        build(prefix, a + 1)
                        return
                    for v in other[a]:
                        prefix_map[a] = v
                        build(prefix, a + 1)

                prefix_map: dict[int, int] = {}
                build([], 0)
    return out


def _sequences_for(array: RegionSpec) -> list[tuple[int, ...]]:
    from itertools import combinations

    ell = array.length
    out = []
    for m in range(1, ell // 2 + 1):
        for idx in combinations(range(ell), 2 * m):
            out.append(idx)
    return out


def enumerate_couple_generators(
    t: Tiling, region: RegionSpec | None = None, max_array: int = 4, max_generators: int = 200_000
) -> list[CoupleMovement]:
    """All couple movements over disjoint sub-arrays of length <= max_array."""
    region = region or whole_region(t)
    arrays = _sub_arrays(t, region, max_array)
    options = [(a, _sequences_for(a)) for a in arrays]
    options = [(a, seqs) for a, seqs in options if seqs]
    out: list[CoupleMovement] = []

    def rec(i: int, chosen: list[CoupleSequence]) -> None:
        if len(out) > max_generators:
            raise CapacityError(f"more than {max_generators} couple generators")
        if chosen:
            out.append(CoupleMovement(t, list(chosen)))
        for j in range(i, len(options)):
            arr, seqs = options[j]
            if any(not arr.disjoint_from(c.array) for c in chosen):
                continue
            for idx in seqs:
                chosen.append(CoupleSequence(arr, idx))
                rec(j + 1, chosen)
                chosen.pop()

    rec(0, [])
    return out


def _restrict(table: np.ndarray, cells: np.ndarray) -> bytes:
    return table[cells].astype(np.int64).tobytes()


def exact_distance(
    p: Permutation,
    q: Permutation,
    mode: str = "E",
    limits: OracleLimits = OracleLimits(),
    region: RegionSpec | None = None,
) -> tuple[float, DiscreteFlow]:
    """Exact minimum of the length functional over flows connecting p to q.

    Returns the distance and a replayable witness flow.  Ties are broken by
    fewer steps, then lexicographic state, so witnesses are deterministic.
    """
    t = p.tiling
    if q.tiling != t:
        raise ValueError("permutations on different tilings")
    reg = region or whole_region(t)
    cells = reg.cells(t)
    size = len(cells)
    if math.factorial(min(size, 20)) > limits.max_states:
        raise CapacityError(
            f"state space {size}! exceeds max_states={limits.max_states}"
        )
    diff = np.flatnonzero(p.table != q.table)
    if diff.size and not (
        reg.contains_flat(t, diff).all() and reg.contains_flat(t, p.table[diff]).all()
    ):
        raise ValueError("permutations differ outside the oracle region")
    if mode == "S":
        gens: list[Movement] = enumerate_swap_generators(t, reg)
    elif mode == "E":
        gens = enumerate_couple_generators(t, reg, limits.max_array, limits.max_generators)
    elif mode == "SE":
        # union of both generator families: lower bound for mixed flows
        gens = enumerate_swap_generators(t, reg) + enumerate_couple_generators(
            t, reg, limits.max_array, limits.max_generators
        )
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    if len(gens) > limits.max_generators:
        raise CapacityError(f"{len(gens)} generators exceed the limit")
    gen_data = []
    for g in gens:
        mp = np.arange(t.total, dtype=np.int64)
        pr = g.transpositions()
        mp[pr[:, 0]] = pr[:, 1]
        mp[pr[:, 1]] = pr[:, 0]
        gen_data.append((g.cost(), mp, g))

    start = _restrict(p.table, cells)
    goal = _restrict(q.table, cells)
    table0 = p.table.copy()

    dist: dict[bytes, float] = {start: 0.0}
    steps: dict[bytes, int] = {start: 0}
    parent: dict[bytes, tuple[bytes, int]] = {}
    tables: dict[bytes, np.ndarray] = {start: table0}
    heap: list[tuple[float, int, bytes]] = [(0.0, 0, start)]
    visited: set[bytes] = set()
    while heap:
        d, ns, state = heapq.heappop(heap)
        if state in visited:
            continue
        visited.add(state)
        if state == goal:
            break
        if len(visited) > limits.max_states:
            raise CapacityError(f"explored more than max_states={limits.max_states} states")
        tbl = tables[state]
        for gi, (c, mp, _) in enumerate(gen_data):
            t2 = mp[tbl]
            s2 = _restrict(t2, cells)
            nd = d + c
            old = dist.get(s2)
            if old is None or nd < old - 1e-15 or (
                abs(nd - old) <= 1e-15 and ns + 1 < steps.get(s2, 1 << 30)
            ):
                dist[s2] = nd
                steps[s2] = ns + 1
                parent[s2] = (state, gi)
                tables[s2] = t2
                heapq.heappush(heap, (nd, ns + 1, s2))
    if goal not in visited:
        raise CapacityError("goal state not reached within limits")
    # reconstruct witness
    chain = []
    cur = goal
    while cur != start:
        prev, gi = parent[cur]
        chain.append(gen_data[gi][2])
        cur = prev
    chain.reverse()
    flow = DiscreteFlow(t, chain)
    final = flow.apply(p)
    if final != q:
        raise AssertionError("oracle witness does not replay to the target")
    return float(dist[goal]), flow


@dataclass
class EquivalenceRow:
    index: int
    dist_e: float
    dist_s: float
    l2: float

    @property
    def ratio(self) -> float | None:
        return self.dist_s / self.dist_e if self.dist_e > 0 else None


@dataclass
class EquivalenceReport:
    rows: list[EquivalenceRow] = field(default_factory=list)
    skipped: int = 0

    @property
    def max_ratio(self) -> float | None:
        ratios = [r.ratio for r in self.rows if r.ratio is not None]
        return max(ratios) if ratios else None


def equivalence_report(
    t: Tiling,
    sample: list[Permutation],
    limits: OracleLimits = OracleLimits(),
    region: RegionSpec | None = None,
) -> EquivalenceReport:
    """dist_E <= 2 dist_S for each sample entry, plus the measured converse ratio."""
    from .lattice import l2_distance

    ident = Permutation.identity(t)
    report = EquivalenceReport()
    for i, p in enumerate(sample):
        if p.is_identity():
            report.skipped += 1
            continue
        de, _ = exact_distance(p, ident, "E", limits, region)
        ds, _ = exact_distance(p, ident, "S", limits, region)
        if de > 2 * ds + 1e-12:
            raise AssertionError(
                f"dist_E={de} exceeds 2*dist_S={2 * ds} on sample {i}"
            )
        report.rows.append(EquivalenceRow(i, de, ds, l2_distance(p, ident)))
    return report

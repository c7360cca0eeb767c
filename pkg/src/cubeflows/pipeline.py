"""Three-stage construction connecting a permutation to the identity.

Stage 1 returns every far-displaced cube content to its exact home cell by
cascading it coarse cube by coarse cube (gather to the corner, redistribute,
place), touching bystanders only within adjacent coarse-cube pairs.  Stage 2
makes the permutation block-constant on the coarse tiling by exchanging the
balanced mismatch populations across slab interfaces, axis by axis and dyadic
scale by dyadic scale; at the finest scale mismatch pairs come from the orbit
pairing and are removed by stripe-level couple movements (phase A) or inside
adjacent coarse-cube pairs (phase B).  Stage 3 routes the coarse permutation,
then all block interiors in parallel.

Every stage is exact (table equality); costs are reported against the
recorded constants in CONSTANTS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import (
    Coloring,
    Permutation,
    RegionSpec,
    Tiling,
    l2_distance,
    whole_region,
)
from .movements import CoupleMovement, CoupleSequence, DiscreteFlow, Movement, SwapMovement
from .routing import (
    _merge_round_lists,
    connect_coloring_sets,
    place_tokens,
    route_box_sparse,
)

__all__ = [
    "CONSTANTS",
    "PipelineConfig",
    "PipelineError",
    "OrbitRecord",
    "StepReport",
    "choose_epsilon",
    "compute_orbits",
    "step1_localize",
    "step2_blockify",
    "step3_finish",
    "connect_to_identity",
    "random_permutation_at_l2",
    "exponent_experiment",
    "EXPERIMENT_HEADER",
]


class PipelineError(ValueError):
    pass


# Measured ceilings (dev grid: nu=2, N in {16,32,64}; nu=3, N in {8,16}); the
# acceptance suite asserts the measured quantities stay below these.
CONSTANTS = {
    "D_DISP": 16.0,    # stage-1 max displacement <= D_DISP * delta^eps
    "C_NORM1": 4.0,    # stage-1 l2 norm <= C_NORM1 * delta^(1-eps/2)
    "C1_COST": 24.0,   # stage-1 cost <= C1_COST * delta^(1-eps)
    "C2_COST": 24.0,   # stage-2 cost <= C2_COST * max(delta^(1/2-3eps/4), delta^(1/6+7eps/12))
    "C3_COST": 8.0,    # stage-3 cost <= C3_COST * delta^eps
    "C2_VOLUME": 8.0,  # finest-scale colored volume <= C2_VOLUME * delta^(1/3-5eps/6)
    "C2_NORM": 6.0,    # l2 after stage-2 phase A <= C2_NORM * delta^(1/2-eps/4)
}


def choose_epsilon(nu: int, delta: float | None = None) -> float:
    """Localization exponent: 2/7 in the plane, 1/(nu+1) in higher dimension."""
    if nu < 2:
        raise PipelineError("pipeline needs dimension >= 2")
    return 2.0 / 7.0 if nu == 2 else 1.0 / (nu + 1)


def _nearest_pow2_divisor(n: int, x: float) -> int:
    best, cur = 1, 1
    while cur * 2 <= n and n % (cur * 2) == 0:
        cur *= 2
        if abs(cur - x) <= abs(best - x):
            best = cur
    return best


@dataclass(frozen=True)
class PipelineConfig:
    """Coarse-grid parameters for one pipeline run.

    coarse_cells is delta^-eps snapped to the nearest power-of-two divisor of
    n (ties upward), so the coarse tiling always nests exactly.
    """

    nu: int
    n: int
    delta: float
    epsilon: float
    coarse_cells: int

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise PipelineError("delta must be positive")
        if not 0 < self.epsilon <= 2.0 / (2.0 + self.nu) + 1e-12:
            raise PipelineError(
                f"epsilon={self.epsilon} outside (0, 2/(2+nu)] for nu={self.nu}"
            )
        if self.coarse_cells < 1 or self.n % self.coarse_cells != 0:
            raise PipelineError("coarse cell count must divide the resolution")

    @classmethod
    def derive(
        cls,
        tiling: Tiling,
        delta: float,
        epsilon: float | None = None,
        coarse_cells: int | None = None,
    ) -> "PipelineConfig":
        eps = choose_epsilon(tiling.nu) if epsilon is None else epsilon
        if coarse_cells is None:
            coarse_cells = _nearest_pow2_divisor(tiling.n, delta ** (-eps))
        return cls(tiling.nu, tiling.n, delta, eps, coarse_cells)

    @property
    def theta(self) -> float:
        """Coarse cube side."""
        return 1.0 / self.coarse_cells

    @property
    def block_side(self) -> int:
        """Fine cubes per coarse cube side."""
        return self.n // self.coarse_cells

    @property
    def threshold(self) -> float:
        """Stage-1 coloring threshold: max(delta^eps, coarse side)."""
        return max(self.delta ** self.epsilon, self.theta)


@dataclass
class StepReport:
    name: str
    flow: DiscreteFlow
    result: Permutation
    cost: float
    bound: float
    checks: dict = field(default_factory=dict)


@dataclass
class OrbitRecord:
    seed: tuple[int, ...]
    cells: tuple[tuple[int, ...], ...]
    n_bar: int
    displacement: float


def _apply_steps(table: np.ndarray, steps: list[Movement], total: int) -> np.ndarray:
    for s in steps:
        mp = np.arange(total, dtype=np.int64)
        pr = s.transpositions()
        if pr.size:
            mp[pr[:, 0]] = pr[:, 1]
            mp[pr[:, 1]] = pr[:, 0]
        table = mp[table]
    return table


def _coarse_box(t: Tiling, cfg: PipelineConfig, coarse: tuple[int, ...]) -> RegionSpec:
    s = cfg.block_side
    return RegionSpec(tuple(c * s for c in coarse), tuple((c + 1) * s - 1 for c in coarse))


# ---------------------------------------------------------------------------
# stage 1: localization
# ---------------------------------------------------------------------------


def step1_localize(p: Permutation, cfg: PipelineConfig) -> StepReport:
    """Return every far-displaced cube content to its exact home cell."""
    t = p.tiling
    delta, eps = cfg.delta, cfg.epsilon
    norm = l2_distance(p, Permutation.identity(t))
    if norm > delta * (1 + 1e-9):
        raise PipelineError(f"stage-1 precondition violated: l2={norm} > delta={delta}")
    tau = cfg.threshold
    disp = p.displacements()
    colored = np.flatnonzero(disp > tau * (1 + 1e-12))
    bound_count = delta ** (2 - 2 * eps) * t.total
    if colored.size > bound_count + 1e-9:
        raise PipelineError("colored-count volume estimate violated")
    checks = {"colored_count": int(colored.size), "colored_bound": float(bound_count)}
    table = p.table.copy()
    flow_steps: list[Movement] = []
    m, s = cfg.coarse_cells, cfg.block_side

    if colored.size:
        if colored.size > s ** t.nu:
            raise PipelineError("colored cubes exceed one coarse cube; epsilon too large")
        src = colored
        home_cc = t.coords_array(src) // s

        def emit(rounds: list[SwapMovement]) -> None:
            nonlocal table
            flow_steps.extend(rounds)
            table = _apply_steps(table, rounds, t.total)

        def cascade(axis: int, front_range, mover_pred) -> None:
            for front in front_range:
                cur = table[src]
                cc = t.coords_array(cur) // s
                movers = np.flatnonzero(mover_pred(cc[:, axis], front))
                if movers.size == 0:
                    continue
                groups: dict[tuple[int, ...], list[int]] = {}
                for i in movers:
                    groups.setdefault(tuple(int(x) for x in cc[i]), []).append(int(i))
                occupied = set(int(c) for c in cur)
                parts = []
                step_dir = 1 if front_range.step is None or front_range.step > 0 else -1
                for key, idxs in sorted(groups.items()):
                    nxt = list(key)
                    nxt[axis] += step_dir
                    src_box = _coarse_box(t, cfg, key)
                    dst_box = _coarse_box(t, cfg, tuple(nxt))
                    pair_box = RegionSpec(
                        tuple(min(a, b) for a, b in zip(src_box.lo, dst_box.lo)),
                        tuple(max(a, b) for a, b in zip(src_box.hi, dst_box.hi)),
                    )
                    cur_cells = np.asarray(sorted(int(cur[i]) for i in idxs), dtype=np.int64)
                    free = [int(c) for c in dst_box.cells(t) if int(c) not in occupied]
                    if len(free) < len(idxs):
                        raise PipelineError("coarse cube overflow during cascade")
                    targets = np.asarray(free[: len(idxs)], dtype=np.int64)
                    occupied.update(int(c) for c in targets)
                    occupied.difference_update(int(c) for c in cur_cells)
                    parts.append(place_tokens(t, pair_box, cur_cells, targets))
                emit(_merge_round_lists(t, parts))

        for axis in range(t.nu):  # gather into the corner coarse cube
            cascade(axis, range(1, m), lambda cc_ax, front: cc_ax == front - 1)
        for axis in range(t.nu - 1, -1, -1):  # distribute, last axis first
            home_ax = home_cc[:, axis]
            cascade(
                axis,
                range(m - 1, 0, -1),
                lambda cc_ax, front, home_ax=home_ax: (cc_ax == front) & (home_ax <= front - 1),
            )

        cur = table[src]
        cc = t.coords_array(cur) // s
        if not np.array_equal(cc, home_cc):
            raise PipelineError("distribution failed to reach home coarse cubes")
        groups = {}
        for i in range(len(src)):
            groups.setdefault(tuple(int(x) for x in home_cc[i]), []).append(i)
        parts = []
        for key, idxs in sorted(groups.items()):
            box = _coarse_box(t, cfg, key)
            cur_cells = np.asarray([int(cur[i]) for i in idxs], dtype=np.int64)
            tgt_cells = np.asarray([int(src[i]) for i in idxs], dtype=np.int64)
            parts.append(place_tokens(t, box, cur_cells, tgt_cells))
        emit(_merge_round_lists(t, parts))
        if not np.array_equal(table[src], src):
            raise PipelineError("stage-1 placement is not exact")

    flow = DiscreteFlow(t, flow_steps)
    result = Permutation(t, table, validate=False)
    checks["max_displacement"] = result.max_displacement()
    checks["disp_bound"] = CONSTANTS["D_DISP"] * delta ** eps
    checks["l2_after"] = l2_distance(result, Permutation.identity(t))
    checks["l2_bound"] = CONSTANTS["C_NORM1"] * delta ** (1 - eps / 2)
    return StepReport(
        "localize", flow, result, flow.total_cost(), CONSTANTS["C1_COST"] * delta ** (1 - eps), checks
    )


# ---------------------------------------------------------------------------
# orbit pairing
# ---------------------------------------------------------------------------


def _orbit_pairs(
    table: np.ndarray, slice_of: np.ndarray, lower_slice: int, t: Tiling
) -> tuple[list[tuple[int, int]], list[OrbitRecord]]:
    """Pair red sources with black sources across one slab interface.

    A red source lives in the lower slice with its content one slice up; the
    walk along its permutation cycle (reduced to the stripe pair) ends at the
    first black source, and alternation of up/down interface crossings makes
    the pairing injective.
    """
    upper = lower_slice + 1
    cur = slice_of[table]
    reds = np.flatnonzero((slice_of == lower_slice) & (cur == upper))
    blacks = set(int(k) for k in np.flatnonzero((slice_of == upper) & (cur == lower_slice)))
    if len(reds) != len(blacks):
        raise PipelineError("red/black interface balance violated")
    pairs: list[tuple[int, int]] = []
    records: list[OrbitRecord] = []
    used: set[int] = set()
    for seed in (int(r) for r in reds):
        cells: list[int] = []
        x = seed
        guard = 0
        while True:
            x = int(table[x])
            guard += 1
            if guard > len(table) + 1:
                raise PipelineError("orbit walk did not terminate")
            if slice_of[x] not in (lower_slice, upper):
                continue  # reduced orbit: drop cells outside the stripe pair
            cells.append(x)
            if slice_of[x] == upper and cur[x] == lower_slice:
                break
        partner = cells[-1]
        if partner in used or partner not in blacks:
            raise PipelineError("orbit pairing is not injective")
        used.add(partner)
        pairs.append((seed, partner))
        d = (np.asarray(t.coords(partner)) - np.asarray(t.coords(seed))) / t.n
        records.append(
            OrbitRecord(
                seed=t.coords(seed),
                cells=tuple(t.coords(c) for c in cells),
                n_bar=len(cells),
                displacement=float(np.linalg.norm(d)),
            )
        )
    return pairs, records


def compute_orbits(
    p: Permutation, cfg: PipelineConfig, axis: int = 1
) -> tuple[list[OrbitRecord], Coloring]:
    """Three-coloring over the coarse slabs along `axis`, plus orbit records.

    A source cube is black (1) when its content sits one slab below home and
    red (2) one slab above; the balance #black(H_i) = #red(H_{i-1}) is checked
    exactly at every interface, and every reduced orbit must cross white cells
    only until its black terminus.
    """
    t = p.tiling
    s = cfg.block_side
    coords = t.coords_array(np.arange(t.total))
    slice_of = coords[:, axis] // s
    cur = slice_of[p.table]
    if np.abs(cur - slice_of).max(initial=0) > 1:
        raise PipelineError("displacement precondition violated: content crosses two slabs")
    colors = np.zeros(t.total, dtype=np.int64)
    colors[cur == slice_of - 1] = 1
    colors[cur == slice_of + 1] = 2
    for i in range(1, cfg.coarse_cells):
        n_black = int(np.count_nonzero((slice_of == i) & (colors == 1)))
        n_red = int(np.count_nonzero((slice_of == i - 1) & (colors == 2)))
        if n_black != n_red:
            raise PipelineError(f"balance violated at interface {i}: {n_black} vs {n_red}")
    records: list[OrbitRecord] = []
    for j in range(cfg.coarse_cells // 2):
        _, recs = _orbit_pairs(p.table, slice_of, 2 * j, t)
        for r in recs:
            for c in r.cells[:-1]:
                if colors[t.flat(c)] != 0:
                    raise PipelineError("reduced orbit crosses a colored cube before its terminus")
        records.extend(recs)
    coloring = Coloring(t, whole_region(t), tuple(int(c) for c in colors))
    return records, coloring


# ---------------------------------------------------------------------------
# stage 2: blockification
# ---------------------------------------------------------------------------


def _interface_swap_segments(
    t: Tiling,
    axis: int,
    sel_dn: np.ndarray,
    sel_up: np.ndarray,
    lower_box: RegionSpec,
    upper_box: RegionSpec,
) -> tuple[list[Movement], list[Movement], CoupleMovement | None]:
    """(pack_down, pack_up, swap) exchanging sel_dn cells with sel_up cells.

    sel_dn live in lower_box, sel_up in upper_box; both are packed against the
    shared interface, swapped by one couple movement of mirrored vertical
    couples, and the packing is reversed by the caller.
    """
    k = len(sel_dn)
    if k == 0:
        return [], [], None
    if k != len(sel_up):
        raise PipelineError("interface swap needs equal selections")

    def packed(box: RegionSpec, toward_high: bool) -> np.ndarray:
        cells = box.cells(t)
        coords = t.coords_array(cells)
        dist = (box.hi[axis] - coords[:, axis]) if toward_high else (coords[:, axis] - box.lo[axis])
        other = [a for a in range(t.nu) if a != axis]
        keys = [coords[:, a] for a in reversed(other)] + [dist]
        order = np.lexsort(tuple(keys))
        return cells[order][:k]

    pk_dn = packed(lower_box, toward_high=True)
    pk_up = packed(upper_box, toward_high=False)
    f_dn = list(connect_coloring_sets(t, lower_box, sel_dn, pk_dn).steps)
    f_up = list(connect_coloring_sets(t, upper_box, sel_up, pk_up).steps)
    lines: dict[tuple[int, ...], list[int]] = {}
    for a, b in zip(pk_dn, pk_up):
        ca, cb = t.coords(int(a)), t.coords(int(b))
        cross = tuple(x for i, x in enumerate(ca) if i != axis)
        if cross != tuple(x for i, x in enumerate(cb) if i != axis):
            raise PipelineError("mirrored packing is misaligned")
        lines.setdefault(cross, []).extend([ca[axis], cb[axis]])
    seqs = []
    for cross, axvals in sorted(lines.items()):
        axvals = sorted(axvals)
        lo = list(cross[:axis]) + [axvals[0]] + list(cross[axis:])
        hi = list(cross[:axis]) + [axvals[-1]] + list(cross[axis:])
        idx = tuple(v - axvals[0] for v in axvals)
        seqs.append(CoupleSequence(RegionSpec(tuple(lo), tuple(hi)), idx))
    return f_dn, f_up, CoupleMovement(t, seqs)


def _merge_movement_lists(t: Tiling, parts: list[list[Movement]]) -> list[Movement]:
    """Merge per-region movement programs index-wise (regions pairwise disjoint)."""
    depth = max((len(p) for p in parts), default=0)
    out: list[Movement] = []
    for i in range(depth):
        seqs: list[CoupleSequence] = []
        pairs = []
        for p in parts:
            if i < len(p):
                mv = p[i]
                if isinstance(mv, CoupleMovement):
                    seqs.extend(mv.sequences)
                else:
                    pairs.append(mv.pairs)
        if seqs and pairs:
            raise PipelineError("cannot merge mixed movement kinds in one round")
        if seqs:
            out.append(CoupleMovement(t, seqs))
        elif pairs:
            out.append(SwapMovement(t, np.concatenate(pairs, axis=0)))
    return out


def _merged_interface_program(
    t: Tiling, parts: list[tuple[list[Movement], list[Movement], CoupleMovement | None]]
) -> list[Movement]:
    parts = [p for p in parts if p[2] is not None]
    if not parts:
        return []
    pack_dn = _merge_movement_lists(t, [list(p[0]) for p in parts])
    pack_up = _merge_movement_lists(t, [list(p[1]) for p in parts])
    swap = _merge_movement_lists(t, [[p[2]] for p in parts])
    un_up = _merge_movement_lists(t, [list(reversed(p[1])) for p in parts])
    un_dn = _merge_movement_lists(t, [list(reversed(p[0])) for p in parts])
    return pack_dn + pack_up + swap + un_up + un_dn


def step2_blockify(p: Permutation, cfg: PipelineConfig) -> StepReport:
    """Make the permutation block-constant on the coarse tiling, exactly."""
    t = p.tiling
    delta, eps = cfg.delta, cfg.epsilon
    if eps > 1.0 / (t.nu + 1) + 1e-12:
        raise PipelineError("stage 2 requires epsilon <= 1/(nu+1)")
    ident = Permutation.identity(t)
    norm_in = l2_distance(p, ident)
    if norm_in > CONSTANTS["C_NORM1"] * delta ** (1 - eps / 2) * (1 + 1e-9):
        raise PipelineError(f"stage-2 norm precondition violated: {norm_in}")
    if p.max_displacement() > CONSTANTS["D_DISP"] * cfg.threshold * (1 + 1e-9):
        raise PipelineError("stage-2 displacement precondition violated")
    m, s = cfg.coarse_cells, cfg.block_side
    table = p.table.copy()
    steps: list[Movement] = []
    checks: dict = {
        "phase_a_cost": 0.0,
        "phase_b_cost": 0.0,
        "colored_volume": 0.0,
        "l2_after_phase_a": 0.0,
    }
    coords = t.coords_array(np.arange(t.total))
    axis_order = ([1, 0] + list(range(2, t.nu))) if t.nu >= 2 else [0]

    def emit(movs: list[Movement], key: str) -> None:
        nonlocal table
        steps.extend(movs)
        table = _apply_steps(table, movs, t.total)
        checks[key] += float(sum(mv.cost() for mv in movs))

    def slab_box(axis: int, lo_s: int, hi_s: int, processed: list[int], ctx: tuple[int, ...]) -> RegionSpec:
        lo = [0] * t.nu
        hi = [t.n - 1] * t.nu
        for b, cb in zip(processed, ctx):
            lo[b] = cb * s
            hi[b] = (cb + 1) * s - 1
        lo[axis] = lo_s * s
        hi[axis] = hi_s * s - 1
        return RegionSpec(tuple(lo), tuple(hi))

    recorded_phase_a_norm = False
    processed: list[int] = []
    for axis in axis_order:
        slice_of = coords[:, axis] // s
        n_scales = int(math.log2(m)) if m > 1 else 0
        contexts = list(np.ndindex(*((m,) * len(processed)))) if processed else [()]
        ctx_masks = {
            ctx: np.all(
                [coords[:, b] // s == cb for b, cb in zip(processed, ctx)], axis=0
            )
            if processed
            else np.ones(t.total, dtype=bool)
            for ctx in contexts
        }
        axis_colored = 0
        for scale in range(n_scales - 1, -1, -1):
            width = 2 ** (scale + 1)
            halfw = width // 2
            cur_sl = slice_of[table]
            parts_a = []
            parts_b: dict[tuple, tuple[list, list]] = {}
            for ctx in contexts:
                in_ctx = ctx_masks[ctx]
                for slab0 in range(0, m, width):
                    in_lower = in_ctx & (slice_of >= slab0) & (slice_of < slab0 + halfw)
                    in_upper = in_ctx & (slice_of >= slab0 + halfw) & (slice_of < slab0 + width)
                    cur_lower = (cur_sl >= slab0) & (cur_sl < slab0 + halfw)
                    cur_upper = (cur_sl >= slab0 + halfw) & (cur_sl < slab0 + width)
                    if np.any((in_lower | in_upper) & ~(cur_lower | cur_upper)):
                        raise PipelineError(
                            f"slab confinement invariant broken at axis {axis} scale {scale}"
                        )
                    red_src = np.flatnonzero(in_lower & cur_upper)
                    black_src = np.flatnonzero(in_upper & cur_lower)
                    if red_src.size != black_src.size:
                        raise PipelineError("mismatch populations are unbalanced")
                    if red_src.size == 0:
                        continue
                    lower_box = slab_box(axis, slab0, slab0 + halfw, processed, ctx)
                    upper_box = slab_box(axis, slab0 + halfw, slab0 + width, processed, ctx)
                    if scale == 0:
                        ctx_slice = np.where(in_ctx, slice_of, -(1 << 20))
                        pairs, _ = _orbit_pairs(table, ctx_slice, slab0, t)
                        long_r, long_b = [], []
                        for r_src, b_src in pairs:
                            rc = coords[table[r_src]] // s
                            bc = coords[table[b_src]] // s
                            cross_r = tuple(int(x) for i, x in enumerate(rc) if i != axis)
                            cross_b = tuple(int(x) for i, x in enumerate(bc) if i != axis)
                            if cross_r == cross_b:
                                grp = parts_b.setdefault(cross_r + (slab0,), ([], []))
                                grp[0].append(int(table[b_src]))
                                grp[1].append(int(table[r_src]))
                            else:
                                long_b.append(int(table[b_src]))
                                long_r.append(int(table[r_src]))
                        axis_colored += 2 * len(pairs)
                        if long_r:
                            parts_a.append(
                                _interface_swap_segments(
                                    t,
                                    axis,
                                    np.asarray(sorted(long_b), dtype=np.int64),
                                    np.asarray(sorted(long_r), dtype=np.int64),
                                    lower_box,
                                    upper_box,
                                )
                            )
                    else:
                        sel_dn = np.sort(table[black_src])
                        sel_up = np.sort(table[red_src])
                        parts_a.append(
                            _interface_swap_segments(t, axis, sel_dn, sel_up, lower_box, upper_box)
                        )
            emit(_merged_interface_program(t, parts_a), "phase_a_cost")
            if scale == 0 and not recorded_phase_a_norm:
                checks["l2_after_phase_a"] = l2_distance(
                    Permutation(t, table, validate=False), ident
                )
                recorded_phase_a_norm = True
            if parts_b:
                progs = []
                for key, (sel_dn, sel_up) in sorted(parts_b.items()):
                    cross, slab0 = key[:-1], key[-1]
                    cc_dn = list(cross[:axis]) + [slab0] + list(cross[axis:])
                    cc_up = list(cross[:axis]) + [slab0 + 1] + list(cross[axis:])
                    progs.append(
                        _interface_swap_segments(
                            t,
                            axis,
                            np.asarray(sorted(sel_dn), dtype=np.int64),
                            np.asarray(sorted(sel_up), dtype=np.int64),
                            _coarse_box(t, cfg, tuple(cc_dn)),
                            _coarse_box(t, cfg, tuple(cc_up)),
                        )
                    )
                emit(_merged_interface_program(t, progs), "phase_b_cost")
        if np.any(slice_of[table] != slice_of):
            raise PipelineError(f"axis {axis} pass left mismatched slabs")
        checks["colored_volume"] = max(checks["colored_volume"], axis_colored / t.total)
        processed.append(axis)

    result = Permutation(t, table, validate=False)
    block_of = np.zeros(t.total, dtype=np.int64)
    for a in range(t.nu):
        block_of = block_of * m + coords[:, a] // s
    if np.any(block_of[result.table] != block_of):
        raise PipelineError("stage-2 output is not block-constant")
    flow = DiscreteFlow(t, steps)
    checks["l2_after"] = l2_distance(result, ident)
    checks["volume_bound"] = CONSTANTS["C2_VOLUME"] * delta ** (1 / 3 - 5 * eps / 6)
    checks["phase_a_norm_bound"] = CONSTANTS["C2_NORM"] * delta ** (0.5 - eps / 4)
    bound = CONSTANTS["C2_COST"] * max(delta ** (0.5 - 0.75 * eps), delta ** (1 / 6 + 7 * eps / 12))
    return StepReport("blockify", flow, result, flow.total_cost(), bound, checks)


# ---------------------------------------------------------------------------
# stage 3: finish
# ---------------------------------------------------------------------------


def step3_finish(p: Permutation, cfg: PipelineConfig) -> StepReport:
    """Route the coarse permutation, then every block interior, to identity."""
    t = p.tiling
    m, s = cfg.coarse_cells, cfg.block_side
    coords = t.coords_array(np.arange(t.total))
    cc = coords // s
    tc = Tiling(t.nu, m)
    block_of = np.zeros(t.total, dtype=np.int64)
    for a in range(t.nu):
        block_of = block_of * m + cc[:, a]
    img_block = block_of[p.table]
    coarse_table = np.full(tc.total, -1, dtype=np.int64)
    for b in range(tc.total):
        members = np.flatnonzero(block_of == b)
        imgs = np.unique(img_block[members])
        if imgs.size != 1:
            raise PipelineError(f"permutation is not block-constant on coarse cube {b}")
        coarse_table[b] = imgs[0]
    coarse_perm = Permutation(tc, coarse_table)
    table = p.table.copy()
    steps: list[Movement] = []

    def emit(movs: list[Movement]) -> None:
        nonlocal table
        steps.extend(movs)
        table = _apply_steps(table, movs, t.total)

    coarse_flow = route_box_sparse(tc, whole_region(tc), coarse_perm)
    for cmov in coarse_flow.steps:
        halves: list[CoupleSequence] = []
        wholes: list[CoupleSequence] = []
        for a, b in cmov.pairs:
            ca, cb = tc.coords(int(a)), tc.coords(int(b))
            axis = next(i for i in range(t.nu) if ca[i] != cb[i])
            lo_cc = ca if ca[axis] < cb[axis] else cb
            box_a = _coarse_box(t, cfg, tuple(lo_cc))
            hi_cc = list(lo_cc)
            hi_cc[axis] += 1
            box_b = _coarse_box(t, cfg, tuple(hi_cc))
            full_rev = tuple(range(2 * s))
            half_rev = tuple(i for i in range(s) if (s % 2 == 0) or i != s // 2)
            other = [ax for ax in range(t.nu) if ax != axis]
            for cross in np.ndindex(*[box_a.extents[ax] for ax in other]):
                abs_cross = [box_a.lo[other[i]] + cross[i] for i in range(len(other))]
                lo_line = list(abs_cross[:axis]) + [box_a.lo[axis]] + list(abs_cross[axis:])
                hi_line = list(abs_cross[:axis]) + [box_b.hi[axis]] + list(abs_cross[axis:])
                mid_lo = list(lo_line)
                mid_hi = list(hi_line)
                mid_hi[axis] = box_a.hi[axis]
                mid2_lo = list(lo_line)
                mid2_lo[axis] = box_b.lo[axis]
                if s > 1:
                    halves.append(CoupleSequence(RegionSpec(tuple(mid_lo), tuple(mid_hi)), half_rev))
                    halves.append(CoupleSequence(RegionSpec(tuple(mid2_lo), tuple(hi_line)), half_rev))
                wholes.append(CoupleSequence(RegionSpec(tuple(lo_line), tuple(hi_line)), full_rev))
        movs: list[Movement] = []
        if halves:
            movs.append(CoupleMovement(t, halves))
        movs.append(CoupleMovement(t, wholes))
        emit(movs)
    if np.any(block_of[table] != block_of):
        raise PipelineError("coarse routing failed to reach coarse identity")
    coarse_cost = float(sum(mv.cost() for mv in steps))

    parts = []
    for b in range(tc.total):
        members = np.flatnonzero(block_of == b)
        if np.array_equal(table[members], members):
            continue
        box = _coarse_box(t, cfg, tc.coords(b))
        cells = box.cells(t)
        sub_table = np.arange(t.total, dtype=np.int64)
        sub_table[cells] = table[cells]
        flow_b = route_box_sparse(t, box, Permutation(t, sub_table))
        parts.append(list(flow_b.steps))
    emit(_merge_movement_lists(t, parts))
    if not np.array_equal(table, np.arange(t.total)):
        raise PipelineError("stage 3 did not reach the identity")
    flow = DiscreteFlow(t, steps)
    checks = {
        "coarse_cost": coarse_cost,
        "inner_cost": flow.total_cost() - coarse_cost,
        "coarse_moved": int(np.count_nonzero(coarse_table != np.arange(tc.total))),
    }
    bound = CONSTANTS["C3_COST"] * cfg.delta ** cfg.epsilon
    return StepReport(
        "finish", flow, Permutation.identity(t), flow.total_cost(), bound, checks
    )


# ---------------------------------------------------------------------------
# end-to-end
# ---------------------------------------------------------------------------


def connect_to_identity(
    p: Permutation, cfg: PipelineConfig | None = None
) -> tuple[DiscreteFlow, float, dict]:
    """Chain the three stages; the returned flow applied to p is the identity."""
    t = p.tiling
    ident = Permutation.identity(t)
    delta = l2_distance(p, ident)
    if delta == 0.0:
        return DiscreteFlow(t, []), 0.0, {"delta": 0.0, "steps": []}
    if cfg is None:
        cfg = PipelineConfig.derive(t, delta)
    r1 = step1_localize(p, cfg)
    r2 = step2_blockify(r1.result, cfg)
    r3 = step3_finish(r2.result, cfg)
    flow = r1.flow + r2.flow + r3.flow
    final = flow.apply(p)
    if not final.is_identity():
        raise PipelineError("composed flow does not reach the identity")
    ledger = {
        "delta": delta,
        "epsilon": cfg.epsilon,
        "coarse_cells": cfg.coarse_cells,
        "steps": [
            {"name": r.name, "cost": r.cost, "bound": r.bound, "checks": r.checks}
            for r in (r1, r2, r3)
        ],
    }
    return flow, flow.total_cost(), ledger


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------


def random_permutation_at_l2(
    tiling: Tiling, delta: float, rng: np.random.Generator, window: tuple[float, float] = (0.9, 1.1)
) -> Permutation:
    """Compose random swap movements until the distance to identity hits the window.

    The movement stream is generated once and the prefix length is bisected,
    so the result is deterministic in the generator state.
    """
    ident = Permutation.identity(tiling)
    edges = tiling.adjacent_pairs()
    target_pairs = max(1, tiling.total // 8)

    movements: list[np.ndarray] = []

    def movement(i: int) -> np.ndarray:
        while len(movements) <= i:
            order = rng.permutation(len(edges))
            used: set[int] = set()
            chosen = []
            for j in order:
                a, b = int(edges[j, 0]), int(edges[j, 1])
                if a in used or b in used:
                    continue
                chosen.append((a, b))
                used.add(a)
                used.add(b)
                if len(chosen) >= target_pairs:
                    break
            movements.append(np.asarray(chosen, dtype=np.int64))
        return movements[i]

    tables: list[np.ndarray] = [np.arange(tiling.total, dtype=np.int64)]

    def prefix(k: int) -> np.ndarray:
        while len(tables) <= k:
            i = len(tables) - 1
            mp = np.arange(tiling.total, dtype=np.int64)
            mv = movement(i)
            mp[mv[:, 0]] = mv[:, 1]
            mp[mv[:, 1]] = mv[:, 0]
            tables.append(mp[tables[-1]])
        return tables[k]

    def l2_at(k: int) -> float:
        return l2_distance(Permutation(tiling, prefix(k), validate=False), ident)

    hi = 1
    while l2_at(hi) < delta * window[0]:
        hi *= 2
        if hi > 1 << 16:
            raise PipelineError("cannot reach the requested distance")
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if l2_at(mid) < delta * window[0]:
            lo = mid
        else:
            hi = mid
    for k in range(hi, hi + 64):
        v = l2_at(k)
        if delta * window[0] <= v <= delta * window[1]:
            return Permutation(tiling, prefix(k))
    raise PipelineError("bisection missed the distance window")


EXPERIMENT_HEADER = [
    "nu", "N", "seed", "delta", "epsilon", "l2",
    "cost1", "bound1", "cost2", "bound2", "cost3", "bound3", "total", "alpha_ref",
]


def exponent_experiment(
    nu: int,
    n_list: list[int],
    delta_grid: list[float],
    seeds: list[int],
    out_path: str | None = None,
) -> tuple[list[dict], float | None]:
    """Run the pipeline over a grid and report rows plus the log-log slope."""
    rows: list[dict] = []
    for n in n_list:
        t = Tiling(nu, n)
        for delta in delta_grid:
            for seed in seeds:
                rng = np.random.Generator(np.random.Philox(seed))
                p = random_permutation_at_l2(t, delta, rng)
                ident = Permutation.identity(t)
                l2 = l2_distance(p, ident)
                cfg = PipelineConfig.derive(t, l2)
                flow, total, ledger = connect_to_identity(p, cfg)
                st = ledger["steps"]
                rows.append(
                    {
                        "nu": nu,
                        "N": n,
                        "seed": seed,
                        "delta": delta,
                        "epsilon": cfg.epsilon,
                        "l2": l2,
                        "cost1": st[0]["cost"],
                        "bound1": st[0]["bound"],
                        "cost2": st[1]["cost"],
                        "bound2": st[1]["bound"],
                        "cost3": st[2]["cost"],
                        "bound3": st[2]["bound"],
                        "total": total,
                        "alpha_ref": choose_epsilon(nu),
                    }
                )
    slope = None
    pos = [(r["l2"], r["total"]) for r in rows if r["l2"] > 0 and r["total"] > 0]
    if len(pos) >= 2:
        x = np.log([a for a, _ in pos])
        y = np.log([b for _, b in pos])
        slope = float(np.polyfit(x, y, 1)[0])
    if out_path is not None:
        import csv

        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            w = csv.DictWriter(fh, fieldnames=EXPERIMENT_HEADER, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return rows, slope

"""Movement algebras on cube tilings and their discretized length functionals.

Two kinds of movement connect permutations:

* SwapMovement: a simultaneous set of disjoint swaps of face-adjacent cubes,
  costed n^(-1-nu/2) * sqrt(#swaps).
* CoupleMovement: simultaneous nested swapping-couple sequences over pairwise
  disjoint arrays, costed max_len * n^(-1-nu/2) * sqrt(total couples).

Every movement is an involution on cubes; a DiscreteFlow is an ordered list of
movements whose cost is the sum of step costs.  Flow text format ("S:"/"E:"
lines) is defined at the bottom.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeError, Permutation, RegionSpec, Tiling

__all__ = [
    "SwapMovement",
    "CoupleSequence",
    "CoupleMovement",
    "DiscreteFlow",
    "Violation",
    "validate_movement",
    "movement_cost",
    "apply_movement",
    "movement_as_permutation",
    "realize_line_permutations",
    "embed_swaps_as_couples",
    "lower_couples_to_swaps",
    "flow_apply_and_cost",
    "format_flow",
    "parse_flow",
    "write_flow",
    "read_flow",
]


class MovementError(ValueError):
    """Structurally invalid movement or flow."""


@dataclass(frozen=True)
class Violation:
    """First violated validity clause, with the offending cubes."""

    clause: str
    cubes: tuple[tuple[int, ...], ...] = ()

    def __str__(self) -> str:
        where = ", ".join(str(c) for c in self.cubes)
        return f"{self.clause}" + (f" at {where}" if where else "")


class SwapMovement:
    """Simultaneous disjoint swaps of adjacent cube pairs."""

    __slots__ = ("tiling", "pairs")

    def __init__(self, tiling: Tiling, pairs: Iterable[tuple] | np.ndarray):
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
        if arr.size == 0:
            arr = np.empty((0, 2), dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise MovementError("pairs must be (k, 2)")
        arr = arr.copy()
        arr.flags.writeable = False
        self.tiling = tiling
        self.pairs = arr

    @classmethod
    def from_coords(cls, tiling: Tiling, pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> "SwapMovement":
        return cls(tiling, [(tiling.flat(a), tiling.flat(b)) for a, b in pairs])

    @property
    def swap_count(self) -> int:
        return int(self.pairs.shape[0])

    def transpositions(self) -> np.ndarray:
        return self.pairs

    def cost(self) -> float:
        if self.swap_count == 0:
            return 0.0
        t = self.tiling
        return t.n ** (-1 - t.nu / 2) * math.sqrt(self.swap_count)

    def validate(self) -> Violation | None:
        t = self.tiling
        p = self.pairs
        if p.size == 0:
            return None
        if p.min() < 0 or p.max() >= t.total:
            bad = p[(p < 0) | (p >= t.total)]
            return Violation("cube index out of range", tuple((int(b),) for b in bad[:2]))
        a = t.coords_array(p[:, 0])
        b = t.coords_array(p[:, 1])
        d = np.abs(a - b)
        adj = (d.sum(axis=1) == 1) & (d.max(axis=1) == 1)
        if not adj.all():
            i = int(np.flatnonzero(~adj)[0])
            return Violation("pair is not face-adjacent", (tuple(a[i]), tuple(b[i])))
        flat = p.reshape(-1)
        uniq, counts = np.unique(flat, return_counts=True)
        if (counts > 1).any():
            shared = int(uniq[counts > 1][0])
            return Violation("cube appears in two pairs", (t.coords(shared),))
        return None


@dataclass(frozen=True)
class CoupleSequence:
    """Nested swapping couples within one array.

    indices are 0-based positions within the array, strictly increasing; with
    2M of them, couple j pairs position indices[j] with indices[2M-1-j].
    """

    array: RegionSpec
    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def couple_count(self) -> int:
        return len(self.indices) // 2

    def couples(self) -> list[tuple[int, int]]:
        k = self.indices
        m = len(k) // 2
        return [(k[j], k[2 * m - 1 - j]) for j in range(m)]

    def validate(self, tiling: Tiling) -> Violation | None:
        try:
            self.array.check_inside(tiling)
        except LatticeError as exc:
            return Violation(str(exc))
        if self.array.kind != "array":
            return Violation(f"region {self.array.lo}..{self.array.hi} is not an array")
        k = self.indices
        if len(k) % 2 != 0:
            return Violation("odd number of couple indices")
        ln = self.array.length
        if any(i < 0 or i >= ln for i in k):
            return Violation("couple index outside array", ())
        if any(k[j] >= k[j + 1] for j in range(len(k) - 1)):
            return Violation("couple indices must be strictly increasing")
        return None


class CoupleMovement:
    """Simultaneous couple sequences over pairwise disjoint arrays."""

    __slots__ = ("tiling", "sequences", "_pairs")

    def __init__(self, tiling: Tiling, sequences: Iterable[CoupleSequence]):
        self.tiling = tiling
        self.sequences = tuple(sequences)
        self._pairs = None

    @property
    def couple_count(self) -> int:
        return sum(s.couple_count for s in self.sequences)

    @property
    def max_array_length(self) -> int:
        return max((s.array.length for s in self.sequences), default=0)

    def transpositions(self) -> np.ndarray:
        if self._pairs is None:
            pairs = []
            for s in self.sequences:
                cells = s.array.cells(self.tiling)
                pairs.extend((int(cells[i]), int(cells[j])) for i, j in s.couples())
            arr = np.asarray(pairs, dtype=np.int64) if pairs else np.empty((0, 2), dtype=np.int64)
            arr.flags.writeable = False
            self._pairs = arr
        return self._pairs

    def cost(self) -> float:
        h = self.couple_count
        if h == 0:
            return 0.0
        t = self.tiling
        return self.max_array_length * t.n ** (-1 - t.nu / 2) * math.sqrt(h)

    def validate(self) -> Violation | None:
        for s in self.sequences:
            v = s.validate(self.tiling)
            if v is not None:
                return v
        seqs = self.sequences
        for i in range(len(seqs)):
            for j in range(i + 1, len(seqs)):
                if not seqs[i].array.disjoint_from(seqs[j].array):
                    return Violation(
                        "arrays overlap",
                        (seqs[i].array.lo, seqs[j].array.lo),
                    )
        return None


Movement = SwapMovement | CoupleMovement


def validate_movement(m: Movement) -> Violation | None:
    """None if all type invariants hold, else the first violated clause."""
    return m.validate()


def movement_cost(m: Movement) -> float:
    v = m.validate()
    if v is not None:
        raise MovementError(f"invalid movement: {v}")
    return m.cost()


def _movement_map(m: Movement, total: int) -> np.ndarray:
    arr = np.arange(total, dtype=np.int64)
    p = m.transpositions()
    if p.size:
        arr[p[:, 0]] = p[:, 1]
        arr[p[:, 1]] = p[:, 0]
    return arr


def movement_as_permutation(m: Movement) -> Permutation:
    return Permutation(m.tiling, _movement_map(m, m.tiling.total), validate=False)


def apply_movement(p: Permutation, m: Movement, *, validate: bool = True) -> Permutation:
    """Return m∘p.  Applying the same movement twice gives back p."""
    if p.tiling != m.tiling:
        raise LatticeError("tiling mismatch between permutation and movement")
    if validate:
        v = m.validate()
        if v is not None:
            raise MovementError(f"invalid movement: {v}")
    mp = _movement_map(m, p.tiling.total)
    return Permutation(p.tiling, mp[p.table], validate=False)


class DiscreteFlow:
    """Ordered list of movements; cost is the sum of per-step costs."""

    __slots__ = ("tiling", "steps", "_cost")

    def __init__(self, tiling: Tiling, steps: Iterable[Movement] = ()):
        self.tiling = tiling
        self.steps = list(steps)
        self._cost = None
        for s in self.steps:
            if s.tiling != tiling:
                raise LatticeError("flow step on a different tiling")

    def __len__(self) -> int:
        return len(self.steps)

    def __add__(self, other: "DiscreteFlow") -> "DiscreteFlow":
        if other.tiling != self.tiling:
            raise LatticeError("cannot concatenate flows on different tilings")
        return DiscreteFlow(self.tiling, self.steps + other.steps)

    @property
    def duration(self) -> int:
        return len(self.steps)

    def total_cost(self) -> float:
        if self._cost is None:
            self._cost = float(sum(s.cost() for s in self.steps))
        return self._cost

    def reversed(self) -> "DiscreteFlow":
        """Inverse flow: movements are involutions, so reversing undoes the flow."""
        return DiscreteFlow(self.tiling, list(reversed(self.steps)))

    def validate(self) -> None:
        for i, s in enumerate(self.steps):
            v = s.validate()
            if v is not None:
                raise MovementError(f"invalid movement at step {i}: {v}")

    def apply(self, p: Permutation, *, validate: bool = False) -> Permutation:
        table = p.table
        for i, s in enumerate(self.steps):
            if validate:
                v = s.validate()
                if v is not None:
                    raise MovementError(f"invalid movement at step {i}: {v}")
            mp = _movement_map(s, p.tiling.total)
            table = mp[table]
        return Permutation(p.tiling, table, validate=False)

    def as_permutation(self) -> Permutation:
        return self.apply(Permutation.identity(self.tiling))


def flow_apply_and_cost(p: Permutation, f: DiscreteFlow) -> tuple[Permutation, float]:
    """Sequential application with per-step validation; returns (result, cost)."""
    q = f.apply(p, validate=True)
    return q, f.total_cost()


def embed_swaps_as_couples(s: SwapMovement) -> CoupleMovement:
    """View adjacent swaps as length-2 arrays with one couple each (cost doubles)."""
    v = s.validate()
    if v is not None:
        raise MovementError(f"invalid movement: {v}")
    t = s.tiling
    seqs = []
    for a, b in s.pairs:
        ca, cb = t.coords(int(a)), t.coords(int(b))
        lo = tuple(min(x, y) for x, y in zip(ca, cb))
        hi = tuple(max(x, y) for x, y in zip(ca, cb))
        seqs.append(CoupleSequence(RegionSpec(lo, hi), (0, 1)))
    return CoupleMovement(t, seqs)


def _oddeven_round_pairs(cells: np.ndarray, vals: np.ndarray, parity: int) -> np.ndarray:
    """One odd-even comparison round on parallel lines; swaps vals in place.

    cells, vals: (L, ell).  Returns flat cube pairs swapped this round.
    """
    ell = vals.shape[1]
    idx = np.arange(parity, ell - 1, 2)
    if idx.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    left = vals[:, idx]
    right = vals[:, idx + 1]
    rows, cols = np.nonzero(left > right)
    if rows.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    c = idx[cols]
    lv = vals[rows, c].copy()
    vals[rows, c] = vals[rows, c + 1]
    vals[rows, c + 1] = lv
    return np.stack([cells[rows, c], cells[rows, c + 1]], axis=1)


def realize_line_permutations(
    tiling: Tiling, cells: np.ndarray, sigma: np.ndarray
) -> list[SwapMovement]:
    """Adjacent-swap rounds whose composition equals sigma on each line.

    cells: (L, ell) flat cube ids of parallel disjoint lines; sigma: (L, ell)
    position permutation per line.  Odd-even transposition sorting of sigma
    yields at most ell rounds; rounds are merged across lines.
    """
    vals = np.array(sigma, dtype=np.int64)
    ell = vals.shape[1]
    ref = np.arange(ell)
    rounds: list[SwapMovement] = []
    for r in range(ell):
        if np.array_equal(vals, np.broadcast_to(ref, vals.shape)):
            break
        pairs = _oddeven_round_pairs(cells, vals, r % 2)
        if pairs.size:
            rounds.append(SwapMovement(tiling, pairs))
    if not np.array_equal(vals, np.broadcast_to(ref, vals.shape)):
        raise MovementError("odd-even realization did not terminate in ell rounds")
    return rounds


def lower_couples_to_swaps(e: CoupleMovement) -> DiscreteFlow:
    """Adjacent-swap flow realizing the same permutation as the couple movement.

    Per array the involution is realized by odd-even transposition sorting, so
    duration <= array length, each round swaps at most 2M pairs, and the cost
    is at most sqrt(2) * len * sqrt(M) * n^(-1-nu/2) per array.  Rounds of
    disjoint arrays run in parallel (merged per round).
    """
    v = e.validate()
    if v is not None:
        raise MovementError(f"invalid movement: {v}")
    t = e.tiling
    per_array: list[list[SwapMovement]] = []
    for s in e.sequences:
        if s.couple_count == 0:
            continue
        cells = s.array.cells(t).reshape(1, -1)
        sigma = np.arange(s.array.length, dtype=np.int64)
        for i, j in s.couples():
            sigma[i], sigma[j] = sigma[j], sigma[i]
        per_array.append(realize_line_permutations(t, cells, sigma.reshape(1, -1)))
    depth = max((len(r) for r in per_array), default=0)
    steps = []
    for k in range(depth):
        pairs = [r[k].pairs for r in per_array if k < len(r)]
        merged = np.concatenate(pairs, axis=0)
        steps.append(SwapMovement(t, merged))
    return DiscreteFlow(t, steps)


# ---------------------------------------------------------------------------
# flow text format, one step per line:
#   S: (i,j)-(k,l); (m,n)-(o,p)
#   E: [i,j..k,l axis=a] idx=i1,...,i2M | [next array] idx=...
# header line "nu=<nu> N=<n>"; an optional trailing "total_cost: <float>" line
# is verified on load (mismatch is a format error) and never written.
# ---------------------------------------------------------------------------

_SEQ_RE = re.compile(r"^\[([0-9,]+)\.\.([0-9,]+) axis=(\d+)\] idx=([0-9,]*)$")


def _fmt_coords(c: tuple[int, ...]) -> str:
    return ",".join(str(x) for x in c)


def format_flow(f: DiscreteFlow) -> str:
    t = f.tiling
    lines = [f"nu={t.nu} N={t.n}"]
    for s in f.steps:
        if isinstance(s, SwapMovement):
            parts = [
                f"({_fmt_coords(t.coords(int(a)))})-({_fmt_coords(t.coords(int(b)))})"
                for a, b in s.pairs
            ]
            lines.append("S: " + "; ".join(parts))
        else:
            parts = []
            for sq in s.sequences:
                idx = ",".join(str(i) for i in sq.indices)
                parts.append(
                    f"[{_fmt_coords(sq.array.lo)}..{_fmt_coords(sq.array.hi)} axis={sq.array.axis}] idx={idx}"
                )
            lines.append("E: " + " | ".join(parts))
    return "\n".join(lines) + "\n"


def parse_flow(text: str) -> DiscreteFlow:
    lines = [ln.strip() for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise MovementError("empty flow file")
    m = re.match(r"^nu=(\d+) N=(\d+)$", lines[0])
    if not m:
        raise MovementError(f"bad flow header: {lines[0]!r}")
    t = Tiling(int(m.group(1)), int(m.group(2)))
    steps: list[Movement] = []
    claimed_cost = None
    for ln in lines[1:]:
        if ln.startswith("total_cost:"):
            if claimed_cost is not None:
                raise MovementError("duplicate total_cost line")
            claimed_cost = float(ln.split(":", 1)[1])
            continue
        if claimed_cost is not None:
            raise MovementError("flow steps after total_cost line")
        if ln.startswith("S:"):
            body = ln[2:].strip()
            pairs = []
            if body:
                for part in body.split(";"):
                    pm = re.match(r"^\(([0-9,]+)\)-\(([0-9,]+)\)$", part.strip())
                    if not pm:
                        raise MovementError(f"bad swap pair: {part.strip()!r}")
                    a = tuple(int(x) for x in pm.group(1).split(","))
                    b = tuple(int(x) for x in pm.group(2).split(","))
                    pairs.append((t.flat(a), t.flat(b)))
            steps.append(SwapMovement(t, pairs))
        elif ln.startswith("E:"):
            body = ln[2:].strip()
            seqs = []
            if body:
                for part in body.split("|"):
                    sm = _SEQ_RE.match(part.strip())
                    if not sm:
                        raise MovementError(f"bad couple sequence: {part.strip()!r}")
                    lo = tuple(int(x) for x in sm.group(1).split(","))
                    hi = tuple(int(x) for x in sm.group(2).split(","))
                    region = RegionSpec(lo, hi)
                    declared_axis = int(sm.group(3))
                    if region.length > 1 and region.axis != declared_axis:
                        raise MovementError(f"axis mismatch in {part.strip()!r}")
                    idx = tuple(int(x) for x in sm.group(4).split(",")) if sm.group(4) else ()
                    seqs.append(CoupleSequence(region, idx))
            steps.append(CoupleMovement(t, seqs))
        else:
            raise MovementError(f"unknown flow line: {ln!r}")
    flow = DiscreteFlow(t, steps)
    flow.validate()
    if claimed_cost is not None and not math.isclose(claimed_cost, flow.total_cost(), rel_tol=1e-9, abs_tol=1e-12):
        raise MovementError(
            f"stored cost {claimed_cost} does not match recomputed {flow.total_cost()}"
        )
    return flow


def write_flow(path: str, f: DiscreteFlow) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_flow(f))


def read_flow(path: str) -> DiscreteFlow:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_flow(fh.read())

"""Cube tilings of the unit cube, cube-level permutations, colorings, and the L2 metric.

The tiling splits [0,1]^nu into n^nu axis-aligned cubes of side 1/n.  Cubes are
addressed either by a nu-tuple of 0-based coordinates or by their flat index in
lexicographic order (first coordinate most significant).  A permutation is a
bijection of cube indices, interpreted geometrically as the map that translates
each cube onto its image cube.  All values here are immutable after
construction and safe to share across threads.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tiling",
    "RegionSpec",
    "Permutation",
    "Coloring",
    "cube_center",
    "are_adjacent",
    "l2_distance",
    "compose",
    "invert",
    "region_cubes",
    "whole_region",
    "write_permutation",
    "read_permutation",
    "format_permutation",
    "parse_permutation",
]


class LatticeError(ValueError):
    """Invalid cube, region, or permutation data."""


@dataclass(frozen=True)
class Tiling:
    """Tiling of [0,1]^nu into n^nu cubes of side 1/n."""

    nu: int
    n: int

    def __post_init__(self) -> None:
        if self.nu < 1:
            raise LatticeError(f"dimension must be >= 1, got {self.nu}")
        if self.n < 1:
            raise LatticeError(f"resolution must be >= 1, got {self.n}")
        # keep index arithmetic comfortably inside int64
        if self.n ** self.nu > 2**31:
            raise LatticeError(f"tiling with {self.n}^{self.nu} cubes is too large")

    @property
    def total(self) -> int:
        return self.n ** self.nu

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.nu

    def flat(self, coords: Sequence[int]) -> int:
        """Flat lexicographic index of a cube given by coordinates."""
        c = tuple(int(x) for x in coords)
        if len(c) != self.nu or any(x < 0 or x >= self.n for x in c):
            raise LatticeError(f"cube {c} outside tiling nu={self.nu} N={self.n}")
        return int(np.ravel_multi_index(c, self.shape))

    def coords(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.total:
            raise LatticeError(f"flat index {flat} outside tiling")
        return tuple(int(x) for x in np.unravel_index(flat, self.shape))

    def coords_array(self, flats: np.ndarray) -> np.ndarray:
        """(k, nu) integer coordinates for an array of flat indices."""
        return np.stack(np.unravel_index(np.asarray(flats, dtype=np.int64), self.shape), axis=-1)

    def centers(self) -> np.ndarray:
        """(total, nu) array of cube centers, cached per tiling."""
        return _centers_cached(self.nu, self.n)

    def axis_stride(self, axis: int) -> int:
        return self.n ** (self.nu - 1 - axis)

    def adjacent_pairs(self) -> np.ndarray:
        """(m, 2) flat indices of all face-adjacent cube pairs."""
        return _adjacent_pairs_cached(self.nu, self.n)


@lru_cache(maxsize=None)
def _centers_cached(nu: int, n: int) -> np.ndarray:
    idx = np.indices((n,) * nu).reshape(nu, -1).T
    c = (idx + 0.5) / n
    c.flags.writeable = False
    return c


@lru_cache(maxsize=None)
def _adjacent_pairs_cached(nu: int, n: int) -> np.ndarray:
    t = Tiling(nu, n)
    grids = np.indices(t.shape)
    out = []
    for axis in range(nu):
        sel = grids[axis] < n - 1
        base = np.flatnonzero(sel.reshape(-1))
        out.append(np.stack([base, base + t.axis_stride(axis)], axis=1))
    pairs = np.concatenate(out, axis=0) if out else np.empty((0, 2), dtype=np.int64)
    pairs.flags.writeable = False
    return pairs


def cube_center(t: Tiling, k: Sequence[int]) -> tuple[float, ...]:
    """Center of cube k: component i equals (k_i + 1/2) / n."""
    t.flat(k)  # range check
    return tuple((float(x) + 0.5) / t.n for x in k)


def are_adjacent(t: Tiling, k1: Sequence[int], k2: Sequence[int]) -> bool:
    """True iff the cubes share a (nu-1)-dimensional face."""
    t.flat(k1), t.flat(k2)
    diff = [abs(a - b) for a, b in zip(k1, k2)]
    return sum(diff) == 1 and max(diff) == 1


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned box of cubes given by inclusive integer corner bounds.

    kind is "array" when at most one axis has extent > 1, else "rectangle".
    """

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self) -> None:
        lo = tuple(int(x) for x in self.lo)
        hi = tuple(int(x) for x in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise LatticeError("lo/hi dimension mismatch")
        if any(a > b for a, b in zip(lo, hi)):
            raise LatticeError(f"empty region lo={lo} hi={hi}")
        if any(a < 0 for a in lo):
            raise LatticeError(f"negative region bound lo={lo}")

    @property
    def nu(self) -> int:
        return len(self.lo)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        out = 1
        for e in self.extents:
            out *= e
        return out

    @property
    def kind(self) -> str:
        return "array" if sum(e > 1 for e in self.extents) <= 1 else "rectangle"

    @property
    def axis(self) -> int:
        """Long axis of an array region (0 for a single cube)."""
        if self.kind != "array":
            raise LatticeError(f"region {self.lo}..{self.hi} is not an array")
        for a, e in enumerate(self.extents):
            if e > 1:
                return a
        return 0

    @property
    def length(self) -> int:
        return self.size

    def check_inside(self, t: Tiling) -> None:
        if self.nu != t.nu or any(b >= t.n for b in self.hi):
            raise LatticeError(f"region {self.lo}..{self.hi} outside tiling nu={t.nu} N={t.n}")

    def contains_flat(self, t: Tiling, flats: np.ndarray) -> np.ndarray:
        c = t.coords_array(np.asarray(flats, dtype=np.int64))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((c >= lo) & (c <= hi), axis=-1)

    def cells(self, t: Tiling) -> np.ndarray:
        """Flat indices of the region's cubes in lexicographic order.

        For arrays this is also the order along the long axis.
        """
        self.check_inside(t)
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.ravel_multi_index([m.reshape(-1) for m in mesh], t.shape)

    def disjoint_from(self, other: "RegionSpec") -> bool:
        return any(b1 < a2 or b2 < a1 for a1, b1, a2, b2 in zip(self.lo, self.hi, other.lo, other.hi))

    def line(self, t: Tiling, axis: int, cross: Sequence[int]) -> np.ndarray:
        """Cells of the line along `axis` at the given cross-section coords."""
        lo = list(cross[:axis]) + [self.lo[axis]] + list(cross[axis:])
        hi = list(cross[:axis]) + [self.hi[axis]] + list(cross[axis:])
        return RegionSpec(tuple(lo), tuple(hi)).cells(t)


def region_cubes(t: Tiling, r: RegionSpec) -> list[tuple[int, ...]]:
    """Cubes of the region, lexicographic (canonical configuration order for arrays)."""
    return [t.coords(int(f)) for f in r.cells(t)]


def whole_region(t: Tiling) -> RegionSpec:
    return RegionSpec((0,) * t.nu, (t.n - 1,) * t.nu)


class Permutation:
    """Bijection on the cubes of a tiling, stored as a dense image table.

    table[i] = flat index of the image of cube i.  The induced point map sends
    x in the interior of cube k to x + c(P(k)) - c(k).
    """

    __slots__ = ("tiling", "table")

    def __init__(self, tiling: Tiling, table: np.ndarray, *, validate: bool = True):
        table = np.asarray(table, dtype=np.int64)
        if validate:
            if table.shape != (tiling.total,):
                raise LatticeError(f"table shape {table.shape} != ({tiling.total},)")
            if not _is_bijection(table, tiling.total):
                raise LatticeError("table is not a bijection on the cube set")
        tbl = table.copy()
        tbl.flags.writeable = False
        self.tiling = tiling
        self.table = tbl

    @classmethod
    def identity(cls, tiling: Tiling) -> "Permutation":
        return cls(tiling, np.arange(tiling.total, dtype=np.int64), validate=False)

    @classmethod
    def from_mapping(cls, tiling: Tiling, mapping: dict[tuple[int, ...], tuple[int, ...]]) -> "Permutation":
        table = np.arange(tiling.total, dtype=np.int64)
        for src, dst in mapping.items():
            table[tiling.flat(src)] = tiling.flat(dst)
        return cls(tiling, table)

    def __call__(self, k: Sequence[int]) -> tuple[int, ...]:
        return self.tiling.coords(int(self.table[self.tiling.flat(k)]))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Permutation)
            and self.tiling == other.tiling
            and np.array_equal(self.table, other.table)
        )

    def __hash__(self):  # pragma: no cover - unhashable by intent
        raise TypeError("Permutation is not hashable")

    def is_identity(self) -> bool:
        return bool(np.all(self.table == np.arange(self.tiling.total)))

    def moved_cells(self) -> np.ndarray:
        return np.flatnonzero(self.table != np.arange(self.tiling.total))

    def supported_in(self, region: RegionSpec) -> bool:
        moved = self.moved_cells()
        if moved.size == 0:
            return True
        inside = region.contains_flat(self.tiling, moved)
        images_inside = region.contains_flat(self.tiling, self.table[moved])
        return bool(inside.all() and images_inside.all())

    def displacements(self) -> np.ndarray:
        """Euclidean center displacement |c(P(k)) - c(k)| per cube."""
        c = self.tiling.centers()
        return np.linalg.norm(c[self.table] - c, axis=1)

    def max_displacement(self) -> float:
        return float(self.displacements().max(initial=0.0))


def _is_bijection(table: np.ndarray, total: int) -> bool:
    if table.min(initial=0) < 0 or table.max(initial=-1) >= total:
        return False
    seen = np.zeros(total, dtype=bool)
    seen[table] = True
    return bool(seen.all())


def _check_same_tiling(p: Permutation, q: Permutation) -> None:
    if p.tiling != q.tiling:
        raise LatticeError(f"tiling mismatch: {p.tiling} vs {q.tiling}")


def compose(p: Permutation, q: Permutation) -> Permutation:
    """(compose(p, q))(k) = p(q(k))."""
    _check_same_tiling(p, q)
    return Permutation(p.tiling, p.table[q.table], validate=False)


def invert(p: Permutation) -> Permutation:
    inv = np.empty_like(p.table)
    inv[p.table] = np.arange(p.tiling.total)
    return Permutation(p.tiling, inv, validate=False)


def l2_distance(p: Permutation, q: Permutation) -> float:
    """sqrt( sum_k n^-nu |c(p(k)) - c(q(k))|^2 ), Euclidean norm on cube centers."""
    _check_same_tiling(p, q)
    c = p.tiling.centers()
    diff = c[p.table] - c[q.table]
    return float(np.sqrt(np.sum(diff * diff) / p.tiling.total))


@dataclass(frozen=True)
class Coloring:
    """Color per cube of a region; 0 is white.  Stored in region cell order."""

    tiling: Tiling
    region: RegionSpec
    colors: tuple[int, ...]

    def __post_init__(self) -> None:
        self.region.check_inside(self.tiling)
        if len(self.colors) != self.region.size:
            raise LatticeError(
                f"coloring has {len(self.colors)} entries for region of {self.region.size} cubes"
            )
        if any(c < 0 for c in self.colors):
            raise LatticeError("colors must be nonnegative")

    @classmethod
    def from_cells(cls, tiling: Tiling, region: RegionSpec, colored: Iterable[int], color: int = 1) -> "Coloring":
        cells = region.cells(tiling)
        pos = {int(f): i for i, f in enumerate(cells)}
        cols = [0] * len(cells)
        for f in colored:
            if int(f) not in pos:
                raise LatticeError(f"cell {f} outside coloring region")
            cols[pos[int(f)]] = color
        return cls(tiling, region, tuple(cols))

    def count(self, color: int = 1) -> int:
        return sum(1 for c in self.colors if c == color)

    def cells_of(self, color: int) -> np.ndarray:
        cells = self.region.cells(self.tiling)
        mask = np.asarray(self.colors) == color
        return cells[mask]

    def color_of_cell(self) -> dict[int, int]:
        cells = self.region.cells(self.tiling)
        return {int(f): int(c) for f, c in zip(cells, self.colors)}


# ---------------------------------------------------------------------------
# permutation text format:
#   nu=<nu> N=<n>
#   i1,...,inu -> j1,...,jnu        (one line per non-identity entry, 0-based)
# omitted cubes map to themselves; UTF-8, LF.
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^nu=(\d+) N=(\d+)$")
_ENTRY_RE = re.compile(r"^([0-9, ]+)->([0-9, ]+)$")


def format_permutation(p: Permutation) -> str:
    lines = [f"nu={p.tiling.nu} N={p.tiling.n}"]
    for i in p.moved_cells():
        src = ",".join(str(x) for x in p.tiling.coords(int(i)))
        dst = ",".join(str(x) for x in p.tiling.coords(int(p.table[i])))
        lines.append(f"{src} -> {dst}")
    return "\n".join(lines) + "\n"


def parse_permutation(text: str) -> Permutation:
    lines = [ln.strip() for ln in text.split("\n")]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise LatticeError("empty permutation file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise LatticeError(f"bad header line: {lines[0]!r}")
    t = Tiling(int(m.group(1)), int(m.group(2)))
    table = np.arange(t.total, dtype=np.int64)
    touched = np.zeros(t.total, dtype=bool)
    for ln in lines[1:]:
        em = _ENTRY_RE.match(ln.replace(" ", ""))
        if not em:
            raise LatticeError(f"bad permutation entry: {ln!r}")
        src = tuple(int(x) for x in em.group(1).split(","))
        dst = tuple(int(x) for x in em.group(2).split(","))
        i = t.flat(src)
        if touched[i]:
            raise LatticeError(f"duplicate entry for cube {src}")
        touched[i] = True
        table[i] = t.flat(dst)
    return Permutation(t, table)


def write_permutation(path: str, p: Permutation) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_permutation(p))


def read_permutation(path: str) -> Permutation:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_permutation(fh.read())

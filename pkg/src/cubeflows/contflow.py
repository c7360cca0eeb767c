"""Piecewise-affine divergence-free fields that swap the two end cubes of an array.

The construction lives in the plane.  A thin frame around the array carries a
shear circulation whose leg transit times are all equal, so running it for a
quarter of the schedule is a half-turn of the frame; three counter-rotation
phases (end cubes plus the two tube strips, every intermediate cube, then the
three horizontal strips of every intermediate cube) turn the half-turn into a
pure exchange of the end cubes with every other point restored exactly.

The frame regions are the printed trapezoids restricted to the streamlines
passing through the end cubes (strip height 1/(M n)); the removed overhang
would otherwise be dragged by the half-turn and never restored.  All pieces
are affine on convex polygons, so trajectories are exactly integrable between
region crossings; the integrator is classical fixed-step RK4 with bisection to
1e-12 at every region crossing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FrameParams",
    "AffinePiece",
    "PiecewiseField",
    "FlowTrace",
    "build_swap_field",
    "evaluate",
    "integrate_batch",
    "integrate_time1_map",
    "l1l2_norm",
    "weak_divergence_residual",
    "verify_swap_map",
    "bump_battery",
    "format_field_spec",
    "trace_to_csv",
]


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class FrameParams:
    """Array geometry: resolution n, array length m >= 2, derived shear data.

    With eps = (1/n)/(m-1) the shear slopes come out as a = 1/m, b = 1/n and
    c = 0 exactly; eps may be overridden to probe the incompressibility
    condition (the seam fluxes then no longer cancel).
    """

    n: int
    m: int
    eps_override: float | None = None

    def __post_init__(self) -> None:
        if self.m < 2:
            raise FieldError("array length must be at least 2 (adjacent cubes swap directly)")
        if self.n < self.m:
            raise FieldError("array does not fit in the unit square")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def eps(self) -> float:
        return self.eps_override if self.eps_override is not None else self.h / (self.m - 1)

    @property
    def a(self) -> float:
        return self.eps / (self.eps + self.h)

    @property
    def b(self) -> float:
        return self.a * self.m * self.h

    @property
    def c(self) -> float:
        return self.h - self.b


@dataclass(frozen=True)
class AffinePiece:
    """Velocity A x + v0 on the open convex region {x : G x <= g} (componentwise)."""

    name: str
    G: np.ndarray
    g: np.ndarray
    A: np.ndarray
    v0: np.ndarray

    def contains(self, pts: np.ndarray, margin: float = 0.0) -> np.ndarray:
        vals = pts @ self.G.T - self.g
        return np.all(vals < -margin, axis=-1)

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        vals = self.g - pts @ self.G.T
        norms = np.linalg.norm(self.G, axis=1)
        return np.min(vals / norms, axis=-1)

    def velocity(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.A.T + self.v0

    def vertices(self) -> np.ndarray:
        """Vertices of the closed region (halfplane intersection, tiny sets)."""
        pts = []
        k = len(self.g)
        for i in range(k):
            for j in range(i + 1, k):
                M = np.stack([self.G[i], self.G[j]])
                if abs(np.linalg.det(M)) < 1e-14:
                    continue
                x = np.linalg.solve(M, np.asarray([self.g[i], self.g[j]]))
                if np.all(x @ self.G.T <= self.g + 1e-11):
                    pts.append(x)
        if not pts:
            return np.empty((0, 2))
        pts = np.unique(np.round(np.asarray(pts), 12), axis=0)
        ctr = pts.mean(axis=0)
        ang = np.arctan2(pts[:, 1] - ctr[1], pts[:, 0] - ctr[0])
        return pts[np.argsort(ang)]


@dataclass
class PiecewiseField:
    """Time-scheduled piecewise-affine field: phases of equal length at speed 8."""

    params: FrameParams
    phases: list[list[AffinePiece]]
    speed: float = 8.0

    def __post_init__(self) -> None:
        self._stacks = []
        for phase in self.phases:
            G = np.concatenate([p.G for p in phase], axis=0) if phase else np.empty((0, 2))
            g = np.concatenate([p.g for p in phase], axis=0) if phase else np.empty(0)
            starts, lens = [], []
            off = 0
            for p in phase:
                starts.append(off)
                lens.append(len(p.g))
                off += len(p.g)
            self._stacks.append((G, g, np.asarray(starts), np.asarray(lens)))

    def phase_at(self, t: float) -> int:
        if not 0.0 <= t < 1.0:
            raise FieldError(f"time {t} outside [0, 1)")
        return min(int(t * len(self.phases)), len(self.phases) - 1)

    def classify(self, phase: int, pts: np.ndarray) -> np.ndarray:
        """Index of the open piece containing each point, -1 for none/boundary."""
        G, g, starts, lens = self._stacks[phase]
        if len(g) == 0 or len(pts) == 0:
            return np.full(len(pts), -1, dtype=np.int64)
        sat = (pts @ G.T) < g  # strictly inside each halfplane
        counts = np.add.reduceat(sat.astype(np.int32), starts, axis=1)
        inside = counts == lens
        out = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
        return out.astype(np.int64)


@dataclass
class FlowTrace:
    x0: tuple[float, float]
    times: list[float]
    points: list[tuple[float, float]]
    terminal: tuple[float, float]
    steps: int
    max_error_estimate: float


def _box(name, x0, x1, y0, y1, A, v0) -> AffinePiece:
    G = np.asarray([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    g = np.asarray([-x0, x1, -y0, y1])
    return AffinePiece(name, G, g, np.asarray(A, dtype=float), np.asarray(v0, dtype=float))


def _rotation_pieces(name: str, x0: float, x1: float, y0: float, y1: float) -> list[AffinePiece]:
    """Four wedges of the rectangle rotation field (quarter turn per unit time).

    On the wedge where |x-cx|/a >= |y-cy|/b the velocity is (0, (2b/a)(x-cx)),
    on the complementary wedge (-(2a/b)(y-cy), 0); a, b are the half-free side
    lengths, cx, cy the center.
    """
    a, b = x1 - x0, y1 - y0
    if a <= 0 or b <= 0:
        return []
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    pieces = []
    G0 = np.asarray([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    g0 = np.asarray([-x0, x1, -y0, y1])
    for sx, tag in ((1.0, "E"), (-1.0, "W")):
        # sx*(x-cx) >= 0 and b*sx*(x-cx) >= +- a*(y-cy)
        G = np.vstack([G0, [-sx, 0.0], [-b * sx, a], [-b * sx, -a]])
        g = np.concatenate([g0, [-sx * cx], [-b * sx * cx + a * cy], [-b * sx * cx - a * cy]])
        A = np.asarray([[0.0, 0.0], [2 * b / a, 0.0]])
        v0 = np.asarray([0.0, -2 * b / a * cx])
        pieces.append(AffinePiece(f"{name}:{tag}", G, g, A, v0))
    for sy, tag in ((1.0, "N"), (-1.0, "S")):
        G = np.vstack([G0, [0.0, -sy], [b, -a * sy], [-b, -a * sy]])
        g = np.concatenate([g0, [-sy * cy], [b * cx - a * sy * cy], [-b * cx - a * sy * cy]])
        A = np.asarray([[0.0, -2 * a / b], [0.0, 0.0]])
        v0 = np.asarray([2 * a / b * cy, 0.0])
        pieces.append(AffinePiece(f"{name}:{tag}", G, g, A, v0))
    return pieces


def build_swap_field(params: FrameParams) -> PiecewiseField:
    """Four-phase schedule exchanging the first and last cube of the array."""
    n, m = params.n, params.m
    h, a, b, c = params.h, params.a, params.b, params.c
    strip = h / m  # kept-streamline depth through the end cubes

    # phase 1: the four printed shear legs, each restricted to the streamlines
    # of depth <= strip (the frame minus its inner overhang)
    A_piece = AffinePiece(
        "A",  # 0<=y<=strip, y<=a*x, a*x+y<=b ; velocity (-2y/a + b/a, 0)
        np.asarray([[0.0, -1.0], [0.0, 1.0], [-a, 1.0], [a, 1.0]]),
        np.asarray([0.0, strip, 0.0, b]),
        np.asarray([[0.0, -2.0 / a], [0.0, 0.0]]),
        np.asarray([b / a, 0.0]),
    )
    B_piece = AffinePiece(
        "B",  # (m-1)h<=x<=mh, -a*x+b<=y<=a*x+h-b ; velocity (0, 2a*x + h - 2b)
        np.asarray([[-1.0, 0.0], [1.0, 0.0], [-a, -1.0], [-a, 1.0]]),
        np.asarray([-((m - 1) * h), m * h, -b, h - b]),
        np.asarray([[0.0, 0.0], [2.0 * a, 0.0]]),
        np.asarray([0.0, h - 2.0 * b]),
    )
    C_piece = AffinePiece(
        "C",  # h-strip<=y<=h, a*x+y>=h, a*x-y<=-c ; velocity (-2y/a + (h+c)/a, 0)
        np.asarray([[0.0, 1.0], [0.0, -1.0], [-a, -1.0], [a, -1.0]]),
        np.asarray([h, -(h - strip), -h, -c]),
        np.asarray([[0.0, -2.0 / a], [0.0, 0.0]]),
        np.asarray([(h + c) / a, 0.0]),
    )
    D_piece = AffinePiece(
        "D",  # 0<=x<=h, a*x<=y<=-a*x+h ; velocity (0, 2a*x - h)
        np.asarray([[-1.0, 0.0], [1.0, 0.0], [a, -1.0], [a, 1.0]]),
        np.asarray([0.0, h, 0.0, h]),
        np.asarray([[0.0, 0.0], [2.0 * a, 0.0]]),
        np.asarray([0.0, -h]),
    )
    phase1 = [A_piece, B_piece, C_piece, D_piece]

    # phase 2: counter-rotate the end cubes and the two tube strips
    phase2 = _rotation_pieces("k1", 0.0, h, 0.0, h) + _rotation_pieces(
        "kM", (m - 1) * h, m * h, 0.0, h
    )
    if m > 2:
        phase2 += _rotation_pieces("A'", h, (m - 1) * h, 0.0, strip)
        phase2 += _rotation_pieces("C'", h, (m - 1) * h, h - strip, h)

    # phase 3: rotate every intermediate cube
    phase3 = []
    for j in range(1, m - 1):
        phase3 += _rotation_pieces(f"k{j + 1}", j * h, (j + 1) * h, 0.0, h)

    # phase 4: rotate the three horizontal strips of every intermediate cube
    phase4 = []
    for j in range(1, m - 1):
        x0, x1 = j * h, (j + 1) * h
        phase4 += _rotation_pieces(f"k{j + 1}.bot", x0, x1, 0.0, strip)
        phase4 += _rotation_pieces(f"k{j + 1}.mid", x0, x1, strip, h - strip)
        phase4 += _rotation_pieces(f"k{j + 1}.top", x0, x1, h - strip, h)

    return PiecewiseField(params, [phase1, phase2, phase3, phase4])


def evaluate(f: PiecewiseField, t: float, x: np.ndarray | tuple) -> tuple[np.ndarray, bool]:
    """Phase velocity at (t, x), as printed (multiply by f.speed for the schedule).

    Outside all pieces the velocity is zero; on a shared piece boundary
    (measure zero) the zero vector is returned with the boundary flag set.
    """
    pts = np.asarray(x, dtype=float).reshape(1, 2)
    phase = f.phase_at(t)
    idx = f.classify(phase, pts)
    if idx[0] == -1:
        on_boundary = any(np.all(pts @ p.G.T <= p.g + 1e-13) for p in f.phases[phase])
        return np.zeros(2), bool(on_boundary)
    piece = f.phases[phase][int(idx[0])]
    return piece.velocity(pts)[0], False


def _rk4_step(piece: AffinePiece, speed: float, x: np.ndarray, dt: float) -> np.ndarray:
    def v(p):
        return speed * piece.velocity(p)

    k1 = v(x)
    k2 = v(x + 0.5 * dt * k1)
    k3 = v(x + 0.5 * dt * k2)
    k4 = v(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance_with_crossings(
    f: PiecewiseField,
    phase: int,
    speed: float,
    xi: np.ndarray,
    pid: int,
    dt_total: float,
) -> np.ndarray:
    """Advance one point by dt_total, bisecting every region crossing to 1e-12.

    Each crossing commits a 1e-11 spatial nudge along the local velocity; a
    point ending in a zero-field gap simply stays there (the field is zero
    outside all pieces).
    """
    pieces = f.phases[phase]
    rest = dt_total
    guard = 0
    while rest > 1e-13:
        guard += 1
        if guard > 256:
            raise FieldError("trajectory stuck at a region seam")
        if pid == -1:
            break  # zero-velocity zone
        piece = pieces[pid]
        x2 = _rk4_step(piece, speed, xi, rest)
        if int(f.classify(phase, x2.reshape(1, 2))[0]) == pid:
            return x2
        lo, hi = 0.0, rest
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if int(f.classify(phase, _rk4_step(piece, speed, xi, mid).reshape(1, 2))[0]) == pid:
                lo = mid
            else:
                hi = mid
        xi = _rk4_step(piece, speed, xi, lo)
        rest -= max(lo, 1e-12)
        v = speed * piece.velocity(xi.reshape(1, 2))[0]
        nv = float(np.linalg.norm(v))
        if nv > 0:
            xi = xi + 1e-11 * v / nv
        pid = int(f.classify(phase, xi.reshape(1, 2))[0])
    return xi


def _integrate_phase(
    f: PiecewiseField, phase: int, pts: np.ndarray, t0: float, t1: float, hstep: float
) -> tuple[np.ndarray, float]:
    """Advance all points through one phase; returns points and an error estimate."""
    pieces = f.phases[phase]
    if not pieces:
        return pts.copy(), 0.0
    speed = f.speed
    vmax = 0.0
    for piece in pieces:
        for vert in piece.vertices():
            vmax = max(vmax, float(np.linalg.norm(speed * piece.velocity(vert.reshape(1, 2))[0])))
    if vmax > 0 and hstep * vmax > f.params.h / (4 * f.params.m):
        raise FieldError(
            f"step {hstep} too coarse for strips of width ~{f.params.h / f.params.m}"
        )
    x = pts.copy()
    max_err = 0.0
    nsub = max(1, int(round((t1 - t0) / hstep)))
    dt = (t1 - t0) / nsub
    check = max(1, nsub // 8)
    for step in range(nsub):
        ids = f.classify(phase, x)
        xn = x.copy()
        for pid in np.unique(ids):
            if pid == -1:
                continue
            sel = ids == pid
            xn[sel] = _rk4_step(pieces[pid], speed, x[sel], dt)
        new_ids = f.classify(phase, xn)
        crossed = np.flatnonzero((new_ids != ids) & (ids != -1))
        for ci in crossed:
            xn[ci] = _advance_with_crossings(f, phase, speed, x[ci], int(ids[ci]), dt)
        if np.any(np.abs(xn - 0.5) > 0.5 + 10 * hstep * max(vmax, 1.0)):
            raise FieldError("trajectory left the unit square: instability")
        if step % check == 0:
            stable = np.flatnonzero((new_ids == ids) & (ids != -1))[:1]
            for ci in stable:
                pid = int(ids[ci])
                half = _rk4_step(pieces[pid], speed, x[ci : ci + 1], dt / 2)
                half = _rk4_step(pieces[pid], speed, half, dt / 2)
                max_err = max(max_err, float(np.linalg.norm(half - xn[ci])))
        x = xn
    return x, max_err


def integrate_batch(f: PiecewiseField, pts: np.ndarray, hstep: float = 1e-4) -> tuple[np.ndarray, float]:
    """Time-1 images of a batch of points."""
    x = np.asarray(pts, dtype=float).copy()
    nph = len(f.phases)
    max_err = 0.0
    for phase in range(nph):
        x, err = _integrate_phase(f, phase, x, phase / nph, (phase + 1) / nph, hstep)
        max_err = max(max_err, err)
    return x, max_err


def integrate_time1_map(f: PiecewiseField, x0: tuple[float, float], hstep: float = 1e-4) -> FlowTrace:
    """Trajectory of a single point through the full schedule."""
    nph = len(f.phases)
    x = np.asarray([x0], dtype=float)
    times = [0.0]
    points = [tuple(map(float, x[0]))]
    max_err = 0.0
    steps = 0
    for phase in range(nph):
        t0, t1 = phase / nph, (phase + 1) / nph
        nsub = max(1, int(round((t1 - t0) / hstep)))
        chunk = max(1, nsub // 16)
        tt = t0
        while tt < t1 - 1e-15:
            t_next = min(t1, tt + chunk * hstep)
            x, err = _integrate_phase(f, phase, x, tt, t_next, hstep)
            max_err = max(max_err, err)
            steps += max(1, int(round((t_next - tt) / hstep)))
            tt = t_next
            times.append(tt)
            points.append(tuple(map(float, x[0])))
    return FlowTrace(tuple(map(float, x0)), times, points, tuple(map(float, x[0])), steps, max_err)


def l1l2_norm(f: PiecewiseField, resolution: int = 64) -> float:
    """Time integral of the spatial L2 norm, by midpoint quadrature per phase.

    resolution is the number of quadrature points per cube side (>= 64).
    """
    if resolution < 64:
        raise FieldError("resolution must be at least 64 points per cube side")
    params = f.params
    h = params.h
    pad = max(params.eps, h / params.m) * 2
    x0, x1 = -pad, params.m * h + pad
    y0, y1 = -pad, h + pad
    dx = h / resolution
    nx = int(math.ceil((x1 - x0) / dx))
    ny = int(math.ceil((y1 - y0) / dx))
    xs = x0 + (np.arange(nx) + 0.5) * dx
    ys = y0 + (np.arange(ny) + 0.5) * dx
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.reshape(-1), Y.reshape(-1)], axis=1)
    total = 0.0
    nph = len(f.phases)
    for phase in range(nph):
        acc = np.zeros(len(pts))
        for piece in f.phases[phase]:
            sel = piece.contains(pts)
            if np.any(sel):
                v = f.speed * piece.velocity(pts[sel])
                acc[sel] = np.sum(v * v, axis=1)
        norm = math.sqrt(float(acc.sum()) * dx * dx)
        total += norm / nph
    return total


# ---------------------------------------------------------------------------
# weak divergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """Smooth bump exp(1 - 1/(1 - r^2)) supported on |x - center| < radius."""

    center: tuple[float, float]
    radius: float

    def grad(self, pts: np.ndarray) -> np.ndarray:
        d = (pts - np.asarray(self.center)) / self.radius
        r2 = np.sum(d * d, axis=-1)
        out = np.zeros_like(pts)
        inside = r2 < 1.0 - 1e-12
        if np.any(inside):
            u = 1.0 - r2[inside]
            phi = np.exp(1.0 - 1.0 / u)
            out[inside] = (-2.0 * phi / (u * u))[:, None] * d[inside] / self.radius
        return out

    def value(self, pts: np.ndarray) -> np.ndarray:
        d = (pts - np.asarray(self.center)) / self.radius
        r2 = np.sum(d * d, axis=-1)
        out = np.zeros(len(pts))
        inside = r2 < 1.0 - 1e-12
        u = 1.0 - r2[inside]
        out[inside] = np.exp(1.0 - 1.0 / u)
        return out


_TRI_W = np.asarray(
    [0.225, 0.132394152788506, 0.132394152788506, 0.132394152788506,
     0.125939180544827, 0.125939180544827, 0.125939180544827]
)
_TRI_P = np.asarray(
    [
        [1 / 3, 1 / 3],
        [0.059715871789770, 0.470142064105115],
        [0.470142064105115, 0.059715871789770],
        [0.470142064105115, 0.470142064105115],
        [0.797426985353087, 0.101286507323456],
        [0.101286507323456, 0.797426985353087],
        [0.101286507323456, 0.101286507323456],
    ]
)


from functools import lru_cache


@lru_cache(maxsize=None)
def _subdiv_tris(depth: int) -> np.ndarray:
    """(4^depth, 3, 2) barycentric corner coordinates of the uniform refinement."""
    tris = np.asarray([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    for _ in range(depth):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate(
            [
                np.stack([a, ab, ca], axis=1),
                np.stack([ab, b, bc], axis=1),
                np.stack([ca, bc, c], axis=1),
                np.stack([ab, bc, ca], axis=1),
            ],
            axis=0,
        )
    tris.flags.writeable = False
    return tris


def _fan_quad(fn, verts: np.ndarray, depth: int) -> float:
    """Degree-5 quadrature over the polygon fan at uniform refinement depth."""
    ctr = verts.mean(axis=0)
    bary = _subdiv_tris(depth)
    total = 0.0
    for i in range(len(verts)):
        a, b, c = ctr, verts[i], verts[(i + 1) % len(verts)]
        corners = a + bary[..., 0:1] * (b - a) + bary[..., 1:2] * (c - a)  # (T,3,2)
        A_, B_, C_ = corners[:, 0], corners[:, 1], corners[:, 2]
        u = _TRI_P[:, 0][None, :, None]
        w = _TRI_P[:, 1][None, :, None]
        P = (1 - u - w) * A_[:, None, :] + u * B_[:, None, :] + w * C_[:, None, :]
        areas = 0.5 * np.abs(np.cross(B_ - A_, C_ - A_))
        vals = fn(P.reshape(-1, 2)).reshape(len(A_), -1)
        total += float(np.sum(areas * (vals @ _TRI_W)))
    return total


def _clip_halfplane(poly: np.ndarray, n: np.ndarray, d: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against n.x <= d."""
    if len(poly) == 0:
        return poly
    out = []
    vals = poly @ n - d
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        va, vb = vals[i], vals[(i + 1) % k]
        if va <= 1e-14:
            out.append(a)
            if vb > 1e-14:
                out.append(a + (b - a) * (va / (va - vb)))
        elif vb <= 1e-14:
            out.append(a + (b - a) * (va / (va - vb)))
    return np.asarray(out) if out else np.empty((0, 2))


def _piece_integral(piece: AffinePiece, speed: float, bump: Bump, tol: float) -> float:
    verts = piece.vertices()
    if len(verts) < 3:
        return 0.0
    # clip to the bump's support box so the subdivision resolves the bump scale
    cx, cy = bump.center
    r = bump.radius
    for n, d in (((1.0, 0.0), cx + r), ((-1.0, 0.0), -(cx - r)), ((0.0, 1.0), cy + r), ((0.0, -1.0), -(cy - r))):
        verts = _clip_halfplane(verts, np.asarray(n), d)
        if len(verts) < 3:
            return 0.0

    def fn(pts: np.ndarray) -> np.ndarray:
        v = speed * piece.velocity(pts)
        return np.sum(v * bump.grad(pts), axis=1)

    total_prev = None
    for depth in range(2, 10):
        total = _fan_quad(fn, verts, depth)
        if total_prev is not None and abs(total - total_prev) <= max(tol, 1e-8 * abs(total)):
            return total
        total_prev = total
    raise FieldError("weak-divergence quadrature did not converge")


def weak_divergence_residual(
    f: PiecewiseField, tests: list[Bump], tol: float = 1e-9
) -> float:
    """Max over phases and test bumps of |integral v . grad(phi)|, normalized.

    The normalization is ||v||_inf(supp) * ||grad phi||_L1, making the residual
    comparable across scales.
    """
    worst = 0.0
    for phase in range(len(f.phases)):
        for bump in tests:
            total = 0.0
            vmax = 0.0
            for piece in f.phases[phase]:
                verts = piece.vertices()
                if len(verts) < 3:
                    continue
                lo = verts.min(axis=0) - bump.radius
                hi = verts.max(axis=0) + bump.radius
                if np.any(np.asarray(bump.center) < lo) or np.any(np.asarray(bump.center) > hi):
                    continue
                total += _piece_integral(piece, f.speed, bump, tol)
                for vert in piece.vertices():
                    vmax = max(vmax, float(np.linalg.norm(f.speed * piece.velocity(vert.reshape(1, 2))[0])))
            # || grad phi ||_L1 for the standard bump = radius * constant
            grad_l1 = 2.87296 * bump.radius  # integral of |grad| for the unit bump, scaled
            denom = max(vmax * grad_l1, 1e-30)
            worst = max(worst, abs(total) / denom)
    return worst


def bump_battery(params: FrameParams) -> list[Bump]:
    """Ten standard test bumps: interior, seam-straddling, and edge cases."""
    h, m, a, b = params.h, params.m, params.a, params.b
    strip = h / m
    mid_x = m * h / 2
    out = [
        Bump((mid_x, strip / 2), strip / 3),                     # inside A
        Bump((h / 3, h / 2), h / 8),                             # inside D
        Bump(((m - 0.5) * h, h / 2), h / 8),                     # inside B
        Bump((mid_x, h - strip / 2), strip / 3),                 # inside C
        Bump(((m - 1 + 0.6) * h, 0.4 * strip), strip / 2),       # A|B seam corner
        Bump((0.4 * h, 0.4 * strip), strip / 2),                 # A|D seam corner
        Bump(((m - 1 + 0.6) * h, h - 0.4 * strip), strip / 2),   # B|C seam corner
        Bump((0.4 * h, h - 0.4 * strip), strip / 2),             # C|D seam corner
        Bump((mid_x, 0.0), strip / 3),                           # across the outer bottom edge
        Bump((h / 2, h / 2), h / 3),                             # large, inside the first cube
    ]
    return out


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------


@dataclass
class SwapMapReport:
    passed: bool
    worst_error: float
    worst_point: tuple[float, float] | None
    excluded: int
    volume_fraction: float
    messages: list[str] = field(default_factory=list)


def verify_swap_map(
    params: FrameParams,
    samples_per_cube: int = 100,
    hstep: float = 1e-4,
    tol: float | None = None,
    seed: int = 0,
) -> SwapMapReport:
    """Monte Carlo check of the time-1 map against the exact exchange map.

    Points within a small margin of any region seam are excluded (the map is
    only defined off a measure-zero set); the report counts them.
    """
    f = build_swap_field(params)
    n, m = params.n, params.m
    h = params.h
    if tol is None:
        tol = 1e-3 * h
    rng = np.random.default_rng(seed)
    margin = 5e-3 * h
    pts = []
    cube_of = []
    for j in range(m):
        raw = rng.random((samples_per_cube * 2, 2)) * h + np.asarray([j * h, 0.0])
        keep = []
        for q in raw:
            ok = True
            for phase in range(len(f.phases)):
                for piece in f.phases[phase]:
                    dres = piece.boundary_distance(q.reshape(1, 2))[0]
                    if abs(dres) < margin:
                        ok = False
                        break
                if not ok:
                    break
            keep.append(ok)
            if sum(keep) >= samples_per_cube:
                break
        kept = raw[: len(keep)][np.asarray(keep, dtype=bool)][:samples_per_cube]
        pts.append(kept)
        cube_of.extend([j] * len(kept))
    excluded = m * samples_per_cube - sum(len(x) for x in pts)
    P = np.concatenate(pts, axis=0)
    cube_of = np.asarray(cube_of)
    images, _ = integrate_batch(f, P, hstep)
    expect = P.copy()
    expect[cube_of == 0, 0] += (m - 1) * h
    expect[cube_of == m - 1, 0] -= (m - 1) * h
    err = np.linalg.norm(images - expect, axis=1)
    worst = int(np.argmax(err))
    msgs = []
    first = P[cube_of == 0]
    img_first = images[cube_of == 0]
    in_last = np.all(
        (img_first >= np.asarray([(m - 1) * h, 0.0]) - tol)
        & (img_first <= np.asarray([m * h, h]) + tol),
        axis=1,
    )
    vol_frac = float(np.mean(in_last)) if len(in_last) else 1.0
    passed = bool(err.max(initial=0.0) <= tol and vol_frac >= 1.0 - 1e-9)
    if excluded:
        msgs.append(f"excluded {excluded} samples within {margin:.2e} of region seams (measure zero)")
    if not passed:
        msgs.append(f"worst sample {tuple(P[worst])} error {err[worst]:.3e} > tol {tol:.1e}")
    return SwapMapReport(passed, float(err.max(initial=0.0)), tuple(map(float, P[worst])) if len(P) else None, excluded, vol_frac, msgs)


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------


def format_field_spec(f: PiecewiseField) -> str:
    lines = [f"n={f.params.n} m={f.params.m} eps={f.params.eps!r} speed={f.speed}"]
    for k, phase in enumerate(f.phases):
        lines.append(f"phase {k + 1}")
        for piece in phase:
            verts = "; ".join(f"({v[0]:.9f},{v[1]:.9f})" for v in piece.vertices())
            A = piece.A.reshape(-1)
            lines.append(
                f"  {piece.name}: vertices {verts} | A=[{A[0]:.9f},{A[1]:.9f};{A[2]:.9f},{A[3]:.9f}] v0=({piece.v0[0]:.9f},{piece.v0[1]:.9f})"
            )
    return "\n".join(lines) + "\n"


def trace_to_csv(trace: FlowTrace) -> str:
    out = ["t,x,y"]
    for tt, (x, y) in zip(trace.times, trace.points):
        out.append(f"{tt},{x},{y}")
    return "\n".join(out) + "\n"

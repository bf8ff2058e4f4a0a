"""Quadratic-Bezier primitives: evaluation, closest point, winding, SDF, length, area.

Points are float64 arrays of shape (2,); canvas coordinates are dimensionless.
All functions are pure; batched variants operate on stacked segment arrays
(starts, ctrls, ends) of shape (S, 2) against point sets of shape (P, 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Point",
    "QuadBezier",
    "ClosedPath",
    "DualPartGlyph",
    "DegenerateRayError",
    "eval_bezier",
    "closest_point",
    "path_winding",
    "path_occupancy",
    "path_sdf",
    "path_length",
    "path_area",
    "split_bezier",
    "bezier_portion",
    "seg_closest_many",
    "path_distance_many",
    "path_winding_many",
    "segments_winding_many",
    "quad_lengths",
    "quad_areas",
]

Point = np.ndarray  # shape (2,), float64, finite

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
# remapped from [-1,1] to [0,1]
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


class DegenerateRayError(RuntimeError):
    """Winding ray stayed degenerate after the jitter retries."""


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.shape != (2,):
        raise ValueError(f"expected a 2d point, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("point coordinates must be finite")
    return a


@dataclass(frozen=True)
class QuadBezier:
    """Quadratic Bezier segment (start, control, end)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __init__(self, a, b, c):
        object.__setattr__(self, "a", _as_point(a))
        object.__setattr__(self, "b", _as_point(b))
        object.__setattr__(self, "c", _as_point(c))


class ClosedPath:
    """Closed loop of M end-to-end quadratic segments.

    Stores 2M control points; segment j is (ctrl[2j], ctrl[2j+1],
    ctrl[(2j+2) % 2M]), so closure is implicit.
    """

    __slots__ = ("ctrl",)

    def __init__(self, ctrl):
        a = np.asarray(ctrl, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] % 2 != 0:
            raise ValueError(f"ctrl must have shape (2M, 2), got {a.shape}")
        if a.shape[0] < 4:
            raise ValueError("a closed path needs at least M=2 segments")
        if not np.all(np.isfinite(a)):
            raise ValueError("control points must be finite")
        self.ctrl = a

    @property
    def m_segments(self) -> int:
        return self.ctrl.shape[0] // 2

    def segment(self, j: int) -> QuadBezier:
        n = self.ctrl.shape[0]
        return QuadBezier(self.ctrl[2 * j % n], self.ctrl[(2 * j + 1) % n],
                          self.ctrl[(2 * j + 2) % n])

    def seg_arrays(self):
        """(starts, ctrls, ends), each of shape (M, 2)."""
        starts = self.ctrl[0::2]
        ctrls = self.ctrl[1::2]
        ends = np.roll(starts, -1, axis=0)
        return starts, ctrls, ends

    def translated(self, delta) -> "ClosedPath":
        return ClosedPath(self.ctrl + np.asarray(delta, dtype=float))

    def reversed(self) -> "ClosedPath":
        # keep on-curve points on even indices after reversing direction
        return ClosedPath(np.roll(self.ctrl[::-1], 1, axis=0))


class DualPartGlyph:
    """N (positive, negative) closed-path pairs; all paths share one M."""

    __slots__ = ("parts",)

    def __init__(self, parts):
        parts = [(p, q) for p, q in parts]
        if not parts:
            raise ValueError("a glyph needs at least one dual part")
        m = parts[0][0].m_segments
        for p, q in parts:
            if p.m_segments != m or q.m_segments != m:
                raise ValueError("all paths of a glyph must share one M")
        self.parts = parts

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    @property
    def m_segments(self) -> int:
        return self.parts[0][0].m_segments

    def paths(self):
        """Interleaved [P1, Q1, P2, Q2, ...]."""
        out = []
        for p, q in self.parts:
            out.append(p)
            out.append(q)
        return out


# ---------------------------------------------------------------------------
# evaluation and splitting


def eval_bezier(curve: QuadBezier, t):
    """Point on the curve at parameter t (Bernstein form); t may be an array."""
    t = np.asarray(t, dtype=float)[..., None]
    u = 1.0 - t
    out = u * u * curve.a + 2.0 * u * t * curve.b + t * t * curve.c
    return out if out.ndim > 1 else out.reshape(2)


def split_bezier(curve: QuadBezier, t: float):
    """de Casteljau split at t into two quadratic segments."""
    a, b, c = curve.a, curve.b, curve.c
    ab = a + (b - a) * t
    bc = b + (c - b) * t
    m = ab + (bc - ab) * t
    return QuadBezier(a, ab, m), QuadBezier(m, bc, c)


def bezier_portion(curve: QuadBezier, u: float, v: float) -> QuadBezier:
    """Sub-segment of the curve on the parameter interval [u, v]."""
    if not 0.0 <= u < v <= 1.0:
        raise ValueError("need 0 <= u < v <= 1")
    _, right = split_bezier(curve, u) if u > 0.0 else (None, curve)
    if v < 1.0:
        s = (v - u) / (1.0 - u)
        left, _ = split_bezier(right, s)
        return left
    return right


# ---------------------------------------------------------------------------
# polynomial root helpers (vectorized, NaN-padded)


def _real_quadratic_roots(a, b, c):
    """Real roots of a t^2 + b t + c; returns (..., 2), NaN where absent."""
    a, b, c = np.broadcast_arrays(*np.atleast_1d(a, b, c))
    shape = a.shape
    r = np.full(shape + (2,), np.nan)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(c))
    quad = np.abs(a) > 1e-14 * np.maximum(scale, 1e-300)
    lin = ~quad & (np.abs(b) > 1e-14 * np.maximum(scale, 1e-300))

    with np.errstate(invalid="ignore", divide="ignore"):
        disc = b * b - 4.0 * a * c
        ok = quad & (disc >= 0.0)
        sq = np.sqrt(np.where(disc >= 0.0, disc, 0.0))
        # Citardauq-stable pairing
        qq = -0.5 * (b + np.where(b >= 0.0, sq, -sq))
        r0 = np.where(ok, np.where(np.abs(a) > 0, qq / np.where(quad, a, 1.0), np.nan), np.nan)
        tiny_q = np.abs(qq) <= 1e-300
        r1 = np.where(ok & ~tiny_q, c / np.where(tiny_q, 1.0, qq), np.nan)
        r1 = np.where(ok & tiny_q, 0.0, r1)
        r[..., 0] = r0
        r[..., 1] = r1
        r[..., 0] = np.where(lin, -c / np.where(lin, b, 1.0), r[..., 0])
    return r


def _real_cubic_roots(c3, c2, c1, c0):
    """Real roots of c3 t^3 + c2 t^2 + c1 t + c0; returns (..., 3), NaN-padded.

    Degenerate leading coefficients fall through to the quadratic / linear
    formulas. Roots should be Newton-polished by the caller if accuracy
    beyond ~1e-10 matters.
    """
    c3, c2, c1, c0 = np.broadcast_arrays(*np.atleast_1d(c3, c2, c1, c0))
    shape = c3.shape
    out = np.full(shape + (3,), np.nan)
    scale = np.maximum.reduce([np.abs(c3), np.abs(c2), np.abs(c1), np.abs(c0)])
    cubic = np.abs(c3) > 1e-14 * np.maximum(scale, 1e-300)

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        den = np.where(cubic, c3, 1.0)
        p = c2 / den
        q = c1 / den
        r0 = c0 / den
        a = q - p * p / 3.0
        b = 2.0 * p ** 3 / 27.0 - p * q / 3.0 + r0
        disc = 0.25 * b * b + a ** 3 / 27.0

        one = cubic & (disc > 0.0)
        sq = np.sqrt(np.where(disc > 0.0, disc, 0.0))
        u1 = np.cbrt(-0.5 * b + sq)
        u2 = np.cbrt(-0.5 * b - sq)
        x_one = u1 + u2

        three = cubic & (disc <= 0.0)
        u = np.sqrt(np.where(three, np.maximum(-a / 3.0, 0.0), 0.0))
        u3 = np.maximum(u ** 3, 1e-300)
        cosarg = np.clip(-0.5 * b / u3, -1.0, 1.0)
        phi = np.arccos(cosarg) / 3.0
        k = np.arange(3.0)
        x_three = 2.0 * u[..., None] * np.cos(phi[..., None] - 2.0 * np.pi * k / 3.0)
        x_three = np.where(u[..., None] > 0.0, x_three, 0.0)

        shift = p / 3.0
        out[..., 0] = np.where(one, x_one - shift, out[..., 0])
        for i in range(3):
            out[..., i] = np.where(three, x_three[..., i] - shift, out[..., i])

    quad_roots = _real_quadratic_roots(c2, c1, c0)
    out[..., 0] = np.where(cubic, out[..., 0], quad_roots[..., 0])
    out[..., 1] = np.where(cubic, out[..., 1], quad_roots[..., 1])
    return out


def _polish_cubic_roots(roots, c3, c2, c1, c0, iters=2):
    """Newton iterations against the original cubic (NaN entries pass through)."""
    c3 = c3[..., None]
    c2 = c2[..., None]
    c1 = c1[..., None]
    c0 = c0[..., None]
    t = roots
    for _ in range(iters):
        with np.errstate(invalid="ignore", divide="ignore"):
            f = ((c3 * t + c2) * t + c1) * t + c0
            df = (3.0 * c3 * t + 2.0 * c2) * t + c1
            step = np.where(np.abs(df) > 1e-300, f / df, 0.0)
            t = t - np.where(np.isfinite(step), step, 0.0)
    return t


# ---------------------------------------------------------------------------
# closest point


def seg_closest_many(starts, ctrls, ends, pts):
    """Closest-point parameters and distances, all segments against all points.

    starts/ctrls/ends: (S, 2); pts: (P, 2). Returns (dist, t), both (S, P).
    The distance stationarity cubic is solved in closed form and polished
    with two Newton steps; endpoints compete as candidates.
    """
    starts = np.asarray(starts, dtype=float)[:, None, :]
    ctrls = np.asarray(ctrls, dtype=float)[:, None, :]
    ends = np.asarray(ends, dtype=float)[:, None, :]
    pts = np.asarray(pts, dtype=float)[None, :, :]

    A = ctrls - starts                  # (S,1,2)
    Bv = starts - 2.0 * ctrls + ends    # (S,1,2)
    D = starts - pts                    # (S,P,2)

    c3 = np.sum(Bv * Bv, axis=-1)                       # (S,1)
    c2 = 3.0 * np.sum(A * Bv, axis=-1)                  # (S,1)
    c1 = np.sum(D * Bv, axis=-1) + 2.0 * np.sum(A * A, axis=-1)  # (S,P)
    c0 = np.sum(D * A, axis=-1)                          # (S,P)
    c3b, c2b, c1b, c0b = np.broadcast_arrays(c3, c2, c1, c0)

    roots = _real_cubic_roots(c3b, c2b, c1b, c0b)
    roots = _polish_cubic_roots(roots, c3b, c2b, c1b, c0b)
    roots = np.clip(np.nan_to_num(roots, nan=0.0), 0.0, 1.0)

    S, P = c0b.shape
    cand = np.empty((S, P, 5))
    cand[..., 0] = 0.0
    cand[..., 1:4] = roots
    cand[..., 4] = 1.0

    diff = (D[..., None, :] + 2.0 * cand[..., :, None] * A[..., None, :]
            + cand[..., :, None] ** 2 * Bv[..., None, :])
    d2 = np.sum(diff * diff, axis=-1)                    # (S,P,5)
    best = np.argmin(d2, axis=-1)
    idx = np.ogrid[:S, :P]
    t_star = cand[idx[0], idx[1], best]
    dist = np.sqrt(d2[idx[0], idx[1], best])
    return dist, t_star


def closest_point(curve: QuadBezier, p) -> tuple[float, float]:
    """(t_star, dist) minimizing |B(t) - p| over t in [0, 1].

    Ties between stationary candidates are broken toward the smallest t.
    """
    p = _as_point(p)
    A = curve.b - curve.a
    Bv = curve.a - 2.0 * curve.b + curve.c
    D = curve.a - p
    c3 = float(Bv @ Bv)
    c2 = 3.0 * float(A @ Bv)
    c1 = float(D @ Bv) + 2.0 * float(A @ A)
    c0 = float(D @ A)
    roots = _real_cubic_roots(c3, c2, c1, c0)
    roots = _polish_cubic_roots(roots, *np.atleast_1d(c3, c2, c1, c0))[0]
    cand = [0.0, 1.0] + [float(np.clip(t, 0.0, 1.0)) for t in roots if np.isfinite(t)]
    cand = sorted(set(cand))
    d2 = [float(np.sum((eval_bezier(curve, t) - p) ** 2)) for t in cand]
    dmin = min(d2)
    for t, d in zip(cand, d2):
        if d <= dmin + 1e-24:
            return t, float(np.sqrt(d))
    raise AssertionError("unreachable")


def path_distance_many(path: ClosedPath, pts):
    """Unsigned distance from each point to the path boundary.

    Returns (dist, seg_idx, t_star), each of shape (P,).
    """
    starts, ctrls, ends = path.seg_arrays()
    dist, t = seg_closest_many(starts, ctrls, ends, np.asarray(pts, dtype=float))
    seg_idx = np.argmin(dist, axis=0)
    cols = np.arange(dist.shape[1])
    return dist[seg_idx, cols], seg_idx, t[seg_idx, cols]


# ---------------------------------------------------------------------------
# winding numbers

_JITTER = 1e-9
_MAX_RAY_RETRIES = 3


def _crossings_once(starts, ctrls, ends, px, py):
    """Signed horizontal-ray crossings per (segment, point), plus degeneracy flags.

    starts/ctrls/ends: (S, 2); px, py: (P,). Returns (contrib, degenerate),
    both (S, P); contrib holds the signed crossing counts.
    """
    sx = starts[:, None, 0]
    sy = starts[:, None, 1]
    cx = ctrls[:, None, 0]
    cy = ctrls[:, None, 1]
    ex = ends[:, None, 0]
    ey = ends[:, None, 1]
    px = px[None, :]
    py = py[None, :]

    ay = cy - sy
    bvy = sy - 2.0 * cy + ey
    ax = cx - sx
    bvx = sx - 2.0 * cx + ex

    roots = _real_quadratic_roots(*np.broadcast_arrays(bvy, 2.0 * ay, sy - py))
    contrib = np.zeros(np.broadcast_shapes(sy.shape, py.shape), dtype=np.int64)
    degen = np.zeros_like(contrib, dtype=bool)

    # whole segment (nearly) sitting on the ray level
    flat = (np.abs(bvy) < 1e-14) & (np.abs(ay) < 1e-14)
    on_level = flat & (np.abs(sy - py) < 1e-12)
    degen |= on_level & (np.maximum(np.maximum(sx, cx), ex) > px - 1e-12)

    for i in range(2):
        t = roots[..., i]
        finite = np.isfinite(t)
        with np.errstate(invalid="ignore"):
            xc = sx + 2.0 * t * ax + t * t * bvx
            dy = 2.0 * (ay + t * bvy)
            in_range = finite & (t >= 0.0) & (t < 1.0)
            ahead = xc > px
            near_vertex = finite & ((np.abs(t) < 1e-9) | (np.abs(t - 1.0) < 1e-9))
            tangential = finite & (t > -1e-9) & (t < 1.0 + 1e-9) & (np.abs(dy) < 1e-9)
            grazing = (near_vertex | tangential) & (xc > px - 1e-12)
            on_boundary = in_range & (np.abs(xc - px) < 1e-12)
            degen |= np.where(finite, grazing | on_boundary, False)
            step = np.where(in_range & ahead & (dy > 0.0), 1, 0) \
                - np.where(in_range & ahead & (dy < 0.0), 1, 0)
        contrib += np.where(finite, step, 0)
    return contrib, degen


def segments_winding_many(starts, ctrls, ends, pts, group_index=None, on_error="raise"):
    """Winding numbers of grouped segment sets around each point.

    group_index: (S,) int array mapping each segment to its loop/path id
    (defaults to a single group). Returns an int array (n_groups, P).
    Degenerate rays (vertex hits, tangencies, points on the boundary) are
    retried with a deterministic +1e-9 y jitter, up to 3 times; points that
    stay degenerate (in practice: points on the boundary itself) raise, or
    with on_error="mask" are reported in a second return value instead.
    """
    starts = np.asarray(starts, dtype=float)
    ctrls = np.asarray(ctrls, dtype=float)
    ends = np.asarray(ends, dtype=float)
    pts = np.asarray(pts, dtype=float)
    S = starts.shape[0]
    if group_index is None:
        group_index = np.zeros(S, dtype=int)
    group_index = np.asarray(group_index)
    n_groups = int(group_index.max()) + 1 if S else 1

    px = pts[:, 0].copy()
    py = pts[:, 1].copy()
    P = px.shape[0]
    winding = np.zeros((n_groups, P), dtype=np.int64)
    unresolved = np.zeros(P, dtype=bool)
    active = np.arange(P)

    for attempt in range(_MAX_RAY_RETRIES + 1):
        contrib, degen = _crossings_once(starts, ctrls, ends, px[active], py[active])
        bad = degen.any(axis=0)
        w = np.zeros((n_groups, active.shape[0]), dtype=np.int64)
        np.add.at(w, group_index, contrib)
        winding[:, active[~bad]] = w[:, ~bad]
        active = active[bad]
        if active.size == 0:
            break
        if attempt == _MAX_RAY_RETRIES:
            if on_error == "mask":
                unresolved[active] = True
                break
            raise DegenerateRayError(
                f"winding ray degenerate for {active.size} point(s) after "
                f"{_MAX_RAY_RETRIES} jitter retries")
        py[active] += _JITTER
    if on_error == "mask":
        return winding, unresolved
    return winding


def path_winding_many(path: ClosedPath, pts):
    starts, ctrls, ends = path.seg_arrays()
    return segments_winding_many(starts, ctrls, ends, pts)[0]


def path_winding(path: ClosedPath, p) -> int:
    """Winding number of the path around p (horizontal ray casting)."""
    return int(path_winding_many(path, _as_point(p)[None, :])[0])


def path_occupancy(path: ClosedPath, p) -> int:
    """1 iff the winding number is nonzero."""
    return 1 if path_winding(path, p) != 0 else 0


def path_sdf(path: ClosedPath, p) -> float:
    """Signed distance to the path boundary, positive inside."""
    p = _as_point(p)
    dist, _, _ = path_distance_many(path, p[None, :])
    sign = 2.0 * path_occupancy(path, p) - 1.0
    return float(sign * dist[0])


# ---------------------------------------------------------------------------
# length and area


def quad_lengths(starts, ctrls, ends):
    """Arc lengths of quadratic segments by 16-point Gauss-Legendre quadrature."""
    starts = np.asarray(starts, dtype=float)
    ctrls = np.asarray(ctrls, dtype=float)
    ends = np.asarray(ends, dtype=float)
    d1 = ctrls - starts
    d2 = ends - ctrls
    t = _GL_T[None, :, None]
    dB = 2.0 * ((1.0 - t) * d1[:, None, :] + t * d2[:, None, :])
    speed = np.sqrt(np.sum(dB * dB, axis=-1))
    return speed @ _GL_W


def path_length(path: ClosedPath) -> float:
    starts, ctrls, ends = path.seg_arrays()
    return float(np.sum(quad_lengths(starts, ctrls, ends)))


def quad_areas(starts, ctrls, ends):
    """Signed area contributions of quadratic segments (Green's theorem).

    Per segment: cross(a,b)/3 + cross(a,c)/6 + cross(b,c)/3; summing over a
    closed loop gives its signed area, positive when counter-clockwise.
    """
    a, b, c = (np.asarray(x, dtype=float) for x in (starts, ctrls, ends))

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    return cross(a, b) / 3.0 + cross(a, c) / 6.0 + cross(b, c) / 3.0


def path_area(path: ClosedPath) -> float:
    starts, ctrls, ends = path.seg_arrays()
    return float(np.sum(quad_areas(starts, ctrls, ends)))

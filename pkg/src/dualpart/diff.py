"""Losses of the direct glyph fit and their gradients in the control points.

The parameter vector is flat with layout: part-major, positive path before
negative, the 2M points of a path in segment order, x before y — length
8*M*N. Gradients are hand-derived subgradients: at each grid sample the
chain runs only through the arg-max part, the arg-min branch of the
occupancy composition, and the arg-min segment/root of the distance (ties
resolved to the lowest part index and the positive branch). The stationarity
of the closest-point parameter makes treating t* as locally constant exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import GrayImage, PreFilter, SampleGrid, alpha, alpha_deriv
from .geom import ClosedPath, DualPartGlyph, seg_closest_many, segments_winding_many

__all__ = [
    "LossReport",
    "glyph_to_params",
    "glyph_from_params",
    "loss_lp",
    "loss_lu",
    "stable_sample_mask_lp",
    "stable_sample_mask_lu",
]


@dataclass
class LossReport:
    total: float
    l_p: float
    l_u: float
    grad: np.ndarray


def glyph_to_params(g: DualPartGlyph) -> np.ndarray:
    """Flatten a glyph into the canonical parameter vector (8MN,)."""
    blocks = [path.ctrl.ravel() for path in g.paths()]
    return np.concatenate(blocks)


def glyph_from_params(values, n_parts: int, m_segments: int) -> DualPartGlyph:
    """Rebuild a glyph from a flat parameter vector."""
    v = np.asarray(values, dtype=float)
    if v.shape != (8 * n_parts * m_segments,):
        raise ValueError(f"expected {8 * n_parts * m_segments} values, got {v.shape}")
    paths = v.reshape(2 * n_parts, 2 * m_segments, 2)
    parts = [(ClosedPath(paths[2 * i]), ClosedPath(paths[2 * i + 1]))
             for i in range(n_parts)]
    return DualPartGlyph(parts)


# ---------------------------------------------------------------------------
# forward geometry on the parameter tensor


def _seg_tensors(paths):
    """paths: (2N, 2M, 2) -> starts/ctrls/ends (2N, M, 2)."""
    starts = paths[:, 0::2, :]
    ctrls = paths[:, 1::2, :]
    ends = np.roll(starts, -1, axis=1)
    return starts, ctrls, ends


_FAR = 1e9  # distance placeholder outside the band; saturates the pre-filter


def _band_indices(starts, ctrls, ends, grid: SampleGrid, band: float):
    """Row-major indices of grid samples within `band` of any segment bbox.

    The curve lies in the convex hull of its control points, so any sample
    closer than `band` to the curve is inside a bbox expanded by `band`.
    """
    res = grid.resolution
    (x0, y0c), (x1, y1c) = grid.frame
    p = grid.pitch
    lo = np.minimum(np.minimum(starts, ctrls), ends) - band
    hi = np.maximum(np.maximum(starts, ctrls), ends) + band
    mask = np.zeros((res, res), dtype=bool)
    for (lx, ly), (hx, hy) in zip(lo, hi):
        c0 = max(int(np.floor((lx - x0) / p - 0.5)), 0)
        c1 = min(int(np.ceil((hx - x0) / p - 0.5)) + 1, res)
        if grid.y_down:
            # row r has y = ymin + (r + 0.5) p
            r0 = max(int(np.floor((ly - y0c) / p - 0.5)), 0)
            r1 = min(int(np.ceil((hy - y0c) / p - 0.5)) + 1, res)
        else:
            # row r has y = ymax - (r + 0.5) p
            r0 = max(int(np.floor((y1c - hy) / p - 0.5)), 0)
            r1 = min(int(np.ceil((y1c - ly) / p - 0.5)) + 1, res)
        if c0 < c1 and r0 < r1:
            mask[r0:r1, c0:c1] = True
    return np.nonzero(mask.ravel())[0]


class GlyphGeometry:
    """Per-path distances, closest segments/parameters and inside signs.

    With band_radius set, exact distances are only computed for samples
    within that radius of each path (bbox test); samples beyond it get the
    _FAR placeholder, which is exact for every quantity that saturates
    outside the pre-filter support.
    """

    def __init__(self, paths: np.ndarray, pts: np.ndarray,
                 grid: SampleGrid | None = None, band_radius: float | None = None):
        self.paths = paths
        self.pts = pts
        n_paths, two_m, _ = paths.shape
        m = two_m // 2
        P = pts.shape[0]
        starts, ctrls, ends = _seg_tensors(paths)
        flat = (starts.reshape(-1, 2), ctrls.reshape(-1, 2), ends.reshape(-1, 2))

        if band_radius is None or grid is None:
            d, t = seg_closest_many(*flat, pts)
            d = d.reshape(n_paths, m, -1)
            t = t.reshape(n_paths, m, -1)
            self.seg = np.argmin(d, axis=1)              # (2N, P)
            take = self.seg[:, None, :]
            self.dist = np.take_along_axis(d, take, axis=1)[:, 0, :]
            self.tstar = np.take_along_axis(t, take, axis=1)[:, 0, :]
        else:
            self.dist = np.full((n_paths, P), _FAR)
            self.seg = np.zeros((n_paths, P), dtype=np.int64)
            self.tstar = np.zeros((n_paths, P))
            for k in range(n_paths):
                idx = _band_indices(starts[k], ctrls[k], ends[k], grid, band_radius)
                if idx.size == 0:
                    continue
                d, t = seg_closest_many(starts[k], ctrls[k], ends[k], pts[idx])
                j = np.argmin(d, axis=0)
                cols = np.arange(idx.size)
                self.dist[k, idx] = d[j, cols]
                self.seg[k, idx] = j
                self.tstar[k, idx] = t[j, cols]

        ids = np.repeat(np.arange(n_paths), m)
        w, self._unresolved = segments_winding_many(*flat, pts, ids, on_error="mask")
        self.sign = np.where(w != 0, 1.0, -1.0)          # (2N, P)
        self.sdf = self.sign * self.dist

    def scatter_distance_grad(self, weights: np.ndarray) -> np.ndarray:
        """Backpropagate d(loss)/d(distance) weights into control points.

        weights: (2N, P). Returns the gradient tensor (2N, 2M, 2).
        """
        n_paths, two_m, _ = self.paths.shape
        grad = np.zeros_like(self.paths)
        for k in range(n_paths):
            w = weights[k]
            sel = np.nonzero(w)[0]
            if sel.size == 0:
                continue
            seg = self.seg[k, sel]
            t = self.tstar[k, sel]
            a = self.paths[k, (2 * seg) % two_m]
            b = self.paths[k, (2 * seg + 1) % two_m]
            c = self.paths[k, (2 * seg + 2) % two_m]
            u = 1.0 - t
            foot = (u * u)[:, None] * a + (2.0 * u * t)[:, None] * b + (t * t)[:, None] * c
            diff = foot - self.pts[sel]
            d = self.dist[k, sel]
            direction = np.where(d[:, None] > 1e-12, diff / np.maximum(d, 1e-12)[:, None], 0.0)
            wv = w[sel][:, None] * direction
            np.add.at(grad[k], (2 * seg) % two_m, (u * u)[:, None] * wv)
            np.add.at(grad[k], (2 * seg + 1) % two_m, (2.0 * u * t)[:, None] * wv)
            np.add.at(grad[k], (2 * seg + 2) % two_m, (t * t)[:, None] * wv)
        return grad


def glyph_geometry(g: DualPartGlyph, grid: SampleGrid,
                   band_radius: float | None = None) -> GlyphGeometry:
    """Precompute the per-path geometry shared by loss_lp and loss_lu."""
    paths = glyph_to_params(g).reshape(2 * g.n_parts, 2 * g.m_segments, 2)
    return GlyphGeometry(paths, grid.points(), grid, band_radius)


def _prepare(g: DualPartGlyph, grid: SampleGrid):
    paths = glyph_to_params(g).reshape(2 * g.n_parts, 2 * g.m_segments, 2)
    return paths, grid.points()


# ---------------------------------------------------------------------------
# losses


def loss_lp(g: DualPartGlyph, target: GrayImage, grid: SampleGrid,
            filt: PreFilter | None = None, sample_mask=None):
    """Mean absolute error between the soft occupancy and the target image.

    Returns (value, grad) with grad flattened to the parameter layout.
    sample_mask optionally restricts the mean to a boolean subset of grid
    samples (used by gradient checks to drop tie points).
    """
    if (target.width, target.height) != (grid.resolution, grid.resolution):
        raise ValueError("target dimensions must match the sample grid")
    if filt is None:
        filt = PreFilter(grid.pitch)
    paths, pts = _prepare(g, grid)
    geo = _GlyphGeometry(paths, pts)
    n = g.n_parts

    a_pos = alpha(geo.sdf[0::2], filt)          # (N, P)
    a_neg = alpha(geo.sdf[1::2], filt)
    branch = np.minimum(a_pos, 1.0 - a_neg)     # (N, P)
    i_star = np.argmax(branch, axis=0)          # (P,) first max wins ties
    cols = np.arange(pts.shape[0])
    occ = branch[i_star, cols]

    tgt = target.data.ravel()
    if sample_mask is None:
        sample_mask = np.ones(pts.shape[0], dtype=bool)
    else:
        sample_mask = np.asarray(sample_mask, dtype=bool).ravel()
    count = int(sample_mask.sum())
    resid = occ - tgt
    value = float(np.abs(resid[sample_mask]).mean())

    g_pix = np.where(sample_mask, np.sign(resid), 0.0) / count
    pos_wins = a_pos[i_star, cols] <= 1.0 - a_neg[i_star, cols]  # ties -> positive

    w = np.zeros_like(geo.dist)                 # d(loss)/d(sdf) per path
    rows_pos = 2 * i_star
    rows_neg = 2 * i_star + 1
    contrib_pos = g_pix * alpha_deriv(geo.sdf[rows_pos, cols], filt)
    contrib_neg = -g_pix * alpha_deriv(geo.sdf[rows_neg, cols], filt)
    np.add.at(w, (rows_pos[pos_wins], cols[pos_wins]), contrib_pos[pos_wins])
    np.add.at(w, (rows_neg[~pos_wins], cols[~pos_wins]), contrib_neg[~pos_wins])

    grad = geo.scatter_distance_grad(w * geo.sign)
    return value, grad.reshape(-1)


def _distance_tie_per_path(paths, pts, eps, foot_sep=1e-5):
    """Per-path flags for near-tied nearest-point problems, shape (2N, P).

    Candidates are the clamped stationary roots plus the endpoints of every
    segment; a sample is flagged for a path when its two best candidates
    with footpoints further than foot_sep apart differ by less than eps.
    """
    from .geom import _polish_cubic_roots, _real_cubic_roots

    n_paths, two_m, _ = paths.shape
    tied = np.zeros((n_paths, pts.shape[0]), dtype=bool)
    for k in range(n_paths):
        starts = paths[k, 0::2]
        ctrls = paths[k, 1::2]
        ends = np.roll(starts, -1, axis=0)
        A = (ctrls - starts)[:, None, :]
        Bv = (starts - 2.0 * ctrls + ends)[:, None, :]
        D = starts[:, None, :] - pts[None, :, :]
        c3 = np.sum(Bv * Bv, axis=-1)
        c2 = 3.0 * np.sum(A * Bv, axis=-1)
        c1 = np.sum(D * Bv, axis=-1) + 2.0 * np.sum(A * A, axis=-1)
        c0 = np.sum(D * A, axis=-1)
        c3b, c2b, c1b, c0b = np.broadcast_arrays(c3, c2, c1, c0)
        roots = _polish_cubic_roots(_real_cubic_roots(c3b, c2b, c1b, c0b),
                                    c3b, c2b, c1b, c0b)
        roots = np.clip(np.nan_to_num(roots, nan=0.0), 0.0, 1.0)
        cand = np.concatenate([np.zeros_like(c0b)[..., None], roots,
                               np.ones_like(c0b)[..., None]], axis=-1)
        foot = (starts[:, None, None, :] + 2.0 * cand[..., None] * A[:, :, None, :]
                + cand[..., None] ** 2 * Bv[:, :, None, :])
        d = np.sqrt(np.sum((foot - pts[None, :, None, :]) ** 2, axis=-1))
        d_flat = d.transpose(1, 0, 2).reshape(pts.shape[0], -1)
        foot_flat = foot.transpose(1, 0, 2, 3).reshape(pts.shape[0], -1, 2)
        best = np.argmin(d_flat, axis=1)
        rows = np.arange(pts.shape[0])
        bf = foot_flat[rows, best]
        far = np.sqrt(np.sum((foot_flat - bf[:, None, :]) ** 2, axis=-1)) > foot_sep
        d_far = np.where(far, d_flat, np.inf)
        runner = d_far.min(axis=1)
        tied[k] = runner - d_flat[rows, best] < eps
    return tied


def stable_sample_mask_lp(g: DualPartGlyph, target: GrayImage, grid: SampleGrid,
                          filt: PreFilter | None = None, eps: float = 1e-4) -> np.ndarray:
    """Grid samples safely away from every subgradient tie of loss_lp.

    Supports finite-difference gradient checks: near argmax/argmin ties,
    absolute-value kinks, pre-filter support edges and near-tied closest
    points, central differences disagree with the chosen subgradient. Ties
    between saturated (zero-derivative) branches are harmless and stay in.
    """
    if filt is None:
        filt = PreFilter(grid.pitch)
    paths, pts = _prepare(g, grid)
    geo = _GlyphGeometry(paths, pts)
    cols = np.arange(pts.shape[0])

    a_pos = alpha(geo.sdf[0::2], filt)
    a_neg = alpha(geo.sdf[1::2], filt)
    d_pos = alpha_deriv(geo.sdf[0::2], filt)
    d_neg = alpha_deriv(geo.sdf[1::2], filt)
    branch = np.minimum(a_pos, 1.0 - a_neg)
    pos_side = a_pos <= 1.0 - a_neg                 # (N, P) chosen side per part
    live = np.where(pos_side, d_pos, d_neg) > 0.0   # branch has nonzero derivative
    i_star = np.argmax(branch, axis=0)
    occ = branch[i_star, cols]

    bad = (np.abs(occ - target.data.ravel()) < eps) & live[i_star, cols]
    n = branch.shape[0]
    if n > 1:
        order = np.argsort(-branch, axis=0)
        top, second = order[0], order[1]
        tie = np.take_along_axis(branch, top[None], 0)[0] \
            - np.take_along_axis(branch, second[None], 0)[0] < eps
        bad |= tie & (live[top, cols] | live[second, cols])
    side_tie = np.abs(a_pos[i_star, cols] - (1.0 - a_neg[i_star, cols])) < eps
    other_live = np.where(pos_side[i_star, cols],
                          d_neg[i_star, cols], d_pos[i_star, cols]) > 0.0
    bad |= side_tie & (live[i_star, cols] | other_live)
    for rows in (2 * i_star, 2 * i_star + 1):
        s = geo.sdf[rows, cols]
        bad |= np.abs(np.abs(s) - filt.radius) < eps
    # closest-point ties only matter on the path that feeds the gradient
    tied = _distance_tie_per_path(paths, pts, eps)
    sel_path = np.where(pos_side[i_star, cols], 2 * i_star, 2 * i_star + 1)
    bad |= tied[sel_path, cols] & live[i_star, cols]
    return ~bad


def stable_sample_mask_lu(g: DualPartGlyph, target_udf, grid: SampleGrid,
                          eps: float = 1e-4) -> np.ndarray:
    """Grid samples safely away from every subgradient tie of loss_lu."""
    paths, pts = _prepare(g, grid)
    geo = _GlyphGeometry(paths, pts)
    cols = np.arange(pts.shape[0])

    u_pos = np.maximum(-geo.sdf[0::2], 0.0)
    u_neg = np.maximum(geo.sdf[1::2], 0.0)
    per_part = np.maximum(u_pos, u_neg)
    pos_side = u_pos >= u_neg
    open_pos = geo.sdf[0::2] < 0.0
    open_neg = geo.sdf[1::2] > 0.0
    live = np.where(pos_side, open_pos, open_neg)   # chosen side has derivative
    i_star = np.argmin(per_part, axis=0)
    u_hat = per_part[i_star, cols]

    bad = (np.abs(u_hat - np.asarray(target_udf, dtype=float).ravel()) < eps) \
        & live[i_star, cols]
    if per_part.shape[0] > 1:
        order = np.argsort(per_part, axis=0)
        lo, second = order[0], order[1]
        tie = np.take_along_axis(per_part, second[None], 0)[0] \
            - np.take_along_axis(per_part, lo[None], 0)[0] < eps
        bad |= tie & (live[lo, cols] | live[second, cols])
    side_tie = np.abs(u_pos[i_star, cols] - u_neg[i_star, cols]) < eps
    bad |= side_tie & (live[i_star, cols] | np.where(
        pos_side[i_star, cols], open_neg[i_star, cols], open_pos[i_star, cols]))
    # clamp kinks on the selected side
    bad |= pos_side[i_star, cols] & (np.abs(geo.sdf[2 * i_star, cols]) < eps)
    bad |= ~pos_side[i_star, cols] & (np.abs(geo.sdf[2 * i_star + 1, cols]) < eps)
    tied = _distance_tie_per_path(paths, pts, eps)
    sel_path = np.where(pos_side[i_star, cols], 2 * i_star, 2 * i_star + 1)
    bad |= tied[sel_path, cols] & live[i_star, cols]
    return ~bad


def loss_lu(g: DualPartGlyph, target_udf, grid: SampleGrid, sample_mask=None):
    """Mean absolute error between the glyph's approximate UDF and a target UDF."""
    tgt = np.asarray(target_udf, dtype=float).ravel()
    if tgt.shape[0] != grid.resolution ** 2:
        raise ValueError("target UDF must match the sample grid")
    paths, pts = _prepare(g, grid)
    geo = _GlyphGeometry(paths, pts)

    u_pos = np.maximum(-geo.sdf[0::2], 0.0)     # distance outside positive
    u_neg = np.maximum(geo.sdf[1::2], 0.0)      # depth inside negative
    per_part = np.maximum(u_pos, u_neg)         # (N, P)
    i_star = np.argmin(per_part, axis=0)        # first min wins ties
    cols = np.arange(pts.shape[0])
    u_hat = per_part[i_star, cols]

    if sample_mask is None:
        sample_mask = np.ones(pts.shape[0], dtype=bool)
    else:
        sample_mask = np.asarray(sample_mask, dtype=bool).ravel()
    count = int(sample_mask.sum())
    resid = u_hat - tgt
    value = float(np.abs(resid[sample_mask]).mean())

    g_pix = np.where(sample_mask, np.sign(resid), 0.0) / count
    pos_wins = u_pos[i_star, cols] >= u_neg[i_star, cols]    # ties -> positive

    w = np.zeros_like(geo.dist)
    rows_pos = 2 * i_star
    rows_neg = 2 * i_star + 1
    # d u_pos / d sdf = -1 where the clamp is open, else 0; u_neg symmetric
    open_pos = geo.sdf[rows_pos, cols] < 0.0
    open_neg = geo.sdf[rows_neg, cols] > 0.0
    sel_p = pos_wins & open_pos
    sel_n = ~pos_wins & open_neg
    np.add.at(w, (rows_pos[sel_p], cols[sel_p]), -g_pix[sel_p])
    np.add.at(w, (rows_neg[sel_n], cols[sel_n]), g_pix[sel_n])

    grad = geo.scatter_distance_grad(w * geo.sign)
    return value, grad.reshape(-1)

"""Per-glyph direct optimization of the dual-part representation.

The fit starts from randomly placed dual parts, runs a warm-up phase that
adds the unsigned-distance loss (supplying gradients far from boundaries),
then continues on the occupancy loss alone with a bias-corrected
adaptive-moment optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .diff import glyph_from_params, glyph_to_params, loss_lp, loss_lu
from .field import GrayImage, PreFilter, SampleGrid, image_udf
from .geom import ClosedPath, DualPartGlyph

__all__ = [
    "FitConfig",
    "FitTrace",
    "AdamState",
    "NumericalDivergence",
    "init_dual_parts",
    "adam_step",
    "fit_glyph",
]

PARAM_BOUND = 1.5  # canvas plus margin; parameters are clamped here each step


class NumericalDivergence(RuntimeError):
    """Loss became non-finite; carries the iteration and a parameter snapshot."""

    def __init__(self, message, iteration=None, params=None):
        super().__init__(message)
        self.iteration = iteration
        self.params = params


@dataclass(frozen=True)
class FitConfig:
    n_parts: int = 6
    m_segments: int = 4
    lambda_p: float = 0.5
    lambda_u: float = 1.0
    warmup_fraction: float = 0.05
    total_iters: int = 2000
    step_size: float = 1e-2
    moment_decays: tuple = (0.9, 0.999)
    moment_eps: float = 1e-8
    grid_res: int = 128
    filter_radius: float | None = None  # None -> one pixel pitch
    seed: int = 0

    def __post_init__(self):
        if self.n_parts < 1:
            raise ValueError("n_parts must be >= 1")
        if self.m_segments < 2:
            raise ValueError("m_segments must be >= 2")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must be in [0, 1]")


@dataclass
class FitTrace:
    """Per-iteration loss records."""

    iters: list = dc_field(default_factory=list)
    l_p: list = dc_field(default_factory=list)
    l_u: list = dc_field(default_factory=list)
    total: list = dc_field(default_factory=list)

    def append(self, it, lp, lu, total):
        self.iters.append(it)
        self.l_p.append(lp)
        self.l_u.append(lu)
        self.total.append(total)

    def __len__(self):
        return len(self.iters)


def _regular_loop(center, radius, m, rng=None, perturb=0.0):
    """Simple counter-clockwise loop of m quadratics on a (perturbed) circle."""
    angles = 2.0 * np.pi * np.arange(2 * m) / (2 * m)
    r = np.full(2 * m, radius)
    if perturb > 0.0 and rng is not None:
        r = r * (1.0 + perturb * rng.uniform(-1.0, 1.0, size=2 * m))
    ctrl = np.column_stack([center[0] + r * np.cos(angles),
                            center[1] + r * np.sin(angles)])
    return ClosedPath(ctrl)


def init_dual_parts(config: FitConfig, canvas_occupancy_hint: GrayImage | None = None
                    ) -> DualPartGlyph:
    """Random dual parts: positive loops of radius 0.3, negatives of 0.08.

    Part centers are drawn uniformly from [-0.6, 0.6]^2, or from ink pixel
    centers of the hint image when one is provided. Deterministic given the
    config seed; every loop is simple and counter-clockwise.
    """
    rng = np.random.default_rng(config.seed)
    ink_centers = None
    if canvas_occupancy_hint is not None:
        ink = np.argwhere(canvas_occupancy_hint.data >= 0.5)
        if ink.size:
            res_y = canvas_occupancy_hint.height
            res_x = canvas_occupancy_hint.width
            xs = -1.0 + (ink[:, 1] + 0.5) * 2.0 / res_x
            ys = 1.0 - (ink[:, 0] + 0.5) * 2.0 / res_y
            ink_centers = np.column_stack([xs, ys])
    parts = []
    for _ in range(config.n_parts):
        if ink_centers is not None:
            center = ink_centers[rng.integers(ink_centers.shape[0])]
        else:
            center = rng.uniform(-0.6, 0.6, size=2)
        pos = _regular_loop(center, 0.3, config.m_segments, rng, perturb=0.08)
        neg = _regular_loop(center, 0.08, config.m_segments)
        parts.append((pos, neg))
    return DualPartGlyph(parts)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState,
              config: FitConfig) -> np.ndarray:
    """One bias-corrected adaptive-moment update; mutates state, returns params."""
    b1, b2 = config.moment_decays
    state.t += 1
    state.m = b1 * state.m + (1.0 - b1) * grad
    state.v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    return params - config.step_size * m_hat / (np.sqrt(v_hat) + config.moment_eps)


def fit_glyph(target: GrayImage, config: FitConfig,
              init: DualPartGlyph | None = None,
              hint_from_target: bool = False) -> tuple[DualPartGlyph, FitTrace]:
    """Fit dual parts to a grayscale target by direct gradient descent.

    Warm-up iterations (the leading warmup_fraction of the budget) minimize
    lambda_p * L_P + lambda_u * L_u with the target UDF precomputed once;
    the rest minimize lambda_p * L_P alone. Returns the best-loss glyph and
    the full trace. Deterministic given (target, config).
    """
    if target.width < 32 or target.height < 32:
        raise ValueError("target must be at least 32 pixels on each side")
    grid = SampleGrid(config.grid_res)
    if (target.width, target.height) != (config.grid_res, config.grid_res):
        target = _resample(target, config.grid_res)
    filt = PreFilter(config.filter_radius if config.filter_radius is not None
                     else grid.pitch)

    if init is None:
        hint = target if hint_from_target else None
        glyph = init_dual_parts(config, hint)
    else:
        glyph = init
    params = glyph_to_params(glyph)
    n, m = glyph.n_parts, glyph.m_segments

    warmup_iters = int(round(config.warmup_fraction * config.total_iters))
    use_udf = config.lambda_u > 0.0 and warmup_iters > 0
    target_udf = image_udf(target, pitch=grid.pitch) if use_udf else None

    state = AdamState.zeros(params.size)
    trace = FitTrace()
    best_params = params.copy()
    best_loss = np.inf

    for it in range(config.total_iters):
        g = glyph_from_params(params, n, m)
        lp, grad_p = loss_lp(g, target, grid, filt)
        in_warmup = it < warmup_iters and use_udf
        if in_warmup:
            lu, grad_u = loss_lu(g, target_udf, grid)
            total = config.lambda_p * lp + config.lambda_u * lu
            grad = config.lambda_p * grad_p + config.lambda_u * grad_u
        else:
            lu = 0.0
            total = config.lambda_p * lp
            grad = config.lambda_p * grad_p
        if not np.isfinite(total):
            raise NumericalDivergence(
                f"non-finite loss at iteration {it}", iteration=it, params=params.copy())
        trace.append(it, lp, lu, total)
        # track the best iterate by the always-available occupancy loss
        if lp < best_loss:
            best_loss = lp
            best_params = params.copy()
        params = adam_step(params, grad, state, config)
        np.clip(params, -PARAM_BOUND, PARAM_BOUND, out=params)

    final = glyph_from_params(params, n, m)
    lp_final, _ = loss_lp(final, target, grid, filt)
    if lp_final < best_loss:
        best_params = params
    return glyph_from_params(best_params, n, m), trace


def _resample(img: GrayImage, res: int) -> GrayImage:
    from PIL import Image

    pil = Image.fromarray(np.asarray(img.data, dtype=np.float32), mode="F")
    out = pil.resize((res, res), Image.BICUBIC)
    return GrayImage(np.clip(np.asarray(out, dtype=float), 0.0, 1.0))

"""Batch BFGS path solver with fixed-point step sizes.

The solver runs a fixed number of iterations for every path in a batch,
with no data-dependent early exit, so execution is uniform across a batch.
The step size along each quasi-Newton direction comes from a fixed-point
iteration on the exact one-dimensional optimality condition, warm-started
at zero. The scalar entry point is the batch kernel applied to a batch of
one, so batched and per-path results agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .batching import (
    BatchScene,
    checked_segments,
    clamped_segments,
    embed_batch,
    gradient_batch,
    path_length_batch,
    segment_norms,
    stack_params,
)
from .errors import DegenerateSegment, ZeroDirection
from .geometry import PathSpec, check_params


class Precision(Enum):
    SINGLE = "single"
    DOUBLE = "double"

    @property
    def dtype(self):
        return np.float32 if self is Precision.SINGLE else np.float64


@dataclass(frozen=True)
class SolveOptions:
    iterations: int = 100
    fixed_point_iters: int = 1
    precision: Precision = Precision.DOUBLE
    record_trace: bool = False
    # Scalar-mode convenience stop; must stay None for batch solves.
    grad_tol: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.fixed_point_iters < 1:
            raise ValueError("fixed_point_iters must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray  # (n, 2)
    final_length: float
    final_grad_norm: float
    iterations: int
    trace: list[tuple[int, float, float]] | None = None


def init_params(spec: PathSpec) -> np.ndarray:
    """Deterministic initial guess: project the start/end midpoint onto each surface.

    Solves the normal equations of the least-squares projection restricted to
    active basis columns; inert coordinates start at zero.
    """
    mid = 0.5 * (spec.start + spec.end)
    T = np.zeros((spec.n, 2))
    for i, surf in enumerate(spec.surfaces):
        act = surf.active
        A = surf.basis[:, act]
        G = A.T @ A
        rhs = A.T @ (mid - surf.anchor)
        T[i, act] = np.linalg.solve(G, rhs)
    return T


def _fixed_point_alpha(sc: BatchScene, s, norms, P, iters: int, eps):
    """Batched fixed-point step size; returns (alpha, zero_direction_mask).

    `s`/`norms` are the current segments; zero-direction paths get alpha 0 so
    batch control flow stays uniform.
    """
    dtype = s.dtype
    B, n = P.shape[0], P.shape[1]
    w = np.einsum("bnij,bnj->bni", sc.basis, P)  # A_i p_i at interior points
    wp = np.concatenate(
        [np.zeros((B, 1, 3), dtype=dtype), w, np.zeros((B, 1, 3), dtype=dtype)], axis=1
    )
    dAp = wp[:, 1:] - wp[:, :-1]  # (B, n+1, 3)
    a2 = np.einsum("bki,bki->bk", dAp, dAp)
    c = np.einsum("bki,bki->bk", dAp, s)
    total = np.einsum("bk->b", a2)
    zero = total <= np.finfo(dtype).tiny

    alpha = np.zeros(B, dtype=dtype)
    for _ in range(iters):
        seg = s + alpha[:, None, None] * dAp
        # Trial points may transiently collapse a segment when the iteration
        # is not contracting; clamp instead of aborting the whole batch.
        den = np.maximum(np.sqrt(np.einsum("bki,bki->bk", seg, seg)), eps[:, None])
        num = np.einsum("bk->b", c / den)
        dsum = np.einsum("bk->b", a2 / den)
        new = -num / np.where(zero, np.ones_like(dsum), dsum)
        alpha = np.where(zero | ~np.isfinite(new), alpha, new)
    return alpha, zero


def line_search_alpha(spec: PathSpec, T, P, alpha0: float = 0.0, k: int = 1) -> float:
    """Fixed-point step size along direction P after k iterations from alpha0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    T = check_params(spec, T)
    P = check_params(spec, P)
    sc = BatchScene.from_specs([spec])
    _, s, norms = checked_segments(sc, T[None])
    eps = sc.seg_epsilon()

    # Re-run the kernel loop with the caller's starting value.
    dtype = s.dtype
    w = np.einsum("bnij,bnj->bni", sc.basis, P[None])
    wp = np.concatenate(
        [np.zeros((1, 1, 3), dtype=dtype), w, np.zeros((1, 1, 3), dtype=dtype)], axis=1
    )
    dAp = wp[:, 1:] - wp[:, :-1]
    a2 = np.einsum("bki,bki->bk", dAp, dAp)
    if float(a2.sum()) <= np.finfo(dtype).tiny:
        raise ZeroDirection("direction moves no interaction point")
    c = np.einsum("bki,bki->bk", dAp, s)
    alpha = np.full(1, alpha0, dtype=dtype)
    for _ in range(k):
        seg = s + alpha[:, None, None] * dAp
        den = np.sqrt(np.einsum("bki,bki->bk", seg, seg))
        if np.any(den <= eps[:, None]):
            raise DegenerateSegment("step-size denominator segment collapsed")
        alpha = -np.einsum("bk->b", c / den) / np.einsum("bk->b", a2 / den)
    return float(alpha[0])


def _bfgs_kernel(sc: BatchScene, T0: np.ndarray, opts: SolveOptions, return_state=False):
    """Run the fixed-iteration batch BFGS loop; returns (T, grad, traces).

    With return_state=True the inverse-Hessian approximations are appended
    to the return tuple (used by diagnostics and tests).
    """
    dtype = opts.precision.dtype
    sc = sc.astype(dtype)
    T = np.ascontiguousarray(T0, dtype=dtype)
    B, n = T.shape[0], T.shape[1]
    m = 2 * n
    eps = sc.seg_epsilon()
    traces = [[] for _ in range(B)] if opts.record_trace else None

    if n == 0:
        empty = np.zeros((B, 0, 2), dtype=dtype)
        if return_state:
            return T, empty, traces, np.zeros((B, 0, 0), dtype=dtype)
        return T, empty, traces

    checked_segments(sc, T)  # reject degenerate starting points loudly
    H = np.broadcast_to(np.eye(m, dtype=dtype), (B, m, m)).copy()
    g = gradient_batch(sc, T).reshape(B, m)
    curv_tol = dtype(1e-12)

    for it in range(opts.iterations):
        p = -np.einsum("bij,bj->bi", H, g)
        _, s_cur, norms = clamped_segments(sc, T)
        alpha, _ = _fixed_point_alpha(
            sc, s_cur, norms, p.reshape(B, n, 2), opts.fixed_point_iters, eps
        )
        step = alpha[:, None] * p
        T = T + step.reshape(B, n, 2)
        g_new = gradient_batch(sc, T).reshape(B, m)
        y = g_new - g
        sy = np.einsum("bi,bi->b", step, y)
        s_norm = np.sqrt(np.einsum("bi,bi->b", step, step))
        y_norm = np.sqrt(np.einsum("bi,bi->b", y, y))
        ok = sy > curv_tol * s_norm * y_norm
        rho = np.where(ok, np.ones_like(sy) / np.where(ok, sy, np.ones_like(sy)), 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            Hy = np.einsum("bij,bj->bi", H, y)
            yHy = np.einsum("bi,bi->b", y, Hy)
            sHy = np.einsum("bi,bj->bij", step, Hy)
            ssT = np.einsum("bi,bj->bij", step, step)
            H_new = (
                H
                - rho[:, None, None] * (sHy + np.swapaxes(sHy, 1, 2))
                + (rho * rho * yHy + rho)[:, None, None] * ssT
            )
        # Near-zero curvature can overflow the rank-two terms in single
        # precision; treat those updates as skipped.
        ok = ok & np.all(np.isfinite(H_new), axis=(1, 2))
        H = np.where(ok[:, None, None], H_new, H)
        g = g_new

        if opts.record_trace:
            lengths = path_length_batch(sc, T)
            gnorms = np.sqrt(np.einsum("bi,bi->b", g, g))
            for b in range(B):
                traces[b].append((it, float(lengths[b]), float(gnorms[b])))

        if opts.grad_tol is not None and B == 1:
            lengths = path_length_batch(sc, T)
            if float(np.linalg.norm(g[0])) < opts.grad_tol * (1.0 + float(lengths[0])):
                break

    if return_state:
        return T, g.reshape(B, n, 2), traces, H
    return T, g.reshape(B, n, 2), traces


def _reports_from_state(sc: BatchScene, T, g, traces, opts) -> list[SolveReport]:
    lengths = path_length_batch(sc.astype(T.dtype), T)
    gnorms = np.linalg.norm(g.reshape(T.shape[0], -1), axis=1)
    out = []
    for b in range(T.shape[0]):
        out.append(
            SolveReport(
                solution=np.asarray(T[b], dtype=float),
                final_length=float(lengths[b]),
                final_grad_norm=float(gnorms[b]),
                iterations=opts.iterations,
                trace=traces[b] if traces is not None else None,
            )
        )
    return out


def bfgs_solve(spec: PathSpec, T0, opts: SolveOptions = SolveOptions()) -> SolveReport:
    """Minimize path length from T0; runs exactly opts.iterations updates."""
    T0 = check_params(spec, T0)
    sc = BatchScene.from_specs([spec])
    T, g, traces = _bfgs_kernel(sc, T0[None], opts)
    return _reports_from_state(sc, T, g, traces, opts)[0]


def batch_solve(
    specs: Sequence[PathSpec], T0s, opts: SolveOptions = SolveOptions()
) -> list[SolveReport]:
    """Solve many paths with identical n under one uniform iteration schedule."""
    if opts.grad_tol is not None:
        raise ValueError("grad_tol is a scalar-mode option; batches run fixed iterations")
    sc = BatchScene.from_specs(specs)
    T0 = stack_params(specs, T0s)
    T, g, traces = _bfgs_kernel(sc, T0, opts)
    return _reports_from_state(sc, T, g, traces, opts)

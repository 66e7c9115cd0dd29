"""Comparison solvers: exact image method, gradient descent, damped Newton,
and the high-precision reference used as ground truth in benchmarks.

Newton runs on active coordinates only: the inert edge coordinates are
masked out by pinning their rows and columns of the Hessian to the
identity, which leaves them exactly untouched.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .batching import (
    BatchScene,
    clamped_segments,
    embed_batch,
    gradient_batch,
    path_length_batch,
    stack_params,
)
from .errors import (
    NoConvergence,
    NoIntersection,
    NotAllPlanes,
    SingularHessian,
)
from .geometry import PathSpec, SurfaceKind, check_params, params_from_points
from .solver import Precision, SolveOptions, SolveReport, _bfgs_kernel, init_params

PARALLEL_TOL = 1e-12
REFERENCE_GRAD_TOL = 1e-12
REFERENCE_BFGS_ITERS = 1000
REFERENCE_FP_ITERS = 64
REFERENCE_POLISH_ITERS = 64


# ---------------------------------------------------------------------------
# Image method


def _plane_normals(sc: BatchScene) -> np.ndarray:
    nrm = np.cross(sc.basis[..., 0], sc.basis[..., 1])
    return nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)


def image_points_batch(sc: BatchScene) -> np.ndarray:
    """(B, n, 3) exact reflection points for all-plane scenes."""
    B, n = sc.size, sc.n
    normals = _plane_normals(sc)
    images = np.empty((B, n, 3))
    m = sc.start.copy()
    for i in range(n):
        nh = normals[:, i]
        d = np.einsum("bi,bi->b", m - sc.anchor[:, i], nh)
        m = m - 2.0 * d[:, None] * nh
        images[:, i] = m
    pts = np.empty((B, n, 3))
    y = sc.end.copy()
    for i in range(n - 1, -1, -1):
        nh = normals[:, i]
        mi = images[:, i]
        dirv = y - mi
        denom = np.einsum("bi,bi->b", dirv, nh)
        if np.any(np.abs(denom) <= PARALLEL_TOL * np.linalg.norm(dirv, axis=1)):
            raise NoIntersection("mirrored sight line parallel to its plane")
        t = np.einsum("bi,bi->b", sc.anchor[:, i] - mi, nh) / denom
        y = mi + t[:, None] * dirv
        pts[:, i] = y
    return pts


def image_method(spec: PathSpec) -> np.ndarray:
    """Exact reflection points (n, 3) via successive mirroring."""
    if any(s.kind is not SurfaceKind.PLANE for s in spec.surfaces):
        raise NotAllPlanes("image method handles planar reflections only")
    if spec.n == 0:
        return np.zeros((0, 3))
    return image_points_batch(BatchScene.from_specs([spec]))[0]


# ---------------------------------------------------------------------------
# Gradient descent


def _gd_kernel(sc: BatchScene, T0, opts: SolveOptions):
    dtype = opts.precision.dtype
    sc = sc.astype(dtype)
    T = np.ascontiguousarray(T0, dtype=dtype)
    if sc.n == 0:
        return T, np.zeros_like(T)
    g0 = gradient_batch(sc, T)
    g0_norm = np.sqrt(np.einsum("bnj,bnj->b", g0, g0))
    scale = np.sqrt(np.einsum("bi,bi->b", sc.end - sc.start, sc.end - sc.start))
    eta = 0.1 * scale / (1.0 + g0_norm)
    g = g0
    for _ in range(opts.iterations):
        T = T - eta[:, None, None] * g
        g = gradient_batch(sc, T)
    return T, g


def gradient_descent(
    spec: PathSpec, T0, opts: SolveOptions = SolveOptions()
) -> SolveReport:
    """Fixed-step gradient descent baseline (step from the initial gradient)."""
    T0 = check_params(spec, T0)
    sc = BatchScene.from_specs([spec])
    T, g = _gd_kernel(sc, T0[None], opts)
    return _finish_report(sc, T, g, opts)


def _finish_report(sc: BatchScene, T, g, opts) -> SolveReport:
    length = float(path_length_batch(sc.astype(T.dtype), T)[0])
    return SolveReport(
        solution=np.asarray(T[0], dtype=float),
        final_length=length,
        final_grad_norm=float(np.linalg.norm(g[0])),
        iterations=opts.iterations,
    )


# ---------------------------------------------------------------------------
# Damped Newton (Carluccio-Albani stand-in)

NEWTON_DAMPING = 1e-10
NEWTON_MAX_HALVINGS = 20


def hessian_batch(sc: BatchScene, T: np.ndarray) -> np.ndarray:
    """(B, 2n, 2n) Hessian of path length for every batch member."""
    _, s, norms = clamped_segments(sc, T)
    B, n = T.shape[0], T.shape[1]
    u = s / norms[..., None]
    eye = np.eye(3, dtype=s.dtype)
    M = (eye[None, None] - np.einsum("bki,bkj->bkij", u, u)) / norms[..., None, None]
    A = sc.basis
    H = np.zeros((B, 2 * n, 2 * n), dtype=s.dtype)
    for i in range(n):
        di = np.einsum(
            "bri,brs,bsj->bij", A[:, i], M[:, i] + M[:, i + 1], A[:, i]
        )
        H[:, 2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = di
        if i + 1 < n:
            off = -np.einsum("bri,brs,bsj->bij", A[:, i], M[:, i + 1], A[:, i + 1])
            H[:, 2 * i : 2 * i + 2, 2 * i + 2 : 2 * i + 4] = off
            H[:, 2 * i + 2 : 2 * i + 4, 2 * i : 2 * i + 2] = np.swapaxes(off, 1, 2)
    return H


def _newton_kernel(sc: BatchScene, T0, opts: SolveOptions, max_iters=None, frozen=None):
    """Masked, damped Newton; `frozen` (B,) paths take zero steps."""
    dtype = opts.precision.dtype
    sc = sc.astype(dtype)
    T = np.ascontiguousarray(T0, dtype=dtype)
    B, n = T.shape[0], T.shape[1]
    m = 2 * n
    if n == 0:
        return T, np.zeros_like(T)
    iters = opts.iterations if max_iters is None else max_iters
    active = sc.active_mask().reshape(B, m)
    dim = active.sum(axis=1).astype(dtype)
    g = gradient_batch(sc, T)
    for _ in range(iters):
        H = hessian_batch(sc, T)
        gm = np.where(active, g.reshape(B, m), 0.0)
        # Pin inert rows/cols to the identity so they never move.
        H = np.where(active[:, :, None] & active[:, None, :], H, 0.0)
        diag = np.arange(m)
        tr = np.einsum("bii->b", H)
        lam = NEWTON_DAMPING * tr / np.maximum(dim, 1.0)
        H[:, diag, diag] = np.where(active, H[:, diag, diag] + lam[:, None], 1.0)
        try:
            step = -np.linalg.solve(H, gm[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularHessian("regularized Newton solve failed") from exc
        if frozen is not None:
            step = np.where(frozen[:, None], 0.0, step)
        L0 = path_length_batch(sc, T)
        scale = np.ones(B, dtype=dtype)
        cand = T + step.reshape(B, n, 2)
        Lc = path_length_batch(sc, cand)
        for _ in range(NEWTON_MAX_HALVINGS):
            worse = Lc > L0
            if not np.any(worse):
                break
            scale = np.where(worse, scale * 0.5, scale)
            cand = T + scale[:, None, None] * step.reshape(B, n, 2)
            Lc = path_length_batch(sc, cand)
        T = np.where((Lc <= L0)[:, None, None], cand, T)
        g = gradient_batch(sc, T)
    return T, g


def newton_solve(spec: PathSpec, T0, opts: SolveOptions = SolveOptions()) -> SolveReport:
    """Damped Newton on active coordinates with step halving."""
    T0 = check_params(spec, T0)
    sc = BatchScene.from_specs([spec])
    T, g = _newton_kernel(sc, T0[None], opts)
    return _finish_report(sc, T, g, opts)


# ---------------------------------------------------------------------------
# High-precision reference


def reference_solve_batch(specs: Sequence[PathSpec], T0s=None):
    """Ground-truth solve: long double-precision BFGS run plus Newton polish.

    Returns (T, converged) with T (B, n, 2) float64 and a boolean mask of
    paths that reached the gradient-norm tolerance.
    """
    sc = BatchScene.from_specs(specs)
    if T0s is None:
        T0s = [init_params(s) for s in specs]
    T0 = stack_params(specs, T0s)
    if sc.n == 0:
        return T0, np.ones(sc.size, dtype=bool)
    opts = SolveOptions(
        iterations=REFERENCE_BFGS_ITERS,
        fixed_point_iters=REFERENCE_FP_ITERS,
        precision=Precision.DOUBLE,
    )
    T, _, _ = _bfgs_kernel(sc, T0, opts)
    polish_opts = SolveOptions(iterations=1, precision=Precision.DOUBLE)
    converged = _converged_mask(sc, T)
    for _ in range(REFERENCE_POLISH_ITERS):
        if np.all(converged):
            break
        T, _ = _newton_kernel(sc, T, polish_opts, max_iters=1, frozen=converged)
        converged = _converged_mask(sc, T)
    return T, converged


def _converged_mask(sc: BatchScene, T) -> np.ndarray:
    g = gradient_batch(sc, T)
    gnorm = np.sqrt(np.einsum("bnj,bnj->b", g, g))
    L = path_length_batch(sc, T)
    return gnorm < REFERENCE_GRAD_TOL * (1.0 + L)


def reference_solve(spec: PathSpec, T0=None) -> np.ndarray:
    """High-precision parameters for one path; raises NoConvergence on failure."""
    T0s = None if T0 is None else [check_params(spec, T0)]
    T, converged = reference_solve_batch([spec], T0s)
    if not converged[0]:
        raise NoConvergence("reference solver missed its gradient tolerance")
    return T[0]

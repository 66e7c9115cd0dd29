"""Scene generation, scene/result file I/O, and the benchmark protocol.

Scenes are drawn deterministically from a seed: endpoints in a box of
side 10, one anchor near each of n evenly spaced stations along the
start-end chord with lateral jitter, orthonormal plane bases, and uniform
edge directions. Plane orientations are chosen so the jittered waypoint
polyline is exactly specular at each plane; with unconstrained
orientations most "reflection" scenes would have a straight-through
minimum and the image method would not apply.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
import yaml

from .baselines import (
    image_points_batch,
    reference_solve_batch,
    _gd_kernel,
    _newton_kernel,
)
from .batching import BatchScene, embed_batch, stack_params
from .errors import FermatPathError
from .geometry import PathSpec, Surface, SurfaceKind, make_edge, make_plane
from .implicit_diff import grad_length_wrt_params, vjp_solution
from .objective import gradient
from .solver import Precision, SolveOptions, _bfgs_kernel, init_params


class Kinds(Enum):
    REFLECTIONS = "reflections"
    DIFFRACTIONS = "diffractions"
    MIXED = "mixed"


KNOWN_SOLVERS = ("ours", "ours-64", "gd", "newton", "image")

# Generator constants; overridable through gen_scenes keyword arguments.
BOX_SIDE = 10.0
LATERAL_JITTER = 2.0
ENDPOINT_EXCLUSION = 0.1
_MIN_ENDPOINT_DIST = 1.0
# Conditioning guards: near-grazing mirrors and edges nearly parallel to the
# chord give almost-flat Hessian directions that stall every iterative solver.
_MIN_TURN = 0.5
_MAX_EDGE_CHORD_ALIGN = 0.9


@dataclass(frozen=True)
class BenchConfig:
    seed: int
    batch: int = 1000
    n_range: tuple[int, ...] = (1, 2, 3, 4, 5)
    kinds: Kinds = Kinds.MIXED
    solvers: tuple[str, ...] = ("ours", "ours-64", "gd", "newton")
    iterations: int = 100
    fixed_point_iters: int = 1
    precision: Precision = Precision.SINGLE
    box_side: float = BOX_SIDE
    jitter: float = LATERAL_JITTER
    exclusion: float = ENDPOINT_EXCLUSION

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if any(n < 1 for n in self.n_range):
            raise ValueError("interaction counts must be >= 1")
        unknown = set(self.solvers) - set(KNOWN_SOLVERS)
        if unknown:
            raise ValueError(f"unknown solvers: {sorted(unknown)}")
        if "image" in self.solvers and self.kinds is not Kinds.REFLECTIONS:
            raise ValueError("the image solver applies to reflection-only scenes")


@dataclass(frozen=True)
class BenchRecord:
    solver: str
    n: int
    kinds: str
    d: int
    iterations: int
    fp_iters: int
    precision: str
    mean_error: float
    wall_time_ms: float


CSV_HEADER = [
    "solver",
    "n",
    "kinds",
    "d",
    "iterations",
    "fp_iters",
    "precision",
    "mean_error",
    "wall_time_ms",
]


def write_records(records: Sequence[BenchRecord], fileobj) -> None:
    w = csv.writer(fileobj)
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(
            [
                r.solver,
                r.n,
                r.kinds,
                r.d,
                r.iterations,
                r.fp_iters,
                r.precision,
                repr(r.mean_error),
                repr(r.wall_time_ms),
            ]
        )


def read_records(fileobj) -> list[BenchRecord]:
    rows = csv.reader(fileobj)
    header = next(rows)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {header}")
    out = []
    for row in rows:
        out.append(
            BenchRecord(
                solver=row[0],
                n=int(row[1]),
                kinds=row[2],
                d=int(row[3]),
                iterations=int(row[4]),
                fp_iters=int(row[5]),
                precision=row[6],
                mean_error=float(row[7]),
                wall_time_ms=float(row[8]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Scene files (YAML, one scene per document)


def scene_to_dict(spec: PathSpec) -> dict:
    return {
        "start": [float(v) for v in spec.start],
        "end": [float(v) for v in spec.end],
        "surfaces": [
            {
                "kind": s.kind.value,
                "anchor": [float(v) for v in s.anchor],
                "basis": [[float(v) for v in row] for row in s.basis],
            }
            for s in spec.surfaces
        ],
    }


def scene_from_dict(doc: dict) -> PathSpec:
    surfaces = []
    for s in doc.get("surfaces", []):
        kind = SurfaceKind(s["kind"])
        surfaces.append(
            Surface(basis=np.asarray(s["basis"], dtype=float), anchor=s["anchor"], kind=kind)
        )
    return PathSpec(start=doc["start"], end=doc["end"], surfaces=tuple(surfaces))


def save_scenes(specs: Sequence[PathSpec], fileobj) -> None:
    yaml.safe_dump_all([scene_to_dict(s) for s in specs], fileobj, sort_keys=False)


def load_scenes(fileobj) -> list[PathSpec]:
    return [scene_from_dict(d) for d in yaml.safe_load_all(fileobj) if d]


# ---------------------------------------------------------------------------
# Scene generation


def _kind_sequence(rng, n: int, kinds: Kinds) -> list[SurfaceKind]:
    if kinds is Kinds.REFLECTIONS:
        return [SurfaceKind.PLANE] * n
    if kinds is Kinds.DIFFRACTIONS:
        return [SurfaceKind.EDGE] * n
    first = SurfaceKind.PLANE if rng.integers(2) == 0 else SurfaceKind.EDGE
    other = SurfaceKind.EDGE if first is SurfaceKind.PLANE else SurfaceKind.PLANE
    return [first if i % 2 == 0 else other for i in range(n)]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _gen_one(rng, n: int, kinds: Kinds, box_side, jitter, exclusion) -> PathSpec:
    half = box_side / 2.0
    while True:
        start = rng.uniform(-half, half, 3)
        end = rng.uniform(-half, half, 3)
        if np.linalg.norm(end - start) > _MIN_ENDPOINT_DIST:
            break
    chord = _unit(end - start)
    kind_seq = _kind_sequence(rng, n, kinds)

    for _ in range(1000):
        stations = [
            start + (i + 1) / (n + 1) * (end - start) + rng.uniform(-jitter, jitter, 3)
            for i in range(n)
        ]
        ok = all(
            min(np.linalg.norm(p - start), np.linalg.norm(p - end)) > exclusion
            for p in stations
        )
        if not ok:
            continue
        poly = [start] + stations + [end]
        if any(
            np.linalg.norm(poly[i + 1] - poly[i]) < exclusion for i in range(n + 1)
        ):
            continue
        # Planes (and, in mixed scenes, edges) need a genuine turn at their
        # waypoint so the stationarity construction below is well posed.
        turns_ok = True
        for i, kind in enumerate(kind_seq):
            if kind is SurfaceKind.PLANE or kinds is Kinds.MIXED:
                u_in = _unit(poly[i + 1] - poly[i])
                u_out = _unit(poly[i + 2] - poly[i + 1])
                if np.linalg.norm(u_in - u_out) < _MIN_TURN:
                    turns_ok = False
                    break
        if turns_ok:
            break
    else:
        raise RuntimeError("scene generation failed to place waypoints")

    surfaces = []
    for i, kind in enumerate(kind_seq):
        p = stations[i]
        if kind is SurfaceKind.PLANE:
            u_in = _unit(poly[i + 1] - poly[i])
            u_out = _unit(poly[i + 2] - poly[i + 1])
            normal = _unit(u_in - u_out)
            while True:
                r = rng.normal(size=3)
                e1 = r - np.dot(r, normal) * normal
                if np.linalg.norm(e1) > 1e-6:
                    break
            e1 = _unit(e1)
            e2 = np.cross(normal, e1)
            surfaces.append(make_plane(p, e1, e2))
        else:
            if kinds is Kinds.MIXED:
                # Make the waypoint polyline stationary at the edge too:
                # directions orthogonal to u_in - u_out keep the diffraction
                # point at the waypoint, so mixed scenes stay smooth at the
                # optimum (infinite planes would otherwise often drag the
                # solution onto a neighbouring edge, a nonsmooth kink).
                u_in = _unit(poly[i + 1] - poly[i])
                u_out = _unit(poly[i + 2] - poly[i + 1])
                q = _unit(u_in - u_out)
                while True:
                    r = rng.normal(size=3)
                    d = r - np.dot(r, q) * q
                    nd = np.linalg.norm(d)
                    if nd > 1e-6:
                        d = d / nd
                        break
            else:
                while True:
                    d = rng.normal(size=3)
                    nd = np.linalg.norm(d)
                    if nd > 1e-12:
                        d = d / nd
                        if abs(np.dot(d, chord)) < _MAX_EDGE_CHORD_ALIGN:
                            break
            surfaces.append(make_edge(p, d))
    return PathSpec(start=start, end=end, surfaces=tuple(surfaces))


def gen_scenes(
    seed: int,
    n: int,
    kinds: Kinds,
    batch: int,
    box_side: float = BOX_SIDE,
    jitter: float = LATERAL_JITTER,
    exclusion: float = ENDPOINT_EXCLUSION,
) -> list[PathSpec]:
    """Deterministic batch of random scenes with n interactions each."""
    if n < 1:
        raise ValueError("n must be >= 1")
    kind_code = list(Kinds).index(kinds)
    rng = np.random.default_rng([int(seed), int(n), kind_code])
    return [_gen_one(rng, n, kinds, box_side, jitter, exclusion) for _ in range(batch)]


# ---------------------------------------------------------------------------
# Benchmark runs


def _interaction_points(sc: BatchScene, T) -> np.ndarray:
    return embed_batch(sc.astype(np.float64), np.asarray(T, dtype=np.float64))[:, 1:-1]


def _run_solver(solver: str, sc: BatchScene, T0, config: BenchConfig):
    """One timed execution; returns (points, fp_iters_used)."""
    if solver == "image":
        return image_points_batch(sc), 0
    if solver == "gd":
        opts = SolveOptions(iterations=config.iterations, precision=config.precision)
        T, _ = _gd_kernel(sc, T0, opts)
        return _interaction_points(sc, T), 0
    if solver == "newton":
        opts = SolveOptions(iterations=config.iterations, precision=config.precision)
        T, _ = _newton_kernel(sc, T0, opts)
        return _interaction_points(sc, T), 0
    fp = 64 if solver == "ours-64" else config.fixed_point_iters
    opts = SolveOptions(
        iterations=config.iterations, fixed_point_iters=fp, precision=config.precision
    )
    T, _, _ = _bfgs_kernel(sc, T0, opts)
    return _interaction_points(sc, T), fp


def run_bench(config: BenchConfig, timing_reps: int = 5) -> list[BenchRecord]:
    """Run the error-vs-time benchmark and return one record per (solver, n)."""
    cells = {}
    for n in config.n_range:
        specs = gen_scenes(
            config.seed,
            n,
            config.kinds,
            config.batch,
            config.box_side,
            config.jitter,
            config.exclusion,
        )
        sc = BatchScene.from_specs(specs)
        T0 = stack_params(specs, [init_params(s) for s in specs])
        truth_T, _ = reference_solve_batch(specs, list(T0))
        truth_pts = _interaction_points(sc, truth_T)
        cells[n] = (sc, T0, truth_pts)

    records = []
    for solver in config.solvers:
        for n in config.n_range:
            sc, T0, truth_pts = cells[n]
            try:
                pts, fp = _run_solver(solver, sc, T0, config)  # warm-up + result
                times = []
                for _ in range(timing_reps):
                    t0 = time.perf_counter()
                    _run_solver(solver, sc, T0, config)
                    times.append(time.perf_counter() - t0)
                err = float(np.mean(np.linalg.norm(pts - truth_pts, axis=2)))
                wall_ms = 1e3 * float(np.median(times))
            except FermatPathError:
                err, wall_ms, fp = float("nan"), float("nan"), 0
            records.append(
                BenchRecord(
                    solver=solver,
                    n=n,
                    kinds=config.kinds.value,
                    d=2,
                    iterations=0 if solver == "image" else config.iterations,
                    fp_iters=fp,
                    precision=config.precision.value,
                    mean_error=err,
                    wall_time_ms=wall_ms,
                )
            )
    return records


# ---------------------------------------------------------------------------
# Gradient checks


@dataclass(frozen=True)
class GradCheckReport:
    count: int
    vjp_max_rel_error: float
    envelope_max_rel_error: float
    tolerance: float
    passed: bool


def _feasible_coords(spec: PathSpec):
    """Perturbable scene coordinates: active basis entries, anchors, endpoints.

    Inert edge basis columns are excluded; perturbing them changes the
    surface class itself, so no derivative is defined there.
    """
    coords = []
    for i, s in enumerate(spec.surfaces):
        for col in range(2):
            if s.active[col]:
                for row in range(3):
                    coords.append(("basis", i, row, col))
        for row in range(3):
            coords.append(("anchor", i, row))
    for row in range(3):
        coords.append(("start", row))
    for row in range(3):
        coords.append(("end", row))
    return coords


def _perturbed_spec(spec: PathSpec, coord, h: float) -> PathSpec:
    start = np.array(spec.start)
    end = np.array(spec.end)
    surfaces = list(spec.surfaces)
    if coord[0] == "start":
        start[coord[1]] += h
    elif coord[0] == "end":
        end[coord[1]] += h
    else:
        _, i, *idx = coord
        s = surfaces[i]
        basis = np.array(s.basis)
        anchor = np.array(s.anchor)
        if coord[0] == "basis":
            basis[idx[0], idx[1]] += h
        else:
            anchor[idx[0]] += h
        surfaces[i] = Surface(basis=basis, anchor=anchor, kind=s.kind)
    return PathSpec(start=start, end=end, surfaces=tuple(surfaces))


def _scene_grad_entry(sg, coord) -> float:
    if coord[0] == "start":
        return float(sg.start[coord[1]])
    if coord[0] == "end":
        return float(sg.end[coord[1]])
    if coord[0] == "anchor":
        return float(sg.anchor[coord[1], coord[2]])
    return float(sg.basis[coord[1], coord[2], coord[3]])


def fd_resolve_vjp(spec: PathSpec, v, h: float = 1e-5) -> np.ndarray:
    """Oracle: v^T dT*/d(theta) by re-solving at theta +/- h per coordinate."""
    coords = _feasible_coords(spec)
    perturbed = []
    for c in coords:
        perturbed.append(_perturbed_spec(spec, c, +h))
        perturbed.append(_perturbed_spec(spec, c, -h))
    T, converged = reference_solve_batch(perturbed)
    if not np.all(converged):
        raise FermatPathError("oracle re-solve failed to converge")
    v = np.asarray(v, dtype=float)
    out = np.empty(len(coords))
    for j in range(len(coords)):
        dT = (T[2 * j] - T[2 * j + 1]) / (2.0 * h)
        out[j] = float(np.sum(v * dT))
    return out


def grad_check(
    seed: int, n: int, kinds: Kinds, count: int, tolerance: float = 1e-3
) -> GradCheckReport:
    """Oracle-equivalence suite for implicit differentiation on random scenes.

    All finite-difference re-solves for a batch of instances run as one
    reference solve, which amortizes the per-iteration kernel overhead.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    specs = gen_scenes(seed, n, kinds, count)
    Tstars, converged = reference_solve_batch(specs)
    rng = np.random.default_rng([int(seed), 0xD1FF])
    h = 1e-5

    live = [i for i in range(count) if converged[i]]
    vs = {i: rng.normal(size=(n, 2)) * specs[i].active_mask for i in live}
    coords_by_i = {i: _feasible_coords(specs[i]) for i in live}
    perturbed = []
    for i in live:
        for c in coords_by_i[i]:
            perturbed.append(_perturbed_spec(specs[i], c, +h))
            perturbed.append(_perturbed_spec(specs[i], c, -h))
    Tp, conv_p = reference_solve_batch(perturbed)
    if not np.all(conv_p):
        raise FermatPathError("oracle re-solve failed to converge")

    vjp_max = 0.0
    env_max = 0.0
    pos = 0
    for i in live:
        spec, Tstar, v = specs[i], Tstars[i], vs[i]
        sg = vjp_solution(spec, Tstar, v)
        coords = coords_by_i[i]
        analytic = np.array([_scene_grad_entry(sg, c) for c in coords])
        fd = np.empty(len(coords))
        for j in range(len(coords)):
            dT = (Tp[pos] - Tp[pos + 1]) / (2.0 * h)
            fd[j] = float(np.sum(v * dT))
            pos += 2
        rel = float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-30))
        vjp_max = max(vjp_max, rel)

        from .objective import length_param_gradient

        partial = length_param_gradient(spec, Tstar)
        g = gradient(spec, Tstar)
        corr = vjp_solution(spec, Tstar, g)
        gap = np.linalg.norm(corr.flat()) / (1.0 + partial.norm())
        env_max = max(env_max, float(gap))
        grad_length_wrt_params(spec, Tstar, debug_check=True)
    return GradCheckReport(
        count=count,
        vjp_max_rel_error=vjp_max,
        envelope_max_rel_error=env_max,
        tolerance=tolerance,
        passed=vjp_max <= tolerance and env_max <= 1e-6,
    )

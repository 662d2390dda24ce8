"""Gradient-based refinement of a program's continuous parameters.

The differentiable interpreter maps program parameters to leaf-cuboid poses;
this module closes the loop to a target point cloud: sample the executed
surfaces, measure the symmetric Chamfer distance, back-propagate to a masked
parameter subset, and take adaptive-moment gradient steps under the language's
range clamps.  Nearest-neighbor correspondences are recomputed every iteration
and treated as fixed while differentiating (piecewise-smooth envelope); the
point-level math runs vectorized in numpy and enters the tape as one custom
node with analytic partials.

The returned program is the best-Chamfer iterate; its command structure,
indices and discrete operands are untouched, so its structural signature is
identical to the input's.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from .cloud import PointCloud, allocate_counts, chamfer_distance, \
    default_f_threshold, f_score, face_areas, surface_locals
from .errors import ContractError, FitError, ShapeAssemblyError
from .interp import ExecutedShape, ParamRef, enumerate_params, execute
from .lang import CuboidDecl, Program, structural_signature
from .quality import stability

ALL_KINDS = ("dim", "attach", "squeeze", "translate_d")


@dataclass
class FitConfig:
    iterations: int = 500
    step_size: float = 0.01
    mask: tuple[str, ...] = ALL_KINDS     # parameter kinds to optimize
    samples: int = 2000                   # surface samples per iteration
    tol: float = 1e-8                     # convergence tolerance on improvement
    patience: int = 60                    # iterations without improvement
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ContractError("fit needs at least one iteration")
        if self.step_size <= 0:
            raise ContractError("step size must be positive")
        bad = [k for k in self.mask if k not in ALL_KINDS]
        if bad:
            raise ContractError(f"unknown parameter kinds in mask: {bad}")


@dataclass
class FitReport:
    initial_chamfer: float
    final_chamfer: float
    initial_fscore: float
    final_fscore: float
    rooted_before: bool
    rooted_after: bool
    stable_before: bool
    stable_after: bool
    iterations_run: int
    seed: int
    parameter_deltas: dict[str, float] = field(default_factory=dict)
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    aborted: str = ""

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["trace"] = [list(t) for t in self.trace]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trace_csv(self) -> str:
        lines = ["iteration,chamfer,step_size"]
        lines += [f"{i},{c:.9g},{s:.9g}" for i, c, s in self.trace]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# differentiable chamfer against executed leaves
# ---------------------------------------------------------------------------

def _leaf_param_arrays(geom):
    """(center(3), rot(3,3), dims(3)) as float arrays plus the scalar objects."""
    ctr = [geom.center.x, geom.center.y, geom.center.z]
    rot = [geom.rot.r0.x, geom.rot.r0.y, geom.rot.r0.z,
           geom.rot.r1.x, geom.rot.r1.y, geom.rot.r1.z,
           geom.rot.r2.x, geom.rot.r2.y, geom.rot.r2.z]
    dims = [geom.dims.x, geom.dims.y, geom.dims.z]
    vals = np.array([ad.value(s) for s in ctr + rot + dims])
    return vals[:3], vals[3:12].reshape(3, 3), vals[12:], ctr + rot + dims


def sample_shape_points(shape_or_geoms, n: int, seed: int) -> np.ndarray:
    """Deterministic surface sampling over leaves, allocated by area."""
    geoms = shape_or_geoms.leaf_geoms() if isinstance(shape_or_geoms, ExecutedShape) \
        else list(shape_or_geoms)
    if not geoms:
        raise ContractError("shape has no leaf cuboids to sample")
    blocks, _ = _leaf_samples(geoms, n, seed)
    return np.concatenate([w for w, _, _ in blocks])


def _leaf_samples(geoms, n, seed, tape=None):
    dims_all = [np.array([ad.value(g.dims.x), ad.value(g.dims.y), ad.value(g.dims.z)])
                for g in geoms]
    areas = np.array([face_areas(d).sum() for d in dims_all])
    share = areas / areas.sum() * n
    counts = np.maximum(allocate_counts(areas, n), 6)
    if tape is not None:
        frac = np.sort(share - np.floor(share))
        gaps = np.diff(frac)
        if len(gaps) and gaps.min() < 1e-6:
            tape.flag_kink("sample allocation tie")
    blocks = []
    for i, g in enumerate(geoms):
        cnt = int(counts[i])
        locs = surface_locals(dims_all[i], cnt, seed=seed * 100003 + i)
        c, r, d, scalars = _leaf_param_arrays(g)
        w = c + ((locs - 0.5) * d) @ r.T
        blocks.append((w, locs - 0.5, scalars))
    return blocks, counts


def chamfer_loss(shape: ExecutedShape, target, n: int = 2000, seed: int = 0):
    """Symmetric Chamfer between sampled leaves and the target as a tape node.

    Returns a DiffScalar when the shape carries differentiable geometry, else
    a plain float.  Gradients flow to every leaf pose/dimension scalar via
    analytic partials; correspondences are frozen at the evaluation.
    """
    tgt = target.points if isinstance(target, PointCloud) else np.asarray(target)
    tgt = tgt.reshape(-1, 3)
    if len(tgt) == 0:
        raise ContractError("target cloud is empty")
    geoms = shape.leaf_geoms()
    if not geoms:
        raise ContractError("executed shape has no leaves")
    tape = shape.tape
    blocks, _ = _leaf_samples(geoms, n, seed, tape)
    W = np.concatenate([w for w, _, _ in blocks])
    na, nb = len(W), len(tgt)

    tree_t = cKDTree(tgt)
    d_a, idx_a = tree_t.query(W, k=1)
    tree_w = cKDTree(W)
    d_b, idx_b = tree_w.query(tgt, k=1)
    val = float(d_a.mean() / 2.0 + d_b.mean() / 2.0)
    if tape is None:
        return val

    # gradient w.r.t. sample positions
    gW = np.zeros_like(W)
    ok = d_a > 1e-12
    gW[ok] += (W[ok] - tgt[idx_a[ok]]) / d_a[ok, None] / (2.0 * na)
    ok = d_b > 1e-12
    np.add.at(gW, idx_b[ok], (W[idx_b[ok]] - tgt[ok]) / d_b[ok, None] / (2.0 * nb))

    # chain into the per-leaf (center, rotation, dims) scalars
    parents: list[int] = []
    partials: list[float] = []
    row = 0
    for (w, loc, scalars), g in zip(blocks, geoms):
        cnt = len(w)
        gw = gW[row:row + cnt]
        row += cnt
        _, r, d, _ = _leaf_param_arrays(g)
        g_center = gw.sum(axis=0)                      # (3,)
        g_rot = gw.T @ (loc * d)                       # (3,3): dW/dR[r,c]
        g_dims = ((gw @ r) * loc).sum(axis=0)          # (3,)
        grads = np.concatenate([g_center, g_rot.ravel(), g_dims])
        for s, gv in zip(scalars, grads):
            if isinstance(s, ad.DiffScalar) and gv != 0.0:
                parents.append(s.idx)
                partials.append(float(gv))
    return tape.node(val, tuple(parents), tuple(partials))


# ---------------------------------------------------------------------------
# the optimizer
# ---------------------------------------------------------------------------

def _dim_bounds(p: Program) -> dict[int, CuboidDecl]:
    """Map id(cuboid decl) -> its program's bbox decl, for range clamps."""
    out: dict[int, CuboidDecl] = {}

    def walk(prog: Program):
        for decl in prog.cuboids:
            out[id(decl)] = prog.bbox
        for child in prog.children.values():
            walk(child)

    walk(p)
    return out


def _clamp_ref(ref: ParamRef, bounds: dict[int, CuboidDecl]) -> None:
    v = ref.get()
    if ref.kind == "dim":
        bbox = bounds.get(id(ref.cmd))
        hi = getattr(bbox, ref.attr) if bbox is not None else math.inf
        ref.set(min(max(v, 0.01), hi))
    else:
        ref.set(min(max(v, 0.0), 1.0))


def fit_continuous(p: Program, target, cfg: FitConfig | None = None
                   ) -> tuple[Program, FitReport]:
    """Minimize Chamfer distance to the target over masked parameters.

    Adaptive-moment updates with range re-clamping each step; non-finite
    losses reject the step and halve the step size; an execution failure
    aborts and returns the best valid iterate seen so far.
    """
    cfg = cfg or FitConfig()
    tgt = target.points if isinstance(target, PointCloud) else np.asarray(target)
    tgt = np.asarray(tgt, dtype=np.float64).reshape(-1, 3)
    if len(tgt) == 0:
        raise ContractError("target cloud is empty")

    work = copy.deepcopy(p)
    refs = enumerate_params(work)
    masked = [r for r in refs if r.kind in cfg.mask]
    bounds = _dim_bounds(work)
    sig_before = structural_signature(work)

    try:
        shape0 = execute(work, mode="hier")
    except ShapeAssemblyError as e:
        raise FitError(f"program does not execute: {e}") from e
    pts0 = sample_shape_points(shape0, cfg.samples, cfg.seed)
    initial = chamfer_distance(pts0, tgt)
    thr = default_f_threshold(tgt)
    f0 = f_score(pts0, tgt, thr)
    st0 = stability(shape0)

    best_val = initial
    best_params = [r.get() for r in refs]
    start_params = {r.key: r.get() for r in refs}

    lr = cfg.step_size
    m = np.zeros(len(masked))
    v = np.zeros(len(masked))
    trace: list[tuple[int, float, float]] = []
    aborted = ""
    since_improve = 0
    it = 0
    for it in range(1, cfg.iterations + 1):
        prev = [r.get() for r in masked]
        try:
            shape = execute(work, mode="hier", differentiable=True)
            loss = chamfer_loss(shape, tgt, cfg.samples, cfg.seed)
        except ShapeAssemblyError as e:
            aborted = f"execution failed at iteration {it}: {e}"
            break
        val = ad.value(loss)
        trace.append((it, val, lr))
        if not math.isfinite(val):
            for r, x in zip(masked, prev):
                r.set(x)
            lr *= 0.5
            continue
        if val < best_val - cfg.tol:
            best_val = val
            best_params = [r.get() for r in refs]
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.patience:
                break
        if not isinstance(loss, ad.DiffScalar):
            break  # nothing differentiable under this mask
        g = np.array(ad.gradient(loss, [r.scalar for r in masked]))
        if not np.isfinite(g).all():
            for r, x in zip(masked, prev):
                r.set(x)
            lr *= 0.5
            continue
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1.0 - 0.9 ** it)
        vh = v / (1.0 - 0.999 ** it)
        step = lr * mh / (np.sqrt(vh) + 1e-8)
        for r, s in zip(masked, step):
            r.set(r.get() - float(s))
            _clamp_ref(r, bounds)

    for r, x in zip(refs, best_params):
        r.set(x)
    assert structural_signature(work) == sig_before

    shape1 = execute(work, mode="hier")
    pts1 = sample_shape_points(shape1, cfg.samples, cfg.seed)
    final = chamfer_distance(pts1, tgt)
    f1 = f_score(pts1, tgt, thr)
    st1 = stability(shape1)

    deltas = {r.key: round(r.get() - start_params[r.key], 9)
              for r in refs if abs(r.get() - start_params[r.key]) > 1e-12}
    report = FitReport(initial_chamfer=initial, final_chamfer=min(final, initial),
                       initial_fscore=f0, final_fscore=f1,
                       rooted_before=st0.rooted, rooted_after=st1.rooted,
                       stable_before=st0.stable, stable_after=st1.stable,
                       iterations_run=it, seed=cfg.seed,
                       parameter_deltas=deltas, trace=trace, aborted=aborted)
    return work, report


def fit_report_table(reports: list[FitReport]) -> dict:
    """Aggregate mean F-score and validity percentages before/after fitting."""
    if not reports:
        raise ContractError("no fit reports to aggregate")
    n = len(reports)
    return {
        "count": n,
        "mean_fscore_before": sum(r.initial_fscore for r in reports) / n,
        "mean_fscore_after": sum(r.final_fscore for r in reports) / n,
        "pct_rooted_before": 100.0 * sum(r.rooted_before for r in reports) / n,
        "pct_rooted_after": 100.0 * sum(r.rooted_after for r in reports) / n,
        "pct_stable_before": 100.0 * sum(r.stable_before for r in reports) / n,
        "pct_stable_after": 100.0 * sum(r.stable_after for r in reports) / n,
        "mean_chamfer_before": sum(r.initial_chamfer for r in reports) / n,
        "mean_chamfer_after": sum(r.final_chamfer for r in reports) / n,
    }

"""Imperative, differentiable execution of cuboid-assembly programs.

Commands run in listed order and take effect immediately.  Attachment moves
the first cuboid onto the second; how depends on the mover's prior attachment
count:

* no prior attachments: pure translation colocating source and target;
* one prior: scale along the local axis that fastest changes the ratio n/k
  (n = existing point to new target, k = existing point to new source) by the
  factor n/k, then rotate about the existing point so the points colocate;
* two or more priors: if the existing points are colinear, rotate about that
  axis so the source faces the target, then scale along the source-face normal
  only when the face normal is within tau = 25 degrees of the direction to the
  target (otherwise the attachment stays approximate);
* aligned cuboids never rotate: after their first attachment they satisfy new
  attachments by growing dimensions minimally until the target point lies
  inside their closed volume.

Macros (squeeze / reflect / translate) expand into Cuboid and attach commands
that execute immediately.  Hierarchical execution maps each sub-program into
its parent cuboid via the parent pose and a per-axis scale from the child
bounding volume.

Repairable rule violations (out-of-range coordinates and dimensions) are
clamped with a warning; structural violations (grounding order, moving the
bounding volume, symmetry on ungrounded cuboids) raise ExecutionError.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ExecutionError
from .geometry import (CuboidGeom, Mat3, RigidPose, Vec3, corners,
                       face_center, face_point, local_to_world, opposite_face,
                       rotation_about_axis, rotation_between, world_to_local)
from .lang import (Attach, CuboidDecl, Program, Reflect, Squeeze, Translate)

TAU_DEG = 25.0
_TAU_COS = math.cos(math.radians(TAU_DEG))

MIN_DIM = 0.01
CONTAIN_SLACK = 0.10
BBOX_FACE_TOL = 0.05

value = ad.value


# ---------------------------------------------------------------------------
# differentiable parameters
# ---------------------------------------------------------------------------

@dataclass
class ParamRef:
    """A continuous program parameter, addressable for lifting and fitting."""

    key: str
    kind: str        # dim | attach | squeeze | translate_d
    cmd: object
    attr: str
    scalar: ad.DiffScalar | None = None

    def get(self) -> float:
        return float(getattr(self.cmd, self.attr))

    def set(self, v: float) -> None:
        setattr(self.cmd, self.attr, float(v))


def enumerate_params(p: Program, path: str = "") -> list[ParamRef]:
    """All continuous parameters of a program hierarchy, in a stable order."""
    out: list[ParamRef] = []
    for decl in [p.bbox, *p.cuboids]:
        for attr in ("l", "w", "h"):
            out.append(ParamRef(f"{path}{decl.name}.{attr}", "dim", decl, attr))
    for i, a in enumerate(p.attaches):
        if isinstance(a, Attach):
            for attr in ("x1", "y1", "z1", "x2", "y2", "z2"):
                out.append(ParamRef(f"{path}attach{i}.{attr}", "attach", a, attr))
        else:
            for attr in ("u", "v"):
                out.append(ParamRef(f"{path}squeeze{i}.{attr}", "squeeze", a, attr))
    for i, s in enumerate(p.symmetries):
        if isinstance(s, Translate):
            out.append(ParamRef(f"{path}translate{i}.d", "translate_d", s, "d"))
    for decl in p.cuboids:
        child = p.children.get(decl.name)
        if child is not None:
            out.extend(enumerate_params(child, f"{path}{decl.name}/"))
    return out


# ---------------------------------------------------------------------------
# execution state
# ---------------------------------------------------------------------------

@dataclass
class AttachRecord:
    own_local: Vec3       # source point in the mover's local frame
    partner: str
    partner_local: Vec3


@dataclass
class CuboidState:
    name: str
    geom: CuboidGeom
    decl: CuboidDecl
    history: list[AttachRecord] = field(default_factory=list)
    grounded: bool = False
    line: int = 0
    origin: str | None = None   # declared cuboid a symmetry clone stems from


class _ExecCtx:
    """Execution context of one program (one hierarchy node)."""

    def __init__(self, program: Program, overrides, warnings, trace, path: str):
        self.program = program
        self.overrides = overrides
        self.warnings = warnings
        self.trace = trace
        self.path = path
        self.states: dict[str, CuboidState] = {}
        self.order: list[str] = []
        self.moves: dict[str, list[Attach]] = {}
        self.edges: list[tuple[str, str]] = []
        self.step = 0

    # -- operand access (lifted scalar when differentiable) -----------------

    def op(self, cmd, attr):
        if self.overrides is not None:
            s = self.overrides.get((id(cmd), attr))
            if s is not None:
                return s
        return getattr(cmd, attr)

    def warn(self, msg: str) -> None:
        self.warnings.append(f"{self.path or 'root'}: {msg}")

    def log(self, cmd_text: str, touched: CuboidState | None) -> None:
        if self.trace is None:
            return
        pose = ""
        if touched is not None:
            c = touched.geom
            pose = (f" -> {touched.name} center={tuple(round(v, 6) for v in c.center.values())}"
                    f" dims={tuple(round(v, 6) for v in c.dims.values())}")
        self.trace.append(f"{self.path or 'root'} step {self.step}: {cmd_text}{pose}")
        self.step += 1

    @property
    def bbox(self) -> CuboidState:
        return self.states["bbox"]

    def unique_name(self, base: str) -> str:
        name = base
        k = 2
        while name in self.states:
            name = f"{base}{k}"
            k += 1
        return name


def _clamp_coord(ctx: _ExecCtx, x, what: str):
    xv = value(x)
    if xv < -1e-9 or xv > 1.0 + 1e-9:
        ctx.warn(f"{what} = {xv:.4f} clamped into [0, 1]")
    return ad.clamp(x, 0.0, 1.0)


def _set_axis(v: Vec3, axis: int, val) -> Vec3:
    parts = [v.x, v.y, v.z]
    parts[axis] = val
    return Vec3(*parts)


# ---------------------------------------------------------------------------
# instantiate
# ---------------------------------------------------------------------------

def instantiate(ctx: _ExecCtx, decl: CuboidDecl, origin: str | None = None) -> CuboidState:
    """Create a cuboid at the origin with clamped dimensions."""
    name = decl.name
    if name in ctx.states:
        raise ExecutionError("duplicate", f"cuboid {name!r} declared twice")
    l, w, h = ctx.op(decl, "l"), ctx.op(decl, "w"), ctx.op(decl, "h")
    dims = Vec3(l, h, w)  # syntax order (l, w, h) spans extents (x, z, y)
    is_bbox = name == "bbox"
    bounds = None if is_bbox else ctx.bbox.geom.dims
    fixed = []
    for axis in range(3):
        d = dims[axis]
        dv = value(d)
        hi_s = None if bounds is None else bounds[axis]
        hi = math.inf if hi_s is None else value(hi_s)
        if dv < MIN_DIM - 1e-9 or dv > hi + 1e-9:
            ctx.warn(f"dimension {'lhw'[axis]} of {name} = {dv:.4f} clamped into "
                     f"[{MIN_DIM}, {hi:.4f}]")
        if hi_s is None:
            d = ad.vmax(d, MIN_DIM)
        else:
            d = ad.clamp(d, MIN_DIM, hi_s)
        fixed.append(d)
    geom = CuboidGeom(Vec3(*fixed), RigidPose.identity(), aligned=bool(decl.aligned))
    st = CuboidState(name, geom, decl, grounded=is_bbox, line=decl.line, origin=origin)
    ctx.states[name] = st
    if not is_bbox:
        ctx.order.append(name)
        ctx.moves[name] = []
    ctx.log(f"Cuboid {name}", st)
    return st


# ---------------------------------------------------------------------------
# attach
# ---------------------------------------------------------------------------

def _translate_to(st: CuboidState, delta: Vec3) -> None:
    g = st.geom
    st.geom = CuboidGeom(g.dims, RigidPose(g.rot, g.center + delta), g.aligned)


def _rotate_about(st: CuboidState, pivot: Vec3, rot: Mat3) -> None:
    g = st.geom
    new_rot = rot.mat(g.rot)
    new_center = pivot + rot.vec(g.center - pivot)
    st.geom = CuboidGeom(g.dims, RigidPose(new_rot, new_center), g.aligned)


def _one_prior(ctx: _ExecCtx, st: CuboidState, src_local: Vec3, tgt_world: Vec3) -> None:
    g = st.geom
    prev = st.history[0].own_local
    pivot = local_to_world(g, prev)
    src_world = local_to_world(g, src_local)
    n_vec = tgt_world - pivot
    k_vec = src_world - pivot
    n_len = n_vec.norm()
    k_len = k_vec.norm()
    if value(k_len) < 1e-9 or value(n_len) < 1e-9:
        ctx.warn(f"degenerate one-prior attach on {st.name}; move skipped")
        t = ad.tape_of(n_len, k_len)
        if t is not None:
            t.flag_kink("one-prior degenerate")
        return

    # pick the local axis whose scaling changes n/k fastest: the axis with the
    # largest local offset between the existing and the new source point
    deltas = [abs((value(src_local[i]) - value(prev[i])) * value(g.dims[i]))
              for i in range(3)]
    axis = int(np.argmax(deltas))
    ranked = sorted(deltas, reverse=True)
    t = ad.tape_of(*[g.dims[i] for i in range(3)])
    if t is not None and len(ranked) > 1 and ranked[0] - ranked[1] < t.kink_tol:
        t.flag_kink("one-prior axis tie")

    gamma = n_len / k_len
    new_dims = _set_axis(g.dims, axis, g.dims[axis] * gamma)
    half = Vec3(prev.x - 0.5, prev.y - 0.5, prev.z - 0.5)
    new_center = pivot - g.rot.vec(half.scale(new_dims))
    st.geom = CuboidGeom(new_dims, RigidPose(g.rot, new_center), g.aligned)

    src_world = local_to_world(st.geom, src_local)
    u = src_world - pivot
    u_len = u.norm()
    if value(u_len) < 1e-9:
        ctx.warn(f"one-prior attach on {st.name}: scaled source collapsed onto "
                 f"the pivot; rotation skipped")
        return
    rot = rotation_between(Vec3(u.x / u_len, u.y / u_len, u.z / u_len),
                           Vec3(n_vec.x / n_len, n_vec.y / n_len, n_vec.z / n_len))
    _rotate_about(st, pivot, rot)


def _multi_prior(ctx: _ExecCtx, st: CuboidState, src_local: Vec3, tgt_world: Vec3) -> None:
    g = st.geom
    pts = [local_to_world(g, h.own_local) for h in st.history]
    vals = np.array([p.values() for p in pts])
    diag = max(g.diagonal(), 1e-12)
    col_tol = 1e-5 * diag

    # farthest pair defines the candidate colinearity axis
    d2 = ((vals[:, None, :] - vals[None, :, :]) ** 2).sum(axis=2)
    i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
    if math.sqrt(d2[i, j]) < col_tol:
        ctx.warn(f"attach on {st.name}: existing attachment points coincide; "
                 f"rotation skipped")
        colinear = False
        axis_dir = None
        origin = pts[0]
    else:
        origin = pts[i]
        axis_dir = (pts[j] - pts[i]).normalized()
        a = vals[j] - vals[i]
        a = a / np.linalg.norm(a)
        rel = vals - vals[i]
        perp = rel - np.outer(rel @ a, a)
        colinear = bool((np.linalg.norm(perp, axis=1) < col_tol).all())

    if colinear:
        src_world = local_to_world(g, src_local)
        s_rel = src_world - origin
        t_rel = tgt_world - origin
        s_perp = s_rel - axis_dir * s_rel.dot(axis_dir)
        t_perp = t_rel - axis_dir * t_rel.dot(axis_dir)
        sp = s_perp.norm()
        tp = t_perp.norm()
        if value(sp) < 1e-9 or value(tp) < 1e-9:
            ctx.warn(f"attach on {st.name}: point on the colinearity axis; "
                     f"rotation skipped")
            t = ad.tape_of(sp, tp)
            if t is not None:
                t.flag_kink("multi-prior rotation singular")
        else:
            su = Vec3(s_perp.x / sp, s_perp.y / sp, s_perp.z / sp)
            tu = Vec3(t_perp.x / tp, t_perp.y / tp, t_perp.z / tp)
            cos_f = su.dot(tu)
            sin_f = su.cross(tu).dot(axis_dir)
            _rotate_about(st, origin, rotation_about_axis(axis_dir, cos_f, sin_f))

    # tau-gated scale along the source-face normal
    g = st.geom
    src_world = local_to_world(g, src_local)
    v = tgt_world - src_world
    v_len = v.norm()
    if value(v_len) < 1e-9:
        return  # already satisfied
    face_axes = [(k, value(src_local[k])) for k in range(3)
                 if value(src_local[k]) < 1e-6 or value(src_local[k]) > 1.0 - 1e-6]
    if not face_axes:
        ctx.warn(f"attach on {st.name}: source point is interior, no face "
                 f"normal to scale along; attachment left approximate")
        return
    best = None
    for k, side in face_axes:
        normal = g.rot.col(k) * (1.0 if side > 0.5 else -1.0)
        cos_a = value(normal.dot(v)) / max(value(v_len), 1e-12)
        if best is None or cos_a > best[2]:
            best = (k, side, cos_a, normal)
    k, side, cos_a, _ = best
    t = ad.tape_of(v_len, g.dims.x, g.dims.y, g.dims.z)
    if t is not None and abs(cos_a - _TAU_COS) < t.kink_tol:
        t.flag_kink("tau gate")
    if cos_a <= _TAU_COS:
        ctx.warn(f"attach on {st.name}: face normal is {math.degrees(math.acos(max(-1.0, min(1.0, cos_a)))):.1f} deg "
                 f"from the target direction (> {TAU_DEG:.0f} deg); scale skipped, "
                 f"attachment left approximate")
        return

    # scale axis k about the mean local offset of the existing points
    offs = [(h.own_local[k] - 0.5) * g.dims[k] for h in st.history]
    cbar = offs[0]
    for o in offs[1:]:
        cbar = cbar + o
    cbar = cbar * (1.0 / len(offs))
    spread = max(abs(value(o) - value(cbar)) for o in offs)
    if spread > 1e-6 * diag:
        ctx.warn(f"attach on {st.name}: existing attachments only approximately "
                 f"preserved by the face-normal scale")
    s_k = (src_local[k] - 0.5) * g.dims[k]
    t_k = g.rot.tvec(tgt_world - g.center)[k]
    denom = s_k - cbar
    if abs(value(denom)) < 1e-9:
        ctx.warn(f"attach on {st.name}: source face passes through the existing "
                 f"attachments; scale skipped")
        return
    gamma = (t_k - cbar) / denom
    if value(gamma) <= 1e-6:
        ctx.warn(f"attach on {st.name}: face-normal scale would invert the "
                 f"cuboid; skipped")
        return
    new_dims = _set_axis(g.dims, k, g.dims[k] * gamma)
    new_center = g.center + g.rot.col(k) * (cbar * (1.0 - gamma))
    st.geom = CuboidGeom(new_dims, RigidPose(g.rot, new_center), g.aligned)


def _grow_aligned(ctx: _ExecCtx, st: CuboidState, tgt_world: Vec3) -> None:
    """Minimal per-axis growth so the target point lies inside the closed box.

    Only the face nearest the target moves (the smallest non-negative growth);
    the opposite face stays put, so earlier attachment points remain inside.
    """
    g = st.geom
    q = g.rot.tvec(tgt_world - g.center)
    dims = [g.dims.x, g.dims.y, g.dims.z]
    center = g.center
    for axis in range(3):
        qa = q[axis]
        qv = value(qa)
        half = dims[axis] * 0.5
        hv = value(half)
        t = ad.tape_of(qa, dims[axis])
        if t is not None and abs(abs(qv) - hv) < t.kink_tol:
            t.flag_kink("aligned growth tie")
        if abs(qv) <= hv:
            continue
        mag = qa if qv >= 0.0 else -qa
        shift = (qa - (half if qv >= 0.0 else -half)) * 0.5
        center = center + g.rot.col(axis) * shift
        dims[axis] = mag + half
    st.geom = CuboidGeom(Vec3(*dims), RigidPose(g.rot, center), g.aligned)


def apply_attach(ctx: _ExecCtx, att: Attach) -> None:
    """Execute one attach command, moving att.c1 onto att.c2."""
    if att.c1 == "bbox":
        raise ExecutionError("bbox_moved", "the bounding volume cannot be moved "
                                           "by an attach command")
    if att.c1 == att.c2:
        raise ExecutionError("self_attach", f"{att.c1!r} cannot attach to itself")
    mover = ctx.states.get(att.c1)
    partner = ctx.states.get(att.c2)
    if mover is None or partner is None:
        missing = att.c1 if mover is None else att.c2
        raise ExecutionError("undeclared", f"attach references unknown cuboid {missing!r}")
    if not partner.grounded:
        raise ExecutionError("grounding", f"attach({att.c1}, {att.c2}) targets an "
                                          f"ungrounded cuboid")

    c = [_clamp_coord(ctx, ctx.op(att, a), f"attach {a}")
         for a in ("x1", "y1", "z1", "x2", "y2", "z2")]
    src_local = Vec3(c[0], c[1], c[2])
    tgt_local = Vec3(c[3], c[4], c[5])
    tgt_world = local_to_world(partner.geom, tgt_local)

    prior = len(mover.history)
    if mover.geom.aligned and prior >= 1:
        _grow_aligned(ctx, mover, tgt_world)
    elif prior == 0:
        src_world = local_to_world(mover.geom, src_local)
        _translate_to(mover, tgt_world - src_world)
    elif prior == 1:
        _one_prior(ctx, mover, src_local, tgt_world)
    else:
        _multi_prior(ctx, mover, src_local, tgt_world)

    mover.history.append(AttachRecord(src_local, att.c2, tgt_local))
    mover.grounded = True
    ctx.moves[att.c1].append(att)
    ctx.edges.append((att.c1, att.c2))
    ctx.log(f"attach({att.c1}, {att.c2})", mover)


# ---------------------------------------------------------------------------
# macros
# ---------------------------------------------------------------------------

def expand_squeeze(sq: Squeeze, u=None, v=None) -> tuple[Attach, Attach]:
    """Expand a squeeze into its two attach commands.

    The first attaches the center of c1's named face to (u, v) on the opposite
    face of c2; the second attaches the center of c1's opposite face to (u, v)
    on the named face of c3.
    """
    u = sq.u if u is None else u
    v = sq.v if v is None else v
    f = sq.face
    a1 = Attach(sq.c1, sq.c2, *face_center(f), *face_point(opposite_face(f), u, v),
                line=sq.line)
    a2 = Attach(sq.c1, sq.c3, *face_center(opposite_face(f)), *face_point(f, u, v),
                line=sq.line)
    return a1, a2


def _reflect_point(bbox: CuboidGeom, p: Vec3, axis: int) -> Vec3:
    w = bbox.rot.col(axis)
    return p - w * (2.0 * (p - bbox.center).dot(w))


def _translate_point(bbox: CuboidGeom, p: Vec3, axis: int, dist) -> Vec3:
    return p + bbox.rot.col(axis) * (dist * bbox.dims[axis])


def expand_reflect(ctx: _ExecCtx, r: Reflect) -> tuple[CuboidDecl, list[Attach]]:
    """Clone declaration plus attaches targeting the mirrored world points."""
    st = ctx.states.get(r.c)
    if st is None:
        raise ExecutionError("undeclared", f"reflect references unknown cuboid {r.c!r}")
    if not st.grounded:
        raise ExecutionError("symmetry_grounding",
                             f"reflect({r.c}) targets an ungrounded cuboid")
    axis = "XYZ".index(r.axis)
    name = ctx.unique_name(f"{r.c}_ref")
    decl = CuboidDecl(name, ctx.op(st.decl, "l"), ctx.op(st.decl, "w"),
                      ctx.op(st.decl, "h"), st.decl.aligned, line=r.line)
    attaches = []
    moved = 0.0
    for mv, rec in zip(ctx.moves[r.c], st.history):
        src = rec.own_local
        world = local_to_world(st.geom, src)
        mirrored = _reflect_point(ctx.bbox.geom, world, axis)
        moved = max(moved, sum(abs(d) for d in (mirrored - world).values()))
        tgt = world_to_local(ctx.states[mv.c2].geom, mirrored)
        attaches.append(Attach(name, mv.c2, src.x, src.y, src.z,
                               tgt.x, tgt.y, tgt.z, line=r.line))
    if moved < 1e-9:
        ctx.warn(f"reflect({r.c}, {r.axis}): cuboid lies on the mirror plane; "
                 f"the clone coincides with the original")
    return decl, attaches


def expand_translate(ctx: _ExecCtx, tr: Translate) -> tuple[list[CuboidDecl], list[list[Attach]]]:
    """Clone declarations and attaches for each translated group member.

    Member i of m ends i*d/m of the way to the full normalized distance d
    along the bounding-volume axis, so the last member ends distance d away.
    """
    st = ctx.states.get(tr.c)
    if st is None:
        raise ExecutionError("undeclared", f"translate references unknown cuboid {tr.c!r}")
    if not st.grounded:
        raise ExecutionError("symmetry_grounding",
                             f"translate({tr.c}) targets an ungrounded cuboid")
    if tr.m < 1:
        raise ExecutionError("member_count", f"translate({tr.c}) needs m >= 1")
    axis = "XYZ".index(tr.axis)
    d = _clamp_coord(ctx, ctx.op(tr, "d"), "translate d")
    decls: list[CuboidDecl] = []
    groups: list[list[Attach]] = []
    for i in range(1, tr.m + 1):
        name = ctx.unique_name(f"{tr.c}_t{i}")
        decl = CuboidDecl(name, ctx.op(st.decl, "l"), ctx.op(st.decl, "w"),
                          ctx.op(st.decl, "h"), st.decl.aligned, line=tr.line)
        dist = d * (i / tr.m)
        attaches = []
        for mv, rec in zip(ctx.moves[tr.c], st.history):
            src = rec.own_local
            world = local_to_world(st.geom, src)
            moved = _translate_point(ctx.bbox.geom, world, axis, dist)
            tgt = world_to_local(ctx.states[mv.c2].geom, moved)
            attaches.append(Attach(name, mv.c2, src.x, src.y, src.z,
                                   tgt.x, tgt.y, tgt.z, line=tr.line))
        # clone declarations must not collide with each other before execution
        ctx.states[name] = None  # type: ignore[assignment]
        decls.append(decl)
        groups.append(attaches)
    for decl in decls:
        del ctx.states[decl.name]
    return decls, groups


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass
class LeafCuboid:
    name: str
    geom: CuboidGeom
    program_path: tuple[str, ...]
    line: int
    source: str = ""   # declared cuboid this leaf stems from


@dataclass
class ExecutedShape:
    """Flattened result of execution: world-space leaf cuboids plus traces."""

    leaves: list[LeafCuboid]
    warnings: list[str]
    attach_edges: list[tuple[str, str, str]]  # (program path, mover, partner)
    trace: list[str] | None = None
    tape: ad.Tape | None = None
    params: list[ParamRef] | None = None
    internal_geoms: dict[str, CuboidGeom] = field(default_factory=dict)

    def leaf_geoms(self) -> list[CuboidGeom]:
        return [lf.geom for lf in self.leaves]

    def kinked(self) -> bool:
        return self.tape is not None and bool(self.tape.kinks)


@dataclass
class _MacroExpansion:
    squeezes: list[tuple[Squeeze, Attach, Attach]] = field(default_factory=list)
    clones: list[tuple[CuboidDecl, list[Attach], str]] = field(default_factory=list)


def _run_program(program: Program, overrides, warnings, trace, path: str,
                 expansion: _MacroExpansion | None = None) -> _ExecCtx:
    ctx = _ExecCtx(program, overrides, warnings, trace, path)
    instantiate(ctx, program.bbox)
    for decl in program.cuboids:
        instantiate(ctx, decl)
    for cmd in program.attaches:
        if isinstance(cmd, Squeeze):
            u = _clamp_coord(ctx, ctx.op(cmd, "u"), "squeeze u")
            v = _clamp_coord(ctx, ctx.op(cmd, "v"), "squeeze v")
            a1, a2 = expand_squeeze(cmd, u, v)
            if expansion is not None:
                expansion.squeezes.append((cmd, a1, a2))
            apply_attach(ctx, a1)
            apply_attach(ctx, a2)
        else:
            apply_attach(ctx, cmd)
    for cmd in program.symmetries:
        if isinstance(cmd, Reflect):
            decl, attaches = expand_reflect(ctx, cmd)
            instantiate(ctx, decl, origin=cmd.c)
            for a in attaches:
                apply_attach(ctx, a)
            if expansion is not None:
                expansion.clones.append((decl, attaches, cmd.c))
        else:
            decls, groups = expand_translate(ctx, cmd)
            for decl, attaches in zip(decls, groups):
                instantiate(ctx, decl, origin=cmd.c)
                for a in attaches:
                    apply_attach(ctx, a)
                if expansion is not None:
                    expansion.clones.append((decl, attaches, cmd.c))

    dropped = [n for n in ctx.order if not ctx.states[n].grounded]
    if dropped:
        ctx.warn(f"discarded ungrounded cuboids: {', '.join(dropped)}")
        for n in dropped:
            ctx.order.remove(n)

    # containment against this program's bounding volume, 10% slack
    bbox_vals = ctx.bbox.geom.dims.values()
    for n in ctx.order:
        g = ctx.states[n].geom
        ctr, rot, dims = g.center.values(), g.rot.np(), g.dims.values()
        loc = (np.array([(u, v, w) for u in (0, 1) for v in (0, 1) for w in (0, 1)]) - 0.5)
        pts = np.array(ctr) + (loc * np.array(dims)) @ rot.T
        rel = pts / np.array(bbox_vals) + 0.5
        if (rel < -CONTAIN_SLACK - 1e-9).any() or (rel > 1.0 + CONTAIN_SLACK + 1e-9).any():
            ctx.warn(f"containment: {n} extends beyond the bounding volume "
                     f"(10% slack)")
    return ctx


def _map_child_geom(parent: CuboidGeom, child_bbox_dims: Vec3, g: CuboidGeom) -> CuboidGeom:
    """Map child-program geometry into the parent cuboid's frame.

    Per-axis scale from the child bounding volume onto the parent cuboid; a
    rotated child box under anisotropic scale is re-orthonormalized, which is
    exact whenever the child is axis-aligned in its own frame.
    """
    s = Vec3(parent.dims.x / child_bbox_dims.x,
             parent.dims.y / child_bbox_dims.y,
             parent.dims.z / child_bbox_dims.z)
    new_center = parent.center + parent.rot.vec(g.center.scale(s))
    cols = [g.rot.col(j).scale(s) for j in range(3)]
    lens = [c.norm() for c in cols]
    new_dims = Vec3(g.dims.x * lens[0], g.dims.y * lens[1], g.dims.z * lens[2])
    unit = [Vec3(c.x / n, c.y / n, c.z / n) for c, n in zip(cols, lens)]
    ortho = _gram_schmidt(unit)
    new_rot = parent.rot.mat(ortho)
    return CuboidGeom(new_dims, RigidPose(new_rot, new_center), g.aligned)


def _gram_schmidt(cols: list[Vec3]) -> Mat3:
    u0 = cols[0]
    c1 = cols[1] - u0 * cols[1].dot(u0)
    u1 = c1.normalized()
    c2 = cols[2] - u0 * cols[2].dot(u0) - u1 * cols[2].dot(u1)
    u2 = c2.normalized()
    return Mat3.from_cols(u0, u1, u2)


def _collect_leaves(program: Program, ctx: _ExecCtx, mode: str, path: tuple[str, ...],
                    overrides, warnings, trace, out: list[LeafCuboid],
                    edges: list[tuple[str, str, str]],
                    internal: dict[str, CuboidGeom]) -> None:
    path_str = "/".join(path)
    for a, b in ctx.edges:
        edges.append((path_str, a, b))
    for n in ctx.order:
        st = ctx.states[n]
        origin = st.origin or n
        child = program.children.get(origin) if mode == "hier" else None
        if child is None:
            out.append(LeafCuboid("/".join((*path, n)) if path else n,
                                  st.geom, path, st.line, source=origin))
            continue
        internal["/".join((*path, n))] = st.geom
        sub_ctx = _run_program(child, overrides, warnings, trace, "/".join((*path, n)))
        sub_out: list[LeafCuboid] = []
        _collect_leaves(child, sub_ctx, mode, (*path, n), overrides, warnings,
                        trace, sub_out, edges, internal)
        for lf in sub_out:
            out.append(LeafCuboid(lf.name,
                                  _map_child_geom(st.geom, sub_ctx.bbox.geom.dims, lf.geom),
                                  lf.program_path, lf.line, lf.source))


def execute(p: Program, mode: str = "hier", differentiable: bool = False,
            tape: ad.Tape | None = None, trace: bool = False) -> ExecutedShape:
    """Run a program and return its world-space leaf cuboids.

    mode "flat" stops at the root program's cuboids; "hier" recursively
    executes sub-programs inside their parent cuboids.  With differentiable
    True, every continuous parameter is lifted onto a tape and the returned
    leaves carry DiffScalar geometry.
    """
    if mode not in ("flat", "hier"):
        raise ExecutionError("mode", f"unknown execution mode {mode!r}")
    overrides = None
    params = None
    if differentiable:
        tape = tape or ad.Tape()
        params = enumerate_params(p)
        for ref in params:
            ref.scalar = tape.var(ref.get())
        overrides = {(id(ref.cmd), ref.attr): ref.scalar for ref in params}
    warnings: list[str] = []
    trace_list: list[str] | None = [] if trace else None
    ctx = _run_program(p, overrides, warnings, trace_list, "")
    leaves: list[LeafCuboid] = []
    edges: list[tuple[str, str, str]] = []
    internal: dict[str, CuboidGeom] = {}
    _collect_leaves(p, ctx, mode, (), overrides, warnings, trace_list, leaves,
                    edges, internal)
    return ExecutedShape(leaves, warnings, edges, trace_list, tape, params, internal)


def expand_program(p: Program) -> Program:
    """Statically expand all macros into Cuboid and attach commands.

    Executes the program once (macro expansion depends on runtime state) and
    emits an equivalent macro-free program: executing the result reproduces
    the original leaf geometry exactly.
    """
    out = Program(copy.deepcopy(p.bbox), [copy.deepcopy(c) for c in p.cuboids],
                  [], [], {})
    expansion = _MacroExpansion()
    _run_program(p, None, [], None, "", expansion)
    sq_map = {id(sq): (a1, a2) for sq, a1, a2 in expansion.squeezes}
    for cmd in p.attaches:
        if isinstance(cmd, Squeeze):
            a1, a2 = sq_map[id(cmd)]
            out.attaches.append(_plain_attach(a1))
            out.attaches.append(_plain_attach(a2))
        else:
            out.attaches.append(copy.deepcopy(cmd))
    for decl, attaches, _ in expansion.clones:
        out.cuboids.append(CuboidDecl(decl.name, value(decl.l), value(decl.w),
                                      value(decl.h), decl.aligned, decl.line))
        out.attaches.extend(_plain_attach(a) for a in attaches)
    for name, child in p.children.items():
        out.children[name] = expand_program(child)
    # clones of a cuboid with a sub-program expand into the same sub-program
    for decl, _, origin in expansion.clones:
        if origin in p.children:
            out.children[decl.name] = expand_program(p.children[origin])
    return out


def _plain_attach(a: Attach) -> Attach:
    return Attach(a.c1, a.c2, *[value(getattr(a, f)) for f in
                                ("x1", "y1", "z1", "x2", "y2", "z2")], line=a.line)


# ---------------------------------------------------------------------------
# semantic validity
# ---------------------------------------------------------------------------

@dataclass
class Violation:
    rule: str
    message: str
    path: str = ""
    line: int = 0

    def __str__(self):
        where = f"{self.path or 'root'}" + (f":{self.line}" if self.line else "")
        return f"[{self.rule}] {where}: {self.message}"


def _check_block(p: Program, path: str, out: list[Violation]) -> None:
    def bad(rule, msg, line=0):
        out.append(Violation(rule, msg, path, line))

    bb = (p.bbox.l, p.bbox.w, p.bbox.h)
    for decl in [p.bbox, *p.cuboids]:
        for attr, hi in zip(("l", "w", "h"), bb):
            v = getattr(decl, attr)
            top = math.inf if decl is p.bbox else hi
            if v < MIN_DIM - 1e-9 or v > top + 1e-9:
                bad("dimension_range",
                    f"dimension {attr} of {decl.name} = {v:.4f} outside "
                    f"[{MIN_DIM}, {top:.4f}]", decl.line)
    if len(p.cuboids) > 10:
        bad("child_limit", f"{len(p.cuboids)} cuboids in one program (max 10)",
            p.cuboids[10].line)
    if "bbox" in p.children:
        bad("bbox_subprogram", "the bounding volume cannot have a sub-program")

    # expand squeezes so attach-level rules see the real attachments
    expanded: list[Attach] = []
    for cmd in p.attaches:
        if isinstance(cmd, Squeeze):
            for attr in ("u", "v"):
                v = getattr(cmd, attr)
                if v < -1e-9 or v > 1.0 + 1e-9:
                    bad("coordinate_range",
                        f"squeeze {attr} = {v:.4f} outside [0, 1]", cmd.line)
            expanded.extend(expand_squeeze(cmd))
        else:
            for attr in ("x1", "y1", "z1", "x2", "y2", "z2"):
                v = getattr(cmd, attr)
                if v < -1e-9 or v > 1.0 + 1e-9:
                    bad("coordinate_range",
                        f"attach {attr} = {v:.4f} outside [0, 1]", cmd.line)
            expanded.append(cmd)
    for s in p.symmetries:
        if isinstance(s, Translate):
            if s.d < -1e-9 or s.d > 1.0 + 1e-9:
                bad("coordinate_range", f"translate d = {s.d:.4f} outside [0, 1]",
                    s.line)
            if s.m < 1:
                bad("member_count", f"translate m = {s.m} (must be >= 1)", s.line)

    declared = set(p.declared())
    for a in expanded:
        for nm in (a.c1, a.c2):
            if nm not in declared:
                bad("undeclared", f"attach references unknown cuboid {nm!r}", a.line)
        if a.c1 == "bbox":
            bad("bbox_moved", "the bounding volume cannot be moved by an attach",
                a.line)
        if a.c2 == "bbox":
            y = min(max(a.y2, 0.0), 1.0)
            if not (y <= BBOX_FACE_TOL + 1e-9 or y >= 1.0 - BBOX_FACE_TOL - 1e-9):
                bad("bbox_face",
                    f"attach to the bounding volume at y = {y:.3f}; only the top "
                    f"or bottom faces are allowed (tolerance {BBOX_FACE_TOL})",
                    a.line)

    # one attachment per cuboid pair, except bbox top+bottom
    pair_records: dict[tuple[str, str], list[Attach]] = {}
    for a in expanded:
        if a.c1 == "bbox" or a.c1 not in declared or a.c2 not in declared:
            continue
        key = tuple(sorted((a.c1, a.c2)))
        pair_records.setdefault(key, []).append(a)
    for key, atts in sorted(pair_records.items()):
        if len(atts) == 1:
            continue
        if "bbox" in key and len(atts) == 2:
            sides = sorted(round(min(max(a.y2, 0.0), 1.0)) for a in atts)
            if sides == [0, 1]:
                continue
        bad("multi_attach",
            f"{key[0]} and {key[1]} attach at {len(atts)} locations (max one; "
            f"bounding-volume top+bottom excepted)", atts[1].line)

    # grounded attachment order
    grounded = {"bbox"}
    for a in expanded:
        if a.c1 not in declared or a.c2 not in declared or a.c1 == "bbox":
            continue
        if a.c2 not in grounded:
            bad("grounding", f"attach({a.c1}, {a.c2}) targets an ungrounded "
                             f"cuboid", a.line)
        grounded.add(a.c1)
    for s in p.symmetries:
        if s.c not in declared:
            bad("undeclared", f"symmetry references unknown cuboid {s.c!r}", s.line)
        elif s.c not in grounded:
            bad("symmetry_grounding",
                f"{'reflect' if isinstance(s, Reflect) else 'translate'}({s.c}) "
                f"targets an ungrounded cuboid", s.line)

    for name, child in p.children.items():
        if name != "bbox":
            _check_block(child, f"{path}{name}/" if path else f"{name}/", out)
        else:
            _check_block(child, f"{path}bbox/", out)


def check_semantics(p: Program, run_containment: bool = True) -> list[Violation]:
    """Report every violated validity rule; an empty list means fully valid.

    Range violations are repairable (execution clamps them with a warning);
    structural violations make execution fail.  Containment is checked by
    executing the program, when that is possible.
    """
    out: list[Violation] = []
    _check_block(p, "", out)
    if run_containment and not any(v.rule in ("grounding", "symmetry_grounding",
                                              "undeclared", "bbox_moved",
                                              "member_count") for v in out):
        try:
            shape = execute(p, mode="hier")
        except ExecutionError as e:  # pragma: no cover - static checks catch these
            out.append(Violation(e.rule, e.message))
        else:
            for w in shape.warnings:
                if "containment:" in w:
                    out.append(Violation("containment", w))
    return out

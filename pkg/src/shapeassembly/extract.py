"""Canonical program extraction from hierarchical part graphs.

Pipeline per shape: shorten interpenetrating leaf parts, rearrange the
hierarchy by per-category semantic rules, then recursively per node: detect
cuboid-to-cuboid attachments from dense volume point clouds, replace eligible
attachment pairs by squeezes, form reflectional/translational symmetry groups
(wrapping connected symmetric components into sub-programs first), pick a
canonical grounded command order, and emit one program.  Validation gates the
result on reconstruction F-score, single-component connectivity, bounding
volume containment and leaf-count complexity.

All detection runs in the node's local frame, where the node's own box is the
axis-aligned bounding volume centered at the origin.  The whole pipeline is
deterministic: identical input graphs give byte-identical program text.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .cloud import allocate_counts, default_f_threshold, f_score, sample_surface
from .errors import ContractError, ExtractionError, ShapeAssemblyError
from .geometry import (FACES, CuboidGeom, Mat3, RigidPose, Vec3, corners_np,
                       cuboid_np, face_axis, face_center, face_side,
                       opposite_face)
from .interp import execute, expand_squeeze
from .lang import (Attach, CuboidDecl, Program, Reflect, Squeeze, Translate,
                   program_stats)

AXIS_NAMES = ("X", "Y", "Z")


# ---------------------------------------------------------------------------
# part graphs
# ---------------------------------------------------------------------------

@dataclass
class PartGraphNode:
    """A part with an oriented bounding box; leaves carry real geometry."""

    id: str
    label: str
    geom: CuboidGeom
    children: list["PartGraphNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def leaves(self) -> list["PartGraphNode"]:
        return [n for n in self.walk() if n.is_leaf]


def quat_to_mat(q) -> Mat3:
    w, x, y, z = [float(v) for v in q]
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n < 1e-12:
        raise ContractError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return Mat3(Vec3(1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
                Vec3(2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
                Vec3(2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)))


def mat_to_quat(m: Mat3) -> tuple[float, float, float, float]:
    r = m.np()
    t = np.trace(r)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        return (0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s,
                (r[1, 0] - r[0, 1]) / s)
    i = int(np.argmax(np.diag(r)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = math.sqrt(max(1.0 + r[i, i] - r[j, j] - r[k, k], 0.0)) * 2
    q = [0.0, 0.0, 0.0, 0.0]
    q[0] = (r[k, j] - r[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (r[j, i] + r[i, j]) / s
    q[1 + k] = (r[k, i] + r[i, k]) / s
    return tuple(q)


def _box_from_json(box: dict) -> CuboidGeom:
    dims = box["dims"]  # syntax order (l, w, h) -> extents (x, z, y)
    return CuboidGeom(Vec3(float(dims[0]), float(dims[2]), float(dims[1])),
                      RigidPose(quat_to_mat(box["quat"]),
                                Vec3(*[float(v) for v in box["center"]])))


def _box_to_json(g: CuboidGeom) -> dict:
    d = g.dims.values()
    return {"dims": [d[0], d[2], d[1]],
            "center": list(g.center.values()),
            "quat": list(mat_to_quat(g.rot))}


def part_graph_from_dict(doc: dict) -> PartGraphNode:
    node = PartGraphNode(str(doc["id"]), str(doc["label"]), _box_from_json(doc["box"]))
    for ch in doc.get("children", []):
        node.children.append(part_graph_from_dict(ch))
    return node


def part_graph_to_dict(node: PartGraphNode) -> dict:
    return {"id": node.id, "label": node.label, "box": _box_to_json(node.geom),
            "children": [part_graph_to_dict(c) for c in node.children]}


def load_part_graph(path) -> PartGraphNode:
    with open(path, "r", encoding="utf-8") as fh:
        return part_graph_from_dict(json.load(fh))


def save_part_graph(path, node: PartGraphNode) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(part_graph_to_dict(node), fh, indent=2)


def part_graph_from_execution(shape, labels: dict[str, str],
                              root_label: str = "shape") -> PartGraphNode:
    """Build a part graph from an executed shape; hierarchy follows the
    program paths of the leaves.  ``labels`` maps the declared cuboid name a
    leaf stems from (see LeafCuboid.source) to a semantic label."""
    root_geom_pts = np.concatenate([corners_np(lf.geom) for lf in shape.leaves])
    lo, hi = root_geom_pts.min(axis=0), root_geom_pts.max(axis=0)
    root = PartGraphNode("root", root_label,
                         CuboidGeom(Vec3(*(hi - lo)),
                                    RigidPose(Mat3.identity(), Vec3(*(lo + hi) / 2.0))))
    groups: dict[tuple[str, ...], PartGraphNode] = {(): root}

    def base_name(name: str) -> str:
        return re.sub(r"_(?:ref|t\d+)\d*$", "", name)

    def group_for(path: tuple[str, ...]) -> PartGraphNode:
        if path in groups:
            return groups[path]
        parent = group_for(path[:-1])
        name = path[-1]
        geom = shape.internal_geoms.get("/".join(path))
        base = base_name(name)
        node = PartGraphNode("/".join(path), labels.get(base, base), geom)
        parent.children.append(node)
        groups[path] = node
        return node

    for i, lf in enumerate(shape.leaves):
        parent = group_for(lf.program_path)
        parent.children.append(
            PartGraphNode(f"leaf{i}", labels.get(lf.source, lf.source), lf.geom))
    return root


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_label_rules(category: str) -> dict:
    data = resources.files("shapeassembly.data").joinpath("label_rules.json")
    rules = json.loads(data.read_text(encoding="utf-8"))
    return rules.get(category, rules["default"])


@dataclass
class ExtractionConfig:
    category: str = "default"
    fscore_min: float = 75.0
    max_leaf_cuboids: int = 12
    align_angle_tol_deg: float = 5.0
    face_snap: float = 0.1           # local units: snap to face centers
    squeeze_tol: float = 0.05
    sym_tol_fraction: float = 0.02   # of the parent diagonal
    order_cap: int = 64
    coarse_grid: int = 20
    fine_grid: int = 50
    bbox_band: float = 0.05
    samples: int = 4096
    seed: int = 0
    rules: dict | None = None

    def label_rules(self) -> dict:
        return self.rules if self.rules is not None else load_label_rules(self.category)


# ---------------------------------------------------------------------------
# regularization: part shortening
# ---------------------------------------------------------------------------

def _ray_box_exit(p: np.ndarray, d: np.ndarray, box: CuboidGeom) -> float:
    """Length of travel from an interior point p along unit d until leaving box."""
    ctr, rot, dims = cuboid_np(box)
    pl = (p - ctr) @ rot
    dl = d @ rot
    t = math.inf
    for i in range(3):
        if abs(dl[i]) < 1e-12:
            continue
        for bound in (-dims[i] / 2.0, dims[i] / 2.0):
            ti = (bound - pl[i]) / dl[i]
            if ti > 1e-12:
                t = min(t, ti)
    return t


def _face_corners(g: CuboidGeom, face: str) -> np.ndarray:
    axis, side = face_axis(face), face_side(face)
    uvw = []
    for a in (0.0, 1.0):
        for b in (0.0, 1.0):
            q = [a, b]
            q.insert(axis, float(side))
            uvw.append(q)
    ctr, rot, dims = cuboid_np(g)
    return ctr + ((np.array(uvw) - 0.5) * dims) @ rot.T


def _inside(pts: np.ndarray, g: CuboidGeom, slack: float = 1e-9) -> np.ndarray:
    ctr, rot, dims = cuboid_np(g)
    local = np.abs((pts - ctr) @ rot)
    return (local <= dims / 2.0 + slack).all(axis=-1)


def shorten_parts(g: PartGraphNode) -> PartGraphNode:
    """Pull back any leaf face fully contained in another leaf until flush.

    Only removes hidden geometry: the retracted slab stays inside the covering
    cuboid, so visible (non-intersecting) surfaces are unchanged.  Dimensions
    never increase.
    """
    out = _copy_graph(g)
    leaves = out.leaves()
    for leaf in leaves:
        for face in FACES:
            pts = _face_corners(leaf.geom, face)
            axis, side = face_axis(face), face_side(face)
            inward = -leaf.geom.rot.np()[:, axis] * (1.0 if side == 1 else -1.0)
            pull = math.inf
            for other in leaves:
                if other is leaf:
                    continue
                if _inside(pts, other.geom).all():
                    t = min(_ray_box_exit(p, inward, other.geom) for p in pts)
                    pull = min(pull, t)
            if not math.isfinite(pull) or pull <= 1e-9:
                continue
            dims = list(leaf.geom.dims.values())
            pull = min(pull, dims[axis] - 0.011)  # never collapse a part
            if pull <= 0:
                continue
            dims[axis] -= pull
            ctr = leaf.geom.center.np() + inward * (pull / 2.0)
            leaf.geom = CuboidGeom(Vec3(*dims),
                                   RigidPose(leaf.geom.rot, Vec3(*ctr)),
                                   leaf.geom.aligned)
    return out


def _copy_graph(n: PartGraphNode) -> PartGraphNode:
    return PartGraphNode(n.id, n.label, n.geom, [_copy_graph(c) for c in n.children])


# ---------------------------------------------------------------------------
# regularization: semantic hierarchy arrangement
# ---------------------------------------------------------------------------

def flatten_hierarchy(g: PartGraphNode, rules: dict | None) -> PartGraphNode:
    """Apply per-category collapse / flatten / move label rules."""
    rules = rules or {}
    collapse = set(rules.get("collapse", []))
    flatten = set(rules.get("flatten", []))
    move = dict(rules.get("move", {}))
    out = _copy_graph(g)

    for node in out.walk():
        if node.label in collapse and node.children:
            node.children = []

    changed = True
    while changed:
        changed = False
        for node in out.walk():
            new_children: list[PartGraphNode] = []
            for c in node.children:
                if c.label in flatten and c.children:
                    new_children.extend(c.children)
                    changed = True
                else:
                    new_children.append(c)
            node.children = new_children

    if move:
        for node in out.walk():
            targets = {}
            for c in node.children:
                if c.label not in targets and c.children is not None:
                    targets[c.label] = c
            moved = []
            for c in list(node.children):
                dst_label = move.get(c.label)
                if dst_label and dst_label in targets and targets[dst_label] is not c:
                    node.children.remove(c)
                    targets[dst_label].children.append(c)
                    moved.append(c)
    return out


# ---------------------------------------------------------------------------
# attachment detection
# ---------------------------------------------------------------------------

@dataclass
class AttachmentRecord:
    a: str
    b: str                          # partner id, or "bbox"
    local_a: tuple[float, float, float]
    local_b: tuple[float, float, float]
    face_to_face: bool
    bbox_face: str = "none"         # none | top | bot
    point: tuple[float, float, float] = (0.0, 0.0, 0.0)  # node-frame contact

    def endpoints(self) -> tuple[str, str]:
        return (self.a, self.b)

    def local_of(self, name: str) -> tuple[float, float, float]:
        return self.local_a if name == self.a else self.local_b


def _volume_cloud(g: CuboidGeom, k: int) -> np.ndarray:
    t = (np.arange(k) + 0.5) / k
    u, v, w = np.meshgrid(t, t, t, indexing="ij")
    locs = np.stack([u.ravel(), v.ravel(), w.ravel()], axis=1) - 0.5
    ctr, rot, dims = cuboid_np(g)
    return ctr + (locs * dims) @ rot.T


def _locals_of(pts: np.ndarray, g: CuboidGeom) -> np.ndarray:
    ctr, rot, dims = cuboid_np(g)
    return ((pts - ctr) @ rot) / dims + 0.5


def _snap_local(q: np.ndarray, dims: np.ndarray, face_tol_abs: float,
                center_snap: float) -> np.ndarray:
    """Put the record onto the contact face: snap the axis nearest to a face
    (the contact normal) when within tolerance, then snap near-center face
    points to the exact face center."""
    q = np.clip(np.asarray(q, dtype=np.float64), 0.0, 1.0).copy()
    face_dist = np.minimum(q, 1.0 - q) * np.asarray(dims, dtype=np.float64)
    axis = int(np.argmin(face_dist))
    if face_dist[axis] <= face_tol_abs:
        q[axis] = 0.0 if q[axis] < 0.5 else 1.0
        free = [i for i in range(3) if i != axis]
        if math.sqrt(sum((q[i] - 0.5) ** 2 for i in free)) <= center_snap:
            for i in free:
                q[i] = 0.5
    return q


def detect_attachments(siblings: list[tuple[str, CuboidGeom]], bbox: CuboidGeom,
                       cfg: ExtractionConfig) -> list[AttachmentRecord]:
    """Locate pairwise contacts plus bounding-volume top/bottom contacts.

    Per pair: coarse 20^3 volume clouds intersect when any cross-cloud pair of
    points is within a threshold of max-extent-of-larger/20; a 50^3 grid in
    the intersection bounds, filtered to points inside both cuboids, yields
    the candidate attachment points.  Face-to-face candidates are preferred;
    otherwise the record sits at the candidate mean.
    """
    from scipy.spatial import cKDTree

    clouds = {name: _volume_cloud(geom, cfg.coarse_grid) for name, geom in siblings}
    trees = {name: cKDTree(c) for name, c in clouds.items()}
    geoms = dict(siblings)
    records: list[AttachmentRecord] = []

    for (na, ga), (nb, gb) in itertools.combinations(siblings, 2):
        thr = max(max(ga.dims.values()), max(gb.dims.values())) / cfg.coarse_grid
        da, _ = trees[nb].query(clouds[na], k=1)
        mask_a = da <= thr
        if not mask_a.any():
            continue
        db, _ = trees[na].query(clouds[nb], k=1)
        mask_b = db <= thr
        seed_pts = np.concatenate([clouds[na][mask_a], clouds[nb][mask_b]])
        # pad out the coarse-grid quantization so the inside-both filter sees
        # the full contact region (keeps candidate means centered on it)
        lo, hi = seed_pts.min(axis=0) - thr, seed_pts.max(axis=0) + thr
        span = np.maximum(hi - lo, 1e-9)
        t = (np.arange(cfg.fine_grid) + 0.5) / cfg.fine_grid
        gx, gy, gz = np.meshgrid(*[lo[i] + t * span[i] for i in range(3)], indexing="ij")
        cand = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

        # keep points inside both cuboids; the slack bridges flush contacts
        # without reaching far outside thin parts
        slack = thr / 4.0
        qa = _locals_of(cand, ga)
        qb = _locals_of(cand, gb)
        tol_a = slack / ga.dims.np()
        tol_b = slack / gb.dims.np()
        keep = ((np.abs(qa - 0.5) <= 0.5 + tol_a).all(axis=1)
                & (np.abs(qb - 0.5) <= 0.5 + tol_b).all(axis=1))
        if not keep.any():
            continue
        qa, qb, cand = qa[keep], qb[keep], cand[keep]

        face_tol = thr / 2.0
        dist_face_a = (np.minimum(np.abs(qa), np.abs(qa - 1.0)) * ga.dims.np()).min(axis=1)
        dist_face_b = (np.minimum(np.abs(qb), np.abs(qb - 1.0)) * gb.dims.np()).min(axis=1)
        f2f = (dist_face_a <= face_tol) & (dist_face_b <= face_tol)
        # a surface-contact patch has most candidates on faces of both parts;
        # a volume overlap only grazes faces along its edges
        is_f2f = f2f.sum() >= 0.5 * len(cand)
        chosen = f2f if is_f2f else np.ones(len(cand), dtype=bool)
        pt = cand[chosen].mean(axis=0)
        tol = face_tol if is_f2f else 0.0
        la = _snap_local(_locals_of(pt[None], ga)[0], ga.dims.np(), tol, cfg.face_snap)
        lb = _snap_local(_locals_of(pt[None], gb)[0], gb.dims.np(), tol, cfg.face_snap)
        records.append(AttachmentRecord(na, nb, tuple(la), tuple(lb),
                                        is_f2f, point=tuple(pt)))

    # bounding-volume top/bottom contacts
    bdims = bbox.dims.np()
    bh = bdims[1]
    for name, geom in siblings:
        thr = max(max(geom.dims.values()), float(bdims.max())) / cfg.coarse_grid
        ys = clouds[name][:, 1] / bh + 0.5
        for face, mask in (("bot", ys <= cfg.bbox_band),
                           ("top", ys >= 1.0 - cfg.bbox_band)):
            if not mask.any():
                continue
            mean = clouds[name][mask].mean(axis=0)
            mean[1] = -bh / 2.0 if face == "bot" else bh / 2.0  # contact plane
            lc = _snap_local(_locals_of(mean[None], geom)[0], geom.dims.np(),
                             thr / 2.0, cfg.face_snap)
            lb = np.clip(_locals_of(mean[None], bbox)[0], 0.0, 1.0)
            lb[1] = 0.0 if face == "bot" else 1.0
            if math.sqrt((lb[0] - 0.5) ** 2 + (lb[2] - 0.5) ** 2) <= cfg.face_snap:
                lb[0] = lb[2] = 0.5
            records.append(AttachmentRecord(name, "bbox", tuple(lc), tuple(lb),
                                            True, bbox_face=face, point=tuple(mean)))
    return records


# ---------------------------------------------------------------------------
# squeeze detection
# ---------------------------------------------------------------------------

def detect_squeezes(records: list[AttachmentRecord],
                    geoms: dict[str, CuboidGeom],
                    cfg: ExtractionConfig) -> tuple[list[Squeeze], list[AttachmentRecord]]:
    """Replace pairs of opposite-face, face-centered attachments by squeezes.

    A candidate squeeze is adopted only if its macro expansion re-derives the
    two source records within tolerance, which guarantees the replacement is
    faithful.
    """
    by_cuboid: dict[str, list[AttachmentRecord]] = {}
    for r in records:
        by_cuboid.setdefault(r.a, []).append(r)
        if r.b != "bbox":
            by_cuboid.setdefault(r.b, []).append(r)

    squeezes: list[Squeeze] = []
    consumed: set[int] = set()
    tol = cfg.squeeze_tol
    for name in sorted(geoms):
        recs = by_cuboid.get(name, [])
        if len(recs) != 2 or any(id(r) in consumed for r in recs):
            continue
        r1, r2 = recs
        partners = []
        ok = True
        for r in (r1, r2):
            other = r.b if r.a == name else r.a
            partners.append(other)
            mine = np.array(r.local_of(name))
            faces = [i for i in range(3) if mine[i] in (0.0, 1.0)]
            if len(faces) != 1:
                ok = False
        if not ok:
            continue

        for first, second in ((r1, r2), (r2, r1)):
            mine1 = np.array(first.local_of(name))
            axis = [i for i in range(3) if mine1[i] in (0.0, 1.0)][0]
            side = int(mine1[axis])
            face = {(0, 1): "right", (0, 0): "left", (1, 1): "top",
                    (1, 0): "bot", (2, 1): "front", (2, 0): "back"}[(axis, side)]
            p2 = first.b if first.a == name else first.a
            p3 = second.b if second.a == name else second.a
            other2 = np.array(first.local_of(p2) if p2 != "bbox" else first.local_b)
            other3 = np.array(second.local_of(p3) if p3 != "bbox" else second.local_b)
            # (u, v) from the partner face coordinates, averaged
            ax2 = face_axis(opposite_face(face))
            free = [i for i in range(3) if i != ax2]
            uv2 = other2[free]
            uv3 = other3[free]
            if np.abs(uv2 - uv3).max() > tol:
                continue
            u, v = (uv2 + uv3) / 2.0
            sq = Squeeze(name, p2, p3, face, float(u), float(v))
            a1, a2 = expand_squeeze(sq)
            got = [np.array([a1.x1, a1.y1, a1.z1]), np.array([a1.x2, a1.y2, a1.z2]),
                   np.array([a2.x1, a2.y1, a2.z1]), np.array([a2.x2, a2.y2, a2.z2])]
            want = [np.array(first.local_of(name)), other2,
                    np.array(second.local_of(name)), other3]
            if max(np.abs(g - w).max() for g, w in zip(got, want)) <= tol:
                squeezes.append(sq)
                consumed.add(id(first))
                consumed.add(id(second))
                break

    remaining = [r for r in records if id(r) not in consumed]
    return squeezes, remaining


# ---------------------------------------------------------------------------
# symmetry detection
# ---------------------------------------------------------------------------

@dataclass
class SymmetryGroup:
    kind: str                        # reflect | translate
    axis: str                        # X | Y | Z
    representative: str
    members: list[str]               # deleted members, in order
    m: int = 0
    d: float = 0.0


def _mirror_pts(pts: np.ndarray, axis: int) -> np.ndarray:
    out = pts.copy()
    out[:, axis] = -out[:, axis]
    return out


def _point_sets_match(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    if len(a) != len(b):
        return False
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    # greedy bijection is enough at these tolerances
    used = set()
    for i in range(len(a)):
        j = int(np.argmin([d[i, k] if k not in used else math.inf
                           for k in range(len(b))]))
        if d[i, j] > tol:
            return False
        used.add(j)
    return True


def _partner_key(name: str, records: list[AttachmentRecord]) -> tuple:
    ps = []
    for r in records:
        if r.a == name:
            ps.append(r.b)
        elif r.b == name:
            ps.append(r.a)
    return tuple(sorted(ps))


def _record_points(name: str, records: list[AttachmentRecord]) -> dict[str, np.ndarray]:
    out: dict[str, list] = {}
    for r in records:
        if name in (r.a, r.b):
            other = r.b if r.a == name else r.a
            out.setdefault(other, []).append(r.point)
    return {k: np.array(v) for k, v in out.items()}


def detect_symmetries(siblings: list[tuple[str, CuboidGeom]],
                      records: list[AttachmentRecord],
                      bbox: CuboidGeom, cfg: ExtractionConfig,
                      protected: set[str] = frozenset()) -> list[SymmetryGroup]:
    """Maximal groups of siblings that connect to the same cuboids, map onto
    each other under a reflection/translation about a bounding-volume axis,
    and whose attachment points share the same relationship."""
    geoms = dict(siblings)
    names = [n for n, _ in siblings]
    tol = cfg.sym_tol_fraction * bbox.diagonal()
    partner_keys = {n: _partner_key(n, records) for n in names}
    rec_pts = {n: _record_points(n, records) for n in names}
    corner_sets = {n: corners_np(geoms[n]) for n in names}
    used: set[str] = set()
    groups: list[SymmetryGroup] = []

    def attach_points_match(a: str, b: str, transform) -> bool:
        pa, pb = rec_pts[a], rec_pts[b]
        if sorted(pa) != sorted(pb):
            return False
        return all(_point_sets_match(transform(pa[p]), pb[p], tol) for p in pa)

    # translational runs first (they save more commands)
    by_sig: dict[tuple, list[str]] = {}
    for n in names:
        sig = (geoms[n].aligned, partner_keys[n],
               tuple(np.round(sorted(geoms[n].dims.values()), 4)))
        by_sig.setdefault(sig, []).append(n)
    for sig in sorted(by_sig, key=str):
        group = [n for n in by_sig[sig] if n not in used]
        if len(group) < 2 or any(partner in group for partner in sig[1]):
            continue
        for axis in range(3):
            cand = sorted(group, key=lambda n: (geoms[n].center.values()[axis], n))
            centers = np.array([geoms[n].center.values() for n in cand])
            offs = centers - centers[0]
            off_axis = offs[:, axis]
            lateral = np.delete(offs, axis, axis=1)
            if np.abs(lateral).max() > tol or off_axis[-1] <= tol:
                continue
            step = off_axis[-1] / (len(cand) - 1)
            if np.abs(off_axis - step * np.arange(len(cand))).max() > tol:
                continue
            okay = True
            base = corner_sets[cand[0]]
            for i, n in enumerate(cand):
                delta = np.zeros(3)
                delta[axis] = step * i
                if not _point_sets_match(base + delta, corner_sets[n], tol):
                    okay = False
                    break
                if not attach_points_match(cand[0], n, lambda pts, d=delta: pts + d):
                    okay = False
                    break
            if not okay:
                continue
            if any(n in protected for n in cand[1:]):
                continue
            extent = bbox.dims.values()[axis]
            d = min(off_axis[-1] / extent, 1.0)
            groups.append(SymmetryGroup("translate", AXIS_NAMES[axis], cand[0],
                                        cand[1:], m=len(cand) - 1, d=float(d)))
            used.update(cand)
            break

    # reflection pairs
    for a, b in itertools.combinations(names, 2):
        if a in used or b in used:
            continue
        if partner_keys[a] != partner_keys[b] or b in partner_keys[a]:
            continue
        if geoms[a].aligned != geoms[b].aligned:
            continue
        for axis in range(3):
            mirrored = _mirror_pts(corner_sets[a] - bbox.center.np(), axis) + bbox.center.np()
            if not _point_sets_match(mirrored, corner_sets[b], tol):
                continue
            ctr = bbox.center.np()
            if not attach_points_match(
                    a, b, lambda pts, ax=axis: _mirror_pts(pts - ctr, ax) + ctr):
                continue
            if b in protected:
                continue
            rep, other = (a, b)
            groups.append(SymmetryGroup("reflect", AXIS_NAMES[axis], rep, [other]))
            used.update((a, b))
            break
    return groups


# ---------------------------------------------------------------------------
# connected-component symmetry sub-programs
# ---------------------------------------------------------------------------

def _components(names: list[str], records: list[AttachmentRecord]) -> list[list[str]]:
    adj: dict[str, set[str]] = {n: set() for n in names}
    for r in records:
        if r.b != "bbox" and r.a in adj and r.b in adj:
            adj[r.a].add(r.b)
            adj[r.b].add(r.a)
    seen: set[str] = set()
    comps = []
    for n in names:
        if n in seen:
            continue
        comp = []
        stack = [n]
        seen.add(n)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in sorted(adj[u]):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def wrap_symmetric_components(children: list[PartGraphNode],
                              geoms: dict[str, CuboidGeom],
                              records: list[AttachmentRecord],
                              bbox: CuboidGeom, cfg: ExtractionConfig
                              ) -> list[PartGraphNode] | None:
    """Wrap connected multi-part components that mirror each other into new
    internal nodes (symmetry sub-programs).  Returns the new child list, or
    None when nothing was wrapped."""
    by_id = {c.id: c for c in children}
    names = [c.id for c in children]
    comps = [c for c in _components(names, records) if len(c) >= 2]
    if len(comps) < 2:
        return None
    tol = cfg.sym_tol_fraction * bbox.diagonal()
    ctr = bbox.center.np()

    def comp_corners(comp):
        return np.concatenate([corners_np(geoms[n]) for n in comp])

    def external_partners(comp):
        out = set()
        for r in records:
            for me, other in ((r.a, r.b), (r.b, r.a)):
                if me in comp and other not in comp:
                    out.add(other)
        return tuple(sorted(out))

    matched: list[tuple[list[str], list[str], int]] = []
    used: set[str] = set()
    for ca, cb in itertools.combinations(comps, 2):
        if used.intersection(ca) or used.intersection(cb):
            continue
        if len(ca) != len(cb):
            continue
        if sorted(by_id[n].label for n in ca) != sorted(by_id[n].label for n in cb):
            continue
        if external_partners(ca) != external_partners(cb):
            continue
        for axis in range(3):
            mirrored = _mirror_pts(comp_corners(ca) - ctr, axis) + ctr
            if _point_sets_match(mirrored, comp_corners(cb), tol):
                matched.append((ca, cb, axis))
                used.update(ca)
                used.update(cb)
                break
    if not matched:
        return None

    wrapped: dict[str, PartGraphNode] = {}
    consumed: set[str] = set()
    for idx, (ca, cb, _axis) in enumerate(matched):
        for comp in (ca, cb):
            pts = comp_corners(comp)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            label = sorted(by_id[n].label for n in comp)[0] + "_assembly"
            node = PartGraphNode(f"group_{idx}_{comp[0]}", label,
                                 CuboidGeom(Vec3(*(hi - lo)),
                                            RigidPose(Mat3.identity(),
                                                      Vec3(*(lo + hi) / 2.0))),
                                 [by_id[n] for n in comp])
            wrapped[comp[0]] = node
            consumed.update(comp)

    out: list[PartGraphNode] = []
    for c in children:
        if c.id in wrapped:
            out.append(wrapped[c.id])
        elif c.id not in consumed:
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# canonical ordering
# ---------------------------------------------------------------------------

@dataclass
class _Unit:
    kind: str                  # attach | squeeze
    record: AttachmentRecord | None
    squeeze: Squeeze | None

    def parties(self) -> tuple[str, ...]:
        if self.kind == "attach":
            return self.record.endpoints()
        return (self.squeeze.c1, self.squeeze.c2, self.squeeze.c3)


def _label_priority(label: str, priority: list[str]) -> tuple:
    base = label.lower()
    if base in priority:
        return (0, priority.index(base), "")
    return (1, 0, base)


def canonical_names(children: list[PartGraphNode], priority: list[str]) -> dict[str, str]:
    """Stable cuboid naming: sort by semantic label priority, then centroid."""
    def key(c: PartGraphNode):
        ctr = tuple(round(v, 9) for v in c.geom.center.values())
        return (_label_priority(c.label, priority), ctr, c.id)

    ordered = sorted(children, key=key)
    return {c.id: f"cube{i}" for i, c in enumerate(ordered)}


def _grounded_orders(units: list[_Unit], names: dict[str, str],
                     aligned: dict[str, bool],
                     cap: int) -> list[list[tuple[_Unit, str]]]:
    """Enumerate grounded orders (unit, mover) up to the cap, heuristically
    best first: semantic order of participants, then attachments from
    non-aligned onto aligned cuboids, then face-center sources."""
    idx = {n: int(names[n][4:]) if names[n].startswith("cube") else -1 for n in names}
    idx["bbox"] = -1

    def mover_of(u: _Unit, grounded: set[str], counts: dict[str, int]) -> str | None:
        if u.kind == "squeeze":
            sq = u.squeeze
            if sq.c2 in grounded and sq.c3 in grounded and sq.c1 != "bbox":
                return sq.c1
            return None
        a, b = u.record.endpoints()
        if b == "bbox":
            return a if "bbox" in grounded else None
        ga, gb = a in grounded, b in grounded
        if not (ga or gb):
            return None
        if ga and not gb:
            return b
        if gb and not ga:
            return a
        # cycle closure: both grounded; move the less-attached, later-named one
        ka, kb = counts.get(a, 0), counts.get(b, 0)
        if ka != kb:
            return a if ka < kb else b
        return a if idx[a] > idx[b] else b

    def unit_key(u: _Unit, mover: str):
        parties = sorted(idx[p] for p in u.parties())
        partner = next((p for p in u.parties() if p != mover), "bbox")
        nonaligned_to_aligned = int(not (not aligned.get(mover, False)
                                         and aligned.get(partner, True)))
        src = u.record.local_of(mover) if u.kind == "attach" else face_center(u.squeeze.face)
        at_center = int(not all(abs(c - 0.5) < 1e-6 or c in (0.0, 1.0) for c in src))
        return (parties, nonaligned_to_aligned, at_center, u.kind, idx[mover])

    orders: list[list[tuple[_Unit, str]]] = []

    def dfs(grounded: set[str], remaining: list[_Unit],
            acc: list[tuple[_Unit, str]], counts: dict[str, int]):
        if len(orders) >= cap:
            return
        if not remaining:
            orders.append(list(acc))
            return
        frontier = []
        for u in remaining:
            mover = mover_of(u, grounded, counts)
            if mover is not None:
                frontier.append((unit_key(u, mover), u, mover))
        if not frontier:
            return
        frontier.sort(key=lambda t: t[0])
        for _, u, mover in frontier:
            counts2 = dict(counts)
            counts2[mover] = counts2.get(mover, 0) + 1
            dfs(grounded | {mover}, [x for x in remaining if x is not u],
                acc + [(u, mover)], counts2)
            if len(orders) >= cap:
                return

    dfs({"bbox"}, list(units), [], {})
    return orders


# ---------------------------------------------------------------------------
# per-node extraction
# ---------------------------------------------------------------------------

def _to_local(parent: CuboidGeom, g: CuboidGeom) -> CuboidGeom:
    rel_rot = parent.rot.transpose().mat(g.rot)
    rel_ctr = parent.rot.tvec(g.center - parent.center)
    return CuboidGeom(g.dims, RigidPose(rel_rot, rel_ctr), g.aligned)


def _is_aligned(g: CuboidGeom, tol_deg: float) -> bool:
    r = g.rot.np()
    # orientation matches the parent frame when some axis permutation of the
    # rotation is within tolerance of the identity; compare via max column
    # deviation from signed unit axes
    cosang = (np.trace(r) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, cosang)))) <= tol_deg


def _extract_node(node: PartGraphNode, cfg: ExtractionConfig) -> Program:
    priority = cfg.label_rules().get("priority", [])
    bbox_local = CuboidGeom(node.geom.dims, RigidPose.identity(), True)

    children = [PartGraphNode(c.id, c.label, _to_local(node.geom, c.geom), c.children)
                for c in node.children]
    if not children:
        # a bare leaf becomes one full-size cuboid resting on the floor
        decl = CuboidDecl("cube0", node.geom.dims.x, node.geom.dims.z,
                          node.geom.dims.y, True)
        prog = Program(CuboidDecl("bbox", node.geom.dims.x, node.geom.dims.z,
                                  node.geom.dims.y, True), [decl],
                       [Attach("cube0", "bbox", 0.5, 0.0, 0.5, 0.5, 0.0, 0.5)], [], {})
        return prog

    # wrap mirrored connected components into sub-program nodes
    while True:
        sib_geoms = [(c.id, c.geom) for c in children]
        records = detect_attachments(sib_geoms, bbox_local, cfg)
        leaf_children = [c for c in children if c.is_leaf]
        if len(leaf_children) != len(children):
            break  # mixed levels: wrap only flat sibling sets
        new_children = wrap_symmetric_components(children, dict(sib_geoms),
                                                 records, bbox_local, cfg)
        if new_children is None:
            break
        children = new_children

    for c in children:
        c.geom = CuboidGeom(c.geom.dims, c.geom.pose,
                            _is_aligned(c.geom, cfg.align_angle_tol_deg))

    sib_geoms = [(c.id, c.geom) for c in children]
    geoms = dict(sib_geoms)
    records = detect_attachments(sib_geoms, bbox_local, cfg)
    squeezes, remaining = detect_squeezes(records, geoms, cfg)

    squeeze_partners = {p for sq in squeezes for p in (sq.c2, sq.c3) if p != "bbox"}
    groups = detect_symmetries(sib_geoms, records, bbox_local, cfg,
                               protected=squeeze_partners)

    deleted = {m for g in groups for m in g.members}
    survivors = [c for c in children if c.id not in deleted]
    names = canonical_names(survivors, priority)

    units: list[_Unit] = []
    for sq in squeezes:
        if sq.c1 in deleted:
            continue
        units.append(_Unit("squeeze", None, sq))
    for r in remaining:
        if r.a in deleted or r.b in deleted:
            continue
        units.append(_Unit("attach", r, None))
    # deduplicate repeated bbox contacts for one cuboid+face
    seen_keys = set()
    uniq_units = []
    for u in units:
        key = (u.kind, u.parties(),
               u.record.bbox_face if u.record is not None else u.squeeze.face)
        if key in seen_keys:
            continue
        seen_keys.add(key)
        uniq_units.append(u)
    units = uniq_units

    aligned = {c.id: c.geom.aligned for c in survivors}
    aligned["bbox"] = True
    orders = _grounded_orders(units, names, aligned, cfg.order_cap)
    if not orders:
        raise ExtractionError(
            f"node {node.id!r}: no grounded attachment order connects every "
            f"part to the bounding volume")

    def name_of(n: str) -> str:
        return "bbox" if n == "bbox" else names[n]

    def materialize(order) -> Program:
        prog = Program(CuboidDecl("bbox", node.geom.dims.x, node.geom.dims.z,
                                  node.geom.dims.y, True))
        for c in sorted(survivors, key=lambda c: int(names[c.id][4:])):
            g = c.geom
            prog.cuboids.append(CuboidDecl(names[c.id], g.dims.x, g.dims.z,
                                           g.dims.y, g.aligned))
        for u, mover in order:
            if u.kind == "squeeze":
                sq = u.squeeze
                prog.attaches.append(Squeeze(name_of(sq.c1), name_of(sq.c2),
                                             name_of(sq.c3), sq.face, sq.u, sq.v))
            else:
                r = u.record
                partner = r.b if mover == r.a else r.a
                lm, lp = r.local_of(mover), r.local_of(partner)
                prog.attaches.append(Attach(
                    name_of(mover), name_of(partner),
                    lm[0], lm[1], lm[2], lp[0], lp[1], lp[2]))
        return prog

    def sym_key(g: SymmetryGroup):
        c = next(c for c in survivors if c.id == g.representative)
        return (_label_priority(c.label, priority),
                tuple(round(v, 9) for v in c.geom.center.values()), c.id)

    best = materialize(orders[0])
    if len(orders) > 1:
        gt = _surface_samples([(c.id, c.geom) for c in children], cfg)
        scored = []
        for i, order in enumerate(orders):
            cand = materialize(order)
            try:
                shape = execute(cand, mode="flat")
                score = f_score(_shape_samples(shape, cfg), gt,
                                default_f_threshold(gt))
            except ShapeAssemblyError:
                score = -1.0
            scored.append((-round(score, 6), i))
        scored.sort()
        best = materialize(orders[scored[0][1]])

    for g in sorted(groups, key=sym_key):
        if g.kind == "reflect":
            best.symmetries.append(Reflect(names[g.representative], g.axis))
        else:
            best.symmetries.append(Translate(names[g.representative], g.axis,
                                             g.m, g.d))

    for c in sorted(survivors, key=lambda c: int(names[c.id][4:])):
        if not c.is_leaf:
            best.children[names[c.id]] = _extract_node(c, cfg)
    return best


def _surface_samples(sib_geoms: list[tuple[str, CuboidGeom]],
                     cfg: ExtractionConfig) -> np.ndarray:
    geoms = [g for _, g in sib_geoms]
    return sample_cuboids(geoms, cfg.samples, cfg.seed)


def _shape_samples(shape, cfg: ExtractionConfig) -> np.ndarray:
    return sample_cuboids(shape.leaf_geoms(), cfg.samples, cfg.seed)


def sample_cuboids(geoms: list[CuboidGeom], n: int, seed: int) -> np.ndarray:
    """Surface samples over a set of cuboids, allocated by surface area."""
    if not geoms:
        raise ContractError("no cuboids to sample")
    areas = []
    for g in geoms:
        d = g.dims.values()
        areas.append(2.0 * (d[0] * d[1] + d[1] * d[2] + d[0] * d[2]))
    counts = allocate_counts(np.array(areas), max(n, 6 * len(geoms)))
    pts = []
    for i, (g, cnt) in enumerate(zip(geoms, counts)):
        if cnt < 6:
            cnt = 6
        pts.append(sample_surface(g, int(cnt), seed=seed + i).points)
    return np.concatenate(pts)


def extract_program(g: PartGraphNode, cfg: ExtractionConfig | None = None) -> Program:
    """Full pipeline: shorten, flatten, then recursive per-node extraction."""
    cfg = cfg or ExtractionConfig()
    g1 = shorten_parts(g)
    g2 = flatten_hierarchy(g1, cfg.label_rules())
    return _extract_node(g2, cfg)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    fscore: float
    components: int
    leaf_count: int
    out_of_bounds: bool
    passed: bool
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"fscore": self.fscore, "components": self.components,
                "leaf_count": self.leaf_count, "out_of_bounds": self.out_of_bounds,
                "pass": self.passed, "reasons": self.reasons}


def _program_components(p: Program) -> int:
    """Connected components of the per-program attachment graph (worst node)."""
    nodes = ["bbox"] + [c.name for c in p.cuboids]
    adj = {n: set() for n in nodes}
    for a in p.attaches:
        if isinstance(a, Squeeze):
            pairs = [(a.c1, a.c2), (a.c1, a.c3)]
        else:
            pairs = [(a.c1, a.c2)]
        for x, y in pairs:
            if x in adj and y in adj:
                adj[x].add(y)
                adj[y].add(x)
    seen = set()
    comps = 0
    for n in nodes:
        if n in seen:
            continue
        comps += 1
        stack = [n]
        seen.add(n)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    worst = comps
    for child in p.children.values():
        worst = max(worst, _program_components(child))
    return worst


def validate_program(p: Program, g: PartGraphNode,
                     cfg: ExtractionConfig | None = None) -> ValidationReport:
    """Gate an extracted program: reconstruction F-score >= threshold, single
    connected component, geometry within the bounding volume (10% slack), and
    at most the configured number of leaf cuboid declarations."""
    cfg = cfg or ExtractionConfig()
    reasons = []
    leaf_count = program_stats(p).leaf_cuboid_count
    if leaf_count > cfg.max_leaf_cuboids:
        reasons.append("complexity")

    components = _program_components(p)
    if components > 1:
        reasons.append("components")

    fscore = 0.0
    oob = False
    try:
        shape = execute(p, mode="hier")
    except ShapeAssemblyError:
        reasons.append("execution")
    else:
        oob = any("containment:" in w for w in shape.warnings)
        if oob:
            reasons.append("bounds")
        gt_leaves = [_to_local(g.geom, lf.geom) for lf in g.leaves()]
        gt = sample_cuboids(gt_leaves, cfg.samples, cfg.seed)
        fscore = f_score(_shape_samples(shape, cfg), gt, default_f_threshold(gt))
        if fscore < cfg.fscore_min:
            reasons.append("fscore")

    return ValidationReport(fscore, components, leaf_count, oob,
                            passed=not reasons, reasons=reasons)

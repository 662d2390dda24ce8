"""Physical-validity measures on executed shapes.

Rootedness: every leaf cuboid must connect to the ground through parts that
are pairwise closer than 2% of the shape's bounding-box diagonal.

Stability is approximated quasi-statically instead of with a rigid-body
simulation: a shape is stable when it is rooted and the uniform-density center
of mass of each ground-connected component projects strictly inside the convex
hull of its ground-contact footprint with a margin of at least 2% of the
footprint diameter.  The report keeps the footprint and projection so a
simulator could be swapped in later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ContractError
from .geometry import CuboidGeom, corners_np, cuboid_np

GROUND_TOL_FRACTION = 0.02     # of the shape bounding-box diagonal
STABILITY_MARGIN_FRACTION = 0.02  # of the footprint diameter


def _geoms(shape) -> list[CuboidGeom]:
    if isinstance(shape, (list, tuple)):
        return list(shape)
    return shape.leaf_geoms()


# ---------------------------------------------------------------------------
# exact distance between oriented boxes
# ---------------------------------------------------------------------------

_EDGE_PAIRS = [(a, b) for a in range(8) for b in range(8)
               if a < b and bin(a ^ b).count("1") == 1]


def _point_box_distance(pts: np.ndarray, c: CuboidGeom) -> np.ndarray:
    ctr, rot, dims = cuboid_np(c)
    local = (pts - ctr) @ rot
    clamped = np.clip(local, -dims / 2.0, dims / 2.0)
    return np.linalg.norm(local - clamped, axis=-1)


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    # standard closest-point computation between two segments
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-15 else 0.0
    t = (b * s + f) / e if e > 1e-15 else 0.0
    t = np.clip(t, 0.0, 1.0)
    s = np.clip((b * t - c) / a, 0.0, 1.0) if a > 1e-15 else 0.0
    return float(np.linalg.norm((p1 + d1 * s) - (p2 + d2 * t)))


def _boxes_intersect(a: CuboidGeom, b: CuboidGeom) -> bool:
    """Separating-axis test over the 15 candidate axes (touching counts)."""
    ca, ra, _ = cuboid_np(a)
    cb, rb, _ = cuboid_np(b)
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cr = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(cr)
            if n > 1e-12:
                axes.append(cr / n)
    va, vb = corners_np(a), corners_np(b)
    for ax in axes:
        pa, pb = va @ ax, vb @ ax
        if pa.max() < pb.min() - 1e-12 or pb.max() < pa.min() - 1e-12:
            return False
    return True


def obb_min_distance(a: CuboidGeom, b: CuboidGeom) -> float:
    """Exact minimum distance between two (possibly touching) boxes."""
    if _boxes_intersect(a, b):
        return 0.0
    va, vb = corners_np(a), corners_np(b)
    best = min(_point_box_distance(va, b).min(), _point_box_distance(vb, a).min())
    for i, j in _EDGE_PAIRS:
        for k, l in _EDGE_PAIRS:
            d = _segment_segment_distance(va[i], va[j], vb[k], vb[l])
            if d < best:
                best = d
    return float(best)


# ---------------------------------------------------------------------------
# connectivity and rootedness
# ---------------------------------------------------------------------------

@dataclass
class ConnectivityGraph:
    n: int
    tolerance: float
    edges: list[tuple[int, int]]          # undirected, between leaf indices
    ground_contacts: list[int]            # leaf indices touching the ground

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def ground_component(self) -> set[int]:
        seen = set(self.ground_contacts)
        stack = list(self.ground_contacts)
        adj = self.adjacency()
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen


def shape_diagonal(geoms: list[CuboidGeom]) -> float:
    pts = np.concatenate([corners_np(g) for g in geoms])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def connectivity_graph(shape) -> ConnectivityGraph:
    """Edges between cuboids closer than 2% of the shape diagonal; the ground
    plane sits at the shape's minimum y and connects with the same tolerance
    (closed comparisons)."""
    geoms = _geoms(shape)
    if not geoms:
        raise ContractError("shape has no leaf cuboids")
    tol = GROUND_TOL_FRACTION * shape_diagonal(geoms)
    edges = []
    for i in range(len(geoms)):
        for j in range(i + 1, len(geoms)):
            if obb_min_distance(geoms[i], geoms[j]) <= tol:
                edges.append((i, j))
    min_y = min(corners_np(g)[:, 1].min() for g in geoms)
    ground = [i for i, g in enumerate(geoms)
              if corners_np(g)[:, 1].min() <= min_y + tol]
    return ConnectivityGraph(len(geoms), tol, edges, ground)


def rootedness(shape) -> bool:
    """True iff every leaf cuboid is reachable from the ground."""
    graph = connectivity_graph(shape)
    return len(graph.ground_component()) == graph.n


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    rooted: bool
    stable: bool
    support_polygon: list[tuple[float, float]] = field(default_factory=list)
    com_projection: tuple[float, float] = (0.0, 0.0)
    margin: float = float("-inf")

    def to_dict(self) -> dict:
        return {"rooted": self.rooted, "stable": self.stable,
                "support_polygon": [list(v) for v in self.support_polygon],
                "com_projection": list(self.com_projection),
                "margin": None if self.margin == float("-inf") else self.margin}


def _hull_margin(points_xz: np.ndarray, com_xz: np.ndarray) -> tuple[float, list]:
    """Signed distance of the point to the hull boundary (positive inside)."""
    uniq = np.unique(np.round(points_xz, 12), axis=0)
    if len(uniq) < 3:
        return float("-inf"), [tuple(v) for v in uniq]
    try:
        hull = ConvexHull(uniq)
    except QhullError:
        return float("-inf"), [tuple(v) for v in uniq]
    verts = uniq[hull.vertices]  # counter-clockwise
    margin = float("inf")
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        edge = b - a
        nrm = np.array([edge[1], -edge[0]])  # outward for CCW polygons
        nlen = np.linalg.norm(nrm)
        if nlen < 1e-15:
            continue
        signed = float((com_xz - a) @ (nrm / nlen))
        margin = min(margin, -signed)  # positive when inside
    return margin, [tuple(map(float, v)) for v in verts]


def stability(shape) -> StabilityReport:
    geoms = _geoms(shape)
    graph = connectivity_graph(shape)
    rooted = len(graph.ground_component()) == graph.n

    min_y = min(corners_np(g)[:, 1].min() for g in geoms)
    contact_pts = []
    for i in graph.ground_contacts:
        cs = corners_np(geoms[i])
        contact_pts.append(cs[cs[:, 1] <= min_y + graph.tolerance])
    if not contact_pts:
        return StabilityReport(rooted, False)
    foot = np.concatenate(contact_pts)[:, [0, 2]]

    vols = np.array([max(g.volume(), 1e-12) for g in geoms])
    centers = np.array([g.center.values() for g in geoms])
    com = (centers * vols[:, None]).sum(axis=0) / vols.sum()
    com_xz = com[[0, 2]]

    margin, polygon = _hull_margin(foot, com_xz)
    if polygon and len(polygon) >= 2:
        arr = np.array(polygon)
        diam = float(np.max(np.linalg.norm(arr[:, None] - arr[None, :], axis=-1)))
    else:
        diam = 0.0
    stable = bool(rooted and margin != float("-inf") and diam > 0.0
                  and margin >= STABILITY_MARGIN_FRACTION * diam)
    return StabilityReport(rooted, stable, polygon, tuple(map(float, com_xz)), margin)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def quality_suite(shapes) -> dict:
    """Percent rooted / stable over a list of shapes (or leaf-geom lists)."""
    if not shapes:
        raise ContractError("quality_suite needs at least one shape")
    reports = [stability(s) for s in shapes]
    return {
        "count": len(reports),
        "pct_rooted": 100.0 * sum(r.rooted for r in reports) / len(reports),
        "pct_stable": 100.0 * sum(r.stable for r in reports) / len(reports),
    }


def quality_table(suite: dict) -> str:
    """Aligned-column text table of suite results."""
    head = f"{'n':>6}  {'% rooted':>9}  {'% stable':>9}"
    row = (f"{suite['count']:>6}  {suite['pct_rooted']:>9.1f}  "
           f"{suite['pct_stable']:>9.1f}")
    return head + "\n" + row


def quality_json(suite: dict) -> str:
    return json.dumps(suite, indent=2, sort_keys=True)

"""Point clouds, surface/volume sampling, and the Chamfer / F-score measures.

Nearest-neighbor searches are exact (scipy cKDTree); all sampling is
deterministic given a seed.  Chamfer is the symmetric mean-of-means halved:

    CD(a, b) = (mean_a min||a-b|| + mean_b min||b-a||) / 2

and the F-score is the harmonic mean of precision/recall at a distance
threshold, scaled to [0, 100].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from .errors import ContractError
from .geometry import FACES, CuboidGeom, Vec3, cuboid_np, local_to_world


@dataclass
class PointCloud:
    """World-space points; optionally tagged with the cuboid each came from."""

    points: np.ndarray                 # (n, 3) float64
    source: np.ndarray | None = None   # (n,) int cuboid index

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.source is not None:
            self.source = np.asarray(self.source, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.points)


def _as_points(x) -> np.ndarray:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    if pts.size == 0:
        raise ContractError("point cloud is empty")
    return pts.reshape(-1, 3)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def face_areas(dims: np.ndarray) -> np.ndarray:
    """Areas of the six faces in FACES order (right,left,top,bot,front,back)."""
    l, h, w = dims[0], dims[1], dims[2]
    return np.array([h * w, h * w, l * w, l * w, l * h, l * h], dtype=np.float64)


def allocate_counts(weights: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder allocation of n samples proportional to weights."""
    share = weights / weights.sum() * n
    base = np.floor(share).astype(int)
    rem = n - int(base.sum())
    if rem > 0:
        frac = share - base
        # stable tie-break on index order
        order = np.lexsort((np.arange(len(weights)), -frac))
        base[order[:rem]] += 1
    return base


def surface_locals(dims_values: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Local [0,1]^3 coordinates of n stratified surface samples.

    Counts per face are proportional to face area (largest remainder);
    positions within a face are uniform.  Deterministic given the seed.
    """
    if n < 6:
        raise ContractError("surface sampling needs n >= 6")
    counts = allocate_counts(face_areas(dims_values), n)
    rng = np.random.default_rng(seed)
    locs = np.empty((n, 3), dtype=np.float64)
    row = 0
    for f_idx, face in enumerate(FACES):
        cnt = int(counts[f_idx])
        if cnt == 0:
            continue
        uv = rng.random((cnt, 2))
        axis, side = divmod(f_idx, 2)
        side = 1.0 - side  # FACES order is (+,-) per axis
        free = [a for a in range(3) if a != axis]
        block = np.empty((cnt, 3))
        block[:, axis] = side
        block[:, free[0]] = uv[:, 0]
        block[:, free[1]] = uv[:, 1]
        locs[row:row + cnt] = block
        row += cnt
    return locs


def sample_surface(c: CuboidGeom, n: int, seed: int = 0) -> PointCloud:
    """n surface points with per-face counts proportional to face area."""
    ctr, rot, dims = cuboid_np(c)
    locs = surface_locals(dims, n, seed)
    pts = ctr + ((locs - 0.5) * dims) @ rot.T
    return PointCloud(pts)


def sample_surface_diff(c: CuboidGeom, n: int, seed: int = 0) -> list[Vec3]:
    """Scalar-generic surface samples (same local parameterization as
    sample_surface); differentiable through dims and pose."""
    _, _, dims = cuboid_np(c)
    locs = surface_locals(dims, n, seed)
    return [local_to_world(c, (float(u), float(v), float(w))) for u, v, w in locs]


def sample_volume_grid(c: CuboidGeom, k: int) -> PointCloud:
    """k^3 lattice points at ((i+0.5)/k) per axis, mapped into the cuboid."""
    if k < 2:
        raise ContractError("volume grid needs k >= 2")
    t = (np.arange(k) + 0.5) / k
    u, v, w = np.meshgrid(t, t, t, indexing="ij")
    locs = np.stack([u.ravel(), v.ravel(), w.ravel()], axis=1)
    ctr, rot, dims = cuboid_np(c)
    return PointCloud(ctr + ((locs - 0.5) * dims) @ rot.T)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def nn_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of a to its nearest neighbor in b (exact)."""
    d, _ = cKDTree(b).query(a, k=1)
    return np.atleast_1d(d)


def chamfer_distance(a, b) -> float:
    pa, pb = _as_points(a), _as_points(b)
    return float((nn_distances(pa, pb).mean() + nn_distances(pb, pa).mean()) / 2.0)


def f_score(a, b, dist_threshold: float) -> float:
    """Harmonic mean of precision and recall at the threshold, in [0, 100]."""
    if dist_threshold <= 0:
        raise ContractError("dist_threshold must be positive")
    pa, pb = _as_points(a), _as_points(b)
    precision = float((nn_distances(pa, pb) <= dist_threshold).mean())
    recall = float((nn_distances(pb, pa) <= dist_threshold).mean())
    if precision + recall == 0.0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def bbox_diagonal(a) -> float:
    pts = _as_points(a)
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def default_f_threshold(target) -> float:
    """Default F-score threshold: 2% of the target's bounding-box diagonal."""
    return 0.02 * bbox_diagonal(target)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_points(path, a) -> None:
    pts = _as_points(a)
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in pts:
            fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")


def load_points(path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            parts = ln.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ContractError(f"bad point line: {ln.rstrip()!r}")
            rows.append([float(v) for v in parts])
    if not rows:
        raise ContractError(f"no points in {path}")
    return PointCloud(np.array(rows))


# triangles over the corner order of geometry.corners (lexicographic u,v,w bits),
# outward-facing winding
_BOX_TRIS = [
    (4, 6, 7), (4, 7, 5),  # right  (+x)
    (0, 1, 3), (0, 3, 2),  # left   (-x)
    (2, 3, 7), (2, 7, 6),  # top    (+y)
    (0, 4, 5), (0, 5, 1),  # bot    (-y)
    (1, 5, 7), (1, 7, 3),  # front  (+z)
    (0, 2, 6), (0, 6, 4),  # back   (-z)
]


def export_obj(path, cuboids: list[CuboidGeom]) -> None:
    """Write each cuboid as 8 vertices and 12 triangles."""
    from .geometry import corners_np

    with open(path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(cuboids):
            vs = corners_np(c)
            fh.write(f"o cuboid{i}\n")
            for x, y, z in vs:
                fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
            base = 8 * i
            for a, b, cc in _BOX_TRIS:
                fh.write(f"f {base + a + 1} {base + b + 1} {base + cc + 1}\n")

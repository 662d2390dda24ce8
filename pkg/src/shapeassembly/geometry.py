"""Deterministic geometric kernel: vectors, rigid poses, cuboid frames.

All types are generic over the scalar: components may be plain floats or
DiffScalars from :mod:`shapeassembly.autodiff`, so the same code serves the
plain and the differentiable interpreter.

Axis convention (used everywhere in the package):
    l spans local x, h spans local y (up), w spans local z.
    Faces: right/left = +x/-x, top/bot = +y/-y, front/back = +z/-z.
Local attachment coordinates live in [0,1]^3 with (0.5, 0.5, 0.5) the centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .errors import ContractError, SingularityError

value = ad.value


@dataclass(frozen=True)
class Vec3:
    x: object
    y: object
    z: object

    def __add__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def __mul__(self, s) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def scale(self, o: "Vec3") -> "Vec3":
        """Componentwise product."""
        return Vec3(self.x * o.x, self.y * o.y, self.z * o.z)

    def dot(self, o: "Vec3"):
        return self.x * o.x + self.y * o.y + self.z * o.z

    def cross(self, o: "Vec3") -> "Vec3":
        return Vec3(self.y * o.z - self.z * o.y,
                    self.z * o.x - self.x * o.z,
                    self.x * o.y - self.y * o.x)

    def norm(self):
        return ad.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        return Vec3(self.x / n, self.y / n, self.z / n)

    def values(self) -> tuple[float, float, float]:
        return (value(self.x), value(self.y), value(self.z))

    def np(self) -> np.ndarray:
        return np.array(self.values(), dtype=np.float64)

    def __getitem__(self, i: int):
        return (self.x, self.y, self.z)[i]

    @staticmethod
    def of(seq) -> "Vec3":
        a, b, c = seq
        return Vec3(a, b, c)


ZERO = Vec3(0.0, 0.0, 0.0)
AXES = (Vec3(1.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), Vec3(0.0, 0.0, 1.0))


@dataclass(frozen=True)
class Mat3:
    """Row-major 3x3 matrix; rows are Vec3."""

    r0: Vec3
    r1: Vec3
    r2: Vec3

    def vec(self, v: Vec3) -> Vec3:
        return Vec3(self.r0.dot(v), self.r1.dot(v), self.r2.dot(v))

    def tvec(self, v: Vec3) -> Vec3:
        """Transpose times vector."""
        return Vec3(self.r0.x * v.x + self.r1.x * v.y + self.r2.x * v.z,
                    self.r0.y * v.x + self.r1.y * v.y + self.r2.y * v.z,
                    self.r0.z * v.x + self.r1.z * v.y + self.r2.z * v.z)

    def mat(self, o: "Mat3") -> "Mat3":
        ot = o.transpose()
        return Mat3(Vec3(self.r0.dot(ot.r0), self.r0.dot(ot.r1), self.r0.dot(ot.r2)),
                    Vec3(self.r1.dot(ot.r0), self.r1.dot(ot.r1), self.r1.dot(ot.r2)),
                    Vec3(self.r2.dot(ot.r0), self.r2.dot(ot.r1), self.r2.dot(ot.r2)))

    def transpose(self) -> "Mat3":
        return Mat3(Vec3(self.r0.x, self.r1.x, self.r2.x),
                    Vec3(self.r0.y, self.r1.y, self.r2.y),
                    Vec3(self.r0.z, self.r1.z, self.r2.z))

    def col(self, j: int) -> Vec3:
        return Vec3(self.r0[j], self.r1[j], self.r2[j])

    def det(self) -> float:
        m = self.np()
        return float(np.linalg.det(m))

    def np(self) -> np.ndarray:
        return np.array([self.r0.values(), self.r1.values(), self.r2.values()],
                        dtype=np.float64)

    @staticmethod
    def identity() -> "Mat3":
        return Mat3(Vec3(1.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), Vec3(0.0, 0.0, 1.0))

    @staticmethod
    def from_np(m: np.ndarray) -> "Mat3":
        return Mat3(Vec3(*[float(v) for v in m[0]]),
                    Vec3(*[float(v) for v in m[1]]),
                    Vec3(*[float(v) for v in m[2]]))

    @staticmethod
    def from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> "Mat3":
        return Mat3(Vec3(c0.x, c1.x, c2.x), Vec3(c0.y, c1.y, c2.y), Vec3(c0.z, c1.z, c2.z))


def skew(w: Vec3) -> Mat3:
    return Mat3(Vec3(0.0, -w.z, w.y), Vec3(w.z, 0.0, -w.x), Vec3(-w.y, w.x, 0.0))


def mat_add(a: Mat3, b: Mat3) -> Mat3:
    return Mat3(a.r0 + b.r0, a.r1 + b.r1, a.r2 + b.r2)


def mat_scale(a: Mat3, s) -> Mat3:
    return Mat3(a.r0 * s, a.r1 * s, a.r2 * s)


def rotation_between(u: Vec3, v: Vec3) -> Mat3:
    """Rotation taking unit vector u onto unit vector v.

    Uses R = I + K + K^2 / (1 + u.v) with K = skew(u x v), which is smooth
    away from the antiparallel case.  At u ~ -v it falls back to a 180-degree
    turn about a deterministic perpendicular axis.
    """
    c = u.dot(v)
    cv = value(c)
    tape = ad.tape_of(c)
    if cv < -1.0 + 1e-9:
        # stable antiparallel branch: 180 degrees about an axis perpendicular to u
        uv = u.values()
        j = int(np.argmin(np.abs(uv)))
        p = u.cross(AXES[j]).normalized()
        return mat_add(mat_scale(outer(p, p), 2.0), mat_scale(Mat3.identity(), -1.0))
    if tape is not None and cv < -1.0 + 1e-6:
        tape.flag_kink("rotation_between near antiparallel")
    k = skew(u.cross(v))
    return mat_add(mat_add(Mat3.identity(), k), mat_scale(k.mat(k), 1.0 / (1.0 + c)))


def rotation_about_axis(axis: Vec3, cos_t, sin_t) -> Mat3:
    """Rodrigues rotation about a unit axis given cos/sin of the angle."""
    k = skew(axis)
    return mat_add(mat_add(Mat3.identity(), mat_scale(k, sin_t)),
                   mat_scale(k.mat(k), 1.0 - cos_t))


def outer(a: Vec3, b: Vec3) -> Mat3:
    return Mat3(Vec3(a.x * b.x, a.x * b.y, a.x * b.z),
                Vec3(a.y * b.x, a.y * b.y, a.y * b.z),
                Vec3(a.z * b.x, a.z * b.y, a.z * b.z))


def gram_schmidt_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3:
    """Orthonormalize three columns in order (right-handedness preserved for
    inputs with positive determinant)."""
    u0 = c0.normalized()
    c1p = c1 - u0 * c1.dot(u0)
    u1 = c1p.normalized()
    c2p = c2 - u0 * c2.dot(u0) - u1 * c2.dot(u1)
    u2 = c2p.normalized()
    return Mat3.from_cols(u0, u1, u2)


@dataclass(frozen=True)
class RigidPose:
    """Orientation + centroid position of a cuboid in its parent frame."""

    rot: Mat3
    center: Vec3

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(Mat3.identity(), ZERO)

    def check(self, tol: float = 1e-6) -> None:
        m = self.rot.np()
        if not np.allclose(m @ m.T, np.eye(3), atol=tol):
            raise ContractError("pose rotation is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > tol:
            raise ContractError("pose rotation must have determinant +1")


@dataclass(frozen=True)
class CuboidGeom:
    """Cuboid with extents dims=(x,y,z), a rigid pose, and the aligned flag."""

    dims: Vec3
    pose: RigidPose = field(default_factory=RigidPose.identity)
    aligned: bool = False

    @property
    def center(self) -> Vec3:
        return self.pose.center

    @property
    def rot(self) -> Mat3:
        return self.pose.rot

    def diagonal(self) -> float:
        d = self.dims.values()
        return math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)

    def volume(self) -> float:
        d = self.dims.values()
        return d[0] * d[1] * d[2]


# ---------------------------------------------------------------------------
# faces
# ---------------------------------------------------------------------------

FACES = ("right", "left", "top", "bot", "front", "back")
_FACE_AXIS_SIDE = {"right": (0, 1), "left": (0, 0),
                   "top": (1, 1), "bot": (1, 0),
                   "front": (2, 1), "back": (2, 0)}
_OPPOSITE = {"right": "left", "left": "right", "top": "bot",
             "bot": "top", "front": "back", "back": "front"}


def face_axis(face: str) -> int:
    return _FACE_AXIS_SIDE[face][0]


def face_side(face: str) -> int:
    return _FACE_AXIS_SIDE[face][1]


def opposite_face(face: str) -> str:
    return _OPPOSITE[face]


def face_point(face: str, u, v):
    """Local [0,1]^3 coordinates of the (u, v) position on a named face.

    (u, v) fill the two free axes in x,y,z order; the face axis is pinned to
    its 0/1 side.
    """
    axis, side = _FACE_AXIS_SIDE[face]
    s = float(side)
    if axis == 0:
        return (s, u, v)
    if axis == 1:
        return (u, s, v)
    return (u, v, s)


def face_center(face: str):
    return face_point(face, 0.5, 0.5)


# ---------------------------------------------------------------------------
# coordinate mappings
# ---------------------------------------------------------------------------

def local_to_world(c: CuboidGeom, uvw) -> Vec3:
    """Map local [0,1]^3 coordinates to a world point on/in the cuboid."""
    u, v, w = uvw if not isinstance(uvw, Vec3) else (uvw.x, uvw.y, uvw.z)
    for t in (u, v, w):
        tv = value(t)
        if tv < -1e-9 or tv > 1.0 + 1e-9:
            raise ContractError(f"local coordinate {tv} outside [0,1]")
    off = Vec3((u - 0.5) * c.dims.x, (v - 0.5) * c.dims.y, (w - 0.5) * c.dims.z)
    return c.center + c.rot.vec(off)


def world_to_local(c: CuboidGeom, p: Vec3) -> Vec3:
    """Exact inverse of local_to_world; points outside map outside [0,1]^3."""
    for d in c.dims.values():
        if abs(d) < 1e-12:
            raise SingularityError("cuboid has a degenerate dimension")
    q = c.rot.tvec(p - c.center)
    return Vec3(q.x / c.dims.x + 0.5, q.y / c.dims.y + 0.5, q.z / c.dims.z + 0.5)


def point_in_cuboid(p: Vec3, c: CuboidGeom, slack: float = 0.0) -> bool:
    """True iff the local coordinates of p lie in [-slack, 1+slack]^3."""
    if slack < 0:
        raise ContractError("slack must be non-negative")
    q = world_to_local(c, p)
    for t in (q.x, q.y, q.z):
        tv = value(t)
        if tv < -slack or tv > 1.0 + slack:
            return False
    return True


_CORNER_UVW = [(u, v, w) for u in (0.0, 1.0) for v in (0.0, 1.0) for w in (0.0, 1.0)]


def corners(c: CuboidGeom) -> list[Vec3]:
    """The 8 corners, in lexicographic (u,v,w) bit order."""
    return [local_to_world(c, uvw) for uvw in _CORNER_UVW]


def corners_np(c: CuboidGeom) -> np.ndarray:
    ctr, rot, dims = cuboid_np(c)
    loc = np.array(_CORNER_UVW) - 0.5
    return ctr + (loc * dims) @ rot.T


def cuboid_np(c: CuboidGeom) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Plain-float (center, rotation, dims) arrays of a cuboid."""
    return c.center.np(), c.rot.np(), c.dims.np()


def cuboid_from_np(center: Iterable, rot: np.ndarray, dims: Iterable,
                   aligned: bool = False) -> CuboidGeom:
    return CuboidGeom(Vec3.of([float(d) for d in dims]),
                      RigidPose(Mat3.from_np(np.asarray(rot, dtype=np.float64)),
                                Vec3.of([float(v) for v in center])),
                      aligned)

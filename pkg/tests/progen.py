"""Seeded random program generator for property-style tests.

Programs are always executable: partners are grounded before use, dimensions
sit well inside their clamp ranges, and attachments to the bounding volume
stay on its top/bottom faces.  Two flavors:

* generic programs (macros, hierarchy) for round-trip and macro-equivalence
  properties;
* gradcheck programs, which also keep every continuous parameter away from
  branch boundaries (coordinates strictly inside (0,1), axial second
  attachments) so gradients are well-defined almost everywhere.
"""

from __future__ import annotations

import numpy as np

from shapeassembly.geometry import FACES, face_point, opposite_face
from shapeassembly.lang import (Attach, CuboidDecl, Program, Reflect, Squeeze,
                                Translate)

AXES = ("X", "Y", "Z")


def _r3(x) -> float:
    return round(float(x), 3)


def random_program(rng: np.random.Generator, max_cuboids: int = 5,
                   p_squeeze: float = 0.3, p_symmetry: float = 0.7,
                   p_second_attach: float = 0.4, p_child: float = 0.0,
                   aligned_prob: float = 0.25, depth: int = 0) -> Program:
    bbox = CuboidDecl("bbox", _r3(rng.uniform(0.8, 1.6)),
                      _r3(rng.uniform(0.8, 1.6)), _r3(rng.uniform(0.8, 1.6)), True)
    prog = Program(bbox)
    n = int(rng.integers(1, max_cuboids + 1))
    for i in range(n):
        dims = [_r3(rng.uniform(0.15, 0.5) * b) for b in (bbox.l, bbox.w, bbox.h)]
        aligned = bool(rng.random() < aligned_prob)
        prog.cuboids.append(CuboidDecl(f"cube{i}", dims[0], dims[1], dims[2], aligned))

    grounded = ["bbox"]
    pair_used: set[tuple[str, str]] = set()

    def bbox_target(rng):
        side = 0.0 if rng.random() < 0.7 else 1.0
        return (_r3(rng.uniform(0.2, 0.8)), side, _r3(rng.uniform(0.2, 0.8)))

    def free_target(rng, partner):
        if partner == "bbox":
            return bbox_target(rng)
        face = FACES[rng.integers(0, 6)]
        return face_point(face, _r3(rng.uniform(0.15, 0.85)),
                          _r3(rng.uniform(0.15, 0.85)))

    for i in range(n):
        name = f"cube{i}"
        non_bbox_grounded = [g for g in grounded if g != "bbox"]
        if (rng.random() < p_squeeze and len(grounded) >= 2
                and len(non_bbox_grounded) >= 1):
            pool = list(grounded)
            c2 = pool[rng.integers(0, len(pool))]
            c3 = pool[rng.integers(0, len(pool))]
            if c2 == c3 and c2 != "bbox":
                c3 = "bbox"
            face = FACES[rng.integers(0, 6)]
            prog.attaches.append(Squeeze(name, c2, c3, face,
                                         _r3(rng.uniform(0.2, 0.8)),
                                         _r3(rng.uniform(0.2, 0.8))))
            pair_used.add(tuple(sorted((name, c2))))
            pair_used.add(tuple(sorted((name, c3))))
        else:
            partner = grounded[rng.integers(0, len(grounded))]
            face = FACES[rng.integers(0, 6)]
            u, v = _r3(rng.uniform(0.2, 0.8)), _r3(rng.uniform(0.2, 0.8))
            src = face_point(face, u, v)
            tgt = free_target(rng, partner)
            prog.attaches.append(Attach(name, partner, *src, *tgt))
            pair_used.add(tuple(sorted((name, partner))))
            if rng.random() < p_second_attach:
                others = [g for g in grounded
                          if tuple(sorted((name, g))) not in pair_used]
                if others:
                    p2 = others[rng.integers(0, len(others))]
                    # axial move: same face coordinates on the opposite face
                    src2 = face_point(opposite_face(face), u, v)
                    tgt2 = free_target(rng, p2)
                    prog.attaches.append(Attach(name, p2, *src2, *tgt2))
                    pair_used.add(tuple(sorted((name, p2))))
        grounded.append(name)

    if rng.random() < p_symmetry:
        for _ in range(int(rng.integers(1, 3))):
            target = f"cube{rng.integers(0, n)}"
            axis = AXES[rng.integers(0, 3)]
            if rng.random() < 0.5:
                prog.symmetries.append(Reflect(target, axis))
            else:
                prog.symmetries.append(Translate(target, axis,
                                                 int(rng.integers(1, 4)),
                                                 _r3(rng.uniform(0.25, 0.85))))

    if depth == 0 and p_child > 0:
        for i in range(n):
            if rng.random() < p_child:
                decl = prog.cuboids[i]
                child = random_program(rng, max_cuboids=3, p_squeeze=p_squeeze,
                                       p_symmetry=0.4, p_second_attach=0.3,
                                       p_child=0.0, aligned_prob=aligned_prob,
                                       depth=depth + 1)
                child.bbox = CuboidDecl("bbox", decl.l, decl.w, decl.h, True)
                prog.children[decl.name] = child
    return prog


def random_gradcheck_program(rng: np.random.Generator, max_cuboids: int = 4) -> Program:
    """Programs for gradient checks: no squeezes onto one shared partner,
    interior coordinates, axial second attachments."""
    return random_program(rng, max_cuboids=max_cuboids, p_squeeze=0.25,
                          p_symmetry=0.6, p_second_attach=0.5, p_child=0.0,
                          aligned_prob=0.2)

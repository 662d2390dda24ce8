import math

import numpy as np
import pytest

from shapeassembly import autodiff as ad
from shapeassembly.cloud import chamfer_distance, sample_surface
from shapeassembly.errors import ExecutionError
from shapeassembly.geometry import Vec3, corners, local_to_world, point_in_cuboid
from shapeassembly.interp import (_run_program, check_semantics, execute,
                                  expand_program, expand_squeeze)
from shapeassembly.lang import (Attach, CuboidDecl, Program, Reflect, Squeeze,
                                Translate, parse, print_program)

from progen import random_program

BIG_BBOX = "bbox = Cuboid(4.000, 4.000, 4.000, True)\n"


def run(text):
    return _run_program(parse(text), None, [], None, "")


def vals(v):
    return np.array(v.values())


# -- instantiate --------------------------------------------------------------

def test_instantiate_at_origin_with_axis_mapping():
    ctx = run("bbox = Cuboid(3.000, 3.000, 3.000, True)\n"
              "cube0 = Cuboid(1.000, 2.000, 1.500, True)\n")
    g = ctx.states["cube0"].geom
    assert g.center.values() == (0.0, 0.0, 0.0)
    # syntax (l, w, h) spans extents (x, z, y)
    assert g.dims.values() == (1.0, 1.5, 2.0)
    assert not ctx.states["cube0"].grounded


def test_instantiate_independent_state():
    ctx = run("bbox = Cuboid(2.000, 2.000, 2.000, True)\n"
              "cube0 = Cuboid(0.500, 0.500, 0.500, False)\n"
              "cube1 = Cuboid(0.700, 0.700, 0.700, False)\n")
    assert ctx.states["cube0"].geom.dims.values() != ctx.states["cube1"].geom.dims.values()


def test_dims_clamped_with_warning():
    warnings = []
    _run_program(parse("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
                       "cube0 = Cuboid(0.001, 2.000, 0.500, False)\n"),
                 None, warnings, None, "")
    assert any("clamped" in w for w in warnings)
    ctx = run("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
              "cube0 = Cuboid(0.001, 2.000, 0.500, False)\n")
    d = ctx.states["cube0"].geom.dims.values()
    assert d[0] == 0.01 and d[2] == 1.0  # w clamped to the bbox extent


# -- attach: 0 and 1 prior ----------------------------------------------------

def test_zero_prior_pure_translation():
    ctx = run(BIG_BBOX +
              "cube0 = Cuboid(1.000, 1.000, 1.000, False)\n"
              "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n")
    st = ctx.states["cube0"]
    src = local_to_world(st.geom, (0.5, 0.0, 0.5))
    tgt = local_to_world(ctx.states["bbox"].geom, (0.5, 0.0, 0.5))
    assert np.linalg.norm(vals(src) - vals(tgt)) < 1e-9
    assert np.allclose(st.geom.rot.np(), np.eye(3))  # no rotation
    assert st.grounded


def test_one_prior_scales_by_ratio_and_colocates():
    # platform top at y=-1.5; unit cube pinned there by its bottom, then its
    # top pulled to the bbox center: n = 1.5, k = 1.0, scale factor 1.5 along y
    text = (BIG_BBOX +
            "cube0 = Cuboid(4.000, 4.000, 0.500, True)\n"
            "cube1 = Cuboid(1.000, 1.000, 1.000, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.500, 0.500, 1.000, 0.500)\n"
            "attach(cube1, bbox, 0.500, 1.000, 0.500, 0.500, 0.500, 0.500)\n")
    ctx = run(text)
    g = ctx.states["cube1"].geom
    assert abs(g.dims.values()[1] - 1.5) < 1e-9
    src = local_to_world(g, (0.5, 1.0, 0.5))
    assert np.linalg.norm(vals(src) - np.array([0.0, 0.0, 0.0])) < 1e-6


def test_one_prior_rotates_to_target():
    # second attach target off-axis: the cuboid must rotate about the pivot
    text = (BIG_BBOX +
            "cube0 = Cuboid(4.000, 4.000, 0.500, True)\n"
            "cube1 = Cuboid(0.200, 0.200, 1.000, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.500, 0.500, 1.000, 0.500)\n"
            "attach(cube1, bbox, 0.500, 1.000, 0.500, 0.750, 0.500, 0.500)\n")
    ctx = run(text)
    g = ctx.states["cube1"].geom
    src = vals(local_to_world(g, (0.5, 1.0, 0.5)))
    tgt = np.array([1.0, 0.0, 0.0])
    assert np.linalg.norm(src - tgt) < 1e-6
    pivot = vals(local_to_world(g, (0.5, 0.0, 0.5)))
    assert np.linalg.norm(pivot - np.array([0.0, -1.5, 0.0])) < 1e-6


def test_colocation_random_zero_and_one_prior():
    rng = np.random.default_rng(42)
    for _ in range(100):
        u, v = rng.uniform(0.1, 0.9, 2).round(3)
        face_side = float(rng.integers(0, 2))
        tx, tz = rng.uniform(0.2, 0.8, 2).round(3)
        t2 = rng.uniform(0.2, 0.8, 3).round(3)
        text = (BIG_BBOX +
                f"cube0 = Cuboid(4.000, 4.000, 0.500, True)\n"
                f"cube1 = Cuboid({rng.uniform(.3,1.2):.3f}, {rng.uniform(.3,1.2):.3f}, {rng.uniform(.3,1.2):.3f}, False)\n"
                f"attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
                f"attach(cube1, cube0, {u:.3f}, {face_side:.3f}, {v:.3f}, {tx:.3f}, 1.000, {tz:.3f})\n"
                f"attach(cube1, bbox, {u:.3f}, {1.0 - face_side:.3f}, {v:.3f}, {t2[0]:.3f}, {t2[1]:.3f}, {t2[2]:.3f})\n")
        ctx = run(text)
        g1 = ctx.states["cube1"].geom
        s = vals(local_to_world(g1, (u, 1.0 - face_side, v)))
        t = vals(local_to_world(ctx.states["bbox"].geom, tuple(t2)))
        assert np.linalg.norm(s - t) < 1e-6


# -- attach: two or more priors, tau rule -------------------------------------

def tau_case(theta_deg, L=0.4):
    # cube1 ends up centered at (0, -1, 0.05) with two colinear bottom
    # attachments; its top-face center sits at S = (0, -0.5, 0.05).  The third
    # target lies at angle theta from the +y face normal, distance L from S.
    th = math.radians(theta_deg)
    t = np.array([0.0, -0.5 + L * math.cos(th), 0.05 + L * math.sin(th)])
    tloc = t / 4.0 + 0.5
    text = (BIG_BBOX +
            "cube0 = Cuboid(4.000, 4.000, 0.500, True)\n"
            "cube1 = Cuboid(1.000, 1.000, 1.000, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.250, 0.500, 1.000, 0.450)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.750, 0.500, 1.000, 0.575)\n"
            f"attach(cube1, bbox, 0.500, 1.000, 0.500, "
            f"{tloc[0]:.9f}, {tloc[1]:.9f}, {tloc[2]:.9f})\n")
    warnings = []
    ctx = _run_program(parse(text), None, warnings, None, "")
    g = ctx.states["cube1"].geom
    src = vals(local_to_world(g, (0.5, 1.0, 0.5)))
    tgt = vals(local_to_world(ctx.states["bbox"].geom, tuple(tloc)))
    return g, np.linalg.norm(src - tgt), warnings, L, th


def test_tau_20_degrees_scales():
    g, residual, warnings, L, th = tau_case(20.0)
    assert abs(g.dims.values()[1] - (1.0 + L * math.cos(th))) < 1e-6
    assert abs(residual - L * math.sin(th)) < 1e-6
    assert not any("scale skipped" in w for w in warnings)


def test_tau_30_degrees_does_not_scale():
    g, residual, warnings, L, th = tau_case(30.0)
    assert abs(g.dims.values()[1] - 1.0) < 1e-9
    assert abs(residual - L) < 1e-6
    assert any("scale skipped" in w for w in warnings)


def test_multi_prior_colinear_rotation():
    # existing points colinear along z; target requires an azimuthal rotation
    text = (BIG_BBOX +
            "cube0 = Cuboid(4.000, 4.000, 0.500, True)\n"
            "cube1 = Cuboid(1.000, 1.000, 1.000, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.250, 0.500, 1.000, 0.450)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.750, 0.500, 1.000, 0.575)\n"
            "attach(cube1, bbox, 0.500, 1.000, 0.500, 0.250, 0.375, 0.500)\n")
    ctx = run(text)
    g = ctx.states["cube1"].geom
    # the existing bottom points must not move
    p0 = vals(local_to_world(g, (0.5, 0.0, 0.25)))
    assert np.linalg.norm(p0 - np.array([0.0, -1.5, -0.2])) < 1e-9
    # source rotated toward -x (target side)
    src = vals(local_to_world(g, (0.5, 1.0, 0.5)))
    assert src[0] < -0.5


# -- aligned cuboids -----------------------------------------------------------

def test_aligned_never_rotates_and_grows():
    text = (BIG_BBOX +
            "cube0 = Cuboid(4.000, 4.000, 0.500, True)\n"
            "cube1 = Cuboid(0.400, 0.400, 0.400, True)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.500, 0.500, 1.000, 0.500)\n"
            "attach(cube1, bbox, 0.500, 1.000, 0.500, 0.600, 0.450, 0.500)\n")
    ctx = run(text)
    g = ctx.states["cube1"].geom
    assert np.allclose(g.rot.np(), np.eye(3), atol=1e-12)
    tgt = local_to_world(ctx.states["bbox"].geom, (0.6, 0.45, 0.5))
    assert point_in_cuboid(tgt, g, 1e-9)
    # growth is minimal per axis: target lands exactly on the surface slab
    q = np.abs(vals(tgt) - vals(g.center))
    dims = np.array(g.dims.values())
    grown = dims > 0.4 + 1e-12
    assert grown.any()
    assert np.allclose((2 * q)[grown], dims[grown], atol=1e-9)


# -- squeeze -------------------------------------------------------------------

def test_squeeze_expansion_worked_example():
    sq = Squeeze("c1", "c2", "c3", "left", 0.1, 0.4)
    a1, a2 = expand_squeeze(sq)
    assert (a1.c1, a1.c2) == ("c1", "c2")
    assert a1.coords1() == (0.0, 0.5, 0.5)
    assert a1.coords2() == (1.0, 0.1, 0.4)
    assert (a2.c1, a2.c2) == ("c1", "c3")
    assert a2.coords1() == (1.0, 0.5, 0.5)
    assert a2.coords2() == (0.0, 0.1, 0.4)


def test_squeeze_top_face_mapping():
    a1, a2 = expand_squeeze(Squeeze("c1", "c2", "c3", "top", 0.5, 0.5))
    assert a1.coords1() == (0.5, 1.0, 0.5)
    assert a1.coords2() == (0.5, 0.0, 0.5)
    assert a2.coords1() == (0.5, 0.0, 0.5)
    assert a2.coords2() == (0.5, 1.0, 0.5)


def test_squeeze_between_two_cuboids():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.100, 1.000, 1.000, True)\n"
            "cube1 = Cuboid(0.100, 1.000, 1.000, True)\n"
            "cube2 = Cuboid(0.500, 1.000, 0.200, True)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.050, 0.000, 0.500)\n"
            "attach(cube1, bbox, 0.500, 0.000, 0.500, 0.950, 0.000, 0.500)\n"
            "squeeze(cube2, cube1, cube0, right, 0.500, 0.500)\n")
    shape = execute(parse(text))
    shelf = next(lf for lf in shape.leaves if lf.name == "cube2")
    # shelf spans between the panels' inner faces
    assert abs(shelf.geom.dims.values()[0] - 0.8) < 1e-9
    assert np.allclose(vals(shelf.geom.center), [0.0, 0.0, 0.0], atol=1e-9)


# -- reflect / translate --------------------------------------------------------

def leg_program(x=0.2):
    return (f"bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            f"cube0 = Cuboid(0.100, 0.100, 0.500, False)\n"
            f"attach(cube0, bbox, 0.500, 0.000, 0.500, {x:.3f}, 0.000, 0.300)\n"
            f"reflect(cube0, X)\n")


def test_reflect_mirrors_attach_point():
    shape = execute(parse(leg_program(0.2)))
    clone = next(lf for lf in shape.leaves if lf.name == "cube0_ref")
    orig = next(lf for lf in shape.leaves if lf.name == "cube0")
    co, cc = vals(orig.geom.center), vals(clone.geom.center)
    assert abs(cc[0] + co[0]) < 1e-9  # mirrored over the x=0 plane
    assert np.allclose(cc[1:], co[1:], atol=1e-9)
    # bbox-local 0.2 -> 0.8
    assert abs((cc[0] / 1.0 + 0.5) - 0.8) < 1e-9


def test_reflected_surface_is_mirror_image():
    from shapeassembly.geometry import world_to_local

    shape = execute(parse(leg_program(0.25)))
    orig, clone = shape.leaves[0].geom, shape.leaves[1].geom
    a = sample_surface(orig, 400, seed=3).points
    for p in a * np.array([-1.0, 1.0, 1.0]):
        q = world_to_local(clone, Vec3(*p)).values()
        assert all(-1e-6 <= t <= 1.0 + 1e-6 for t in q)
        assert min(min(abs(t), abs(t - 1.0)) for t in q) < 1e-6


def test_reflect_on_mirror_plane_warns_and_coincides():
    shape = execute(parse(leg_program(0.5)))
    assert any("mirror plane" in w for w in shape.warnings)
    a, b = shape.leaves[0].geom, shape.leaves[1].geom
    assert np.allclose(vals(a.center), vals(b.center), atol=1e-12)


def test_translate_offsets():
    base = ("bbox = Cuboid(1.000, 1.000, 2.000, True)\n"
            "cube0 = Cuboid(0.800, 0.800, 0.100, True)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n")
    one = execute(parse(base + "translate(cube0, Y, 1, 0.600)\n"))
    ys = sorted(vals(lf.geom.center)[1] for lf in one.leaves)
    # single clone ends the full distance away: 0.6 * bbox height 2.0
    assert abs((ys[1] - ys[0]) - 1.2) < 1e-9
    two = execute(parse(base + "translate(cube0, Y, 2, 0.600)\n"))
    ys = sorted(vals(lf.geom.center)[1] for lf in two.leaves)
    assert abs((ys[1] - ys[0]) - 0.6) < 1e-9
    assert abs((ys[2] - ys[0]) - 1.2) < 1e-9


def test_symmetry_requires_grounded():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.300, 0.300, 0.300, False)\n"
            "reflect(cube0, X)\n")
    with pytest.raises(ExecutionError) as e:
        execute(parse(text))
    assert e.value.rule == "symmetry_grounding"


# -- execution, hierarchy, errors ------------------------------------------------

def test_imperative_sequence_with_reflect_macro():
    # cuboid instantiated at the origin, moved by its attach, then a reflect
    # creates one clone plus its attachments
    text = leg_program(0.2)
    shape = execute(parse(text), trace=True)
    assert len(shape.leaves) == 2
    steps = [t for t in shape.trace if "attach" in t or "Cuboid" in t]
    assert len([t for t in steps if "Cuboid" in t]) == 3  # bbox, cube0, clone
    assert len(shape.attach_edges) == 2


def test_empty_ablock_discards_ungrounded():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.300, 0.300, 0.300, False)\n")
    shape = execute(parse(text))
    assert shape.leaves == []
    assert any("ungrounded" in w for w in shape.warnings)


def test_attach_to_ungrounded_partner_errors():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.300, 0.300, 0.300, False)\n"
            "cube1 = Cuboid(0.300, 0.300, 0.300, False)\n"
            "attach(cube0, cube1, 0.500, 0.000, 0.500, 0.500, 1.000, 0.500)\n")
    with pytest.raises(ExecutionError) as e:
        execute(parse(text))
    assert e.value.rule == "grounding"


def test_bbox_cannot_move():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.300, 0.300, 0.300, False)\n"
            "attach(bbox, cube0, 0.500, 0.000, 0.500, 0.500, 1.000, 0.500)\n")
    with pytest.raises(ExecutionError) as e:
        execute(parse(text))
    assert e.value.rule == "bbox_moved"


def test_hierarchy_scales_child_leaves():
    text = ("bbox = Cuboid(2.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(2.000, 1.000, 1.000, True)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "Program cube0:\n"
            "    bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "    cube0 = Cuboid(0.400, 0.500, 0.600, True)\n"
            "    attach(cube0, bbox, 0.500, 0.000, 0.500, 0.250, 0.000, 0.500)\n")
    flat = execute(parse(text), mode="flat")
    assert len(flat.leaves) == 1
    assert flat.leaves[0].geom.dims.values() == (2.0, 1.0, 1.0)
    hier = execute(parse(text), mode="hier")
    assert len(hier.leaves) == 1
    g = hier.leaves[0].geom
    # child leaf dims (0.4, 0.6, 0.5) scaled (2, 1, 1): x doubles
    assert np.allclose(g.dims.values(), (0.8, 0.6, 0.5), atol=1e-12)
    # child-local center x (0.25 - 0.5) * 1.0 scales to -0.5
    assert abs(vals(g.center)[0] + 0.5) < 1e-12


def test_hierarchy_reflected_parent_duplicates_child():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.200, 0.200, 0.500, True)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.200, 0.000, 0.500)\n"
            "reflect(cube0, X)\n"
            "Program cube0:\n"
            "    bbox = Cuboid(0.200, 0.200, 0.500, True)\n"
            "    cube0 = Cuboid(0.200, 0.200, 0.250, True)\n"
            "    attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n")
    shape = execute(parse(text))
    assert len(shape.leaves) == 2  # one per parent instance


def test_determinism():
    text, = [leg_program(0.31)]
    a = execute(parse(text))
    b = execute(parse(text))
    for la, lb in zip(a.leaves, b.leaves):
        assert vals(la.geom.center).tolist() == vals(lb.geom.center).tolist()
        assert la.geom.dims.values() == lb.geom.dims.values()


# -- macro expansion equivalence --------------------------------------------------

def leaf_arrays(shape):
    out = []
    for lf in shape.leaves:
        out.append(np.concatenate([vals(lf.geom.center), np.array(lf.geom.dims.values()),
                                   lf.geom.rot.np().ravel()]))
    return np.array(out)


def test_macro_expansion_equivalence_fixed():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.100, 1.000, 1.000, True)\n"
            "cube1 = Cuboid(0.100, 1.000, 1.000, True)\n"
            "cube2 = Cuboid(0.500, 1.000, 0.200, True)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.050, 0.000, 0.500)\n"
            "attach(cube1, bbox, 0.500, 0.000, 0.500, 0.950, 0.000, 0.500)\n"
            "squeeze(cube2, cube1, cube0, right, 0.300, 0.500)\n"
            "translate(cube2, Y, 2, 0.500)\n")
    p = parse(text)
    direct = execute(p)
    expanded_prog = expand_program(p)
    assert not expanded_prog.symmetries
    assert all(isinstance(a, Attach) for a in expanded_prog.attaches)
    expanded = execute(expanded_prog)
    assert len(direct.leaves) == len(expanded.leaves)
    assert np.abs(leaf_arrays(direct) - leaf_arrays(expanded)).max() < 1e-9


def test_macro_expansion_equivalence_random():
    rng = np.random.default_rng(123)
    checked = 0
    for _ in range(40):
        p = random_program(rng, p_child=0.25)
        try:
            direct = execute(p)
        except ExecutionError:
            continue
        expanded = execute(expand_program(p))
        assert len(direct.leaves) == len(expanded.leaves)
        if direct.leaves:
            assert np.abs(leaf_arrays(direct) - leaf_arrays(expanded)).max() < 1e-9
        checked += 1
    assert checked >= 30


# -- check_semantics ----------------------------------------------------------

def valid_text():
    return ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.400, 0.400, 0.500, False)\n"
            "cube1 = Cuboid(0.300, 0.300, 0.400, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.400, 0.000, 0.500)\n"
            "attach(cube1, cube0, 0.500, 0.000, 0.500, 0.500, 1.000, 0.500)\n"
            "reflect(cube1, X)\n")


def rules_of(violations):
    return sorted({v.rule for v in violations})


def test_valid_program_has_no_violations():
    assert check_semantics(parse(valid_text())) == []


def test_violation_coordinate_range():
    p = parse(valid_text())
    p.attaches[0].x2 = 1.4
    assert "coordinate_range" in rules_of(check_semantics(p, run_containment=False))


def test_violation_dimension_range():
    p = parse(valid_text())
    p.cuboids[0].l = 3.0
    assert "dimension_range" in rules_of(check_semantics(p, run_containment=False))


def test_violation_bbox_face():
    p = parse(valid_text())
    p.attaches[0].y2 = 0.5
    assert "bbox_face" in rules_of(check_semantics(p, run_containment=False))


def test_violation_bbox_subprogram():
    p = parse(valid_text())
    p.children["bbox"] = parse("bbox = Cuboid(1.000, 1.000, 1.000, True)\n")
    assert "bbox_subprogram" in rules_of(check_semantics(p, run_containment=False))


def test_violation_multi_attach():
    p = parse(valid_text())
    p.attaches.append(Attach("cube1", "cube0", 0.5, 1.0, 0.5, 0.5, 0.0, 0.5))
    assert "multi_attach" in rules_of(check_semantics(p, run_containment=False))


def test_bbox_top_bottom_exception():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.400, 0.400, 1.000, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, 0.500)\n"
            "attach(cube0, bbox, 0.500, 1.000, 0.500, 0.500, 1.000, 0.500)\n")
    assert check_semantics(parse(text)) == []


def test_violation_bbox_moved():
    p = parse(valid_text())
    p.attaches.append(Attach("bbox", "cube0", 0.5, 0.0, 0.5, 0.5, 1.0, 0.5))
    assert "bbox_moved" in rules_of(check_semantics(p, run_containment=False))


def test_violation_grounding_order():
    p = parse(valid_text())
    p.attaches = list(reversed(p.attaches))
    assert "grounding" in rules_of(check_semantics(p, run_containment=False))


def test_violation_symmetry_grounding():
    p = parse(valid_text())
    p.attaches = p.attaches[:1]
    assert "symmetry_grounding" in rules_of(check_semantics(p, run_containment=False))


def test_violation_containment():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.400, 0.400, 0.980, False)\n"
            "attach(cube0, bbox, 0.500, 0.500, 0.500, 0.500, 0.950, 0.500)\n")
    assert "containment" in rules_of(check_semantics(parse(text)))


def test_containment_allows_10pct_slack():
    text = ("bbox = Cuboid(1.000, 1.000, 1.000, True)\n"
            "cube0 = Cuboid(0.400, 0.400, 0.500, False)\n"
            "attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.050, 0.500)\n")
    assert check_semantics(parse(text)) == []

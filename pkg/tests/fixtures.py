"""Hand-built fixture programs used across the test suite.

Each builder returns (program_text, labels, category): labels map declared
cuboid names to semantic part labels for part-graph synthesis.  Builders take
a jitter fraction + rng so suites can generate families of related fixtures;
all emitted numerals are 3-decimal canonical values and the geometric
relations (legs meeting seats, shelves meeting panels) hold for the rounded
values by construction.
"""

from __future__ import annotations

import numpy as np


def _r3(x: float) -> float:
    return round(float(x), 3)


def _fmt(x: float) -> str:
    return f"{_r3(x):.3f}"


def _jit(rng, x, frac):
    if rng is None or frac == 0:
        return _r3(x)
    return _r3(x * (1.0 + rng.uniform(-frac, frac)))


def chair(rng=None, jitter=0.0):
    """Seat slab on four legs (two declared + two reflected) with a back."""
    bw = _jit(rng, 0.80, jitter)
    bd = _jit(rng, 0.80, jitter)
    leg_a = _jit(rng, 0.08, jitter)
    leg_h = _jit(rng, 0.55, jitter)
    seat_t = _jit(rng, 0.10, jitter)
    back_h = _jit(rng, 0.55, jitter)
    back_t = _jit(rng, 0.10, jitter)
    bh = _r3(leg_h + seat_t + back_h)
    inset = _r3(0.01 + leg_a / 2.0)
    fx = _r3(inset / bw)
    fz = _r3(inset / bd)
    back_z = _r3(1.0 - back_t / (2.0 * bd))

    text = f"""bbox = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(bh)}, True)
cube0 = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(seat_t)}, True)
cube1 = Cuboid({_fmt(bw)}, {_fmt(back_t)}, {_fmt(back_h)}, True)
cube2 = Cuboid({_fmt(leg_a)}, {_fmt(leg_a)}, {_fmt(leg_h)}, True)
cube3 = Cuboid({_fmt(leg_a)}, {_fmt(leg_a)}, {_fmt(leg_h)}, True)
attach(cube2, bbox, 0.500, 0.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(fz)})
attach(cube0, cube2, {_fmt(fx)}, 0.000, {_fmt(fz)}, 0.500, 1.000, 0.500)
attach(cube3, bbox, 0.500, 0.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(1.0 - fz)})
attach(cube3, cube0, 0.500, 1.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(1.0 - fz)})
attach(cube1, cube0, 0.500, 0.000, 0.500, 0.500, 1.000, {_fmt(back_z)})
reflect(cube2, X)
reflect(cube3, X)
"""
    labels = {"cube0": "seat", "cube1": "back", "cube2": "leg", "cube3": "leg"}
    return text, labels, "chair"


def table(rng=None, jitter=0.0):
    """Full-width top slab over four corner legs."""
    bw = _jit(rng, 1.20, jitter)
    bd = _jit(rng, 0.70, jitter)
    top_t = _jit(rng, 0.06, jitter)
    leg_a = _jit(rng, 0.07, jitter)
    leg_h = _jit(rng, 0.62, jitter)
    bh = _r3(leg_h + top_t)
    inset = _r3(0.015 + leg_a / 2.0)
    fx = _r3(inset / bw)
    fz = _r3(inset / bd)

    text = f"""bbox = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(bh)}, True)
cube0 = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(top_t)}, True)
cube1 = Cuboid({_fmt(leg_a)}, {_fmt(leg_a)}, {_fmt(leg_h)}, True)
cube2 = Cuboid({_fmt(leg_a)}, {_fmt(leg_a)}, {_fmt(leg_h)}, True)
attach(cube0, bbox, 0.500, 1.000, 0.500, 0.500, 1.000, 0.500)
attach(cube1, cube0, 0.500, 1.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(fz)})
attach(cube1, bbox, 0.500, 0.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(fz)})
attach(cube2, cube0, 0.500, 1.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(1.0 - fz)})
attach(cube2, bbox, 0.500, 0.000, 0.500, {_fmt(fx)}, 0.000, {_fmt(1.0 - fz)})
reflect(cube1, X)
reflect(cube2, X)
"""
    labels = {"cube0": "top", "cube1": "leg", "cube2": "leg"}
    return text, labels, "table"


def storage(rng=None, jitter=0.0, shelves=3):
    """Two side panels with evenly spaced shelves squeezed between them."""
    bw = _jit(rng, 0.80, jitter)
    bd = _jit(rng, 0.35, jitter)
    bh = _jit(rng, 1.00, jitter)
    pt = _jit(rng, 0.05, jitter)
    shelf_t = _jit(rng, 0.04, jitter)
    sw = _r3(bw - 2.0 * pt)
    plx = _r3(pt / (2.0 * bw))
    y0 = _r3(0.18)
    y1 = _r3(0.78)
    d = _r3(y1 - y0)

    lines = [
        f"bbox = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(bh)}, True)",
        f"cube0 = Cuboid({_fmt(pt)}, {_fmt(bd)}, {_fmt(bh)}, True)",
        f"cube1 = Cuboid({_fmt(pt)}, {_fmt(bd)}, {_fmt(bh)}, True)",
        f"cube2 = Cuboid({_fmt(sw)}, {_fmt(bd)}, {_fmt(shelf_t)}, True)",
        f"attach(cube0, bbox, 0.500, 0.000, 0.500, {_fmt(plx)}, 0.000, 0.500)",
        f"attach(cube0, bbox, 0.500, 1.000, 0.500, {_fmt(plx)}, 1.000, 0.500)",
        f"attach(cube1, bbox, 0.500, 0.000, 0.500, {_fmt(1.0 - plx)}, 0.000, 0.500)",
        f"attach(cube1, bbox, 0.500, 1.000, 0.500, {_fmt(1.0 - plx)}, 1.000, 0.500)",
        f"squeeze(cube2, cube1, cube0, right, {_fmt(y0)}, 0.500)",
    ]
    if shelves > 1:
        lines.append(f"translate(cube2, Y, {shelves - 1}, {_fmt(d)})")
    text = "\n".join(lines) + "\n"
    labels = {"cube0": "panel", "cube1": "panel", "cube2": "shelf"}
    return text, labels, "storage"


def stool(rng=None, jitter=0.0):
    """Seat over two mirrored H-leg assemblies (hierarchical sub-programs)."""
    bw = _jit(rng, 0.50, jitter)
    bd = _jit(rng, 0.42, jitter)
    seat_t = _jit(rng, 0.08, jitter)
    leg_w = _jit(rng, 0.06, jitter)
    leg_h = _jit(rng, 0.42, jitter)
    bh = _r3(leg_h + seat_t)
    lx = _r3(leg_w / (2.0 * bw) + 0.02)
    post_z = _r3(leg_w / (2.0 * bd))
    bar_len = _r3(bd - 2.0 * leg_w)

    text = f"""bbox = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(bh)}, True)
cube0 = Cuboid({_fmt(bw)}, {_fmt(bd)}, {_fmt(seat_t)}, True)
cube1 = Cuboid({_fmt(leg_w)}, {_fmt(bd)}, {_fmt(leg_h)}, True)
attach(cube0, bbox, 0.500, 1.000, 0.500, 0.500, 1.000, 0.500)
attach(cube1, cube0, 0.500, 1.000, 0.500, {_fmt(lx)}, 0.000, 0.500)
attach(cube1, bbox, 0.500, 0.000, 0.500, {_fmt(lx)}, 0.000, 0.500)
reflect(cube1, X)
Program cube1:
    bbox = Cuboid({_fmt(leg_w)}, {_fmt(bd)}, {_fmt(leg_h)}, True)
    cube0 = Cuboid({_fmt(leg_w)}, {_fmt(leg_w)}, {_fmt(leg_h)}, True)
    cube1 = Cuboid({_fmt(leg_w)}, {_fmt(leg_w)}, {_fmt(leg_h)}, True)
    cube2 = Cuboid({_fmt(leg_w)}, {_fmt(bar_len)}, {_fmt(leg_w)}, True)
    attach(cube0, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, {_fmt(post_z)})
    attach(cube0, bbox, 0.500, 1.000, 0.500, 0.500, 1.000, {_fmt(post_z)})
    attach(cube1, bbox, 0.500, 0.000, 0.500, 0.500, 0.000, {_fmt(1.0 - post_z)})
    attach(cube1, bbox, 0.500, 1.000, 0.500, 0.500, 1.000, {_fmt(1.0 - post_z)})
    squeeze(cube2, cube1, cube0, front, 0.500, 0.500)
"""
    labels = {"cube0": "seat", "cube1": "leg_assembly"}
    return text, labels, "chair"


FIXTURE_BUILDERS = {"chair": chair, "table": table, "storage": storage,
                    "stool": stool}


def all_fixture_texts(rng=None, jitter=0.0):
    return {name: fn(rng, jitter) for name, fn in FIXTURE_BUILDERS.items()}

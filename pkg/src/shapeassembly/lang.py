"""Tokenizer, parser, canonical printer, and token-level program measures.

Concrete syntax, one command per line:

    bbox = Cuboid(l, w, h, True)
    cube0 = Cuboid(l, w, h, aligned)
    attach(cube0, bbox, x1, y1, z1, x2, y2, z2)
    squeeze(cube1, bbox, bbox, top, u, v)
    reflect(cube0, X)
    translate(cube0, X, m, d)
    Program cube0:
        <indented sub-program, same four blocks>

Block order is bbox; cuboids; attach/squeeze; reflect/translate; sub-programs.
Cuboid arguments are positional (l, w, h): l spans the x extent, w the z
extent, h the y (up) extent.  The canonical printer writes numerals with three
decimals and is the normative writer for ``.sa`` files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .geometry import FACES

AXES_NAMES = ("X", "Y", "Z")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass
class CuboidDecl:
    name: str
    l: float
    w: float
    h: float
    aligned: bool
    line: int = 0


@dataclass
class Attach:
    c1: str
    c2: str
    x1: float
    y1: float
    z1: float
    x2: float
    y2: float
    z2: float
    line: int = 0

    def coords1(self):
        return (self.x1, self.y1, self.z1)

    def coords2(self):
        return (self.x2, self.y2, self.z2)


@dataclass
class Squeeze:
    c1: str
    c2: str
    c3: str
    face: str
    u: float
    v: float
    line: int = 0


@dataclass
class Reflect:
    c: str
    axis: str
    line: int = 0


@dataclass
class Translate:
    c: str
    axis: str
    m: int
    d: float
    line: int = 0


Command = CuboidDecl | Attach | Squeeze | Reflect | Translate


@dataclass
class Program:
    bbox: CuboidDecl
    cuboids: list[CuboidDecl] = field(default_factory=list)
    attaches: list[Attach | Squeeze] = field(default_factory=list)
    symmetries: list[Reflect | Translate] = field(default_factory=list)
    children: dict[str, "Program"] = field(default_factory=dict)

    def declared(self) -> list[str]:
        return ["bbox"] + [c.name for c in self.cuboids]

    def find_cuboid(self, name: str) -> CuboidDecl | None:
        if name == "bbox":
            return self.bbox
        for c in self.cuboids:
            if c.name == name:
                return c
        return None


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[=(),:]))"
)


def _tokenize_line(text: str, line_no: int) -> list[tuple[str, str, int]]:
    """Tokens as (kind, text, col); kind in {num, id, punct}."""
    out = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", line_no, pos + 1)
        for kind in ("num", "id", "punct"):
            tok = m.group(kind)
            if tok is not None:
                out.append((kind, tok, m.start(kind) + 1))
                break
        pos = m.end()
    return out


class _Cursor:
    def __init__(self, toks, line_no):
        self.toks = toks
        self.i = 0
        self.line = line_no

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, 0)

    def next(self, kind=None, text=None, what=""):
        if self.i >= len(self.toks):
            raise ParseError(f"unexpected end of line, expected {what or text or kind}",
                             self.line, self.toks[-1][2] if self.toks else 1)
        k, t, c = self.toks[self.i]
        if kind is not None and k != kind:
            raise ParseError(f"expected {what or kind}, found {t!r}", self.line, c)
        if text is not None and t != text:
            raise ParseError(f"expected {text!r}, found {t!r}", self.line, c)
        self.i += 1
        return t, c

    def done(self):
        if self.i != len(self.toks):
            _, t, c = self.toks[self.i]
            raise ParseError(f"trailing tokens starting at {t!r}", self.line, c)


def _parse_number(cur: _Cursor, what: str) -> float:
    t, _ = cur.next("num", what=what)
    return float(t)


def _parse_bool(cur: _Cursor) -> bool:
    t, c = cur.next("id", what="True or False")
    if t not in ("True", "False"):
        raise ParseError(f"expected True or False, found {t!r}", cur.line, c)
    return t == "True"


def _parse_args(cur: _Cursor, spec, names: set[str]) -> list:
    """Parse '(' args ')' per spec, where each spec entry is one of
    'num', 'int', 'id', 'face', 'axis'."""
    cur.next("punct", "(")
    vals = []
    for j, kind in enumerate(spec):
        if j:
            cur.next("punct", ",")
        if kind == "num":
            vals.append(_parse_number(cur, "a number"))
        elif kind == "int":
            t, c = cur.next("num", what="an integer")
            if not re.fullmatch(r"[-+]?\d+", t):
                raise ParseError(f"expected an integer, found {t!r}", cur.line, c)
            vals.append(int(t))
        elif kind == "id":
            t, c = cur.next("id", what="a cuboid name")
            if t not in names:
                raise ParseError(f"undeclared cuboid {t!r}", cur.line, c)
            vals.append(t)
        elif kind == "face":
            t, c = cur.next("id", what="a face name")
            if t not in FACES:
                raise ParseError(f"expected a face name, found {t!r}", cur.line, c)
            vals.append(t)
        elif kind == "axis":
            t, c = cur.next("id", what="an axis")
            if t not in AXES_NAMES:
                raise ParseError(f"expected axis X, Y or Z, found {t!r}", cur.line, c)
            vals.append(t)
    cur.next("punct", ")")
    cur.done()
    return vals


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_PHASE_NAMES = {0: "bounding box", 1: "cuboid declarations", 2: "attachments",
                3: "symmetries", 4: "sub-programs"}


def parse(text: str) -> Program:
    """Parse program text into an AST.

    Raises ParseError (with line/column) on lexical errors, arity errors,
    block-order errors, and references to undeclared cuboids.  Numeric range
    rules are not checked here; see interp.check_semantics.
    """
    lines = []
    for i, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == "":
            continue
        if "\t" in raw[:len(raw) - len(raw.lstrip())]:
            raise ParseError("tab in indentation; use spaces", i, 1)
        indent = len(raw) - len(raw.lstrip(" "))
        lines.append((indent, _tokenize_line(raw, i), i))
    if not lines:
        raise ParseError("empty program", 1, 1)
    prog, pos = _parse_block(lines, 0)
    if pos != len(lines):
        indent, _, ln = lines[pos]
        raise ParseError("unexpected dedent/indent structure", ln, indent + 1)
    return prog


def _parse_block(lines, pos) -> tuple[Program, int]:
    indent = lines[pos][0]
    names: set[str] = {"bbox"}
    bbox: CuboidDecl | None = None
    cuboids: list[CuboidDecl] = []
    attaches: list[Attach | Squeeze] = []
    symmetries: list[Reflect | Translate] = []
    children: dict[str, Program] = {}
    phase = 0

    def advance_phase(want: int, ln: int, col: int):
        nonlocal phase
        if want < phase:
            raise ParseError(
                f"{_PHASE_NAMES[want]} may not follow {_PHASE_NAMES[phase]}", ln, col)
        phase = want

    while pos < len(lines):
        line_indent, toks, ln = lines[pos]
        if line_indent < indent:
            break
        if line_indent > indent:
            raise ParseError("unexpected indent", ln, line_indent + 1)
        cur = _Cursor(toks, ln)
        kind, head, col = cur.peek()
        if kind != "id":
            raise ParseError(f"expected a command, found {head!r}", ln, col)

        if head == "Program":
            cur.next()
            name, ncol = cur.next("id", what="a cuboid name")
            if name not in names:
                raise ParseError(f"sub-program for undeclared cuboid {name!r}", ln, ncol)
            if name in children:
                raise ParseError(f"duplicate sub-program for {name!r}", ln, ncol)
            cur.next("punct", ":")
            cur.done()
            advance_phase(4, ln, col)
            pos += 1
            if pos >= len(lines) or lines[pos][0] <= indent:
                raise ParseError(f"sub-program for {name!r} has no body", ln, ncol)
            child, pos = _parse_block(lines, pos)
            children[name] = child
            continue

        if head in ("attach", "squeeze", "reflect", "translate"):
            cur.next()
            if head == "attach":
                advance_phase(2, ln, col)
                a = _parse_args(cur, ["id", "id"] + ["num"] * 6, names)
                attaches.append(Attach(*a, line=ln))
            elif head == "squeeze":
                advance_phase(2, ln, col)
                a = _parse_args(cur, ["id", "id", "id", "face", "num", "num"], names)
                attaches.append(Squeeze(*a, line=ln))
            elif head == "reflect":
                advance_phase(3, ln, col)
                a = _parse_args(cur, ["id", "axis"], names)
                symmetries.append(Reflect(*a, line=ln))
            else:
                advance_phase(3, ln, col)
                a = _parse_args(cur, ["id", "axis", "int", "num"], names)
                symmetries.append(Translate(*a, line=ln))
            pos += 1
            continue

        # cuboid declaration: name = Cuboid(l, w, h, aligned)
        name, _ = cur.next("id")
        cur.next("punct", "=")
        kw, kcol = cur.next("id", what="Cuboid")
        if kw != "Cuboid":
            raise ParseError(f"expected Cuboid, found {kw!r}", ln, kcol)
        cur.next("punct", "(")
        l = _parse_number(cur, "length")
        cur.next("punct", ",")
        w = _parse_number(cur, "width")
        cur.next("punct", ",")
        h = _parse_number(cur, "height")
        cur.next("punct", ",")
        aligned = _parse_bool(cur)
        cur.next("punct", ")")
        cur.done()
        if name == "bbox":
            if bbox is not None:
                raise ParseError("duplicate bbox declaration", ln, col)
            advance_phase(0, ln, col)
            bbox = CuboidDecl("bbox", l, w, h, aligned, line=ln)
            phase = 1
        else:
            if bbox is None:
                raise ParseError("program must start with a bbox declaration", ln, col)
            advance_phase(1, ln, col)
            if name in names:
                raise ParseError(f"duplicate cuboid {name!r}", ln, col)
            names.add(name)
            cuboids.append(CuboidDecl(name, l, w, h, aligned, line=ln))
        pos += 1

    if bbox is None:
        raise ParseError("program has no bbox declaration", lines[0][2], 1)
    return Program(bbox, cuboids, attaches, symmetries, children), pos


# ---------------------------------------------------------------------------
# canonical printer
# ---------------------------------------------------------------------------

def _num3(x: float) -> str:
    s = f"{float(x):.3f}"
    return "0.000" if s == "-0.000" else s


def _fmt(x: float, signature: bool) -> str:
    return "_" if signature else _num3(x)


def _command_text(cmd: Command, signature: bool) -> str:
    f = lambda x: _fmt(x, signature)
    if isinstance(cmd, CuboidDecl):
        return (f"{cmd.name} = Cuboid({f(cmd.l)}, {f(cmd.w)}, {f(cmd.h)}, "
                f"{'True' if cmd.aligned else 'False'})")
    if isinstance(cmd, Attach):
        return (f"attach({cmd.c1}, {cmd.c2}, {f(cmd.x1)}, {f(cmd.y1)}, {f(cmd.z1)}, "
                f"{f(cmd.x2)}, {f(cmd.y2)}, {f(cmd.z2)})")
    if isinstance(cmd, Squeeze):
        return (f"squeeze({cmd.c1}, {cmd.c2}, {cmd.c3}, {cmd.face}, "
                f"{f(cmd.u)}, {f(cmd.v)})")
    if isinstance(cmd, Reflect):
        return f"reflect({cmd.c}, {cmd.axis})"
    if isinstance(cmd, Translate):
        return f"translate({cmd.c}, {cmd.axis}, {cmd.m}, {f(cmd.d)})"
    raise TypeError(f"not a command: {cmd!r}")


def _print_block(p: Program, indent: int, signature: bool, out: list[str]) -> None:
    pad = " " * indent
    for cmd in [p.bbox, *p.cuboids, *p.attaches, *p.symmetries]:
        out.append(pad + _command_text(cmd, signature))
    for decl in p.cuboids:
        child = p.children.get(decl.name)
        if child is not None:
            out.append(pad + f"Program {decl.name}:")
            _print_block(child, indent + 4, signature, out)
    # bbox sub-programs are invalid but printable, so diagnostics round-trip
    if "bbox" in p.children:
        out.append(pad + "Program bbox:")
        _print_block(p.children["bbox"], indent + 4, signature, out)


def print_program(p: Program) -> str:
    """Canonical text: 3-decimal numerals, children depth-first after the root."""
    out: list[str] = []
    _print_block(p, 0, False, out)
    return "\n".join(out) + "\n"


def structural_signature(p: Program) -> str:
    """Canonical text with every continuous parameter replaced by a placeholder.

    Two programs get equal signatures exactly when they differ only in
    continuous parameter values.
    """
    out: list[str] = []
    _print_block(p, 0, True, out)
    return "\n".join(out) + "\n"


def programs_equal(a: Program, b: Program) -> bool:
    """Structural equality at canonical (3-decimal) precision."""
    return print_program(a) == print_program(b)


# ---------------------------------------------------------------------------
# token stream and edit distance
# ---------------------------------------------------------------------------

_EOL = ";"


def _num2(x: float) -> str:
    s = f"{float(x):.2f}"
    return "0.00" if s == "-0.00" else s


def _command_tokens(cmd: Command, out: list[str]) -> None:
    if isinstance(cmd, CuboidDecl):
        out += [cmd.name, "Cuboid", _num2(cmd.l), _num2(cmd.w), _num2(cmd.h),
                "True" if cmd.aligned else "False", _EOL]
    elif isinstance(cmd, Attach):
        out += ["attach", cmd.c1, cmd.c2,
                _num2(cmd.x1), _num2(cmd.y1), _num2(cmd.z1),
                _num2(cmd.x2), _num2(cmd.y2), _num2(cmd.z2), _EOL]
    elif isinstance(cmd, Squeeze):
        out += ["squeeze", cmd.c1, cmd.c2, cmd.c3, cmd.face,
                _num2(cmd.u), _num2(cmd.v), _EOL]
    elif isinstance(cmd, Reflect):
        out += ["reflect", cmd.c, cmd.axis, _EOL]
    elif isinstance(cmd, Translate):
        out += ["translate", cmd.c, cmd.axis, str(cmd.m), _num2(cmd.d), _EOL]


def token_stream(p: Program) -> list[str]:
    """Flat token sequence of the whole hierarchy (numerals at 2 decimals)."""
    out: list[str] = []
    for cmd in [p.bbox, *p.cuboids, *p.attaches, *p.symmetries]:
        _command_tokens(cmd, out)
    for decl in p.cuboids:
        child = p.children.get(decl.name)
        if child is not None:
            out += ["Program", decl.name, _EOL]
            out += token_stream(child)
    return out


def _levenshtein(a: list[int], b: list[int]) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    bv = np.array(b, dtype=np.int64)
    m = len(b)
    idx = np.arange(m + 1, dtype=np.int64)
    prev = idx.copy()
    for i, ca in enumerate(a, start=1):
        cost = (bv != ca).astype(np.int64)
        t = np.empty(m + 1, dtype=np.int64)
        t[0] = i
        t[1:] = np.minimum(prev[1:] + 1, prev[:-1] + cost)
        prev = np.minimum.accumulate(t - idx) + idx
    return int(prev[m])


def token_edit_distance(a: Program, b: Program) -> int:
    """Levenshtein distance between the canonical token streams."""
    ta, tb = token_stream(a), token_stream(b)
    vocab: dict[str, int] = {}
    enc = lambda ts: [vocab.setdefault(t, len(vocab)) for t in ts]
    return _levenshtein(enc(ta), enc(tb))


# ---------------------------------------------------------------------------
# program statistics
# ---------------------------------------------------------------------------

@dataclass
class ProgramStats:
    line_count: int
    reflect_rate: float
    translate_rate: float
    squeeze_rate: float
    total_macro_rate: float
    leaf_cuboid_count: int
    expanded_leaf_count: int


def _count_lines(p: Program) -> tuple[int, int, int, int]:
    lines = 1 + len(p.cuboids) + len(p.attaches) + len(p.symmetries)
    refl = sum(1 for s in p.symmetries if isinstance(s, Reflect))
    trans = sum(1 for s in p.symmetries if isinstance(s, Translate))
    sq = sum(1 for a in p.attaches if isinstance(a, Squeeze))
    for child in p.children.values():
        cl, cr, ct, cs = _count_lines(child)
        lines += cl
        refl += cr
        trans += ct
        sq += cs
    return lines, refl, trans, sq


def _leaf_counts(p: Program) -> tuple[int, int]:
    """(declared leaf cuboids, leaf count after symmetry expansion)."""
    declared = 0
    expanded = 0
    for decl in p.cuboids:
        mult = 1
        for s in p.symmetries:
            target = s.c
            if target == decl.name:
                mult *= 2 if isinstance(s, Reflect) else s.m + 1
        child = p.children.get(decl.name)
        if child is None:
            declared += 1
            expanded += mult
        else:
            cd, ce = _leaf_counts(child)
            declared += cd
            expanded += mult * ce
    return declared, expanded


def program_stats(p: Program) -> ProgramStats:
    lines, refl, trans, sq = _count_lines(p)
    declared, expanded = _leaf_counts(p)
    return ProgramStats(
        line_count=lines,
        reflect_rate=refl / lines,
        translate_rate=trans / lines,
        squeeze_rate=sq / lines,
        total_macro_rate=(refl + trans + sq) / lines,
        leaf_cuboid_count=declared,
        expanded_leaf_count=expanded,
    )

"""Reverse-mode automatic differentiation on scalars.

Every continuous quantity the interpreter touches is either a plain float or a
DiffScalar recorded on a Tape.  The math helpers in this module (sqrt, sin,
vmax, clamp, ...) dispatch on the argument type, so the same geometry code runs
in plain or differentiable mode.

Branching ops (vmin/vmax/clamp/vabs and explicit interpreter branches) use
one-sided subgradients: the derivative flows to the selected operand, with ties
resolved toward the first argument.  When a branch decision is closer than
``Tape.kink_tol`` to its tie point the tape records a kink flag; gradient
checks exclude flagged evaluations because the function is not differentiable
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ContractError

_EMPTY: tuple = ()


class Tape:
    """Append-only record of scalar operations, swept once in reverse."""

    __slots__ = ("parents", "partials", "kinks", "kink_tol")

    def __init__(self, kink_tol: float = 1e-3):
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.kinks: list[str] = []
        self.kink_tol = kink_tol

    def __len__(self) -> int:
        return len(self.parents)

    def node(self, value: float, parents: tuple[int, ...] = _EMPTY,
             partials: tuple[float, ...] = _EMPTY) -> "DiffScalar":
        """Append one operation record and return the scalar that names it.

        ``parents``/``partials`` may reference any earlier node; this is also
        the hook for custom ops whose local partials are computed externally
        (e.g. the vectorized point-cloud losses in :mod:`shapeassembly.fit`).
        """
        self.parents.append(parents)
        self.partials.append(partials)
        return DiffScalar(self, len(self.parents) - 1, value)

    def var(self, value: float) -> "DiffScalar":
        """Create an independent differentiation root."""
        return self.node(float(value))

    def flag_kink(self, tag: str) -> None:
        self.kinks.append(tag)


class DiffScalar:
    """A float plus a reference into the tape node that produced it."""

    __slots__ = ("tape", "idx", "v")

    def __init__(self, tape: Tape, idx: int, v: float):
        self.tape = tape
        self.idx = idx
        self.v = v
        if not math.isfinite(v):
            raise ContractError(f"non-finite scalar on tape: {v!r}")

    def __repr__(self):
        return f"DiffScalar({self.v!r}@{self.idx})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, o):
        if isinstance(o, DiffScalar):
            return self.tape.node(self.v + o.v, (self.idx, o.idx), (1.0, 1.0))
        return self.tape.node(self.v + o, (self.idx,), (1.0,))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, DiffScalar):
            return self.tape.node(self.v - o.v, (self.idx, o.idx), (1.0, -1.0))
        return self.tape.node(self.v - o, (self.idx,), (1.0,))

    def __rsub__(self, o):
        return self.tape.node(o - self.v, (self.idx,), (-1.0,))

    def __mul__(self, o):
        if isinstance(o, DiffScalar):
            return self.tape.node(self.v * o.v, (self.idx, o.idx), (o.v, self.v))
        return self.tape.node(self.v * o, (self.idx,), (float(o),))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, DiffScalar):
            inv = 1.0 / o.v
            return self.tape.node(self.v * inv, (self.idx, o.idx),
                                  (inv, -self.v * inv * inv))
        inv = 1.0 / o
        return self.tape.node(self.v * inv, (self.idx,), (inv,))

    def __rtruediv__(self, o):
        inv = 1.0 / self.v
        return self.tape.node(o * inv, (self.idx,), (-o * inv * inv,))

    def __neg__(self):
        return self.tape.node(-self.v, (self.idx,), (-1.0,))

    def __pow__(self, n):
        n = float(n)
        return self.tape.node(self.v ** n, (self.idx,), (n * self.v ** (n - 1.0),))

    # -- comparisons operate on values (used for interpreter branching) -----

    def __lt__(self, o):
        return self.v < _val(o)

    def __le__(self, o):
        return self.v <= _val(o)

    def __gt__(self, o):
        return self.v > _val(o)

    def __ge__(self, o):
        return self.v >= _val(o)


def _val(x) -> float:
    return x.v if isinstance(x, DiffScalar) else float(x)


def value(x) -> float:
    """Float value of a plain number or DiffScalar."""
    return x.v if isinstance(x, DiffScalar) else float(x)


def is_diff(x) -> bool:
    return isinstance(x, DiffScalar)


def tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, DiffScalar):
            return x.tape
    return None


# ---------------------------------------------------------------------------
# math helpers, generic over float / DiffScalar
# ---------------------------------------------------------------------------

def sqrt(x):
    if isinstance(x, DiffScalar):
        r = math.sqrt(x.v)
        return x.tape.node(r, (x.idx,), (0.5 / r,))
    return math.sqrt(x)


def sin(x):
    if isinstance(x, DiffScalar):
        return x.tape.node(math.sin(x.v), (x.idx,), (math.cos(x.v),))
    return math.sin(x)


def cos(x):
    if isinstance(x, DiffScalar):
        return x.tape.node(math.cos(x.v), (x.idx,), (-math.sin(x.v),))
    return math.cos(x)


def atan2(y, x):
    yv, xv = _val(y), _val(x)
    d = xv * xv + yv * yv
    out = math.atan2(yv, xv)
    if isinstance(y, DiffScalar) and isinstance(x, DiffScalar):
        return y.tape.node(out, (y.idx, x.idx), (xv / d, -yv / d))
    if isinstance(y, DiffScalar):
        return y.tape.node(out, (y.idx,), (xv / d,))
    if isinstance(x, DiffScalar):
        return x.tape.node(out, (x.idx,), (-yv / d,))
    return out


def _flag_near_tie(a, b, tag):
    t = tape_of(a, b)
    if t is not None and abs(_val(a) - _val(b)) < t.kink_tol:
        t.flag_kink(tag)


def vmax(a, b):
    """max with subgradient to the selected branch; ties pick the first arg."""
    _flag_near_tie(a, b, "max")
    return a if _val(a) >= _val(b) else b


def vmin(a, b):
    _flag_near_tie(a, b, "min")
    return a if _val(a) <= _val(b) else b


def clamp(x, lo, hi):
    """Clamp x into [lo, hi]; inside the interval the derivative is identity."""
    xv = _val(x)
    t = tape_of(x, lo, hi)
    if t is not None and (abs(xv - _val(lo)) < t.kink_tol or abs(xv - _val(hi)) < t.kink_tol):
        t.flag_kink("clamp")
    if xv < _val(lo):
        return lo
    if xv > _val(hi):
        return hi
    return x


def vabs(x):
    if isinstance(x, DiffScalar):
        if abs(x.v) < x.tape.kink_tol:
            x.tape.flag_kink("abs")
        return x if x.v >= 0.0 else -x
    return abs(x)


def hypot3(x, y, z):
    return sqrt(x * x + y * y + z * z)


# ---------------------------------------------------------------------------
# lift / gradient / finite differences
# ---------------------------------------------------------------------------

def lift(params, tape: Tape | None = None) -> list[DiffScalar]:
    """Turn plain values into independent differentiation roots on one tape."""
    if tape is None:
        tape = Tape()
    return [tape.var(p) for p in params]


_VALUE_KINKS = {"clamp", "min", "max", "abs"}


def structural_kinks(tape: Tape) -> list[str]:
    """Kink flags from discrete branch choices (axis picks, tau gates,
    degenerate rotations) rather than plain clamp/min/max ties.  Value-level
    ties are attributable to single parameters and handled per-parameter by
    finite-difference exclusion; structural ones make the whole evaluation
    unreliable for gradient checks."""
    return [k for k in tape.kinks if k not in _VALUE_KINKS]


def gradient(output: DiffScalar, roots) -> list[float]:
    """Exact reverse-mode derivatives of ``output`` w.r.t. each root.

    Roots the output does not depend on get derivative 0.
    """
    if not isinstance(output, DiffScalar):
        raise ContractError("gradient output is not on a tape")
    tape = output.tape
    adj = [0.0] * (output.idx + 1)
    adj[output.idx] = 1.0
    parents = tape.parents
    partials = tape.partials
    for i in range(output.idx, -1, -1):
        a = adj[i]
        if a == 0.0:
            continue
        for p, g in zip(parents[i], partials[i]):
            adj[p] += a * g
    out = []
    for r in roots:
        if not isinstance(r, DiffScalar) or r.tape is not tape:
            raise ContractError("gradient root does not belong to the output's tape")
        out.append(adj[r.idx] if r.idx <= output.idx else 0.0)
    return out


@dataclass
class FiniteDiffResult:
    """Comparison of analytic gradients against central finite differences."""

    max_rel_error: float
    analytic: list[float]
    numeric: list[float]
    rel_errors: list[float]
    excluded: list[int] = field(default_factory=list)  # nondifferentiable points


def finite_diff_check(f, params, eps: float = 1e-5) -> FiniteDiffResult:
    """Check reverse-mode gradients of ``f`` against central differences.

    ``f`` must accept a list of scalars (plain or lifted) and return one
    scalar.  A parameter sitting on a branch kink (forward and backward
    differences disagree) is reported in ``excluded`` and left out of
    ``max_rel_error``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    params = [float(p) for p in params]
    xs = lift(params)
    out = f(xs)
    if isinstance(out, DiffScalar):
        analytic = gradient(out, xs)
        f0 = out.v
    else:
        analytic = [0.0] * len(params)
        f0 = float(out)
    if not math.isfinite(f0):
        raise ContractError("f returned a non-finite value")

    numeric: list[float] = []
    rel_errors: list[float] = []
    excluded: list[int] = []
    max_err = 0.0
    for i in range(len(params)):
        hi = list(params)
        lo = list(params)
        hi[i] += eps
        lo[i] -= eps
        fp = float(value(f(hi)))
        fm = float(value(f(lo)))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ContractError("f returned a non-finite value during differencing")
        num = (fp - fm) / (2.0 * eps)
        numeric.append(num)
        fwd = (fp - f0) / eps
        bwd = (f0 - fm) / eps
        scale = max(abs(fwd), abs(bwd), 1e-6)
        if abs(fwd - bwd) > 0.02 * scale and abs(fwd - bwd) > 1e-6:
            # one-sided slopes disagree: the point is nondifferentiable
            excluded.append(i)
            rel_errors.append(float("nan"))
            continue
        err = abs(analytic[i] - num) / max(abs(analytic[i]), abs(num), 1e-8)
        rel_errors.append(err)
        max_err = max(max_err, err)
    return FiniteDiffResult(max_err, analytic, numeric, rel_errors, excluded)

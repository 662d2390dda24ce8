"""Command-line entry point: parse / check / run / extract / fit / score /
diff / expand / gradcheck.

Exit codes: 0 success, 1 validation or semantic failure, 2 usage error
(missing files, malformed inputs).  Diagnostics go to stderr; data artifacts
go to files or stdout.  A global --seed controls all sampling and is echoed in
every report.  SHAPEASM_THREADS caps internal parallelism (all built-in
subcommands run single-threaded; the cap is recorded for tools that fan out).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .cloud import (chamfer_distance, default_f_threshold, export_obj, f_score,
                    load_points, save_points)
from .errors import ParseError, ShapeAssemblyError
from .extract import (ExtractionConfig, extract_program, load_part_graph,
                      sample_cuboids, validate_program)
from .fit import FitConfig, chamfer_loss, fit_continuous, sample_shape_points
from .interp import check_semantics, execute, expand_program
from .lang import parse, print_program, program_stats, token_edit_distance
from .quality import quality_json, quality_table, stability

USAGE_ERROR = 2
FAILURE = 1


def _fail(msg: str, code: int = FAILURE) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _read_program(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse(text)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SHAPEASM_THREADS", "1")))
    except ValueError:
        return 1


def cmd_parse(args) -> int:
    try:
        prog = _read_program(args.program)
    except FileNotFoundError:
        return _fail(f"no such file: {args.program}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    text = print_program(prog)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_check(args) -> int:
    try:
        prog = _read_program(args.program)
    except FileNotFoundError:
        return _fail(f"no such file: {args.program}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    violations = check_semantics(prog)
    print(json.dumps([{"rule": v.rule, "message": v.message, "path": v.path,
                       "line": v.line} for v in violations], indent=2))
    return FAILURE if violations else 0


def cmd_run(args) -> int:
    try:
        prog = _read_program(args.program)
    except FileNotFoundError:
        return _fail(f"no such file: {args.program}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    try:
        shape = execute(prog, mode=args.mode, trace=args.trace is not None)
    except ShapeAssemblyError as e:
        return _fail(str(e))
    for w in shape.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.export_obj:
        export_obj(args.export_obj, shape.leaf_geoms())
    if args.export_pts:
        save_points(args.export_pts,
                    sample_shape_points(shape, args.n, args.seed))
    if args.trace:
        Path(args.trace).write_text("\n".join(shape.trace or []) + "\n",
                                    encoding="utf-8")
    print(f"leaf cuboids: {len(shape.leaves)}")
    return 0


def cmd_extract(args) -> int:
    try:
        graph = load_part_graph(args.graph)
    except FileNotFoundError:
        return _fail(f"no such file: {args.graph}", USAGE_ERROR)
    except (KeyError, ValueError, TypeError) as e:
        return _fail(f"malformed part graph: {e}", USAGE_ERROR)
    cfg = ExtractionConfig(seed=args.seed)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return _fail(f"no such file: {args.config}", USAGE_ERROR)
        for k, v in overrides.items():
            if not hasattr(cfg, k):
                return _fail(f"unknown extraction option {k!r}", USAGE_ERROR)
            setattr(cfg, k, v)
    try:
        prog = extract_program(graph, cfg)
    except ShapeAssemblyError as e:
        return _fail(f"extraction failed: {e}")
    text = print_program(prog)
    reparsed = parse(text)  # the canonical writer is normative
    report = validate_program(reparsed, graph, cfg)
    doc = report.to_dict()
    doc["seed"] = args.seed
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    print(f"validation: {'pass' if report.passed else 'FAIL'} "
          f"(fscore={report.fscore:.2f}, components={report.components}, "
          f"leaves={report.leaf_count})", file=sys.stderr)
    return 0 if report.passed else FAILURE


def cmd_fit(args) -> int:
    try:
        prog = _read_program(args.program)
        target = load_points(args.target)
    except FileNotFoundError as e:
        return _fail(f"no such file: {e.filename}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    mask = tuple(args.mask.split(",")) if args.mask else FitConfig().mask
    alias = {"dims": "dim", "attach_coords": "attach", "coords": "attach"}
    mask = tuple(alias.get(m, m) for m in mask)
    cfg = FitConfig(iterations=args.iters, step_size=args.lr, mask=mask,
                    samples=args.n, seed=args.seed)
    try:
        fitted, report = fit_continuous(prog, target, cfg)
    except ShapeAssemblyError as e:
        return _fail(str(e))
    out_text = print_program(fitted)
    if args.out:
        Path(args.out).write_text(out_text, encoding="utf-8")
    else:
        sys.stdout.write(out_text)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    if args.trace:
        Path(args.trace).write_text(report.trace_csv(), encoding="utf-8")
    print(f"chamfer: {report.initial_chamfer:.6f} -> {report.final_chamfer:.6f} "
          f"({report.iterations_run} iterations)", file=sys.stderr)
    return 0


def cmd_score(args) -> int:
    rows = []
    for path in args.programs:
        try:
            prog = _read_program(path)
            shape = execute(prog, mode="hier")
        except FileNotFoundError:
            return _fail(f"no such file: {path}", USAGE_ERROR)
        except ShapeAssemblyError as e:
            return _fail(f"{path}: {e}")
        rep = stability(shape)
        stats = program_stats(prog)
        rows.append({"program": path, "rooted": rep.rooted, "stable": rep.stable,
                     "leaves": len(shape.leaves), "lines": stats.line_count,
                     "macro_rate": round(stats.total_macro_rate, 4),
                     "reflect_rate": round(stats.reflect_rate, 4),
                     "translate_rate": round(stats.translate_rate, 4),
                     "squeeze_rate": round(stats.squeeze_rate, 4),
                     "leaf_declarations": stats.leaf_cuboid_count,
                     "expanded_leaves": stats.expanded_leaf_count,
                     "seed": args.seed})
    print(json.dumps(rows if len(rows) > 1 else rows[0], indent=2))
    return 0


def cmd_diff(args) -> int:
    try:
        a = _read_program(args.a)
        b = _read_program(args.b)
    except FileNotFoundError as e:
        return _fail(f"no such file: {e.filename}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    print(token_edit_distance(a, b))
    return 0


def cmd_expand(args) -> int:
    try:
        prog = _read_program(args.program)
    except FileNotFoundError:
        return _fail(f"no such file: {args.program}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    try:
        expanded = expand_program(prog)
    except ShapeAssemblyError as e:
        return _fail(str(e))
    sys.stdout.write(print_program(expanded))
    return 0


def cmd_gradcheck(args) -> int:
    try:
        prog = _read_program(args.program)
    except FileNotFoundError:
        return _fail(f"no such file: {args.program}", USAGE_ERROR)
    except ParseError as e:
        return _fail(str(e))
    from .interp import enumerate_params
    import copy

    base = execute(prog, mode="hier")
    target = sample_shape_points(base, args.n, args.seed + 1)

    def loss_of(values):
        p2 = copy.deepcopy(prog)
        for ref, v in zip(enumerate_params(p2), values):
            ref.set(ad.value(v))
        if isinstance(values[0], ad.DiffScalar):
            sh = execute(p2, mode="hier", differentiable=True)
            return chamfer_loss(sh, target, args.n, args.seed)
        sh = execute(p2, mode="hier")
        return chamfer_distance(sample_shape_points(sh, args.n, args.seed), target)

    params = [r.get() for r in enumerate_params(prog)]
    res = ad.finite_diff_check(loss_of, params, eps=args.eps)
    print(json.dumps({"max_rel_error": res.max_rel_error,
                      "checked": len(params) - len(res.excluded),
                      "excluded_nondifferentiable": res.excluded,
                      "seed": args.seed}, indent=2))
    return 0 if res.max_rel_error < 1e-4 else FAILURE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shapeasm",
                                 description="cuboid shape-structure programs: "
                                             "parse, execute, extract, fit, score")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for all sampling (default 0)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse and reprint canonically")
    p.add_argument("program")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("check", help="report semantic-validity violations")
    p.add_argument("program")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("run", help="execute a program and export artifacts")
    p.add_argument("program")
    p.add_argument("--mode", choices=("flat", "hier"), default="hier")
    p.add_argument("--export-obj")
    p.add_argument("--export-pts")
    p.add_argument("--trace")
    p.add_argument("--n", type=int, default=2048, help="points for --export-pts")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("extract", help="extract a program from a part graph")
    p.add_argument("graph")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("fit", help="fit continuous parameters to a point cloud")
    p.add_argument("program")
    p.add_argument("target")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--mask", help="comma list: dims,attach,squeeze,translate_d")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--trace")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("score", help="rootedness/stability/program statistics")
    p.add_argument("programs", nargs="+")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("diff", help="token edit distance between two programs")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(fn=cmd_diff)

    p = sub.add_parser("expand", help="print the macro-expanded program")
    p.add_argument("program")
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("program")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--n", type=int, default=512)
    p.set_defaults(fn=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    np.seterr(all="ignore")
    _threads()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ShapeAssemblyError as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())

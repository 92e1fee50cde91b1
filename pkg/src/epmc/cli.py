"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from fractions import Fraction

from . import generators, pipeline, ratfun
from .benchmarks import BENCH_FIELDS, compare
from .errors import EpmcError
from .model import load_model
from .patterns import load_repository
from .properties import load_properties
from .verify import verify_repository

log = logging.getLogger("epmc")

def _parse_binding(text: str) -> tuple[str, Fraction]:
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise EpmcError(f"binding {text!r} must look like name=value")
    try:
        return name.strip(), Fraction(value.strip())
    except ValueError:
        raise EpmcError(f"binding {text!r} has a non-numeric value") from None


def _parse_sweep(text: str):
    name, sep, rng = text.partition("=")
    parts = rng.split(":")
    if not sep or len(parts) != 3:
        raise EpmcError(f"sweep {text!r} must look like var=start:stop:step")
    a, b, step = (Fraction(p) for p in parts)
    if step <= 0:
        raise EpmcError("sweep step must be positive")
    values = []
    v = a
    while v <= b:
        values.append(v)
        v += step
    return name.strip(), values


# -- subcommands ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    src = load_model(args.model)
    queries = load_properties(args.props)
    t0 = time.perf_counter()
    if args.mono:
        fs = pipeline.mono_check(src, queries)
    else:
        fs = pipeline.epmc_check(src, load_repository(args.repo), queries)
    elapsed = time.perf_counter() - t0
    if args.out:
        pipeline.emit_script(fs, args.out)
    else:
        sys.stdout.write(pipeline.emit_script(fs))
    for name, f in fs.stage1:
        print(f"# {name}: {ratfun.op_count(f)} operations", file=sys.stderr)
    for pname, (text, f) in zip(pipeline.script_names(fs), fs.stage2):
        print(f"# {pname} {text}: {ratfun.op_count(f)} operations", file=sys.stderr)
    for d in fs.diagnostics:
        print(f"# warning: {d}", file=sys.stderr)
    print(f"# total size {pipeline.formula_set_size(fs)} operations; {elapsed:.3f} s", file=sys.stderr)
    return 0


def cmd_mono(args) -> int:
    args.mono = True
    return cmd_check(args)


def cmd_eval(args) -> int:
    fs = pipeline.load_script(args.formulas)
    binding = dict(_parse_binding(b) for b in args.bind or ())
    names = pipeline.script_names(fs)
    if not args.sweep:
        values = pipeline.eval_formula_set(fs, binding)
        for pname, (text, v) in zip(names, values.items()):
            print(f"{pname} = {v:.12g}    % {text}")
        return 0
    var, points = _parse_sweep(args.sweep)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([var] + names)
    for x in points:
        values = pipeline.eval_formula_set(fs, {**binding, var: x})
        w.writerow([f"{float(x):.12g}"] + [f"{v:.12g}" for v in values.values()])
    sys.stdout.write(out.getvalue())
    return 0


def cmd_verify_repo(args) -> int:
    repo = load_repository(args.repo)
    report = verify_repository(repo, args.samples, args.tol, args.seed)
    print(report.to_json() if args.json else report.to_text())
    return 0 if report.passed else 2


def cmd_gen(args) -> int:
    spec = generators.GeneratorSpec(args.family, args.pattern, args.services, args.deployment)
    g = generators.generate(spec)
    if args.out_dir is None:
        sys.stdout.write(g.monolithic if args.monolithic else g.annotated)
        return 0
    os.makedirs(args.out_dir, exist_ok=True)
    stem = {"running-example": "running_example", "fx": f"fx_{args.pattern}_{args.services}",
            "multitier": f"multitier_{args.deployment.upper()}"}[args.family]
    files = {f"{stem}.pm": g.annotated, f"{stem}_mono.pm": g.monolithic, f"{stem}.pctl": g.properties_text()}
    for name, text in files.items():
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text)
        print(os.path.join(args.out_dir, name))
    print(f"# repository: {g.repository}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    specs = []
    if args.family == "fx":
        for pattern in args.patterns.split(","):
            for n in _int_list(args.services):
                specs.append(generators.GeneratorSpec("fx", pattern.strip(), n))
    elif args.family == "multitier":
        specs = [generators.GeneratorSpec("multitier", deployment=d.strip()) for d in args.deployments.split(",")]
    else:
        specs = [generators.GeneratorSpec("running-example")]
    out = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        for spec in specs:
            w.writerow(compare(spec, args.timeout, args.samples, args.seed).row())
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


# -- argument parsing ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epmc", description="Pattern-based parametric model checking of Markov chains")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="two-stage check of a pattern-annotated model")
    c.add_argument("--model", required=True)
    c.add_argument("--repo", default="builtin:sbs?n=2", help="repository file or builtin:sbs?n=K / builtin:multitier?m=K&nmax=J")
    c.add_argument("--props", required=True)
    c.add_argument("--out", help="write the formula script here (default: stdout)")
    c.add_argument("--mono", action="store_true", help="ignore annotations and check the model directly")
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("mono", help="monolithic parametric check")
    m.add_argument("--model", required=True)
    m.add_argument("--props", required=True)
    m.add_argument("--out")
    m.set_defaults(func=cmd_mono, repo=None)

    e = sub.add_parser("eval", help="evaluate a formula script")
    e.add_argument("--formulas", required=True)
    e.add_argument("--bind", action="append", metavar="NAME=VALUE")
    e.add_argument("--sweep", metavar="VAR=START:STOP:STEP", help="emit CSV over a range of VAR")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify-repo", help="check repository expressions against explicit pattern MCs")
    v.add_argument("--repo", required=True)
    v.add_argument("--samples", type=int, default=50)
    v.add_argument("--tol", type=float, default=1e-9)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_verify_repo)

    g = sub.add_parser("gen", help="generate benchmark models")
    g.add_argument("family", choices=generators.FAMILIES)
    g.add_argument("--pattern", default="SEQ")
    g.add_argument("--services", type=int, default=2)
    g.add_argument("--deployment", default="D1")
    g.add_argument("--monolithic", action="store_true", help="print the monolithic model instead of the annotated one")
    g.add_argument("--out-dir", help="write annotated, monolithic and property files here")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="compare two-stage and monolithic checking")
    b.add_argument("family", choices=generators.FAMILIES)
    b.add_argument("--patterns", default="SEQ,PAR,PROB,SEQ_R,SEQ_R1,PAR_R,PROB_R,PROB_R1")
    b.add_argument("--services", default="1-3", help="e.g. 1-3 or 2,4")
    b.add_argument("--deployments", default="D1,D2,D3,D4,D5")
    b.add_argument("--timeout", type=float, default=300.0, help="seconds per monolithic cell")
    b.add_argument("--samples", type=int, default=0, help="also compare both formula sets at this many valuations")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", help="output file (default: stdout)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (EpmcError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

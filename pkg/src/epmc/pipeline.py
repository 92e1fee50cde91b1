"""Two-stage pattern-based checking, the monolithic baseline, and formula sets.

Stage 1 instantiates repository expressions for every pattern-derived
parameter (``prob1``, ``time3``, ``p_11A``...) that the model uses.  Stage 2
model-checks the abstract model, treating those names as plain parameters.
"""

from __future__ import annotations

import faulthandler
import logging
import multiprocessing
import os
import random
import resource
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence, Union

from . import engine, ratfun
from .errors import (
    ArityMismatch,
    EpmcError,
    MissingPatternProperty,
    ParseError,
    UnknownPattern,
    UnresolvedAnnotation,
    WorkerDied,
)
from .model import ModelSource, ParameterConstraints, ParametricMC, build_states
from .oracle import base_parameters
from .patterns import PatternRepository, instantiate
from .properties import Query, parse_property
from .ratfun import RationalFunction

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FormulaSet:
    stage1: tuple[tuple[str, RationalFunction], ...] = ()
    stage2: tuple[tuple[str, RationalFunction], ...] = ()
    metadata: Mapping[str, object] = field(default_factory=dict)

    def formula(self, key: Union[str, int]) -> RationalFunction:
        """Stage-2 formula by query text or position, or stage-1 entry by name."""
        if isinstance(key, int):
            return self.stage2[key][1]
        for name, f in self.stage2:
            if name == key:
                return f
        for name, f in self.stage1:
            if name == key:
                return f
        raise KeyError(key)

    @property
    def diagnostics(self) -> list:
        return list(self.metadata.get("diagnostics", ()))


def _derived_parameters(src: ModelSource, repo: PatternRepository, used: set[str]):
    """Map each used pattern-derived parameter to (annotation, property)."""
    universe = repo.property_universe()
    out = {}
    for ann in src.annotations:
        try:
            defn, _ = repo.resolve(ann.pattern_name, ann.actuals)
        except (UnknownPattern, ArityMismatch) as e:
            raise UnresolvedAnnotation(f"annotation {ann.id} ({ann}): {e}") from e
        for name in sorted(used):
            if not name.endswith(ann.id):
                continue
            prop = name[: len(name) - len(ann.id)]
            if prop not in universe:
                continue
            if prop not in defn.properties:
                raise MissingPatternProperty(
                    name, f"pattern {defn.name} of annotation {ann.id} has no property {prop!r}")
            out.setdefault(name, (ann, prop))
    return out


def epmc_check(src: ModelSource, repo: PatternRepository, queries: Sequence[Query],
               mc: ParametricMC | None = None) -> FormulaSet:
    t0 = time.perf_counter()
    mc = mc if mc is not None else build_states(src)
    derived = _derived_parameters(src, repo, set(mc.free_variables()))
    # property-major order following the repository definitions (prob1, prob2, ..., cost1, ...)
    props_order: list[str] = []
    for ann in src.annotations:
        defn, _ = repo.resolve(ann.pattern_name, ann.actuals)
        for prop in defn.properties:
            if prop not in props_order and derived.get(ann.derived_name(prop)) == (ann, prop):
                props_order.append(prop)
    stage1 = []
    for prop in props_order:
        for ann in src.annotations:
            name = ann.derived_name(prop)
            if derived.get(name) == (ann, prop):
                stage1.append(instantiate(repo, ann, prop))
    names = {n for n, _ in stage1}
    for n, f in stage1:
        if f.variables & names:
            raise EpmcError(f"stage-1 expression {n} refers to another pattern-derived parameter")
    t1 = time.perf_counter()
    stage2, diags = _stage2(mc, queries)
    t2 = time.perf_counter()
    meta = {
        "model": src.path or "<text>",
        "repository": repo.provenance,
        "stage1_seconds": t1 - t0,
        "stage2_seconds": t2 - t1,
        "seconds": t2 - t0,
        "states": mc.n_states,
        "transitions": mc.n_transitions,
        "diagnostics": tuple(diags),
    }
    return FormulaSet(tuple(stage1), tuple(stage2), meta)


def _stage2(mc: ParametricMC, queries: Sequence[Query]):
    diags: list = []
    out = []
    for q in queries:
        out.append((str(q), engine.check(mc, q, diags)))
    return out, diags


def mono_check(model: Union[ModelSource, ParametricMC], queries: Sequence[Query]) -> FormulaSet:
    t0 = time.perf_counter()
    mc = model if isinstance(model, ParametricMC) else build_states(model)
    stage2, diags = _stage2(mc, queries)
    meta = {
        "model": getattr(model, "path", None) or "<mc>",
        "repository": "",
        "seconds": time.perf_counter() - t0,
        "states": mc.n_states,
        "transitions": mc.n_transitions,
        "diagnostics": tuple(diags),
    }
    return FormulaSet((), tuple(stage2), meta)


def _run_child(conn, fn, args, memory_limit):
    # native allocators print and abort on exhaustion; keep that quiet, the parent reports it
    faulthandler.disable()
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.dup2(devnull, 2)
    if memory_limit is not None:
        resource.setrlimit(resource.RLIMIT_AS, (memory_limit, memory_limit))
    try:
        conn.send(("ok", fn(*args)))
    except MemoryError:
        conn.close()
        os._exit(1)
    except BaseException as e:  # reported to the parent
        conn.send(("err", e))
    finally:
        conn.close()


def run_with_timeout(fn: Callable, args: tuple, timeout: float | None, memory_limit: int | None = None):
    """Run ``fn(*args)`` in a forked process; ``None`` if it exceeds ``timeout`` seconds.

    ``memory_limit`` caps the child's address space in bytes.  A child that dies
    without answering raises ``WorkerDied``."""
    if timeout is None and memory_limit is None:
        return fn(*args)
    ctx = multiprocessing.get_context("fork")
    parent, child = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_run_child, args=(child, fn, args, memory_limit), daemon=True)
    proc.start()
    child.close()
    try:
        if not parent.poll(timeout):
            return None
        status, value = parent.recv()
    except EOFError:
        raise WorkerDied("worker process died without a result") from None
    finally:
        if proc.is_alive():
            proc.kill()
        proc.join()
        parent.close()
    if status == "err":
        raise value
    return value


def eval_formula_set(fs: FormulaSet, valuation: Mapping[str, object]) -> dict[str, float]:
    """Evaluate stage 1, extend the valuation with its results, then stage 2 (exactly)."""
    val = {k: Fraction(v) for k, v in valuation.items()}
    for name, f in fs.stage1:
        val[name] = ratfun.evaluate(f, val)
    return {text: float(ratfun.evaluate(f, val)) for text, f in fs.stage2}


def max_disagreement(a: FormulaSet, b: FormulaSet, constraints: ParameterConstraints, samples: int = 100,
                     seed: int = 0) -> float:
    """Largest per-property difference between two formula sets (matched by
    position) over ``samples`` admissible valuations."""
    if len(a.stage2) != len(b.stage2):
        raise EpmcError("formula sets answer different numbers of queries")
    rng = random.Random(seed)
    names = base_parameters(a) | base_parameters(b)
    worst = 0.0
    for _ in range(samples):
        val = constraints.sample(names, rng)
        va, vb = eval_formula_set(a, val), eval_formula_set(b, val)
        worst = max([worst] + [abs(x - y) for x, y in zip(va.values(), vb.values())])
    return worst


def formula_set_size(fs: FormulaSet) -> int:
    return sum(ratfun.op_count(f) for _, f in fs.stage1) + sum(ratfun.op_count(f) for _, f in fs.stage2)


def script_names(fs: FormulaSet) -> list[str]:
    return [f"P{i}" for i in range(1, len(fs.stage2) + 1)]


def emit_script(fs: FormulaSet, path: str | None = None) -> str:
    """Plain assignment script (``%`` comments, ``name = expr;``); deterministic."""
    lines = ["% pattern-based parametric model checking formula set"]
    if fs.metadata.get("model"):
        lines.append(f"% model: {fs.metadata['model']}")
    if fs.metadata.get("repository"):
        lines.append(f"% repository: {fs.metadata['repository']}")
    for name, f in fs.stage1:
        lines.append(f"{name} = {f};")
    for pname, (text, f) in zip(script_names(fs), fs.stage2):
        lines.append(f"% {text}")
        lines.append(f"{pname} = {f};")
    out = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(out)
    return out


def parse_script(text: str) -> FormulaSet:
    """Inverse of :func:`emit_script`; ``P<k>`` lines become stage-2 entries."""
    stage1, stage2 = [], []
    pending = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("%"):
            body = line[1:].strip()
            try:
                parse_property(body)
                pending = body
            except EpmcError:
                pass
            continue
        if "=" not in line or not line.endswith(";"):
            raise ParseError(f"line {lineno}: expected 'name = expression;'")
        name, expr = line[:-1].split("=", 1)
        name = name.strip()
        f = ratfun.parse_expression(expr)
        if pending is not None and name.startswith("P") and name[1:].isdigit():
            stage2.append((pending, f))
            pending = None
        elif name.startswith("P") and name[1:].isdigit():
            stage2.append((name, f))
        else:
            stage1.append((name, f))
    return FormulaSet(tuple(stage1), tuple(stage2), {})


def load_script(path: str) -> FormulaSet:
    with open(path, encoding="utf-8") as fh:
        return parse_script(fh.read())


__all__ = [
    "FormulaSet", "epmc_check", "mono_check", "eval_formula_set", "max_disagreement",
    "formula_set_size", "emit_script",
    "parse_script", "load_script", "run_with_timeout",
]

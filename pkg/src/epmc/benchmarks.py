"""Annotated-vs-monolithic comparison runs over the generated model families."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

from . import pipeline
from .errors import WorkerDied
from .generators import GeneratorSpec, generate
from .model import build_states, parse_model
from .patterns import load_repository
from .properties import parse_property

BENCH_FIELDS = ("family", "config", "states_annotated", "states_monolithic", "epmc_seconds", "mono_seconds",
                "epmc_size", "mono_size", "max_diff")


@dataclass
class Comparison:
    spec: GeneratorSpec
    states_annotated: int
    states_monolithic: int
    epmc_seconds: float
    epmc_size: int
    mono_seconds: float | None = None
    mono_size: int | None = None
    max_diff: float | None = None  # None: not sampled
    mono_status: str = "ok"  # "ok", "T" (timed out) or "M" (ran out of memory)

    @property
    def config(self) -> str:
        s = self.spec
        return {"running-example": "", "fx": f"{s.pattern}/{s.services}", "multitier": s.deployment}[s.family]

    @property
    def completed(self) -> bool:
        return self.mono_status == "ok"

    def row(self) -> dict:
        fmt = lambda x, f="{:.3f}": self.mono_status if x is None else f.format(x)
        return {
            "family": self.spec.family, "config": self.config,
            "states_annotated": self.states_annotated, "states_monolithic": self.states_monolithic,
            "epmc_seconds": f"{self.epmc_seconds:.3f}", "mono_seconds": fmt(self.mono_seconds),
            "epmc_size": self.epmc_size, "mono_size": fmt(self.mono_size, "{}"),
            "max_diff": "" if self.max_diff is None else f"{self.max_diff:.3e}",
        }


def _mono_job(mc, queries, epmc_fs, constraints, samples, seed):
    t0 = time.perf_counter()
    mono = pipeline.mono_check(mc, queries)
    seconds = time.perf_counter() - t0
    diff = pipeline.max_disagreement(epmc_fs, mono, constraints, samples, seed) if samples else None
    return seconds, pipeline.formula_set_size(mono), diff


def default_memory_limit() -> int | None:
    """Three quarters of physical memory, so a runaway child cannot take the host down."""
    try:
        return int(os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES") * 0.75)
    except (ValueError, OSError, AttributeError):
        return None


def compare(spec: GeneratorSpec, timeout: float | None = 300.0, samples: int = 0, seed: int = 0,
            memory_limit: int | None = -1) -> Comparison:
    """ePMC vs monolithic checking of one generated configuration.

    The monolithic check (and, when ``samples`` > 0, the evaluation of both
    formula sets at that many admissible valuations) runs in a child process
    bounded by ``timeout`` seconds and ``memory_limit`` bytes (-1: the default
    limit, None: unlimited)."""
    if memory_limit == -1:
        memory_limit = default_memory_limit()
    g = generate(spec)
    queries = [parse_property(q) for q in g.properties]
    src = parse_model(g.annotated)
    t0 = time.perf_counter()
    fs = pipeline.epmc_check(src, load_repository(g.repository), queries)
    t_epmc = time.perf_counter() - t0
    mono_src = parse_model(g.monolithic)
    mc = build_states(mono_src)
    constraints = src.constraints.merge(mono_src.constraints)
    out = Comparison(spec, fs.metadata["states"], mc.n_states, t_epmc, pipeline.formula_set_size(fs))
    try:
        res = pipeline.run_with_timeout(_mono_job, (mc, queries, fs, constraints, samples, seed), timeout,
                                        memory_limit)
    except WorkerDied:
        out.mono_status = "M"
        return out
    if res is None:
        out.mono_status = "T"
    else:
        out.mono_seconds, out.mono_size, out.max_diff = res
    return out


__all__ = ["BENCH_FIELDS", "Comparison", "compare", "default_memory_limit"]

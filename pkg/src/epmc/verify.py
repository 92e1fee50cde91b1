"""Repository verification: closed-form pattern expressions against the
explicit pattern MCs, both symbolically (engine) and numerically (oracle)."""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field

from . import engine, ratfun
from .errors import EpmcError
from .oracle import numeric_check, specialize
from .patterns import (
    SERVER_FORMALS,
    PatternDefinition,
    PatternRepository,
    SBSInstance,
    instance_for,
    outcome_name,
    pattern_mc,
    sbs_formals,
)
from .properties import Atom, Or, ProbReach, RewardReach


@dataclass
class VerificationEntry:
    pattern: str
    property: str
    status: str  # "pass", "fail" or "skipped"
    canonical: bool | None = None
    max_diff: float = 0.0
    detail: str = ""

    def to_text(self) -> str:
        canon = {True: "canonical", False: "NOT canonical", None: "-"}[self.canonical]
        line = f"{self.status.upper():7s} {self.pattern}.{self.property}  [{canon}; max diff {self.max_diff:.2e}]"
        return line + (f"  {self.detail}" if self.detail else "")


@dataclass
class VerificationReport:
    repository: str
    samples: int
    tol: float
    entries: list[VerificationEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.status != "fail" for e in self.entries)

    @property
    def failures(self) -> list[VerificationEntry]:
        return [e for e in self.entries if e.status == "fail"]

    def to_text(self) -> str:
        counts = {s: sum(e.status == s for e in self.entries) for s in ("pass", "fail", "skipped")}
        head = (f"repository {self.repository}: {counts['pass']} passed, {counts['fail']} failed, "
                f"{counts['skipped']} skipped ({self.samples} samples, tol {self.tol:g})")
        return "\n".join([head] + [e.to_text() for e in self.entries])

    def to_json(self) -> str:
        return json.dumps({
            "repository": self.repository, "samples": self.samples, "tol": self.tol, "passed": self.passed,
            "entries": [e.__dict__ for e in self.entries],
        }, sort_keys=True)


def _canonical_formals(inst) -> tuple[str, ...]:
    if isinstance(inst, SBSInstance):
        return sbs_formals(inst.kind, inst.n)
    return SERVER_FORMALS[inst.kind]


def _queries(inst, defn: PatternDefinition):
    """Map property -> query on the pattern MC (None when there is no oracle)."""
    out = {}
    if isinstance(inst, SBSInstance):
        ends = Or(Atom("succ"), Atom("fail"))
        for prop in defn.properties:
            if prop == "prob":
                out[prop] = ProbReach(Atom("succ"))
            elif prop in ("cost", "time"):
                out[prop] = RewardReach(prop, ends)
            else:
                out[prop] = None
        return out
    for prop in defn.properties:
        digits = prop[2:]
        ok = prop.startswith("p_") and len(digits) == len(inst.ns) and all(c in "012" for c in digits)
        out[prop] = ProbReach(Atom("b_" + digits)) if ok else None
    return out


def verify_definition(defn: PatternDefinition, samples: int = 50, tol: float = 1e-9,
                      rng: random.Random | None = None) -> list[VerificationEntry]:
    rng = rng or random.Random(0)
    inst = instance_for(defn)
    if inst is None:
        return [VerificationEntry(defn.name, p, "skipped", detail="no explicit pattern semantics for this name/arity")
                for p in defn.properties]
    pm = pattern_mc(inst).mc
    formals = _canonical_formals(inst)
    rename = {f: ratfun.var(c) for f, c in zip(defn.formals, formals) if f != c}
    exprs = {p: ratfun.substitute(e, rename) if rename else e for p, e in defn.properties.items()}
    queries = _queries(inst, defn)
    subst = pm.constraints.row_sum_substitution()
    entries: dict[str, VerificationEntry] = {}
    for prop, q in queries.items():
        if q is None:
            entries[prop] = VerificationEntry(defn.name, prop, "skipped", detail="no oracle for this property")
            continue
        try:
            sym = engine.check(pm, q)
            a, b = (ratfun.substitute(sym, subst), ratfun.substitute(exprs[prop], subst)) if subst else (sym, exprs[prop])
            canonical = a == b
        except EpmcError as e:
            entries[prop] = VerificationEntry(defn.name, prop, "fail", detail=str(e))
            continue
        entries[prop] = VerificationEntry(defn.name, prop, "pass", canonical)
    names = set(formals)
    for _ in range(samples):
        val = pm.constraints.sample(names, rng)
        cmc = specialize(pm, val)
        for prop, q in queries.items():
            e = entries[prop]
            if q is None or e.status == "fail" and e.canonical is None:
                continue
            try:
                got = float(ratfun.evaluate(exprs[prop], val))
            except EpmcError as err:
                e.status, e.detail = "fail", f"expression cannot be evaluated: {err}"
                continue
            diff = abs(got - numeric_check(cmc, q))
            e.max_diff = max(e.max_diff, diff)
    for e in entries.values():
        if e.status == "pass" and (e.max_diff > tol or e.canonical is False):
            e.status = "fail"
            e.detail = "closed form disagrees with the pattern's explicit MC"
    out = list(entries.values())
    if not isinstance(inst, SBSInstance):
        out.append(_normalization(defn, inst, exprs))
    return out


def _normalization(defn: PatternDefinition, inst, exprs) -> VerificationEntry:
    wanted = [outcome_name(b) for b in itertools.product(range(3), repeat=len(inst.ns))]
    missing = [w for w in wanted if w not in exprs]
    if missing:
        return VerificationEntry(defn.name, "sum(p_b)", "fail", detail=f"missing outcome properties {missing}")
    total = ratfun.total(exprs[w] for w in wanted)
    ok = total.is_one()
    return VerificationEntry(defn.name, "sum(p_b)", "pass" if ok else "fail", ok,
                             detail="" if ok else f"outcome probabilities sum to {total}")


def verify_repository(repo: PatternRepository, samples: int = 50, tol: float = 1e-9, seed: int = 0,
                      names=None) -> VerificationReport:
    rng = random.Random(seed)
    report = VerificationReport(repo.provenance, samples, tol)
    for name in names or repo.names():
        defn = repo.get(name)
        if defn is None:
            raise EpmcError(f"repository has no pattern {name!r}")
        report.entries.extend(verify_definition(defn, samples, tol, rng))
    return report


__all__ = ["VerificationEntry", "VerificationReport", "verify_definition", "verify_repository"]

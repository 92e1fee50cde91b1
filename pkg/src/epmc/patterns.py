"""Pattern repositories, instantiation, and explicit pattern MCs.

Repository text format (``.rep``)::

    # comment
    SEQ(p1,c1,t1,p2,c2,t2): prob=p1+(1-p1)*p2, cost=c1+(1-p1)*c2, time=t1+(1-p1)*t2;

Builtin repositories are generated on demand:

* ``builtin:sbs?n=K`` holds the eight service-composition patterns for exactly
  ``K`` services (properties ``prob``, ``cost``, ``time``).
* ``builtin:multitier?m=K&nmax=J`` holds the server patterns ``BASIC``,
  ``VIRTUALIZED`` and ``VIRTUALIZED-M`` for every shape of up to ``K`` tiers
  with ``J`` or fewer instances per tier.  A shape-specialized entry is named
  ``KIND_n1_..._nk`` and has property ``p_<b1...bk>`` per outcome vector, digit
  ``2`` meaning "two or more".

Annotation resolution: ``NAME(a1,...)`` resolves to the entry ``NAME`` with
matching arity; failing that, leading non-negative integer literals select a
shape, so ``VIRTUALIZED(1,1,pA,pVM)`` resolves to ``VIRTUALIZED_1_1(pA,pVM)``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence
from urllib.parse import parse_qs

from . import ratfun
from .errors import (
    ArityMismatch,
    EpmcError,
    ParseError,
    PatternConstraintViolated,
    UnknownFormalInExpression,
    UnknownPattern,
    UnknownProperty,
)
from .model import ParameterConstraints, ParametricMC, PatternAnnotation, make_mc
from .ratfun import ONE, ZERO, RationalFunction, const, product, total, var

SBS_KINDS = ("SEQ", "PAR", "PROB", "SEQ_R", "SEQ_R1", "PAR_R", "PROB_R", "PROB_R1")
SERVER_KINDS = ("BASIC", "VIRTUALIZED", "VIRTUALIZED-M")
SBS_MAX_N = 8
SERVER_FORMALS = {
    "BASIC": ("p",),
    "VIRTUALIZED": ("p", "p_VM"),
    "VIRTUALIZED-M": ("p", "p_detect", "p_migrate", "r", "p_VM"),
}


@dataclass(frozen=True, eq=False)
class PatternDefinition:
    name: str
    formals: tuple[str, ...]
    properties: Mapping[str, RationalFunction]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        allowed = set(self.formals)
        for prop, expr in self.properties.items():
            extra = sorted(expr.variables - allowed)
            if extra:
                raise UnknownFormalInExpression(
                    f"{self.name}.{prop} uses {extra[0]!r}, which is not a formal parameter"
                )

    def to_text(self) -> str:
        props = ", ".join(f"{k}={v}" for k, v in self.properties.items())
        return f"{self.name}({','.join(self.formals)}): {props};"


class PatternRepository:
    """Named pattern definitions; builtin families fill entries lazily."""

    def __init__(self, definitions: Mapping[str, PatternDefinition] | None = None, provenance: str = "",
                 factory: Callable[[str], PatternDefinition | None] | None = None,
                 enumerate_names: Callable[[], Iterator[str]] | None = None):
        self._defs: dict[str, PatternDefinition] = dict(definitions or {})
        self.provenance = provenance
        self._factory = factory
        self._enumerate = enumerate_names

    def get(self, name: str) -> PatternDefinition | None:
        d = self._defs.get(name)
        if d is None and self._factory is not None:
            d = self._factory(name)
            if d is not None:
                self._defs[name] = d
        return d

    def __contains__(self, name: str) -> bool:
        return self.get(name) is not None

    def names(self) -> list[str]:
        if self._enumerate is not None:
            return list(self._enumerate())
        return list(self._defs)

    @property
    def definitions(self) -> dict[str, PatternDefinition]:
        return {n: self.get(n) for n in self.names()}

    def __len__(self) -> int:
        return len(self.names())

    def property_universe(self) -> set[str]:
        """Property names any entry may define (used to spot pattern-derived parameters)."""
        if self._enumerate is not None and self.provenance.startswith("builtin:multitier"):
            return {"p_" + "".join(b) for k in range(1, self._max_tiers + 1)
                    for b in itertools.product("012", repeat=k)}
        out = set()
        for d in self.definitions.values():
            out.update(d.properties)
        return out

    _max_tiers = 0

    def resolve(self, name: str, actuals: Sequence[str]) -> tuple[PatternDefinition, tuple[str, ...]]:
        d = self.get(name)
        if d is not None and len(d.formals) == len(actuals):
            return d, tuple(actuals)
        shape = []
        for a in actuals:
            if re.fullmatch(r"\s*\d+\s*", a):
                shape.append(int(a))
            else:
                break
        for k in range(len(shape), 0, -1):
            cand = self.get(f"{name}_" + "_".join(str(x) for x in shape[:k]))
            if cand is not None and len(cand.formals) == len(actuals) - k:
                return cand, tuple(actuals[k:])
        if d is not None:
            raise ArityMismatch(f"pattern {name} expects {len(d.formals)} arguments, got {len(actuals)}")
        raise UnknownPattern(f"pattern {name!r} is not defined in repository {self.provenance or '<anonymous>'}")

    def to_text(self) -> str:
        lines = [f"# repository {self.provenance}"] if self.provenance else []
        lines += [self.get(n).to_text() for n in self.names()]
        return "\n".join(lines) + "\n"


# -- repository file format -----------------------------------------------------------

_HEADER = re.compile(r"\s*(?P<name>[A-Za-z_][A-Za-z0-9_\-]*)\s*\((?P<formals>[^)]*)\)\s*:")


def _split_top(text: str, sep: str, base: int):
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append((text[start:i], base + start))
            start = i + 1
    parts.append((text[start:], base + start))
    return parts


def parse_repository(text: str, provenance: str = "<text>") -> PatternRepository:
    # blank out comment lines so offsets stay valid
    lines = text.split("\n")
    clean = "\n".join(
        " " * len(ln) if ln.strip().startswith("#") or ln.strip().startswith("...") else ln for ln in lines
    )
    defs: dict[str, PatternDefinition] = {}
    for entry, off in _split_top(clean, ";", 0):
        if not entry.strip():
            continue
        m = _HEADER.match(entry)
        if not m:
            raise ParseError("expected 'Name(formals):' at start of repository entry", clean, off + len(entry) - len(entry.lstrip()))
        name = m.group("name")
        formals = tuple(f.strip() for f in m.group("formals").split(",") if f.strip())
        for f in formals:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", f):
                raise ParseError(f"invalid formal parameter {f!r}", clean, off + m.start("formals"))
        if len(set(formals)) != len(formals):
            raise ParseError(f"duplicate formal parameter in {name}", clean, off)
        props: dict[str, RationalFunction] = {}
        body_off = off + m.end()
        for item, ioff in _split_top(entry[m.end():], ",", body_off):
            if not item.strip():
                raise ParseError("empty property definition", clean, ioff)
            if "=" not in item:
                raise ParseError("expected 'property=expression'", clean, ioff)
            key, expr = item.split("=", 1)
            key = key.strip()
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
                raise ParseError(f"invalid property name {key!r}", clean, ioff)
            try:
                value = ratfun.parse_expression(expr)
            except ParseError as e:
                raise ParseError(f"in {name}.{key}: {e}", clean, ioff + len(key) + 1 + (e.pos or 0)) from None
            extra = sorted(value.variables - set(formals))
            if extra:
                raise UnknownFormalInExpression(f"{name}.{key} uses {extra[0]!r}, which is not a formal parameter")
            if key in props:
                raise ParseError(f"property {key!r} defined twice in {name}", clean, ioff)
            props[key] = value
        if name in defs:
            raise ParseError(f"pattern {name!r} defined twice", clean, off)
        defs[name] = PatternDefinition(name, formals, props)
    return PatternRepository(defs, provenance)


def load_repository(spec: str) -> PatternRepository:
    """Open ``builtin:sbs?n=K``, ``builtin:multitier?m=K&nmax=J`` or a ``.rep`` file."""
    if spec.startswith("builtin:"):
        family, _, query = spec[len("builtin:"):].partition("?")
        args = {k: v[-1] for k, v in parse_qs(query).items()}
        try:
            if family == "sbs":
                return builtin_sbs(int(args.get("n", 2)))
            if family == "multitier":
                return builtin_multitier(int(args.get("m", 3)), int(args.get("nmax", 4)))
        except ValueError as e:
            raise EpmcError(f"bad builtin repository arguments in {spec!r}: {e}") from None
        raise EpmcError(f"unknown builtin repository {family!r}")
    with open(spec, encoding="utf-8") as fh:
        return parse_repository(fh.read(), spec)


# -- service-based system patterns ---------------------------------------------------

def sbs_formals(kind: str, n: int) -> tuple[str, ...]:
    per = {
        "SEQ": ("p", "c", "t"), "PAR": ("p", "c", "t"), "SEQ_R": ("p", "c", "t"), "PAR_R": ("p", "c", "t"),
        "PROB": ("x", "p", "c", "t"), "PROB_R": ("x", "p", "c", "t"),
        "SEQ_R1": ("p", "c", "t", "r"), "PROB_R1": ("x", "p", "c", "t", "r"),
    }[kind]
    out = [f"{s}{i}" for i in range(1, n + 1) for s in per]
    if kind in ("SEQ_R", "PAR_R", "PROB_R"):
        out.append("r")
    return tuple(out)


def _seq(p, c, t):
    fail = ONE
    cost = ZERO
    time = ZERO
    for pi, ci, ti in zip(p, c, t):
        cost = cost + fail * ci
        time = time + fail * ti
        fail = fail * (ONE - pi)
    return ONE - fail, cost, time


def _par(p, c, t):
    n = len(p)
    fail = ONE
    time = ZERO
    for i, (pi, ti) in enumerate(zip(p, t)):
        first = pi if i < n - 1 else ONE
        time = time + fail * first * ti
        fail = fail * (ONE - pi)
    return ONE - product(ONE - pi for pi in p), total(c), time


def _prob(x, p, c, t):
    return (total(a * b for a, b in zip(x, p)), total(a * b for a, b in zip(x, c)),
            total(a * b for a, b in zip(x, t)))


def _retried(p, c, t, r):
    scale = [ONE / (ONE - (ONE - pi) * ri) for pi, ri in zip(p, r)]
    return ([pi * s for pi, s in zip(p, scale)], [ci * s for ci, s in zip(c, scale)],
            [ti * s for ti, s in zip(t, scale)])


def sbs_closed_forms(kind: str, n: int) -> dict[str, RationalFunction]:
    """prob/cost/time of an SBS pattern over its formal parameters."""
    if kind not in SBS_KINDS:
        raise UnknownPattern(f"unknown service pattern {kind!r}")
    if not 1 <= n <= SBS_MAX_N:
        raise EpmcError(f"number of services must be in 1..{SBS_MAX_N}, got {n}")
    sym = lambda s: [var(f"{s}{i}") for i in range(1, n + 1)]
    p, c, t, x, ri = sym("p"), sym("c"), sym("t"), sym("x"), sym("r")
    r = var("r")
    if kind == "SEQ":
        vals = _seq(p, c, t)
    elif kind == "PAR":
        vals = _par(p, c, t)
    elif kind == "PROB":
        vals = _prob(x, p, c, t)
    elif kind == "SEQ_R":
        ps, cs, ts = _seq(p, c, t)
        d = ONE - (ONE - ps) * r
        vals = (ps / d, cs / d, ts / d)
    elif kind == "SEQ_R1":
        vals = _seq(*_retried(p, c, t, ri))
    elif kind == "PAR_R":
        pp, cp, tp = _par(p, c, t)
        d = ONE - (ONE - pp) * r
        vals = (pp / d, cp / d, tp / d)
    elif kind == "PROB_R":
        pp, cp, tp = _prob(x, p, c, t)
        d = ONE - (ONE - pp) * r
        vals = (pp / d, cp / d, tp / d)
    else:  # PROB_R1
        vals = _prob(x, *_retried(p, c, t, ri))
    return dict(zip(("prob", "cost", "time"), vals))


def builtin_sbs(n: int) -> PatternRepository:
    if not 1 <= n <= SBS_MAX_N:
        raise EpmcError(f"builtin:sbs supports 1..{SBS_MAX_N} services, got {n}")
    defs = {
        k: PatternDefinition(k, sbs_formals(k, n), sbs_closed_forms(k, n), {"family": "sbs", "kind": k, "n": n})
        for k in SBS_KINDS
    }
    return PatternRepository(defs, f"builtin:sbs?n={n}")


# -- multi-tier server patterns ----------------------------------------------------------

def _f(b: int, n: int, pvm: RationalFunction) -> RationalFunction:
    f0 = (ONE - pvm) ** n
    f1 = const(n) * pvm * (ONE - pvm) ** (n - 1) if n >= 1 else ZERO
    return (f0, f1, ONE - f0 - f1)[b]


def _g(b: int, n: int, pm, r, pvm) -> RationalFunction:
    d = ONE - (ONE - pm) * r
    q = ((ONE - pm) * (ONE - r) + pm * (ONE - pvm)) / d
    g0 = q ** n
    g1 = const(n) * (pm * pvm / d) * q ** (n - 1) if n >= 1 else ZERO
    return (g0, g1, ONE - g0 - g1)[b]


def outcome_name(b: Sequence[int]) -> str:
    return "p_" + "".join(str(x) for x in b)


def server_closed_forms(kind: str, ns: Sequence[int]) -> dict[str, RationalFunction]:
    """p_b for every outcome vector b of a server pattern with tier shape ``ns``."""
    ns = tuple(ns)
    if kind not in SERVER_KINDS:
        raise UnknownPattern(f"unknown server pattern {kind!r}")
    if not ns or any(n < 0 for n in ns) or not any(ns):
        raise EpmcError(f"invalid tier shape {ns}")
    p = var("p")
    out = {}
    for b in itertools.product(range(3), repeat=len(ns)):
        zero = not any(b)
        if kind == "BASIC":
            ok = all((n > 1 and bi == 2) or (n == 1 and bi == 1) or (n == 0 and bi == 0) for n, bi in zip(ns, b))
            val = p if ok else (ONE - p if zero else ZERO)
        else:
            pvm = var("p_VM")
            val = p * product(_f(bi, n, pvm) for bi, n in zip(b, ns))
            if kind == "VIRTUALIZED-M":
                pd, pm, r = var("p_detect"), var("p_migrate"), var("r")
                val = val + (ONE - p) * pd * product(_g(bi, n, pm, r, pvm) for bi, n in zip(b, ns))
                if zero:
                    val = val + (ONE - p) * (ONE - pd)
            elif zero:
                val = val + (ONE - p)
        out[outcome_name(b)] = val
    return out


def builtin_multitier(m: int, n_max: int) -> PatternRepository:
    if not 1 <= m <= 4:
        raise EpmcError(f"builtin:multitier supports 1..4 tiers, got m={m}")
    if not 1 <= n_max <= 16:
        raise EpmcError(f"builtin:multitier supports nmax in 1..16, got {n_max}")
    pattern = re.compile(r"(?P<kind>BASIC|VIRTUALIZED-M|VIRTUALIZED)((?:_\d+)+)\Z")

    def factory(name: str):
        mt = pattern.match(name)
        if not mt:
            return None
        ns = tuple(int(x) for x in mt.group(2)[1:].split("_"))
        if len(ns) > m or any(n > n_max for n in ns) or not any(ns):
            return None
        kind = mt.group("kind")
        return PatternDefinition(name, SERVER_FORMALS[kind], server_closed_forms(kind, ns),
                                 {"family": "multitier", "kind": kind, "ns": ns})

    def names():
        for kind in SERVER_KINDS:
            for k in range(1, m + 1):
                for ns in itertools.product(range(1, n_max + 1), repeat=k):
                    yield f"{kind}_" + "_".join(map(str, ns))

    repo = PatternRepository({}, f"builtin:multitier?m={m}&nmax={n_max}", factory, names)
    repo._max_tiers = m
    return repo


# -- instantiation ---------------------------------------------------------------------

def _actual_values(actuals: Sequence[str]) -> list[RationalFunction]:
    out = []
    for a in actuals:
        try:
            out.append(ratfun.parse_expression(a))
        except ParseError as e:
            raise ParseError(f"bad pattern argument {a!r}: {e}") from None
    return out


def classify(defn: PatternDefinition):
    """(family, kind, size) for a definition, from metadata or its name and arity."""
    if defn.meta:
        return defn.meta.get("family"), defn.meta.get("kind"), defn.meta.get("n") or defn.meta.get("ns")
    k = len(defn.formals)
    if defn.name in SBS_KINDS:
        per = {"SEQ": 3, "PAR": 3, "SEQ_R": 3, "PAR_R": 3, "PROB": 4, "PROB_R": 4, "SEQ_R1": 4, "PROB_R1": 5}
        extra = 1 if defn.name in ("SEQ_R", "PAR_R", "PROB_R") else 0
        n, rem = divmod(k - extra, per[defn.name])
        if rem == 0 and n >= 1:
            return "sbs", defn.name, n
    mt = re.match(r"(?P<kind>BASIC|VIRTUALIZED-M|VIRTUALIZED)((?:_\d+)+)\Z", defn.name)
    if mt and len(SERVER_FORMALS[mt.group("kind")]) == k:
        return "multitier", mt.group("kind"), tuple(int(x) for x in mt.group(2)[1:].split("_"))
    return None, None, None


def _check_numeric_constraints(defn: PatternDefinition, values: list[RationalFunction]):
    family, kind, n = classify(defn)
    if family != "sbs":
        return
    names = defn.formals
    if kind.startswith("PROB"):
        xs = [v for f, v in zip(sbs_formals(kind, n), values) if f.startswith("x")]
        if all(x.is_constant() for x in xs) and sum(x.constant_value() for x in xs) != 1:
            raise PatternConstraintViolated(f"{defn.name}: branch probabilities must sum to 1")
    if kind.startswith("PAR"):
        ts = [v for f, v in zip(sbs_formals(kind, n), values) if f.startswith("t")]
        if all(t.is_constant() for t in ts):
            vals = [t.constant_value() for t in ts]
            if any(a > b for a, b in zip(vals, vals[1:])):
                raise PatternConstraintViolated(f"{defn.name}: services must be ordered by execution time")
    del names


def instantiate(repo: PatternRepository, ann: PatternAnnotation, prop: str) -> tuple[str, RationalFunction]:
    defn, actuals = repo.resolve(ann.pattern_name, ann.actuals)
    if prop not in defn.properties:
        raise UnknownProperty(f"pattern {defn.name} has no property {prop!r}")
    values = _actual_values(actuals)
    _check_numeric_constraints(defn, values)
    mapping = dict(zip(defn.formals, values))
    return ann.derived_name(prop), ratfun.substitute(defn.properties[prop], mapping)


# -- explicit pattern semantics -----------------------------------------------------------

@dataclass(frozen=True)
class SBSInstance:
    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in SBS_KINDS:
            raise UnknownPattern(f"unknown service pattern {self.kind!r}")
        if self.n < 1:
            raise EpmcError("a service pattern needs at least one service")

    @property
    def formals(self) -> tuple[str, ...]:
        return sbs_formals(self.kind, self.n)


@dataclass(frozen=True)
class ServerInstance:
    kind: str
    ns: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in SERVER_KINDS:
            raise UnknownPattern(f"unknown server pattern {self.kind!r}")
        if not self.ns or any(n < 0 for n in self.ns) or not any(self.ns):
            raise EpmcError(f"invalid tier shape {self.ns}")

    @property
    def m(self) -> int:
        return len(self.ns)

    @property
    def formals(self) -> tuple[str, ...]:
        return SERVER_FORMALS[self.kind]


@dataclass(frozen=True, eq=False)
class PatternMC:
    mc: ParametricMC
    success: str | None  # label of successful completion (SBS)
    ends: tuple[str, ...]  # labels of all terminal states


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.edges: dict[tuple[int, int], RationalFunction] = {}
        self.labels: dict[str, set[int]] = {}
        self.rewards: dict[str, dict[int, RationalFunction]] = {}
        self.keys: dict[object, int] = {}

    def state(self, name: str, key=None) -> int:
        if key is not None and key in self.keys:
            return self.keys[key]
        self.names.append(name)
        idx = len(self.names) - 1
        if key is not None:
            self.keys[key] = idx
        return idx

    def edge(self, s: int, t: int, f: RationalFunction):
        if not f.is_zero():
            self.edges[(s, t)] = self.edges.get((s, t), ZERO) + f

    def label(self, name: str, s: int | None = None):
        self.labels.setdefault(name, set())
        if s is not None:
            self.labels[name].add(s)

    def reward(self, struct: str, s: int, f: RationalFunction):
        self.rewards.setdefault(struct, {})[s] = f

    def build(self, constraints=None) -> ParametricMC:
        return make_mc(len(self.names), self.edges, 0, self.labels, self.rewards, self.names,
                       constraints=constraints)


def sbs_mc_builder(inst: SBSInstance, sym: Callable[[str], RationalFunction] = var, prefix: str = ""):
    """Build the service chain of ``inst`` into a fresh builder.

    Returns ``(builder, succ, fail)``: the entry is state 0, ``succ``/``fail``
    are the output states.  ``sym`` maps formal names (``p1``, ``r``...) to
    the expressions used on transitions and rewards.
    """
    kind, n = inst.kind, inst.n
    p = [sym(f"p{i}") for i in range(1, n + 1)]
    c = [sym(f"c{i}") for i in range(1, n + 1)]
    t = [sym(f"t{i}") for i in range(1, n + 1)]
    B = _Builder()
    if kind in ("SEQ", "SEQ_R", "SEQ_R1"):
        svc = [B.state(f"{prefix}svc{i}") for i in range(1, n + 1)]
    elif kind in ("PROB", "PROB_R", "PROB_R1"):
        start = B.state(f"{prefix}choose")
        svc = [B.state(f"{prefix}svc{i}") for i in range(1, n + 1)]
    else:
        start = B.state(f"{prefix}invoke")
        check = [B.state(f"{prefix}wait{i}") for i in range(1, n + 1)]
        win = [B.state(f"{prefix}first{i}") for i in range(1, n + 1)]
        lost = B.state(f"{prefix}allfailed")
    succ = B.state(f"{prefix}succ")
    fail = B.state(f"{prefix}fail")

    if kind in ("SEQ", "SEQ_R", "SEQ_R1"):
        for i in range(n):
            nxt = svc[i + 1] if i + 1 < n else fail
            B.edge(svc[i], succ, p[i])
            miss = ONE - p[i]
            if kind == "SEQ_R1":
                ri = sym(f"r{i + 1}")
                B.edge(svc[i], svc[i], miss * ri)
                miss = miss * (ONE - ri)
            if kind == "SEQ_R" and i == n - 1:
                r = sym("r")
                B.edge(svc[i], svc[0], miss * r)
                miss = miss * (ONE - r)
            B.edge(svc[i], nxt, miss)
            B.reward("cost", svc[i], c[i])
            B.reward("time", svc[i], t[i])
    elif kind in ("PROB", "PROB_R", "PROB_R1"):
        for i in range(n):
            B.edge(start, svc[i], sym(f"x{i + 1}"))
            B.edge(svc[i], succ, p[i])
            miss = ONE - p[i]
            if kind == "PROB_R1":
                ri = sym(f"r{i + 1}")
                B.edge(svc[i], svc[i], miss * ri)
                miss = miss * (ONE - ri)
            if kind == "PROB_R":
                r = sym("r")
                B.edge(svc[i], start, miss * r)
                miss = miss * (ONE - r)
            B.edge(svc[i], fail, miss)
            B.reward("cost", svc[i], c[i])
            B.reward("time", svc[i], t[i])
    else:  # PAR, PAR_R: all services invoked at once; the first success (in t order) wins
        B.edge(start, check[0], ONE)
        B.reward("cost", start, total(c))
        for i in range(n):
            B.edge(check[i], win[i], p[i])
            B.edge(check[i], check[i + 1] if i + 1 < n else lost, ONE - p[i])
            B.edge(win[i], succ, ONE)
            B.reward("time", win[i], t[i])
        B.reward("time", lost, t[-1])
        if kind == "PAR_R":
            r = sym("r")
            B.edge(lost, start, r)
            B.edge(lost, fail, ONE - r)
        else:
            B.edge(lost, fail, ONE)
    return B, succ, fail


def _server_mc(inst: ServerInstance) -> PatternMC:
    kind, ns = inst.kind, inst.ns
    p = var("p")
    pvm = var("p_VM")
    B = _Builder()
    start = B.state("server")
    vms = [i for i, n in enumerate(ns) for _ in range(n)]
    zero = tuple(0 for _ in ns)

    def outcome(counts):
        s = B.state("outcome_" + "".join(map(str, counts)), ("out", counts))
        B.label("b_" + "".join(map(str, counts)), s)
        return s

    def bump(counts, tier):
        lst = list(counts)
        lst[tier] = min(lst[tier] + 1, 2)
        return tuple(lst)

    def vm_state(mode, j, counts):
        """State processing VM j (in 'up' or 'migrate' mode) with survivors ``counts``."""
        if j == len(vms):
            return outcome(counts)
        key = (mode, j, counts)
        if key in B.keys:
            return B.keys[key]
        s = B.state(f"{mode}{j}_" + "".join(map(str, counts)), key)
        tier = vms[j]
        if mode == "up":
            B.edge(s, vm_state("up", j + 1, bump(counts, tier)), pvm)
            B.edge(s, vm_state("up", j + 1, counts), ONE - pvm)
        else:
            pm, r = var("p_migrate"), var("r")
            moved = B.state(f"moved{j}_" + "".join(map(str, counts)), ("moved", j, counts))
            B.edge(s, moved, pm)
            B.edge(s, s, (ONE - pm) * r)
            B.edge(s, vm_state("migrate", j + 1, counts), (ONE - pm) * (ONE - r))
            B.edge(moved, vm_state("migrate", j + 1, bump(counts, tier)), pvm)
            B.edge(moved, vm_state("migrate", j + 1, counts), ONE - pvm)
        return s

    for b in itertools.product(range(3), repeat=len(ns)):
        B.label("b_" + "".join(map(str, b)))
    if kind == "BASIC":
        full = tuple(0 if n == 0 else (1 if n == 1 else 2) for n in ns)
        B.edge(start, outcome(full), p)
        B.edge(start, outcome(zero), ONE - p)
    else:
        B.edge(start, vm_state("up", 0, zero), p)
        if kind == "VIRTUALIZED":
            B.edge(start, outcome(zero), ONE - p)
        else:
            pd = var("p_detect")
            detect = B.state("detected")
            B.edge(start, detect, (ONE - p) * pd)
            B.edge(start, outcome(zero), (ONE - p) * (ONE - pd))
            B.edge(detect, vm_state("migrate", 0, zero), ONE)
    mc = B.build()
    ends = tuple(sorted(lab for lab, ss in B.labels.items()))
    return PatternMC(mc, None, ends)


def pattern_mc(inst) -> PatternMC:
    """Explicit operational semantics of a pattern, used as a verification oracle."""
    if isinstance(inst, SBSInstance):
        B, succ, fail = sbs_mc_builder(inst)
        B.label("succ", succ)
        B.label("fail", fail)
        constraints = None
        if inst.kind.startswith("PROB"):
            constraints = ParameterConstraints(simplices=(tuple(f"x{i}" for i in range(1, inst.n + 1)),))
        return PatternMC(B.build(constraints), "succ", ("succ", "fail"))
    if isinstance(inst, ServerInstance):
        return _server_mc(inst)
    raise TypeError(f"not a pattern instance: {inst!r}")


def instance_for(defn: PatternDefinition):
    family, kind, size = classify(defn)
    if family == "sbs":
        return SBSInstance(kind, size)
    if family == "multitier":
        return ServerInstance(kind, tuple(size))
    return None


__all__ = [
    "PatternDefinition", "PatternRepository", "parse_repository", "load_repository", "builtin_sbs",
    "builtin_multitier", "instantiate", "pattern_mc", "SBSInstance", "ServerInstance", "PatternMC",
    "sbs_closed_forms", "server_closed_forms", "sbs_formals", "classify", "instance_for",
]

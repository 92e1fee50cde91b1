"""Benchmark model generators: the three-operation running example, the FX
trading workflow, and four-server deployments of a three-tier system.

Each family yields a pattern-annotated abstract model and an equivalent
monolithic model in which every annotated state is expanded into the explicit
operational semantics of its pattern.

FX workflow structure (reconstructed from the textual description; the five
profile parameters are the only routing unknowns)::

    start --x--> MarketWatch (expert mode)      --(1-x)--> FundamentalAnalysis
    MarketWatch ok       -> TechnicalAnalysis
    TechnicalAnalysis ok -> y1: Order | y2: MarketWatch | 1-y1-y2: Alarm
    FundamentalAnalysis ok -> z1: Order | z2: FundamentalAnalysis | 1-z1-z2: end (succ)
    Alarm ok -> succ;  Order ok -> Notification;  Notification ok -> succ
    any component failure -> fail

Multi-tier deployments: servers are analysed in stages, one per server.  The
state records the surviving instances per tier (0, 1 or 2+); a tier whose
survivors and not-yet-analysed instances are both zero ends the analysis in
FAIL early.  After the last stage the system is FAIL if some tier has no
instance, SPF if some tier has exactly one, OK otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import ratfun
from .errors import EpmcError
from .patterns import (
    SBS_KINDS,
    SBS_MAX_N,
    SERVER_FORMALS,
    SBSInstance,
    ServerInstance,
    outcome_name,
    pattern_mc,
    sbs_formals,
    sbs_mc_builder,
    server_closed_forms,
)
from .ratfun import ONE, ZERO, RationalFunction, var

SUCC, FAIL = "succ", "fail"

RUNNING_EXAMPLE_PROPERTIES = (
    'P=? [ F "succ" ]',
    'P=? [ !"op3" U "fail" ]',
    'R{"time"}=? [ F "succ" | "fail" ]',
    'R{"cost"}=? [ F "succ" | "fail" ]',
)
FX_PROPERTIES = (
    'P=? [ F "succ" ]',
    'R{"time"}=? [ F "succ" | "fail" ]',
    'R{"cost"}=? [ F "succ" | "fail" ]',
)
MULTITIER_PROPERTIES = ('P=? [ F "FAIL" ]', 'P=? [ F "SPF" ]')


# -- workflows of service-based components --------------------------------------------

@dataclass(frozen=True)
class Component:
    label: str
    kind: str
    n: int
    actuals: Mapping[str, str]  # pattern formal -> model parameter
    routes: tuple[tuple[str, str], ...]  # (probability expression, destination) after success


@dataclass(frozen=True)
class Workflow:
    title: str
    components: tuple[Component, ...]
    start: tuple[tuple[str, str], ...]  # initial routing; a single ("1", c) starts at c
    routing_parameters: tuple[str, ...]
    directives: tuple[str, ...] = ()

    def index(self, label: str) -> int:
        for i, c in enumerate(self.components):
            if c.label == label:
                return i
        raise EpmcError(f"unknown component {label!r}")

    def pattern_directives(self) -> list[str]:
        out = []
        for c in self.components:
            if c.kind.startswith("PROB"):
                out.append("@simplex " + " ".join(c.actuals[f"x{j}"] for j in range(1, c.n + 1)))
        return out


def _paren(expr: str) -> str:
    return _fmt(ratfun.parse_expression(expr))


def _mul(a: str, b: str) -> str:
    if a == "1":
        return b
    if b == "1":
        return a
    return f"{a}*{b}"


def annotated_workflow_model(wf: Workflow) -> str:
    k = len(wf.components)
    succ_z, fail_z = k + 1, k + 2
    has_start = not (len(wf.start) == 1 and wf.start[0][0] == "1")
    lo = 0 if has_start else 1

    def z_of(dest: str) -> int:
        if dest == SUCC:
            return succ_z
        if dest == FAIL:
            return fail_z
        return wf.index(dest) + 1

    lines = [f"// Pattern-annotated abstract model: {wf.title}", "dtmc", ""]
    for p in wf.routing_parameters:
        lines.append(f"const double {p};")
    for prop in ("prob", "time", "cost"):
        for i in range(1, k + 1):
            lines.append(f"const double {prop}{i};")
    for d in list(wf.directives) + wf.pattern_directives():
        lines.append(f"// {d}")
    lines += ["", "module Workflow", f"  z : [{lo}..{fail_z}] init {lo if has_start else 1};"]
    if has_start:
        br = " + ".join(f"{_paren(e)}:(z'={z_of(d)})" for e, d in wf.start)
        lines.append(f"  [] z=0 -> {br};")
    for i, c in enumerate(wf.components, 1):
        branches = [f"{_mul(f'prob{i}', _paren(e))}:(z'={z_of(d)})" for e, d in c.routes]
        branches.append(f"(1-prob{i}):(z'={fail_z})")
        lines.append(f"  [] z={i} -> " + " + ".join(branches) + ";")
    lines += ["endmodule", ""]
    for i, c in enumerate(wf.components, 1):
        lines.append(f'label "{c.label}" = z={i};')
    lines.append(f'label "{SUCC}" = z={succ_z};')
    lines.append(f'label "{FAIL}" = z={fail_z};')
    for struct in ("time", "cost"):
        lines += ["", f'rewards "{struct}"']
        lines += [f"  z={i} : {struct}{i};" for i in range(1, k + 1)]
        lines.append("endrewards")
    lines.append("")
    for i, c in enumerate(wf.components, 1):
        formals = sbs_formals(c.kind, c.n)
        lines.append(f"/// {i}: {c.kind}({','.join(c.actuals[f] for f in formals)})")
    return "\n".join(lines) + "\n"


@dataclass
class _Explicit:
    """Explicit single-variable model under construction."""

    names: list[str] = field(default_factory=list)
    edges: dict[tuple[int, int], RationalFunction] = field(default_factory=dict)
    labels: dict[str, set[int]] = field(default_factory=dict)
    rewards: dict[str, dict[int, RationalFunction]] = field(default_factory=dict)

    def add(self, name: str) -> int:
        self.names.append(name)
        return len(self.names) - 1

    def edge(self, s: int, t: int, f: RationalFunction):
        if not f.is_zero():
            self.edges[(s, t)] = self.edges.get((s, t), ZERO) + f

    def to_text(self, title: str, parameters: Sequence[str], directives: Sequence[str]) -> str:
        n = len(self.names)
        lines = [f"// Monolithic model: {title}", "dtmc", ""]
        lines += [f"const double {p};" for p in parameters]
        lines += [f"// {d}" for d in directives]
        lines += ["", "module System", f"  s : [0..{n - 1}] init 0;"]
        rows: dict[int, list] = {}
        for (s, t), f in sorted(self.edges.items()):
            rows.setdefault(s, []).append((t, f))
        for s in range(n):
            if s not in rows or rows[s] == [(s, ONE)]:
                continue
            br = " + ".join(f"{_fmt(f)}:(s'={t})" for t, f in rows[s])
            lines.append(f"  [] s={s} -> {br};  // {self.names[s]}")
        lines += ["endmodule", ""]
        for lab, ss in self.labels.items():
            expr = _state_set(sorted(ss))
            lines.append(f'label "{lab}" = {expr};')
        for struct, rw in self.rewards.items():
            lines += ["", f'rewards "{struct}"']
            lines += [f"  s={s} : {_fmt(f)};" for s, f in sorted(rw.items())]
            lines.append("endrewards")
        return "\n".join(lines) + "\n"


def _fmt(f: RationalFunction) -> str:
    s = str(f)
    if f.is_constant() or (f.is_polynomial() and len(f.num) == 1):
        return s
    return f"({s})"


def _state_set(ss: list[int]) -> str:
    if not ss:
        return "false"
    parts = []
    for _, grp in itertools.groupby(enumerate(ss), key=lambda t: t[1] - t[0]):
        run = [x for _, x in grp]
        if len(run) == 1:
            parts.append(f"s={run[0]}")
        else:
            parts.append(f"(s>={run[0]} & s<={run[-1]})")
    return " | ".join(parts)


def monolithic_workflow_model(wf: Workflow) -> str:
    m = _Explicit()
    has_start = not (len(wf.start) == 1 and wf.start[0][0] == "1")
    start = m.add("start") if has_start else None
    blocks = []
    for c in wf.components:
        b, succ, fail = sbs_mc_builder(SBSInstance(c.kind, c.n), lambda f, c=c: var(c.actuals[f]),
                                       prefix=f"{c.label}.")
        offset = len(m.names)
        for name in b.names:
            m.add(name)
        blocks.append((b, offset, succ, fail))
    g_fail = m.add(FAIL)
    g_succ = m.add(SUCC)

    def entry(dest: str) -> int:
        if dest == SUCC:
            return g_succ
        if dest == FAIL:
            return g_fail
        return blocks[wf.index(dest)][1]

    if has_start:
        for e, d in wf.start:
            m.edge(start, entry(d), ratfun.parse_expression(e))
    for c, (b, off, succ, fail) in zip(wf.components, blocks):
        for (s, t), f in b.edges.items():
            m.edge(off + s, off + t, f)
        for e, d in c.routes:
            m.edge(off + succ, entry(d), ratfun.parse_expression(e))
        m.edge(off + fail, g_fail, ONE)
        m.labels[c.label] = {off + i for i in range(len(b.names))}
        for struct, rw in b.rewards.items():
            for s, f in rw.items():
                m.rewards.setdefault(struct, {})[off + s] = f
    m.edge(g_fail, g_fail, ONE)
    m.edge(g_succ, g_succ, ONE)
    m.labels[SUCC] = {g_succ}
    m.labels[FAIL] = {g_fail}
    params = list(wf.routing_parameters)
    for c in wf.components:
        for f in sbs_formals(c.kind, c.n):
            if c.actuals[f] not in params:
                params.append(c.actuals[f])
    return m.to_text(wf.title, params, list(wf.directives) + wf.pattern_directives())


# -- running example ---------------------------------------------------------------------

def running_example_workflow() -> Workflow:
    def seq(i):
        return {f"{s}{j}": f"{s}{i}{j}" for s in "pct" for j in (1, 2)}

    op1 = Component("op1", "SEQ", 2, seq(1), (("x", "op2"), ("1-x", "op3")))
    a2 = {f"{s}{j}": f"{s}2{j}" for s in "pct" for j in (1, 2)}
    a2.update({"x1": "alpha1", "x2": "alpha2"})
    op2 = Component("op2", "PROB", 2, a2, (("1", SUCC),))
    a3 = seq(3)
    a3["r"] = "r"
    op3 = Component("op3", "SEQ_R", 2, a3, (("y", "op1"), ("1-y", SUCC)))
    return Workflow("three-operation workflow (op1 SEQ, op2 PROB, op3 SEQ_R)", (op1, op2, op3),
                    (("1", "op1"),), ("x", "y"))


# -- FX trading workflow -----------------------------------------------------------------

FX_COMPONENTS = ("MarketWatch", "TechnicalAnalysis", "FundamentalAnalysis", "Alarm", "Order", "Notification")
FX_PROFILE = {"x": 0.66, "y1": 0.61, "y2": 0.11, "z1": 0.27, "z2": 0.53}


def _fx_actuals(i: int, kind: str, n: int) -> dict[str, str]:
    out = {}
    for f in sbs_formals(kind, n):
        letter, idx = f[0], f[1:]
        out[f] = f"{letter}{i}_{idx}" if idx else f"{letter}{i}"
    return out


def fx_workflow(kind: str, n: int) -> Workflow:
    if kind not in SBS_KINDS:
        raise EpmcError(f"unknown pattern {kind!r}; choose from {', '.join(SBS_KINDS)}")
    if not 1 <= n <= SBS_MAX_N:
        raise EpmcError(f"services per component must be in 1..{SBS_MAX_N}")
    mw, ta, fa, al, od, nt = FX_COMPONENTS
    routes = {
        mw: (("1", ta),),
        ta: (("y1", od), ("y2", mw), ("1-y1-y2", al)),
        fa: (("z1", od), ("z2", fa), ("1-z1-z2", SUCC)),
        al: (("1", SUCC),),
        od: (("1", nt),),
        nt: (("1", SUCC),),
    }
    comps = tuple(Component(name, kind, n, _fx_actuals(i, kind, n), routes[name])
                  for i, name in enumerate(FX_COMPONENTS, 1))
    return Workflow(f"FX trading workflow, every component {kind} with {n} service(s)", comps,
                    (("x", mw), ("1-x", fa)), ("x", "y1", "y2", "z1", "z2"),
                    ("@subsimplex y1 y2", "@subsimplex z1 z2"))


# -- multi-tier deployments --------------------------------------------------------------

@dataclass(frozen=True)
class Server:
    name: str
    kind: str
    placement: tuple[int, ...]  # instances of each tier hosted

    @property
    def tiers(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.placement) if n > 0)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.placement[i] for i in self.tiers)

    def actual(self, formal: str) -> str:
        return formal.replace("_", "") + self.name

    def annotation(self) -> str:
        args = [str(n) for n in self.shape] + [self.actual(f) for f in SERVER_FORMALS[self.kind]]
        return f"/// {self.name}: {self.kind}({','.join(args)})"


def _servers(kinds: str, a: tuple, c: tuple):
    code = {"B": "BASIC", "V": "VIRTUALIZED", "VM": "VIRTUALIZED-M"}
    ks = [code[k] for k in kinds.split(",")]
    return (Server("A", ks[0], a), Server("B", ks[1], a), Server("C", ks[2], c), Server("D", ks[3], c))


DEPLOYMENTS: dict[str, tuple[Server, ...]] = {
    "D1": _servers("V,V,B,B", (1, 1, 0), (0, 0, 1)),
    "D2": _servers("VM,VM,B,B", (1, 1, 0), (0, 0, 1)),
    "D3": _servers("V,V,V,V", (2, 1, 0), (0, 1, 1)),
    "D4": _servers("VM,VM,VM,VM", (2, 1, 0), (0, 1, 1)),
    "D5": _servers("V,V,V,V", (4, 2, 0), (0, 2, 2)),
    "D6": _servers("VM,VM,VM,VM", (4, 2, 0), (0, 2, 2)),
    "D7": _servers("V,V,V,V", (8, 4, 0), (0, 4, 4)),
    "D8": _servers("VM,VM,VM,VM", (8, 4, 0), (0, 4, 4)),
}


def _deployment(deployment: str) -> tuple[Server, ...]:
    try:
        return DEPLOYMENTS[deployment.upper()]
    except KeyError:
        raise EpmcError(f"unknown deployment {deployment!r}; choose from {', '.join(DEPLOYMENTS)}") from None


def _advance(servers, k: int, surv: tuple[int, ...], b: tuple[int, ...]):
    """Next abstract state after server ``k`` leaves ``b`` survivors on its tiers."""
    new = list(surv)
    for tier, bi in zip(servers[k].tiers, b):
        new[tier] = min(2, new[tier] + bi)
    new = tuple(new)
    remaining = [sum(s.placement[i] for s in servers[k + 1:]) for i in range(len(new))]
    if any(new[i] == 0 and remaining[i] == 0 for i in range(len(new))):
        return ("FAIL",)
    if k + 1 == len(servers):
        return ("END", new)
    return ("STAGE", k + 1, new)


def _outcome_label(state) -> str:
    if state[0] == "FAIL" or 0 in state[1]:
        return "FAIL"
    return "SPF" if 1 in state[1] else "OK"


def _nonzero_outcomes(server: Server):
    forms = server_closed_forms(server.kind, server.shape)
    return [b for b in itertools.product(range(3), repeat=len(server.shape)) if not forms[outcome_name(b)].is_zero()]


def _abstract_states(servers):
    start = ("STAGE", 0, tuple(0 for _ in servers[0].placement))
    order, seen, frontier = [], {start}, [start]
    while frontier:
        st = frontier.pop(0)
        order.append(st)
        if st[0] != "STAGE":
            continue
        for b in _nonzero_outcomes(servers[st[1]]):
            nxt = _advance(servers, st[1], st[2], b)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return order


def annotated_multitier_model(deployment: str) -> str:
    servers = _deployment(deployment)
    m = len(servers[0].placement)
    k = len(servers)
    tvars = [f"t{i + 1}" for i in range(m)]
    lines = [f"// Pattern-annotated abstract model: three-tier deployment {deployment.upper()}",
             "// st = server stage being analysed (st=%d: analysis finished);" % (k + 1),
             "// t<i> = operational instances of tier i so far (2 stands for 2+)", "dtmc", ""]
    groups = []
    for s in servers:
        names = [outcome_name(b) + s.name for b in _nonzero_outcomes(s)]
        groups.append(names)
        lines += [f"const double {n};" for n in names]
    for g in groups:
        if len(g) > 1:
            lines.append("// @simplex " + " ".join(g))
    lines += ["", "module Deployment", f"  st : [1..{k + 1}] init 1;"]
    lines += [f"  {v} : [0..2] init 0;" for v in tvars]

    def target(state) -> str:
        if state[0] == "FAIL":
            vals = (k + 1,) + tuple(0 for _ in tvars)
        elif state[0] == "END":
            vals = (k + 1,) + state[1]
        else:
            vals = (state[1] + 1,) + state[2]
        return "&".join(f"({n}'={v})" for n, v in zip(["st"] + tvars, vals))

    for st in _abstract_states(servers):
        if st[0] != "STAGE":
            continue
        idx, surv = st[1], st[2]
        dests: dict[str, list[str]] = {}
        for b in _nonzero_outcomes(servers[idx]):
            dests.setdefault(target(_advance(servers, idx, surv, b)), []).append(outcome_name(b) + servers[idx].name)
        guard = " & ".join([f"st={idx + 1}"] + [f"{v}={x}" for v, x in zip(tvars, surv)])
        br = " + ".join((ps[0] if len(ps) == 1 else "(" + "+".join(ps) + ")") + f":{d}" for d, ps in dests.items())
        lines.append(f"  [] {guard} -> {br};")
    lines += ["endmodule", ""]
    done = f"st={k + 1}"
    zero = " | ".join(f"{v}=0" for v in tvars)
    one = " | ".join(f"{v}=1" for v in tvars)
    lines.append(f'label "FAIL" = {done} & ({zero});')
    lines.append(f'label "SPF" = {done} & !({zero}) & ({one});')
    lines.append(f'label "OK" = {done} & !({zero}) & !({one});')
    lines.append("")
    lines += [s.annotation() for s in servers]
    return "\n".join(lines) + "\n"


def monolithic_multitier_model(deployment: str) -> str:
    servers = _deployment(deployment)
    m = _Explicit()
    states = _abstract_states(servers)
    index: dict = {}

    def node(st):
        if st in index:
            return index[st]
        if st[0] == "FAIL":
            name = "FAIL"
        elif st[0] == "END":
            name = "end_" + "".join(map(str, st[1]))
        else:
            name = f"{servers[st[1]].name}@" + "".join(map(str, st[2]))
        index[st] = m.add(name)
        return index[st]

    node(states[0])
    for st in states:
        if st[0] != "STAGE":
            node(st)
            continue
        srv = servers[st[1]]
        pm = pattern_mc(ServerInstance(srv.kind, srv.shape)).mc
        mapping = {f: var(srv.actual(f)) for f in SERVER_FORMALS[srv.kind]}
        outcome_of = {}
        for lab, ss in pm.labels.items():
            if lab.startswith("b_"):
                for s in ss:
                    outcome_of[s] = tuple(int(ch) for ch in lab[2:])
        local = {pm.init: node(st)}
        for s in range(pm.n_states):
            if s not in outcome_of and s not in local:
                local[s] = m.add(f"{m.names[node(st)]}.{pm.states[s]}")
        for s in range(pm.n_states):
            if s in outcome_of:
                continue
            for t, f in pm.trans[s].items():
                g = ratfun.substitute(f, mapping)
                if t in outcome_of:
                    dst = node(_advance(servers, st[1], st[2], outcome_of[t]))
                else:
                    dst = local[t]
                m.edge(local[s], dst, g)
    for st in states:
        if st[0] != "STAGE":
            i = node(st)
            m.edge(i, i, ONE)
            m.labels.setdefault(_outcome_label(st), set()).add(i)
    for lab in ("FAIL", "SPF", "OK"):
        m.labels.setdefault(lab, set())
    params = []
    for s in servers:
        params += [s.actual(f) for f in SERVER_FORMALS[s.kind]]
    return m.to_text(f"three-tier deployment {deployment.upper()}", params, ())


# -- front door ------------------------------------------------------------------------------

FAMILIES = ("running-example", "fx", "multitier")


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    pattern: str = "SEQ"
    services: int = 2
    deployment: str = "D1"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise EpmcError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        if self.family == "fx":
            if self.pattern not in SBS_KINDS:
                raise EpmcError(f"unknown pattern {self.pattern!r}")
            if not 1 <= self.services <= SBS_MAX_N:
                raise EpmcError(f"services must be in 1..{SBS_MAX_N}")
        if self.family == "multitier":
            _deployment(self.deployment)


@dataclass(frozen=True)
class GeneratedModels:
    annotated: str
    monolithic: str
    properties: tuple[str, ...]
    repository: str
    profile: Mapping[str, float] = field(default_factory=dict)

    def properties_text(self) -> str:
        return "\n".join(self.properties) + "\n"


def generate(spec: GeneratorSpec) -> GeneratedModels:
    if spec.family == "running-example":
        wf = running_example_workflow()
        return GeneratedModels(annotated_workflow_model(wf), monolithic_workflow_model(wf),
                               RUNNING_EXAMPLE_PROPERTIES, "builtin:sbs?n=2")
    if spec.family == "fx":
        wf = fx_workflow(spec.pattern, spec.services)
        return GeneratedModels(annotated_workflow_model(wf), monolithic_workflow_model(wf), FX_PROPERTIES,
                               f"builtin:sbs?n={spec.services}", dict(FX_PROFILE))
    servers = _deployment(spec.deployment)
    nmax = max(max(s.placement) for s in servers)
    return GeneratedModels(annotated_multitier_model(spec.deployment), monolithic_multitier_model(spec.deployment),
                           MULTITIER_PROPERTIES, f"builtin:multitier?m=3&nmax={nmax}")


__all__ = [
    "GeneratorSpec", "GeneratedModels", "generate", "Workflow", "Component", "running_example_workflow",
    "fx_workflow", "annotated_workflow_model", "monolithic_workflow_model", "annotated_multitier_model",
    "monolithic_multitier_model", "DEPLOYMENTS", "Server", "FX_PROFILE", "FX_COMPONENTS",
    "RUNNING_EXAMPLE_PROPERTIES", "FX_PROPERTIES", "MULTITIER_PROPERTIES",
]

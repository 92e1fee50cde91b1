"""Parametric model checking by Gaussian elimination over rational functions.

The qualitative precomputation works on the graph of transitions that are not
identically zero and assumes every such transition is strictly positive at
admissible valuations (all parameters strictly inside their ranges).  States
with probability 0 or 1 are fixed before the linear system is set up, which
makes the remaining system non-singular.

Reachability rewards follow the zero convention: when the target is reached
with probability below 1 the expected reward is reported as 0 and a
``ProbLessThanOne`` diagnostic is recorded.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from typing import Iterable

from .errors import SingularSystem, UnknownRewardStructure
from .model import Diagnostic, ParametricMC
from .properties import ProbReach, ProbUntil, Query, RewardReach, StateFormula, sat_states
from .ratfun import ONE, ZERO, RationalFunction

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QualitativeResult:
    yes: frozenset[int]
    no: frozenset[int]
    maybe: frozenset[int]


def qualitative(mc: ParametricMC, target: Iterable[int], allowed: Iterable[int] | None = None) -> QualitativeResult:
    """Prob0/Prob1 sets for ``allowed U target`` (``allowed`` defaults to all states)."""
    target = frozenset(target)
    allowed = frozenset(range(mc.n_states)) if allowed is None else frozenset(allowed)
    pred = mc.predecessors()
    can = set(target)
    stack = list(target)
    while stack:
        t = stack.pop()
        for s in pred[t]:
            if s not in can and s in allowed:
                can.add(s)
                stack.append(s)
    no = frozenset(range(mc.n_states)) - can
    bad = set(no)
    stack = list(no)
    while stack:
        t = stack.pop()
        for s in pred[t]:
            if s not in bad and s in allowed and s not in target:
                bad.add(s)
                stack.append(s)
    yes = frozenset(range(mc.n_states)) - bad
    return QualitativeResult(yes, no, frozenset(can) - yes)


# -- elimination order ------------------------------------------------------------

def pivot_order(mc: ParametricMC, states: Iterable[int] | None = None, keep: int | None = None) -> list[int]:
    """Greedy minimum-degree elimination order on the transition graph.

    The graph is restricted to ``states`` (default: all).  The degree of a
    state is its number of distinct predecessors plus successors, self-loops
    excluded, updated after each elimination (eliminating ``k`` links every
    predecessor of ``k`` to every successor).  Ties go to the lower index.
    ``keep`` is excluded from the order.
    """
    nodes = set(range(mc.n_states)) if states is None else set(states)
    succ = {s: {t for t in mc.trans[s] if t in nodes and t != s} for s in nodes}
    pred = {s: set() for s in nodes}
    for s in nodes:
        for t in succ[s]:
            pred[t].add(s)
    return _min_degree(nodes, succ, pred, keep)[0]


def _min_degree(nodes, succ, pred, keep):
    heap = [(len(succ[s]) + len(pred[s]), s) for s in nodes if s != keep]
    heapq.heapify(heap)
    done = set()
    order = []
    fill = 0
    while heap:
        d, s = heapq.heappop(heap)
        if s in done or d != len(succ[s]) + len(pred[s]):
            continue
        done.add(s)
        order.append(s)
        touched = set()
        for p in pred[s]:
            succ[p].discard(s)
            touched.add(p)
        for q in succ[s]:
            pred[q].discard(s)
            touched.add(q)
        for p in pred[s]:
            for q in succ[s]:
                if p != q and q not in succ[p]:
                    succ[p].add(q)
                    pred[q].add(p)
                    fill += 1
                    touched.add(q)
        for x in touched:
            if x not in done and x != keep:
                heapq.heappush(heap, (len(succ[x]) + len(pred[x]), x))
    return order, fill


def fill_in(mc: ParametricMC, order: list[int]) -> int:
    """Number of new edges created when eliminating states in ``order``."""
    nodes = set(range(mc.n_states))
    succ = {s: {t for t in mc.trans[s] if t != s} for s in nodes}
    pred = {s: set() for s in nodes}
    for s in nodes:
        for t in succ[s]:
            pred[t].add(s)
    fill = 0
    for s in order:
        for p in pred[s]:
            succ[p].discard(s)
        for q in succ[s]:
            pred[q].discard(s)
        for p in pred[s]:
            for q in succ[s]:
                if p != q and q not in succ[p]:
                    succ[p].add(q)
                    pred[q].add(p)
                    fill += 1
        succ[s], pred[s] = set(), set()
    return fill


# -- linear solve ---------------------------------------------------------------------

def _solve(rows: dict[int, dict[int, RationalFunction]], b: dict[int, RationalFunction], keep: int,
           order: list[int] | None = None) -> RationalFunction:
    """Solve x = A x + b for x[keep] by state elimination.

    ``rows[s]`` holds the coefficients A[s][t] for unknowns t (self-loops
    allowed); ``b[s]`` the constant part.
    """
    rows = {s: dict(r) for s, r in rows.items()}
    b = dict(b)
    pred = {s: set() for s in rows}
    for s, r in rows.items():
        for t in r:
            if t != s:
                pred[t].add(s)
    if order is None:
        succ = {s: {t for t in r if t != s} for s, r in rows.items()}
        order = _min_degree(set(rows), succ, {s: set(p) for s, p in pred.items()}, keep)[0]
    for k in order:
        if k == keep or k not in rows:
            continue
        row = rows.pop(k)
        bk = b.pop(k, ZERO)
        loop = row.pop(k, None)
        if loop is not None:
            denom = ONE - loop
            if denom.is_zero():
                raise SingularSystem(f"state {k} is a probability-1 self-loop inside the linear system")
            inv = ONE / denom
            row = {t: f * inv for t, f in row.items()}
            bk = bk * inv
        for s in pred.pop(k):
            srow = rows[s]
            a = srow.pop(k)
            for t, f in row.items():
                v = srow.get(t, ZERO) + a * f
                if v.is_zero():
                    srow.pop(t, None)
                    if t != s:
                        pred[t].discard(s)
                else:
                    srow[t] = v
                    if t != s:
                        pred[t].add(s)
            if not bk.is_zero():
                v = b.get(s, ZERO) + a * bk
                if v.is_zero():
                    b.pop(s, None)
                else:
                    b[s] = v
        for t in row:
            if t in pred:
                pred[t].discard(k)
    loop = rows[keep].get(keep, ZERO)
    denom = ONE - loop
    if denom.is_zero():
        raise SingularSystem("initial state is a probability-1 self-loop inside the linear system")
    return b.get(keep, ZERO) / denom


def _reachable_within(mc: ParametricMC, start: int, inside: frozenset[int]) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for t in mc.trans[s]:
            if t in inside and t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


def _until(mc: ParametricMC, target: frozenset[int], allowed: frozenset[int] | None,
           order: list[int] | None) -> RationalFunction:
    if mc.init in target:
        return ONE
    q = qualitative(mc, target, allowed)
    if mc.init in q.no:
        return ZERO
    if mc.init in q.yes:
        return ONE
    unknowns = _reachable_within(mc, mc.init, q.maybe)
    rows, b = {}, {}
    for s in unknowns:
        row, acc = {}, ZERO
        for t, f in mc.trans[s].items():
            if t in unknowns:
                row[t] = f
            elif t in q.yes:
                acc = acc + f
        rows[s] = row
        if not acc.is_zero():
            b[s] = acc
    if order is not None:
        order = [s for s in order if s in unknowns]
    return _solve(rows, b, mc.init, order)


def reach_probability(mc: ParametricMC, target: Iterable[int], order: list[int] | None = None) -> RationalFunction:
    return _until(mc, frozenset(target), None, order)


def until_probability(mc: ParametricMC, phi1: StateFormula, phi2: StateFormula,
                      order: list[int] | None = None) -> RationalFunction:
    return _until(mc, sat_states(mc, phi2), sat_states(mc, phi1), order)


def reach_reward(mc: ParametricMC, structure: str, target: Iterable[int],
                 diagnostics: list | None = None, order: list[int] | None = None) -> RationalFunction:
    if structure not in mc.rewards:
        raise UnknownRewardStructure(f"unknown reward structure {structure!r}")
    target = frozenset(target)
    if mc.init in target:
        return ZERO
    q = qualitative(mc, target)
    if mc.init not in q.yes:
        msg = "target reached with probability below 1; reward reported as 0"
        log.warning(msg)
        if diagnostics is not None:
            diagnostics.append(Diagnostic("ProbLessThanOne", mc.states[mc.init], msg))
        return ZERO
    rho = mc.rewards[structure]
    unknowns = _reachable_within(mc, mc.init, frozenset(range(mc.n_states)) - target)
    rows, b = {}, {}
    for s in unknowns:
        rows[s] = {t: f for t, f in mc.trans[s].items() if t in unknowns}
        if s in rho:
            b[s] = rho[s]
    if order is not None:
        order = [s for s in order if s in unknowns]
    return _solve(rows, b, mc.init, order)


def check(mc: ParametricMC, query: Query, diagnostics: list | None = None,
          order: list[int] | None = None) -> RationalFunction:
    if isinstance(query, RewardReach):
        return reach_reward(mc, query.structure, sat_states(mc, query.target), diagnostics, order)
    if isinstance(query, ProbReach):
        return reach_probability(mc, sat_states(mc, query.target), order)
    if isinstance(query, ProbUntil):
        return until_probability(mc, query.left, query.right, order)
    raise TypeError(f"unsupported query {query!r}")

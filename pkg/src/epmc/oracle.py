"""Numeric ground truth at concrete valuations, random fragment models, and
equivalence reports comparing symbolic results against the numeric oracle.

The oracle shares no code with :mod:`epmc.engine`: it builds its own graph
from the strictly positive entries of the specialized matrix and solves the
linear systems with LU decomposition and partial pivoting in double precision.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import ratfun
from .errors import EpmcError, RowSumNotOne, SingularMatrix, UnknownAtom, UnknownRewardStructure, ValueOutOfRange
from .fragments import Fragment, make_fragment
from .model import Diagnostic, ParameterConstraints, ParametricMC, make_mc
from .properties import (
    And,
    Atom,
    Implies,
    Not,
    Or,
    ProbReach,
    ProbUntil,
    Query,
    RewardReach,
    TrueF,
    parse_property,
)
from .ratfun import RationalFunction

DENSE_LIMIT = 1500


@dataclass(frozen=True, eq=False)
class ConcreteMC:
    states: tuple[str, ...]
    init: int
    matrix: scipy.sparse.csr_matrix
    labels: Mapping[str, frozenset[int]]
    rewards: Mapping[str, np.ndarray]

    @property
    def n_states(self) -> int:
        return len(self.states)


def specialize(mc: ParametricMC, v: Mapping[str, object]) -> ConcreteMC:
    val = {k: Fraction(x) for k, x in v.items()}
    rows, cols, data = [], [], []
    for s, row in enumerate(mc.trans):
        acc = 0.0
        for t, f in row.items():
            x = float(ratfun.evaluate(f, val))
            if not (-1e-12 <= x <= 1 + 1e-12) or math.isnan(x):
                raise ValueOutOfRange(mc.states[s], mc.states[t], x)
            if x > 0:
                rows.append(s)
                cols.append(t)
                data.append(x)
            acc += x
        if abs(acc - 1.0) > 1e-9:
            raise RowSumNotOne(mc.states[s], repr(acc))
    n = mc.n_states
    matrix = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    rewards = {}
    for name, rw in mc.rewards.items():
        vec = np.zeros(n)
        for s, f in rw.items():
            vec[s] = float(ratfun.evaluate(f, val))
        rewards[name] = vec
    return ConcreteMC(mc.states, mc.init, matrix, dict(mc.labels), rewards)


def _sat(cmc: ConcreteMC, phi) -> np.ndarray:
    n = cmc.n_states
    if isinstance(phi, TrueF):
        return np.ones(n, dtype=bool)
    if isinstance(phi, Atom):
        if phi.name not in cmc.labels:
            raise UnknownAtom(f"unknown atomic proposition {phi.name!r}")
        out = np.zeros(n, dtype=bool)
        out[list(cmc.labels[phi.name])] = True
        return out
    if isinstance(phi, Not):
        return ~_sat(cmc, phi.arg)
    if isinstance(phi, And):
        return _sat(cmc, phi.left) & _sat(cmc, phi.right)
    if isinstance(phi, Or):
        return _sat(cmc, phi.left) | _sat(cmc, phi.right)
    if isinstance(phi, Implies):
        return ~_sat(cmc, phi.left) | _sat(cmc, phi.right)
    raise TypeError(f"not a state formula: {phi!r}")


def _backward_closure(cmc: ConcreteMC, seeds: np.ndarray, through: np.ndarray) -> np.ndarray:
    """States that reach ``seeds`` along paths whose non-final states lie in ``through``."""
    pred = cmc.matrix.transpose().tocsr()
    reach = seeds.copy()
    stack = list(np.flatnonzero(seeds))
    while stack:
        t = stack.pop()
        for s in pred.indices[pred.indptr[t]:pred.indptr[t + 1]]:
            if not reach[s] and through[s]:
                reach[s] = True
                stack.append(s)
    return reach


def _prob0_prob1(cmc: ConcreteMC, allowed: np.ndarray, target: np.ndarray):
    can = _backward_closure(cmc, target, allowed & ~target)
    no = ~can
    can_fail = _backward_closure(cmc, no, allowed & ~target)
    yes = ~can_fail
    return no, yes


def _solve(a: scipy.sparse.csr_matrix, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    m = scipy.sparse.identity(n, format="csc") - a.tocsc()
    try:
        if n <= DENSE_LIMIT:
            lu, piv = scipy.linalg.lu_factor(m.toarray(), check_finite=True)
            if np.any(np.abs(np.diag(lu)) < 1e-300):
                raise SingularMatrix("singular system in numeric oracle")
            return scipy.linalg.lu_solve((lu, piv), b)
        return scipy.sparse.linalg.splu(m).solve(b)
    except (scipy.linalg.LinAlgError, RuntimeError) as e:
        raise SingularMatrix(f"singular system in numeric oracle: {e}") from None


def _until(cmc: ConcreteMC, allowed: np.ndarray, target: np.ndarray) -> float:
    no, yes = _prob0_prob1(cmc, allowed, target)
    init = cmc.init
    if yes[init]:
        return 1.0
    if no[init]:
        return 0.0
    maybe = ~(no | yes)
    idx = np.flatnonzero(maybe)
    a = cmc.matrix[idx][:, idx]
    b = np.asarray(cmc.matrix[idx][:, np.flatnonzero(yes)].sum(axis=1)).ravel()
    x = _solve(a, b)
    return float(x[np.searchsorted(idx, init)])


def numeric_check(cmc: ConcreteMC, query: Query, diagnostics: list | None = None) -> float:
    n = cmc.n_states
    if isinstance(query, (ProbReach, ProbUntil)):
        return _until(cmc, _sat(cmc, query.left), _sat(cmc, query.right))
    if isinstance(query, RewardReach):
        if query.structure not in cmc.rewards:
            raise UnknownRewardStructure(f"unknown reward structure {query.structure!r}")
        target = _sat(cmc, query.target)
        if target[cmc.init]:
            return 0.0
        _, yes = _prob0_prob1(cmc, np.ones(n, dtype=bool), target)
        if not yes[cmc.init]:
            if diagnostics is not None:
                diagnostics.append(Diagnostic("ProbLessThanOne", cmc.states[cmc.init],
                                              "target reached with probability below 1; reward reported as 0"))
            return 0.0
        idx = np.flatnonzero(yes & ~target)
        a = cmc.matrix[idx][:, idx]
        x = _solve(a, cmc.rewards[query.structure][idx])
        return float(x[np.searchsorted(idx, cmc.init)])
    raise TypeError(f"unsupported query {query!r}")


# -- random fragment models ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RandomFragmentCase:
    mc: ParametricMC
    fragment: Fragment
    queries: tuple[Query, ...]  # preconditions hold
    violating: tuple[Query, ...]  # planted precondition violations
    has_cycle: bool


def _split(rng: random.Random, k: int, params: list[str], fresh) -> list[RationalFunction]:
    """Stick-breaking probabilities for ``k`` successors."""
    out = []
    rest = ratfun.ONE
    for _ in range(k - 1):
        if rng.random() < 0.2:
            piece = ratfun.const(Fraction(rng.randint(1, 9), 10))
        elif params and rng.random() < 0.3:
            piece = ratfun.var(rng.choice(params))
        else:
            name = fresh()
            params.append(name)
            piece = ratfun.var(name)
        out.append(rest * piece)
        rest = rest * (ratfun.ONE - piece)
    out.append(rest)
    return out


def random_fragment_case(seed: int, size_bound: int = 12) -> RandomFragmentCase:
    if size_bound < 4:
        raise EpmcError("size bound must be at least 4")
    rng = random.Random(seed)
    n = rng.randint(4, size_bound)
    goal, sink = n - 2, n - 1
    k = rng.randint(1, min(5, n - 2))
    n_out = n - 2 - k
    zs = list(range(n_out, n_out + k))  # fragment states, entry first
    outside = list(range(n_out))
    n_outputs = 1 if k == 1 else rng.randint(1, min(2, k - 1))
    outputs = zs[k - n_outputs:]
    params: list[str] = []
    counter = [0]

    def fresh():
        counter[0] += 1
        return f"q{counter[0]}"

    edges: dict[tuple[int, int], RationalFunction] = {}
    has_cycle = False
    for i, z in enumerate(zs):
        if z in outputs:
            succ = set(rng.sample(outside + [goal, sink], rng.randint(1, min(3, len(outside) + 2))))
        else:
            succ = {zs[rng.randint(i + 1, k - 1)]}
            nxt = zs[i + 1]
            if nxt not in outputs or rng.random() < 0.5:
                succ.add(nxt)
            if rng.random() < 0.55:
                back = zs[rng.randint(0, i)]
                succ.add(back)
                has_cycle = True
            if rng.random() < 0.3:
                succ.add(zs[rng.randint(i + 1, k - 1)])
        targets = sorted(succ)
        for t, f in zip(targets, _split(rng, len(targets), params, fresh)):
            edges[(z, t)] = f
    for s in outside:
        pool = outside + [zs[0], goal, sink]
        succ = set(rng.sample(pool, rng.randint(1, min(3, len(pool)))))
        succ.add(rng.choice([goal, sink, zs[0]]))
        if not succ & {goal, sink} and rng.random() < 0.5:
            succ.add(goal)
        if s == outside[0]:
            succ.add(zs[0])
        targets = sorted(succ)
        for t, f in zip(targets, _split(rng, len(targets), params, fresh)):
            edges[(s, t)] = f
    init = outside[0] if outside else zs[0]
    zset = set(zs)
    labels = {"goal": {goal}, "sink": {sink}}
    a_inside = rng.random() < 0.5
    labels["a"] = ({*zs} if a_inside else set()) | {s for s in outside if rng.random() < 0.5}
    labels["b"] = {s for s in outside if rng.random() < 0.4} | {goal}
    if k >= 2:
        labels["c"] = {zs[0]} | {s for s in outside if rng.random() < 0.3}
    labels["zin"] = {zs[-1]}
    reward = {}
    for s in outside + zs:
        if rng.random() < 0.7:
            if rng.random() < 0.5:
                reward[s] = ratfun.const(rng.randint(1, 5))
            else:
                name = f"w{s}"
                reward[s] = ratfun.var(name)
    mc = make_mc(n, edges, init, labels, {"r": reward})
    frag = make_fragment(mc, zset)
    queries = [
        parse_property('P=? [ F "goal" ]'),
        parse_property('P=? [ !"a" U "goal" ]' if rng.random() < 0.5 else 'P=? [ "a" | "b" U "goal" ]'),
        parse_property('R{"r"}=? [ F "goal" | "sink" ]'),
    ]
    violating = [parse_property('R{"r"}=? [ F "goal" | "sink" | "zin" ]')]
    if k >= 2:
        violating.append(parse_property('P=? [ !"c" U "goal" ]'))
    return RandomFragmentCase(mc, frag, tuple(queries), tuple(violating), has_cycle)


def random_fragment_model(seed: int, size_bound: int = 12):
    """(mc, fragment, queries) with the fragment's preconditions satisfied by every query."""
    case = random_fragment_case(seed, size_bound)
    return case.mc, case.fragment, list(case.queries)


# -- equivalence reports -------------------------------------------------------------

@dataclass
class EquivalenceReport:
    query: str
    samples: int
    tol: float
    max_diff: float = 0.0
    worst: Mapping[str, float] = field(default_factory=dict)
    failures: int = 0
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_diff <= self.tol and not self.errors

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status} {self.query}: max|symbolic - numeric| = {self.max_diff:.3e} "
                 f"over {self.samples} samples (tol {self.tol:g})"]
        if not self.passed and self.worst:
            lines.append("  worst valuation: " + ", ".join(f"{k}={v:.6g}" for k, v in sorted(self.worst.items())))
        lines += [f"  error: {e}" for e in self.errors]
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"query": self.query, "samples": self.samples, "tol": self.tol,
                           "max_diff": self.max_diff, "passed": self.passed, "failures": self.failures,
                           "worst": dict(self.worst), "errors": [str(e) for e in self.errors]},
                          sort_keys=True)


def _symbolic_value(symbolic, query: Query, val: Mapping[str, Fraction]) -> float:
    if isinstance(symbolic, RationalFunction):
        return float(ratfun.evaluate(symbolic, val))
    ext = dict(val)
    for name, f in symbolic.stage1:
        ext[name] = ratfun.evaluate(f, ext)
    text = str(query)
    for t, f in symbolic.stage2:
        if t == text:
            return float(ratfun.evaluate(f, ext))
    if len(symbolic.stage2) == 1:
        return float(ratfun.evaluate(symbolic.stage2[0][1], ext))
    raise KeyError(f"formula set has no entry for {text}")


def base_parameters(symbolic) -> set[str]:
    if isinstance(symbolic, RationalFunction):
        return set(symbolic.variables)
    derived = {n for n, _ in symbolic.stage1}
    out = set()
    for _, f in list(symbolic.stage1) + list(symbolic.stage2):
        out |= f.variables
    return out - derived


def equivalence_report(symbolic, model: ParametricMC, query: Query, samples: int = 100, tol: float = 1e-9,
                       seed: int = 0, constraints: ParameterConstraints | None = None) -> EquivalenceReport:
    if samples < 1:
        raise EpmcError("at least one sample is required")
    cons = model.constraints if constraints is None else model.constraints.merge(constraints)
    names = set(model.free_variables()) | base_parameters(symbolic)
    rng = random.Random(seed)
    rep = EquivalenceReport(str(query), samples, tol)
    for _ in range(samples):
        val = cons.sample(names, rng)
        try:
            got = _symbolic_value(symbolic, query, val)
            want = numeric_check(specialize(model, val), query)
        except EpmcError as e:
            rep.errors.append(e)
            continue
        diff = abs(got - want)
        if math.isnan(diff):
            diff = math.inf
        if diff > tol:
            rep.failures += 1
        if diff > rep.max_diff or not rep.worst:
            rep.max_diff = max(rep.max_diff, diff)
            if diff >= rep.max_diff:
                rep.worst = {k: float(x) for k, x in val.items()}
    return rep


__all__ = [
    "ConcreteMC", "specialize", "numeric_check", "random_fragment_model", "random_fragment_case",
    "RandomFragmentCase", "EquivalenceReport", "equivalence_report", "base_parameters",
]

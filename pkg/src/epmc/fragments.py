"""Fragments of a parametric MC, their associated MCs and the induced abstract MC.

A fragment ``(Z, z0, Z_out)`` is a set of transient states entered only through
``z0`` and left only from the output states ``Z_out``, which have no
transitions back into ``Z``.  Collapsing it into a single state preserves
until-probabilities whose atoms are uniform over ``Z`` and reachability
rewards whose target avoids ``Z``; both conditions are checked before a
reduction is performed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from . import engine, ratfun
from .errors import (
    AbsorbingInFragment,
    FragmentError,
    MultipleEntryStates,
    NoOutputStates,
    OutputBackEdge,
    PreconditionViolated,
)
from .model import ParametricMC
from .properties import ProbReach, ProbUntil, Query, RewardReach, StateFormula, atoms, sat_states
from .ratfun import ONE, ZERO, RationalFunction


@dataclass(frozen=True, eq=False)
class Fragment:
    states: frozenset[int]
    entry: int
    outputs: tuple[int, ...]
    host: ParametricMC


def make_fragment(mc: ParametricMC, Z: Iterable[int]) -> Fragment:
    Z = frozenset(Z)
    if not Z:
        raise FragmentError("fragment must be nonempty")
    if not Z <= set(range(mc.n_states)):
        raise FragmentError("fragment contains unknown states")
    for z in sorted(Z):
        if mc.is_absorbing(z):
            raise AbsorbingInFragment(z)
    pred = mc.predecessors()
    entries = {z for z in Z if any(s not in Z for s in pred[z])}
    if len(entries) > 1:
        raise MultipleEntryStates(entries)
    if mc.init in Z:
        if entries and mc.init not in entries:
            raise FragmentError("the initial state lies inside the fragment but is not its entry state")
        entries = {mc.init}
    if not entries:
        raise FragmentError("fragment is not reachable from outside")
    entry = next(iter(entries))
    outputs = sorted(z for z in Z if any(t not in Z for t in mc.trans[z]))
    if not outputs:
        raise NoOutputStates()
    for z in outputs:
        for t in sorted(mc.trans[z]):
            if t in Z:
                raise OutputBackEdge(z, t)
    # every state must be able to leave the fragment (transience)
    can_leave = set(outputs)
    changed = True
    while changed:
        changed = False
        for z in Z - can_leave:
            if any(t in can_leave for t in mc.trans[z]):
                can_leave.add(z)
                changed = True
    stuck = sorted(Z - can_leave)
    if stuck:
        raise FragmentError(f"states {stuck} cannot leave the fragment (not transient)")
    return Fragment(Z, entry, tuple(outputs), mc)


def _fresh_atom(base: str, taken) -> str:
    name = base
    while name in taken:
        name = "_" + name
    return name


@dataclass(frozen=True, eq=False)
class AssociatedMC:
    mc: ParametricMC
    fragment: Fragment
    local: Mapping[int, int]  # host index -> local index
    end: int
    output_atoms: Mapping[int, str]  # host output index -> atom
    end_atom: str


def associated_mc(frag: Fragment) -> AssociatedMC:
    host = frag.host
    order = sorted(frag.states)
    local = {z: i for i, z in enumerate(order)}
    end = len(order)
    outputs = set(frag.outputs)
    rows = []
    for z in order:
        if z in outputs:
            rows.append({end: ONE})
        else:
            rows.append({local[t]: f for t, f in host.trans[z].items()})
    rows.append({end: ONE})
    labels = {a: frozenset(local[s] for s in ss if s in local) for a, ss in host.labels.items()}
    taken = set(labels)
    output_atoms = {}
    for z in frag.outputs:
        atom = _fresh_atom(f"out_{host.states[z]}", taken)
        taken.add(atom)
        output_atoms[z] = atom
        labels[atom] = frozenset({local[z]})
    end_atom = _fresh_atom("end", taken)
    labels[end_atom] = frozenset({end})
    rewards = {name: {local[s]: f for s, f in rw.items() if s in local} for name, rw in host.rewards.items()}
    mc = ParametricMC(
        states=tuple(host.states[z] for z in order) + ("e",),
        init=local[frag.entry],
        trans=tuple(rows),
        labels=labels,
        rewards=rewards,
        parameters=host.parameters,
        constraints=host.constraints,
    )
    return AssociatedMC(mc, frag, local, end, output_atoms, end_atom)


@dataclass(frozen=True)
class Symbolic:
    """Fresh parameters named property + id (``prob1``, ``time1``, ...)."""

    id: str = "1"


@dataclass(frozen=True)
class Computed:
    """Output probabilities and rewards computed on the associated MC."""


Mode = Union[Symbolic, Computed]


@dataclass(frozen=True, eq=False)
class AbstractMC:
    mc: ParametricMC
    zbar: int
    index: Mapping[int, int]  # host index (outside Z) -> abstract index
    out_probs: Mapping[int, RationalFunction]
    rewards: Mapping[str, RationalFunction]
    symbols: tuple[str, ...] = field(default=())


def fragment_quantities(frag: Fragment, mode: Mode):
    """(output probability per output state, reward per structure, fresh names)."""
    host = frag.host
    structures = [n for n, rw in host.rewards.items() if any(s in frag.states for s in rw)]
    if isinstance(mode, Computed):
        assoc = associated_mc(frag)
        probs = {z: engine.reach_probability(assoc.mc, {assoc.local[z]}) for z in frag.outputs}
        rew = {n: engine.reach_reward(assoc.mc, n, {assoc.end}) for n in structures}
        return probs, rew, ()
    names = []
    outs = frag.outputs
    probs = {}
    if len(outs) == 1:
        probs[outs[0]] = ONE
    elif len(outs) == 2:
        names.append(f"prob{mode.id}")
        probs[outs[0]] = ratfun.var(names[-1])
        probs[outs[1]] = ONE - probs[outs[0]]
    else:
        acc = ZERO
        for k, z in enumerate(outs[:-1], 1):
            names.append(f"prob{mode.id}_{k}")
            probs[z] = ratfun.var(names[-1])
            acc = acc + probs[z]
        probs[outs[-1]] = ONE - acc
    rew = {}
    for n in structures:
        names.append(f"{n}{mode.id}")
        rew[n] = ratfun.var(names[-1])
    return probs, rew, tuple(names)


def induce_abstract(mc: ParametricMC, frag: Fragment, mode: Mode = Computed()) -> AbstractMC:
    if frag.host is not mc:
        raise FragmentError("fragment belongs to a different MC")
    probs, rew, names = fragment_quantities(frag, mode)
    keep = [s for s in range(mc.n_states) if s not in frag.states or s == frag.entry]
    index = {s: i for i, s in enumerate(keep)}
    zbar = index[frag.entry]
    rows = []
    for s in keep:
        if s == frag.entry:
            row: dict[int, RationalFunction] = {}
            for z in frag.outputs:
                for t, f in mc.trans[z].items():
                    row[index[t]] = row.get(index[t], ZERO) + probs[z] * f
            rows.append({t: f for t, f in row.items() if not f.is_zero()})
        else:
            rows.append({index[t]: f for t, f in mc.trans[s].items()})
    labels = {}
    for a, ss in mc.labels.items():
        new = {index[s] for s in ss if s not in frag.states}
        if frag.states <= ss:
            new.add(zbar)
        labels[a] = frozenset(new)
    rewards = {}
    for n, rw in mc.rewards.items():
        m = {index[s]: f for s, f in rw.items() if s not in frag.states}
        if n in rew and not rew[n].is_zero():
            m[zbar] = rew[n]
        rewards[n] = m
    states = tuple(mc.states[s] if s != frag.entry else f"[{mc.states[s]}..]" for s in keep)
    abstract = ParametricMC(
        states=states,
        init=index[mc.init] if mc.init in index else zbar,
        trans=tuple(rows),
        labels=labels,
        rewards=rewards,
        parameters=mc.parameters | frozenset(names),
        constraints=mc.constraints,
    )
    return AbstractMC(abstract, zbar, {s: i for s, i in index.items() if s != frag.entry}, probs, rew, names)


def check_until_precondition(frag: Fragment, phi1: StateFormula, phi2: StateFormula) -> bool:
    """Every atom of ``phi1``/``phi2`` holds in all fragment states or in none."""
    for a in atoms(phi1) | atoms(phi2):
        ss = frag.host.labels.get(a, frozenset())
        inside = len(frag.states & ss)
        if inside not in (0, len(frag.states)):
            return False
    return True


def check_reward_precondition(frag: Fragment, target: Iterable[int]) -> bool:
    return not (frozenset(target) & frag.states)


def reduce_and_check(mc: ParametricMC, frag: Fragment, query: Query) -> RationalFunction:
    """Answer ``query`` on the abstract MC, refusing when the reduction is unsound."""
    if isinstance(query, RewardReach):
        if not check_reward_precondition(frag, sat_states(mc, query.target)):
            raise PreconditionViolated("reward target intersects the fragment")
    elif isinstance(query, (ProbUntil, ProbReach)):
        if not check_until_precondition(frag, query.left, query.right):
            raise PreconditionViolated("an atom of the query is not uniform over the fragment")
    abstract = induce_abstract(mc, frag, Computed())
    return engine.check(abstract.mc, query)

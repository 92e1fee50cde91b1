"""Quantitative PCTL subset: ``P=? [ phi U phi ]``, ``P=? [ F phi ]`` and
``R{"name"}=? [ F phi ]`` with state formulae over labels."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import ParseError, UnknownAtom, UnsupportedOperator
from .model import ParametricMC


# -- state formulae -------------------------------------------------------------

@dataclass(frozen=True)
class TrueF:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self):
        return f'"{self.name}"'


@dataclass(frozen=True)
class Not:
    arg: "StateFormula"

    def __str__(self):
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"

    def __str__(self):
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: "StateFormula"
    right: "StateFormula"

    def __str__(self):
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


@dataclass(frozen=True)
class Implies:
    left: "StateFormula"
    right: "StateFormula"

    def __str__(self):
        return f"{_wrap(self.left)} => {_wrap(self.right)}"


StateFormula = Union[TrueF, Atom, Not, And, Or, Implies]


def _wrap(f) -> str:
    return f"({f})" if isinstance(f, (And, Or, Implies)) else str(f)


def atoms(f: StateFormula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, Not):
        return atoms(f.arg)
    if isinstance(f, (And, Or, Implies)):
        return atoms(f.left) | atoms(f.right)
    return set()


# -- queries -----------------------------------------------------------------------

@dataclass(frozen=True)
class ProbUntil:
    left: StateFormula
    right: StateFormula

    def __str__(self):
        return f"P=? [ {self.left} U {self.right} ]"


@dataclass(frozen=True)
class ProbReach:
    target: StateFormula

    @property
    def left(self) -> StateFormula:
        return TrueF()

    @property
    def right(self) -> StateFormula:
        return self.target

    def __str__(self):
        return f"P=? [ F {self.target} ]"


@dataclass(frozen=True)
class RewardReach:
    structure: str
    target: StateFormula

    def __str__(self):
        return f'R{{"{self.structure}"}}=? [ F {self.target} ]'


Query = Union[ProbUntil, ProbReach, RewardReach]


# -- parser ------------------------------------------------------------------------

_TOK = re.compile(
    r"\s*(?:(?P<str>\"[^\"]*\")|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<num>\d+(?:\.\d*)?)"
    r"|(?P<op>=\?|<=|>=|=>|[\[\]{}()!&|<>=:]))"
)
_OUT_OF_SCOPE = "bounded and steady-state forms are outside the scope of pattern-based parametric model checking"


def _tokens(text: str):
    out, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOK.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos:].lstrip()[0]!r}", text, pos)
        k = m.lastgroup
        out.append((k, m.group(k), m.start(k)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _PropParser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, v):
        t = self.take()
        if t[1] != v:
            if t[1] in (">=", "<=", "<", ">") or (v == "=?" and t[1] == "="):
                raise UnsupportedOperator(f"only quantitative '=?' queries are supported; {_OUT_OF_SCOPE}")
            raise ParseError(f"expected {v!r}, found {t[1] or 'end of input'!r}", self.text, t[2])
        return t

    def query(self) -> Query:
        t = self.take()
        if t[1] == "P":
            self.expect("=?")
            self.expect("[")
            if self.peek()[1] in ("X", "G"):
                raise UnsupportedOperator(f"operator {self.peek()[1]} is not supported; {_OUT_OF_SCOPE}")
            if self.peek()[1] == "F":
                self.take()
                self._no_bound()
                q = ProbReach(self.formula())
            else:
                left = self.formula()
                t2 = self.take()
                if t2[1] != "U":
                    raise ParseError(f"expected 'U', found {t2[1]!r}", self.text, t2[2])
                self._no_bound()
                q = ProbUntil(left, self.formula())
            self.expect("]")
        elif t[1] == "R":
            structure = None
            if self.peek()[1] == "{":
                self.take()
                s = self.take()
                if s[0] != "str":
                    raise ParseError("expected quoted reward structure name", self.text, s[2])
                structure = s[1][1:-1]
                self.expect("}")
            self.expect("=?")
            self.expect("[")
            op = self.take()
            if op[1] in ("I", "C", "S"):
                raise UnsupportedOperator(f"reward operator {op[1]} is not supported; {_OUT_OF_SCOPE}")
            if op[1] != "F":
                raise ParseError(f"expected 'F', found {op[1]!r}", self.text, op[2])
            self._no_bound()
            q = RewardReach(structure or "", self.formula())
            self.expect("]")
        elif t[1] == "S":
            raise UnsupportedOperator(f"steady-state operator S is not supported; {_OUT_OF_SCOPE}")
        else:
            raise ParseError(f"expected 'P' or 'R', found {t[1]!r}", self.text, t[2])
        end = self.take()
        if end[0] != "end":
            raise ParseError(f"unexpected {end[1]!r}", self.text, end[2])
        return q

    def _no_bound(self):
        if self.peek()[1] in ("<=", "<", ">=", ">", "="):
            raise UnsupportedOperator(f"time-bounded operators are not supported; {_OUT_OF_SCOPE}")

    def formula(self):
        left = self.disj()
        if self.peek()[1] == "=>":
            self.take()
            return Implies(left, self.formula())
        return left

    def disj(self):
        left = self.conj()
        while self.peek()[1] == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.unary()
        while self.peek()[1] == "&":
            self.take()
            left = And(left, self.unary())
        return left

    def unary(self):
        t = self.peek()
        if t[1] == "!":
            self.take()
            return Not(self.unary())
        if t[1] == "(":
            self.take()
            f = self.formula()
            self.expect(")")
            return f
        if t[1] == "P" and self.toks[self.i + 1][1] in ("=?", "<", "<=", ">", ">=", "["):
            raise UnsupportedOperator("nested probabilistic operators are not supported")
        self.take()
        if t[0] == "str":
            return Atom(t[1][1:-1])
        if t[0] == "id":
            if t[1] == "true":
                return TrueF()
            if t[1] == "false":
                return Not(TrueF())
            if t[1] in ("U", "F", "X", "G"):
                raise ParseError(f"unexpected temporal operator {t[1]!r}", self.text, t[2])
            return Atom(t[1])
        raise ParseError(f"unexpected {t[1] or 'end of input'!r}", self.text, t[2])


def parse_property(text: str) -> Query:
    return _PropParser(text.strip()).query()


def parse_property_file(text: str) -> list[Query]:
    """One query per line; ``#`` and ``//`` start comments."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        if line.strip().startswith("//"):
            continue
        if line.strip():
            out.append(parse_property(line))
    return out


def load_properties(path: str) -> list[Query]:
    with open(path, encoding="utf-8") as fh:
        return parse_property_file(fh.read())


# -- semantics ---------------------------------------------------------------------

def sat_states(mc: ParametricMC, phi: StateFormula) -> frozenset[int]:
    everything = frozenset(range(mc.n_states))
    if isinstance(phi, TrueF):
        return everything
    if isinstance(phi, Atom):
        if phi.name not in mc.labels:
            raise UnknownAtom(f"unknown atomic proposition {phi.name!r}")
        return mc.labels[phi.name]
    if isinstance(phi, Not):
        return everything - sat_states(mc, phi.arg)
    if isinstance(phi, And):
        return sat_states(mc, phi.left) & sat_states(mc, phi.right)
    if isinstance(phi, Or):
        return sat_states(mc, phi.left) | sat_states(mc, phi.right)
    if isinstance(phi, Implies):
        return (everything - sat_states(mc, phi.left)) | sat_states(mc, phi.right)
    raise TypeError(f"not a state formula: {phi!r}")


def query_atoms(q: Query) -> set[str]:
    if isinstance(q, RewardReach):
        return atoms(q.target)
    return atoms(q.left) | atoms(q.right)

"""Parametric Markov chains and the guarded-command model language.

Supported language subset (``.pm`` files)::

    dtmc
    const double p;                  // parameter (unbound)
    const double q = 0.5;            // constant; may reference parameters
    const int N = 3;
    module M
      z : [1..N] init 1;
      [] z=1 -> p:(z'=2) + (1-p):(z'=3);
    endmodule
    label "done" = z=2 | z=3;
    rewards "time"
      z=1 : t1;
    endrewards
    /// 1: SEQ(p11,c11,t11,p12,c12,t12)

Directives inside ``//`` comments tune parameter sampling and row-sum
checking:

* ``// @range name lo hi``: sample ``name`` uniformly from ``(lo, hi)``.
* ``// @simplex a b c``: ``a+b+c = 1``; sampled by normalized exponentials and
  assumed when checking that a row sums to 1.
* ``// @subsimplex a b``: ``a+b < 1`` (sampled with an implicit slack).

States with no enabled command get a probability-1 self-loop.  At most one
command may be enabled per state.  Reachable states are indexed in ascending
lexicographic order of their variable valuations.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Callable, Mapping, Sequence, Union

from . import ratfun
from .errors import (
    ModelError,
    NonFiniteVariableRange,
    OverlappingGuards,
    ParseError,
    RowSumNotOne,
    StateSpaceExceeded,
    UnknownIdentifier,
)
from .ratfun import ONE, ZERO, RationalFunction

DEFAULT_STATE_LIMIT = 1_000_000
DEFAULT_RANGE = (0.01, 0.99)


# -- parameter constraints and sampling -------------------------------------

@dataclass(frozen=True)
class ParameterConstraints:
    ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    simplices: tuple[tuple[str, ...], ...] = ()
    subsimplices: tuple[tuple[str, ...], ...] = ()

    def merge(self, other: "ParameterConstraints") -> "ParameterConstraints":
        ranges = dict(self.ranges)
        ranges.update(other.ranges)
        simp = tuple(dict.fromkeys(self.simplices + other.simplices))
        sub = tuple(dict.fromkeys(self.subsimplices + other.subsimplices))
        return ParameterConstraints(ranges, simp, sub)

    def row_sum_substitution(self) -> dict[str, RationalFunction]:
        """Eliminate the last member of every simplex group (a_k = 1 - others)."""
        sub = {}
        for group in self.simplices:
            if len(group) >= 1:
                sub[group[-1]] = ONE - ratfun.total(ratfun.var(g) for g in group[:-1])
        return sub

    def sample(self, names, rng: random.Random, digits: int | None = None) -> dict[str, Fraction]:
        """Admissible valuation for ``names``.

        Values are exact binary fractions of floats, or decimals with ``digits``
        places when given (short rationals keep exact evaluation of large
        formulas cheap)."""
        names = sorted(set(names))
        q = None if digits is None else Fraction(1, 10**digits)

        def snap(v: float) -> Fraction:
            if q is None:
                return Fraction(v)
            return max(q, Fraction(int(v / q), 10**digits))

        out: dict[str, Fraction] = {}
        for groups, slack in ((self.simplices, False), (self.subsimplices, True)):
            for group in groups:
                if not any(g in names for g in group) or any(g in out for g in group):
                    continue
                weights = [rng.expovariate(1.0) for _ in range(len(group) + slack)]
                total = sum(weights)
                for g, w in zip(group, weights):
                    out[g] = snap(w / total)
                if not slack:
                    # make the group sum to exactly 1 in rational arithmetic
                    out[group[-1]] = 1 - sum(out[g] for g in group[:-1])
                    if out[group[-1]] <= 0:
                        # rounding overshoot: fall back to a uniform split
                        for g in group:
                            out[g] = Fraction(1, len(group))
        for n in names:
            if n not in out:
                lo, hi = self.ranges.get(n, DEFAULT_RANGE)
                v = snap(rng.uniform(lo, hi))
                out[n] = min(max(v, Fraction(lo)), Fraction(hi))
        return {n: out[n] for n in names}


# -- explicit Markov chain ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParametricMC:
    """Explicit parametric DTMC.

    ``trans[s]`` maps successor indices to non-zero transition functions;
    ``labels`` maps each atomic proposition to the states carrying it;
    ``rewards[name][s]`` is the (non-zero) reward earned on leaving ``s``.
    """

    states: tuple[str, ...]
    init: int
    trans: tuple[Mapping[int, RationalFunction], ...]
    labels: Mapping[str, frozenset[int]]
    rewards: Mapping[str, Mapping[int, RationalFunction]]
    parameters: frozenset[str]
    constraints: ParameterConstraints = field(default_factory=ParameterConstraints)

    def __post_init__(self):
        object.__setattr__(self, "trans", tuple(MappingProxyType(dict(r)) for r in self.trans))
        object.__setattr__(self, "labels", MappingProxyType({k: frozenset(v) for k, v in self.labels.items()}))
        object.__setattr__(
            self, "rewards", MappingProxyType({k: MappingProxyType(dict(v)) for k, v in self.rewards.items()})
        )
        object.__setattr__(self, "parameters", frozenset(self.parameters))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_transitions(self) -> int:
        return sum(len(r) for r in self.trans)

    def label_of(self, s: int) -> frozenset[str]:
        return frozenset(a for a, ss in self.labels.items() if s in ss)

    def predecessors(self) -> list[set[int]]:
        pred = [set() for _ in self.states]
        for s, row in enumerate(self.trans):
            for t in row:
                pred[t].add(s)
        return pred

    def is_absorbing(self, s: int) -> bool:
        row = self.trans[s]
        return len(row) == 1 and s in row and row[s].is_one()

    def free_variables(self) -> frozenset[str]:
        out = set()
        for row in self.trans:
            for f in row.values():
                out |= f.variables
        for rw in self.rewards.values():
            for f in rw.values():
                out |= f.variables
        return frozenset(out)

    def describe(self) -> str:
        lines = [f"{self.n_states} states, {self.n_transitions} transitions, init {self.states[self.init]}"]
        for s, row in enumerate(self.trans):
            for t, f in sorted(row.items()):
                lines.append(f"  {self.states[s]} -> {self.states[t]} : {f}")
        return "\n".join(lines)


def make_mc(
    n_states: int,
    transitions: Mapping[tuple[int, int], Union[RationalFunction, str, int, Fraction]],
    init: int = 0,
    labels: Mapping[str, Sequence[int]] | None = None,
    rewards: Mapping[str, Mapping[int, Union[RationalFunction, str, int, Fraction]]] | None = None,
    names: Sequence[str] | None = None,
    parameters=None,
    constraints: ParameterConstraints | None = None,
) -> ParametricMC:
    """Convenience constructor from an edge map; absent rows become self-loops."""

    def conv(x):
        if isinstance(x, RationalFunction):
            return x
        if isinstance(x, str):
            return ratfun.parse_expression(x)
        return ratfun.const(x)

    rows = [dict() for _ in range(n_states)]
    for (s, t), f in transitions.items():
        f = conv(f)
        if not f.is_zero():
            rows[s][t] = rows[s].get(t, ZERO) + f
    for s in range(n_states):
        if not rows[s]:
            rows[s][s] = ONE
    rw = {k: {s: conv(v) for s, v in m.items() if not conv(v).is_zero()} for k, m in (rewards or {}).items()}
    mc_names = tuple(names) if names else tuple(f"s{i}" for i in range(n_states))
    params = set(parameters or ())
    for r in rows:
        for f in r.values():
            params |= f.variables
    for m in rw.values():
        for f in m.values():
            params |= f.variables
    return ParametricMC(
        states=mc_names,
        init=init,
        trans=tuple(rows),
        labels={k: frozenset(v) for k, v in (labels or {}).items()},
        rewards=rw,
        parameters=frozenset(params),
        constraints=constraints or ParameterConstraints(),
    )


# -- source AST --------------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    op: str  # 'num', 'name', 'bool', or an operator
    args: tuple = ()
    value: object = None
    pos: int = 0


@dataclass(frozen=True)
class ConstantDecl:
    name: str
    type: str
    expr: Expr | None
    pos: int


@dataclass(frozen=True)
class VariableDecl:
    name: str
    low: Expr
    high: Expr
    init: Expr | None
    pos: int


@dataclass(frozen=True)
class Update:
    assignments: tuple[tuple[str, Expr], ...]


@dataclass(frozen=True)
class Branch:
    prob: Expr | None
    update: Update


@dataclass(frozen=True)
class Command:
    guard: Expr
    branches: tuple[Branch, ...]
    pos: int


@dataclass(frozen=True)
class Module:
    name: str
    variables: tuple[VariableDecl, ...]
    commands: tuple[Command, ...]


@dataclass(frozen=True)
class LabelDecl:
    name: str
    expr: Expr
    pos: int


@dataclass(frozen=True)
class RewardItem:
    guard: Expr
    value: Expr


@dataclass(frozen=True)
class RewardBlock:
    name: str
    items: tuple[RewardItem, ...]


@dataclass(frozen=True)
class PatternAnnotation:
    id: str
    pattern_name: str
    actuals: tuple[str, ...]
    line: int = 0

    def derived_name(self, prop: str) -> str:
        return f"{prop}{self.id}"

    def __str__(self) -> str:
        return f"/// {self.id}: {self.pattern_name}({','.join(self.actuals)})"


@dataclass(frozen=True)
class ModelSource:
    constants: tuple[ConstantDecl, ...]
    modules: tuple[Module, ...]
    labels: tuple[LabelDecl, ...]
    rewards: tuple[RewardBlock, ...]
    annotations: tuple[PatternAnnotation, ...]
    constraints: ParameterConstraints = field(default_factory=ParameterConstraints)
    text: str = ""
    path: str | None = None

    @property
    def parameters(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.constants if c.expr is None)


# -- lexer -------------------------------------------------------------------

_MODEL_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"[^"\n]*")
  | (?P<op>->|\.\.|=>|!=|<=|>=|\*\*|[-+*/^()\[\]{}:;,=<>&|!'?])
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "dtmc", "probabilistic", "const", "double", "int", "bool", "module", "endmodule", "label",
    "rewards", "endrewards", "init", "true", "false", "formula", "global", "ctmc", "mdp", "endinit",
}


def _lex(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _MODEL_TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(kind), pos))
        pos = m.end()
    out.append(("end", "", n))
    return out


_ANNOTATION = re.compile(r"^\s*///\s*(?P<id>[A-Za-z0-9_]+)\s*:\s*(?P<name>[A-Za-z_][A-Za-z0-9_\-]*)\s*\((?P<args>.*)\)\s*;?\s*$")
_DIRECTIVE = re.compile(r"//\s*@(?P<kind>range|simplex|subsimplex)\b(?P<rest>[^\n]*)")


def _split_args(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur).strip())
    return parts


# -- parser ------------------------------------------------------------------

class _ModelParser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _lex(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.text, tok[2])

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            self.error(f"expected {value!r}, found {t[1] or 'end of input'!r}", t)
        return t

    def ident(self):
        t = self.take()
        if t[0] != "id" or t[1] in _KEYWORDS:
            self.error(f"expected identifier, found {t[1] or 'end of input'!r}", t)
        return t[1]

    def string(self):
        t = self.take()
        if t[0] != "str":
            self.error(f"expected quoted name, found {t[1]!r}", t)
        return t[1][1:-1]

    # top level
    def parse(self):
        constants, modules, labels, rewards = [], [], [], []
        t = self.peek()
        if t[1] in ("ctmc", "mdp"):
            self.error(f"model type {t[1]!r} is not supported (only dtmc)")
        if t[1] in ("dtmc", "probabilistic"):
            self.take()
        while self.peek()[0] != "end":
            t = self.peek()
            if t[1] == "const":
                constants.append(self.constant())
            elif t[1] == "module":
                modules.append(self.module())
            elif t[1] == "label":
                self.take()
                pos = self.peek()[2]
                name = self.string()
                self.expect("=")
                labels.append(LabelDecl(name, self.expr(), pos))
                self.expect(";")
            elif t[1] == "rewards":
                rewards.append(self.rewards())
            elif t[1] in ("formula", "global", "init"):
                self.error(f"{t[1]!r} declarations are not supported")
            elif t[1] in ("ctmc", "mdp"):
                self.error(f"model type {t[1]!r} is not supported (only dtmc)")
            else:
                self.error(f"unexpected {t[1]!r}")
        if not modules:
            raise ModelError("model has no module")
        return constants, modules, labels, rewards

    def constant(self):
        self.expect("const")
        pos = self.peek()[2]
        typ = "int"
        if self.peek()[1] in ("double", "int", "bool"):
            typ = self.take()[1]
        name = self.ident()
        expr = None
        if self.peek()[1] == "=":
            self.take()
            expr = self.expr()
        self.expect(";")
        if expr is None and typ != "double":
            raise ModelError(f"undefined constant {name!r} must be declared 'double' to act as a parameter")
        return ConstantDecl(name, typ, expr, pos)

    def module(self):
        self.expect("module")
        name = self.ident()
        variables, commands = [], []
        while self.peek()[1] != "endmodule":
            t = self.peek()
            if t[0] == "end":
                self.error("missing 'endmodule'")
            if t[1] == "[":
                commands.append(self.command())
            else:
                variables.append(self.variable())
        self.expect("endmodule")
        return Module(name, tuple(variables), tuple(commands))

    def variable(self):
        pos = self.peek()[2]
        name = self.ident()
        self.expect(":")
        if self.peek()[1] == "bool":
            self.error("boolean variables are not supported; use [0..1]")
        if self.peek()[1] != "[":
            raise NonFiniteVariableRange(f"variable {name!r} needs a bounded range [lo..hi]")
        self.take()
        lo = self.expr()
        self.expect("..")
        hi = self.expr()
        self.expect("]")
        init = None
        if self.peek()[1] == "init":
            self.take()
            init = self.expr()
        self.expect(";")
        return VariableDecl(name, lo, hi, init, pos)

    def command(self):
        pos = self.expect("[")[2]
        if self.peek()[1] != "]":
            act = self.take()
            self.error(f"synchronizing action {act[1]!r} is not supported", act)
        self.expect("]")
        guard = self.expr()
        self.expect("->")
        branches = []
        while True:
            if self.peek()[1] == "true" or (self.peek()[1] == "(" and self.peek(2)[1] == "'"):
                branches.append(Branch(None, self.update()))
            else:
                prob = self.expr()
                self.expect(":")
                branches.append(Branch(prob, self.update()))
            if self.peek()[1] == "+":
                self.take()
                continue
            break
        self.expect(";")
        if len(branches) > 1 and any(b.prob is None for b in branches):
            raise ParseError("every branch of a multi-branch command needs a probability", self.text, pos)
        return Command(guard, tuple(branches), pos)

    def update(self):
        if self.peek()[1] == "true":
            self.take()
            return Update(())
        assigns = []
        while True:
            self.expect("(")
            name = self.ident()
            self.expect("'")
            self.expect("=")
            assigns.append((name, self.expr()))
            self.expect(")")
            if self.peek()[1] == "&":
                self.take()
                continue
            break
        return Update(tuple(assigns))

    def rewards(self):
        self.expect("rewards")
        name = self.string() if self.peek()[0] == "str" else ""
        items = []
        while self.peek()[1] != "endrewards":
            if self.peek()[0] == "end":
                self.error("missing 'endrewards'")
            if self.peek()[1] == "[":
                self.error("transition rewards are not supported; use state rewards")
            guard = self.expr()
            self.expect(":")
            value = self.expr()
            self.expect(";")
            items.append(RewardItem(guard, value))
        self.expect("endrewards")
        return RewardBlock(name, tuple(items))

    # expressions: => < | < & < ! < relations < +- < */ < unary - < ^
    def expr(self):
        left = self.disj()
        if self.peek()[1] == "=>":
            pos = self.take()[2]
            return Expr("=>", (left, self.expr()), pos=pos)
        return left

    def disj(self):
        left = self.conj()
        while self.peek()[1] == "|":
            pos = self.take()[2]
            left = Expr("|", (left, self.conj()), pos=pos)
        return left

    def conj(self):
        left = self.neg()
        while self.peek()[1] == "&":
            pos = self.take()[2]
            left = Expr("&", (left, self.neg()), pos=pos)
        return left

    def neg(self):
        if self.peek()[1] == "!":
            pos = self.take()[2]
            return Expr("!", (self.neg(),), pos=pos)
        return self.rel()

    def rel(self):
        left = self.additive()
        if self.peek()[1] in ("=", "!=", "<", "<=", ">", ">="):
            _, op, pos = self.take()
            return Expr(op, (left, self.additive()), pos=pos)
        return left

    def additive(self):
        left = self.mult()
        while self.peek()[1] in ("+", "-"):
            op = self.peek()[1]
            pos = self.take()[2]
            left = Expr(op, (left, self.mult()), pos=pos)
        return left

    def mult(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/"):
            op, pos = self.peek()[1], self.take()[2]
            left = Expr(op, (left, self.unary()), pos=pos)
        return left

    def unary(self):
        if self.peek()[1] == "-":
            pos = self.take()[2]
            return Expr("neg", (self.unary(),), pos=pos)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            pos = self.take()[2]
            return Expr("^", (base, self.unary()), pos=pos)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Expr("num", value=Fraction(val), pos=pos)
        if val in ("true", "false"):
            return Expr("bool", value=(val == "true"), pos=pos)
        if kind == "id" and val not in _KEYWORDS:
            if self.peek()[1] == "(" and val in ("pow", "min", "max"):
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                return Expr(val, tuple(args), pos=pos)
            return Expr("name", value=val, pos=pos)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"unexpected {val or 'end of input'!r}", (kind, val, pos))


def _parse_directives(text: str) -> ParameterConstraints:
    ranges, simplices, sub = {}, [], []
    for m in _DIRECTIVE.finditer(text):
        words = m.group("rest").split()
        if m.group("kind") == "range":
            if len(words) != 3:
                raise ModelError(f"@range expects 'name lo hi', got {m.group(0)!r}")
            lo, hi = float(words[1]), float(words[2])
            if not lo < hi:
                raise ModelError(f"empty @range for {words[0]}")
            ranges[words[0]] = (lo, hi)
        elif m.group("kind") == "simplex":
            simplices.append(tuple(words))
        else:
            sub.append(tuple(words))
    return ParameterConstraints(ranges, tuple(simplices), tuple(sub))


def parse_model(text: str, path: str | None = None) -> ModelSource:
    annotations = []
    body_lines = []
    seen = set()
    for lineno, line in enumerate(text.split("\n"), 1):
        if line.lstrip().startswith("///"):
            m = _ANNOTATION.match(line)
            if not m:
                raise ParseError(f"malformed annotation on line {lineno}: {line.strip()!r}")
            ann = PatternAnnotation(m.group("id"), m.group("name"), tuple(_split_args(m.group("args"))), lineno)
            if ann.id in seen:
                raise ModelError(f"duplicate annotation id {ann.id!r}")
            seen.add(ann.id)
            annotations.append(ann)
            body_lines.append("")
        else:
            body_lines.append(line)
    body = "\n".join(body_lines)
    constants, modules, labels, rewards = _ModelParser(body).parse()
    src = ModelSource(
        tuple(constants), tuple(modules), tuple(labels), tuple(rewards), tuple(annotations),
        _parse_directives(body), text, path,
    )
    _check_identifiers(src)
    return src


def _names_in(e: Expr, acc: list):
    if e.op == "name":
        acc.append(e)
    for a in e.args:
        _names_in(a, acc)
    return acc


def _check_identifiers(src: ModelSource):
    known_consts = set()
    for c in src.constants:
        if c.name in known_consts:
            raise ModelError(f"constant {c.name!r} declared twice")
        if c.expr is not None:
            for n in _names_in(c.expr, []):
                if n.value not in known_consts:
                    raise UnknownIdentifier(f"unknown identifier {n.value!r} in definition of {c.name!r}")
        known_consts.add(c.name)
    variables = set()
    for m in src.modules:
        for v in m.variables:
            if v.name in variables or v.name in known_consts:
                raise ModelError(f"name {v.name!r} declared twice")
            variables.add(v.name)
    scope = known_consts | variables

    def check(e: Expr, where: str, allowed=scope):
        for n in _names_in(e, []):
            if n.value not in allowed:
                raise UnknownIdentifier(f"unknown identifier {n.value!r} in {where}")

    for m in src.modules:
        for v in m.variables:
            for e in (v.low, v.high) + ((v.init,) if v.init else ()):
                check(e, f"range of {v.name}", known_consts)
        for c in m.commands:
            check(c.guard, "guard")
            for b in c.branches:
                if b.prob is not None:
                    check(b.prob, "probability")
                for name, e in b.update.assignments:
                    if name not in variables:
                        raise UnknownIdentifier(f"update of unknown variable {name!r}")
                    check(e, f"update of {name}")
    for lab in src.labels:
        check(lab.expr, f"label {lab.name!r}")
    for rb in src.rewards:
        for it in rb.items:
            check(it.guard, f"rewards {rb.name!r}")
            check(it.value, f"rewards {rb.name!r}")


# -- expression compilation ----------------------------------------------------

Value = Union[Fraction, bool, RationalFunction]


def _arith(op, a, b):
    if isinstance(a, bool) or isinstance(b, bool):
        raise ModelError(f"arithmetic operator {op!r} applied to a boolean")
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if isinstance(b, Fraction) and b == 0:
            raise ModelError("division by zero in model expression")
        if isinstance(a, Fraction) and isinstance(b, Fraction):
            return a / b
        return ratfun._coerce(a) / ratfun._coerce(b)
    raise AssertionError(op)


def _num(x, what):
    if isinstance(x, RationalFunction):
        if x.is_constant():
            return x.constant_value()
        raise ModelError(f"{what} depends on parameters {sorted(x.variables)}")
    if isinstance(x, bool):
        raise ModelError(f"{what} must be numeric")
    return x


def _bool(x, what):
    if not isinstance(x, bool):
        raise ModelError(f"{what} must be boolean")
    return x


_REL = {
    "=": lambda a, b: a == b, "!=": lambda a, b: a != b, "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
}


class _Compiler:
    def __init__(self, var_index: Mapping[str, int], constants: Mapping[str, Value]):
        self.var_index = var_index
        self.constants = constants

    def _eq_atom(self, e: Expr):
        """(var index, constant) if e is 'var = constant', else None."""
        if e.op != "=":
            return None
        a, b = e.args
        for x, y in ((a, b), (b, a)):
            if x.op == "name" and x.value in self.var_index:
                try:
                    val = self.compile(y)(())
                except (IndexError, ModelError, TypeError):
                    continue
                if isinstance(val, Fraction):
                    return self.var_index[x.value], val
        return None

    def compile(self, e: Expr) -> Callable[[tuple], Value]:
        op = e.op
        if op == "num":
            v = e.value
            return lambda st: v
        if op == "bool":
            v = e.value
            return lambda st: v
        if op == "name":
            name = e.value
            if name in self.var_index:
                i = self.var_index[name]
                return lambda st: Fraction(st[i])
            v = self.constants[name]
            return lambda st: v
        if op == "|":
            # fast path for 'v=a | v=b | ...' over a single variable
            disj = []
            stack = [e]
            while stack:
                x = stack.pop()
                if x.op == "|":
                    stack.extend(x.args)
                else:
                    disj.append(x)
            atoms = [self._eq_atom(x) for x in disj]
            if all(atoms) and len({a[0] for a in atoms}) == 1:
                i = atoms[0][0]
                values = frozenset(int(a[1]) if a[1].denominator == 1 else a[1] for a in atoms)
                return lambda st: st[i] in values
            fs = [self.compile(x) for x in disj]
            return lambda st: any(_bool(f(st), "operand of '|'") for f in fs)
        if op in ("&", "=>"):
            fa, fb = self.compile(e.args[0]), self.compile(e.args[1])
            if op == "&":
                return lambda st: _bool(fa(st), "operand of '&'") and _bool(fb(st), "operand of '&'")
            return lambda st: (not _bool(fa(st), "operand of '=>'")) or _bool(fb(st), "operand of '=>'")
        if op == "!":
            fa = self.compile(e.args[0])
            return lambda st: not _bool(fa(st), "operand of '!'")
        if op in _REL:
            atom = self._eq_atom(e)
            if atom is not None:
                i, v = atom
                return lambda st: st[i] == v
            fa, fb = self.compile(e.args[0]), self.compile(e.args[1])
            rel = _REL[op]

            def relf(st):
                a, b = fa(st), fb(st)
                if isinstance(a, bool) and isinstance(b, bool) and op in ("=", "!="):
                    return rel(a, b)
                return rel(_num(a, "comparison operand"), _num(b, "comparison operand"))

            return relf
        if op in ("+", "-", "*", "/"):
            fa, fb = self.compile(e.args[0]), self.compile(e.args[1])
            return lambda st: _arith(op, fa(st), fb(st))
        if op == "neg":
            fa = self.compile(e.args[0])

            def negf(st):
                a = fa(st)
                if isinstance(a, bool):
                    raise ModelError("unary minus applied to a boolean")
                return -a

            return negf
        if op in ("^", "pow"):
            fa, fb = self.compile(e.args[0]), self.compile(e.args[1])

            def powf(st):
                k = _num(fb(st), "exponent")
                if k.denominator != 1:
                    raise ModelError("exponent must be an integer")
                a = fa(st)
                if isinstance(a, Fraction):
                    return a ** int(k)
                return a ** int(k)

            return powf
        if op in ("min", "max"):
            fs = [self.compile(a) for a in e.args]
            fn = min if op == "min" else max
            return lambda st: fn(_num(f(st), op) for f in fs)
        raise ModelError(f"unsupported operator {op!r}")


def _to_rf(x: Value, what: str) -> RationalFunction:
    if isinstance(x, bool):
        raise ModelError(f"{what} must be numeric")
    return x if isinstance(x, RationalFunction) else ratfun.const(x)


def _evaluate_constants(src: ModelSource) -> dict[str, Value]:
    values: dict[str, Value] = {}
    comp = _Compiler({}, values)
    for c in src.constants:
        if c.expr is None:
            values[c.name] = ratfun.var(c.name)
        else:
            v = comp.compile(c.expr)(())
            if c.type == "int":
                v = _num(v, f"constant {c.name}")
                if v.denominator != 1:
                    raise ModelError(f"int constant {c.name} is not an integer")
            if isinstance(v, RationalFunction) and v.is_constant():
                v = v.constant_value()
            values[c.name] = v
    return values


def build_states(src: ModelSource, state_limit: int = DEFAULT_STATE_LIMIT) -> ParametricMC:
    constants = _evaluate_constants(src)
    var_names, lows, highs, init = [], [], [], []
    const_comp = _Compiler({}, constants)
    for m in src.modules:
        for v in m.variables:
            lo = _num(const_comp.compile(v.low)(()), f"lower bound of {v.name}")
            hi = _num(const_comp.compile(v.high)(()), f"upper bound of {v.name}")
            if lo.denominator != 1 or hi.denominator != 1 or lo > hi:
                raise NonFiniteVariableRange(f"invalid range for variable {v.name}")
            k = lo if v.init is None else _num(const_comp.compile(v.init)(()), f"initial value of {v.name}")
            if not lo <= k <= hi or k.denominator != 1:
                raise ModelError(f"initial value of {v.name} outside its range")
            var_names.append(v.name)
            lows.append(int(lo))
            highs.append(int(hi))
            init.append(int(k))
    index = {n: i for i, n in enumerate(var_names)}
    comp = _Compiler(index, constants)

    commands = []
    for m in src.modules:
        for c in m.commands:
            guard = comp.compile(c.guard)
            branches = []
            for b in c.branches:
                prob = comp.compile(b.prob) if b.prob is not None else (lambda st: Fraction(1))
                upd = [(index[name], comp.compile(e), name) for name, e in b.update.assignments]
                branches.append((prob, upd))
            commands.append((guard, branches, c, _guard_key(comp, c.guard)))
    keyed: dict[tuple[int, int], list] = {}
    general = []
    for cmd in commands:
        if cmd[3] is None:
            general.append(cmd)
        else:
            keyed.setdefault(cmd[3], []).append(cmd)

    subst = src.constraints.row_sum_substitution()

    def describe(st):
        return "(" + ",".join(f"{n}={v}" for n, v in zip(var_names, st)) + ")"

    start = tuple(init)
    seen = {start}
    frontier = [start]
    raw_rows: dict[tuple, dict[tuple, RationalFunction]] = {}
    while frontier:
        st = frontier.pop()
        cands = list(general)
        for i, v in enumerate(st):
            cands.extend(keyed.get((i, v), ()))
        enabled = [cmd for cmd in cands if _bool(cmd[0](st), "guard")]
        row: dict[tuple, RationalFunction] = {}
        if len(enabled) > 1:
            raise OverlappingGuards(describe(st))
        if not enabled:
            row[st] = ONE
        else:
            _, branches, cmd, _ = enabled[0]
            for prob, upd in branches:
                p = _to_rf(prob(st), "probability")
                if p.is_zero():
                    continue
                tgt = list(st)
                for i, f, name in upd:
                    val = _num(f(st), f"update of {name}")
                    if val.denominator != 1 or not lows[i] <= val <= highs[i]:
                        raise ModelError(f"update of {name} in state {describe(st)} leaves its range: {val}")
                    tgt[i] = int(val)
                tgt = tuple(tgt)
                row[tgt] = row.get(tgt, ZERO) + p
            row = {t: f for t, f in row.items() if not f.is_zero()}
            total = ratfun.total(row.values())
            if not total.is_one() and not (subst and ratfun.substitute(total, subst).is_one()):
                raise RowSumNotOne(describe(st), str(total))
        raw_rows[st] = row
        for t in row:
            if t not in seen:
                seen.add(t)
                if len(seen) > state_limit:
                    raise StateSpaceExceeded(state_limit)
                frontier.append(t)

    order = sorted(seen)
    idx = {st: i for i, st in enumerate(order)}
    trans = tuple({idx[t]: f for t, f in raw_rows[st].items()} for st in order)
    labels = {}
    for lab in src.labels:
        f = comp.compile(lab.expr)
        labels[lab.name] = frozenset(i for i, st in enumerate(order) if _bool(f(st), f"label {lab.name}"))
    labels.setdefault("init", frozenset({idx[start]}))
    rewards = {}
    for rb in src.rewards:
        items = [(comp.compile(it.guard), comp.compile(it.value)) for it in rb.items]
        rw = {}
        for i, st in enumerate(order):
            acc = ZERO
            for g, val in items:
                if _bool(g(st), f"reward guard of {rb.name!r}"):
                    acc = acc + _to_rf(val(st), f"reward of {rb.name!r}")
            if not acc.is_zero():
                rw[i] = acc
        rewards[rb.name] = rw
    names = tuple(_state_name(var_names, st) for st in order)
    return ParametricMC(
        states=names,
        init=idx[start],
        trans=trans,
        labels=labels,
        rewards=rewards,
        parameters=frozenset(src.parameters),
        constraints=src.constraints,
    )


def _state_name(var_names, st) -> str:
    if len(var_names) == 1 and var_names[0] == "s":
        return f"s{st[0]}"
    return "(" + ",".join(f"{n}={v}" for n, v in zip(var_names, st)) + ")"


def _guard_key(comp: _Compiler, guard: Expr):
    """An equality 'var = constant' that every state enabling the guard satisfies."""
    stack = [guard]
    while stack:
        e = stack.pop()
        if e.op == "&":
            stack.extend(reversed(e.args))
            continue
        atom = comp._eq_atom(e)
        if atom is not None and atom[1].denominator == 1:
            return atom[0], int(atom[1])
    return None


def load_model(path: str) -> ModelSource:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), path)


# -- validation ----------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    kind: str
    state: str | None
    detail: str

    def __str__(self) -> str:
        where = f" at {self.state}" if self.state is not None else ""
        return f"{self.kind}{where}: {self.detail}"


def reachable_states(mc: ParametricMC) -> set[int]:
    seen = {mc.init}
    stack = [mc.init]
    while stack:
        s = stack.pop()
        for t in mc.trans[s]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


def validate(mc: ParametricMC, samples: int = 10, seed: int = 0) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    subst = mc.constraints.row_sum_substitution()
    for s, row in enumerate(mc.trans):
        total = ratfun.total(row.values())
        if not total.is_one() and not (subst and ratfun.substitute(total, subst).is_one()):
            diags.append(Diagnostic("RowSumNotOne", mc.states[s], str(total)))
    reach = reachable_states(mc)
    for s in range(mc.n_states):
        if s not in reach:
            diags.append(Diagnostic("Unreachable", mc.states[s], "not reachable from the initial state"))
    rng = random.Random(seed)
    names = mc.free_variables() | mc.parameters
    flagged = set()
    for _ in range(samples):
        val = mc.constraints.sample(names, rng)
        for s, row in enumerate(mc.trans):
            for t, f in row.items():
                if (s, t) in flagged:
                    continue
                x = ratfun.evaluate(f, val)
                if not 0 <= x <= 1:
                    flagged.add((s, t))
                    diags.append(Diagnostic("ProbabilityOutOfRange", mc.states[s],
                                            f"P(->{mc.states[t]}) = {float(x):.6g} at a sampled valuation"))
        for name, rw in mc.rewards.items():
            for s, f in rw.items():
                if (name, s) in flagged:
                    continue
                if ratfun.evaluate(f, val) < 0:
                    flagged.add((name, s))
                    diags.append(Diagnostic("NegativeReward", mc.states[s], f"structure {name!r}"))
    return diags

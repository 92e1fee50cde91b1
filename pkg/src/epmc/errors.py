"""Exception hierarchy shared by all modules.

Every error raised deliberately by the package derives from ``EpmcError`` so
the CLI can map it to exit code 1 with a one-line diagnostic.
"""

from __future__ import annotations


class EpmcError(Exception):
    """Base class for all package errors."""


class ParseError(EpmcError, ValueError):
    """Text did not conform to a grammar; carries a 0-based offset."""

    def __init__(self, message: str, text: str = "", pos: int | None = None):
        self.pos = pos
        self.line = self.col = None
        if pos is not None and text:
            self.line = text.count("\n", 0, pos) + 1
            self.col = pos - (text.rfind("\n", 0, pos) + 1) + 1
            message = f"{message} (line {self.line}, column {self.col})"
        elif pos is not None:
            message = f"{message} (offset {pos})"
        super().__init__(message)


# ratfun
class DivisionByZero(EpmcError, ZeroDivisionError):
    pass


class UnboundVariable(EpmcError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"unbound variable: {self.name}"


class DenominatorZeroAtPoint(EpmcError, ZeroDivisionError):
    pass


# model
class UnknownIdentifier(EpmcError):
    pass


class NonFiniteVariableRange(EpmcError):
    pass


class RowSumNotOne(EpmcError):
    def __init__(self, state: str, total: str):
        self.state, self.total = state, total
        super().__init__(f"outgoing probabilities of state {state} sum to {total}, not 1")


class OverlappingGuards(EpmcError):
    def __init__(self, state: str):
        self.state = state
        super().__init__(f"more than one command enabled in state {state}")


class StateSpaceExceeded(EpmcError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"state space exceeds the limit of {limit} states")


class ModelError(EpmcError):
    """Semantic problem in a model that is not covered by a narrower error."""


# properties
class UnsupportedOperator(EpmcError):
    pass


class UnknownAtom(EpmcError):
    pass


# fragments
class FragmentError(EpmcError):
    pass


class MultipleEntryStates(FragmentError):
    def __init__(self, states):
        self.states = sorted(states)
        super().__init__(f"fragment has more than one entry state: {self.states}")


class NoOutputStates(FragmentError):
    def __init__(self):
        super().__init__("fragment has no output state")


class OutputBackEdge(FragmentError):
    def __init__(self, z: int, z2: int):
        self.edge = (z, z2)
        super().__init__(f"output state {z} has a transition back into the fragment ({z2})")


class AbsorbingInFragment(FragmentError):
    def __init__(self, s: int):
        self.state = s
        super().__init__(f"fragment state {s} is absorbing")


class PreconditionViolated(FragmentError):
    """Reduction refused because a reduction precondition does not hold."""


# engine
class SingularSystem(EpmcError):
    pass


class UnknownRewardStructure(EpmcError):
    pass


# patterns
class UnknownFormalInExpression(EpmcError):
    pass


class UnknownPattern(EpmcError):
    pass


class ArityMismatch(EpmcError):
    pass


class UnknownProperty(EpmcError):
    pass


class PatternConstraintViolated(EpmcError):
    pass


# pipeline
class UnresolvedAnnotation(EpmcError):
    pass


class MissingPatternProperty(EpmcError):
    def __init__(self, param: str, detail: str = ""):
        self.param = param
        super().__init__(f"no repository property provides model parameter {param}" + (f": {detail}" if detail else ""))


# oracle
class ValueOutOfRange(EpmcError):
    def __init__(self, src, dst, value):
        self.src, self.dst, self.value = src, dst, value
        super().__init__(f"transition {src}->{dst} evaluates to {value}, outside [0, 1]")


class SingularMatrix(EpmcError):
    pass


# pipeline
class WorkerDied(EpmcError):
    """A bounded child computation ended without a result (typically out of memory)."""

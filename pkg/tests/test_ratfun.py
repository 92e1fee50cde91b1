import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epmc import ratfun
from epmc.errors import DenominatorZeroAtPoint, DivisionByZero, ParseError, UnboundVariable
from epmc.ratfun import RationalFunction, evaluate, op_count, parse_expression, simplify

P = parse_expression
NAMES = ("a", "b", "c", "p1", "q")


def polys(max_terms=4):
    term = st.tuples(
        st.fractions(min_value=-5, max_value=5, max_denominator=4),
        st.dictionaries(st.sampled_from(NAMES), st.integers(1, 3), max_size=2),
    )

    def build(terms):
        out = ratfun.const(0)
        for c, mono in terms:
            t = ratfun.const(c)
            for v, e in mono.items():
                t = t * ratfun.var(v) ** e
            out = out + t
        return out

    return st.lists(term, max_size=max_terms).map(build)


def rationals():
    return st.tuples(polys(), polys().filter(lambda d: not d.is_zero())).map(lambda nd: nd[0] / nd[1])


def valuations():
    return st.fixed_dictionaries({n: st.fractions(min_value=-3, max_value=3, max_denominator=7) for n in NAMES})


def _eval(f, v):
    try:
        return evaluate(f, v)
    except DenominatorZeroAtPoint:
        return None


class TestArithmetic:
    def test_complement_sums_to_one(self):
        assert P("p") + P("1-p") == 1

    def test_additive_identity(self):
        f = P("p/(1-q)")
        assert ratfun.const(0) + f == f

    def test_common_denominator(self):
        assert P("p/(1-q)") + P("q/(1-q)") == P("(p+q)/(1-q)")

    def test_common_denominator_pointwise(self, rng):
        lhs, rhs = P("p/(1-q)") + P("q/(1-q)"), P("(p+q)/(1-q)")
        for _ in range(20):
            v = {"p": Fraction(rng.randint(1, 99), 100), "q": Fraction(rng.randint(1, 99), 100)}
            assert evaluate(lhs, v) == evaluate(rhs, v)

    def test_inverse(self):
        assert P("p") * (1 / P("p")) == 1

    def test_factorization(self):
        assert P("(p^2-1)/(p-1)") == P("p+1")

    def test_distributivity(self):
        assert P("(1-p1)*(1-p2)") == P("1 - p1 - p2 + p1*p2")

    def test_divide_by_zero(self):
        with pytest.raises(DivisionByZero):
            P("p") / P("q-q")

    def test_literal_zero_denominator(self):
        with pytest.raises(DivisionByZero):
            P("1/(1-1)")


class TestCanonicalForm:
    def test_common_factor_cancels(self):
        assert P("(p*q - p)/(q - 1)") == P("p")
        assert P("(p*q - p)/(q - 1)").den.is_constant()

    def test_cancellation_to_polynomial(self):
        f = P("((1-p1)*(1-p2)*x)/x")
        assert f.is_polynomial() and f == P("1 - p1 - p2 + p1*p2")

    def test_simplify_idempotent(self):
        f = P("(p1+(1-p1)*p2)/(1-(1-p1)*(1-p2)*r)")
        assert simplify(f) == f and str(simplify(f)) == str(f)

    def test_denominator_sign_normalized(self):
        assert str(P("1/(-p)")) == str(P("-1/p"))

    def test_deterministic_printing(self):
        assert str(P("b*a + a^2")) == str(P("a^2 + a*b"))


class TestEvaluate:
    def test_retry_success_probability(self):
        prob3 = P("(p31+(1-p31)*p32)/(1-(1-p31)*(1-p32)*r)")
        v = {"p31": Fraction(9, 10), "p32": Fraction(9, 10), "r": Fraction(1, 2)}
        assert evaluate(prob3, v) == Fraction(99, 100) / Fraction(995, 1000)
        assert float(evaluate(prob3, v)) == pytest.approx(0.994974874, abs=1e-9)

    def test_constant(self):
        assert evaluate(ratfun.const(1), {"p": 3}) == 1

    def test_boundary(self):
        assert evaluate(P("p1+(1-p1)*p2"), {"p1": 1, "p2": 0}) == 1

    def test_unbound(self):
        with pytest.raises(UnboundVariable, match="p2"):
            evaluate(P("p1+p2"), {"p1": 1})

    def test_denominator_zero(self):
        with pytest.raises(DenominatorZeroAtPoint):
            evaluate(P("1/(1-q)"), {"q": 1})


class TestParse:
    def test_repository_expression(self):
        assert P("p1+(1-p1)*p2") == P("p1 + p2 - p1*p2")

    def test_retry_time_expression(self):
        f = P("(t1+(1-p1)*t2)/(1-(1-p1)*(1-p2)*r)")
        assert f.variables == {"t1", "t2", "p1", "p2", "r"}

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError) as e:
            P("p1 + * p2")
        assert e.value.pos is not None

    def test_round_trip_canonical(self):
        f = P("(p31+(1-p31)*p32)/(1-(1-p31)*(1-p32)*r) + 3/7*x^3")
        assert P(str(f)) == f and str(P(str(f))) == str(f)


class TestOpCount:
    def test_constant(self):
        assert op_count(ratfun.const(5)) == 0

    def test_seq_probability(self):
        # p1 + p2 - p1*p2: two additions and one multiplication
        assert op_count(P("p1+(1-p1)*p2")) == 3

    def test_power_and_coefficient(self):
        # 3*x^2*y: two multiplications, one exponentiation
        assert op_count(P("3*x^2*y")) == 3

    def test_division(self):
        # (p)/(1 - q): one subtraction, one division
        assert op_count(P("p/(1-q)")) == 2

    def test_simplify_invariant(self):
        f = P("(p*q - p)/(q - 1) + x")
        assert op_count(f) == op_count(simplify(f))


@settings(max_examples=200, deadline=None)
@given(rationals(), rationals(), valuations())
def test_evaluation_homomorphism(f, g, v):
    fv, gv = _eval(f, v), _eval(g, v)
    if fv is None or gv is None:
        return
    assert _eval(f + g, v) in (fv + gv, None)
    assert _eval(f - g, v) in (fv - gv, None)
    assert _eval(f * g, v) in (fv * gv, None)
    if not g.is_zero() and gv != 0:
        assert _eval(f / g, v) in (fv / gv, None)


@settings(max_examples=200, deadline=None)
@given(rationals())
def test_print_parse_print(f):
    assert str(P(str(f))) == str(f)


@settings(max_examples=100, deadline=None)
@given(rationals(), rationals())
def test_canonical_equality_iff_pointwise(f, g):
    rng = random.Random(0)
    same = (f - g).is_zero()
    assert same == (f == g)
    pointwise = True
    for _ in range(50):
        v = {n: Fraction(rng.randint(-300, 300), 97) for n in NAMES}
        a, b = _eval(f, v), _eval(g, v)
        if a is not None and b is not None and a != b:
            pointwise = False
            break
    assert same == pointwise


def test_rational_function_is_hashable_and_interned():
    assert hash(P("a*b")) == hash(P("b*a"))
    assert ratfun.var("a") == RationalFunction.variable("a")

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epmc.errors import ParseError, UnknownAtom, UnsupportedOperator
from epmc.properties import (
    And,
    Atom,
    Not,
    Or,
    ProbReach,
    ProbUntil,
    RewardReach,
    TrueF,
    parse_property,
    parse_property_file,
    sat_states,
)


class TestParse:
    def test_reach(self):
        assert parse_property('P=? [ F "succ" ]') == ProbReach(Atom("succ"))

    def test_until(self):
        assert parse_property('P=? [ !"op3" U "fail" ]') == ProbUntil(Not(Atom("op3")), Atom("fail"))

    def test_reward(self):
        q = parse_property('R{"time"}=? [ F ("succ" | "fail") ]')
        assert q == RewardReach("time", Or(Atom("succ"), Atom("fail")))

    def test_bare_labels_and_true(self):
        assert parse_property("P=? [ true U succ & !fail ]") == ProbUntil(TrueF(), And(Atom("succ"), Not(Atom("fail"))))

    @pytest.mark.parametrize("text", [
        'P=? [ X "succ" ]', 'P=? [ "a" U<=5 "b" ]', 'R{"time"}=? [ I=3 ]', 'R{"time"}=? [ C<=4 ]',
        'R{"time"}=? [ S ]', 'P>=0.5 [ F "succ" ]', 'S=? [ "succ" ]',
    ])
    def test_out_of_scope(self, text):
        with pytest.raises(UnsupportedOperator, match="outside the scope"):
            parse_property(text)

    def test_syntax_error(self):
        with pytest.raises(ParseError):
            parse_property('P=? [ F ')

    def test_round_trip(self):
        for text in ('P=? [ F "succ" ]', 'P=? [ !"op3" U "fail" ]', 'R{"cost"}=? [ F "succ" | "fail" ]'):
            assert str(parse_property(text)) == text

    def test_property_file(self):
        qs = parse_property_file('# comment\nP=? [ F "succ" ]\n\nR{"time"}=? [ F "fail" ]\n')
        assert len(qs) == 2


class TestSat:
    def test_atom(self, mono_mc):
        assert sat_states(mono_mc, Atom("succ")) == {mono_mc.states.index("s14")}

    def test_true(self, mono_mc):
        assert sat_states(mono_mc, TrueF()) == set(range(mono_mc.n_states))

    def test_disjoint(self, mono_mc):
        assert sat_states(mono_mc, And(Atom("succ"), Atom("fail"))) == set()

    def test_unknown_atom(self, mono_mc):
        with pytest.raises(UnknownAtom):
            sat_states(mono_mc, Atom("nope"))


ATOMS = ("op1", "op2", "op3", "succ", "fail")
formulas = st.recursive(
    st.sampled_from(ATOMS).map(Atom) | st.just(TrueF()),
    lambda inner: st.one_of(inner.map(Not), st.tuples(inner, inner).map(lambda t: And(*t)),
                            st.tuples(inner, inner).map(lambda t: Or(*t))),
    max_leaves=6,
)


@settings(max_examples=100, deadline=None)
@given(formulas, formulas)
def test_boolean_algebra(mono_mc, f, g):
    every = set(range(mono_mc.n_states))
    assert sat_states(mono_mc, Not(f)) == every - sat_states(mono_mc, f)
    assert sat_states(mono_mc, And(f, g)) == sat_states(mono_mc, f) & sat_states(mono_mc, g)
    assert sat_states(mono_mc, Or(f, g)) == sat_states(mono_mc, f) | sat_states(mono_mc, g)

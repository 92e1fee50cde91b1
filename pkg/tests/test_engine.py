import random

import pytest

from epmc import engine, ratfun
from epmc.errors import UnknownRewardStructure
from epmc.fragments import associated_mc, make_fragment
from epmc.model import make_mc
from epmc.oracle import numeric_check, specialize
from epmc.patterns import SBSInstance, pattern_mc
from epmc.properties import Atom, Not, Or, ProbReach, ProbUntil, RewardReach, parse_property
from golden import STAGE1_REFERENCE, STAGE2_REFERENCE

P = ratfun.parse_expression


def _assoc(mc, names):
    return associated_mc(make_fragment(mc, [mc.states.index(n) for n in names]))


def _index(mc, name):
    return mc.states.index(name)


class TestReachProbability:
    def test_seq_fragment(self, mono_mc):
        a = _assoc(mono_mc, ["s0", "s1", "s2", "s3"])
        got = engine.reach_probability(a.mc, [a.local[_index(mono_mc, "s2")]])
        assert got == P(STAGE1_REFERENCE["prob1"])

    def test_retry_fragment(self, mono_mc):
        a = _assoc(mono_mc, ["s9", "s10", "s11", "s12"])
        got = engine.reach_probability(a.mc, [a.local[_index(mono_mc, "s11")]])
        assert got == P(STAGE1_REFERENCE["prob3"])

    def test_initial_in_target(self, mono_mc):
        assert engine.reach_probability(mono_mc, [mono_mc.init]).is_one()


class TestUntil:
    def test_failure_before_op3(self, annotated_mc):
        got = engine.check(annotated_mc, parse_property('P=? [ !"op3" U "fail" ]'))
        assert got == P(STAGE2_REFERENCE['P=? [ !"op3" U "fail" ]'])

    def test_success(self, annotated_mc):
        got = engine.check(annotated_mc, ProbUntil(ProbReach(Atom("succ")).left, Atom("succ")))
        assert got == P(STAGE2_REFERENCE['P=? [ F "succ" ]'])

    def test_phi2_in_initial_state(self, annotated_mc):
        assert engine.check(annotated_mc, ProbReach(Atom("op1"))).is_one()


class TestReward:
    def test_time(self, annotated_mc):
        got = engine.check(annotated_mc, RewardReach("time", Or(Atom("succ"), Atom("fail"))))
        assert got == P(STAGE2_REFERENCE['R{"time"}=? [ F "succ" | "fail" ]'])

    def test_retry_fragment_time(self, mono_mc):
        a = _assoc(mono_mc, ["s9", "s10", "s11", "s12"])
        assert engine.reach_reward(a.mc, "time", [a.end]) == P(STAGE1_REFERENCE["time3"])

    def test_zero_rewards(self):
        mc = make_mc(2, {(0, 1): 1}, rewards={"r": {}})
        assert engine.reach_reward(mc, "r", [1]).is_zero()

    def test_unknown_structure(self, annotated_mc):
        with pytest.raises(UnknownRewardStructure):
            engine.check(annotated_mc, RewardReach("energy", Atom("succ")))

    def test_unreachable_target_convention(self):
        mc = make_mc(3, {(0, 1): "p", (0, 2): "1-p"}, rewards={"r": {0: 1}})
        diags = []
        assert engine.reach_reward(mc, "r", [1], diags).is_zero()
        assert [d.kind for d in diags] == ["ProbLessThanOne"]


class TestQualitative:
    def test_partition(self, mono_mc):
        q = engine.qualitative(mono_mc, mono_mc.labels["succ"])
        assert q.yes | q.no | q.maybe == set(range(mono_mc.n_states))
        assert not (q.yes & q.no or q.yes & q.maybe or q.no & q.maybe)
        assert _index(mono_mc, "s13") in q.no and _index(mono_mc, "s14") in q.yes


class TestPivotOrder:
    def test_chain(self):
        mc = make_mc(5, {(i, i + 1): 1 for i in range(4)})
        assert engine.pivot_order(mc, states=[1, 2, 3]) == [1, 2, 3]

    def test_star_leaves_first(self):
        edges = {(0, i): "1/4" for i in range(1, 5)}
        edges.update({(i, 0): "1/2" for i in range(1, 5)})
        edges.update({(i, i): "1/2" for i in range(1, 5)})
        mc = make_mc(5, edges)
        order = engine.pivot_order(mc)
        assert order.index(0) >= 3
        assert engine.fill_in(mc, order) < engine.fill_in(mc, [0, 1, 2, 3, 4])

    def test_ties_by_index(self):
        mc = make_mc(4, {(0, 1): "1/2", (0, 2): "1/2", (1, 3): 1, (2, 3): 1})
        assert engine.pivot_order(mc, keep=0)[:2] == [1, 2]


def _sample(mc, rng):
    return mc.constraints.sample(mc.free_variables(), rng)


QUERIES = ('P=? [ F "succ" ]', 'P=? [ !"op3" U "fail" ]', 'R{"time"}=? [ F "succ" | "fail" ]',
           'R{"cost"}=? [ F "succ" | "fail" ]')


@pytest.mark.parametrize("text", QUERIES)
def test_oracle_equivalence(mono_mc, text):
    q = parse_property(text)
    f = engine.check(mono_mc, q)
    rng = random.Random(7)
    for _ in range(50):
        v = _sample(mono_mc, rng)
        assert abs(float(ratfun.evaluate(f, v)) - numeric_check(specialize(mono_mc, v), q)) <= 1e-9


@pytest.mark.parametrize("text", QUERIES[:2])
def test_probabilities_in_unit_interval(mono_mc, text):
    f = engine.check(mono_mc, parse_property(text))
    rng = random.Random(8)
    for _ in range(50):
        assert 0 <= ratfun.evaluate(f, _sample(mono_mc, rng)) <= 1


def test_pivot_order_independence(mono_mc):
    q = parse_property('R{"time"}=? [ F "succ" | "fail" ]')
    base = engine.check(mono_mc, q)
    for seed in range(3):
        order = list(range(mono_mc.n_states))
        random.Random(seed).shuffle(order)
        assert engine.check(mono_mc, q, order=order) == base


def test_seq_monotone_in_service_reliability():
    mc = pattern_mc(SBSInstance("SEQ", 3)).mc
    f = engine.check(mc, ProbReach(Atom("succ")))
    rng = random.Random(0)
    for _ in range(20):
        v = _sample(mc, rng)
        for p in ("p1", "p2", "p3"):
            w = dict(v)
            w[p] = min(v[p] + (1 - v[p]) / 2, 1)
            assert ratfun.evaluate(f, w) >= ratfun.evaluate(f, v)


def test_not_operator_in_until(mono_mc):
    q = ProbUntil(Not(Atom("op3")), Atom("fail"))
    assert engine.check(mono_mc, q) == engine.check(mono_mc, parse_property('P=? [ !"op3" U "fail" ]'))

import random
from fractions import Fraction

import pytest

from epmc import engine, ratfun
from epmc.errors import ArityMismatch, ParseError, PatternConstraintViolated, UnknownFormalInExpression
from epmc.model import PatternAnnotation
from epmc.patterns import (
    SBS_KINDS,
    SBSInstance,
    ServerInstance,
    builtin_multitier,
    builtin_sbs,
    instantiate,
    load_repository,
    parse_repository,
    pattern_mc,
    sbs_closed_forms,
    server_closed_forms,
)
from epmc.properties import parse_property

P = ratfun.parse_expression

REPO_TEXT = """
# three entries in the repository file format
SEQ(p1,c1,t1,p2,c2,t2): prob=p1+(1-p1)*p2, cost=c1+(1-p1)*c2, time=t1+(1-p1)*t2;
PROB(x1,p1,c1,t1,x2,p2,c2,t2): prob=x1*p1+x2*p2, cost=x1*c1+x2*c2, time=x1*t1+x2*t2;
SEQ_R(p1,c1,t1,p2,c2,t2,r): prob=(p1+(1-p1)*p2)/(1-(1-p1)*(1-p2)*r),
    cost=(c1+(1-p1)*c2)/(1-(1-p1)*(1-p2)*r), time=(t1+(1-p1)*t2)/(1-(1-p1)*(1-p2)*r);
"""


class TestRepositoryText:
    def test_parse(self):
        repo = parse_repository(REPO_TEXT)
        assert sorted(repo.names()) == ["PROB", "SEQ", "SEQ_R"]
        assert repo.get("SEQ").properties["prob"] == P("p1+(1-p1)*p2")

    def test_empty(self):
        assert len(parse_repository("")) == 0

    def test_unknown_formal(self):
        with pytest.raises(UnknownFormalInExpression):
            parse_repository("SEQ(p1,p2): prob=p1+q;")

    def test_syntax_error(self):
        with pytest.raises(ParseError):
            parse_repository("SEQ(p1,p2) prob=p1;")

    def test_text_round_trip(self):
        repo = parse_repository(REPO_TEXT)
        again = parse_repository(repo.to_text())
        for name in repo.names():
            assert again.get(name).properties == repo.get(name).properties

    def test_builtin_agrees_with_text(self):
        text, builtin = parse_repository(REPO_TEXT), builtin_sbs(2)
        for name in ("SEQ", "PROB", "SEQ_R"):
            assert text.get(name).formals == builtin.get(name).formals
            assert text.get(name).properties == builtin.get(name).properties


class TestClosedForms:
    def test_seq(self):
        f = sbs_closed_forms("SEQ", 2)
        assert f["prob"] == P("p1+(1-p1)*p2")
        assert f["cost"] == P("c1+(1-p1)*c2")
        assert f["time"] == P("t1+(1-p1)*t2")

    def test_seq_r(self):
        assert sbs_closed_forms("SEQ_R", 2)["prob"] == P("(p1+(1-p1)*p2)/(1-(1-p1)*(1-p2)*r)")

    def test_single_service_par(self):
        f = sbs_closed_forms("PAR", 1)
        assert f["time"] == P("t1") and f["prob"] == P("p1")

    def test_par_prob_equals_seq_prob(self):
        for n in range(1, 5):
            assert sbs_closed_forms("PAR", n)["prob"] == sbs_closed_forms("SEQ", n)["prob"]

    def test_prob_identical_services(self):
        f = sbs_closed_forms("PROB", 3)["prob"]
        v = {"x1": Fraction(1, 5), "x2": Fraction(3, 10), "x3": Fraction(1, 2)}
        v.update({f"p{i}": Fraction(7, 10) for i in (1, 2, 3)})
        assert ratfun.evaluate(f, v) == Fraction(7, 10)

    def test_virtualized_outcomes(self):
        f = server_closed_forms("VIRTUALIZED", (1, 1))
        assert f["p_11"] == P("p*p_VM^2")
        assert f["p_00"] == P("(1-p)+p*(1-p_VM)^2")

    @pytest.mark.parametrize("kind", ["BASIC", "VIRTUALIZED", "VIRTUALIZED-M"])
    @pytest.mark.parametrize("ns", [(1,), (3,), (1, 2), (2, 3)])
    def test_outcomes_sum_to_one(self, kind, ns):
        assert ratfun.total(server_closed_forms(kind, ns).values()).is_one()


class TestBuiltins:
    def test_sbs_has_all_kinds(self):
        assert sorted(builtin_sbs(3).names()) == sorted(SBS_KINDS)

    def test_load(self):
        assert load_repository("builtin:sbs?n=2").get("SEQ").formals == builtin_sbs(2).get("SEQ").formals
        assert "VIRTUALIZED_1_1" in load_repository("builtin:multitier?m=2&nmax=2")

    def test_multitier_shape_bound(self):
        repo = builtin_multitier(2, 2)
        assert "BASIC_2_2" in repo and "BASIC_3" not in repo and "BASIC_1_1_1" not in repo


class TestInstantiate:
    def _ann(self, name, actuals, id_="1"):
        return PatternAnnotation(id_, name, tuple(actuals))

    def test_seq_prob(self):
        ann = self._ann("SEQ", ["p11", "c11", "t11", "p12", "c12", "t12"])
        assert instantiate(builtin_sbs(2), ann, "prob") == ("prob1", P("p11+(1-p11)*p12"))

    def test_seq_r_time(self):
        ann = self._ann("SEQ_R", ["p31", "c31", "t31", "p32", "c32", "t32", "r"], "3")
        name, f = instantiate(builtin_sbs(2), ann, "time")
        assert name == "time3" and f == P("(t31+(1-p31)*t32)/(1-(1-p31)*(1-p32)*r)")

    def test_constant_actuals(self):
        ann = self._ann("SEQ", ["0.9", "1", "2", "0.8", "1", "2"])
        assert instantiate(builtin_sbs(2), ann, "prob")[1] == ratfun.const(Fraction(98, 100))

    def test_arity(self):
        with pytest.raises(ArityMismatch):
            instantiate(builtin_sbs(2), self._ann("SEQ", ["p1", "c1", "t1"]), "prob")

    def test_prob_branches_must_sum_to_one(self):
        ann = self._ann("PROB", ["0.5", "p1", "c1", "t1", "0.6", "p2", "c2", "t2"])
        with pytest.raises(PatternConstraintViolated):
            instantiate(builtin_sbs(2), ann, "prob")

    def test_shape_resolution(self):
        ann = self._ann("VIRTUALIZED", ["1", "1", "pA", "pVMA"], "A")
        name, f = instantiate(builtin_multitier(2, 2), ann, "p_11")
        assert name == "p_11A" and f == P("pA*pVMA^2")


def _admissible(mc, rng):
    return mc.constraints.sample(mc.free_variables(), rng)


@pytest.mark.parametrize("kind", SBS_KINDS)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_sbs_mc_matches_closed_form(kind, n):
    pm = pattern_mc(SBSInstance(kind, n))
    forms = sbs_closed_forms(kind, n)
    prob = engine.check(pm.mc, parse_property('P=? [ F "succ" ]'))
    subst = pm.mc.constraints.row_sum_substitution()
    assert ratfun.substitute(prob - forms["prob"], subst).is_zero()


def test_server_mc_matches_closed_form():
    rng = random.Random(5)
    for kind in ("BASIC", "VIRTUALIZED", "VIRTUALIZED-M"):
        pm = pattern_mc(ServerInstance(kind, (1, 2)))
        forms = server_closed_forms(kind, (1, 2))
        v = _admissible(pm.mc, rng)
        for end in pm.ends:
            got = engine.check(pm.mc, parse_property(f'P=? [ F "{end}" ]'))
            assert ratfun.evaluate(got, v) == ratfun.evaluate(forms["p_" + end[2:]], v)

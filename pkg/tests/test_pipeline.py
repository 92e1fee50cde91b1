import random
from fractions import Fraction

import pytest

from epmc import ratfun
from epmc.errors import MissingPatternProperty
from epmc.model import parse_model
from epmc.patterns import builtin_sbs, parse_repository
from epmc.pipeline import (
    FormulaSet,
    emit_script,
    epmc_check,
    eval_formula_set,
    formula_set_size,
    max_disagreement,
    mono_check,
    parse_script,
    run_with_timeout,
)
from epmc.properties import parse_property
from golden import MONOLITHIC_REFERENCE, MONOLITHIC_TIME_AS_PUBLISHED, STAGE1_REFERENCE, STAGE2_REFERENCE

P = ratfun.parse_expression


@pytest.fixture(scope="module")
def epmc_fs(annotated_src, running_queries):
    return epmc_check(annotated_src, builtin_sbs(2), running_queries)


@pytest.fixture(scope="module")
def mono_fs(mono_mc, running_queries):
    return mono_check(mono_mc, running_queries)


def _composed(fs):
    """Stage-2 formulas with the stage-1 expressions substituted in."""
    subst = dict(fs.stage1)
    return {text: ratfun.substitute(f, subst) for text, f in fs.stage2}


def _valuation(mc, rng):
    return mc.constraints.sample(mc.free_variables(), rng)


class TestEpmcCheck:
    def test_stage1(self, epmc_fs):
        assert sorted(n for n, _ in epmc_fs.stage1) == sorted(STAGE1_REFERENCE)
        assert [n for n, _ in epmc_fs.stage1][:3] == ["prob1", "prob2", "prob3"]
        for name, f in epmc_fs.stage1:
            assert f == P(STAGE1_REFERENCE[name])

    def test_stage2(self, epmc_fs):
        assert [t for t, _ in epmc_fs.stage2] == list(STAGE2_REFERENCE)
        for text, f in epmc_fs.stage2:
            assert f == P(STAGE2_REFERENCE[text])

    def test_metadata(self, epmc_fs):
        assert epmc_fs.metadata["states"] == 5
        assert epmc_fs.metadata["repository"] == "builtin:sbs?n=2"

    def test_missing_property(self, annotated_src, running_queries):
        repo = parse_repository("SEQ(p1,c1,t1,p2,c2,t2): prob=p1+(1-p1)*p2, time=t1+(1-p1)*t2;\n"
                                + builtin_sbs(2).get("PROB").to_text() + builtin_sbs(2).get("SEQ_R").to_text())
        with pytest.raises(MissingPatternProperty, match="cost1"):
            epmc_check(annotated_src, repo, running_queries)

    def test_zero_annotations(self):
        src = parse_model("dtmc\nconst double p;\nmodule M\n  z : [0..2] init 0;\n"
                          "  [] z=0 -> p:(z'=1) + (1-p):(z'=2);\nendmodule\nlabel \"done\" = z=1;\n")
        fs = epmc_check(src, builtin_sbs(2), [parse_property('P=? [ F "done" ]')])
        assert fs.stage1 == () and fs.formula(0) == P("p")

    def test_deterministic(self, annotated_src, running_queries, epmc_fs):
        again = epmc_check(annotated_src, builtin_sbs(2), running_queries)
        assert emit_script(again) == emit_script(epmc_fs)


class TestMonolithic:
    def test_matches_composed_epmc(self, epmc_fs, mono_fs, mono_mc):
        subst = mono_mc.constraints.row_sum_substitution()
        comp = _composed(epmc_fs)
        for text, f in mono_fs.stage2:
            assert ratfun.substitute(f - comp[text], subst).is_zero()

    def test_published_expressions_numerically(self, mono_fs, mono_mc, rng):
        for _ in range(30):
            v = _valuation(mono_mc, rng)
            for text, ref in MONOLITHIC_REFERENCE.items():
                assert float(ratfun.evaluate(mono_fs.formula(text), v)) == pytest.approx(
                    float(ratfun.evaluate(P(ref), v)), abs=1e-12)

    def test_published_fail_probability_canonical(self, mono_fs):
        text = 'P=? [ !"op3" U "fail" ]'
        assert mono_fs.formula(text) == P(MONOLITHIC_REFERENCE[text])

    def test_published_expected_time_is_inconsistent(self, epmc_fs, mono_fs, mono_mc):
        # The published monolithic time disagrees with the composition of the exact
        # stage-1 and stage-2 time formulas; the computed monolithic result agrees with it.
        text = 'R{"time"}=? [ F "succ" | "fail" ]'
        subst = mono_mc.constraints.row_sum_substitution()
        published = ratfun.substitute(P(MONOLITHIC_TIME_AS_PUBLISHED), subst)
        composed = ratfun.substitute(_composed(epmc_fs)[text], subst)
        assert ratfun.substitute(mono_fs.formula(text), subst) == composed
        assert published != composed

    def test_single_state(self):
        src = parse_model('dtmc\nmodule M\n  z : [0..0] init 0;\nendmodule\nlabel "succ" = z=0;\n')
        assert mono_check(src, [parse_property('P=? [ F "succ" ]')]).formula(0).is_one()

    def test_epmc_smaller(self, epmc_fs, mono_fs):
        assert formula_set_size(epmc_fs) < formula_set_size(mono_fs)


class TestEvaluation:
    def test_perfect_first_operation(self, epmc_fs):
        v = {k: Fraction(1, 2) for k in ("x", "y", "r", "alpha1", "alpha2")}
        v.update({k: Fraction(3, 10) for k in ("p21", "p22", "p31", "p32")})
        v.update(p11=1, p12=1)
        v.update({f"{m}{i}{j}": 1 for m in "tc" for i in (1, 2, 3) for j in (1, 2)})
        prob2 = Fraction(3, 10)
        assert eval_formula_set(epmc_fs, v)['P=? [ !"op3" U "fail" ]'] == pytest.approx(float(Fraction(1, 2) * (1 - prob2)))

    def test_all_services_succeed(self, epmc_fs):
        v = {f"p{i}{j}": 1 for i in (1, 2, 3) for j in (1, 2)}
        v.update({f"{m}{i}{j}": 1 for m in "tc" for i in (1, 2, 3) for j in (1, 2)})
        v.update(x=Fraction(1, 3), y=Fraction(9, 10), r=Fraction(1, 2), alpha1=Fraction(1, 4), alpha2=Fraction(3, 4))
        assert eval_formula_set(epmc_fs, v)['P=? [ F "succ" ]'] == 1.0

    def test_empty(self):
        assert eval_formula_set(FormulaSet(), {}) == {}
        assert formula_set_size(FormulaSet()) == 0

    def test_max_disagreement(self, epmc_fs, mono_fs, mono_mc):
        assert max_disagreement(epmc_fs, mono_fs, mono_mc.constraints, samples=20) <= 1e-12


class TestScript:
    def test_layout(self, epmc_fs):
        lines = [ln for ln in emit_script(epmc_fs).splitlines() if not ln.startswith("%")]
        assert len(lines) == 13 and lines[0].startswith("prob1 = ")

    def test_empty(self):
        assert all(ln.startswith("%") for ln in emit_script(FormulaSet()).splitlines())

    def test_round_trip(self, epmc_fs, tmp_path):
        path = tmp_path / "formulas.m"
        text = emit_script(epmc_fs, str(path))
        back = parse_script(path.read_text())
        assert back.stage1 == epmc_fs.stage1 and back.stage2 == epmc_fs.stage2
        assert emit_script(back).splitlines()[-17:] == text.splitlines()[-17:]
        v = _valuation_for(back)
        assert eval_formula_set(back, v) == eval_formula_set(epmc_fs, v)


def _valuation_for(fs):
    rng = random.Random(0)
    names = set().union(*(f.variables for _, f in fs.stage1 + fs.stage2)) - {n for n, _ in fs.stage1}
    v = {n: Fraction(rng.randint(1, 99), 100) for n in names}
    v["alpha2"] = 1 - v["alpha1"]
    return v


def _square(x):
    return x * x


def _spin():
    while True:
        pass


class TestTimeout:
    def test_result(self):
        assert run_with_timeout(_square, (7,), 30) == 49

    def test_timeout(self):
        assert run_with_timeout(_spin, (), 0.5) is None

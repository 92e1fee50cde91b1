"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import random
import time
from fractions import Fraction

import pytest

from conftest import RUNNING_EXAMPLE_PATH, VERDICTS
from epmc import ratfun
from epmc.benchmarks import compare
from epmc.errors import DenominatorZeroAtPoint, PreconditionViolated
from epmc.fragments import reduce_and_check
from epmc.generators import GeneratorSpec, generate
from epmc.model import build_states, parse_model
from epmc.oracle import base_parameters, equivalence_report, numeric_check, random_fragment_case, specialize
from epmc.patterns import SBS_KINDS, builtin_multitier, builtin_sbs, load_repository
from epmc.pipeline import epmc_check, eval_formula_set, mono_check
from epmc.properties import parse_property
from epmc.verify import verify_repository
from golden import MONOLITHIC_REFERENCE, STAGE1_REFERENCE, STAGE2_REFERENCE

P = ratfun.parse_expression
TOL = 1e-9
MONO_TIMEOUT = 300.0


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    VERDICTS.append(line)
    print("\n" + line)


def _running_epmc():
    with open(RUNNING_EXAMPLE_PATH, encoding="utf-8") as fh:
        src = parse_model(fh.read(), RUNNING_EXAMPLE_PATH)
    return epmc_check(src, builtin_sbs(2), [parse_property(q) for q in STAGE2_REFERENCE])


def test_criterion_1_stage1_exact():
    t0 = time.perf_counter()
    fs = _running_epmc()
    elapsed = time.perf_counter() - t0
    got = dict(fs.stage1)
    wrong = [k for k, v in STAGE1_REFERENCE.items() if got.get(k) != P(v)]
    extra = sorted(set(got) - set(STAGE1_REFERENCE))
    ok = not wrong and not extra and elapsed < 5
    verdict(1, ok, f"{9 - len(wrong)}/9 stage-1 entries canonical, extra={extra}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_stage2_exact():
    t0 = time.perf_counter()
    fs = _running_epmc()
    elapsed = time.perf_counter() - t0
    wrong = [q for q, v in STAGE2_REFERENCE.items() if fs.formula(q) != P(v)]
    ok = not wrong and len(fs.stage2) == 4 and elapsed < 5
    verdict(2, ok, f"{4 - len(wrong)}/4 stage-2 formulas canonical, {elapsed:.2f}s")
    assert ok


# Ordered by measured monolithic cost so that the cheap cells finish inside the budget.
EQUIVALENCE_CONFIGS = (
    [GeneratorSpec("running-example")]
    + [GeneratorSpec("multitier", deployment=d) for d in ("D1", "D3", "D2")]
    + [GeneratorSpec("fx", k, 1) for k in SBS_KINDS]
    + [GeneratorSpec("fx", k, 2) for k in ("PROB", "PAR", "SEQ")]
    + [GeneratorSpec("fx", "PROB", 3)]
    + [GeneratorSpec("fx", k, 3) for k in ("PAR", "SEQ")]
    + [GeneratorSpec("fx", k, 2) for k in ("PROB_R", "PAR_R", "SEQ_R")]
    + [GeneratorSpec("multitier", deployment="D4")]
    + [GeneratorSpec("fx", "PROB_R", 3), GeneratorSpec("fx", "SEQ_R", 3)]
    + [GeneratorSpec("fx", k, n) for n in (2, 3) for k in ("SEQ_R1", "PROB_R1")]
    + [GeneratorSpec("fx", "PAR_R", 3)]
)


def _label(spec: GeneratorSpec) -> str:
    return {"running-example": "running-example", "fx": f"fx {spec.pattern}/{spec.services}",
            "multitier": f"multitier {spec.deployment}"}[spec.family]


def _published_monolithic_match(samples: int = 100) -> float:
    g = generate(GeneratorSpec("running-example"))
    mc = build_states(parse_model(g.monolithic))
    queries = [parse_property(q) for q in MONOLITHIC_REFERENCE]
    fs = mono_check(mc, queries)
    rng = random.Random(0)
    worst = 0.0
    for _ in range(samples):
        v = mc.constraints.sample(mc.free_variables(), rng)
        for q in queries:
            ref = float(ratfun.evaluate(P(MONOLITHIC_REFERENCE[str(q)]), v))
            worst = max(worst, abs(ref - float(ratfun.evaluate(fs.formula(str(q)), v))))
    return worst


@pytest.mark.slow
def test_criterion_3_monolithic_equivalence():
    budget = 600.0
    t0 = time.perf_counter()
    cells = []
    for spec in EQUIVALENCE_CONFIGS:
        remaining = budget - (time.perf_counter() - t0)
        if remaining <= 1:
            cells.append((spec, "not attempted (budget spent)", False))
            continue
        c = compare(spec, timeout=min(MONO_TIMEOUT, remaining), samples=100, seed=0)
        if not c.completed:
            reason = {"T": "timeout", "M": "out of memory"}[c.mono_status]
            cells.append((spec, f"monolithic {reason} (ePMC {c.epmc_seconds:.2f}s)", False))
        else:
            cells.append((spec, f"max diff {c.max_diff:.2e}", c.max_diff <= TOL))
        print(f"  {_label(spec):22s} {cells[-1][1]}", flush=True)
    published = _published_monolithic_match()
    elapsed = time.perf_counter() - t0
    for spec, detail, _ in cells:
        if detail.startswith("not attempted"):
            print(f"  {_label(spec):22s} {detail}")
    passed = sum(ok for *_, ok in cells)
    ok = passed == len(cells) and published <= TOL and elapsed < budget
    verdict(3, ok, f"{passed}/{len(cells)} configurations agree within {TOL:g}; published monolithic "
                   f"expressions max diff {published:.2e}; {elapsed:.0f}s")
    assert published <= TOL
    assert ok


def test_criterion_4_sbs_repository():
    t0 = time.perf_counter()
    reports = [verify_repository(builtin_sbs(n), samples=50, tol=TOL) for n in (1, 2, 3, 4)]
    elapsed = time.perf_counter() - t0
    entries = [e for r in reports for e in r.entries]
    failures = [f"n={r.repository[-1]} {e.pattern}.{e.property}" for r in reports for e in r.failures]
    complete = all(sum(e.status == "pass" for e in r.entries) == 8 * 3 for r in reports)
    ok = not failures and complete and elapsed < 120
    verdict(4, ok, f"{len(entries) - len(failures)}/{len(entries)} pattern properties verified, "
                   f"max diff {max(e.max_diff for e in entries):.2e}, {elapsed:.1f}s {failures[:5]}")
    assert ok


def test_criterion_5_multitier_repository():
    t0 = time.perf_counter()
    rep = verify_repository(builtin_multitier(2, 3), samples=50, tol=TOL)
    elapsed = time.perf_counter() - t0
    shapes = {e.pattern for e in rep.entries}
    norm = [e for e in rep.entries if e.property == "sum(p_b)"]
    want = 3 * (3 + 9)  # three kinds; shapes (n1) and (n1, n2) with n_i in 1..3
    ok = rep.passed and len(shapes) == want and len(norm) == want and all(e.canonical for e in norm) \
        and elapsed < 120
    verdict(5, ok, f"{len(rep.entries) - len(rep.failures)}/{len(rep.entries)} entries over {len(shapes)} "
                   f"shapes, {len(norm)} normalization checks, {elapsed:.1f}s")
    assert ok


D1_STAGE1 = {
    "p_11A": "pA*pVMA^2", "p_10A": "pA*pVMA*(1-pVMA)", "p_01A": "pA*pVMA*(1-pVMA)",
    "p_00A": "(1-pA)+pA*(1-pVMA)^2",
    "p_11B": "pB*pVMB^2", "p_10B": "pB*pVMB*(1-pVMB)", "p_01B": "pB*pVMB*(1-pVMB)",
    "p_00B": "(1-pB)+pB*(1-pVMB)^2",
    "p_1C": "pC", "p_0C": "1-pC", "p_1D": "pD", "p_0D": "1-pD",
}


def test_criterion_6_multitier_d1():
    g = generate(GeneratorSpec("multitier", deployment="D1"))
    queries = [parse_property(q) for q in g.properties]
    src = parse_model(g.annotated)
    fs = epmc_check(src, load_repository(g.repository), queries)
    got = dict(fs.stage1)
    wrong = [k for k, v in D1_STAGE1.items() if got.get(k) != P(v)]
    mono_src = parse_model(g.monolithic)
    mono = build_states(mono_src)
    constraints = src.constraints.merge(mono_src.constraints)
    rng = random.Random(0)
    worst, max_sum = 0.0, 0.0
    for _ in range(100):
        v = constraints.sample(base_parameters(fs) | set(mono.free_variables()), rng)
        vals = eval_formula_set(fs, v)
        cmc = specialize(mono, v)
        for q in queries:
            worst = max(worst, abs(vals[str(q)] - numeric_check(cmc, q)))
        max_sum = max(max_sum, sum(vals.values()))
    ok = not wrong and worst <= TOL and max_sum <= 1 + 1e-12
    verdict(6, ok, f"{len(D1_STAGE1) - len(wrong)}/{len(D1_STAGE1)} stage-1 entries canonical {wrong}; "
                   f"P_FAIL/P_SPF vs oracle max diff {worst:.2e}; max P_FAIL+P_SPF {max_sum:.6f}")
    assert ok


def test_criterion_7_fragment_reduction():
    t0 = time.perf_counter()
    mismatches, unrefused, checked, refused, cycles = [], [], 0, 0, 0
    for seed in range(200):
        case = random_fragment_case(seed)
        cycles += case.has_cycle
        for q in case.queries:
            rep = equivalence_report(reduce_and_check(case.mc, case.fragment, q), case.mc, q,
                                     samples=50, tol=TOL, seed=seed)
            checked += 1
            if not rep.passed:
                mismatches.append((seed, str(q), rep.max_diff))
        for q in case.violating:
            try:
                reduce_and_check(case.mc, case.fragment, q)
                unrefused.append((seed, str(q)))
            except PreconditionViolated:
                refused += 1
    elapsed = time.perf_counter() - t0
    ok = not mismatches and not unrefused and refused > 0 and elapsed < 300
    verdict(7, ok, f"{checked - len(mismatches)}/{checked} reductions agree with the oracle "
                   f"({cycles}/200 fragments with cycles); {refused}/{refused + len(unrefused)} "
                   f"violations refused; {elapsed:.1f}s {mismatches[:3]} {unrefused[:3]}")
    assert ok


@pytest.fixture(scope="module")
def scalability_runs():
    """Monolithic vs ePMC size and completion for every benchmark configuration."""
    specs = ([GeneratorSpec("running-example")]
             + [GeneratorSpec("fx", k, n) for n in (1, 2, 3) for k in SBS_KINDS]
             + [GeneratorSpec("multitier", deployment=d) for d in ("D1", "D2", "D3", "D4", "D5")])
    runs = []
    for spec in specs:
        c = compare(spec, timeout=MONO_TIMEOUT)
        print(f"  {_label(spec):22s} ePMC {c.epmc_size:>7} ops {c.epmc_seconds:6.2f}s | monolithic "
              + (f"{c.mono_size:>10} ops {c.mono_seconds:7.2f}s" if c.completed else c.mono_status), flush=True)
        runs.append(c)
    return runs


@pytest.mark.slow
def test_criterion_8_scalability(scalability_runs):
    # (a) ePMC on FX with five services
    times = {}
    for kind in SBS_KINDS:
        g = generate(GeneratorSpec("fx", kind, 5))
        t0 = time.perf_counter()
        epmc_check(parse_model(g.annotated), load_repository(g.repository), [parse_property(q) for q in g.properties])
        times[kind] = time.perf_counter() - t0
    ok_a = all(t < 10 for t in times.values())
    # (b) size direction wherever the monolithic check completes; single-service FX is the
    # degenerate case where both sides coincide and is reported only
    done = [c for c in scalability_runs if c.completed]
    required = [c for c in done if not (c.spec.family == "fx" and c.spec.services == 1)]
    smaller = [c for c in required if c.epmc_size < c.mono_size]
    trivial = [(c.config, c.epmc_size, c.mono_size) for c in done if c not in required]
    ok_b = len(smaller) == len(required) and len(required) > 0
    # (c) a retry configuration with three or more services defeats the monolithic check
    defeated = [c.config for c in scalability_runs
                if c.spec.family == "fx" and c.spec.pattern in ("SEQ_R1", "PAR_R") and c.spec.services >= 3
                and not c.completed]
    ok_c = bool(defeated)
    ok = ok_a and ok_b and ok_c
    verdict(8, ok, f"(a) max ePMC time at n=5 {max(times.values()):.2f}s; (b) ePMC smaller in "
                   f"{len(smaller)}/{len(required)} completed configurations (n=1 sizes {trivial[:2]}...); "
                   f"(c) monolithic T/M while ePMC completes: {defeated}")
    assert ok


def _random_poly(rng: random.Random, names, terms: int):
    f = ratfun.const(0)
    for _ in range(terms):
        t = ratfun.const(Fraction(rng.randint(-6, 6), rng.randint(1, 4)))
        for v in rng.sample(names, rng.randint(0, 2)):
            t = t * ratfun.var(v) ** rng.randint(1, 2)
        f = f + t
    return f


def _random_rf(rng: random.Random, names):
    num = _random_poly(rng, names, rng.randint(0, 3))
    den = _random_poly(rng, names, rng.randint(1, 3))
    while den.is_zero():
        den = _random_poly(rng, names, 2)
    return num / den


def test_criterion_9_ratfun_properties():
    names = ["a", "b", "c", "p1"]
    rng = random.Random(9)
    t0 = time.perf_counter()
    failures = []
    counts = {"homomorphism": 0, "canonical": 0, "idempotence": 0}
    while min(counts.values()) < 10_000:
        f, g = _random_rf(rng, names), _random_rf(rng, names)
        v = {n: Fraction(rng.randint(-40, 40), rng.randint(1, 9)) for n in names}
        try:
            fv, gv = ratfun.evaluate(f, v), ratfun.evaluate(g, v)
            ops = [(f + g, fv + gv), (f - g, fv - gv), (f * g, fv * gv)]
            if not g.is_zero() and gv != 0:
                ops.append((f / g, fv / gv))
            for h, want in ops:
                if ratfun.evaluate(h, v) != want:
                    failures.append(("homomorphism", str(f), str(g)))
        except DenominatorZeroAtPoint:
            pass  # the sampled point is a pole; no claim to check
        counts["homomorphism"] += 1
        # equal functions written differently are canonically equal; different ones are not
        same = (f + g) * (f - g) == f * f - g * g and ratfun.parse_expression(str(f)) == f
        differs = f + ratfun.const(Fraction(1, 7)) != f
        if not (same and differs):
            failures.append(("canonical", str(f), str(g)))
        counts["canonical"] += 1
        s = ratfun.simplify(f * g)
        if ratfun.simplify(s) != s or str(ratfun.simplify(s)) != str(s):
            failures.append(("idempotence", str(f), str(g)))
        counts["idempotence"] += 1
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    verdict(9, ok, f"{sum(counts.values())} checks {counts}, {len(failures)} failures, {elapsed:.1f}s")
    assert ok

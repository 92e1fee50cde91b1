from epmc.benchmarks import BENCH_FIELDS, compare
from epmc.generators import GeneratorSpec

SPEC = GeneratorSpec("fx", "SEQ", 2)


def test_completed_row():
    c = compare(SPEC, timeout=120, samples=5)
    assert c.completed and c.max_diff <= 1e-9
    row = c.row()
    assert tuple(row) == BENCH_FIELDS
    assert row["config"] == "SEQ/2" and row["states_annotated"] == c.states_annotated
    assert c.epmc_size < c.mono_size


def test_timeout_cell():
    c = compare(GeneratorSpec("fx", "SEQ_R", 3), timeout=0.05)
    assert c.mono_status == "T" and c.row()["mono_seconds"] == "T" and c.row()["mono_size"] == "T"
    assert c.epmc_size > 0


def test_memory_cell():
    c = compare(SPEC, timeout=60, memory_limit=1 << 20)
    assert c.mono_status == "M" and not c.completed

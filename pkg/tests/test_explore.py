import random

import pytest

from semid.asm import assemble
from semid.corpus import FunctionRecord, select
from semid.explore import FuzzConfig, explore_corpus, explore_function, function_seed, mutate
from semid.iovec import IOVec, MemoryObject, Outcome, run_iovec
from semid.isa import XA


def _rec(src):
    img = assemble(src)
    return FunctionRecord(img.name, "t", img)


def test_straight_line_my_div(by_key):
    prof = explore_function(by_key[("my_div", "xa-O2")], FuzzConfig(), rng_seed=0)
    assert len(prof.dcis) >= 1
    assert prof.coverage_fraction == 1.0


def test_branchy_max_covers_both_branches(by_key):
    prof = explore_function(by_key[("max_s", "xa-O2")], FuzzConfig(coverage_threshold=1.0), rng_seed=0)
    assert prof.coverage_fraction == 1.0
    # golden for rng_seed 0: the taken branch first, then the fall-through (instruction 2)
    assert [sorted(v.coverage) for v in prof.dcis] == [[0, 1, 3], [0, 1, 2, 3]]


def test_always_faulting_function_has_empty_dcis():
    rec = _rec(".func z xa\n    li r7, 0\n    div r1, r7\n    ret\n.end")
    prof = explore_function(rec, FuzzConfig(max_executions=50))
    assert prof.dcis == [] and prof.executions == 50
    assert prof.giveups == {"divide_by_zero": 50}


def test_dcis_invariants(corpus):
    for rec in select(corpus, variants={"xa-alt"}):
        prof = explore_function(rec, FuzzConfig(coverage_threshold=1.0, max_executions=300), rng_seed=1)
        covered = set()
        for v in prof.dcis:
            assert v.coverage - covered, f"{rec.key}: DCIS member adds no coverage"
            covered |= v.coverage
            assert run_iovec(rec.image, v) is Outcome.ACCEPT
        assert len(prof.dcis) <= 32


def test_dcis_cap_evicts():
    # every input covers a different path length, so each run adds coverage
    src = ".func f xa\n" + "".join(f"    li r7, {i}\n    beq r1, r7, e{i}\n" for i in range(12))
    src += "    ret\n" + "".join(f"e{i}:\n    ret\n" for i in range(12)) + ".end"
    prof = explore_function(_rec(src), FuzzConfig(coverage_threshold=1.0, max_executions=600, dcis_cap=3), 2)
    assert len(prof.dcis) <= 3


def _ptr_iovec():
    return IOVec(7, XA, pointer_args=((0, 0),), objects=(MemoryObject(0, 24, ((8, 1),)), MemoryObject(1, 16)))


def test_mutate_preserves_pointer_layout():
    rng = random.Random(0)
    v = _ptr_iovec()
    for _ in range(300):
        v = mutate(v, rng)
        assert v.pointer_args == ((0, 0),)
        assert [o.pointer_offsets for o in v.objects] == [((8, 1),), ()]
        assert all(not 8 <= off < 16 for obj, off, _ in v.byte_overrides if obj == 0)
        assert 0 not in dict(v.arg_overrides)
        assert not v.has_expectations


def test_mutate_interesting_zero():
    rng = random.Random(4)
    hits = set()
    v = IOVec(1, XA)
    for _ in range(200):
        w = mutate(v, rng, weights=(0, 1, 0, 0))
        hits |= {val for _, val in w.arg_overrides}
    assert 0 in hits


def test_mutate_deterministic():
    a = [mutate(_ptr_iovec(), random.Random(9)) for _ in range(2)]
    assert a[0] == a[1]


def test_config_validation():
    with pytest.raises(ValueError):
        FuzzConfig(coverage_threshold=0)
    with pytest.raises(ValueError):
        FuzzConfig(dcis_cap=0)
    with pytest.raises(ValueError):
        FuzzConfig(mutation_weights=(1, 1))


def test_parallel_matches_serial(corpus):
    recs = select(corpus, variants={"xa-O2"})[:6]
    cfg = FuzzConfig(max_executions=100)
    serial = explore_corpus(recs, cfg, seed=3, jobs=1)
    parallel = explore_corpus(recs, cfg, seed=3, jobs=2)
    assert [p.dcis for p in serial] == [p.dcis for p in parallel]


def test_function_seed_depends_on_identity(by_key):
    a, b = by_key[("gcd", "xa-O2")], by_key[("gcd", "xa-O0")]
    assert function_seed(0, a) != function_seed(0, b) != function_seed(1, b)

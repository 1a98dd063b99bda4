import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracle
from conftest import A, E1, E2, E3, b1, b1_instance, ev, micro_records, records_to_benchmark, records_to_oracle
from requery import multimodal as mm
from requery import rephrase as rp
from requery.data import Benchmark, ExpressionEvidence, Instance
from requery.errors import CapabilityError, InputError
from requery.multimodal import CoverageCurve
from requery.synth import SynthConfig, generate

DIRECT = ExpressionEvidence("d", kind="direct-prediction", direct_box=A, confidence=0.9)


def test_combine_examples():
    assert rp.combine([E1]) == pytest.approx(E1)
    assert rp.combine([E1, E2]) == pytest.approx([0.3913, 0.6087], abs=1e-4)
    assert rp.combine([E1, E2, E3]) == pytest.approx([0.8526, 0.1474], abs=1e-4)
    with pytest.raises(InputError):
        rp.combine([])
    with pytest.raises(InputError):
        rp.combine([E1, [0.2, 0.3, 0.5]])


def test_combine_floor_keeps_zero_entries_alive():
    p = rp.combine([[0.0, 1.0], [0.9, 0.1]])
    assert np.all(p > 0) and p.sum() == pytest.approx(1.0)


def test_combine_does_not_underflow():
    p = rp.combine([[1e-300, 1.0 - 1e-300]] * 50 + [[0.5, 0.5]])
    assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0)


def test_combine_rejects_direct_evidence():
    with pytest.raises(CapabilityError, match="end-to-end"):
        rp.combine_evidence([ev("a", E1), DIRECT])


dists = st.integers(2, 5).flatmap(
    lambda k: st.lists(arrays(float, k, elements=st.floats(0.01, 1.0)), min_size=1, max_size=5))


@settings(max_examples=60, deadline=None)
@given(dists, st.randoms(use_true_random=False))
def test_combine_order_invariant_and_uniform_identity(raw, rnd):
    ds = [d / d.sum() for d in raw]
    perm = list(ds)
    rnd.shuffle(perm)
    assert rp.combine(perm) == pytest.approx(rp.combine(ds), abs=1e-9)
    k = ds[0].size
    assert rp.combine([ds[0], np.full(k, 1 / k)]) == pytest.approx(ds[0], abs=1e-9)


def test_smart_select():
    e1, e2, e3 = ev("e1", E1), ev("e2", E2), ev("e3", E3)
    assert rp.smart_select([e1]) == 0
    assert rp.smart_select([e1, e3], "single", "softmax") == 1
    assert rp.smart_select([e1, e2], "single", "softmax") == 1
    assert rp.smart_select([e1, ev("x", E1)], "single", "entropy") == 0
    with pytest.raises(InputError):
        rp.smart_select([])


def test_rmae_examples():
    bench = b1()
    inst = bench.instances[0]
    e1, e2, e3 = inst.initial, *inst.pool
    assert rp.rmae(bench, [[e1]], "none") == 0.0
    assert rp.rmae(bench, [[e1, e2]], "combined") == 100.0
    assert rp.rmae(bench, [[e1, e2, e3]], "combined") == 0.0
    assert rp.rmae(bench, [[e1, e2]], "smart") == 100.0
    assert rp.rmae(bench, [rp.RequerySession(inst)], "combined") == 0.0
    with pytest.raises(InputError):
        rp.rmae(bench, [], "smart")


def test_single_expression_sessions_reduce_to_no_requery():
    bench = generate(SynthConfig(n_instances=30, seed=8, t_passes=0))
    sessions = [[inst.initial] for inst in bench]
    none = rp.rmae(bench, sessions, "none")
    assert rp.rmae(bench, sessions, "smart") == none
    assert rp.rmae(bench, sessions, "combined") == none


def two_b1():
    first = b1_instance("e2", iid="a")
    second = b1_instance("e1", iid="b")
    return Benchmark((first, second))


def test_sweep_two_instance_example():
    bench = two_b1()
    res = rp.rmae_sweep(bench, "combined", seed=7, oracle=True)
    assert res.curve.values[0] == 50.0
    assert res.steps[0].instance_id == "a"
    want_vals, want_trace = oracle.sweep(_oracle_form(bench), "combined", "single", "softmax",
                                         np.random.default_rng(7), oracle=True)
    assert res.curve.values.tolist() == want_vals
    assert [(s.instance_id, s.priority, s.expression_id) for s in res.steps] == want_trace


def _oracle_form(bench):
    return [{"id": inst.instance_id, "candidates": [b.as_list() for b in inst.candidates],
             "gold_box": inst.gold_box.as_list(),
             "exprs": [{"id": e.expression_id, "single_pass": e.single_pass.tolist(),
                        "dropout_samples": None if e.dropout_samples is None else e.dropout_samples.tolist()}
                       for e in inst.expressions]} for inst in bench]


def test_sweep_all_correct_oracle_priorities():
    bench = generate(SynthConfig(n_instances=20, quality_alpha=float("inf"), logit_scale=30.0,
                                 dropout_sigma=0.0, t_passes=0, seed=3))
    for sel in ("smart", "combined"):
        res = rp.rmae_sweep(bench, sel, oracle=True, seed=1)
        assert np.all(res.curve.values == 0) and res.curve.area == 0


def test_sweep_shape_and_coverage_one():
    bench = generate(SynthConfig(n_instances=25, seed=5, t_passes=10))
    for sel in ("none", "smart", "combined"):
        res = rp.rmae_sweep(bench, sel, "dropout-mean", "entropy", seed=2)
        assert len(res.curve) == len(bench) + 1
        assert res.curve.coverages[0] == 1.0 and res.curve.coverages[-1] == 0.0
        assert res.curve.values[0] == rp.rmae(bench, [[i.initial] for i in bench], "none", "dropout-mean")
    smart = rp.rmae_sweep(bench, "smart", seed=2)
    assert len({s.instance_id for s in smart.steps}) == len(smart.steps)


def test_smart_sweep_truncates_on_empty_pools():
    insts = [b1_instance(iid="a"), Instance("z", "img", "o", (A,), A, 0, ev("only", [1.0]))]
    res = rp.rmae_sweep(Benchmark(tuple(insts)), "smart", seed=0)
    assert res.truncated
    assert res.total_requeries == 1
    assert res.curve.coverages.tolist() == [1.0, 0.5]


def test_combined_sweep_revisits_and_draws_with_replacement():
    res = rp.rmae_sweep(b1("e2"), "combined", seed=0, oracle=True)
    assert res.total_requeries == 1
    bench = Benchmark((b1_instance("e2", "a"), b1_instance("e1", "b"), b1_instance("e3", "c")))
    res = rp.rmae_sweep(bench, "combined", seed=4, priority_source="latest")
    assert res.total_requeries == 3


def test_initial_priority_source_follows_initial_order():
    bench = generate(SynthConfig(n_instances=30, pool_size_range=(2, 4), t_passes=0, seed=8))
    order = mm.requery_order(mm.initial_priorities(bench), [i.instance_id for i in bench])
    want = [bench.instances[j].instance_id for j in order]
    for sel in ("smart", "combined"):
        res = rp.rmae_sweep(bench, sel, seed=1, priority_source="initial")
        assert [s.instance_id for s in res.steps] == want
    with pytest.raises(InputError):
        rp.rmae_sweep(bench, "combined", priority_source="first")


def test_sweep_rejects_direct_evidence_for_combined():
    inst = Instance("d", "img", "o", (), A, None, DIRECT, (ExpressionEvidence(
        "d2", kind="direct-prediction", direct_box=A, confidence=0.5),))
    bench = Benchmark((inst,))
    with pytest.raises(CapabilityError):
        rp.rmae_sweep(bench, "combined")
    res = rp.rmae_sweep(bench, "smart", seed=0)
    assert res.curve.values.tolist() == [0.0, 0.0]


def test_sweep_matches_oracle_on_micro_benchmarks():
    rng = np.random.default_rng(0)
    for trial in range(30):
        recs = micro_records(rng)
        bench = records_to_benchmark(recs)
        orc = records_to_oracle(recs)
        for sel, dist, meas in itertools.product(("smart", "combined"), ("single", "variation-ratio"),
                                                 ("softmax", "entropy")):
            res = rp.rmae_sweep(bench, sel, dist, meas, seed=trial)
            vals, trace = oracle.sweep(orc, sel, dist, meas, np.random.default_rng(trial))
            assert res.curve.values.tolist() == vals
            assert [(s.instance_id, s.priority, s.expression_id) for s in res.steps] == trace


def test_sweep_trials_reproducible():
    bench = generate(SynthConfig(n_instances=30, seed=1, t_passes=0))
    a, ra = rp.sweep_trials(bench, "combined", trials=3, seed=5)
    b, rb = rp.sweep_trials(bench, "combined", trials=3, seed=5, workers=2)
    assert a.areas == b.areas
    assert [r.steps for r in ra] == [r.steps for r in rb]


def curve(values):
    n = len(values) - 1
    return CoverageCurve.from_values([(n - r) / n for r in range(n + 1)], values)


def test_crossover_examples():
    smart = curve([40, 30, 20, 15, 10])
    assert rp.crossover_coverage(curve([40, 25, 15, 10, 5]), smart) == 1.0
    assert rp.crossover_coverage(curve([40, 35, 25, 20, 15]), smart) is None
    # combined is lower at coverages 0 and 0.25 only: it crosses between 0.25 and 0.5
    assert rp.crossover_coverage(curve([40, 35, 22, 12, 5]), smart) == 0.5
    with pytest.raises(InputError):
        rp.crossover_coverage(curve([1, 2, 3]), smart)


def test_common_range():
    a, b = rp.common_range(curve([3, 2, 1, 0]), CoverageCurve.from_values([1.0, 2 / 3], [3, 3]))
    assert b.values.tolist() == [3, 3] and a.values.tolist() == [3, 2]
    with pytest.raises(InputError):
        rp.common_range(curve([3, 2, 1, 0]), CoverageCurve.from_values([1.0, 0.75], [3, 3]))
    assert len(a) == len(b) == 2


def test_converged_distribution_examples():
    assert rp.converged_distribution([E1, E2, E3]).tolist() == [1.0, 0.0]
    assert rp.converged_distribution([E2]).tolist() == [0.0, 1.0]
    assert rp.converged_distribution([E2, E2, E2]).tolist() == [0.0, 1.0]
    scores = rp.weighted_log_scores([E1, E2, E3])
    assert np.exp(scores) == pytest.approx([0.545, 0.304], abs=1e-3)
    assert rp.converged_distribution([E1, E2], [0.1, 0.9]).tolist() == [0.0, 1.0]
    with pytest.raises(InputError):
        rp.converged_distribution([])
    with pytest.raises(InputError):
        rp.converged_distribution([E1, E2], [0.5, 0.6])


def test_converged_accuracy_b1():
    bench = b1("e2")
    assert rp.converged_accuracy(bench, "none") == 0.0
    assert rp.converged_accuracy(bench, "smart", "single", "softmax") == 100.0
    assert rp.converged_accuracy(bench, "combined") == 100.0


def test_converged_accuracy_all_correct():
    bench = generate(SynthConfig(n_instances=20, quality_alpha=float("inf"), logit_scale=30.0,
                                 dropout_sigma=0.0, t_passes=0, seed=9))
    for m in rp.SELECTIONS:
        assert rp.converged_accuracy(bench, m) == 100.0


def test_converged_report_flags_capability():
    inst = Instance("d", "img", "o", (), A, None, DIRECT)
    report = rp.converged_report(Benchmark((inst,)))
    assert report["none"] == 100.0 and report["smart"] == 100.0
    assert report["combined"]["error"] == "capability"


def test_fusion_converges_to_weighted_log_argmax():
    rng = np.random.default_rng(12)
    for _ in range(20):
        k, m = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        pool = [rng.dirichlet(np.ones(k)) for _ in range(m)]
        draws = rng.integers(m, size=3000)
        fused = rp.combine([pool[j] for j in draws])
        scores = rp.weighted_log_scores(pool)
        top2 = np.sort(scores)[-2:]
        if k > 1 and top2[1] - top2[0] < 1e-3:
            continue
        assert fused.max() > 0.999
        assert int(np.argmax(fused)) == int(np.argmax(rp.converged_distribution(pool)))

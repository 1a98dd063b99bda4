import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from conftest import b1, micro_records, records_to_benchmark
from requery import multimodal as mm
from requery.accuracy import per_object_best
from requery.errors import InputError
from requery.synth import SynthConfig, generate


def test_additional_error():
    assert mm.additional_error(100) == 100
    assert mm.additional_error(0) == 0
    assert mm.additional_error(100, 100) == 0


def test_coverage():
    assert mm.coverage(10, 3) == 0.7
    assert mm.coverage(8, 0) == 1.0
    assert mm.coverage(8, 8) == 0.0
    with pytest.raises(InputError):
        mm.coverage(3, 4)
    with pytest.raises(InputError):
        mm.coverage(0, 0)


def test_mae_curve_oracle_example():
    errs = [100, 0, 0, 100]
    curve = mm.mae_curve_from_errors(errs, errs)
    assert curve.coverages.tolist() == [1.0, 0.75, 0.5, 0.25]
    assert curve.values == pytest.approx([50, 33.33, 0, 0], abs=0.01)
    assert curve.area == pytest.approx(20.83, abs=0.01)


def test_mae_curve_all_correct():
    curve = mm.mae_curve_from_errors([0] * 5, [3, 1, 4, 1, 5])
    assert np.all(curve.values == 0) and curve.area == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([0, 100]), min_size=1, max_size=12), st.randoms(use_true_random=False))
def test_mae_at_full_coverage_is_error_rate(errs, rnd):
    prios = [rnd.random() for _ in errs]
    curve = mm.mae_curve_from_errors(errs, prios)
    assert curve.values[0] == sum(errs) / len(errs)
    assert len(curve) == len(errs)
    assert curve.values.tolist() == oracle.mae_points(errs, prios, [f"{i:012d}" for i in range(len(errs))])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([0, 100]), min_size=1, max_size=6))
def test_sorted_prefix_optimality_small(errs):
    n = len(errs)
    areas = [mm.mae_curve_from_errors(errs, [-perm.index(i) for i in range(n)]).area
             for perm in itertools.permutations(range(n))]
    best = mm.mae_curve_from_errors(errs, errs).area
    worst = mm.mae_curve_from_errors(errs, [-e for e in errs]).area
    assert best == min(areas)
    assert worst == max(areas)


def test_oracle_mae_non_increasing():
    errs = np.random.default_rng(0).choice([0, 100], size=40).tolist()
    vals = mm.mae_curve_from_errors(errs, errs).values
    assert np.all(np.diff(vals) <= 1e-12)


def test_ties_broken_by_instance_id():
    assert mm.requery_order([1.0, 1.0, 2.0], ["b", "a", "c"]) == [2, 1, 0]


def test_mae_curve_on_benchmark_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        recs = micro_records(rng)
        bench = records_to_benchmark(recs)
        prios = mm.initial_priorities(bench, "single", "entropy")
        curve = mm.mae_curve(bench, prios)
        inst = [dict(candidates=r["candidates"], gold_box=r["gold_box"]) for r in recs]
        errs = [oracle.loss_of(i, r["initial"]["single_pass"]) for i, r in zip(inst, recs)]
        ids = [r["instance_id"] for r in recs]
        assert curve.values.tolist() == oracle.mae_points(errs, prios.tolist(), ids)
        assert curve.area == oracle.area(curve.values.tolist())


def test_empty_benchmark():
    with pytest.raises(InputError):
        mm.mae_curve_from_errors([], [])


def test_coverage_at_upper_bound_examples():
    errs = [100, 0, 0, 100]
    bench = _bench_with_errors(errs)
    assert mm.coverage_at_upper_bound(bench, errs, 100.0) == 0.5
    assert mm.coverage_at_upper_bound(bench, errs, 0.0) == 1.0
    all_wrong = _bench_with_errors([100] * 5)
    rand = np.random.default_rng(1).random(5)
    assert mm.coverage_at_upper_bound(all_wrong, rand, 100.0) == 0.0
    with pytest.raises(InputError):
        mm.coverage_at_upper_bound(bench, errs, 120.0)


def _bench_with_errors(errs):
    from conftest import A, B, ev
    from requery.data import Benchmark, Instance

    insts = [Instance(f"i{j}", "img", f"o{j}", (A, B), A, 0, ev(f"e{j}", [0.2, 0.8] if e else [0.8, 0.2]))
             for j, e in enumerate(errs)]
    return Benchmark(tuple(insts))


def test_coverage_at_upper_bound_with_per_object_best():
    bench = generate(SynthConfig(n_instances=60, k_candidates=3, anchor_expression=True, t_passes=0, seed=4))
    errs = mm.initial_errors(bench)
    upper = per_object_best(bench).mean
    assert upper == 100.0
    assert mm.coverage_at_upper_bound(bench, errs, upper) == pytest.approx(1 - errs.mean() / 100, abs=1e-12)


def test_amae_orders_confidence_against_random():
    bench = generate(SynthConfig(n_instances=150, seed=11))
    rand = np.random.default_rng(0).random(len(bench))
    assert mm.amae(bench, "single", "softmax") < mm.mae_curve(bench, rand).area


def test_amae_b1():
    assert mm.amae(b1()) == 0.0
    assert mm.amae(b1("e2")) == 100.0


def test_amae_trials():
    bench = generate(SynthConfig(n_instances=40, seed=1, t_passes=10))
    one = mm.amae_trials(bench, trials=1, seed=3)
    assert one.standard_error == 0.0 and one.trials == 1
    many = mm.amae_trials(bench, "dropout-mean", "entropy", trials=8, seed=3)
    assert many.mean == pytest.approx(np.mean(many.areas))
    assert many.mean_curve.area == pytest.approx(many.mean)
    fixed = mm.amae_trials(bench, trials=4, resample=False)
    assert fixed.standard_error == 0.0
    assert fixed.mean == mm.amae(bench)


def test_amae_trials_independent_of_workers_and_count():
    bench = generate(SynthConfig(n_instances=30, seed=2, t_passes=5))
    a = mm.amae_trials(bench, trials=4, seed=9)
    b = mm.amae_trials(bench, trials=4, seed=9, workers=2)
    c = mm.amae_trials(bench, trials=6, seed=9)
    assert a.areas == b.areas
    assert c.areas[:4] == a.areas

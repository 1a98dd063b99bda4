import numpy as np
import pytest

from requery.data import Benchmark, ExpressionEvidence, Instance
from requery.geometry import Box

A = Box(0, 0, 10, 10)
B = Box(20, 0, 30, 10)
E1, E2, E3 = [0.6, 0.4], [0.3, 0.7], [0.9, 0.1]


def ev(eid, probs, samples=None):
    return ExpressionEvidence(eid, single_pass=probs, dropout_samples=samples)


def b1_instance(initial="e1", iid="b1"):
    exprs = {"e1": ev("e1", E1), "e2": ev("e2", E2), "e3": ev("e3", E3)}
    first = exprs.pop(initial)
    return Instance(iid, "img0", "objA", (A, B), A, 0, first, tuple(exprs.values()))


def b1(initial="e1"):
    """The reference micro-benchmark: one image, two candidates, target A."""
    return Benchmark((b1_instance(initial),), name="B1")


@pytest.fixture
def bench_b1():
    return b1()


_UNDETECTED = [-3.0, -3.0, -2.0, -2.0]


def micro_records(rng, max_instances=6, max_pool=3, max_k=4, passes=5):
    """Random tiny benchmark as plain records (the form both the package and the oracle read)."""
    n = int(rng.integers(1, max_instances + 1))
    recs = []
    for i in range(n):
        k = int(rng.integers(2, max_k + 1))
        cands = [[2.0 * c, 0.0, 2.0 * c + 1, 1.0] for c in range(k)]
        gold = int(rng.integers(k))
        detected = rng.random() < 0.85
        exprs = []
        for j in range(int(rng.integers(1, max_pool + 2))):
            conc = rng.uniform(0.2, 3.0)
            exprs.append({
                "expression_id": f"m{i}-{j}",
                "kind": "candidate-classification",
                "single_pass": rng.dirichlet(np.full(k, conc)).tolist(),
                "dropout_samples": rng.dirichlet(np.full(k, conc), size=passes).tolist(),
            })
        recs.append({
            "instance_id": f"m{i:02d}",
            "image_id": f"img{i}",
            "object_id": f"obj{i}",
            "candidates": cands,
            "gold_box": cands[gold] if detected else _UNDETECTED,
            "gold_index": gold if detected else None,
            "initial": exprs[0],
            "pool": exprs[1:],
        })
    return recs


def records_to_benchmark(recs):
    return Benchmark(tuple(Instance.from_record(r) for r in recs), name="micro")


def records_to_oracle(recs):
    out = []
    for r in recs:
        exprs = [r["initial"]] + list(r["pool"])
        out.append({
            "id": r["instance_id"],
            "candidates": r["candidates"],
            "gold_box": r["gold_box"],
            "exprs": [{"id": e["expression_id"], "single_pass": e["single_pass"],
                       "dropout_samples": e["dropout_samples"]} for e in exprs],
        })
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

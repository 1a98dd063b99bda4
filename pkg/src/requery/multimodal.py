"""Multimodal re-query: a re-queried expression is answered by a perfect second modality.

Everything here works on the initial expression of each instance. The curve
machinery (`requery_order`, `CoverageCurve`) is shared with `rephrase`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .confidence import SINGLE, evidence_loss, priority
from .data import Benchmark
from .errors import InputError


def additional_error(loss_candidate: int, loss_gold: int = 0) -> int:
    """Extra loss of the candidate expression over the gold-standard one."""
    return max(loss_candidate - loss_gold, 0)


def coverage(p_size: int, r_size: int) -> float:
    if p_size <= 0:
        raise InputError("coverage needs a non-empty evaluation set")
    if not 0 <= r_size <= p_size:
        raise InputError(f"cannot re-query {r_size} of {p_size} expressions")
    return (p_size - r_size) / p_size


@dataclass(frozen=True)
class CoverageCurve:
    """Metric values listed from coverage 1 downwards, with their rectangular-rule area.

    The area is the mean of the point values, i.e. rectangles of width
    ``1/|P|`` under each point.
    """

    coverages: np.ndarray
    values: np.ndarray
    area: float

    @classmethod
    def from_values(cls, coverages, values) -> "CoverageCurve":
        c = np.asarray(coverages, dtype=float)
        v = np.asarray(values, dtype=float)
        if c.shape != v.shape or c.ndim != 1 or c.size == 0:
            raise InputError("coverages and values must be equal-length non-empty vectors")
        return cls(c, v, math.fsum(v.tolist()) / v.size)

    def __len__(self) -> int:
        return int(self.values.size)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.coverages.tolist(), self.values.tolist()))

    def value_at(self, cov: float) -> float:
        idx = np.flatnonzero(np.isclose(self.coverages, cov, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise InputError(f"coverage {cov} is not on the curve's grid")
        return float(self.values[idx[0]])


def requery_order(priorities: Sequence[float], instance_ids: Sequence[str]) -> list[int]:
    """Positions sorted by priority, highest first; ties by instance id."""
    if len(priorities) != len(instance_ids):
        raise InputError("one priority per instance required")
    return sorted(range(len(priorities)), key=lambda i: (-float(priorities[i]), instance_ids[i]))


def mae_curve_from_errors(errors: Sequence[int], priorities: Sequence[float],
                          instance_ids: Sequence[str] | None = None) -> CoverageCurve:
    """MAE at coverages 1, (n-1)/n, ..., 1/n for the given re-query ordering."""
    n = len(errors)
    if n == 0:
        raise InputError("empty benchmark")
    if instance_ids is None:
        instance_ids = [f"{i:012d}" for i in range(n)]
    order = requery_order(priorities, instance_ids)
    errs = [int(errors[i]) for i in order]
    remaining = sum(errs)
    covs, vals = [], []
    for r in range(n):
        covs.append(coverage(n, r))
        vals.append(remaining / (n - r))
        remaining -= errs[r]
    return CoverageCurve.from_values(covs, vals)


def initial_errors(benchmark: Benchmark, distribution: str = SINGLE) -> np.ndarray:
    """Additional error of every instance's initial expression."""
    return np.array([additional_error(evidence_loss(inst, inst.initial, distribution))
                     for inst in benchmark], dtype=int)


def initial_priorities(benchmark: Benchmark, distribution: str = SINGLE, measure: str = "softmax") -> np.ndarray:
    return np.array([priority(inst.initial, distribution, measure) for inst in benchmark], dtype=float)


def mae_curve(benchmark: Benchmark, priorities: Sequence[float], distribution: str = SINGLE) -> CoverageCurve:
    if len(benchmark) == 0:
        raise InputError("empty benchmark")
    if len(priorities) != len(benchmark):
        raise InputError(f"{len(priorities)} priorities for {len(benchmark)} instances")
    ids = [inst.instance_id for inst in benchmark]
    return mae_curve_from_errors(initial_errors(benchmark, distribution), priorities, ids)


def amae(benchmark: Benchmark, distribution: str = SINGLE, measure: str = "softmax") -> float:
    """Area under the MAE-coverage curve for one distribution/measure pairing."""
    return mae_curve(benchmark, initial_priorities(benchmark, distribution, measure), distribution).area


def coverage_at_upper_bound(benchmark: Benchmark, priorities: Sequence[float],
                            upper_bound_accuracy: float, distribution: str = SINGLE) -> float:
    """Largest coverage whose overall accuracy reaches ``upper_bound_accuracy`` percent.

    Re-queried expressions count as correct, since the second modality is
    assumed perfect.
    """
    if not 0.0 <= upper_bound_accuracy <= 100.0:
        raise InputError("upper bound accuracy must be a percentage")
    n = len(benchmark)
    if n == 0:
        raise InputError("empty benchmark")
    errors = initial_errors(benchmark, distribution)
    order = requery_order(priorities, [inst.instance_id for inst in benchmark])
    wrong_accepted = int(np.count_nonzero(errors))
    for r in range(n + 1):
        if 100.0 * (n - wrong_accepted) / n >= upper_bound_accuracy - 1e-9:
            return coverage(n, r)
        if r < n and errors[order[r]]:
            wrong_accepted -= 1
    return 0.0


@dataclass(frozen=True)
class TrialSummary:
    """Mean and standard error of a curve area across independent trials."""

    mean: float
    standard_error: float
    areas: tuple[float, ...]
    mean_curve: CoverageCurve

    @property
    def trials(self) -> int:
        return len(self.areas)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "standard_error": self.standard_error,
                "trials": self.trials, "areas": list(self.areas)}


def summarize_curves(curves: Sequence[CoverageCurve]) -> TrialSummary:
    if not curves:
        raise InputError("no trials")
    grid = curves[0].coverages
    for c in curves[1:]:
        if c.coverages.shape != grid.shape or not np.array_equal(c.coverages, grid):
            raise InputError("trial curves are on different coverage grids")
    areas = np.array([c.area for c in curves])
    se = float(areas.std(ddof=1) / math.sqrt(areas.size)) if areas.size > 1 else 0.0
    mean_vals = np.mean([c.values for c in curves], axis=0)
    return TrialSummary(float(areas.mean()), se, tuple(areas.tolist()),
                        CoverageCurve.from_values(grid, mean_vals))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Stream for one trial; it depends only on (seed, trial), never on the trial count."""
    return np.random.default_rng([int(seed), int(trial)])


_WORKER_BENCHMARK = None


def _init_worker(benchmark):
    global _WORKER_BENCHMARK
    _WORKER_BENCHMARK = benchmark


def _call_worker(job):
    fn, trial, args = job
    return fn(_WORKER_BENCHMARK, trial, *args)


def map_trials(fn, benchmark: Benchmark, trials: int, args: tuple = (), workers: int = 1) -> list:
    """``[fn(benchmark, t, *args) for t in range(trials)]``, optionally across processes."""
    if trials < 1:
        raise InputError("trials must be >= 1")
    if workers <= 1 or trials == 1:
        return [fn(benchmark, t, *args) for t in range(trials)]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(benchmark,)) as pool:
        return list(pool.map(_call_worker, [(fn, t, args) for t in range(trials)]))


def resample_initials(benchmark: Benchmark, rng: np.random.Generator) -> Benchmark:
    """Draw each instance's initial expression uniformly from all of its expressions."""
    choices = [int(rng.integers(len(inst.expressions))) for inst in benchmark]
    return benchmark.replace_initials(choices)


def _amae_trial(benchmark, trial, seed, distribution, measure, resample):
    bench = resample_initials(benchmark, trial_rng(seed, trial)) if resample else benchmark
    return mae_curve(bench, initial_priorities(bench, distribution, measure), distribution)


def amae_trials(benchmark: Benchmark, distribution: str = SINGLE, measure: str = "softmax",
                trials: int = 100, seed: int = 0, resample: bool = True, workers: int = 1) -> TrialSummary:
    """AMAE mean and standard error over trials that redraw every initial expression.

    With ``resample=False`` every trial sees the same data and the standard
    error is 0.
    """
    curves = map_trials(_amae_trial, benchmark, trials, (seed, distribution, measure, resample), workers)
    return summarize_curves(curves)

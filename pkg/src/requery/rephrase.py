"""Rephrase re-query: the only answer to a re-query is another referring expression.

Two selection functions decide what to do with several expressions for one
object. Smart replacement keeps the single most confident expression; combined
replacement multiplies the candidate distributions and renormalises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .confidence import (
    SINGLE,
    SOFTMAX,
    build_distribution,
    canonical_distribution,
    canonical_measure,
    distribution_priority,
    evidence_loss,
    priority,
)
from .data import CANDIDATE, Benchmark, ExpressionEvidence, Instance, instance_loss
from .errors import CapabilityError, InputError
from .geometry import INCORRECT
from .multimodal import CoverageCurve, TrialSummary, additional_error, map_trials, summarize_curves, trial_rng

NONE = "none"
SMART = "smart"
COMBINED = "combined"
SELECTIONS = (NONE, SMART, COMBINED)

FUSED = "fused"
LATEST = "latest"
INITIAL = "initial"
PRIORITY_SOURCES = (FUSED, LATEST, INITIAL)

# Probability floor applied before taking logs or multiplying.
EPS = 1e-12


def canonical_selection(name: str) -> str:
    if name not in SELECTIONS:
        raise InputError(f"unknown selection {name!r}; expected one of {SELECTIONS}")
    return name


def _log_evidence(dist) -> np.ndarray:
    # scalar libm calls: numpy's vector kernels may round differently by platform
    return np.array([math.log(max(x, EPS)) for x in np.asarray(dist, dtype=float).tolist()])


def _from_log(acc: np.ndarray) -> np.ndarray:
    p = np.array([math.exp(a) for a in (acc - acc.max()).tolist()])
    return p / p.sum()


def combine(dists: Sequence) -> np.ndarray:
    """Normalised elementwise product of candidate distributions.

    Entries are floored at ``EPS`` and the product is taken in log space, so
    arbitrarily long lists neither underflow nor let a single zero veto a
    candidate forever.
    """
    if len(dists) == 0:
        raise InputError("combine needs at least one distribution")
    k = len(dists[0])
    acc = None
    for d in dists:
        if len(d) != k:
            raise InputError("distributions to combine must have equal length")
        acc = _log_evidence(d) if acc is None else acc + _log_evidence(d)
    return _from_log(acc)


def _check_combinable(evidence: Sequence[ExpressionEvidence]) -> None:
    for ev in evidence:
        if ev.kind != CANDIDATE:
            raise CapabilityError(
                "combined replacement multiplies distributions over one fixed candidate set; "
                f"expression {ev.expression_id} comes from an end-to-end detector whose boxes "
                "change between expressions"
            )


def combine_evidence(evidence: Sequence[ExpressionEvidence], distribution: str = SINGLE) -> np.ndarray:
    if len(evidence) == 0:
        raise InputError("combine needs at least one expression")
    _check_combinable(evidence)
    dists = [build_distribution(ev, distribution) for ev in evidence]
    if len(dists) == 1:
        return dists[0]
    return combine(dists)


def smart_select(evidence: Sequence[ExpressionEvidence], distribution: str = SINGLE,
                 measure: str = SOFTMAX) -> int:
    """Index of the expression with the lowest re-query priority; earliest wins ties."""
    if len(evidence) == 0:
        raise InputError("smart selection needs at least one expression")
    best, best_p = 0, priority(evidence[0], distribution, measure)
    for i in range(1, len(evidence)):
        p = priority(evidence[i], distribution, measure)
        if p < best_p:
            best, best_p = i, p
    return best


def selection_loss(instance: Instance, evidence: Sequence[ExpressionEvidence], selection: str,
                   distribution: str = SINGLE, measure: str = SOFTMAX) -> int:
    """Loss of the answer a selection function gives from ``evidence``."""
    selection = canonical_selection(selection)
    if selection == NONE:
        return evidence_loss(instance, evidence[0], distribution)
    if selection == SMART:
        return evidence_loss(instance, evidence[smart_select(evidence, distribution, measure)], distribution)
    return instance_loss(instance, combine_evidence(evidence, distribution))


@dataclass
class RequerySession:
    """Expressions gathered for one instance, initial first."""

    instance: Instance
    evidence_used: list[ExpressionEvidence] = field(default_factory=list)

    def __post_init__(self):
        if not self.evidence_used:
            self.evidence_used = [self.instance.initial]

    @property
    def instance_id(self) -> str:
        return self.instance.instance_id

    def fused(self, distribution: str = SINGLE) -> np.ndarray:
        return combine_evidence(self.evidence_used, distribution)

    def chosen(self, distribution: str = SINGLE, measure: str = SOFTMAX) -> int:
        return smart_select(self.evidence_used, distribution, measure)

    def loss(self, selection: str, distribution: str = SINGLE, measure: str = SOFTMAX) -> int:
        return selection_loss(self.instance, self.evidence_used, selection, distribution, measure)


def rmae(benchmark: Benchmark, sessions: Sequence, selection: str,
         distribution: str = SINGLE, measure: str = SOFTMAX) -> float:
    """Error rate in percent over all objects after applying the selection function.

    ``sessions`` holds one entry per instance: a `RequerySession` or a plain
    sequence of evidence (initial first).
    """
    if len(sessions) != len(benchmark):
        raise InputError(f"{len(sessions)} sessions for {len(benchmark)} instances")
    total = 0
    for inst, sess in zip(benchmark, sessions):
        used = sess.evidence_used if isinstance(sess, RequerySession) else list(sess)
        total += additional_error(selection_loss(inst, used, selection, distribution, measure))
    return total / len(benchmark)


@dataclass(frozen=True)
class SweepStep:
    step: int
    instance_id: str
    priority: float
    expression_id: str
    rmae: float


@dataclass(frozen=True)
class SweepResult:
    """RMAE curve of one greedy re-query sweep plus its audit log.

    ``truncated`` is set when the sweep ran out of re-queryable instances
    before coverage 0; the curve then only spans the realised coverages.
    """

    curve: CoverageCurve
    steps: tuple[SweepStep, ...]
    selection: str
    truncated: bool

    @property
    def total_requeries(self) -> int:
        return len(self.steps)


class _Draws:
    """Per-instance response stream: unused pool expressions first, then any expression."""

    def __init__(self, instance: Instance):
        self.unused = list(instance.pool)
        self.full = list(instance.expressions)
        self.has_pool = bool(instance.pool)

    def draw(self, rng: np.random.Generator) -> ExpressionEvidence:
        if self.unused:
            return self.unused.pop(int(rng.integers(len(self.unused))))
        return self.full[int(rng.integers(len(self.full)))]


def rmae_sweep(benchmark: Benchmark, selection: str, distribution: str = SINGLE,
               measure: str = SOFTMAX, seed=0, *, priority_source: str = FUSED,
               oracle: bool = False) -> SweepResult:
    """Greedily re-query the highest-priority instance until coverage 0.

    Each step re-queries one instance, so after ``r`` steps coverage is
    ``(|P| - r) / |P|``. Smart replacement re-queries an instance at most
    once; combined replacement may return to the same instance, with its
    priority taken from the fused distribution (``priority_source="fused"``)
    or from the latest expression alone (``"latest"``). With ``"initial"``
    every instance keeps its initial-expression priority and is re-queried at
    most once, whatever the selection. ``oracle=True`` uses the current
    additional error as the priority.
    """
    selection = canonical_selection(selection)
    distribution = canonical_distribution(distribution)
    measure = canonical_measure(measure)
    if priority_source not in PRIORITY_SOURCES:
        raise InputError(f"priority_source must be one of {PRIORITY_SOURCES}")
    n = len(benchmark)
    if n == 0:
        raise InputError("empty benchmark")
    if selection == COMBINED:
        for inst in benchmark:
            _check_combinable(inst.expressions)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    instances = benchmark.instances
    ids = [inst.instance_id for inst in instances]
    id_rank = np.empty(n, dtype=int)
    id_rank[sorted(range(n), key=ids.__getitem__)] = np.arange(n)
    used = [[inst.initial] for inst in instances]
    draws = [_Draws(inst) for inst in instances]
    log_acc = [None] * n  # running log-product per instance, combined only

    def current_loss(i: int) -> int:
        if selection == COMBINED and len(used[i]) > 1:
            return instance_loss(instances[i], _from_log(log_acc[i]))
        return selection_loss(instances[i], used[i], selection, distribution, measure)

    def current_priority(i: int) -> float:
        if oracle:
            return float(losses[i])
        if priority_source == INITIAL:
            return priority(used[i][0], distribution, measure)
        if selection == COMBINED and len(used[i]) > 1:
            if priority_source == LATEST:
                return priority(used[i][-1], distribution, measure)
            return distribution_priority(_from_log(log_acc[i]), measure)
        if selection == SMART:
            return priority(used[i][smart_select(used[i], distribution, measure)], distribution, measure)
        return priority(used[i][0], distribution, measure)

    losses = [additional_error(current_loss(i)) for i in range(n)]
    prios = np.array([current_priority(i) for i in range(n)], dtype=float)
    eligible = np.array([d.has_pool for d in draws], dtype=bool)
    if selection == NONE:
        eligible[:] = False

    total = sum(losses)
    covs, vals, steps = [1.0], [total / n], []
    truncated = False
    for r in range(1, n + 1):
        if not eligible.any():
            truncated = selection != NONE
            break
        masked = np.where(eligible, prios, -np.inf)
        top = np.flatnonzero(masked == masked.max())
        i = int(top[np.argmin(id_rank[top])])
        chosen_priority = float(prios[i])

        ev = draws[i].draw(rng)
        if selection == COMBINED:
            if log_acc[i] is None:
                log_acc[i] = _log_evidence(build_distribution(used[i][0], distribution))
            log_acc[i] = log_acc[i] + _log_evidence(build_distribution(ev, distribution))
        used[i].append(ev)
        if selection == SMART or priority_source == INITIAL:
            eligible[i] = False

        total -= losses[i]
        losses[i] = additional_error(current_loss(i))
        total += losses[i]
        prios[i] = current_priority(i)

        covs.append((n - r) / n)
        vals.append(total / n)
        steps.append(SweepStep(r, ids[i], chosen_priority, ev.expression_id, total / n))

    if selection == NONE:
        covs = [(n - r) / n for r in range(n + 1)]
        vals = vals * (n + 1)
    return SweepResult(CoverageCurve.from_values(covs, vals), tuple(steps), selection, truncated)


def _sweep_trial(benchmark, trial, seed, selection, distribution, measure, kwargs):
    return rmae_sweep(benchmark, selection, distribution, measure, trial_rng(seed, trial), **kwargs)


def sweep_trials(benchmark: Benchmark, selection: str, distribution: str = SINGLE,
                 measure: str = SOFTMAX, trials: int = 100, seed: int = 0, workers: int = 1,
                 **kwargs) -> tuple[TrialSummary, list[SweepResult]]:
    """Run independent sweeps, each on its own seeded stream, and summarise their areas."""
    results = map_trials(_sweep_trial, benchmark, trials,
                         (seed, selection, distribution, measure, kwargs), workers)
    return summarize_curves([res.curve for res in results]), results


def common_range(a: CoverageCurve, b: CoverageCurve) -> tuple[CoverageCurve, CoverageCurve]:
    """Both curves cut to the coverages they share (the longer is truncated)."""
    m = min(len(a), len(b))
    if not np.allclose(a.coverages[:m], b.coverages[:m], rtol=0, atol=1e-9):
        raise InputError("curves are not on a common coverage grid")
    return (CoverageCurve.from_values(a.coverages[:m], a.values[:m]),
            CoverageCurve.from_values(b.coverages[:m], b.values[:m]))


def crossover_coverage(combined: CoverageCurve, smart: CoverageCurve) -> float | None:
    """Coverage below which combined replacement has strictly lower RMAE than smart.

    Scanning upward from the lowest coverage, returns the first grid coverage
    where combined is no longer strictly lower; 1.0 if it stays lower at every
    coverage below 1; None if it is not lower even at the lowest coverage.
    """
    if combined.coverages.shape != smart.coverages.shape or not np.allclose(
            combined.coverages, smart.coverages, rtol=0, atol=1e-9):
        raise InputError("crossover needs both curves on the same coverage grid")
    order = np.argsort(combined.coverages, kind="stable")
    if not combined.values[order[0]] < smart.values[order[0]]:
        return None
    for j in order[1:]:
        if combined.coverages[j] >= 1.0:
            break
        if not combined.values[j] < smart.values[j]:
            return float(combined.coverages[j])
    return 1.0


def weighted_log_scores(pool: Sequence, occurrence=None) -> np.ndarray:
    """Per-candidate sum of occurrence-weighted log probabilities."""
    if len(pool) == 0:
        raise InputError("converged distribution needs a non-empty pool")
    logs = np.array([_log_evidence(d) for d in pool])
    if occurrence is None:
        w = np.full(len(pool), 1.0 / len(pool))
    else:
        w = np.asarray(occurrence, dtype=float)
        if w.shape != (len(pool),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InputError("occurrence must be a probability vector over the pool")
    return w @ logs


def converged_distribution(pool: Sequence, occurrence=None) -> np.ndarray:
    """One-hot limit of combined replacement under unlimited re-queries.

    The limit sits on the candidate with the largest occurrence-weighted
    geometric mean of probabilities (lowest index on ties).
    """
    scores = weighted_log_scores(pool, occurrence)
    out = np.zeros(scores.size)
    out[int(np.argmax(scores))] = 1.0
    return out


def converged_accuracy(benchmark: Benchmark, method: str, distribution: str = SINGLE,
                       measure: str = SOFTMAX, occurrence: Sequence | None = None) -> float:
    """Accuracy in percent reachable with unlimited re-queries.

    ``none`` keeps each initial expression, ``smart`` picks the most confident
    of all known expressions, ``combined`` uses the converged one-hot over
    all known expressions. ``occurrence`` optionally gives per-instance weight
    vectors (initial first); uniform otherwise.
    """
    method = canonical_selection(method)
    n = len(benchmark)
    if n == 0:
        raise InputError("empty benchmark")
    wrong = 0
    for idx, inst in enumerate(benchmark):
        exprs = inst.expressions
        if method == NONE:
            l = evidence_loss(inst, inst.initial, distribution)
        elif method == SMART:
            l = evidence_loss(inst, exprs[smart_select(exprs, distribution, measure)], distribution)
        else:
            _check_combinable(exprs)
            w = None if occurrence is None else occurrence[idx]
            l = instance_loss(inst, converged_distribution(
                [build_distribution(ev, distribution) for ev in exprs], w))
        wrong += l == INCORRECT
    return 100.0 * (n - wrong) / n


def converged_report(benchmark: Benchmark, distribution: str = SINGLE, measure: str = SOFTMAX) -> dict:
    """Converged accuracy for every method; methods the evidence cannot support are reported as errors."""
    out = {}
    for method in SELECTIONS:
        try:
            out[method] = converged_accuracy(benchmark, method, distribution, measure)
        except CapabilityError as exc:
            out[method] = {"error": "capability", "message": str(exc)}
    return out


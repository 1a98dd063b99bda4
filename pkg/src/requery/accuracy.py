"""Accuracy over expressions versus over objects (random, best and worst expression)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .confidence import SINGLE, evidence_loss
from .data import Benchmark
from .errors import InputError
from .geometry import CORRECT

PER_EXPRESSION = "per-expression"
PER_OBJECT_RANDOM = "per-object-random"
PER_OBJECT_BEST = "per-object-best"
PER_OBJECT_WORST = "per-object-worst"
MODES = (PER_EXPRESSION, PER_OBJECT_RANDOM, PER_OBJECT_BEST, PER_OBJECT_WORST)


@dataclass(frozen=True)
class AccuracyReport:
    mode: str
    mean: float
    standard_error: float = 0.0
    n_samples: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def correctness(benchmark: Benchmark, distribution: str = SINGLE) -> list[np.ndarray]:
    """Per instance, a boolean per expression (initial first): is its prediction correct?"""
    return [np.array([evidence_loss(inst, ev, distribution) == CORRECT for ev in inst.expressions])
            for inst in benchmark]


def _nonempty(benchmark: Benchmark) -> None:
    if len(benchmark) == 0:
        raise InputError("empty benchmark")


def per_expression(benchmark: Benchmark, distribution: str = SINGLE) -> AccuracyReport:
    _nonempty(benchmark)
    flags = np.concatenate(correctness(benchmark, distribution))
    return AccuracyReport(PER_EXPRESSION, 100.0 * flags.mean())


def per_object_random(benchmark: Benchmark, n_samples: int = 100, seed: int = 0,
                      distribution: str = SINGLE) -> AccuracyReport:
    """Mean and standard error over ``n_samples`` draws of one random expression per object."""
    _nonempty(benchmark)
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    flags = correctness(benchmark, distribution)
    rng = np.random.default_rng(seed)
    sizes = np.array([f.size for f in flags])
    picks = (rng.random((n_samples, len(flags))) * sizes).astype(int)
    accs = np.array([100.0 * np.mean([f[j] for f, j in zip(flags, row)]) for row in picks])
    se = float(accs.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return AccuracyReport(PER_OBJECT_RANDOM, float(accs.mean()), se, n_samples)


def per_object_best(benchmark: Benchmark, distribution: str = SINGLE) -> AccuracyReport:
    """An object counts as correct if any of its expressions gives the right box."""
    _nonempty(benchmark)
    return AccuracyReport(PER_OBJECT_BEST,
                          100.0 * np.mean([f.any() for f in correctness(benchmark, distribution)]))


def per_object_worst(benchmark: Benchmark, distribution: str = SINGLE) -> AccuracyReport:
    """An object counts as correct only if every one of its expressions gives the right box."""
    _nonempty(benchmark)
    return AccuracyReport(PER_OBJECT_WORST,
                          100.0 * np.mean([f.all() for f in correctness(benchmark, distribution)]))


def all_modes(benchmark: Benchmark, n_samples: int = 100, seed: int = 0,
              distribution: str = SINGLE) -> list[AccuracyReport]:
    return [
        per_expression(benchmark, distribution),
        per_object_random(benchmark, n_samples, seed, distribution),
        per_object_best(benchmark, distribution),
        per_object_worst(benchmark, distribution),
    ]

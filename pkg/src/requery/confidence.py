"""Distributions built from expression evidence, and the re-query scores over them.

Priorities follow one orientation everywhere: a higher value means the
expression should be re-queried sooner. Entropy is used as is; softmax
response is negated.
"""

from __future__ import annotations

import math

import numpy as np

from .data import CANDIDATE, DIRECT, ExpressionEvidence, Instance, instance_loss
from .errors import CapabilityError, InputError
from .geometry import loss

SINGLE = "single"
DROPOUT_MEAN = "dropout-mean"
VARIATION_RATIO = "variation-ratio"
DISTRIBUTIONS = (SINGLE, DROPOUT_MEAN, VARIATION_RATIO)

SOFTMAX = "softmax"
ENTROPY = "entropy"
MEASURES = (SOFTMAX, ENTROPY)

# Default number of stochastic passes for generated dropout evidence.
DEFAULT_PASSES = 100

_ALIASES = {
    "single-pass": SINGLE,
    "mean": DROPOUT_MEAN,
    "dropout_mean": DROPOUT_MEAN,
    "variation_ratio": VARIATION_RATIO,
    "vr": VARIATION_RATIO,
    "softmax-response": SOFTMAX,
    "softmax_response": SOFTMAX,
    "sr": SOFTMAX,
}


def canonical_distribution(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in DISTRIBUTIONS:
        raise InputError(f"unknown distribution {name!r}; expected one of {DISTRIBUTIONS}")
    return name


def canonical_measure(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in MEASURES:
        raise InputError(f"unknown measure {name!r}; expected one of {MEASURES}")
    return name


def _require_candidates(evidence: ExpressionEvidence, what: str) -> None:
    if evidence.kind != CANDIDATE:
        raise CapabilityError(
            f"{what} needs a distribution over a fixed candidate set; expression "
            f"{evidence.expression_id} is direct-prediction evidence"
        )


def _require_samples(evidence: ExpressionEvidence, what: str) -> None:
    _require_candidates(evidence, what)
    if evidence.dropout_samples is None:
        raise CapabilityError(f"{what} needs dropout samples; expression {evidence.expression_id} has none")


def single_pass(evidence: ExpressionEvidence) -> np.ndarray:
    _require_candidates(evidence, "single-pass distribution")
    return evidence.single_pass


def dropout_mean(evidence: ExpressionEvidence) -> np.ndarray:
    """Average of the per-pass probability vectors."""
    _require_samples(evidence, "dropout mean")
    samples = evidence.dropout_samples
    if np.all(samples == samples[0]):
        # exact for constant rows; the summed mean would pick up rounding
        return samples[0]
    p = samples.mean(axis=0)
    return p / p.sum()


def variation_ratio(evidence: ExpressionEvidence) -> np.ndarray:
    """Fraction of passes voting for each candidate (argmax, lowest index on ties)."""
    _require_samples(evidence, "variation ratio")
    samples = evidence.dropout_samples
    votes = np.bincount(np.argmax(samples, axis=1), minlength=samples.shape[1])
    return votes / samples.shape[0]


_BUILDERS = {SINGLE: single_pass, DROPOUT_MEAN: dropout_mean, VARIATION_RATIO: variation_ratio}


def build_distribution(evidence: ExpressionEvidence, distribution: str = SINGLE) -> np.ndarray:
    """Distribution of the given kind, memoised on the evidence object."""
    distribution = canonical_distribution(distribution)
    cache = evidence._cache
    if distribution not in cache:
        cache[distribution] = _BUILDERS[distribution](evidence)
    return cache[distribution]


def softmax_response(dist) -> float:
    p = np.asarray(dist, dtype=float)
    if p.size == 0:
        raise InputError("empty distribution")
    return float(p.max())


def entropy(dist) -> float:
    """Shannon entropy in nats, with 0 log 0 taken as 0."""
    p = np.asarray(dist, dtype=float)
    if p.size == 0:
        raise InputError("empty distribution")
    nz = p[p > 0]
    logs = np.array([math.log(x) for x in nz.tolist()])
    return float(-(nz * logs).sum())


def distribution_priority(dist, measure: str) -> float:
    measure = canonical_measure(measure)
    if measure == ENTROPY:
        return entropy(dist)
    return -softmax_response(dist)


def priority(evidence: ExpressionEvidence, distribution: str = SINGLE, measure: str = SOFTMAX) -> float:
    """Re-query priority of one expression; higher means re-query first."""
    distribution = canonical_distribution(distribution)
    measure = canonical_measure(measure)
    if evidence.kind == DIRECT:
        if distribution != SINGLE:
            raise CapabilityError(
                f"{distribution} needs repeated passes over a fixed candidate set; end-to-end "
                f"detectors do not return the same boxes across stochastic passes "
                f"(expression {evidence.expression_id})"
            )
        if measure != SOFTMAX:
            raise CapabilityError(
                f"{measure} needs a full candidate distribution; direct-prediction evidence only "
                f"carries a scalar confidence (expression {evidence.expression_id})"
            )
        return -float(evidence.confidence)
    return distribution_priority(build_distribution(evidence, distribution), measure)


def evidence_loss(instance: Instance, evidence: ExpressionEvidence, distribution: str = SINGLE) -> int:
    """Loss of the prediction made from one expression under the given distribution."""
    if evidence.kind == DIRECT:
        if canonical_distribution(distribution) != SINGLE:
            priority(evidence, distribution, SOFTMAX)  # raises the capability error
        return loss(evidence.direct_box, instance.gold_box)
    return instance_loss(instance, build_distribution(evidence, distribution))

"""Seeded synthetic benchmarks emulating a stochastic comprehension model.

Each expression gets a quality ``theta ~ Beta(alpha, beta)``. Candidate
logits are standard normal and the target's logit is raised by
``logit_scale * theta``. Every forward pass, the deterministic one included,
sees the logits plus Gaussian noise of scale ``dropout_sigma * (1 - theta)``:
the deterministic network carries one fixed weight error, and dropout passes
sample others. Poorly understood expressions are the ones that vary most.
Candidates are disjoint unit boxes, which makes the loss a pure function of
the argmax.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .confidence import DEFAULT_PASSES
from .data import Benchmark, ExpressionEvidence, Instance
from .errors import InputError
from .geometry import Box


@dataclass(frozen=True)
class SynthConfig:
    n_instances: int = 200
    k_candidates: int = 4
    pool_size_range: tuple[int, int] = (2, 5)
    quality_alpha: float = 2.0
    quality_beta: float = 1.0
    logit_scale: float = 4.0
    dropout_sigma: float = 1.0
    t_passes: int = DEFAULT_PASSES
    detection_rate: float = 1.0
    spread_temperature: float = 1.0
    # one expression per detected object is forced correct (a perfect phrasing exists)
    anchor_expression: bool = False
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "pool_size_range", tuple(int(v) for v in self.pool_size_range))
        lo, hi = self.pool_size_range
        if self.n_instances < 1 or self.k_candidates < 1 or lo < 1 or hi < lo:
            raise InputError("counts must be >= 1 and pool_size_range must satisfy 1 <= min <= max")
        if self.t_passes < 0:
            raise InputError("t_passes must be >= 0 (0 disables dropout samples)")
        if not 0.0 <= self.detection_rate <= 1.0:
            raise InputError("detection_rate must lie in [0, 1]")
        if not self.spread_temperature > 0:
            raise InputError("spread_temperature must be positive")
        if not (self.quality_alpha > 0 and self.quality_beta > 0):
            raise InputError("quality_alpha and quality_beta must be positive")
        if self.dropout_sigma < 0 or self.logit_scale < 0:
            raise InputError("dropout_sigma and logit_scale must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pool_size_range"] = list(self.pool_size_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "SynthConfig":
        return replace(self, seed=int(seed))


PRESETS = {
    # Nearly every expression is understood; each object has a correct phrasing.
    "easy": SynthConfig(n_instances=200, k_candidates=2, pool_size_range=(3, 5), quality_alpha=4.0,
                        quality_beta=1.0, logit_scale=6.0, dropout_sigma=0.5, detection_rate=1.0,
                        spread_temperature=1.0, anchor_expression=True, name="easy"),
    # Many candidates and a high temperature: flat outputs that fuse slowly.
    "spread": SynthConfig(n_instances=200, k_candidates=12, pool_size_range=(3, 6), quality_alpha=1.5,
                          quality_beta=1.5, logit_scale=4.0, dropout_sigma=2.0, detection_rate=0.95,
                          spread_temperature=3.0, name="spread"),
    "low-detection": SynthConfig(n_instances=200, k_candidates=6, pool_size_range=(2, 5),
                                 quality_alpha=2.0, quality_beta=1.0, logit_scale=4.0, dropout_sigma=2.0,
                                 detection_rate=0.85, spread_temperature=1.0, name="low-detection"),
    "paper-shape": SynthConfig(n_instances=200, k_candidates=6, pool_size_range=(2, 5), quality_alpha=2.0,
                               quality_beta=1.0, logit_scale=4.0, dropout_sigma=2.0, detection_rate=0.95,
                               spread_temperature=1.0, name="paper-shape"),
}


def preset(name: str) -> SynthConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _grid_boxes(k: int) -> tuple[Box, ...]:
    cols = math.ceil(math.sqrt(k))
    return tuple(Box(2.0 * (c % cols), 2.0 * (c // cols), 2.0 * (c % cols) + 1, 2.0 * (c // cols) + 1)
                 for c in range(k))


# Placed left of the candidate grid so it overlaps none of them.
_UNDETECTED_BOX = Box(-3.0, -3.0, -2.0, -2.0)


def _quality(cfg: SynthConfig, rng: np.random.Generator) -> float:
    if math.isinf(cfg.quality_alpha):
        return 1.0
    return float(rng.beta(cfg.quality_alpha, cfg.quality_beta))


def generate(config: SynthConfig) -> Benchmark:
    """Benchmark that is a deterministic function of ``config``."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    k = cfg.k_candidates
    boxes = _grid_boxes(k)
    lo, hi = cfg.pool_size_range
    instances = []
    for idx in range(cfg.n_instances):
        iid = f"i{idx:05d}"
        gold = int(rng.integers(k))
        detected = bool(rng.random() < cfg.detection_rate)
        m = int(rng.integers(lo, hi + 1))
        anchor = int(rng.integers(m)) if cfg.anchor_expression and detected else -1
        exprs = []
        for j in range(m):
            theta = 1.0 if j == anchor else _quality(cfg, rng)
            z = rng.normal(size=k)
            if detected:
                z[gold] += cfg.logit_scale * theta
            if j == anchor and int(np.argmax(z)) != gold:
                top = int(np.argmax(z))
                z[top], z[gold] = z[gold], z[top]
            sigma = cfg.dropout_sigma * (1.0 - theta)
            single = _softmax((z + sigma * rng.normal(size=k)) / cfg.spread_temperature)
            samples = None
            if cfg.t_passes > 0:
                noise = sigma * rng.normal(size=(cfg.t_passes, k))
                samples = _softmax((z + noise) / cfg.spread_temperature)
            exprs.append(ExpressionEvidence(f"{iid}-e{j}", single_pass=single, dropout_samples=samples))
        instances.append(Instance(
            instance_id=iid, image_id=f"img{idx:05d}", object_id=f"obj{idx:05d}",
            candidates=boxes, gold_box=boxes[gold] if detected else _UNDETECTED_BOX,
            gold_index=gold if detected else None, initial=exprs[0], pool=tuple(exprs[1:]),
        ))
    return Benchmark(tuple(instances), name=cfg.name, box_source="detected", config_hash=cfg.content_hash())

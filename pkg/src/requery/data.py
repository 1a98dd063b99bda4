"""Benchmark data model: evidence, instances, benchmarks and their file format.

A benchmark file is line-delimited JSON. An optional first line
``{"metadata": {...}}`` carries the benchmark name, box source and generator
config hash; every other line is one instance record.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InputError, ParseError, ValidationError
from .geometry import Box, iou, loss

CANDIDATE = "candidate-classification"
DIRECT = "direct-prediction"
EVIDENCE_KINDS = (CANDIDATE, DIRECT)
BOX_SOURCES = ("ground-truth", "detected")

# Stored probabilities may drift this far from summing to one.
FILE_TOLERANCE = 1e-6
# Vectors already this close to one are kept as is, so save/load round-trips exactly.
_RESCALE_SLACK = 1e-12


def normalize(probs, tol: float = FILE_TOLERANCE, what: str = "distribution") -> np.ndarray:
    """Return ``probs`` rescaled to sum to one, rejecting vectors further than ``tol`` off."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InputError(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InputError(f"{what} has negative or non-finite entries")
    total = float(p.sum())
    if abs(total - 1.0) > tol:
        raise InputError(f"{what} sums to {total:.9g}, not 1")
    if abs(total - 1.0) <= _RESCALE_SLACK:
        return p
    return p / total


@dataclass(frozen=True, eq=False)
class ExpressionEvidence:
    """Model output for one referring expression."""

    expression_id: str
    kind: str = CANDIDATE
    single_pass: np.ndarray | None = None
    dropout_samples: np.ndarray | None = None
    direct_box: Box | None = None
    confidence: float | None = None
    text: str | None = None
    # distributions built by `confidence`, keyed by distribution choice
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in EVIDENCE_KINDS:
            raise InputError(f"unknown evidence kind {self.kind!r}")
        if self.kind == CANDIDATE:
            if self.single_pass is None or self.direct_box is not None:
                raise InputError(f"{self.expression_id}: candidate evidence needs single_pass only")
            sp = normalize(self.single_pass, what=f"{self.expression_id} single_pass")
            object.__setattr__(self, "single_pass", sp)
            if self.dropout_samples is not None:
                ds = np.asarray(self.dropout_samples, dtype=float)
                if ds.ndim != 2 or ds.shape[0] < 1 or ds.shape[1] != sp.size:
                    raise InputError(
                        f"{self.expression_id}: dropout_samples must be T x {sp.size}, got {ds.shape}"
                    )
                if np.any(ds < 0) or not np.all(np.isfinite(ds)):
                    raise InputError(f"{self.expression_id}: dropout_samples has invalid entries")
                sums = ds.sum(axis=1)
                if np.any(np.abs(sums - 1.0) > FILE_TOLERANCE):
                    raise InputError(f"{self.expression_id}: a dropout row does not sum to 1")
                if np.any(np.abs(sums - 1.0) > _RESCALE_SLACK):
                    ds = ds / sums[:, None]
                object.__setattr__(self, "dropout_samples", ds)
        else:
            if self.direct_box is None or self.single_pass is not None or self.dropout_samples is not None:
                raise InputError(f"{self.expression_id}: direct evidence needs direct_box only")
            if self.confidence is None or not 0.0 <= self.confidence <= 1.0:
                raise InputError(f"{self.expression_id}: direct confidence must lie in [0, 1]")
            if not isinstance(self.direct_box, Box):
                object.__setattr__(self, "direct_box", Box.from_seq(self.direct_box))

    @property
    def n_candidates(self) -> int | None:
        return None if self.single_pass is None else int(self.single_pass.size)

    @property
    def has_dropout(self) -> bool:
        return self.dropout_samples is not None

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"expression_id": self.expression_id, "kind": self.kind}
        if self.text is not None:
            rec["text"] = self.text
        if self.single_pass is not None:
            rec["single_pass"] = self.single_pass.tolist()
        if self.dropout_samples is not None:
            rec["dropout_samples"] = self.dropout_samples.tolist()
        if self.direct_box is not None:
            rec["direct"] = {"box": self.direct_box.as_list(), "confidence": self.confidence}
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ExpressionEvidence":
        direct = rec.get("direct")
        return cls(
            expression_id=str(rec["expression_id"]),
            kind=rec.get("kind", CANDIDATE),
            single_pass=rec.get("single_pass"),
            dropout_samples=rec.get("dropout_samples"),
            direct_box=None if direct is None else Box.from_seq(direct["box"]),
            confidence=None if direct is None else float(direct["confidence"]),
            text=rec.get("text"),
        )


@dataclass(frozen=True, eq=False)
class Instance:
    """One evaluation tuple: an image's candidates, the target, and its expressions."""

    instance_id: str
    image_id: str
    object_id: str
    candidates: tuple[Box, ...]
    gold_box: Box
    gold_index: int | None
    initial: ExpressionEvidence
    pool: tuple[ExpressionEvidence, ...] = ()

    @property
    def expressions(self) -> tuple[ExpressionEvidence, ...]:
        """All known expressions for the object, initial first."""
        return (self.initial,) + tuple(self.pool)

    @property
    def detected(self) -> bool:
        return self.gold_index is not None

    def validate(self) -> None:
        iid = self.instance_id
        k = len(self.candidates)
        ids = [ev.expression_id for ev in self.expressions]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate expression ids", iid)
        for ev in self.expressions:
            if ev.kind == CANDIDATE and ev.n_candidates != k:
                raise ValidationError(
                    f"expression {ev.expression_id} scores {ev.n_candidates} candidates, image has {k}", iid
                )
        if self.gold_index is not None:
            if not 0 <= self.gold_index < k:
                raise ValidationError(f"gold_index {self.gold_index} out of range", iid)
            if iou(self.candidates[self.gold_index], self.gold_box) <= 0.5:
                raise ValidationError("gold candidate does not overlap gold box with IoU > 0.5", iid)

    def to_record(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "image_id": self.image_id,
            "object_id": self.object_id,
            "candidates": [b.as_list() for b in self.candidates],
            "gold_box": self.gold_box.as_list(),
            "gold_index": self.gold_index,
            "initial": self.initial.to_record(),
            "pool": [ev.to_record() for ev in self.pool],
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Instance":
        gi = rec.get("gold_index")
        return cls(
            instance_id=str(rec["instance_id"]),
            image_id=str(rec["image_id"]),
            object_id=str(rec["object_id"]),
            candidates=tuple(Box.from_seq(c) for c in rec["candidates"]),
            gold_box=Box.from_seq(rec["gold_box"]),
            gold_index=None if gi is None else int(gi),
            initial=ExpressionEvidence.from_record(rec["initial"]),
            pool=tuple(ExpressionEvidence.from_record(e) for e in rec.get("pool", [])),
        )


@dataclass(frozen=True, eq=False)
class Benchmark:
    instances: tuple[Instance, ...]
    name: str = "benchmark"
    box_source: str = "detected"
    config_hash: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.box_source not in BOX_SOURCES:
            raise ValidationError(f"box_source must be one of {BOX_SOURCES}")
        seen = set()
        for inst in self.instances:
            if inst.instance_id in seen:
                raise ValidationError("duplicate instance_id", inst.instance_id)
            seen.add(inst.instance_id)
            inst.validate()

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def detection_rate(self) -> float:
        if not self.instances:
            return 0.0
        return sum(inst.detected for inst in self.instances) / len(self.instances)

    @property
    def has_direct(self) -> bool:
        return any(ev.kind == DIRECT for inst in self.instances for ev in inst.expressions)

    def metadata(self) -> dict[str, Any]:
        return {"name": self.name, "box_source": self.box_source, "config_hash": self.config_hash}

    def replace_initials(self, choices: Sequence[int]) -> "Benchmark":
        """Copy of the benchmark whose i-th instance starts from expression ``choices[i]``."""
        out = []
        for inst, c in zip(self.instances, choices):
            exprs = list(inst.expressions)
            first = exprs.pop(int(c))
            out.append(Instance(inst.instance_id, inst.image_id, inst.object_id, inst.candidates,
                                inst.gold_box, inst.gold_index, first, tuple(exprs)))
        return Benchmark(tuple(out), self.name, self.box_source, self.config_hash)


def dumps_benchmark(benchmark: Benchmark) -> str:
    lines = [json.dumps({"metadata": benchmark.metadata()}, sort_keys=True)]
    lines += [json.dumps(inst.to_record(), sort_keys=True) for inst in benchmark.instances]
    return "\n".join(lines) + "\n"


def save_benchmark(benchmark: Benchmark, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_benchmark(benchmark))
    tmp.replace(path)
    return path


def parse_benchmark(lines: Iterable[str]) -> Benchmark:
    meta: dict[str, Any] = {}
    instances = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict):
            raise ParseError("record is not an object", lineno)
        if "metadata" in rec:
            meta = rec["metadata"] or {}
            continue
        iid = rec.get("instance_id")
        try:
            inst = Instance.from_record(rec)
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}", lineno) from None
        except (TypeError, ValueError) as exc:
            if iid is None:
                raise ParseError(str(exc), lineno) from None
            raise ValidationError(str(exc), iid) from None
        instances.append(inst)
    return Benchmark(
        tuple(instances),
        name=meta.get("name") or "benchmark",
        box_source=meta.get("box_source") or "detected",
        config_hash=meta.get("config_hash"),
    )


def load_benchmark(path) -> Benchmark:
    """Read and validate a benchmark file."""
    with open(path) as fh:
        return parse_benchmark(fh)


def predict(instance: Instance, dist) -> Box:
    """Candidate with the highest probability; ties go to the lowest index."""
    p = np.asarray(dist, dtype=float)
    if p.ndim != 1 or p.size != len(instance.candidates):
        raise InputError(
            f"distribution over {p.size} entries for {len(instance.candidates)} candidates"
        )
    return instance.candidates[int(np.argmax(p))]


def instance_loss(instance: Instance, dist) -> int:
    return loss(predict(instance, dist), instance.gold_box)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


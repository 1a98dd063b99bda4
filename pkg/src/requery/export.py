"""CSV/JSON writers and run manifests.

Curves are written as ``coverage,<value>`` rows with six fractional digits
and a trailing ``# area,<area>`` comment row. All writes go through a temp
file and an atomic rename.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import ParseError
from .multimodal import CoverageCurve


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def curve_csv(curve: CoverageCurve, value_name: str = "value") -> str:
    rows = [f"coverage,{value_name}"]
    rows += [f"{c:.6f},{v:.6f}" for c, v in curve.points()]
    rows.append(f"# area,{curve.area:.6f}")
    return "\n".join(rows) + "\n"


def read_curve_csv(path) -> CoverageCurve:
    covs, vals = [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 2 or header[0] != "coverage":
            raise ParseError(f"{path}: not a curve file", 1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                c, v = (float(x) for x in line.split(","))
            except ValueError:
                raise ParseError(f"{path}: bad curve row {line!r}", lineno) from None
            covs.append(c)
            vals.append(v)
    return CoverageCurve.from_values(covs, vals)


def steps_csv(trial_steps: Sequence[Sequence]) -> str:
    rows = ["trial,step,instance_id,priority,expression_id,rmae"]
    for t, steps in enumerate(trial_steps):
        rows += [f"{t},{s.step},{s.instance_id},{s.priority!r},{s.expression_id},{s.rmae!r}" for s in steps]
    return "\n".join(rows) + "\n"


def json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj: Any) -> Path:
    return atomic_write(path, json_text(obj))


@dataclass
class RunManifest:
    """Everything needed to re-run a command and check its outputs byte for byte."""

    command: str
    flags: dict[str, Any]
    input_hashes: dict[str, str] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    version: str = ""
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / "manifest.json", self.to_dict())

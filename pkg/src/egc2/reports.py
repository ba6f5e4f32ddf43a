"""Serializable experiment reports.

A report embeds the exact configuration snapshot (hyperparameters, seeds,
library versions) that produced it, so re-running from the snapshot must
reproduce every metric bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def content_hash(payload) -> str:
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


@dataclass
class ExperimentReport:
    kind: str
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    per_fold: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    compression: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    failure: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def metrics_hash(self) -> str:
        """Hash over everything except output paths (machine-independent)."""
        payload = self.to_dict()
        payload.pop("outputs")
        return content_hash(payload)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        return cls(**json.loads(Path(path).read_text()))

"""Run reports (JSON) and per-epoch metrics logs (newline-delimited JSON)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from ..errors import FormatError

REPORT_SCHEMA = "cipherfit-report-v1"

METRIC_FIELDS = (
    "epoch",
    "t",
    "val_loss",
    "val_accuracy",
    "refresh_count",
    "wall_ms",
)


@dataclass
class EpochMetrics:
    """One validation snapshot, taken after each training epoch."""

    epoch: int
    t: int
    val_loss: float
    val_accuracy: float
    refresh_count: int
    wall_ms: float

    def as_record(self) -> Dict:
        return {name: getattr(self, name) for name in METRIC_FIELDS}


@dataclass
class RunReport:
    """Machine-readable summary of one training run."""

    config: Dict
    metrics: List[EpochMetrics] = field(default_factory=list)
    final_test_accuracy: Optional[float] = None
    train_wall_s: Optional[float] = None
    refresh_total: int = 0
    comparison: Optional[Dict] = None
    schema: str = REPORT_SCHEMA

    def to_json(self) -> str:
        payload = asdict(self)
        payload["metrics"] = [m.as_record() for m in self.metrics]
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"run report: not valid JSON ({exc})") from exc
        if payload.get("schema") != REPORT_SCHEMA:
            raise FormatError(
                f"run report: unknown schema {payload.get('schema')!r}"
            )
        try:
            metrics = [EpochMetrics(**m) for m in payload.pop("metrics", [])]
            return cls(metrics=metrics, **payload)
        except TypeError as exc:
            raise FormatError(f"run report: malformed fields ({exc})") from exc


def write_metrics_log(path, metrics: List[EpochMetrics]) -> None:
    with open(path, "w") as fh:
        for m in metrics:
            fh.write(json.dumps(m.as_record(), sort_keys=True) + "\n")


def read_metrics_log(path) -> List[EpochMetrics]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EpochMetrics(**json.loads(line)))
    return out

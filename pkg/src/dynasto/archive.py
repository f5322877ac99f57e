"""Failure records and append-only JSON-lines archives of them."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .sim import T_MAX, Policy, ReplayPolicy, ScenarioConfig, Trace, append_jsonl, read_jsonl, reset, run_episode
from .validity import Classification


@dataclass
class FailureRecord:
    config: ScenarioConfig
    adv_actions: list
    trace: Trace
    classification: Classification
    seed: int = 0
    source: str = ""
    genotype: list | None = None
    index: int = 0  # budget position (env step or evaluation) at which it was found

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "adv_actions": [int(a) for a in self.adv_actions],
            "trace": self.trace.to_dict(),
            "classification": self.classification.to_dict(),
            "seed": self.seed,
            "source": self.source,
            "genotype": None if self.genotype is None else [float(g) for g in self.genotype],
            "index": self.index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FailureRecord":
        return cls(config=ScenarioConfig.from_dict(d["config"]), adv_actions=list(d["adv_actions"]),
                   trace=Trace.from_dict(d["trace"]),
                   classification=Classification.from_dict(d["classification"]),
                   seed=d.get("seed", 0), source=d.get("source", ""), genotype=d.get("genotype"),
                   index=d.get("index", 0))


@dataclass
class FailureArchive:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, record: FailureRecord) -> None:
        self.records.append(record)

    def extend(self, records) -> None:
        self.records.extend(records)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("")
        append_jsonl(path, (r.to_dict() for r in self.records))

    @classmethod
    def load(cls, path) -> "FailureArchive":
        return cls([FailureRecord.from_dict(d) for d in read_jsonl(path)])


def replay(record: FailureRecord, sut_policy: Policy, t_max: int = T_MAX) -> Trace:
    """Re-simulate a record from its stored config, seed and adversary actions."""
    session = reset(record.config, seed=record.seed)
    return run_episode(session, sut_policy, ReplayPolicy(record.adv_actions), t_max)

"""Run configuration: every hyperparameter with its default, loadable
from a JSON file.  Unknown keys are rejected and load -> dump -> load
round-trips identically."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .pipeline import PipelineConfig
from .semantic import EmbeddingParams


@dataclass
class RunConfig:
    d: int = 32
    d_t: int = 32
    k_max: int = 4
    window: float = 10.0
    agg: str = "mean"
    embed_epochs: int = 5
    embed_lr: float = 0.05
    negatives: int = 5
    ae_epochs: int = 20
    ae_batch: int = 64
    ae_lr: float = 1e-3
    seq_len: int = 16
    gru_epochs: int = 20
    gru_lr: float = 1e-3
    q: float = 0.995
    seed: int = 42

    def __post_init__(self):
        if self.agg not in ("mean", "sum"):
            raise ValueError(f"unknown agg mode {self.agg!r}")
        if not 0 < self.q < 1:
            raise ValueError("q must be in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {path} is not valid JSON: {e.msg}") from None
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            d=self.d,
            d_t=self.d_t,
            k_max=self.k_max,
            window=self.window,
            agg=self.agg,
            ae_epochs=self.ae_epochs,
            ae_batch=self.ae_batch,
            ae_lr=self.ae_lr,
            gru_hidden=self.d,
            seq_len=self.seq_len,
            gru_epochs=self.gru_epochs,
            gru_lr=self.gru_lr,
            embed=EmbeddingParams(
                d_t=self.d_t,
                epochs=self.embed_epochs,
                lr=self.embed_lr,
                negatives=self.negatives,
            ),
        )

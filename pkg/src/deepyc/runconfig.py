"""Run configuration (JSON) and small file-output helpers."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import DeepYCConfig, TrainSpec


class TrainSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(100, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-3, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    shuffle: bool = True


class RunConfig(BaseModel):
    """Everything a train/forecast/transfer run depends on.

    Unknown keys are rejected so that a typo never silently falls back to a default.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    data: str
    layout: Literal["auto", "long", "wide"] = "auto"
    rate_scale: float = Field(1.0, gt=0)
    t0: str
    L: int = Field(9, ge=0)
    variant: Literal["ATT", "CONV", "ATT_DE"] = "ATT"
    gamma: Literal[1, 2] = 1
    alpha: float = Field(0.95, gt=0, lt=1)
    q_A: int = Field(8, ge=1)
    q_I: int = Field(2, ge=1)
    dropout_keep: float = Field(0.5, gt=0, le=1)
    train: TrainSection = TrainSection()
    seed: int = Field(0, ge=0)
    n_members: int = Field(10, ge=1)
    out_dir: str = "runs"

    @model_validator(mode="after")
    def _dates(self):
        if not self.t0:
            raise ValueError("t0 must be a non-empty date label")
        return self

    def model_config_for(self, M: int, n_families: int) -> DeepYCConfig:
        return DeepYCConfig(
            M=M,
            n_families=n_families,
            L=self.L,
            q_I=self.q_I,
            q_A=self.q_A,
            dropout_keep=self.dropout_keep,
            alpha=self.alpha,
            gamma=self.gamma,
            variant=self.variant,
        )

    def train_spec(self, seed: int | None = None) -> TrainSpec:
        t = self.train
        return TrainSpec(t.epochs, t.batch_size, self.seed if seed is None else seed, t.lr, t.beta1, t.beta2, t.eps, t.shuffle)

    def config_hash(self) -> str:
        # the output location does not affect results, so it is left out
        return config_hash(self.model_dump(mode="json", exclude={"out_dir"}))


def config_hash(obj: Mapping) -> str:
    """First 12 hex digits of sha256 over canonical JSON."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def load_run_config(path: str | Path, overrides: Mapping | None = None) -> RunConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.model_validate(raw)


def atomic_write(path: str | Path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_metadata(text: str) -> dict[str, str]:
    """``# key: value`` header lines at the top of a CSV."""
    out = {}
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        key, sep, value = line[1:].partition(":")
        if sep:
            out[key.strip()] = value.strip()
    return out

"""Mini-batch Adam training, deep ensembles and panel-level prediction."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..autodiff import AdamState, Tape, adam_step, backward
from ..curve_data import WindowArrays, WindowSample, YieldPanel, forecast_windows
from ..errors import DataError, NumericalError
from ..forecasts import ForecastTable, average_tables
from ..rng import named_rng
from .config import DeepYCConfig
from .network import DeepYCModel, check_grid, init_model


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass(frozen=True, eq=False)
class TrainResult:
    """``history[k]`` is the eval-mode mean loss per instance after epoch k+1;
    ``initial_loss`` is the same quantity before training; ``batch_history``
    holds the mean train-mode (dropout on) batch loss of each epoch."""

    model: DeepYCModel
    history: list[float]
    initial_loss: float
    batch_history: list[float] = field(default_factory=list)


def _eval_loss(model: DeepYCModel, data: WindowArrays) -> float:
    return model.loss_from_leaves(model.params.leaves(), data, "eval").item() / len(data)


def train(model: DeepYCModel, windows: Sequence[WindowSample] | WindowArrays, spec: TrainSpec) -> TrainResult:
    data = model.arrays(windows)
    if len(data) == 0:
        raise DataError("no training windows")
    if data.targets is None:
        raise DataError("training windows need targets")
    params = model.params.copy()
    work = model.with_params(params)
    state = AdamState()
    shuffle_rng = named_rng(spec.seed, "shuffle")
    dropout_rng = named_rng(spec.seed, "dropout")
    n = len(data)
    initial = _eval_loss(work, data)
    history, batch_history = [], []
    for epoch in range(spec.epochs):
        order = shuffle_rng.permutation(n) if spec.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, spec.batch_size):
            batch = data.take(order[start : start + spec.batch_size])
            try:
                with Tape() as tape:
                    leaves = params.leaves()
                    loss = work.loss_from_leaves(leaves, batch, "train", dropout_rng)
                backward(loss, tape)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch + 1}, batch at {start}: {exc}") from None
            total += loss.item()
            adam_step(params, {k: t.grad for k, t in leaves.items()}, state, spec.lr, spec.beta1, spec.beta2, spec.eps)
        batch_history.append(total / n)
        history.append(_eval_loss(work, data))
    return TrainResult(work.with_params(params.copy()), history, initial, batch_history)


# --------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    members: tuple[DeepYCModel, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            if m.config != first.config or m.families != first.families or m.tenors != first.tenors:
                raise ValueError("ensemble members must share config, families and tenors")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def config(self) -> DeepYCConfig:
        return self.members[0].config

    @property
    def tenors(self) -> tuple[float, ...]:
        return self.members[0].tenors


def _train_member(args) -> TrainResult:
    config, families, tenors, data, spec, k = args
    seed = spec.seed + k
    model = init_model(config, families, tenors, seed)
    return train(model, data, replace(spec, seed=seed))


def train_ensemble(
    config: DeepYCConfig,
    families: Sequence[str],
    tenors: Sequence[float],
    windows: Sequence[WindowSample] | WindowArrays,
    spec: TrainSpec,
    n_members: int = 10,
    jobs: int = 1,
) -> tuple[EnsembleModel, list[TrainResult]]:
    """Member k is initialised and trained with seed ``spec.seed + k``."""
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    probe = init_model(config, families, tenors, spec.seed)
    data = probe.arrays(windows)
    tasks = [(config, tuple(families), tuple(tenors), data, spec, k) for k in range(n_members)]
    if jobs > 1 and n_members > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, n_members)) as pool:
            results = list(pool.map(_train_member, tasks))
    else:
        results = [_train_member(t) for t in tasks]
    return EnsembleModel(tuple(r.model for r in results)), results


# --------------------------------------------------------------------------
# prediction


def _model_name(model: DeepYCModel) -> str:
    c = model.config
    return f"YC_{c.variant}_g{c.gamma}"


def predict_windows(model: DeepYCModel, windows: Sequence[WindowSample], name: str | None = None) -> ForecastTable:
    data = model.arrays(windows)
    out = model.predict_arrays(data)
    return ForecastTable(
        name or _model_name(model),
        model.tenors,
        data.family_ids,
        data.as_of,
        out["lower"],
        out["central"],
        out["upper"],
        out.get("sd"),
    )


def predict(
    model: DeepYCModel | EnsembleModel,
    panel: YieldPanel,
    as_of: Sequence[str] | None = None,
    name: str | None = None,
) -> ForecastTable:
    """Eval-mode forecasts for every (family, as_of); ensembles average member triples."""
    members = model.members if isinstance(model, EnsembleModel) else (model,)
    first = members[0]
    check_grid(first, panel.grid.tenors)
    windows = forecast_windows(panel, first.config.L, as_of)
    tables = [predict_windows(m, windows, name) for m in members]
    if len(tables) == 1:
        return tables[0]
    return average_tables(tables, model=name or f"{_model_name(first)}_ensemble")


def de_predict(model: DeepYCModel, panel: YieldPanel, as_of: Sequence[str] | None = None, name: str | None = None) -> ForecastTable:
    """Mean, Gaussian interval and per-tenor sd from a log-variance model."""
    if model.config.variant != "ATT_DE":
        raise ValueError(f"de_predict needs an ATT_DE model, got {model.config.variant}")
    return predict(model, panel, as_of, name)

"""Re-use a trained Q/K/V trunk on a curve set with a different tenor grid.

A linear adapter maps each new-grid history row onto the trunk's grid; the
embedding and output heads are rebuilt for the new families and tenors. Only
the adapter, embedding and heads are trained.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from ..autodiff import ParamStore
from ..curve_data import WindowArrays, WindowSample
from ..errors import DataError
from ..rng import named_rng
from .network import DeepYCModel, init_params, trunk_names
from .training import TrainResult, TrainSpec, train


@dataclass(frozen=True, eq=False)
class TransferResult:
    model: DeepYCModel
    train: TrainResult
    frozen: tuple[str, ...]
    fingerprint_before: str
    fingerprint_after: str


def transfer_model(
    source: DeepYCModel,
    tenors: Sequence[float],
    families: Sequence[str],
    seed: int,
    q_I: int | None = None,
) -> DeepYCModel:
    """Fresh adapter/embedding/heads around the frozen source trunk."""
    sc = source.config
    config = replace(
        sc,
        M=len(tenors),
        n_families=len(families),
        q_I=sc.q_I if q_I is None else q_I,
        trunk_M=sc.trunk_width,
    )
    fresh = init_params(config, named_rng(seed, "init"))
    frozen = trunk_names(sc)
    params = ParamStore()
    for name in fresh.names():
        if name in frozen:
            params.add(name, source.params[name], trainable=False)
        else:
            params.add(name, fresh[name], trainable=True)
    return DeepYCModel(config, params, tuple(families), tuple(float(t) for t in tenors))


def transfer(
    source: DeepYCModel,
    tenors: Sequence[float],
    families: Sequence[str],
    windows: Sequence[WindowSample] | WindowArrays,
    spec: TrainSpec,
    q_I: int | None = None,
) -> TransferResult:
    model = transfer_model(source, tenors, families, spec.seed, q_I)
    data = model.arrays(windows)
    if data.histories.shape[-1] != len(tenors):
        raise DataError(f"windows have {data.histories.shape[-1]} tenors, adapter expects {len(tenors)}")
    frozen = trunk_names(source.config)
    before = source.params.fingerprint(frozen)
    result = train(model, data, spec)
    after = result.model.params.fingerprint(frozen)
    if after != before:
        raise RuntimeError("frozen trunk parameters changed during transfer training")
    return TransferResult(result.model, result, frozen, before, after)

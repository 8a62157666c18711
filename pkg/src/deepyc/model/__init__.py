from .config import DeepYCConfig
from .network import DeepYCModel, ForecastTriple, check_grid, init_model, init_params, param_shapes, trunk_names
from .training import (
    EnsembleModel,
    TrainResult,
    TrainSpec,
    de_predict,
    predict,
    predict_windows,
    train,
    train_ensemble,
)
from .transfer import TransferResult, transfer, transfer_model

__all__ = [
    "DeepYCConfig",
    "DeepYCModel",
    "EnsembleModel",
    "ForecastTriple",
    "TrainResult",
    "TrainSpec",
    "TransferResult",
    "check_grid",
    "de_predict",
    "init_model",
    "init_params",
    "param_shapes",
    "predict",
    "predict_windows",
    "train",
    "train_ensemble",
    "transfer",
    "transfer_model",
    "trunk_names",
]

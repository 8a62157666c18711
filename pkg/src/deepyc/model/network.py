"""Attention network with a central head and two positive-gap bound heads.

Per instance the pipeline is

    Q, K, V = phi(w0 + W h_l) for every history row h_l (time-distributed)
    X       = softmax(Q K^T / sqrt(q_A)) V          (X = V for the CONV variant)
    x       = flatten(X);  xd = dropout(x)
    e       = embedding of the curve family
    central = g(b_c + U_c e + W_c xd)
    lower   = central - phi_plus(b_lb + U_lb e + W_lb xd)
    upper   = central + phi_plus(b_ub + U_ub e + W_ub xd)

so lower < central < upper for every input. The ATT_DE variant replaces the
two gap heads by a single log-variance head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..autodiff import (
    ParamStore,
    Tensor,
    activation,
    add,
    attention,
    central_loss,
    dense,
    dropout,
    embed,
    flatten_last,
    gaussian_nll,
    linear,
    pinball_loss,
    sub,
)
from ..curve_data import WindowArrays, WindowSample, stack_windows
from ..errors import DataError, SchemaMismatchError
from ..rng import named_rng
from ..stats import two_sided_z
from .config import DeepYCConfig

CHECKPOINT_FORMAT = "deepyc-model"
CHECKPOINT_VERSION = 1

TRUNK_PARAMS = ("W_Q", "w0_Q", "W_K", "w0_K", "W_V", "w0_V")


def head_names(config: DeepYCConfig) -> tuple[str, ...]:
    return ("c", "lv") if config.variant == "ATT_DE" else ("c", "lb", "ub")


def trunk_names(config: DeepYCConfig) -> tuple[str, ...]:
    if config.variant == "CONV":
        return ("W_V", "w0_V")
    return TRUNK_PARAMS


def param_shapes(config: DeepYCConfig) -> dict[str, tuple[int, ...]]:
    c = config
    shapes: dict[str, tuple[int, ...]] = {"embed_I": (c.n_families, c.q_I)}
    if c.has_adapter:
        shapes["W_Z"] = (c.trunk_width, c.M)
        shapes["w0_Z"] = (c.trunk_width,)
    for n in trunk_names(c):
        shapes[n] = (c.q_A, c.trunk_width) if n.startswith("W") else (c.q_A,)
    for h in head_names(c):
        shapes[f"b_{h}"] = (c.M,)
        shapes[f"U_{h}"] = (c.M, c.q_I)
        shapes[f"W_{h}"] = (c.M, c.feature_width)
    return shapes


def glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: DeepYCConfig, rng: np.random.Generator) -> ParamStore:
    """Glorot-uniform weights, zero biases, N(0, 0.1^2) embeddings."""
    store = ParamStore()
    for name, shape in param_shapes(config).items():
        if name == "embed_I":
            value = rng.normal(0.0, 0.1, size=shape)
        elif len(shape) == 2:
            value = glorot(rng, shape)
        else:
            value = np.zeros(shape)
        store.add(name, value)
    return store


@dataclass(frozen=True, eq=False)
class ForecastTriple:
    lower: np.ndarray
    central: np.ndarray
    upper: np.ndarray
    sd: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class DeepYCModel:
    config: DeepYCConfig
    params: ParamStore
    families: tuple[str, ...]
    tenors: tuple[float, ...]

    def __post_init__(self):
        if len(self.families) != self.config.n_families:
            raise ValueError(f"{len(self.families)} family labels for n_families = {self.config.n_families}")
        if len(set(self.families)) != len(self.families):
            raise ValueError("family labels must be unique")
        if len(self.tenors) != self.config.M:
            raise ValueError(f"{len(self.tenors)} tenors for M = {self.config.M}")
        expected = param_shapes(self.config)
        if self.params.shapes() != expected:
            raise ValueError(f"parameter shapes {self.params.shapes()} do not match config {expected}")

    @property
    def family_index(self) -> dict[str, int]:
        return {f: i for i, f in enumerate(self.families)}

    def with_params(self, params: ParamStore) -> "DeepYCModel":
        return DeepYCModel(self.config, params, self.families, self.tenors)

    # ------------------------------------------------------------------
    # array-level pipeline

    def check_histories(self, histories: np.ndarray) -> None:
        want = (self.config.L + 1, self.config.M)
        if histories.ndim != 3 or histories.shape[1:] != want:
            raise DataError(f"history windows have shape {histories.shape[1:]}, model expects {want}")

    def features(self, leaves: Mapping[str, Tensor], histories: np.ndarray) -> Tensor:
        """Flattened attention output, (B, (L+1) q_A), before dropout."""
        c = self.config
        self.check_histories(histories)
        H = Tensor(histories)
        if c.has_adapter:
            H = dense(H, leaves["W_Z"], leaves["w0_Z"], "linear")
        V = dense(H, leaves["W_V"], leaves["w0_V"], c.phi_qkv)
        if c.variant == "CONV":
            X = V
        else:
            Q = dense(H, leaves["W_Q"], leaves["w0_Q"], c.phi_qkv)
            K = dense(H, leaves["W_K"], leaves["w0_K"], c.phi_qkv)
            X = attention(Q, K, V)
        return flatten_last(X, 2)

    def outputs(
        self,
        leaves: Mapping[str, Tensor],
        histories: np.ndarray,
        family_index: np.ndarray,
        mode: str = "eval",
        rng: np.random.Generator | None = None,
    ) -> dict[str, Tensor]:
        c = self.config
        x = self.features(leaves, histories)
        xd = dropout(x, c.dropout_keep, mode, rng)
        e = embed(family_index, leaves["embed_I"])

        def head(h: str) -> Tensor:
            return add(linear(e, leaves[f"U_{h}"]), linear(xd, leaves[f"W_{h}"], leaves[f"b_{h}"]))

        central = activation(head("c"), c.g)
        if c.variant == "ATT_DE":
            return {"central": central, "log_var": head("lv")}
        lower = sub(central, activation(head("lb"), c.phi_plus))
        upper = add(central, activation(head("ub"), c.phi_plus))
        return {"lower": lower, "central": central, "upper": upper}

    def loss_from_leaves(
        self,
        leaves: Mapping[str, Tensor],
        batch: WindowArrays,
        mode: str = "eval",
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Loss summed over instances and tenors."""
        if len(batch) == 0:
            raise DataError("empty batch")
        if batch.targets is None:
            raise DataError("loss needs windows with targets")
        out = self.outputs(leaves, batch.histories, batch.family_index, mode, rng)
        y = Tensor(batch.targets)
        c = self.config
        if c.variant == "ATT_DE":
            return gaussian_nll(y, out["central"], out["log_var"], reduction="sum")
        lo, hi = c.levels
        return add(
            add(
                pinball_loss(sub(y, out["lower"]), lo, reduction="sum"),
                central_loss(sub(y, out["central"]), c.gamma, reduction="sum"),
            ),
            pinball_loss(sub(y, out["upper"]), hi, reduction="sum"),
        )

    def kink_residuals(self, leaves: Mapping[str, Tensor], batch: WindowArrays, mode="eval", rng=None) -> np.ndarray:
        """Residuals entering the non-smooth loss terms (empty for smooth losses)."""
        if self.config.variant == "ATT_DE":
            return np.empty(0)
        out = self.outputs(leaves, batch.histories, batch.family_index, mode, rng)
        parts = [batch.targets - out["lower"].data, batch.targets - out["upper"].data]
        if self.config.gamma == 1:
            parts.append(batch.targets - out["central"].data)
        return np.concatenate([p.ravel() for p in parts])

    # ------------------------------------------------------------------
    # sample-level API

    def arrays(self, samples: Sequence[WindowSample] | WindowArrays) -> WindowArrays:
        if isinstance(samples, WindowArrays):
            return samples
        return stack_windows(samples, self.family_index)

    def predict_arrays(self, batch: WindowArrays) -> dict[str, np.ndarray]:
        """Eval-mode outputs as arrays; DE models also get ``sd``, ``lower``, ``upper``."""
        out = self.outputs(self.params.leaves(), batch.histories, batch.family_index, "eval")
        res = {k: v.data for k, v in out.items()}
        if self.config.variant == "ATT_DE":
            z = two_sided_z(self.config.alpha)
            sd = np.exp(res.pop("log_var") / 2.0)
            res.update(sd=sd, lower=res["central"] - z * sd, upper=res["central"] + z * sd)
        return res

    def forward(self, sample: WindowSample, mode: str = "eval", rng: np.random.Generator | None = None) -> ForecastTriple:
        batch = self.arrays([sample])
        out = self.outputs(self.params.leaves(), batch.histories, batch.family_index, mode, rng)
        if self.config.variant == "ATT_DE":
            z = two_sided_z(self.config.alpha)
            mu = out["central"].data[0]
            sd = np.exp(out["log_var"].data[0] / 2.0)
            return ForecastTriple(mu - z * sd, mu, mu + z * sd, sd)
        return ForecastTriple(out["lower"].data[0], out["central"].data[0], out["upper"].data[0])

    def forward_conv(self, sample: WindowSample, mode: str = "eval", rng: np.random.Generator | None = None) -> ForecastTriple:
        if self.config.variant != "CONV":
            raise ValueError(f"forward_conv needs a CONV model, got {self.config.variant}")
        return self.forward(sample, mode, rng)

    def loss(self, samples: Sequence[WindowSample] | WindowArrays, mode: str = "eval", rng=None) -> Tensor:
        return self.loss_from_leaves(self.params.leaves(), self.arrays(samples), mode, rng)

    # ------------------------------------------------------------------
    # checkpoints

    def to_dict(self, metadata: Mapping[str, str] | None = None) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "metadata": dict(metadata or {}),
            "config": self.config.to_dict(),
            "families": list(self.families),
            "tenors": list(self.tenors),
            "params": self.params.to_dict(),
        }

    def dumps(self, metadata: Mapping[str, str] | None = None) -> str:
        return json.dumps(self.to_dict(metadata), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeepYCModel":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"not a model checkpoint (format={d.get('format')!r})")
        if d.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {d.get('version')!r}")
        return cls(
            DeepYCConfig.from_dict(d["config"]),
            ParamStore.from_dict(d["params"]),
            tuple(d["families"]),
            tuple(float(t) for t in d["tenors"]),
        )

    @classmethod
    def loads(cls, text: str) -> "DeepYCModel":
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"malformed checkpoint: {exc}") from None


def init_model(config: DeepYCConfig, families: Sequence[str], tenors: Sequence[float], seed: int) -> DeepYCModel:
    params = init_params(config, named_rng(seed, "init"))
    return DeepYCModel(config, params, tuple(families), tuple(float(t) for t in tenors))


def check_grid(model: DeepYCModel, tenors: Sequence[float], what: str = "data") -> None:
    """Raise SchemaMismatchError naming both grids when tenor sets differ."""
    tenors = tuple(float(t) for t in tenors)
    if tenors != model.tenors:
        raise SchemaMismatchError(
            f"tenor grid mismatch: checkpoint has {list(model.tenors)}, {what} has {list(tenors)}"
        )

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

VARIANTS = ("ATT", "CONV", "ATT_DE")
MONOTONE = ("linear", "tanh", "sigmoid", "softplus")
POSITIVE = ("softplus", "sigmoid")


@dataclass(frozen=True)
class DeepYCConfig:
    """Architecture hyperparameters.

    ``trunk_M`` is the curve width seen by the Q/K/V layers. It equals ``M``
    unless an input adapter re-grids a different tenor set onto a trained trunk.
    """

    M: int
    n_families: int
    L: int = 9
    q_I: int = 2
    q_A: int = 8
    dropout_keep: float = 0.5
    alpha: float = 0.95
    gamma: int = 1
    variant: str = "ATT"
    phi_qkv: str = "tanh"
    g: str = "linear"
    phi_plus: str = "softplus"
    trunk_M: int | None = None

    def __post_init__(self):
        for name in ("M", "n_families", "q_I", "q_A"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.L < 0:
            raise ValueError(f"L must be >= 0, got {self.L}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError(f"dropout_keep must lie in (0, 1], got {self.dropout_keep}")
        if self.gamma not in (1, 2):
            raise ValueError(f"gamma must be 1 or 2, got {self.gamma}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.phi_qkv not in MONOTONE + ("relu",):
            raise ValueError(f"unsupported phi_qkv {self.phi_qkv!r}")
        if self.g not in MONOTONE:
            raise ValueError(f"g must be strictly monotone, one of {MONOTONE}")
        if self.phi_plus not in POSITIVE:
            raise ValueError(f"phi_plus must be strictly positive, one of {POSITIVE}")
        if self.trunk_M is not None and self.trunk_M < 1:
            raise ValueError("trunk_M must be >= 1")

    @property
    def trunk_width(self) -> int:
        return self.M if self.trunk_M is None else self.trunk_M

    @property
    def has_adapter(self) -> bool:
        return self.trunk_M is not None

    @property
    def feature_width(self) -> int:
        return (self.L + 1) * self.q_A

    @property
    def levels(self) -> tuple[float, float]:
        """Pinball levels of the lower and upper bound."""
        return (1.0 - self.alpha) / 2.0, (1.0 + self.alpha) / 2.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DeepYCConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

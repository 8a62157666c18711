"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .params import ParamStore
from .tensor import Tape, Tensor, backward


@dataclass(frozen=True)
class GradEntry:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float
    excluded: bool = False


@dataclass
class GradCheckReport:
    tol: float
    entries: list[GradEntry] = field(default_factory=list)

    @property
    def checked(self) -> list[GradEntry]:
        return [e for e in self.entries if not e.excluded]

    @property
    def failures(self) -> list[GradEntry]:
        return [e for e in self.checked if not e.rel_error <= self.tol]

    @property
    def passed(self) -> bool:
        return bool(self.checked) and not self.failures

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.checked), default=0.0)

    def summary(self) -> str:
        n_ex = len(self.entries) - len(self.checked)
        head = f"grad check: {len(self.checked)} checked, {n_ex} excluded, max rel error {self.max_rel_error:.3e} (tol {self.tol:g})"
        if not self.failures:
            return head + ": PASS"
        worst = sorted(self.failures, key=lambda e: -e.rel_error)[:5]
        lines = [f"  {e.name}{list(e.index)}: analytic {e.analytic:.6e} numeric {e.numeric:.6e}" for e in worst]
        return "\n".join([head + ": FAIL"] + lines)


def _leaves(values: Mapping[str, np.ndarray], trainable: Mapping[str, bool], grad: bool) -> dict[str, Tensor]:
    return {n: Tensor(v, requires_grad=grad and trainable[n], name=n) for n, v in values.items()}


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: ParamStore,
    h: float = 1e-5,
    tol: float = 1e-4,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
    kinks: Callable[[dict[str, Tensor]], np.ndarray] | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare AD gradients of ``f(leaves)`` with (f(θ+h) - f(θ-h)) / 2h.

    ``n_samples`` random trainable coordinates are checked (all when None).
    ``kinks(leaves)`` returns the residuals entering non-differentiable terms;
    a coordinate is excluded when the ±h perturbation moves any of them across
    zero. Relative error is |a - n| / max(|a|, |n|, floor * max(1, |f|)):
    the roundoff in a central difference grows with |f|, so the floor does too.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    values = {n: params[n].copy() for n in params.names()}
    trainable = {n: params.trainable(n) for n in params.names()}
    with Tape() as tape:
        leaves = _leaves(values, trainable, grad=True)
        loss = f(leaves)
    backward(loss, tape)
    floor_abs = floor * max(1.0, abs(loss.item()))
    grads = {n: (t.grad if t.grad is not None else np.zeros_like(t.data)) for n, t in leaves.items()}

    coords = [(n, idx) for n in params.trainable_names() for idx in np.ndindex(values[n].shape)]
    if n_samples is not None and n_samples < len(coords):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    report = GradCheckReport(tol)
    for name, idx in coords:
        base = values[name][idx]
        evals = []
        signs = []
        for step in (h, -h):
            values[name][idx] = base + step
            lv = _leaves(values, trainable, grad=False)
            evals.append(f(lv).item())
            if kinks is not None:
                signs.append(np.sign(kinks(lv)))
        values[name][idx] = base
        numeric = (evals[0] - evals[1]) / (2.0 * h)
        analytic = float(grads[name][idx])
        excluded = bool(signs) and not (np.array_equal(signs[0], signs[1]) and np.all(signs[0] != 0))
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor_abs)
        report.entries.append(GradEntry(name, tuple(int(i) for i in idx), analytic, numeric, rel, excluded))
    return report

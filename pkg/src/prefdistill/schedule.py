"""Discrete variance-preserving diffusion schedule.

A single cumulative coefficient ``alpha_bar[t]`` is used everywhere::

    x_t = sqrt(alpha_bar[t]) * x_0 + sqrt(1 - alpha_bar[t]) * eps

so noising and the one-step clean prediction are exact inverses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError, ShapeError


class WeightKind(str, Enum):
    ONE = "one"
    ONE_MINUS_ALPHA_BAR = "one_minus_alpha_bar"
    SIGMA_SQUARED = "sigma_squared"


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray
    weight_kind: WeightKind = WeightKind.ONE_MINUS_ALPHA_BAR

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.T + 1,):
            raise ParameterError(f"alpha_bar needs T+1={self.T + 1} entries, got {ab.shape}")
        if ab[0] != 1.0:
            raise ParameterError("alpha_bar[0] must be exactly 1")
        if not np.all(np.diff(ab) < 0):
            raise ParameterError("alpha_bar must be strictly decreasing")
        if not ab[-1] > 0.0:
            raise ParameterError("alpha_bar must stay strictly positive")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "weight_kind", WeightKind(self.weight_kind))

    @property
    def reaches_noise(self) -> bool:
        """True when the final step is (almost) pure noise: alpha_bar[T] < 0.01."""
        return bool(self.alpha_bar[-1] < 0.01)

    def require_noise_endpoint(self) -> "NoiseSchedule":
        if not self.reaches_noise:
            raise ParameterError(f"alpha_bar[T]={self.alpha_bar[-1]:.3g} must lie in (0, 0.01)")
        return self

    def check_t(self, t: int, allow_zero: bool = False) -> int:
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.T:
            raise ParameterError(f"timestep {t} outside [{lo}, {self.T}]")
        return int(t)

    def signal(self, t: int) -> float:
        """sqrt(alpha_bar[t])."""
        return float(np.sqrt(self.alpha_bar[t]))

    def sigma(self, t: int) -> float:
        """sqrt(1 - alpha_bar[t])."""
        return float(np.sqrt(1.0 - self.alpha_bar[t]))


def make_linear_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02,
                         weight_kind: WeightKind | str = WeightKind.ONE_MINUS_ALPHA_BAR) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise ParameterError(f"T must be an integer >= 2, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ParameterError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, int(T))
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(int(T), alpha_bar, WeightKind(weight_kind))


def forward_diffuse(x0, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    # t=0 is the clean endpoint (alpha_bar=1) and is accepted here
    t = sched.check_t(t, allow_zero=True)
    return sched.signal(t) * x0 + sched.sigma(t) * eps


def weight(t: int, sched: NoiseSchedule) -> float:
    t = sched.check_t(t)
    if sched.weight_kind is WeightKind.ONE:
        return 1.0
    # sigma_t^2 == 1 - alpha_bar_t under the unified convention
    return float(1.0 - sched.alpha_bar[t])

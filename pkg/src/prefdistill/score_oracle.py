"""Closed-form noise prediction for a labeled isotropic Gaussian mixture.

The mixture plays the role of the frozen denoiser. Diffusing a component
N(mu, s^2 I) to step t gives N(sqrt(ab) mu, (ab s^2 + 1 - ab) I), so the
marginal score and therefore the optimal noise prediction

    eps_hat(x_t) = -sqrt(1 - ab) * grad log p_t(x_t)

are available exactly. Conditioning on a label keeps only the components
carrying that label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import LabelError, ParameterError, ShapeError
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class Component:
    weight: float
    mean: np.ndarray
    stdev: float
    label: int = 0


class GaussianMixture:
    """Immutable mixture of isotropic Gaussians, each carrying an integer label."""

    def __init__(self, components: Sequence[Component]):
        if not components:
            raise ParameterError("mixture needs at least one component")
        weights = np.array([c.weight for c in components], dtype=np.float64)
        if np.any(weights <= 0):
            raise ParameterError("component weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError(f"component weights sum to {weights.sum()!r}, not 1")
        vecs = [np.asarray(c.mean, dtype=np.float64).ravel() for c in components]
        if len({v.size for v in vecs}) != 1:
            raise ShapeError("all component means must share one dimension")
        means = np.array(vecs)
        if means.shape[1] == 0:
            raise ShapeError("component means must be nonempty")
        stdevs = np.array([c.stdev for c in components], dtype=np.float64)
        if np.any(stdevs < 0) or not np.all(np.isfinite(stdevs)):
            raise ParameterError("component stdevs must be finite and nonnegative")
        self.weights = weights
        self.means = means
        self.stdevs = stdevs
        self.labels = np.array([int(c.label) for c in components])
        for arr in (self.weights, self.means, self.stdevs, self.labels):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, weights, means, stdevs, labels=None) -> "GaussianMixture":
        weights = np.asarray(weights, dtype=np.float64)
        if labels is None:
            labels = [0] * len(weights)
        return cls([Component(float(w), np.asarray(m, dtype=np.float64), float(s), int(l))
                    for w, m, s, l in zip(weights, means, stdevs, labels)])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __len__(self):
        return len(self.weights)

    def select(self, label: Optional[int]) -> np.ndarray:
        """Indices of components matching ``label`` (all when unconditional)."""
        if label is None:
            return np.arange(len(self))
        idx = np.flatnonzero(self.labels == label)
        if idx.size == 0:
            raise LabelError(f"no mixture component carries label {label!r}")
        return idx


@dataclass(frozen=True)
class CfgSpec:
    scale: float = 1.0
    label: Optional[int] = None

    def __post_init__(self):
        if not np.isfinite(self.scale):
            raise ParameterError(f"guidance scale must be finite, got {self.scale}")


def diffused_density_params(gmm: GaussianMixture, t: int, sched: NoiseSchedule,
                            label: Optional[int] = None):
    """Return ``(log_weights, means_t, variances_t)`` of the marginal at step ``t``.

    Weights are renormalised over the label-selected subset.
    """
    idx = gmm.select(label)
    ab = float(sched.alpha_bar[sched.check_t(t, allow_zero=True)])
    w = gmm.weights[idx]
    log_w = np.log(w) - np.log(w.sum())
    means_t = np.sqrt(ab) * gmm.means[idx]
    var_t = ab * gmm.stdevs[idx] ** 2 + (1.0 - ab)
    return log_w, means_t, var_t


def _logsumexp(a):
    m = a.max()
    return m + np.log(np.exp(a - m).sum())


def _component_logpdf(x, means, var):
    d = means.shape[1]
    sq = np.sum((x[None, :] - means) ** 2, axis=1)
    return -0.5 * sq / var - 0.5 * d * np.log(2.0 * np.pi * var)


def log_density(x, t: int, gmm: GaussianMixture, sched: NoiseSchedule,
                label: Optional[int] = None) -> float:
    """log p_t(x | label); ``t=0`` gives the clean data density."""
    x = _check_x(x, gmm)
    log_w, means, var = diffused_density_params(gmm, t, sched, label)
    if np.any(var <= 0):
        raise ParameterError("density undefined for zero-variance components at t=0")
    return float(_logsumexp(log_w + _component_logpdf(x, means, var)))


def _check_x(x, gmm):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (gmm.dim,):
        raise ShapeError(f"expected a vector of dimension {gmm.dim}, got shape {x.shape}")
    return x


def epsilon_pred(x_t, t: int, gmm: GaussianMixture, sched: NoiseSchedule,
                 label: Optional[int] = None) -> np.ndarray:
    x_t = _check_x(x_t, gmm)
    t = sched.check_t(t)
    log_w, means, var = diffused_density_params(gmm, t, sched, label)
    logits = log_w + _component_logpdf(x_t, means, var)
    resp = np.exp(logits - logits.max())
    resp /= resp.sum()
    score = np.sum(resp[:, None] * (means - x_t[None, :]) / var[:, None], axis=0)
    return -sched.sigma(t) * score


def cfg_epsilon(x_t, t: int, gmm: GaussianMixture, sched: NoiseSchedule,
                cfg: CfgSpec) -> np.ndarray:
    """Classifier-free guided prediction ``uncond + s * (cond - uncond)``.

    Without a label the conditional and unconditional predictions coincide,
    so the result is the unconditional prediction for every scale.
    """
    uncond = epsilon_pred(x_t, t, gmm, sched, None)
    if cfg.label is None:
        return uncond
    cond = epsilon_pred(x_t, t, gmm, sched, cfg.label)
    # exact endpoints, no rounding from the affine combination
    if cfg.scale == 1.0:
        return cond
    if cfg.scale == 0.0:
        return uncond
    return uncond + cfg.scale * (cond - uncond)


def predict_x0(x_t, t: int, eps_hat, sched: NoiseSchedule) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"x_t shape {x_t.shape} != eps_hat shape {eps_hat.shape}")
    t = sched.check_t(t, allow_zero=True)
    return (x_t - sched.sigma(t) * eps_hat) / sched.signal(t)

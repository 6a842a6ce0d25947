"""Preference-guided score distillation loop.

Each iteration renders one randomly chosen view, noises it twice, predicts
the clean image for both noisy copies with one denoising step, ranks the two
predictions and turns the verdict into an image-space gradient:

* score gap below ``tau``: ``w(t) * eps_guided(x_win)`` (pull the winner only)
* otherwise: ``w(t) * ((eps_guided(x_win) - eps_win) - (eps_1(x_lose) - eps_lose))``

where ``eps_guided`` uses the configured guidance scale and ``eps_1`` uses
guidance scale 1. The image gradient is pulled back to the parameters and a
gradient-descent step is taken. ``mode="sds"`` replaces all of this with the
plain score-distillation gradient on a single noisy copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AnnotationError, ParameterError, ShapeError
from .ranker import PairwiseVerdict, RewardSpec, compare
from .representation import IDENTITY, Representation, ViewSpec
from .schedule import NoiseSchedule, forward_diffuse, weight
from .score_oracle import CfgSpec, GaussianMixture, cfg_epsilon, predict_x0

PULL_ONLY = "pull_only"
PUSH_PULL = "push_pull"
SKIPPED = "skipped"


@dataclass
class RunConfig:
    tau: float = 0.001
    cfg_scale: float = 1.0
    condition_label: Optional[int] = None
    pair_strategy: str = "different_noises"
    timestep_gap: int = 0
    steps: int = 1000
    learning_rate: float = 0.01
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    t_min: int = 1
    t_max: Optional[int] = None
    seed: int = 0
    views: Sequence[ViewSpec] = (IDENTITY,)
    mode: str = "dreamdpo"

    def validate(self, sched: NoiseSchedule) -> None:
        if not (self.tau >= 0):
            raise ParameterError(f"tau must be >= 0 (or inf), got {self.tau}")
        if self.pair_strategy not in ("different_noises", "different_timesteps"):
            raise ParameterError(f"unknown pair strategy {self.pair_strategy!r}")
        if self.timestep_gap < 0:
            raise ParameterError("timestep_gap must be >= 0")
        if self.steps < 0:
            raise ParameterError("steps must be >= 0")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ParameterError("learning_rate must be finite and >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.mode not in ("dreamdpo", "sds"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        t_max = self.resolved_t_max(sched)
        if not 1 <= self.t_min <= t_max <= sched.T:
            raise ParameterError(f"need 1 <= t_min <= t_max <= {sched.T}, "
                                 f"got t_min={self.t_min}, t_max={t_max}")
        if self.t_min + self.timestep_gap > t_max:
            raise ParameterError("timestep_gap leaves no room inside [t_min, t_max]")
        if len(self.views) == 0:
            raise ParameterError("need at least one view")
        if not math.isfinite(self.cfg_scale):
            raise ParameterError("cfg_scale must be finite")

    def resolved_t_max(self, sched: NoiseSchedule) -> int:
        return sched.T if self.t_max is None else self.t_max

    def sample_range(self, sched: NoiseSchedule) -> tuple[int, int]:
        """Inclusive range for the (smaller) pair timestep.

        Room for ``timestep_gap`` is reserved under either strategy so that
        runs differing only in strategy draw identical timesteps.
        """
        return self.t_min, self.resolved_t_max(sched) - self.timestep_gap

    @property
    def guided(self) -> CfgSpec:
        return CfgSpec(self.cfg_scale, self.condition_label)

    @property
    def unit_guided(self) -> CfgSpec:
        return CfgSpec(1.0, self.condition_label)


@dataclass
class PairSample:
    t: int
    t2: int
    eps1: np.ndarray
    eps2: np.ndarray
    xt1: np.ndarray
    xt2: np.ndarray
    eps_hat1: Optional[np.ndarray] = None
    eps_hat2: Optional[np.ndarray] = None
    x0hat1: Optional[np.ndarray] = None
    x0hat2: Optional[np.ndarray] = None

    def member(self, index: int):
        """(x_t, eps, t, eps_hat) of pair member 1 or 2."""
        if index == 1:
            return self.xt1, self.eps1, self.t, self.eps_hat1
        return self.xt2, self.eps2, self.t2, self.eps_hat2


@dataclass
class IterationTrace:
    iteration: int
    t: int
    reward_win: Optional[float]
    reward_lose: Optional[float]
    s_gap: Optional[float]
    branch: Optional[str]
    gradient_norm: float
    metric_avg_reward: Optional[float] = None
    view_index: int = 0


def construct_pair(x0, rng: np.random.Generator, t: int, strategy: str, sched: NoiseSchedule,
                   gap: int = 0, t_range: Optional[tuple[int, int]] = None) -> PairSample:
    """Noise one render twice.

    Two standard-normal vectors are always drawn so the random stream does
    not depend on the strategy. ``different_timesteps`` reuses the first one
    at ``t`` and ``t + gap``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    lo, hi = t_range if t_range is not None else (1, sched.T)
    if strategy == "different_noises":
        gap = 0
    elif strategy != "different_timesteps":
        raise ParameterError(f"unknown pair strategy {strategy!r}")
    if not (lo <= t and t + gap <= hi and 1 <= t and t + gap <= sched.T):
        raise ParameterError(f"timestep pair ({t}, {t + gap}) outside [{lo}, {hi}]")
    eps1 = rng.standard_normal(x0.size)
    eps2 = rng.standard_normal(x0.size)
    if strategy == "different_timesteps":
        eps2 = eps1
    return PairSample(t=t, t2=t + gap, eps1=eps1, eps2=eps2,
                      xt1=forward_diffuse(x0, eps1, t, sched),
                      xt2=forward_diffuse(x0, eps2, t + gap, sched))


def predict_pair(pair: PairSample, cfg: CfgSpec, gmm: GaussianMixture,
                 sched: NoiseSchedule) -> PairSample:
    """Fill in the guided noise predictions and one-step clean estimates."""
    pair.eps_hat1 = cfg_epsilon(pair.xt1, pair.t, gmm, sched, cfg)
    pair.eps_hat2 = cfg_epsilon(pair.xt2, pair.t2, gmm, sched, cfg)
    pair.x0hat1 = predict_x0(pair.xt1, pair.t, pair.eps_hat1, sched)
    pair.x0hat2 = predict_x0(pair.xt2, pair.t2, pair.eps_hat2, sched)
    return pair


def dreamdpo_gradient(pair: PairSample, verdict: PairwiseVerdict, config: RunConfig,
                      gmm: GaussianMixture, sched: NoiseSchedule) -> np.ndarray:
    xt_w, eps_w, t_w, eps_hat_w = pair.member(verdict.win_index)
    xt_l, eps_l, t_l, _ = pair.member(verdict.lose_index)
    if eps_hat_w is None:
        eps_hat_w = cfg_epsilon(xt_w, t_w, gmm, sched, config.guided)
    w_win = weight(t_w, sched)
    if verdict.s_gap < config.tau:
        return w_win * eps_hat_w
    eps_hat_l = cfg_epsilon(xt_l, t_l, gmm, sched, config.unit_guided)
    delta_win = eps_hat_w - eps_w
    delta_lose = eps_hat_l - eps_l
    if t_w == t_l:
        return w_win * (delta_win - delta_lose)
    # timestep pairs: each member carries its own weight
    return w_win * delta_win - weight(t_l, sched) * delta_lose


def sds_gradient(x0, t: int, eps, config: RunConfig, gmm: GaussianMixture,
                 sched: NoiseSchedule) -> np.ndarray:
    x_t = forward_diffuse(x0, eps, t, sched)
    return weight(t, sched) * (cfg_epsilon(x_t, t, gmm, sched, config.guided) - eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def update(self, grad: np.ndarray) -> np.ndarray:
        return -self.lr * grad


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.k = 0

    def update(self, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.k += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.k)
        v_hat = self.v / (1 - self.beta2 ** self.k)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: RunConfig):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


class Runner:
    """Owns one representation, its RNG and optimizer state for a single run.

    ``metric`` is an optional callable ``rep -> float | None`` evaluated after
    every update and stored on the trace.
    """

    def __init__(self, config: RunConfig, rep: Representation, gmm: GaussianMixture,
                 sched: NoiseSchedule, spec: Optional[RewardSpec],
                 metric: Optional[Callable[[Representation], Optional[float]]] = None):
        config.validate(sched)
        if rep.image_dim != gmm.dim:
            raise ShapeError(f"render dimension {rep.image_dim} != mixture dimension {gmm.dim}")
        if config.mode == "dreamdpo" and spec is None:
            raise ParameterError("dreamdpo mode needs a reward spec")
        self.config = config
        self.rep = rep
        self.gmm = gmm
        self.sched = sched
        self.spec = spec
        self.metric = metric
        self.rng = np.random.default_rng(config.seed)
        self.optimizer = make_optimizer(config)
        self.iteration = 0
        self.last_pair = None
        self.last_image_grad = None

    def step(self) -> IterationTrace:
        cfg = self.config
        lo, hi = cfg.sample_range(self.sched)
        view_index = int(self.rng.integers(len(cfg.views)))
        view = cfg.views[view_index]
        t = int(self.rng.integers(lo, hi + 1))
        x0 = self.rep.render(view)
        pair = construct_pair(x0, self.rng, t, cfg.pair_strategy, self.sched,
                              gap=cfg.timestep_gap, t_range=(cfg.t_min, cfg.resolved_t_max(self.sched)))
        it = self.iteration
        self.iteration += 1
        self.last_pair = pair

        if cfg.mode == "sds":
            grad = sds_gradient(x0, t, pair.eps1, cfg, self.gmm, self.sched)
            return self._apply(it, t, view, view_index, grad, None, None)

        predict_pair(pair, cfg.guided, self.gmm, self.sched)
        try:
            verdict = compare(pair.x0hat1, pair.x0hat2, self.spec)
        except AnnotationError:
            self.last_image_grad = None
            return IterationTrace(it, t, None, None, None, SKIPPED, 0.0,
                                  self._metric(), view_index)
        grad = dreamdpo_gradient(pair, verdict, cfg, self.gmm, self.sched)
        branch = PULL_ONLY if verdict.s_gap < cfg.tau else PUSH_PULL
        return self._apply(it, t, view, view_index, grad, verdict, branch)

    def _apply(self, it, t, view, view_index, image_grad, verdict, branch):
        self.last_image_grad = image_grad
        param_grad = self.rep.pullback(view, image_grad)
        self.rep.set_params(self.rep.get_params() + self.optimizer.update(param_grad))
        return IterationTrace(
            it, t,
            None if verdict is None else verdict.reward_win,
            None if verdict is None else verdict.reward_lose,
            None if verdict is None else verdict.s_gap,
            branch, float(np.linalg.norm(param_grad)), self._metric(), view_index)

    def _metric(self):
        return None if self.metric is None else self.metric(self.rep)

    def run(self, steps: Optional[int] = None):
        n = self.config.steps if steps is None else steps
        traces = [self.step() for _ in range(n)]
        return self.rep, traces


def run(config: RunConfig, rep: Representation, gmm: GaussianMixture, sched: NoiseSchedule,
        spec: Optional[RewardSpec], metric=None):
    """Run ``config.steps`` iterations; returns ``(rep, traces)``. ``rep`` is updated in place."""
    return Runner(config, rep, gmm, sched, spec, metric).run()

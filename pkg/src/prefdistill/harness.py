"""Experiment configuration, orchestration and file outputs.

Config files are flat ``key = value`` text, one key per line, ``#`` starts a
comment. Vectors are whitespace or comma separated numbers; a token ``v*n``
repeats ``v`` n times. Mixture components and splats use indexed keys::

    component.plus  = 0.5 | 4 0 | 1.0 | 0      # weight | mean | stdev | label
    splat.a         = 7.5 7.5 0.7 0.8          # cx cy log_scale amp_0..amp_C-1

Every run directory receives ``trace.csv``, ``summary.csv``, ``params.txt``
and one 8-bit PNG per configured view.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import PULL_ONLY, PUSH_PULL, SKIPPED, IterationTrace, RunConfig, Runner
from .errors import AnnotationError, ConfigError, PrefDistillError
from .ranker import (LMM, LMM_ENDPOINT_ENV, Constant, Linear, MixtureLikelihood, Proximity,
                     RewardSpec, encode_png, make_transport, reward)
from .representation import IDENTITY, DirectVector, Grid, SplatField2D, ViewSpec
from .schedule import WeightKind, make_linear_schedule
from .score_oracle import Component, GaussianMixture

TRACE_COLUMNS = ["iter", "t", "reward_win", "reward_lose", "s_gap", "branch", "grad_norm",
                 "avg_reward"]

# full-size evaluation (metric_views = 120); the default of 8 keeps desk runs fast
FULL_METRIC_VIEWS = 120

# key -> (default, kind); a None default is filled in (or required) by config_from_entries
_KEYS = {
    "seed": (0, "int"),
    "steps": (1000, "int"),
    "learning_rate": (0.01, "float"),
    "optimizer": ("adam", ("sgd", "adam")),
    "adam_beta1": (0.9, "float"),
    "adam_beta2": (0.99, "float"),
    "adam_eps": (1e-8, "float"),
    "tau": (None, "tau"),
    "cfg_scale": (1.0, "float"),
    "condition_label": (None, "label"),
    "pair_strategy": ("different_noises", ("different_noises", "different_timesteps")),
    "timestep_gap": (0, "int"),
    "t_min": (1, "int"),
    "t_max": (None, "int"),
    "mode": ("dreamdpo", ("dreamdpo", "sds")),
    "schedule_steps": (1000, "int"),
    "beta_min": (1e-4, "float"),
    "beta_max": (0.02, "float"),
    "weight_kind": ("one_minus_alpha_bar", tuple(k.value for k in WeightKind)),
    "reward": (None, ("proximity", "linear", "mixture_likelihood", "constant", "lmm")),
    "reward_target": (None, "vector"),
    "reward_direction": (None, "vector"),
    "reward_label": (None, "label"),
    "reward_value": (0.0, "float"),
    "lmm_questions": (None, "questions"),
    "lmm_endpoint": (None, "str"),
    "representation": ("direct", ("direct", "splat")),
    "init": (None, "vector"),
    "init_noise": (0.0, "float"),
    "grid": (None, "ints"),
    "views": ([IDENTITY], "views"),
    "metric_views": (8, "int"),
    "metric_every": (1, "int"),
    "output_dir": ("out", "str"),
    "image_min": (-1.0, "float"),
    "image_max": (1.0, "float"),
}
_INDEXED = ("component.", "splat.")


@dataclass
class ExperimentConfig:
    run: RunConfig
    schedule_steps: int
    beta_min: float
    beta_max: float
    weight_kind: str
    components: list
    reward_kind: str
    reward_target: Optional[np.ndarray]
    reward_direction: Optional[np.ndarray]
    reward_label: Optional[int]
    reward_value: float
    lmm_questions: Optional[list]
    lmm_endpoint: Optional[str]
    representation: str
    init: Optional[np.ndarray]
    init_noise: float
    grid: Optional[Grid]
    splats: list
    metric_views: int
    metric_every: int
    output_dir: str
    image_range: tuple
    entries: dict = field(default_factory=dict, repr=False)

    def schedule(self):
        return make_linear_schedule(self.schedule_steps, self.beta_min, self.beta_max,
                                    self.weight_kind).require_noise_endpoint()

    def mixture(self) -> GaussianMixture:
        return GaussianMixture(self.components)

    def make_representation(self):
        if self.representation == "direct":
            rng = np.random.default_rng([self.run.seed, 1])
            theta = self.init + self.init_noise * rng.standard_normal(self.init.size)
            return DirectVector(theta)
        rep = SplatField2D(np.array([s[0:2] for s in self.splats]).reshape(-1, 2),
                           [s[2] for s in self.splats],
                           np.array([s[3:] for s in self.splats]).reshape(-1, self.grid.channels),
                           self.grid)
        if self.init_noise:
            rng = np.random.default_rng([self.run.seed, 1])
            rep.set_params(rep.get_params() + self.init_noise * rng.standard_normal(rep.dim))
        return rep

    def image_shape(self):
        if self.representation == "direct":
            return (1, self.init.size, 1)
        return (self.grid.height, self.grid.width, self.grid.channels)

    def reward_spec(self, transport=None) -> RewardSpec:
        kind = self.reward_kind
        if kind == "proximity":
            return Proximity(self.reward_target)
        if kind == "linear":
            return Linear(self.reward_direction)
        if kind == "mixture_likelihood":
            return MixtureLikelihood(self.mixture(), self.schedule(), self.reward_label)
        if kind == "constant":
            return Constant(self.reward_value)
        if transport is None:
            locator = self.lmm_endpoint or os.environ.get(LMM_ENDPOINT_ENV) or "mock:yes"
            transport = make_transport(locator)
        return LMM(list(self.lmm_questions), transport, self.image_shape(), self.image_range)

    def metric_view_list(self) -> list:
        if self.representation == "direct":
            return [IDENTITY] * self.metric_views
        n = self.metric_views
        return [ViewSpec("affine", 2.0 * math.pi * k / n) for k in range(n)]

    def target(self) -> Optional[np.ndarray]:
        return self.reward_target if self.reward_kind == "proximity" else None


# -- parsing ---------------------------------------------------------------

def _floats(text, line, key):
    out = []
    for tok in text.replace(",", " ").split():
        try:
            if "*" in tok:
                v, n = tok.split("*")
                out.extend([float(v)] * int(n))
            else:
                out.append(float(tok))
        except ValueError:
            raise ConfigError(f"{key}: bad number {tok!r}", line) from None
    return np.array(out, dtype=np.float64)


def _convert(key, kind, raw, line):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "tau":
            if raw.lower() in ("inf", "+inf", "infinity"):
                return math.inf
            v = float(raw)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"tau must be >= 0 or 'inf', got {raw!r}", line)
            return v
        if kind == "label":
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == "vector":
            vec = _floats(raw, line, key)
            if vec.size == 0:
                raise ConfigError(f"{key}: empty vector", line)
            return vec
        if kind == "ints":
            return [int(v) for v in raw.replace(",", " ").split()]
        if kind == "questions":
            qs = [q.strip() for q in raw.split("|") if q.strip()]
            if not qs:
                raise ConfigError("lmm_questions needs at least one question", line)
            return qs
        if kind == "views":
            return _parse_views(raw, line)
        if kind == "str":
            return raw
        if isinstance(kind, tuple):
            if raw not in kind:
                raise ConfigError(f"{key} must be one of {', '.join(kind)}; got {raw!r}", line)
            return raw
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}", line) from None
    raise AssertionError(kind)


def _parse_views(raw, line):
    """``identity`` | ``ring N`` | ``affine ANGLE TX TY; affine ...``"""
    raw = raw.strip()
    if raw == "identity":
        return [IDENTITY]
    if raw.startswith("ring"):
        n = int(raw.split()[1])
        if n < 1:
            raise ConfigError("ring needs at least one view", line)
        return [ViewSpec("affine", 2.0 * math.pi * k / n) for k in range(n)]
    views = []
    for part in raw.split(";"):
        toks = part.split()
        if not toks:
            continue
        if toks[0] == "identity" and len(toks) == 1:
            views.append(IDENTITY)
        elif toks[0] == "affine" and len(toks) == 4:
            views.append(ViewSpec("affine", float(toks[1]), (float(toks[2]), float(toks[3]))))
        else:
            raise ConfigError(f"bad view {part.strip()!r}", line)
    if not views:
        raise ConfigError("no views given", line)
    return views


def _parse_component(raw, line, key):
    parts = [p.strip() for p in raw.split("|")]
    if len(parts) not in (3, 4):
        raise ConfigError(f"{key}: expected 'weight | mean | stdev [| label]'", line)
    try:
        weight = float(parts[0])
        stdev = float(parts[2])
        label = int(parts[3]) if len(parts) == 4 else 0
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}", line) from None
    return Component(weight, _floats(parts[1], line, key), stdev, label)


def read_entries(text: str) -> dict:
    """Split config text into ``{key: (raw_value, line_number)}``."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", lineno)
        if key not in _KEYS and not (key.startswith(_INDEXED) and "." in key
                                     and key.split(".", 1)[1]):
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (lines {entries[key][1]} and {lineno})",
                              lineno)
        entries[key] = (value, lineno)
    return entries


def apply_overrides(entries: dict, overrides: Sequence[str]) -> dict:
    """Apply ``key=value`` overrides (from the command line); they win over the file."""
    out = dict(entries)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in _KEYS and not key.startswith(_INDEXED):
            raise ConfigError(f"unknown key {key!r} in override")
        out[key] = (value, None)
    return out


def parse_config(text: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    return config_from_entries(apply_overrides(read_entries(text), overrides))


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


def config_from_entries(entries: dict) -> ExperimentConfig:
    v = {}
    for key, (default, kind) in _KEYS.items():
        if key in entries:
            raw, line = entries[key]
            v[key] = _convert(key, kind, raw, line)
        else:
            v[key] = default

    def line_of(key):
        return entries.get(key, (None, None))[1]

    components = []
    comp_lines = []
    splats = []
    for key in sorted(k for k in entries if k.startswith(_INDEXED)):
        raw, line = entries[key]
        if key.startswith("component."):
            components.append(_parse_component(raw, line, key))
            comp_lines.append(line)
        else:
            splats.append(_floats(raw, line, key))
    if not components:
        raise ConfigError("at least one component.<name> entry is required")
    try:
        gmm = GaussianMixture(components)
    except PrefDistillError as exc:
        raise ConfigError(f"mixture: {exc}", comp_lines[0]) from None
    labels = set(int(l) for l in gmm.labels)

    if v["reward"] is None:
        raise ConfigError("'reward' is required")
    if v["tau"] is None:
        # yes-counts are integers: push only on a strict majority of one answer
        v["tau"] = 1.0 if v["reward"] == "lmm" else 0.001
    for key in ("condition_label", "reward_label"):
        if v[key] is not None and v[key] not in labels:
            raise ConfigError(f"{key} {v[key]} does not match any component label", line_of(key))
    if v["steps"] < 0:
        raise ConfigError("steps must be >= 0", line_of("steps"))
    if v["learning_rate"] < 0:
        raise ConfigError("learning_rate must be >= 0", line_of("learning_rate"))
    if v["metric_views"] < 1:
        raise ConfigError("metric_views must be >= 1", line_of("metric_views"))
    if v["metric_every"] < 0:
        raise ConfigError("metric_every must be >= 0", line_of("metric_every"))
    if not v["image_max"] > v["image_min"]:
        raise ConfigError("image_max must exceed image_min", line_of("image_max"))

    grid = None
    if v["representation"] == "direct":
        if v["init"] is None:
            v["init"] = np.zeros(gmm.dim)
        if splats or v["grid"] is not None:
            raise ConfigError("splat.* / grid keys need representation = splat")
        image_dim = v["init"].size
        if any(not view.is_identity for view in v["views"]):
            raise ConfigError("direct representation only supports identity views",
                              line_of("views"))
    else:
        if v["grid"] is None or len(v["grid"]) not in (2, 3) or min(v["grid"]) < 1:
            raise ConfigError("representation = splat needs 'grid = W H [C]'", line_of("grid"))
        grid = Grid(*v["grid"])
        for s, key in zip(splats, sorted(k for k in entries if k.startswith("splat."))):
            if s.size != 3 + grid.channels:
                raise ConfigError(f"{key}: expected cx cy log_scale and {grid.channels} "
                                  f"amplitude(s)", entries[key][1])
        if v["init"] is not None:
            raise ConfigError("'init' applies to the direct representation only", line_of("init"))
        image_dim = grid.size
    if image_dim != gmm.dim:
        raise ConfigError(f"render dimension {image_dim} != mixture dimension {gmm.dim}")

    for key, need in (("reward_target", "proximity"), ("reward_direction", "linear"),
                      ("lmm_questions", "lmm")):
        if v["reward"] == need:
            if v[key] is None:
                raise ConfigError(f"reward = {need} needs '{key}'", line_of("reward"))
            if key != "lmm_questions" and v[key].size != image_dim:
                raise ConfigError(f"{key} has {v[key].size} entries, expected {image_dim}",
                                  line_of(key))

    run = RunConfig(
        tau=v["tau"], cfg_scale=v["cfg_scale"], condition_label=v["condition_label"],
        pair_strategy=v["pair_strategy"], timestep_gap=v["timestep_gap"], steps=v["steps"],
        learning_rate=v["learning_rate"], optimizer=v["optimizer"], adam_beta1=v["adam_beta1"],
        adam_beta2=v["adam_beta2"], adam_eps=v["adam_eps"], t_min=v["t_min"], t_max=v["t_max"],
        seed=v["seed"], views=tuple(v["views"]), mode=v["mode"])
    cfg = ExperimentConfig(
        run=run, schedule_steps=v["schedule_steps"], beta_min=v["beta_min"],
        beta_max=v["beta_max"], weight_kind=v["weight_kind"], components=components,
        reward_kind=v["reward"], reward_target=v["reward_target"],
        reward_direction=v["reward_direction"], reward_label=v["reward_label"],
        reward_value=v["reward_value"], lmm_questions=v["lmm_questions"],
        lmm_endpoint=v["lmm_endpoint"], representation=v["representation"], init=v["init"],
        init_noise=v["init_noise"], grid=grid, splats=splats, metric_views=v["metric_views"],
        metric_every=v["metric_every"], output_dir=v["output_dir"],
        image_range=(v["image_min"], v["image_max"]), entries=dict(entries))
    try:
        run.validate(cfg.schedule())
    except PrefDistillError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def with_overrides(config: ExperimentConfig, overrides: Sequence[str]) -> ExperimentConfig:
    return config_from_entries(apply_overrides(config.entries, overrides))


# -- metrics ---------------------------------------------------------------

def avg_reward_metric(rep, views: Sequence[ViewSpec], spec: RewardSpec) -> Optional[float]:
    """Mean reward over renders from ``views``; ``None`` if the annotator fails."""
    if len(views) == 0:
        raise ConfigError("avg_reward_metric needs at least one view")
    try:
        return float(np.mean([reward(rep.render(v), spec) for v in views]))
    except AnnotationError:
        return None


# -- files -----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_trace_csv(traces: Sequence[IterationTrace], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for tr in traces:
        w.writerow([tr.iteration, tr.t, _fmt(tr.reward_win), _fmt(tr.reward_lose),
                    _fmt(tr.s_gap), tr.branch or "", _fmt(tr.gradient_norm),
                    _fmt(tr.metric_avg_reward)])
    Path(path).write_text(buf.getvalue())


def read_trace_csv(path) -> list[IterationTrace]:
    def opt(s):
        return None if s == "" else float(s)

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header {header}")
        return [IterationTrace(int(r[0]), int(r[1]), opt(r[2]), opt(r[3]), opt(r[4]),
                               r[5] or None, float(r[6]), opt(r[7])) for r in reader]


def write_params(rep, path) -> None:
    lines = ["# prefdistill parameter snapshot"]
    if isinstance(rep, DirectVector):
        lines.append("# representation = direct")
    else:
        g = rep.grid
        lines.append("# representation = splat")
        lines.append(f"# grid = {g.width} {g.height} {g.channels}")
        lines.append("# layout = cx cy log_scale amp... per splat")
    theta = rep.get_params()
    lines.append(f"# count = {theta.size}")
    lines.extend(repr(float(x)) for x in theta)
    Path(path).write_text("\n".join(lines) + "\n")


def read_params(path) -> np.ndarray:
    vals = [float(l) for l in Path(path).read_text().splitlines()
            if l.strip() and not l.startswith("#")]
    return np.array(vals)


def write_png(x, shape, path, value_range) -> None:
    Path(path).write_bytes(encode_png(x, shape, value_range))


# -- experiments -----------------------------------------------------------

SUMMARY_COLUMNS = ["config_id", "mode", "pair_strategy", "tau", "seed", "steps",
                   "final_avg_reward", "final_distance", "pull_only", "push_pull", "skipped",
                   "mean_s_gap", "image_min", "image_max", "wall_seconds"]


@dataclass
class SummaryRow:
    config_id: str
    mode: str
    pair_strategy: str
    tau: float
    seed: int
    steps: int
    final_avg_reward: Optional[float]
    final_distance: Optional[float]
    pull_only: int
    push_pull: int
    skipped: int
    mean_s_gap: Optional[float]
    image_min: float
    image_max: float
    wall_seconds: float

    def as_list(self):
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    Path(path).write_text(buf.getvalue())


def branch_counts(traces: Sequence[IterationTrace]) -> dict:
    counts = {PULL_ONLY: 0, PUSH_PULL: 0, SKIPPED: 0}
    for tr in traces:
        if tr.branch in counts:
            counts[tr.branch] += 1
    return counts


def execute(config: ExperimentConfig, transport=None):
    """Run without touching the filesystem; returns ``(rep, traces, spec)``."""
    sched = config.schedule()
    gmm = config.mixture()
    rep = config.make_representation()
    spec = config.reward_spec(transport)
    views = config.metric_view_list()
    every = config.metric_every
    count = [0]

    def metric(r):
        count[0] += 1
        if every and count[0] % every == 0:
            return avg_reward_metric(r, views, spec)
        return None

    runner = Runner(config.run, rep, gmm, sched, spec, metric if every else None)
    rep, traces = runner.run()
    return rep, traces, spec


def run_experiment(config: ExperimentConfig, out_dir=None, config_id: str = "run",
                   transport=None) -> SummaryRow:
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    rep, traces, spec = execute(config, transport)
    wall = time.perf_counter() - start

    write_trace_csv(traces, out / "trace.csv")
    write_params(rep, out / "params.txt")
    shape = config.image_shape()
    for k, view in enumerate(config.run.views):
        write_png(rep.render(view), shape, out / f"view_{k:03d}.png", config.image_range)

    counts = branch_counts(traces)
    gaps = [tr.s_gap for tr in traces if tr.s_gap is not None]
    target = config.target()
    final_distance = None
    if target is not None:
        final_distance = float(np.linalg.norm(rep.render(config.run.views[0]) - target))
    row = SummaryRow(config_id, config.run.mode, config.run.pair_strategy, config.run.tau,
                     config.run.seed, config.run.steps,
                     avg_reward_metric(rep, config.metric_view_list(), spec), final_distance,
                     counts[PULL_ONLY], counts[PUSH_PULL], counts[SKIPPED],
                     float(np.mean(gaps)) if gaps else None,
                     config.image_range[0], config.image_range[1], round(wall, 3))
    write_summary_csv([row], out / "summary.csv")
    return row


def _run_member(args):
    config, out_dir, config_id = args
    return run_experiment(config, out_dir, config_id)


def _run_all(jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_member, jobs))
    return [_run_member(j) for j in jobs]


def _tau_label(tau: float) -> str:
    return "inf" if math.isinf(tau) else repr(float(tau))


def sweep_tau(base: ExperimentConfig, taus: Sequence[float], out_dir=None,
              workers: int = 1) -> list[dict]:
    """One run per tau, all with the base seed.

    The random stream (view, t, eps1, eps2) does not depend on tau, so every
    run consumes identical draws at every iteration. Alongside each run's own
    branch counts the table reports ``replay_push_pull``: the push count that
    tau would give on the s_gap stream recorded by the first run.
    """
    if len(taus) < 2:
        raise ConfigError("sweep_tau needs at least two tau values")
    out = Path(out_dir if out_dir is not None else base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, tau in enumerate(taus):
        cfg = with_overrides(base, [f"tau={_tau_label(tau)}"])
        jobs.append((cfg, out / f"tau_{i:02d}", f"tau={_tau_label(tau)}"))
    rows = _run_all(jobs, workers)
    reference = read_trace_csv(out / "tau_00" / "trace.csv")
    ref_gaps = [tr.s_gap for tr in reference if tr.s_gap is not None]
    table = []
    for tau, row in zip(taus, rows):
        d = {c: getattr(row, c) for c in SUMMARY_COLUMNS}
        d["replay_push_pull"] = sum(1 for g in ref_gaps if not g < tau)
        table.append(d)
    _write_table(table, out / "sweep_tau.csv")
    return table


def ablate_pairs(base: ExperimentConfig, gap: Optional[int] = None, out_dir=None,
                 workers: int = 1) -> list[dict]:
    """Run both pair strategies on matched seeds and compare their score gaps.

    Both runs reserve the same timestep headroom, so iteration i draws the
    same (view, t, eps1, eps2) under either strategy. Writes ``s_gaps.csv``
    with the per-iteration gaps side by side.
    """
    gap = base.run.timestep_gap if gap is None else gap
    if gap <= 0:
        gap = 200
    out = Path(out_dir if out_dir is not None else base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for strategy in ("different_noises", "different_timesteps"):
        cfg = with_overrides(base, [f"pair_strategy={strategy}", f"timestep_gap={gap}",
                                    "mode=dreamdpo"])
        jobs.append((cfg, out / strategy, strategy))
    rows = _run_all(jobs, workers)
    noise = read_trace_csv(out / "different_noises" / "trace.csv")
    steps = read_trace_csv(out / "different_timesteps" / "trace.csv")
    stats = paired_gap_stats([tr.s_gap for tr in noise], [tr.s_gap for tr in steps])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "s_gap_different_noises", "s_gap_different_timesteps"])
    for a, b in zip(noise, steps):
        w.writerow([a.iteration, _fmt(a.s_gap), _fmt(b.s_gap)])
    (out / "s_gaps.csv").write_text(buf.getvalue())
    table = []
    for row in rows:
        d = {c: getattr(row, c) for c in SUMMARY_COLUMNS}
        d["timestep_gap"] = gap
        d.update(stats)
        table.append(d)
    _write_table(table, out / "ablate_pairs.csv")
    return table


def paired_gap_stats(gaps_noise, gaps_steps) -> dict:
    """Paired comparison of per-iteration score gaps (timesteps minus noises)."""
    pairs = [(a, b) for a, b in zip(gaps_noise, gaps_steps) if a is not None and b is not None]
    if len(pairs) < 2:
        return {"paired_n": len(pairs), "paired_mean_diff": None, "paired_z": None}
    d = np.array([b - a for a, b in pairs])
    se = d.std(ddof=1) / math.sqrt(d.size)
    z = float(d.mean() / se) if se > 0 else (math.inf if d.mean() > 0 else 0.0)
    return {"paired_n": int(d.size), "paired_mean_diff": float(d.mean()), "paired_z": z}


def _write_table(rows: Sequence[dict], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0].keys())
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    Path(path).write_text(buf.getvalue())

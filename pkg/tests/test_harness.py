import math
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from prefdistill import ConfigError, DirectVector, Grid, Proximity, ViewSpec
from prefdistill.representation import random_splat_field
from prefdistill.cli import main
from prefdistill.harness import (TRACE_COLUMNS, ablate_pairs, avg_reward_metric, execute,
                                 load_config, parse_config, read_params, read_trace_csv,
                                 run_experiment, sweep_tau, with_overrides, write_params,
                                 write_trace_csv)
from prefdistill.ranker import LMM, ScriptedTransport
from prefdistill.representation import IDENTITY

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
component.a = 1.0 | 0 0 | 1.0
reward = proximity
reward_target = 1 1
"""

TOY = """\
# two-mode toy
seed = 3
steps = 40
t_min = 20
t_max = 300
component.minus = 0.5 | -4 0 | 1.0 | 0
component.plus  = 0.5 |  4 0 | 1.0 | 1
reward = proximity
reward_target = 4 0
init = 0 0
init_noise = 0.1
metric_every = 10
image_min = -6
image_max = 6
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.run.tau == 0.001
    assert cfg.run.optimizer == "adam" and cfg.run.learning_rate == 0.01
    assert cfg.metric_views == 8
    assert cfg.run.views == (IDENTITY,)
    np.testing.assert_array_equal(cfg.init, [0.0, 0.0])


def test_lmm_defaults_tau_one():
    cfg = parse_config(MINIMAL.replace("reward = proximity", "reward = lmm")
                       + "lmm_questions = Is the leaf shouting?\n")
    assert cfg.run.tau == 1.0
    assert cfg.lmm_questions == ["Is the leaf shouting?"]


@pytest.mark.parametrize("line,message", [
    ("tau = -1", "tau must be >= 0"),
    ("tau = banana", "cannot parse"),
    ("colour = blue", "unknown key"),
    ("optimizer = lbfgs", "optimizer must be one of"),
    ("just some words", "expected 'key = value'"),
    ("metric_views = 0", "metric_views must be >= 1"),
    ("condition_label = 4", "does not match any component label"),
])
def test_errors_carry_line_numbers(line, message):
    text = MINIMAL + line + "\n"
    with pytest.raises(ConfigError, match=message) as exc:
        parse_config(text)
    assert exc.value.line == len(text.splitlines())


def test_tau_inf_accepted():
    assert parse_config(MINIMAL + "tau = inf\n").run.tau == math.inf


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError, match=r"lines 3 and 5"):
        parse_config(MINIMAL + "reward = linear\n")


def test_semantic_errors():
    with pytest.raises(ConfigError, match="component"):
        parse_config("reward = constant\n")
    with pytest.raises(ConfigError, match="needs 'reward_target'"):
        parse_config("component.a = 1 | 0 0 | 1\nreward = proximity\n")
    with pytest.raises(ConfigError, match="mixture dimension"):
        parse_config(MINIMAL + "init = 0 0 0\n")
    with pytest.raises(ConfigError, match="sum to"):
        parse_config("component.a = 0.7 | 0 | 1\ncomponent.b = 0.7 | 1 | 1\nreward = constant\n")
    with pytest.raises(ConfigError, match="t_min"):
        parse_config(MINIMAL + "t_min = 500\nt_max = 100\n")
    with pytest.raises(ConfigError, match="identity views"):
        parse_config(MINIMAL + "views = ring 4\n")
    with pytest.raises(ConfigError, match=r"alpha_bar\[T\]"):
        parse_config(MINIMAL + "schedule_steps = 10\n")


def test_splat_config_and_vector_repeat():
    text = """
component.a = 1.0 | 0.5*16 | 0.3
reward = linear
reward_direction = 1*16
representation = splat
grid = 4 4 1
splat.a = 1 1 0.0 0.5
splat.b = 2 3 0.2 0.1
views = affine 0.1 0 0; identity
metric_views = 3
"""
    cfg = parse_config(text)
    rep = cfg.make_representation()
    assert rep.n_splats == 2 and rep.image_dim == 16
    assert len(cfg.run.views) == 2 and cfg.run.views[1] == IDENTITY
    assert len(cfg.metric_view_list()) == 3
    with pytest.raises(ConfigError, match="amplitude"):
        parse_config(text + "splat.c = 1 1 0\n")


def test_overrides_win_and_are_validated():
    cfg = parse_config(MINIMAL, ["tau=0.5", "seed=11"])
    assert (cfg.run.tau, cfg.run.seed) == (0.5, 11)
    assert with_overrides(cfg, ["tau=inf"]).run.tau == math.inf
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, ["nonsense=1"])
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, ["tau=-3"])


def test_avg_reward_metric_examples():
    spec = Proximity(np.array([1.0, 2.0]))
    rep = DirectVector([0.0, 0.0])
    assert avg_reward_metric(rep, [IDENTITY], spec) == -5.0
    assert avg_reward_metric(rep, [IDENTITY] * 4, spec) == -5.0
    rng = np.random.default_rng(0)
    splat = random_splat_field(rng, Grid(8, 8, 1), 3)
    target = rng.normal(size=64)
    views = [ViewSpec("affine", 2 * np.pi * k / 8, (0.5, 0.0)) for k in range(8)]
    by_hand = 0.0
    for v in views:
        d = splat.render(v) - target
        by_hand += -np.sum(d * d)
    assert avg_reward_metric(splat, views, Proximity(target)) == pytest.approx(by_hand / 8, rel=1e-14)
    failing = LMM(["q?"], ScriptedTransport(lambda p, i: "nope"), (1, 2, 1))
    assert avg_reward_metric(rep, [IDENTITY], failing) is None
    with pytest.raises(ConfigError):
        avg_reward_metric(rep, [], spec)


def test_run_experiment_outputs(tmp_path):
    cfg = parse_config(TOY)
    row = run_experiment(cfg, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["params.txt", "summary.csv", "trace.csv", "view_000.png"]
    traces = read_trace_csv(tmp_path / "trace.csv")
    assert len(traces) == 40
    assert row.pull_only + row.push_pull + row.skipped == 40
    assert [tr.metric_avg_reward is not None for tr in traces].count(True) == 4
    theta = read_params(tmp_path / "params.txt")
    assert theta.size == 2
    assert row.final_distance == pytest.approx(np.linalg.norm(theta - [4.0, 0.0]))
    img = Image.open(tmp_path / "view_000.png")
    assert img.size == (2, 1) and img.mode == "L"


def test_trace_and_params_roundtrip(tmp_path):
    cfg = parse_config(TOY)
    rep, traces, _ = execute(cfg)
    write_trace_csv(traces, tmp_path / "t.csv")
    assert read_trace_csv(tmp_path / "t.csv") == [
        tr.__class__(**{**tr.__dict__, "view_index": 0}) for tr in traces]
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    write_params(rep, tmp_path / "p.txt")
    assert read_params(tmp_path / "p.txt").tobytes() == rep.params.tobytes()
    splat = random_splat_field(np.random.default_rng(1), Grid(4, 4, 3), 2)
    write_params(splat, tmp_path / "s.txt")
    assert "# grid = 4 4 3" in (tmp_path / "s.txt").read_text()
    assert read_params(tmp_path / "s.txt").tobytes() == splat.params.tobytes()


def test_zero_steps_header_only(tmp_path):
    run_experiment(parse_config(TOY, ["steps=0"]), tmp_path)
    assert (tmp_path / "trace.csv").read_text() == ",".join(TRACE_COLUMNS) + "\n"


def test_rerun_is_byte_identical(tmp_path):
    cfg = parse_config(TOY)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("trace.csv", "params.txt", "view_000.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sds_schema(tmp_path):
    run_experiment(parse_config(TOY), tmp_path / "dpo")
    run_experiment(parse_config(TOY, ["mode=sds"]), tmp_path / "sds")
    dpo = read_trace_csv(tmp_path / "dpo" / "trace.csv")
    sds = read_trace_csv(tmp_path / "sds" / "trace.csv")
    assert [t.t for t in dpo] == [t.t for t in sds]
    assert all(t.reward_win is None and t.reward_lose is None and t.s_gap is None
               and t.branch is None for t in sds)
    assert all(t.branch is not None for t in dpo)
    header = (tmp_path / "sds" / "trace.csv").read_text().splitlines()[0]
    assert header == (tmp_path / "dpo" / "trace.csv").read_text().splitlines()[0]


def test_sweep_tau(tmp_path):
    cfg = parse_config(TOY, ["steps=60"])
    table = sweep_tau(cfg, [0.01, 0.001, 0.0, math.inf], tmp_path)
    assert len(table) == 4
    assert table[-1]["push_pull"] == 0 and table[-1]["replay_push_pull"] == 0
    by_tau = sorted(table, key=lambda r: r["tau"])
    replay = [r["replay_push_pull"] for r in by_tau]
    assert replay == sorted(replay, reverse=True)
    assert table[2]["push_pull"] == 60  # tau = 0: every gap is >= 0
    t_columns = [[tr.t for tr in read_trace_csv(tmp_path / f"tau_{i:02d}" / "trace.csv")]
                 for i in range(4)]
    assert all(col == t_columns[0] for col in t_columns)
    assert (tmp_path / "sweep_tau.csv").exists()
    with pytest.raises(ConfigError):
        sweep_tau(cfg, [0.1], tmp_path)


def test_ablate_pairs(tmp_path):
    cfg = parse_config(TOY, ["steps=30"])
    table = ablate_pairs(cfg, gap=0, out_dir=tmp_path / "zero")
    # gap=0 reverts to the default gap of 200
    assert table[0]["timestep_gap"] == 200
    cfg0 = parse_config(TOY, ["steps=30", "pair_strategy=different_timesteps"])
    _, traces, _ = execute(cfg0)
    assert all(tr.s_gap == 0.0 for tr in traces)
    table = ablate_pairs(cfg, gap=100, out_dir=tmp_path / "g100")
    assert [r["pair_strategy"] for r in table] == ["different_noises", "different_timesteps"]
    assert table[0]["paired_n"] == 30
    lines = (tmp_path / "g100" / "s_gaps.csv").read_text().splitlines()
    assert lines[0] == "iter,s_gap_different_noises,s_gap_different_timesteps" and len(lines) == 31


def test_lmm_endpoint_from_environment(monkeypatch):
    text = MINIMAL.replace("reward = proximity", "reward = lmm") + "lmm_questions = a? | b?\n"
    monkeypatch.setenv("PREFDISTILL_LMM_ENDPOINT", "mock:no")
    spec = parse_config(text).reward_spec()
    assert spec.transport.answer == "No"
    monkeypatch.delenv("PREFDISTILL_LMM_ENDPOINT")
    assert parse_config(text).reward_spec().transport.answer == "Yes"


def test_cli_subcommands(tmp_path, capsys):
    cfg_path = tmp_path / "toy.cfg"
    cfg_path.write_text(TOY)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "r"), "--steps", "10"]) == 0
    assert len(read_trace_csv(tmp_path / "r" / "trace.csv")) == 10
    assert main(["baseline-sds", str(cfg_path), "--out", str(tmp_path / "s"), "--steps", "5"]) == 0
    assert read_trace_csv(tmp_path / "s" / "trace.csv")[0].branch is None
    assert main(["sweep-tau", str(cfg_path), "--taus", "0.01,0,inf", "--out", str(tmp_path / "w"),
                 "--steps", "5"]) == 0
    assert main(["ablate-pairs", str(cfg_path), "--gap", "50", "--out", str(tmp_path / "a"),
                 "--set", "steps=5"]) == 0
    out = capsys.readouterr().out
    assert "replay_push_pull" in out and "paired_z" in out


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL + "tau = -1\n")
    assert main(["run", str(bad)]) != 0
    assert "line 5" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) != 0


@pytest.mark.parametrize("name", ["two_mode_steering", "splat_views", "lmm_ranked"])
def test_shipped_configs_parse(name):
    cfg = load_config(ROOT / "configs" / f"{name}.cfg")
    assert cfg.run.steps > 0

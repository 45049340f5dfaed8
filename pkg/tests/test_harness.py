import csv

import numpy as np
import pytest

from cae_rl.agent import Agent, AgentConfig
from cae_rl.cli import main
from cae_rl.envs import POPendulum, make_env
from cae_rl.errors import ConfigurationError, DimensionError
from cae_rl.harness import (
    HistoryQueues,
    ablate,
    build_run_config,
    encoder_params,
    evaluate,
    evaluate_agent,
    load_run_config,
    moving_average,
    params_table,
    random_baseline,
    read_metrics,
    train,
)
from cae_rl.harness import tools
from cae_rl.harness.loop import harness_streams
from cae_rl.nn.params import load_checkpoint, param_count
from cae_rl.pomdp import bundled_path

SMALL_AGENT = dict(d_model=8, num_heads=2, channels=2, mlp_widths=[16, 16], batch_size=16)

CONFIG_TEXT = """\
[run]
env = "po-integrator"
total_steps = 500
warmup_steps = 100
eval_every = 250
eval_episodes = 2
seed = 3

[agent]
variant = "cae"
history_len = 2
d_model = 8
num_heads = 2
channels = 2
mlp_widths = [16, 16]
batch_size = 16
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(CONFIG_TEXT)
    return path


def small_run(tmp_path, name="run", **kw):
    doc = {"run": {"total_steps": 500, "warmup_steps": 100, "eval_every": 250,
                   "eval_episodes": 2, "seed": 3, "out": str(tmp_path / name)},
           "agent": {"variant": "cae", "history_len": 2, **SMALL_AGENT}}
    return build_run_config(doc, kw)


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    """One 500-step run shared by the read-only checks below."""
    return train(small_run(tmp_path_factory.mktemp("smoke")))


# -- train --------------------------------------------------------------------------------------

def test_smoke_run_writes_artifacts(smoke):
    rows = read_metrics(smoke.out / "metrics.csv")
    assert len(rows) >= 1
    agent, meta = Agent.load(smoke.out / "checkpoint.ckpt")
    assert agent.config == smoke.agent.config
    assert meta["run"]["run"]["env"] == "po-integrator"
    assert (smoke.out / "config.toml").is_file()
    assert (smoke.out / "timing.csv").is_file()


def test_metrics_steps_increase_and_finite(smoke):
    with open(smoke.out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    steps = [int(r["step"]) for r in rows]
    assert steps == sorted(set(steps)) and steps[-1] == 500
    for r in rows:
        for k, v in r.items():
            if v:
                assert np.isfinite(float(v)), (k, v)


def test_echoed_config_reloads(smoke):
    again = load_run_config(smoke.out / "config.toml")
    assert again.agent == smoke.agent.config
    assert again.total_steps == 500


def test_same_seed_bitwise_identical(tmp_path):
    a = train(small_run(tmp_path, "a", total_steps=300))
    b = train(small_run(tmp_path, "b", total_steps=300))
    assert (a.out / "metrics.csv").read_bytes() == (b.out / "metrics.csv").read_bytes()
    ta, ma = load_checkpoint(a.out / "checkpoint.ckpt")
    tb, mb = load_checkpoint(b.out / "checkpoint.ckpt")
    assert ta.keys() == tb.keys() and all(np.array_equal(ta[k], tb[k]) for k in ta)
    ma["run"]["run"].pop("out"), mb["run"]["run"].pop("out")  # only the directory differs
    assert ma == mb


def test_different_seed_differs(tmp_path):
    a = train(small_run(tmp_path, "a", total_steps=300))
    b = train(small_run(tmp_path, "b", total_steps=300, seed=4))
    assert (a.out / "metrics.csv").read_bytes() != (b.out / "metrics.csv").read_bytes()


def test_first_transition_after_queue_fill(smoke):
    # 500 steps over 200-step episodes: three episodes start, each spends N
    # steps filling its queues before anything is stored
    N = smoke.agent.N
    assert len(smoke.buffer) == 500 - 3 * N
    first_obs = make_env("po-integrator").reset(seed=int(harness_streams(3)[0].integers(0, 2**32)))
    assert np.array_equal(smoke.buffer.s_bar[0, N], first_obs)  # oldest row is the reset obs


def test_stored_windows_slide(smoke):
    buf = smoke.buffer
    n = len(buf)
    # the next window drops the oldest row and shifts the rest by one
    assert np.array_equal(buf.s_bar_next[:n, 1:], buf.s_bar[:n, :-1])
    # consecutive stored steps within an episode chain their windows
    assert np.array_equal(buf.s_bar[1], buf.s_bar_next[0])
    assert np.array_equal(buf.a_bar[1, 1:], buf.a_bar[0, :-1])


def test_history_queues_fill():
    q = HistoryQueues(2, 1)
    q.reset([0.0])
    assert not q.full
    q.push([1.0], [10.0])
    q.push([2.0], [20.0])
    assert q.full
    assert np.array_equal(q.s_bar(), [[20.0], [10.0], [0.0]])
    assert np.array_equal(q.a_bar([9.0]), [[9.0], [2.0], [1.0]])


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigurationError):
        train(small_run(tmp_path, "file/sub"))


# -- config ---------------------------------------------------------------------------------------

def test_flags_override_file(config_file):
    cfg = load_run_config(config_file, {"seed": 9, "total_steps": 700, "history_len": None})
    assert (cfg.seed, cfg.total_steps, cfg.N) == (9, 700, 2)


def test_warmup_flag_reaches_run_config(config_file, tmp_path):
    rc = main(["train", "--config", str(config_file), "--steps", "300", "--warmup", "150",
               "--out", str(tmp_path / "w"), "--quiet"])
    assert rc == 0
    assert load_run_config(tmp_path / "w" / "config.toml").warmup_steps == 150
    # warmup must stay below total_steps
    assert main(["train", "--config", str(config_file), "--steps", "300", "--warmup", "300",
                 "--out", str(tmp_path / "x"), "--quiet"]) == 1


def test_variant_override_takes_its_default_window(config_file):
    assert load_run_config(config_file, {"variant": "td3"}).N == 0
    assert load_run_config(config_file, {"variant": "fwtd3"}).N == 2


def test_dims_come_from_env(config_file):
    cfg = load_run_config(config_file, {"env": "po-pendulum"})
    assert (cfg.agent.obs_dim, cfg.agent.act_dim) == (1, 1)
    cfg = build_run_config({"run": {"observed": [0, 1]}})
    assert cfg.agent.obs_dim == 2


@pytest.mark.parametrize("doc", [
    {"run": {"total_steps": 100, "warmup_steps": 100}},
    {"run": {"warmup_steps": 2}, "agent": {"history_len": 3}},
    {"run": {"env": "chain-pomdp"}},
    {"run": {"bogus": 1}},
    {"agent": {"variant": "lstm"}},
    {"extra": {}},
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigurationError):
        build_run_config(doc)


# -- eval -----------------------------------------------------------------------------------------

class PendulumAtRest(POPendulum):
    def reset(self, seed=None, state=None):
        return super().reset(state=[0.0, 0.0])


def test_zero_head_at_equilibrium_scores_zero():
    agent = Agent(AgentConfig(variant="cae", **SMALL_AGENT), seed=0)
    for p in agent.actor.final_layer.params.values():
        p[...] = 0.0
    assert evaluate_agent(agent, PendulumAtRest(), 2, seed=0) == [0.0, 0.0]


def test_eval_repeatable_and_roundtrip(smoke):
    path = smoke.out / "checkpoint.ckpt"
    first, second = evaluate(path, episodes=2, seed=1), evaluate(path, episodes=2, seed=1)
    assert first == second
    direct = evaluate_agent(smoke.agent, make_env("po-integrator"), 2, seed=1)
    assert first.returns == direct


def test_eval_dimension_mismatch(smoke):
    with pytest.raises(DimensionError):
        evaluate(smoke.out / "checkpoint.ckpt", env="po-integrator", observed=[0, 1])


def test_random_baseline_repeatable():
    a = random_baseline("po-integrator", 3, seed=0)
    assert a == random_baseline("po-integrator", 3, seed=0)
    assert all(np.isfinite(a)) and max(a) < 0


# -- verify through the CLI -----------------------------------------------------------------------

def test_verify_chain_passes(capsys):
    assert main(["verify", "--pomdp", str(bundled_path("chain")), "--n", "1"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_verify_identity_collapse(capsys):
    assert main(["verify", "--pomdp", str(bundled_path("identity")), "--n", "0"]) == 0
    assert "max |P_bar - P| = 0.000e+00" in capsys.readouterr().out


def test_verify_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("n_states = 2\nn_actions = 1\nn_obs = 2\n"
                   "P = [[[0.9, 0.0]], [[0.5, 0.5]]]\nR = [[0.0], [0.0]]\n"
                   "O = [[1.0, 0.0], [0.0, 1.0]]\n")
    assert main(["verify", "--pomdp", str(bad), "--n", "1"]) == 1
    assert "P[0][0]" in capsys.readouterr().err


def test_verify_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(tools, "compare_chains", lambda *a: {"P_bar": 1e-3})
    assert main(["verify", "--pomdp", str(bundled_path("chain")), "--n", "1"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_verify_guard_exit_code(tmp_path):
    assert main(["verify", "--pomdp", str(bundled_path("chain")), "--n", "30"]) == 1


# -- ablate ---------------------------------------------------------------------------------------

def test_ablate_two_lengths(tmp_path):
    cfg = small_run(tmp_path, "abl", total_steps=300)
    res = ablate(cfg, [1, 3])
    base = tmp_path / "abl"
    assert (base / "N1" / "metrics.csv").is_file() and (base / "N3" / "metrics.csv").is_file()
    with open(base / "summary.csv", newline="") as fh:
        summary = list(csv.DictReader(fh))
    assert [int(r["history_len"]) for r in summary] == [1, 3]
    with open(base / "curves.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["step", "N1", "N3"]
    assert set(res.curves) == {1, 3}


def test_ablate_single_length_matches_train(tmp_path):
    ablate(small_run(tmp_path, "one", total_steps=300), [2])
    plain = train(small_run(tmp_path, "plain", total_steps=300))
    assert (tmp_path / "one" / "N2" / "metrics.csv").read_bytes() == (plain.out / "metrics.csv").read_bytes()


def test_ablate_rejects_bad_length_before_running(tmp_path):
    with pytest.raises(ConfigurationError):
        ablate(small_run(tmp_path, "bad"), [1, 0])
    assert not (tmp_path / "bad" / "N1").exists()


def test_moving_average():
    np.testing.assert_array_equal(moving_average(np.full(9, -4.5)), np.full(9, -4.5))
    np.testing.assert_allclose(moving_average([1, 2, 3, 4, 5, 6], 5), [1, 1.5, 2, 2.5, 3, 4])


# -- params ---------------------------------------------------------------------------------------

def test_params_table_properties(config_file):
    cae = params_table(load_run_config(config_file))
    fo = params_table(load_run_config(config_file, {"variant": "cae-fo"}))
    td3 = params_table(load_run_config(config_file, {"variant": "td3"}))
    assert encoder_params(td3) == 0
    assert fo[-1][1] < cae[-1][1]
    assert not any("enc_act" in name for name, _ in fo)


@pytest.mark.parametrize("variant", ["cae", "v1", "fwtd3"])
def test_params_total_matches_param_count(config_file, variant):
    cfg = load_run_config(config_file, {"variant": variant})
    rows = params_table(cfg)
    agent = Agent(cfg.agent)
    assert rows[-1] == ("total", param_count(agent.online_params()))
    assert sum(n for _, n in rows[:-1]) == rows[-1][1]


def test_params_cli(config_file, capsys):
    assert main(["params", "--config", str(config_file), "--variant", "v1"]) == 0
    out = capsys.readouterr().out
    assert "(shared)" in out and out.strip().splitlines()[-1].startswith("total")

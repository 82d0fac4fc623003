import dataclasses
import filecmp
import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lexbandit import ConfigError, PolicySpec, SeedSpec, simulate
from lexbandit import harness
from lexbandit.cli import main
from lexbandit.environment import stream_key
from lexbandit.harness import ExperimentConfig, InstanceSource

GOLDEN = Path(__file__).parent / "golden"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture
def tiny_config(tmp_path):
    _write(tmp_path, "inst.json", json.dumps(
        {"K": 4, "m": 2, "means": [[0.9, 0.5], [0.5, 0.9], [0.9, 0.2], [0.3, 0.3]],
         "noise": {"kind": "gaussian", "variance": 0.1}}))
    return _write(tmp_path, "tiny.yaml", """
instance: {path: inst.json}
mode: rm
horizon: 3000
trials: 3
seed: 99
delta: 0.1
policies:
  - lexelim-out
  - name: lexelim-in
  - {name: ucb, label: ucb-a}
  - uniform
""")


# -- config ------------------------------------------------------------------------

policy_specs = st.builds(
    PolicySpec,
    name=st.sampled_from(["lexelim-out", "lexelim-in", "ucb", "uniform"]),
    delta=st.floats(0.001, 0.5),
    lam=st.one_of(st.none(), st.floats(0, 5)),
    optimal_sizes=st.one_of(st.none(), st.lists(st.integers(1, 5), min_size=1, max_size=3).map(tuple)),
)


@given(
    st.lists(policy_specs, min_size=1, max_size=4),
    st.sampled_from(["rm", "bai"]),
    st.integers(1, 10**6),
    st.integers(0, 2**64 - 1),
    st.one_of(st.just("pow2"), st.lists(st.integers(1, 1000), min_size=1, max_size=5).map(tuple)),
    st.one_of(st.builds(InstanceSource, K=st.lists(st.sampled_from([10, 20, 30]), min_size=1).map(tuple)),
              st.builds(InstanceSource, builtin=st.none(), path=st.just("x.json"))),
)
def test_config_round_trip(policies, mode, horizon, seed, checkpoints, source):
    labelled = tuple(dataclasses.replace(p, label=f"p{k}") for k, p in enumerate(policies))
    cfg = ExperimentConfig(instance=source, policies=labelled, mode=mode, horizon=horizon,
                           seed=seed, checkpoints=checkpoints, trials=3, keep_plays=True)
    assert ExperimentConfig.loads(cfg.dumps()) == cfg


def test_config_defaults_and_shorthand():
    cfg = ExperimentConfig.loads("policies: [lexelim-out, {name: lexelim-in, lambda: 2}]\ndelta: 0.05\n")
    assert cfg.mode == "rm" and cfg.horizon == 10_000 and cfg.trials == 10
    assert cfg.policies[0].delta == 0.05
    assert cfg.policies[1].lam == 2.0
    assert cfg.instance.K == (10,)


@pytest.mark.parametrize(
    "text",
    [
        "mode: explore\n",
        "mode: rm\nhorizon: null\n",
        "trials: 0\n",
        "delta: 1.5\n",
        "seed: -1\n",
        "policies: [thompson]\n",
        "policies: [ucb, ucb]\n",
        "colour: blue\n",
        "instance: {builtin: other}\n",
        "instance: {K: 10, radius: 2}\n",
        "policies: [{name: ucb, alpha: 2}]\n",
        "instance: [1, 2\n",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.loads(text)


def test_bai_mode_without_horizon_is_fine():
    cfg = ExperimentConfig.loads("mode: bai\nhorizon: null\n")
    assert cfg.horizon is None


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "2")
    assert harness.worker_count(8) == 2
    assert harness.worker_count(1) == 1
    monkeypatch.setenv(harness.THREADS_ENV, "zero")
    with pytest.raises(ConfigError):
        harness.worker_count()
    monkeypatch.setenv(harness.THREADS_ENV, "0")
    with pytest.raises(ConfigError):
        harness.worker_count()


# -- running and aggregation ----------------------------------------------------------------

def test_trials_use_per_policy_streams(tiny_config):
    cfg = ExperimentConfig.load(tiny_config)
    res = harness.run_experiment(cfg, workers=1, base=tiny_config.parent)
    inst = res.instances[0].instance
    spec = res.policy("inst", "ucb-a").spec
    again = simulate(spec, inst, SeedSpec(99, 2, (stream_key("ucb-a"), 4)).rng(), mode="rm", max_rounds=3000)
    np.testing.assert_array_equal(res.policy("inst", "ucb-a").traces[2].pulls, again.pulls)


def test_aggregate_means_equal_resummation(tiny_config):
    cfg = ExperimentConfig.load(tiny_config)
    res = harness.run_experiment(cfg, workers=1, base=tiny_config.parent)
    summary = harness.aggregate(res)
    for key, ps in summary["instances"]["inst"]["policies"].items():
        traces = res.policy("inst", key).traces
        assert len(ps["meanRegret"]) == len(ps["checkpoints"])
        for k in range(len(ps["checkpoints"])):
            for i in range(2):
                manual = sum(tr.regret[k, i] for tr in traces) / len(traces)
                assert ps["meanRegret"][k][i] == pytest.approx(manual, rel=1e-12, abs=1e-12)
        assert ps["successes"] <= ps["trials"]


def test_bai_curves_use_common_checkpoints():
    a = simulate(PolicySpec("lexelim-out", delta=0.2), _two_arm(), SeedSpec(0, 0).rng(), mode="bai")
    b = simulate(PolicySpec("lexelim-out", delta=0.2), _two_arm(), SeedSpec(0, 1).rng(), mode="bai")
    ck, mean, std = harness.mean_curves([a, b])
    assert set(ck) <= set(a.checkpoints) & set(b.checkpoints)
    assert mean.shape == (ck.size, 1) and std.shape == (ck.size, 1)


def _two_arm():
    from lexbandit import BanditInstance, NoiseModel

    return BanditInstance(np.array([[1.0], [0.4]]), NoiseModel(0.1))


# -- files ---------------------------------------------------------------------------------------

def test_output_schema_matches_golden(tiny_config, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(tiny_config), "--out", str(out), "--quiet"]) == 0
    golden = json.loads((GOLDEN / "schema.json").read_text())
    assert (out / "regret.csv").read_text().splitlines()[0].split(",") == golden["regretCsv"]
    assert (out / "stopping.csv").read_text().splitlines()[0].split(",") == golden["stoppingCsv"]
    summary = json.loads((out / "summary.json").read_text())
    assert sorted(summary) == golden["summary"]
    entry = summary["instances"]["inst"]
    assert sorted(entry) == golden["instanceEntry"]
    assert sorted(entry["policies"]["lexelim-out"]) == golden["policySummary"]
    jsonl, per_trial = harness.trace_paths(out, "inst", "lexelim-in", 0)
    row = json.loads(jsonl.read_text().splitlines()[0])
    assert sorted(row) == golden["traceRow"]
    assert sorted(json.loads(per_trial.read_text())) == golden["trialSummary"]
    assert sorted(json.loads((out / "instances" / "inst.json").read_text())) == ["K", "m", "means", "noise"]
    assert (out / "config.yaml").exists()


def test_uniform_regret_csv_golden(tmp_path):
    # round-robin play is seed-free, so its regret curve is a fixed function of the instance
    _write(tmp_path, "two.json", json.dumps({"K": 2, "m": 2, "means": [[0.75, 0.5], [0.5, 1.0]], "noise": {}}))
    cfg = _write(tmp_path, "u.yaml", "instance: {path: two.json}\nmode: rm\nhorizon: 5\ntrials: 2\npolicies: [uniform]\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert (tmp_path / "o" / "regret.csv").read_text() == (GOLDEN / "uniform_regret.csv").read_text()


def test_trace_files_round_trip(tiny_config, tmp_path):
    cfg = ExperimentConfig.load(tiny_config)
    res = harness.run_experiment(cfg, workers=1, base=tiny_config.parent)
    harness.write_outputs(res, tmp_path / "o")
    loaded = harness.load_result(cfg, tmp_path / "o", tiny_config.parent)
    for key in ("lexelim-out", "lexelim-in", "ucb-a", "uniform"):
        for a, b in zip(res.policy("inst", key).traces, loaded.policy("inst", key).traces):
            np.testing.assert_array_equal(a.regret, b.regret)
            np.testing.assert_array_equal(a.pulls, b.pulls)
            assert a.eliminations == b.eliminations
            assert a.stopping_time == b.stopping_time
            assert a.coverage_held == b.coverage_held
    assert harness.load_result(cfg, tmp_path / "missing", tiny_config.parent) is None


def _same_tree(a: Path, b: Path):
    cmp = filecmp.dircmp(a, b)
    assert not cmp.left_only and not cmp.right_only and not cmp.diff_files, (cmp.left_only, cmp.diff_files)
    for sub in cmp.common_dirs:
        _same_tree(a / sub, b / sub)
    for name in cmp.common_files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rerun_is_byte_identical(tiny_config, tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", str(tiny_config), "--out", str(tmp_path / name), "--quiet"]) == 0
    _same_tree(tmp_path / "a", tmp_path / "b")


def test_parallel_run_is_byte_identical(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "1")
    assert main(["run", "--config", str(tiny_config), "--out", str(tmp_path / "serial"), "--quiet"]) == 0
    monkeypatch.setenv(harness.THREADS_ENV, str(max(2, os.cpu_count() or 2)))
    cfg = ExperimentConfig.load(tiny_config)
    res = harness.run_experiment(cfg, workers=4, base=tiny_config.parent)
    harness.write_outputs(res, tmp_path / "parallel")
    _same_tree(tmp_path / "serial", tmp_path / "parallel")


def test_seed_and_trials_flags(tiny_config, tmp_path):
    assert main(["run", "--config", str(tiny_config), "--out", str(tmp_path / "o"),
                 "--seed", "5", "--trials", "1", "--quiet"]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["config"]["seed"] == 5 and s["config"]["trials"] == 1
    assert not harness.trace_paths(tmp_path / "o", "inst", "uniform", 1)[0].exists()


# -- cli bounds / verify ----------------------------------------------------------------------------

def test_bounds_without_and_with_traces(tiny_config, tmp_path):
    out = tmp_path / "o"
    assert main(["bounds", "--config", str(tiny_config), "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "bounds.json").read_text())
    assert "comparison" not in rep["instances"]["inst"]
    assert rep["instances"]["inst"]["bounds"]["scaledGapDominatesFirstGap"] is True
    assert main(["run", "--config", str(tiny_config), "--out", str(out), "--quiet"]) == 0
    assert main(["bounds", "--config", str(tiny_config), "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "bounds.json").read_text())
    comp = rep["instances"]["inst"]["comparison"]
    assert set(comp) == {"lexelim-out", "lexelim-in"}
    assert len(comp["lexelim-in"]["objectives"]) == 2


def test_bounds_tripeak_values(tmp_path):
    cfg = _write(tmp_path, "p.yaml", "instance: {K: 10}\ndelta: 0.01\n")
    assert main(["bounds", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    b = json.loads((tmp_path / "o" / "bounds.json").read_text())["instances"]["K10"]["bounds"]
    assert b["lambda"] == pytest.approx(2.0)
    assert b["regretBoundOut"][0] == pytest.approx(76860.832113105446, rel=1e-12)
    assert b["sampleBoundIn"][2] == pytest.approx(767742.70959691901, rel=1e-12)


def test_bounds_all_tied_instance_is_zero(tmp_path):
    _write(tmp_path, "tie.json", json.dumps({"K": 3, "m": 2, "means": [[0.5, 0.5]] * 3, "noise": {}}))
    cfg = _write(tmp_path, "t.yaml", "instance: {path: tie.json}\n")
    assert main(["bounds", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    b = json.loads((tmp_path / "o" / "bounds.json").read_text())["instances"]["tie"]["bounds"]
    assert b["regretBoundOut"] == [0.0, 0.0] and b["sampleBoundIn"] == [0.0, 0.0]


def test_verify_zero_noise_passes(tmp_path, capsys):
    _write(tmp_path, "z.json", json.dumps({"K": 2, "m": 1, "means": [[1.0], [0.0]], "noise": {"variance": 1e-12}}))
    cfg = _write(tmp_path, "z.yaml", "instance: {path: z.json}\nmode: bai\ntrials: 3\ndelta: 0.05\n"
                                     "policies: [lexelim-out, lexelim-in]\n")
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "v"), "--quiet"]) == 0
    report = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert report["passed"] and all(c["passed"] for c in report["checks"])


def test_verify_rejects_corrupted_trace(tiny_config, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", str(tiny_config), "--out", str(out), "--quiet"]) == 0
    assert main(["verify", "--config", str(tiny_config), "--traces", str(out), "--quiet"]) == 0
    _, summ = harness.trace_paths(out, "inst", "lexelim-in", 1)
    d = json.loads(summ.read_text())
    d["pulls"][0] += 3
    summ.write_text(json.dumps(d))
    assert main(["verify", "--config", str(tiny_config), "--traces", str(out), "--quiet"]) == 1
    assert "FAIL inst/lexelim-in consistency" in capsys.readouterr().out


def test_verify_missing_traces(tiny_config, tmp_path):
    assert main(["verify", "--config", str(tiny_config), "--traces", str(tmp_path / "none"), "--quiet"]) == 2


def test_cli_config_errors(tmp_path, capsys):
    bad = _write(tmp_path, "bad.yaml", "mode: nope\n")
    assert main(["run", "--config", str(bad), "--quiet"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.yaml"), "--quiet"]) == 2
    k15 = _write(tmp_path, "k15.yaml", "instance: {K: 15}\n")
    assert main(["bounds", "--config", str(k15), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_cli_unwritable_output(tiny_config, tmp_path):
    blocker = _write(tmp_path, "file", "")
    assert main(["run", "--config", str(tiny_config), "--out", str(blocker / "sub"), "--quiet"]) == 2


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])

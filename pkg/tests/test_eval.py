"""Evaluation stack: metrics, efficiency tables, transfer harness, plots."""

import csv
import json

import numpy as np
import pytest

from seqmarl.config import ConfigError
from seqmarl.envs import env_from_spec
from seqmarl.eval import (NOT_REACHED, SMOOTH_WINDOW, EpisodeResult,
                          MetricRecord, TransferReport, aulc, avg_step_reward,
                          dead_ratio, load_log, reach_ratio,
                          reach_ratio_from_trajectory, run_episodes, srt_att,
                          transfer_eval, win_rate, write_trajectory)
from seqmarl.model import ModelConfig, SeqModel
from seqmarl.nn import ContractError
from seqmarl.rl import save_checkpoint


def ep(seed=0, steps=10, reward=5.0, win=False, reached=None, collided=None):
    return EpisodeResult(seed=seed, steps=steps, total_reward=reward, win=win,
                         reached=None if reached is None else np.array(reached),
                         collided=None if collided is None else np.array(collided))


# ---- metrics ----


def test_metrics_pool_over_agents_and_episodes():
    results = [
        ep(reached=[True, False, True], collided=[False, False, True], win=True),
        ep(reached=[False, False], collided=[True, False], steps=4, reward=2.0),
    ]
    assert reach_ratio(results) == pytest.approx(2 / 5)
    assert dead_ratio(results) == pytest.approx(2 / 5)
    assert win_rate(results) == pytest.approx(1 / 2)
    assert avg_step_reward(results) == pytest.approx(7.0 / 14)


def test_metrics_contract_errors():
    with pytest.raises(ContractError):
        reach_ratio([ep()])  # no reached flags anywhere
    with pytest.raises(ContractError):
        dead_ratio([ep()])
    with pytest.raises(ContractError):
        win_rate([])
    with pytest.raises(ContractError):
        avg_step_reward([ep(steps=0)])
    with pytest.raises(ContractError):
        MetricRecord("m", 1.0, 4, 0, episodes=0, mean=1.0, std=0.0)
    with pytest.raises(ContractError):
        MetricRecord("m", 1.0, 4, 0, episodes=1, mean=1.0, std=-0.1)


# ---- SRT/ATT and learning-curve area ----


def ramp_records(k=20):
    return [{"update": i + 1, "timestep": 100 * (i + 1),
             "mean_return": i / (k - 1), "wallclock_s": 0.5 * (i + 1)}
            for i in range(k)]


def test_srt_att_against_replicated_smoothing():
    records = ramp_records()
    values = [r["mean_return"] for r in records]
    smoothed = [np.mean(values[max(0, i - SMOOTH_WINDOW + 1):i + 1])
                for i in range(len(values))]
    rows = srt_att(records, thresholds=[0, 0.3, 0.6, 2.0], reference=1.0)

    assert rows[0]["timestep"] == 100  # threshold 0: first record
    for row, thr in zip(rows[1:3], (0.3, 0.6)):
        want = next(i for i, s in enumerate(smoothed) if s >= thr)
        assert row["timestep"] == records[want]["timestep"]
        assert row["wallclock_s"] == records[want]["wallclock_s"]
    assert rows[3]["timestep"] == NOT_REACHED
    assert rows[3]["wallclock_s"] == NOT_REACHED


def test_srt_att_validates_input():
    with pytest.raises(ContractError):
        srt_att([], [0.5])
    with pytest.raises(ContractError):
        srt_att([{"timestep": 1}], [0.5], metric="mean_return")


def test_aulc_matches_trapezoid_oracle(rng):
    records = [{"timestep": t, "mean_return": float(v)}
               for t, v in zip(np.cumsum(rng.integers(1, 50, size=8)),
                               rng.standard_normal(8))]
    got = aulc(records)
    area = 0.0
    for a, b in zip(records, records[1:]):
        area += 0.5 * (a["mean_return"] + b["mean_return"]) * (
            b["timestep"] - a["timestep"])
    span = records[-1]["timestep"] - records[0]["timestep"]
    assert got == pytest.approx(area / span, abs=1e-12)
    assert aulc(records[:1]) == records[0]["mean_return"]
    with pytest.raises(ContractError):
        aulc([{"timestep": 5, "mean_return": 1.0},
              {"timestep": 5, "mean_return": 2.0}])


def test_load_log_joins_wallclock_sidecar(tmp_path):
    log = tmp_path / "run.jsonl"
    with open(log, "w") as fh:
        for u in (1, 2):
            fh.write(json.dumps({"update": u, "timestep": 10 * u,
                                 "mean_return": float(u)}) + "\n")
    with open(str(log) + ".time", "w") as fh:
        fh.write(json.dumps({"update": 2, "wallclock_s": 3.5}) + "\n")
    records = load_log(log)
    assert "wallclock_s" not in records[0]
    assert records[1]["wallclock_s"] == 3.5
    (tmp_path / "bare.jsonl").write_text(json.dumps({"update": 1}) + "\n")
    assert load_log(tmp_path / "bare.jsonl") == [{"update": 1}]


# ---- rollout harness ----


def nav_factory():
    return env_from_spec({"kind": "dubins", "n_agents": 2, "n_obstacles": 0,
                          "max_steps": 40})


def nav_model(seed=0):
    probe = nav_factory()
    mc = ModelConfig(obs_dim=probe.obs_dim, action_space=probe.action_space,
                     embed_dim=8, n_heads=2, n_blocks_encoder=1,
                     n_blocks_decoder=1, value_mode="srsv")
    return SeqModel(mc, seed=seed)


def test_run_episodes_random_mode_fields_and_determinism():
    kw = dict(mode="random", batch=3)
    a = run_episodes(None, nav_factory, [0, 1, 2, 3],
                     rng=np.random.default_rng(7), **kw)
    b = run_episodes(None, nav_factory, [0, 1, 2, 3],
                     rng=np.random.default_rng(7), **kw)
    for ra, rb in zip(a, b):
        assert ra.seed == rb.seed and ra.total_reward == rb.total_reward
        assert ra.steps <= 40
        assert ra.reached.shape == (2,) and ra.collided.shape == (2,)
        assert ra.win == bool(ra.reached.all())


def test_run_episodes_argmax_is_batch_invariant():
    model = nav_model()
    one = run_episodes(model, nav_factory, [5, 6, 7], mode="argmax", batch=1)
    many = run_episodes(model, nav_factory, [5, 6, 7], mode="argmax", batch=8)
    for ra, rb in zip(one, many):
        assert ra.total_reward == pytest.approx(rb.total_reward, abs=1e-9)
        assert ra.steps == rb.steps
        assert np.array_equal(ra.reached, rb.reached)


def test_run_episodes_guards():
    with pytest.raises(ContractError):
        run_episodes(None, nav_factory, [0], mode="argmax")
    with pytest.raises(ContractError):
        run_episodes(nav_model(), nav_factory, [0], mode="sample")
    with pytest.raises(ContractError):
        run_episodes(nav_model(), nav_factory, [0], mode="best")


def test_trajectory_dump_offline_recount(tmp_path):
    res = run_episodes(None, nav_factory, [3], mode="random",
                       rng=np.random.default_rng(1), record=True)[0]
    path = tmp_path / "traj.csv"
    write_trajectory(path, res)
    offline = reach_ratio_from_trajectory(path)
    assert offline == pytest.approx(reach_ratio([res]), abs=1e-12)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 2 * (res.steps + 1)  # initial frame + one per step
    bare = run_episodes(None, nav_factory, [3], mode="random",
                        rng=np.random.default_rng(1))[0]
    with pytest.raises(ContractError):
        write_trajectory(tmp_path / "no.csv", bare)


# ---- transfer harness ----


def test_transfer_random_baseline_report(tmp_path):
    rep = transfer_eval(None, populations=[4], seeds=[0, 1], episodes=2)
    assert rep.train_tag == "random"
    mean, std = rep.cell("reach_ratio", 4)
    assert 0.0 <= mean <= 1.0 and std >= 0.0
    assert len(rep.records) == 4 * 2  # metrics x seeds

    out = tmp_path / "transfer.csv"
    rep.to_csv(out)
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 4 and {r["metric"] for r in rows} == {
        "reach_ratio", "dead_ratio", "win_rate", "avg_step_reward"}
    assert all(r["eval_population"] == "4" and r["seeds"] == "0 1" for r in rows)
    assert rep.table().splitlines()[0].startswith("train_tag")

    again = transfer_eval(None, populations=[4], seeds=[0, 1], episodes=2)
    assert again.rows() == rep.rows()


def test_transfer_checkpoint_loads_and_evaluates(tmp_path):
    probe = env_from_spec({"kind": "dubins", "scenario": "scenarios/dubins_n4.txt"})
    mc = ModelConfig(obs_dim=probe.obs_dim, action_space=probe.action_space,
                     embed_dim=8, n_heads=2, n_blocks_encoder=1,
                     n_blocks_decoder=1, value_mode="srsv")
    path = tmp_path / "nav_model.bin"
    save_checkpoint(path, SeqModel(mc, seed=0))
    rep = transfer_eval(str(path), populations=[4], seeds=[0], episodes=1)
    assert rep.train_tag == "nav_model"
    assert rep.cell("win_rate", 4)[0] in (0.0, 1.0)


def test_transfer_missing_scenario_is_config_error():
    with pytest.raises(ConfigError, match="scenario"):
        transfer_eval(None, populations=[3], seeds=[0], episodes=1)


def test_transfer_report_cell_lookup():
    rep = TransferReport(train_tag="t", populations=[4], seeds=[0], episodes=1)
    with pytest.raises(KeyError):
        rep.cell("reach_ratio", 4)


# ---- plots ----


def test_plot_log_and_trajectory(tmp_path):
    log = tmp_path / "curve.jsonl"
    with open(log, "w") as fh:
        for r in ramp_records(6):
            fh.write(json.dumps(r) + "\n")
    from seqmarl.eval.plots import plot_log, plot_trajectory
    written = plot_log(log, tmp_path / "plots", metrics=("mean_return",), smooth=3)
    assert len(written) == 1 and written[0].endswith("curve_mean_return.png")
    assert (tmp_path / "plots" / "curve_mean_return.png").stat().st_size > 0

    res = run_episodes(None, nav_factory, [0], mode="random",
                       rng=np.random.default_rng(0), record=True)[0]
    traj = tmp_path / "traj.csv"
    write_trajectory(traj, res)
    out = plot_trajectory(traj, tmp_path / "traj.png", arena_half_width=1.5)
    assert (tmp_path / "traj.png").stat().st_size > 0 and str(out).endswith("traj.png")

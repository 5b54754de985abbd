"""Advantage estimation, PPO losses, checkpointing, trainer behavior."""

import json
import struct

import numpy as np
import pytest

from seqmarl.envs import env_from_spec
from seqmarl.model import ModelConfig, SeqModel
from seqmarl.nn import ContractError, Tensor, TrainingAbortError
from seqmarl.rl import (CheckpointError, CheckpointVersionError, TrainConfig,
                        Trainer, gae_advantages, load_checkpoint,
                        minibatch_indices, model_from_checkpoint, policy_loss,
                        save_checkpoint, value_loss)
from seqmarl.rl.checkpoint import FORMAT_VERSION, MAGIC


def gae_oracle(rewards, values, bootstrap, gamma, lam, h):
    T, n = values.shape
    v_next = np.vstack([values[1:], bootstrap[None]])
    delta = rewards[:, None] + gamma * v_next - values
    H = T - 1 if h is None else min(h, T - 1)
    adv = np.zeros((T, n))
    for t in range(T):
        for i in range(n):
            s = 0.0
            for j in range(min(H, T - 1 - t) + 1):
                s += (gamma * lam) ** j * delta[t + j, i]
            adv[t, i] = s
    return adv, adv + values


@pytest.mark.parametrize("h", [0, 2, 5, None])
@pytest.mark.parametrize("terminal", [True, False])
def test_gae_matches_double_loop_oracle(rng, h, terminal):
    T, n = 9, 3
    rewards = rng.standard_normal(T)
    values = rng.standard_normal((T, n))
    bootstrap = np.zeros(n) if terminal else rng.standard_normal(n)
    adv, tgt = gae_advantages(rewards, values, bootstrap, 0.97, 0.9, h)
    oa, ot = gae_oracle(rewards, values, bootstrap, 0.97, 0.9, h)
    assert np.abs(adv - oa).max() < 1e-12
    assert np.abs(tgt - ot).max() < 1e-12


def test_gae_cutoff_saturates_at_episode_length(rng):
    T, n = 6, 2
    args = (rng.standard_normal(T), rng.standard_normal((T, n)),
            rng.standard_normal(n), 0.99, 0.95)
    full = gae_advantages(*args, h=None)[0]
    assert np.abs(gae_advantages(*args, h=T - 1)[0] - full).max() < 1e-12
    assert np.abs(gae_advantages(*args, h=10 * T)[0] - full).max() < 1e-12


def test_gae_bootstrap_only_enters_last_delta(rng):
    T, n = 5, 2
    rewards = rng.standard_normal(T)
    values = rng.standard_normal((T, n))
    boot = rng.standard_normal(n)
    a0 = gae_advantages(rewards, values, np.zeros(n), 0.95, 0.9, h=0)[0]
    a1 = gae_advantages(rewards, values, boot, 0.95, 0.9, h=0)[0]
    # with h=0 only delta_t itself contributes, so rows 0..T-2 are identical
    assert np.abs(a1[:-1] - a0[:-1]).max() < 1e-15
    assert np.abs((a1[-1] - a0[-1]) - 0.95 * boot).max() < 1e-12


def test_gae_rejects_bad_shapes(rng):
    with pytest.raises(ContractError):
        gae_advantages(np.zeros(4), np.zeros((5, 2)), np.zeros(2), 0.9, 0.9)
    with pytest.raises(ContractError):
        gae_advantages(np.zeros(5), np.zeros((5, 2)), np.zeros(3), 0.9, 0.9)
    with pytest.raises(ContractError):
        gae_advantages(np.zeros(5), np.zeros((5, 2)), np.zeros(2), 0.9, 0.9, h=-1)


def test_value_loss_matches_scalar_loop(rng):
    preds = rng.standard_normal((4, 3))
    tgts = rng.standard_normal((4, 3))
    got = float(value_loss(Tensor(preds), tgts).data)
    want = np.mean([sum((preds[b, i] - tgts[b, i]) ** 2 for i in range(3))
                    for b in range(4)])
    assert abs(got - want) < 1e-12


def test_value_loss_aborts_on_non_finite():
    with pytest.raises(TrainingAbortError):
        value_loss(Tensor(np.array([[np.nan]])), np.array([[0.0]]))
    with pytest.raises(TrainingAbortError):
        value_loss(Tensor(np.array([[0.0]])), np.array([[np.inf]]))


@pytest.mark.parametrize("ratio,adv,expected", [
    (1.0, 2.0, -2.0),     # inside the clip band: plain ratio * A
    (1.5, 1.0, -1.2),     # ratio above 1+eps, positive A: clipped branch wins
    (0.5, -1.0, 0.8),     # ratio below 1-eps, negative A: clipped branch wins
    (1.5, -1.0, 1.5),     # negative A, large ratio: unclipped branch is smaller
    (0.5, 2.0, -1.0),     # positive A, small ratio: unclipped branch is smaller
])
def test_policy_loss_analytic_clip_cases(ratio, adv, expected):
    new_lp = Tensor(np.array([np.log(ratio)]))
    loss, _ = policy_loss(new_lp, np.zeros(1), np.array([adv]),
                          clip_eps=0.2, standardize_adv=False)
    assert abs(float(loss.data) - expected) < 1e-12


def test_policy_loss_standardizes_advantages(rng):
    new_lp = Tensor(np.zeros(8))
    adv = rng.standard_normal(8) * 5 + 3
    loss, _ = policy_loss(new_lp, np.zeros(8), adv, clip_eps=0.2)
    # ratios are 1, so the loss is -mean(standardized A) = 0
    assert abs(float(loss.data)) < 1e-10


@pytest.mark.filterwarnings("ignore:overflow encountered in exp")
def test_policy_loss_aborts_on_non_finite_ratio():
    with pytest.raises(TrainingAbortError):
        policy_loss(Tensor(np.array([1e4])), np.zeros(1), np.ones(1), 0.2)


def test_minibatch_indices_partition(rng):
    chunks = minibatch_indices(rng, 23, 5)
    flat = np.concatenate(chunks)
    assert sorted(flat.tolist()) == list(range(23))
    assert all(len(c) <= 5 for c in chunks)
    with pytest.raises(ContractError):
        minibatch_indices(rng, 10, 0)


# ---- trainer on a small matrix game ----

MATRIX_SPEC = {"kind": "matrix", "payoff": "coordination",
               "n_agents": 3, "n_actions": 2, "horizon": 2}


def matrix_trainer(tmp_path, seed=0, log=False, **overrides):
    factory = lambda: env_from_spec(dict(MATRIX_SPEC))
    probe = factory()
    mc = ModelConfig(obs_dim=probe.obs_dim, action_space=probe.action_space,
                     embed_dim=8, n_heads=2, n_blocks_encoder=1,
                     n_blocks_decoder=1, value_mode="srsv")
    tc = TrainConfig(updates=2, episodes_per_update=6, minibatch_size=16,
                     ppo_epochs=2, lr=1e-3, **overrides)
    log_path = str(tmp_path / f"run_s{seed}.jsonl") if log else None
    return Trainer(factory, SeqModel(mc, seed=7), tc, seed=seed,
                   log_path=log_path)


def test_first_epoch_ratios_are_one(tmp_path):
    tr = matrix_trainer(tmp_path)
    buffer = tr.collect_rollouts()
    flat_obs = np.concatenate([ep.obs for ep in buffer.episodes])
    flat_act = np.concatenate([ep.actions for ep in buffer.episodes])
    flat_lp = np.concatenate([ep.log_probs for ep in buffer.episodes])
    emb = tr.model.encode(flat_obs)
    logp, _, _ = tr.model.evaluate_actions(emb, flat_act)
    assert np.abs(logp.data - flat_lp).max() < 1e-10


def test_trainer_update_record_and_log(tmp_path):
    tr = matrix_trainer(tmp_path, log=True)
    rec = tr.update()
    assert rec["update"] == 1 and rec["timestep"] == 12  # 6 episodes x horizon 2
    assert np.isfinite([rec["mean_return"], rec["value_loss"],
                        rec["policy_loss"], rec["grad_norm"]]).all()
    lines = [json.loads(l) for l in open(tr.log_path)]
    assert len(lines) == 1 and "wallclock_s" not in lines[0]
    side = [json.loads(l) for l in open(str(tr.log_path) + ".time")]
    assert side[0]["update"] == 1 and side[0]["wallclock_s"] > 0


def test_equal_seeds_give_byte_identical_logs(tmp_path):
    a = matrix_trainer(tmp_path / "a", seed=3, log=True)
    (tmp_path / "a").mkdir(exist_ok=True)
    (tmp_path / "b").mkdir(exist_ok=True)
    a = matrix_trainer(tmp_path / "a", seed=3, log=True)
    b = matrix_trainer(tmp_path / "b", seed=3, log=True)
    a.train(2)
    b.train(2)
    assert open(a.log_path, "rb").read() == open(b.log_path, "rb").read()


def test_distinct_seeds_diverge(tmp_path):
    a = matrix_trainer(tmp_path, seed=0, log=True)
    b = matrix_trainer(tmp_path, seed=1)
    ra = a.update()
    rb = b.update()
    assert ra["mean_return"] != rb["mean_return"] or ra["value_loss"] != rb["value_loss"]


def test_train_zero_updates_still_writes_final_checkpoint(tmp_path):
    tr = matrix_trainer(tmp_path)
    tr.train(0, checkpoint_dir=str(tmp_path / "ck"))
    ckpt = load_checkpoint(tmp_path / "ck" / "ckpt_final.bin")
    assert ckpt.counters == {"update": 0, "timestep": 0}
    for name, p in tr.model.named_parameters():
        assert np.array_equal(ckpt.params[name], p.data)


def test_trainer_rejects_mismatched_env(tmp_path):
    factory = lambda: env_from_spec(dict(MATRIX_SPEC))
    mc = ModelConfig(obs_dim=99, action_space=factory().action_space,
                     embed_dim=8, n_heads=2)
    with pytest.raises(ContractError):
        Trainer(factory, SeqModel(mc, seed=0), TrainConfig(episodes_per_update=2))


# ---- checkpoint container ----


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    tr = matrix_trainer(tmp_path)
    tr.update()
    path = tmp_path / "ck.bin"
    tr.save(path)
    ckpt = load_checkpoint(path)
    assert ckpt.version == FORMAT_VERSION
    assert ckpt.counters == {"update": 1, "timestep": 12}
    for name, p in tr.model.named_parameters():
        assert np.array_equal(ckpt.params[name], p.data)
    opt = tr.opt.state_dict()
    assert ckpt.optimizer_state["t"] == opt["t"]
    for name in opt["m"]:
        assert np.array_equal(ckpt.optimizer_state["m"][name], opt["m"][name])
        assert np.array_equal(ckpt.optimizer_state["v"][name], opt["v"][name])
    assert ckpt.rng_state == tr.rng.bit_generator.state

    clone = model_from_checkpoint(ckpt)
    obs = np.random.default_rng(5).standard_normal((3, tr.model.config.obs_dim))
    a = tr.model.encode(obs).data
    b = clone.encode(obs).data
    assert np.array_equal(a, b)


def test_checkpoint_rejects_corruption(tmp_path):
    tr = matrix_trainer(tmp_path)
    path = tmp_path / "ck.bin"
    tr.save(path)
    blob = open(path, "rb").read()

    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)

    bad.write_bytes(blob[:-5])  # truncated payload
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)

    bad.write_bytes(blob + b"xx")  # trailing bytes
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)

    wrong = bytearray(blob)
    struct.pack_into("<I", wrong, len(MAGIC), FORMAT_VERSION + 1)
    bad.write_bytes(bytes(wrong))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(bad)

    mangled = bytearray(blob)
    mangled[len(MAGIC) + 8] = 0xFF  # first header byte: JSON no longer parses
    bad.write_bytes(bytes(mangled))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)

    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.bin")

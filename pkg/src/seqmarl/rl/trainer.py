"""On-policy training loop: inference phase (episode collection) alternating
with a PPO training phase over minibatches of the collected transitions."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..model import SeqModel
from ..nn import ContractError, Adam, Tensor, TrainingAbortError, clip_grad_norm, no_grad
from .buffer import Episode, RolloutBuffer, Transition, minibatch_indices
from .checkpoint import save_checkpoint
from .gae import compute_gae
from .losses import policy_loss, value_loss

LOG_FIELDS = ("update", "timestep", "mean_return", "value_loss", "policy_loss",
              "entropy", "grad_norm", "wallclock_s")


@dataclass
class TrainConfig:
    updates: int = 100
    episodes_per_update: int = 8      # K episodes per inference phase
    max_episode_steps: int = 0        # T cap; 0 defers to the env's own limit
    gamma: float = 0.99
    gae_lambda: float = 0.95
    gae_h: int | None = None          # None sums deltas to episode end
    clip_eps: float = 0.2
    ppo_epochs: int = 5
    minibatch_size: int = 64
    value_coef: float = 1.0
    entropy_coef: float = 0.01
    lr: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float = 0.5
    advantage_norm: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ContractError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_eps <= 0.0:
            raise ContractError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.gae_h is not None and self.gae_h < 0:
            raise ContractError(f"gae_h must be >= 0 or None, got {self.gae_h}")
        if self.ppo_epochs < 0 or self.updates < 0:
            raise ContractError("ppo_epochs and updates must be >= 0")
        if self.episodes_per_update < 1 or self.minibatch_size < 1:
            raise ContractError("episodes_per_update and minibatch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class Trainer:
    """Owns the model, optimizer, environment instances, and the train log."""

    def __init__(self, env_factory, model: SeqModel, config: TrainConfig,
                 seed: int = 0, log_path=None, workers: int = 1):
        self.model = model
        self.config = config
        probe = env_factory()
        if probe.obs_dim != model.config.obs_dim:
            raise ContractError(
                f"env obs_dim {probe.obs_dim} != model obs_dim {model.config.obs_dim}"
            )
        if probe.action_space != model.config.action_space:
            raise ContractError("env and model action spaces differ")
        self.envs = [probe] + [env_factory() for _ in range(config.episodes_per_update - 1)]
        self.rng = np.random.default_rng(seed)
        self.opt = Adam(list(model.named_parameters()), lr=config.lr,
                        beta1=config.adam_beta1, beta2=config.adam_beta2,
                        eps=config.adam_eps)
        self.log_path = log_path
        self.workers = max(1, int(workers))
        self.update_count = 0
        self.timesteps = 0
        self.wallclock = 0.0

    # ---- inference phase ----

    def collect_rollouts(self) -> RolloutBuffer:
        cfg = self.config
        K = cfg.episodes_per_update
        seeds = [int(s) for s in self.rng.integers(0, 2**63 - 1, size=K)]
        obs = [env.reset(seed) for env, seed in zip(self.envs, seeds)]
        has_avail = self.envs[0].available_actions() is not None
        avail = [env.available_actions() for env in self.envs] if has_avail else None

        transitions: list[list[Transition]] = [[] for _ in range(K)]
        finals: dict[int, tuple] = {}
        active = list(range(K))
        pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        try:
            while active:
                obs_batch = np.stack([obs[k] for k in active])
                avail_batch = np.stack([avail[k] for k in active]) if has_avail else None
                with no_grad():
                    emb = self.model.encode(obs_batch)
                    actions, lps = self.model.rollout_joint(
                        emb, mode="sample", rng=self.rng, avail=avail_batch
                    )
                if pool is not None:
                    step_results = list(pool.map(
                        _safe_step, [self.envs[k] for k in active], actions, active
                    ))
                else:
                    step_results = [
                        _safe_step(self.envs[k], actions[i], k)
                        for i, k in enumerate(active)
                    ]
                still_active = []
                for i, k in enumerate(active):
                    nobs, reward, done, info = step_results[i]
                    transitions[k].append(Transition(
                        obs=obs[k], actions=actions[i], log_probs=lps[i],
                        reward=reward, done=done,
                        avail=avail[k] if has_avail else None,
                    ))
                    obs[k] = nobs
                    if has_avail:
                        avail[k] = self.envs[k].available_actions()
                    truncated = (cfg.max_episode_steps > 0
                                 and len(transitions[k]) >= cfg.max_episode_steps
                                 and not done)
                    if done or truncated:
                        terminal = done and not info.get("time_limit", False)
                        finals[k] = (nobs, terminal, avail[k] if has_avail else None)
                    else:
                        still_active.append(k)
                active = still_active
        finally:
            if pool is not None:
                pool.shutdown()

        buffer = RolloutBuffer()
        for k in range(K):
            buffer.add_episode(Episode.from_transitions(transitions[k], *finals[k]))
        return buffer

    def _attach_values(self, buffer: RolloutBuffer, chunk: int = 512):
        """Per-agent value estimates for every stored step, plus bootstraps."""
        with no_grad():
            obs_all = np.concatenate([ep.obs for ep in buffer.episodes])
            act_all = np.concatenate([ep.actions for ep in buffer.episodes])
            has_avail = buffer.episodes[0].avail is not None
            avail_all = (np.concatenate([ep.avail for ep in buffer.episodes])
                         if has_avail else None)
            parts = []
            for lo in range(0, obs_all.shape[0], chunk):
                emb = self.model.encode(obs_all[lo:lo + chunk])
                parts.append(self.model.estimate_values(
                    emb, act_all[lo:lo + chunk],
                    avail=None if avail_all is None else avail_all[lo:lo + chunk],
                ).data)
            values = np.concatenate(parts)

            offset = 0
            truncated = [ep for ep in buffer.episodes if not ep.terminal]
            for ep in buffer.episodes:
                ep.values = values[offset:offset + ep.length]
                offset += ep.length
                if ep.terminal:
                    ep.bootstrap = np.zeros(ep.obs.shape[1])
            if truncated:
                fin_obs = np.stack([ep.final_obs for ep in truncated])
                fin_avail = (np.stack([ep.final_avail for ep in truncated])
                             if has_avail else None)
                emb = self.model.encode(fin_obs)
                boots = self.model.estimate_values(emb, actions=None, avail=fin_avail).data
                for ep, b in zip(truncated, boots):
                    ep.bootstrap = b

    # ---- training phase ----

    def update(self) -> dict:
        cfg = self.config
        t0 = time.monotonic()
        buffer = self.collect_rollouts()
        self._attach_values(buffer)
        compute_gae(buffer, cfg.gamma, cfg.gae_lambda, cfg.gae_h)
        flat = buffer.flatten()
        total = flat["obs"].shape[0]

        v_losses, p_losses, entropies, grad_norms = [], [], [], []
        for _ in range(cfg.ppo_epochs):
            for idx in minibatch_indices(self.rng, total, cfg.minibatch_size):
                emb = self.model.encode(Tensor(flat["obs"][idx]))
                logp, ent, values = self.model.evaluate_actions(
                    emb, flat["actions"][idx],
                    avail=None if flat["avail"] is None else flat["avail"][idx],
                )
                v_l = value_loss(values, flat["value_targets"][idx])
                p_l, stats = policy_loss(
                    logp, flat["log_probs"][idx], flat["advantages"][idx],
                    cfg.clip_eps, entropy=ent, entropy_coef=cfg.entropy_coef,
                    standardize_adv=cfg.advantage_norm,
                )
                loss = p_l + cfg.value_coef * v_l
                if not np.isfinite(loss.data).all():
                    raise TrainingAbortError(
                        f"non-finite loss at update {self.update_count + 1}"
                    )
                self.model.zero_grad()
                loss.backward()
                grad_norms.append(clip_grad_norm(self.model.parameters(),
                                                 cfg.max_grad_norm))
                self.opt.step()
                v_losses.append(float(v_l.data))
                p_losses.append(float(p_l.data))
                entropies.append(stats.get("entropy", 0.0))

        self.update_count += 1
        self.timesteps += buffer.num_transitions
        self.wallclock += time.monotonic() - t0
        record = {
            "update": self.update_count,
            "timestep": self.timesteps,
            "mean_return": buffer.mean_return(),
            "value_loss": float(np.mean(v_losses)) if v_losses else 0.0,
            "policy_loss": float(np.mean(p_losses)) if p_losses else 0.0,
            "entropy": float(np.mean(entropies)) if entropies else 0.0,
            "grad_norm": float(np.mean(grad_norms)) if grad_norms else 0.0,
            "wallclock_s": self.wallclock,
        }
        if self.log_path:
            # wallclock goes to a sidecar so equal-seed runs produce
            # byte-identical logs; SRT/ATT joins the two files on update.
            line = {k: record[k] for k in LOG_FIELDS if k != "wallclock_s"}
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(line) + "\n")
            with open(str(self.log_path) + ".time", "a") as fh:
                fh.write(json.dumps({"update": record["update"],
                                     "wallclock_s": record["wallclock_s"]}) + "\n")
        return record

    def train(self, updates: int | None = None, checkpoint_dir=None,
              checkpoint_every: int = 0, progress=None) -> list:
        n = self.config.updates if updates is None else updates
        if checkpoint_dir:
            os.makedirs(checkpoint_dir, exist_ok=True)
        records = []
        for _ in range(n):
            rec = self.update()
            records.append(rec)
            if progress is not None:
                progress(rec)
            if (checkpoint_dir and checkpoint_every
                    and self.update_count % checkpoint_every == 0):
                self.save(os.path.join(checkpoint_dir,
                                       f"ckpt_{self.update_count:05d}.bin"))
        if checkpoint_dir:
            self.save(os.path.join(checkpoint_dir, "ckpt_final.bin"))
        return records

    def save(self, path):
        save_checkpoint(
            path, self.model, optimizer=self.opt,
            rng_state=self.rng.bit_generator.state,
            counters={"update": self.update_count, "timestep": self.timesteps},
        )


def _safe_step(env, actions, episode_idx):
    try:
        return env.step(actions)
    except Exception as e:  # noqa: BLE001 - env faults become structured aborts
        raise TrainingAbortError(f"environment fault in episode {episode_idx}: {e}") from e

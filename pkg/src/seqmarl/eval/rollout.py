"""Argmax/sample/random evaluation rollouts, batched across episodes."""

from __future__ import annotations

import csv

import numpy as np

from ..nn import ContractError, no_grad
from .metrics import EpisodeResult

TRAJ_HEADER = ("t", "agent", "px", "py", "theta", "v", "reached")


def _random_actions(env, rng):
    space = env.action_space
    if space.kind == "discrete":
        avail = env.available_actions()
        if avail is None:
            return rng.integers(0, space.n, size=env.n_agents)
        # sample uniformly among available actions per agent
        out = np.empty(env.n_agents, dtype=int)
        for i in range(env.n_agents):
            out[i] = rng.choice(np.flatnonzero(avail[i]))
        return out
    lo, hi = np.asarray(space.low), np.asarray(space.high)
    return rng.uniform(lo, hi, size=(env.n_agents, lo.size))


def _win(env, info, total_reward) -> bool:
    if "all_reached" in info:
        return bool(info["all_reached"])
    if "optimal_return" in info:
        return total_reward >= info["optimal_return"] - 1e-9
    return False


def _record_frame(env, frames):
    st = env.state
    frames.append((st.t, st.pose.copy(), st.reached.copy()))


def run_episodes(model, env_factory, seeds, mode: str = "argmax", rng=None,
                 batch: int = 8, record: bool = False) -> list:
    """Runs one episode per seed and returns EpisodeResults in seed order.

    Episodes are stepped in lockstep groups of `batch` so the model sees one
    [B, n, obs] batch per env step. An episode ends at the env's own time
    limit, or early once every agent has reached its goal (the monotone flags
    cannot change after that). mode "random" needs no model and draws uniform
    actions from the action space.
    """
    if mode not in ("argmax", "sample", "random"):
        raise ContractError(f"unknown eval mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ContractError("sample mode requires an rng")
    if mode == "random" and rng is None:
        rng = np.random.default_rng(0)
    if mode != "random" and model is None:
        raise ContractError(f"mode {mode!r} requires a model")

    results = [None] * len(seeds)
    with no_grad():
        for lo in range(0, len(seeds), batch):
            group = list(enumerate(seeds))[lo:lo + batch]
            envs, obs, acc = [], [], []
            for slot, seed in group:
                env = env_factory()
                o = env.reset(seed)
                envs.append(env)
                obs.append(o)
                r = EpisodeResult(seed=int(seed), steps=0, total_reward=0.0,
                                  win=False)
                if record and hasattr(env, "state"):
                    _record_frame(env, r.frames)
                acc.append((slot, r))
            active = list(range(len(envs)))
            while active:
                if mode == "random":
                    joint = [_random_actions(envs[k], rng) for k in active]
                else:
                    stack = np.stack([obs[k] for k in active])
                    avail = None
                    masks = [envs[k].available_actions() for k in active]
                    if masks[0] is not None:
                        avail = np.stack(masks)
                    emb = model.encode(stack)
                    joint, _ = model.rollout_joint(emb, mode=mode, rng=rng,
                                                   avail=avail)
                nxt = []
                for row, k in enumerate(active):
                    o, rew, done, info = envs[k].step(joint[row])
                    obs[k] = o
                    slot, res = acc[k]
                    res.steps += 1
                    res.total_reward += float(rew)
                    if record and hasattr(envs[k], "state"):
                        _record_frame(envs[k], res.frames)
                    finished = done or info.get("all_reached", False)
                    if finished:
                        res.win = _win(envs[k], info, res.total_reward)
                        if "reached" in info:
                            res.reached = info["reached"].copy()
                        if "collided_ever" in info:
                            res.collided = info["collided_ever"].copy()
                        results[slot] = res
                    else:
                        nxt.append(k)
                active = nxt
    return results


def write_trajectory(path, result: EpisodeResult) -> None:
    """Dumps recorded frames as CSV rows (t, agent, px, py, theta, v, reached)."""
    if not result.frames:
        raise ContractError("episode was not recorded; rerun with record=True")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJ_HEADER)
        for t, pose, reached in result.frames:
            for i in range(pose.shape[0]):
                w.writerow([t, i, f"{pose[i, 0]:.9g}", f"{pose[i, 1]:.9g}",
                            f"{pose[i, 2]:.9g}", f"{pose[i, 3]:.9g}",
                            int(reached[i])])


def reach_ratio_from_trajectory(path) -> float:
    """Offline recount: final reached flags per agent from a trajectory CSV."""
    final = {}
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            final[int(row["agent"])] = int(row["reached"])
    if not final:
        raise ContractError(f"empty trajectory file {path}")
    return sum(final.values()) / len(final)

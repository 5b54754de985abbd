"""Multi-agent unicycle (Dubins-car) navigation with goals and disc obstacles.

State per agent is [px, py, theta, v]; actions are [omega, accel]. Forward
Euler integration; a colliding agent is penalized and has its speed zeroed
for the step, but the episode runs on. Observations use k-nearest truncation
so their dimension never depends on the population size, and relative
vectors are direction-preserving saturated at a fixed sensing range so a
policy transfers across arena sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..model import ContinuousSpace
from ..nn import ContractError
from .base import Env, SimulationFault

PLACEMENT_ATTEMPTS = 10_000


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=np.float64), 2.0 * np.pi)


@dataclass(frozen=True)
class DubinsConfig:
    n_agents: int = 2
    arena_half_width: float = 1.5
    n_obstacles: int = 0
    obstacle_radius_min: float = 0.1
    obstacle_radius_max: float = 0.3
    goal_radius: float = 0.3
    collision_radius: float = 0.05
    sensing_range: float = 1.0
    dt: float = 0.03
    max_steps: int = 256
    v_max: float = 1.0
    omega_max: float = 2.0
    accel_max: float = 1.0
    # reward weights; the paper's source constants are unpublished, these are
    # explicit choices exposed here
    w_goal: float = 1.0
    goal_bonus: float = 10.0
    w_control: float = 0.1
    w_collision: float = 1.0
    collision_penalty: float = 10.0
    k_obstacles: int = 4
    k_neighbors: int = 4

    def __post_init__(self):
        if self.n_agents < 1:
            raise ContractError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.dt <= 0 or self.goal_radius <= 0 or self.max_steps < 1:
            raise ContractError("dt and goal_radius must be > 0 and max_steps >= 1")
        if self.obstacle_radius_min <= 0 or self.obstacle_radius_max < self.obstacle_radius_min:
            raise ContractError("obstacle radius range must be positive and ordered")
        if self.collision_radius <= 0 or self.arena_half_width <= 0:
            raise ContractError("collision_radius and arena_half_width must be > 0")
        if self.v_max <= 0 or self.omega_max <= 0 or self.accel_max <= 0:
            raise ContractError("kinematic bounds must be > 0")
        if self.sensing_range <= 0:
            raise ContractError("sensing_range must be > 0")

    @property
    def obs_dim(self) -> int:
        return 4 + 2 + 3 * self.k_obstacles + 2 * self.k_neighbors

    @property
    def action_space(self) -> ContinuousSpace:
        return ContinuousSpace(
            low=(-self.omega_max, -self.accel_max),
            high=(self.omega_max, self.accel_max),
        )

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DubinsConfig":
        return cls(**d)


@dataclass
class DubinsAction:
    """Angular velocity and longitudinal acceleration for one agent."""

    omega: float
    accel: float

    @staticmethod
    def clamp(actions: np.ndarray, config: DubinsConfig) -> np.ndarray:
        a = np.asarray(actions, dtype=np.float64)
        out = np.empty_like(a)
        out[..., 0] = np.clip(a[..., 0], -config.omega_max, config.omega_max)
        out[..., 1] = np.clip(a[..., 1], -config.accel_max, config.accel_max)
        return out


@dataclass
class DubinsState:
    pose: np.ndarray       # [n, 4]: px, py, theta, v
    goals: np.ndarray      # [n, 2]
    obstacles: np.ndarray  # [m, 3]: cx, cy, radius
    reached: np.ndarray    # [n] bool, monotone over an episode
    t: int = 0

    def copy(self) -> "DubinsState":
        return DubinsState(self.pose.copy(), self.goals.copy(),
                           self.obstacles.copy(), self.reached.copy(), self.t)


def _collisions(pose: np.ndarray, obstacles: np.ndarray, config: DubinsConfig) -> np.ndarray:
    """Overlap with another agent or an obstacle disc."""
    p = pose[:, :2]
    n = p.shape[0]
    hit = np.zeros(n, dtype=bool)
    if n > 1:
        d = np.linalg.norm(p[:, None] - p[None, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        hit |= (d < 2.0 * config.collision_radius).any(axis=1)
    if obstacles.shape[0]:
        d = np.linalg.norm(p[:, None] - obstacles[None, :, :2], axis=-1)
        hit |= (d < obstacles[None, :, 2] + config.collision_radius).any(axis=1)
    return hit


def dubins_step(state: DubinsState, actions: np.ndarray, config: DubinsConfig):
    """One forward-Euler step of [v cos(theta), v sin(theta), omega, accel].

    Returns (next_state, collided) where collided marks agents that overlap
    anything after moving; their speed is zeroed for this step.
    """
    a = DubinsAction.clamp(actions, config)
    pose = state.pose
    if not np.isfinite(pose).all():
        raise SimulationFault(f"non-finite state at step {state.t}")
    theta, v = pose[:, 2], pose[:, 3]
    nxt = np.empty_like(pose)
    nxt[:, 0] = pose[:, 0] + config.dt * v * np.cos(theta)
    nxt[:, 1] = pose[:, 1] + config.dt * v * np.sin(theta)
    nxt[:, 2] = wrap_angle(theta + config.dt * a[:, 0])
    nxt[:, 3] = np.clip(v + config.dt * a[:, 1], 0.0, config.v_max)
    hw = config.arena_half_width
    nxt[:, :2] = np.clip(nxt[:, :2], -hw, hw)

    collided = _collisions(nxt, state.obstacles, config)
    nxt[collided, 3] = 0.0
    if not np.isfinite(nxt).all():
        raise SimulationFault(f"non-finite state produced at step {state.t}")

    dist = np.linalg.norm(state.goals - nxt[:, :2], axis=-1)
    reached = state.reached | (dist < config.goal_radius)
    return DubinsState(nxt, state.goals.copy(), state.obstacles.copy(),
                       reached, state.t + 1), collided


def _at_goal(state: DubinsState, config: DubinsConfig) -> np.ndarray:
    """Instantaneous within-goal-radius test (unlike the monotone reached flag)."""
    dist = np.linalg.norm(state.goals - state.pose[:, :2], axis=-1)
    return dist < config.goal_radius


def nominal_action(state: DubinsState, config: DubinsConfig) -> np.ndarray:
    """Proportional steer-to-goal controller; agents inside the goal radius
    brake in place.

    Desired speed is v_max*(1+cos(err))/2: always forward when off-goal, so
    deviating from the controller is penalized for stalling too, not only
    for misaligned steering.
    """
    pose = state.pose
    at_goal = _at_goal(state, config)
    delta = state.goals - pose[:, :2]
    err = wrap_angle(np.arctan2(delta[:, 1], delta[:, 0]) - pose[:, 2])
    omega = np.clip(2.0 * err, -config.omega_max, config.omega_max)
    v_des = np.where(at_goal, 0.0,
                     config.v_max * 0.5 * (1.0 + np.cos(err)))
    accel = np.clip((v_des - pose[:, 3]) / config.dt,
                    -config.accel_max, config.accel_max)
    omega = np.where(at_goal, 0.0, omega)
    return np.stack([omega, accel], axis=-1)


def dubins_reward(state: DubinsState, actions: np.ndarray, next_state: DubinsState,
                  config: DubinsConfig, collided: np.ndarray | None = None) -> float:
    """Mean over agents of goal, nominal-control, and collision terms.

    The goal bonus pays while an agent currently occupies its goal disc, so
    the reward stays a function of observable state; the monotone reached
    flag is a metric, not a reward input.
    """
    if collided is None:
        # colliding agents stop in place, so overlap persists in next_state
        collided = _collisions(next_state.pose, next_state.obstacles, config)
    a = DubinsAction.clamp(actions, config)
    nominal = nominal_action(state, config)
    dist = np.linalg.norm(next_state.goals - next_state.pose[:, :2], axis=-1)
    goal = np.where(dist < config.goal_radius, config.goal_bonus,
                    -dist / config.arena_half_width)
    control = ((a - nominal) ** 2).sum(axis=-1)
    collision = np.where(collided, config.collision_penalty, 0.0)
    per_agent = (config.w_goal * goal - config.w_control * control
                 - config.w_collision * collision)
    return float(per_agent.mean())


def _k_nearest(dists: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries per row, ordered by distance."""
    n, m = dists.shape
    kk = min(k, m)
    if kk == 0:
        return np.empty((n, 0), dtype=int)
    if m > kk:
        cand = np.argpartition(dists, kk - 1, axis=1)[:, :kk]
    else:
        cand = np.broadcast_to(np.arange(m), (n, m)).copy()
    order = np.argsort(np.take_along_axis(dists, cand, axis=1), axis=1, kind="stable")
    return np.take_along_axis(cand, order, axis=1)


def _saturate(rel: np.ndarray, rng: float) -> np.ndarray:
    """Scale relative vectors to direction * min(dist, range)/range."""
    d = np.linalg.norm(rel, axis=-1, keepdims=True)
    scale = np.where(d > rng, rng / np.maximum(d, 1e-12), 1.0)
    return rel * scale / rng


def _to_body_frame(rel: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Rotate world-frame relative vectors [n, ..., 2] into each agent's frame."""
    c, s = np.cos(theta), np.sin(theta)
    shape = (theta.shape[0],) + (1,) * (rel.ndim - 2)
    c, s = c.reshape(shape), s.reshape(shape)
    return np.stack([c * rel[..., 0] + s * rel[..., 1],
                     -s * rel[..., 0] + c * rel[..., 1]], axis=-1)


def dubins_observe(state: DubinsState, config: DubinsConfig, agent: int | None = None):
    """Observation rows [n, obs_dim]: own pose, relative goal, k nearest
    obstacles (rel position + radius), k nearest neighbors (rel position).

    Relative vectors are expressed in the observing agent's body frame so a
    steering policy does not have to recover trigonometry from a raw heading.
    The goal vector is normalized by the arena half-width (the reward's own
    distance scale); obstacle and neighbor vectors are saturated at
    sensing_range so local readings match across arena sizes.
    """
    pose, goals, obstacles = state.pose, state.goals, state.obstacles
    n = pose.shape[0]
    hw, rng = config.arena_half_width, config.sensing_range
    theta = pose[:, 2]

    own = pose.copy()
    own[:, :2] /= hw
    rel_goal = _to_body_frame(goals - pose[:, :2], theta) / hw

    obs_block = np.zeros((n, config.k_obstacles, 3))
    if obstacles.shape[0] and config.k_obstacles:
        d = np.linalg.norm(pose[:, None, :2] - obstacles[None, :, :2], axis=-1)
        d = d - obstacles[None, :, 2]  # surface distance orders relevance
        idx = _k_nearest(d, config.k_obstacles)
        kk = idx.shape[1]
        sel = obstacles[idx]  # [n, kk, 3]
        rel = _to_body_frame(sel[:, :, :2] - pose[:, None, :2], theta)
        obs_block[:, :kk, :2] = _saturate(rel, rng)
        obs_block[:, :kk, 2] = sel[:, :, 2] / rng

    nb_block = np.zeros((n, config.k_neighbors, 2))
    if n > 1 and config.k_neighbors:
        d = np.linalg.norm(pose[:, None, :2] - pose[None, :, :2], axis=-1)
        np.fill_diagonal(d, np.inf)
        idx = _k_nearest(d, min(config.k_neighbors, n - 1))
        kk = idx.shape[1]
        rel = _to_body_frame(pose[idx][:, :, :2] - pose[:, None, :2], theta)
        nb_block[:, :kk] = _saturate(rel, rng)

    out = np.concatenate(
        [own, rel_goal, obs_block.reshape(n, -1), nb_block.reshape(n, -1)], axis=1
    )
    return out if agent is None else out[agent]


def dubins_reset(seed: int, config: DubinsConfig) -> DubinsState:
    """Uniform rejection placement with pairwise agent clearance and
    obstacle-free spawn/goal positions; deterministic per seed."""
    rng = np.random.default_rng(seed)
    hw = config.arena_half_width
    cr = config.collision_radius

    obstacles = np.zeros((config.n_obstacles, 3))
    for i in range(config.n_obstacles):
        r = rng.uniform(config.obstacle_radius_min, config.obstacle_radius_max)
        lim = max(hw - r, 0.0)
        obstacles[i] = [rng.uniform(-lim, lim), rng.uniform(-lim, lim), r]

    def clear_of_obstacles(p, margin):
        if not obstacles.shape[0]:
            return True
        d = np.linalg.norm(obstacles[:, :2] - p, axis=-1)
        return bool((d >= obstacles[:, 2] + margin).all())

    positions = np.zeros((config.n_agents, 2))
    for i in range(config.n_agents):
        for attempt in range(PLACEMENT_ATTEMPTS):
            p = rng.uniform(-hw, hw, size=2)
            if i and (np.linalg.norm(positions[:i] - p, axis=-1) < 4.0 * cr).any():
                continue
            if not clear_of_obstacles(p, 2.0 * cr):
                continue
            positions[i] = p
            break
        else:
            raise ContractError(
                f"arena too crowded: agent {i} placement failed after "
                f"{PLACEMENT_ATTEMPTS} rejections"
            )

    goals = np.zeros((config.n_agents, 2))
    for i in range(config.n_agents):
        for attempt in range(PLACEMENT_ATTEMPTS):
            g = rng.uniform(-hw, hw, size=2)
            if not clear_of_obstacles(g, cr):
                continue
            goals[i] = g
            break
        else:
            raise ContractError(
                f"arena too crowded: goal {i} placement failed after "
                f"{PLACEMENT_ATTEMPTS} rejections"
            )

    pose = np.zeros((config.n_agents, 4))
    pose[:, :2] = positions
    pose[:, 2] = wrap_angle(rng.uniform(-np.pi, np.pi, size=config.n_agents))
    dist = np.linalg.norm(goals - positions, axis=-1)
    reached = dist < config.goal_radius
    return DubinsState(pose=pose, goals=goals, obstacles=obstacles,
                       reached=reached, t=0)


class DubinsCarEnv(Env):
    def __init__(self, config: DubinsConfig):
        self.config = config
        self.n_agents = config.n_agents
        self.obs_dim = config.obs_dim
        self.action_space = config.action_space
        self.max_steps = config.max_steps
        self._state: DubinsState | None = None
        self._collided_ever = np.zeros(config.n_agents, dtype=bool)

    @property
    def state(self) -> DubinsState:
        return self._state.copy()

    def reset(self, seed: int = 0):
        self._state = dubins_reset(seed, self.config)
        self._collided_ever = np.zeros(self.config.n_agents, dtype=bool)
        return dubins_observe(self._state, self.config)

    def step(self, actions):
        if self._state is None:
            raise ContractError("step called before reset")
        prev = self._state
        nxt, collided = dubins_step(prev, actions, self.config)
        reward = dubins_reward(prev, actions, nxt, self.config, collided=collided)
        self._state = nxt
        self._collided_ever |= collided
        done = nxt.t >= self.config.max_steps
        obs = dubins_observe(nxt, self.config)
        if not np.isfinite(obs).all():
            raise SimulationFault(f"non-finite observation at step {nxt.t}")
        info = {
            "time_limit": done,  # episodes end only by the step budget
            "reached": nxt.reached.copy(),
            "collided_step": collided,
            "collided_ever": self._collided_ever.copy(),
            "all_reached": bool(nxt.reached.all()),
        }
        return obs, reward, done, info

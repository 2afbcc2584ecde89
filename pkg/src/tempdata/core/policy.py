"""Offline policy extraction on top of a frozen temporal encoder.

Rewards are intrinsic: the change in latent distance to the goal across a
transition. With the default ``reward_sign="progress"`` a step that brings
the agent closer to the goal earns a positive reward; ``"printed"`` keeps the
raw ``d(f(s'), f(g)) - d(f(s), f(g))``, which rewards moving away.

Two extraction modes share one Gaussian actor:

* weighted supervised learning (default): AWR with advantage ``A = r~``;
* actor-critic (``use_q_head``): ``Q`` by TD regression against a Polyak
  target, ``V`` by expectile regression on the target ``Q``, ``A = Q - V``.

The actor sees the standardized state plus either a unit skill direction
``(f(g) - f(s)) / ‖f(g) - f(s)‖`` or the standardized goal.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.approximator import (
    MLP,
    Activation,
    OptimizerState,
    adam_step,
    adam_update,
    hidden_dims,
    polyak_update,
)
from tempdata.core.artifacts import pack_networks, read_container, write_container
from tempdata.core.dataset import TransitionSet
from tempdata.core.errors import DimensionMismatchError, NumericalAbortError, ZeroDirectionError
from tempdata.core.losses import expectile_loss
from tempdata.core.maze import ACTION_DIM, STATE_DIM, Cell, MazeEnv
from tempdata.core.representation import TemporalAutoencoder

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_MIN_DIRECTION = 1e-12


class PolicyConfig(BaseModel):
    """Policy extraction hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    beta: float = Field(default=10.0, gt=0, description="Inverse temperature of the AWR weight.")
    gamma_rl: float = Field(default=0.99, gt=0, lt=1)
    expectile_rl: float = Field(default=0.9, ge=0.5, lt=1)
    use_q_head: bool = Field(default=False, description="Actor-critic mode with A = Q - V.")
    skill_dim: int | None = Field(
        default=None, ge=1, description="Skill vector size; must match the latent size when set."
    )
    conditioning: Literal["skill", "goal"] = "skill"
    reward_sign: Literal["progress", "printed"] = "progress"
    exp_clip: float = Field(default=100.0, gt=1)
    normalize_weights: bool = Field(
        default=False, description="Divide AWR weights by their batch sum."
    )
    target_rho: float = Field(default=5e-3, ge=0, le=1)
    lr: float = Field(default=3e-4, gt=0)
    batch_size: int = Field(default=512, ge=1)
    hidden: list[int] | None = None
    activation: Activation = "relu"
    log_std_min: float = -5.0
    log_std_max: float = 2.0


def reward_sign_factor(sign: Literal["progress", "printed"]) -> float:
    return -1.0 if sign == "progress" else 1.0


def intrinsic_reward(
    s: np.ndarray,
    s_next: np.ndarray,
    g: np.ndarray,
    encoder: TemporalAutoencoder,
    sign: Literal["progress", "printed"] = "progress",
) -> np.ndarray:
    """``±(d(f(s'), f(g)) - d(f(s), f(g)))``; works on single states and batches."""
    change = encoder.distance_to(s_next, g) - encoder.distance_to(s, g)
    return reward_sign_factor(sign) * change


def skill_vector(s: np.ndarray, g: np.ndarray, encoder: TemporalAutoencoder) -> np.ndarray:
    """Unit latent direction from ``s`` toward ``g``."""
    diff = encoder.encode(g) - encoder.encode(s)
    norm = float(np.linalg.norm(diff))
    if norm < _MIN_DIRECTION:
        msg = "f(g) equals f(s): no direction to the goal"
        raise ZeroDirectionError(msg)
    return diff / norm


def skill_vectors(z_s: np.ndarray, z_g: np.ndarray) -> np.ndarray:
    """Row-wise skill directions; rows already at the goal get the zero vector."""
    diff = z_g - z_s
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    return np.where(norm >= _MIN_DIRECTION, diff / np.where(norm > 0, norm, 1.0), 0.0)


def awr_weights(advantages: np.ndarray, beta: float, exp_clip: float = 100.0) -> np.ndarray:
    """``min(exp(beta * A), exp_clip)`` without overflowing."""
    return np.exp(np.minimum(beta * np.asarray(advantages), math.log(exp_clip)))


@dataclass(frozen=True, eq=False)
class GaussianPolicy:
    """Diagonal Gaussian actor: MLP mean, state-independent learned log-std."""

    net: MLP
    log_std: np.ndarray
    conditioning: Literal["skill", "goal"] = "skill"
    log_std_min: float = -5.0
    log_std_max: float = 2.0

    @staticmethod
    def feature_dim(conditioning: Literal["skill", "goal"], latent_dim: int) -> int:
        return STATE_DIM + (latent_dim if conditioning == "skill" else STATE_DIM)

    def features(
        self, ae: TemporalAutoencoder, s: np.ndarray, g: np.ndarray
    ) -> np.ndarray:
        s = np.atleast_2d(s)
        g = np.atleast_2d(g)
        if self.conditioning == "skill":
            cond = skill_vectors(ae.encode(s), ae.encode(g))
        else:
            cond = ae.normalize(g)
        return np.concatenate([ae.normalize(s), cond], axis=-1)

    def clipped_log_std(self) -> tuple[np.ndarray, np.ndarray]:
        clipped = np.clip(self.log_std, self.log_std_min, self.log_std_max)
        inside = (self.log_std >= self.log_std_min) & (self.log_std <= self.log_std_max)
        return clipped, inside.astype(np.float64)

    def mean(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)

    def act(self, ae: TemporalAutoencoder, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Deterministic (mean) actions clipped to the action box, for ``(N, 2)`` batches."""
        return np.clip(self.mean(self.features(ae, s, g)), -1.0, 1.0)

    def log_prob(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        log_std, _ = self.clipped_log_std()
        r = (a - self.mean(x)) / np.exp(log_std)
        return -0.5 * np.sum(r * r, axis=-1) - log_std.sum() - 0.5 * ACTION_DIM * _LOG_2PI

    def replace(self, net: MLP | None = None, log_std: np.ndarray | None = None) -> GaussianPolicy:
        return GaussianPolicy(
            net if net is not None else self.net,
            log_std if log_std is not None else self.log_std,
            self.conditioning,
            self.log_std_min,
            self.log_std_max,
        )


def awr_loss(
    policy: GaussianPolicy,
    x: np.ndarray,
    a: np.ndarray,
    weights: np.ndarray,
    *,
    normalize: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """``-mean(w * log pi(a | x))`` with gradients for the mean net and the log-std.

    With ``normalize`` the weights are divided by their sum instead of the
    batch size, so a constant shift of every advantage leaves the loss unchanged.
    """
    n = len(x)
    mu, pullback = policy.net.vjp(x)
    log_std, inside = policy.clipped_log_std()
    std = np.exp(log_std)
    r = (a - mu) / std
    logp = -0.5 * np.sum(r * r, axis=-1) - log_std.sum() - 0.5 * ACTION_DIM * _LOG_2PI
    coef = weights / weights.sum() if normalize else weights / n
    loss = -float(np.sum(coef * logp))
    g_net, _ = pullback(-coef[:, None] * r / std)
    g_log_std = -np.sum(coef[:, None] * (r * r - 1.0), axis=0) * inside
    return loss, g_net, g_log_std


def bc_loss(policy: GaussianPolicy, x: np.ndarray, a: np.ndarray) -> float:
    """Plain behavior cloning: ``-mean(log pi(a | x))``."""
    return -float(policy.log_prob(x, a).mean())


def q_td_loss(
    q: MLP,
    q_target: MLP,
    x: np.ndarray,
    x_next: np.ndarray,
    reward: np.ndarray,
    mask: np.ndarray,
    gamma: float,
) -> tuple[float, np.ndarray]:
    """``mean((r + gamma * mask * Q_target(x') - Q(x))^2)`` and its gradient in ``q``."""
    n = len(x)
    q_val, pullback = q.vjp(x)
    target = reward + gamma * mask * q_target.forward(x_next)[:, 0]
    diff = q_val[:, 0] - target
    g, _ = pullback((2.0 * diff / n)[:, None])
    return float(np.mean(diff * diff)), g


def v_expectile_loss(
    v: MLP, x: np.ndarray, q_values: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """Expectile regression of ``V(x)`` toward ``q_values``."""
    n = len(x)
    v_val, pullback = v.vjp(x)
    values, slope = expectile_loss(q_values - v_val[:, 0], tau)
    g, _ = pullback((-slope / n)[:, None])
    return float(values.mean()), g


@dataclass
class Critic:
    q: MLP
    q_target: MLP
    v: MLP
    q_opt: OptimizerState
    v_opt: OptimizerState

    @classmethod
    def init(
        cls,
        feature_dim: int,
        hidden: tuple[int, ...],
        rng: np.random.Generator,
        cfg: PolicyConfig,
    ) -> Critic:
        q = MLP.init((feature_dim + ACTION_DIM, *hidden, 1), rng, cfg.activation)
        v = MLP.init((feature_dim, *hidden, 1), rng, cfg.activation)
        return cls(q, q, v, OptimizerState.for_fn(q, cfg.lr), OptimizerState.for_fn(v, cfg.lr))

    def advantage(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        q = self.q_target.forward(np.concatenate([x, a], axis=-1))[:, 0]
        return q - self.v.forward(x)[:, 0]


class PolicyLearner:
    """Owns the actor (and critic) and applies one extraction step per batch."""

    def __init__(
        self,
        ae: TemporalAutoencoder,
        cfg: PolicyConfig,
        seed: int,
        *,
        width_multiplier: float = 1.0,
    ) -> None:
        if cfg.skill_dim is not None and cfg.skill_dim != ae.latent_dim:
            msg = f"skill_dim {cfg.skill_dim} does not match latent_dim {ae.latent_dim}"
            raise DimensionMismatchError(msg)
        if cfg.reward_sign == "printed":
            logger.warning(
                "intrinsic reward uses the printed sign: moving away from the goal is rewarded"
            )
        self.ae = ae
        self.cfg = cfg
        actor_seq, critic_seq = np.random.SeedSequence(seed).spawn(2)
        hidden = tuple(cfg.hidden) if cfg.hidden is not None else hidden_dims(width_multiplier)
        x_dim = GaussianPolicy.feature_dim(cfg.conditioning, ae.latent_dim)
        net = MLP.init((x_dim, *hidden, ACTION_DIM), np.random.default_rng(actor_seq), cfg.activation)
        self.policy = GaussianPolicy(
            net, np.zeros(ACTION_DIM), cfg.conditioning, cfg.log_std_min, cfg.log_std_max
        )
        self.net_opt = OptimizerState.for_fn(net, cfg.lr)
        self.log_std_opt = OptimizerState.for_size(ACTION_DIM, cfg.lr)
        self.critic: Critic | None = None
        if cfg.use_q_head:
            self.critic = Critic.init(x_dim, hidden, np.random.default_rng(critic_seq), cfg)

    def rewards(self, batch: TransitionSet) -> np.ndarray:
        return intrinsic_reward(batch.s, batch.s_next, batch.g, self.ae, self.cfg.reward_sign)

    def update_critic(self, batch: TransitionSet, x: np.ndarray | None = None) -> dict[str, float]:
        assert self.critic is not None
        critic, cfg = self.critic, self.cfg
        if x is None:
            x = self.policy.features(self.ae, batch.s, batch.g)
        x_next = self.policy.features(self.ae, batch.s_next, batch.g)
        a_next = np.clip(self.policy.mean(x_next), -1.0, 1.0)
        xa = np.concatenate([x, batch.a], axis=-1)
        xa_next = np.concatenate([x_next, a_next], axis=-1)
        q_loss, g_q = q_td_loss(
            critic.q, critic.q_target, xa, xa_next, self.rewards(batch), 1.0 - batch.terminal, cfg.gamma_rl
        )
        q_bar = critic.q_target.forward(xa)[:, 0]
        v_loss, g_v = v_expectile_loss(critic.v, x, q_bar, cfg.expectile_rl)
        if not (np.isfinite(q_loss) and np.isfinite(v_loss)):
            raise NumericalAbortError("policy", f"non-finite critic loss (q={q_loss}, v={v_loss})")
        critic.q, critic.q_opt = adam_step(critic.q, critic.q_opt, g_q, phase="policy")
        critic.v, critic.v_opt = adam_step(critic.v, critic.v_opt, g_v, phase="policy")
        critic.q_target = polyak_update(critic.q_target, critic.q, cfg.target_rho)
        return {"q_loss": q_loss, "v_loss": v_loss}

    def update_actor(self, batch: TransitionSet, x: np.ndarray | None = None) -> dict[str, float]:
        cfg = self.cfg
        if x is None:
            x = self.policy.features(self.ae, batch.s, batch.g)
        if self.critic is not None:
            advantages = self.critic.advantage(x, batch.a)
        else:
            advantages = self.rewards(batch)
        weights = awr_weights(advantages, cfg.beta, cfg.exp_clip)
        loss, g_net, g_log_std = awr_loss(
            self.policy, x, batch.a, weights, normalize=cfg.normalize_weights
        )
        if not np.isfinite(loss):
            raise NumericalAbortError("policy", f"non-finite actor loss {loss}")
        net, self.net_opt = adam_step(self.policy.net, self.net_opt, g_net, phase="policy")
        log_std, self.log_std_opt = adam_update(
            self.policy.log_std, self.log_std_opt, g_log_std, phase="policy"
        )
        self.policy = self.policy.replace(net=net, log_std=log_std)
        return {
            "actor_loss": loss,
            "mean_advantage": float(np.mean(advantages)),
            "mean_weight": float(np.mean(weights)),
        }

    def update(self, batch: TransitionSet) -> dict[str, float]:
        x = self.policy.features(self.ae, batch.s, batch.g)
        row: dict[str, float] = {}
        if self.critic is not None:
            row.update(self.update_critic(batch, x))
        row.update(self.update_actor(batch, x))
        return row


def train_q(
    batches: Iterable[TransitionSet],
    encoder: TemporalAutoencoder,
    policy: GaussianPolicy,
    cfg: PolicyConfig,
    *,
    seed: int = 0,
    width_multiplier: float = 1.0,
) -> Critic:
    """TD-train a critic for a fixed ``policy``."""
    learner = PolicyLearner(
        encoder, cfg.model_copy(update={"use_q_head": True}), seed, width_multiplier=width_multiplier
    )
    learner.policy = policy
    for batch in batches:
        learner.update_critic(batch)
    assert learner.critic is not None
    return learner.critic


def extract_policy(
    batches: Iterable[TransitionSet],
    encoder: TemporalAutoencoder,
    cfg: PolicyConfig,
    *,
    seed: int = 0,
    width_multiplier: float = 1.0,
) -> GaussianPolicy:
    """Run AWR (and the critic, in actor-critic mode) over ``batches``."""
    learner = PolicyLearner(encoder, cfg, seed, width_multiplier=width_multiplier)
    for batch in batches:
        learner.update(batch)
    return learner.policy


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class Agent(Protocol):
    def act(
        self, env: MazeEnv, s: np.ndarray, g: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray: ...


@dataclass(frozen=True)
class PolicyAgent:
    """The trained actor's mean action; the skill direction is recomputed each step."""

    policy: GaussianPolicy
    ae: TemporalAutoencoder

    def act(
        self, env: MazeEnv, s: np.ndarray, g: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        if self.policy.conditioning == "skill":
            try:
                skill_vector(s, g, self.ae)
            except ZeroDirectionError:
                return np.zeros(ACTION_DIM)
        return self.policy.act(self.ae, s, g)[0]


@dataclass(frozen=True)
class OracleAgent:
    """Follows the BFS shortest path."""

    def act(
        self, env: MazeEnv, s: np.ndarray, g: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        cell = env.cell_of(s)
        return env.action_toward(s, env.next_hop(cell, env.cell_of(g)))


@dataclass(frozen=True)
class RandomAgent:
    def act(
        self, env: MazeEnv, s: np.ndarray, g: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        return env.random_action(rng)


@dataclass(frozen=True)
class LatentGreedyAgent:
    """Takes the discrete move whose successor is latently closest to the goal."""

    ae: TemporalAutoencoder

    def act(
        self, env: MazeEnv, s: np.ndarray, g: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        actions = env.candidate_actions()
        successors = np.array([env.step(s, a) for a in actions])
        d = self.ae.distance_to(successors, np.broadcast_to(g, successors.shape))
        return actions[int(np.argmin(d))].copy()


def goal_key(goal: Cell) -> str:
    return f"{goal[0]},{goal[1]}"


class EvalResult(BaseModel):
    """Success rates of one evaluation sweep."""

    model_config = ConfigDict(extra="forbid")

    per_goal: dict[str, float]
    mean: float
    n_episodes: int
    horizon: int
    seed: int


def run_episode(
    agent: Agent, env: MazeEnv, goal: np.ndarray, horizon: int, rng: np.random.Generator
) -> bool:
    s = env.sample_start(rng)
    for _ in range(horizon):
        if env.goal_reward(s, goal):
            return True
        s = env.step(s, agent.act(env, s, goal, rng))
    return bool(env.goal_reward(s, goal))


def evaluate(
    agent: Agent,
    env: MazeEnv,
    goals: list[Cell],
    n_episodes: int,
    horizon: int,
    seed: int,
) -> EvalResult:
    """Fraction of episodes that reach each goal within ``horizon`` steps."""
    if n_episodes < 1:
        msg = f"n_episodes must be >= 1, got {n_episodes}"
        raise ValueError(msg)
    children = iter(np.random.SeedSequence(seed).spawn(len(goals) * n_episodes))
    per_goal = {}
    for goal in goals:
        g = env.validate(env.cell_state(goal))
        wins = sum(
            run_episode(agent, env, g, horizon, np.random.default_rng(next(children)))
            for _ in range(n_episodes)
        )
        per_goal[goal_key(goal)] = wins / n_episodes
    mean = float(np.mean(list(per_goal.values()))) if per_goal else 0.0
    return EvalResult(per_goal=per_goal, mean=mean, n_episodes=n_episodes, horizon=horizon, seed=seed)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_policy(
    path: str | Path, policy: GaussianPolicy, meta: dict[str, Any], critic: Critic | None = None
) -> str:
    networks = {"actor": policy.net}
    if critic is not None:
        networks.update({"q": critic.q, "q_target": critic.q_target, "v": critic.v})
    arrays, network_meta = pack_networks(networks)
    arrays["log_std"] = policy.log_std
    return write_container(
        path,
        arrays,
        {
            **meta,
            "kind": "policy",
            "networks": network_meta,
            "conditioning": policy.conditioning,
            "log_std_bounds": [policy.log_std_min, policy.log_std_max],
        },
    )


def load_policy(path: str | Path) -> GaussianPolicy:
    container = read_container(path, kind="policy")
    low, high = container.meta["log_std_bounds"]
    return GaussianPolicy(
        container.network("actor"),
        container.arrays["log_std"],
        container.meta["conditioning"],
        low,
        high,
    )

"""Scheduled latent rollouts that fill the synthetic buffer ``D_hat``.

A refresh samples start transitions uniformly from the real dataset, encodes
their states, and unrolls the latent model for ``k_steps`` using the current
policy's mean action plus Gaussian noise. Every predicted latent is decoded
back to a state, giving transitions ``(s_t, a_t, h(z_{t+1}))`` that keep the
start transition's goal. Chains whose latents stop being finite are cut at
that step; earlier steps are kept.

Refreshes happen at fixed fractions of the policy phase: the first after the
warm-up fraction, then every ``refresh_every_fraction``, each adding
``round(refresh_size_rule * |D|)`` transitions to a FIFO buffer capped at
``buffer_cap_multiple * |D|``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.dataset import SYNTHETIC, TransitionSet, TransitionStore
from tempdata.core.dynamics import Codec, LatentDynamics
from tempdata.core.errors import EmptyDatasetError
from tempdata.core.maze import ACTION_DIM, MazeEnv

logger = logging.getLogger(__name__)

Actor = Callable[[np.ndarray, np.ndarray], np.ndarray]
"""``actor(states, goals) -> actions`` for ``(N, 2)`` batches."""


class RolloutConfig(BaseModel):
    """Rollout length, schedule and mixing ratio."""

    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    k_steps: int = Field(default=3, ge=1)
    warmup_fraction: float = Field(default=0.3, ge=0, lt=1)
    refresh_every_fraction: float = Field(default=0.1, gt=0, le=1)
    refresh_size_rule: float = Field(
        default=0.5, gt=0, description="Transitions per refresh as a fraction of |D|."
    )
    sigma: float = Field(
        default=0.5, gt=0, lt=1, description="Share of each policy batch drawn from D_hat."
    )
    action_noise_std: float = Field(default=0.1, ge=0)
    buffer_cap_multiple: float = Field(default=2.0, gt=0)

    @property
    def effective_sigma(self) -> float:
        return self.sigma if self.enabled else 0.0


def _fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(1_000_000)


def refresh_steps(total_steps: int, cfg: RolloutConfig) -> list[int]:
    """Steps ``ceil((warmup + j * every) * total)`` for every ``j`` that stays within the run."""
    if not cfg.enabled:
        return []
    warmup, every = _fraction(cfg.warmup_fraction), _fraction(cfg.refresh_every_fraction)
    steps = []
    j = 0
    while warmup + j * every <= 1:
        steps.append(max(1, math.ceil((warmup + j * every) * total_steps)))
        j += 1
    return sorted(set(steps))


def rollout_schedule(
    step: int, total_steps: int, cfg: RolloutConfig
) -> Literal["none", "refresh"]:
    if not 0 <= step <= total_steps:
        msg = f"step {step} is outside [0, {total_steps}]"
        raise ValueError(msg)
    return "refresh" if step in refresh_steps(total_steps, cfg) else "none"


def refresh_size(n_real: int, cfg: RolloutConfig) -> int:
    return round(cfg.refresh_size_rule * n_real)


class RefreshStats(BaseModel):
    """One line of the per-refresh JSON-lines log."""

    model_config = ConfigDict(extra="forbid")

    step: int
    count: int
    wall_leakage: float
    mean_latent_step_norm: float
    truncated: int
    buffer_size: int
    evicted: int


def wall_leakage(env: MazeEnv, states: np.ndarray) -> float:
    """Fraction of ``states`` inside walls, out of bounds or non-finite."""
    if len(states) == 0:
        return 0.0
    return float(env.in_wall(states).mean())


@dataclass
class RolloutResult:
    transitions: TransitionSet
    mean_latent_step_norm: float
    truncated: int


def rollout(
    D: TransitionSet,
    actor: Actor,
    codec: Codec,
    dynamics: LatentDynamics,
    cfg: RolloutConfig,
    n_starts: int,
    seed: int | np.random.Generator,
    *,
    env: MazeEnv,
    sample: bool = False,
) -> RolloutResult:
    """Unroll ``n_starts`` latent chains of ``cfg.k_steps`` and decode them."""
    if len(D) == 0:
        raise EmptyDatasetError("rollouts need at least one real transition to start from")
    if n_starts < 1:
        msg = f"n_starts must be >= 1, got {n_starts}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    starts = rng.integers(len(D), size=n_starts)
    s = D.s[starts]
    g = D.g[starts]
    z = codec.encode(s)
    alive = np.all(np.isfinite(z), axis=1)
    parts = []
    step_norms = []
    for step in range(1, cfg.k_steps + 1):
        noise = rng.normal(0.0, 1.0, size=(n_starts, ACTION_DIM))
        a = np.clip(actor(s, g) + cfg.action_noise_std * noise, -1.0, 1.0)
        mean, std = dynamics.predict(z, a)
        z_next = mean
        if sample:
            z_next = mean + std * rng.normal(0.0, 1.0, size=mean.shape)
        s_next = codec.decode(np.where(np.isfinite(z_next), z_next, 0.0))
        ok = (
            alive
            & np.all(np.isfinite(z_next), axis=1)
            & np.all(np.isfinite(s_next), axis=1)
            & np.all(np.isfinite(a), axis=1)
        )
        if not ok.any():
            alive = ok
            break
        idx = np.flatnonzero(ok)
        step_norms.append(np.linalg.norm(z_next[idx] - z[idx], axis=1))
        count = len(idx)
        parts.append(
            TransitionSet(
                s=s[idx],
                a=a[idx],
                s_next=s_next[idx],
                g=g[idx],
                success=env.goal_rewards(s[idx], g[idx]),
                terminal=env.goal_rewards(s_next[idx], g[idx]),
                source=np.full(count, SYNTHETIC, dtype=np.uint8),
                traj_id=D.traj_id[starts[idx]],
                t=D.t[starts[idx]] + step - 1,
                origin=starts[idx].astype(np.int64),
                rollout_step=np.full(count, step, dtype=np.int64),
            )
        )
        alive = ok
        z = np.where(ok[:, None], z_next, 0.0)
        s = np.where(ok[:, None], s_next, s)
    truncated = int(n_starts - alive.sum())
    if truncated:
        logger.warning("%d of %d rollout chains truncated on non-finite latents", truncated, n_starts)
    norms = np.concatenate(step_norms) if step_norms else np.empty(0)
    return RolloutResult(
        TransitionSet.concat(parts),
        float(norms.mean()) if len(norms) else 0.0,
        truncated,
    )


def provenance_ok(synthetic: TransitionSet, D: TransitionSet, k_steps: int) -> bool:
    """Every synthetic row traces back to a real start within ``k_steps`` latent steps."""
    return bool(
        np.all(synthetic.source == SYNTHETIC)
        and np.all((synthetic.origin >= 0) & (synthetic.origin < len(D)))
        and np.all((synthetic.rollout_step >= 1) & (synthetic.rollout_step <= k_steps))
    )


class RolloutBuffer(TransitionStore):
    """``D_hat``: synthetic transitions only, FIFO-capped relative to ``|D|``."""

    @classmethod
    def for_dataset(cls, n_real: int, cfg: RolloutConfig) -> RolloutBuffer:
        return cls(capacity=max(1, round(cfg.buffer_cap_multiple * n_real)))

    def append(self, batch: TransitionSet) -> None:
        if len(batch) and not np.all(batch.source == SYNTHETIC):
            raise ValueError("the rollout buffer only accepts synthetic transitions")
        super().append(batch)


def refresh(
    buffer: RolloutBuffer,
    D: TransitionSet,
    actor: Actor,
    codec: Codec,
    dynamics: LatentDynamics,
    cfg: RolloutConfig,
    *,
    env: MazeEnv,
    step: int,
    rng: np.random.Generator,
    sample: bool = False,
) -> RefreshStats:
    """Add one refresh worth of synthetic transitions to ``buffer``.

    Chains are started until the target size is met; truncated chains make
    a refresh come up short rather than loop.
    """
    target = refresh_size(len(D), cfg)
    n_starts = max(1, math.ceil(target / cfg.k_steps))
    result = rollout(D, actor, codec, dynamics, cfg, n_starts, rng, env=env, sample=sample)
    data = result.transitions
    if len(data) > target:
        data = data.take(np.arange(target))
    evicted_before = buffer.evicted
    buffer.append(data)
    stats = RefreshStats(
        step=step,
        count=len(data),
        wall_leakage=wall_leakage(env, data.s_next),
        mean_latent_step_norm=result.mean_latent_step_norm,
        truncated=result.truncated,
        buffer_size=len(buffer),
        evicted=buffer.evicted - evicted_before,
    )
    logger.info(
        "refresh at step %d: %d transitions, wall leakage %.3f, buffer %d",
        step, stats.count, stats.wall_leakage, stats.buffer_size,
    )  # fmt: skip
    return stats


def append_jsonl(path: str | Path, stats: RefreshStats) -> None:
    with Path(path).open("a") as f:
        f.write(stats.model_dump_json() + "\n")

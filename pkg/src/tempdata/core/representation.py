"""Temporal-distance-aware autoencoder.

The encoder ``f`` maps states into a latent space where the Euclidean
distance ``d(f(s), f(g))`` approximates the discounted shortest-path cost
``(1 - gamma^n) / (1 - gamma)`` from ``s`` to ``g``. The decoder ``h`` maps
latents back to states so latent rollouts can be read as state transitions.

The objective is ``L_rec + eta1 * L_traj + eta2 * L_tran``:

``L_rec``
    mean ``‖s - h(f(s))‖``.
``L_traj``
    expectile regression of ``d(f(s), f(g))`` onto the backup
    ``0`` if ``r_g(s) = 1`` else ``1 + gamma * (1 - terminal) * d_target``,
    where ``d_target`` is measured with a Polyak-averaged target encoder and
    the backup is clamped at ``>= 0``. The residual is taken in value space
    (``V = -d``), so a high expectile pulls ``d`` toward the best successor.
``L_tran``
    one-sided squared penalty on ``d(f(s), f(s')) - d0`` with
    ``d0 = |r_g(s) - 1|``.

The temporal terms update only the encoder; the decoder is trained by
``L_rec`` alone. States are standardized with dataset statistics before the
encoder and un-standardized after the decoder.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.approximator import (
    MLP,
    Activation,
    OptimizerState,
    adam_step,
    hidden_dims,
    polyak_update,
)
from tempdata.core.artifacts import pack_networks, read_container, write_container
from tempdata.core.dataset import TransitionSet, ensure_terminal, sample_batch
from tempdata.core.errors import EmptyDatasetError, InvalidStateError, NumericalAbortError
from tempdata.core.losses import expectile_loss, row_norm
from tempdata.core.maze import STATE_DIM, Cell, MazeEnv

logger = logging.getLogger(__name__)


class ReprConfig(BaseModel):
    """Autoencoder architecture and objective weights."""

    model_config = ConfigDict(extra="forbid")

    latent_dim: int = Field(default=32, ge=1)
    eta1: float = Field(default=1.0, ge=0, description="Weight of the trajectory term.")
    eta2: float = Field(default=1.0, ge=0, description="Weight of the transition term.")
    tau: float = Field(default=0.95, ge=0.5, lt=1, description="Expectile of the trajectory term.")
    gamma: float = Field(default=0.99, gt=0, lt=1)
    target_rho: float = Field(default=5e-3, ge=0, le=1)
    lr: float = Field(default=3e-4, gt=0)
    batch_size: int = Field(default=512, ge=1)
    hidden: list[int] | None = Field(
        default=None,
        description="Hidden widths of encoder and decoder; defaults to the scaled 512x3 stack.",
    )
    activation: Activation = "relu"
    decoupled: bool = Field(
        default=False,
        description="Stop the reconstruction gradient at the latent so only temporal terms shape f.",
    )
    ensure_goal_in_batch: bool = Field(
        default=True,
        description="Guarantee at least one terminal transition per batch when the dataset has one.",
    )


@dataclass(frozen=True, eq=False)
class TemporalAutoencoder:
    encoder: MLP
    decoder: MLP
    state_mean: np.ndarray
    state_std: np.ndarray

    @classmethod
    def init(
        cls,
        latent_dim: int,
        hidden: tuple[int, ...],
        rng: np.random.Generator,
        *,
        activation: Activation = "relu",
        state_mean: np.ndarray | None = None,
        state_std: np.ndarray | None = None,
    ) -> TemporalAutoencoder:
        return cls(
            MLP.init((STATE_DIM, *hidden, latent_dim), rng, activation),
            MLP.init((latent_dim, *hidden, STATE_DIM), rng, activation),
            np.zeros(STATE_DIM) if state_mean is None else np.asarray(state_mean, dtype=np.float64),
            np.ones(STATE_DIM) if state_std is None else np.asarray(state_std, dtype=np.float64),
        )

    @classmethod
    def zeros(cls, latent_dim: int, hidden: tuple[int, ...] = ()) -> TemporalAutoencoder:
        return cls(
            MLP.zeros((STATE_DIM, *hidden, latent_dim)),
            MLP.zeros((latent_dim, *hidden, STATE_DIM)),
            np.zeros(STATE_DIM),
            np.ones(STATE_DIM),
        )

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    def normalize(self, s: np.ndarray) -> np.ndarray:
        return (np.asarray(s, dtype=np.float64) - self.state_mean) / self.state_std

    def encode(self, s: np.ndarray, encoder: MLP | None = None) -> np.ndarray:
        """``f(s)``; pass ``encoder`` to evaluate a target copy with the same normalizer."""
        return (encoder or self.encoder).forward(self.normalize(s))

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.decoder.forward(z) * self.state_std + self.state_mean

    def reconstruct(self, s: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(s))

    def distance_to(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        return latent_distance(self.encode(s), self.encode(g))

    def replace(self, **changes: Any) -> TemporalAutoencoder:
        return dataclasses.replace(self, **changes)


def latent_distance(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Euclidean distance along the last axis."""
    return np.linalg.norm(np.asarray(z1) - np.asarray(z2), axis=-1)


class LossGrad(NamedTuple):
    """A loss value with its gradients for the encoder and decoder weights."""

    value: float
    g_enc: np.ndarray
    g_dec: np.ndarray


def _zeros_like(ae: TemporalAutoencoder) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros_like(ae.encoder.weights), np.zeros_like(ae.decoder.weights)


def loss_rec(ae: TemporalAutoencoder, batch: TransitionSet) -> LossGrad:
    s = batch.s
    n = len(s)
    z, enc_pullback = ae.encoder.vjp(ae.normalize(s))
    y, dec_pullback = ae.decoder.vjp(z)
    residual = y * ae.state_std + ae.state_mean - s
    norm, unit = row_norm(residual)
    g_dec, dz = dec_pullback(unit * ae.state_std / n)
    g_enc, _ = enc_pullback(dz)
    return LossGrad(float(norm.mean()), g_enc, g_dec)


def bellman_distance_targets(
    ae: TemporalAutoencoder, target_encoder: MLP, batch: TransitionSet, gamma: float
) -> np.ndarray:
    """Backup ``0`` at the goal, else ``1 + gamma * (1 - terminal) * d_target``, clamped >= 0."""
    d_next = latent_distance(
        ae.encode(batch.s_next, target_encoder), ae.encode(batch.g, target_encoder)
    )
    backup = 1.0 + gamma * (1.0 - batch.terminal) * d_next
    return np.maximum(np.where(batch.success > 0, 0.0, backup), 0.0)


def loss_traj(
    ae: TemporalAutoencoder,
    target_encoder: MLP,
    batch: TransitionSet,
    *,
    tau: float,
    gamma: float,
) -> LossGrad:
    n = len(batch)
    target = bellman_distance_targets(ae, target_encoder, batch, gamma)
    z, enc_pullback = ae.encoder.vjp(ae.normalize(np.vstack([batch.s, batch.g])))
    z_s, z_g = z[:n], z[n:]
    d, unit = row_norm(z_s - z_g)
    values, slope = expectile_loss(d - target, tau)
    dd = (slope / n)[:, None] * unit
    g_enc, _ = enc_pullback(np.vstack([dd, -dd]))
    return LossGrad(float(values.mean()), g_enc, np.zeros_like(ae.decoder.weights))


def loss_tran(ae: TemporalAutoencoder, batch: TransitionSet) -> LossGrad:
    n = len(batch)
    d0 = np.abs(batch.success - 1.0)
    z, enc_pullback = ae.encoder.vjp(ae.normalize(np.vstack([batch.s, batch.s_next])))
    d, unit = row_norm(z[:n] - z[n:])
    # tau = 1: only overshoot beyond the moving cost is penalized.
    values, slope = expectile_loss(d - d0, 1.0)
    dd = (slope / n)[:, None] * unit
    g_enc, _ = enc_pullback(np.vstack([dd, -dd]))
    return LossGrad(float(values.mean()), g_enc, np.zeros_like(ae.decoder.weights))


class ReprLosses(NamedTuple):
    total: float
    rec: float
    traj: float
    tran: float
    g_enc: np.ndarray
    g_dec: np.ndarray


def autoencoder_objective(
    ae: TemporalAutoencoder,
    target_encoder: MLP,
    batch: TransitionSet,
    cfg: ReprConfig,
) -> ReprLosses:
    rec = loss_rec(ae, batch)
    g_enc, g_dec = _zeros_like(ae)
    g_dec = g_dec + rec.g_dec
    if not cfg.decoupled:
        g_enc = g_enc + rec.g_enc
    traj = tran = 0.0
    if cfg.eta1 > 0:
        part = loss_traj(ae, target_encoder, batch, tau=cfg.tau, gamma=cfg.gamma)
        traj = part.value
        g_enc = g_enc + cfg.eta1 * part.g_enc
    if cfg.eta2 > 0:
        part = loss_tran(ae, batch)
        tran = part.value
        g_enc = g_enc + cfg.eta2 * part.g_enc
    total = rec.value + cfg.eta1 * traj + cfg.eta2 * tran
    return ReprLosses(total, rec.value, traj, tran, g_enc, g_dec)


@dataclass
class ReprResult:
    autoencoder: TemporalAutoencoder
    target_encoder: MLP
    history: list[dict[str, float]]


def state_statistics(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = states.mean(axis=0)
    std = states.std(axis=0)
    return mean, np.where(std > 1e-6, std, 1.0)


def progress_marks(steps: int, fraction: float = 0.1) -> set[int]:
    """Steps at which every ``fraction`` of a run has completed."""
    count = round(1 / fraction)
    return {max(1, -(-steps * j // count)) for j in range(1, count + 1)}


def train_repr(
    D: TransitionSet,
    cfg: ReprConfig,
    steps: int,
    seed: int,
    *,
    width_multiplier: float = 1.0,
    on_progress: Callable[[int, dict[str, float]], None] | None = None,
) -> ReprResult:
    """Train the autoencoder with Adam, Polyak-updating the target encoder every step."""
    if steps < 1:
        msg = f"steps must be >= 1, got {steps}"
        raise ValueError(msg)
    if len(D) == 0:
        raise EmptyDatasetError("cannot train a representation on an empty dataset")
    init_seq, batch_seq = np.random.SeedSequence(seed).spawn(2)
    init_rng = np.random.default_rng(init_seq)
    batch_rng = np.random.default_rng(batch_seq)

    hidden = tuple(cfg.hidden) if cfg.hidden is not None else hidden_dims(width_multiplier)
    mean, std = state_statistics(np.vstack([D.s, D.s_next]))
    ae = TemporalAutoencoder.init(
        cfg.latent_dim, hidden, init_rng, activation=cfg.activation, state_mean=mean, state_std=std
    )
    target = ae.encoder
    enc_opt = OptimizerState.for_fn(ae.encoder, cfg.lr)
    dec_opt = OptimizerState.for_fn(ae.decoder, cfg.lr)
    batch_size = min(cfg.batch_size, len(D))
    marks = progress_marks(steps)
    history = []
    for step in range(1, steps + 1):
        batch = sample_batch(D, None, batch_size, 0.0, batch_rng)
        if cfg.ensure_goal_in_batch:
            batch = ensure_terminal(batch, D, batch_rng)
        losses = autoencoder_objective(ae, target, batch, cfg)
        if not np.isfinite(losses.total):
            raise NumericalAbortError("repr", f"non-finite loss {losses.total} at step {step}")
        encoder, enc_opt = adam_step(ae.encoder, enc_opt, losses.g_enc, phase="repr")
        decoder, dec_opt = adam_step(ae.decoder, dec_opt, losses.g_dec, phase="repr")
        ae = ae.replace(encoder=encoder, decoder=decoder)
        target = polyak_update(target, ae.encoder, cfg.target_rho)
        row = {
            "step": float(step),
            "total": losses.total,
            "rec": losses.rec,
            "traj": losses.traj,
            "tran": losses.tran,
        }
        history.append(row)
        if step in marks:
            logger.info(
                "repr step %d/%d: total=%.4f rec=%.4f traj=%.4f tran=%.4f",
                step, steps, losses.total, losses.rec, losses.traj, losses.tran,
            )  # fmt: skip
            if on_progress is not None:
                on_progress(step, row)
    return ReprResult(ae, target, history)


def reconstruction_error(ae: TemporalAutoencoder, states: np.ndarray) -> float:
    """Mean ``‖s - h(f(s))‖`` over ``states``."""
    return float(np.linalg.norm(states - ae.reconstruct(states), axis=-1).mean())


def heatmap(ae: TemporalAutoencoder, env: MazeEnv, goal: Cell) -> np.ndarray:
    """Rows ``(x, y, d(f(s), f(g)))`` for every free cell, in row-major order."""
    if not env.layout.is_free(goal):
        msg = f"goal {goal} is a wall or outside the maze"
        raise InvalidStateError(msg)
    cells = np.array(env.free_cells(), dtype=np.float64)
    d = ae.distance_to(cells, np.broadcast_to(env.cell_state(goal), cells.shape))
    return np.column_stack([cells, d])


def write_heatmap_csv(path: str | Path, rows: np.ndarray) -> None:
    np.savetxt(path, rows, delimiter=",", header="x,y,d", comments="", fmt=["%d", "%d", "%.10g"])


def corner_goals(env: MazeEnv) -> list[Cell]:
    """The free cell closest (Manhattan) to each corner of the bounding box."""
    free = env.free_cells()
    corners = [(0, 0), (env.width - 1, 0), (0, env.height - 1), (env.width - 1, env.height - 1)]

    def nearest(corner: Cell) -> Cell:
        return min(free, key=lambda c: (abs(c[0] - corner[0]) + abs(c[1] - corner[1]), c[1], c[0]))

    return [nearest(corner) for corner in corners]


def save_repr(
    path: str | Path, result: ReprResult, meta: dict[str, Any]
) -> str:
    ae = result.autoencoder
    arrays, networks = pack_networks(
        {"encoder": ae.encoder, "decoder": ae.decoder, "target_encoder": result.target_encoder}
    )
    arrays["state_mean"] = ae.state_mean
    arrays["state_std"] = ae.state_std
    return write_container(path, arrays, {**meta, "kind": "repr", "networks": networks})


def load_repr(path: str | Path) -> tuple[TemporalAutoencoder, MLP]:
    container = read_container(path, kind="repr")
    ae = TemporalAutoencoder(
        container.network("encoder"),
        container.network("decoder"),
        container.arrays["state_mean"],
        container.arrays["state_std"],
    )
    return ae, container.network("target_encoder")

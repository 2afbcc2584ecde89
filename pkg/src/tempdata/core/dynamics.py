"""One-step latent forward model ``zeta(z' | z, a)``.

A single MLP maps ``z ⊕ a`` to the mean of a diagonal Gaussian over the next
latent and, when the variance is learned, to a raw log-std head clipped to
``[log_std_min, log_std_max]``. Training minimizes the Gaussian negative
log-likelihood of ``f(s')`` with the encoder frozen. There is no reward head.

The same model and trainer also serve the naive baseline, where the "codec"
is a plain state standardizer instead of the temporal autoencoder.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tempdata.core.approximator import MLP, Activation, OptimizerState, adam_step, hidden_dims
from tempdata.core.artifacts import pack_networks, read_container, write_container
from tempdata.core.dataset import TransitionSet
from tempdata.core.errors import DimensionMismatchError, EmptyDatasetError, NumericalAbortError
from tempdata.core.maze import ACTION_DIM, STATE_DIM
from tempdata.core.representation import progress_marks, state_statistics

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


class DynamicsConfig(BaseModel):
    """Latent forward-model architecture and training."""

    model_config = ConfigDict(extra="forbid")

    learn_variance: bool = Field(
        default=True, description="Learn a clipped log-std head; otherwise unit variance."
    )
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    sample_rollouts: bool = Field(
        default=False, description="Sample next latents during rollouts instead of using the mean."
    )
    lr: float = Field(default=3e-4, gt=0)
    batch_size: int = Field(default=512, ge=1)
    hidden: list[int] | None = None
    activation: Activation = "relu"
    holdout_fraction: float = Field(
        default=0.1, ge=0, lt=1, description="Share of transitions held out for the dynamics report."
    )


class Codec(Protocol):
    """Maps states to the space the dynamics model runs in, and back."""

    @property
    def latent_dim(self) -> int: ...

    def encode(self, s: np.ndarray) -> np.ndarray: ...

    def decode(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class NaiveStateCodec:
    """Standardized raw states as the "latent" space."""

    state_mean: np.ndarray
    state_std: np.ndarray

    @classmethod
    def fit(cls, states: np.ndarray) -> NaiveStateCodec:
        return cls(*state_statistics(states))

    @property
    def latent_dim(self) -> int:
        return STATE_DIM

    def encode(self, s: np.ndarray) -> np.ndarray:
        return (np.asarray(s, dtype=np.float64) - self.state_mean) / self.state_std

    def decode(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.state_std + self.state_mean


@dataclass(frozen=True, eq=False)
class LatentDynamics:
    net: MLP
    latent_dim: int
    learn_variance: bool = True
    log_std_min: float = -5.0
    log_std_max: float = 2.0

    @classmethod
    def init(
        cls,
        latent_dim: int,
        hidden: tuple[int, ...],
        rng: np.random.Generator,
        cfg: DynamicsConfig,
    ) -> LatentDynamics:
        out = 2 * latent_dim if cfg.learn_variance else latent_dim
        net = MLP.init((latent_dim + ACTION_DIM, *hidden, out), rng, cfg.activation)
        return cls(net, latent_dim, cfg.learn_variance, cfg.log_std_min, cfg.log_std_max)

    def with_net(self, net: MLP) -> LatentDynamics:
        return LatentDynamics(
            net, self.latent_dim, self.learn_variance, self.log_std_min, self.log_std_max
        )

    def _inputs(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if z.shape[-1] != self.latent_dim:
            msg = f"latent has dimension {z.shape[-1]}, model expects {self.latent_dim}"
            raise DimensionMismatchError(msg)
        if a.shape[-1] != ACTION_DIM:
            msg = f"action has dimension {a.shape[-1]}, model expects {ACTION_DIM}"
            raise DimensionMismatchError(msg)
        return np.concatenate([z, a], axis=-1)

    def _split(self, out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.latent_dim
        mean = out[..., :k]
        if not self.learn_variance:
            zero = np.zeros_like(mean)
            return mean, zero, zero
        raw = out[..., k:]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        inside = ((raw >= self.log_std_min) & (raw <= self.log_std_max)).astype(np.float64)
        return mean, log_std, inside

    def predict(self, z: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and standard deviation of the next latent."""
        mean, log_std, _ = self._split(self.net.forward(self._inputs(z, a)))
        return mean, np.exp(log_std)


def gaussian_nll(
    target: np.ndarray, mean: np.ndarray, log_std: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Batch-mean diagonal Gaussian NLL with gradients in ``mean`` and ``log_std``."""
    n = len(target)
    inv_var = np.exp(-2.0 * log_std)
    sq = (target - mean) ** 2 * inv_var
    per_row = 0.5 * np.sum(sq + 2.0 * log_std + _LOG_2PI, axis=-1)
    d_mean = -(target - mean) * inv_var / n
    d_log_std = (1.0 - sq) / n
    return float(per_row.mean()), d_mean, d_log_std


def nll_loss(
    model: LatentDynamics, z: np.ndarray, a: np.ndarray, z_next: np.ndarray
) -> tuple[float, np.ndarray]:
    """NLL of ``z_next`` under ``model`` and its gradient in the network weights."""
    out, pullback = model.net.vjp(model._inputs(z, a))
    mean, log_std, inside = model._split(out)
    value, d_mean, d_log_std = gaussian_nll(z_next, mean, log_std)
    d_out = d_mean if not model.learn_variance else np.concatenate([d_mean, d_log_std * inside], axis=-1)
    g, _ = pullback(d_out)
    return value, g


@dataclass
class DynamicsResult:
    model: LatentDynamics
    history: list[dict[str, float]]
    holdout: np.ndarray


def train_dynamics(
    D: TransitionSet,
    encoder: Codec,
    steps: int,
    seed: int,
    *,
    cfg: DynamicsConfig | None = None,
    width_multiplier: float = 1.0,
    on_progress: Callable[[int, dict[str, float]], None] | None = None,
) -> DynamicsResult:
    """Fit ``zeta`` on ``(f(s), a) -> f(s')`` with ``encoder`` frozen.

    ``holdout`` in the result indexes the transitions kept out of training.
    """
    cfg = cfg or DynamicsConfig()
    if steps < 1:
        msg = f"steps must be >= 1, got {steps}"
        raise ValueError(msg)
    if len(D) == 0:
        raise EmptyDatasetError("cannot train dynamics on an empty dataset")
    init_seq, split_seq, batch_seq = np.random.SeedSequence(seed).spawn(3)
    order = np.random.default_rng(split_seq).permutation(len(D))
    n_hold = min(int(len(D) * cfg.holdout_fraction), len(D) - 1)
    holdout, train_idx = np.sort(order[:n_hold]), order[n_hold:]

    z = encoder.encode(D.s[train_idx])
    z_next = encoder.encode(D.s_next[train_idx])
    a = D.a[train_idx]
    hidden = tuple(cfg.hidden) if cfg.hidden is not None else hidden_dims(width_multiplier)
    model = LatentDynamics.init(encoder.latent_dim, hidden, np.random.default_rng(init_seq), cfg)
    opt = OptimizerState.for_fn(model.net, cfg.lr)
    rng = np.random.default_rng(batch_seq)
    batch_size = min(cfg.batch_size, len(train_idx))
    marks = progress_marks(steps)
    history = []
    for step in range(1, steps + 1):
        idx = rng.choice(len(train_idx), size=batch_size, replace=False)
        value, g = nll_loss(model, z[idx], a[idx], z_next[idx])
        if not np.isfinite(value):
            raise NumericalAbortError("dynamics", f"non-finite NLL {value} at step {step}")
        net, opt = adam_step(model.net, opt, g, phase="dynamics")
        model = model.with_net(net)
        row = {"step": float(step), "nll": value}
        history.append(row)
        if step in marks:
            logger.info("dynamics step %d/%d: nll=%.4f", step, steps, value)
            if on_progress is not None:
                on_progress(step, row)
    return DynamicsResult(model, history, holdout)


class DynamicsReport(BaseModel):
    """Held-out quality of the latent model."""

    model_config = ConfigDict(extra="forbid")

    n_heldout: int
    nll: float
    mse: float
    mean_step_error: float = Field(description="Mean ‖mean - f(s')‖ over held-out transitions.")
    latent_step_p90: float = Field(description="90th percentile of ‖f(s') - f(s)‖ over the dataset.")


def evaluate_dynamics(
    model: LatentDynamics, encoder: Codec, D: TransitionSet, index: np.ndarray | None = None
) -> DynamicsReport:
    held = D if index is None or len(index) == 0 else D.take(index)
    z = encoder.encode(held.s)
    z_next = encoder.encode(held.s_next)
    out = model.net.forward(model._inputs(z, held.a))
    mean, log_std, _ = model._split(out)
    nll, _, _ = gaussian_nll(z_next, mean, log_std)
    error = np.linalg.norm(mean - z_next, axis=-1)
    all_steps = np.linalg.norm(encoder.encode(D.s_next) - encoder.encode(D.s), axis=-1)
    return DynamicsReport(
        n_heldout=len(held),
        nll=nll,
        mse=float(np.mean((mean - z_next) ** 2)),
        mean_step_error=float(error.mean()),
        latent_step_p90=float(np.percentile(all_steps, 90)),
    )


def save_dynamics(
    path: str | Path, model: LatentDynamics, meta: dict[str, Any], codec: Codec | None = None
) -> str:
    arrays, networks = pack_networks({"dynamics": model.net})
    extra: dict[str, Any] = {
        "latent_dim": model.latent_dim,
        "learn_variance": model.learn_variance,
        "log_std_bounds": [model.log_std_min, model.log_std_max],
        "codec": "temporal",
    }
    if isinstance(codec, NaiveStateCodec):
        extra["codec"] = "naive"
        arrays["codec.state_mean"] = codec.state_mean
        arrays["codec.state_std"] = codec.state_std
    return write_container(
        path, arrays, {**meta, **extra, "kind": "dynamics", "networks": networks}
    )


def load_dynamics(path: str | Path) -> tuple[LatentDynamics, NaiveStateCodec | None]:
    """The model and, for the naive baseline, its state codec."""
    container = read_container(path, kind="dynamics")
    meta = container.meta
    low, high = meta["log_std_bounds"]
    model = LatentDynamics(
        container.network("dynamics"), int(meta["latent_dim"]), bool(meta["learn_variance"]), low, high
    )
    codec = None
    if meta.get("codec") == "naive":
        codec = NaiveStateCodec(
            container.arrays["codec.state_mean"], container.arrays["codec.state_std"]
        )
    return model, codec

"""Multilayer perceptrons with a hand-written reverse pass, Adam, and Polyak averaging.

Every learned function in tempdata (encoder, decoder, dynamics, critics,
actor) is an :class:`MLP`: a stack of affine layers with a fixed hidden
activation and a linear output layer. Weights live in one flat ``float64``
vector so optimizers, target averaging and checkpoints treat every network
alike.

Reverse mode is implemented for this fixed graph only. :meth:`MLP.vjp`
returns the outputs together with a pullback mapping an output cotangent to
``(weight gradient, input gradient)``; losses that compose several networks
(the autoencoder, the intrinsic reward through the encoder) chain pullbacks
by hand.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from tempdata.core.errors import (
    ArchitectureMismatchError,
    DimensionMismatchError,
    NumericalAbortError,
)

Activation = Literal["relu", "gelu"]
Pullback = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
LossHead = Callable[[np.ndarray], tuple[float, np.ndarray]]

BASE_HIDDEN = (512, 512, 512)

_GELU_C = math.sqrt(2.0 / math.pi)


def hidden_dims(width_multiplier: float = 1.0, base: tuple[int, ...] = BASE_HIDDEN) -> tuple[int, ...]:
    """Scale every hidden width uniformly, keeping at least one unit per layer."""
    return tuple(max(1, round(width * width_multiplier)) for width in base)


def _activate(name: Activation, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(pre, 0.0)
    return 0.5 * pre * (1.0 + np.tanh(_GELU_C * (pre + 0.044715 * pre**3)))


def _activate_grad(name: Activation, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    t = np.tanh(_GELU_C * (pre + 0.044715 * pre**3))
    return 0.5 * (1.0 + t) + 0.5 * pre * (1.0 - t**2) * _GELU_C * (
        1.0 + 3 * 0.044715 * pre**2
    )


def n_params(layer_dims: tuple[int, ...]) -> int:
    return sum((i + 1) * o for i, o in zip(layer_dims[:-1], layer_dims[1:], strict=True))


@dataclass(frozen=True, eq=False)
class MLP:
    """An immutable feed-forward network; updates return a new instance."""

    layer_dims: tuple[int, ...]
    weights: np.ndarray
    activation: Activation = "relu"

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2:  # noqa: PLR2004
            msg = f"an MLP needs at least an input and output dim, got {self.layer_dims}"
            raise ValueError(msg)
        expected = n_params(self.layer_dims)
        if self.weights.shape != (expected,):
            msg = (
                f"weight vector has shape {self.weights.shape}, "
                f"layer_dims {self.layer_dims} need ({expected},)"
            )
            raise DimensionMismatchError(msg)

    @classmethod
    def init(
        cls,
        layer_dims: tuple[int, ...] | list[int],
        rng: np.random.Generator,
        activation: Activation = "relu",
    ) -> MLP:
        """He-style uniform fan-in initialization with zero biases."""
        dims = tuple(int(d) for d in layer_dims)
        chunks = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:], strict=True):
            bound = math.sqrt(6.0 / fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            chunks.append(np.zeros(fan_out))
        return cls(dims, np.concatenate(chunks), activation)

    @classmethod
    def zeros(
        cls, layer_dims: tuple[int, ...] | list[int], activation: Activation = "relu"
    ) -> MLP:
        dims = tuple(int(d) for d in layer_dims)
        return cls(dims, np.zeros(n_params(dims)), activation)

    @classmethod
    def identity(cls, dim: int) -> MLP:
        """A single linear layer computing ``x``."""
        return cls((dim, dim), np.concatenate([np.eye(dim).ravel(), np.zeros(dim)]))

    def with_weights(self, weights: np.ndarray) -> MLP:
        return MLP(self.layer_dims, np.asarray(weights, dtype=np.float64), self.activation)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def same_architecture(self, other: MLP) -> bool:
        return self.layer_dims == other.layer_dims and self.activation == other.activation

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(W, b)`` views into the flat weight vector; ``W`` is ``(in, out)``."""
        out = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:], strict=True):
            w = self.weights[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.weights[offset : offset + fan_out]
            offset += fan_out
            out.append((w, b))
        return out

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.in_dim:
            msg = f"input has trailing dimension {x.shape[-1:] or '()'}, network expects {self.in_dim}"
            raise DimensionMismatchError(msg)
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the network on a single vector or a ``(N, in_dim)`` batch."""
        x = self._check_input(x)
        h = np.atleast_2d(x)
        layers = self.layers()
        for i, (w, b) in enumerate(layers):
            h = h @ w + b
            if i < len(layers) - 1:
                h = _activate(self.activation, h)
        return h[0] if x.ndim == 1 else h

    __call__ = forward

    def vjp(self, x: np.ndarray) -> tuple[np.ndarray, Pullback]:
        """Forward pass plus a pullback ``dy -> (dweights, dx)``."""
        x = self._check_input(x)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        layers = self.layers()
        inputs: list[np.ndarray] = []
        pres: list[np.ndarray] = []
        for i, (w, b) in enumerate(layers):
            inputs.append(h)
            pre = h @ w + b
            pres.append(pre)
            h = _activate(self.activation, pre) if i < len(layers) - 1 else pre
        y = h[0] if single else h

        def pullback(dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            d = np.atleast_2d(np.asarray(dy, dtype=np.float64))
            grads: list[np.ndarray] = []
            for i in range(len(layers) - 1, -1, -1):
                w, _ = layers[i]
                grads.append(d.sum(axis=0))
                grads.append((inputs[i].T @ d).ravel())
                d = d @ w.T
                if i > 0:
                    d = d * _activate_grad(self.activation, pres[i - 1])
            flat = np.concatenate(grads[::-1])
            return flat, (d[0] if single else d)

        return y, pullback


def value_and_grad(fn: MLP, loss_head: LossHead, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and weight gradient for ``loss_head(fn(x))``.

    ``loss_head`` maps the network outputs to ``(loss, d loss / d outputs)``; it
    owns the batch reduction, so a mean loss must return ``dy`` already divided
    by the batch size.
    """
    y, pullback = fn.vjp(x)
    loss, dy = loss_head(y)
    g, _ = pullback(dy)
    return float(loss), g


@dataclass
class OptimizerState:
    """Adam moments for one weight vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 3e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def for_size(cls, size: int, lr: float = 3e-4) -> OptimizerState:
        return cls(np.zeros(size), np.zeros(size), 0, lr)

    @classmethod
    def for_fn(cls, fn: MLP, lr: float = 3e-4) -> OptimizerState:
        return cls.for_size(fn.weights.size, lr)


def adam_update(
    weights: np.ndarray,
    opt: OptimizerState,
    g: np.ndarray,
    *,
    phase: str = "training",
) -> tuple[np.ndarray, OptimizerState]:
    """Adam on a bare parameter vector. Neither input is mutated."""
    if g.shape != weights.shape or opt.first_moment.shape != weights.shape:
        msg = f"gradient shape {g.shape} does not match weights {weights.shape}"
        raise DimensionMismatchError(msg)
    if not np.all(np.isfinite(g)):
        bad = int(np.count_nonzero(~np.isfinite(g)))
        raise NumericalAbortError(phase, f"{bad} non-finite gradient entries at step {opt.step_count + 1}")
    b1, b2 = opt.betas
    step = opt.step_count + 1
    m = b1 * opt.first_moment + (1 - b1) * g
    v = b2 * opt.second_moment + (1 - b2) * g * g
    m_hat = m / (1 - b1**step)
    v_hat = v / (1 - b2**step)
    new_weights = weights - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return new_weights, OptimizerState(m, v, step, opt.lr, opt.betas, opt.eps)


def adam_step(
    fn: MLP, opt: OptimizerState, g: np.ndarray, *, phase: str = "training"
) -> tuple[MLP, OptimizerState]:
    weights, opt = adam_update(fn.weights, opt, g, phase=phase)
    return fn.with_weights(weights), opt


def polyak_update(target: MLP, online: MLP, rho: float) -> MLP:
    """Move ``target`` a fraction ``rho`` of the way toward ``online``."""
    if not target.same_architecture(online):
        msg = (
            f"cannot average {target.layer_dims}/{target.activation} "
            f"toward {online.layer_dims}/{online.activation}"
        )
        raise ArchitectureMismatchError(msg)
    if not 0.0 <= rho <= 1.0:
        msg = f"rho must lie in [0, 1], got {rho}"
        raise ValueError(msg)
    return target.with_weights((1.0 - rho) * target.weights + rho * online.weights)


def finite_difference_grad(
    f: Callable[[np.ndarray], float], w: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``w``."""
    w = np.asarray(w, dtype=np.float64)
    out = np.empty_like(w)
    for i in range(w.size):
        plus = w.copy()
        minus = w.copy()
        plus[i] += h
        minus[i] -= h
        out[i] = (f(plus) - f(minus)) / (2 * h)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """``‖a - b‖ / max(‖a‖, ‖b‖, floor)``."""
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / scale


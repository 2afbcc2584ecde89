"""Exception hierarchy shared by every tempdata module.

Every error a caller can reasonably act on derives from :class:`TempdataError`,
whose ``exit_code`` is what the CLI exits with: ``1`` for user errors (a bad
maze file, an empty buffer, a checkpoint from another format version) and
``2`` for numerical aborts during training.
"""

from __future__ import annotations


class TempdataError(RuntimeError):
    """Base class for all tempdata errors."""

    exit_code = 1


class InvalidStateError(TempdataError):
    """Raised when a state is a wall cell or outside the maze bounding box."""


class UnreachableError(TempdataError):
    """Raised when a goal or waypoint cannot be reached from a state."""


class MazeLayoutError(TempdataError):
    """Raised when a maze layout file is malformed."""


class EmptyDatasetError(TempdataError):
    """Raised when an operation needs at least one transition or trajectory."""


class EmptySyntheticBufferError(TempdataError):
    """Raised when synthetic samples are requested from an empty rollout buffer."""


class DimensionMismatchError(TempdataError, ValueError):
    """Raised when an array does not match the dimension a network expects."""


class ArchitectureMismatchError(TempdataError, ValueError):
    """Raised when two networks that must share an architecture do not."""


class CheckpointVersionError(TempdataError):
    """Raised when an artifact has another format version or payload kind."""


class ZeroDirectionError(TempdataError):
    """Raised when a skill direction is requested at the goal itself."""


class PhaseOrderError(TempdataError):
    """Raised when a training phase starts before its prerequisites exist."""


class NoConvergenceError(TempdataError):
    """Raised when value iteration exceeds its iteration cap."""


class NumericalAbortError(TempdataError):
    """Raised when a loss or gradient becomes non-finite during training."""

    exit_code = 2

    def __init__(self, phase: str, detail: str) -> None:
        self.phase = phase
        self.detail = detail
        super().__init__(f"numerical abort in {phase} phase: {detail}")

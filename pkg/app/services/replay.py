import csv
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.core.errors import PreconditionError, StructuralError

logger = logging.getLogger("replay")

DEFAULT_CAPACITY = 1_000_000


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    r: float
    x_next: np.ndarray
    # True only when the episode ended at x_next by failure or goal, never by the time limit
    terminal: bool = False


@dataclass
class Batch:
    x: np.ndarray
    u: np.ndarray
    r: np.ndarray
    x_next: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return self.r.shape[0]

    def transitions(self) -> List[Transition]:
        return [
            Transition(self.x[i].copy(), self.u[i].copy(), float(self.r[i]), self.x_next[i].copy(), bool(self.terminal[i]))
            for i in range(len(self))
        ]


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions backed by preallocated arrays."""

    def __init__(
        self,
        state_dim: int,
        control_dim: int,
        capacity: int = DEFAULT_CAPACITY,
        control_low: Optional[np.ndarray] = None,
        control_high: Optional[np.ndarray] = None,
    ):
        if capacity <= 0:
            raise PreconditionError(f"capacity must be positive, got {capacity}")
        self.state_dim = state_dim
        self.control_dim = control_dim
        self.capacity = int(capacity)
        self.control_low = None if control_low is None else np.asarray(control_low, dtype=np.float64)
        self.control_high = None if control_high is None else np.asarray(control_high, dtype=np.float64)

        self._x = np.zeros((self.capacity, state_dim))
        self._u = np.zeros((self.capacity, control_dim))
        self._r = np.zeros(self.capacity)
        self._x_next = np.zeros((self.capacity, state_dim))
        self._terminal = np.zeros(self.capacity, dtype=bool)
        self._head = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def push(self, t: Transition) -> None:
        x, u, x_next = (np.asarray(a, dtype=np.float64) for a in (t.x, t.u, t.x_next))
        if x.shape != (self.state_dim,) or x_next.shape != (self.state_dim,):
            raise StructuralError(f"state of shape {x.shape}/{x_next.shape}, buffer expects ({self.state_dim},)")
        if u.shape != (self.control_dim,):
            raise StructuralError(f"control of shape {u.shape}, buffer expects ({self.control_dim},)")
        if self.control_low is not None and (np.any(u < self.control_low) or np.any(u > self.control_high)):
            raise PreconditionError(f"control {u} lies outside the control box")

        i = self._head
        self._x[i] = x
        self._u[i] = u
        self._r[i] = t.r
        self._x_next[i] = x_next
        self._terminal[i] = t.terminal
        self._head = (self._head + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def _oldest_first(self) -> np.ndarray:
        start = self._head if self.count == self.capacity else 0
        return (start + np.arange(self.count)) % self.capacity

    def sample_arrays(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement, returned as stacked arrays."""
        if self.count == 0:
            raise PreconditionError("cannot sample from an empty replay buffer")
        if batch_size < 1:
            raise PreconditionError(f"batch_size must be at least 1, got {batch_size}")
        idx = rng.integers(0, self.count, size=batch_size)
        # Slots [0, count) are always the filled ones
        return Batch(
            x=self._x[idx].copy(),
            u=self._u[idx].copy(),
            r=self._r[idx].copy(),
            x_next=self._x_next[idx].copy(),
            terminal=self._terminal[idx].copy(),
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        return self.sample_arrays(batch_size, rng).transitions()

    def transitions(self) -> List[Transition]:
        """Stored transitions, oldest first."""
        order = self._oldest_first()
        return Batch(self._x[order], self._u[order], self._r[order], self._x_next[order], self._terminal[order]).transitions()

    def dump_csv(self, path) -> None:
        header = (
            [f"x{i}" for i in range(self.state_dim)]
            + [f"u{i}" for i in range(self.control_dim)]
            + ["r"]
            + [f"x_next{i}" for i in range(self.state_dim)]
            + ["terminal"]
        )
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for t in self.transitions():
                writer.writerow(
                    [repr(float(v)) for v in t.x]
                    + [repr(float(v)) for v in t.u]
                    + [repr(float(t.r))]
                    + [repr(float(v)) for v in t.x_next]
                    + [int(t.terminal)]
                )
        logger.info(f"Dumped {self.count} transitions to {path}")

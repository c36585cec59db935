"""Points of the space-time group R^{N+1}."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite


@dataclass(frozen=True)
class GroupPoint:
    """A space-time point ``z = (x, t)``."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))
        if not (np.all(np.isfinite(x)) and np.isfinite(self.t)):
            raise NonFinite("GroupPoint entries must be finite")

    @property
    def N(self) -> int:
        return self.x.shape[0]

    def as_array(self) -> np.ndarray:
        return np.append(self.x, self.t)

    @classmethod
    def from_array(cls, a) -> "GroupPoint":
        a = np.asarray(a, dtype=float).reshape(-1)
        return cls(a[:-1], a[-1])

    @classmethod
    def origin(cls, N: int) -> "GroupPoint":
        return cls(np.zeros(N), 0.0)

    def __eq__(self, other):
        if not isinstance(other, GroupPoint):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.x, other.x)

    def __hash__(self):
        return hash((self.x.tobytes(), self.t))

    def __repr__(self):
        return f"GroupPoint(x={self.x.tolist()}, t={self.t!r})"


def as_point(z) -> GroupPoint:
    if isinstance(z, GroupPoint):
        return z
    if isinstance(z, tuple) and len(z) == 2 and np.ndim(z[1]) == 0 and np.ndim(z[0]) == 1:
        return GroupPoint(z[0], z[1])
    return GroupPoint.from_array(z)

"""Pilot/data split, per-antenna index sets, projections, and pre-log values.

The pilot slots are always the first alpha positions of a block.  For R >= 2
the construction splits into two regimes:

* case "b" ((QR-1)/(R-1) <= L): alpha = 1 and the first R-1 antennas keep a
  short prefix of positions, sized by k = floor((Q-R)/(R-1)) and
  l = Q - R - k(R-1);
* case "a" (otherwise, and always for R = 1): alpha = QR - (R-1)L and every
  antenna keeps all L positions.

Either way the row budget matches the unknowns: sum |I_i| = QR + L - alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil

import numpy as np

from .channel import ChannelConfig


@dataclass(frozen=True)
class PilotPlan:
    L: int
    Q: int
    R: int
    alpha: int
    k: int | None
    l: int | None
    case: str
    sets: tuple[tuple[int, ...], ...]

    @property
    def pilot_set(self) -> tuple[int, ...]:
        return tuple(range(1, self.alpha + 1))

    @property
    def data_set(self) -> tuple[int, ...]:
        return tuple(range(self.alpha + 1, self.L + 1))

    @property
    def dim(self) -> int:
        """Size of the square Jacobian: QR + L - alpha."""
        return self.Q * self.R + self.L - self.alpha

    @property
    def set_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sets)

    @property
    def K_size(self) -> int | None:
        if self.R < 2:
            return None
        cfg = ChannelConfig(self.L, self.Q, self.R)
        return required_K_cardinality(cfg)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "Q": self.Q,
            "R": self.R,
            "alpha": self.alpha,
            "k": self.k,
            "l": self.l,
            "case": self.case,
            "sets": [list(s) for s in self.sets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PilotPlan":
        return cls(
            L=d["L"],
            Q=d["Q"],
            R=d["R"],
            alpha=d["alpha"],
            k=d["k"],
            l=d["l"],
            case=d["case"],
            sets=tuple(tuple(s) for s in d["sets"]),
        )


def plan_pilots(cfg: ChannelConfig) -> PilotPlan:
    """Pilot count alpha and index sets I_1..I_R for a valid config."""
    cfg.require_valid()
    L, Q, R = cfg.L, cfg.Q, cfg.R
    if R >= 2 and Q * R - 1 <= (R - 1) * L:
        k = (Q - R) // (R - 1)
        l = Q - R - k * (R - 1)
        alpha = 1
        sets = []
        for m in range(1, R):
            upper = Q + k + 1 if m <= R - l - 1 else Q + k + 2
            sets.append(tuple(range(1, upper + 1)))
        sets.append(tuple(range(1, L + 1)))
        plan = PilotPlan(L, Q, R, alpha, k, l, "b", tuple(sets))
    else:
        alpha = Q * R - (R - 1) * L
        if alpha < 1:
            raise ValueError("inconsistent dimensions: alpha < 1 outside the short-pilot regime")
        sets = tuple(tuple(range(1, L + 1)) for _ in range(R))
        plan = PilotPlan(L, Q, R, alpha, None, None, "a", sets)
    assert sum(plan.set_sizes) == plan.dim
    return plan


def required_K_cardinality(cfg: ChannelConfig) -> int:
    """Cardinality of the index set on which the subset rank condition is needed."""
    if cfg.R < 2:
        raise ValueError("the subset rank condition is only invoked for R >= 2")
    return min(ceil((cfg.Q * cfg.R - 1) / (cfg.R - 1)), cfg.L)


@dataclass(frozen=True)
class Projection:
    """Block-diagonal row selection: block m keeps the positions in blocks[m]."""

    L: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        for blk in self.blocks:
            if any(not 1 <= i <= self.L for i in blk):
                raise ValueError("selected index out of range")
            if list(blk) != sorted(set(blk)):
                raise ValueError("each block must be a strictly ascending index set")

    @property
    def rows(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def indices(self) -> np.ndarray:
        """0-based positions selected from the stacked length-L*R vector."""
        return np.array(
            [m * self.L + i - 1 for m, blk in enumerate(self.blocks) for i in blk],
            dtype=np.intp,
        )

    def matrix(self) -> np.ndarray:
        mat = np.zeros((self.rows, self.L * len(self.blocks)))
        mat[np.arange(self.rows), self.indices] = 1.0
        return mat

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[..., self.indices]


def build_projection(plan: PilotPlan) -> Projection:
    return Projection(plan.L, plan.sets)


def build_P1(plan: PilotPlan) -> Projection:
    """Variant with the last antenna restricted to I_{R-1}; needs R >= 2."""
    if plan.R < 2:
        raise ValueError("R >= 2 required")
    return Projection(plan.L, plan.sets[: plan.R - 1] + (plan.sets[plan.R - 2],))


def prelog_bound(cfg: ChannelConfig) -> tuple[Fraction, Fraction]:
    """(SIMO lower bound, SISO value) as exact rationals."""
    cfg.require_valid()
    L, Q, R = cfg.L, cfg.Q, cfg.R
    siso = 1 - Fraction(Q, L)
    if R == 1:
        return siso, siso
    if Q * R - 1 <= (R - 1) * L:
        simo = 1 - Fraction(1, L)
    else:
        simo = R * (1 - Fraction(Q, L))
    return simo, siso

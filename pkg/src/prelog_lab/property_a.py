"""Subset rank condition: every Q rows of the restricted whitening factor
must be linearly independent, plus a search for an index set on which the
condition holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .channel import ChannelConfig, CorrelationMatrix
from .pilots import required_K_cardinality


@dataclass(frozen=True)
class PropertyAReport:
    holds: bool
    K: tuple[int, ...]
    violating_subset: tuple[int, ...] | None
    min_singular_ratio: float

    def __post_init__(self) -> None:
        assert self.holds == (self.violating_subset is None)


def verify_property_A(
    qmat: CorrelationMatrix,
    K,
    tol: float = 1e-10,
) -> PropertyAReport:
    """Exhaustively test all C(|K|, Q) row subsets of the restricted matrix.

    A subset violates when its smallest singular value falls at or below
    tol times the largest singular value of the whole restricted matrix
    (scale-invariant, robust against determinant underflow).
    """
    K = tuple(sorted(K))
    Q = qmat.Q
    if len(K) < Q:
        raise ValueError("|K| >= Q required")
    if any(not 1 <= i <= qmat.L for i in K):
        raise ValueError("K must be a subset of [1:L]")
    scale = np.linalg.svd(qmat.entries[[i - 1 for i in K]], compute_uv=False)[0]
    min_ratio = np.inf
    worst = None
    for rows in combinations(K, Q):
        sub = qmat.entries[[i - 1 for i in rows]]
        smin = np.linalg.svd(sub, compute_uv=False)[-1]
        ratio = smin / scale
        if ratio < min_ratio:
            min_ratio = ratio
            worst = rows
    holds = bool(min_ratio > tol)
    return PropertyAReport(
        holds=holds,
        K=K,
        violating_subset=None if holds else worst,
        min_singular_ratio=float(min_ratio),
    )


EXHAUSTIVE_L_CAP = 12


def find_K(
    qmat: CorrelationMatrix,
    cfg: ChannelConfig,
    tol: float = 1e-10,
) -> tuple[int, ...] | None:
    """Search for an index set of the required cardinality passing the check.

    Tries the prefix [1:|K|] first (the canonical reordering), then an
    exhaustive lexicographic subset search for L <= 12, else greedy with
    backtracking.  Returns None only after exhausting the strategy.
    """
    cfg.require_valid()
    if cfg.R < 2:
        raise ValueError("R >= 2 required")
    size = required_K_cardinality(cfg)
    prefix = tuple(range(1, size + 1))
    if verify_property_A(qmat, prefix, tol).holds:
        return prefix
    if cfg.L <= EXHAUSTIVE_L_CAP:
        for cand in combinations(range(1, cfg.L + 1), size):
            if cand == prefix:
                continue
            if verify_property_A(qmat, cand, tol).holds:
                return cand
        return None
    return _greedy_backtrack(qmat, cfg.L, cfg.Q, size, tol)


def _independent_extension(qmat, chosen, cand, tol) -> bool:
    """Every Q-subset of chosen+{cand} that includes cand stays independent."""
    pool = chosen + (cand,)
    if len(pool) < qmat.Q:
        return True
    scale = np.linalg.svd(qmat.entries[[i - 1 for i in pool]], compute_uv=False)[0]
    for rows in combinations(chosen, qmat.Q - 1):
        sub = qmat.entries[[i - 1 for i in rows + (cand,)]]
        if np.linalg.svd(sub, compute_uv=False)[-1] <= tol * scale:
            return False
    return True


def _greedy_backtrack(qmat, L, Q, size, tol) -> tuple[int, ...] | None:
    def extend(chosen: tuple[int, ...], start: int):
        if len(chosen) == size:
            return chosen if verify_property_A(qmat, chosen, tol).holds else None
        for cand in range(start, L + 1):
            if L - cand + 1 < size - len(chosen):
                break
            if _independent_extension(qmat, chosen, cand, tol):
                found = extend(chosen + (cand,), cand + 1)
                if found is not None:
                    return found
        return None

    return extend((), 1)

"""Correlated block-fading SIMO channel: dimensions, whitening factor, sampling.

The channel acts on length-L blocks.  The fading seen by receive antenna m is
h_m = Q s_m with s_m ~ CN(0, I_Q), and the stacked noiseless output is
ybar = (I_R (x) X Q) s with X = diag(x).  All indices in external formats are
1-based.
"""

from __future__ import annotations

import json
from dataclasses import InitVar, dataclass

import numpy as np

from .rng import complex_normal


@dataclass(frozen=True)
class ChannelConfig:
    """Block length L, correlation rank Q, number of receive antennas R."""

    L: int
    Q: int
    R: int

    def violations(self) -> list[str]:
        out = []
        if min(self.L, self.Q, self.R) < 1:
            out.append("L, Q, R must be positive")
        if self.Q >= self.L:
            out.append("Q<L required")
        if self.R > self.Q:
            out.append("R<=Q required")
        return out

    @property
    def is_valid(self) -> bool:
        return not self.violations()

    def require_valid(self) -> None:
        bad = self.violations()
        if bad:
            raise ValueError(
                f"invalid config (L={self.L}, Q={self.Q}, R={self.R}): " + "; ".join(bad)
            )


def validate_config(cfg: ChannelConfig) -> list[str]:
    """Diagnostic check; empty list means the config is admissible."""
    return cfg.violations()


@dataclass(frozen=True)
class CorrelationMatrix:
    """L x Q whitening factor with nonzero rows and full column rank."""

    entries: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        m = np.array(self.entries, dtype=np.complex128, copy=True)
        if m.ndim != 2:
            raise ValueError("entries must be a 2-D array")
        if validate:
            if m.shape[1] >= m.shape[0]:
                raise ValueError("Q < L required for the whitening factor")
            if np.any(np.linalg.norm(m, axis=1) == 0.0):
                raise ValueError("every row of the whitening factor must be nonzero")
            sv = np.linalg.svd(m, compute_uv=False)
            if sv[-1] <= 1e-12 * sv[0]:
                raise ValueError("columns of the whitening factor must be independent")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    @property
    def Q(self) -> int:
        return self.entries.shape[1]

    def row(self, i: int) -> np.ndarray:
        """Row q_i^T, 1-based."""
        return self.entries[i - 1]

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "Q": self.Q,
            "entries": [[[z.real, z.imag] for z in row] for row in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "CorrelationMatrix":
        m = np.array(
            [[complex(re, im) for re, im in row] for row in d["entries"]],
            dtype=np.complex128,
        )
        if m.shape != (d["L"], d["Q"]):
            raise ValueError("entries shape does not match declared (L, Q)")
        return cls(m, validate=validate)


def save_correlation(path, qmat: CorrelationMatrix) -> None:
    with open(path, "w") as fh:
        json.dump(qmat.to_dict(), fh)


def load_correlation(path, validate: bool = True) -> CorrelationMatrix:
    with open(path) as fh:
        return CorrelationMatrix.from_dict(json.load(fh), validate=validate)


def dft_correlation(L: int, Q: int) -> CorrelationMatrix:
    """First Q columns of the L-point DFT matrix, scaled by 1/sqrt(L).

    Any Q distinct rows form a nonsingular Vandermonde-type matrix, so the
    result satisfies the subset rank condition for every index set.
    """
    if Q >= L:
        raise ValueError("Q < L required")
    grid = np.outer(np.arange(L), np.arange(Q))
    return CorrelationMatrix(np.exp(2j * np.pi * grid / L) / np.sqrt(L))


@dataclass(frozen=True)
class FadingDraw:
    """Stacked whitened fading (s_1, ..., s_R), each of length Q."""

    s: np.ndarray
    Q: int

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=np.complex128)
        if s.ndim != 1 or s.size % self.Q != 0:
            raise ValueError("fading vector length must be a multiple of Q")
        object.__setattr__(self, "s", s)

    @property
    def R(self) -> int:
        return self.s.size // self.Q

    def antenna(self, m: int) -> np.ndarray:
        """Per-antenna component s_m, 1-based."""
        return self.s[(m - 1) * self.Q : m * self.Q]


@dataclass(frozen=True)
class InputDraw:
    """Transmit vector x of length L."""

    x: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.complex128)
        if x.ndim != 1:
            raise ValueError("input must be a vector")
        object.__setattr__(self, "x", x)

    @property
    def all_nonzero(self) -> bool:
        return bool(np.all(self.x != 0))


@dataclass(frozen=True)
class SnrPoint:
    """Linear SNR rho > 0."""

    rho: float

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError("rho must be positive")


def sample_fading(cfg: ChannelConfig, rng: np.random.Generator) -> FadingDraw:
    """i.i.d. CN(0,1) whitened fading of length Q*R."""
    cfg.require_valid()
    return FadingDraw(complex_normal(rng, cfg.Q * cfg.R), cfg.Q)


def sample_input(cfg: ChannelConfig, rng: np.random.Generator) -> InputDraw:
    """i.i.d. CN(0,1) inputs; E[log|x_i|] is finite for this law."""
    cfg.require_valid()
    return InputDraw(complex_normal(rng, cfg.L))


def _vec(v) -> np.ndarray:
    return np.asarray(getattr(v, "x", getattr(v, "s", v)), dtype=np.complex128)


def build_ybar(
    cfg: ChannelConfig,
    qmat: CorrelationMatrix,
    x,
    s,
) -> np.ndarray:
    """Noiseless stacked output ybar = (I_R (x) X Q) s."""
    xv, sv = _vec(x), _vec(s)
    if qmat.L != cfg.L or qmat.Q != cfg.Q:
        raise ValueError("whitening factor dimensions do not match the config")
    if xv.size != cfg.L or sv.size != cfg.Q * cfg.R:
        raise ValueError("input/fading vector length mismatch")
    blocks = [xv * (qmat.entries @ sv[m * cfg.Q : (m + 1) * cfg.Q]) for m in range(cfg.R)]
    return np.concatenate(blocks)


def apply_channel(ybar: np.ndarray, rho, rng: np.random.Generator) -> np.ndarray:
    """Noisy output y = sqrt(rho)*ybar + n with n ~ CN(0, I)."""
    rho = rho.rho if isinstance(rho, SnrPoint) else float(rho)
    ybar = np.asarray(ybar, dtype=np.complex128)
    return np.sqrt(rho) * ybar + complex_normal(rng, ybar.size)

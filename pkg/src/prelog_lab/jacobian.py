"""Jacobian of the map (s, x_D) -> P*ybar and its structure.

The Jacobian factors as J = J1 * J2 * J3 with J1, J3 diagonal in the input
symbols and J2 depending on the fading only.  Peeling the single-nonzero
columns out of J2 leaves the square core J4, whose determinant is a
homogeneous polynomial of degree |I_{R-1}| - alpha in the fading entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CorrelationMatrix
from .pilots import PilotPlan, Projection, build_P1, build_projection


def _vec(v) -> np.ndarray:
    return np.asarray(getattr(v, "x", getattr(v, "s", v)), dtype=np.complex128)


def a_vector(qmat: CorrelationMatrix, s, i: int) -> np.ndarray:
    """Stacked derivative of ybar with respect to x_i.

    Nonzero only at position i of each antenna block, where it equals
    q_i^T s_m.
    """
    sv = _vec(s)
    L, Q = qmat.L, qmat.Q
    if not 1 <= i <= L:
        raise ValueError("index out of range")
    R = sv.size // Q
    out = np.zeros(L * R, dtype=np.complex128)
    for m in range(R):
        out[m * L + i - 1] = qmat.row(i) @ sv[m * Q : (m + 1) * Q]
    return out


def _check_nonzero_symbols(plan: PilotPlan, xv: np.ndarray) -> None:
    if np.any(xv == 0):
        raise ValueError("pilot and data symbols must all be nonzero")


def build_J2(plan: PilotPlan, qmat: CorrelationMatrix, s) -> np.ndarray:
    sv = _vec(s)
    P = build_projection(plan)
    cols = np.column_stack(
        [np.kron(np.eye(plan.R), qmat.entries)]
        + [a_vector(qmat, sv, i)[:, None] for i in plan.data_set]
    )
    return P.apply(cols.T).T


def build_factors(plan: PilotPlan, qmat: CorrelationMatrix, x, s):
    """Factors (J1, J2, J3); requires every input symbol nonzero."""
    xv, sv = _vec(x), _vec(s)
    _check_nonzero_symbols(plan, xv)
    P = build_projection(plan)
    x_stacked = np.tile(xv, plan.R)
    J1 = np.diag(x_stacked[P.indices])
    J2 = build_J2(plan, qmat, sv)
    x_data = xv[[j - 1 for j in plan.data_set]]
    J3 = np.diag(
        np.concatenate([np.ones(plan.Q * plan.R, dtype=np.complex128), 1.0 / x_data])
    )
    return J1, J2, J3


@dataclass(frozen=True)
class JacobianBundle:
    J: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    J4: np.ndarray | None
    degree: int | None
    column_order: str = "fading block first, then data block"

    @property
    def product(self) -> np.ndarray:
        return self.J1 @ self.J2 @ self.J3


def build_J(plan: PilotPlan, qmat: CorrelationMatrix, x, s) -> JacobianBundle:
    """Direct Jacobian assembly plus its factored form.

    The direct form is [d(P ybar)/ds | d(P ybar)/dx_D]; the factored form is
    the product J1*J2*J3, and the two agree entrywise.
    """
    xv, sv = _vec(x), _vec(s)
    J1, J2, J3 = build_factors(plan, qmat, xv, sv)
    P = build_projection(plan)
    XQ = xv[:, None] * qmat.entries
    direct = np.column_stack(
        [np.kron(np.eye(plan.R), XQ)]
        + [a_vector(qmat, sv, i)[:, None] for i in plan.data_set]
    )
    J = P.apply(direct.T).T
    if plan.R >= 2:
        J4 = extract_J4(plan, qmat, sv)
        degree = homogeneity_degree(plan)
    else:
        J4, degree = None, None
    return JacobianBundle(J=J, J1=J1, J2=J2, J3=J3, J4=J4, degree=degree)


def extract_J4(plan: PilotPlan, qmat: CorrelationMatrix, s) -> np.ndarray:
    """Square core of J2 after restricting the last antenna to I_{R-1}."""
    if plan.R < 2:
        raise ValueError("R >= 2 required")
    sv = _vec(s)
    P1 = build_P1(plan)
    hi = len(plan.sets[plan.R - 2])
    cols = np.column_stack(
        [np.kron(np.eye(plan.R), qmat.entries)]
        + [a_vector(qmat, sv, i)[:, None] for i in range(plan.alpha + 1, hi + 1)]
    )
    return P1.apply(cols.T).T


def homogeneity_degree(plan: PilotPlan) -> int:
    """Degree of det(J4) as a polynomial in the fading entries."""
    if plan.R < 2:
        raise ValueError("R >= 2 required")
    return len(plan.sets[plan.R - 2]) - plan.alpha


def homogeneity_check(
    plan: PilotPlan,
    qmat: CorrelationMatrix,
    s,
    lam: complex,
    rtol: float = 1e-9,
) -> bool:
    """det(J4(lam*s)) must equal lam**degree * det(J4(s))."""
    sv = _vec(s)
    d = homogeneity_degree(plan)
    lhs = np.linalg.det(extract_J4(plan, qmat, lam * sv))
    rhs = lam**d * np.linalg.det(extract_J4(plan, qmat, sv))
    return bool(abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs)))


def laplace_split_check(
    plan: PilotPlan,
    qmat: CorrelationMatrix,
    s,
    rtol: float = 1e-9,
) -> tuple[float, float, bool]:
    """|det J2| against |det J4| times the peeled single-nonzero entries."""
    if plan.R < 2:
        raise ValueError("R >= 2 required")
    sv = _vec(s)
    lhs = abs(np.linalg.det(build_J2(plan, qmat, sv)))
    s_last = sv[(plan.R - 1) * plan.Q :]
    peeled = set(plan.sets[plan.R - 1]) - set(plan.sets[plan.R - 2])
    prod = 1.0
    for i in sorted(peeled):
        prod *= abs(qmat.row(i) @ s_last)
    rhs = abs(np.linalg.det(extract_J4(plan, qmat, sv))) * prod
    ok = abs(lhs - rhs) <= rtol * max(lhs, rhs, 1e-300)
    return lhs, rhs, ok


def _selection_structure(plan: PilotPlan, proj: Projection, col_hi: int):
    """Index bookkeeping for batched assembly of P'*[(I_R (x) Q) | a-columns].

    Returns the constant fading-independent column block and, for each
    a-column, the (row, position, antenna) triples that receive q_i^T s_m.
    """
    rows, pos, ant, col = [], [], [], []
    row_labels = [(m, i) for m, blk in enumerate(proj.blocks) for i in blk]
    lookup = {lab: r for r, lab in enumerate(row_labels)}
    for c, i in enumerate(range(plan.alpha + 1, col_hi + 1)):
        for m in range(plan.R):
            r = lookup.get((m, i))
            if r is not None:
                rows.append(r)
                pos.append(i - 1)
                ant.append(m)
                col.append(plan.Q * plan.R + c)
    return (
        np.array(rows, dtype=np.intp),
        np.array(pos, dtype=np.intp),
        np.array(ant, dtype=np.intp),
        np.array(col, dtype=np.intp),
    )


def _logabsdet_selected_batch(
    plan: PilotPlan,
    qmat: CorrelationMatrix,
    proj: Projection,
    col_hi: int,
    s_batch: np.ndarray,
) -> np.ndarray:
    """log2|det| of P'*[(I_R (x) Q) | a_{alpha+1} ... a_{col_hi}] per draw.

    -inf marks an exactly singular draw.
    """
    n = s_batch.shape[0]
    dim = plan.Q * plan.R + col_hi - plan.alpha
    const = proj.apply(np.kron(np.eye(plan.R), qmat.entries).T).T
    mats = np.zeros((n, dim, dim), dtype=np.complex128)
    mats[:, :, : plan.Q * plan.R] = const
    rows, pos, ant, col = _selection_structure(plan, proj, col_hi)
    inner = np.einsum("lq,nmq->nlm", qmat.entries, s_batch.reshape(n, plan.R, plan.Q))
    mats[:, rows, col] = inner[:, pos, ant]
    sign, logdet = np.linalg.slogdet(mats)
    out = logdet / np.log(2.0)
    out[sign == 0] = -np.inf
    return out


def logabsdet_J4_batch(
    plan: PilotPlan, qmat: CorrelationMatrix, s_batch: np.ndarray
) -> np.ndarray:
    """Vectorized log2|det J4| over a batch of stacked fading draws."""
    if plan.R < 2:
        raise ValueError("R >= 2 required")
    return _logabsdet_selected_batch(
        plan, qmat, build_P1(plan), len(plan.sets[plan.R - 2]), s_batch
    )


def logabsdet_J2_batch(
    plan: PilotPlan, qmat: CorrelationMatrix, s_batch: np.ndarray
) -> np.ndarray:
    """Vectorized log2|det J2| over a batch of stacked fading draws."""
    return _logabsdet_selected_batch(plan, qmat, build_projection(plan), plan.L, s_batch)


@dataclass(frozen=True)
class NonzeroVerdict:
    nonzero: bool
    trials: int
    max_ratio: float
    caveat: str | None = None


def is_detJ4_nonzero(
    plan: PilotPlan,
    qmat: CorrelationMatrix,
    rng: np.random.Generator,
    trials: int = 8,
    rel_threshold: float = 1e-10,
) -> NonzeroVerdict:
    """Randomized polynomial-identity test on det(J4).

    A polynomial that is not identically zero is nonzero at a Gaussian draw
    with probability one, so any clearly nonzero determinant settles the
    question; a zero verdict remains probabilistic and carries a caveat.
    """
    from .rng import complex_normal

    if plan.R < 2:
        raise ValueError("R >= 2 required")
    max_ratio = 0.0
    for _ in range(trials):
        s = complex_normal(rng, plan.Q * plan.R)
        J4 = extract_J4(plan, qmat, s)
        scale = max(np.abs(J4).max(), 1e-300)
        ratio = abs(np.linalg.det(J4)) / scale ** J4.shape[0]
        max_ratio = max(max_ratio, ratio)
    nonzero = bool(max_ratio > rel_threshold)
    caveat = None if nonzero else "randomized test: a zero verdict is probabilistic"
    return NonzeroVerdict(nonzero=nonzero, trials=trials, max_ratio=float(max_ratio), caveat=caveat)

"""Boundary traces of holomorphic functions and their transfer between surfaces.

The trace space of a surface is characterized through its DN map: with
J = d_gamma^{-1} and P the orthogonal projector onto Ker[I + (Lambda J)^2]*
direct-summed with the constants, traces are exactly the functions

    eta = P f + i [ J Lambda P f + c ],     f real smooth, c real.

On the truncated basis everything is a dense matrix, so P comes out of an
SVD and the defect dimension (2 x genus for genuine DN maps) is read off the
singular values.  The transfer map beta_hat rewrites a trace of one surface
as a trace of another, using the target's projector and DN map; for equal DN
maps it is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import (
    BoundaryFn,
    BoundaryOperator,
    integrate_J,
    j_operator,
)
from .dnmap import DnMap
from .errors import AmbiguousRank


@dataclass(frozen=True)
class TraceProjector:
    """Orthogonal projector onto the trace-defining subspace.

    ``codim`` is the dimension of (I - P) L2 on the truncated space; it
    equals twice the genus when the input operator is an actual DN map.
    """

    P: BoundaryOperator
    codim: int

    @property
    def grid(self):
        return self.P.grid


@dataclass(frozen=True)
class HoloTrace:
    """Boundary trace of a holomorphic function, tied to its source DN map."""

    eta: BoundaryFn
    source_dn: DnMap


def projector_P(lam: DnMap, rank_tol=1e-6) -> TraceProjector:
    """Projector onto Ker[I + (Lambda J)^2]* (+) constants.

    The kernel is detected from the SVD of K = I + (Lambda J)^2 restricted to
    the mean-zero truncated subspace: left singular vectors with
    sigma < rank_tol * sigma_ref span Ker K*.  sigma_ref is
    max(sigma_max, 1): the identity summand gives K a natural unit scale, and
    for genus-0 inputs the whole matrix is roundoff, which would otherwise
    make the threshold meaningless.

    Raises :class:`AmbiguousRank` when singular values cluster at the
    threshold (gap ratio below 10).
    """
    grid = lam.grid
    lj = lam.op @ j_operator(grid)
    kmat = (BoundaryOperator.identity(grid) + lj @ lj).matrix[1:, 1:]
    u, s, _ = np.linalg.svd(kmat)
    sref = max(float(s[0]) if s.size else 0.0, 1.0)
    thr = rank_tol * sref
    below = s < thr
    if below.any() and (~below).any():
        gap = float(s[~below].min()) / max(float(s[below].max()), 1e-300)
        if gap < 10.0:
            raise AmbiguousRank(
                f"singular values cluster at the rank threshold (gap ratio {gap:.2f})"
            )
    null_basis = u[:, below]
    pmat = np.zeros((grid.dim, grid.dim))
    pmat[0, 0] = 1.0
    pmat[1:, 1:] = null_basis @ null_basis.T
    codim = grid.dim - 1 - null_basis.shape[1]
    return TraceProjector(BoundaryOperator(grid, pmat), codim)


def trace_lift(f: BoundaryFn, c: float, lam: DnMap, P: TraceProjector) -> HoloTrace:
    """eta = P f + i [ J Lambda P f + c ]: the trace with real part P f."""
    pf = P.P.apply(f.real() if not f.is_real else f)
    jlpf = integrate_J(lam.apply(pf))
    eta = BoundaryFn.from_values(f.grid, pf.values + 1j * (jlpf.values + c))
    return HoloTrace(eta, lam)


def verify_trace(eta: BoundaryFn, lam: DnMap, tol=1e-8, P: TraceProjector | None = None) -> bool:
    """Membership test for the trace space of ``lam``.

    True iff  || Im eta - J Lambda P Re eta - mean(Im eta) ||_L2
    <= tol * ||eta||_H1  and  ||(I - P) Re eta||_L2 <= tol * ||eta||_L2.
    """
    if P is None:
        P = projector_P(lam)
    re = eta.real()
    im = eta.imag()
    pre = P.P.apply(re)
    hil = integrate_J(lam.apply(pre))
    resid = im - hil - float(im.mean().real)
    ok1 = resid.norm_l2() <= tol * eta.norm_h1()
    ok2 = (re - pre).norm_l2() <= tol * eta.norm_l2()
    return bool(ok1 and ok2)


def beta_hat(
    eta: HoloTrace,
    lambda_prime: DnMap,
    P_prime: TraceProjector,
    imag_constant="mean",
) -> HoloTrace:
    """Transfer a trace to the surface of ``lambda_prime``:

        eta' = P' Re eta + i [ J Lambda' P' Re eta + <Im eta> ].

    ``imag_constant`` picks the reading of <.>: the default "mean" makes the
    map the identity when lambda_prime equals the source DN map; "integral"
    is the unnormalized alternative.
    """
    re = eta.eta.real()
    im = eta.eta.imag()
    if imag_constant == "mean":
        c = float(im.mean().real)
    elif imag_constant == "integral":
        c = float(im.integral().real)
    else:
        raise ValueError("imag_constant must be 'mean' or 'integral'")
    return trace_lift(re, c, lambda_prime, P_prime)

"""Boundary-integral evaluation of holomorphic embeddings.

Everything a point evaluation needs lives on the boundary: the traces
eta_k of the embedding components and their tangential derivatives.  The
generalized argument principle

    (1/2 pi i) \\oint eta~ d eta / (eta - z) = sum over zeros of (w - z)

supplies winding counts and, through the higher-order Cauchy kernels, the
derivatives of transition maps w_k o w_i^{-1}.  Near the contour the plain
trapezoid rule degrades, so a rectified boundary chart plus a subtracted
boundary Taylor polynomial takes over; the two evaluators agree in the
overlap zone, which the tests check.

All evaluators are vectorized over arrays of query points and are pure
functions of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .boundary import BoundaryFn, BoundaryGrid, d_gamma
from .dnmap import DnMap, SurfaceSpec, boundary_curve
from .errors import (
    ChartExceeded,
    ChartTooLarge,
    GridMismatch,
    InducedTraceInvalid,
    NonIntegerWinding,
    NotProjective,
    TooCloseToContour,
)
from .traces import HoloTrace, TraceProjector, beta_hat, projector_P, verify_trace

SEPARATION_FACTOR = 5.0  # image-distance floor in units of L / n_samples
DELTA_FACTOR = 10.0      # arc-excision default in units of the floor
WINDING_RESIDUAL_MAX = 0.1


def separation_floor(grid: BoundaryGrid) -> float:
    """Image distance below which the trapezoid Cauchy kernel degrades."""
    return SEPARATION_FACTOR * grid.total_length / grid.n_samples


def circle_dist(a, b, L):
    d = np.abs(np.asarray(a) - np.asarray(b)) % L
    return np.minimum(d, L - d)


def smoothstep(u):
    """Quintic smoothstep: 0 for u <= 0, 1 for u >= 1, C^2 join."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 + u * (-15.0 + 6.0 * u))


@dataclass(frozen=True)
class Embedding:
    """Holomorphic embedding presented by the boundary traces of its components."""

    traces: tuple
    source_dn: DnMap

    @classmethod
    def build(cls, etas, dn: DnMap, verify=True, tol=1e-8, projector=None):
        etas = tuple(etas)
        for eta in etas:
            if eta.grid != dn.grid:
                raise GridMismatch("trace grid differs from DN-map grid")
        if verify:
            proj = projector if projector is not None else projector_P(dn)
            for k, eta in enumerate(etas):
                if not verify_trace(eta, dn, tol=tol, P=proj):
                    raise InducedTraceInvalid(f"component {k} fails trace verification")
        return cls(tuple(HoloTrace(eta, dn) for eta in etas), dn)

    @property
    def n(self):
        return len(self.traces)

    @property
    def grid(self):
        return self.source_dn.grid

    def eta(self, i) -> BoundaryFn:
        return self.traces[i].eta

    @cached_property
    def eta_values(self):
        """(n, N) array of trace samples."""
        return np.stack([t.eta.values for t in self.traces])

    @cached_property
    def deta_values(self):
        """(n, N) array of tangential derivatives of the traces."""
        return np.stack([d_gamma(t.eta).values for t in self.traces])

    def boundary_points(self):
        """(N, n) array: the embedded boundary curve in C^n."""
        return self.eta_values.T.copy()


def embedding_from_surface(s: SurfaceSpec, dn: DnMap, polys=None, arclength_offset=0.0,
                           verify=True, projector=None) -> Embedding:
    """Embedding of the image domain F(D) with traces p_k(boundary curve).

    Default components are p(x) = x and p(x) = (x - 1.2)^2; the second is
    injective on any domain inside the unit-ish disc (two preimages would
    need to sum to 2.4), so both coordinate projections give usable charts.
    """
    curve = boundary_curve(s, arclength_offset)
    if polys is None:
        polys = (lambda x: x, lambda x: (x - 1.2) ** 2)
    etas = [BoundaryFn.from_values(s.grid, p(curve.values)) for p in polys]
    return Embedding.build(etas, dn, verify=verify, projector=projector)


# --------------------------------------------------------------------------
# argument principle
# --------------------------------------------------------------------------

def _contour_sum(numer, eta_vals, z, power, grid):
    """(1/2 pi i) * trapezoid of numer / (eta - z)^power over the contour.

    numer: (..., N) already includes d eta/dl; z: (...,) broadcastable.
    """
    w = grid.total_length / grid.n_samples
    denom = (eta_vals[None, :] - np.asarray(z, dtype=complex)[:, None]) ** power
    return (numer / denom).sum(axis=-1) * w / (2j * np.pi)


def _check_separation(eta_vals, z, grid):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    dist = np.min(np.abs(eta_vals[None, :] - z[:, None]), axis=1)
    floor = separation_floor(grid)
    if np.any(dist <= floor):
        worst = float(np.min(dist))
        raise TooCloseToContour(
            f"evaluation point at image distance {worst:.3e} <= floor {floor:.3e}; "
            "use near_boundary_eval"
        )


def gap_integral(eta_tilde: BoundaryFn, eta: BoundaryFn, z, check=True):
    """Generalized argument principle integral
    (1/2 pi i) \\oint eta~ d eta / (eta - z); equals the order-weighted sum of
    eta~ over the zeros of w - z, up to quadrature error."""
    if eta_tilde.grid != eta.grid:
        raise GridMismatch("trace grids differ")
    grid = eta.grid
    if check:
        _check_separation(eta.values, z, grid)
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    numer = eta_tilde.values * d_gamma(eta).values
    out = _contour_sum(numer[None, :], eta.values, zz, 1, grid)
    return out[0] if np.isscalar(z) or np.asarray(z).ndim == 0 else out


def multiplicity(eta: BoundaryFn, z, check=True):
    """Total multiplicity of zeros of w - z: the winding of the trace about z.

    The pre-rounding residual must stay below 0.1, otherwise the data is
    under-resolved or the point is effectively on the contour.
    """
    grid = eta.grid
    if check:
        _check_separation(eta.values, z, grid)
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    w = _contour_sum(d_gamma(eta).values[None, :], eta.values, zz, 1, grid)
    counts = np.round(w.real).astype(int)
    resid = np.abs(w - counts)
    if np.any(resid >= WINDING_RESIDUAL_MAX):
        raise NonIntegerWinding(
            f"winding residual {float(np.max(resid)):.3f} >= {WINDING_RESIDUAL_MAX}"
        )
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return int(counts[0])
    return counts


def cauchy_eval(E: Embedding, i, z, m=0, check=True):
    """Derivatives of the transition maps through the order-(m+1) Cauchy kernel:

        (d^m [w_k o w_i^{-1}])(z) = (m!/2 pi i) \\oint eta_k d eta_i / (eta_i - z)^{m+1}

    for k = 1..n; m = 0 reconstructs the embedded surface point.  Requires z
    inside a projective cylinder of component i (unique simple zero).
    """
    grid = E.grid
    scalar = np.isscalar(z) or np.asarray(z).ndim == 0
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    if check:
        _check_separation(E.eta_values[i], zz, grid)
        counts = np.atleast_1d(multiplicity(E.eta(i), zz, check=False))
        if np.any(counts != 1):
            raise NotProjective(
                f"multiplicity {counts.tolist()} != 1 at queried point"
            )
    import math

    numer = E.eta_values * E.deta_values[i][None, :]  # (n, N)
    w = grid.total_length / grid.n_samples
    denom = (E.eta_values[i][None, :] - zz[:, None]) ** (m + 1)  # (P, N)
    out = (numer[None, :, :] / denom[:, None, :]).sum(axis=-1) * w / (2j * np.pi)
    out *= math.factorial(m)
    return out[0] if scalar else out


# --------------------------------------------------------------------------
# rectified boundary charts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RectifiedChart:
    """Coordinates around a boundary base point that flatten the trace curve.

    With z0 = eta_i(l0) and D = d_gamma eta_i (l0):

        x1 = Re[(z - z0)/D],   x2 = Im[(z - eta_i(lt^{-1}(x1)))/D],

    where lt(l) = Re[(eta_i(l) - z0)/D] is the rectified boundary abscissa.
    The trace curve becomes a segment of x2 = 0 and interior points get
    x2 > 0 (consistent boundary orientation).  The inverse is closed form:
    z = eta_i(lt^{-1}(x1)) + i D x2.
    """

    embedding: Embedding
    index: int
    l0: float
    a: float
    b: float
    z0: complex
    D: complex
    l_lo: float = field(repr=False)
    l_hi: float = field(repr=False)
    _table_l: np.ndarray = field(repr=False)
    _table_x1: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.embedding.grid

    # ------------------------------------------------------------ abscissa
    def x1_of_l(self, l):
        vals = self.embedding.eta(self.index).eval_at(np.asarray(l, dtype=float))
        return ((vals - self.z0) / self.D).real

    def l_of_x1(self, x1, tol=1e-13, max_iter=40):
        x1 = np.asarray(x1, dtype=float)
        if np.any(x1 < -self.a - 1e-12) or np.any(x1 > self.a + 1e-12):
            raise ChartExceeded("x1 outside the chart window")
        l = np.interp(x1, self._table_x1, self._table_l)
        eta = self.embedding.eta(self.index)
        deta = d_gamma(eta)
        for _ in range(max_iter):
            f = ((eta.eval_at(l) - self.z0) / self.D).real - x1
            fp = (deta.eval_at(l) / self.D).real
            step = f / fp
            l = l - step
            if np.max(np.abs(step)) < tol:
                break
        return l

    # ------------------------------------------------------------ chart maps
    def to_chart(self, z):
        z = np.asarray(z, dtype=complex)
        x1 = ((z - self.z0) / self.D).real
        foot = self.embedding.eta(self.index).eval_at(self.l_of_x1(x1))
        x2 = ((z - foot) / self.D).imag
        return np.stack([x1, x2], axis=-1)

    def from_chart(self, x):
        x = np.asarray(x, dtype=float)
        foot = self.embedding.eta(self.index).eval_at(self.l_of_x1(x[..., 0]))
        return foot + 1j * self.D * x[..., 1]

    def contains(self, x, slack=0.0):
        x = np.asarray(x)
        return (
            (np.abs(x[..., 0]) < self.a + slack)
            & (x[..., 1] > -1e-12 - slack)
            & (x[..., 1] < self.b + slack)
        )


def rectified_coords(E: Embedding, i, l0, a, b) -> RectifiedChart:
    """Build the rectified chart at base point l0 on trace i.

    Raises :class:`ChartTooLarge` when the rectified abscissa fails to be
    monotone over the requested window (-a, a).
    """
    grid = E.grid
    L = grid.total_length
    eta = E.eta(i)
    deta = d_gamma(eta)
    z0 = complex(eta.eval_at(float(l0))[0])
    D = complex(deta.eval_at(float(l0))[0])
    if abs(D) < 1e-12:
        raise ChartTooLarge("d_gamma eta_i vanishes at the base point")

    # march outward from l0 while the abscissa is strictly increasing
    n_dense = 8 * grid.n_samples
    offs = np.linspace(-L / 2, L / 2, n_dense)
    l_dense = l0 + offs
    x1_dense = ((eta.eval_at(l_dense) - z0) / D).real
    slope = (deta.eval_at(l_dense) / D).real
    mid = n_dense // 2
    hi = mid
    while hi + 1 < n_dense and slope[hi + 1] > 0 and x1_dense[hi] < a:
        hi += 1
    lo = mid
    while lo - 1 >= 0 and slope[lo - 1] > 0 and x1_dense[lo] > -a:
        lo -= 1
    if x1_dense[hi] < a or x1_dense[lo] > -a:
        raise ChartTooLarge(
            "rectified abscissa is not monotone over the requested window"
        )
    return RectifiedChart(
        embedding=E,
        index=i,
        l0=float(l0),
        a=float(a),
        b=float(b),
        z0=z0,
        D=D,
        l_lo=float(l_dense[lo]),
        l_hi=float(l_dense[hi]),
        _table_l=l_dense[lo : hi + 1],
        _table_x1=x1_dense[lo : hi + 1],
    )


# --------------------------------------------------------------------------
# near-boundary evaluation
# --------------------------------------------------------------------------

def _transition_derivative_fns(E: Embedding, i, order):
    """Grid samples of d^k (w_j o w_i^{-1}) along the boundary, k = 0..order.

    Holomorphy turns tangential derivatives into complex ones:
    phi_0 = eta_j, phi_{k+1} = (d_gamma phi_k) / (d_gamma eta_i).
    """
    deta_i = E.deta_values[i]
    out = [E.eta_values.copy()]
    current = [E.eta(j) for j in range(E.n)]
    for _ in range(order):
        current = [
            BoundaryFn.from_values(E.grid, d_gamma(f).values / deta_i) for f in current
        ]
        out.append(np.stack([f.values for f in current]))
    return np.stack(out)  # (order+1, n, N)


def near_boundary_eval(E: Embedding, chart: RectifiedChart, x, m=0,
                       taylor_order=None, delta=None):
    """Evaluate d^m (w_j o w_i^{-1}) at z~^{-1}(x), valid arbitrarily close to
    the boundary (including x2 = 0).

    The boundary Taylor polynomial of w_j o w_i^{-1} at the foot point
    (holomorphic: no conjugate terms) is subtracted from the contour
    integrand over an excised arc of arclength radius ``delta`` around the
    foot, and its exact m-th derivative at z is added back.  The excision is
    mollified by a quintic window so results stay smooth in x; the dropped
    remainder is O(delta^{taylor_order + 1 - m}).

    Defaults: taylor_order = m + 2, delta = 10x the separation floor.
    """
    if chart.embedding is not E:
        raise ValueError("chart belongs to a different embedding")
    grid = E.grid
    L = grid.total_length
    if taylor_order is None:
        taylor_order = m + 2
    if taylor_order < m:
        raise ValueError("taylor_order must be >= m")
    if delta is None:
        delta = DELTA_FACTOR * separation_floor(grid)

    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    xs = np.atleast_2d(x)
    if not np.all(chart.contains(xs)):
        raise ChartExceeded("point outside the chart rectangle")

    i = chart.index
    l_foot = chart.l_of_x1(xs[:, 0])                     # (P,)
    zeta0 = E.eta(i).eval_at(l_foot)                     # (P,)
    z = zeta0 + 1j * chart.D * xs[:, 1]                  # (P,)

    # Taylor coefficients c_k = phi_k(l_foot)/k! for every component
    import math

    phis = _transition_derivative_fns(E, i, taylor_order)  # (p+1, n, N)
    coeff = np.empty((taylor_order + 1, E.n, len(l_foot)), dtype=complex)
    for k in range(taylor_order + 1):
        for j in range(E.n):
            coeff[k, j] = BoundaryFn.from_values(grid, phis[k, j]).eval_at(l_foot)
        coeff[k] /= math.factorial(k)

    # windowed, Taylor-subtracted contour sum
    nodes = grid.nodes
    arc = circle_dist(nodes[None, :], l_foot[:, None], L)     # (P, N)
    keep = 1.0 - smoothstep((delta - arc) / (0.5 * delta))    # 0 inside delta/2, 1 beyond delta
    d_eta_i = E.deta_values[i]                                 # (N,)
    dz_node = E.eta_values[i][None, :] - zeta0[:, None]        # zeta - zeta0, (P, N)
    poly_at_nodes = np.zeros((len(l_foot), E.n, grid.n_samples), dtype=complex)
    pw = np.ones_like(dz_node)
    for k in range(taylor_order + 1):
        poly_at_nodes += coeff[k].T[:, :, None] * pw[:, None, :]
        pw = pw * dz_node
    resid = E.eta_values[None, :, :] - poly_at_nodes           # (P, n, N)
    kern = d_eta_i[None, :] / (E.eta_values[i][None, :] - z[:, None]) ** (m + 1)
    w = L / grid.n_samples
    sums = (resid * (keep * kern)[:, None, :]).sum(axis=-1) * w / (2j * np.pi)
    sums *= math.factorial(m)

    # exact m-th derivative of the polynomial at z
    dz = (z - zeta0)[:, None]                                  # (P, 1)
    poly_m = np.zeros((len(l_foot), E.n), dtype=complex)
    pw = np.ones_like(dz)
    for k in range(m, taylor_order + 1):
        fall = math.factorial(k) / math.factorial(k - m)
        poly_m += fall * coeff[k].T * pw
        pw = pw * dz
    out = sums + poly_m
    return out[0] if scalar else out


def induced_embedding(E: Embedding, lambda_prime: DnMap,
                      P_prime: TraceProjector | None = None,
                      verify_tol=1e-8) -> Embedding:
    """Transfer every trace with beta_hat; the result is the induced embedding
    of the perturbed surface.  Each transferred trace is re-verified against
    the target DN map (:class:`InducedTraceInvalid` on failure); projectivity
    near query points is re-checked lazily by the evaluators' multiplicity
    preconditions."""
    if P_prime is None:
        P_prime = projector_P(lambda_prime)
    new = []
    for k, tr in enumerate(E.traces):
        ht = beta_hat(tr, lambda_prime, P_prime)
        if not verify_trace(ht.eta, lambda_prime, tol=verify_tol, P=P_prime):
            raise InducedTraceInvalid(f"transferred trace {k} fails verification")
        new.append(ht.eta)
    return Embedding(tuple(HoloTrace(eta, lambda_prime) for eta in new), lambda_prime)

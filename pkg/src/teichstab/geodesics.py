"""Semi-geodesic coordinates by shooting from the boundary of a chart.

The boundary segment lies on the axis x2 = 0 of a rectified chart; geodesics
of the chart metric h are launched from (mu, 0) with unit inward initial
speed and integrated by a classical fixed-step fourth-order scheme.  The
resulting bundle (r, mu) -> x is stored as a table plus bicubic splines, so
forward evaluation, Jacobians and Newton inversion of the map are all cheap
and consistent between the reference and perturbed surfaces.

Caustics are detected by a sign change of the bundle Jacobian
det[d x/d mu, d x/d r]; leaving the chart rectangle raises ChartExit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import CausticDetected, ChartExit


class Metric2D:
    """Metric tensor field on a plane chart: components and first derivatives."""

    def components(self, x):
        """(P, 2, 2) symmetric matrices at points x of shape (P, 2)."""
        raise NotImplementedError

    def d_components(self, x):
        """(P, 2, 2, 2) array D[p, a, b, c] = d h_ab / d x^c."""
        raise NotImplementedError


class ConstantMetric(Metric2D):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)

    def components(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.matrix, (len(x), 2, 2)).copy()

    def d_components(self, x):
        x = np.atleast_2d(x)
        return np.zeros((len(x), 2, 2, 2))


class ConformalMetric(Metric2D):
    """h = rho(x) * delta with user-supplied rho and its gradient."""

    def __init__(self, rho, grad_rho):
        self.rho = rho
        self.grad_rho = grad_rho

    def components(self, x):
        x = np.atleast_2d(x)
        r = np.asarray(self.rho(x), dtype=float)
        out = np.zeros((len(x), 2, 2))
        out[:, 0, 0] = r
        out[:, 1, 1] = r
        return out

    def d_components(self, x):
        x = np.atleast_2d(x)
        g = np.asarray(self.grad_rho(x), dtype=float)  # (P, 2)
        out = np.zeros((len(x), 2, 2, 2))
        out[:, 0, 0, :] = g
        out[:, 1, 1, :] = g
        return out


class CallableMetric(Metric2D):
    def __init__(self, comp, dcomp):
        self._comp = comp
        self._dcomp = dcomp

    def components(self, x):
        return self._comp(np.atleast_2d(x))

    def d_components(self, x):
        return self._dcomp(np.atleast_2d(x))


class SplineMetric(Metric2D):
    """Metric tabulated on a tensor grid, interpolated by quintic splines.

    Sampling the components once and differentiating the spline keeps every
    downstream consumer (Christoffel symbols, shooting, inversion) smooth and
    fast; interpolation error is far below the geodesic tolerances for the
    analytic metrics used here.
    """

    def __init__(self, x1_grid, x2_grid, h11, h12, h22, degree=5):
        kx = min(degree, len(x1_grid) - 1)
        ky = min(degree, len(x2_grid) - 1)
        self._splines = [
            RectBivariateSpline(x1_grid, x2_grid, comp, kx=kx, ky=ky)
            for comp in (h11, h12, h22)
        ]

    def _ev(self, x, dx=0, dy=0):
        vals = [s.ev(x[:, 0], x[:, 1], dx=dx, dy=dy) for s in self._splines]
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = vals[0]
        out[:, 0, 1] = vals[1]
        out[:, 1, 0] = vals[1]
        out[:, 1, 1] = vals[2]
        return out

    def components(self, x):
        return self._ev(np.atleast_2d(x))

    def d_components(self, x):
        x = np.atleast_2d(x)
        out = np.empty((len(x), 2, 2, 2))
        out[..., 0] = self._ev(x, dx=1)
        out[..., 1] = self._ev(x, dy=1)
        return out


def christoffel(metric: Metric2D, x):
    """Gamma[p, i, j, k] = (1/2) h^{il} (d_j h_lk + d_k h_lj - d_l h_jk)."""
    h = metric.components(x)
    dh = metric.d_components(x)
    hinv = np.linalg.inv(h)
    bracket = dh.transpose(0, 1, 3, 2) + dh - dh.transpose(0, 3, 2, 1)
    # bracket[p, l, j, k] = dh[p,l,k,j] + dh[p,l,j,k] - dh[p,j,k,l]
    return 0.5 * np.einsum("pil,pljk->pijk", hinv, bracket)


def _geodesic_rhs(metric, state):
    x = state[:, :2]
    v = state[:, 2:]
    gam = christoffel(metric, x)
    acc = -np.einsum("pijk,pj,pk->pi", gam, v, v)
    return np.concatenate([v, acc], axis=1)


def inward_unit_normal(metric: Metric2D, mu):
    """Unit normal (w.r.t. h) to the axis x2 = 0, pointing into x2 > 0."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    pts = np.stack([mu, np.zeros_like(mu)], axis=-1)
    h = metric.components(pts)
    n = np.stack([-h[:, 0, 1], h[:, 0, 0]], axis=-1)
    norm = np.sqrt(np.einsum("pi,pij,pj->p", n, h, n))
    return n / norm[:, None]


@dataclass(frozen=True)
class SemiGeodesicChart:
    """Geodesic bundle table over (r, mu) with spline accessors.

    r is the geodesic distance to the boundary along the shot geodesic
    (unit initial speed); the Jacobian of (mu, r) -> x stays nondegenerate
    on the stored strip by construction (shooting aborts otherwise).
    """

    metric: Metric2D
    mu_grid: np.ndarray
    r_grid: np.ndarray
    x_table: np.ndarray          # (Q, P, 2)
    v_table: np.ndarray          # (Q, P, 2)
    _sx1: RectBivariateSpline = field(repr=False)
    _sx2: RectBivariateSpline = field(repr=False)

    @property
    def r_depth(self):
        return float(self.r_grid[-1])

    def point(self, mu, r):
        """x(mu, r), vectorized over equal-shaped arrays."""
        mu = np.asarray(mu, dtype=float)
        r = np.asarray(r, dtype=float)
        x1 = self._sx1.ev(r, mu)
        x2 = self._sx2.ev(r, mu)
        return np.stack([x1, x2], axis=-1)

    def jacobian(self, mu, r):
        """d x / d (mu, r): (..., 2, 2) with columns (d/dmu, d/dr)."""
        mu = np.asarray(mu, dtype=float)
        r = np.asarray(r, dtype=float)
        j = np.empty(np.broadcast(mu, r).shape + (2, 2))
        j[..., 0, 0] = self._sx1.ev(r, mu, dy=1)
        j[..., 1, 0] = self._sx2.ev(r, mu, dy=1)
        j[..., 0, 1] = self._sx1.ev(r, mu, dx=1)
        j[..., 1, 1] = self._sx2.ev(r, mu, dx=1)
        return j

    def invert(self, x_target, rtol=1e-13, max_iter=40, strict=True):
        """Solve x(mu, r) = x_target by Newton on the spline map.

        Seeds from the nearest table node and iterates until the position
        residual reaches ``rtol`` (or the machine floor: residual-based
        stopping keeps the inverse smooth enough for finite-difference
        probing of maps built on top of it).  Raises ChartExit when the
        query lies outside the stored bundle; with ``strict=False`` returns
        (mu, r, ok) instead of raising.
        """
        x_target = np.atleast_2d(np.asarray(x_target, dtype=float))
        flat = self.x_table.reshape(-1, 2)
        d2 = ((flat[None, :, :] - x_target[:, None, :]) ** 2).sum(-1)
        idx = np.argmin(d2, axis=1)
        qi, pi = np.unravel_index(idx, self.x_table.shape[:2])
        mu = self.mu_grid[pi].astype(float).copy()
        r = self.r_grid[qi].astype(float).copy()
        mu_lo, mu_hi = self.mu_grid[0], self.mu_grid[-1]
        prev = np.inf
        stalled = 0
        for _ in range(max_iter):
            res = self.point(mu, r) - x_target
            worst = float(np.max(np.abs(res)))
            if worst < rtol:
                break
            if worst > 0.5 * prev:
                stalled += 1
                if stalled >= 3:
                    break  # machine floor reached
            else:
                stalled = 0
            prev = worst
            jac = self.jacobian(mu, r)
            step = np.linalg.solve(jac, res[..., None])[..., 0]
            mu = mu - step[:, 0]
            r = r - step[:, 1]
            r = np.clip(r, 0.0, self.r_depth)
            mu = np.clip(mu, mu_lo, mu_hi)
        resid = np.abs(self.point(mu, r) - x_target).max(axis=-1)
        if strict:
            if np.any(resid > 1e-9):
                raise ChartExit(
                    f"inversion residual {float(resid.max()):.2e}: point outside the bundle"
                )
            return mu, r
        return mu, r, resid <= 1e-9

    def unit_speed_defect(self):
        """max over the table of | ||dx/dr||_h - 1 |."""
        worst = 0.0
        for q in range(len(self.r_grid)):
            x = self.x_table[q]
            v = self.v_table[q]
            h = self.metric.components(x)
            sp = np.sqrt(np.einsum("pi,pij,pj->p", v, h, v))
            worst = max(worst, float(np.max(np.abs(sp - 1.0))))
        return worst


def shoot_geodesics(metric: Metric2D, mu_grid, r0, step=None, rect=None,
                    jac_floor=0.05) -> SemiGeodesicChart:
    """Integrate the normal geodesic bundle from the boundary segment.

    Parameters
    ----------
    metric : chart metric, C^2 on the rectangle
    mu_grid : boundary abscissas of the bundle (uniformly spaced)
    r0 : strip depth to integrate to
    step : integrator step, default r0/64
    rect : optional (a, b); geodesics leaving (-a, a) x [0, b) raise ChartExit
    jac_floor : fraction of the initial bundle Jacobian treated as a caustic

    Raises :class:`CausticDetected` on Jacobian degeneration and
    :class:`ChartExit` when a geodesic leaves the rectangle.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    if step is None:
        step = r0 / 64.0
    n_steps = max(int(np.ceil(r0 / step)), 4)
    dt = r0 / n_steps
    P = len(mu_grid)
    dmu = mu_grid[1] - mu_grid[0] if P > 1 else 1.0

    x0 = np.stack([mu_grid, np.zeros(P)], axis=-1)
    v0 = inward_unit_normal(metric, mu_grid)
    state = np.concatenate([x0, v0], axis=1)

    xs = np.empty((n_steps + 1, P, 2))
    vs = np.empty((n_steps + 1, P, 2))
    xs[0], vs[0] = x0, v0

    def bundle_jacobian_det(x, v):
        dxdmu = np.gradient(x, dmu, axis=0)
        return dxdmu[:, 0] * v[:, 1] - dxdmu[:, 1] * v[:, 0]

    det0 = bundle_jacobian_det(x0, v0)
    for q in range(1, n_steps + 1):
        k1 = _geodesic_rhs(metric, state)
        k2 = _geodesic_rhs(metric, state + 0.5 * dt * k1)
        k3 = _geodesic_rhs(metric, state + 0.5 * dt * k2)
        k4 = _geodesic_rhs(metric, state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[q] = state[:, :2]
        vs[q] = state[:, 2:]
        if rect is not None:
            a, b = rect
            if np.any(np.abs(xs[q][:, 0]) > a) or np.any(xs[q][:, 1] >= b) \
                    or np.any(xs[q][:, 1] < -1e-12):
                raise ChartExit(f"geodesic left the chart rectangle at r = {q * dt:.4f}")
        det = bundle_jacobian_det(xs[q], vs[q])
        if np.any(det < jac_floor * det0):
            raise CausticDetected(f"bundle Jacobian degenerates at r = {q * dt:.4f}")

    r_grid = np.arange(n_steps + 1) * dt
    kx = min(3, P - 1)
    sx1 = RectBivariateSpline(r_grid, mu_grid, xs[:, :, 0], kx=3, ky=kx)
    sx2 = RectBivariateSpline(r_grid, mu_grid, xs[:, :, 1], kx=3, ky=kx)
    return SemiGeodesicChart(metric, mu_grid, r_grid, xs, vs, sx1, sx2)

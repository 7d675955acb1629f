"""Construction of the near-isometric map between two embedded surfaces.

Given the reference embedding and the induced embedding of a perturbed
surface, the map alpha sends a point xi of the reference surface to

* the point of the perturbed surface with the same semi-geodesic
  coordinates (boundary arclength of the foot point, geodesic distance to
  the boundary) when xi lies in the near-boundary strip, and
* the minimizer of a blended matching functional
  (1 - kappa) |xi' - xi|^2 + kappa ((dist_Gamma(l', l))^2 + (r' - r)^2)
  elsewhere, found by the frozen-Jacobian contraction of the gradient
  system seeded at the identity guess.

The report collects the Beltrami quotient on probe grids (by central finite
differences of the chart representation of alpha), the dilatation supremum
K, the upper bound (1/2) log K for the Teichmueller distance, the sup
displacement, the metric distortion, and the Hausdorff distance between the
embedded surfaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryGrid
from .cauchy import (
    Embedding,
    RectifiedChart,
    cauchy_eval,
    circle_dist,
    multiplicity,
    near_boundary_eval,
    rectified_coords,
    separation_floor,
    smoothstep,
)
from .errors import (
    CausticDetected,
    ChartExit,
    EmptyCloud,
    GlueMismatch,
    InvalidDilatation,
    MinimizationDiverged,
    OrientationViolated,
)
from .fixedpoint import frozen_newton_batch
from .geodesics import SemiGeodesicChart, SplineMetric, shoot_geodesics


# --------------------------------------------------------------------------
# small standalone pieces
# --------------------------------------------------------------------------

def kappa_profile(r, r0):
    """Quintic-smoothstep cutoff: 1 for r < r0/3, 0 for r > 2 r0/3, C^2 join."""
    return 1.0 - smoothstep((np.asarray(r, dtype=float) - r0 / 3.0) / (r0 / 3.0))


def teich_bound(K):
    """Upper bound (1/2) log K for the Teichmueller distance."""
    if K < 1.0:
        raise InvalidDilatation(f"dilatation K = {K} < 1")
    return 0.5 * float(np.log(K))


def _as_real_cloud(A):
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[:, None]
    return np.concatenate([A.real, A.imag], axis=1).astype(float)


def hausdorff_distance(A, B, chunk=512):
    """Hausdorff distance between finite point clouds in C^n (brute force)."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.size == 0 or B.size == 0:
        raise EmptyCloud("hausdorff distance of an empty cloud")
    ra, rb = _as_real_cloud(A), _as_real_cloud(B)

    def directed(u, v):
        worst = 0.0
        for k in range(0, len(u), chunk):
            d2 = ((u[k:k + chunk, None, :] - v[None, :, :]) ** 2).sum(-1)
            worst = max(worst, float(np.sqrt(d2.min(axis=1)).max()))
        return worst

    return max(directed(ra, rb), directed(rb, ra))


def beltrami_dilatation(chart_eval, probes, fd_step=1e-4):
    """Beltrami quotient and dilatation of a chart map by central differences.

    ``chart_eval`` maps an array of chart coordinates z to the image chart
    coordinates of alpha; the Wirtinger derivatives come from the 4-point
    stencil of half-width ``fd_step``.  Raises OrientationViolated when
    |mu| >= 1 anywhere.
    """
    z = np.asarray(probes, dtype=complex).ravel()
    stencil = np.concatenate([z + fd_step, z - fd_step, z + 1j * fd_step, z - 1j * fd_step])
    w = chart_eval(stencil)
    P = len(z)
    dx = (w[:P] - w[P:2 * P]) / (2 * fd_step)
    dy = (w[2 * P:3 * P] - w[3 * P:]) / (2 * fd_step)
    dz = 0.5 * (dx - 1j * dy)
    dzb = 0.5 * (dx + 1j * dy)
    mu = dzb / dz
    if np.any(np.abs(mu) >= 1.0):
        raise OrientationViolated(
            f"|mu| reaches {float(np.max(np.abs(mu))):.3f} >= 1 at a probe"
        )
    k = (1.0 + np.abs(mu)) / (1.0 - np.abs(mu))
    return mu, float(np.max(k)), dz, dzb


def metric_in_chart(E: Embedding, i, points, chart: RectifiedChart | None = None):
    """Conformal factor of the induced metric in the chart coordinate:
    rho = sum_k |d_z (w_k o w_i^{-1})|^2.  Interior points go through the
    Cauchy kernel; pass the rectified ``chart`` (and chart coordinates as
    ``points``) for the near-boundary region."""
    if chart is None:
        d = cauchy_eval(E, i, np.asarray(points, dtype=complex), m=1)
    else:
        d = near_boundary_eval(E, chart, points, m=1)
    return (np.abs(d) ** 2).sum(axis=-1)


# --------------------------------------------------------------------------
# per-surface geometry bundle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Projective cylinder: base disc in the image plane of one component."""

    trace_index: int
    center: complex
    radius: float

    def contains(self, w, margin=0.0):
        return np.abs(np.asarray(w) - self.center) < self.radius - margin


@dataclass
class StripAssembly:
    l0: float
    rect: RectifiedChart
    metric: SplineMetric
    bundle: SemiGeodesicChart | None = None


class SurfaceGeometry:
    """Evaluation machinery of one embedded surface.

    Routes embedding evaluations between the interior Cauchy kernel and the
    near-boundary evaluator, owns the rectified strip charts with their
    pullback metrics and geodesic bundles, and provides global semi-geodesic
    coordinates.
    """

    def __init__(self, E: Embedding, n_strip_charts=8, dense_factor=4):
        self.E = E
        self.grid: BoundaryGrid = E.grid
        L = self.grid.total_length
        self.n_strip_charts = n_strip_charts
        self.chart_bases = np.arange(n_strip_charts) * (L / n_strip_charts)
        nd = dense_factor * self.grid.n_samples
        self.dense_l = np.arange(nd) * (L / nd)
        self.dense_curve = E.eta(0).eval_at(self.dense_l)
        # conformal factor on the boundary, from trace derivatives alone
        dw = E.deta_values[1:] / E.deta_values[0][None, :] if E.n > 1 else None
        rho_b = np.ones(self.grid.n_samples)
        if dw is not None:
            rho_b = rho_b + (np.abs(dw) ** 2).sum(axis=0)
        self.rho_boundary = rho_b
        self.rho_min = float(rho_b.min())
        self.rho_max = float(rho_b.max())
        self.centroid = complex(np.mean(E.eta_values[0]))
        self.inradius = float(np.min(np.abs(E.eta_values[0] - self.centroid)))
        self.strips: list[StripAssembly] = []
        self.r_depth = None
        self._route_floor = 1.3 * separation_floor(self.grid)

    # ------------------------------------------------------------- routing
    def boundary_foot(self, z):
        """(euclid distance, foot arclength) to the dense boundary polyline."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        d = np.abs(z[:, None] - self.dense_curve[None, :])
        idx = np.argmin(d, axis=1)
        return d[np.arange(len(z)), idx], self.dense_l[idx]

    def chart_of_l(self, l):
        d = circle_dist(np.asarray(l)[..., None], self.chart_bases[None, :],
                        self.grid.total_length)
        return np.argmin(d, axis=-1)

    def embed_eval(self, z, m=0):
        """All components of d^m (w_k o w_0^{-1}) at z-plane points, routed
        between the Cauchy kernel and the near-boundary evaluator."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.empty((len(z), self.E.n), dtype=complex)
        dist, foot = self.boundary_foot(z)
        far = dist >= self._route_floor
        if np.any(far):
            out[far] = cauchy_eval(self.E, 0, z[far], m=m, check=False)
        near = ~far
        if np.any(near):
            if not self.strips:
                raise ChartExit("near-boundary evaluation requested before strips exist")
            charts = self.chart_of_l(foot[near])
            zn = z[near]
            res = np.empty((len(zn), self.E.n), dtype=complex)
            for c in np.unique(charts):
                sel = charts == c
                x = self.strips[c].rect.to_chart(zn[sel])
                res[sel] = near_boundary_eval(self.E, self.strips[c].rect, x, m=m)
            out[near] = res
        return out

    def rho(self, z):
        d = self.embed_eval(z, m=1)
        return (np.abs(d) ** 2).sum(axis=-1)

    # ------------------------------------------------------------- strips
    def build_strips(self, b_depth_metric, n_x1=48, n_x2=24):
        """Rectified charts with sampled pullback metrics around the boundary.

        ``b_depth_metric``: geodesic depth the charts must accommodate; the
        chart height is sized from the local conformal factor.
        """
        L = self.grid.total_length
        half_window = 0.8 * L / self.n_strip_charts
        self.strips = []
        # charts must be tall enough for both the geodesic depth (metric
        # units) and the evaluator routing band (euclid units)
        b_floor = 1.8 * separation_floor(self.grid)
        for l0 in self.chart_bases:
            nodes_near = circle_dist(self.grid.nodes, l0, L) <= 1.2 * half_window
            rho_lo = 0.8 * float(self.rho_boundary[nodes_near].min())
            b = min(max(1.35 * b_depth_metric / np.sqrt(rho_lo), b_floor),
                    0.75 * self.inradius)
            rect = rectified_coords(self.E, 0, float(l0), a=half_window, b=b)
            shrink = 1.0 - 1e-9
            x1g = np.linspace(-half_window * shrink, half_window * shrink, n_x1)
            x2g = np.linspace(0.0, b * shrink, n_x2)
            xx1, xx2 = np.meshgrid(x1g, x2g, indexing="ij")
            pts = np.stack([xx1.ravel(), xx2.ravel()], axis=-1)
            rho = metric_in_chart(self.E, 0, pts, chart=rect).reshape(n_x1, n_x2)
            # closed-form shape part of the pullback metric
            lam = rect.l_of_x1(x1g)
            from .boundary import d_gamma

            e1 = d_gamma(self.E.eta(0)).eval_at(lam)
            slope = (e1 / rect.D).real
            u = e1 / slope
            v = 1j * rect.D
            g11 = (np.abs(u) ** 2)[:, None] * np.ones(n_x2)[None, :]
            g12 = (np.conj(u) * v).real[:, None] * np.ones(n_x2)[None, :]
            g22 = (abs(v) ** 2) * np.ones((n_x1, n_x2))
            metric = SplineMetric(x1g, x2g, rho * g11, rho * g12, rho * g22)
            self.strips.append(StripAssembly(float(l0), rect, metric))

    def shoot_strips(self, depth, step=None, jac_floor=0.05):
        """Shoot the geodesic bundles of all strip charts to the given depth."""
        for s in self.strips:
            edge = float(s.rect.x1_of_l(np.array([s.l0 + 0.5 *
                         self.grid.total_length / self.n_strip_charts]))[0])
            span = min(1.3 * abs(edge), 0.95 * s.rect.a)
            mu = np.linspace(-span, span, 33)
            s.bundle = shoot_geodesics(
                s.metric, mu, depth, step=step, rect=(s.rect.a, s.rect.b),
                jac_floor=jac_floor,
            )
        self.r_depth = depth

    # ----------------------------------------------------- semi-geodesics
    def _adjust_l(self, l, l0):
        L = self.grid.total_length
        return l0 + (np.mod(l - l0 + L / 2, L) - L / 2)

    def semi_coords(self, z, chart_idx=None, strict=True):
        """(l, r): boundary arclength of the foot and geodesic distance,
        by Newton inversion of the strip bundles.  With ``strict=False``
        also returns an ok-mask instead of raising on points outside the
        stored bundles."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        _, foot = self.boundary_foot(z)
        charts = np.full(len(z), chart_idx) if chart_idx is not None \
            else self.chart_of_l(foot)
        l = np.empty(len(z))
        r = np.empty(len(z))
        ok = np.ones(len(z), dtype=bool)
        for c in np.unique(charts):
            sel = charts == c
            strip = self.strips[c]
            x = strip.rect.to_chart(z[sel])
            if strict:
                mu, rr = strip.bundle.invert(x)
            else:
                mu, rr, good = strip.bundle.invert(x, strict=False)
                ok[sel] = good
            l[sel] = np.mod(strip.rect.l_of_x1(mu), self.grid.total_length)
            r[sel] = rr
        if strict:
            return l, r
        return l, r, ok

    def strip_point_z(self, l, r, chart_idx=None):
        """z-plane position of the point with semi-geodesic coordinates (l, r)."""
        l = np.atleast_1d(np.asarray(l, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        charts = np.full(len(l), chart_idx) if chart_idx is not None \
            else self.chart_of_l(l)
        out = np.empty(len(l), dtype=complex)
        for c in np.unique(charts):
            sel = charts == c
            strip = self.strips[c]
            mu = strip.rect.x1_of_l(self._adjust_l(l[sel], strip.l0))
            x = strip.bundle.point(mu, r[sel])
            out[sel] = strip.rect.from_chart(x)
        return out

    def semi_jacobian(self, z):
        """d (l, r) / d (Re z, Im z) at strip points: inverse of the chart
        and bundle Jacobians chained together."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        _, foot = self.boundary_foot(z)
        charts = self.chart_of_l(foot)
        out = np.empty((len(z), 2, 2))
        from .boundary import d_gamma

        for c in np.unique(charts):
            sel = charts == c
            strip = self.strips[c]
            x = strip.rect.to_chart(z[sel])
            mu, rr = strip.bundle.invert(x)
            jb = strip.bundle.jacobian(mu, rr)            # dx/d(mu, r)
            lam = strip.rect.l_of_x1(mu)
            e1 = d_gamma(self.E.eta(0)).eval_at(lam)
            slope = (e1 / strip.rect.D).real              # d x1tilde / d l
            u = e1 / slope                                 # dz/dx1
            v = 1j * strip.rect.D                          # dz/dx2
            jz = np.empty((sel.sum(), 2, 2))
            jz[:, 0, 0] = u.real
            jz[:, 1, 0] = u.imag
            jz[:, 0, 1] = v.real
            jz[:, 1, 1] = v.imag
            # d(mu, r)/d(Re z, Im z) = (dx/d(mu,r))^{-1} (dz/dx)^{-1}
            dmr = np.linalg.solve(jb, np.linalg.inv(jz))
            dmr[:, 0, :] /= slope[:, None]                # l = ltilde^{-1}(mu)
            out[sel] = dmr
        return out


# --------------------------------------------------------------------------
# distance functional (matching objective)
# --------------------------------------------------------------------------

@dataclass
class DistanceFunctional:
    """Matching objective between a reference point and perturbed candidates.

    kind: 'interior' is the squared ambient distance, 'boundary' matches
    semi-geodesic coordinates, 'blended' interpolates with the kappa cutoff
    (equal to interior for r > 2 r0/3 and to boundary for r < r0/3).
    """

    kind: str
    r0: float
    geom: SurfaceGeometry
    geom_p: SurfaceGeometry

    def value(self, xi, zp):
        xi = np.asarray(xi, dtype=complex)
        zp = np.atleast_1d(np.asarray(zp, dtype=complex))
        d_int = (np.abs(self.geom_p.embed_eval(zp, 0) - xi[None, :]) ** 2).sum(-1)
        if self.kind == "interior":
            return d_int
        l, r, ok = self.geom.semi_coords(np.array([xi[0]]), strict=False)
        if self.kind == "blended" and (not ok[0] or r[0] > 2.0 * self.r0 / 3.0):
            return d_int  # kappa = 0 beyond the strip
        lp, rp = self.geom_p.semi_coords(zp)
        L = self.geom.grid.total_length
        d_gam = circle_dist(lp, l[0], L) ** 2 + (rp - r[0]) ** 2
        if self.kind == "boundary":
            return d_gam
        k = kappa_profile(r[0], self.r0)
        return (1.0 - k) * d_int + k * d_gam


# --------------------------------------------------------------------------
# the map alpha
# --------------------------------------------------------------------------

@dataclass
class AlphaOptions:
    """Knobs of the alpha construction; defaults are the shipped desk-scale set."""

    n_strip_charts: int = 8
    metric_grid: tuple = (48, 24)
    r0_top_factor: float = 0.2      # ladder top = r0_top_factor * L / (2 pi)
    ladder_len: int = 4
    caustic_margin: float = 2.0
    depth_factor: float = 0.95      # stored bundle depth / r0
    interior_probes: int = 16       # tensor density on the central cylinder
    extra_probes: int = 6           # tensor density on the off-center cylinders
    strip_probes: tuple = (32, 8)   # (along boundary, in depth) per strip chart
    blend_probes: tuple = (6, 2)
    n_overlap: int = 40
    glue_tol: float = 1e-6
    fd_step: float = 1e-4
    newton_tol: float = 1e-13
    hessian_fd: float = 1e-5
    seed: int = 1234


@dataclass(frozen=True)
class QcMapReport:
    """Scalar summary of the constructed map plus the Beltrami probe field."""

    K: float
    teich_upper: float
    displacement: float
    metric_distortion: float
    hausdorff: float
    r0: float
    noise_floor: float
    mu_samples: np.ndarray
    probe_layout: str

    def to_json(self):
        return json.dumps({
            "K": self.K,
            "teich_upper": self.teich_upper,
            "displacement": self.displacement,
            "metric_distortion": self.metric_distortion,
            "hausdorff": self.hausdorff,
            "r0": self.r0,
            "noise_floor": self.noise_floor,
            "probe_layout": self.probe_layout,
            "mu_re": [float(v) for v in self.mu_samples.real],
            "mu_im": [float(v) for v in self.mu_samples.imag],
        })


class AlphaMap:
    """Evaluator of the near-isometric map between the two embedded surfaces.

    Points are identified by their first coordinate projection (the z-plane
    position); the three zones of the construction dispatch on the geodesic
    distance r to the boundary:

    * r < r0/3: semi-geodesic coordinate matching,
    * r > 2 r0/3: minimization of the ambient squared distance,
    * in between: minimization of the kappa-blended functional.
    """

    def __init__(self, geom: SurfaceGeometry, geom_p: SurfaceGeometry,
                 cylinders, r0, opts: AlphaOptions):
        self.geom = geom
        self.geom_p = geom_p
        self.cylinders = list(cylinders)
        self.r0 = float(r0)
        self.opts = opts
        rr, tt = np.meshgrid(np.linspace(0.15, 0.8, 6) * geom.inradius,
                             np.linspace(0, 2 * np.pi, 9)[:-1], indexing="ij")
        lattice = geom.centroid + (rr * np.exp(1j * tt)).ravel()
        self.rho_glob_min = 0.8 * float(min(geom.rho_boundary.min(),
                                            geom.rho(lattice).min()))

    # -------------------------------------------------------------- zones
    def euclid_lower_r(self, z):
        d, _ = self.geom.boundary_foot(z)
        return d * np.sqrt(self.rho_glob_min)

    def classify(self, z):
        """Zone of each point ('strip' | 'blend' | 'interior') plus (l, r)
        where they were computed (nan in the certified interior)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        zone = np.empty(len(z), dtype=object)
        l = np.full(len(z), np.nan)
        r = np.full(len(z), np.nan)
        r_lo = self.euclid_lower_r(z)
        deep = r_lo > (2.0 / 3.0) * self.r0
        zone[deep] = "interior"
        rest = ~deep
        if np.any(rest):
            lr, rr, ok = self.geom.semi_coords(z[rest], strict=False)
            l[rest] = np.where(ok, lr, np.nan)
            r[rest] = np.where(ok, rr, np.nan)
            zr = np.where(~ok, "interior",
                          np.where(rr < self.r0 / 3.0, "strip",
                                   np.where(rr > 2.0 * self.r0 / 3.0, "interior", "blend")))
            zone[rest] = zr
        return zone, l, r

    # ------------------------------------------------------- zone kernels
    def strip_image_z(self, z, chart_idx=None):
        l, r = self.geom.semi_coords(z, chart_idx=chart_idx)
        return self.geom_p.strip_point_z(l, r, chart_idx=chart_idx)

    def _trans_p(self, i, zeta, m):
        if i == 0:
            return self.geom_p.embed_eval(zeta, m=m)
        return cauchy_eval(self.geom_p.E, i, np.atleast_1d(zeta), m=m, check=False)

    def _minimize(self, grad, zeta0):
        h = self.opts.hessian_fd
        g_px = grad(zeta0 + h)
        g_mx = grad(zeta0 - h)
        g_py = grad(zeta0 + 1j * h)
        g_my = grad(zeta0 - 1j * h)
        B = np.empty((len(zeta0), 2, 2))
        B[:, :, 0] = (g_px - g_mx) / (2 * h)
        B[:, :, 1] = (g_py - g_my) / (2 * h)
        y0 = np.stack([zeta0.real, zeta0.imag], axis=-1)

        def Hfun(y):
            return grad(y[:, 0] + 1j * y[:, 1])

        from .errors import ContractionFailed, NoConvergence

        try:
            y, _ = frozen_newton_batch(Hfun, B, y0, tol=self.opts.newton_tol)
        except (ContractionFailed, NoConvergence) as exc:
            raise MinimizationDiverged(str(exc)) from exc
        return y[:, 0] + 1j * y[:, 1]

    def interior_image(self, z, cyl: Cylinder | None = None):
        """Minimize |xi' - xi|^2 in the coordinates of a covering cylinder.

        Returns the z-plane image; the candidate variable is the cylinder's
        coordinate projection, seeded at the identity guess.
        """
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        xi = self.geom.embed_eval(z, 0)
        if cyl is None:
            cyl = self.cylinders[0]
        i = cyl.trace_index
        zeta0 = xi[:, i]

        def grad(zeta):
            # gradient of sum |g_k|^2 with holomorphic g_k: (Re, Im) of
            # 2 sum g_k conj(g_k')
            vals = self._trans_p(i, zeta, 0)
            ders = self._trans_p(i, zeta, 1)
            omega = 2.0 * ((vals - xi) * np.conj(ders)).sum(axis=-1)
            return np.stack([omega.real, omega.imag], axis=-1)

        zeta = self._minimize(grad, zeta0)
        if i == 0:
            return zeta
        return self._trans_p(i, zeta, 0)[:, 0]

    def blend_image(self, z, l_ref=None, r_ref=None):
        """Minimize the kappa-blended functional; candidates in the z-plane."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        xi = self.geom.embed_eval(z, 0)
        if l_ref is None:
            l_ref, r_ref = self.geom.semi_coords(z)
        kap = kappa_profile(r_ref, self.r0)
        L = self.geom.grid.total_length

        def grad(zp):
            vals = self.geom_p.embed_eval(zp, 0)
            ders = self.geom_p.embed_eval(zp, 1)
            omega = 2.0 * ((vals - xi) * np.conj(ders)).sum(axis=-1)
            g_int = np.stack([omega.real, omega.imag], axis=-1)
            lp, rp = self.geom_p.semi_coords(zp)
            jac = self.geom_p.semi_jacobian(zp)
            dl = np.mod(lp - l_ref + L / 2, L) - L / 2
            dr = rp - r_ref
            g_gam = 2.0 * (dl[:, None] * jac[:, 0, :] + dr[:, None] * jac[:, 1, :])
            return (1.0 - kap)[:, None] * g_int + kap[:, None] * g_gam

        return self._minimize(grad, z.copy())

    # -------------------------------------------------------- public maps
    def chart_image(self, z, zone=None, chart_idx=None, cyl=None, l=None, r=None):
        """z-plane image of alpha with the evaluation branch frozen by the
        caller (used by stencil probing; one branch per batch)."""
        if zone == "strip":
            return self.strip_image_z(z, chart_idx=chart_idx)
        if zone == "interior":
            return self.interior_image(z, cyl=cyl)
        if zone == "blend":
            return self.blend_image(z, l_ref=l, r_ref=r)
        raise ValueError(f"unknown zone {zone!r}")

    def __call__(self, xi):
        """alpha at points of the reference surface given as C^n vectors."""
        xi = np.asarray(xi, dtype=complex)
        single = xi.ndim == 1
        pts = np.atleast_2d(xi)
        z = pts[:, 0]
        zone, l, r = self.classify(z)
        zp = np.empty(len(z), dtype=complex)
        for zn in ("strip", "interior", "blend"):
            sel = zone == zn
            if not np.any(sel):
                continue
            if zn == "strip":
                zp[sel] = self.geom_p.strip_point_z(l[sel], r[sel])
            elif zn == "interior":
                zp[sel] = self.interior_image(z[sel])
            else:
                zp[sel] = self.blend_image(z[sel], l_ref=l[sel], r_ref=r[sel])
        out = self.geom_p.embed_eval(zp, 0)
        return out[0] if single else out


# --------------------------------------------------------------------------
# cover construction
# --------------------------------------------------------------------------

def build_cover(geom: SurfaceGeometry, geom_p: SurfaceGeometry, r0,
                rho_glob_min, n_extra=4):
    """Interior cylinders: one central disc on the first coordinate plus
    off-center discs on the second coordinate where that projection is
    injective.  Every cylinder is validated to avoid the strip r <= r0/6 and
    to be projective for both embeddings (winding 1, separation margin)."""
    grid = geom.grid
    gap = (r0 / 6.0) / np.sqrt(rho_glob_min) + 2.0 * grid.spacing
    R_big = geom.inradius - gap
    if R_big <= 0:
        raise CausticDetected("no room for an interior cylinder at this r0")
    cyls = [Cylinder(0, geom.centroid, R_big)]
    if geom.E.n < 2:
        return cyls
    floor1 = separation_floor(grid)
    for k in range(n_extra):
        zk = geom.centroid + 0.5 * R_big * np.exp(2j * np.pi * k / n_extra)
        ring = zk + 0.25 * R_big * np.exp(1j * np.linspace(0, 2 * np.pi, 9)[:-1])
        dmin = float(np.min(np.abs(geom.embed_eval(ring, 1)[:, 1])))
        center = complex(geom.embed_eval(np.array([zk]), 0)[0, 1])
        radius = 0.5 * 0.25 * R_big * dmin
        for _ in range(3):
            probe = center + radius * np.exp(1j * np.linspace(0, 2 * np.pi, 9)[:-1])
            probe = np.concatenate([probe, [center]])
            ok = True
            for g in (geom, geom_p):
                curve = g.E.eta_values[1]
                if np.min(np.abs(curve[None, :] - probe[:, None])) < 2 * floor1:
                    ok = False
                    break
                try:
                    if np.any(multiplicity(g.E.eta(1), probe) != 1):
                        ok = False
                        break
                except Exception:
                    ok = False
                    break
                pre = cauchy_eval(g.E, 1, probe, m=0, check=False)[:, 0]
                d, _ = g.boundary_foot(pre)
                if np.min(d) * np.sqrt(rho_glob_min) <= 1.05 * r0 / 6.0:
                    ok = False
                    break
            if ok:
                cyls.append(Cylinder(1, center, radius))
                break
            radius *= 0.7
    return cyls


# --------------------------------------------------------------------------
# probes, report, and the full construction
# --------------------------------------------------------------------------

def _polar(center, radius, nr, nth, lo=0.1):
    radii = radius * np.sqrt(np.linspace(lo ** 2, 0.92 ** 2, nr))
    ang = np.linspace(0, 2 * np.pi, nth, endpoint=False)
    rr, tt = np.meshgrid(radii, ang, indexing="ij")
    return (center + rr * np.exp(1j * tt)).ravel()


def point_cloud(g: SurfaceGeometry, n_interior=(10, 24), strip_levels=(0.15, 0.45, 0.8)):
    """Deterministic sample cloud of the embedded surface in C^n: boundary
    trace points, an interior polar lattice, and strip-lattice points."""
    parts = [g.E.boundary_points()]
    z_int = _polar(g.centroid, 0.9 * g.inradius, *n_interior, lo=0.05)
    parts.append(g.embed_eval(z_int, 0))
    L = g.grid.total_length
    l = np.linspace(0, L, 64, endpoint=False)
    for frac in strip_levels:
        r = np.full_like(l, frac * g.r_depth)
        parts.append(g.embed_eval(g.strip_point_z(l, r), 0))
    return np.concatenate(parts, axis=0)


def _probe_families(alpha: AlphaMap):
    """Deterministic probe grids per zone, with frozen evaluation branches.

    Returns a list of (name, z_centers, chart_eval) triples; layout order is
    strip charts, then interior cylinders, then blend strips, row-major
    within each grid.
    """
    geom = alpha.geom
    opts = alpha.opts
    L = geom.grid.total_length
    fams = []
    n_l, n_r = opts.strip_probes
    for c, strip in enumerate(geom.strips):
        offs = np.linspace(-0.45, 0.45, n_l) * (L / geom.n_strip_charts)
        rs = np.linspace(alpha.r0 / 30.0, 0.30 * alpha.r0, n_r)
        ll, rr = np.meshgrid(strip.l0 + offs, rs, indexing="ij")
        z = geom.strip_point_z(np.mod(ll.ravel(), L), rr.ravel(), chart_idx=c)
        fams.append((f"strip[{c}]", z,
                     lambda zz, c=c: alpha.strip_image_z(zz, chart_idx=c)))
    for k, cyl in enumerate(alpha.cylinders):
        if cyl.trace_index == 0:
            z = _polar(cyl.center, cyl.radius, opts.interior_probes,
                       opts.interior_probes)
        else:
            pre = cauchy_eval(geom.E, 1, np.array([cyl.center]), m=0,
                              check=False)[0, 0]
            z = _polar(pre, 0.18 * geom.inradius, opts.extra_probes,
                       opts.extra_probes)
            xi1 = geom.embed_eval(z, 0)[:, 1]
            z = z[np.abs(xi1 - cyl.center) < 0.9 * cyl.radius]
        z = z[alpha.euclid_lower_r(z) > (2.0 / 3.0) * alpha.r0]
        if len(z):
            fams.append((f"cylinder[{k}]", z,
                         lambda zz, cyl=cyl: alpha.interior_image(zz, cyl=cyl)))
    n_bl, n_br = opts.blend_probes
    for c, strip in enumerate(geom.strips):
        offs = np.linspace(-0.4, 0.4, n_bl) * (L / geom.n_strip_charts)
        rs = np.linspace(0.45, 0.58, n_br) * alpha.r0
        ll, rr = np.meshgrid(strip.l0 + offs, rs, indexing="ij")
        z = geom.strip_point_z(np.mod(ll.ravel(), L), rr.ravel(), chart_idx=c)
        fams.append((f"blend[{c}]", z, lambda zz: alpha.blend_image(zz)))
    return fams


def _glue_checks(alpha: AlphaMap, rng):
    """Cross-chart consistency: adjacent strip charts and overlapping
    cylinders must produce the same image within glue_tol."""
    geom = alpha.geom
    opts = alpha.opts
    L = geom.grid.total_length
    worst = 0.0
    n = geom.n_strip_charts
    per_pair = max(2, opts.n_overlap // (2 * n))
    for c in range(n):
        c2 = (c + 1) % n
        l_mid = geom.strips[c].l0 + 0.5 * L / n
        ls = np.mod(l_mid + (rng.random(per_pair) - 0.5) * 0.2 * L / n, L)
        rs = alpha.r0 * (0.08 + 0.2 * rng.random(per_pair))
        z = geom.strip_point_z(ls, rs, chart_idx=c)
        za = alpha.strip_image_z(z, chart_idx=c)
        zb = alpha.strip_image_z(z, chart_idx=c2)
        worst = max(worst, float(np.max(np.abs(za - zb))))
    big = alpha.cylinders[0]
    for cyl in alpha.cylinders[1:]:
        pre = cauchy_eval(geom.E, 1, np.array([cyl.center]), m=0, check=False)[0, 0]
        z = pre + 0.05 * geom.inradius * np.exp(2j * np.pi * rng.random(per_pair))
        xi1 = geom.embed_eval(z, 0)[:, 1]
        keep = (np.abs(xi1 - cyl.center) < 0.85 * cyl.radius) \
            & (alpha.euclid_lower_r(z) > (2.0 / 3.0) * alpha.r0)
        z = z[keep]
        if not len(z):
            continue
        za = alpha.interior_image(z, cyl=big)
        zb = alpha.interior_image(z, cyl=cyl)
        worst = max(worst, float(np.max(np.abs(za - zb))))
    if worst > opts.glue_tol:
        raise GlueMismatch(
            f"charts disagree by {worst:.3e} > glue_tol {opts.glue_tol:.1e} "
            "(perturbation too large for this cover)"
        )
    return worst


def select_strip_depth(geom: SurfaceGeometry, geom_p: SurfaceGeometry,
                       opts: AlphaOptions):
    """Largest rung of the dyadic ladder whose geodesic bundles stay
    caustic-free (and inside their charts) with the configured margin on
    both surfaces."""
    L = geom.grid.total_length
    top = opts.r0_top_factor * L / (2 * np.pi)
    for k in range(opts.ladder_len):
        cand = top / 2 ** k
        try:
            geom.shoot_strips(opts.caustic_margin * cand, step=cand / 32.0)
            geom_p.shoot_strips(opts.caustic_margin * cand, step=cand / 32.0)
            return cand
        except (CausticDetected, ChartExit):
            continue
    raise CausticDetected("no rung of the r0 ladder is caustic-free with margin")


def build_alpha(E: Embedding, E_prime: Embedding, cover=None, kappa_r0=None,
                opts: AlphaOptions | None = None):
    """Construct the global map alpha and its report.

    Returns (AlphaMap, QcMapReport).  Raises GlueMismatch when two covering
    charts disagree beyond glue_tol (the perturbation is too large for the
    cover), MinimizationDiverged or CausticDetected from the respective
    stages.
    """
    opts = opts or AlphaOptions()
    rng = np.random.default_rng(opts.seed)
    geom = SurfaceGeometry(E, n_strip_charts=opts.n_strip_charts)
    geom_p = SurfaceGeometry(E_prime, n_strip_charts=opts.n_strip_charts)
    L = geom.grid.total_length

    margin_depth = opts.caustic_margin * opts.r0_top_factor * L / (2 * np.pi)
    n1, n2 = opts.metric_grid
    geom.build_strips(margin_depth, n1, n2)
    geom_p.build_strips(margin_depth, n1, n2)

    r0 = kappa_r0 if kappa_r0 is not None else select_strip_depth(geom, geom_p, opts)
    depth = opts.depth_factor * r0
    geom.shoot_strips(depth, step=r0 / 64.0)
    geom_p.shoot_strips(depth, step=r0 / 64.0)

    if cover is None:
        rho_lo = 0.8 * min(geom.rho_boundary.min(), geom_p.rho_boundary.min())
        cover = build_cover(geom, geom_p, r0, rho_lo)
    alpha = AlphaMap(geom, geom_p, cover, r0, opts)
    glue_defect = _glue_checks(alpha, rng)

    # ---------------------------------------------------------- probe sweep
    fams = _probe_families(alpha)
    mu_all = []
    K = 1.0
    displacement = 0.0
    distortion = 0.0
    layout = []
    inj_z = []
    inj_zp = []
    for name, z, chart_eval in fams:
        mu, Kf, dz, dzb = beltrami_dilatation(chart_eval, z, fd_step=opts.fd_step)
        zp = chart_eval(z)
        xi = geom.embed_eval(z, 0)
        xip = geom_p.embed_eval(zp, 0)
        displacement = max(displacement, float(np.max(np.abs(xip - xi).max(axis=-1))))
        rho = geom.rho(z)
        rho_p = geom_p.rho(zp)
        phis = np.exp(-2j * np.linspace(0, np.pi, 8, endpoint=False))
        stretch = np.abs(dz[:, None] + dzb[:, None] * phis[None, :]) ** 2
        dist_f = np.abs((rho_p / rho)[:, None] * stretch - 1.0)
        distortion = max(distortion, float(dist_f.max()))
        K = max(K, Kf)
        mu_all.append(mu)
        layout.append(f"{name}:{len(z)}")
        inj_z.append(z)
        inj_zp.append(zp)

    # boundary displacement (alpha fixes semi-geodesic coordinates at r=0)
    bdiff = np.abs(geom_p.E.eta_values - geom.E.eta_values).max()
    displacement = max(displacement, float(bdiff))

    # injectivity spot-check on probe pairs
    zc = np.concatenate(inj_z)
    zpc = np.concatenate(inj_zp)
    idx = rng.choice(len(zc), size=(min(60, len(zc)), 2))
    idx = idx[idx[:, 0] != idx[:, 1]]
    num = np.abs(zpc[idx[:, 0]] - zpc[idx[:, 1]])
    den = np.abs(zc[idx[:, 0]] - zc[idx[:, 1]])
    if np.any(num < 1e-9 * den):
        raise MinimizationDiverged("alpha maps distinct probes to the same point")

    haus = hausdorff_distance(point_cloud(geom), point_cloud(geom_p))
    noise = opts.newton_tol / opts.fd_step + 10.0 * opts.fd_step ** 2

    report = QcMapReport(
        K=float(K),
        teich_upper=teich_bound(float(K)),
        displacement=float(displacement),
        metric_distortion=float(distortion),
        hausdorff=float(haus),
        r0=float(r0),
        noise_floor=float(noise),
        mu_samples=np.concatenate(mu_all),
        probe_layout=",".join(layout) + f";glue_defect={glue_defect:.3e}",
    )
    return alpha, report

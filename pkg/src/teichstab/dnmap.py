"""Dirichlet-to-Neumann maps of genus-0 test surfaces.

A surface is presented as an injective holomorphic immersion F of the closed
unit disc, F(z) = sum a_k z^k, so its image F(D) is a plane domain carrying
the flat metric and the DN map is computable spectrally: harmonic extension
happens on the disc, and conformal covariance supplies the |F'|^{-1} factor
together with the reparametrization by boundary arclength,

    (Lambda_M f)(l) = |F'(e^{i theta(l)})|^{-1} (Lambda_disc (f o l))(theta(l)).

No PDE mesh is involved, which keeps the synthesized operators exact enough
to support the tight tolerances used downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .boundary import (
    BoundaryFn,
    BoundaryGrid,
    BoundaryOperator,
    fn_to_vec,
    operator_norm_h1_l2,
)
from .errors import DegenerateImmersion, GridMismatch, NotInjective, WrongLength

_SPEED_FLOOR = 1e-10


def _series_eval(series, z):
    """F(z) = sum_k a_k z^k with series = (a_1, ..., a_d)."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    for a in series[::-1]:
        out = (out + a) * z
    return out


def _series_deriv_eval(series, z):
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    for k in range(len(series), 0, -1):
        out = out * z + k * series[k - 1]
    return out


class ArclengthMap:
    """Spectral bijection between boundary angle theta and arclength l.

    l(theta) is the antiderivative of the speed |F'(e^{i theta})|, computed
    from the speed's Fourier series; the inverse is a Newton iteration on the
    monotone l(theta), resolved to ``newton_tol`` in theta.
    """

    def __init__(self, series, n_quad=4096, newton_tol=1e-12):
        self.series = np.asarray(series, dtype=complex)
        self.newton_tol = newton_tol
        theta = 2 * np.pi * np.arange(n_quad) / n_quad
        speed = np.abs(_series_deriv_eval(self.series, np.exp(1j * theta)))
        c = np.fft.fft(speed) / n_quad
        self.mean_speed = c[0].real
        modes = np.fft.fftfreq(n_quad, d=1.0 / n_quad).astype(int)
        anti = np.zeros_like(c)
        nz = modes != 0
        anti[nz] = c[nz] / (1j * modes[nz])
        # keep only decayed modes: speed is analytic so the tail is noise
        self._anti_coeffs = anti
        self._modes = modes
        self.length = 2 * np.pi * self.mean_speed

    def speed(self, theta):
        return np.abs(_series_deriv_eval(self.series, np.exp(1j * np.asarray(theta, dtype=complex))))

    def l_of_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        phases = np.exp(1j * np.outer(theta, self._modes))
        periodic = (phases @ self._anti_coeffs).real
        periodic0 = np.sum(self._anti_coeffs).real  # value at theta = 0
        return self.mean_speed * theta + periodic - periodic0

    def theta_of_l(self, l, max_iter=60):
        l = np.asarray(l, dtype=float)
        theta = l / self.mean_speed
        for _ in range(max_iter):
            step = (self.l_of_theta(theta) - l) / self.speed(theta)
            theta = theta - step
            if np.max(np.abs(step)) < self.newton_tol:
                break
        else:
            raise RuntimeError("arclength inversion did not converge")
        return theta


@dataclass(frozen=True)
class SurfaceSpec:
    """Genus-0 surface given by the power series of an immersion of the disc."""

    series: tuple
    grid: BoundaryGrid

    @classmethod
    def make(cls, series, grid):
        return cls(tuple(complex(a) for a in series), grid)

    def F(self, z):
        return _series_eval(self.series, z)

    def F_prime(self, z):
        return _series_deriv_eval(self.series, z)

    @cached_property
    def arclength(self) -> ArclengthMap:
        return ArclengthMap(self.series)

    # --------------------------------------------------------------- checks
    def check(self, n_boundary_factor=8):
        """Immersion + injectivity invariants.

        * |F'| > 0 on a fine boundary grid and an interior sample grid, and
          the argument-principle zero count of F' inside the disc is 0;
        * the boundary curve is simple (pairwise sample separation) and the
          winding of F about interior image points is 1 (0 outside).
        """
        nb = n_boundary_factor * self.grid.n_samples
        theta = 2 * np.pi * np.arange(nb) / nb
        bz = np.exp(1j * theta)
        fp_b = self.F_prime(bz)
        rr, tt = np.meshgrid(np.linspace(0.05, 0.97, 14), theta[::8], indexing="ij")
        fp_i = self.F_prime(rr * np.exp(1j * tt))
        if min(np.min(np.abs(fp_b)), np.min(np.abs(fp_i))) < _SPEED_FLOOR:
            raise DegenerateImmersion("|F'| vanishes on the closed disc")
        # argument principle for F' (no zeros inside): winding of F' about 0
        wind_fp = np.angle(fp_b / np.roll(fp_b, 1)).sum() / (2 * np.pi)
        if abs(wind_fp) > 0.1:
            raise DegenerateImmersion("F' has zeros inside the disc")
        # simple boundary curve: any two samples that are close in the image
        # must be neighbors along the circle
        fb = self.F(bz)
        min_adj = np.min(np.abs(fb - np.roll(fb, 1)))
        idx = np.arange(nb)
        for shift in range(2, nb // 2 + 1):
            d = np.abs(fb - np.roll(fb, shift))
            if np.min(d) < 0.5 * min_adj * min(shift, 8):
                raise NotInjective(f"boundary samples nearly collide at shift {shift}")
        # winding about interior image points equals 1
        probe = self.F(0.5 * np.exp(1j * np.linspace(0, 2 * np.pi, 7)[:-1]))
        for z0 in probe:
            wind = np.angle((fb - z0) / np.roll(fb - z0, 1)).sum() / (2 * np.pi)
            if abs(wind - 1.0) > 0.1:
                raise NotInjective("winding about an interior image point is not 1")
        return self

    # ------------------------------------------------------------ serialization
    def to_json(self) -> str:
        return json.dumps(
            {
                "series": [[a.real, a.imag] for a in self.series],
                "n_samples": self.grid.n_samples,
                "length": self.grid.total_length,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SurfaceSpec":
        obj = json.loads(text)
        grid = BoundaryGrid(int(obj["n_samples"]), float(obj["length"]))
        series = tuple(complex(re, im) for re, im in obj["series"])
        return cls(series, grid)


@dataclass(frozen=True)
class DnMap:
    """DN operator on the truncated basis, together with its grid."""

    op: BoundaryOperator
    grid: BoundaryGrid

    def apply(self, f: BoundaryFn) -> BoundaryFn:
        return self.op.apply(f)

    def __call__(self, f):
        return self.op.apply(f)


def disc_dn(grid: BoundaryGrid) -> DnMap:
    """Closed-form DN map of the flat unit disc: multiplier |n|.

    Requires total_length = 2*pi (the disc's boundary is the unit circle).
    """
    if abs(grid.total_length - 2 * np.pi) > 1e-12:
        raise WrongLength("disc DN map needs total_length = 2*pi")
    op = BoundaryOperator.from_multiplier(grid, lambda n: float(abs(n)))
    return DnMap(op, grid)


def boundary_length(series, n_quad=4096) -> float:
    """Arclength of the image boundary curve by trapezoidal quadrature of |F'|
    (spectrally accurate: the integrand is smooth periodic)."""
    theta = 2 * np.pi * np.arange(n_quad) / n_quad
    speed = np.abs(_series_deriv_eval(np.asarray(series, dtype=complex), np.exp(1j * theta)))
    return float(2 * np.pi * np.mean(speed))


def normalize_length(s: SurfaceSpec, target_L=None) -> SurfaceSpec:
    """Rescale the immersion so the boundary has the grid's arclength.

    Idempotent on already-normalized specs.
    """
    if target_L is None:
        target_L = s.grid.total_length
    length = boundary_length(s.series)
    if length < 1e-12:
        raise DegenerateImmersion("boundary length underflow")
    c = target_L / length
    return SurfaceSpec(tuple(a * c for a in s.series), s.grid)


def _values_to_vecs(grid, values):
    """Column-wise fn_to_vec for a (n_samples, m) block of real samples."""
    c = np.fft.rfft(values, axis=0) / grid.n_samples
    K = grid.n_trunc
    L = grid.total_length
    out = np.empty((grid.dim, values.shape[1]))
    out[0] = c[0].real * np.sqrt(L)
    amp = np.sqrt(L / 2.0)
    out[1::2] = 2.0 * c[1:K + 1].real * amp
    out[2::2] = -2.0 * c[1:K + 1].imag * amp
    return out


def pushforward_dn(s: SurfaceSpec, oversample=4, arclength_offset=0.0) -> DnMap:
    """Assemble the DN map of the surface F(D) on the arclength grid.

    The |F'|^{-1} factor and the reparametrization are applied on an
    ``oversample`` x finer theta grid and re-projected onto the truncated
    basis, which controls aliasing from the non-bandlimited composition
    f o l(theta).  ``arclength_offset`` shifts the base point used to
    identify the surface boundary with the common grid (the identification
    convention is arclength matching with base point l = 0).
    """
    grid = s.grid
    L = grid.total_length
    am = s.arclength
    if abs(am.length - L) > 1e-8 * L:
        raise WrongLength(
            f"surface boundary length {am.length:.12g} does not match grid length {L:.12g}; "
            "call normalize_length first"
        )
    M = oversample * grid.n_samples
    theta = 2 * np.pi * np.arange(M) / M
    speed = am.speed(theta)
    if np.min(speed) < _SPEED_FLOOR:
        raise DegenerateImmersion("|F'| below floor on the boundary")
    lcoord = np.mod(am.l_of_theta(theta) - arclength_offset, L)

    # truncated basis sampled at l(theta): columns follow fn_to_vec layout
    K = grid.n_trunc
    dim = grid.dim
    B = np.empty((M, dim))
    B[:, 0] = 1.0 / np.sqrt(L)
    n = np.arange(1, K + 1)
    ang = np.outer(lcoord, grid.omega(n))
    B[:, 1::2] = np.sqrt(2.0 / L) * np.cos(ang)
    B[:, 2::2] = np.sqrt(2.0 / L) * np.sin(ang)

    # disc DN on the oversampled circle: Fourier multiplier |n|
    modes_M = np.fft.rfftfreq(M, d=1.0 / M)
    G = np.fft.irfft(np.abs(modes_M)[:, None] * np.fft.rfft(B, axis=0), axis=0)
    G /= speed[:, None]

    # resample at theta(l_j) by trigonometric interpolation of the columns
    theta_star = am.theta_of_l(grid.nodes + arclength_offset)
    C = np.fft.fft(G, axis=0) / M
    modes_full = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    phases = np.exp(1j * np.outer(theta_star, modes_full))
    V = (phases @ C).real

    mat = _values_to_vecs(grid, V)
    return DnMap(BoundaryOperator(grid, mat), grid)


def boundary_curve(s: SurfaceSpec, arclength_offset=0.0) -> BoundaryFn:
    """Image of the boundary circle as a complex function of arclength,
    eta(l) = F(e^{i theta(l + offset)}).  Requires a length-normalized spec."""
    L = s.grid.total_length
    if abs(s.arclength.length - L) > 1e-8 * L:
        raise WrongLength("normalize the surface before sampling its boundary curve")
    theta = s.arclength.theta_of_l(s.grid.nodes + arclength_offset)
    return BoundaryFn.from_values(s.grid, s.F(np.exp(1j * theta)))


def dn_distance(a: DnMap, b: DnMap) -> float:
    """Operator distance t = ||Lambda - Lambda'|| from H^1 to L^2 (truncated)."""
    if a.grid != b.grid:
        raise GridMismatch("DN maps live on different grids")
    return operator_norm_h1_l2(a.op - b.op)


def check_dn_invariants(dn: DnMap, tol_rel=1e-8):
    """Kernel, symmetry and positivity invariants of a synthesized DN map.

    Returns the worst relative defect; raises AssertionError beyond tol_rel.
    """
    m = dn.op.matrix
    scale = max(np.linalg.norm(m, 2), 1e-300)
    const = np.zeros(dn.grid.dim)
    const[0] = 1.0
    defects = [
        np.linalg.norm(m @ const) / scale,
        np.linalg.norm(m - m.T, 2) / scale,
        max(0.0, -float(np.min(np.linalg.eigvalsh(0.5 * (m + m.T))))) / scale,
    ]
    worst = max(defects)
    if worst > tol_rel:
        raise AssertionError(f"DN invariants violated: relative defect {worst:.3e}")
    return worst

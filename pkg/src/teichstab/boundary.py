"""Spectral calculus on a closed boundary curve.

Functions on the boundary (Gamma, dl) are represented by uniform arclength
samples together with their discrete Fourier coefficients; the two views are
kept consistent under the standard DFT pairing.  Everything downstream
(DN maps, trace projectors, contour integrals) is built on three primitives
defined here:

* tangential differentiation ``d_gamma``,
* its mean-zero inverse ``integrate_J``,
* the truncated H^1 -> L^2 operator norm.

Operators are dense matrices over the orthonormal real trigonometric basis

    1/sqrt(L),  sqrt(2/L) cos(2*pi*n*l/L),  sqrt(2/L) sin(2*pi*n*l/L)

for modes n = 1..K with K = n_samples/2 - 1 (the unmatched Nyquist mode is
excluded from the operator algebra).  Orthonormality makes the matrix 2-norm
equal to the L^2 operator norm, which keeps norm computations honest.

All values are immutable after construction; every operation is a pure
function, so instances can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import GridMismatch, MeanNotZero

# Relative tolerance discriminating a genuine nonzero mean from roundoff.
MEAN_TOL_REL = 1e-10


@dataclass(frozen=True)
class BoundaryGrid:
    """Uniform arclength grid with ``n_samples`` nodes on a curve of length
    ``total_length``; nodes sit at l_j = j * total_length / n_samples."""

    n_samples: int
    total_length: float

    def __post_init__(self):
        if self.n_samples < 16 or self.n_samples % 2 != 0:
            raise ValueError("n_samples must be an even integer >= 16")
        if not self.total_length > 0:
            raise ValueError("total_length must be positive")

    @property
    def nodes(self):
        return np.arange(self.n_samples) * (self.total_length / self.n_samples)

    @property
    def spacing(self):
        return self.total_length / self.n_samples

    @property
    def n_trunc(self):
        """Highest retained mode K = n_samples/2 - 1 of the operator algebra."""
        return self.n_samples // 2 - 1

    @property
    def dim(self):
        """Dimension 2K+1 of the truncated real trigonometric basis."""
        return 2 * self.n_trunc + 1

    @property
    def mode_numbers(self):
        """Signed mode numbers in FFT order, n in [-N/2, N/2)."""
        return np.fft.fftfreq(self.n_samples, d=1.0 / self.n_samples).astype(int)

    def omega(self, n):
        """Angular frequency 2*pi*n / L of mode n."""
        return 2.0 * np.pi * np.asarray(n) / self.total_length


def _ro(a):
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BoundaryFn:
    """A smooth periodic function on Gamma: samples plus spectral coefficients.

    ``values[j] = f(l_j)`` and ``coeffs[k]`` is the coefficient of
    ``exp(2*pi*i*n_k*l/L)`` with ``n_k`` in FFT order, normalized so that
    ``coeffs[0]`` is the mean of f.
    """

    grid: BoundaryGrid
    values: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    @classmethod
    def from_values(cls, grid, values):
        values = np.asarray(values)
        if values.shape != (grid.n_samples,):
            raise ValueError("values must have shape (n_samples,)")
        if not np.iscomplexobj(values):
            values = values.astype(float)
        coeffs = np.fft.fft(values) / grid.n_samples
        return cls(grid, _ro(values), _ro(coeffs))

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (grid.n_samples,):
            raise ValueError("coeffs must have shape (n_samples,)")
        values = np.fft.ifft(coeffs) * grid.n_samples
        # conjugate-symmetric spectra synthesize real functions exactly
        n = grid.n_samples
        sym = np.allclose(coeffs[1:], np.conj(coeffs[1:][::-1]), atol=1e-14) \
            and abs(coeffs[0].imag) < 1e-14
        if sym:
            values = values.real
        return cls(grid, _ro(values), _ro(coeffs))

    @classmethod
    def from_callable(cls, grid, func):
        return cls.from_values(grid, np.asarray(func(grid.nodes)))

    # ------------------------------------------------------------- basics
    @property
    def is_real(self):
        return not np.iscomplexobj(self.values)

    def mean(self):
        """(1/L) * integral of f over Gamma; equals the n=0 coefficient."""
        return self.coeffs[0]

    def integral(self):
        """Unnormalized integral of f dl over Gamma."""
        return self.coeffs[0] * self.grid.total_length

    def real(self):
        return BoundaryFn.from_values(self.grid, self.values.real)

    def imag(self):
        return BoundaryFn.from_values(self.grid, self.values.imag)

    def conj(self):
        return BoundaryFn.from_values(self.grid, np.conj(self.values))

    # ---------------------------------------------------------- arithmetic
    def _check(self, other):
        if self.grid != other.grid:
            raise GridMismatch("functions live on different grids")

    def __add__(self, other):
        if isinstance(other, BoundaryFn):
            self._check(other)
            return BoundaryFn.from_values(self.grid, self.values + other.values)
        return BoundaryFn.from_values(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, BoundaryFn):
            self._check(other)
            return BoundaryFn.from_values(self.grid, self.values - other.values)
        return BoundaryFn.from_values(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, BoundaryFn):
            self._check(other)
            return BoundaryFn.from_values(self.grid, self.values * other.values)
        return BoundaryFn.from_values(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return BoundaryFn.from_values(self.grid, -self.values)

    # ------------------------------------------------------------- norms
    def norm_l2(self):
        """L^2(Gamma, dl) norm, computed spectrally (Parseval)."""
        return float(np.sqrt(self.grid.total_length * np.sum(np.abs(self.coeffs) ** 2)))

    def norm_h1(self):
        """H^1(Gamma) norm with weight (1 + omega_n^2) per mode."""
        w = 1.0 + self.grid.omega(self.grid.mode_numbers) ** 2
        return float(np.sqrt(self.grid.total_length * np.sum(w * np.abs(self.coeffs) ** 2)))

    def norm_sup(self):
        return float(np.max(np.abs(self.values)))

    def norm_cm(self, m):
        """C^m norm: max over j <= m of sup |d^j f| sampled on the grid."""
        out = self.norm_sup()
        g = self
        for _ in range(m):
            g = d_gamma(g)
            out = max(out, g.norm_sup())
        return out

    # --------------------------------------------------------- evaluation
    def eval_at(self, points):
        """Evaluate the trigonometric interpolant at arbitrary arclengths.

        Exact for band-limited data; the usual barycentric-free synthesis
        sum over all stored modes.
        """
        points = np.atleast_1d(np.asarray(points, dtype=float))
        modes = self.grid.mode_numbers
        phases = np.exp(2j * np.pi / self.grid.total_length * np.outer(points, modes))
        out = phases @ self.coeffs
        if self.is_real:
            out = out.real
        return out


def d_gamma(f: BoundaryFn) -> BoundaryFn:
    """Tangential derivative along the oriented boundary.

    Exact on the truncated spectrum: mode n is multiplied by
    i * 2*pi*n / total_length.  The unpaired Nyquist mode has no conjugate
    partner, so its derivative is set to zero (keeps real data real).
    """
    grid = f.grid
    modes = grid.mode_numbers
    mult = 1j * grid.omega(modes)
    mult[modes == -grid.n_samples // 2] = 0.0
    out = BoundaryFn.from_coeffs(grid, f.coeffs * mult)
    if f.is_real:
        out = BoundaryFn.from_values(grid, out.values.real)
    return out


def integrate_J(f: BoundaryFn, mean_tol=None) -> BoundaryFn:
    """Mean-zero antiderivative J = d_gamma^{-1} on the mean-free subspace.

    The additive constant is fixed by the mean-zero gauge: the n=0
    coefficient of the output is exactly 0.  Raises :class:`MeanNotZero`
    when |mean f| exceeds ``mean_tol`` (default ``1e-10 * sup|f|``): the
    caller passed data outside the admissible subspace.
    """
    grid = f.grid
    if mean_tol is None:
        mean_tol = MEAN_TOL_REL * max(f.norm_sup(), 1e-300)
    if abs(f.mean()) > mean_tol:
        raise MeanNotZero(f"|mean(f)| = {abs(f.mean()):.3e} exceeds tolerance {mean_tol:.3e}")
    modes = grid.mode_numbers
    mult = np.zeros(grid.n_samples, dtype=complex)
    nz = (modes != 0) & (modes != -grid.n_samples // 2)
    mult[nz] = 1.0 / (1j * grid.omega(modes[nz]))
    out = BoundaryFn.from_coeffs(grid, f.coeffs * mult)
    if f.is_real:
        out = BoundaryFn.from_values(grid, out.values.real)
    return out


# --------------------------------------------------------------------------
# real trigonometric basis <-> sample transforms
# --------------------------------------------------------------------------

def fn_to_vec(grid: BoundaryGrid, values) -> np.ndarray:
    """Coefficients of real samples in the orthonormal trigonometric basis.

    Layout: [const, cos_1, sin_1, ..., cos_K, sin_K]; the Nyquist mode is
    dropped (it lies outside the truncated operator algebra).
    """
    values = np.asarray(values, dtype=float)
    c = np.fft.rfft(values) / grid.n_samples
    K = grid.n_trunc
    L = grid.total_length
    vec = np.empty(grid.dim)
    vec[0] = c[0].real * np.sqrt(L)
    amp = np.sqrt(L / 2.0)
    vec[1::2] = 2.0 * c[1:K + 1].real * amp
    vec[2::2] = -2.0 * c[1:K + 1].imag * amp
    return vec


def vec_to_fn(grid: BoundaryGrid, vec) -> BoundaryFn:
    """Synthesize the real function with the given orthonormal-basis coefficients."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (grid.dim,):
        raise ValueError("coefficient vector has wrong length")
    K = grid.n_trunc
    L = grid.total_length
    half = np.zeros(grid.n_samples // 2 + 1, dtype=complex)
    half[0] = vec[0] / np.sqrt(L)
    a = vec[1::2] / np.sqrt(L / 2.0)
    b = vec[2::2] / np.sqrt(L / 2.0)
    half[1:K + 1] = 0.5 * (a - 1j * b)
    values = np.fft.irfft(half * grid.n_samples)
    return BoundaryFn.from_values(grid, values)


@lru_cache(maxsize=32)
def _basis_matrix(n_samples, total_length):
    """(n_samples, dim) matrix of basis functions sampled on the grid."""
    grid = BoundaryGrid(n_samples, total_length)
    cols = [vec_to_fn(grid, row).values for row in np.eye(grid.dim)]
    return _ro(np.column_stack(cols))


def sobolev_weights(grid: BoundaryGrid) -> np.ndarray:
    """Diagonal H^1 weight (1 + omega_n^2)^{-1/2} per basis function."""
    K = grid.n_trunc
    n = np.arange(1, K + 1)
    wn = (1.0 + grid.omega(n) ** 2) ** -0.5
    w = np.empty(grid.dim)
    w[0] = 1.0
    w[1::2] = wn
    w[2::2] = wn
    return w


@dataclass(frozen=True)
class BoundaryOperator:
    """Dense operator over the truncated real trigonometric basis.

    ``kind='complex-linear'`` stores a (2K+1)^2 real matrix applied
    separately to the real and imaginary coefficient stacks of a function.
    ``kind='real-linear'`` stores the 2x2 block matrix over the stacked
    (Re, Im) coefficients, shape (2*(2K+1))^2 -- needed for maps that treat
    real and imaginary parts differently.
    """

    grid: BoundaryGrid
    matrix: np.ndarray
    kind: str = "complex-linear"

    def __post_init__(self):
        d = self.grid.dim
        want = d if self.kind == "complex-linear" else 2 * d
        if self.kind not in ("complex-linear", "real-linear"):
            raise ValueError(f"unknown linearity kind {self.kind!r}")
        if self.matrix.shape != (want, want):
            raise ValueError(f"matrix must be {want}x{want} for kind {self.kind!r}")
        _ro(self.matrix)

    # ----------------------------------------------------------- factories
    @classmethod
    def identity(cls, grid):
        return cls(grid, np.eye(grid.dim))

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros((grid.dim, grid.dim)))

    @classmethod
    def from_multiplier(cls, grid, mult_of_n):
        """Diagonal operator acting as the scalar ``mult_of_n(n)`` on both the
        cos and sin components of mode n (and on the constant via n=0)."""
        K = grid.n_trunc
        diag = np.empty(grid.dim)
        diag[0] = mult_of_n(0)
        vals = np.array([mult_of_n(n) for n in range(1, K + 1)], dtype=float)
        diag[1::2] = vals
        diag[2::2] = vals
        return cls(grid, np.diag(diag))

    # ----------------------------------------------------------- algebra
    def _check(self, other):
        if self.grid != other.grid:
            raise GridMismatch("operators live on different grids")
        if self.kind != other.kind:
            raise ValueError("mixed linearity kinds")

    def __add__(self, other):
        self._check(other)
        return BoundaryOperator(self.grid, self.matrix + other.matrix, self.kind)

    def __sub__(self, other):
        self._check(other)
        return BoundaryOperator(self.grid, self.matrix - other.matrix, self.kind)

    def __matmul__(self, other):
        self._check(other)
        return BoundaryOperator(self.grid, self.matrix @ other.matrix, self.kind)

    def __mul__(self, scalar):
        return BoundaryOperator(self.grid, self.matrix * float(scalar), self.kind)

    __rmul__ = __mul__

    def transpose(self):
        return BoundaryOperator(self.grid, self.matrix.T.copy(), self.kind)

    # ----------------------------------------------------------- action
    def apply(self, f: BoundaryFn) -> BoundaryFn:
        """Apply to a function; the grid never changes.  Content beyond the
        truncated band (the Nyquist mode) is discarded by the projection
        onto the basis."""
        if f.grid != self.grid:
            raise GridMismatch("operator and function grids differ")
        re = fn_to_vec(self.grid, f.values.real)
        im = fn_to_vec(self.grid, f.values.imag)
        if self.kind == "complex-linear":
            out_re = self.matrix @ re
            out_im = self.matrix @ im
        else:
            stacked = self.matrix @ np.concatenate([re, im])
            d = self.grid.dim
            out_re, out_im = stacked[:d], stacked[d:]
        vr = vec_to_fn(self.grid, out_re).values
        if f.is_real and np.all(out_im == 0.0):
            return BoundaryFn.from_values(self.grid, vr)
        vi = vec_to_fn(self.grid, out_im).values
        return BoundaryFn.from_values(self.grid, vr + 1j * vi)

    def __call__(self, f):
        return self.apply(f)


def d_gamma_operator(grid: BoundaryGrid) -> BoundaryOperator:
    """Matrix of d_gamma on the truncated basis."""
    K = grid.n_trunc
    m = np.zeros((grid.dim, grid.dim))
    for n in range(1, K + 1):
        w = grid.omega(n)
        m[2 * n, 2 * n - 1] = -w   # d cos -> -w sin
        m[2 * n - 1, 2 * n] = w    # d sin ->  w cos
    return BoundaryOperator(grid, m)


def j_operator(grid: BoundaryGrid) -> BoundaryOperator:
    """Matrix of J = d_gamma^{-1} (zero on constants, mean-zero gauge)."""
    K = grid.n_trunc
    m = np.zeros((grid.dim, grid.dim))
    for n in range(1, K + 1):
        w = grid.omega(n)
        m[2 * n, 2 * n - 1] = 1.0 / w    # J cos ->  sin / w
        m[2 * n - 1, 2 * n] = -1.0 / w   # J sin -> -cos / w
    return BoundaryOperator(grid, m)


def operator_norm_h1_l2(A: BoundaryOperator) -> float:
    """Truncated H^1 -> L^2 operator norm: largest singular value of A o W,
    W the diagonal Sobolev weight (1 + omega_n^2)^{-1/2} per mode."""
    w = sobolev_weights(A.grid)
    if A.kind == "real-linear":
        w = np.concatenate([w, w])
    return float(np.linalg.norm(A.matrix * w[None, :], 2))

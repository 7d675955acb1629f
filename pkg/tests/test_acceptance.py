"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line with its runtime (visible with
``pytest -s tests/test_acceptance.py``) and asserts both the stated
tolerances and the stated runtime budget.
"""

import time

import numpy as np

from teichstab.boundary import (
    BoundaryFn,
    BoundaryGrid,
    BoundaryOperator,
    j_operator,
)
from teichstab.cauchy import (
    Embedding,
    cauchy_eval,
    embedding_from_surface,
    gap_integral,
    near_boundary_eval,
    rectified_coords,
)
from teichstab.dnmap import (
    SurfaceSpec,
    disc_dn,
    dn_distance,
    normalize_length,
    pushforward_dn,
)
from teichstab.experiments import ExperimentConfig, run_stability
from teichstab.fixedpoint import fixed_point_solve
from teichstab.geodesics import ConstantMetric, shoot_geodesics
from teichstab.qcmap import build_alpha
from teichstab.traces import beta_hat, projector_P, trace_lift, verify_trace

GRID = BoundaryGrid(256, 2 * np.pi)


class Criterion:
    def __init__(self, num, label, budget_s):
        self.num = num
        self.label = label
        self.budget = budget_s

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        status = "PASS" if exc_type is None else "FAIL"
        print(f"criterion {self.num} [{self.label}]: {status} ({elapsed:.2f}s, "
              f"budget {self.budget:g}s)")
        if exc_type is None:
            assert elapsed < self.budget, (
                f"criterion {self.num} exceeded its runtime budget: "
                f"{elapsed:.1f}s >= {self.budget}s"
            )
        return False


def surface(series):
    return normalize_length(SurfaceSpec.make(series, GRID))


def test_criterion_1_disc_spectral_identities():
    with Criterion(1, "disc spectral identities", 1.0):
        dn = disc_dn(GRID)
        K = GRID.n_trunc
        diag = np.diag(dn.op.matrix)
        expect = np.empty(GRID.dim)
        expect[0] = 0.0
        expect[1::2] = np.arange(1, K + 1)
        expect[2::2] = np.arange(1, K + 1)
        assert np.array_equal(diag, expect)
        assert np.max(np.abs(dn.op.matrix - np.diag(diag))) == 0.0
        lj = dn.op @ j_operator(GRID)
        resid = (BoundaryOperator.identity(GRID) + lj @ lj).matrix[1:, 1:]
        assert np.linalg.norm(resid, 2) < 1e-10
        proj = projector_P(dn)
        assert proj.codim == 0
        assert np.max(np.abs(proj.P.matrix - np.eye(GRID.dim))) < 1e-10


def test_criterion_2_trace_characterization():
    with Criterion(2, "trace characterization", 5.0):
        rng = np.random.default_rng(42)
        surfaces = [surface([1.0]), surface([1.0, 0.05]), surface([1.0, 0.02, 0.01])]
        count = 0
        for s in surfaces:
            dn = pushforward_dn(s)
            proj = projector_P(dn)
            emb_curve = embedding_from_surface(s, dn, polys=(lambda x: x,),
                                               projector=proj).eta(0)
            n_here = 7 if count < 14 else 6
            for _ in range(n_here):
                deg = rng.integers(1, 6)
                coeffs = rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1)
                coeffs[1] += 1.0  # keep the trace nonconstant
                vals = np.polyval(coeffs[::-1], emb_curve.values)
                eta = BoundaryFn.from_values(GRID, vals)
                assert verify_trace(eta, dn, tol=1e-8, P=proj)
                assert not verify_trace(eta.conj(), dn, tol=1e-8, P=proj)
                count += 1
        assert count == 20


def test_criterion_3_argument_principle():
    with Criterion(3, "argument principle and Cauchy reconstruction", 5.0):
        e1 = BoundaryFn.from_callable(GRID, lambda t: np.exp(1j * t))
        e2 = BoundaryFn.from_callable(GRID, lambda t: np.exp(2j * t))
        emb = Embedding.build([e1, e2], disc_dn(GRID), verify=False)
        xs, ys = np.meshgrid(np.linspace(-0.48, 0.48, 10), np.linspace(-0.48, 0.48, 10))
        z = (xs + 1j * ys).ravel()
        one = BoundaryFn.from_values(GRID, np.ones(GRID.n_samples) + 0j)
        w = gap_integral(one, e1, z)
        assert np.max(np.abs(w - 1.0)) < 1e-6
        rr, tt = np.meshgrid(np.linspace(0, 0.7, 8), np.linspace(0, 2 * np.pi, 13)[:-1])
        zq = (rr * np.exp(1j * tt)).ravel()  # image distance >= 0.3 from the circle
        got0 = cauchy_eval(emb, 0, zq, m=0)
        assert np.max(np.abs(got0 - np.stack([zq, zq ** 2], axis=-1))) < 1e-10
        got1 = cauchy_eval(emb, 0, zq, m=1)
        assert np.max(np.abs(got1 - np.stack([np.ones_like(zq), 2 * zq], axis=-1))) < 1e-10


def test_criterion_4_near_boundary_evaluator():
    with Criterion(4, "near-boundary evaluator", 10.0):
        e1 = BoundaryFn.from_callable(GRID, lambda t: np.exp(1j * t))
        e2 = BoundaryFn.from_callable(GRID, lambda t: np.exp(2j * t))
        emb = Embedding.build([e1, e2], disc_dn(GRID), verify=False)
        chart = rectified_coords(emb, 0, 0.4, a=0.7, b=0.5)
        x = np.stack([np.linspace(-0.3, 0.3, 9), np.full(9, 1e-3)], axis=-1)
        z = chart.from_chart(x)
        got0 = near_boundary_eval(emb, chart, x, m=0)
        assert np.max(np.abs(got0 - np.stack([z, z ** 2], axis=-1))) < 1e-5
        got1 = near_boundary_eval(emb, chart, x, m=1)
        assert np.max(np.abs(got1 - np.stack([np.ones_like(z), 2 * z], axis=-1))) < 1e-5
        xo = np.stack([np.linspace(-0.25, 0.25, 7), np.full(7, 0.3)], axis=-1)
        zo = chart.from_chart(xo)
        for m in (0, 1):
            a = near_boundary_eval(emb, chart, xo, m=m)
            b = cauchy_eval(emb, 0, zo, m=m)
            assert np.max(np.abs(a - b)) < 1e-8


def test_criterion_5_fixed_point_engine():
    with Criterion(5, "fixed-point engine", 1.0):
        dom = (np.zeros(1), np.ones(1))
        t = 1e-3
        res = fixed_point_solve(lambda x, y: y - x, lambda x, y: y - x - t,
                                dom, dom, f=lambda x: x)
        assert res.c1_error <= 2 * t and abs(res.c0_error - t) < 1e-10
        res = fixed_point_solve(lambda x, y: y - x, lambda x, y: y - x,
                                dom, dom, f=lambda x: x)
        assert res.c1_error <= 1e-12
        res = fixed_point_solve(lambda x, y: y - x ** 2,
                                lambda x, y: y - x ** 2 - t * np.sin(x),
                                dom, (np.zeros(1), 2 * np.ones(1)), f=lambda x: x ** 2)
        assert res.c0_error <= 2 * (t * np.sin(1.0))
        assert res.c1_error <= 2 * t


def test_criterion_6_geodesic_shooter():
    with Criterion(6, "geodesic shooter", 10.0):
        mu = np.linspace(-0.5, 0.5, 33)
        flat = shoot_geodesics(ConstantMetric(np.eye(2)), mu, r0=0.4)
        mm, rr = np.meshgrid(mu[2:-2], flat.r_grid[1:], indexing="ij")
        pts = flat.point(mm.ravel(), rr.ravel())
        assert np.max(np.abs(pts - np.stack([mm.ravel(), rr.ravel()], axis=-1))) < 1e-8
        rho = 4.0
        conf = shoot_geodesics(ConstantMetric(rho * np.eye(2)), mu, r0=0.4)
        pts = conf.point(mu[4:-4], np.full(len(mu) - 8, 0.32))
        expect = np.stack([mu[4:-4], np.full(len(mu) - 8, 0.32 / np.sqrt(rho))], axis=-1)
        assert np.max(np.abs(pts - expect)) < 1e-8
        ratios = []
        for s in (1e-2, 1e-3):
            pert = shoot_geodesics(ConstantMetric((1 + s) * np.eye(2)), mu, r0=0.4)
            diff = pert.x_table - flat.x_table
            dr = flat.r_grid[1] - flat.r_grid[0]
            dmu = mu[1] - mu[0]
            c1 = max(np.max(np.abs(diff)),
                     np.max(np.abs(np.gradient(diff, dr, axis=0))),
                     np.max(np.abs(np.gradient(diff, dmu, axis=1))))
            ratios.append(c1 / s)
        assert abs(ratios[0] - ratios[1]) < 0.2 * max(ratios)


def test_criterion_7_identity_pipeline():
    with Criterion(7, "identity pipeline (t = 0)", 60.0):
        from teichstab.cauchy import induced_embedding

        s = surface([1.0])
        dn = pushforward_dn(s)
        emb = embedding_from_surface(s, dn)
        emb_p = induced_embedding(emb, dn)
        _, rep = build_alpha(emb, emb_p)
        assert rep.K - 1.0 <= 1e-6
        assert rep.teich_upper <= 1e-6
        assert rep.displacement <= 1e-8
        assert rep.hausdorff <= 1e-10


def test_criterion_8_stability_sweep():
    with Criterion(8, "stability sweep", 600.0):
        cfg = ExperimentConfig(
            base_series=[1.0],
            direction=[0.0, 0.5],
            epsilons=[0.1, 0.05, 0.025, 0.0125],
        )
        rows = run_stability(cfg)
        assert all(not r.failed for r in rows)
        for name in ("t", "K_minus_1", "teich_upper", "displacement", "hausdorff"):
            vals = [getattr(r, name) for r in rows]
            assert all(a > b for a, b in zip(vals, vals[1:])), (name, vals)
        ts = np.log([r.t for r in rows])
        te = np.log([r.teich_upper for r in rows])
        slope = np.polyfit(ts, te, 1)[0]
        assert slope >= 0.8


def test_criterion_9_beta_transfer():
    with Criterion(9, "beta-hat transfer", 30.0):
        dn0 = disc_dn(GRID)
        proj0 = projector_P(dn0)
        f = BoundaryFn.from_callable(GRID, lambda t: np.cos(t) + 0.3 * np.sin(2 * t))
        eta = trace_lift(f, 0.7, dn0, proj0)
        ratios = []
        for eps in (0.1, 0.05, 0.025, 0.0125):
            dn1 = pushforward_dn(surface([1.0, eps / 2]))
            t = dn_distance(dn0, dn1)
            out = beta_hat(eta, dn1, projector_P(dn1))
            diff = BoundaryFn.from_values(GRID, out.eta.values - eta.eta.values)
            ratios.append(diff.norm_cm(1) / t)
        ratios = np.array(ratios)
        assert ratios.max() / ratios.min() < 3.0

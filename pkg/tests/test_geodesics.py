import numpy as np
import pytest

from teichstab.errors import CausticDetected, ChartExit
from teichstab.geodesics import (
    ConformalMetric,
    ConstantMetric,
    christoffel,
    inward_unit_normal,
    shoot_geodesics,
)

MU = np.linspace(-0.5, 0.5, 33)


def test_flat_metric_straight_lines():
    chart = shoot_geodesics(ConstantMetric(np.eye(2)), MU, r0=0.4)
    mm, rr = np.meshgrid(MU[2:-2], chart.r_grid[1:], indexing="ij")
    pts = chart.point(mm.ravel(), rr.ravel())
    expect = np.stack([mm.ravel(), rr.ravel()], axis=-1)
    assert np.max(np.abs(pts - expect)) < 1e-10
    assert chart.unit_speed_defect() < 1e-10


def test_constant_conformal_rescale():
    rho = 4.0
    chart = shoot_geodesics(ConstantMetric(rho * np.eye(2)), MU, r0=0.4)
    pts = chart.point(MU[5:-5], np.full(len(MU) - 10, 0.3))
    expect = np.stack([MU[5:-5], np.full(len(MU) - 10, 0.3 / np.sqrt(rho))], axis=-1)
    assert np.max(np.abs(pts - expect)) < 1e-8
    assert chart.unit_speed_defect() < 1e-10


def test_inward_normal_positive_and_unit():
    rho = lambda x: 1.0 + 0.5 * x[:, 0] ** 2
    grad = lambda x: np.stack([x[:, 0], np.zeros(len(x))], axis=-1)
    m = ConformalMetric(rho, grad)
    n = inward_unit_normal(m, MU)
    assert np.all(n[:, 1] > 0)
    h = m.components(np.stack([MU, np.zeros_like(MU)], axis=-1))
    sp = np.einsum("pi,pij,pj->p", n, h, n)
    assert np.allclose(sp, 1.0, atol=1e-12)


def test_christoffel_conformal_closed_form():
    # for h = rho * delta: Gamma^1_11 = dx rho/(2 rho), Gamma^1_22 = -dx rho/(2 rho), ...
    rho = lambda x: np.exp(x[:, 0] + 0.5 * x[:, 1])
    grad = lambda x: np.stack([rho(x), 0.5 * rho(x)], axis=-1)
    m = ConformalMetric(rho, grad)
    x = np.array([[0.2, 0.1]])
    g = christoffel(m, x)[0]
    r = float(rho(x)[0])
    dx, dy = r, 0.5 * r
    assert abs(g[0, 0, 0] - dx / (2 * r)) < 1e-12
    assert abs(g[0, 1, 1] + dx / (2 * r)) < 1e-12
    assert abs(g[0, 0, 1] - dy / (2 * r)) < 1e-12
    assert abs(g[1, 1, 1] - dy / (2 * r)) < 1e-12


def test_variable_metric_unit_speed_preserved():
    rho = lambda x: 1.0 + 0.3 * x[:, 0] ** 2 + 0.2 * x[:, 1]
    grad = lambda x: np.stack([0.6 * x[:, 0], 0.2 * np.ones(len(x))], axis=-1)
    chart = shoot_geodesics(ConformalMetric(rho, grad), MU, r0=0.3)
    assert chart.unit_speed_defect() < 1e-9


def test_perturbation_ratio_stable():
    # h' = (1+s) * delta: ||x_h' - x_h||_C1 / s stable within 20% across s
    base = shoot_geodesics(ConstantMetric(np.eye(2)), MU, r0=0.4)
    ratios = []
    for s in (1e-2, 1e-3):
        pert = shoot_geodesics(ConstantMetric((1 + s) * np.eye(2)), MU, r0=0.4)
        diff = pert.x_table - base.x_table
        c0 = np.max(np.abs(diff))
        dr = base.r_grid[1] - base.r_grid[0]
        dmu = MU[1] - MU[0]
        c1 = max(
            c0,
            np.max(np.abs(np.gradient(diff, dr, axis=0))),
            np.max(np.abs(np.gradient(diff, dmu, axis=1))),
        )
        ratios.append(c1 / s)
    assert abs(ratios[0] - ratios[1]) < 0.2 * max(ratios)


def test_inversion_roundtrip():
    rho = lambda x: 1.0 + 0.4 * x[:, 0] ** 2 + 0.1 * x[:, 1]
    grad = lambda x: np.stack([0.8 * x[:, 0], 0.1 * np.ones(len(x))], axis=-1)
    chart = shoot_geodesics(ConformalMetric(rho, grad), MU, r0=0.35)
    rng = np.random.default_rng(5)
    mu = rng.uniform(-0.4, 0.4, 40)
    r = rng.uniform(0.02, 0.3, 40)
    x = chart.point(mu, r)
    mu2, r2 = chart.invert(x)
    assert np.max(np.abs(mu2 - mu)) < 1e-9
    assert np.max(np.abs(r2 - r)) < 1e-9


def test_caustic_detected_on_sphere():
    # stereographic unit sphere: normals to the equator focus at the pole (r = pi/2)
    rho = lambda x: 4.0 / (1.0 + (x ** 2).sum(-1)) ** 2
    grad = lambda x: (-16.0 / (1.0 + (x ** 2).sum(-1)) ** 3)[:, None] * x
    m = ConformalMetric(rho, grad)
    shoot_geodesics(m, MU, r0=0.8)  # well before the focus: fine
    with pytest.raises(CausticDetected):
        shoot_geodesics(m, MU, r0=1.65)


def test_chart_exit():
    with pytest.raises(ChartExit):
        shoot_geodesics(ConstantMetric(np.eye(2)), MU, r0=0.5, rect=(0.6, 0.3))

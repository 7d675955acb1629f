"""Command-line entry points.

``teichstab run --config cfg.json --out outdir`` runs a stability sweep and
writes stability.csv plus stability_plot.dat; the exit code is nonzero when
any row failed.  ``teichstab selftest`` exercises the closed-form example
suite of every module and prints one line per check.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np


def _cmd_run(args):
    from .experiments import ExperimentConfig, emit_report, run_stability

    config = ExperimentConfig.from_file(args.config)
    rows = run_stability(config)
    csv_path, plot_path, n_failed = emit_report(rows, args.out)
    for row in rows:
        status = f"FAILED ({row.error})" if row.failed else (
            f"t={row.t:.6g} K-1={row.K_minus_1:.6g} teich={row.teich_upper:.6g}"
        )
        print(f"epsilon={row.epsilon:<10g} {status}  [{row.seconds:.1f}s]")
    print(f"wrote {csv_path} and {plot_path}")
    return 1 if n_failed else 0


def _selftest_checks():
    from .boundary import BoundaryFn, BoundaryGrid, d_gamma, integrate_J
    from .cauchy import Embedding, cauchy_eval, gap_integral, multiplicity
    from .dnmap import SurfaceSpec, boundary_length, disc_dn, normalize_length
    from .errors import MeanNotZero
    from .fixedpoint import fixed_point_solve
    from .geodesics import ConstantMetric, shoot_geodesics
    from .qcmap import beltrami_dilatation, hausdorff_distance, teich_bound
    from .traces import projector_P, trace_lift

    grid = BoundaryGrid(64, 2 * np.pi)
    t = grid.nodes

    def close(a, b, tol=1e-9):
        return np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol

    checks = []
    f_sin = BoundaryFn.from_callable(grid, np.sin)
    checks.append(("d_gamma sin -> cos", close(d_gamma(f_sin).values, np.cos(t))))
    one = BoundaryFn.from_callable(grid, lambda l: np.ones_like(l))
    checks.append(("d_gamma const -> 0", close(d_gamma(one).values, 0.0)))
    f_cos = BoundaryFn.from_callable(grid, np.cos)
    checks.append(("J cos -> sin", close(integrate_J(f_cos).values, np.sin(t))))
    try:
        integrate_J(one)
        checks.append(("J rejects constants", False))
    except MeanNotZero:
        checks.append(("J rejects constants", True))

    dn = disc_dn(grid)
    checks.append(("disc DN multiplier", close(dn(f_sin).values, np.sin(t))))
    checks.append(("disc DN kills constants", close(dn(one).values, 0.0)))
    s = normalize_length(SurfaceSpec.make([2.0], grid))
    checks.append(("normalize radius-2 circle", close(s.series[0], 1.0)))
    checks.append(("boundary length quadrature",
                   close(boundary_length(s.series), 2 * np.pi, 1e-10)))

    proj = projector_P(dn)
    checks.append(("disc projector is identity",
                   close(proj.P.matrix, np.eye(grid.dim), 1e-9) and proj.codim == 0))
    eta = trace_lift(f_cos, 0.0, dn, proj).eta
    checks.append(("trace lift cos -> exp(i l)", close(eta.values, np.exp(1j * t))))

    e1 = BoundaryFn.from_callable(grid, lambda l: np.exp(1j * l))
    e2 = BoundaryFn.from_callable(grid, lambda l: np.exp(2j * l))
    emb = Embedding.build([e1, e2], dn, verify=True, projector=proj)
    checks.append(("Cauchy point value", close(cauchy_eval(emb, 0, 0.3 + 0j), [0.3, 0.09])))
    checks.append(("Cauchy derivative", close(cauchy_eval(emb, 0, 0.3 + 0j, m=1), [1.0, 0.6], 1e-8)))
    checks.append(("winding counts",
                   multiplicity(e1, 0j) == 1 and multiplicity(e2, 0j) == 2
                   and multiplicity(e1, 2.0 + 0j) == 0))
    checks.append(("argument principle value",
                   close(gap_integral(e2, e1, 0.5 + 0j), 0.25)))

    res = fixed_point_solve(lambda x, y: y - x, lambda x, y: y - x - 1e-3,
                            (np.zeros(1), np.ones(1)), (np.zeros(1), np.ones(1)),
                            f=lambda x: x, n_grid=9)
    checks.append(("fixed point linear shift", abs(res.c0_error - 1e-3) < 1e-9))

    mu_grid = np.linspace(-0.4, 0.4, 17)
    chart = shoot_geodesics(ConstantMetric(np.eye(2)), mu_grid, r0=0.3)
    pts = chart.point(mu_grid[3:5], np.array([0.2, 0.2]))
    checks.append(("flat geodesics are straight",
                   close(pts, np.stack([mu_grid[3:5], [0.2, 0.2]], axis=-1), 1e-9)))

    mu, K, _, _ = beltrami_dilatation(lambda z: z + np.conj(z) / 3.0, np.array([0.2 + 0.1j]))
    checks.append(("affine Beltrami dilatation", abs(K - 2.0) < 1e-7))
    checks.append(("teich bound at K=e^2", abs(teich_bound(np.e ** 2) - 1.0) < 1e-12))
    th = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    checks.append(("hausdorff concentric circles",
                   abs(hausdorff_distance(np.exp(1j * th), 1.1 * np.exp(1j * th)) - 0.1) < 1e-3))
    return checks


def _cmd_selftest(_args):
    failures = 0
    for name, ok in _selftest_checks():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1
    print(f"{failures} failure(s)")
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="teichstab",
                                     description="DN-map stability experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a stability sweep from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the experiment JSON")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=_cmd_run)
    p_self = sub.add_parser("selftest", help="run the closed-form example suite")
    p_self.set_defaults(func=_cmd_selftest)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

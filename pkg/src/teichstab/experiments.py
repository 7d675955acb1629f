"""Configuration-driven stability sweeps.

A sweep takes a base surface and a perturbation direction in series space,
synthesizes the DN map for each epsilon, measures the operator distance t,
induces the perturbed embedding, builds the map alpha, and tabulates
(t, K-1, teich_upper, displacement, hausdorff) per epsilon.  A failing
epsilon marks its row failed and the sweep continues; emission is CSV plus a
two-column plot-data file.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryGrid
from .cauchy import embedding_from_surface, induced_embedding
from .dnmap import SurfaceSpec, dn_distance, normalize_length, pushforward_dn
from .errors import TeichstabError
from .qcmap import AlphaOptions, build_alpha
from .traces import projector_P

CSV_HEADER = "epsilon,t,K_minus_1,teich_upper,displacement,hausdorff,seconds"


@dataclass
class ExperimentConfig:
    """Sweep definition: base surface, perturbation family, solver knobs.

    The perturbed surface for epsilon is the length-normalized immersion with
    series ``base_series + epsilon * direction``.  The epsilon list must be
    strictly decreasing and nonnegative (0 is allowed: the identity row).
    """

    base_series: list
    direction: list
    epsilons: list
    n_samples: int = 256
    total_length: float = 2 * np.pi
    arclength_offset: float = 0.0
    n_strip_charts: int = 8
    interior_probes: int = 16
    strip_probes: tuple = (32, 8)
    blend_probes: tuple = (6, 2)
    r0_top_factor: float = 0.2
    ladder_len: int = 4
    glue_tol: float = 1e-6
    fd_step: float = 1e-4
    seed: int = 1234

    def __post_init__(self):
        eps = list(self.epsilons)
        if not eps:
            raise ValueError("epsilon list is empty")
        if any(e < 0 for e in eps):
            raise ValueError("epsilons must be nonnegative")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if self.n_samples < 16 or self.n_samples % 2:
            raise ValueError("n_samples must be an even integer >= 16")
        if not (0 < self.r0_top_factor <= 0.5):
            raise ValueError("r0_top_factor out of range (0, 0.5]")
        if self.ladder_len < 1 or self.n_strip_charts < 4:
            raise ValueError("ladder_len >= 1 and n_strip_charts >= 4 required")
        if not (1e-7 <= self.fd_step <= 1e-2):
            raise ValueError("fd_step out of documented range [1e-7, 1e-2]")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        obj = json.loads(text)
        base = obj["base"]
        kwargs = dict(
            base_series=[complex(re, im) for re, im in base["series"]],
            direction=[complex(re, im) for re, im in obj["direction"]],
            epsilons=[float(e) for e in obj["epsilons"]],
            n_samples=int(base.get("n_samples", 256)),
            total_length=float(base.get("length", 2 * np.pi)),
        )
        for key in ("arclength_offset", "n_strip_charts", "interior_probes",
                    "r0_top_factor", "ladder_len", "glue_tol", "fd_step", "seed"):
            if key in obj:
                kwargs[key] = type(cls.__dataclass_fields__[key].default)(obj[key])
        for key in ("strip_probes", "blend_probes"):
            if key in obj:
                kwargs[key] = tuple(int(v) for v in obj[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def alpha_options(self) -> AlphaOptions:
        return AlphaOptions(
            n_strip_charts=self.n_strip_charts,
            interior_probes=self.interior_probes,
            strip_probes=tuple(self.strip_probes),
            blend_probes=tuple(self.blend_probes),
            r0_top_factor=self.r0_top_factor,
            ladder_len=self.ladder_len,
            glue_tol=self.glue_tol,
            fd_step=self.fd_step,
            seed=self.seed,
        )


@dataclass
class ExperimentRow:
    epsilon: float
    t: float = float("nan")
    K_minus_1: float = float("nan")
    teich_upper: float = float("nan")
    displacement: float = float("nan")
    hausdorff: float = float("nan")
    seconds: float = float("nan")
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None


def _series_for(config, eps):
    base = list(config.base_series)
    direction = list(config.direction)
    d = max(len(base), len(direction))
    base += [0.0] * (d - len(base))
    direction += [0.0] * (d - len(direction))
    return [b + eps * v for b, v in zip(base, direction)]


def run_stability(config: ExperimentConfig) -> list:
    """Run the sweep; one row per epsilon, sorted by epsilon descending.

    Deterministic for a fixed config (probe sampling is seeded).  A module
    error inside one epsilon marks that row failed; remaining rows still run.
    The worker count is capped by the TEICHSTAB_THREADS environment variable
    (default 1).
    """
    grid = BoundaryGrid(config.n_samples, config.total_length)
    base = normalize_length(SurfaceSpec.make(config.base_series, grid)).check()
    dn0 = pushforward_dn(base, arclength_offset=config.arclength_offset)
    proj0 = projector_P(dn0)
    emb = embedding_from_surface(base, dn0, arclength_offset=config.arclength_offset,
                                 projector=proj0)
    opts = config.alpha_options()

    def one_row(eps):
        started = time.perf_counter()
        row = ExperimentRow(epsilon=eps)
        try:
            pert = normalize_length(SurfaceSpec.make(_series_for(config, eps), grid)).check()
            dn1 = pushforward_dn(pert, arclength_offset=config.arclength_offset)
            row.t = dn_distance(dn0, dn1)
            emb_p = induced_embedding(emb, dn1)
            _, report = build_alpha(emb, emb_p, opts=opts)
            row.K_minus_1 = report.K - 1.0
            row.teich_upper = report.teich_upper
            row.displacement = report.displacement
            row.hausdorff = report.hausdorff
        except TeichstabError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        row.seconds = time.perf_counter() - started
        return row

    eps_sorted = sorted(config.epsilons, reverse=True)
    workers = max(1, int(os.environ.get("TEICHSTAB_THREADS", "1")))
    if workers == 1:
        rows = [one_row(e) for e in eps_sorted]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one_row, eps_sorted))
    return rows


def _fmt(x):
    return f"{x:.12g}"


def emit_report(rows, out_dir) -> tuple:
    """Write the CSV table and the (t, teich_upper) plot-data file.

    Returns (csv_path, plot_path, n_failed).  Value columns are printed with
    12 significant digits, LF line endings, UTF-8.
    """
    if not rows:
        raise ValueError("no rows to emit")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "stability.csv")
    plot_path = os.path.join(out_dir, "stability_plot.dat")
    lines = [CSV_HEADER]
    for row in sorted(rows, key=lambda r: -r.epsilon):
        lines.append(",".join(_fmt(v) for v in (
            row.epsilon, row.t, row.K_minus_1, row.teich_upper,
            row.displacement, row.hausdorff, row.seconds,
        )))
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(plot_path, "w", encoding="utf-8", newline="\n") as fh:
        for row in sorted(rows, key=lambda r: -r.epsilon):
            if not row.failed:
                fh.write(f"{_fmt(row.t)} {_fmt(row.teich_upper)}\n")
    n_failed = sum(1 for r in rows if r.failed)
    return csv_path, plot_path, n_failed


def parse_rows(csv_path) -> list:
    """Parse a stability.csv back into rows (values at printed precision)."""
    rows = []
    with open(csv_path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        for line in fh:
            vals = [float(v) for v in line.strip().split(",")]
            rows.append(ExperimentRow(*vals))
    return rows

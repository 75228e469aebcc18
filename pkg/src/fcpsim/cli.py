"""Command-line front end: ``fcpsim <experiment> --config FILE``.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 self-test failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .chain import decompose, msd_exponent
from .config import EXPERIMENT_KINDS, ConfigError, ExperimentConfig, ValidationError, load_config
from .engine import (
    ProcessSpec,
    first_passage_ensemble,
    log_grid,
    msd_ensemble,
    occupation_fraction_ensemble,
)
from .errors import FcpError
from .oracles import (
    FptTransformParams,
    LampertiParams,
    fpt_pdf_numeric,
    fpt_survival_numeric,
    fpt_tail,
    lamperti_pdf,
    msd_asymptotic,
    occupation_limit,
    valid_inversion_time,
)
from .selftest import run_all
from .transforms import delay_floor, msd_exact

log = logging.getLogger("fcpsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 0, 2, 3, 4


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = [",".join(header)]
    lines += [",".join(fmt(c[i]) for c in cols) for i in range(cols[0].size)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def fpt_params(cfg: ExperimentConfig) -> FptTransformParams | None:
    """Oracle parameters when the model is the alternating two-state chain with unit coefficients."""
    spec = cfg.spec
    if spec is None or spec.n_states != 2 or cfg.x0 != 0.0:
        return None
    if not np.array_equal(spec.matrix.entries, [[0.0, 1.0], [1.0, 0.0]]):
        return None
    if spec.jump.sigma != 1.0 or any(w.kind != "stable" or w.B_alpha != 1.0 for w in spec.waiting):
        return None
    return FptTransformParams(spec.waiting[0].alpha, spec.waiting[1].alpha, cfg.barrier)


def _nan_outside(f, t, t_min):
    out = np.full(np.shape(t), np.nan)
    ok = t >= t_min
    if ok.any():
        out[ok] = f(t[ok])
    return out


def _best_effort(f, t, run: "Run", column: str):
    """Evaluate an oracle column, writing nan where it is unavailable."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    try:
        out = np.atleast_1d(f(t)).astype(float)
    except FcpError:
        out = np.full(t.size, np.nan)
        for i, ti in enumerate(t):
            try:
                out[i] = np.atleast_1d(f(np.array([ti])))[0]
            except FcpError:
                pass
    n_nan = int(np.isnan(out).sum())
    if n_nan:
        run.summary.setdefault("oracle_nan_points", {})[column] = n_nan
    return out


def _exact_fn(cfg: ExperimentConfig):
    floor = delay_floor(cfg.spec, cfg.n_nodes)
    return lambda t: _nan_outside(lambda u: msd_exact(cfg.spec, u, cfg.n_nodes).values, t, floor)


class Run:
    """Collects artifacts of one run so partial outputs can be removed on failure."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out_dir = out_dir
        self.written: list[Path] = []
        self.summary: dict = {}

    def path(self, suffix: str) -> Path:
        p = self.out_dir / f"{self.cfg.prefix}_{suffix}"
        self.written.append(p)
        return p

    def csv(self, suffix: str, header, columns) -> None:
        write_csv(self.path(suffix), header, columns)

    def cleanup(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def _msd(run: Run, workers):
    cfg = run.cfg
    grid = log_grid(cfg.t_min, cfg.t_max, cfg.points_per_decade)
    stats = msd_ensemble(cfg.spec, grid, cfg.n_paths, cfg.master_seed, workers)
    asym = _best_effort(lambda t: msd_asymptotic(cfg.spec, t, cfg.n_nodes), grid, run, "oracle_asymptotic")
    exact = _best_effort(_exact_fn(cfg), grid, run, "oracle_exact")
    run.csv("msd.csv", ["t", "msd", "stderr", "oracle_asymptotic", "oracle_exact"],
            [grid, stats.values, stats.stderr, asym, exact])
    last = (grid >= grid[-1] / 10) & (stats.values > 0)
    if last.sum() >= 2:
        run.summary["slope_last_decade"] = float(np.polyfit(np.log(grid[last]), np.log(stats.values[last]), 1)[0])
    st = decompose(cfg.spec.matrix, cfg.spec.init)
    run.summary["alpha_star"] = msd_exponent(st, cfg.spec.alphas)


def _fpt(run: Run, workers):
    cfg = run.cfg
    res = first_passage_ensemble(cfg.spec, cfg.barrier, cfg.n_paths, cfg.t_max, cfg.master_seed,
                                 x0=cfg.x0, workers=workers)
    grid = log_grid(cfg.t_min, cfg.t_max, cfg.points_per_decade)
    edges = log_grid(cfg.t_min, cfg.t_max / 10, cfg.bins_per_decade)
    surv = res.survival(grid)
    dens = res.density(edges)
    p = fpt_params(cfg)
    if p is not None:
        t_ok = valid_inversion_time(p, cfg.n_nodes)
        o_surv = _nan_outside(lambda t: fpt_survival_numeric(p, t, cfg.n_nodes), grid, t_ok)
        o_pdf = _nan_outside(lambda t: fpt_pdf_numeric(p, t, cfg.n_nodes), dens.t_grid, t_ok)
        o_tail = fpt_tail(p, dens.t_grid) if p.alpha1 > p.alpha2 else np.full(dens.t_grid.size, np.nan)
    else:
        o_surv = np.full(grid.size, np.nan)
        o_pdf = o_tail = np.full(dens.t_grid.size, np.nan)
    run.csv("fpt_survival.csv", ["t", "survival", "stderr", "oracle_survival"],
            [grid, surv.values, surv.stderr, o_surv])
    run.csv("fpt_density.csv", ["t_lo", "t_hi", "t", "density", "stderr", "oracle_pdf", "oracle_tail"],
            [edges[:-1], edges[1:], dens.t_grid, dens.values, dens.stderr, o_pdf, o_tail])
    run.summary["censored"] = res.n_censored
    tail = (dens.t_grid >= cfg.t_max / 1000) & (dens.values > 0)
    if tail.sum() >= 3:
        run.summary["tail_slope"] = float(np.polyfit(np.log(dens.t_grid[tail]), np.log(dens.values[tail]), 1)[0])


def _occupation(run: Run, workers):
    cfg = run.cfg
    target = cfg.target_state - 1
    x = occupation_fraction_ensemble(cfg.spec, target, cfg.t, cfg.n_paths, cfg.master_seed, workers)
    edges = np.linspace(0.0, 1.0, 51)
    counts, _ = np.histogram(x, bins=edges)
    width = np.diff(edges)
    dens = counts / (x.size * width)
    mid = 0.5 * (edges[:-1] + edges[1:])
    limit = occupation_limit(cfg.spec, target) if cfg.spec.matrix.is_irreducible else None
    oracle = lamperti_pdf(limit, mid) if isinstance(limit, LampertiParams) else np.full(mid.size, np.nan)
    run.csv("occupation_hist.csv", ["x_lo", "x_hi", "density", "stderr", "oracle_density"],
            [edges[:-1], edges[1:], dens, np.sqrt(counts) / (x.size * width), oracle])
    run.csv("occupation_samples.csv", ["fraction"], [x])
    run.summary["mean_fraction"] = float(x.mean())
    run.summary["limit_law"] = (dataclasses.asdict(limit) if isinstance(limit, LampertiParams)
                                else limit)


def _oracle_msd(run: Run, workers):
    cfg = run.cfg
    grid = log_grid(cfg.t_min, cfg.t_max, cfg.points_per_decade)
    run.csv("oracle_msd.csv", ["t", "msd_exact", "msd_asymptotic"],
            [grid, _best_effort(_exact_fn(cfg), grid, run, "msd_exact"),
             _best_effort(lambda t: msd_asymptotic(cfg.spec, t, cfg.n_nodes), grid, run, "msd_asymptotic")])


def _oracle_fpt(run: Run, workers):
    cfg = run.cfg
    p = fpt_params(cfg)
    if p is None:
        raise ValidationError("model", "oracle-fpt needs the alternating two-state chain with "
                                       "stable laws, B_alpha = 1, sigma = 1 and x0 = 0")
    t_ok = valid_inversion_time(p, cfg.n_nodes)
    grid = log_grid(max(cfg.t_min, t_ok), cfg.t_max, cfg.points_per_decade)
    tail = fpt_tail(p, grid) if p.alpha1 > p.alpha2 else np.full(grid.size, np.nan)
    run.csv("oracle_fpt.csv", ["t", "pdf", "survival", "tail"],
            [grid, fpt_pdf_numeric(p, grid, cfg.n_nodes), fpt_survival_numeric(p, grid, cfg.n_nodes), tail])


def _analyze_chain(run: Run, workers):
    spec: ProcessSpec = run.cfg.spec
    st = decompose(spec.matrix, spec.init)
    alphas = spec.alphas
    a_star = msd_exponent(st, alphas)
    rows = range(len(st.blocks))
    run.csv("chain_blocks.csv", ["block", "first_state", "n_states", "reachable", "mass", "min_alpha"],
            [list(rows), [b[0] + 1 for b in st.blocks], [len(b) for b in st.blocks],
             [float(r) for r in st.reachable], st.block_mass, [alphas[list(b)].min() for b in st.blocks]])
    lines = [f"states: {spec.n_states}", f"irreducible: {st.is_irreducible}",
             f"transient states: {[i + 1 for i in st.transient]}"]
    for b, r, m in zip(st.blocks, st.reachable, st.block_mass):
        lines.append(f"block {[i + 1 for i in b]}: reachable={r} mass={m:.6g} "
                     f"min_alpha={alphas[list(b)].min():.6g}")
    lines.append(f"alpha_star = {a_star:.6g}")
    report = "\n".join(lines) + "\n"
    with open(run.path("chain_report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report)
    print(report, end="")
    run.summary["alpha_star"] = a_star
    run.summary["blocks"] = [[i + 1 for i in b] for b in st.blocks]


def _selftest(run: Run, workers):
    checks = run_all()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    run.summary["selftest"] = {c.name: c.passed for c in checks}
    run.summary["selftest_passed"] = all(c.passed for c in checks)


RUNNERS = {
    "msd": _msd,
    "fpt": _fpt,
    "occupation": _occupation,
    "oracle-msd": _oracle_msd,
    "oracle-fpt": _oracle_fpt,
    "analyze-chain": _analyze_chain,
    "selftest": _selftest,
}


def execute(cfg: ExperimentConfig, workers: int | None = None) -> int:
    """Run the configured experiment, writing CSV files and a manifest."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out_dir)
    start = time.perf_counter()
    try:
        RUNNERS[cfg.kind](run, workers)
        manifest = {
            "experiment": cfg.kind,
            "config_sha256": cfg.digest,
            "master_seed": cfg.master_seed,
            "n_paths": cfg.n_paths if cfg.kind in ("msd", "fpt", "occupation") else 0,
            "workers": workers,
            "wall_time_s": round(time.perf_counter() - start, 3),
            "outputs": [p.name for p in run.written],
            "summary": run.summary,
            "versions": {"fcpsim": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
        }
        with open(run.path(f"{cfg.kind}_manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
    except BaseException:
        run.cleanup()
        raise
    if cfg.kind == "selftest" and not run.summary["selftest_passed"]:
        return EXIT_SELFTEST
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcpsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=(kind != "selftest"), help="TOML experiment file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, help="worker threads (default: CPU count)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            cfg = ExperimentConfig(kind="selftest", spec=None, prefix="selftest")
        else:
            cfg = load_config(args.config, args.kind)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ValidationError("--seed", "must be an unsigned 64-bit integer")
            cfg = dataclasses.replace(cfg, master_seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, output_dir=args.out)
        if args.workers is not None and args.workers < 1:
            raise ValidationError("--workers", "must be at least 1")
    except (ConfigError, OSError) as exc:
        print(f"fcpsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return execute(cfg, args.workers)
    except ConfigError as exc:
        print(f"fcpsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FcpError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fcpsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark CLI: build H/UH matrices on synthetic geometries and persist metrics.

Subcommands mirror the experimental protocol: ``gen`` writes point files,
``build`` constructs the compressed formats and records storage/timing,
``matvec`` times products, ``sweep`` scans eta/eps/N, and ``verify`` estimates
spectral errors and checks the compression error bound where dense math is
feasible. Reports are CSV files plus rendered figures (disable with
``--no-plot``).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .clustering import AdmissibilityParams, build_block_tree, build_cluster_tree
from .errors import CapacityError
from .geometry import Geometry, generate_sphere, generate_torus_knot, load_points, save_points
from .hmatrix import assemble_h, dump_structure, matvec_h, storage_report
from .kernels import EntryOracle, KernelSpec
from .lowrank import ToleranceSpec
from .metrics import MetricsRow, write_error_rows, write_metrics
from .uniform import compress_h_to_uh, direct_build_uh, dump_structure_uh, matvec_uh, storage_report_uh
from .verification import compression_error, theorem_51_check
from . import plots

DENSE_ERROR_CAP = 2000  # largest n for dense-oracle error estimation
DENSE_THEOREM_CAP = 800


@dataclass
class RunConfig:
    """Fully resolved run parameters; every metrics row echoes these."""

    geometry: str
    n: int
    seed: int
    kernel: str
    kappa: float
    kappa_h: float | None
    eta: float
    criterion: str
    n_min: int
    eps: float
    workers: int
    fmt: str
    out: str
    repeats: int
    pivot: str
    path: str | None = None
    radius: float = 1.0
    knot_p: int = 2
    knot_q: int = 3
    tube_r: float = 0.4
    plot: bool = True


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--geometry", choices=["sphere", "knot", "file"], default="sphere")
    sub.add_argument("--n", type=int, default=2000, help="number of points for generators")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--file", dest="path", default=None, help="point file for --geometry file")
    sub.add_argument("--radius", type=float, default=1.0, help="sphere radius")
    sub.add_argument("--knot-p", type=int, default=2)
    sub.add_argument("--knot-q", type=int, default=3)
    sub.add_argument("--tube-r", type=float, default=0.4, help="knot tube radius")
    sub.add_argument("--kernel", choices=["laplace", "helmholtz"], default="laplace")
    sub.add_argument(
        "--kappa-h",
        type=float,
        default=None,
        help="wavenumber times point spacing; resolved against the measured "
        "minimal nearest-neighbor spacing of the geometry (the point-cloud "
        "surrogate for a mesh width)",
    )
    sub.add_argument("--kappa", type=float, default=None, help="wavenumber, overrides --kappa-h")
    sub.add_argument("--eta", type=float, default=10.0)
    sub.add_argument("--criterion", choices=["weak", "strong"], default="weak")
    sub.add_argument("--nmin", type=int, default=30)
    sub.add_argument("--eps", type=float, default=1e-4)
    sub.add_argument("--format", choices=["h", "uh", "both"], default="both")
    sub.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--repeats", type=int, default=None, help="matvec timing repeats")
    sub.add_argument("--pivot", choices=["partial", "rook"], default="partial")
    sub.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhm-kit", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn, repeats in (
        ("gen", cmd_gen, 0),
        ("build", cmd_build, 3),
        ("matvec", cmd_matvec, 10),
        ("sweep", cmd_sweep, 3),
        ("verify", cmd_verify, 3),
    ):
        sub = subs.add_parser(name)
        _add_common(sub)
        if name == "sweep":
            sub.add_argument("--axis", choices=["eta", "eps", "n"], required=True)
            sub.add_argument("--values", required=True, help="comma-separated sweep values")
        sub.set_defaults(func=fn, default_repeats=repeats)
    return parser


def _resolve_config(args) -> RunConfig:
    if args.n < 1:
        raise ValueError(f"--n must be >= 1, got {args.n}")
    if args.eps <= 0:
        raise ValueError(f"--eps must be > 0, got {args.eps}")
    if args.workers < 1:
        raise ValueError(f"--workers must be >= 1, got {args.workers}")
    if args.geometry == "file" and not args.path:
        raise ValueError("--geometry file requires --file PATH")
    repeats = args.repeats if args.repeats is not None else args.default_repeats
    cfg = RunConfig(
        geometry=args.geometry,
        n=args.n,
        seed=args.seed,
        kernel=args.kernel,
        kappa=0.0,
        kappa_h=args.kappa_h,
        eta=args.eta,
        criterion=args.criterion,
        n_min=args.nmin,
        eps=args.eps,
        workers=args.workers,
        fmt=args.format,
        out=args.out,
        repeats=max(1, repeats),
        pivot=args.pivot,
        path=args.path,
        radius=args.radius,
        knot_p=args.knot_p,
        knot_q=args.knot_q,
        tube_r=args.tube_r,
        plot=args.plot,
    )
    if args.kernel == "helmholtz":
        if args.kappa is not None:
            cfg.kappa = args.kappa
        elif args.kappa_h is not None:
            cfg.kappa = math.nan  # resolved once the geometry exists
        else:
            raise ValueError("helmholtz kernel needs --kappa or --kappa-h")
    return cfg


def _make_geometry(cfg: RunConfig) -> Geometry:
    if cfg.geometry == "sphere":
        return generate_sphere(cfg.n, cfg.radius, cfg.seed)
    if cfg.geometry == "knot":
        return generate_torus_knot(cfg.n, cfg.knot_p, cfg.knot_q, R=2.0, r=cfg.tube_r)
    geometry = load_points(cfg.path)
    cfg.n = len(geometry)
    return geometry


def _min_spacing(points: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    tree = cKDTree(points)
    dist, _ = tree.query(points, k=2)
    return float(dist[:, 1].min())


@dataclass
class Instance:
    cfg: RunConfig
    geometry: Geometry
    bct: object
    oracle: EntryOracle


def _build_instance(cfg: RunConfig) -> Instance:
    geometry = _make_geometry(cfg)
    if cfg.kernel == "helmholtz" and math.isnan(cfg.kappa):
        cfg.kappa = cfg.kappa_h / _min_spacing(geometry.points)
    tree = build_cluster_tree(geometry, cfg.n_min)
    bct = build_block_tree(tree, tree, AdmissibilityParams(cfg.eta, cfg.criterion))
    oracle = EntryOracle(
        geometry, geometry, KernelSpec(cfg.kernel, cfg.kappa), tree.permutation, tree.permutation
    )
    return Instance(cfg, geometry, bct, oracle)


def _build_format(inst: Instance, fmt: str):
    """Build one format with the experiment's tolerance split; returns (matrix, seconds, report, matvec)."""
    cfg = inst.cfg
    t0 = time.perf_counter()
    if fmt == "h":
        mat = assemble_h(
            inst.oracle,
            inst.bct,
            ToleranceSpec(cfg.eps),
            ToleranceSpec(cfg.eps / 10.0),
            workers=cfg.workers,
            strategy=cfg.pivot,
        )
        report = storage_report(mat)
        apply = lambda v, workers=None: matvec_h(mat, v, workers=workers or cfg.workers)
    else:
        mat = direct_build_uh(inst.oracle, inst.bct, cfg.eps, workers=cfg.workers, strategy=cfg.pivot)
        report = storage_report_uh(mat)
        apply = lambda v, workers=None: matvec_uh(mat, v, workers=workers or cfg.workers)
    return mat, time.perf_counter() - t0, report, apply


def _time_matvec(apply, n: int, seed: int, repeats: int) -> tuple[float, float, np.ndarray]:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    result = apply(v)  # warm-up, excluded from the stats
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = apply(v)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), float(np.min(times)), result


def _dense_error(inst: Instance, mat) -> float | None:
    n = len(inst.geometry)
    if n > DENSE_ERROR_CAP:
        return None
    dense = inst.oracle.to_dense(cap=DENSE_ERROR_CAP * DENSE_ERROR_CAP)
    return compression_error(dense, mat, seed=inst.cfg.seed).rel_spectral_estimate


def _metrics_row(command: str, inst: Instance, fmt: str, report, build_s, mean_s, min_s, rel_err) -> MetricsRow:
    cfg = inst.cfg
    return MetricsRow(
        command=command,
        geometry=cfg.geometry,
        n=len(inst.geometry),
        seed=cfg.seed,
        kernel=cfg.kernel,
        kappa=cfg.kappa,
        kappa_h=cfg.kappa_h,
        eta=cfg.eta,
        criterion=cfg.criterion,
        n_min=cfg.n_min,
        eps=cfg.eps,
        workers=cfg.workers,
        format=fmt,
        adm_elements=report.adm_elements,
        dense_elements=report.dense_elements,
        total_elements=report.total_elements,
        bytes_estimate=report.bytes_estimate,
        c_sp=report.c_sp,
        k_max=report.k_max,
        l_max=report.l_max,
        depth_row=report.depth_row,
        depth_col=report.depth_col,
        build_seconds=build_s,
        matvec_mean_s=mean_s,
        matvec_min_s=min_s,
        rel_spec_err=rel_err,
    )


def _formats(cfg: RunConfig) -> list[str]:
    return ["h", "uh"] if cfg.fmt == "both" else [cfg.fmt]


def cmd_gen(args) -> int:
    cfg = _resolve_config(args)
    geometry = _make_geometry(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{cfg.geometry}_{len(geometry)}_{cfg.seed}.txt")
    save_points(geometry, path)
    print(path)
    return 0


def cmd_build(args) -> int:
    cfg = _resolve_config(args)
    os.makedirs(cfg.out, exist_ok=True)
    inst = _build_instance(cfg)
    rows = []
    for fmt in _formats(cfg):
        mat, build_s, report, apply = _build_format(inst, fmt)
        mean_s, min_s, _ = _time_matvec(apply, len(inst.geometry), cfg.seed, cfg.repeats)
        rel = _dense_error(inst, mat)
        rows.append(_metrics_row("build", inst, fmt, report, build_s, mean_s, min_s, rel))
        if fmt == "h":
            dump_structure(mat, os.path.join(cfg.out, "structure_h.csv"))
        else:
            dump_structure_uh(
                mat,
                os.path.join(cfg.out, "structure_uh_bases.csv"),
                os.path.join(cfg.out, "structure_uh_coeffs.csv"),
            )
        print(
            f"{fmt}: n={len(inst.geometry)} build={build_s:.2f}s "
            f"adm={report.adm_elements} dense={report.dense_elements} "
            f"c_sp={report.c_sp} matvec={mean_s:.4f}s"
        )
    write_metrics(os.path.join(cfg.out, "metrics.csv"), rows)
    return 0


def cmd_matvec(args) -> int:
    cfg = _resolve_config(args)
    os.makedirs(cfg.out, exist_ok=True)
    inst = _build_instance(cfg)
    rows = []
    means = {}
    for fmt in _formats(cfg):
        mat, build_s, report, apply = _build_format(inst, fmt)
        mean_s, min_s, _ = _time_matvec(apply, len(inst.geometry), cfg.seed, cfg.repeats)
        means[fmt] = mean_s
        rows.append(_metrics_row("matvec", inst, fmt, report, build_s, mean_s, min_s, None))
        print(f"{fmt}: matvec mean={mean_s:.6f}s min={min_s:.6f}s over {cfg.repeats} repeats")
    if "h" in means and "uh" in means and means["uh"] > 0:
        print(f"h/uh time ratio: {means['h'] / means['uh']:.3f}")
    write_metrics(os.path.join(cfg.out, "metrics.csv"), rows)
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    os.makedirs(cfg.out, exist_ok=True)
    raw = [v for v in args.values.split(",") if v]
    if len(raw) < 2:
        raise ValueError("sweep needs at least 2 values")
    values = [int(float(v)) if args.axis == "n" else float(v) for v in raw]
    rows = []
    for value in values:
        sub_cfg = replace(cfg)
        setattr(sub_cfg, {"eta": "eta", "eps": "eps", "n": "n"}[args.axis], value)
        inst = _build_instance(sub_cfg)
        for fmt in _formats(sub_cfg):
            mat, build_s, report, apply = _build_format(inst, fmt)
            mean_s, min_s, _ = _time_matvec(apply, len(inst.geometry), sub_cfg.seed, sub_cfg.repeats)
            rows.append(_metrics_row("sweep", inst, fmt, report, build_s, mean_s, min_s, None))
            print(
                f"{args.axis}={value} {fmt}: adm={report.adm_elements} "
                f"total={report.total_elements} build={build_s:.2f}s"
            )
    write_metrics(os.path.join(cfg.out, "metrics.csv"), rows)
    if args.axis == "n":
        slope_lines = []
        for fmt in _formats(cfg):
            pts = [(r.n, r.adm_elements) for r in rows if r.format == fmt]
            xs = np.log([n * math.log(n) for n, _ in pts])
            ys = np.log([a for _, a in pts])
            slope = float(np.polyfit(xs, ys, 1)[0]) if len(set(xs)) > 1 else math.nan
            slope_lines.append((fmt, slope))
            print(f"{fmt}: log-log slope of adm_elements vs N*log(N) = {slope:.3f}")
        with open(os.path.join(cfg.out, "slopes.csv"), "w", encoding="utf-8") as fh:
            fh.write("format,slope_adm_vs_nlogn\n")
            for fmt, slope in slope_lines:
                fh.write(f"{fmt},{slope!r}\n")
    if cfg.plot:
        plot_rows = [
            {
                "format": r.format,
                "eta": r.eta,
                "eps": r.eps,
                "n": r.n,
                "adm_elements": r.adm_elements,
                "total_elements": r.total_elements,
            }
            for r in rows
        ]
        plots.save_sweep_figure(plot_rows, args.axis, os.path.join(cfg.out, f"sweep_{args.axis}.png"))
    return 0


def cmd_verify(args) -> int:
    cfg = _resolve_config(args)
    os.makedirs(cfg.out, exist_ok=True)
    inst = _build_instance(cfg)
    n = len(inst.geometry)
    instance = f"{cfg.geometry}-n{n}-seed{cfg.seed}-eps{cfg.eps:g}"
    failed = False
    error_rows = []
    verify_rows = []
    built = {}
    for fmt in _formats(cfg):
        mat, build_s, report, apply = _build_format(inst, fmt)
        built[fmt] = mat
        if n <= DENSE_ERROR_CAP:
            rep = compression_error(inst.oracle.to_dense(cap=DENSE_ERROR_CAP**2), mat, seed=cfg.seed)
            error_rows.append((instance, fmt, rep.rel_spectral_estimate, rep.iterations))
            verify_rows.append(
                _metrics_row("verify", inst, fmt, report, build_s, None, None, rep.rel_spectral_estimate)
            )
            print(f"{fmt}: rel spectral error estimate {rep.rel_spectral_estimate:.3e}")
        else:
            error_rows.append((instance, fmt, None, 0))
            verify_rows.append(_metrics_row("verify", inst, fmt, report, build_s, None, None, None))
            print(f"warning: n={n} exceeds dense cap {DENSE_ERROR_CAP}, skipping {fmt} error estimate")
    if "h" in built and n <= DENSE_THEOREM_CAP:
        from .hmatrix import to_dense

        a_h = to_dense(built["h"], cap=DENSE_THEOREM_CAP**2)
        uh = compress_h_to_uh(built["h"], cfg.eps / 3.0)
        lhs, rhs, holds = theorem_51_check(a_h, uh)
        print(f"compression error bound: lhs={lhs:.3e} rhs={rhs:.3e} holds={holds}")
        with open(os.path.join(cfg.out, "theorem.csv"), "a", encoding="utf-8") as fh:
            if fh.tell() == 0:
                fh.write("instance,lhs,rhs,holds\n")
            fh.write(f"{instance},{lhs!r},{rhs!r},{holds}\n")
        failed = failed or not holds
    write_error_rows(os.path.join(cfg.out, "errors.csv"), error_rows)
    write_metrics(os.path.join(cfg.out, "metrics.csv"), verify_rows)
    if cfg.plot:
        plot_rows = [
            {
                "format": r.format,
                "rel_spec_err": r.rel_spec_err,
                "total_elements": r.total_elements,
            }
            for r in verify_rows
        ]
        plots.save_verify_figure(plot_rows, os.path.join(cfg.out, "verify.png"))
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, CapacityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment harness.

Subcommands: ``simulate`` (write phantom, motion truth and sinograms),
``reconstruct`` (linear solve at fixed motion), ``gn`` (full Gauss-Newton
study over the configured solver variants), ``check`` (numerical condition
checkers), ``bench`` (assembly/mat-vec timings per kernel backend) and
``cache`` (build/inspect/clear the projection-matrix cache).

Exit codes: 0 success, 1 usage or configuration error, 2 data/geometry
mismatch, 3 solver failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np
from filelock import FileLock

from . import kernels
from .config import load_config, profile_config
from .errors import GeometryMismatchError, SolverError
from .forward import (
    ForwardOperator,
    add_noise,
    forward_apply,
    read_sinogram,
    rel_error,
    sinogram_to_csv,
    sinogram_to_pgm,
    write_sinogram,
)
from .geometry import Image, write_image, write_pgm
from .motion import MotionParams
from .radon import assemble_projection, load_or_assemble, read_projection_cache
from .theory import (
    StretchProfile,
    bolker_bound_check,
    deformed_support_eps,
    visibility_check,
)
from .varpro import gauss_newton, solve_linear_subproblem

_VARIANT_LABELS = {"lsqr": "GN-LSQR", "wgcv": "GN-HyBR", "optimal": "GN-HyBR-opt"}


def _fmt(v):
    return "" if (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _projections(cfg):
    cache = cfg.cache_path or None
    return load_or_assemble(cfg.grid(), cfg.scan(), cfg.oversample, cache)


def _write_gamma_csv(path, angles, gamma):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("angle_index,phi_rad,gamma\n")
        for i, (phi, g) in enumerate(zip(angles, gamma)):
            fh.write(f"{i},{repr(float(phi))},{repr(float(g))}\n")


def _read_gamma_csv(path, n_angles):
    gammas = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header.startswith("angle_index"):
            raise ValueError(f"{path}: unexpected gamma CSV header")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) >= 3:
                gammas.append(float(parts[2]))
    if len(gammas) != n_angles:
        raise GeometryMismatchError(
            f"{path}: has {len(gammas)} gammas, scan needs {n_angles}"
        )
    return np.asarray(gammas)


def _check_sinogram(cfg, sino):
    scan = cfg.scan()
    if not (
        np.array_equal(sino.scan.angles, scan.angles)
        and np.array_equal(sino.scan.radii, scan.radii)
    ):
        raise GeometryMismatchError("sinogram geometry does not match the configuration")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, args):
    out = args.out
    projections = _projections(cfg)
    phantom = cfg.phantom()
    motion = cfg.motion_true()
    op = ForwardOperator(projections, motion)
    sino_true = forward_apply(op, phantom)
    sino_noisy = add_noise(sino_true, cfg.noise_level, cfg.seed)

    write_image(phantom, os.path.join(out, "truth_image.img"))
    write_pgm(phantom, os.path.join(out, "truth_image.pgm"))
    _write_gamma_csv(os.path.join(out, "gamma_true.csv"), cfg.scan().angles, motion.gammas)
    write_sinogram(sino_true, os.path.join(out, "sinogram_true.sin"))
    write_sinogram(sino_noisy, os.path.join(out, "sinogram_noisy.sin"))
    sinogram_to_csv(sino_noisy, os.path.join(out, "sinogram_noisy.csv"))
    sinogram_to_pgm(sino_noisy, os.path.join(out, "sinogram_noisy.pgm"))
    achieved = (
        np.linalg.norm(sino_noisy.values - sino_true.values)
        / np.linalg.norm(sino_true.values)
        if np.linalg.norm(sino_true.values) > 0
        else 0.0
    )
    print(f"simulate: wrote {out}/sinogram_noisy.sin "
          f"(noise level {achieved:.6f}, seed {cfg.seed})")
    return 0


def cmd_reconstruct(cfg, args):
    out = args.out
    sino = read_sinogram(args.sinogram)
    _check_sinogram(cfg, sino)
    if args.gamma == "zero":
        gammas = np.zeros(cfg.n_angles)
    elif args.gamma == "truth":
        gammas = cfg.gamma_true()
    else:
        gammas = _read_gamma_csv(args.gamma, cfg.n_angles)
    motion = MotionParams(gammas, cfg.baseline_c)
    projections = _projections(cfg)
    phantom = cfg.phantom()
    f, report = solve_linear_subproblem(projections, motion, sino, cfg.gn,
                                        truth=phantom.values)
    image = Image(cfg.grid(), f)
    write_image(image, os.path.join(out, "recon.img"))
    write_pgm(image, os.path.join(out, "recon.pgm"))
    report.to_csv(os.path.join(out, "solve_report.csv"))
    eps_f = rel_error(f, phantom.values)
    print(f"reconstruct: solver={cfg.gn.inner_solver} iters={report.n_iters} "
          f"eps_f={eps_f:.4f} ({report.stop_reason})")
    return 0


def cmd_gn(cfg, args):
    out = args.out
    sino = read_sinogram(args.sinogram)
    _check_sinogram(cfg, sino)
    projections = _projections(cfg)
    phantom = cfg.phantom()
    gamma_true = cfg.gamma_true()
    gamma0 = MotionParams(np.zeros(cfg.n_angles), cfg.baseline_c)

    reports = {}
    for variant in cfg.variants:
        gn_cfg = replace(cfg.gn, inner_solver=variant)
        reports[variant] = gauss_newton(
            projections, sino, gamma0, gn_cfg, truth=(phantom.values, gamma_true)
        )

    with open(os.path.join(out, "gn_table.csv"), "w", encoding="ascii") as fh:
        fh.write("variant,gn_iter,eps_gamma,eps_f,lambda\n")
        for variant in cfg.variants:
            label = _VARIANT_LABELS[variant]
            for rec in reports[variant].iterations:
                lam = "" if variant == "lsqr" else _fmt(rec.lam)
                fh.write(
                    f"{label},{rec.index},{_fmt(rec.eps_gamma)},"
                    f"{_fmt(rec.eps_f)},{lam}\n"
                )

    angles = cfg.scan().angles
    with open(os.path.join(out, "gamma_trajectory.csv"), "w", encoding="ascii") as fh:
        cols = ",".join(f"gamma_{_VARIANT_LABELS[v].lower().replace('-', '_')}"
                        for v in cfg.variants)
        fh.write(f"angle_index,phi_rad,gamma_true,{cols}\n")
        for i in range(cfg.n_angles):
            est = ",".join(repr(float(reports[v].final_gamma[i])) for v in cfg.variants)
            fh.write(f"{i},{repr(float(angles[i]))},{repr(float(gamma_true[i]))},{est}\n")

    for variant in cfg.variants:
        label = _VARIANT_LABELS[variant].lower().replace("-", "_")
        image = Image(cfg.grid(), reports[variant].final_image)
        write_image(image, os.path.join(out, f"recon_{label}.img"))
        write_pgm(image, os.path.join(out, f"recon_{label}.pgm"))

    for variant in cfg.variants:
        rep = reports[variant]
        final_eps = (
            rel_error(rep.final_gamma, gamma_true)
            if np.linalg.norm(gamma_true) > 0
            else math.nan
        )
        print(f"gn: {_VARIANT_LABELS[variant]}: final eps_gamma={final_eps:.4f} "
              f"({rep.stop_reason})")
    return 0


def cmd_check(cfg, args):
    out = args.out
    phantom = cfg.phantom()
    gamma_true = cfg.gamma_true()
    a = 1.0 + gamma_true
    eps, k_min_phi2 = deformed_support_eps(
        phantom, float(a.min()), float(a.max()), cfg.baseline_c, pad_pixels=1
    )
    angles = cfg.scan().angles
    profile = StretchProfile(angles, a, cfg.baseline_c, eps)
    bolker = bolker_bound_check(profile)
    visible = visibility_check(angles, profile, k_min_phi2)
    lines = [
        f"support margin eps = {eps:.6f}",
        f"stretch bound |a'/a| <= {bolker.bound:.6f}",
        f"max |a'/a| on grid  = {bolker.max_ratio:.6f} "
        f"(worst angle index {bolker.worst_angle_index})",
        f"margin              = {bolker.margin:.6f}",
        f"stretch-rate condition holds: {bolker.holds}",
        f"deformed support min x2 = {k_min_phi2:.6f}",
        f"visibility condition holds: {visible}",
    ]
    report = "\n".join(lines) + "\n"
    with open(os.path.join(out, "theory_report.txt"), "w", encoding="ascii") as fh:
        fh.write(report)
    print(report, end="")
    return 0


def cmd_bench(cfg, args):
    out = args.out
    lines = [f"bench: grid {cfg.n_side}, {cfg.n_angles} angles, {cfg.n_radii} radii"]
    results = {}
    for name in kernels.available_backends():
        prev = kernels.set_backend(name)
        try:
            # warm-up pass compiles the numba kernels outside the timers
            assemble_projection(cfg.grid(), cfg.scan(), 0, cfg.oversample)
            t0 = time.perf_counter()
            pset = load_or_assemble(cfg.grid(), cfg.scan(), cfg.oversample, None)
            t_assemble = time.perf_counter() - t0

            op = ForwardOperator(pset, cfg.motion_true())
            f = cfg.phantom().values
            op.apply(f)
            t0 = time.perf_counter()
            for _ in range(100):
                op.apply(f)
            t_matvec = (time.perf_counter() - t0) / 100.0
            sparsity = float(np.mean([m.sparsity() for m in pset.matrices]))
            results[name] = (t_assemble, t_matvec, sparsity)
        finally:
            kernels.set_backend(prev)

    for name, (t_assemble, t_matvec, sparsity) in results.items():
        lines.append(
            f"backend {name}: assembly {t_assemble:.3f} s for {cfg.n_angles} "
            f"angles; cached mat-vec {t_matvec * 1e3:.3f} ms "
            f"(mean of 100 runs); amortization after "
            f"{t_assemble / t_matvec:.0f} mat-vecs; "
            f"mean per-angle sparsity {sparsity:.4%}"
        )
    if {"numba", "numpy"} <= results.keys():
        lines.append(
            "numba speedup: assembly x"
            f"{results['numpy'][0] / results['numba'][0]:.2f}, "
            f"mat-vec x{results['numpy'][1] / results['numba'][1]:.2f}"
        )
    report = "\n".join(lines) + "\n"
    with open(os.path.join(out, "bench_report.txt"), "w", encoding="ascii") as fh:
        fh.write(report)
    print(report, end="")
    return 0


def cmd_cache(cfg, args):
    path = cfg.cache_path
    if not path:
        raise ValueError("cache command needs a cache path (--cache or config)")
    if args.action == "build":
        _projections(cfg)
        print(f"cache: built {path}")
    elif args.action == "inspect":
        pset = read_projection_cache(path)
        sparsity = float(np.mean([m.sparsity() for m in pset.matrices]))
        nnz = sum(m.nnz for m in pset.matrices)
        print(
            f"cache: {path}: grid {pset.grid.n_side}, extent {pset.grid.extent}, "
            f"{pset.scan.n_angles} angles, {pset.scan.n_radii} radii, "
            f"oversample {pset.oversample}, total nnz {nnz}, "
            f"mean sparsity {sparsity:.4%}"
        )
    elif args.action == "clear":
        if os.path.exists(path):
            os.remove(path)
            print(f"cache: removed {path}")
        else:
            print(f"cache: nothing at {path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser():
    parser = argparse.ArgumentParser(
        prog="patmoco",
        description="Motion-corrected photoacoustic tomography experiments.",
    )
    parser.add_argument("--config", help="configuration file (overrides --profile)")
    parser.add_argument(
        "--profile", choices=("desk", "paper"), default="paper",
        help="built-in configuration profile (default: paper)",
    )
    parser.add_argument("--out", help="output directory (default: from config)")
    parser.add_argument("--cache", help="projection cache path (default: from config)")
    parser.add_argument("--seed", type=int, help="noise seed override")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="write phantom, motion truth and sinograms")

    p = sub.add_parser("reconstruct", help="linear reconstruction at fixed motion")
    p.add_argument("sinogram", help="sinogram file (.sin)")
    p.add_argument(
        "--gamma", default="zero",
        help="'zero', 'truth', or a gamma CSV path (default: zero)",
    )

    p = sub.add_parser("gn", help="Gauss-Newton study over the configured variants")
    p.add_argument("sinogram", help="sinogram file (.sin)")

    sub.add_parser("check", help="evaluate the sufficient-condition checkers")
    sub.add_parser("bench", help="time assembly and mat-vecs per kernel backend")

    p = sub.add_parser("cache", help="manage the projection-matrix cache")
    p.add_argument("action", choices=("build", "inspect", "clear"))
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "gn": cmd_gn,
    "check": cmd_check,
    "bench": cmd_bench,
    "cache": cmd_cache,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = profile_config(args.profile)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.cache:
            cfg = replace(cfg, cache_path=args.cache)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        args.out = cfg.out_dir
        os.makedirs(cfg.out_dir, exist_ok=True)
    except (OSError, ValueError, KeyError) as exc:
        print(f"patmoco: configuration error: {exc}", file=sys.stderr)
        return 1

    # one experiment per output directory at a time
    lock = FileLock(os.path.join(cfg.out_dir, ".patmoco.lock"))
    try:
        with lock:
            return _COMMANDS[args.command](cfg, args)
    except GeometryMismatchError as exc:
        print(f"patmoco: geometry mismatch: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"patmoco: solver failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"patmoco: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

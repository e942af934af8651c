"""Command line driver.

Three subcommands: `convergence` sweeps mesh sizes and writes a CSV of
mean errors and endpoint rates; `tail` estimates the error tail over
repeated noise draws; `mesh` writes a mesh in the plain text format.
Floats are written with 17 significant digits, so output bytes are
reproducible run to run.  Exit codes: 0 success, 2 invalid
configuration, 3 solver failure.  The environment variable
OBSFEM_THREADS caps the worker count for trial-parallel studies
(default 1, fully serial).
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .analysis import estimate_rates, run_study, tail_study
from .mesh import build_disk_mesh, build_square_mesh, mesh_quality, read_mesh_text, write_mesh_text
from .observations import NoiseModel
from .solver import SingularSystemError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _parse_h_list(text: str) -> list[int]:
    """Map a comma-separated list of nominal h values to k = round(1/h)."""
    ks = []
    for part in text.split(","):
        h = float(part)
        if not (0.0 < h <= 0.5):
            raise ValueError(f"mesh parameter h={h} out of range (0, 0.5]")
        ks.append(int(round(1.0 / h)))
    if len(set(ks)) != len(ks):
        raise ValueError("mesh parameters collapse to duplicate sizes")
    return ks


def _noise_from_args(args) -> NoiseModel | None:
    if args.noise == "none":
        return None
    if args.noise == "gaussian":
        if args.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        return NoiseModel.gaussian(args.sigma)
    return NoiseModel.mixture(args.sigma1, args.sigma2, args.p)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", required=True, choices=["square", "disk"])
    p.add_argument("--h", required=True, help="comma-separated nominal mesh sizes, e.g. 0.1,0.05")
    p.add_argument("--i", type=int, default=None, help="observation count exponent: n = round(h^-i)")
    p.add_argument("--n", type=int, default=None, help="explicit observation count (overrides --i)")
    p.add_argument("--noise", choices=["none", "gaussian", "mixture"], default="gaussian")
    p.add_argument("--sigma", type=float, default=2.0, help="gaussian noise standard deviation")
    p.add_argument("--sigma1", type=float, default=1.0, help="mixture component 1 std")
    p.add_argument("--sigma2", type=float, default=10.0, help="mixture component 2 std")
    p.add_argument("--p", type=float, default=0.5, help="mixture probability of component 1")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_convergence(args) -> int:
    model = _noise_from_args(args)
    ks = _parse_h_list(args.h)
    if args.trials < 1:
        raise ValueError("trials must be positive")
    workers = int(os.environ.get("OBSFEM_THREADS", "1"))
    table = run_study(
        args.domain, ks, i=args.i, n=args.n, model=model,
        trials=args.trials, seed=args.seed, workers=workers,
    )
    sigma = model.std if model is not None else 0.0
    lines = ["domain,h,n,i,sigma,seed_count,l2_mean,l2_std,h1_mean,h1_std,lam_l2_mean,"
             "rate_l2_endpoint,rate_h1_endpoint"]
    rows = table.rows
    rate_l2 = rate_h1 = ""
    if len(rows) >= 2:
        hs = [r.h for r in rows]
        rate_l2 = _fmt(estimate_rates(hs, [r.l2_mean for r in rows]).endpoint)
        rate_h1 = _fmt(estimate_rates(hs, [r.h1_mean for r in rows]).endpoint)
    for idx, r in enumerate(rows):
        last = idx == len(rows) - 1
        lines.append(
            ",".join(
                [
                    args.domain,
                    _fmt(r.h),
                    str(r.n),
                    str(args.i) if args.i is not None else "",
                    _fmt(sigma),
                    str(r.trials),
                    _fmt(r.l2_mean),
                    _fmt(r.l2_std),
                    _fmt(r.h1_mean),
                    _fmt(r.h1_std),
                    _fmt(r.lam_l2_mean),
                    rate_l2 if last else "",
                    rate_h1 if last else "",
                ]
            )
        )
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_tail(args) -> int:
    model = _noise_from_args(args)
    ks = _parse_h_list(args.h)
    if len(ks) != 1:
        raise ValueError("tail study takes exactly one mesh size")
    workers = int(os.environ.get("OBSFEM_THREADS", "1"))
    report = tail_study(
        args.domain, ks[0], i=args.i, n=args.n, model=model,
        trials=args.trials, seed=args.seed, workers=workers,
    )
    lines = ["z,survival,log_survival,fit_a,fit_b,r2"]
    if report.degenerate:
        sys.stderr.write("tail study degenerate: all errors identical (no noise?)\n")
    else:
        for z, s in zip(report.z, report.survival):
            lines.append(
                ",".join(
                    [_fmt(z), _fmt(s), _fmt(math.log(s)),
                     _fmt(report.fit_a), _fmt(report.fit_b), _fmt(report.r2)]
                )
            )
    _write(args.out, "\n".join(lines) + "\n")
    sys.stderr.write(
        f"trials={report.trials} median={report.median:.6g} p99={report.p99:.6g}\n"
    )
    return EXIT_OK


def cmd_mesh(args) -> int:
    if args.k < 2:
        raise ValueError("mesh size parameter must be at least 2")
    mesh = build_square_mesh(args.k) if args.domain == "square" else build_disk_mesh(args.k)
    write_mesh_text(mesh, args.out)
    q = mesh_quality(read_mesh_text(args.out))
    sys.stdout.write(
        f"vertices={len(mesh.vertices)} triangles={len(mesh.triangles)} "
        f"boundary={q.boundary_elements} length={q.boundary_length:.12g} "
        f"max_aspect={q.max_aspect:.6g} diameter_ratio={q.diameter_ratio:.6g}\n"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="obsfem")
    sub = parser.add_subparsers(dest="command", required=True)

    p_conv = sub.add_parser("convergence", help="mesh refinement study")
    _add_common(p_conv)
    p_conv.set_defaults(func=cmd_convergence)

    p_tail = sub.add_parser("tail", help="error tail study at one mesh size")
    _add_common(p_tail)
    p_tail.set_defaults(func=cmd_tail)

    p_mesh = sub.add_parser("mesh", help="write a mesh file")
    p_mesh.add_argument("--domain", required=True, choices=["square", "disk"])
    p_mesh.add_argument("--k", type=int, required=True, help="cells per side (square) or rings (disk)")
    p_mesh.add_argument("--out", required=True)
    p_mesh.set_defaults(func=cmd_mesh)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the config code
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except SingularSystemError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``solve``, ``verify`` and ``sweep-n``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .driver import adaptive_solve, export_csv, export_vtk, fit_slope, load_config, truncation_sweep


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    out = cfg.resolved_output_dir()
    res = adaptive_solve(cfg)
    stem = Path(args.config).stem
    csv_path = out / f"{stem}_convergence.csv"
    export_csv(res.record, csv_path)
    if cfg.vtk:
        export_vtk(res.solution, res.mesh, out / f"{stem}_field.vtk")
    rec = res.record
    print(f"N = {rec.N}, f_norm = {rec.f_norm:.6g}, stop reason: {rec.stop_reason}")
    print(f"{'iter':>4} {'tets':>8} {'dofs':>8} {'eps_h':>12} {'eps_N':>10} {'error':>12}")
    for r in rec.rows:
        err = "-" if r["true_error"] is None else f"{r['true_error']:.5e}"
        print(f"{r['iter']:>4} {r['n_tets']:>8} {r['n_dofs']:>8} {r['eps_h']:>12.5e} "
              f"{r['eps_N']:>10.3e} {err:>12}")
    for col in ("true_error", "eps_h"):
        try:
            print(f"slope of {col} over last 4 rows: {fit_slope(rec, col, 4):.3f}")
        except ValueError:
            pass
    print(f"wrote {csv_path}")
    return 0


def _cmd_verify(args) -> int:
    from .checks import run_all
    results = run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    rows = truncation_sweep(cfg, args.nmax)
    print(f"{'N':>3} {'eps_N':>10} {'eps_h':>12} {'error':>12} {'diff_to_nmax':>13}")
    for N, eN, eh, err, diff in rows:
        e = "-" if err is None else f"{err:.5e}"
        print(f"{N:>3} {eN:>10.3e} {eh:>12.5e} {e:>12} {diff:>13.5e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtnmaxwell", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run the adaptive loop")
    s.add_argument("--config", required=True, help="key = value configuration file")
    s.set_defaults(func=_cmd_solve)
    v = sub.add_parser("verify", help="run the oracle and identity checks")
    v.set_defaults(func=_cmd_verify)
    w = sub.add_parser("sweep-n", help="solve on the initial mesh for N = 1..nmax")
    w.add_argument("--config", required=True)
    w.add_argument("--nmax", type=int, required=True)
    w.set_defaults(func=_cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

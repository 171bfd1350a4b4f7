"""Command-line interface: ``penfv {run,study,verify,ref} CONFIG``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 diagnostic identity failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import ops
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .diagnostics import LedgerHook, step_report
from .mesh import build_grid
from .output import write_diagnostics_csv, write_snapshot
from .scheme import BoundaryData, Scheme, SolverError, project_boundary, project_initial, step_count

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IDENTITY = 0, 2, 3, 4

log = logging.getLogger("penfv")


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def cmd_run(args, cfg: RunConfig) -> int:
    grid, mask, params, ext = cfg.build()
    state = project_initial(ext, grid)
    bdata: BoundaryData = project_boundary(ext, grid)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(serialize_config(cfg))
    scheme = Scheme(grid, params, mask, threads=args.threads)
    hook = LedgerHook(params, mask, bdata) if cfg.diagnostics else None
    reports = []
    nsteps = step_count(cfg.t_end, params.dt)
    cur = state
    t0 = time.perf_counter()
    if cfg.snapshot_every:
        write_snapshot(cur, mask, out / f"snapshot_{cur.step:06d}.vtk")
    for _ in range(nsteps):
        new, stats = scheme.advance(cur, bdata)
        if hook is not None:
            reports.append(hook(new, cur, stats))
        cur = new
        if cfg.snapshot_every and cur.step % cfg.snapshot_every == 0:
            write_snapshot(cur, mask, out / f"snapshot_{cur.step:06d}.vtk")
    write_snapshot(cur, mask, out / "final.vtk")
    if hook is not None:
        write_diagnostics_csv(reports, out / cfg.csv_name)
    _say(args, f"{nsteps} steps on n={grid.n} (d={grid.dim}) in {time.perf_counter() - t0:.2f}s; output in {out}")
    failed = [(r.step, f) for r in reports if not r.ok for f in r.failures() or ["sign condition violated"]]
    if cfg.check and failed:
        for step, msg in failed[:10]:
            print(f"step {step}: {msg}", file=sys.stderr)
        return EXIT_IDENTITY
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> int:
    ok = True
    for dim in (2, 3):
        for n in (4, 8, 16):
            rep = ops.check_ibp_identities(build_grid(dim, n, cfg.L), seed=cfg.seed)
            ok &= rep["ok"]
            _say(args, f"operator identities d={dim} n={n}: max residual {rep['max_residual']:.2e} "
                       f"{'PASS' if rep['ok'] else 'FAIL'}")
    grid, mask, params, ext = cfg.build()
    state = project_initial(ext, grid)
    bdata = project_boundary(ext, grid)
    new, stats = Scheme(grid, params, mask, threads=args.threads).advance(state, bdata)
    rep = step_report(new, state, stats, params, mask, bdata)
    for led in rep.ledgers:
        _say(args, f"{led.name}: residual {led.residual:.3e} scale {led.scale:.3e} {'PASS' if led.ok else 'FAIL'}")
    ok &= rep.ok
    return EXIT_OK if ok else EXIT_IDENTITY


def cmd_ref(args, cfg: RunConfig) -> int:
    from .experiments import generate_reference

    spec = cfg.sweep_spec().validate()
    path = Path(cfg.reference) if cfg.reference else Path(cfg.output_dir) / "reference.npz"
    t0 = time.perf_counter()
    generate_reference(spec, path, threads=args.threads)
    _say(args, f"reference n={spec.n_ref} written to {path} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_study(args, cfg: RunConfig) -> int:
    from .experiments import Reference, convergence_study

    spec = cfg.sweep_spec().validate()
    ref = None
    if cfg.reference and Path(cfg.reference).exists():
        ref = Reference.load(cfg.reference)
    table = convergence_study(spec, ref, output_dir=cfg.output_dir, threads=args.threads)
    _say(args, table.to_text())
    return EXIT_SOLVER if any(r.get("failed") for r in table.rows) else EXIT_OK


COMMANDS = {"run": cmd_run, "study": cmd_study, "verify": cmd_verify, "ref": cmd_ref}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penfv", description="Penalized finite-volume Navier-Stokes-Fourier solver")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="INI configuration file")
    p.add_argument("--output-dir", default=None, help="override [output] dir")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--threads", type=int, default=1, help="threads for residual assembly")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

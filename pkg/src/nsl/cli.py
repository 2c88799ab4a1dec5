"""Command line: ``nsl run | converge | compare-sl | vlasov-ref``.

Exit status 0 on success, 2 for configuration errors and 1 for runtime
failures.  Failures also print a one-line JSON record on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import harness
from .harness import ConfigError, RunConfig
from .scenarios import SCENARIO_NAMES, grid_mass, vlasov_reference

log = logging.getLogger("nsl")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _option(text):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def _common(p):
    p.add_argument("--scenario", choices=SCENARIO_NAMES)
    p.add_argument("--config", help="TOML or JSON config (a run manifest also works)")
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory (default $NSL_OUT_DIR or ./nsl_out)")
    p.add_argument("--option", "-O", action="append", type=_option, default=[],
                   metavar="KEY=VALUE", help="scenario option, e.g. -O T=1.0")
    p.add_argument("--sigma", type=float, help="diffusion coefficient (advection-diffusion cases)")
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--init-epochs", type=int)
    p.add_argument("--iter-epochs", type=int)
    p.add_argument("--nc", type=int, dest="n_collocation", help="collocation points per epoch")
    p.add_argument("--layers", type=_int_list, help="hidden widths, e.g. 30,30")
    p.add_argument("--activation", choices=("tanh", "sin", "hat"))
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--natural-gradient", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--adaptive", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--adaptive-sigmas", type=_float_list)
    p.add_argument("--ntau", type=int, dest="n_tau")
    p.add_argument("--nprobe", type=int, dest="n_probe")
    p.add_argument("--nx", type=_int_list)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="nsl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("run", help="solve one scenario with the neural scheme")
    _common(p)
    p.add_argument("--nt", type=int)
    p = sub.add_parser("converge", help="error against the number of time steps")
    _common(p)
    p.add_argument("--nt", type=_int_list, required=True, help="comma-separated step counts")
    p.add_argument("--solver", choices=("nsl", "classical"), default="nsl")
    p = sub.add_parser("compare-sl", help="classical against neural semi-Lagrangian")
    _common(p)
    p.add_argument("--dims", type=_int_list, required=True)
    p.add_argument("--nt", type=int)
    p.add_argument("--classical-only", action="store_true")
    p = sub.add_parser("vlasov-ref", help="grid reference for the Vlasov scenario")
    p.add_argument("--nx", type=int, default=256, help="points per phase-space axis")
    p.add_argument("--nt", type=int, default=900, help="steps to t = 4.5")
    p.add_argument("--times", type=_float_list, default=[1.5, 3.0, 4.5])
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve(args, n_t=None) -> RunConfig:
    rc = RunConfig.from_file(args.config) if args.config else RunConfig()
    opts = dict(rc.options)
    opts.update(dict(args.option))
    nx = args.nx[0] if args.nx and len(args.nx) == 1 else None
    rc = rc.merged(scenario=args.scenario, dim=args.dim, seed=args.seed, threads=args.threads,
                   out=args.out, sigma=args.sigma, preset=args.preset, n_t=n_t,
                   init_epochs=args.init_epochs, iter_epochs=args.iter_epochs,
                   n_collocation=args.n_collocation, layers=args.layers,
                   activation=args.activation, learning_rate=args.learning_rate,
                   natural_gradient=args.natural_gradient, adaptive=args.adaptive,
                   adaptive_sigmas=args.adaptive_sigmas, n_tau=args.n_tau, n_probe=args.n_probe,
                   n_x=nx)
    rc.options = opts
    return rc.validated()


def _limits(threads):
    # single-threaded BLAS is the bit-reproducibility reference
    return threadpool_limits(limits=int(threads or os.cpu_count() or 1))


def out_dir(value) -> Path:
    path = Path(value or os.environ.get("NSL_OUT_DIR") or "nsl_out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args, argv):
    rc = resolve(args, n_t=args.nt)
    out = out_dir(rc.out)
    with _limits(rc.threads):
        res = harness.execute(rc, checkpoint_dir=out / "checkpoints")
    harness.write_run(res, rc, out, argv)
    for step, t, rep in res.errors:
        print(f"step {step:4d}  t={t:.6g}  e_l2={rep.e_l2:.3e}  e_linf={rep.e_linf:.3e}")
    for row in res.volumes:
        print(f"step {row[0]:4d}  volume={row[2]:.6f}  exact={row[3]:.6f}  rel={row[4]:.3%}")
    if not res.trajectory.complete:
        raise RuntimeError(res.trajectory.error)
    return EXIT_OK


def cmd_converge(args, argv):
    rc = resolve(args)
    out = out_dir(rc.out)
    with _limits(rc.threads):
        rows, slope = harness.converge(rc, args.nt, out, solver=args.solver)
    for n, e2, ei, ms in rows:
        print(f"n_t={n:5d}  e_l2={e2:.3e}  e_linf={ei:.3e}  ({ms / 1e3:.1f} s)")
    print(f"slope {slope:.4f}")
    return EXIT_OK


def cmd_compare(args, argv):
    rc = resolve(args, n_t=args.nt)
    if not args.nx:
        raise ConfigError("compare-sl needs --nx (one value or one per dimension)")
    out = out_dir(rc.out)
    with _limits(rc.threads):
        rows = harness.compare(rc, args.dims, args.nx, out, run_nsl=not args.classical_only)
    for r in rows:
        err = "" if r[7] is None else f"e_l2={r[7]:.3e}  e_linf={r[8]:.3e}"
        print(f"d={r[2]}  {r[3]:9s}  {r[10]:5s}  {err} {r[11]}".rstrip())
    return EXIT_OK


def cmd_vlasov(args, argv):
    if args.nx < 4 or args.nt < 1:
        raise ConfigError("--nx must be >= 4 and --nt >= 1")
    out = out_dir(args.out)
    with _limits(args.threads):
        snaps = vlasov_reference(args.nx, args.nt, 4.5, tuple(args.times))
    rows = []
    for t in sorted(snaps):
        snaps[t].dump(out / f"vlasov_t{t:.3f}.grid")
        rows.append((t, grid_mass(snaps[t])))
    harness.write_csv(out / "vlasov_mass.csv", ("t", "mass"), rows)
    for t, m in rows:
        print(f"t={t:.3f}  mass={m:.12f}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "converge": cmd_converge, "compare-sl": cmd_compare,
            "vlasov-ref": cmd_vlasov}


def _fail(kind, message, code):
    print(json.dumps({"status": "error", "kind": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except Exception as exc:  # anything else is a runtime failure
        log.debug("run failed", exc_info=True)
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())

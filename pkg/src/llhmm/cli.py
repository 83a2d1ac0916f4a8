"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import contextmanager

import numpy as np

from . import harness, kernels
from .cell import solve_cell
from .corrector import corrector_field
from .errors import ConfigInvalid, LLHMMError, NumericalError
from .homogenized import HomogenizedOperator
from .micro import LLState, StepControl, UnitObserver, max_stable_dt, restrict_initial_data, solve_window
from .presets import get_coefficient, get_macro_field
from .snapshot import write_snapshot
from .upscaling import MODELS, AveragingWindow, MicroSpec, homogenized_tensor, upscale_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


@contextmanager
def _output(path, binary=False):
    if path in (None, "-"):
        yield sys.stdout.buffer if binary else sys.stdout
    else:
        with open(path, "wb" if binary else "w", newline=None if binary else "") as fh:
            yield fh


def _fmt(v) -> str:
    return format(float(v), ".17g")


def cmd_kernel(args):
    K = kernels.build(kernels.KernelSpec(args.p, args.q, args.family))
    mom = K.moments()
    target = np.eye(1, K.p + 1)[0]
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "q", "family", "j", "c_j", "moment_r", "residual_r"])
        for j in range(K.p + 1):
            w.writerow([K.p, K.q, K.family, j, _fmt(K.coeffs[j]), _fmt(mom[j]),
                        _fmt(mom[j] - target[j])])


def cmd_cell(args):
    a = get_coefficient(args.coefficient, args.dim)
    sol = solve_cell(a, args.n, min_points=4)
    div = sol.divergence_g()
    diag = {
        "coefficient": args.coefficient, "dim": args.dim, "n": args.n,
        "AH": sol.AH.tolist(), "asymmetry": sol.asymmetry,
        "cg_iterations": list(sol.iterations), "cg_residuals": list(sol.residuals),
        "max_divergence": float(np.max(np.abs(div))),
    }
    with _output(args.out) as fh:
        if args.format == "jsonl":
            fh.write(json.dumps(diag) + "\n")
            return
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "k", "AH_jk", "asymmetry", "cg_iterations", "cg_residual", "max_divergence"])
        for j in range(args.dim):
            for k in range(args.dim):
                w.writerow([j, k, _fmt(sol.AH[j, k]), _fmt(sol.asymmetry), sol.iterations[k],
                            _fmt(sol.residuals[k]), _fmt(diag["max_divergence"])])


def cmd_corrector(args):
    a = get_coefficient(args.coefficient, args.dim)
    corr = corrector_field(a, args.n, args.alpha, args.jmax)
    mags = np.linalg.norm(corr.chi_modes, axis=1)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "omega_j", "abs_chi_j"])
        for j, (om, c) in enumerate(zip(corr.basis.omegas, mags)):
            w.writerow([j, _fmt(om), _fmt(c)])
    logging.info("truncation error %.3e, clipped %.3e", corr.truncation_error, corr.basis.clipped)


def cmd_micro(args):
    spec = MicroSpec(args.epsilon, args.alpha, args.dim, args.coefficient, args.m_init,
                     args.points_per_period, args.scheme, args.cfl)
    grid = spec.grid()
    tensor = None
    if args.homogenized:
        tensor = homogenized_tensor(spec.coefficient, spec.dim, 2048 if spec.dim == 1 else 256)
        op = HomogenizedOperator(grid, tensor)
    else:
        from .grid import DiffusionOperator
        op = DiffusionOperator(grid, spec.coef())
    m0 = restrict_initial_data(get_macro_field(spec.m_init, spec.dim), grid)
    dt = args.eta / np.ceil(args.eta / max_stable_dt(op, args.cfl) - 1e-9)
    ctl = StepControl(dt, args.cfl, args.scheme)
    unit = UnitObserver()
    observers = [unit]
    snaps = []
    if args.out:
        every = max(1, args.every)
        count = [0]

        def record(t, m, Lm):
            if count[0] % every == 0:
                snaps.append((t, m.copy()))
            count[0] += 1

        observers.append(record)
    final = solve_window(LLState(0.0, m0, args.alpha, op), args.eta, ctl, observers)
    if args.out:
        if snaps[-1][0] != final.t:
            snaps.append((final.t, final.m))
        with _output(args.out, binary=True) as fh:
            for t, m in snaps:
                write_snapshot(fh, grid, t, m, tensor)
    print(f"N={grid.n} dt={_fmt(dt)} t={_fmt(final.t)} max_unit_deviation={unit.max_deviation:.3e}",
          file=sys.stderr)


def _window(args):
    k = [int(x) for x in args.kernel.split(",")]
    if len(k) != 4:
        raise ConfigInvalid(["kernel: expected px,qx,pt,qt"])
    return AveragingWindow(args.mu, args.eta, *k)


def cmd_upscale(args):
    spec = MicroSpec(args.epsilon, args.alpha, args.dim, args.coefficient, args.m_init,
                     args.points_per_period, args.scheme, args.cfl, reference=args.reference)
    models = MODELS if args.model == "all" else (args.model,)
    reports = upscale_all(spec, _window(args), models)
    with _output(args.out) as fh:
        harness.write_csv(reports, fh)


def cmd_sweep(args):
    if bool(args.config) == bool(args.preset):
        raise ConfigInvalid(["exactly one of --config or --preset is required"])
    if args.config:
        cfgs = [harness.load_config(args.config)]
    else:
        cfgs = harness.get_preset(args.preset, args.large)
    out = args.out or cfgs[0].output
    reports = harness.run_sweep(cfgs, jobs=args.jobs)
    with _output(out) as fh:
        harness.write_csv(reports, fh)
    if args.preset and args.check:
        failed = 0
        for c in harness.check_preset(args.preset, reports):
            print(f"[{'PASS' if c.passed else 'FAIL'}] {c.label} {c.detail}", file=sys.stderr)
            failed += not c.passed
        if failed:
            return 1
    bad = [r for r in reports if r.status != "ok"]
    if bad:
        print(f"{len(bad)} of {len(reports)} rows failed", file=sys.stderr)


def cmd_fit(args):
    reports = harness.load(args.csv)
    match = {"model": args.model}
    for key in ("alpha", "mu", "eta", "epsilon"):
        v = getattr(args, key)
        if v is not None:
            match[key] = harness.parse_number(v)
    for key in ("px", "qx", "pt", "qt"):
        v = getattr(args, key)
        if v is not None:
            match[key] = v
    rows = [r for r in harness.select(reports, **match) if r.status == "ok"]
    pts = [(getattr(r, args.x), r.error) for r in rows]
    window = None
    if args.xmin is not None or args.xmax is not None:
        window = (harness.parse_number(args.xmin or "0"), harness.parse_number(args.xmax or "inf"))
    fit = harness.fit_rate(pts, window, abscissa=args.x)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "abscissa", "slope", "intercept", "r2", "points", "clamped"])
        w.writerow([args.model, fit.abscissa, _fmt(fit.slope), _fmt(fit.intercept), _fmt(fit.r2),
                    fit.points, fit.clamped])


def _micro_args(p, upscale=False):
    p.add_argument("--epsilon", type=harness.parse_number, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=1.5e-4)
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--coefficient", default=None)
    p.add_argument("--m-init", dest="m_init", default=None)
    p.add_argument("--points-per-period", dest="points_per_period", type=int, default=8)
    p.add_argument("--scheme", default="rk4_project", choices=("rk4_project", "imex_midpoint"))
    p.add_argument("--cfl", type=float, default=0.25)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="llhmm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="kernel coefficients and moment residuals (CSV)")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--family", default="one_sided", choices=kernels.FAMILIES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("cell", help="homogenized tensor and cell-solve diagnostics")
    p.add_argument("--coefficient", default=None)
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--format", default="csv", choices=("csv", "jsonl"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_cell)

    p = sub.add_parser("corrector", help="cell spectrum and corrector modes (CSV)")
    p.add_argument("--coefficient", default=None)
    p.add_argument("--dim", type=int, default=1, choices=(1, 2))
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--jmax", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_corrector)

    p = sub.add_parser("micro", help="one micro window with optional binary snapshots")
    _micro_args(p)
    p.add_argument("--every", type=int, default=1, help="snapshot every k steps")
    p.add_argument("--homogenized", action="store_true",
                   help="integrate the constant-tensor equation on the same grid")
    p.set_defaults(func=cmd_micro)

    p = sub.add_parser("upscale", help="one upscaling point (CSV rows per model)")
    _micro_args(p)
    p.add_argument("--mu", type=float, default=0.03)
    p.add_argument("--kernel", default="5,7,5,7", help="px,qx,pt,qt")
    p.add_argument("--model", default="all", choices=MODELS + ("all",))
    p.add_argument("--reference", default="consistent", choices=("consistent", "continuum"))
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("sweep", help="parameter sweep from a config file or preset")
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(harness.PRESETS))
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--large", action="store_true", help="full-size ladders for 2D presets")
    p.add_argument("--check", action="store_true", help="evaluate the preset's qualitative checks")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="log-log rate fit over sweep CSV rows")
    p.add_argument("csv")
    p.add_argument("--model", default="M1", choices=MODELS)
    p.add_argument("--x", default="epsilon", choices=("epsilon", "mu", "eta"))
    p.add_argument("--xmin")
    p.add_argument("--xmax")
    for key in ("alpha", "mu", "eta", "epsilon"):
        p.add_argument(f"--{key}")
    for key in ("px", "qx", "pt", "qt"):
        p.add_argument(f"--{key}", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)
    return ap


def _fill_defaults(args):
    if getattr(args, "coefficient", "x") is None:
        args.coefficient = "paper_1d" if args.dim == 1 else "paper_2d"
    if getattr(args, "m_init", "x") is None:
        args.m_init = "helix" if args.dim == 1 else "helix2d"


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _fill_defaults(args)
    try:
        return args.func(args) or EXIT_OK
    except ConfigInvalid as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LLHMMError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

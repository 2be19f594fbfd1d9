"""Command-line front end: ``fujitalab {solve,verify,rate,kernels,exponents}``.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure, 4 a check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .core import ConfigError, ProblemParams, critical_exponents, make_tent_datum, u_h
from .kernels import KernelEvaluator
from .solver import SolverError, run
from .verify import Regime, VerificationError, classify_regime, fit_rate, run_verification

log = logging.getLogger("fujitalab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

# coarser runs cannot resolve the kink of the datum well enough for the slack study
VERIFY_MAX_DX = 0.1
VERIFY_MAX_DT = 0.05

QUANTITIES = ("D", "Dx", "delta", "E", "W", "usub", "usup", "uplus", "cminus", "cplus", "tail", "uh")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="parallel runs in a sweep")
    parser.add_argument("--figures", action="store_true", help="also render PNG figures")
    parser.add_argument("--inject-spike", action="store_true", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fujitalab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "integrate the PDE and export frames"),
                            ("verify", "solve and run every inequality/residual check"),
                            ("rate", "sweep p and fit the deviation rate")):
        _common(sub.add_parser(name, help=help_text))
    k = sub.add_parser("kernels", help="tabulate a closed-form quantity on an (x, t) lattice")
    _common(k)
    k.add_argument("--p", type=str, help="exponent (overrides the config file)")
    k.add_argument("--quantity", required=True, choices=QUANTITIES)
    k.add_argument("--x", default="-5:5:101", help="start:stop:count (write --x=-5:5:101 when start is negative)")
    k.add_argument("--t", default="1", help="comma-separated times")
    e = sub.add_parser("exponents", help="print the transitional / blow-up exponent table")
    e.add_argument("--nmax", type=int, default=10)
    e.add_argument("--out", type=Path)
    return parser


def _need_config(args) -> Path:
    if args.config is None:
        raise ConfigError("config", "--config is required for this command")
    return args.config


def cmd_solve(args) -> int:
    spec = io.load_run_spec(_need_config(args))
    result = run(spec.datum, spec.params, spec.config, domain_tol=spec.domain_tol)
    out = args.out
    io.write_frames(result, out)
    io.write_deviation(result, out / "deviation.csv")
    io.write_diagnostics(result.diagnostics, out / "diagnostics.txt")
    if args.figures:
        from . import plotting

        ev = KernelEvaluator(spec.datum, spec.params)
        plotting.plot_deviation(result, out / "deviation.png", ev)
        plotting.plot_profiles(result, out / "profiles.png")
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = io.load_run_spec(_need_config(args))
    cfg = spec.config
    if cfg.dx > VERIFY_MAX_DX or cfg.dt > VERIFY_MAX_DT:
        raise ConfigError("dx" if cfg.dx > VERIFY_MAX_DX else "dt",
                          f"grid below the refinement floor (need dx <= {VERIFY_MAX_DX}, dt <= {VERIFY_MAX_DT}); "
                          "refine the grid so the three-level slack study is meaningful")
    try:
        report, result = run_verification(spec.datum, spec.params, cfg, domain_tol=spec.domain_tol,
                                          spike=args.inject_spike)
    except VerificationError as exc:
        raise ConfigError("output_times", str(exc)) from None
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "verification_report.json").write_text(report.to_json() + "\n")
    io.write_deviation(result, out / "deviation.csv")
    io.write_diagnostics(result.diagnostics, out / "diagnostics.txt")
    if args.figures:
        from . import plotting

        plotting.plot_deviation(result, out / "deviation.png", KernelEvaluator(spec.datum, spec.params))
    for rec in report.records:
        print(f"{'PASS' if rec.passed else 'FAIL'}  {rec.check:32s} worst={io.fmt(rec.worst_margin)}")
    return EXIT_OK if report.passed else EXIT_CHECK


def _sweep_one(p: float, sweep: io.SweepSpec, out: Path, figures: bool):
    params = ProblemParams(p)
    result = run(sweep.datum, params, sweep.config, domain_tol=sweep.domain_tol)
    sub = out / f"p_{p:.10g}"
    sub.mkdir(parents=True, exist_ok=True)
    io.write_deviation(result, sub / "deviation.csv")
    io.write_diagnostics(result.diagnostics, sub / "diagnostics.txt")
    fit = fit_rate(result.deviation, sweep.rate_window, p)
    regime = classify_regime(p, sweep.band)
    envelope_ok = True
    if regime.regime is Regime.LIAPUNOV_STABLE:
        ev = KernelEvaluator(sweep.datum, params)
        rows = []
        for t, dev in result.deviation:
            if t < max(2.0, sweep.rate_window[0]):
                continue
            lo = float(ev.c_minus(0.0, t))
            hi = float(np.max(ev.W(result.grid, t)))
            ok = lo <= dev <= hi
            envelope_ok &= ok
            rows.append((t, lo, dev, hi, int(ok)))
        io.write_rows(sub / "envelope.csv", ("t", "c_minus_0", "sup_deviation", "sup_W", "inside"), rows)
    if figures:
        from . import plotting

        plotting.plot_deviation(result, sub / "deviation.png")
    return (p, fit.predicted_slope, fit.slope, fit.r_squared, regime.regime.value), envelope_ok


def cmd_rate(args) -> int:
    sweep = io.load_sweep_spec(_need_config(args))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_sweep_one, p, sweep, out, args.figures) for p in sweep.p_values]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_sweep_one(p, sweep, out, args.figures) for p in sweep.p_values]
    rows = [o[0] for o in outcomes]
    io.write_rows(out / "rate_table.csv", ("p", "predicted_slope", "fitted_slope", "r2", "regime"), rows)
    if args.figures:
        from . import plotting

        plotting.plot_rate_table(rows, out / "rate_table.png")
    ok = all(abs(r[2] - r[1]) <= sweep.slope_tol for r in rows) and all(o[1] for o in outcomes)
    for r in rows:
        print(f"p={io.fmt(r[0])} predicted={io.fmt(r[1])} fitted={io.fmt(r[2])} regime={r[4]}")
    return EXIT_OK if ok else EXIT_CHECK


def _parse_x(text: str) -> np.ndarray:
    try:
        start, stop, num = text.split(":")
        return np.linspace(float(start), float(stop), int(num))
    except ValueError:
        raise ConfigError("x", "expected start:stop:count") from None


def _kernel_values(ev: KernelEvaluator, quantity: str, x: np.ndarray, t: float) -> np.ndarray:
    p = ev.p
    domain = {"W": 1.0, "usup": 1.0}
    if quantity in domain and t < domain[quantity]:
        raise ConfigError("t", f"{quantity} needs t >= 1")
    if quantity == "cplus" and t <= 1.0:
        raise ConfigError("t", "cplus needs t > 1")
    if quantity in ("D", "Dx", "cminus", "tail") and t <= 0.0:
        raise ConfigError("t", f"{quantity} needs t > 0")
    if quantity in ("usub", "uplus", "uh") and t < 0.0:
        raise ConfigError("t", f"{quantity} needs t >= 0")
    if quantity == "tail" and np.any(np.abs(x) < 1.0):
        raise ConfigError("x", "tail bound needs |x| >= 1")
    table = {
        "D": lambda: ev.D(x, t), "Dx": lambda: ev.D_x(x, t), "delta": lambda: ev.delta(x),
        "E": lambda: ev.excess(x), "W": lambda: ev.W(x, t), "usub": lambda: ev.u_sub(x, t),
        "usup": lambda: ev.u_sup(x, t), "uplus": lambda: ev.envelope_upper(x, t),
        "cminus": lambda: ev.c_minus(x, t), "cplus": lambda: ev.c_plus(x, t),
        "tail": lambda: ev.tail_bound(x, t), "uh": lambda: np.full(x.shape, u_h(t, p)),
    }
    return np.broadcast_to(table[quantity](), x.shape)


def cmd_kernels(args) -> int:
    raw = io.read_flat(args.config) if args.config else {}
    p_text = args.p if args.p is not None else raw.get("p")
    if p_text is None:
        raise ConfigError("p", "give --p or a config with p")
    params = ProblemParams(io._number("p", p_text))
    datum = io.parse_datum(raw) if raw else make_tent_datum()
    ev = KernelEvaluator(datum, params)
    x = _parse_x(args.x)
    times = io._numbers("t", args.t)
    rows = []
    for t in times:
        vals = _kernel_values(ev, args.quantity, x, t)
        rows.extend((xi, t, v) for xi, v in zip(x, vals))
    args.out.mkdir(parents=True, exist_ok=True)
    io.write_rows(args.out / f"{args.quantity}.csv", ("x", "t", "value"), rows)
    return EXIT_OK


def cmd_exponents(args) -> int:
    if args.nmax < 1:
        raise ConfigError("nmax", "must be >= 1")
    rows = []
    for n in range(1, args.nmax + 1):
        pm, pp = critical_exponents(n)
        rows.append((n, pm, pp, pm * pp))
    print("N,p_minus,p_plus,product")
    for n, pm, pp, prod in rows:
        print(f"{n},{io.fmt(pm)},{io.fmt(pp)},{io.fmt(prod)}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        io.write_rows(args.out / "exponents.csv", ("N", "p_minus", "p_plus", "product"), rows)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "rate": cmd_rate,
            "kernels": cmd_kernels, "exponents": cmd_exponents}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

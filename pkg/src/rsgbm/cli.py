"""Command-line front-end.

Exit codes: 0 on success, 1 on validation errors, 2 on numerical failures.
Regimes are numbered from 1 on the command line.  Every subcommand writes
CSV by default and JSON with ``--json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import reproduce
from .auxfn import AuxFunctions
from .errors import NumericalError, RSGBMError, ValidationError
from .hedging import HedgeConfig, simulate_hedge
from .model import load_model, risk_quantities
from .pricing import Payoff, fourier_call, fourier_call_delta, fourier_put, mc_delta, mc_price
from .simulate import MeasureTag, chunk_rng, default_threads, dump_paths, sample_regime_paths

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def _emit(rows, columns, args, out=None):
    """Write ``rows`` (list of dicts) as CSV or JSON."""
    out = out or sys.stdout
    if args.json:
        json.dump(_jsonable(rows), out, indent=2)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in np.ravel(v))
    return v


def _regime(args, model) -> int:
    i = args.regime - 1
    if not 0 <= i < model.l:
        raise ValidationError(f"regime must be in 1..{model.l}, got {args.regime}")
    return i


def _horizon(args, model, fallback=1.0) -> float:
    T = args.T if args.T is not None else model.defaults.get("T", fallback)
    if T <= 0:
        raise ValidationError("T must be positive")
    return float(T)


def _s0(args, model) -> float:
    s0 = args.s0 if args.s0 is not None else model.defaults.get("s0")
    if s0 is None:
        raise ValidationError("--s0 is required (config has no default)")
    if s0 <= 0:
        raise ValidationError("s0 must be positive")
    return float(s0)


def _threads(args) -> int:
    return args.threads if args.threads else default_threads()


def _n_pairs(args) -> int:
    if args.full:
        return reproduce.FULL_PAIRS
    return args.n if args.n else reproduce.DESK_PAIRS


# -- subcommands ------------------------------------------------------------


def cmd_model_check(args):
    model = load_model(args.config, approx_generator=args.approx_generator)
    rq = risk_quantities(model)
    rows = []
    for i in range(model.l):
        rows.append({
            "regime": i + 1,
            "m": rq.m[i].tolist(),
            "rho": rq.rho[i].tolist(),
            "ell": float(rq.ell[i]),
            "r": float(model.r[i]),
            "generator_row": model.Lambda[i].tolist(),
        })
    _emit(rows, ["regime", "m", "rho", "ell", "r", "generator_row"], args)


def cmd_auxfn_dump(args):
    model = load_model(args.config, approx_generator=args.approx_generator)
    if args.points < 2:
        raise ValidationError("--points must be at least 2")
    T = _horizon(args, model)
    cols = AuxFunctions(model, T).table(T, args.points)
    names = list(cols)
    rows = [{c: cols[c][k] for c in names} for k in range(args.points)]
    _emit(rows, names, args)


def cmd_simulate_dump(args):
    model = load_model(args.config, approx_generator=args.approx_generator)
    T = _horizon(args, model)
    aux = AuxFunctions(model, T)
    gen = aux.generator(MeasureTag[args.measure.upper()].generator_kind)
    bound = aux.uniformization_bound(gen, T)
    paths = sample_regime_paths(gen, bound, _regime(args, model), T, chunk_rng(args.seed, 0, 0), args.paths)
    rows = [{"path_id": p, "t": t, "state": s + 1} for p, t, s in dump_paths(paths)]
    _emit(rows, ["path_id", "t", "state"], args)


def _payoff(args) -> Payoff:
    if args.strike is None:
        raise ValidationError("--strike is required")
    return Payoff.call(args.strike) if args.payoff == "call" else Payoff.put(args.strike)


def cmd_price(args):
    model = load_model(args.config, approx_generator=args.approx_generator)
    T, s0, i = _horizon(args, model), _s0(args, model), _regime(args, model)
    aux = AuxFunctions(model, T)
    payoff = _payoff(args)
    if args.method == "fourier":
        fn = fourier_call if args.payoff == "call" else fourier_put
        est = fn(model, aux, args.strike, s0, i, T)
        row = {"value": est.value, "half_width": 0.0, "n": 0, "method": "fourier"}
        if args.payoff == "call":
            row["delta"] = fourier_call_delta(model, aux, args.strike, s0, i, T)
    else:
        n = _n_pairs(args)
        est = mc_price(model, aux, payoff, s0, i, T, n, seed=args.seed, threads=_threads(args))
        row = {"value": est.value, "half_width": est.half_width, "n": est.n, "method": "mc"}
        if args.delta:
            dl = mc_delta(model, aux, payoff, s0, i, T, n, seed=args.seed, threads=_threads(args))[0]
            row.update(delta=dl.value, delta_half_width=dl.half_width)
    cols = ["value", "half_width", "n", "method"] + [c for c in ("delta", "delta_half_width") if c in row]
    _emit([row], cols, args)


def cmd_hedge(args):
    model = load_model(args.config, approx_generator=args.approx_generator)
    T, s0, i = _horizon(args, model), _s0(args, model), _regime(args, model)
    aux = AuxFunctions(model, T)
    grid = np.linspace(0.0, T, args.steps + 1)
    checkpoints = [float(grid[k]) for k in sorted({0, args.steps // 4, args.steps // 2, 3 * args.steps // 4})]
    config = HedgeConfig(
        n_steps=args.steps, n_paths=args.paths, pricer=args.pricer, seed=args.seed,
        checkpoints=tuple(checkpoints), threads=_threads(args),
    )
    stats, res = simulate_hedge(model, aux, _payoff(args), s0, i, T, config)
    if args.dump:
        with open(args.dump, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t", "S", "tau", "C", "V", "phi", "G"])
            for p in range(res.n_paths):
                for k, t in enumerate(res.t):
                    phi = res.phi[p, k, 0] if k < res.n_steps else ""
                    w.writerow([p, repr(float(t)), repr(float(res.S[p, k, 0])), int(res.tau[p, k]) + 1,
                                repr(float(res.C[p, k])), repr(float(res.V[p, k])),
                                phi if phi == "" else repr(float(phi)), repr(float(res.G[p, k]))])
    summary = stats.to_dict()
    summary["ci"] = [stats.mean_G_T - stats.half_width, stats.mean_G_T + stats.half_width]
    if args.json:
        _emit(summary, [], args)
    else:
        cols = ["C0", "phi0", "mean_G_T", "half_width", "sd_G_T", "rms_he", "n_paths", "n_steps"]
        _emit([summary], cols, args)


def cmd_reproduce(args):
    threads = _threads(args)
    n = _n_pairs(args)
    if args.table == "shen-table2":
        rows = reproduce.shen_table2(n, args.seed, threads)
    elif args.table == "apple-table8":
        rows = reproduce.apple_table8(n, args.seed, threads)
    else:
        rows = reproduce.table6()
        _emit(rows, ["strike", "bs", "delta", "ref_bs", "ref_delta"], args)
        return
    cols = ["strike", "regime", "value", "half_width", "phi0", "phi0_half_width",
            "ref_value", "ref_half_width", "ref_phi0", "ref_phi0_half_width",
            "value_overlap", "phi0_overlap"]
    _emit(rows, cols, args)


# -- parser -----------------------------------------------------------------


def _common(p: argparse.ArgumentParser, config=True):
    if config:
        p.add_argument("config", help="TOML model file or bundled name (shen, apple, apple_transition)")
        p.add_argument("--approx-generator", action="store_true",
                       help="use periods*(Q - I) when the transition matrix has no valid generator")
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $RSGBM_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsgbm", description="Regime-switching GBM pricing and hedging")
    sub = parser.add_subparsers(dest="command", required=True)

    model = sub.add_parser("model", help="model utilities").add_subparsers(dest="action", required=True)
    p = model.add_parser("check", help="validate a config and print m, rho, ell")
    _common(p)
    p.set_defaults(func=cmd_model_check)

    aux = sub.add_parser("auxfn", help="auxiliary functions").add_subparsers(dest="action", required=True)
    p = aux.add_parser("dump", help="tabulate gamma, delta, beta and tilted exit rates")
    _common(p)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--points", type=int, default=200)
    p.set_defaults(func=cmd_auxfn_dump)

    sim = sub.add_parser("simulate", help="regime-chain simulation").add_subparsers(dest="action", required=True)
    p = sim.add_parser("dump", help="dump regime paths as (path_id, t, state)")
    _common(p)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--regime", type=int, default=1)
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--measure", choices=["physical", "forward", "check"], default="physical")
    p.set_defaults(func=cmd_simulate_dump)

    for name, helptext in (("price", "price a European option"), ("hedge", "simulate the optimal hedge")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--payoff", choices=["call", "put"], default="call")
        p.add_argument("--strike", type=float, default=None)
        p.add_argument("--s0", type=float, default=None)
        p.add_argument("--regime", type=int, default=1)
        p.add_argument("--T", type=float, default=None)
        if name == "price":
            p.add_argument("--method", choices=["mc", "fourier"], default="mc")
            p.add_argument("--n", type=int, default=None, help="antithetic pairs (default 1e5)")
            p.add_argument("--full", action="store_true", help="use 5e5 pairs")
            p.add_argument("--delta", action="store_true", help="also report the pathwise delta")
            p.set_defaults(func=cmd_price)
        else:
            p.add_argument("--steps", type=int, default=100)
            p.add_argument("--paths", type=int, default=10_000)
            p.add_argument("--pricer", choices=["fourier", "grid", "nested"], default="fourier")
            p.add_argument("--dump", default=None, help="write per-path, per-date CSV here")
            p.set_defaults(func=cmd_hedge)

    p = sub.add_parser("reproduce", help="regenerate published tables")
    p.add_argument("table", choices=["shen-table2", "apple-table8", "table6"])
    _common(p, config=False)
    p.add_argument("--n", type=int, default=None, help="antithetic pairs (default 1e5)")
    p.add_argument("--full", action="store_true", help="use 5e5 pairs")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_VALIDATION
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, RSGBMError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

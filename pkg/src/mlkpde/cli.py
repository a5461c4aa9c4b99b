"""Command-line front end.

Subcommands: cbc, weights, fe-study, trunc-study, sl-study, level-study,
cost-study, build-ml, evaluate, plan.  Studies write <name>.csv plus
<name>.meta.json into the output directory and print a one-line summary.
Exit codes: 0 success, 2 configuration error, 1 numeric failure.

A JSON config file (--config) supplies defaults; explicit flags override it.
Each run echoes its fully resolved configuration into the meta file, and
--config accepts a previous meta file (the "config" key is used), so runs
can be reproduced from their own outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .approximation import (
    ConfigError,
    build_multilevel,
    evaluate,
    load_approximation,
    plan_levels,
    save_approximation,
)
from .coefficient import CoefficientModel, bbar_sequence, preset as make_preset
from .diagnostics import (
    cost_comparison_study,
    fe_error_study,
    level_difference_study,
    sl_error_study,
    truncation_study,
)
from .fem2d import CoefficientPositivityError, NoConvergenceError
from .kernel import (
    DomainError,
    IllConditionedKernelError,
    KernelSpec,
    WeightRecipe,
    serendipitous_weights,
)
from .lattice import (
    InvalidDivisorError,
    cbc_construct,
    load_generating_vector,
    save_generating_vector,
)

_CONFIG_ERRORS = (ConfigError, DomainError, InvalidDivisorError, ValueError, KeyError)
_NUMERIC_ERRORS = (IllConditionedKernelError, NoConvergenceError, CoefficientPositivityError)

# Default desk-scale pairing tables (m, N), the first rows of the full-scale
# pairing pattern for each preset.
DEFAULT_PAIRINGS = {
    "easy": [(3, 2**6), (4, 2**7), (5, 2**9)],
    "hard": [(3, 2**6), (4, 2**8), (5, 2**10)],
}


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _pairings(text: str) -> list[tuple[int, int]]:
    out = []
    for token in text.split(","):
        m, n = token.split(":")
        out.append((int(m), int(n)))
    return out


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (or a previous .meta.json)")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $MLKPDE_THREADS or 1)")


def _add_problem(p: argparse.ArgumentParser, with_s: bool = True):
    p.add_argument("--preset", choices=["easy", "hard"], help="named problem parameters")
    p.add_argument("--C", type=float, help="coefficient scaling (with --theta)")
    p.add_argument("--theta", type=float, help="coefficient decay exponent (with --C)")
    if with_s:
        p.add_argument("--s", type=int, default=16, help="truncation dimension (default 16)")
    p.add_argument("--alpha", type=int, default=1, help="kernel smoothness (default 1)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.6,
                   help="weight exponent lambda (default 0.6)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mlkpde",
        description="Lattice-kernel approximation of parametric elliptic PDEs: "
                    "construction, evaluation, and convergence/cost studies.",
    )
    ap.add_argument("--version", action="version", version=f"mlkpde {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cbc", help="construct a generating vector and write it to a file")
    _add_problem(p)
    p.add_argument("--n-max", type=int, default=2**10)
    p.add_argument("--out", default=None, help="output path (default <out-dir>/z_<preset>.txt)")
    _add_common(p)

    p = sub.add_parser("weights", help="print the product weights gamma_1..gamma_s")
    _add_problem(p)
    _add_common(p)

    p = sub.add_parser("plan", help="plan multilevel sizes for a target accuracy")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--h0", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--snap-to-divisors", dest="snap", action="store_true", default=True)
    p.add_argument("--no-snap-to-divisors", dest="snap", action="store_false")
    _add_common(p)

    p = sub.add_parser("fe-study", help="FE refinement error and cost study")
    _add_problem(p)
    p.add_argument("--m-list", type=_int_list, default=[2, 3, 4, 5])
    p.add_argument("--m-ref", type=int, default=6)
    p.add_argument("--n-quad", type=int, default=2**8)
    p.add_argument("--gen-vector", help="load the quadrature lattice from a vector file")
    _add_common(p)

    p = sub.add_parser("trunc-study", help="dimension truncation error study")
    _add_problem(p, with_s=False)
    p.add_argument("--s-list", type=_int_list, default=[4, 8, 16])
    p.add_argument("--s-ref", type=int, default=32)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--n-quad", type=int, default=2**8)
    p.add_argument("--gen-vector", help="load the quadrature lattice from a vector file")
    _add_common(p)

    p = sub.add_parser("sl-study", help="single-level interpolation error study")
    _add_problem(p)
    p.add_argument("--n-list", type=_int_list, default=[2**k for k in range(4, 11)])
    p.add_argument("--m-star", type=int, default=5)
    p.add_argument("--r-shifts", type=int, default=5)
    p.add_argument("--gen-vector", help="load the lattice from a vector file")
    _add_common(p)

    p = sub.add_parser("level-study", help="interpolation error of FE level differences")
    _add_problem(p)
    p.add_argument("--m0", type=int, default=3)
    p.add_argument("--levels", type=int, default=3, help="max level L")
    p.add_argument("--n-list", type=_int_list, default=[2**k for k in range(4, 9)])
    p.add_argument("--r-shifts", type=int, default=5)
    p.add_argument("--gen-vector", help="load the lattice from a vector file")
    _add_common(p)

    p = sub.add_parser("cost-study", help="single-level vs multilevel cost comparison")
    _add_problem(p)
    p.add_argument("--pairings", type=_pairings, default=None,
                   help='m:N pairs, e.g. "3:64,4:128,5:512" (default per preset)')
    p.add_argument("--m-ref", type=int, default=None)
    p.add_argument("--r-shifts", type=int, default=5)
    p.add_argument("--gen-vector", help="load the lattice from a vector file")
    _add_common(p)

    p = sub.add_parser("build-ml", help="build a multilevel approximation and save it")
    _add_problem(p)
    p.add_argument("--levels", dest="level_spec", default=None,
                   help='explicit "m:N,m:N,..." levels (N non-increasing)')
    p.add_argument("--epsilon", type=float, default=None, help="plan levels for this accuracy")
    p.add_argument("--m0", type=int, default=3, help="coarsest mesh level (planned builds)")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--snap-to-divisors", dest="snap", action="store_true", default=True)
    p.add_argument("--no-snap-to-divisors", dest="snap", action="store_false")
    p.add_argument("--gen-vector", help="load the lattice from a vector file")
    p.add_argument("--out", default=None, help="output path (default <out-dir>/ml.bin)")
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate a saved approximation at (x*, y*)")
    p.add_argument("--model", required=True, help="MLKA binary file from build-ml")
    p.add_argument("--x", type=float, nargs=2, required=True, metavar=("X1", "X2"))
    p.add_argument("--y-file", required=True,
                   help="text file with s parameter values (whitespace separated)")
    _add_common(p)

    return ap


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser, argv):
    """Fill unset flags from the JSON config file; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    raw = json.loads(Path(args.config).read_text())
    conf = raw.get("config", raw) if isinstance(raw, dict) else raw
    if not isinstance(conf, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in conf.items():
        attr = key.replace("-", "_")
        if attr in ("command", "config"):
            continue
        if hasattr(args, attr) and attr not in explicit:
            setattr(args, attr, val)
    return args


def _resolve_model(args) -> tuple[CoefficientModel | str, str]:
    if getattr(args, "C", None) is not None or getattr(args, "theta", None) is not None:
        if args.C is None or args.theta is None:
            raise ConfigError("--C and --theta must be given together")
        s = getattr(args, "s", None) or getattr(args, "s_ref", None) or 16
        return CoefficientModel(int(s), args.C, args.theta), f"C{args.C:g}_t{args.theta:g}"
    if not getattr(args, "preset", None):
        raise ConfigError("either --preset or --C/--theta is required")
    return args.preset, args.preset


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("MLKPDE_THREADS")
    return max(1, int(env)) if env else 1


def _study_config(args, skip=("config", "out_dir", "command")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _make_kernel(model: CoefficientModel, alpha: int, lam: float) -> KernelSpec:
    recipe = WeightRecipe(lam=lam, bbar=bbar_sequence(model), alpha=alpha)
    return KernelSpec(alpha, serendipitous_weights(recipe))


def _maybe_lattice(args):
    gv = getattr(args, "gen_vector", None)
    return load_generating_vector(gv) if gv else None


def _run_study(args, name: str, result) -> int:
    out_dir = Path(args.out_dir)
    csv_path, meta_path = result.write(out_dir, name)
    # meta echoes the resolved CLI configuration so runs are reproducible
    meta = json.loads(Path(meta_path).read_text())
    meta["cli_config"] = _study_config(args)
    Path(meta_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if result.kind == "cost":
        print(
            f"{name}: cost exponents sl={result.extra['cost_exponent_sl']:.3f} "
            f"ml={result.extra['cost_exponent_ml']:.3f} -> {csv_path}"
        )
    elif result.kind == "level-diff":
        rates = ",".join(f"{k}:{v:.3f}" for k, v in result.extra["per_level_rates"].items())
        print(f"{name}: per-level rates {rates} -> {csv_path}")
    else:
        print(f"{name}: fitted rate {result.rate:.3f} -> {csv_path}")
    return 0


def _cmd_cbc(args) -> int:
    model_or_name, tag = _resolve_model(args)
    model = model_or_name if isinstance(model_or_name, CoefficientModel) else make_preset(
        model_or_name, s=args.s
    )
    spec = _make_kernel(model, args.alpha, args.lam)
    lat = cbc_construct(args.n_max, model.s, spec.gamma, args.alpha)
    out = Path(args.out) if args.out else Path(args.out_dir) / f"z_{tag}.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_generating_vector(lat, out)
    print(f"cbc: N_max={lat.N_max} s={lat.s} -> {out}")
    return 0


def _cmd_weights(args) -> int:
    model_or_name, _ = _resolve_model(args)
    model = model_or_name if isinstance(model_or_name, CoefficientModel) else make_preset(
        model_or_name, s=args.s
    )
    spec = _make_kernel(model, args.alpha, args.lam)
    print(" ".join(f"{g:.17g}" for g in spec.gamma))
    return 0


def _cmd_plan(args) -> int:
    plan = plan_levels(args.epsilon, args.h0, args.beta, args.mu, args.d, args.snap)
    print(f"plan: L={plan.L} N={list(plan.N)} (Nhat0={plan.N0_hat:.6g})")
    return 0


def _cmd_build_ml(args) -> int:
    model_or_name, tag = _resolve_model(args)
    model = model_or_name if isinstance(model_or_name, CoefficientModel) else make_preset(
        model_or_name, s=args.s
    )
    spec = _make_kernel(model, args.alpha, args.lam)
    if args.level_spec:
        levels = [(n, m) for m, n in _pairings(args.level_spec)]
    elif args.epsilon is not None:
        plan = plan_levels(args.epsilon, 2.0**-args.m0, args.beta, args.mu, 2, args.snap)
        levels = [(plan.N[ell], args.m0 + ell) for ell in range(plan.L + 1)]
    else:
        raise ConfigError("build-ml needs --levels or --epsilon")
    lat = _maybe_lattice(args)
    if lat is None:
        lat = cbc_construct(max(4, levels[0][0]), model.s, spec.gamma, args.alpha)
    ml = build_multilevel(lat, levels, spec, model, threads=_threads(args))
    out = Path(args.out) if args.out else Path(args.out_dir) / "ml.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_approximation(ml, out)
    meta = {
        "command": "build-ml",
        "levels": [[n, m] for n, m in levels],
        "preset": tag,
        "cli_config": _study_config(args),
        "stage_seconds": {
            k: v for k, v in ml.stage_seconds.items() if k != "fe_solve_counts"
        },
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"build-ml: L={ml.L} levels={[(r.N, r.mesh.m) for r in ml.levels]} -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    approx = load_approximation(args.model)
    y = np.array([float(t) for t in Path(args.y_file).read_text().split()])
    if y.size < approx.lattice.s:
        raise ConfigError(
            f"y file has {y.size} values, model needs {approx.lattice.s}"
        )
    val = evaluate(approx, np.asarray(args.x), y[: approx.lattice.s])
    print(f"{val:.17g}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args, parser, argv)
        threads = _threads(args)

        if args.command == "cbc":
            return _cmd_cbc(args)
        if args.command == "weights":
            return _cmd_weights(args)
        if args.command == "plan":
            return _cmd_plan(args)
        if args.command == "build-ml":
            return _cmd_build_ml(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)

        model_or_name, _ = _resolve_model(args)
        lat = _maybe_lattice(args)
        if args.command == "fe-study":
            res = fe_error_study(
                model_or_name, args.m_list, args.m_ref, args.n_quad,
                s=args.s, alpha=args.alpha, lam=args.lam, lattice=lat, threads=threads,
            )
            return _run_study(args, f"fe_{res.preset}", res)
        if args.command == "trunc-study":
            res = truncation_study(
                model_or_name, args.s_list, args.s_ref, args.m, args.n_quad,
                alpha=args.alpha, lam=args.lam, lattice=lat, threads=threads,
            )
            return _run_study(args, f"trunc_{res.preset}", res)
        if args.command == "sl-study":
            res = sl_error_study(
                model_or_name, args.n_list, args.m_star, args.r_shifts,
                s=args.s, alpha=args.alpha, lam=args.lam, lattice=lat, threads=threads,
            )
            return _run_study(args, f"sl_{res.preset}", res)
        if args.command == "level-study":
            res = level_difference_study(
                model_or_name, args.m0, args.levels, args.n_list, args.r_shifts,
                s=args.s, alpha=args.alpha, lam=args.lam, lattice=lat, threads=threads,
            )
            return _run_study(args, f"level_{res.preset}", res)
        if args.command == "cost-study":
            pairings = args.pairings
            if pairings is None:
                if not isinstance(model_or_name, str):
                    raise ConfigError("--pairings is required with a custom --C/--theta model")
                pairings = DEFAULT_PAIRINGS[model_or_name]
            res = cost_comparison_study(
                model_or_name, pairings, args.r_shifts, m_ref=args.m_ref,
                s=args.s, alpha=args.alpha, lam=args.lam, lattice=lat, threads=threads,
            )
            return _run_study(args, f"cost_{res.preset}", res)
        raise ConfigError(f"unknown command {args.command!r}")
    except _NUMERIC_ERRORS as exc:
        print(f"mlkpde: numeric failure: {exc}", file=sys.stderr)
        return 1
    except _CONFIG_ERRORS as exc:
        print(f"mlkpde: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

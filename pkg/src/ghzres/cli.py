"""
Command-line entry point: ``ghzres VERB --config FILE [--out DIR]``.

Exit codes: 0 on success (including partial failures, which are recorded
per point), 1 when every point failed or validation failed, 2 on config
errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (ConfigError, ResultCache, expand_points, flatten_rows, grid_values,
                          load_config, markov_rows, run_points, write_table)
from .markov.clock import build_ancilla_clock_ctmc, verify_frontier_convergence
from .markov.ctmc import ctmc_stationary
from .markov.statecond import build_reduced_state_cond_chain, ghz_population, llp_exact
from .markov.wave import (build_qutrit_aggregate_chain, build_qutrit_sequential_chain,
                          lattice_denominator, lattice_expected_time)
from .reservoirs import (AuditFailed, ErrorModel, RateSet, SchemeId, build_error_channels,
                         build_scheme, coherence_audit)
from .steady import Method, SolverConfig, solve_steady_state
from .tuning import grid_search

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.out or "out")


def _single_points(cfg, verb):
    points = expand_points(cfg)
    if any(p["sweep"] for p in points):
        raise ConfigError(f"{cfg.source}: '{verb}' takes fixed rates; use 'sweep' for rate grids")
    return points


def _solve_and_write(args, cfg, points, stem) -> int:
    out = _out_dir(args, cfg)
    cache = ResultCache(out, cfg, enabled=not args.no_cache)
    rows = run_points(cfg, points, cache, args.workers)
    cols, flat = flatten_rows(points, rows)
    path = write_table(out, stem, cols, flat)
    ok = sum(r["status"] == "ok" for r in rows)
    for p, r in zip(points, rows):
        tag = "ok" if r["status"] == "ok" else r["status"]
        sweep = " ".join(f"{k}={v:.6g}" for k, v in p["sweep"].items())
        print(f"n={p['n']} {sweep} error={r.get('error', float('nan')):.6g} {tag}".replace("  ", " "))
    print(f"{ok}/{len(rows)} points solved; wrote {path}")
    return EXIT_OK if ok > 0 or not rows else EXIT_FAILED


def cmd_steady(args, cfg) -> int:
    return _solve_and_write(args, cfg, _single_points(cfg, "steady"), "steady")


def cmd_sweep(args, cfg) -> int:
    return _solve_and_write(args, cfg, expand_points(cfg), "sweep")


def cmd_markov(args, cfg) -> int:
    points = _single_points(cfg, "markov")
    out = _out_dir(args, cfg)
    rows = []
    for p in points:
        sub = replace(cfg, n=[p["n"]])
        try:
            rows += markov_rows(sub, RateSet(**p["rates"]), out)
        except (ValueError, ArithmeticError) as exc:
            print(f"n={p['n']}: failed: {exc}")
    if not rows:
        return EXIT_FAILED
    cols = ["n", "quantity", "value", "reference", "abs_diff"]
    path = write_table(out, "markov", cols, rows)
    for r in rows:
        ref = "" if isinstance(r["reference"], float) and math.isnan(r["reference"]) else f" ref={r['reference']:.12g}"
        val = r["value"] if isinstance(r["value"], str) else f"{r['value']:.12g}"
        print(f"n={r['n']} {r['quantity']} = {val}{ref}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tune(args, cfg) -> int:
    if cfg.tune is None:
        raise ConfigError(f"{cfg.source}: 'tune' needs a tune section with free rates")
    points = _single_points(cfg, "tune")
    out = _out_dir(args, cfg)
    free = {k: grid_values(v) for k, v in cfg.tune["free"].items()}
    summary, any_ok = [], False
    for p in points:
        fixed = RateSet(**p["rates"])
        res = grid_search(cfg.scheme, p["n"], fixed, free, cfg.tune["objective"],
                          cfg.error_model, cfg.solver_config(), args.workers)
        cols = list(res.free) + ["error", "objective", "status"]
        write_table(out, f"tune_surface_n{p['n']}", cols,
                    [{**pt, "objective": res.objective.value} for pt in res.points])
        any_ok |= res.best is not None
        row = {"n": p["n"], **{f"best_{k}": v for k, v in res.best_values.items()},
               "error": res.error, "failures": res.failures, "points": len(res.points)}
        summary.append(row)
        best = " ".join(f"{k}={v:.6g}" for k, v in res.best_values.items())
        print(f"n={p['n']} best {best} error={res.error:.6g} failures={res.failures}/{len(res.points)}")
    cols = []
    for r in summary:
        cols += [k for k in r if k not in cols]
    path = write_table(out, "tune", cols, summary)
    print(f"wrote {path}")
    return EXIT_OK if any_ok else EXIT_FAILED


# ---------------------------------------------------------------------------
# validate


def _check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
    return bool(ok)


def cmd_validate(args, cfg=None) -> int:
    """Compact oracle suite; prints one PASS/FAIL line per check."""
    results = []
    expected = {2: Fraction(3), 3: Fraction(9, 2), 4: Fraction(47, 8), 5: Fraction(115, 16)}
    for n, q in expected.items():
        got, oracle = lattice_denominator(n), lattice_expected_time(n)
        results.append(_check(f"lattice denominator n={n}", got == q == oracle, f"{got}"))

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for n in range(2, 7):
        r = RateSet(kappa_u=rng.uniform(10, 100), kappa_st=rng.uniform(1e3, 1e4),
                    kappa_c=rng.uniform(1e3, 1e4), kappa_p=rng.uniform(0.1, 1))
        model, closed = build_qutrit_sequential_chain(n, r)
        worst = max(worst, abs(ctmc_stationary(model)[f"G{n - 1}"] - closed))
    results.append(_check("sequential chain closed form n=2..6", worst <= 1e-10, f"max diff {worst:.2e}"))

    r = RateSet(kappa_u=20, kappa_t=20, kappa_d=500, kappa_r=1e4, kappa_st=1e4, kappa_c=300, kappa_p=1)
    for n in (3, 4):
        d = abs(llp_exact(n, r).aggregates["p_GHZ"]
                - ghz_population(ctmc_stationary(build_reduced_state_cond_chain(n, r))))
        results.append(_check(f"detection chain recursion n={n}", d <= 1e-9, f"diff {d:.2e}"))

    rq = RateSet(kappa_u=50, kappa_st=1e3, kappa_c=1e3, kappa_p=2)
    spec = build_scheme(SchemeId.QutritWave, 2, rq)
    errs = build_error_channels(spec.layout, rq, ErrorModel.QutritDepolarizing)
    block = solve_steady_state(spec, errs, SolverConfig(method=Method.AncillaBlock)).dense()
    full = solve_steady_state(spec, errs, SolverConfig(method=Method.DenseNullSpace)).dense()
    td = 0.5 * np.abs(np.linalg.eigvalsh(block - full)).sum()
    results.append(_check("block vs full solver, qutrit wave n=2", td <= 1e-8, f"trace distance {td:.2e}"))
    agg = ctmc_stationary(build_qutrit_aggregate_chain(2, rq))
    pop = np.real(np.diag(full)).reshape(3, 3)
    low = pop[:2, :2].sum()
    results.append(_check("sector chain vs quantum populations", abs(low - agg["ll"]) <= 1e-9,
                          f"diff {abs(low - agg['ll']):.2e}"))

    rs = RateSet(kappa_u=5, kappa_t=5, kappa_d=100, kappa_r=1e3, kappa_st=1e3, kappa_c=50, kappa_p=0.5)
    spec = build_scheme(SchemeId.StateCond, 2, rs)
    errs = build_error_channels(spec.layout, rs, ErrorModel.QubitFlips)
    block = solve_steady_state(spec, errs, SolverConfig(method=Method.AncillaBlock)).dense()
    full = solve_steady_state(spec, errs, SolverConfig(method=Method.SparseIterative)).dense()
    td = 0.5 * np.abs(np.linalg.eigvalsh(block - full)).sum()
    results.append(_check("block vs full solver, state conditioning n=2", td <= 1e-8,
                          f"trace distance {td:.2e}"))

    audit_rates = RateSet(kappa_u=1, kappa_d=10, kappa_t=1, kappa_st=100, kappa_r=100, kappa_c=10,
                          kappa_f=10, kappa_p=0.1)
    for s in SchemeId:
        try:
            ok = coherence_audit(build_scheme(s, 3, audit_rates))
        except AuditFailed:
            ok = False
        results.append(_check(f"sector audit {s.value}", ok))

    clock = build_ancilla_clock_ctmc(4, RateSet(kappa_u=1, kappa_t=1, kappa_d=1e3, kappa_st=1e6))
    results.append(_check("clock generator columns sum to zero", clock.column_sum_error() <= 1e-6,
                          f"{clock.column_sum_error():.1e}"))
    fr = verify_frontier_convergence(6, 1000, args.seed)
    results.append(_check("frontier monotone and absorbed n=6", fr.ok, f"max steps {fr.max_steps}"))

    passed = sum(results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


# ---------------------------------------------------------------------------


COMMANDS = {"steady": cmd_steady, "sweep": cmd_sweep, "markov": cmd_markov, "tune": cmd_tune,
            "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ghzres", description="GHZ reservoir experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("verb", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML experiment config (not needed for validate)")
    p.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker processes (default: logical cores)")
    p.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not write cached points")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.verb == "validate":
        args.seed = 0 if args.seed is None else args.seed
        return cmd_validate(args)
    if not args.config:
        print(f"error: '{args.verb}' needs --config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

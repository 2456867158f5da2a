"""
Declarative experiments: config parsing, per-point evaluation, caching and output.

A config is a YAML mapping::

    scheme: qutrit_wave
    n: [3, 4]
    rates:
      kappa_p: 1
      kappa_st: {log: [1.0e3, 1.0e5], points: 5}
      kappa_c: {same_as: kappa_st}
      kappa_u: {optimal: B}
    error_model: qutrit_depolarizing
    solver: {method: auto, residual_tol: 1.0e-9}
    markov: [estimates]
    tune:
      objective: full
      free:
        kappa_u: {log: [10, 1000], points: 13}

Rates take a number, ``{values: [...]}``, ``{log: [lo, hi], points: m}``,
``{same_as: other_rate}`` or, for the qutrit wave, ``{optimal: A|B}``.
Sweep axes combine as a product in the order rates are listed, after ``n``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .markov.clock import (ClockVariant, build_ancilla_clock_ctmc, clock_aggregates,
                           off_principal_bound, principal_populations_formula,
                           verify_frontier_convergence)
from .markov.ctmc import ctmc_stationary
from .markov.statecond import (build_reduced_state_cond_chain, ghz_population,
                               imperfect_sync_correction, llp_exact, llp_leading_order)
from .markov.wave import (build_qutrit_aggregate_chain, build_qutrit_sequential_chain,
                          build_qutrit_wave_chain_full, ghz_estimate_method2, lattice_denominator,
                          sequential_first_order, wave_node_label)
from .reservoirs import ErrorModel, RateSet, SchemeId, build_error_channels, build_scheme
from .steady import Method, SolverConfig, solve_steady_state
from .tuning import Estimate, Objective, optimal_rates_qutrit_wave, predicted_error

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "expand_points",
    "run_point",
    "run_points",
    "write_table",
    "ResultCache",
    "markov_rows",
    "mixed_fraction",
    "grid_values",
    "flatten_rows",
]

log = logging.getLogger(__name__)

TOP_KEYS = {"scheme", "n", "rates", "error_model", "companions", "solver", "markov",
            "tune", "seed", "out", "eta2"}
SOLVER_KEYS = {"method", "residual_tol", "max_iterations", "dense_cap", "check_uniqueness"}
MARKOV_ITEMS = {"estimates", "chains", "lattice", "clock", "frontier"}
TUNE_KEYS = {"objective", "free"}
PSEUDO_RATES = {"kappa_u_eff"}


class ConfigError(ValueError):
    """Invalid experiment config; the message carries file, line and key."""


# ---------------------------------------------------------------------------
# parsing


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths to 1-based source lines."""
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                lines[path + (i,)] = v.start_mark.line + 1
                walk(v, path + (i,))

    root = yaml.compose(text)
    if root is not None:
        walk(root, ())
    return lines


@dataclass
class ExperimentConfig:
    """
    Validated experiment description.

    ``rates`` keeps the raw per-rate specs (numbers or sweep dicts) in
    file order; :func:`expand_points` turns them into concrete points.
    """

    scheme: SchemeId
    n: list[int]
    rates: dict
    error_model: ErrorModel
    companions: bool = False
    solver: dict = field(default_factory=dict)
    markov: list[str] = field(default_factory=list)
    tune: dict | None = None
    seed: int = 0
    out: str | None = None
    eta2: float = 1.0
    source: str = "<config>"

    def canonical(self) -> dict:
        """Content that determines results; output location is excluded."""
        return {"scheme": self.scheme.value, "n": self.n, "rates": self.rates,
                "error_model": self.error_model.value, "companions": self.companions,
                "solver": self.solver, "markov": sorted(self.markov), "tune": self.tune,
                "seed": self.seed, "eta2": self.eta2}

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def solver_config(self) -> SolverConfig:
        kw = dict(self.solver)
        if "method" in kw:
            kw["method"] = Method(kw["method"])
        return SolverConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    try:
        x = float(v)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {v!r}") from None
    if not math.isfinite(x) or x < 0:
        raise ConfigError(f"{where}: rates must be finite and >= 0, got {v!r}")
    return x


def _rate_spec(name, v, where, rate_names):
    """Normalize one rate entry to a number or a one-key dict."""
    if not isinstance(v, dict):
        return _number(v, where)
    keys = set(v)
    if keys == {"values"}:
        vals = v["values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{where}.values: expected a non-empty list")
        return {"values": [_number(x, f"{where}.values[{i}]") for i, x in enumerate(vals)]}
    if keys == {"log", "points"}:
        rng, m = v["log"], v["points"]
        if not (isinstance(rng, list) and len(rng) == 2):
            raise ConfigError(f"{where}.log: expected [low, high]")
        lo, hi = (_number(x, f"{where}.log") for x in rng)
        if not (isinstance(m, int) and not isinstance(m, bool) and m >= 1) or lo <= 0 or hi < lo:
            raise ConfigError(f"{where}: need 0 < low <= high and an integer points >= 1")
        return {"log": [lo, hi], "points": m}
    if keys == {"same_as"}:
        if v["same_as"] not in rate_names or v["same_as"] == name:
            raise ConfigError(f"{where}.same_as: {v['same_as']!r} is not another listed rate")
        return {"same_as": v["same_as"]}
    if keys == {"optimal"}:
        if name != "kappa_u":
            raise ConfigError(f"{where}.optimal: only kappa_u can be set from the optimum")
        try:
            return {"optimal": Estimate(str(v["optimal"])).value}
        except ValueError:
            raise ConfigError(f"{where}.optimal: expected A or B, got {v['optimal']!r}") from None
    raise ConfigError(f"{where}: unknown rate form with keys {sorted(keys)}; "
                      "use values, log+points, same_as or optimal")


def grid_values(spec) -> list[float]:
    if isinstance(spec, float):
        return [spec]
    if "values" in spec:
        return list(spec["values"])
    lo, hi = spec["log"]
    return [float(x) for x in np.logspace(math.log10(lo), math.log10(hi), spec["points"])]


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """
    Parse and fully validate a YAML config.

    Raises
    ------
    ConfigError
        With ``source:line`` and the offending key in the message.
    """
    try:
        data = yaml.safe_load(text)
        lines = _line_index(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{loc}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")

    def where(*path):
        line = lines.get(path)
        key = ".".join(str(p) for p in path)
        return f"{source}:{line}: {key}" if line else f"{source}: {key}"

    unknown = set(data) - TOP_KEYS
    if unknown:
        k = sorted(unknown, key=str)[0]
        raise ConfigError(f"{where(k)}: unknown key (allowed: {', '.join(sorted(TOP_KEYS))})")
    if "scheme" not in data:
        raise ConfigError(f"{source}: missing required key 'scheme'")
    try:
        scheme = SchemeId(data["scheme"])
    except ValueError:
        raise ConfigError(f"{where('scheme')}: unknown scheme {data['scheme']!r} "
                          f"(one of {', '.join(s.value for s in SchemeId)})") from None

    n_raw = data.get("n", 3)
    ns = n_raw if isinstance(n_raw, list) else [n_raw]
    for i, v in enumerate(ns):
        if isinstance(v, bool) or not isinstance(v, int) or v < 2:
            loc = where("n", i) if isinstance(n_raw, list) else where("n")
            raise ConfigError(f"{loc}: n must be an integer >= 2, got {v!r}")

    rates_raw = data.get("rates") or {}
    if not isinstance(rates_raw, dict):
        raise ConfigError(f"{where('rates')}: expected a mapping of rate names")
    names = set(RateSet.names())
    allowed = names | PSEUDO_RATES
    rates = {}
    for k, v in rates_raw.items():
        if k not in allowed:
            raise ConfigError(f"{where('rates', k)}: unknown rate (allowed: {', '.join(sorted(allowed))})")
        rates[k] = _rate_spec(k, v, where("rates", k), set(rates_raw))
    if "kappa_u_eff" in rates and ({"kappa_u", "kappa_t"} & set(rates)):
        raise ConfigError(f"{where('rates', 'kappa_u_eff')}: cannot be combined with kappa_u or kappa_t")
    for k, v in rates.items():
        if isinstance(v, dict) and "same_as" in v and isinstance(rates[v["same_as"]], dict) \
                and "same_as" in rates[v["same_as"]]:
            raise ConfigError(f"{where('rates', k)}.same_as: chained references are not allowed")
        if isinstance(v, dict) and "optimal" in v:
            if scheme is not SchemeId.QutritWave:
                raise ConfigError(f"{where('rates', k)}: optimal launch rate needs scheme qutrit_wave")
            for dep in ("kappa_c", "kappa_p"):
                if dep not in rates:
                    raise ConfigError(f"{where('rates', k)}: optimal launch rate needs {dep}")

    try:
        model = ErrorModel(data["error_model"]) if "error_model" in data else (
            ErrorModel.QutritDepolarizing if scheme is SchemeId.QutritWave else ErrorModel.QubitFlips)
    except ValueError:
        raise ConfigError(f"{where('error_model')}: unknown error model {data['error_model']!r}") from None

    companions = data.get("companions", False)
    if not isinstance(companions, bool):
        raise ConfigError(f"{where('companions')}: expected true or false")

    solver = data.get("solver") or {}
    if not isinstance(solver, dict):
        raise ConfigError(f"{where('solver')}: expected a mapping")
    for k in solver:
        if k not in SOLVER_KEYS:
            raise ConfigError(f"{where('solver', k)}: unknown key (allowed: {', '.join(sorted(SOLVER_KEYS))})")
    solver = dict(solver)
    if "method" in solver and solver["method"] not in {m.value for m in Method}:
        raise ConfigError(f"{where('solver', 'method')}: {solver['method']!r} is not one of "
                          f"{', '.join(m.value for m in Method)}")
    try:
        SolverConfig(**{k: (Method(v) if k == "method" else v) for k, v in solver.items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where('solver')}: {exc}") from None

    markov = data.get("markov") or []
    if not isinstance(markov, list):
        raise ConfigError(f"{where('markov')}: expected a list")
    for i, m in enumerate(markov):
        if m not in MARKOV_ITEMS:
            raise ConfigError(f"{where('markov', i)}: unknown item {m!r} "
                              f"(allowed: {', '.join(sorted(MARKOV_ITEMS))})")

    tune = data.get("tune")
    if tune is not None:
        if not isinstance(tune, dict):
            raise ConfigError(f"{where('tune')}: expected a mapping")
        for k in tune:
            if k not in TUNE_KEYS:
                raise ConfigError(f"{where('tune', k)}: unknown key (allowed: {', '.join(sorted(TUNE_KEYS))})")
        try:
            objective = Objective(tune.get("objective", "full")).value
        except ValueError:
            raise ConfigError(f"{where('tune', 'objective')}: expected full or markov") from None
        free_raw = tune.get("free")
        if not isinstance(free_raw, dict) or not free_raw:
            raise ConfigError(f"{where('tune')}: 'free' must map rate names to grids")
        free = {}
        for k, v in free_raw.items():
            if k not in allowed:
                raise ConfigError(f"{where('tune', 'free', k)}: unknown rate")
            spec = _rate_spec(k, v, where("tune", "free", k), set())
            if not isinstance(spec, dict) or not ({"values", "log"} & set(spec)):
                raise ConfigError(f"{where('tune', 'free', k)}: expected values or log+points")
            free[k] = spec
        tune = {"objective": objective, "free": free}

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"{where('seed')}: expected an unsigned 64-bit integer")
    eta2 = data.get("eta2", 1.0)
    if isinstance(eta2, bool) or not isinstance(eta2, (int, float)) or eta2 <= 0:
        raise ConfigError(f"{where('eta2')}: expected a positive number")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"{where('out')}: expected a path")
    return ExperimentConfig(scheme, [int(v) for v in ns], rates, model, companions, solver,
                            list(markov), tune, int(seed), out, float(eta2), source)


# ---------------------------------------------------------------------------
# points


def _resolve(values: dict, n: int) -> RateSet:
    """Concrete rates from a mapping that may hold same_as and optimal markers."""
    fixed = {k: v for k, v in values.items() if isinstance(v, float)}
    for k, v in values.items():
        if isinstance(v, dict) and "same_as" in v:
            fixed[k] = fixed[v["same_as"]]
    eff = fixed.pop("kappa_u_eff", None)
    if eff is not None:
        fixed["kappa_u"] = fixed["kappa_t"] = 2.0 * eff
    rates = RateSet(**fixed)
    for k, v in values.items():
        if isinstance(v, dict) and "optimal" in v:
            opt, _ = optimal_rates_qutrit_wave(n, rates.kappa_c, rates.kappa_p, v["optimal"])
            rates = RateSet(**{**rates.as_dict(), "kappa_u": opt.kappa_u})
    return rates


def expand_points(cfg: ExperimentConfig) -> list[dict]:
    """
    All sweep points in output order.

    Each point is ``{"n": n, "rates": {name: value}}``; sweep axes vary
    fastest for the last listed rate.
    """
    axes = [(k, grid_values(v)) for k, v in cfg.rates.items()
            if isinstance(v, float) or "values" in v or "log" in v]
    points = []
    for n in cfg.n:
        for combo in itertools.product(*(g for _, g in axes)):
            vals = dict(cfg.rates)
            vals.update({k: float(x) for (k, _), x in zip(axes, combo)})
            points.append({"n": n, "rates": _resolve(vals, n).as_dict(),
                           "sweep": {k: float(x) for (k, g), x in zip(axes, combo) if len(g) > 1}})
    return points


def _estimates(scheme: SchemeId, n: int, rates: RateSet, eta2: float) -> dict:
    """Analytic and chain estimates of the error, where defined."""
    est = {}
    try:
        if scheme is SchemeId.QutritWave:
            pa = predicted_error(scheme, n, rates, Estimate.MethodA)
            pb = predicted_error(scheme, n, rates, Estimate.MethodB)
            est["predicted_A"] = pa.raw
            est["predicted_B"] = pb.raw
            est["regime_violated"] = pa.regime_violated or pb.regime_violated
            est["sequential_chain"] = 1.0 - ctmc_stationary(build_qutrit_sequential_chain(n, rates)[0])[f"G{n - 1}"]
            est["wave_chain"] = 1.0 - ctmc_stationary(build_qutrit_wave_chain_full(n, rates))[wave_node_label(n, n - 1)]
            est["method2"] = 1.0 - ghz_estimate_method2(n, rates)
        elif scheme is SchemeId.StateCond and n >= 3:
            pe = predicted_error(scheme, n, rates)
            est["predicted"] = pe.raw
            est["regime_violated"] = pe.regime_violated
            est["llp_exact"] = 1.0 - llp_exact(n, rates).aggregates["p_GHZ"]
            if rates.kappa_st > 0:
                est["imperfect_sync"] = 1.0 - imperfect_sync_correction(n, rates, eta2)
    except ValueError as exc:
        log.info("estimates unavailable for %s n=%d: %s", scheme.value, n, exc)
    return est


def run_point(cfg: ExperimentConfig, point: dict) -> dict:
    """
    Solve one point; failures are recorded in ``status`` rather than raised.

    Wall time is logged but not returned, so output files stay identical
    between runs.
    """
    n = point["n"]
    rates = RateSet(**point["rates"])
    row = {"status": "ok"}
    try:
        spec = build_scheme(cfg.scheme, n, rates, companions=cfg.companions)
        errors = build_error_channels(spec.layout, rates, cfg.error_model)
        rep = solve_steady_state(spec, errors, cfg.solver_config())
        log.info("n=%d %s solved by %s in %.3fs", n, point["sweep"], rep.method, rep.wall_time)
        row.update(fidelity=rep.ghz_fidelity, error=rep.error, residual=rep.residual,
                   min_eigenvalue=rep.min_eigenvalue, trace=rep.trace, method=rep.method,
                   unknowns=rep.unknowns)
    except Exception as exc:  # per-point failure is data, not a crash
        row.update(status=f"failed: {type(exc).__name__}: {exc}".replace("\n", " "),
                   fidelity=float("nan"), error=float("nan"))
    if "estimates" in cfg.markov or not cfg.markov:
        row["estimates"] = _estimates(cfg.scheme, n, rates, cfg.eta2)
    return row


class ResultCache:
    """
    Per-point results on disk, keyed by config hash, point and tool version.
    """

    def __init__(self, root, cfg: ExperimentConfig, enabled: bool = True):
        self.root = Path(root) / ".cache"
        self.cfg_hash = cfg.config_hash()
        self.enabled = enabled

    def key(self, point: dict) -> str:
        blob = json.dumps({"config": self.cfg_hash, "point": point, "version": __version__},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def get(self, point: dict):
        if not self.enabled:
            return None
        f = self.root / f"{self.key(point)}.json"
        if not f.exists():
            return None
        try:
            return json.loads(f.read_text())
        except (OSError, ValueError):
            return None

    def put(self, point: dict, row: dict):
        if not self.enabled:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        f = self.root / f"{self.key(point)}.json"
        tmp = f.with_suffix(".tmp")
        tmp.write_text(json.dumps(row, sort_keys=True))
        os.replace(tmp, f)


def _run(args):
    cfg, point = args
    return run_point(cfg, point)


def run_points(cfg: ExperimentConfig, points: list[dict], cache: ResultCache,
               workers: int | None = None) -> list[dict]:
    """Evaluate points with a process pool; rows come back in point order."""
    rows = [cache.get(p) for p in points]
    todo = [i for i, r in enumerate(rows) if r is None]
    workers = (os.cpu_count() or 1) if workers is None else max(1, workers)
    if workers == 1 or len(todo) <= 1:
        fresh = [run_point(cfg, points[i]) for i in todo]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(todo))) as ex:
            fresh = list(ex.map(_run, [(cfg, points[i]) for i in todo]))
    for i, r in zip(todo, fresh):
        # round-trip through JSON so cached and fresh rows are identical
        r = json.loads(json.dumps(r, sort_keys=True))
        rows[i] = r
        if r["status"] == "ok":
            cache.put(points[i], r)
    return rows


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_table(out_dir, stem: str, columns: list[str], rows: list[dict]) -> Path:
    """Write ``stem.csv`` with 17 significant digits and a ``stem.json`` mirror."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    path = out_dir / f"{stem}.csv"
    path.write_text(buf.getvalue())

    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return v

    records = [{c: clean(r.get(c)) for c in columns} for r in rows]
    (out_dir / f"{stem}.json").write_text(json.dumps({"columns": columns, "rows": records},
                                                     indent=1, sort_keys=True) + "\n")
    return path


def flatten_rows(points: list[dict], rows: list[dict]) -> tuple[list[str], list[dict]]:
    """Merge points and results into flat records with a stable column order."""
    rate_cols = list(RateSet.names())
    est_cols = []
    for r in rows:
        for k in r.get("estimates", {}):
            if k not in est_cols:
                est_cols.append(k)
    base = ["fidelity", "error", "residual", "min_eigenvalue", "trace", "method", "unknowns"]
    flat = []
    for p, r in zip(points, rows):
        rec = {"n": p["n"], **p["rates"], **{k: r.get(k, "") for k in base}, "status": r["status"]}
        rec.update({f"est_{k}": v for k, v in r.get("estimates", {}).items()})
        flat.append(rec)
    return ["n"] + rate_cols + base + [f"est_{k}" for k in est_cols] + ["status"], flat


def mixed_fraction(q: Fraction) -> str:
    """``47/8`` as ``5+7/8``."""
    whole, rem = divmod(q.numerator, q.denominator)
    return str(whole) if rem == 0 else f"{whole}+{rem}/{q.denominator}"


def markov_rows(cfg: ExperimentConfig, rates: RateSet, out_dir=None) -> list[dict]:
    """
    Chain-level comparisons for every ``n`` of the config.

    Rows hold ``n``, ``quantity``, ``value``, ``reference`` and the absolute
    difference. Chains are exported as edge lists when ``out_dir`` is given.
    """
    items = set(cfg.markov) or {"chains", "lattice", "clock", "frontier"}
    rows = []

    def add(n, quantity, value, reference=float("nan")):
        diff = abs(value - reference) if isinstance(value, float) and math.isfinite(reference) else float("nan")
        rows.append({"n": n, "quantity": quantity, "value": value, "reference": reference,
                     "abs_diff": diff})

    def export(model, name):
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / f"{name}.tsv").write_text(model.to_edge_list())

    for n in cfg.n:
        if "lattice" in items and cfg.scheme is SchemeId.QutritWave:
            q = lattice_denominator(n)
            add(n, "lattice_denominator", mixed_fraction(q))
            if rates.kappa_st > 0:
                add(n, "kappa_Rmu", float(rates.kappa_st / q))
        if "chains" in items and cfg.scheme is SchemeId.QutritWave:
            model, closed = build_qutrit_sequential_chain(n, rates)
            export(model, f"sequential_n{n}")
            add(n, "sequential_p_ghz", ctmc_stationary(model)[f"G{n - 1}"], closed)
            add(n, "sequential_first_order", sequential_first_order(n, rates), closed)
            full = build_qutrit_wave_chain_full(n, rates)
            export(full, f"wave_chain_n{n}")
            add(n, "wave_chain_p_ghz", ctmc_stationary(full)[wave_node_label(n, n - 1)],
                ghz_estimate_method2(n, rates))
            agg = ctmc_stationary(build_qutrit_aggregate_chain(n, rates))
            add(n, "aggregate_p_all_low", agg["l" * n])
        if "chains" in items and cfg.scheme is SchemeId.StateCond and n >= 3:
            model = build_reduced_state_cond_chain(n, rates)
            export(model, f"state_cond_n{n}")
            exact = llp_exact(n, rates).aggregates["p_GHZ"]
            add(n, "state_cond_p_ghz", ghz_population(ctmc_stationary(model)), exact)
            add(n, "state_cond_leading_order", llp_leading_order(n, rates), exact)
        clock_scheme = cfg.scheme in (SchemeId.StateCond, SchemeId.JumpCondBipartite)
        if "clock" in items and clock_scheme:
            variant = ClockVariant.ThreeLevel if cfg.scheme is SchemeId.StateCond else ClockVariant.FourLevelJumpCond
            model = build_ancilla_clock_ctmc(n, rates, variant)
            export(model, f"clock_n{n}")
            agg = clock_aggregates(ctmc_stationary(model), n)
            if variant is ClockVariant.ThreeLevel:
                pg, pe, pm = principal_populations_formula(rates)
                for key, ref in (("g", pg), ("e", pe), ("m", pm)):
                    add(n, f"p_{key * n}", agg[f"p_{key * n}"], ref)
                eps1 = max(rates.kappa_t, rates.kappa_u) / rates.kappa_d
                add(n, "off_principal", agg["off_principal"],
                    off_principal_bound(n, eps1, rates.kappa_d / rates.kappa_st))
            else:
                add(n, "off_principal", agg["off_principal"])
        if "frontier" in items and cfg.scheme is SchemeId.StateCond:
            rep = verify_frontier_convergence(n, 1000, cfg.seed)
            add(n, "frontier_ok", float(rep.ok), 1.0)
            add(n, "frontier_max_steps", float(rep.max_steps))
    return rows

"""
Rate tuning: analytic optima, predicted errors and grid search.

Grid search is the reference optimizer. Each point builds the reservoir,
adds the default error channels and either solves the full Lindbladian
(``FullSolve``) or the matching detection-signal chain
(``MarkovEstimate``).
"""

from __future__ import annotations

import csv
import enum
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .markov.ctmc import ctmc_stationary
from .markov.statecond import llp_exact, llp_leading_order, optimal_rates_state_cond
from .markov.wave import build_qutrit_wave_chain_full, wave_node_label
from .reservoirs import ErrorModel, RateSet, SchemeId, build_error_channels, build_scheme
from .steady import SolverConfig, solve_steady_state

__all__ = [
    "Estimate",
    "Objective",
    "TuningRatios",
    "PredictedError",
    "TuneResult",
    "optimal_rates_qutrit_wave",
    "optimal_rates_state_cond",
    "predicted_error",
    "grid_search",
    "log_grid",
    "default_error_model",
    "evaluate_point",
    "apply_free_rates",
    "MAX_GRID_POINTS",
]

log = logging.getLogger(__name__)

MAX_GRID_POINTS = 10_000

#: Pseudo-rate for grids over ``kappa~_u``; sets ``kappa_u = kappa_t = 2 value``.
EFFECTIVE_UP = "kappa_u_eff"


class Estimate(str, enum.Enum):
    MethodA = "A"
    MethodB = "B"


class Objective(str, enum.Enum):
    FullSolve = "full"
    MarkovEstimate = "markov"


@dataclass(frozen=True)
class TuningRatios:
    """
    Dimensionless rate ratios.

    ``eps = ku/kst``, ``eps_p = kp/ku``, ``eps1 = max(kt, ku)/kd``,
    ``eps2 = kd/kst`` and ``gamma = kc/kst``. Ratios whose denominator is
    zero are ``nan``.
    """

    eps: float
    eps_p: float
    eps1: float
    eps2: float
    gamma: float

    @classmethod
    def from_rates(cls, r: RateSet) -> "TuningRatios":
        def ratio(a, b):
            return a / b if b > 0 else float("nan")
        return cls(eps=ratio(r.kappa_u, r.kappa_st), eps_p=ratio(r.kappa_p, r.kappa_u),
                   eps1=ratio(max(r.kappa_t, r.kappa_u), r.kappa_d),
                   eps2=ratio(r.kappa_d, r.kappa_st), gamma=ratio(r.kappa_c, r.kappa_st))

    def timescales(self, r: RateSet) -> tuple[float, ...]:
        """Inverse rates ``(1/kp, 1/ku, 1/kd, 1/kst)`` from slowest to fastest."""
        return tuple(1 / v if v > 0 else float("inf")
                     for v in (r.kappa_p, r.kappa_u, r.kappa_d, r.kappa_st))


@dataclass(frozen=True)
class PredictedError:
    """
    Analytic error estimate.

    ``raw`` is the unclamped formula value; ``value`` is clipped to
    ``[0, 1]``. ``regime_violated`` is set when the first-order corrections
    add up to more than 0.5 or the formula left ``[0, 1]``.
    """

    value: float
    raw: float
    regime_violated: bool
    clamped: bool


def _predicted(raw: float) -> PredictedError:
    value = min(max(raw, 0.0), 1.0)
    clamped = value != raw
    return PredictedError(value, raw, clamped or raw > 0.5, clamped)


def optimal_rates_qutrit_wave(n: int, kappa_c: float, kappa_p: float,
                              estimate: Estimate | str = Estimate.MethodB
                              ) -> tuple[RateSet, PredictedError]:
    """
    Launch rate minimizing the first-order qutrit-wave error at ``kappa_st = kappa_c``.

    MethodA balances ``n eps_p + (2n-1) eps`` and gives
    ``eps = sqrt(n kp / ((2n-1) kc))`` with error
    ``2 sqrt(n (2n-1) kp/kc)``. MethodB balances ``n eps_p + n eps`` and
    gives ``eps = eps_p = sqrt(kp/kc)`` with error ``2n sqrt(kp/kc)``.
    """
    estimate = Estimate(estimate)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not kappa_c > kappa_p > 0:
        raise ValueError("need kappa_c > kappa_p > 0")
    x = kappa_p / kappa_c
    if estimate is Estimate.MethodA:
        eps = math.sqrt(n * x / (2 * n - 1))
        err = 2 * math.sqrt(n * (2 * n - 1) * x)
    else:
        eps = math.sqrt(x)
        err = 2 * n * eps
    rates = RateSet(kappa_u=eps * kappa_c, kappa_st=kappa_c, kappa_c=kappa_c, kappa_p=kappa_p)
    return rates, _predicted(err)


def predicted_error(scheme: SchemeId | str, n: int, rates: RateSet,
                    estimate: Estimate | str = Estimate.MethodB) -> PredictedError:
    """
    First-order error of a scheme at given rates.

    Qutrit wave: ``n eps_p + n eps + (n-1) eps/gamma`` (MethodA) or
    ``n eps_p + n eps`` (MethodB). State conditioning: one minus the
    leading-order detection-chain population.
    """
    scheme = SchemeId(scheme)
    if scheme is SchemeId.QutritWave:
        rates.require("kappa_u", "kappa_st", "kappa_c", scheme=scheme.value)
        t = TuningRatios.from_rates(rates)
        raw = n * t.eps_p + n * t.eps
        if Estimate(estimate) is Estimate.MethodA:
            raw += (n - 1) * t.eps / t.gamma
        return _predicted(raw)
    if scheme is SchemeId.StateCond:
        rates.require("kappa_u", "kappa_t", "kappa_d", "kappa_c", "kappa_r", scheme=scheme.value)
        return _predicted(1.0 - llp_leading_order(n, rates))
    raise ValueError(f"no analytic error model for scheme {scheme.value!r}")


def log_grid(center: float, decades: float = 1.0, per_decade: int = 13) -> np.ndarray:
    """Log-spaced grid spanning ``center * 10**[-decades, decades]``."""
    if center <= 0:
        raise ValueError("center must be > 0")
    m = int(round(2 * decades * (per_decade - 1))) + 1
    return center * np.logspace(-decades, decades, m)


def default_error_model(scheme: SchemeId | str) -> ErrorModel:
    if SchemeId(scheme) is SchemeId.QutritWave:
        return ErrorModel.QutritDepolarizing
    return ErrorModel.QubitFlips


def apply_free_rates(base: RateSet, values: dict[str, float]) -> RateSet:
    upd = {}
    for name, v in values.items():
        if name == EFFECTIVE_UP:
            upd["kappa_u"] = upd["kappa_t"] = 2.0 * v
        elif name in RateSet.names():
            upd[name] = v
        else:
            raise ValueError(f"unknown rate {name!r}")
    return replace(base, **upd)


def evaluate_point(scheme: SchemeId | str, n: int, rates: RateSet,
                   objective: Objective | str = Objective.FullSolve,
                   error_model: ErrorModel | str | None = None,
                   solver: SolverConfig | None = None) -> float:
    """Error ``1 - p_GHZ`` of one rate set under the chosen objective."""
    scheme = SchemeId(scheme)
    if Objective(objective) is Objective.FullSolve:
        spec = build_scheme(scheme, n, rates)
        model = default_error_model(scheme) if error_model is None else error_model
        errors = build_error_channels(spec.layout, rates, model)
        return solve_steady_state(spec, errors, solver).error
    if scheme is SchemeId.QutritWave:
        rep = ctmc_stationary(build_qutrit_wave_chain_full(n, rates))
        return 1.0 - rep[wave_node_label(n, n - 1)]
    if scheme is SchemeId.StateCond:
        return 1.0 - llp_exact(n, rates).aggregates["p_GHZ"]
    raise ValueError(f"no detection chain for scheme {scheme.value!r}")


@dataclass(eq=False)
class TuneResult:
    """
    Outcome of a grid search.

    ``points`` lists one row per grid point in grid order with the free
    rate values, ``error`` (``nan`` on failure) and ``status``.
    """

    best: RateSet | None
    error: float
    objective: Objective
    free: tuple[str, ...]
    shape: tuple[int, ...]
    points: list[dict] = field(default_factory=list)
    failures: int = 0

    @property
    def best_values(self) -> dict[str, float]:
        if self.best is None:
            return {}
        out = {}
        for name in self.free:
            out[name] = self.best.kappa_u / 2 if name == EFFECTIVE_UP else getattr(self.best, name)
        return out

    def surface(self) -> np.ndarray:
        return np.array([p["error"] for p in self.points]).reshape(self.shape)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(self.free) + ["error", "objective", "status"])
            for p in self.points:
                w.writerow([f"{p[k]:.17g}" for k in self.free]
                           + [f"{p['error']:.17g}", self.objective.value, p["status"]])


def _task(args):
    scheme, n, rates, objective, error_model, solver = args
    try:
        return evaluate_point(scheme, n, rates, objective, error_model, solver), "ok"
    except Exception as exc:  # recorded per point, never fatal
        return float("nan"), f"failed: {type(exc).__name__}: {exc}".replace("\n", " ")


def grid_search(scheme: SchemeId | str, n: int, fixed: RateSet, free: dict[str, object],
                objective: Objective | str = Objective.FullSolve,
                error_model: ErrorModel | str | None = None,
                solver: SolverConfig | None = None, workers: int | None = 1) -> TuneResult:
    """
    Exhaustive search over a product grid of free rates.

    Parameters
    ----------
    scheme : SchemeId
    n : int
    fixed : RateSet
        Rates not being tuned.
    free : dict
        Maps rate names to 1-d grids. ``"kappa_u_eff"`` tunes ``kappa~_u``
        by setting ``kappa_u = kappa_t = 2 value``.
    objective : Objective
    workers : int, optional
        Process count; ``None`` uses all logical cores.

    Returns
    -------
    TuneResult
        Argmin over successful points; ties go to the lexicographically
        smallest rate tuple. Failed points are kept with ``nan`` error.
    """
    objective = Objective(objective)
    names = tuple(free)
    grids = [np.asarray(free[k], dtype=float).ravel() for k in names]
    shape = tuple(len(g) for g in grids)
    total = int(np.prod(shape)) if shape else 1
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid has {total} points, limit is {MAX_GRID_POINTS}")
    combos = list(itertools.product(*grids))
    rate_sets = [apply_free_rates(fixed, dict(zip(names, c))) for c in combos]
    tasks = [(SchemeId(scheme), n, r, objective, error_model, solver) for r in rate_sets]
    workers = (os.cpu_count() or 1) if workers is None else max(1, int(workers))
    if workers == 1 or len(tasks) == 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    points, best, failures = [], None, 0
    for combo, rates, (err, status) in zip(combos, rate_sets, results):
        points.append({**dict(zip(names, map(float, combo))), "error": err, "status": status})
        if status != "ok":
            failures += 1
            log.warning("grid point %s %s", dict(zip(names, combo)), status)
            continue
        key = (err, tuple(float(c) for c in combo))
        if best is None or key < best[0]:
            best = (key, rates)
    if best is None:
        return TuneResult(None, float("nan"), objective, names, shape, points, failures)
    return TuneResult(best[1], float(best[0][0]), objective, names, shape, points, failures)

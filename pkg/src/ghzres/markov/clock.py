"""
Classical dynamics of the ancilla clock.

Ancillas never develop coherences, so their joint populations follow a CTMC
over words such as ``"gem"``. In the three-level clock each ancilla cycles
g -> e -> m -> g spontaneously (rates ``kappa_u``, ``kappa_d``, ``kappa_t``)
and additionally moves to its next level at ``kappa_st`` for each
neighbour already sitting on that level. The four-level variant used with
jump conditioning cycles g -> f -> e -> m -> g; its stimulated g -> f move is
triggered by a neighbour in f or in e.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..reservoirs import RateSet
from .ctmc import ChainReport, CtmcModel, ctmc_stationary

__all__ = [
    "ClockVariant",
    "build_ancilla_clock_ctmc",
    "clock_aggregates",
    "frontier_count",
    "verify_frontier_convergence",
    "FrontierReport",
    "principal_populations_formula",
    "off_principal_bound",
    "effective_up_rate",
    "MAX_CLOCK_STATES",
]

#: State cap of the exact clock chain (3**12 configurations).
MAX_CLOCK_STATES = 3 ** 12


class ClockVariant(str, enum.Enum):
    ThreeLevel = "three_level"
    FourLevelJumpCond = "four_level"


_ALPHABET = {ClockVariant.ThreeLevel: "gem", ClockVariant.FourLevelJumpCond: "gfem"}


def _spontaneous(rates: RateSet, variant: ClockVariant) -> np.ndarray:
    if variant is ClockVariant.ThreeLevel:
        return np.array([rates.kappa_u, rates.kappa_d, rates.kappa_t])
    return np.array([rates.kappa_u, rates.kappa_f, rates.kappa_d, rates.kappa_t])


def _stimulating(variant: ClockVariant) -> list[tuple[int, ...]]:
    """For each level, the neighbour levels that pull it forward."""
    if variant is ClockVariant.ThreeLevel:
        return [(1,), (2,), (0,)]
    # g -> f next to f or e; f -> e only spontaneous; e -> m next to m; m -> g next to g
    return [(1, 2), (), (3,), (0,)]


def _words(n: int, q: int) -> np.ndarray:
    idx = np.arange(q ** n)
    return np.stack([(idx // q ** (n - 1 - s)) % q for s in range(n)], axis=1)


def build_ancilla_clock_ctmc(n: int, rates: RateSet,
                             variant: ClockVariant | str = ClockVariant.ThreeLevel) -> CtmcModel:
    """
    Exact population dynamics of ``n`` clock ancillas.

    Parameters
    ----------
    n : int
        Number of ancillas; the chain has ``3**n`` or ``4**n`` states.
    rates : RateSet
    variant : ClockVariant

    Returns
    -------
    CtmcModel
        States are the words over ``"gem"`` or ``"gfem"``.

    Raises
    ------
    ValueError
        If the number of configurations exceeds :data:`MAX_CLOCK_STATES`.
    """
    variant = ClockVariant(variant)
    alphabet = _ALPHABET[variant]
    q = len(alphabet)
    if n < 1:
        raise ValueError("n must be >= 1")
    if q ** n > MAX_CLOCK_STATES:
        raise ValueError(f"{q}**{n} configurations exceed the cap of {MAX_CLOCK_STATES}")
    W = _words(n, q)
    N = q ** n
    spont = _spontaneous(rates, variant)
    stim = _stimulating(variant)
    rows, cols, vals = [], [], []
    src = np.arange(N)
    for s in range(n):
        level = W[:, s]
        nxt = (level + 1) % q
        rate = spont[level].astype(float)
        for nb in (s - 1, s + 1):
            if 0 <= nb < n:
                pulled = np.zeros(N, dtype=bool)
                for lv in range(q):
                    pulled |= (level == lv) & np.isin(W[:, nb], stim[lv])
                rate = rate + rates.kappa_st * pulled
        dst = src + (nxt - level) * q ** (n - 1 - s)
        keep = rate > 0
        rows.append(dst[keep])
        cols.append(src[keep])
        vals.append(rate[keep])
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    states = tuple("".join(alphabet[c] for c in w) for w in W)
    return CtmcModel(states, A)


def clock_aggregates(report: ChainReport, n: int) -> dict[str, float]:
    """Principal-configuration populations and the remaining mass."""
    out = {}
    letters = sorted({c for s in report.states for c in s}, key="gfem".index)
    for c in letters:
        out["p_" + c * n] = report[c * n]
    out["off_principal"] = 1.0 - sum(out.values())
    report.aggregates.update(out)
    return out


def frontier_count(config: str, variant: ClockVariant | str = ClockVariant.ThreeLevel) -> int:
    """
    Number of adjacent ancilla pairs in different levels.

    In the four-level variant an ``f``/``e`` pair does not count.
    """
    variant = ClockVariant(variant)
    alphabet = _ALPHABET[variant]
    if any(c not in alphabet for c in config):
        raise ValueError(f"{config!r} is not a word over {alphabet!r}")
    count = 0
    for a, b in zip(config, config[1:]):
        if a != b and not (variant is ClockVariant.FourLevelJumpCond and {a, b} == {"f", "e"}):
            count += 1
    return count


@dataclass
class FrontierReport:
    n: int
    trials: int
    max_steps: int
    all_absorbed: bool
    monotone: bool
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.all_absorbed and self.monotone


def _stimulated_moves(word: list[int], q: int, stim) -> list[tuple[int, int]]:
    """(site, weight) of every enabled stimulated move; weight counts pulling neighbours."""
    moves = []
    n = len(word)
    for s in range(n):
        w = sum(1 for nb in (s - 1, s + 1) if 0 <= nb < n and word[nb] in stim[word[s]])
        if w:
            moves.append((s, w))
    return moves


def verify_frontier_convergence(n: int, trials: int, seed: int,
                                initial: list[str] | None = None) -> FrontierReport:
    """
    Simulate three-level clocks driven by stimulated channels only.

    Each trial starts from a uniformly random configuration (or the given
    ``initial`` words) and follows the embedded jump chain, picking moves
    with probability proportional to their rate, until no stimulated move
    is enabled or ``10 * n * 3**n`` jumps have happened.

    Returns
    -------
    FrontierReport
        ``monotone`` is False if any jump increased the frontier count;
        ``all_absorbed`` is False if a trial stopped with frontiers left or
        hit the step cap.
    """
    q = 3
    stim = _stimulating(ClockVariant.ThreeLevel)
    rng = np.random.default_rng(seed)
    cap = 10 * n * q ** n
    letters = _ALPHABET[ClockVariant.ThreeLevel]
    starts = ([[letters.index(c) for c in w] for w in initial] if initial is not None
              else [list(rng.integers(0, q, size=n)) for _ in range(trials)])
    report = FrontierReport(n, len(starts), 0, True, True)
    for word in starts:
        word = list(word)
        f = frontier_count("".join(letters[c] for c in word))
        steps = 0
        while True:
            moves = _stimulated_moves(word, q, stim)
            if not moves or steps >= cap:
                break
            w = np.array([m[1] for m in moves], dtype=float)
            s = moves[rng.choice(len(moves), p=w / w.sum())][0]
            word[s] = (word[s] + 1) % q
            steps += 1
            f_new = frontier_count("".join(letters[c] for c in word))
            if f_new > f:
                report.monotone = False
                report.failures.append(("increase", "".join(letters[c] for c in word)))
            f = f_new
        if f != 0:
            report.all_absorbed = False
            report.failures.append(("not absorbed", "".join(letters[c] for c in word)))
        report.max_steps = max(report.max_steps, steps)
    return report


def principal_populations_formula(rates: RateSet) -> tuple[float, float, float]:
    """
    Populations of ``gg..g``, ``ee..e`` and ``mm..m`` in the fast-stimulation limit.

    They equal the stationary distribution of one isolated three-level
    cycle, i.e. are proportional to ``1/kappa_u``, ``1/kappa_d`` and
    ``1/kappa_t``.
    """
    ku, kd, kt = rates.kappa_u, rates.kappa_d, rates.kappa_t
    if min(ku, kd, kt) <= 0:
        raise ValueError("kappa_u, kappa_d and kappa_t must be > 0")
    pg = 1 / (1 + ku / kd + ku / kt)
    pe = 1 / (1 + kd / kt + kd / ku)
    pm = 1 / (1 + kt / ku + kt / kd)
    return pg, pe, pm


def off_principal_bound(n: int, eps1: float, eps2: float) -> float:
    """Bound ``(3/4)(n-1)(3n/2+1) eps1 eps2`` on the non-principal clock mass."""
    return 0.75 * (n - 1) * (1.5 * n + 1) * eps1 * eps2


def effective_up_rate(rates: RateSet) -> float:
    """Rate ``(1/kappa_u + 1/kappa_t)^-1`` of leaving ``{gg..g, mm..m}`` for ``ee..e``."""
    ku, kt = rates.kappa_u, rates.kappa_t
    if ku <= 0 or kt <= 0:
        return 0.0
    return 1.0 / (1.0 / ku + 1.0 / kt)

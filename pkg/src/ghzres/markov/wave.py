"""
Classical chains for the ancilla-free qutrit wave.

Two kinds of chains are built here.

* The aggregate chain follows each qutrit's sector only (``l`` for the
  ``{0, 1}`` sublevels, ``2`` for the wave level). It is exact for the
  sector populations of the full quantum steady state.
* Detection-signal chains group histories of jumps. The sequential chain
  requires a complete reset wave before the parity wave; the full wave
  chain lets both propagate together on a lattice of states
  ``(j1 resets, j2 parity steps)`` with ``j2 < j1``.

The expected time to cross the lattice when every step has rate
``kappa_st`` defines the rate ``kappa_Rmu``.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb

from ..reservoirs import RateSet
from .ctmc import CtmcModel

__all__ = [
    "build_qutrit_aggregate_chain",
    "build_qutrit_sequential_chain",
    "sequential_closed_form",
    "sequential_first_order",
    "lattice_nodes",
    "lattice_denominator",
    "lattice_crossing_rate",
    "lattice_expected_time",
    "lattice_relative_populations",
    "lattice_occupation",
    "ghz_estimate_method2",
    "build_qutrit_wave_chain_full",
    "wave_node_label",
]


def _check(n, minimum=2):
    if int(n) != n or n < minimum:
        raise ValueError(f"n must be an integer >= {minimum}")


def build_qutrit_aggregate_chain(n: int, rates: RateSet, include_errors: bool = True) -> CtmcModel:
    """
    Sector populations of the qutrit wave on ``{l, 2}^n``.

    Transitions: site 1 ``l -> 2`` at ``kappa_u``; bond ``(k-1, k)`` moves
    ``2`` to the right at ``kappa_st``, from ``(2, l)`` and also from
    ``(2, 2)``; site ``n`` ``2 -> l`` at ``kappa_st``. With errors, the six
    depolarizing channels of each qutrit add ``l -> 2`` at ``kappa_p`` and
    ``2 -> l`` at ``2 kappa_p``.
    """
    _check(n)
    words = ["".join(w) for w in itertools.product("l2", repeat=n)]
    edges = []
    for w in words:
        def flip(s, c, w=w):
            return w[:s] + c + w[s + 1:]
        if w[0] == "l":
            edges.append((w, flip(0, "2"), rates.kappa_u))
        if w[-1] == "2":
            edges.append((w, flip(n - 1, "l"), rates.kappa_st))
        for k in range(1, n):
            if w[k - 1] == "2":
                edges.append((w, w[:k - 1] + "l2" + w[k + 1:], rates.kappa_st))
        if include_errors:
            for s in range(n):
                if w[s] == "l":
                    edges.append((w, flip(s, "2"), rates.kappa_p))
                else:
                    edges.append((w, flip(s, "l"), 2 * rates.kappa_p))
    return CtmcModel.from_edges(words, edges)


def sequential_closed_form(n: int, rates: RateSet) -> float:
    """GHZ population of the sequential chain as a product of branch ratios."""
    kp, ku, ks, kc = n * rates.kappa_p, rates.kappa_u, rates.kappa_st, rates.kappa_c
    return (ks / (kp + ku + ks)) ** n * (kc / (kp + ku + kc)) ** (n - 1) * ku / (kp + ku)


def sequential_first_order(n: int, rates: RateSet) -> float:
    """``1 - n eps_p - n eps - (n-1) eps/gamma`` with ``eps = ku/kst``, ``eps_p = kp/ku``, ``gamma = kc/kst``."""
    eps = rates.kappa_u / rates.kappa_st
    eps_p = rates.kappa_p / rates.kappa_u
    gamma = rates.kappa_c / rates.kappa_st
    return 1 - n * eps_p - n * eps - (n - 1) * eps / gamma


def build_qutrit_sequential_chain(n: int, rates: RateSet) -> tuple[CtmcModel, float]:
    """
    Chain where a full reset wave must precede a full parity wave.

    States ``U, R1..Rn, G1..G(n-1), E`` with ``G(n-1)`` the GHZ
    configuration. Resets advance at ``kappa_st``, parity steps at
    ``kappa_c``, every state except ``E`` errs at ``n kappa_p`` and every
    state except ``U`` relaunches at ``kappa_u``.

    Returns
    -------
    model : CtmcModel
    closed_form : float
        Stationary population of ``G(n-1)``.
    """
    _check(n)
    states = ["U"] + [f"R{k}" for k in range(1, n + 1)] + [f"G{k}" for k in range(1, n)] + ["E"]
    path = states[:-1]
    edges = []
    for a, b in zip(path, path[1:]):
        edges.append((a, b, rates.kappa_c if a.startswith(("G", f"R{n}")) else rates.kappa_st))
    for s in states:
        if s != "E":
            edges.append((s, "E", n * rates.kappa_p))
        if s != "U":
            edges.append((s, "U", rates.kappa_u))
    return CtmcModel.from_edges(states, edges), sequential_closed_form(n, rates)


def lattice_nodes(n: int) -> list[tuple[int, int]]:
    """Lattice coordinates ``(j, k)``: ``j`` parity steps, ``k + 1`` resets, ``j <= k <= n-1``."""
    return [(j, k) for k in range(n) for j in range(k + 1)]


def _moves(node, n, ks, kc):
    j, k = node
    out = []
    if k < n - 1:
        out.append(((j, k + 1), ks))
    if j < k:
        out.append(((j + 1, k), kc))
    return out


def lattice_expected_time(n: int, kappa_st=1, kappa_c=None):
    """
    Expected time from launch to the GHZ node of the lattice.

    Computed by backward recursion over the acyclic lattice. With integer or
    :class:`~fractions.Fraction` rates the result is exact.
    """
    _check(n)
    kc = kappa_st if kappa_c is None else kappa_c
    one = Fraction(1) if isinstance(kappa_st, (int, Fraction)) and isinstance(kc, (int, Fraction)) else 1.0
    T = {(n - 1, n - 1): 0 * one}
    for node in sorted(lattice_nodes(n), key=lambda t: -(t[0] + t[1])):
        if node in T:
            continue
        moves = _moves(node, n, kappa_st, kc)
        out = sum(r for _, r in moves)
        T[node] = one / out + sum(r * T[m] for m, r in moves) / out
    return one / kappa_st + T[(0, 0)]


def lattice_denominator(n: int) -> Fraction:
    """Exact ``n + 1 + sum_(j=1)^(n-2) C(2j-1, j-1) / 2^(2j-1)``."""
    _check(n)
    return n + 1 + sum((Fraction(comb(2 * j - 1, j - 1), 2 ** (2 * j - 1)) for j in range(1, n - 1)),
                       Fraction(0))


def lattice_crossing_rate(n: int, kappa_st: float) -> float:
    """Inverse expected crossing time of the lattice when all steps run at ``kappa_st``."""
    return float(kappa_st / lattice_denominator(n))


def lattice_relative_populations(n: int) -> dict[tuple[int, int], Fraction]:
    """
    Steady populations of the lattice nodes relative to node ``(0, 0)``.

    Interior nodes (``k <= n-2``) follow ``C(j+k, j) / 2^(j+k)``; the last
    row obeys ``p(0, n-1) = p(0, n-2)`` and ``p(j, n-1) = p(j-1, n-1) +
    p(j, n-2)``. The GHZ node ``(n-1, n-1)`` is excluded since it depends
    on the return rate of the closed lattice.
    """
    _check(n)
    p = {(j, k): Fraction(comb(j + k, j), 2 ** (j + k)) for k in range(n - 1) for j in range(k + 1)}
    p[(0, n - 1)] = p[(0, n - 2)]
    for j in range(1, n - 1):
        p[(j, n - 1)] = p[(j - 1, n - 1)] + p[(j, n - 2)]
    return p


def lattice_occupation(n: int) -> dict[tuple[int, int], Fraction]:
    """
    Expected time spent in each lattice node per crossing, relative to ``(0, 0)``.

    Independent of :func:`lattice_relative_populations`: visit probabilities
    are pushed forward through the lattice and divided by the exit rate.
    """
    _check(n)
    visit = {(0, 0): Fraction(1)}
    occ = {}
    for node in sorted(lattice_nodes(n), key=lambda t: t[0] + t[1]):
        if node == (n - 1, n - 1):
            continue
        moves = _moves(node, n, 1, 1)
        v = visit.get(node, Fraction(0))
        occ[node] = v / len(moves)
        for m, _ in moves:
            visit[m] = visit.get(m, Fraction(0)) + v / len(moves)
    base = occ[(0, 0)]
    return {k: v / base for k, v in occ.items()}


def ghz_estimate_method2(n: int, rates: RateSet) -> float:
    """
    GHZ population when the fast lattice is summarized by one effective rate.

    ``1 / ((1 + n eps_p)(1 + eps~ + n eps_p eps~))`` with
    ``eps_p = kappa_p / kappa_u`` and ``eps~ = kappa_u / kappa_Rmu``. The
    rate ``kappa_Rmu`` is the inverse expected crossing time of the lattice
    with steps at ``kappa_st`` and ``kappa_c``.
    """
    _check(n)
    if rates.kappa_c == rates.kappa_st:
        k_rmu = lattice_crossing_rate(n, rates.kappa_st)
    else:
        k_rmu = 1.0 / lattice_expected_time(n, float(rates.kappa_st), float(rates.kappa_c))
    eps_p = rates.kappa_p / rates.kappa_u
    eps_t = rates.kappa_u / k_rmu
    return 1.0 / ((1 + n * eps_p) * (1 + eps_t + n * eps_p * eps_t))


def wave_node_label(j1: int, j2: int) -> str:
    return f"{j1}+,{j2}L"


def build_qutrit_wave_chain_full(n: int, rates: RateSet) -> CtmcModel:
    """
    Detection chain with concurrent reset and parity waves.

    States are ``U``, ``E`` and ``"j1+,j2L"`` for ``1 <= j1 <= n`` and
    ``0 <= j2 < j1``; ``"n+,(n-1)L"`` is the GHZ configuration. Resets
    advance ``j1`` at ``kappa_st``, parity steps advance ``j2`` at
    ``kappa_c``, errors lead to ``E`` at ``n kappa_p`` and launches lead to
    ``U`` at ``kappa_u``.
    """
    _check(n)
    nodes = lattice_nodes(n)
    labels = {nd: wave_node_label(nd[1] + 1, nd[0]) for nd in nodes}
    states = ["U"] + [labels[nd] for nd in nodes] + ["E"]
    edges = [("U", labels[(0, 0)], rates.kappa_st)]
    for nd in nodes:
        for m, r in _moves(nd, n, rates.kappa_st, rates.kappa_c):
            edges.append((labels[nd], labels[m], r))
    for s in states:
        if s != "E":
            edges.append((s, "E", n * rates.kappa_p))
        if s != "U":
            edges.append((s, "U", rates.kappa_u))
    return CtmcModel.from_edges(states, edges)

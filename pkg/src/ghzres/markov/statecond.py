"""
Detection-signal chain for the state-conditioned ancilla clock.

Histories of hypothetical jump detections are grouped into configurations:

``R_k``
    ``k`` data qubits reset since the clock last entered ``ee..e``.
``G_k`` (``k = 0 .. n-2``)
    all qubits reset, then parity detections have built up a partial GHZ
    pattern; ``G_HZ`` is the completed pattern.
``E``
    anything else.

Each configuration exists in the clock sector ``e`` (ancillas in
``ee..e``, resets active) and ``mg`` (ancillas in ``gg..g`` or ``mm..m``).
Rates, for ``n`` data qubits:

* clock: ``e -> mg`` at ``n kappa_d`` and ``mg -> e`` at ``n kappa~_u``;
* errors: every non-``E`` state goes to ``E`` of its sector at ``n kappa_p``;
* resets (sector ``e`` only): ``R_k -> R_(k+1)`` at ``(n-k) kappa_r``, and
  ``E``, ``G_k``, ``G_HZ`` go to ``R_1`` at ``n kappa_r``;
* parity detections: ``R_k -> E`` at ``(n-1) kappa_c`` for ``k < n``;
  ``R_n -> G_1`` at ``kappa_c`` and ``R_n -> G_0`` at ``(n-2) kappa_c``;
  ``G_k -> G_(k+1)`` and ``G_(n-2) -> G_HZ`` at ``kappa_c``.

The remaining parity detections leave the configuration unchanged. They are
self-loops of the detection picture and simply do not appear as rates.
"""

from __future__ import annotations

import math

import numpy as np

from ..reservoirs import RateSet
from .clock import effective_up_rate
from .ctmc import ChainReport, CtmcModel

__all__ = [
    "state_cond_states",
    "build_reduced_state_cond_chain",
    "llp_exact",
    "llp_leading_order",
    "optimal_rates_state_cond",
    "state_cond_predicted_error",
    "imperfect_sync_correction",
    "kappa_hat_u",
    "ghz_population",
]


def state_cond_states(n: int) -> list[str]:
    base = [f"R{k}" for k in range(1, n + 1)] + [f"G{k}" for k in range(n - 1)] + ["GHZ", "E"]
    return [f"{b}.{s}" for s in ("e", "mg") for b in base]


def _check(n):
    if int(n) != n or n < 3:
        raise ValueError("the detection chain is defined for n >= 3")


def build_reduced_state_cond_chain(n: int, rates: RateSet) -> CtmcModel:
    """
    Build the grouped detection chain of the state-conditioning scheme.

    Parameters
    ----------
    n : int
        Number of data qubits, at least 3.
    rates : RateSet
        Uses ``kappa_u``, ``kappa_t`` (through ``kappa~_u``), ``kappa_d``,
        ``kappa_r``, ``kappa_c`` and the per-qubit error rate.

    Returns
    -------
    CtmcModel
        ``2 (2n + 1)`` states labeled like ``"R2.e"`` or ``"GHZ.mg"``.
    """
    _check(n)
    ku = effective_up_rate(rates)
    kd, kr, kc = rates.kappa_d, rates.kappa_r, rates.kappa_c
    kp = rates.qubit_error_rate
    base = [f"R{k}" for k in range(1, n + 1)] + [f"G{k}" for k in range(n - 1)] + ["GHZ", "E"]
    edges = []
    for sec in ("e", "mg"):
        other = "mg" if sec == "e" else "e"
        clock = n * kd if sec == "e" else n * ku
        for b in base:
            edges.append((f"{b}.{sec}", f"{b}.{other}", clock))
            if b != "E":
                edges.append((f"{b}.{sec}", f"E.{sec}", n * kp))
        for k in range(1, n):
            edges.append((f"R{k}.{sec}", f"E.{sec}", (n - 1) * kc))
        edges.append((f"R{n}.{sec}", f"G1.{sec}", kc))
        edges.append((f"R{n}.{sec}", f"G0.{sec}", (n - 2) * kc))
        for k in range(n - 2):
            edges.append((f"G{k}.{sec}", f"G{k + 1}.{sec}", kc))
        edges.append((f"G{n - 2}.{sec}", f"GHZ.{sec}", kc))
    for k in range(1, n):
        edges.append((f"R{k}.e", f"R{k + 1}.e", (n - k) * kr))
    for b in [f"G{k}" for k in range(n - 1)] + ["GHZ", "E"]:
        edges.append((f"{b}.e", "R1.e", n * kr))
    return CtmcModel.from_edges(state_cond_states(n), edges)


def ghz_population(report: ChainReport) -> float:
    return report["GHZ.e"] + report["GHZ.mg"]


def llp_exact(n: int, rates: RateSet) -> ChainReport:
    """
    Stationary distribution of the detection chain by explicit recursion.

    The clock sectors decouple from the data, the ``R_k`` populations follow
    a one-step recursion with the effective exit rate ``a0``, and the
    ``G_k`` pairs obey a two-by-two recursion after eliminating the clock
    exchange. ``E`` collects what is left in each sector.

    Returns
    -------
    ChainReport
        Same states as :func:`build_reduced_state_cond_chain`, with
        ``aggregates`` holding ``p_GHZ``, ``p_e``, ``a0``, ``b0`` and ``b1``.
    """
    _check(n)
    ku = effective_up_rate(rates)
    kd, kr, kc = rates.kappa_d, rates.kappa_r, rates.kappa_c
    kp = rates.qubit_error_rate
    p_e = ku / (ku + kd)
    frac = (n - 1) / n * kc
    a0 = n * kp + (n - 1) * kc + n * kd * (kp + frac) / (kp + frac + ku)
    # R_k^e = c_(n-k) R_n^e; the j = n term is the non-R mass of sector e
    coeff = [1.0]
    for j in range(1, n + 1):
        coeff.append(coeff[-1] * (a0 + (j - 1) * kr) / (j * kr))
    R_n = p_e / sum(coeff)
    R_e = {k: coeff[n - k] * R_n for k in range(1, n + 1)}
    mg_factor = kd / (kp + ku + frac)
    R_mg = {k: mg_factor * R_e[k] for k in R_e}

    b0 = n * kp + kc + n * kr
    b1 = n * kp + n * ku * b0 / (b0 + n * kd) + kc
    to_mg = n * kd / (b0 + n * kd)
    G_e, G_mg = {}, {}
    for k in range(n - 1):
        if k == 0:
            src_e, src_mg = (n - 2) * R_e[n], (n - 2) * R_mg[n]
        elif k == 1:
            src_e, src_mg = G_e[0] + R_e[n], G_mg[0] + R_mg[n]
        else:
            src_e, src_mg = G_e[k - 1], G_mg[k - 1]
        G_mg[k] = (kc * src_mg + to_mg * kc * src_e) / b1
        G_e[k] = ((n * ku / b1) * kc * src_mg + (1 + to_mg * n * ku / b1) * kc * src_e) / (b0 + n * kd)
    last_e, last_mg = G_e[n - 2], G_mg[n - 2]
    GHZ_mg = ((kc * last_mg + kd / (kd + kr + kp) * kc * last_e)
              / (n * kp + n * ku * (kr + kp) / (kr + kp + kd)))
    GHZ_e = (kc * last_e + n * ku * GHZ_mg) / (n * kp + n * kr + n * kd)
    E_e = p_e - sum(R_e.values()) - sum(G_e.values()) - GHZ_e
    E_mg = (1 - p_e) - sum(R_mg.values()) - sum(G_mg.values()) - GHZ_mg

    values = {}
    for sec, R, G, ghz, E in (("e", R_e, G_e, GHZ_e, E_e), ("mg", R_mg, G_mg, GHZ_mg, E_mg)):
        values.update({f"R{k}.{sec}": v for k, v in R.items()})
        values.update({f"G{k}.{sec}": v for k, v in G.items()})
        values[f"GHZ.{sec}"] = ghz
        values[f"E.{sec}"] = E
    states = tuple(state_cond_states(n))
    rep = ChainReport(states, np.array([values[s] for s in states]))
    rep.aggregates.update(p_GHZ=GHZ_e + GHZ_mg, p_e=p_e, a0=a0, b0=b0, b1=b1)
    return rep


def _leading_terms(n, kp, ku, kc, kd, reset_time):
    return (kp / ku, n * (n - 1) * ku / kc, ku / kd, (kc + kd) * reset_time)


def llp_leading_order(n: int, rates: RateSet) -> float:
    """
    First-order GHZ population of the detection chain.

    ``1 - kp/ku~ - n(n-1) ku~/kc - ku~/kd - n ln(n) (kc + kd)/kr``.
    """
    _check(n)
    ku = effective_up_rate(rates)
    terms = _leading_terms(n, rates.qubit_error_rate, ku, rates.kappa_c, rates.kappa_d,
                           n * math.log(n) / rates.kappa_r)
    return 1.0 - sum(terms)


def kappa_hat_u(n: int, rates: RateSet, eta2: float = 1.0) -> float:
    """
    Launch rate of the clock with finite resynchronization speed ``eta2 kappa_st``.

    Reduces to ``kappa~_u`` when ``eta2 kappa_st`` is infinite and is never
    larger.
    """
    ku, kt = rates.kappa_u, rates.kappa_t
    s = eta2 * rates.kappa_st
    n0 = n - 1
    if math.isinf(s):
        return effective_up_rate(rates)
    return n * ku * kt * s / (n * ku * (s + n0 * ku + n * kt) + s * n * kt)


def imperfect_sync_correction(n: int, rates: RateSet, eta2: float = 1.0) -> float:
    """
    Leading-order GHZ population with imperfect clock synchronization.

    The reset time ``n ln(n)/kappa_r`` becomes
    ``n ln(n)/kappa_r + (n-1)/(eta2 kappa_st)`` and ``kappa~_u`` becomes
    :func:`kappa_hat_u`.
    """
    _check(n)
    ku = kappa_hat_u(n, rates, eta2)
    sync = 0.0 if math.isinf(eta2 * rates.kappa_st) else (n - 1) / (eta2 * rates.kappa_st)
    terms = _leading_terms(n, rates.qubit_error_rate, ku, rates.kappa_c, rates.kappa_d,
                           n * math.log(n) / rates.kappa_r + sync)
    return 1.0 - sum(terms)


def optimal_rates_state_cond(n: int, kappa_r: float, kappa_p: float) -> RateSet:
    """
    Intermediate rates that minimize the leading-order error.

    Balancing the four correction terms at fixed ``kappa_r`` and
    ``kappa_p`` gives ``ku~``, ``kd`` and ``kc``. The returned set splits
    ``ku~`` evenly as ``kappa_u = kappa_t = 2 ku~`` and uses
    ``kappa_st = kappa_r``.
    """
    if n < 2 or kappa_r <= 0 or kappa_p <= 0:
        raise ValueError("need n >= 2 and positive kappa_r, kappa_p")
    ratio = kappa_r / kappa_p
    ln = math.log(n)
    ku = kappa_p * ratio ** (1 / 3) / (n ** (2 / 3) * ln ** (1 / 3))
    kd = kappa_p * ratio ** (2 / 3) / (n ** (5 / 6) * ln ** (2 / 3))
    kc = kappa_p * ratio ** (2 / 3) * n ** (1 / 6) / ln ** (2 / 3)
    return RateSet(kappa_u=2 * ku, kappa_t=2 * ku, kappa_d=kd, kappa_c=kc,
                   kappa_r=kappa_r, kappa_st=kappa_r, kappa_p=kappa_p)


def state_cond_predicted_error(n: int, kappa_r: float, kappa_p: float) -> float:
    """Error scaling ``(n^(7/2) ln(n) kappa_p / kappa_r)^(1/3)`` at the optimal rates."""
    return (n ** 3.5 * math.log(n) * kappa_p / kappa_r) ** (1 / 3)


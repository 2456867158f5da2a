"""
Collapse-operator catalogs for the dissipative GHZ reservoirs.

Every builder takes the number of data subsystems ``n`` and a :class:`RateSet`
and returns a :class:`ReservoirSpec`. Operator names and signal indices are
1-based (``"N_2,r"`` resets data 2); site indices inside operators are the
0-based layout indices of :mod:`ghzres.tensor`.

Single-site states ``|+>`` and ``|->`` are ``(|0> ± |1>)/sqrt(2)`` on any
data site, including qutrits.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, fields
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import LabeledCollapseOp, LocalOperator, Site, SubsystemLayout

__all__ = [
    "RateSet",
    "SchemeId",
    "ErrorModel",
    "ReservoirSpec",
    "AuditFailed",
    "build_ltv",
    "build_ideal_clock",
    "build_state_conditioning",
    "build_state_cond_tripartite",
    "build_jump_cond_prelim",
    "build_jump_cond_bipartite",
    "build_wave_tri_jump",
    "build_wave_tri_qubit_ancilla",
    "build_wave_bipartite",
    "build_qutrit_wave",
    "build_scheme",
    "build_error_channels",
    "locality_violations",
    "sector_transition",
    "coherence_audit",
    "ghz_vector",
]


class AuditFailed(RuntimeError):
    """An operator breaks the classical sector structure of the ancillas."""


@dataclass(frozen=True)
class RateSet:
    """
    Physical rates in units of 1/time.

    ``kappa_p`` is the total per-qubit error rate (``kappa_x + kappa_z``)
    for qubit data and the per-channel depolarizing rate for qutrit data.
    """

    kappa_u: float = 0.0
    kappa_d: float = 0.0
    kappa_t: float = 0.0
    kappa_st: float = 0.0
    kappa_r: float = 0.0
    kappa_c: float = 0.0
    kappa_f: float = 0.0
    kappa_x: float = 0.0
    kappa_z: float = 0.0
    kappa_p: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{f.name} must be finite and >= 0, got {v}")
            object.__setattr__(self, f.name, v)

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def require(self, *names: str, scheme: str = ""):
        missing = [nm for nm in names if getattr(self, nm) <= 0]
        if missing:
            where = f" for {scheme}" if scheme else ""
            raise ValueError(f"rates {', '.join(missing)} must be > 0{where}")

    def flip_rates(self) -> tuple[float, float]:
        """Bit- and phase-flip rates, splitting ``kappa_p`` evenly if unset."""
        if self.kappa_x == 0 and self.kappa_z == 0:
            return self.kappa_p / 2, self.kappa_p / 2
        return self.kappa_x, self.kappa_z

    @property
    def qubit_error_rate(self) -> float:
        """Total flip rate per data qubit."""
        x, z = self.flip_rates()
        return x + z

    def scaled(self, factor: float) -> "RateSet":
        return RateSet(**{nm: factor * getattr(self, nm) for nm in self.names()})

    def as_dict(self) -> dict[str, float]:
        return {nm: getattr(self, nm) for nm in self.names()}


class SchemeId(str, enum.Enum):
    LtvOnly = "ltv"
    IdealClock = "ideal_clock"
    StateCond = "state_cond"
    StateCondTripartite = "state_cond_tripartite"
    JumpCondPrelim = "jump_cond_prelim"
    JumpCondBipartite = "jump_cond_bipartite"
    WaveTriJump = "wave_tri_jump"
    WaveTriQubitAncilla = "wave_tri_qubit_ancilla"
    WaveBipartite = "wave_bipartite"
    QutritWave = "qutrit_wave"


class ErrorModel(str, enum.Enum):
    NoErrors = "none"
    QubitFlips = "qubit_flips"
    QutritDepolarizing = "qutrit_depolarizing"


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    """
    A reservoir: layout, labeled jump operators and the rates used.

    Attributes
    ----------
    sectors : tuple
        Per site, a partition of its levels into classical sectors. Ancilla
        levels are singletons. The block solver keeps the density matrix
        block diagonal with respect to the product of these partitions.
    nonlocal_ok : bool
        Set for the deliberately nonlocal ideal-clock baseline.
    """

    layout: SubsystemLayout
    collapse_ops: tuple[LabeledCollapseOp, ...]
    scheme: SchemeId
    rates: RateSet
    companions: bool = False
    sectors: tuple = ()
    nonlocal_ok: bool = False

    def __post_init__(self):
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))
        names = [c.name for c in self.collapse_ops]
        if len(set(names)) != len(names):
            raise ValueError("collapse operator names must be unique")
        if not self.sectors:
            object.__setattr__(self, "sectors", default_sectors(self.layout))

    @property
    def n(self) -> int:
        return self.layout.n_data

    def ops_named(self, prefix: str) -> list[LabeledCollapseOp]:
        return [c for c in self.collapse_ops if c.name.startswith(prefix)]


def default_sectors(layout: SubsystemLayout) -> tuple:
    out = []
    for s in layout.sites:
        if s.role == "ancilla":
            out.append(tuple((i,) for i in range(s.dim)))
        else:
            out.append((tuple(range(s.dim)),))
    return tuple(out)


# ---------------------------------------------------------------------------
# operator construction helpers

def _state(site: Site, label: str) -> np.ndarray:
    v = np.zeros(site.dim, dtype=complex)
    if label in ("+", "-") and site.role == "data":
        v[0] = 1 / math.sqrt(2)
        v[1] = (1 if label == "+" else -1) / math.sqrt(2)
    else:
        v[site.labels.index(label)] = 1
    return v


def _product(layout, sites, labels) -> np.ndarray:
    v = np.ones(1, dtype=complex)
    for s, lab in zip(sites, labels):
        v = np.kron(v, _state(layout.sites[s], lab))
    return v


def _ketbras(layout, sites, terms) -> np.ndarray:
    """Sum of ``|ket><bra|`` over ``terms``, a list of (ket, bra) label tuples."""
    d = int(np.prod([layout.dims[s] for s in sites]))
    out = np.zeros((d, d), dtype=complex)
    for ket, bra in terms:
        if len(ket) != len(sites) or len(bra) != len(sites):
            raise ValueError(f"term {ket}/{bra} does not match sites {sites}")
        out += np.outer(_product(layout, sites, ket), _product(layout, sites, bra).conj())
    return out


def _op(name, signal, index, layout, sites, terms, rate) -> LabeledCollapseOp:
    return LabeledCollapseOp(
        name, signal, index,
        LocalOperator(tuple(sites), _ketbras(layout, sites, terms), math.sqrt(rate)))


LTV_TERMS = [(("1", "1"), ("1", "0")), (("0", "0"), ("0", "1"))]
IDLE_TERMS = [(("1", "1"), ("1", "1")), (("0", "0"), ("0", "0"))]


class _Rates:
    """Per-index rate lookup with optional overrides."""

    def __init__(self, rates: RateSet, overrides: Mapping[int, RateSet] | None):
        self.base = rates
        self.overrides = dict(overrides or {})

    def __call__(self, name: str, k: int | None = None) -> float:
        src = self.overrides.get(k, self.base) if k is not None else self.base
        return getattr(src, name)


def _check_n(n, minimum=2):
    if int(n) != n or n < minimum:
        raise ValueError(f"n must be an integer >= {minimum}, got {n}")


def _ltv_ops(layout, n, R, companions, gate=None, name="L"):
    """Parity-copying operators on each data bond.

    ``gate(k)`` optionally returns ``(ancilla_site, ancilla_terms)`` that
    condition the operator on bond ``k`` (1-based).
    """
    ops = []
    for k in range(1, n):
        sites = (k - 1, k)
        kc = R("kappa_c", k)
        for nm, terms, keep in ((f"{name}_{k}", LTV_TERMS, True),
                                (f"{name}idle_{k}", IDLE_TERMS, companions)):
            if not keep:
                continue
            if gate is None:
                ops.append(_op(nm, "L", k, layout, sites, terms, kc))
            else:
                anc_site, anc_terms = gate(k)
                mat = np.kron(_ketbras(layout, (anc_site,), anc_terms),
                              _ketbras(layout, sites, terms))
                ops.append(LabeledCollapseOp(
                    nm, "L", k, LocalOperator((anc_site,) + sites, mat, math.sqrt(kc))))
    return ops


def _finish(layout, ops, scheme, rates, companions, **kw) -> ReservoirSpec:
    spec = ReservoirSpec(layout, tuple(ops), scheme, rates, companions, **kw)
    bad = locality_violations(spec)
    if bad and not spec.nonlocal_ok:
        raise AssertionError(f"builder produced nonlocal operators: {bad}")
    return spec


# ---------------------------------------------------------------------------
# builders

def build_ltv(n: int, rates: RateSet, companions: bool = False,
              overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Parity-copying operators alone on ``n`` data qubits.

    ``L_k = sqrt(kappa_c) (|11><10| + |00><01|)`` on data ``(k, k+1)``.
    Their common kernel contains every state supported on the all-equal
    words, so the steady state is not unique.
    """
    _check_n(n)
    rates.require("kappa_c", scheme="LTV")
    layout = SubsystemLayout.chain(n)
    ops = _ltv_ops(layout, n, _Rates(rates, overrides), companions)
    return _finish(layout, ops, SchemeId.LtvOnly, rates, companions)


def build_ideal_clock(n: int, rates: RateSet, companions: bool = False,
                      overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Baseline with a perfectly synchronized ancilla register.

    The ancillas are confined to ``span{|gg..g>, |ee..e>}``, so they are
    represented by a single two-level register site with levels ``G``
    (all ground) and ``E`` (all excited). The register flips with
    ``M_1 = sqrt(kappa_u)|E><G|`` and ``M_2 = sqrt(kappa_d)|G><E|`` and
    resets every data qubit to ``|+>`` while excited via
    ``N_k = sqrt(kappa_r)|E,+><E,-|``. This breaks quasi-locality on purpose.
    """
    _check_n(n)
    rates.require("kappa_d", "kappa_r", "kappa_c", scheme="ideal clock")
    if rates.kappa_u == 0:
        warnings.warn("kappa_u = 0: the clock never fires and the steady state is not unique",
                      RuntimeWarning, stacklevel=2)
    R = _Rates(rates, overrides)
    layout = SubsystemLayout(tuple([Site("data", ("0", "1"))] * n + [Site("ancilla", ("G", "E"))]))
    reg = n
    ops = [
        _op("M_1", "U", None, layout, (reg,), [(("E",), ("G",))], R("kappa_u")),
        _op("M_2", "clock", None, layout, (reg,), [(("G",), ("E",))], R("kappa_d")),
    ]
    for k in range(1, n + 1):
        ops.append(_op(f"N_{k}", "+", k, layout, (reg, k - 1), [(("E", "+"), ("E", "-"))],
                       R("kappa_r", k)))
        if companions:
            ops.append(_op(f"Nidle_{k}", "+", k, layout, (reg, k - 1),
                           [(("E", "+"), ("E", "+"))], R("kappa_r", k)))
    ops += _ltv_ops(layout, n, R, companions)
    return _finish(layout, ops, SchemeId.IdealClock, rates, companions, nonlocal_ok=True)


def _clock_ops(layout, m, R, prefix="M"):
    """Spontaneous and stimulated g -> e -> m -> g ancilla transitions."""
    ops = []
    anc = [layout.ancilla_site(j) for j in range(m)]
    for k in range(1, m + 1):
        a = anc[k - 1]
        mat = (math.sqrt(R("kappa_u", k)) * _ketbras(layout, (a,), [(("e",), ("g",))])
               + math.sqrt(R("kappa_d", k)) * _ketbras(layout, (a,), [(("m",), ("e",))])
               + math.sqrt(R("kappa_t", k)) * _ketbras(layout, (a,), [(("g",), ("m",))]))
        ops.append(LabeledCollapseOp(f"{prefix}_{k},sp", "clock", k, LocalOperator((a,), mat)))
    st_plus = [(("e", "e"), ("g", "e")), (("m", "m"), ("e", "m")), (("g", "g"), ("m", "g"))]
    st_minus = [(("e", "e"), ("e", "g")), (("m", "m"), ("m", "e")), (("g", "g"), ("g", "m"))]
    for k in range(1, m + 1):
        if k < m:
            ops.append(_op(f"{prefix}_{k},st+", "clock", k, layout, (anc[k - 1], anc[k]),
                           st_plus, R("kappa_st", k)))
        if k > 1:
            ops.append(_op(f"{prefix}_{k},st-", "clock", k, layout, (anc[k - 2], anc[k - 1]),
                           st_minus, R("kappa_st", k)))
    return ops


def build_state_conditioning(n: int, rates: RateSet, companions: bool = False,
                             overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Correlated three-level ancilla clock with state-conditioned resets.

    One qutrit ancilla (levels g, e, m) faces each data qubit. Ancillas
    cycle g -> e -> m -> g spontaneously and are pulled along by their
    neighbours through stimulated channels. Data qubit ``k`` is reset to
    ``|+>`` while ancilla ``k`` sits in ``e``; parity copying runs always.

    Returns
    -------
    ReservoirSpec
        ``n`` spontaneous, ``2(n-1)`` stimulated, ``n`` reset and ``n-1``
        parity operators.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_d", "kappa_t", "kappa_st", "kappa_r", "kappa_c",
                  scheme="state conditioning")
    R = _Rates(rates, overrides)
    layout = SubsystemLayout.chain(n, n_ancilla=n, ancilla_labels=("g", "e", "m"))
    ops = _clock_ops(layout, n, R)
    for k in range(1, n + 1):
        a = layout.ancilla_site(k - 1)
        ops.append(_op(f"N_{k}", "+", k, layout, (a, k - 1), [(("e", "+"), ("e", "-"))],
                       R("kappa_r", k)))
        if companions:
            ops.append(_op(f"Nidle_{k}", "+", k, layout, (a, k - 1),
                           [(("e", "+"), ("e", "+"))], R("kappa_r", k)))
    ops += _ltv_ops(layout, n, R, companions)
    return _finish(layout, ops, SchemeId.StateCond, rates, companions)


def build_state_cond_tripartite(n: int, rates: RateSet, companions: bool = False,
                                overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    State-conditioned clock with one ancilla per data pair.

    Parity copying on bond ``k`` runs only while ancilla ``k`` is in ``g``
    or ``m``. Data ``k`` is reset only while every ancilla touching it is in
    ``e``, so resets and parity copying never overlap.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_d", "kappa_t", "kappa_st", "kappa_r", "kappa_c",
                  scheme="tripartite state conditioning")
    R = _Rates(rates, overrides)
    m = n - 1
    layout = SubsystemLayout.chain(n, n_ancilla=m, ancilla_labels=("g", "e", "m"),
                                   pair_ancillas=True)
    anc = [layout.ancilla_site(j) for j in range(m)]
    ops = _clock_ops(layout, m, R)
    ops += _ltv_ops(layout, n, R, companions, name="Lt",
                    gate=lambda k: (anc[k - 1], [(("g",), ("g",)), (("m",), ("m",))]))
    for k in range(1, n + 1):
        touching = [anc[j] for j in (k - 2, k - 1) if 0 <= j < m]
        sites = tuple(touching) + (k - 1,)
        ket = ("e",) * len(touching) + ("+",)
        for suffix, bra_data, keep in (("", "-", True), ("idle", "+", companions)):
            if keep:
                bra = ("e",) * len(touching) + (bra_data,)
                ops.append(_op(f"Nt{suffix}_{k}", "+", k, layout, sites, [(ket, bra)],
                               R("kappa_r", k)))
    return _finish(layout, ops, SchemeId.StateCondTripartite, rates, companions)


def build_jump_cond_prelim(n: int, rates: RateSet, companions: bool = False,
                           overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Unsynchronized jump-conditioned resets with two-level ancillas.

    Each ancilla jump g -> e resets its data qubit at the same instant; the
    two channels ``N_k,1`` and ``N_k,2`` are kept separate so that no data
    state is dark. Without synchronization this does not stabilize GHZ for
    ``n > 1``; it serves as a baseline.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_d", "kappa_c", scheme="jump conditioning")
    R = _Rates(rates, overrides)
    layout = SubsystemLayout.chain(n, n_ancilla=n, ancilla_labels=("g", "e"))
    ops = []
    for k in range(1, n + 1):
        a = layout.ancilla_site(k - 1)
        ops.append(_op(f"M_{k}", "clock", k, layout, (a,), [(("g",), ("e",))], R("kappa_d", k)))
        ops.append(_op(f"N_{k},1", "+", k, layout, (a, k - 1), [(("e", "+"), ("g", "+"))],
                       R("kappa_u", k)))
        ops.append(_op(f"N_{k},2", "+", k, layout, (a, k - 1), [(("e", "+"), ("g", "-"))],
                       R("kappa_u", k)))
    ops += _ltv_ops(layout, n, R, companions)
    return _finish(layout, ops, SchemeId.JumpCondPrelim, rates, companions)


def build_jump_cond_bipartite(n: int, rates: RateSet, companions: bool = False,
                              overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Four-level ancilla clock (g, f, e, m) with jump-conditioned resets.

    The spontaneous cycle is g -> f -> e -> m -> g. The f -> e jump resets
    the data qubit through ``N_k,r`` / ``N_k,i``. Stimulated channels pull
    g -> f next to an ancilla in f or e, and e -> m, m -> g as in the
    three-level clock.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_d", "kappa_t", "kappa_st", "kappa_f", "kappa_c",
                  scheme="bipartite jump conditioning")
    R = _Rates(rates, overrides)
    layout = SubsystemLayout.chain(n, n_ancilla=n, ancilla_labels=("g", "f", "e", "m"))
    anc = [layout.ancilla_site(j) for j in range(n)]
    ops = []
    for k in range(1, n + 1):
        a = anc[k - 1]
        mat = (math.sqrt(R("kappa_u", k)) * _ketbras(layout, (a,), [(("f",), ("g",))])
               + math.sqrt(R("kappa_d", k)) * _ketbras(layout, (a,), [(("m",), ("e",))])
               + math.sqrt(R("kappa_t", k)) * _ketbras(layout, (a,), [(("g",), ("m",))]))
        ops.append(LabeledCollapseOp(f"M_{k},sp", "clock", k, LocalOperator((a,), mat)))
        ops.append(_op(f"N_{k},r", "+", k, layout, (a, k - 1), [(("e", "+"), ("f", "-"))],
                       R("kappa_f", k)))
        ops.append(_op(f"N_{k},i", "+", k, layout, (a, k - 1), [(("e", "+"), ("f", "+"))],
                       R("kappa_f", k)))
    st1_plus = [(("f", "f"), ("g", "f")), (("m", "m"), ("e", "m")), (("g", "g"), ("m", "g"))]
    st2_plus = [(("f", "e"), ("g", "e"))]
    st1_minus = [(("f", "f"), ("f", "g")), (("m", "m"), ("m", "e")), (("g", "g"), ("g", "m"))]
    st2_minus = [(("e", "f"), ("e", "g"))]
    for k in range(1, n + 1):
        if k < n:
            pair = (anc[k - 1], anc[k])
            ops.append(_op(f"M_{k},st1+", "clock", k, layout, pair, st1_plus, R("kappa_st", k)))
            ops.append(_op(f"M_{k},st2+", "clock", k, layout, pair, st2_plus, R("kappa_st", k)))
        if k > 1:
            pair = (anc[k - 2], anc[k - 1])
            ops.append(_op(f"M_{k},st1-", "clock", k, layout, pair, st1_minus, R("kappa_st", k)))
            ops.append(_op(f"M_{k},st2-", "clock", k, layout, pair, st2_minus, R("kappa_st", k)))
    ops += _ltv_ops(layout, n, R, companions)
    return _finish(layout, ops, SchemeId.JumpCondBipartite, rates, companions)


def build_wave_tri_jump(n: int, rates: RateSet, companions: bool = False,
                        overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Reset wave driven by four-level ancillas, one per data pair.

    Nominal sequence: ancilla 1 fires (g -> e) while resetting data 1 and 2;
    parity copying on bond 1 moves it to m; it hands over to ancilla 2
    (m, g -> g, f); ancilla 2 resets data 3 (f -> e); and so on. The last
    ancilla returns to g directly after its parity step.

    Both the flipping part ``L~_k,r`` and the idle part ``L~_k,i`` of the
    parity step move the ancilla on, so the ancilla cycle does not depend
    on the data.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_st", "kappa_c", scheme="tripartite jump wave")
    R = _Rates(rates, overrides)
    m = n - 1
    layout = SubsystemLayout.chain(n, n_ancilla=m, ancilla_labels=("g", "f", "e", "m"),
                                   pair_ancillas=True)
    anc = [layout.ancilla_site(j) for j in range(m)]
    ops = []
    first = (anc[0], 0, 1)
    for suffix, bra in (("r12", ("g", "-", "-")), ("r1", ("g", "-", "+")),
                        ("r2", ("g", "+", "-")), ("i", ("g", "+", "+"))):
        ops.append(_op(f"N_1,{suffix}", "+", 1, layout, first, [(("e", "+", "+"), bra)],
                       R("kappa_u", 1)))
    for k in range(2, n):
        sites = (anc[k - 1], k)
        ops.append(_op(f"N_{k},r", "+", k + 1, layout, sites, [(("e", "+"), ("f", "-"))],
                       R("kappa_st", k)))
        ops.append(_op(f"N_{k},i", "+", k + 1, layout, sites, [(("e", "+"), ("f", "+"))],
                       R("kappa_st", k)))
    for k in range(1, m):
        ops.append(_op(f"M_{k}", "clock", k, layout, (anc[k - 1], anc[k]),
                       [(("g", "f"), ("m", "g"))], R("kappa_st", k)))
    for k in range(1, n):
        after = "m" if k < m else "g"
        sites = (anc[k - 1], k - 1, k)
        for suffix, terms in (("r", LTV_TERMS), ("i", IDLE_TERMS)):
            ops.append(_op(f"Lt_{k},{suffix}", "L", k, layout, sites,
                           [((after,) + ket, ("e",) + bra) for ket, bra in terms],
                           R("kappa_c", k)))
    return _finish(layout, ops, SchemeId.WaveTriJump, rates, companions)


def build_wave_tri_qubit_ancilla(n: int, rates: RateSet, companions: bool = False,
                                 overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Reset wave with two-level ancillas that switch parity copying off.

    Ancilla ``k`` in ``e`` marks that data ``k`` has been reset but bond
    ``k`` has not been copied yet, so ``L~_k`` acts only while ancilla
    ``k`` is in ``g``. The excitation moves to the right one step per
    reset: ``N_k`` takes ancilla ``k-1`` from e to g, ancilla ``k`` from g
    to e and resets data ``k``. The final reset of data ``n`` only releases
    ancilla ``n-1``, so ``n-1`` ancillas suffice.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_st", "kappa_c", scheme="tripartite qubit-ancilla wave")
    R = _Rates(rates, overrides)
    m = n - 1
    layout = SubsystemLayout.chain(n, n_ancilla=m, ancilla_labels=("g", "e"), pair_ancillas=True)
    anc = [layout.ancilla_site(j) for j in range(m)]
    ops = []
    for suffix, d in (("r", "-"), ("i", "+")):
        ops.append(_op(f"N_1,{suffix}", "+", 1, layout, (anc[0], 0), [(("e", "+"), ("g", d))],
                       R("kappa_u", 1)))
    for k in range(2, n):
        sites = (anc[k - 2], anc[k - 1], k - 1)
        for suffix, d in (("r", "-"), ("i", "+")):
            ops.append(_op(f"N_{k},{suffix}", "+", k, layout, sites,
                           [(("g", "e", "+"), ("e", "g", d))], R("kappa_st", k)))
        ops.append(_op(f"N_{k},v", "clock", k, layout, sites[:2], [(("g", "e"), ("e", "e"))],
                       R("kappa_st", k)))
    for suffix, d in (("r", "-"), ("i", "+")):
        ops.append(_op(f"N_{n},{suffix}", "+", n, layout, (anc[m - 1], n - 1),
                       [(("g", "+"), ("e", d))], R("kappa_st", n)))
    ops += _ltv_ops(layout, n, R, companions, name="Lt",
                    gate=lambda k: (anc[k - 1], [(("g",), ("g",))]))
    return _finish(layout, ops, SchemeId.WaveTriQubitAncilla, rates, companions)


def build_wave_bipartite(n: int, rates: RateSet, companions: bool = False,
                         overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Reset wave with qutrit ancillas facing each data qubit.

    Ancilla 1 is launched g -> e at ``kappa_u``. An ancilla in e resets its
    data qubit and drops to m; an ancilla in m hands the excitation to its
    right neighbour and returns to g. Parity copying runs permanently, so
    the wave must be much faster than copying, which must be much faster
    than the launch rate.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_st", "kappa_c", scheme="bipartite wave")
    if not (rates.kappa_st >= 10 * rates.kappa_c and rates.kappa_c >= 10 * rates.kappa_u):
        warnings.warn("bipartite wave expects kappa_st >> kappa_c >> kappa_u",
                      RuntimeWarning, stacklevel=2)
    R = _Rates(rates, overrides)
    layout = SubsystemLayout.chain(n, n_ancilla=n, ancilla_labels=("g", "e", "m"))
    anc = [layout.ancilla_site(j) for j in range(n)]
    ops = [_op("M_1", "U", None, layout, (anc[0],), [(("e",), ("g",))], R("kappa_u", 1))]
    for k in range(2, n + 1):
        pair = (anc[k - 2], anc[k - 1])
        for suffix, b in (("r", "g"), ("i", "m"), ("v", "e")):
            ops.append(_op(f"M_{k},{suffix}", "clock", k, layout, pair,
                           [(("g", "e"), ("m", b))], R("kappa_st", k)))
    for k in range(1, n + 1):
        for suffix, d in (("r", "-"), ("i", "+")):
            ops.append(_op(f"N_{k},{suffix}", "+", k, layout, (anc[k - 1], k - 1),
                           [(("m", "+"), ("e", d))], R("kappa_st", k)))
    ops += _ltv_ops(layout, n, R, companions)
    return _finish(layout, ops, SchemeId.WaveBipartite, rates, companions)


def build_qutrit_wave(n: int, rates: RateSet, companions: bool = False,
                      overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """
    Ancilla-free reset wave on data qutrits.

    Level ``|2>`` of each qutrit carries the wave: qutrit 1 is launched to
    ``|2>``, a qutrit in ``|2>`` resets itself to ``|+>`` while passing
    the ``|2>`` on to its right neighbour, and the last qutrit simply
    resets. Parity copying acts on the ``{|0>, |1>}`` sublevels.

    Levels ``{0, 1}`` and ``{2}`` form classical sectors, which the block
    solver exploits.
    """
    _check_n(n)
    rates.require("kappa_u", "kappa_st", "kappa_c", scheme="qutrit wave")
    R = _Rates(rates, overrides)
    layout = SubsystemLayout.chain(n, data_labels=("0", "1", "2"))
    ops = [
        _op("M_0,r", "U", None, layout, (0,), [(("2",), ("-",))], R("kappa_u", 1)),
        _op("M_0,i", "U", None, layout, (0,), [(("2",), ("+",))], R("kappa_u", 1)),
    ]
    for k in range(1, n):
        for suffix, b in (("r", "-"), ("i", "+"), ("v", "2")):
            ops.append(_op(f"N_{k},{suffix}", "+", k, layout, (k - 1, k),
                           [(("+", "2"), ("2", b))], R("kappa_st", k)))
    ops.append(_op(f"N_{n}", "+", n, layout, (n - 1,), [(("+",), ("2",))], R("kappa_st", n)))
    ops += _ltv_ops(layout, n, R, companions)
    sectors = tuple(((0, 1), (2,)) for _ in range(n))
    return _finish(layout, ops, SchemeId.QutritWave, rates, companions, sectors=sectors)


_BUILDERS: dict[SchemeId, Callable[..., ReservoirSpec]] = {
    SchemeId.LtvOnly: build_ltv,
    SchemeId.IdealClock: build_ideal_clock,
    SchemeId.StateCond: build_state_conditioning,
    SchemeId.StateCondTripartite: build_state_cond_tripartite,
    SchemeId.JumpCondPrelim: build_jump_cond_prelim,
    SchemeId.JumpCondBipartite: build_jump_cond_bipartite,
    SchemeId.WaveTriJump: build_wave_tri_jump,
    SchemeId.WaveTriQubitAncilla: build_wave_tri_qubit_ancilla,
    SchemeId.WaveBipartite: build_wave_bipartite,
    SchemeId.QutritWave: build_qutrit_wave,
}


def build_scheme(scheme: SchemeId | str, n: int, rates: RateSet, companions: bool = False,
                 overrides: Mapping[int, RateSet] | None = None) -> ReservoirSpec:
    """Dispatch to the builder registered for ``scheme``."""
    return _BUILDERS[SchemeId(scheme)](n, rates, companions=companions, overrides=overrides)


def build_error_channels(layout: SubsystemLayout, rates: RateSet,
                         model: ErrorModel | str = ErrorModel.QubitFlips) -> list[LabeledCollapseOp]:
    """
    Local error channels on every data site.

    Parameters
    ----------
    layout : SubsystemLayout
    rates : RateSet
    model : ErrorModel
        ``QubitFlips`` gives ``sqrt(kappa_x) X`` and ``sqrt(kappa_z) Z`` per
        qubit (``kappa_x = kappa_z = kappa_p / 2`` unless set explicitly).
        ``QutritDepolarizing`` gives the six transitions ``|a><b|``,
        ``a != b``, each at ``kappa_p``.

    Returns
    -------
    list of LabeledCollapseOp
        Operators with zero rate are omitted.
    """
    model = ErrorModel(model)
    ops = []
    if model is ErrorModel.NoErrors:
        return ops
    data = range(layout.n_data)
    if model is ErrorModel.QubitFlips:
        if any(layout.dims[k] != 2 for k in data):
            raise ValueError("qubit flips need qubit data sites")
        kx, kz = rates.flip_rates()
        X = np.array([[0, 1], [1, 0]], dtype=complex)
        Z = np.diag([1, -1]).astype(complex)
        for k in data:
            if kx > 0:
                ops.append(LabeledCollapseOp(f"E_{k + 1},1", "E", k + 1,
                                             LocalOperator((k,), X, math.sqrt(kx))))
            if kz > 0:
                ops.append(LabeledCollapseOp(f"E_{k + 1},2", "E", k + 1,
                                             LocalOperator((k,), Z, math.sqrt(kz))))
        return ops
    if any(layout.dims[k] != 3 for k in data):
        raise ValueError("qutrit depolarizing needs qutrit data sites")
    if rates.kappa_p == 0:
        return ops
    pairs = [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)]
    for k in data:
        for s, (a, b) in enumerate(pairs, start=1):
            mat = np.zeros((3, 3), dtype=complex)
            mat[a, b] = 1
            ops.append(LabeledCollapseOp(f"P_{k + 1},{s}", "E", k + 1,
                                         LocalOperator((k,), mat, math.sqrt(rates.kappa_p))))
    return ops


# ---------------------------------------------------------------------------
# audits

def locality_violations(spec: ReservoirSpec) -> list[str]:
    """Names of operators acting on more than 3 sites or on non-adjacent sites."""
    bad = []
    for c in spec.collapse_ops:
        s = c.op.sites
        if len(s) > 3 or not spec.layout.is_connected(s):
            bad.append(c.name)
    return bad


def _sector_index(spec: ReservoirSpec):
    """Per site, map level -> sector number."""
    out = []
    for part in spec.sectors:
        lv = {}
        for j, block in enumerate(part):
            for level in block:
                lv[level] = j
        out.append(lv)
    return out


def sector_transition(spec: ReservoirSpec, op: LabeledCollapseOp, tol: float = 1e-13):
    """
    Map of local sector configurations induced by one operator.

    Returns
    -------
    dict
        ``{input sector tuple: output sector tuple}`` over the operator's
        sites, only for inputs that the operator does not annihilate.

    Raises
    ------
    AuditFailed
        If one input sector reaches two output sectors, or two input sectors
        reach the same output sector. Either would create coherences between
        classical sectors.
    """
    layout = spec.layout
    sites = op.op.sites
    dims = [layout.dims[s] for s in sites]
    secmap = _sector_index(spec)
    levels = list(np.ndindex(*dims))
    sec = [tuple(secmap[s][lv] for s, lv in zip(sites, lvls)) for lvls in levels]
    mat = op.op.matrix
    mapping: dict[tuple, tuple] = {}
    for col in range(mat.shape[1]):
        for row in np.nonzero(np.abs(mat[:, col]) > tol)[0]:
            a, b = sec[col], sec[row]
            if mapping.setdefault(a, b) != b:
                raise AuditFailed(f"{op.name} maps sector {a} to both {mapping[a]} and {b}")
    if len(set(mapping.values())) != len(mapping):
        raise AuditFailed(f"{op.name} merges distinct sectors into one")
    return mapping


def coherence_audit(spec: ReservoirSpec, extra: Sequence[LabeledCollapseOp] = ()) -> bool:
    """
    Check that no operator creates coherence between classical sectors.

    Raises
    ------
    AuditFailed
    """
    for c in list(spec.collapse_ops) + list(extra):
        sector_transition(spec, c)
    return True


def ghz_vector(layout: SubsystemLayout) -> np.ndarray:
    """``(|0..0> + |1..1>)/sqrt(2)`` on the data sites."""
    dims = layout.dims[: layout.n_data]
    D = int(np.prod(dims))
    v = np.zeros(D, dtype=complex)
    strides = np.ones(len(dims), dtype=np.int64)
    strides[:-1] = np.cumprod(np.asarray(dims[::-1]))[::-1][1:]
    v[0] = v[int(strides.sum())] = 1 / math.sqrt(2)
    return v

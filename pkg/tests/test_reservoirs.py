import itertools
import warnings

import numpy as np
import pytest

from conftest import AUDIT_RATES, random_density
from ghzres.reservoirs import (AuditFailed, ErrorModel, RateSet, SchemeId, build_error_channels,
                               build_ideal_clock, build_jump_cond_bipartite,
                               build_jump_cond_prelim, build_ltv, build_qutrit_wave,
                               build_scheme, build_state_cond_tripartite,
                               build_state_conditioning, build_wave_bipartite,
                               build_wave_tri_jump, build_wave_tri_qubit_ancilla, coherence_audit,
                               ghz_vector, locality_violations, sector_transition)
from ghzres.tensor import LabeledCollapseOp, LocalOperator, assemble_lindbladian, embed

ANCILLA_SCHEMES = [s for s in SchemeId if s not in (SchemeId.LtvOnly, SchemeId.QutritWave)]


def full(spec, name):
    (op,) = [c for c in spec.collapse_ops if c.name == name]
    return embed(op.op, spec.layout).toarray()


def test_ratesets_validate():
    with pytest.raises(ValueError):
        RateSet(kappa_u=-1)
    with pytest.raises(ValueError):
        RateSet(kappa_c=float("inf"))
    r = RateSet(kappa_p=2.0)
    assert r.flip_rates() == (1.0, 1.0)
    assert RateSet(kappa_x=0.3, kappa_z=0.1, kappa_p=9).qubit_error_rate == pytest.approx(0.4)
    assert r.scaled(10).kappa_p == 20


def test_ltv_counts_and_rank():
    assert len(build_ltv(4, AUDIT_RATES).collapse_ops) == 3
    spec = build_ltv(2, AUDIT_RATES)
    assert len(spec.collapse_ops) == 1
    assert np.linalg.matrix_rank(full(spec, "L_1")) == 2
    with pytest.raises(ValueError):
        build_ltv(1, AUDIT_RATES)


def test_ltv_annihilates_ghz():
    spec = build_ltv(3, AUDIT_RATES)
    g = ghz_vector(spec.layout)
    for c in spec.collapse_ops:
        assert np.abs(embed(c.op, spec.layout) @ g).max() < 1e-15


def test_ideal_clock():
    spec = build_ideal_clock(3, AUDIT_RATES)
    assert len(spec.collapse_ops) == 7
    assert spec.nonlocal_ok
    with pytest.warns(RuntimeWarning):
        build_ideal_clock(2, RateSet(kappa_d=1, kappa_r=10, kappa_c=1))


def test_state_conditioning_counts():
    spec = build_state_conditioning(3, AUDIT_RATES)
    assert len(spec.collapse_ops) == 12
    assert spec.layout.total_dim == 216
    with pytest.raises(ValueError):
        build_state_conditioning(3, RateSet(kappa_u=1, kappa_d=1, kappa_t=1, kappa_st=1, kappa_r=1))


def test_tripartite():
    spec = build_state_cond_tripartite(3, AUDIT_RATES)
    assert spec.layout.n_ancilla == 2
    # by family: 2 spontaneous, 1 st+, 1 st-, 2 gated parity, 3 gated resets
    names = [c.name for c in spec.collapse_ops]
    assert len(names) == 2 + 1 + 1 + 2 + 3
    lay = spec.layout
    e = lay.level(lay.ancilla_site(0), "e")
    for k, name in ((0, "Lt_1"), (1, "Lt_2")):
        a = lay.ancilla_site(k)
        P = np.zeros((3, 3))
        P[e, e] = 1
        proj = embed(LocalOperator((a,), P), lay).toarray()
        assert np.abs(full(spec, name) @ proj).max() == 0


def test_jump_cond_prelim():
    spec = build_jump_cond_prelim(2, AUDIT_RATES)
    assert len(spec.collapse_ops) == 7
    assert {"N_1,1", "N_1,2"} <= {c.name for c in spec.collapse_ops}


def test_jump_cond_bipartite():
    spec = build_jump_cond_bipartite(3, AUDIT_RATES)
    assert spec.layout.dims[3:] == (4, 4, 4)
    # 3 spontaneous + 3x2 resets + 2 boundaries x 2 stimulated kinds x (n-1) + 2 LTV
    assert len(spec.collapse_ops) == 3 + 6 + 2 * 2 * 2 + 2
    with pytest.raises(ValueError):
        build_jump_cond_bipartite(3, RateSet(**{**AUDIT_RATES.as_dict(), "kappa_f": 0}))


def test_wave_tri_jump_counts():
    spec = build_wave_tri_jump(3, AUDIT_RATES)
    # 4 first-pair resets, 2 per later reset, m-1 hand-overs, 2 parity ops per bond
    assert len(spec.collapse_ops) == 4 + 2 * (3 - 2) + (2 - 1) + 2 * 2


def test_wave_tri_jump_idle_parity_commutes_with_global_flip():
    spec = build_wave_tri_jump(3, AUDIT_RATES)
    X = np.array([[0, 1], [1, 0]])
    flip = np.eye(1)
    for _ in range(3):
        flip = np.kron(flip, X)
    flip = np.kron(flip, np.eye(16))
    for name in ("Lt_1,i", "Lt_2,i"):
        A = full(spec, name)
        assert np.abs(A @ flip - flip @ A).max() < 1e-14


def _ancilla_step(spec, config):
    """Enabled ancilla moves from a classical word: next word -> (labels, fastest rate)."""
    lay = spec.layout
    n = lay.n_data
    moves = {}
    for c in spec.collapse_ops:
        anc = [s for s in c.op.sites if s >= n]
        trans = sector_transition(spec, c)
        for src, dst in trans.items():
            levels = dict(zip(c.op.sites, src))
            if all(config[s - n] == levels[s] for s in anc):
                new = list(config)
                for s, lv in zip(c.op.sites, dst):
                    if s >= n:
                        new[s - n] = lv
                if tuple(new) != tuple(config):
                    labels, rate = moves.get(tuple(new), (set(), 0.0))
                    moves[tuple(new)] = (labels | {c.label}, max(rate, c.op.amplitude ** 2))
    return moves


@pytest.mark.parametrize("n", [3, 4])
def test_wave_tri_jump_nominal_cycle(n):
    rates = RateSet(kappa_u=1, kappa_st=100, kappa_c=100)
    spec = build_wave_tri_jump(n, rates)
    start = (0,) * spec.layout.n_ancilla
    config, steps = start, 0
    while True:
        moves = _ancilla_step(spec, config)
        fastest = max(r for _, r in moves.values())
        dominant = [(w, lab) for w, (lab, r) in moves.items() if r == fastest]
        # along the dominant path the automaton is deterministic
        assert len(dominant) == 1, moves
        ((config, labels),) = dominant
        assert len(labels) == 1
        steps += 1
        if config == start:
            break
    assert steps == 3 * n - 4


@pytest.mark.parametrize("n", [3, 4])
def test_wave_tri_jump_cycle_prepares_ghz(n, rng):
    """A trajectory along the fastest enabled jumps ends the cycle in GHZ+."""
    spec = build_wave_tri_jump(n, RateSet(kappa_u=1, kappa_st=100, kappa_c=100))
    lay = spec.layout
    ops = [embed(c.op, lay) for c in spec.collapse_ops]
    amp = np.array([c.op.amplitude for c in spec.collapse_ops])
    dd = 2 ** n
    psi_d = rng.normal(size=dd) + 1j * rng.normal(size=dd)
    psi = np.kron(psi_d / np.linalg.norm(psi_d), np.eye(lay.total_dim // dd)[0])
    for _ in range(3 * n - 4):
        weights = np.array([np.linalg.norm(L @ psi) ** 2 for L in ops])
        assert weights.sum() > 0
        weights[amp < amp[weights > 1e-12].max()] = 0
        k = rng.choice(len(ops), p=weights / weights.sum())
        psi = ops[k] @ psi
        psi /= np.linalg.norm(psi)
    rho_d = np.einsum("ia,ja->ij", psi.reshape(dd, -1), psi.reshape(dd, -1).conj())
    g = ghz_vector(lay)
    assert np.real(g.conj() @ rho_d @ g) == pytest.approx(1.0, abs=1e-12)


def test_wave_tri_qubit_ancilla():
    spec = build_wave_tri_qubit_ancilla(3, AUDIT_RATES)
    assert spec.layout.dims[3:] == (2, 2)
    lay = spec.layout
    for k, name in ((0, "Lt_1"), (1, "Lt_2")):
        P = np.diag([0.0, 1.0])
        proj = embed(LocalOperator((lay.ancilla_site(k),), P), lay).toarray()
        assert np.abs(full(spec, name) @ proj).max() == 0


def test_wave_bipartite_warns_on_bad_separation():
    with pytest.warns(RuntimeWarning):
        build_wave_bipartite(3, RateSet(kappa_u=1, kappa_st=10, kappa_c=5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_wave_bipartite(3, RateSet(kappa_u=1, kappa_st=1e4, kappa_c=100))


def test_qutrit_wave_counts():
    assert len(build_qutrit_wave(3, AUDIT_RATES).collapse_ops) == 11
    assert build_qutrit_wave(5, AUDIT_RATES).layout.total_dim == 243
    with pytest.raises(ValueError):
        build_qutrit_wave(1, AUDIT_RATES)


def test_qutrit_wave_keeps_level_two_incoherent(rng):
    spec = build_qutrit_wave(2, AUDIT_RATES)
    h = assemble_lindbladian(spec.collapse_ops, spec.layout)
    rho = random_density(rng, 9)
    sec = np.array([min(a, 1) if a < 2 else 2 for a in range(3)])
    labels = [(sec[i // 3] == 2, sec[i % 3] == 2) for i in range(9)]
    mask = np.array([[labels[i] == labels[j] for j in range(9)] for i in range(9)])
    rho = np.where(mask, rho, 0)
    out = h.apply(rho)
    assert np.abs(out[~mask]).max() < 1e-14


@pytest.mark.parametrize("scheme", list(SchemeId))
def test_quasi_locality(scheme):
    spec = build_scheme(scheme, 3, AUDIT_RATES)
    bad = locality_violations(spec)
    if scheme is SchemeId.IdealClock:
        assert spec.nonlocal_ok
    else:
        assert bad == []
    for c in spec.collapse_ops:
        assert c.signal in LabeledCollapseOp.SIGNALS


@pytest.mark.parametrize("scheme", ANCILLA_SCHEMES)
def test_ancilla_operators_are_classical(scheme):
    spec = build_scheme(scheme, 3, AUDIT_RATES)
    assert coherence_audit(spec)


def test_audit_rejects_coherent_ancilla_operator():
    spec = build_state_conditioning(2, AUDIT_RATES)
    lay = spec.layout
    a = lay.ancilla_site(0)
    mat = np.zeros((3, 3))
    mat[0, 0] = mat[1, 0] = 1  # g -> g + e
    bad = LabeledCollapseOp("bad", "clock", None, LocalOperator((a,), mat))
    with pytest.raises(AuditFailed):
        coherence_audit(spec, [bad])


def _trace_data(X, dd):
    da = X.shape[0] // dd
    return np.einsum("iaib->ab", X.reshape(dd, da, dd, da))


@pytest.mark.parametrize("scheme", ANCILLA_SCHEMES)
@pytest.mark.parametrize("n", [2, 3])
def test_ancilla_dynamics_ignores_data(scheme, n, rng):
    if n == 3 and scheme is SchemeId.JumpCondBipartite:
        pytest.skip("dimension 512 x 512 dense products are slow")
    spec = build_scheme(scheme, n, AUDIT_RATES)
    h = assemble_lindbladian(spec.collapse_ops, spec.layout)
    dd = spec.layout.data_dim
    da = spec.layout.total_dim // dd
    sigma = np.diag(rng.dirichlet(np.ones(da)))
    outs = [_trace_data(h.apply(np.kron(random_density(rng, dd), sigma)), dd) for _ in range(2)]
    assert np.abs(outs[0] - outs[1]).max() < 1e-10 * max(1.0, np.abs(outs[0]).max())


@pytest.mark.parametrize("scheme", list(SchemeId))
def test_companion_completeness(scheme):
    spec = build_scheme(scheme, 3, AUDIT_RATES, companions=True)
    lay = spec.layout
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    if lay.dims[0] == 3:
        X = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=complex)
    for c in spec.collapse_ops:
        if "idle" not in c.name:
            continue
        (base,) = [b for b in spec.collapse_ops if b.name == c.name.replace("idle", "")]
        S = sum(embed(o.op, lay).conj().T @ embed(o.op, lay) for o in (c, base)).toarray()
        kappa = np.abs(np.diag(S)).max()
        P = S / kappa
        # kappa times a projector that acts as the identity on the touched data
        assert np.abs(P @ P - P).max() < 1e-12
        for s in c.op.sites:
            if s < lay.n_data:
                F = embed(LocalOperator((s,), X), lay).toarray()
                assert np.abs(F @ S - S @ F).max() < 1e-12
        rate = AUDIT_RATES.kappa_c if c.signal == "L" else AUDIT_RATES.kappa_r
        assert kappa == pytest.approx(rate)


def test_error_channels():
    lay = build_qutrit_wave(3, AUDIT_RATES).layout
    ops = build_error_channels(lay, RateSet(kappa_p=0.5), ErrorModel.QutritDepolarizing)
    assert len(ops) == 18
    qlay = build_ltv(3, AUDIT_RATES).layout
    ops = build_error_channels(qlay, RateSet(kappa_x=0.3, kappa_z=0.7), ErrorModel.QubitFlips)
    assert len(ops) == 6
    for c in ops:
        E = c.op.full_matrix
        rate = 0.3 if c.name.endswith(",1") else 0.7
        assert np.allclose(E.conj().T @ E, rate * np.eye(2))
    assert build_error_channels(qlay, RateSet(), ErrorModel.QubitFlips) == []
    with pytest.raises(ValueError):
        build_error_channels(qlay, RateSet(kappa_p=1), ErrorModel.QutritDepolarizing)


def test_rate_overrides():
    spec = build_ltv(3, RateSet(kappa_c=1.0), overrides={2: RateSet(kappa_c=4.0)})
    assert np.abs(full(spec, "L_2")).max() == pytest.approx(2.0)
    assert np.abs(full(spec, "L_1")).max() == pytest.approx(1.0)


def test_signal_labels_unique_per_support():
    for scheme in SchemeId:
        spec = build_scheme(scheme, 3, AUDIT_RATES)
        keys = [(c.name, c.label, c.op.sites) for c in spec.collapse_ops]
        assert len(set(keys)) == len(keys)
        for a, b in itertools.combinations(spec.collapse_ops, 2):
            assert a.name != b.name

import numpy as np
import pytest

from conftest import QUTRIT_RATES, STATE_COND_RATES
from ghzres.reservoirs import (RateSet, ReservoirSpec, SchemeId, build_error_channels,
                               build_ideal_clock, build_ltv, build_qutrit_wave, build_scheme,
                               build_state_conditioning, ghz_vector)
from ghzres.steady import (BlockDensity, KernelDegenerate, Method, NoConvergence, SolverConfig,
                           dump_rho, ghz_fidelity, load_rho, max_rate, reduce_to_data,
                           solve_block, solve_steady_state, time_evolve)
from ghzres.tensor import LabeledCollapseOp, LocalOperator, Site, SubsystemLayout, assemble_lindbladian

DENSE = SolverConfig(method=Method.DenseNullSpace)
SPARSE = SolverConfig(method=Method.SparseIterative)
BLOCK = SolverConfig(method=Method.AncillaBlock)


def qutrit(n, rates=QUTRIT_RATES):
    spec = build_qutrit_wave(n, rates)
    return spec, build_error_channels(spec.layout, rates, "qutrit_depolarizing")


def trace_distance(a, b):
    return 0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum()


def check_report(rep, tol=1e-9):
    rho = rep.dense()
    assert abs(np.trace(rho) - 1) < 1e-9
    assert np.abs(rho - rho.conj().T).max() < 1e-10
    assert np.linalg.eigvalsh(rho).min() >= -1e-8
    assert rep.residual <= tol
    assert 0 <= rep.ghz_fidelity <= 1


def test_qutrit_wave_no_errors_bound():
    n, kst = 2, 1e4
    r = RateSet(kappa_u=1e-3 * kst, kappa_st=kst, kappa_c=kst)
    rep = solve_steady_state(build_qutrit_wave(n, r), [], DENSE)
    eps = r.kappa_u / kst
    assert rep.ghz_fidelity >= 1 - 5 * (n * eps + (n - 1) * eps)
    check_report(rep)


@pytest.mark.parametrize("config", [DENSE, SPARSE])
def test_ltv_only_is_degenerate(config):
    spec = build_ltv(3, RateSet(kappa_c=1.0))
    with pytest.raises(KernelDegenerate) as info:
        solve_steady_state(spec, [], config)
    assert info.value.kernel_dim >= 2


def test_fidelity_of_product_state():
    lay = SubsystemLayout.chain(3)
    rho = np.zeros((8, 8))
    rho[0, 0] = 1
    assert ghz_fidelity(rho, lay) == pytest.approx(0.5)
    g = ghz_vector(lay)
    assert ghz_fidelity(np.outer(g, g.conj()), lay) == pytest.approx(1.0)


def test_fidelity_ignores_ancillas(rng):
    lay = build_state_conditioning(2, STATE_COND_RATES).layout
    D = lay.total_dim
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    g = ghz_vector(lay)
    direct = np.real(g.conj() @ reduce_to_data(rho, lay) @ g)
    assert ghz_fidelity(rho, lay) == pytest.approx(direct)


def test_block_unknowns_state_cond():
    spec = build_state_conditioning(3, STATE_COND_RATES)
    errs = build_error_channels(spec.layout, STATE_COND_RATES, "qubit_flips")
    rep = solve_block(spec, errs)
    assert rep.unknowns == 27 * 64 == 1728
    check_report(rep)


def test_block_matches_dense_qutrit_n3():
    spec, errs = qutrit(3)
    blk = solve_steady_state(spec, errs, BLOCK)
    full = solve_steady_state(spec, errs, DENSE)
    assert blk.unknowns == 5 ** 3
    assert trace_distance(blk.dense(), full.dense()) <= 1e-8
    check_report(full)


def test_block_matches_sparse_state_cond_n2():
    spec = build_state_conditioning(2, STATE_COND_RATES)
    errs = build_error_channels(spec.layout, STATE_COND_RATES, "qubit_flips")
    blk = solve_steady_state(spec, errs, BLOCK)
    full = solve_steady_state(spec, errs, SPARSE)
    assert trace_distance(blk.dense(), full.dense()) <= 1e-8
    assert blk.ghz_fidelity == pytest.approx(full.ghz_fidelity, abs=1e-9)


def test_no_coherence_with_level_two():
    spec, errs = qutrit(2)
    rho = solve_steady_state(spec, errs, DENSE).dense()
    lev = np.array([[a, b] for a in range(3) for b in range(3)])
    for s in range(2):
        two = lev[:, s] == 2
        assert np.abs(rho[np.ix_(~two, two)]).max() <= 1e-10


def test_dense_and_sparse_agree():
    spec, errs = qutrit(2)
    a = solve_steady_state(spec, errs, DENSE)
    b = solve_steady_state(spec, errs, SPARSE)
    assert trace_distance(a.dense(), b.dense()) < 1e-9
    check_report(b)


def test_auto_prefers_block():
    spec, errs = qutrit(2)
    assert solve_steady_state(spec, errs).method.startswith("block")


def test_no_convergence_reports_best():
    spec, errs = qutrit(3)
    cfg = SolverConfig(method=Method.SparseIterative, residual_tol=1e-300, max_iterations=2)
    with pytest.raises(NoConvergence) as info:
        solve_steady_state(spec, errs, cfg)
    assert info.value.best_residual < 1e-6


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(residual_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(method="nonsense")


def test_ancilla_relabeling_invariance():
    rates = STATE_COND_RATES
    spec = build_state_conditioning(2, rates)
    errs = build_error_channels(spec.layout, rates, "qubit_flips")
    lay = spec.layout
    perm = [2, 0, 1]  # new index of g, e, m
    P3 = np.zeros((3, 3))
    P3[perm, range(3)] = 1
    sites = tuple(s if s.role == "data" else Site("ancilla", tuple(np.array(s.labels)[np.argsort(perm)]))
                  for s in lay.sites)
    new_lay = SubsystemLayout(sites, lay.pair_ancillas)
    ops = []
    for c in spec.collapse_ops:
        U = np.eye(1)
        for s in c.op.sites:
            U = np.kron(U, P3 if lay.sites[s].role == "ancilla" else np.eye(lay.dims[s]))
        ops.append(LabeledCollapseOp(c.name, c.signal, c.index,
                                     LocalOperator(c.op.sites, U @ c.op.matrix @ U.T, c.op.amplitude)))
    shuffled = ReservoirSpec(new_lay, tuple(ops), spec.scheme, rates)
    a = solve_steady_state(spec, errs, BLOCK)
    b = solve_steady_state(shuffled, errs, BLOCK)
    assert a.ghz_fidelity == pytest.approx(b.ghz_fidelity, abs=1e-10)


def test_error_has_interior_minimum_in_launch_rate():
    errs = []
    for ku in np.logspace(1, 3, 5):
        r = RateSet(kappa_u=ku, kappa_st=1e4, kappa_c=1e4, kappa_p=1)
        spec, e = qutrit(3, r)
        errs.append(solve_steady_state(spec, e).error)
    assert min(errs) < errs[0] and min(errs) < errs[-1]


def test_time_evolution_fixed_point():
    spec, errs = qutrit(2)
    rep = solve_steady_state(spec, errs, DENSE)
    h = assemble_lindbladian(list(spec.collapse_ops) + errs, spec.layout)
    dt = 0.1 / max_rate(h)
    traj = time_evolve(spec, errs, rep.dense(), dt, 1000, record_every=100)
    assert np.abs(traj.fidelities - rep.ghz_fidelity).max() <= 1e-8
    assert np.abs(traj.traces - 1).max() <= 1e-10


def test_time_evolution_step_guard():
    spec, errs = qutrit(2)
    with pytest.raises(ValueError):
        time_evolve(spec, errs, np.eye(9) / 9, 1.0, 1)


def test_time_evolution_converges_ideal_clock():
    r = RateSet(kappa_u=2, kappa_d=5, kappa_r=50, kappa_c=5, kappa_p=0.1)
    spec = build_ideal_clock(2, r)
    errs = build_error_channels(spec.layout, r, "qubit_flips")
    target = solve_steady_state(spec, errs, DENSE)
    h = assemble_lindbladian(list(spec.collapse_ops) + errs, spec.layout)
    dt = 0.1 / max_rate(h)
    T = 40 / r.kappa_u
    rho0 = np.zeros((8, 8), dtype=complex)
    rho0[0, 0] = 1  # |00> data, register G
    traj = time_evolve(spec, errs, rho0, dt, int(np.ceil(T / dt)), record_every=1000)
    assert np.abs(traj.rho - target.dense()).max() <= 10 * 1e-9
    assert np.abs(traj.traces - 1).max() <= 1e-10


def test_ideal_clock_fidelity_above_half():
    r = RateSet(kappa_u=1, kappa_d=10, kappa_r=1e3, kappa_c=30)
    spec = build_ideal_clock(2, r)
    assert solve_steady_state(spec, [], DENSE).ghz_fidelity > 0.5


def test_ideal_clock_without_launch_is_degenerate():
    with pytest.warns(RuntimeWarning):
        spec = build_ideal_clock(2, RateSet(kappa_d=10, kappa_r=1e3, kappa_c=30))
    with pytest.raises(KernelDegenerate):
        solve_steady_state(spec, [], DENSE)


def test_snapshot_roundtrip(tmp_path):
    spec, errs = qutrit(2)
    rep = solve_steady_state(spec, errs)
    path = tmp_path / "rho.bin"
    dump_rho(path, rep.rho, spec)
    rho, header = load_rho(path)
    assert np.array_equal(rho, rep.dense())
    assert header["dims"] == [3, 3] and header["scheme"] == "qutrit_wave"
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope" * 4)
    with pytest.raises(ValueError):
        load_rho(bad)


def test_block_density_helpers():
    spec, errs = qutrit(2)
    rep = solve_block(spec, errs)
    assert isinstance(rep.rho, BlockDensity)
    assert rep.rho.trace() == pytest.approx(1.0)
    assert rep.rho.hermiticity_error() < 1e-12
    assert rep.rho.min_eigenvalue() == pytest.approx(np.linalg.eigvalsh(rep.dense()).min(), abs=1e-12)
    assert rep.scheme == SchemeId.QutritWave.value


@pytest.mark.parametrize("scheme", [s for s in SchemeId
                                    if s not in (SchemeId.LtvOnly, SchemeId.WaveTriJump)])
def test_every_scheme_has_unique_steady_state(scheme):
    r = RateSet(kappa_u=1, kappa_d=30, kappa_t=1, kappa_st=1e3, kappa_r=1e3, kappa_c=30,
                kappa_f=300, kappa_p=0.05)
    spec = build_scheme(scheme, 2, r)
    model = "qutrit_depolarizing" if scheme is SchemeId.QutritWave else "qubit_flips"
    rep = solve_steady_state(spec, build_error_channels(spec.layout, r, model))
    check_report(rep)


def test_tri_jump_dead_levels_make_kernel_degenerate():
    # ancilla 1 never enters f and the last ancilla never enters m; both are
    # absorbing; both add a stationary state next to the nominal cycle and
    # the f/m coherences between them are frozen too
    r = RateSet(kappa_u=1, kappa_st=1e3, kappa_c=30, kappa_p=0.05)
    spec = build_scheme(SchemeId.WaveTriJump, 2, r)
    errs = build_error_channels(spec.layout, r, "qubit_flips")
    with pytest.raises(KernelDegenerate) as info:
        solve_steady_state(spec, errs, DENSE)
    assert info.value.kernel_dim == 5

"""
Steady states of assembled reservoirs.

Three paths are available:

* a dense SVD of the explicit superoperator for small problems;
* shifted inverse iteration with a sparse LU factorization, seeded with the
  maximally mixed state;
* a block solver restricted to density matrices that are block diagonal in
  the classical sectors of the layout (each ancilla level is its own
  sector; qutrit data split into ``{0, 1}`` and ``{2}``). It is exact
  whenever every jump operator maps sectors to sectors injectively, which
  :func:`ghzres.reservoirs.coherence_audit` checks.

Residuals are reported as ``||L(rho)||_F / r_max`` where ``r_max`` bounds the
largest decay rate of the generator, so that they are dimensionless.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .reservoirs import AuditFailed, ReservoirSpec, coherence_audit, ghz_vector
from .tensor import (SUPEROPERATOR_CAP, LabeledCollapseOp, Lindbladian, SubsystemLayout,
                     assemble_lindbladian, embed)

__all__ = [
    "Method",
    "SolverConfig",
    "SteadyStateReport",
    "BlockDensity",
    "KernelDegenerate",
    "NoConvergence",
    "solve_steady_state",
    "solve_block",
    "time_evolve",
    "ghz_fidelity",
    "reduce_to_data",
    "dump_rho",
    "load_rho",
    "Trajectory",
    "SectorBasis",
    "block_superoperator",
    "max_rate",
]

log = logging.getLogger(__name__)


class KernelDegenerate(RuntimeError):
    """The generator has more than one steady state."""

    def __init__(self, msg, kernel_dim: int):
        super().__init__(msg)
        self.kernel_dim = kernel_dim


class NoConvergence(RuntimeError):
    """The steady-state residual did not reach the tolerance."""

    def __init__(self, msg, best_residual: float):
        super().__init__(msg)
        self.best_residual = best_residual


class Method(str, enum.Enum):
    DenseNullSpace = "dense"
    SparseIterative = "sparse"
    AncillaBlock = "block"
    Auto = "auto"


@dataclass(frozen=True)
class SolverConfig:
    """
    Parameters
    ----------
    method : Method
    residual_tol : float
        Bound on the normalized residual.
    max_iterations : int
        Inverse-iteration steps for the sparse path.
    dense_cap : int
        Largest number of unknowns handled by the dense SVD.
    superoperator_cap : int
        Largest number of superoperator rows that may be built.
    check_uniqueness : bool
        Estimate the second smallest eigenvalue (sparse path) or singular
        value (dense path) and raise :class:`KernelDegenerate` if the kernel
        is not one-dimensional.
    """

    method: Method = Method.Auto
    residual_tol: float = 1e-9
    max_iterations: int = 50
    dense_cap: int = 800
    superoperator_cap: int = SUPEROPERATOR_CAP
    check_uniqueness: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


# ---------------------------------------------------------------------------
# block representation

class SectorBasis:
    """Enumeration of classical sector configurations of a layout."""

    def __init__(self, layout: SubsystemLayout, sectors):
        self.layout = layout
        self.sectors = sectors
        strides = layout.strides()
        self.configs = list(itertools.product(*[range(len(p)) for p in sectors]))
        self.config_id = {c: i for i, c in enumerate(self.configs)}
        self.indices = []
        for c in self.configs:
            levels = [sectors[s][c[s]] for s in range(len(c))]
            idx = np.zeros(1, dtype=np.int64)
            for s, lv in enumerate(levels):
                idx = (idx[:, None] + strides[s] * np.asarray(lv, dtype=np.int64)[None, :]).ravel()
            self.indices.append(idx)
        self.dims = np.array([len(i) for i in self.indices])
        self.offsets = np.concatenate([[0], np.cumsum(self.dims ** 2)])
        D = layout.total_dim
        self.config_of = np.empty(D, dtype=np.int64)
        self.position = np.empty(D, dtype=np.int64)
        for j, idx in enumerate(self.indices):
            self.config_of[idx] = j
            self.position[idx] = np.arange(len(idx))

    @property
    def n_unknowns(self) -> int:
        return int(self.offsets[-1])

    def trace_positions(self) -> np.ndarray:
        return np.concatenate([o + np.arange(d) * (d + 1)
                               for o, d in zip(self.offsets[:-1], self.dims)])


@dataclass(eq=False)
class BlockDensity:
    """Density matrix stored as one dense block per sector configuration."""

    basis: SectorBasis
    blocks: list

    @classmethod
    def from_vector(cls, basis: SectorBasis, x: np.ndarray) -> "BlockDensity":
        blocks = [x[o:o + d * d].reshape(d, d)
                  for o, d in zip(basis.offsets[:-1], basis.dims)]
        return cls(basis, blocks)

    def element(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        i, j = np.atleast_1d(i), np.atleast_1d(j)
        ci, cj = self.basis.config_of[i], self.basis.config_of[j]
        out = np.zeros(i.shape, dtype=complex)
        for n in np.nonzero(ci == cj)[0]:
            out[n] = self.blocks[ci[n]][self.basis.position[i[n]], self.basis.position[j[n]]]
        return out

    def to_dense(self) -> np.ndarray:
        D = self.basis.layout.total_dim
        rho = np.zeros((D, D), dtype=complex)
        for idx, b in zip(self.basis.indices, self.blocks):
            rho[np.ix_(idx, idx)] = b
        return rho

    def trace(self) -> complex:
        return sum(np.trace(b) for b in self.blocks)

    def hermiticity_error(self) -> float:
        return max(float(np.abs(b - b.conj().T).max()) for b in self.blocks)

    def min_eigenvalue(self) -> float:
        return min(float(la.eigvalsh(0.5 * (b + b.conj().T))[0]) for b in self.blocks)


def _ghz_pairs(layout: SubsystemLayout):
    """Full indices of ``|0..0, a>`` and ``|1..1, a>`` for every ancilla state ``a``."""
    g = ghz_vector(layout)
    i0, i1 = np.nonzero(g)[0]
    anc = np.arange(layout.total_dim // layout.data_dim)
    D_anc = len(anc)
    return i0 * D_anc + anc, i1 * D_anc + anc


def ghz_fidelity(rho, layout: SubsystemLayout) -> float:
    """
    Overlap of the data marginal with ``(|0..0> + |1..1>)/sqrt(2)``.

    Parameters
    ----------
    rho : ndarray or BlockDensity
    layout : SubsystemLayout
    """
    a, b = _ghz_pairs(layout)
    if isinstance(rho, BlockDensity):
        raa, rbb, rab = rho.element(a, a), rho.element(b, b), rho.element(a, b)
    else:
        raa, rbb, rab = rho[a, a], rho[b, b], rho[a, b]
    return float(0.5 * np.sum(raa.real + rbb.real + 2 * rab.real))


def reduce_to_data(rho: np.ndarray, layout: SubsystemLayout) -> np.ndarray:
    """Partial trace over the ancilla sites."""
    dd = layout.data_dim
    da = layout.total_dim // dd
    return np.einsum("iaja->ij", np.asarray(rho).reshape(dd, da, dd, da))


@dataclass(eq=False)
class SteadyStateReport:
    """
    Result of a steady-state computation.

    Attributes
    ----------
    rho : ndarray or BlockDensity
    ghz_fidelity : float
    residual : float
        ``||L(rho)||_F`` divided by the decay-rate scale.
    min_eigenvalue : float
    trace : float
    hermiticity_error : float
    method : str
    iterations : int
    wall_time : float
    unknowns : int
    kernel_gap : float
        Ratio of the second smallest to the smallest spectral quantity used
        for the uniqueness test (``inf`` when not computed exactly).
    """

    rho: object
    ghz_fidelity: float
    residual: float
    min_eigenvalue: float
    trace: float
    hermiticity_error: float
    method: str
    iterations: int
    wall_time: float
    unknowns: int
    kernel_gap: float = float("nan")
    scheme: str = ""
    rates: dict = field(default_factory=dict)
    dims: tuple = ()

    @property
    def error(self) -> float:
        return 1.0 - self.ghz_fidelity

    def dense(self) -> np.ndarray:
        return self.rho.to_dense() if isinstance(self.rho, BlockDensity) else self.rho


# ---------------------------------------------------------------------------
# null-vector computation

def _decay_scale(K) -> float:
    K = sp.csr_matrix(K)
    s = float(abs(K).sum(axis=1).max()) if K.nnz else 0.0
    return s if s > 0 else 1.0


def _null_dense(A, trace_idx, config):
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    _, s, vh = la.svd(A)
    s_max = s[0] if s[0] > 0 else 1.0
    gap = s[-2] / s[-1] if s[-1] > 0 else float("inf")
    if config.check_uniqueness and (s[-2] < 1e3 * s[-1] or s[-2] < 1e-14 * s_max):
        thresh = max(1e3 * s[-1], 1e-14 * s_max)
        raise KernelDegenerate(
            f"generator kernel is not one-dimensional (singular values {s[-1]:.3e}, {s[-2]:.3e})",
            int(np.sum(s <= thresh)))
    x = vh[-1].conj()
    return x / x[trace_idx].sum(), 1, gap


def _null_sparse(A, trace_idx, x0, scale, config, norm_residual):
    N = A.shape[0]
    shift = 1e-9 * scale
    B = sp.csc_matrix(A + shift * sp.identity(N, dtype=complex, format="csc"))
    lu = spla.splu(B)
    x = x0.astype(complex)
    best = np.inf
    it = 0
    for it in range(1, config.max_iterations + 1):
        x = lu.solve(x)
        x = x / x[trace_idx].sum()
        res = norm_residual(x)
        # keep iterating well below tolerance while it still pays off
        if res <= 1e-3 * config.residual_tol or (res <= config.residual_tol and res > 0.5 * best):
            break
        best = min(best, res)
    gap = float("nan")
    if config.check_uniqueness:
        gap = _check_sparse_kernel(lu, N, shift, x0)
    return x, it, gap


def _check_sparse_kernel(lu, N, shift, v0):
    """Two eigenvalues of ``A`` nearest zero from the shifted factorization."""
    op = spla.LinearOperator((N, N), matvec=lu.solve, dtype=complex)
    k = 2 if N > 3 else 1
    if N <= 3:
        return float("inf")
    mu = spla.eigs(op, k=k, which="LM", v0=v0.astype(complex), tol=1e-8,
                   return_eigenvectors=False)
    # eigenvalues of B are 1/mu; those of A are 1/mu - shift
    lam = np.sort(np.abs(1.0 / mu - shift))
    if lam[1] < max(1e3 * lam[0], 10 * shift):
        more = min(6, N - 2)
        mu = spla.eigs(op, k=more, which="LM", v0=v0.astype(complex), tol=1e-8,
                       return_eigenvectors=False)
        lam_all = np.abs(1.0 / mu - shift)
        dim = int(np.sum(lam_all < max(1e3 * lam[0], 10 * shift)))
        raise KernelDegenerate(
            f"generator kernel is not one-dimensional (eigenvalues {lam[0]:.3e}, {lam[1]:.3e})",
            max(dim, 2))
    return float(lam[1] / lam[0]) if lam[0] > 0 else float("inf")


# ---------------------------------------------------------------------------
# solvers

def _finish_report(spec, rho, residual, method, iterations, t0, unknowns, gap):
    if isinstance(rho, BlockDensity):
        tr = rho.trace()
        herm = rho.hermiticity_error()
        mineig = rho.min_eigenvalue()
    else:
        tr = np.trace(rho)
        herm = float(np.abs(rho - rho.conj().T).max())
        mineig = float(la.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    fid = ghz_fidelity(rho, spec.layout)
    return SteadyStateReport(
        rho=rho, ghz_fidelity=min(max(fid, 0.0), 1.0), residual=float(residual),
        min_eigenvalue=mineig, trace=float(tr.real), hermiticity_error=herm,
        method=method, iterations=iterations, wall_time=time.perf_counter() - t0,
        unknowns=int(unknowns), kernel_gap=gap, scheme=spec.scheme.value,
        rates=spec.rates.as_dict(), dims=spec.layout.dims)


def _full_solve(spec, errors, config, method):
    t0 = time.perf_counter()
    handle = assemble_lindbladian(list(spec.collapse_ops) + list(errors), spec.layout)
    D = handle.dim
    N = D * D
    if N > config.superoperator_cap:
        raise MemoryError(f"{N} unknowns exceed the superoperator cap; use the block solver")
    A = handle.superoperator(cap=config.superoperator_cap)
    scale = _decay_scale(handle.decay)
    trace_idx = np.arange(D) * (D + 1)

    def norm_residual(x):
        return float(np.linalg.norm(A @ x)) / scale

    if method is Method.DenseNullSpace:
        x, it, gap = _null_dense(A, trace_idx, config)
    else:
        x0 = np.eye(D, dtype=complex).ravel() / D
        x, it, gap = _null_sparse(A, trace_idx, x0, scale, config, norm_residual)
    rho = x.reshape(D, D)
    rho = 0.5 * (rho + rho.conj().T)
    res = float(np.linalg.norm(handle.apply(rho))) / scale
    if res > config.residual_tol:
        raise NoConvergence(f"residual {res:.3e} above tolerance {config.residual_tol:.1e}", res)
    return _finish_report(spec, rho, res, method.value, it, t0, N, gap)


def block_superoperator(spec: ReservoirSpec, errors: Sequence[LabeledCollapseOp] = ()):
    """
    Generator restricted to sector-block-diagonal density matrices.

    Returns
    -------
    A : scipy.sparse.csr_matrix
        Acts on the concatenation of row-major flattened blocks.
    basis : SectorBasis
    scale : float
        Decay-rate scale used to normalize residuals.

    Raises
    ------
    AuditFailed
        If an operator does not map sectors injectively.
    """
    ops = list(spec.collapse_ops) + list(errors)
    coherence_audit(spec, errors)
    basis = SectorBasis(spec.layout, spec.sectors)
    nconf = len(basis.configs)
    rows, cols, vals = [], [], []
    K_blocks = [np.zeros((d, d), dtype=complex) for d in basis.dims]

    def place(mat, r0, c0):
        m = sp.coo_matrix(mat)
        rows.append(m.row + r0)
        cols.append(m.col + c0)
        vals.append(m.data)

    for c in ops:
        L = sp.csc_matrix(embed(c.op, spec.layout))
        for j in range(nconf):
            sub = L[:, basis.indices[j]]
            if sub.nnz == 0:
                continue
            targets = np.unique(basis.config_of[sub.indices])
            if len(targets) != 1:
                raise AuditFailed(f"{c.name} spreads configuration {basis.configs[j]}")
            t = targets[0]
            blk = sub[basis.indices[t], :].toarray()
            place(np.kron(blk, blk.conj()), basis.offsets[t], basis.offsets[j])
            K_blocks[j] += blk.conj().T @ blk
    scale = 0.0
    for j, (d, K) in enumerate(zip(basis.dims, K_blocks)):
        scale = max(scale, float(np.abs(K).sum(axis=1).max()))
        heff = -0.5j * K
        eye = np.eye(d)
        place(-1j * np.kron(heff, eye) + 1j * np.kron(eye, heff.conj()),
              basis.offsets[j], basis.offsets[j])
    N = basis.n_unknowns
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    A.sum_duplicates()
    return A, basis, (scale if scale > 0 else 1.0)


def solve_block(spec: ReservoirSpec, errors: Sequence[LabeledCollapseOp] = (),
                config: SolverConfig | None = None) -> SteadyStateReport:
    """
    Steady state within the classical-sector block-diagonal subspace.

    Parameters
    ----------
    spec : ReservoirSpec
    errors : list of LabeledCollapseOp
    config : SolverConfig, optional

    Returns
    -------
    SteadyStateReport
        ``rho`` is a :class:`BlockDensity`.

    Raises
    ------
    AuditFailed
        If some operator creates coherences between sectors.
    KernelDegenerate, NoConvergence
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    A, basis, scale = block_superoperator(spec, errors)
    N = basis.n_unknowns
    tidx = basis.trace_positions()

    def norm_residual(x):
        return float(np.linalg.norm(A @ x)) / scale

    if N <= config.dense_cap:
        x, it, gap = _null_dense(A, tidx, config)
        method = "block-dense"
    else:
        x0 = np.concatenate([np.eye(d, dtype=complex).ravel() for d in basis.dims])
        x0 /= x0[tidx].sum()
        x, it, gap = _null_sparse(A, tidx, x0, scale, config, norm_residual)
        method = "block-sparse"
    rho = BlockDensity.from_vector(basis, x)
    rho.blocks = [0.5 * (b + b.conj().T) for b in rho.blocks]
    x = np.concatenate([b.ravel() for b in rho.blocks])
    res = norm_residual(x)
    if res > config.residual_tol:
        raise NoConvergence(f"residual {res:.3e} above tolerance {config.residual_tol:.1e}", res)
    return _finish_report(spec, rho, res, method, it, t0, N, gap)


def solve_steady_state(spec: ReservoirSpec, errors: Sequence[LabeledCollapseOp] = (),
                       config: SolverConfig | None = None) -> SteadyStateReport:
    """
    Unique steady state of a reservoir plus error channels.

    Parameters
    ----------
    spec : ReservoirSpec
    errors : list of LabeledCollapseOp
    config : SolverConfig, optional
        With ``Method.Auto`` the block solver is used whenever the sector
        audit passes; otherwise the dense path below ``dense_cap`` unknowns
        and the sparse path above.

    Returns
    -------
    SteadyStateReport

    Raises
    ------
    KernelDegenerate
        If the steady state is not unique.
    NoConvergence
        If the residual stays above ``config.residual_tol``.
    """
    config = config or SolverConfig()
    method = config.method
    if method is Method.AncillaBlock:
        return solve_block(spec, errors, config)
    if method is Method.Auto:
        try:
            coherence_audit(spec, errors)
            return solve_block(spec, errors, config)
        except AuditFailed as exc:
            log.info("block solver unavailable: %s", exc)
        D = spec.layout.total_dim
        method = Method.DenseNullSpace if D * D <= config.dense_cap else Method.SparseIterative
    return _full_solve(spec, errors, config, method)


# ---------------------------------------------------------------------------
# time evolution

@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    fidelities: np.ndarray
    traces: np.ndarray
    rho: np.ndarray


def max_rate(handle: Lindbladian) -> float:
    """Largest eigenvalue of ``sum L^dag L``."""
    K = handle.decay
    if K.shape[0] <= 512:
        return float(la.eigvalsh(K.toarray())[-1])
    return float(spla.eigsh(K, k=1, which="LA", return_eigenvectors=False)[0])


def time_evolve(spec: ReservoirSpec, errors: Sequence[LabeledCollapseOp], rho0: np.ndarray,
                dt: float, steps: int, record_every: int = 1) -> Trajectory:
    """
    Integrate the master equation with the classical fourth-order Runge-Kutta rule.

    Parameters
    ----------
    spec, errors
        Reservoir and error channels.
    rho0 : ndarray
        Initial density matrix on the full space.
    dt : float
        Step; ``dt * max_rate`` must not exceed 0.1.
    steps : int
    record_every : int
        Stride of the recorded fidelity trajectory.

    Returns
    -------
    Trajectory
    """
    handle = assemble_lindbladian(list(spec.collapse_ops) + list(errors), spec.layout)
    r = max_rate(handle)
    if dt * r > 0.1:
        raise ValueError(f"step {dt:g} too large: dt * max_rate = {dt * r:.3g} > 0.1")
    rho = np.array(rho0, dtype=complex)
    f = handle.apply
    times, fids, trs = [0.0], [ghz_fidelity(rho, spec.layout)], [np.trace(rho).real]
    for step in range(1, steps + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % record_every == 0 or step == steps:
            times.append(step * dt)
            fids.append(ghz_fidelity(rho, spec.layout))
            trs.append(np.trace(rho).real)
    return Trajectory(np.array(times), np.array(fids), np.array(trs), rho)


# ---------------------------------------------------------------------------
# binary snapshots

_MAGIC = b"GHZRHO1\0"


def dump_rho(path, rho, spec: ReservoirSpec):
    """
    Write a density matrix as row-major little-endian complex doubles.

    The file starts with an 8-byte magic, a 4-byte header length and a JSON
    header holding the site dimensions, scheme and rates.
    """
    if isinstance(rho, BlockDensity):
        rho = rho.to_dense()
    rho = np.ascontiguousarray(rho, dtype="<c16")
    header = json.dumps({"dims": list(spec.layout.dims), "scheme": spec.scheme.value,
                         "rates": spec.rates.as_dict()}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(rho.tobytes())


def load_rho(path):
    """Inverse of :func:`dump_rho`; returns ``(rho, header)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a density-matrix snapshot")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n))
        D = int(np.prod(header["dims"]))
        rho = np.frombuffer(fh.read(), dtype="<c16").reshape(D, D).copy()
    return rho, header


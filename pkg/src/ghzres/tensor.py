"""
Sparse linear algebra on multipartite Hilbert spaces.

The full basis is the Kronecker product of the site bases in layout order,
site 0 being the most significant digit. Data sites come first, ancilla
sites after. All site indices in this package are 0-based.

Superoperators use the row-major vectorization ``vec(A X B) = (A kron B^T)
vec(X)``, which is what ``rho.reshape(-1)`` produces for a C-ordered array.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Site",
    "SubsystemLayout",
    "LocalOperator",
    "LabeledCollapseOp",
    "Lindbladian",
    "embed",
    "assemble_lindbladian",
    "apply_lindbladian",
    "SUPEROPERATOR_CAP",
]

#: Largest number of superoperator rows that may be materialized.
SUPEROPERATOR_CAP = 4_000_000


@dataclass(frozen=True)
class Site:
    """One subsystem of the chain: its role and its level labels."""

    role: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.role not in ("data", "ancilla"):
            raise ValueError(f"site role must be 'data' or 'ancilla', got {self.role!r}")
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if len(self.labels) < 2:
            raise ValueError("every site needs dimension >= 2")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate level labels {self.labels}")

    @property
    def dim(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SubsystemLayout:
    """
    Ordered chain of data and ancilla subsystems.

    Parameters
    ----------
    sites : sequence of Site
        Data sites must precede ancilla sites.
    pair_ancillas : bool
        Topology hint. If True, ancilla ``k`` sits between data ``k`` and
        ``k + 1`` (one ancilla per data pair). Otherwise ancilla ``k`` faces
        data ``k``.
    """

    sites: tuple[Site, ...]
    pair_ancillas: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        roles = [s.role for s in self.sites]
        n_data = roles.count("data")
        if n_data < 2:
            raise ValueError("a layout needs at least 2 data sites")
        if roles[:n_data] != ["data"] * n_data:
            raise ValueError("data sites must come before ancilla sites")

    @classmethod
    def chain(cls, n_data, data_labels=("0", "1"), n_ancilla=0,
              ancilla_labels=("g", "e"), pair_ancillas=False):
        """Build a uniform double chain."""
        sites = [Site("data", tuple(data_labels)) for _ in range(n_data)]
        sites += [Site("ancilla", tuple(ancilla_labels)) for _ in range(n_ancilla)]
        return cls(tuple(sites), pair_ancillas)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sites)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_data(self) -> int:
        return sum(s.role == "data" for s in self.sites)

    @property
    def n_ancilla(self) -> int:
        return self.n_sites - self.n_data

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def data_dim(self) -> int:
        return int(np.prod(self.dims[: self.n_data], dtype=np.int64))

    def ancilla_site(self, k: int) -> int:
        """Site index of ancilla ``k`` (0-based among ancillas)."""
        if not 0 <= k < self.n_ancilla:
            raise IndexError(f"ancilla {k} out of range")
        return self.n_data + k

    def level(self, site: int, label: str) -> int:
        return self.sites[site].labels.index(label)

    def strides(self) -> np.ndarray:
        dims = np.asarray(self.dims, dtype=np.int64)
        out = np.ones_like(dims)
        out[:-1] = np.cumprod(dims[::-1])[::-1][1:]
        return out

    def adjacency(self) -> set[frozenset]:
        """Edges of the double-chain topology, as frozensets of site indices."""
        n, m = self.n_data, self.n_ancilla
        edges = {frozenset((k, k + 1)) for k in range(n - 1)}
        edges |= {frozenset((n + k, n + k + 1)) for k in range(m - 1)}
        for k in range(m):
            edges.add(frozenset((n + k, k)))
            if self.pair_ancillas and k + 1 < n:
                edges.add(frozenset((n + k, k + 1)))
        return edges

    def is_connected(self, sites: Sequence[int]) -> bool:
        """Whether ``sites`` induce a connected subgraph of the double chain."""
        sites = list(dict.fromkeys(sites))
        if len(sites) <= 1:
            return True
        edges = self.adjacency()
        seen = {sites[0]}
        stack = [sites[0]]
        while stack:
            a = stack.pop()
            for b in sites:
                if b not in seen and frozenset((a, b)) in edges:
                    seen.add(b)
                    stack.append(b)
        return len(seen) == len(sites)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """
    Dense operator acting on a few sites, identity elsewhere.

    The effective operator is ``amplitude * matrix``. The matrix basis is the
    Kronecker product of the listed sites in the listed order, which need not
    be the layout order.
    """

    sites: tuple[int, ...]
    matrix: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        if len(set(self.sites)) != len(self.sites) or not self.sites:
            raise ValueError(f"sites must be distinct and non-empty, got {self.sites}")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("local matrix must be square")
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError("amplitude must be finite and >= 0")

    @property
    def full_matrix(self) -> np.ndarray:
        return self.amplitude * self.matrix


@dataclass(frozen=True, eq=False)
class LabeledCollapseOp:
    """
    A jump operator together with the detection signal it produces.

    Parameters
    ----------
    name : str
        Unique operator name, for example ``"N_2,r"``.
    signal : str
        Signal class: ``"L"``, ``"+"``, ``"U"``, ``"E"`` or ``"clock"``.
    index : int or None
        Site or bond index the signal refers to (1-based, as in ``"2L"``).
    op : LocalOperator
    """

    name: str
    signal: str
    index: int | None
    op: LocalOperator

    SIGNALS = ("L", "+", "U", "E", "clock")

    def __post_init__(self):
        if self.signal not in self.SIGNALS:
            raise ValueError(f"unknown signal class {self.signal!r}")

    @property
    def label(self) -> str:
        """Detection label such as ``'2L'``, ``'U'`` or ``'clock'``."""
        if self.signal in ("U", "clock") or self.index is None:
            return self.signal
        return f"{self.index}{self.signal}"


def _check_sites(op: LocalOperator, layout: SubsystemLayout):
    for s in op.sites:
        if not 0 <= s < layout.n_sites:
            raise IndexError(f"site {s} out of range for a {layout.n_sites}-site layout")
    local_dim = int(np.prod([layout.dims[s] for s in op.sites]))
    if op.matrix.shape[0] != local_dim:
        raise ValueError(
            f"matrix dimension {op.matrix.shape[0]} does not match sites "
            f"{op.sites} of dimension {local_dim}")


def embed(op: LocalOperator, layout: SubsystemLayout) -> sp.csr_matrix:
    """
    Embed a local operator into the full Hilbert space.

    Parameters
    ----------
    op : LocalOperator
    layout : SubsystemLayout

    Returns
    -------
    scipy.sparse.csr_matrix
        ``I ⊗ op ⊗ I`` with the factors at the positions ``op.sites``. Sites
        that are not contiguous are handled by index arithmetic only.

    Raises
    ------
    IndexError
        If a site is outside the layout.
    ValueError
        If the matrix size does not match the sites.
    """
    _check_sites(op, layout)
    dims = np.asarray(layout.dims, dtype=np.int64)
    strides = layout.strides()
    D = layout.total_dim
    idx = np.arange(D, dtype=np.int64)

    site_dims = dims[list(op.sites)]
    site_strides = strides[list(op.sites)]
    local_strides = np.ones(len(op.sites), dtype=np.int64)
    if len(op.sites) > 1:
        local_strides[:-1] = np.cumprod(site_dims[::-1])[::-1][1:]

    local_index = np.zeros(D, dtype=np.int64)
    base = idx.copy()
    for s, st, lst, d in zip(op.sites, site_strides, local_strides, site_dims):
        digit = (idx // st) % d
        local_index += digit * lst
        base -= digit * st

    # Offset in the full index of each local basis state.
    n_local = int(np.prod(site_dims))
    local_digits = (np.arange(n_local)[:, None] // local_strides[None, :]) % site_dims[None, :]
    offsets = local_digits @ site_strides

    mat = op.full_matrix
    rows_b, cols_a = np.nonzero(mat)
    rows, cols, vals = [], [], []
    by_col = {}
    order = np.argsort(local_index, kind="stable")
    bounds = np.searchsorted(local_index[order], np.arange(n_local + 1))
    for b, a in zip(rows_b, cols_a):
        if a not in by_col:
            by_col[a] = order[bounds[a]:bounds[a + 1]]
        c = by_col[a]
        cols.append(c)
        rows.append(base[c] + offsets[b])
        vals.append(np.full(c.size, mat[b, a]))
    if not rows:
        return sp.csr_matrix((D, D), dtype=complex)
    out = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(D, D), dtype=complex)
    out.sum_duplicates()
    return out


@dataclass(frozen=True, eq=False)
class Lindbladian:
    """
    Assembled Lindblad generator.

    Holds the embedded jump operators and ``H_eff = H - (i/2) sum L^dag L``
    so that ``L(rho) = -i (H_eff rho - rho H_eff^dag) + sum L rho L^dag``.
    Instances are immutable and can be shared between workers.
    """

    dim: int
    collapse: tuple[sp.csr_matrix, ...]
    labels: tuple[str, ...]
    hamiltonian: sp.csr_matrix | None
    decay: sp.csr_matrix = field(repr=False)
    h_eff: sp.csr_matrix = field(repr=False)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Matrix-free application to a dense ``dim x dim`` operator."""
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"expected a {self.dim}x{self.dim} operator, got {rho.shape}")
        hr = self.h_eff @ rho
        out = -1j * hr
        out += 1j * (self.h_eff @ rho.conj().T).conj().T
        for L in self.collapse:
            out += L @ (L @ rho.conj().T).conj().T
        return np.asarray(out)

    def superoperator(self, cap: int = SUPEROPERATOR_CAP) -> sp.csr_matrix:
        """
        Explicit sparse superoperator acting on ``rho.reshape(-1)``.

        Raises
        ------
        MemoryError
            If ``dim**2`` exceeds ``cap``.
        """
        n = self.dim
        if n * n > cap:
            raise MemoryError(f"superoperator with {n * n} rows exceeds cap {cap}")
        eye = sp.identity(n, dtype=complex, format="csr")
        S = -1j * sp.kron(self.h_eff, eye) + 1j * sp.kron(eye, self.h_eff.conj())
        for L in self.collapse:
            S = S + sp.kron(L, L.conj())
        return sp.csr_matrix(S)


def assemble_lindbladian(collapse: Iterable[LabeledCollapseOp], layout: SubsystemLayout,
                         hamiltonian: Sequence[LocalOperator] | None = None) -> Lindbladian:
    """
    Assemble the Lindblad generator for a set of jump operators.

    Parameters
    ----------
    collapse : iterable of LabeledCollapseOp
    layout : SubsystemLayout
    hamiltonian : list of LocalOperator, optional
        Terms of the Hamiltonian; zero if omitted.

    Returns
    -------
    Lindbladian
    """
    collapse = list(collapse)
    D = layout.total_dim
    Ls = tuple(embed(c.op, layout) for c in collapse)
    H = None
    if hamiltonian:
        H = sp.csr_matrix((D, D), dtype=complex)
        for term in hamiltonian:
            H = H + embed(term, layout)
        if abs(H - H.conj().T).max() > 1e-12 * max(1.0, abs(H).max()):
            raise ValueError("Hamiltonian is not Hermitian")
    if not Ls and H is None:
        warnings.warn("empty generator: every state is stationary", RuntimeWarning, stacklevel=2)
    K = sp.csr_matrix((D, D), dtype=complex)
    for L in Ls:
        K = K + L.conj().T @ L
    h_eff = -0.5j * K if H is None else H - 0.5j * K
    return Lindbladian(D, Ls, tuple(c.label for c in collapse), H,
                       sp.csr_matrix(K), sp.csr_matrix(h_eff))


def apply_lindbladian(handle: Lindbladian, rho: np.ndarray) -> np.ndarray:
    """Apply an assembled generator to ``rho``; see :meth:`Lindbladian.apply`."""
    return handle.apply(rho)

"""Continuous-time Markov chains with labeled states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

__all__ = ["CtmcModel", "ChainReport", "ctmc_stationary", "ReducibleChain"]


class ReducibleChain(ValueError):
    """The chain has no unique stationary distribution."""


@dataclass(frozen=True, eq=False)
class CtmcModel:
    """
    Finite CTMC in column convention: ``dp/dt = A p``.

    ``A[j, i]`` is the rate from state ``i`` to state ``j``. The diagonal is
    always recomputed from the off-diagonal entries so that columns sum to
    zero exactly up to rounding; self-loops are dropped.
    """

    states: tuple[str, ...]
    generator: sp.csr_matrix

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        N = len(states)
        if len(set(states)) != N:
            raise ValueError("state labels must be unique")
        A = sp.csr_matrix(self.generator, dtype=float)
        if A.shape != (N, N):
            raise ValueError(f"generator shape {A.shape} does not match {N} states")
        A = A.tolil()
        A.setdiag(0)
        A = sp.csr_matrix(A)
        A.eliminate_zeros()
        if A.nnz and A.data.min() < 0:
            raise ValueError("negative transition rate")
        A = A - sp.diags(np.asarray(A.sum(axis=0)).ravel())
        object.__setattr__(self, "generator", sp.csr_matrix(A))

    @classmethod
    def from_edges(cls, states: Sequence[str], edges: Iterable[tuple[str, str, float]]):
        """Build from ``(source, target, rate)`` triples; repeated edges add up."""
        index = {s: i for i, s in enumerate(states)}
        rows, cols, vals = [], [], []
        for src, dst, rate in edges:
            if rate < 0:
                raise ValueError(f"negative rate {rate} on {src} -> {dst}")
            if rate == 0 or src == dst:
                continue
            rows.append(index[dst])
            cols.append(index[src])
            vals.append(float(rate))
        N = len(states)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        return cls(tuple(states), A)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        return self.states.index(state)

    def rate(self, src: str, dst: str) -> float:
        return float(self.generator[self.index(dst), self.index(src)])

    def edges(self):
        """Iterate ``(source, target, rate)`` over positive off-diagonal rates."""
        A = sp.coo_matrix(self.generator)
        for i, j, v in sorted(zip(A.col, A.row, A.data)):
            if i != j and v > 0:
                yield self.states[i], self.states[j], float(v)

    def to_edge_list(self) -> str:
        """
        Tab-separated ``source target rate`` lines, rates with 17 digits.

        A leading ``# states`` comment keeps the state order and states
        without edges.
        """
        lines = ["# states\t" + "\t".join(self.states), "# source\ttarget\trate"]
        lines += [f"{a}\t{b}\t{r:.17g}" for a, b, r in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "CtmcModel":
        states, edges = [], []
        for line in text.splitlines():
            if line.startswith("# states\t"):
                states = line.split("\t")[1:]
                continue
            if not line.strip() or line.startswith("#"):
                continue
            a, b, r = line.split("\t")
            for s in (a, b):
                if s not in states:
                    states.append(s)
            edges.append((a, b, float(r)))
        return cls.from_edges(states, edges)

    def column_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.generator.sum(axis=0))).max())

    def closed_classes(self) -> list[np.ndarray]:
        """Communicating classes that no transition leaves."""
        G = sp.csr_matrix(self.generator.T)
        G.setdiag(0)
        G.eliminate_zeros()
        ncomp, labels = connected_components(G, directed=True, connection="strong")
        leaves = np.zeros(ncomp, dtype=bool)
        Gc = sp.coo_matrix(G)
        for i, j in zip(Gc.row, Gc.col):
            if labels[i] != labels[j]:
                leaves[labels[i]] = True
        return [np.nonzero(labels == c)[0] for c in range(ncomp) if not leaves[c]]

    @property
    def irreducible(self) -> bool:
        G = sp.csr_matrix(self.generator.T)
        G.setdiag(0)
        G.eliminate_zeros()
        return connected_components(G, directed=True, connection="strong")[0] == 1


@dataclass(eq=False)
class ChainReport:
    """
    Stationary distribution of a chain and derived populations.

    Attributes
    ----------
    states : tuple of str
    distribution : ndarray
    residual : float
        ``||A p||_inf`` divided by the largest exit rate.
    aggregates : dict
        Named populations filled in by the analysis helpers.
    """

    states: tuple[str, ...]
    distribution: np.ndarray
    residual: float = 0.0
    aggregates: dict = field(default_factory=dict)

    def __getitem__(self, state: str) -> float:
        return float(self.distribution[self.states.index(state)])

    def mass(self, predicate: Callable[[str], bool]) -> float:
        return float(sum(p for s, p in zip(self.states, self.distribution) if predicate(s)))

    def as_dict(self) -> dict[str, float]:
        return {s: float(p) for s, p in zip(self.states, self.distribution)}


def ctmc_stationary(model: CtmcModel) -> ChainReport:
    """
    Unique stationary distribution by a sparse LU solve.

    One balance equation is replaced by the normalization ``sum p = 1``.
    Chains with transient states are accepted as long as exactly one closed
    class exists.

    Raises
    ------
    ReducibleChain
        If there are several closed classes.
    """
    closed = model.closed_classes()
    if len(closed) != 1:
        raise ReducibleChain(f"chain has {len(closed)} closed classes")
    A = model.generator.tolil(copy=True)
    N = model.n_states
    r = int(closed[0][0])
    A[r, :] = np.ones(N)
    b = np.zeros(N)
    b[r] = 1.0
    if N == 1:
        p = np.ones(1)
    else:
        p = spla.splu(sp.csc_matrix(A)).solve(b)
    scale = float(np.abs(model.generator.diagonal()).max()) or 1.0
    res = float(np.abs(model.generator @ p).max()) / scale
    return ChainReport(model.states, p, res)

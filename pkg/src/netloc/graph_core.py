"""Laplacian construction, pseudoinversion, Kron reduction and low-rank updates.

All matrices are dense; the graphs targeted here have at most a few thousand
nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DisconnectedGraph,
    MultipleZeroModes,
    NonPositiveSlope,
    SingularInteriorBlock,
    SingularUpdate,
)
from .network import Network

ZERO_MODE_RTOL = 1e-9
CC_COND_MAX = 1e12
SM_DENOM_MIN = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def edge_vector(n: int, i: int, j: int) -> np.ndarray:
    """e_ij = e_i - e_j oriented from the smaller to the larger index."""
    if i == j:
        raise SingularUpdate("edge vector needs two distinct nodes")
    lo, hi = min(i, j), max(i, j)
    e = np.zeros(n)
    e[lo] = 1.0
    e[hi] = -1.0
    return e


@dataclass(frozen=True, eq=False)
class LaplacianBundle:
    """Laplacian ``L`` with its pseudoinverse and ascending eigendecomposition.

    ``slope`` is f'(0) of the coupling that produced ``L``; it converts edge
    weight perturbations into Laplacian perturbations.
    """

    L: np.ndarray
    L_pinv: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    node_ids: tuple[str, ...]
    slope: float = 1.0

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def algebraic_connectivity(self) -> float:
        return float(self.eigenvalues[1]) if self.n > 1 else 0.0

    def effective_resistance(self, i: int, j: int) -> float:
        e = edge_vector(self.n, i, j)
        return float(e @ self.L_pinv @ e)


def _spectral_pinv(L: np.ndarray):
    w, V = np.linalg.eigh(L)
    lam_max = float(np.max(np.abs(w))) if w.size else 0.0
    if lam_max == 0.0:
        if L.shape[0] > 1:
            raise MultipleZeroModes("matrix is identically zero")
        return np.zeros_like(L), w, V
    zero = np.abs(w) < ZERO_MODE_RTOL * lam_max
    if zero.sum() > 1:
        raise MultipleZeroModes(f"{int(zero.sum())} eigenvalues below threshold")
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, w))
    P = (V * inv) @ V.T
    return 0.5 * (P + P.T), w, V


def pseudoinverse(L) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric Laplacian of a connected graph.

    Eigenvalues below ``1e-9 * lambda_max`` are treated as the kernel mode;
    more than one of them means the graph is disconnected.
    """
    P, _, _ = _spectral_pinv(np.asarray(L, dtype=float))
    return P


def laplacian_bundle(L, node_ids: Sequence[str] | None = None, slope: float = 1.0) -> LaplacianBundle:
    """Wrap an existing Laplacian matrix into a bundle."""
    L = np.asarray(L, dtype=float)
    L = 0.5 * (L + L.T)
    n = L.shape[0]
    try:
        P, w, V = _spectral_pinv(L)
    except MultipleZeroModes as exc:
        raise DisconnectedGraph(str(exc)) from exc
    if n > 1 and w[1] <= ZERO_MODE_RTOL * np.max(np.abs(w)):
        raise DisconnectedGraph(f"lambda_2 = {w[1]:.3e} is not positive")
    ids = tuple(str(k + 1) for k in range(n)) if node_ids is None else tuple(node_ids)
    return LaplacianBundle(_frozen(L), _frozen(P), _frozen(w), _frozen(V), ids, float(slope))


def build_laplacian(network: Network) -> LaplacianBundle:
    """Jacobian Laplacian of the dynamics at the origin: L_ij = -a_ij f'(0)."""
    slope = network.coupling.slope0
    if slope <= 0:
        raise NonPositiveSlope(f"f'(0) = {slope}")
    i, j, w = network.edge_arrays
    n = network.n
    L = np.zeros((n, n))
    np.add.at(L, (i, j), -w * slope)
    np.add.at(L, (j, i), -w * slope)
    L[np.diag_indices(n)] = -L.sum(axis=1)
    return laplacian_bundle(L, network.ids, slope)


@dataclass(frozen=True, eq=False)
class KronSystem:
    """Kron-reduced Laplacian and velocities on the kept node set.

    ``kept[p]`` is the full-network index of row ``p`` of ``L_r``. The blocks
    of the original Laplacian are retained for the disturbance predictors.
    """

    L_r: np.ndarray
    omega_r: np.ndarray
    kept: tuple[int, ...]
    reduced: tuple[int, ...]
    L_gg: np.ndarray
    L_gc: np.ndarray
    L_cg: np.ndarray
    L_cc: np.ndarray
    omega_g: np.ndarray
    omega_c: np.ndarray
    node_ids: tuple[str, ...]
    slope: float = 1.0
    _cc_factor: tuple | None = None

    @property
    def n_kept(self) -> int:
        return len(self.kept)

    @cached_property
    def kept_ids(self) -> tuple[str, ...]:
        return tuple(self.node_ids[k] for k in self.kept)

    @cached_property
    def L_r_pinv(self) -> np.ndarray:
        return _frozen(pseudoinverse(self.L_r))

    @cached_property
    def baseline(self) -> np.ndarray:
        """omega_r with its mean removed, i.e. L_r L_r^+ omega_r."""
        return _frozen(self.omega_r - self.omega_r.mean())

    @cached_property
    def _kept_pos(self) -> dict[int, int]:
        return {k: p for p, k in enumerate(self.kept)}

    @cached_property
    def _reduced_pos(self) -> dict[int, int]:
        return {k: p for p, k in enumerate(self.reduced)}

    def kept_position(self, node: int) -> int:
        return self._kept_pos[node]

    def reduced_position(self, node: int) -> int:
        return self._reduced_pos[node]

    def is_kept(self, node: int) -> bool:
        return node in self._kept_pos

    def solve_cc(self, rhs) -> np.ndarray:
        """(L_cc)^-1 rhs using the stored Cholesky factor."""
        if self._cc_factor is None:
            raise SingularInteriorBlock("no reduced nodes")
        return linalg.cho_solve(self._cc_factor, np.asarray(rhs, dtype=float))

    @cached_property
    def transfer(self) -> np.ndarray:
        """L_gc (L_cc)^-1, shape (n_kept, n_reduced)."""
        if not self.reduced:
            return np.zeros((self.n_kept, 0))
        return _frozen(self.solve_cc(self.L_cg).T)


def kron_reduce(bundle: LaplacianBundle, omega, reduced_set: Iterable[int] = ()) -> KronSystem:
    """Schur complement of the reduced block and the matching velocity reduction.

    L_r = L_gg - L_gc L_cc^-1 L_cg and omega_r = omega_g - L_gc L_cc^-1 omega_c,
    with L_cc factorized once by Cholesky.
    """
    L = bundle.L
    n = bundle.n
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (n,):
        raise ValueError(f"omega must have shape ({n},)")
    reduced = tuple(sorted({int(k) for k in reduced_set}))
    if any(k < 0 or k >= n for k in reduced):
        raise ValueError("reduced node index out of range")
    if len(reduced) >= n:
        raise ValueError("cannot reduce every node")
    rset = set(reduced)
    kept = tuple(k for k in range(n) if k not in rset)
    g, c = np.array(kept, dtype=int), np.array(reduced, dtype=int)
    L_gg = L[np.ix_(g, g)]
    L_gc = L[np.ix_(g, c)]
    L_cg = L[np.ix_(c, g)]
    L_cc = L[np.ix_(c, c)]
    w_g, w_c = omega[g], omega[c]

    factor = None
    if reduced:
        if np.linalg.cond(L_cc) > CC_COND_MAX:
            raise SingularInteriorBlock("interior block L_cc is numerically singular")
        try:
            factor = linalg.cho_factor(L_cc, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularInteriorBlock(str(exc)) from exc
        X = linalg.cho_solve(factor, np.column_stack([L_cg, w_c]))
        L_r = L_gg - L_gc @ X[:, :-1]
        L_r = 0.5 * (L_r + L_r.T)
        w_r = w_g - L_gc @ X[:, -1]
    else:
        L_r, w_r = L_gg.copy(), w_g.copy()

    return KronSystem(
        L_r=_frozen(L_r), omega_r=_frozen(w_r), kept=kept, reduced=reduced,
        L_gg=_frozen(L_gg), L_gc=_frozen(L_gc), L_cg=_frozen(L_cg), L_cc=_frozen(L_cc),
        omega_g=_frozen(w_g), omega_c=_frozen(w_c), node_ids=bundle.node_ids,
        slope=bundle.slope, _cc_factor=factor,
    )


def sherman_morrison_pinv(L_pinv, edge: tuple[int, int], xi: float) -> np.ndarray:
    """Pseudoinverse of L + xi e_ij e_ij^T from that of L (rank-1 update)."""
    L_pinv = np.asarray(L_pinv, dtype=float)
    i, j = edge
    e = edge_vector(L_pinv.shape[0], i, j)
    col = L_pinv @ e
    denom = 1.0 + xi * (e @ col)
    if abs(denom) < SM_DENOM_MIN:
        raise SingularUpdate(f"Sherman-Morrison denominator {denom:.3e} vanishes")
    return L_pinv - (xi / denom) * np.outer(col, col)


def smw_pinv(L_pinv, edges: Sequence[tuple[int, int]], xis: Sequence[float]) -> np.ndarray:
    """Pseudoinverse of L + sum_p xi_p e_p e_p^T via Sherman-Morrison-Woodbury."""
    L_pinv = np.asarray(L_pinv, dtype=float)
    xis = np.asarray(xis, dtype=float)
    if len(edges) == 0 or len(edges) != xis.size:
        raise ValueError("need one xi per edge and at least one edge")
    n = L_pinv.shape[0]
    U = np.column_stack([edge_vector(n, i, j) for i, j in edges])
    PU = L_pinv @ U
    inner = np.eye(len(edges)) + xis[:, None] * (U.T @ PU)
    if np.linalg.svd(inner, compute_uv=False).min() < SM_DENOM_MIN:
        raise SingularUpdate("Woodbury inner matrix is singular")
    return L_pinv - PU @ np.linalg.solve(inner, xis[:, None] * PU.T)


def timescale_bound(bundle: LaplacianBundle, network: Network) -> float:
    """Smallest intrinsic rate min{d_i/m_i, lambda_j/sqrt(m_i), lambda_j/d_i} over j >= 2.

    Inertia-free nodes contribute only lambda_j/d_i.
    """
    lam2 = bundle.algebraic_connectivity
    m, d = network.m, network.d
    rates = [lam2 / d]
    inertial = m > 0
    if inertial.any():
        rates.append(d[inertial] / m[inertial])
        rates.append(lam2 / np.sqrt(m[inertial]))
    return float(min(np.min(r) for r in rates))


def timescale_max(bundle: LaplacianBundle, network: Network) -> float:
    """Largest intrinsic rate max{d_i/m_i, lambda_n/d_i, sqrt(lambda_n/m_i)}."""
    lam_n = float(bundle.eigenvalues[-1])
    m, d = network.m, network.d
    rates = [lam_n / d]
    inertial = m > 0
    if inertial.any():
        rates.append(d[inertial] / m[inertial])
        rates.append(np.sqrt(lam_n / m[inertial]))
    return float(max(np.max(r) for r in rates))


def reduced_components(network: Network, reduced: Iterable[int]) -> list[tuple[int, ...]]:
    """Connected components of the subgraph induced by the reduced nodes."""
    rset = set(reduced)
    parent = {k: k for k in rset}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in network.edges:
        if e.i in rset and e.j in rset:
            parent[find(e.i)] = find(e.j)
    comps: dict[int, list[int]] = {}
    for k in sorted(rset):
        comps.setdefault(find(k), []).append(k)
    return sorted((tuple(v) for v in comps.values()), key=lambda c: c[0])


def boundary(network: Network, component: Iterable[int]) -> tuple[int, ...]:
    """Kept nodes adjacent to a reduced component."""
    comp = set(component)
    out = set()
    for e in network.edges:
        if e.i in comp and e.j not in comp:
            out.add(e.j)
        elif e.j in comp and e.i not in comp:
            out.add(e.i)
    return tuple(sorted(out))

"""Frequency mismatch psi(t) = L_r x_g(t), disturbance predictors, outlier
grouping, classification and multi-disturbance separation.

Node arguments are full-network indices throughout; vectors over the kept
nodes follow ``kron.kept`` order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .disturbance import DisturbanceSpec
from .dynamics import Trajectory
from .errors import DegenerateSignatures, DimensionMismatch, InvalidTarget, SingularUpdate
from .graph_core import (
    SM_DENOM_MIN,
    KronSystem,
    LaplacianBundle,
    boundary,
    edge_vector,
    reduced_components,
)
from .network import Network

MAD_SCALE = 1.4826
GRAM_COND_MAX = 1e6
# deviations below this fraction of the baseline scale are roundoff
ROUNDOFF_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class MismatchSeries:
    t0: float
    dt: float
    psi: np.ndarray
    baseline: np.ndarray
    node_ids: tuple[str, ...]
    kept: tuple[int, ...]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.psi.shape[0])

    @property
    def deviation(self) -> np.ndarray:
        return self.psi - self.baseline


def frequency_mismatch(kron: KronSystem, traj: Trajectory) -> MismatchSeries:
    """psi(t) = L_r x_g(t), one matrix-vector product per sample."""
    pos = {nid: k for k, nid in enumerate(traj.node_ids)}
    try:
        cols = [pos[nid] for nid in kron.kept_ids]
    except KeyError as exc:
        raise DimensionMismatch(f"trajectory lacks kept node {exc.args[0]!r}") from None
    if len(traj.node_ids) != len(cols) and set(traj.node_ids) - set(kron.node_ids):
        raise DimensionMismatch("trajectory has columns for unknown nodes")
    x = traj.samples[:, cols]
    psi = x @ kron.L_r.T
    return MismatchSeries(traj.t0, traj.dt, psi, np.array(kron.baseline), kron.kept_ids, kron.kept)


# -- predictors -------------------------------------------------------------

def _xi(xi) -> np.ndarray:
    return np.atleast_1d(np.asarray(xi, dtype=float))


def predict_nodal(kron: KronSystem, node: int, xi) -> np.ndarray:
    """psi(t) = omega_r + xi(t) (e_i - 1/n) for a disturbance at a kept node."""
    if not kron.is_kept(node):
        raise InvalidTarget(f"node {node} is reduced")
    xi = _xi(xi)
    s = nodal_signature(kron, node).vector
    return kron.baseline + np.outer(xi, s)


def predict_nodal_reduced(kron: KronSystem, node: int, xi) -> np.ndarray:
    """Disturbance at a reduced node seen through -L_gc (L_cc)^-1 e_j, mean removed."""
    if kron.is_kept(node):
        raise InvalidTarget(f"node {node} is not reduced")
    xi = _xi(xi)
    s = reduced_node_signature(kron, node).vector
    return kron.baseline + np.outer(xi, s)


def _rank_one_terms(kron: KronSystem, i: int, j: int):
    """Kron-reduced effect of L + xi e_ij e_ij^T.

    With eps = e_ij split into kept/reduced parts, the reduced Laplacian
    becomes L_r + beta u u^T and the reduced velocities omega_r - beta c1 u,
    where u = eps_g - L_gc L_cc^-1 eps_c, beta = xi / (1 + xi r_c),
    r_c = eps_c^T L_cc^-1 eps_c and c1 = eps_c^T L_cc^-1 omega_c.
    """
    e = edge_vector(len(kron.node_ids), i, j)
    g = np.array(kron.kept, dtype=int)
    eps_g = e[g]
    if kron.reduced:
        c = np.array(kron.reduced, dtype=int)
        eps_c = e[c]
        a = kron.solve_cc(eps_c)
        r_c = float(eps_c @ a)
        c1 = float(a @ kron.omega_c)
        u = eps_g - kron.L_gc @ a
    else:
        r_c, c1, u = 0.0, 0.0, eps_g
    return u, r_c, c1


def _line_gamma(kron: KronSystem, u, r_c, c1, xi) -> np.ndarray:
    xi_l = kron.slope * _xi(xi)
    d1 = 1.0 + xi_l * r_c
    if np.any(np.abs(d1) < SM_DENOM_MIN):
        raise SingularUpdate("interior Sherman-Morrison denominator vanishes")
    beta = xi_l / d1
    Pu = kron.L_r_pinv @ u
    s = float(u @ Pu)
    f0 = float(Pu @ kron.omega_r)
    d2 = 1.0 + beta * s
    if np.any(np.abs(d2) < SM_DENOM_MIN):
        raise SingularUpdate("reduced Sherman-Morrison denominator vanishes")
    return -beta * c1 - beta * (f0 - beta * c1 * s) / d2


def _check_edge(kron: KronSystem, i: int, j: int) -> None:
    n = len(kron.node_ids)
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise InvalidTarget(f"invalid edge ({i}, {j})")


def predict_line_unreduced(kron: KronSystem, edge: tuple[int, int], xi) -> np.ndarray:
    """psi(t) = omega_r - alpha(t) [e_ij^T L_r^+ omega_r] e_ij with
    alpha = xi / (1 + xi e_ij^T L_r^+ e_ij); both endpoints kept.

    ``xi`` perturbs the edge weight; it is scaled by f'(0) internally.
    """
    i, j = edge
    _check_edge(kron, i, j)
    if not (kron.is_kept(i) and kron.is_kept(j)):
        raise InvalidTarget("both endpoints must be kept")
    u, r_c, c1 = _rank_one_terms(kron, i, j)
    gamma = _line_gamma(kron, u, r_c, c1, xi)
    return kron.baseline + np.outer(gamma, u)


def predict_line_reduced(kron: KronSystem, edge: tuple[int, int], xi) -> tuple[np.ndarray, np.ndarray]:
    """Line with both endpoints reduced: returns (v, psi) with psi = omega_r + gamma(t) v
    and v = L_gc (L_cc)^-1 e_ij."""
    i, j = edge
    _check_edge(kron, i, j)
    if kron.is_kept(i) or kron.is_kept(j):
        raise InvalidTarget("both endpoints must be reduced")
    u, r_c, c1 = _rank_one_terms(kron, i, j)
    gamma = _line_gamma(kron, u, r_c, c1, xi)
    v = -u
    return v, kron.baseline - np.outer(gamma, v)


def predict_line_mixed(kron: KronSystem, edge: tuple[int, int], xi) -> tuple[np.ndarray, np.ndarray]:
    """Line from a kept node i to a reduced node j: returns (v~, psi) with
    v~ = e_i + L_gc (L_cc)^-1 e_j."""
    i, j = edge
    _check_edge(kron, i, j)
    if kron.is_kept(i) == kron.is_kept(j):
        raise InvalidTarget("exactly one endpoint must be kept")
    u, r_c, c1 = _rank_one_terms(kron, i, j)
    gamma = _line_gamma(kron, u, r_c, c1, xi)
    kept = i if kron.is_kept(i) else j
    sign = 1.0 if kept < (j if kept == i else i) else -1.0
    return sign * u, kron.baseline + np.outer(sign * gamma, sign * u)


def predict(kron: KronSystem, network: Network, spec: DisturbanceSpec, times) -> np.ndarray:
    """Dispatch a disturbance spec to the matching predictor."""
    target = spec.resolve(network)
    xi = spec.signal.sample(np.asarray(times, dtype=float))
    if not spec.is_line:
        k = target[0]
        return predict_nodal(kron, k, xi) if kron.is_kept(k) else predict_nodal_reduced(kron, k, xi)
    i, j = target
    ki, kj = kron.is_kept(i), kron.is_kept(j)
    if ki and kj:
        return predict_line_unreduced(kron, (i, j), xi)
    if not ki and not kj:
        return predict_line_reduced(kron, (i, j), xi)[1]
    return predict_line_mixed(kron, (i, j), xi)[1]


# -- signatures -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Signature:
    """Spatial direction of the psi deviation under one hypothesis."""

    kind: str
    nodes: tuple[int, ...]
    vector: np.ndarray

    def label(self, ids: Sequence[str]) -> str:
        return f"{self.kind}:" + "-".join(ids[k] for k in self.nodes)


def nodal_signature(kron: KronSystem, node: int) -> Signature:
    n = kron.n_kept
    s = np.full(n, -1.0 / n)
    s[kron.kept_position(node)] += 1.0
    return Signature("node", (node,), s)


def reduced_node_signature(kron: KronSystem, node: int) -> Signature:
    col = -kron.transfer[:, kron.reduced_position(node)]
    return Signature("reduced_node", (node,), col - col.mean())


def line_signature(kron: KronSystem, edge: tuple[int, int]) -> Signature:
    """First-order psi response per unit weight change, -f'(0) * flow * e_ij.

    Least-squares amplitudes on this vector therefore estimate xi itself.
    A line carrying no flow leaves psi unchanged; its direction is kept
    as e_ij so the hypothesis can still be scored.
    """
    i, j = sorted(edge)
    g = np.array(kron.kept)
    e = edge_vector(len(kron.node_ids), i, j)[g]
    flow = float(e @ kron.L_r_pinv @ kron.omega_r)
    scale = -kron.slope * flow if abs(flow) > 1e-300 else 1.0
    return Signature("line", (i, j), scale * e)


def reduced_line_signature(kron: KronSystem, edge: tuple[int, int]) -> Signature:
    i, j = sorted(edge)
    u, _, _ = _rank_one_terms(kron, i, j)
    return Signature("reduced_line", (i, j), -u)


def mixed_line_signature(kron: KronSystem, edge: tuple[int, int]) -> Signature:
    i, j = edge
    kept, red = (i, j) if kron.is_kept(i) else (j, i)
    g = np.zeros(kron.n_kept)
    g[kron.kept_position(kept)] = 1.0
    v = g + kron.transfer[:, kron.reduced_position(red)]
    return Signature("mixed_line", (kept, red), v)


def component_hypotheses(kron: KronSystem, network: Network, component: Sequence[int]) -> list[Signature]:
    """Every node, internal line and boundary line hypothesis of a reduced component."""
    comp = set(component)
    out = [reduced_node_signature(kron, k) for k in sorted(comp)]
    for e in network.edges:
        if e.i in comp and e.j in comp:
            out.append(reduced_line_signature(kron, (e.i, e.j)))
        elif e.i in comp or e.j in comp:
            out.append(mixed_line_signature(kron, (e.i, e.j)))
    return out


def signature_basis(kron: KronSystem, network: Network) -> list[Signature]:
    """All single-disturbance hypotheses on the network."""
    out = [nodal_signature(kron, k) for k in kron.kept]
    out += [line_signature(kron, (e.i, e.j)) for e in network.edges
            if kron.is_kept(e.i) and kron.is_kept(e.j)]
    for comp in reduced_components(network, kron.reduced):
        out += component_hypotheses(kron, network, comp)
    return out


# -- detection and grouping ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class Group:
    """Outlier nodes with mutually correlated deviation waveforms.

    ``waveform`` is the first principal component of the members'
    deviations and ``pattern`` its coefficient when every kept node's
    deviation is regressed on the waveforms of all groups together.
    """

    members: tuple[int, ...]
    node_ids: tuple[str, ...]
    waveform: np.ndarray
    pattern: np.ndarray


def deviation_stats(series: MismatchSeries) -> tuple[np.ndarray, np.ndarray]:
    dev = series.deviation
    centered = dev - dev.mean(axis=0)
    return centered.std(axis=0), np.max(np.abs(dev), axis=0)


def detect_outliers(series: MismatchSeries, k_mad: float = 5.0, rel_floor: float = 0.2) -> np.ndarray:
    """Kept positions whose deviation std is a robust outlier.

    A node qualifies when its std exceeds the median by ``k_mad`` scaled
    MADs and by ``rel_floor`` of the largest excess over the median. A
    series whose largest excess is at roundoff level relative to the
    baseline has no outliers.
    """
    std, _ = deviation_stats(series)
    med = np.median(std)
    mad = MAD_SCALE * np.median(np.abs(std - med))
    excess = std - med
    top = excess.max() if excess.size else 0.0
    scale = max(float(np.abs(series.baseline).max(initial=0.0)), 1.0)
    if top <= ROUNDOFF_RTOL * scale:
        return np.zeros(0, dtype=int)
    ok = (excess > k_mad * mad) & (excess > rel_floor * top)
    return np.flatnonzero(ok)


def _pca_waveform(block: np.ndarray) -> np.ndarray:
    u, s, vt = np.linalg.svd(block, full_matrices=False)
    wf = u[:, 0] * s[0]
    # orient so that the largest-loading member has a positive weight
    if vt[0, np.argmax(np.abs(vt[0]))] < 0:
        wf = -wf
    return wf


def detect_and_group(series: MismatchSeries, k_mad: float = 5.0, corr_min: float = 0.9,
                     rel_floor: float = 0.2) -> list[Group]:
    """Outlier nodes grouped by single linkage on |Pearson correlation| >= corr_min."""
    dev = series.deviation
    if dev.shape[0] < 10:
        raise ValueError("need at least 10 samples")
    centered = dev - dev.mean(axis=0)
    out = detect_outliers(series, k_mad, rel_floor)
    if out.size == 0:
        return []
    corr = np.atleast_2d(np.corrcoef(centered[:, out], rowvar=False))
    parent = list(range(out.size))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(out.size):
        for b in range(a + 1, out.size):
            if abs(corr[a, b]) >= corr_min:
                parent[find(a)] = find(b)
    clusters: dict[int, list[int]] = {}
    for a in range(out.size):
        clusters.setdefault(find(a), []).append(int(out[a]))

    std = centered.std(axis=0)
    ordered = sorted(clusters.values(), key=lambda p: -std[p].max())
    W = np.column_stack([_pca_waveform(centered[:, pos]) for pos in ordered])
    # joint regression keeps correlated waveforms from leaking into each other's pattern
    B = np.linalg.lstsq(W, centered, rcond=None)[0]
    groups = []
    for k, pos in enumerate(ordered):
        members = tuple(series.kept[p] for p in pos)
        groups.append(Group(members, tuple(series.node_ids[p] for p in pos), W[:, k], B[k]))
    return groups


# -- classification ---------------------------------------------------------

@dataclass(frozen=True)
class Classification:
    """``kind`` is ``node``, ``line`` or ``reduced_component``.

    For node and line kinds ``nodes`` names the disturbed element; for a
    reduced component it lists the component's nodes, empty when unknown.
    """

    kind: str
    nodes: tuple[str, ...]
    group: tuple[str, ...]
    residual: float
    dominant_boundary_node: str | None = None
    hypothesis: str | None = None

    def to_dict(self) -> dict:
        return {
            "type": self.kind,
            "nodes": list(self.nodes),
            "group": list(self.group),
            "residual": self.residual,
            "dominant_boundary_node": self.dominant_boundary_node,
            "hypothesis": self.hypothesis,
        }


@dataclass(frozen=True, eq=False)
class LocalizationReport:
    node_ids: tuple[str, ...]
    std: np.ndarray
    max_abs: np.ndarray
    groups: list[Group]
    classifications: list[Classification]
    velocity_max_abs: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        stats = {}
        for k, nid in enumerate(self.node_ids):
            row = {"std": float(self.std[k]), "max_abs": float(self.max_abs[k])}
            if self.velocity_max_abs is not None:
                row["velocity_max_abs"] = float(self.velocity_max_abs[k])
            stats[nid] = row
        return {
            "nodes": list(self.node_ids),
            "deviation_stats": stats,
            "groups": [list(g.node_ids) for g in self.groups],
            "classifications": [c.to_dict() for c in self.classifications],
            **self.extra,
        }


def fit_residual(pattern: np.ndarray, signature: np.ndarray) -> float:
    """Relative least-squares residual of ``pattern`` against one direction."""
    norm = np.linalg.norm(pattern)
    if norm == 0:
        return 0.0
    s2 = signature @ signature
    if s2 == 0:
        return 1.0
    r = pattern - (pattern @ signature / s2) * signature
    return float(np.linalg.norm(r) / norm)


def _best(pattern, hyps):
    scored = [(fit_residual(pattern, h.vector), k) for k, h in enumerate(hyps)]
    res, k = min(scored)
    return hyps[k], res


def classify(groups: Sequence[Group], series: MismatchSeries, kron: KronSystem,
             network: Network, max_residual: float = 0.25,
             antisymmetry_tol: float = 0.1) -> list[Classification]:
    """Assign a disturbance type to every group.

    A single node is a nodal disturbance, an antisymmetric pair on an
    existing kept edge is a line disturbance, and anything else is matched
    to a reduced component whose measured boundary contains the group.
    Fits worse than ``max_residual`` are reported as an unknown reduced
    component.
    """
    ids = kron.node_ids
    comps = reduced_components(network, kron.reduced)
    bounds = [set(boundary(network, c)) for c in comps]
    out = []
    for grp in groups:
        pattern = grp.pattern
        members = grp.members
        result = None

        if len(members) == 1:
            sig = nodal_signature(kron, members[0])
            res = fit_residual(pattern, sig.vector)
            if res <= max_residual:
                result = Classification("node", (ids[members[0]],), grp.node_ids, res,
                                        hypothesis=sig.label(ids))
        elif len(members) == 2 and network.has_edge(*members):
            i, j = sorted(members)
            pi, pj = pattern[kron.kept_position(i)], pattern[kron.kept_position(j)]
            anti = abs(pi + pj) <= antisymmetry_tol * max(abs(pi), abs(pj))
            if anti:
                sig = line_signature(kron, (i, j))
                res = fit_residual(pattern, sig.vector)
                if res <= max_residual:
                    result = Classification("line", (ids[i], ids[j]), grp.node_ids, res,
                                            hypothesis=sig.label(ids))

        if result is None:
            candidates = [k for k, b in enumerate(bounds) if set(members) <= b]
            best = None
            for k in candidates:
                hyp, res = _best(pattern, component_hypotheses(kron, network, comps[k]))
                if best is None or res < best[2]:
                    best = (k, hyp, res)
            if best is not None and best[2] <= max_residual:
                k, hyp, res = best
                dominant = None
                if hyp.kind == "mixed_line":
                    pos = [kron.kept_position(m) for m in members]
                    dominant = ids[members[int(np.argmax(np.abs(pattern[pos])))]]
                result = Classification("reduced_component", tuple(ids[c] for c in comps[k]),
                                        grp.node_ids, res, dominant, hyp.label(ids))
            else:
                res = 1.0 if best is None else best[2]
                result = Classification("reduced_component", (), grp.node_ids, res)
        out.append(result)
    return out


def localize(series: MismatchSeries, kron: KronSystem, network: Network, k_mad: float = 5.0,
             corr_min: float = 0.9, velocities: np.ndarray | None = None) -> LocalizationReport:
    """Detection, grouping and classification on a mismatch series."""
    std, max_abs = deviation_stats(series)
    groups = detect_and_group(series, k_mad, corr_min)
    classes = classify(groups, series, kron, network)
    vmax = None
    if velocities is not None:
        vmax = np.max(np.abs(velocities - velocities.mean(axis=0)), axis=0)
    return LocalizationReport(series.node_ids, std, max_abs, groups, classes, vmax)


# -- multiple disturbances --------------------------------------------------

@dataclass(frozen=True, eq=False)
class Separation:
    amplitudes: np.ndarray
    residual: float
    labels: tuple[str, ...]


def separate_multi(series: MismatchSeries, hypotheses: Sequence[Signature]) -> Separation:
    """Per-sample least squares of the deviation on the hypothesis signatures.

    The relative residual measures how much of the deviation the
    signatures leave unexplained.
    """
    if not hypotheses:
        raise DegenerateSignatures("no hypotheses given")
    S = np.column_stack([h.vector for h in hypotheses])
    gram = S.T @ S
    if np.linalg.cond(gram) >= GRAM_COND_MAX:
        raise DegenerateSignatures("signature vectors are (nearly) linearly dependent")
    D = series.deviation
    A = np.linalg.solve(gram, S.T @ D.T).T
    norm = np.linalg.norm(D)
    res = float(np.linalg.norm(D - A @ S.T) / norm) if norm > 0 else 0.0
    labels = tuple(f"{h.kind}:" + "-".join(map(str, h.nodes)) for h in hypotheses)
    return Separation(A, res, labels)


@dataclass(frozen=True, eq=False)
class OffDiagonality:
    matrix: np.ndarray
    max_offdiag_abs: float
    mean_offdiag_abs: float
    max_ratio: float
    ratios: np.ndarray

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "max_offdiag_abs": self.max_offdiag_abs,
            "mean_offdiag_abs": self.mean_offdiag_abs,
            "max_ratio": self.max_ratio,
        }


def off_diagonality(bundle: LaplacianBundle, edges: Sequence[tuple[int, int]]) -> OffDiagonality:
    """(V L^+ U)_ab = sum_{g>=2} (u_g,ia - u_g,ja)(u_g,ib - u_g,jb) / lambda_g.

    ``ratios`` holds |M_ab| / sqrt(M_aa M_bb) for a != b.
    """
    lam = bundle.eigenvalues[1:]
    vecs = bundle.eigenvectors[:, 1:]
    n = bundle.n
    for i, j in edges:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise InvalidTarget(f"invalid edge ({i}, {j})")
    diffs = np.array([vecs[min(i, j)] - vecs[max(i, j)] for i, j in edges])
    M = (diffs / lam) @ diffs.T
    k = len(edges)
    off = ~np.eye(k, dtype=bool)
    diag = np.sqrt(np.outer(np.diag(M), np.diag(M)))
    ratios = np.abs(M[off]) / diag[off] if k > 1 else np.zeros(0)
    offabs = np.abs(M[off])
    return OffDiagonality(
        M,
        float(offabs.max()) if offabs.size else 0.0,
        float(offabs.mean()) if offabs.size else 0.0,
        float(ratios.max()) if ratios.size else 0.0,
        ratios,
    )


def directed_projection(L, node: int) -> np.ndarray:
    """w = L L^+ e_i, the orthogonal projection of e_i onto image(L).

    The pseudoinverse comes from an SVD so that asymmetric (directed)
    Laplacians are handled.
    """
    L = np.asarray(L, dtype=float)
    e = np.zeros(L.shape[0])
    e[node] = 1.0
    return L @ (np.linalg.pinv(L, rcond=1e-12) @ e)

"""Fixed points and time integration of

    m_i x_i'' + d_i x_i' = omega_i(t) - sum_j a_ij(t) f(x_i - x_j).

Nodes with m_i = 0 follow the first-order equation d_i x_i' = ... instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy import linalg

from .coupling import CouplingSpec
from .disturbance import DisturbanceSpec, FilteredNoise
from .errors import Divergence, InadmissibleDisturbance, NoConvergence
from .graph_core import KronSystem, build_laplacian, pseudoinverse, timescale_max
from .network import Network

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


def coupling_eval(spec: CouplingSpec, delta: float) -> float:
    return spec.f(delta)


def coupling_slope(spec: CouplingSpec, delta: float) -> float:
    return spec.df(delta)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled states; row k is time ``t0 + k * dt``."""

    t0: float
    dt: float
    samples: np.ndarray
    node_ids: tuple[str, ...]
    velocities: np.ndarray | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.samples.ndim != 2 or self.samples.shape[1] != len(self.node_ids):
            raise ValueError("samples must be (T, len(node_ids))")
        if self.velocities is not None and self.velocities.shape != self.samples.shape:
            raise ValueError("velocities must match samples")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.shape[0])

    def __len__(self) -> int:
        return self.samples.shape[0]

    def select(self, ids: Sequence[str]) -> "Trajectory":
        pos = {nid: k for k, nid in enumerate(self.node_ids)}
        cols = [pos[str(i)] for i in ids]
        vel = None if self.velocities is None else self.velocities[:, cols]
        return Trajectory(self.t0, self.dt, self.samples[:, cols], tuple(map(str, ids)), vel)


def add_measurement_noise(traj: Trajectory, sigma: float, seed: int,
                          sigma_velocity: float | None = None) -> Trajectory:
    """Add i.i.d. Gaussian noise to the recorded states (and velocities)."""
    rng = np.random.default_rng(seed)
    x = traj.samples + sigma * rng.standard_normal(traj.samples.shape)
    v = traj.velocities
    if v is not None:
        sv = sigma if sigma_velocity is None else sigma_velocity
        v = v + sv * rng.standard_normal(v.shape)
    return Trajectory(traj.t0, traj.dt, x, traj.node_ids, v)


def _coupling_forces(x, ei, ej, w, coupling: CouplingSpec) -> np.ndarray:
    flows = w * coupling.f(x[ei] - x[ej])
    return np.bincount(ei, flows, x.size) - np.bincount(ej, flows, x.size)


def _coupling_jacobian(x, ei, ej, w, coupling: CouplingSpec) -> np.ndarray:
    n = x.size
    g = w * coupling.df(x[ei] - x[ej])
    J = np.zeros((n, n))
    np.add.at(J, (ei, ej), -g)
    np.add.at(J, (ej, ei), -g)
    J[np.diag_indices(n)] = -J.sum(axis=1)
    return J


def fixed_point(network: Network, kron: KronSystem | None = None, gauge: str = "mean",
                tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """Stable operating point of the undisturbed network.

    The linear solution L^+ omega (or its Kron-reduced analogue lifted back
    to all nodes when ``kron`` is given) seeds a Newton iteration on
    omega_i = sum_j a_ij f(x_i - x_j). Velocities are shifted to zero mean
    first. ``gauge`` is ``"mean"`` (zero-mean state) or ``"last"`` (x_n = 0).
    """
    if gauge not in ("mean", "last"):
        raise ValueError("gauge must be 'mean' or 'last'")
    omega, offset = network.centered_omega()
    if offset:
        log.debug("shifted natural velocities by %.17g to zero mean", offset)
    ei, ej, w = network.edge_arrays
    coupling = network.coupling
    n = network.n

    if kron is not None and kron.reduced:
        g, c = np.array(kron.kept), np.array(kron.reduced)
        w_r = omega[g] - kron.transfer @ omega[c]
        x = np.empty(n)
        x[g] = kron.L_r_pinv @ w_r
        x[c] = kron.solve_cc(omega[c] - kron.L_cg @ x[g])
    else:
        bundle = build_laplacian(network)
        x = bundle.L_pinv @ omega
    x = x - x.mean()

    residual = omega - _coupling_forces(x, ei, ej, w, coupling)
    it = 0
    while np.max(np.abs(residual)) >= tol:
        if it >= max_iter:
            raise NoConvergence(
                f"Newton did not converge in {max_iter} iterations "
                f"(residual {np.max(np.abs(residual)):.3e})",
                residual=float(np.max(np.abs(residual))),
            )
        J = _coupling_jacobian(x, ei, ej, w, coupling)
        step = np.zeros(n)
        if n > 1:
            try:
                step[:-1] = linalg.solve(J[:-1, :-1], residual[:-1], assume_a="sym")
            except (linalg.LinAlgError, ValueError) as exc:
                raise NoConvergence(f"singular Jacobian: {exc}",
                                    residual=float(np.max(np.abs(residual)))) from exc
        x = x + step
        x -= x.mean()
        residual = omega - _coupling_forces(x, ei, ej, w, coupling)
        it += 1
        if not np.all(np.isfinite(x)):
            raise NoConvergence("Newton iterate became non-finite", residual=math.inf)
    log.debug("fixed point after %d Newton steps, residual %.3e", it,
              float(np.max(np.abs(residual))))
    return x - x[-1] if gauge == "last" else x


@numba.njit(cache=True, nogil=True)
def _rhs(x, v, m, d, inertial, omega, ei, ej, w, kind, q, c,
         node_idx, node_vals, line_idx, line_vals, s, stage, dx, dv, force, wt):
    n = x.size
    for k in range(n):
        force[k] = omega[k]
    for p in range(node_idx.size):
        force[node_idx[p]] += node_vals[p, stage, s]
    for e in range(w.size):
        wt[e] = w[e]
    for p in range(line_idx.size):
        wt[line_idx[p]] += line_vals[p, stage, s]
    for e in range(w.size):
        delta = x[ei[e]] - x[ej[e]]
        if kind == 0:
            fv = delta
        else:
            fv = 0.0
            for h in range(q.size):
                fv += c[h] * math.sin(q[h] * delta)
        fl = wt[e] * fv
        force[ei[e]] -= fl
        force[ej[e]] += fl
    for k in range(n):
        if inertial[k]:
            dx[k] = v[k]
            dv[k] = (force[k] - d[k] * v[k]) / m[k]
        else:
            dx[k] = force[k] / d[k]
            dv[k] = 0.0


@numba.njit(cache=True, nogil=True)
def _integrate(x0, m, d, inertial, omega, ei, ej, w, kind, q, c,
               node_idx, node_vals, line_idx, line_vals, h, n_steps, stride,
               out_x, out_v, limit):
    """Classical RK4. Returns the number of samples recorded before any divergence."""
    n = x0.size
    x = x0.copy()
    v = np.zeros(n)
    xs = np.empty(n)
    vs = np.empty(n)
    k1x = np.empty(n); k1v = np.empty(n)
    k2x = np.empty(n); k2v = np.empty(n)
    k3x = np.empty(n); k3v = np.empty(n)
    k4x = np.empty(n); k4v = np.empty(n)
    force = np.empty(n)
    wt = np.empty(w.size)
    out_x[0, :] = x
    if n_steps > 0:
        _rhs(x, v, m, d, inertial, omega, ei, ej, w, kind, q, c,
             node_idx, node_vals, line_idx, line_vals, 0, 0, k1x, k1v, force, wt)
    else:
        k1x[:] = 0.0
    for k in range(n):
        # first-order nodes have no velocity state; record x' = force / d
        out_v[0, k] = v[k] if inertial[k] else k1x[k]
    rec = 1
    for s in range(n_steps):
        _rhs(x, v, m, d, inertial, omega, ei, ej, w, kind, q, c,
             node_idx, node_vals, line_idx, line_vals, s, 0, k1x, k1v, force, wt)
        for k in range(n):
            xs[k] = x[k] + 0.5 * h * k1x[k]
            vs[k] = v[k] + 0.5 * h * k1v[k]
        _rhs(xs, vs, m, d, inertial, omega, ei, ej, w, kind, q, c,
             node_idx, node_vals, line_idx, line_vals, s, 1, k2x, k2v, force, wt)
        for k in range(n):
            xs[k] = x[k] + 0.5 * h * k2x[k]
            vs[k] = v[k] + 0.5 * h * k2v[k]
        _rhs(xs, vs, m, d, inertial, omega, ei, ej, w, kind, q, c,
             node_idx, node_vals, line_idx, line_vals, s, 1, k3x, k3v, force, wt)
        for k in range(n):
            xs[k] = x[k] + h * k3x[k]
            vs[k] = v[k] + h * k3v[k]
        _rhs(xs, vs, m, d, inertial, omega, ei, ej, w, kind, q, c,
             node_idx, node_vals, line_idx, line_vals, s, 2, k4x, k4v, force, wt)
        ok = True
        for k in range(n):
            x[k] += h / 6.0 * (k1x[k] + 2.0 * k2x[k] + 2.0 * k3x[k] + k4x[k])
            v[k] += h / 6.0 * (k1v[k] + 2.0 * k2v[k] + 2.0 * k3v[k] + k4v[k])
            if not (abs(x[k]) <= limit):
                ok = False
        if not ok:
            return rec
        if (s + 1) % stride == 0:
            _rhs(x, v, m, d, inertial, omega, ei, ej, w, kind, q, c,
                 node_idx, node_vals, line_idx, line_vals, s, 2, k1x, k1v, force, wt)
            out_x[rec, :] = x
            for k in range(n):
                out_v[rec, k] = v[k] if inertial[k] else k1x[k]
            rec += 1
    return rec


def _stage_values(sig, t_start: np.ndarray, h: float) -> np.ndarray:
    """Signal at the start, midpoint and end of every integration step.

    Noise is held at its step-start value for all stages.
    """
    if isinstance(sig, FilteredNoise):
        held = sig.sample(t_start)
        return np.stack([held, held, held])
    return np.stack([sig.sample(t_start), sig.sample(t_start + 0.5 * h), sig.sample(t_start + h)])


def integration_step(network: Network, dt_sample: float) -> float:
    """Largest step <= min(dt_sample, 0.01 / fastest rate) dividing dt_sample."""
    bundle = build_laplacian(network)
    cap = min(dt_sample, 0.01 / timescale_max(bundle, network))
    n_sub = max(1, math.ceil(dt_sample / cap - 1e-9))
    return dt_sample / n_sub


def simulate(network: Network, disturbances: Sequence[DisturbanceSpec], t_end: float,
             dt_sample: float, seed: int = 0, dt_int: float | None = None) -> Trajectory:
    """Integrate from the undisturbed fixed point at rest and sample every ``dt_sample``.

    ``seed`` feeds any filtered-noise signal declared without its own seed.
    ``dt_int`` overrides the automatic step; it must divide ``dt_sample``.
    Raises Divergence when a state leaves [-1e6, 1e6] or stops being finite.
    """
    if not t_end > 0 or not dt_sample > 0:
        raise ValueError("t_end and dt_sample must be positive")
    if dt_int is None:
        h = integration_step(network, dt_sample)
    else:
        ratio = dt_sample / dt_int
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("dt_int must divide dt_sample")
        h = dt_sample / round(ratio)
    stride = int(round(dt_sample / h))
    n_samples = int(math.floor(t_end / dt_sample + 1e-9)) + 1
    n_steps = (n_samples - 1) * stride
    t_start = h * np.arange(n_steps)

    omega, offset = network.centered_omega()
    if offset:
        log.info("natural velocities shifted by %.17g to zero mean", offset)
    ei, ej, w = network.edge_arrays
    seeds = np.random.SeedSequence(seed)

    node_idx, node_vals, line_idx, line_vals = [], [], [], []
    for k, dist in enumerate(disturbances):
        target = dist.resolve(network)
        sig = dist.signal
        if isinstance(sig, FilteredNoise) and sig.seed is None:
            child = seeds.spawn(1)[0]
            sig = sig.with_seed(int(child.generate_state(1)[0]))
        vals = _stage_values(sig, t_start, h)
        if dist.is_line:
            e = network.edge_index(*target)
            if n_steps and np.min(w[e] + vals) < 0:
                raise InadmissibleDisturbance(
                    f"disturbance {dist.label or k} drives line {target} to a negative weight")
            line_idx.append(e)
            line_vals.append(vals)
        else:
            node_idx.append(target[0])
            node_vals.append(vals)

    def _pack(idx, vals):
        if not idx:
            return np.zeros(0, dtype=np.int64), np.zeros((0, 3, max(n_steps, 1)))
        return np.array(idx, dtype=np.int64), np.ascontiguousarray(np.stack(vals))

    node_idx, node_vals = _pack(node_idx, node_vals)
    line_idx, line_vals = _pack(line_idx, line_vals)

    x0 = fixed_point(network)
    m, d = network.m, network.d
    coupling = network.coupling
    q, c = coupling.harmonics()
    kind = 0 if coupling.kind == "linear" else 1
    out_x = np.zeros((n_samples, network.n))
    out_v = np.zeros((n_samples, network.n))
    rec = _integrate(x0, m, d, m > 0, omega, ei, ej, w, kind,
                     np.ascontiguousarray(q), np.ascontiguousarray(c),
                     node_idx, node_vals, line_idx, line_vals, h, n_steps, stride,
                     out_x, out_v, DIVERGENCE_LIMIT)
    if rec < n_samples:
        raise Divergence(f"state diverged after t = {(rec - 1) * dt_sample:.6g}")
    return Trajectory(0.0, float(dt_sample), out_x, network.ids, out_v)


def quasi_static(network: Network, disturbances: Sequence[DisturbanceSpec], times) -> np.ndarray:
    """Linear quasi-static states [L(t)]^+ omega(t) at each time, all nodes."""
    times = np.asarray(times, dtype=float)
    bundle = build_laplacian(network)
    omega, _ = network.centered_omega()
    out = np.empty((times.size, network.n))
    targets = [(d.resolve(network), d.is_line, d.signal.sample(times)) for d in disturbances]
    for k in range(times.size):
        L = bundle.L.copy()
        w = omega.copy()
        for tgt, is_line, vals in targets:
            if is_line:
                i, j = tgt
                dv = bundle.slope * vals[k]
                L[i, i] += dv; L[j, j] += dv
                L[i, j] -= dv; L[j, i] -= dv
            else:
                w[tgt[0]] += vals[k]
        out[k] = pseudoinverse(L) @ (w - w.mean())
    return out

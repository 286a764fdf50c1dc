"""Synthetic connected networks for experiments.

Every generator accepts ``inertia``, ``damping``, ``omega_scale``,
``weight_range`` and ``coupling``. Natural velocities are uniform, zero-mean
and scaled to ``omega_scale`` times the mean weighted degree.
"""

from __future__ import annotations

import itertools

import numpy as np

from .coupling import CouplingSpec
from .errors import DisconnectedGraph, GenerationFailed
from .network import Network

MAX_ATTEMPTS = 100


def _attach(edges, n, rng, inertia=1.0, damping=1.0, omega_scale=0.1, weight_range=None,
            coupling=None) -> Network:
    edges = sorted(edges)
    if weight_range is None:
        weights = np.ones(len(edges))
    else:
        weights = rng.uniform(weight_range[0], weight_range[1], len(edges))
    deg = np.zeros(n)
    for (i, j), w in zip(edges, weights):
        deg[i] += w
        deg[j] += w
    u = rng.uniform(-1.0, 1.0, n)
    omega = omega_scale * deg.mean() * (u - u.mean())
    return Network.from_arrays(edges, weights, n=n, m=inertia, d=damping, omega=omega,
                               coupling=coupling)


def path(n: int, **kw) -> Network:
    rng = np.random.default_rng(kw.pop("seed", 0))
    return _attach([(k, k + 1) for k in range(n - 1)], n, rng, **kw)


def ring(n: int, **kw) -> Network:
    if n < 3:
        raise GenerationFailed("a ring needs at least 3 nodes")
    rng = np.random.default_rng(kw.pop("seed", 0))
    return _attach([(k, k + 1) for k in range(n - 1)] + [(0, n - 1)], n, rng, **kw)


def _retry(build, seed):
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        try:
            return build(rng)
        except DisconnectedGraph:
            continue
    raise GenerationFailed(f"no connected instance after {MAX_ATTEMPTS} attempts")


def random_connected(n: int, m: int, seed: int = 0, **kw) -> Network:
    """Uniform random graph with ``n`` nodes and ``m`` edges, redrawn until connected."""
    pairs = list(itertools.combinations(range(n), 2))
    if not (n - 1 <= m <= len(pairs)):
        raise GenerationFailed(f"cannot build a connected graph with n={n}, m={m}")

    def build(rng):
        pick = rng.choice(len(pairs), size=m, replace=False)
        return _attach([pairs[k] for k in pick], n, rng, **kw)

    return _retry(build, seed)


def two_community(n: int, p_in: float, p_out: float, seed: int = 0, **kw) -> Network:
    """Two halves wired with probability ``p_in`` inside and ``p_out`` across."""
    half = n // 2

    def build(rng):
        edges = []
        for i, j in itertools.combinations(range(n), 2):
            p = p_in if (i < half) == (j < half) else p_out
            if rng.random() < p:
                edges.append((i, j))
        if not edges:
            raise DisconnectedGraph("empty graph")
        return _attach(edges, n, rng, **kw)

    return _retry(build, seed)


GENERATORS = {
    "random_connected": random_connected,
    "path": path,
    "ring": ring,
    "two_community": two_community,
}


def generate(kind: str, coupling: CouplingSpec | None = None, **params) -> Network:
    try:
        fn = GENERATORS[kind]
    except KeyError:
        raise GenerationFailed(f"unknown generator {kind!r}") from None
    return fn(coupling=coupling, **params)

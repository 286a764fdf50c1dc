"""Disturbance signals attached to nodes or lines, and their admissibility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidTarget
from .graph_core import LaplacianBundle, timescale_bound
from .network import Network

# Filtered noise is generated on a grid this many times finer than 1/cutoff.
NOISE_STEPS_PER_TAU = 100


@dataclass(frozen=True)
class Oscillating:
    xi0: float
    omega_m: float
    kind = "oscillating"

    def sample(self, t):
        return self.xi0 * np.sin(self.omega_m * np.asarray(t, dtype=float))

    @property
    def rate_bound(self) -> float:
        return abs(self.xi0 * self.omega_m)

    def amplitude_bound(self, t_end=None) -> float:
        return abs(self.xi0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "xi0": self.xi0, "omega_m": self.omega_m}


@dataclass(frozen=True)
class Ramp:
    slope: float
    t_on: float = 0.0
    kind = "ramp"

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        return self.slope * np.maximum(t - self.t_on, 0.0)

    @property
    def rate_bound(self) -> float:
        return abs(self.slope)

    def amplitude_bound(self, t_end=None) -> float:
        if t_end is None:
            return math.inf if self.slope else 0.0
        return abs(self.slope) * max(t_end - self.t_on, 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "t_on": self.t_on}


@dataclass(frozen=True)
class Step:
    xi0: float
    t_on: float = 0.0
    kind = "step"

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= self.t_on, self.xi0, 0.0)

    @property
    def rate_bound(self) -> float:
        return math.inf if self.xi0 else 0.0

    def amplitude_bound(self, t_end=None) -> float:
        return abs(self.xi0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "xi0": self.xi0, "t_on": self.t_on}


@dataclass(frozen=True)
class FilteredNoise:
    """Gaussian white noise through a single-pole low-pass filter.

    ``sigma`` is the stationary standard deviation of the output and
    ``cutoff`` the filter rate. The path starts at zero and is held constant
    on a grid of step ``1 / (100 * cutoff)``.
    """

    sigma: float
    cutoff: float
    seed: int | None = None
    kind = "filtered_noise"

    @property
    def grid_step(self) -> float:
        return 1.0 / (NOISE_STEPS_PER_TAU * self.cutoff)

    def with_seed(self, seed: int) -> "FilteredNoise":
        return FilteredNoise(self.sigma, self.cutoff, int(seed))

    def path(self, n_points: int) -> np.ndarray:
        """First ``n_points`` values of the held sample path."""
        if self.seed is None:
            raise ValueError("filtered noise needs a seed before sampling")
        a = math.exp(-self.cutoff * self.grid_step)
        eps = np.random.default_rng(self.seed).standard_normal(max(n_points - 1, 0))
        y = lfilter([self.sigma * math.sqrt(1.0 - a * a)], [1.0, -a], eps)
        return np.r_[0.0, y][:n_points]

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        if t.size == 0:
            return np.zeros_like(t)
        k = np.floor(np.maximum(t, 0.0) / self.grid_step).astype(np.int64)
        return self.path(int(k.max()) + 1)[k]

    @property
    def rate_bound(self) -> float:
        return 3.0 * self.sigma * self.cutoff

    def amplitude_bound(self, t_end=None) -> float:
        return 3.0 * self.sigma

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "cutoff": self.cutoff, "seed": self.seed}


SignalSpec = Union[Oscillating, Ramp, Step, FilteredNoise]

_SIGNALS = {cls.kind: cls for cls in (Oscillating, Ramp, Step, FilteredNoise)}


def signal_from_dict(data: dict) -> SignalSpec:
    data = dict(data)
    kind = data.pop("kind")
    try:
        cls = _SIGNALS[kind]
    except KeyError:
        raise ValueError(f"unknown signal kind {kind!r}") from None
    return cls(**data)


def signal_eval(spec: SignalSpec, t: float) -> float:
    """Value of the disturbance signal at time ``t``."""
    return float(spec.sample(np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class NodeTarget:
    node: str | int

    def to_dict(self) -> dict:
        return {"node": self.node}


@dataclass(frozen=True)
class LineTarget:
    i: str | int
    j: str | int

    def to_dict(self) -> dict:
        return {"line": [self.i, self.j]}


@dataclass(frozen=True)
class DisturbanceSpec:
    target: NodeTarget | LineTarget
    signal: SignalSpec
    label: str = ""

    @property
    def is_line(self) -> bool:
        return isinstance(self.target, LineTarget)

    def resolve(self, network: Network) -> tuple[int, ...]:
        """Node index (1-tuple) or edge endpoints (2-tuple, ascending)."""
        if isinstance(self.target, NodeTarget):
            return (network.node_index(self.target.node),)
        i = network.node_index(self.target.i)
        j = network.node_index(self.target.j)
        if not network.has_edge(i, j):
            raise InvalidTarget(f"line ({self.target.i}, {self.target.j}) is not an edge")
        return (min(i, j), max(i, j))

    def to_dict(self) -> dict:
        return {"target": self.target.to_dict(), "signal": self.signal.to_dict(), "label": self.label}

    @classmethod
    def from_dict(cls, data: dict) -> "DisturbanceSpec":
        tgt = data["target"]
        if "node" in tgt:
            target = NodeTarget(tgt["node"])
        elif "line" in tgt:
            i, j = tgt["line"]
            target = LineTarget(i, j)
        else:
            raise ValueError("target must contain 'node' or 'line'")
        return cls(target, signal_from_dict(data["signal"]), str(data.get("label", "")))


def node(node, signal: SignalSpec, label: str = "") -> DisturbanceSpec:
    return DisturbanceSpec(NodeTarget(node), signal, label)


def line(i, j, signal: SignalSpec, label: str = "") -> DisturbanceSpec:
    return DisturbanceSpec(LineTarget(i, j), signal, label)


@dataclass(frozen=True)
class AdmissibilityReport:
    rate: float
    amplitude: float
    timescale: float
    reference: float
    rate_margin: float
    amplitude_margin: float
    admissible: bool
    negative_weight: bool = False
    caveat: str | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf
    return num / den


def check_admissibility(network: Network, bundle: LaplacianBundle, spec: DisturbanceSpec,
                        margin: float = 10.0, t_end: float | None = None) -> AdmissibilityReport:
    """Compare the disturbance rate with the slowest intrinsic rate and its
    amplitude with the unperturbed velocity (node) or weight (line).

    A node's reference velocity is max(|omega_i|, median |omega|) on the
    zero-mean velocities, so that passive nodes are not judged against zero.
    """
    target = spec.resolve(network)
    sig = spec.signal
    tau = timescale_bound(bundle, network)
    amp = sig.amplitude_bound(t_end)
    notes = []
    if spec.is_line:
        ref = network.edges[network.edge_index(*target)].weight
    else:
        w, _ = network.centered_omega()
        ref = max(abs(w[target[0]]), float(np.median(np.abs(w))))
        if ref == 0:
            notes.append("reference velocity is zero; amplitude margin is zero")
    amp_margin = _ratio(ref, amp)
    negative = spec.is_line and amp >= ref
    caveat = None
    if isinstance(sig, Step):
        rate = sig.rate_bound
        rate_margin = math.inf
        caveat = "admissible except at onset"
    else:
        rate = sig.rate_bound
        rate_margin = _ratio(tau, rate)
    if negative:
        notes.append("line weight may become negative")
    ok = rate_margin >= margin and amp_margin >= margin and not negative
    return AdmissibilityReport(rate, amp, tau, ref, rate_margin, amp_margin, bool(ok),
                               bool(negative), caveat, notes)

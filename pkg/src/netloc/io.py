"""JSON and CSV readers/writers for networks, disturbances, trajectories and matrices."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .coupling import CouplingSpec
from .disturbance import DisturbanceSpec
from .dynamics import Trajectory
from .network import Edge, Network, Node

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def network_to_dict(net: Network) -> dict:
    ids = net.ids
    return {
        "nodes": [{"id": nd.id, "m": nd.m, "d": nd.d, "omega": nd.omega, "measured": nd.measured}
                  for nd in net.nodes],
        "edges": [{"i": ids[e.i], "j": ids[e.j], "weight": e.weight} for e in net.edges],
        "coupling": net.coupling.to_dict(),
    }


def network_from_dict(data: dict) -> Network:
    nodes = tuple(
        Node(str(nd["id"]), float(nd.get("m", 1.0)), float(nd.get("d", 1.0)),
             float(nd.get("omega", 0.0)), bool(nd.get("measured", True)))
        for nd in data["nodes"]
    )
    index = {nd.id: k for k, nd in enumerate(nodes)}
    edges = []
    for e in data["edges"]:
        try:
            i, j = index[str(e["i"])], index[str(e["j"])]
        except KeyError as exc:
            raise ValueError(f"edge references unknown node {exc.args[0]!r}") from None
        edges.append(Edge(i, j, float(e.get("weight", 1.0))))
    net = Network(nodes, tuple(edges), CouplingSpec.from_dict(data.get("coupling")))
    _, offset = net.centered_omega()
    if abs(offset) > 0:
        log.info("network natural velocities have mean %.17g; simulations use the zero-mean frame",
                 offset)
    return net


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_network(net: Network, path) -> None:
    write_json(network_to_dict(net), path)


def read_network(path) -> Network:
    return network_from_dict(read_json(path))


def read_disturbances(paths: str | Path | Iterable) -> list[DisturbanceSpec]:
    """Read one or more disturbance files; each holds a spec or a list of specs."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for p in paths:
        data = read_json(p)
        items = data if isinstance(data, list) else [data]
        out += [DisturbanceSpec.from_dict(d) for d in items]
    return out


def write_disturbances(specs: Sequence[DisturbanceSpec], path) -> None:
    write_json([s.to_dict() for s in specs], path)


def write_series_csv(path, times, values, ids: Sequence[str]) -> None:
    """First column ``t``, then one column per id, 17 significant digits."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *ids])
        for t, row in zip(times, values):
            w.writerow([_fmt(t), *(_fmt(v) for v in row)])


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    ids = tuple(rows[0][1:])
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(ids) + 1)
    return data[:, 0], data[:, 1:], ids


def write_trajectory(traj: Trajectory, path, ids: Sequence[str] | None = None,
                     velocity_path=None) -> None:
    sub = traj if ids is None else traj.select(ids)
    write_series_csv(path, sub.times, sub.samples, sub.node_ids)
    if velocity_path is not None:
        if sub.velocities is None:
            raise ValueError("trajectory has no velocities")
        write_series_csv(velocity_path, sub.times, sub.velocities, sub.node_ids)


def read_trajectory(path, velocity_path=None) -> Trajectory:
    t, x, ids = read_series_csv(path)
    if t.size < 2:
        raise ValueError(f"{path}: need at least two samples")
    dt = float((t[-1] - t[0]) / (t.size - 1))
    vel = None
    if velocity_path is not None:
        tv, vel, vids = read_series_csv(velocity_path)
        if vids != ids or tv.size != t.size:
            raise ValueError("velocity file does not match trajectory layout")
    return Trajectory(float(t[0]), dt, x, ids, vel)


def write_matrix_csv(M, path) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in M:
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in r] for r in csv.reader(fh) if r], dtype=float)

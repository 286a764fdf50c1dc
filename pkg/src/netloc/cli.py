"""Command-line interface: generate, simulate, localize, predict, diagnose, kron.

Every command prints a JSON summary on stdout and exits with status 0.
Failures print ``{"error": <type>, "message": <text>}`` on stdout and exit
with status 1 (2 for usage errors, as argparse does).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .coupling import CouplingSpec
from .dynamics import add_measurement_noise, simulate
from .errors import InvalidTarget, NetlocError
from .generators import GENERATORS, generate
from .graph_core import build_laplacian, kron_reduce
from .localization import frequency_mismatch, localize, off_diagonality, predict
from .network import Edge, Network, Node

log = logging.getLogger("netloc")

# below this fraction of the largest coupling, Kron fill-in is not an edge
KRON_EDGE_RTOL = 1e-12


@dataclass
class ExperimentConfig:
    """Inputs shared by the simulate, localize and predict commands."""

    network: Path
    disturbances: list[Path] = field(default_factory=list)
    t_end: float = 100.0
    dt_sample: float = 0.1
    seed: int = 0
    reduce: list[str] | None = None
    k_mad: float = 5.0
    corr_min: float = 0.9
    out: Path | None = None

    def load(self) -> tuple[Network, list]:
        """Check the invariants and parse the referenced files."""
        for p in [self.network, *self.disturbances]:
            if not Path(p).is_file():
                raise FileNotFoundError(f"no such file: {p}")
        if not self.dt_sample > 0:
            raise ValueError("--dt must be positive")
        if not self.t_end > 0:
            raise ValueError("--t-end must be positive")
        net = io.read_network(self.network)
        if self.reduce:
            unknown = sorted(set(self.reduce) - set(net.ids))
            if unknown:
                raise ValueError(f"unknown reduced node ids: {unknown}")
        specs = io.read_disturbances(self.disturbances) if self.disturbances else []
        return net, specs

    def reduced_indices(self, net: Network) -> list[int]:
        """Explicit ``--reduce`` ids, else the network's unmeasured nodes."""
        if self.reduce is None:
            return list(net.unmeasured)
        return [net.node_index(r) for r in self.reduce]


def _ids(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [s for s in (p.strip() for p in text.split(",")) if s]


def _pairs(text: str) -> list[tuple[str, str]]:
    out = []
    for item in _ids(text) or []:
        a, sep, b = item.partition("-")
        if not sep:
            raise ValueError(f"edge {item!r} must be written as 'i-j'")
        out.append((a, b))
    return out


def _config(args) -> ExperimentConfig:
    return ExperimentConfig(
        network=Path(args.network),
        disturbances=[Path(p) for p in (getattr(args, "disturbance", None) or [])],
        t_end=getattr(args, "t_end", 100.0),
        dt_sample=getattr(args, "dt", 0.1),
        seed=getattr(args, "seed", 0),
        reduce=_ids(getattr(args, "reduce", None)),
        k_mad=getattr(args, "k_mad", 5.0),
        corr_min=getattr(args, "corr_min", 0.9),
        out=Path(args.out) if getattr(args, "out", None) else None,
    )


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# -- commands ---------------------------------------------------------------

def cmd_generate(args) -> dict:
    coupling = CouplingSpec(args.coupling, tuple(args.coefficients or ()))
    kw = {"inertia": args.inertia, "damping": args.damping, "omega_scale": args.omega_scale,
          "seed": args.seed}
    if args.weight_min is not None or args.weight_max is not None:
        lo = 1.0 if args.weight_min is None else args.weight_min
        hi = lo if args.weight_max is None else args.weight_max
        kw["weight_range"] = (lo, hi)
    if args.kind == "random_connected":
        if args.edges is None:
            raise ValueError("random_connected needs --edges")
        kw["m"] = args.edges
    elif args.kind == "two_community":
        kw.update(p_in=args.p_in, p_out=args.p_out)
    net = generate(args.kind, coupling, n=args.n, **kw)
    if args.reduce:
        red = {net.node_index(r) for r in _ids(args.reduce)}
        net = net.with_measured([k for k in range(net.n) if k not in red])
    io.write_network(net, args.out)
    return {"outputs": [str(args.out)], "nodes": net.n, "edges": len(net.edges)}


def cmd_simulate(args) -> dict:
    cfg = _config(args)
    net, specs = cfg.load()
    traj = simulate(net, specs, cfg.t_end, cfg.dt_sample, seed=cfg.seed, dt_int=args.dt_int)
    if args.noise:
        traj = add_measurement_noise(traj, args.noise, seed=cfg.seed)
    ids = net.ids if args.all_nodes else tuple(net.ids[k] for k in net.measured)
    io.write_trajectory(traj, cfg.out, ids, velocity_path=args.velocity)
    outputs = [str(cfg.out)] + ([str(args.velocity)] if args.velocity else [])
    return {"outputs": outputs, "samples": len(traj), "columns": list(ids)}


def cmd_localize(args) -> dict:
    cfg = _config(args)
    net, _ = cfg.load()
    traj = io.read_trajectory(args.traj, velocity_path=args.velocity)
    bundle = build_laplacian(net)
    kron = kron_reduce(bundle, net.centered_omega()[0], cfg.reduced_indices(net))
    series = frequency_mismatch(kron, traj)
    velocities = None
    if traj.velocities is not None:
        velocities = traj.select(kron.kept_ids).velocities
    report = localize(series, kron, net, cfg.k_mad, cfg.corr_min, velocities=velocities)
    psi_out = Path(args.psi_out) if args.psi_out else _sibling(cfg.out, "_psi")
    psi_out = psi_out if psi_out.suffix else psi_out.with_suffix(".csv")
    data = report.to_dict()
    data["kept_index"] = {nid: k for k, nid in zip(kron.kept, kron.kept_ids)}
    io.write_json(data, cfg.out)
    io.write_series_csv(psi_out, series.times, series.psi, series.node_ids)
    return {"outputs": [str(cfg.out), str(psi_out)],
            "classifications": data["classifications"]}


def cmd_predict(args) -> dict:
    cfg = _config(args)
    net, specs = cfg.load()
    if len(specs) != 1:
        raise ValueError("predict takes exactly one disturbance")
    bundle = build_laplacian(net)
    kron = kron_reduce(bundle, net.centered_omega()[0], cfg.reduced_indices(net))
    n_samples = int(np.floor(cfg.t_end / cfg.dt_sample + 1e-9)) + 1
    times = cfg.dt_sample * np.arange(n_samples)
    psi = predict(kron, net, specs[0], times)
    io.write_series_csv(cfg.out, times, psi, kron.kept_ids)
    return {"outputs": [str(cfg.out)], "samples": n_samples, "columns": list(kron.kept_ids)}


def cmd_diagnose(args) -> dict:
    net = io.read_network(args.network)
    bundle = build_laplacian(net)
    edge_ids = _pairs(args.edges) if args.edges else []
    for a, b in edge_ids:
        if not net.has_edge(net.node_index(a), net.node_index(b)):
            raise InvalidTarget(f"unknown edge {a}-{b}")
    edges = [(net.node_index(a), net.node_index(b)) for a, b in edge_ids]
    data: dict = {"ratio_threshold": args.ratio_threshold}
    if edges:
        diag = off_diagonality(bundle, edges)
        data["edges"] = [f"{a}-{b}" for a, b in edge_ids]
        data.update(diag.to_dict())
    if args.pairs:
        ratios, offs = _sampled_pairs(net, bundle, args.pairs, args.seed,
                                      disjoint=not args.allow_adjacent)
        data["sampled_pairs"] = {
            "count": int(ratios.size),
            "node_disjoint": not args.allow_adjacent,
            "max_offdiag_abs": float(offs.max()),
            "mean_offdiag_abs": float(offs.mean()),
            "max_ratio": float(ratios.max()),
            "mean_ratio": float(ratios.mean()),
            "fraction_below_threshold": float(np.mean(ratios < args.ratio_threshold)),
        }
    if not edges and not args.pairs:
        raise ValueError("diagnose needs --edges or --pairs")
    outputs = []
    if args.out:
        io.write_json(data, args.out)
        outputs.append(str(args.out))
    return {"outputs": outputs, **{k: v for k, v in data.items() if k != "matrix"}}


def _sampled_pairs(net: Network, bundle, count: int, seed: int, disjoint: bool = True):
    """Off-diagonal entries and ratios over random pairs of distinct edges.

    With ``disjoint`` the two edges share no endpoint, the only placement
    in which two line disturbances show up as two separate node pairs.
    """
    rng = np.random.default_rng(seed)
    pool = [(a, b) for a in range(len(net.edges)) for b in range(a + 1, len(net.edges))
            if not disjoint or not ({net.edges[a].i, net.edges[a].j}
                                    & {net.edges[b].i, net.edges[b].j})]
    if not pool:
        raise InvalidTarget("no edge pairs to sample")
    picks = rng.integers(len(pool), size=count)
    ratios, offs = np.empty(count), np.empty(count)
    for k, p in enumerate(picks):
        ea, eb = (net.edges[q] for q in pool[p])
        diag = off_diagonality(bundle, [(ea.i, ea.j), (eb.i, eb.j)])
        ratios[k] = diag.max_ratio
        offs[k] = diag.max_offdiag_abs
    return ratios, offs


def cmd_kron(args) -> dict:
    cfg = _config(args)
    net, _ = cfg.load()
    bundle = build_laplacian(net)
    omega = net.centered_omega()[0]
    kron = kron_reduce(bundle, omega, cfg.reduced_indices(net))
    reduced_net = _reduced_network(net, kron)
    out = cfg.out
    lr_path, wr_path, map_path = (_sibling(out, s) for s in ("_Lr.csv", "_omega_r.csv", "_map.json"))
    io.write_network(reduced_net, out)
    io.write_matrix_csv(kron.L_r, lr_path)
    io.write_matrix_csv(kron.omega_r.reshape(-1, 1), wr_path)
    kept_map = {"kept": {nid: k for k, nid in zip(kron.kept, kron.kept_ids)},
                "reduced": [net.ids[k] for k in kron.reduced],
                "order": list(kron.kept_ids)}
    io.write_json(kept_map, map_path)
    return {"outputs": [str(out), str(lr_path), str(wr_path), str(map_path)],
            "kept": len(kron.kept), "reduced": len(kron.reduced)}


def _reduced_network(net: Network, kron) -> Network:
    """Kept nodes wired by the reduced Laplacian, with linear coupling.

    Edge weights are the off-diagonal couplings of L_r, which already carry
    the slope of the original coupling at zero, so the file describes the
    linearized reduced system.
    """
    Lr = kron.L_r
    off = -Lr.copy()
    np.fill_diagonal(off, 0.0)
    cut = KRON_EDGE_RTOL * max(float(off.max()), 0.0)
    nodes = tuple(Node(net.nodes[k].id, net.nodes[k].m, net.nodes[k].d, float(kron.omega_r[p]), True)
                  for p, k in enumerate(kron.kept))
    edges = tuple(Edge(a, b, float(off[a, b]))
                  for a in range(len(nodes)) for b in range(a + 1, len(nodes)) if off[a, b] > cut)
    return Network(nodes, edges, CouplingSpec("linear"))


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netloc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic network JSON")
    g.add_argument("kind", choices=sorted(GENERATORS))
    g.add_argument("--n", type=int, required=True, help="number of nodes")
    g.add_argument("--edges", type=int, help="edge count (random_connected)")
    g.add_argument("--p-in", type=float, default=0.5)
    g.add_argument("--p-out", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--inertia", type=float, default=1.0)
    g.add_argument("--damping", type=float, default=1.0)
    g.add_argument("--omega-scale", type=float, default=0.1)
    g.add_argument("--weight-min", type=float)
    g.add_argument("--weight-max", type=float)
    g.add_argument("--coupling", choices=("linear", "sin", "higher_order"), default="linear")
    g.add_argument("--coefficients", type=float, nargs="*", help="harmonic weights c_1..c_Q")
    g.add_argument("--reduce", help="comma-separated ids to mark unmeasured")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    def common(sp, disturbance=True, times=True, detector=False):
        sp.add_argument("--network", required=True)
        if disturbance:
            sp.add_argument("--disturbance", action="append", default=[],
                            help="disturbance JSON (repeatable)")
        if times:
            sp.add_argument("--t-end", type=float, default=100.0)
            sp.add_argument("--dt", type=float, default=0.1, help="sampling interval")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--reduce", help="comma-separated ids to eliminate "
                                         "(default: the unmeasured nodes)")
        if detector:
            sp.add_argument("--k-mad", type=float, default=5.0)
            sp.add_argument("--corr-min", type=float, default=0.9)
        sp.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="integrate the dynamics and write a trajectory CSV")
    common(s)
    s.add_argument("--dt-int", type=float, help="integration step (must divide --dt)")
    s.add_argument("--noise", type=float, default=0.0, help="measurement noise std")
    s.add_argument("--velocity", help="also write velocities to this CSV")
    s.add_argument("--all-nodes", action="store_true", help="record unmeasured nodes too")
    s.set_defaults(func=cmd_simulate)

    lo = sub.add_parser("localize", help="detect and classify disturbances in a trajectory")
    common(lo, disturbance=False, times=False, detector=True)
    lo.add_argument("--traj", required=True)
    lo.add_argument("--velocity", help="velocity CSV matching --traj")
    lo.add_argument("--psi-out", help="mismatch CSV (default: <out>_psi.csv)")
    lo.set_defaults(func=cmd_localize)

    pr = sub.add_parser("predict", help="analytical mismatch for one disturbance")
    common(pr)
    pr.set_defaults(func=cmd_predict)

    dg = sub.add_parser("diagnose", help="off-diagonality of line signatures")
    dg.add_argument("--network", required=True)
    dg.add_argument("--edges", help="comma-separated edges written i-j")
    dg.add_argument("--pairs", type=int, default=0, help="sample this many random edge pairs")
    dg.add_argument("--allow-adjacent", action="store_true",
                    help="also sample edge pairs that share a node")
    dg.add_argument("--ratio-threshold", type=float, default=0.3)
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--out")
    dg.set_defaults(func=cmd_diagnose)

    k = sub.add_parser("kron", help="write the Kron-reduced network and matrices")
    common(k, disturbance=False, times=False)
    k.set_defaults(func=cmd_kron)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (NetlocError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(msg)}, sort_keys=True))
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

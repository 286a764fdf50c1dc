import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st
from scipy import linalg

from conftest import dense_psi, random_network, reduced_component_network
from netloc import disturbance as D
from netloc.dynamics import Trajectory, fixed_point, simulate, add_measurement_noise
from netloc.errors import DegenerateSignatures, DimensionMismatch, InvalidTarget, SingularUpdate
from netloc.generators import path, random_connected
from netloc.graph_core import boundary, build_laplacian, kron_reduce, laplacian_bundle
from netloc.localization import (
    Group,
    MismatchSeries,
    Signature,
    classify,
    detect_and_group,
    directed_projection,
    fit_residual,
    frequency_mismatch,
    line_signature,
    localize,
    mixed_line_signature,
    nodal_signature,
    off_diagonality,
    predict,
    predict_line_mixed,
    predict_line_reduced,
    predict_line_unreduced,
    predict_nodal,
    predict_nodal_reduced,
    reduced_line_signature,
    reduced_node_signature,
    separate_multi,
    signature_basis,
)
from netloc.network import Network


def _kron(net, reduced=None):
    b = build_laplacian(net)
    red = net.unmeasured if reduced is None else reduced
    return kron_reduce(b, net.centered_omega()[0], red)


def _series(kron, psi, dt=1.0):
    return MismatchSeries(0.0, dt, np.asarray(psi), np.array(kron.baseline), kron.kept_ids,
                          kron.kept)


def _edge(net, kind, kron):
    """First edge whose endpoints match ``kind`` (kept-kept, mixed, reduced-reduced)."""
    for e in net.edges:
        ki, kj = kron.is_kept(e.i), kron.is_kept(e.j)
        if kind == "kept" and ki and kj:
            return e
        if kind == "mixed" and ki != kj:
            return e
        if kind == "reduced" and not ki and not kj:
            return e
    raise AssertionError(f"no {kind} edge")


# -- frequency mismatch -------------------------------------------------------

def test_unperturbed_fixed_point_gives_baseline(rng):
    net = random_network(rng, 10, 8).with_measured(range(7))
    k = _kron(net)
    x = fixed_point(net)
    samples = np.tile(x[list(k.kept)], (12, 1))
    tr = Trajectory(0.0, 0.5, samples, k.kept_ids)
    s = frequency_mismatch(k, tr)
    np.testing.assert_allclose(s.psi, np.tile(k.omega_r - k.omega_r.mean(), (12, 1)), atol=1e-12)
    np.testing.assert_allclose(s.deviation, 0.0, atol=1e-12)
    # rows of psi sum to zero since 1^T L_r = 0
    assert np.abs(s.psi.sum(axis=1)).max() < 1e-9


def test_zero_state_gives_zero_mismatch(triangle):
    k = _kron(triangle, ())
    tr = Trajectory(0.0, 1.0, np.zeros((5, 3)), triangle.ids)
    np.testing.assert_array_equal(frequency_mismatch(k, tr).psi, 0.0)


def test_trajectory_must_cover_kept_nodes(triangle):
    k = _kron(triangle, ())
    tr = Trajectory(0.0, 1.0, np.zeros((5, 2)), ("1", "2"))
    with pytest.raises(DimensionMismatch):
        frequency_mismatch(k, tr)


def test_mismatch_accepts_full_trajectory_with_reduced_columns(rng):
    net = random_network(rng, 8, 6).with_measured(range(5))
    k = _kron(net)
    tr = simulate(net, [], 5.0, 1.0)
    a = frequency_mismatch(k, tr)
    b = frequency_mismatch(k, tr.select(k.kept_ids))
    np.testing.assert_array_equal(a.psi, b.psi)


@given(st.integers(0, 10_000), st.floats(-1e3, 1e3))
def test_gauge_invariance(seed, c):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 8, 5).with_measured(range(6))
    k = _kron(net)
    x = rng.normal(size=(7, 6))
    a = frequency_mismatch(k, Trajectory(0.0, 1.0, x, k.kept_ids))
    b = frequency_mismatch(k, Trajectory(0.0, 1.0, x + c, k.kept_ids))
    np.testing.assert_allclose(a.psi, b.psi, atol=1e-9 * max(1.0, abs(c)))


# -- nodal predictors -----------------------------------------------------------

def test_nodal_predictor_on_four_nodes():
    net = Network.from_arrays([(0, 1), (1, 2), (2, 3)], n=4, omega=[0.1, -0.3, 0.2, 0.0])
    k = _kron(net, ())
    psi = predict_nodal(k, 2, [0.0, 1.0])
    np.testing.assert_allclose(psi[0], k.baseline)
    np.testing.assert_allclose(psi[1] - k.baseline, [-0.25, -0.25, 0.75, -0.25])


@given(st.integers(0, 10_000), st.integers(3, 12))
def test_nodal_deviation_sums_to_zero_and_peaks_at_node(seed, n):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n, n)
    k = _kron(net, ())
    node = int(rng.integers(n))
    xi = rng.normal(size=6)
    dev = predict_nodal(k, node, xi) - k.baseline
    np.testing.assert_allclose(dev.sum(axis=1), 0.0, atol=1e-12)
    busy = np.abs(xi) > 1e-9
    assert np.all(np.argmax(np.abs(dev[busy]), axis=1) == node)


def test_nodal_predictor_matches_dense_oracle(rng):
    net = random_network(rng, 10, 8).with_measured(range(7))
    k = _kron(net)
    psi = predict_nodal(k, 3, 0.02)[0]
    np.testing.assert_allclose(psi, dense_psi(net, net.unmeasured, node=(3, 0.02)), atol=1e-10)
    with pytest.raises(InvalidTarget):
        predict_nodal(k, 8, 0.02)


def test_reduced_node_on_three_node_path():
    net = Network.from_arrays([(0, 1), (1, 2)], [1.0, 2.5], n=3, omega=[0.1, 0.0, -0.1])
    k = _kron(net, (2,))
    # -L_gc (L_cc)^-1 e_3 = -(0, -2.5) / 2.5 = (0, 1): all weight on the neighbour
    np.testing.assert_allclose(-k.transfer[:, 0], [0.0, 1.0], atol=1e-15)
    dev = predict_nodal_reduced(k, 2, [0.0, 0.4]) - k.baseline
    np.testing.assert_allclose(dev, [[0.0, 0.0], [-0.2, 0.2]], atol=1e-15)
    with pytest.raises(InvalidTarget):
        predict_nodal_reduced(k, 1, 0.4)


def test_reduced_node_support_and_oracle():
    net = reduced_component_network(3)
    k = _kron(net)
    comp = net.unmeasured
    bnd = set(boundary(net, comp))
    for j in comp:
        col = -k.transfer[:, k.reduced_position(j)]
        support = {k.kept[p] for p in np.flatnonzero(np.abs(col) > 1e-14)}
        assert support <= bnd
        psi = predict_nodal_reduced(k, j, 0.03)[0]
        np.testing.assert_allclose(psi, dense_psi(net, comp, node=(j, 0.03)), atol=1e-10)


# -- line predictors ---------------------------------------------------------

def test_line_predictor_on_triangle():
    eps = 0.1
    net = Network.from_arrays([(0, 1), (1, 2), (0, 2)], n=3, omega=[eps, -eps, 0.0])
    k = _kron(net, ())
    psi = predict_line_unreduced(k, (0, 1), 0.05)[0]
    np.testing.assert_allclose(psi, dense_psi(net, (), line=((0, 1), 0.05)), atol=1e-9)
    np.testing.assert_allclose(predict_line_unreduced(k, (0, 1), 0.0)[0], k.baseline, atol=0)


def test_line_without_flow_is_invisible():
    # the symmetric velocities leave edge (1, 2) without flow
    net = Network.from_arrays([(0, 1), (1, 2), (0, 2)], n=3, omega=[1.0, 1.0, -2.0])
    k = _kron(net, ())
    dev = predict_line_unreduced(k, (0, 1), [0.1, 0.3, -0.2]) - k.baseline
    assert np.abs(dev).max() < 1e-15


def test_line_predictor_singular_denominator():
    # removing a bridge entirely disconnects the path
    net = Network.from_arrays([(0, 1), (1, 2)], n=3, omega=[0.1, 0.0, -0.1])
    k = _kron(net, ())
    with pytest.raises(SingularUpdate):
        predict_line_unreduced(k, (0, 1), [0.0, -1.0])
    with pytest.raises(InvalidTarget):
        predict_line_unreduced(k, (1, 1), 0.1)


@given(st.integers(0, 10_000))
def test_unreduced_line_predictor_properties(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 11, 10).with_measured(range(8))
    k = _kron(net)
    e = _edge(net, "kept", k)
    xi = 0.05 * e.weight * np.sin(np.linspace(0.0, 6.0, 25))
    dev = predict_line_unreduced(k, (e.i, e.j), xi) - k.baseline
    pi, pj = k.kept_position(e.i), k.kept_position(e.j)
    np.testing.assert_allclose(dev[:, pi], -dev[:, pj], atol=1e-14)
    rest = np.delete(dev, [pi, pj], axis=1)
    assert np.abs(rest).max() <= 1e-9 * max(np.abs(dev[:, pi]).max(), 1e-300)
    psi = predict_line_unreduced(k, (e.i, e.j), xi[7])[0]
    oracle = dense_psi(net, net.unmeasured, line=((e.i, e.j), xi[7]))
    np.testing.assert_allclose(psi, oracle, atol=1e-10)


@given(st.integers(0, 10_000))
def test_reduced_line_predictor_is_rank_one_and_exact(seed):
    net = reduced_component_network(seed)
    k = _kron(net)
    e = _edge(net, "reduced", k)
    xi = 0.05 * e.weight * np.sin(np.linspace(0.1, 6.0, 30))
    v, psi = predict_line_reduced(k, (e.i, e.j), xi)
    dev = psi - k.baseline
    s = np.linalg.svd(dev, compute_uv=False)
    assert s[1] < 1e-6 * s[0]
    # psi_p / psi_q = v_p / v_q at every sample
    p, q = np.argsort(-np.abs(v))[:2]
    ratio = dev[:, p] / dev[:, q]
    np.testing.assert_allclose(ratio, v[p] / v[q], rtol=1e-6)
    for t in (3, 17):
        oracle = dense_psi(net, net.unmeasured, line=((e.i, e.j), xi[t]))
        np.testing.assert_allclose(psi[t], oracle, atol=1e-8)
    _, zero = predict_line_reduced(k, (e.i, e.j), np.zeros(4))
    np.testing.assert_allclose(zero, np.tile(k.baseline, (4, 1)), atol=0)


def test_reduced_line_signature_is_transfer_of_edge():
    net = reduced_component_network(0)
    k = _kron(net)
    e = _edge(net, "reduced", k)
    v, _ = predict_line_reduced(k, (e.i, e.j), 0.01)
    ej = np.zeros(len(k.reduced))
    ej[k.reduced_position(e.i)], ej[k.reduced_position(e.j)] = 1.0, -1.0
    np.testing.assert_allclose(v, k.L_gc @ np.linalg.solve(k.L_cc, ej), atol=1e-14)


def test_mixed_line_on_three_node_path():
    # a pendant reduced node: v~ = e_2 + L_gc (L_cc)^-1 e_3 = (0, 1) + (0, -1) = 0
    net = Network.from_arrays([(0, 1), (1, 2)], [1.0, 2.0], n=3, omega=[0.2, -0.1, -0.1])
    k = _kron(net, (2,))
    v, psi = predict_line_mixed(k, (1, 2), [0.0, 0.3])
    np.testing.assert_allclose(v, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(psi, np.tile(k.baseline, (2, 1)), atol=1e-15)
    with pytest.raises(InvalidTarget):
        predict_line_mixed(k, (0, 1), 0.1)


@given(st.integers(0, 10_000))
@example(280)
def test_mixed_line_predictor_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 12, 12).with_measured(range(8))
    k = _kron(net)
    e = _edge(net, "mixed", k)
    xi = 0.05 * e.weight * np.cos(np.linspace(0.0, 5.0, 20))
    v, psi = predict_line_mixed(k, (e.i, e.j), xi)
    kept, red = (e.i, e.j) if k.is_kept(e.i) else (e.j, e.i)
    vt = np.zeros(k.n_kept)
    vt[k.kept_position(kept)] = 1.0
    vt += k.L_gc @ np.linalg.solve(k.L_cc, np.eye(len(k.reduced))[k.reduced_position(red)])
    assert abs(abs(v @ vt) - np.linalg.norm(v) * np.linalg.norm(vt)) < 1e-12
    for t in (0, 11):
        oracle = dense_psi(net, net.unmeasured, line=((e.i, e.j), xi[t]))
        np.testing.assert_allclose(psi[t], oracle, atol=1e-8)
    dev = psi - k.baseline
    s = np.linalg.svd(dev, compute_uv=False)
    # a pendant reduced endpoint gives v~ = 0 and no deviation at all
    assert s[1] <= 1e-6 * s[0]


def test_predict_dispatch_matches_direct_calls():
    net = reduced_component_network(4)
    k = _kron(net)
    t = np.linspace(0.0, 10.0, 11)
    sig = D.Oscillating(0.01, 0.5)
    xi = sig.sample(t)
    cases = [
        (D.node(5, sig), predict_nodal(k, 5, xi)),
        (D.node(10, sig), predict_nodal_reduced(k, 10, xi)),
        (D.line(6, 7, sig), predict_line_unreduced(k, (6, 7), xi)),
        (D.line(1, 9, sig), predict_line_mixed(k, (1, 9), xi)[1]),
        (D.line(10, 11, sig), predict_line_reduced(k, (10, 11), xi)[1]),
    ]
    for spec, expected in cases:
        np.testing.assert_array_equal(predict(k, net, spec, t), expected)


# -- signatures ------------------------------------------------------------------

def test_signature_basis_is_nonzero_with_two_node_lines():
    net = reduced_component_network(1)
    k = _kron(net)
    basis = signature_basis(k, net)
    kinds = [s.kind for s in basis]
    assert kinds.count("node") == 9 and kinds.count("line") == 13
    assert kinds.count("reduced_node") == 3 and kinds.count("reduced_line") == 3
    assert kinds.count("mixed_line") == 3
    for s in basis:
        assert np.linalg.norm(s.vector) > 0
        if s.kind == "line":
            assert np.count_nonzero(s.vector) == 2


def test_line_signature_matches_first_order_response():
    net = reduced_component_network(2)
    k = _kron(net)
    xi = 1e-6
    s = line_signature(k, (6, 7)).vector
    dev = predict_line_unreduced(k, (6, 7), xi)[0] - k.baseline
    np.testing.assert_allclose(dev / xi, s, rtol=1e-4)
    s2 = mixed_line_signature(k, (9, 1)).vector
    assert np.abs(s2[k.kept_position(1)]) > 0
    r = reduced_line_signature(k, (10, 11)).vector
    dev = predict_line_reduced(k, (10, 11), 1e-3)[1][0] - k.baseline
    assert fit_residual(dev, r) < 1e-9


def test_fit_residual_edge_cases():
    assert fit_residual(np.zeros(3), np.ones(3)) == 0.0
    assert fit_residual(np.ones(3), np.zeros(3)) == 1.0
    assert fit_residual(np.array([2.0, -2.0, 0.0]), np.array([1.0, -1.0, 0.0])) == pytest.approx(0.0)


# -- detection and grouping -------------------------------------------------

def _noisy(kron, psi, sigma, seed):
    rng = np.random.default_rng(seed)
    return _series(kron, psi + sigma * rng.normal(size=psi.shape))


def test_unperturbed_noisy_runs_rarely_fire():
    hits = 0
    for seed in range(100):
        net = random_connected(30, 60, seed=seed)
        k = _kron(net, ())
        tr = add_measurement_noise(simulate(net, [], 50.0, 0.25), 1e-3, seed)
        hits += bool(detect_and_group(frequency_mismatch(k, tr)))
    assert hits <= 5


def test_single_line_gives_one_anticorrelated_pair():
    net = random_connected(30, 60, seed=7)
    k = _kron(net, ())
    e = max(net.edges, key=lambda e: abs(line_signature(k, (e.i, e.j)).vector).max())
    t = np.linspace(0.0, 100.0, 400)
    psi = predict_line_unreduced(k, (e.i, e.j), 0.01 * np.sin(0.2 * t))
    scale = np.abs(psi - k.baseline).max()
    groups = detect_and_group(_noisy(k, psi, 0.01 * scale, 1))
    assert len(groups) == 1
    assert set(groups[0].members) == {e.i, e.j}
    dev = psi - k.baseline
    assert np.corrcoef(dev[:, e.i], dev[:, e.j])[0, 1] < -0.999


def test_two_lines_at_distinct_frequencies_give_two_groups():
    net = random_connected(30, 60, seed=11)
    k = _kron(net, ())
    flows = {(e.i, e.j): abs(line_signature(k, (e.i, e.j)).vector).max() for e in net.edges}
    ranked = sorted(flows, key=flows.get, reverse=True)
    a = ranked[0]
    b = next(p for p in ranked[1:] if not set(p) & set(a))
    t = np.linspace(0.0, 2 * np.pi / 0.05, 400)
    psi = (predict_line_unreduced(k, a, 0.01 * np.sin(0.05 * t))
           + predict_line_unreduced(k, b, 0.01 * flows[a] / flows[b] * np.sin(0.15 * t)) - k.baseline)
    groups = detect_and_group(_noisy(k, psi, 1e-6 * flows[a], 2))
    assert sorted(tuple(sorted(g.members)) for g in groups) == sorted([a, b])
    assert not set(groups[0].members) & set(groups[1].members)


def test_grouping_needs_ten_samples(triangle):
    k = _kron(triangle, ())
    with pytest.raises(ValueError):
        detect_and_group(_series(k, np.zeros((9, 3))))


def test_flat_series_has_no_groups(triangle):
    k = _kron(triangle, ())
    assert detect_and_group(_series(k, np.tile(k.baseline, (20, 1)))) == []


# -- classification ------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_classification_of_predicted_placements(seed):
    net = reduced_component_network(seed)
    k = _kron(net)
    t = np.linspace(0.0, 60.0, 300)
    wave = np.sin(2 * np.pi * t / 60.0)
    cases = {
        "node": predict_nodal(k, 5, 0.02 * wave),
        "reduced_node": predict_nodal_reduced(k, 10, 0.02 * wave),
        "line": predict_line_unreduced(k, (6, 7), 0.01 * wave),
        "mixed": predict_line_mixed(k, (1, 9), 0.01 * wave)[1],
        "reduced_line": predict_line_reduced(k, (10, 11), 0.01 * wave)[1],
    }
    out = {}
    for name, psi in cases.items():
        scale = np.abs(psi - k.baseline).max()
        rep = localize(_noisy(k, psi, 1e-3 * scale, seed), k, net)
        assert len(rep.classifications) == 1
        out[name] = rep.classifications[0]
    assert out["node"].kind == "node" and out["node"].nodes == ("6",)
    assert out["line"].kind == "line" and out["line"].nodes == ("7", "8")
    for name in ("reduced_node", "mixed", "reduced_line"):
        assert out[name].kind == "reduced_component"
        assert out[name].nodes == ("10", "11", "12")
    assert out["mixed"].dominant_boundary_node == "2"
    assert out["reduced_line"].dominant_boundary_node is None
    for c in out.values():
        assert c.residual < 0.25
        if c.kind == "line":
            assert set(c.nodes) <= set(c.group)


def test_poor_fit_is_downgraded_to_unknown_component():
    net = reduced_component_network(0)
    k = _kron(net)
    rng = np.random.default_rng(0)
    grp = Group((2, 6), ("3", "7"), rng.normal(size=20), rng.normal(size=9))
    c = classify([grp], _series(k, np.zeros((20, 9))), k, net)[0]
    assert c.kind == "reduced_component" and c.nodes == () and c.residual > 0.25


def test_symmetric_pair_on_edge_is_not_a_line():
    net = reduced_component_network(0)
    k = _kron(net)
    pattern = np.zeros(9)
    pattern[[6, 7]] = 1.0
    grp = Group((6, 7), ("7", "8"), np.ones(20), pattern)
    c = classify([grp], _series(k, np.zeros((20, 9))), k, net)[0]
    assert c.kind != "line"


def test_report_json_layout():
    net = reduced_component_network(0)
    k = _kron(net)
    t = np.linspace(0.0, 60.0, 100)
    psi = predict_nodal(k, 3, 0.02 * np.sin(t / 5))
    rep = localize(_noisy(k, psi, 1e-5, 0), k, net, velocities=np.zeros((100, 9)))
    d = rep.to_dict()
    assert d["nodes"] == [str(q) for q in range(1, 10)]
    assert set(d["deviation_stats"]["4"]) == {"std", "max_abs", "velocity_max_abs"}
    assert d["groups"] == [["4"]]
    assert d["classifications"][0]["type"] == "node"


# -- separation ------------------------------------------------------------------

def test_single_hypothesis_is_scalar_projection(rng):
    net = random_network(rng, 9, 8)
    k = _kron(net, ())
    s = nodal_signature(k, 4)
    dev = rng.normal(size=(15, 9))
    sep = separate_multi(_series(k, k.baseline + dev), [s])
    np.testing.assert_allclose(sep.amplitudes[:, 0], dev @ s.vector / (s.vector @ s.vector))
    fit = np.outer(sep.amplitudes[:, 0], s.vector)
    assert sep.residual == pytest.approx(np.linalg.norm(dev - fit) / np.linalg.norm(dev))


def test_two_nodal_disturbances_are_recovered_exactly(rng):
    net = random_network(rng, 10, 9)
    k = _kron(net, ())
    t = np.linspace(0, 20, 50)
    x1, x2 = 0.02 * np.sin(t), 0.01 * np.cos(3 * t)
    psi = predict_nodal(k, 2, x1) + predict_nodal(k, 7, x2) - k.baseline
    sep = separate_multi(_series(k, psi), [nodal_signature(k, 2), nodal_signature(k, 7)])
    np.testing.assert_allclose(sep.amplitudes, np.column_stack([x1, x2]), atol=1e-14)
    assert sep.residual < 1e-12
    assert sep.labels == ("node:2", "node:7")


def test_off_diagonal_crosstalk_degrades_monotonically(rng):
    net = random_network(rng, 12, 12)
    k = _kron(net, ())
    hyps = [line_signature(k, (e.i, e.j)) for e in net.edges[:2]]
    S = np.column_stack([h.vector for h in hyps])
    t = np.linspace(0, 20, 80)
    xi = np.column_stack([np.sin(t), np.sin(3 * t)])
    leak = np.zeros(12)
    leak[[h for h in range(12) if not np.any(S[h])][:2]] = [1.0, -1.0]
    amp_err, residual = [], []
    for c in (0.0, 0.01, 0.05, 0.2):
        # crosstalk inside the span mixes amplitudes; leakage outside it adds residual
        X = np.array([[1.0, c], [c, 1.0]])
        dev = xi @ X.T @ S.T + c * np.outer(xi[:, 0], leak) * np.abs(S).max()
        sep = separate_multi(_series(k, k.baseline + dev), hyps)
        amp_err.append(np.abs(sep.amplitudes - xi).max())
        residual.append(sep.residual)
    assert amp_err[0] < 1e-12 and residual[0] < 1e-12
    assert np.all(np.diff(amp_err) > 0) and np.all(np.diff(residual) > 0)


def test_degenerate_signatures_are_rejected(triangle):
    k = _kron(triangle, ())
    s = nodal_signature(k, 0)
    with pytest.raises(DegenerateSignatures):
        separate_multi(_series(k, np.zeros((10, 3))), [s, Signature("node", (0,), 2 * s.vector)])
    with pytest.raises(DegenerateSignatures):
        separate_multi(_series(k, np.zeros((10, 3))), [])


# -- off-diagonality -------------------------------------------------------------

def test_single_edge_gives_effective_resistance(rng):
    net = random_network(rng, 10, 8)
    b = build_laplacian(net)
    e = net.edges[3]
    od = off_diagonality(b, [(e.i, e.j)])
    assert od.matrix.shape == (1, 1)
    assert od.matrix[0, 0] == pytest.approx(b.effective_resistance(e.i, e.j), rel=1e-12)
    assert od.matrix[0, 0] > 0 and od.max_ratio == 0.0


@given(st.integers(0, 10_000))
def test_spectral_formula_matches_quadratic_form(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 15, 15)
    b = build_laplacian(net)
    edges = [(e.i, e.j) for e in net.edges[:5]]
    od = off_diagonality(b, edges)
    P = np.linalg.pinv(b.L)
    E = np.zeros((15, 5))
    for a, (i, j) in enumerate(edges):
        E[i, a], E[j, a] = 1.0, -1.0
    np.testing.assert_allclose(od.matrix, E.T @ P @ E, atol=1e-10)
    assert od.max_ratio == pytest.approx(od.ratios.max())


def test_path_graph_closed_form():
    # on a tree a unit current across one edge leaves every other edge unloaded
    net = path(20, weight_range=(0.5, 2.0), seed=3)
    b = build_laplacian(net)
    edges = [(e.i, e.j) for e in net.edges]
    od = off_diagonality(b, edges)
    np.testing.assert_allclose(np.diag(od.matrix), [1 / e.weight for e in net.edges], rtol=1e-10)
    assert od.max_offdiag_abs < 1e-10


def test_ladder_offdiagonal_decays_with_distance():
    n = 20
    edges = [(k, k + 1) for k in range(n - 1)] + [(n + k, n + k + 1) for k in range(n - 1)]
    edges += [(k, n + k) for k in range(n)]
    b = build_laplacian(Network.from_arrays(edges, n=2 * n))
    rungs = [(k, n + k) for k in range(1, n - 1)]
    od = off_diagonality(b, rungs)
    first_row = np.abs(od.matrix[0, 1:])
    assert np.all(np.diff(first_row) < 0)


def test_unknown_edge_indices_are_rejected(triangle):
    with pytest.raises(InvalidTarget):
        off_diagonality(build_laplacian(triangle), [(0, 5)])


# -- directed projection --------------------------------------------------------

def test_symmetric_projection_closed_form(rng):
    net = random_network(rng, 9, 7)
    L = build_laplacian(net).L
    for node in (0, 4, 8):
        w = directed_projection(L, node)
        expected = -np.full(9, 1 / 9)
        expected[node] += 1.0
        np.testing.assert_allclose(w, expected, atol=1e-9)


def _directed_cycle(weights):
    n = len(weights)
    L = np.zeros((n, n))
    for k, w in enumerate(weights):
        L[k, (k + 1) % n] -= w
        L[k, k] += w
    return L


@given(st.lists(st.floats(0.1, 5.0), min_size=3, max_size=6), st.data())
def test_projection_is_idempotent(weights, data):
    L = _directed_cycle(weights)
    node = data.draw(st.integers(0, len(weights) - 1))
    w = directed_projection(L, node)
    P = L @ np.linalg.pinv(L, rcond=1e-12)
    np.testing.assert_allclose(P @ w, w, atol=1e-9)


def test_directed_cycle_matches_qr_projector():
    L = _directed_cycle([1.0, 2.0, 3.0])
    assert not np.allclose(L, L.T)
    q, r, _ = linalg.qr(L, pivoting=True)
    rank = int(np.sum(np.abs(np.diag(r)) > 1e-12 * np.abs(r[0, 0])))
    Q = q[:, :rank]
    for node in range(3):
        np.testing.assert_allclose(directed_projection(L, node), Q @ Q.T[:, node], atol=1e-9)


def test_laplacian_bundle_wrapper_projection_agrees():
    L = build_laplacian(Network.from_arrays([(0, 1), (1, 2), (2, 3)], n=4)).L
    b = laplacian_bundle(L)
    np.testing.assert_allclose(directed_projection(b.L, 1), [-0.25, 0.75, -0.25, -0.25], atol=1e-12)

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as csgraph_components

from covthresh.compgraph import (
    DisjointSet,
    EdgeSet,
    VertexPartition,
    auto_lambda_grid,
    component_profile,
    connected_components,
    critical_lambda_sweep,
    critical_lambdas,
    lambda_for_max_component,
    node_screen,
    partition_equal,
    partition_refines,
    support_graph,
    threshold_graph,
    threshold_partition,
)
from covthresh.covmodel import SymMatrix
from covthresh.exceptions import DimensionMismatchError, InputError
from covthresh.synth import SynthSpec, generate

S3 = SymMatrix([[1, .5, .1], [.5, 1, .2], [.1, .2, 1]])


def _partition(p, *blocks):
    return VertexPartition.from_blocks(p, blocks)


def test_threshold_graph():
    assert threshold_graph(S3, 0.3).pairs() == {(0, 1)}
    assert len(threshold_graph(S3, 0.5)) == 0
    # strict comparison: 0.2 is not > 0.2
    assert threshold_graph(S3, 0.2).pairs() == {(0, 1)}
    assert (0, 1) in threshold_graph(S3, 0.3).pairs()
    assert (1, 2) not in threshold_graph(S3, 0.3).pairs()


def test_threshold_graph_rejects_non_square():
    with pytest.raises(DimensionMismatchError, match="matrix not square"):
        threshold_graph(np.ones((2, 3)), 0.1)


def test_support_graph():
    assert len(support_graph(np.eye(3), 1e-8)) == 0
    theta = np.eye(2)
    theta[0, 1] = theta[1, 0] = 1e-12
    assert len(support_graph(theta, 1e-8)) == 0
    theta[0, 1] = theta[1, 0] = -0.3
    assert support_graph(theta, 1e-8).pairs() == {(0, 1)}


def test_edge_set_validation():
    with pytest.raises(InputError):
        EdgeSet(3, [0], [0])
    with pytest.raises(InputError):
        EdgeSet(3, [0], [3])
    g = EdgeSet.from_pairs(4, [(2, 1), (1, 2), (0, 3)])
    assert g.pairs() == {(1, 2), (0, 3)}
    assert g == EdgeSet.from_pairs(4, [(0, 3), (1, 2)])


def test_connected_components():
    g = EdgeSet.from_pairs(4, [(0, 1), (1, 2)])
    assert connected_components(g).blocks == ((0, 1, 2), (3,))
    assert connected_components(EdgeSet.from_pairs(3, [])).blocks == ((0,), (1,), (2,))


def test_connected_components_match_transitive_closure():
    rng = np.random.default_rng(4)
    p = 200
    adj = np.triu(rng.random((p, p)) < 0.004, k=1)
    adj = adj | adj.T
    rows, cols = np.nonzero(np.triu(adj, k=1))
    partition = connected_components(EdgeSet(p, rows, cols))

    reach = adj | np.eye(p, dtype=bool)
    while True:
        grown = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        if np.array_equal(grown, reach):
            break
        reach = grown
    labels = partition.labels()
    np.testing.assert_array_equal(labels[:, None] == labels[None, :], reach)

    count, _ = csgraph_components(csr_matrix(adj), directed=False)
    assert partition.num_blocks == count


def test_vertex_partition_canonical_form():
    a = _partition(3, (0, 1), (2,))
    b = _partition(3, (2,), (1, 0))
    assert partition_equal(a, b)
    assert a == b
    assert not partition_equal(a, _partition(3, (0,), (1, 2)))
    assert VertexPartition.from_labels([7, 7, 3]) == a


def test_vertex_partition_validation():
    with pytest.raises(InputError):
        _partition(3, (0, 1))
    with pytest.raises(InputError):
        _partition(3, (0, 1), (1, 2))


def test_vertex_partition_report():
    part = _partition(4, (0, 2), (1,), (3,))
    assert part.sizes() == [2, 1, 1]
    assert part.singletons() == frozenset({1, 3})
    assert part.to_dict() == {'num_components': 3, 'components': [[1, 3], [2], [4]], 'sizes': [2, 1, 1]}


def test_threshold_partition_is_deterministic():
    assert partition_equal(threshold_partition(S3, 0.15), threshold_partition(S3, 0.15))


def test_partition_refines():
    assert partition_refines(_partition(3, (0,), (1,), (2,)), _partition(3, (0, 1), (2,)))
    assert not partition_refines(_partition(3, (0, 1), (2,)), _partition(3, (0, 2), (1,)))
    assert partition_refines(threshold_partition(S3, 0.25), threshold_partition(S3, 0.15))
    with pytest.raises(DimensionMismatchError):
        partition_refines(_partition(2, (0, 1)), _partition(3, (0, 1, 2)))


def test_critical_lambdas():
    assert critical_lambdas(S3) == [0.1, 0.2, 0.5]
    equal = np.full((4, 4), 0.4)
    np.fill_diagonal(equal, 1.0)
    assert critical_lambdas(equal) == [0.4]


def test_disjoint_set():
    ds = DisjointSet(5)
    assert ds.union(0, 1)
    assert ds.union(3, 4)
    assert not ds.union(1, 0)
    assert ds.union(1, 4)
    assert ds.count == 2
    assert ds.max_size == 4
    assert ds.find(0) == ds.find(3)
    assert ds.find(2) != ds.find(0)


def test_critical_lambda_sweep_tracks_threshold_partition():
    rng = np.random.default_rng(5)
    S = rng.standard_normal((12, 12))
    S = (S + S.T) / 2
    seen = []
    for lam, ds, batch in critical_lambda_sweep(S):
        expected = threshold_partition(S, lam)
        assert VertexPartition.from_labels(ds.labels()) == expected
        assert np.all(np.abs(S[batch[:, 0], batch[:, 1]]) == lam)
        seen.append(lam)
    assert seen == sorted(critical_lambdas(S) + [0.0], reverse=True)


def test_lambda_for_max_component():
    assert lambda_for_max_component(S3, 2) == 0.2
    assert lambda_for_max_component(S3, 3) == 0.0
    assert lambda_for_max_component(S3, 5) == 0.0
    assert lambda_for_max_component(S3, 1) == 0.5
    with pytest.raises(InputError):
        lambda_for_max_component(S3, 0)


def test_lambda_for_max_component_respects_the_bound():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((30, 25))
    S = np.corrcoef(X, rowvar=False)
    for p_max in (1, 3, 8, 20):
        lam = lambda_for_max_component(S, p_max)
        assert threshold_partition(S, lam).max_size() <= p_max
        smaller = [c for c in critical_lambdas(S) if c < lam]
        if smaller:
            assert threshold_partition(S, smaller[-1]).max_size() > p_max


def test_node_screen():
    assert node_screen(S3, 0.3) == frozenset({2})
    assert node_screen(S3, 0.5) == frozenset({0, 1, 2})
    assert node_screen(S3, 0.7) == frozenset({0, 1, 2})
    assert node_screen(S3, 0.15) == frozenset()


def test_component_profile():
    profile = component_profile(S3, [0.6, 0.15, 0.3])
    assert profile.lambdas == (0.15, 0.3, 0.6)
    assert profile.sizes_per_lambda == ((3,), (2, 1), (1, 1, 1))
    assert component_profile(S3, [0.9]).sizes_per_lambda == ((1, 1, 1),)
    with pytest.raises(InputError):
        component_profile(S3, [])


def test_auto_lambda_grid():
    rng = np.random.default_rng(7)
    S = np.corrcoef(rng.standard_normal((40, 30)), rowvar=False)
    crit = critical_lambdas(S)

    grid = auto_lambda_grid(S, p_max=30)
    assert grid
    assert grid == sorted(grid, reverse=True)
    assert set(grid) <= set(crit)
    assert len(grid) == int(np.ceil(0.02 * len(crit)))

    # p_max = 1 leaves only values at or above the largest entry
    assert auto_lambda_grid(S, p_max=1) == [max(crit)]

    floor = lambda_for_max_component(S, 5)
    wide = auto_lambda_grid(S, p_max=5, top_fraction=1.0)
    assert min(wide) == floor
    assert len(auto_lambda_grid(S, p_max=5, top_fraction=1.0, num=4)) == 4

    with pytest.raises(InputError):
        auto_lambda_grid(S, p_max=5, top_fraction=0.0)


def test_auto_lambda_grid_profile_is_nested():
    rng = np.random.default_rng(8)
    S = np.corrcoef(rng.standard_normal((40, 30)), rowvar=False)
    profile = component_profile(S, auto_lambda_grid(S, p_max=30, top_fraction=0.5, num=10))
    counts = [len(sizes) for sizes in profile.sizes_per_lambda]
    assert all(sum(sizes) == 30 for sizes in profile.sizes_per_lambda)
    assert counts == sorted(counts)


def _random_symmetric(seed, p):
    rng = np.random.default_rng(seed)
    B = rng.uniform(-1, 1, (p, p))
    return SymMatrix((B + B.T) / 2)


def test_partition_is_constant_between_critical_values():
    rng = np.random.default_rng(7)
    S = _random_symmetric(7, 15)
    crit = critical_lambdas(S)
    for _ in range(100):
        k = int(rng.integers(len(crit) - 1))
        lo, hi = crit[k], crit[k + 1]
        lam = rng.uniform(lo, hi)
        if lo < lam < hi:
            assert threshold_partition(S, lam) == threshold_partition(S, (lo + hi) / 2)


def test_edge_sets_shrink_as_lambda_grows():
    rng = np.random.default_rng(8)
    S = _random_symmetric(8, 12)
    for _ in range(50):
        lam_small, lam_large = sorted(rng.uniform(0, 1, 2))
        assert threshold_graph(S, lam_large).pairs() <= threshold_graph(S, lam_small).pairs()
    # an entry equal to lambda is not an edge
    w = critical_lambdas(S)[-1]
    assert len(threshold_graph(S, w)) == 0
    assert len(threshold_graph(S, np.nextafter(w, 0))) >= 1


def test_profile_of_planted_blocks():
    instance = generate(SynthSpec(K=8, p1=25, seed=3))
    S = instance.S
    grid = auto_lambda_grid(S, p_max=25)
    profile = component_profile(S, grid + [float(np.max(critical_lambdas(S)))])
    counts = [len(sizes) for sizes in profile.sizes_per_lambda]
    assert all(sum(sizes) == S.p for sizes in profile.sizes_per_lambda)
    # lambdas ascend, so the component count may only grow
    assert counts == sorted(counts)
    assert profile.sizes_per_lambda[-1] == (1,) * S.p
    assert threshold_partition(S, instance.lambda_II).num_blocks == 8

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structfl.errors import ConfigError, DomainError
from structfl.graph import (ClientGraph, dump_adjacency, gaussian_kernel_adjacency, gcn_propagate,
                            load_adjacency, propagation_matrix, readout, structure_learn,
                            top_k_from_gamma)
from structfl.numerics import weighted_mean


def random_graph(rng, n, density=0.3):
    a = rng.random((n, n)) * (rng.random((n, n)) < density)
    return ClientGraph(np.maximum(a, a.T))


def test_kernel_weights():
    d = np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 1.0], [0.5, 1.0, 0.0]])
    g = gaussian_kernel_adjacency(d, sigma=0.5, threshold=0.0)
    assert g.adjacency[0, 1] == 1.0
    assert g.adjacency[0, 2] == pytest.approx(math.exp(-1))
    assert np.all(np.diag(g.adjacency) == 0)
    cut = gaussian_kernel_adjacency(d, sigma=0.5, threshold=0.5)
    assert cut.adjacency[0, 2] == 0.0 and cut.adjacency[1, 2] == 0.0
    assert cut.adjacency[0, 1] == 1.0


def test_kernel_sigma_must_be_positive():
    with pytest.raises(ConfigError):
        gaussian_kernel_adjacency(np.zeros((2, 2)), 0.0, 0.1)


def test_graph_validation():
    with pytest.raises(DomainError):
        ClientGraph(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(DomainError):
        ClientGraph(np.array([[0.0, 1.0], [0.0, 0.0]]))
    g = ClientGraph(np.array([[5.0, 1.0], [1.0, 5.0]]))
    assert g.adjacency[0, 0] == 0.0


def test_propagation_examples():
    np.testing.assert_array_equal(propagation_matrix(ClientGraph.empty(4)), np.eye(4))
    np.testing.assert_array_equal(propagation_matrix(ClientGraph.complete(2)), np.full((2, 2), 0.5))
    np.testing.assert_allclose(propagation_matrix(ClientGraph.complete(5)), np.full((5, 5), 0.2),
                               atol=1e-15)


def test_gcn_examples(rng):
    u = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(gcn_propagate(propagation_matrix(ClientGraph.empty(4)), u, 5), u)
    const = np.tile(rng.normal(size=3), (4, 1))
    p = propagation_matrix(random_graph(rng, 4, 0.9))
    np.testing.assert_array_equal(gcn_propagate(p, const, 7), const)
    out = gcn_propagate(propagation_matrix(ClientGraph.complete(2)), np.array([[0.0], [2.0]]), 1)
    np.testing.assert_array_equal(out, [[1.0], [1.0]])
    np.testing.assert_array_equal(gcn_propagate(p, u, 0), u)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1), st.integers(0, 4), st.integers(0, 4))
def test_propagation_properties(n, seed, a, b):
    rng = np.random.default_rng(seed)
    p = propagation_matrix(random_graph(rng, n, rng.random()))
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12) and np.all(p >= 0)
    u = rng.normal(size=(n, 4))
    out = gcn_propagate(p, u, a + b)
    lo, hi = u.min(axis=0), u.max(axis=0)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)
    np.testing.assert_allclose(out, gcn_propagate(p, gcn_propagate(p, u, a), b), atol=1e-10, rtol=0)


def test_readout_examples():
    np.testing.assert_allclose(readout(np.array([[1.0], [3.0]]), [4, 4]), [2.0])
    np.testing.assert_array_equal(readout(np.ones((3, 1)), [2, 3, 5]), [1.0])
    np.testing.assert_allclose(readout(np.array([[0.0], [4.0]]), [1, 3]), [3.0])
    with pytest.raises(DomainError):
        readout(np.zeros((0, 2)), [])


def test_readout_matches_weighted_mean(rng):
    u = rng.normal(size=(6, 5))
    sizes = [3, 1, 4, 1, 5, 9]
    np.testing.assert_array_equal(readout(u, sizes), weighted_mean(list(u), sizes))


def test_structure_learn_identical_rows():
    g = structure_learn(np.ones((5, 3)), 1.0, 2)
    a = g.adjacency
    # each row keeps its two lowest-index peers; max-symmetrization adds the reverse edges
    kept = np.zeros((5, 5))
    for i in range(5):
        peers = [j for j in range(5) if j != i][:2]
        kept[i, peers] = 1.0
    np.testing.assert_array_equal(a, np.maximum(kept, kept.T))


def test_structure_learn_two_nodes():
    v = np.array([[0.0, 1.0], [2.0, 1.0]])
    a = structure_learn(v, 2.0, 1).adjacency
    assert a[0, 1] == a[1, 0] == pytest.approx(math.exp(-4 / 2))
    assert a[0, 0] == 0


def test_structure_learn_recovers_clusters():
    rng = np.random.default_rng(0)
    v = np.vstack([rng.normal(0, 0.3, (5, 6)) + 2, rng.normal(0, 0.3, (5, 6)) - 2])
    d = ((v[:, None] - v[None]) ** 2).sum(-1)
    tau = np.median(d[~np.eye(10, dtype=bool)])
    a = structure_learn(v, tau, 4).adjacency
    block = np.zeros((10, 10))
    block[:5, :5] = block[5:, 5:] = 1
    assert (a * block).sum() / a.sum() >= 0.9


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 15), st.integers(0, 2**32 - 1), st.data())
def test_structure_learn_properties(n, seed, data):
    k = data.draw(st.integers(1, n - 1))
    v = np.random.default_rng(seed).normal(size=(n, 4))
    a = structure_learn(v, 8.0, k).adjacency
    np.testing.assert_array_equal(a, a.T)
    assert np.all(np.diag(a) == 0) and np.all(a >= 0)
    nnz = (a > 0).sum(axis=1)
    assert np.all((nnz >= k) & (nnz <= n - 1))


def test_structure_learn_errors():
    with pytest.raises(ConfigError):
        structure_learn(np.zeros((3, 2)), 0.0, 1)
    with pytest.raises(ConfigError):
        structure_learn(np.zeros((3, 2)), 1.0, 3)


def test_top_k_from_gamma():
    assert top_k_from_gamma(0.2, 20) == 4
    assert top_k_from_gamma(0.01, 20) == 1
    assert top_k_from_gamma(1.0, 20) == 19


def test_adjacency_dump_roundtrip(rng):
    g = random_graph(rng, 6, 0.6)
    text = dump_adjacency(g)
    rows = text.splitlines()
    assert len(rows) == 6 and all(len(r.split()) == 6 for r in rows)
    back = load_adjacency(text)
    np.testing.assert_allclose(back.adjacency, g.adjacency, rtol=1e-8)
    assert float(f"{float(rows[0].split()[1]):.9g}") == float(rows[0].split()[1])

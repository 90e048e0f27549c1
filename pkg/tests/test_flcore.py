import numpy as np
import pytest

from fedavg_oracle import fedavg as oracle_fedavg
from structfl.config import ExperimentConfig, StrategyConfig
from structfl.errors import DimensionError
from structfl.flcore import (FederationState, aggregate_fedavg, aggregate_sfl, build_data,
                             client_update, effective_lambda, initial_state, minibatch_indices,
                             run_experiment, run_round)
from structfl.graph import ClientGraph
from structfl.numerics import RngStream


def small_cfg(kind="fedavg", **kw):
    base = dict(n_clients=4, samples_per_class=20, n_classes=4, dim=4, shards_k=2, rounds=3,
                batch_size=16, seed=11)
    base.update(kw)
    return ExperimentConfig(**base).replace(**{"strategy.kind": kind})


def with_strategy(cfg, **kw):
    return cfg.replace(**{f"strategy.{k}": v for k, v in kw.items()})


@pytest.mark.parametrize("t, lam0, expected", [(0, 0.1, 0.0), (3, 0.1, 0.1), (0, 0.0, 0.0), (7, 0.0, 0.0)])
def test_effective_lambda(t, lam0, expected):
    assert effective_lambda(t, lam0) == expected


def test_minibatches_cover_each_pass():
    idx = list(minibatch_indices(10, 4, 3, RngStream(0, "batch")))
    assert [len(i) for i in idx] == [4, 4, 2]
    assert sorted(np.concatenate(idx).tolist()) == list(range(10))


def _client_and_state(kind="sfl", **kw):
    cfg = small_cfg(kind, **kw)
    data = build_data(cfg)
    return cfg, data, initial_state(cfg, data)


def test_client_update_reduces_to_sgd_from_w():
    cfg, data, st = _client_and_state("sfl")
    strat = StrategyConfig(kind="sfl", s_local_steps=1, eta=0.3, init_local_from_global=True)
    rng = np.random.default_rng(0)
    v, w, u = (rng.normal(size=data.spec.n_params) for _ in range(3))
    c = data.clients[0]
    got = client_update(c, v, w, u, strat, 0.0, RngStream(1, "batch", 0, 0), data.spec, 16)
    (idx,) = list(minibatch_indices(c.n_train, 16, 1, RngStream(1, "batch", 0, 0)))
    from structfl.models import Model, grad
    expected = w - 0.3 * grad(Model(data.spec, w), c.train.take(idx))
    np.testing.assert_array_equal(got, expected)


def test_client_update_eta_zero():
    cfg, data, st = _client_and_state("sfl")
    strat = StrategyConfig(kind="sfl", eta=0.0)
    v = st.v[0] + 1.0
    got = client_update(data.clients[0], v, st.w, st.u[0], strat, 0.1, RngStream(0), data.spec)
    np.testing.assert_array_equal(got, v)


def test_client_update_prox_pulls_toward_w():
    cfg, data, st = _client_and_state("sfl")
    # both anchors pull, so eta * 2 * lambda must stay below 1 to avoid overshooting w
    strat = StrategyConfig(kind="sfl", eta=1e-7, s_local_steps=1)
    rng = np.random.default_rng(3)
    v = rng.normal(size=data.spec.n_params)
    w = np.zeros_like(v)
    new = client_update(data.clients[0], v, w, w, strat, 1e6, RngStream(0), data.spec)
    assert np.linalg.norm(new - w) < np.linalg.norm(v - w)


def test_client_update_dimension_error():
    cfg, data, st = _client_and_state("sfl")
    with pytest.raises(DimensionError):
        client_update(data.clients[0], np.zeros(3), st.w, st.u[0], StrategyConfig(), 0.0,
                      RngStream(0), data.spec)


def test_fedprox_uses_mu_on_w_only():
    cfg, data, st = _client_and_state("fedprox")
    rng = np.random.default_rng(5)
    w = rng.normal(size=data.spec.n_params)
    far_u = w + 100.0
    a = client_update(data.clients[0], w, w, far_u, StrategyConfig(kind="fedprox", mu_prox=0.5),
                      0.0, RngStream(0), data.spec)
    b = client_update(data.clients[0], w, w, w, StrategyConfig(kind="fedprox", mu_prox=0.5),
                      0.0, RngStream(0), data.spec)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("rows, sizes, expected", [
    ([[1.0], [1.0], [1.0]], [2, 3, 5], [1.0]),
    ([[0.0], [2.0]], [1, 1], [1.0]),
    ([[4.0, -1.0]], [9], [4.0, -1.0]),
])
def test_aggregate_fedavg(rows, sizes, expected):
    np.testing.assert_allclose(aggregate_fedavg(np.array(rows), sizes), expected, rtol=1e-15)


def _state_with(graph, v):
    cfg, data, st = _client_and_state("sfl")
    st.v = v
    st.graph = graph
    return st


def test_aggregate_sfl_empty_graph():
    rng = np.random.default_rng(1)
    _, data, st0 = _client_and_state("sfl")
    v = rng.normal(size=st0.v.shape)
    st = _state_with(ClientGraph.empty(4), v)
    u, w = aggregate_sfl(st, StrategyConfig(kind="sfl", m_gcn_steps=3))
    np.testing.assert_array_equal(u, v)
    np.testing.assert_array_equal(w, aggregate_fedavg(v, st.sizes))


def test_aggregate_sfl_complete_graph():
    rng = np.random.default_rng(2)
    _, _, st0 = _client_and_state("sfl")
    v = rng.normal(size=st0.v.shape)
    st = _state_with(ClientGraph.complete(4), v)
    u, w = aggregate_sfl(st, StrategyConfig(kind="sfl", m_gcn_steps=1))
    np.testing.assert_allclose(u, np.tile(v.mean(axis=0), (4, 1)), atol=1e-14)
    assert len(set(st.sizes)) == 1
    np.testing.assert_allclose(w, v.mean(axis=0), atol=1e-14)
    u0, _ = aggregate_sfl(st, StrategyConfig(kind="sfl", m_gcn_steps=0))
    np.testing.assert_array_equal(u0, v)


def test_aggregate_sfl_graph_size_mismatch():
    _, _, st = _client_and_state("sfl")
    st.graph = ClientGraph.empty(3)
    with pytest.raises(DimensionError):
        aggregate_sfl(st, StrategyConfig())


def test_local_only_never_moves_w():
    res = run_experiment(small_cfg("local_only", rounds=4), keep_trajectory=True)
    for w in res.trajectory[1:]:
        np.testing.assert_array_equal(w, res.trajectory[0])


def test_fedavg_matches_oracle_bitwise():
    cfg = with_strategy(small_cfg("fedavg", rounds=3), eta=0.2, s_local_steps=4)
    res = run_experiment(cfg, keep_trajectory=True)
    ref = oracle_fedavg(build_data(cfg), cfg.seed, 3, 0.2, 4, cfg.batch_size)
    for a, b in zip(res.trajectory, ref):
        np.testing.assert_array_equal(a, b)


def test_sfl_reduces_to_fedavg_exactly():
    base = small_cfg("fedavg", rounds=4, graph="none")
    fa = run_experiment(base, keep_trajectory=True)
    sfl = run_experiment(with_strategy(base, kind="sfl", lambda0=0.0, init_local_from_global=True),
                         keep_trajectory=True)
    for a, b in zip(fa.trajectory, sfl.trajectory):
        np.testing.assert_array_equal(a, b)


def test_sfl_complete_graph_tracks_fedavg():
    base = small_cfg("fedavg", rounds=4, graph="complete")
    fa = run_experiment(base, keep_trajectory=True)
    sfl = run_experiment(with_strategy(base, kind="sfl", lambda0=0.0, init_local_from_global=True,
                                       m_gcn_steps=8), keep_trajectory=True)
    for a, b in zip(fa.trajectory, sfl.trajectory):
        np.testing.assert_allclose(a, b, atol=1e-8, rtol=0)


def test_personalized_models_persist():
    cfg = small_cfg("sfl", rounds=1)
    data = build_data(cfg)
    st = initial_state(cfg, data)
    st.v = st.v + np.arange(4)[:, None]
    zero_eta = StrategyConfig(kind="sfl", eta=0.0)
    new, _ = run_round(st, zero_eta, cfg.seed, batch_size=cfg.batch_size)
    np.testing.assert_array_equal(new.v, st.v)
    reset = StrategyConfig(kind="sfl", eta=0.0, init_local_from_global=True)
    new, _ = run_round(st, reset, cfg.seed, batch_size=cfg.batch_size)
    np.testing.assert_array_equal(new.v, np.tile(st.w, (4, 1)))


def test_warmup_round_has_no_prox_contribution():
    cfg = small_cfg("sfl", rounds=1)
    data = build_data(cfg)
    st = initial_state(cfg, data)
    st.u = st.u + 5.0
    st.w = st.w - 3.0
    a, rec_a = run_round(st, with_strategy(cfg, lambda0=10.0).strategy, cfg.seed)
    b, rec_b = run_round(st, with_strategy(cfg, lambda0=0.0).strategy, cfg.seed)
    assert rec_a.lam == 0.0
    np.testing.assert_array_equal(a.v, b.v)
    st.t = 1
    c, rec_c = run_round(st, with_strategy(cfg, lambda0=10.0).strategy, cfg.seed)
    assert rec_c.lam == 10.0
    assert not np.array_equal(c.v, a.v)


def test_parallel_equals_sequential():
    cfg = small_cfg("sfl_star", rounds=3)
    a = run_experiment(cfg, workers=1)
    b = run_experiment(cfg, workers=4)
    np.testing.assert_array_equal(a.final_state.v, b.final_state.v)
    np.testing.assert_array_equal(a.final_state.w, b.final_state.w)
    np.testing.assert_array_equal(a.graph_final.adjacency, b.graph_final.adjacency)


def test_zero_rounds_only_initial():
    res = run_experiment(small_cfg("sfl", rounds=0))
    assert res.records == [] and res.initial.round == 0
    assert res.final is res.initial
    assert res.summaries()["test"]["accuracy"].n_clients == 4


@pytest.mark.parametrize("kind", ["local_only", "fedavg", "fedprox", "sfl", "sfl_star"])
@pytest.mark.parametrize("task", ["classification", "traffic"])
def test_all_strategies_stay_finite(kind, task):
    cfg = ExperimentConfig(task=task, n_clients=10, rounds=10, seed=2).replace(**{"strategy.kind": kind})
    res = run_experiment(cfg)
    assert np.all(np.isfinite(res.final_state.v)) and np.all(np.isfinite(res.final_state.w))
    assert len(res.records) == 10
    assert res.records[0].lam == 0.0


def test_sfl_star_learns_graph_after_warmup():
    cfg = small_cfg("sfl_star", rounds=3, n_clients=4)
    res = run_experiment(cfg)
    assert not res.graph_initial.adjacency.any()
    assert res.graph_final.adjacency.any()
    one = run_experiment(cfg.replace(rounds=1))
    assert not one.graph_final.adjacency.any()


def test_data_independent_of_strategy():
    hashes = {run_experiment(small_cfg(k, rounds=0)).dataset_hash
              for k in ("fedavg", "sfl", "sfl_star", "local_only")}
    assert len(hashes) == 1

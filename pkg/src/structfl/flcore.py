"""Federated round engine.

Each round: clients run ``s`` proximal SGD steps (in parallel or in order,
with identical results), the server aggregates by strategy, and for
``sfl_star`` the relation graph is re-learned from the local models.

Random streams are keyed by ``(purpose, client, round)`` under the experiment
seed, so data and mini-batch order never depend on the strategy or on client
scheduling.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import datagen, kernels
from .config import ExperimentConfig, StrategyConfig
from .datagen import ClientDataset
from .errors import DimensionError
from .graph import (ClientGraph, gaussian_kernel_adjacency, gcn_propagate, propagation_matrix,
                    readout, structure_learn, top_k_from_gamma)
from .metrics import CohortSummary, TaskMetrics, cohort_summary
from .models import Model, ModelSpec, evaluate, init_model, prox_update
from .numerics import RngStream, weighted_mean

SPLITS = ("val", "test")


def effective_lambda(t: int, lambda0: float) -> float:
    """Regularization weight in round ``t``: zero during the warm-up round."""
    return lambda0 if t > 0 else 0.0


def minibatch_indices(n: int, batch_size: int, steps: int, stream: RngStream):
    """Yield ``steps`` index arrays, sampling without replacement within each
    pass over the data and reshuffling when a pass is used up."""
    perm = stream.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos >= n:
            perm = stream.permutation(n)
            pos = 0
        yield perm[pos : pos + batch_size]
        pos += batch_size


def anchor_weights(cfg: StrategyConfig, lam: float) -> tuple[float, float]:
    """Prox weights ``(on w, on u)`` for the strategy."""
    if cfg.kind in ("sfl", "sfl_star"):
        return lam, lam
    if cfg.kind == "fedprox":
        return cfg.mu_prox, 0.0
    return 0.0, 0.0


def client_update(client: ClientDataset, v, w, u, cfg: StrategyConfig, lam: float,
                  stream: RngStream, spec: ModelSpec, batch_size: int = 128,
                  return_loss: bool = False):
    """Run ``cfg.s_local_steps`` proximal mini-batch steps for one client."""
    v, w, u = (np.asarray(a, dtype=np.float64) for a in (v, w, u))
    if not (v.shape == w.shape == u.shape == (spec.n_params,)):
        raise DimensionError(f"parameter vectors must all have length {spec.n_params}")
    params = (w if cfg.start_from_global else v).copy()
    lam_w, lam_u = anchor_weights(cfg, lam)
    losses = []
    train = client.train
    if train is not None:
        y = train.targets
        for idx in minibatch_indices(len(train), batch_size, cfg.s_local_steps, stream):
            loss, g = kernels.loss_grad(params, train.inputs[idx], y[idx], spec.input_dim,
                                        spec.hidden_dim, spec.output_dim, spec.classify, True)
            losses.append(loss)
            params = prox_update(params, g, cfg.eta, lam_w, w, lam_u, u)
    if return_loss:
        return params, (float(np.mean(losses)) if losses else float("nan"))
    return params


def aggregate_fedavg(v_list, sizes) -> np.ndarray:
    return weighted_mean(list(v_list), [float(s) for s in sizes])


@dataclass
class FederationState:
    t: int
    w: np.ndarray
    v: np.ndarray
    u: np.ndarray
    graph: ClientGraph
    clients: list[ClientDataset]
    spec: ModelSpec

    @property
    def n(self) -> int:
        return len(self.clients)

    @property
    def sizes(self) -> list[int]:
        return [max(1, c.n_train) for c in self.clients]


def aggregate_sfl(state: FederationState, cfg: StrategyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Smooth the local models over the graph ``m`` times, then read out ``w``."""
    if state.graph.n != state.n:
        raise DimensionError(f"graph has {state.graph.n} nodes for {state.n} clients")
    u = gcn_propagate(propagation_matrix(state.graph), state.v, cfg.m_gcn_steps)
    return u, readout(u, state.sizes)


def learn_graph(v_stack, cfg: StrategyConfig) -> ClientGraph:
    n = v_stack.shape[0]
    tau = cfg.tau
    if cfg.tau_relative:
        d = kernels.sq_dists(v_stack)[~np.eye(n, dtype=bool)]
        med = float(np.median(d))
        if med > 0:
            tau = cfg.tau * med
    return structure_learn(v_stack, tau, top_k_from_gamma(cfg.gamma, n))


@dataclass
class RoundRecord:
    round: int
    lam: float
    train_loss: list[float]
    metrics: dict[str, list[TaskMetrics]]
    wall_time: float = 0.0


def serving_params(state: FederationState, cfg: StrategyConfig, i: int) -> np.ndarray:
    return state.v[i] if cfg.personalized else state.w


def evaluate_clients(state: FederationState, cfg: StrategyConfig) -> dict[str, list[TaskMetrics]]:
    out = {}
    for split in SPLITS:
        rows = []
        for i, c in enumerate(state.clients):
            batch = c.split(split)
            if batch is None:
                rows.append(TaskMetrics())
                continue
            model = Model(state.spec, serving_params(state, cfg, i))
            rows.append(evaluate(model, batch, (c.norm_mean, c.norm_std)))
        out[split] = rows
    return out


def run_round(state: FederationState, cfg: StrategyConfig, root_seed: int, *,
              batch_size: int = 128, workers: int = 1,
              executor: ThreadPoolExecutor | None = None) -> tuple[FederationState, RoundRecord]:
    t0 = time.perf_counter()
    t = state.t
    lam = effective_lambda(t, cfg.lambda0)

    def work(i):
        stream = RngStream(root_seed, "batch", i, t)
        return client_update(state.clients[i], state.v[i], state.w, state.u[i], cfg, lam,
                             stream, state.spec, batch_size, return_loss=True)

    if executor is not None or workers > 1:
        pool = executor or ThreadPoolExecutor(max_workers=workers)
        try:
            results = list(pool.map(work, range(state.n)))
        finally:
            if executor is None:
                pool.shutdown()
    else:
        results = [work(i) for i in range(state.n)]
    v = np.stack([r[0] for r in results])
    losses = [r[1] for r in results]

    new = replace(state, v=v)
    if cfg.kind in ("fedavg", "fedprox"):
        w = aggregate_fedavg(v, state.sizes)
        new = replace(new, w=w, u=np.tile(w, (state.n, 1)))
    elif cfg.kind in ("sfl", "sfl_star"):
        u, w = aggregate_sfl(new, cfg)
        new = replace(new, u=u, w=w)
    if cfg.kind == "sfl_star" and t > 0 and t % cfg.structure_every == 0:
        new = replace(new, graph=learn_graph(v, cfg))
    new.t = t + 1
    metrics = evaluate_clients(new, cfg)
    return new, RoundRecord(t + 1, lam, losses, metrics, time.perf_counter() - t0)


# -- experiment ---------------------------------------------------------------

@dataclass
class ExperimentData:
    clients: list[ClientDataset]
    spec: ModelSpec
    graph: ClientGraph
    true_graph: ClientGraph | None = None
    field_coords: np.ndarray | None = None


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    """Generate client datasets and the predefined graph. Depends on the seed
    and data keys only, never on the strategy."""
    seed = cfg.seed
    n = cfg.n_clients
    if cfg.task == "classification":
        pool = datagen.gen_classification(cfg.n_classes, cfg.dim, cfg.samples_per_class,
                                          cfg.cluster_spread, RngStream(seed, "data"))
        stream = RngStream(seed, "partition")
        if cfg.planted_blocks > 1:
            clients = datagen.planted_block_partition(pool, cfg.planted_blocks, n, cfg.shards_k,
                                                      stream)
        else:
            clients = datagen.shard_partition(pool, n, cfg.shards_k, stream)
        spec = ModelSpec("classification", cfg.dim, cfg.n_classes, cfg.hidden_dim)
        true_graph = (ClientGraph.blocks([n // cfg.planted_blocks] * cfg.planted_blocks)
                      if cfg.planted_blocks > 1 else None)
        coords = None
    else:
        field_ = datagen.gen_sensor_field(n, RngStream(seed, "field"))
        true_graph = gaussian_kernel_adjacency(field_, cfg.sigma, cfg.threshold)
        series = datagen.gen_traffic_series(field_, true_graph, cfg.t_len, cfg.noise,
                                            RngStream(seed, "series"), alpha=cfg.alpha,
                                            beta=cfg.beta, period=cfg.period)
        clients = datagen.windowize(series, cfg.window, cfg.horizon)
        spec = ModelSpec("forecasting", cfg.window, cfg.horizon, cfg.hidden_dim)
        coords = field_.coords
    return ExperimentData(clients, spec, initial_graph(cfg, true_graph), true_graph, coords)


def initial_graph(cfg: ExperimentConfig, true_graph: ClientGraph | None) -> ClientGraph:
    n = cfg.n_clients
    choice = cfg.graph
    if choice == "auto":
        if cfg.strategy.kind == "sfl_star" or true_graph is None:
            choice = "none"
        else:
            choice = "block" if cfg.task == "classification" else "kernel"
    if choice == "none":
        return ClientGraph.empty(n)
    if choice == "complete":
        return ClientGraph.complete(n)
    return true_graph


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    initial: RoundRecord
    records: list[RoundRecord]
    graph_initial: ClientGraph
    graph_final: ClientGraph
    final_state: FederationState
    dataset_hash: str
    backend: str = kernels.BACKEND
    wall_time: float = 0.0
    trajectory: list[np.ndarray] = field(default_factory=list)

    @property
    def final(self) -> RoundRecord:
        return self.records[-1] if self.records else self.initial

    def summaries(self, record: RoundRecord | None = None) -> dict[str, dict[str, CohortSummary]]:
        rec = record or self.final
        out = {}
        for split, rows in rec.metrics.items():
            per_metric = {}
            names = [k for k in ("accuracy", "mae", "rmse", "mape") if getattr(rows[0], k) is not None]
            for name in names:
                vals = [getattr(r, name) for r in rows if getattr(r, name) is not None]
                vals = [v for v in vals if v == v]
                if vals:
                    per_metric[name] = cohort_summary(vals, higher_is_better=(name == "accuracy"))
            out[split] = per_metric
        return out

    def primary_metric(self) -> str:
        return "accuracy" if self.config.task == "classification" else "mae"


def initial_state(cfg: ExperimentConfig, data: ExperimentData) -> FederationState:
    """Every client starts from one shared initialization."""
    v0 = init_model(data.spec, RngStream(cfg.seed, "init")).params
    n = len(data.clients)
    return FederationState(0, v0.copy(), np.tile(v0, (n, 1)), np.tile(v0, (n, 1)),
                           data.graph, data.clients, data.spec)


def initial_record(state: FederationState, cfg: StrategyConfig) -> RoundRecord:
    losses = []
    for i, c in enumerate(state.clients):
        if c.train is None:
            losses.append(float("nan"))
            continue
        p = serving_params(state, cfg, i)
        loss, _ = kernels.loss_grad(p, c.train.inputs, c.train.targets, state.spec.input_dim,
                                    state.spec.hidden_dim, state.spec.output_dim,
                                    state.spec.classify, False)
        losses.append(loss)
    return RoundRecord(0, 0.0, losses, evaluate_clients(state, cfg))


def run_experiment(cfg: ExperimentConfig, *, workers: int | None = None,
                   keep_trajectory: bool = False, data: ExperimentData | None = None) -> ExperimentResult:
    cfg.validate()
    t0 = time.perf_counter()
    data = data or build_data(cfg)
    state = initial_state(cfg, data)
    strat = cfg.strategy
    init_rec = initial_record(state, strat)
    records = []
    trajectory = [state.w.copy()] if keep_trajectory else []
    n_workers = workers or cfg.workers
    executor = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        for _ in range(cfg.rounds):
            state, rec = run_round(state, strat, cfg.seed, batch_size=cfg.batch_size,
                                   executor=executor)
            if not (np.all(np.isfinite(state.v)) and np.all(np.isfinite(state.w))):
                raise FloatingPointError(f"parameters diverged in round {rec.round}")
            records.append(rec)
            if keep_trajectory:
                trajectory.append(state.w.copy())
    finally:
        if executor is not None:
            executor.shutdown()
    return ExperimentResult(cfg, init_rec, records, data.graph, state.graph, state,
                            datagen.dataset_hash(data.clients), kernels.BACKEND,
                            time.perf_counter() - t0, trajectory)

"""Synthetic benchmarks: shard-partitioned Gaussian classification and
graph-diffused sensor time series windowed for forecasting."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .models import Batch
from .numerics import RngStream

DEFAULT_RATIOS = (0.7, 0.2, 0.1)


@dataclass(frozen=True)
class DataPool:
    """Classification: ``inputs`` (M x dim) with integer ``labels``.
    Traffic: ``inputs`` holds the series, one row per node (N x t_len)."""

    inputs: np.ndarray
    labels: np.ndarray | None
    task: str

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class ClientDataset:
    client_id: int
    train: Batch | None
    val: Batch | None
    test: Batch | None
    norm_mean: float = 0.0
    norm_std: float = 1.0
    group: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_train(self) -> int:
        return 0 if self.train is None else len(self.train)

    @property
    def size(self) -> int:
        return sum(0 if b is None else len(b) for b in (self.train, self.val, self.test))

    def split(self, name: str) -> Batch | None:
        return getattr(self, name)


@dataclass(frozen=True)
class SensorField:
    coords: np.ndarray

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        d = np.sqrt((diff * diff).sum(axis=-1))
        return np.maximum(d, d.T)


def _check_ratios(ratios):
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}",
                          "ratios")


def _split_counts(n: int, ratios) -> tuple[int, int, int]:
    n_train = min(n, math.floor(ratios[0] * n + 0.5))
    n_val = min(n - n_train, math.floor(ratios[1] * n + 0.5))
    return n_train, n_val, n - n_train - n_val


def _batch(x, y) -> Batch | None:
    return Batch(x, y) if len(x) else None


# -- classification ---------------------------------------------------------

def gen_classification(n_classes: int, dim: int, samples_per_class: int, cluster_spread: float,
                       stream: RngStream) -> DataPool:
    """Balanced Gaussian clusters: class means ~ N(0, I), samples ~ N(mean, spread^2 I)."""
    if n_classes < 2 or dim < 2:
        raise ConfigError("need n_classes >= 2 and dim >= 2", "n_classes" if n_classes < 2 else "dim")
    if samples_per_class < 1 or cluster_spread < 0:
        raise ConfigError("samples_per_class must be >= 1 and cluster_spread >= 0")
    means = stream.normal((n_classes, dim))
    noise = stream.normal((n_classes, samples_per_class, dim))
    x = (means[:, None, :] + cluster_spread * noise).reshape(-1, dim)
    y = np.repeat(np.arange(n_classes), samples_per_class)
    return DataPool(x, y, "classification")


def stratified_split(client_id: int, x, y, stream: RngStream, ratios=DEFAULT_RATIOS,
                     group: int = 0) -> ClientDataset:
    """Per-label 70/20/10 draw so that every split mirrors the client's label mix."""
    _check_ratios(ratios)
    parts = ([], [], [])
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        idx = idx[stream.permutation(idx.size)]
        a, b, _ = _split_counts(idx.size, ratios)
        parts[0].append(idx[:a])
        parts[1].append(idx[a : a + b])
        parts[2].append(idx[a + b :])
    batches = []
    for p in parts:
        sel = np.concatenate(p) if p else np.array([], dtype=int)
        batches.append(_batch(x[sel], y[sel]))
    return ClientDataset(client_id, *batches, group=group)


def shard_partition(pool: DataPool, n_clients: int, k_shards: int, stream: RngStream,
                    ratios=DEFAULT_RATIOS, first_id: int = 0, group: int = 0) -> list[ClientDataset]:
    """Sort by label, cut into ``n_clients * k_shards`` equal contiguous shards,
    deal ``k_shards`` random shards to each client, then split each client."""
    if n_clients < 1:
        raise ConfigError("n_clients must be >= 1", "n_clients")
    if k_shards < 1:
        raise ConfigError("shards_k must be >= 1", "shards_k")
    n_shards = n_clients * k_shards
    m = len(pool)
    if m % n_shards:
        raise ConfigError(
            f"pool size {m} must be divisible by n_clients*shards_k = {n_clients}*{k_shards} = {n_shards}",
            "shards_k",
        )
    shard_len = m // n_shards
    order = np.argsort(pool.labels, kind="stable")
    perm = stream.permutation(n_shards)
    clients = []
    for c in range(n_clients):
        shard_ids = np.sort(perm[c * k_shards : (c + 1) * k_shards])
        idx = np.concatenate([order[s * shard_len : (s + 1) * shard_len] for s in shard_ids])
        clients.append(stratified_split(first_id + c, pool.inputs[idx], pool.labels[idx], stream,
                                        ratios, group=group))
        clients[-1].meta["shards"] = [int(s) for s in shard_ids]
    return clients


def planted_block_partition(pool: DataPool, n_blocks: int, n_clients: int, k_shards: int,
                            stream: RngStream, ratios=DEFAULT_RATIOS) -> list[ClientDataset]:
    """Split classes into ``n_blocks`` disjoint contiguous subsets and shard each
    subset over its own group of ``n_clients / n_blocks`` clients."""
    n_classes = int(pool.labels.max()) + 1
    if n_blocks < 1 or n_clients % n_blocks or n_classes % n_blocks:
        raise ConfigError(
            f"planted_blocks={n_blocks} must divide both n_clients={n_clients} and n_classes={n_classes}",
            "planted_blocks",
        )
    per_block = n_clients // n_blocks
    cls_per_block = n_classes // n_blocks
    clients = []
    for b in range(n_blocks):
        mask = (pool.labels >= b * cls_per_block) & (pool.labels < (b + 1) * cls_per_block)
        sub = DataPool(pool.inputs[mask], pool.labels[mask], pool.task)
        clients += shard_partition(sub, per_block, k_shards, stream, ratios,
                                   first_id=b * per_block, group=b)
    return clients


# -- traffic ----------------------------------------------------------------

def gen_sensor_field(n_nodes: int, stream: RngStream) -> SensorField:
    if n_nodes < 2:
        raise ConfigError("n_nodes must be >= 2", "n_clients")
    return SensorField(stream.uniform((n_nodes, 2)))


def gen_traffic_series(field: SensorField, graph, t_len: int, noise: float, stream: RngStream, *,
                       alpha: float = 0.5, beta: float = 0.4, period: float = 24.0,
                       season_amp: float = 1.0, base_level: float = 50.0) -> DataPool:
    """Graph-diffused AR(1) series with a node-scaled seasonal drive.

    The deviation ``y`` follows ``y(t+1) = alpha y(t) + beta P y(t) + s_i sin(2 pi t / period) + eps``
    with ``P`` the row-normalized adjacency; each node adds its own level.
    """
    adj = np.asarray(getattr(graph, "adjacency", graph), dtype=np.float64)
    n = field.n
    if adj.shape != (n, n):
        raise ConfigError(f"graph has {adj.shape[0]} nodes but field has {n}", "n_clients")
    if t_len < 200:
        raise ConfigError(f"t_len must be >= 200, got {t_len}", "t_len")
    if noise < 0:
        raise ConfigError("noise must be >= 0", "noise")
    deg = adj.sum(axis=1, keepdims=True)
    p = np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)
    amp = season_amp * stream.uniform(n, 0.5, 1.5)
    level = base_level + 10.0 * stream.uniform(n)
    eps = stream.normal((t_len, n)) * noise
    y = np.empty((t_len, n))
    y[0] = stream.normal(n)
    for t in range(t_len - 1):
        drive = amp * math.sin(2.0 * math.pi * t / period)
        y[t + 1] = alpha * y[t] + beta * (p @ y[t]) + drive + eps[t]
    return DataPool((y + level).T.copy(), None, "traffic")


def n_windows(t_len: int, window: int, horizon: int) -> int:
    return t_len - window - horizon + 1


def windowize(pool: DataPool, window: int = 12, horizon: int = 1,
              ratios: Sequence[float] = DEFAULT_RATIOS) -> list[ClientDataset]:
    """Sliding windows per node, chronological 70/20/10 split, z-score fit on
    the train inputs of that node.

    Test windows whose inputs would overlap a train target are dropped, so no
    train target lies after a test input.
    """
    _check_ratios(ratios)
    series = np.asarray(pool.inputs, dtype=np.float64)
    t_len = series.shape[1]
    if window < 1 or horizon < 1:
        raise ConfigError("window and horizon must be >= 1", "window" if window < 1 else "horizon")
    if t_len <= window + horizon:
        raise ConfigError(f"series of length {t_len} too short for window={window} + horizon={horizon}",
                          "t_len")
    count = n_windows(t_len, window, horizon)
    starts = np.arange(count)
    n_tr, n_va, _ = _split_counts(count, ratios)
    tr, va, te = starts[:n_tr], starts[n_tr : n_tr + n_va], starts[n_tr + n_va :]
    if n_tr:
        last_train_target = tr[-1] + window + horizon - 1
        te = te[te > last_train_target]
    cols_in = np.arange(window)
    cols_out = np.arange(window, window + horizon)
    clients = []
    for i, x in enumerate(series):
        def cut(s):
            return x[s[:, None] + cols_in], x[s[:, None] + cols_out]

        xi_tr, yi_tr = cut(tr)
        if n_tr:
            mean = float(xi_tr.mean())
            std = max(float(xi_tr.std()), 1e-8)
        else:
            mean, std = 0.0, 1.0
        batches = []
        for s in (tr, va, te):
            xi, yi = cut(s)
            batches.append(_batch((xi - mean) / std, (yi - mean) / std))
        clients.append(ClientDataset(i, *batches, norm_mean=mean, norm_std=std))
        clients[-1].meta["window_starts"] = {"train": tr, "val": va, "test": te}
    return clients


# -- inspection ---------------------------------------------------------------

def export_pool(pool: DataPool) -> str:
    """Render a pool as a comma-separated table with one header line.

    Classification: ``f0,...,f{d-1},label`` per sample. Traffic: ``t,node0,...``
    per timestep.
    """
    if pool.task == "traffic":
        header = ["t"] + [f"node{i}" for i in range(pool.inputs.shape[0])]
        rows = [[str(t)] + [repr(float(v)) for v in col] for t, col in enumerate(pool.inputs.T)]
    else:
        header = [f"f{i}" for i in range(pool.inputs.shape[1])] + ["label"]
        rows = [[repr(float(v)) for v in x] + [str(int(y))] for x, y in zip(pool.inputs, pool.labels)]
    return "\n".join(",".join(r) for r in [header] + rows) + "\n"


def dataset_hash(clients: Sequence[ClientDataset]) -> str:
    h = hashlib.sha256()
    for c in clients:
        h.update(str(c.client_id).encode())
        for b in (c.train, c.val, c.test):
            if b is None:
                h.update(b"-")
                continue
            h.update(np.ascontiguousarray(b.inputs).tobytes())
            h.update(np.ascontiguousarray(b.targets).tobytes())
        h.update(np.float64([c.norm_mean, c.norm_std]).tobytes())
    return h.hexdigest()[:16]

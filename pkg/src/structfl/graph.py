"""Client relation graphs and server-side graph aggregation.

The server aggregation is propagation-only: node attributes (client
parameter vectors) are smoothed ``m`` times with the row-stochastic operator
``D^-1 (A + I)`` and read out by a size-weighted mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, DomainError
from .numerics import weighted_mean


@dataclass(frozen=True)
class ClientGraph:
    adjacency: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got {a.shape}")
        if not np.all(np.isfinite(a)) or (a < 0).any():
            raise DomainError("adjacency entries must be finite and non-negative")
        np.fill_diagonal(a, 0.0)
        if self.symmetric and not np.array_equal(a, a.T):
            raise DomainError("adjacency flagged symmetric but A != A^T")
        a.flags.writeable = False
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def empty(cls, n: int) -> "ClientGraph":
        return cls(np.zeros((n, n)))

    @classmethod
    def complete(cls, n: int) -> "ClientGraph":
        return cls(np.ones((n, n)))

    @classmethod
    def blocks(cls, sizes) -> "ClientGraph":
        """Unweighted block-diagonal graph: complete within each block."""
        n = int(sum(sizes))
        a = np.zeros((n, n))
        start = 0
        for s in sizes:
            a[start : start + s, start : start + s] = 1.0
            start += s
        return cls(a)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])


def gaussian_kernel_adjacency(field, sigma: float, threshold: float) -> ClientGraph:
    """``exp(-d^2 / sigma^2)`` weights, zeroed below ``threshold`` and on the diagonal.

    ``field`` is a SensorField or a square distance matrix.
    """
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}", "sigma")
    if not 0 <= threshold < 1:
        raise ConfigError(f"threshold must lie in [0, 1), got {threshold}", "threshold")
    dist = np.asarray(getattr(field, "distances", field), dtype=np.float64)
    w = np.exp(-(dist * dist) / (sigma * sigma))
    w[w < threshold] = 0.0
    # exact symmetry regardless of rounding in the distance matrix
    w = np.maximum(w, w.T)
    return ClientGraph(w)


def propagation_matrix(g: ClientGraph) -> np.ndarray:
    a = g.adjacency + np.eye(g.n)
    return a / a.sum(axis=1, keepdims=True)


def gcn_propagate(p_matrix, stack, m: int) -> np.ndarray:
    """Return ``P^m U`` by ``m`` successive smoothing steps."""
    p = np.asarray(p_matrix, dtype=np.float64)
    u = np.asarray(stack, dtype=np.float64)
    if m < 0:
        raise DomainError("m must be >= 0")
    if u.ndim != 2 or p.shape != (u.shape[0], u.shape[0]):
        raise DimensionError(f"propagation matrix {p.shape} vs stack {u.shape}")
    return kernels.propagate(p, u, int(m))


def readout(stack, sizes) -> np.ndarray:
    """Size-weighted mean of the stacked rows."""
    u = np.asarray(stack, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] == 0:
        raise DomainError("readout of an empty stack")
    if len(sizes) != u.shape[0]:
        raise DimensionError(f"{len(sizes)} sizes for {u.shape[0]} rows")
    if any(s < 1 for s in sizes):
        raise DomainError("client sizes must be >= 1")
    return weighted_mean(list(u), [float(s) for s in sizes])


def top_k_from_gamma(gamma: float, n: int) -> int:
    return min(n - 1, max(1, round(gamma * n)))


def structure_learn(stack, tau: float, top_k: int) -> ClientGraph:
    """Sparse proximity graph over the rows of ``stack``.

    Similarities ``exp(-|v_i - v_j|^2 / tau)`` are truncated to the ``top_k``
    largest per row (ties to the lower index), then symmetrized with an
    elementwise max.
    """
    v = np.asarray(stack, dtype=np.float64)
    if v.ndim != 2:
        raise DimensionError("stack must be a matrix")
    n = v.shape[0]
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}", "tau")
    if not 1 <= top_k < n:
        raise ConfigError(f"top_k must satisfy 1 <= top_k < N={n}, got {top_k}", "top_k")
    sim = np.exp(-kernels.sq_dists(v) / tau)
    kept = np.zeros((n, n))
    for i in range(n):
        others = np.array([j for j in range(n) if j != i])
        # stable sort on -sim keeps the lower index first among ties
        order = others[np.argsort(-sim[i, others], kind="stable")]
        chosen = order[:top_k]
        kept[i, chosen] = sim[i, chosen]
    return ClientGraph(np.maximum(kept, kept.T))


def dump_adjacency(g: ClientGraph) -> str:
    """N lines of N space-separated values, 9 significant digits."""
    return "".join(" ".join(f"{x:.9g}" for x in row) + "\n" for row in g.adjacency)


def load_adjacency(text: str) -> ClientGraph:
    rows = [[float(x) for x in line.split()] for line in text.splitlines() if line.strip()]
    a = np.array(rows, dtype=np.float64)
    return ClientGraph(a, symmetric=bool(np.array_equal(a, a.T)))

"""Distance and averaging primitives plus reproducible random streams.

Random numbers come from numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence``. A stream is identified by the root seed and a
``(tag, client, round)`` id; the tag is folded into a 32-bit integer with
CRC-32 so that the derivation is identical on every platform and never
depends on Python's salted ``hash``.
"""
from __future__ import annotations

import math
import zlib
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError

__all__ = ["RngStream", "draw", "l2_distance", "weighted_mean", "as_param_vector"]


def as_param_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionError(f"expected a 1-D parameter vector, got shape {vec.shape}")
    return vec


def l2_distance(a, b) -> float:
    a = as_param_vector(a)
    b = as_param_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    diff = a - b
    return math.sqrt(float(np.dot(diff, diff)))


def weighted_mean(vectors: Sequence, weights: Sequence[float]) -> np.ndarray:
    """Return ``sum(w_i * v_i) / sum(w_i)``.

    Weights are normalized first and the accumulation runs over the inputs in
    the order given, so the result is bit-reproducible and one-hot weights
    return the selected vector exactly.
    """
    if len(vectors) == 0:
        raise DomainError("weighted_mean of an empty list")
    if len(vectors) != len(weights):
        raise DimensionError(f"{len(vectors)} vectors but {len(weights)} weights")
    total = 0.0
    for wt in weights:
        wt = float(wt)
        if not wt >= 0.0:
            raise DomainError(f"negative or NaN weight {wt}")
        total += wt
    if total <= 0.0:
        raise DomainError("weights sum to zero")
    first = as_param_vector(vectors[0])
    acc = np.zeros_like(first)
    for vec, wt in zip(vectors, weights):
        vec = as_param_vector(vec)
        if vec.shape != first.shape:
            raise DimensionError(f"length mismatch: {vec.size} vs {first.size}")
        acc += (float(wt) / total) * vec
    return acc


def _tag_code(tag: str | int) -> int:
    if isinstance(tag, int):
        return tag
    return zlib.crc32(tag.encode("utf-8"))


class RngStream:
    """Named random stream derived from ``root_seed`` and ``(tag, client, round)``.

    Two streams built from the same arguments produce identical draws; the
    state advances with every call, so the n-th call on equal streams also
    agrees.
    """

    def __init__(self, root_seed: int, tag: str | int = "root", client: int = 0, round: int = 0):
        if root_seed < 0 or client < 0 or round < 0:
            raise DomainError("seed, client and round must be non-negative")
        self.root_seed = int(root_seed)
        self.stream_id = (tag, int(client), int(round))
        seq = np.random.SeedSequence(
            entropy=self.root_seed, spawn_key=(_tag_code(tag), int(client), int(round))
        )
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self) -> str:
        return f"RngStream(root_seed={self.root_seed}, stream_id={self.stream_id!r})"

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def draw(stream: RngStream, distribution: str, size=None):
    """Draw from ``uniform01``, ``standard_normal`` or ``permutation``.

    For ``permutation`` the ``size`` argument is the permutation length.
    """
    if distribution == "uniform01":
        return stream.uniform(size)
    if distribution == "standard_normal":
        return stream.normal(size)
    if distribution == "permutation":
        if size is None:
            raise DomainError("permutation needs a length")
        return stream.permutation(int(size))
    raise DomainError(f"unknown distribution {distribution!r}")

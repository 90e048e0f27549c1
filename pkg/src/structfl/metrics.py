"""Forecasting errors, accuracy and per-client cohort summaries."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class TaskMetrics:
    """Either ``accuracy`` (percent) or the regression triple is populated.

    ``mape`` is NaN when every target is within epsilon of zero.
    """

    mae: float | None = None
    rmse: float | None = None
    mape: float | None = None
    accuracy: float | None = None

    def as_dict(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def regression_metrics(pred, target, epsilon: float = 1e-8) -> TaskMetrics:
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.size == 0:
        raise DomainError("regression_metrics on empty input")
    if p.shape != t.shape:
        raise DimensionError(f"{p.size} predictions vs {t.size} targets")
    err = p - t
    mae = float(np.mean(np.abs(err)))
    rmse = math.sqrt(float(np.mean(err * err)))
    mask = np.abs(t) > epsilon
    if mask.any():
        mape = 100.0 * float(np.mean(np.abs(err[mask]) / np.abs(t[mask])))
    else:
        mape = math.nan
    return TaskMetrics(mae=mae, rmse=rmse, mape=mape)


@dataclass(frozen=True)
class CohortSummary:
    mean: float
    std: float
    best5: float
    worst5: float
    n_clients: int


def cohort_summary(values, higher_is_better: bool = True) -> CohortSummary:
    """Mean, population std, and means of the best and worst ceil(5% N) clients.

    Ties are resolved by client index (stable sort).
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    n = vals.size
    if n == 0:
        raise DomainError("cohort_summary of no clients")
    k = max(1, math.ceil(0.05 * n - 1e-12))
    order = np.argsort(-vals if higher_is_better else vals, kind="stable")
    best = vals[order[:k]]
    worst = vals[order[::-1][:k]]
    return CohortSummary(
        mean=float(vals.mean()),
        std=float(vals.std()),
        best5=float(best.mean()),
        worst5=float(worst.mean()),
        n_clients=n,
    )

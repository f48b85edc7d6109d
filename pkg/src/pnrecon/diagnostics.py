"""Goodness-of-fit entropies, photon-number moments and restart-ensemble summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 50
DEFAULT_ORDERS = (1, 10, 50)


class UndefinedEntropyError(ValueError):
    """A refit probability is nonpositive at a bin with data."""


def relative_entropy(f, q) -> float:
    """Kullback-Leibler divergence ``-sum_i f_i ln(q_i / f_i)`` of refit ``q`` from data ``f``.

    Bins with ``f_i = 0`` contribute nothing. Raises
    :class:`UndefinedEntropyError` if some ``q_i <= 0`` where ``f_i > 0``.
    """
    f = np.asarray(f, dtype=float)
    q = np.asarray(q, dtype=float)
    if f.shape != q.shape:
        raise ValueError("frequencies and refit differ in length")
    mask = f > 0
    if np.any(q[mask] <= 0):
        raise UndefinedEntropyError("refit is nonpositive at a bin with data")
    fm = f[mask]
    return -math.fsum(fm * (np.log(q[mask]) - np.log(fm)))


def shannon_entropy(f) -> float:
    f = np.asarray(f, dtype=float)
    fm = f[f > 0]
    return -math.fsum(fm * np.log(fm))


def moment(p, order: int) -> float:
    """``<n^order> = sum_n n^order p_n``, accumulated as a log-sum-exp.

    ``p`` may contain negative entries (linear-inversion estimates); those
    are accumulated separately and subtracted.
    """
    if order < 1 or int(order) != order:
        raise ValueError(f"moment order must be a positive integer, got {order}")
    if order > MAX_ORDER:
        raise ValueError(f"moment order above {MAX_ORDER} is not supported")
    p = np.asarray(p, dtype=float)
    n = np.arange(p.size)

    def lse(weights):
        sel = (weights > 0) & (n > 0)
        if not np.any(sel):
            return 0.0
        logs = order * np.log(n[sel]) + np.log(weights[sel])
        top = logs.max()
        return math.exp(top) * math.fsum(np.exp(logs - top))

    return lse(p) - lse(-p)


@dataclass
class EnsembleReport:
    orders: tuple
    k_values: np.ndarray
    k_over_s: np.ndarray
    moments: np.ndarray
    average_estimate: np.ndarray
    average_moments: np.ndarray
    relative_moment_deviations: np.ndarray
    seeds: list
    converged: np.ndarray

    @property
    def spreads(self) -> dict:
        """``max - min`` of the relative moment deviations, per order."""
        dev = self.relative_moment_deviations
        return {k: float(dev[:, j].max() - dev[:, j].min()) for j, k in enumerate(self.orders)}


def aggregate_ensemble(results, orders=DEFAULT_ORDERS) -> EnsembleReport:
    """Summarise restarts against the moments of their averaged estimate.

    A single result is accepted and gives a degenerate report (all
    deviations zero).
    """
    results = list(results)
    if not results:
        raise ValueError("no reconstructions to aggregate")
    orders = tuple(int(k) for k in orders)
    estimates = np.array([r.estimate for r in results])
    average = estimates.mean(axis=0)
    average = average / average.sum()
    moments = np.array([[moment(e, k) for k in orders] for e in estimates])
    average_moments = np.array([moment(average, k) for k in orders])
    return EnsembleReport(
        orders=orders,
        k_values=np.array([r.relative_entropy for r in results]),
        k_over_s=np.array([r.k_over_s for r in results]),
        moments=moments,
        average_estimate=average,
        average_moments=average_moments,
        relative_moment_deviations=moments / average_moments - 1.0,
        seeds=[r.seed for r in results],
        converged=np.array([r.converged for r in results]),
    )

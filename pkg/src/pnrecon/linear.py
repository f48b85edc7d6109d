"""Deterministic baseline: truncated-SVD least-squares inversion of the kernel.

This is a generic linear-inversion stand-in (not pattern-function
tomography). No positivity constraint is applied, so noisy data give
negative "probabilities" -- which is what the baseline is for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pnrecon.diagnostics import UndefinedEntropyError, relative_entropy, shannon_entropy
from pnrecon.fock_kernel import ResponseKernel

DEFAULT_CUTOFF = 1e-8


@dataclass
class DeterministicResult:
    estimate: np.ndarray
    relative_entropy: float | None
    data_entropy: float
    refit: np.ndarray
    rank: int

    @property
    def negative_count(self) -> int:
        return int(np.count_nonzero(self.estimate < 0))

    @property
    def k_defined(self) -> bool:
        return self.relative_entropy is not None

    @property
    def k_over_s(self) -> float | None:
        if self.relative_entropy is None:
            return None
        return 100.0 * self.relative_entropy / self.data_entropy

    @property
    def mean(self) -> float:
        return float(np.arange(self.estimate.size) @ self.estimate)


def linear_invert(kernel: ResponseKernel, f, n_edge: int | None = None,
                  singular_cutoff: float = DEFAULT_CUTOFF) -> DeterministicResult:
    """Minimum-norm least-squares solution of ``h p = f`` on the first ``n_edge`` levels."""
    n_edge = kernel.dimension if n_edge is None else int(n_edge)
    if not 1 <= n_edge <= kernel.dimension:
        raise ValueError(f"n_edge {n_edge} outside [1, {kernel.dimension}]")
    if not 0.0 < singular_cutoff < 1.0:
        raise ValueError(f"singular_cutoff must lie in (0, 1), got {singular_cutoff}")
    f = np.asarray(f, dtype=float)
    if f.shape != (kernel.grid.count,):
        raise ValueError(f"{f.size} frequencies for {kernel.grid.count} bins")
    h = kernel.h[:, :n_edge]
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        raise np.linalg.LinAlgError("kernel has rank zero")
    keep = s >= singular_cutoff * s[0]
    raw = vt[keep].T @ ((u[:, keep].T @ f) / s[keep])
    total = math.fsum(raw)
    if not total > 0:
        raise np.linalg.LinAlgError(f"raw inversion sums to {total}; cannot normalise")
    estimate = raw / total
    q = h @ estimate
    try:
        k = relative_entropy(f, q)
    except UndefinedEntropyError:
        k = None
    return DeterministicResult(estimate, k, shannon_entropy(f), q, int(np.count_nonzero(keep)))

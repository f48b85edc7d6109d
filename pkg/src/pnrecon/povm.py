"""Resolution of identity, trusted-subspace selection and forward refits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pnrecon.fock_kernel import ResponseKernel

DEFAULT_TAU = 0.99


@dataclass(frozen=True)
class SubspaceSelection:
    n_edge: int
    threshold: float
    r_values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(len(self.r_values))


def identity_diagonal(kernel: ResponseKernel) -> np.ndarray:
    """Diagonal ``R(n)`` of the summed bin POVM elements."""
    return kernel.h.sum(axis=0)


def select_subspace(r, tau: float = DEFAULT_TAU) -> SubspaceSelection:
    """Cut the Fock space at the first level whose ``R(n)`` falls below ``tau``.

    Levels from ``n_edge`` on are dropped entirely by the estimators.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    r = np.array(r, dtype=float)
    below = np.flatnonzero(r < tau)
    n_edge = int(below[0]) if below.size else int(r.size)
    return SubspaceSelection(n_edge, float(tau), r)


def refit(kernel: ResponseKernel, p) -> np.ndarray:
    """Bin probabilities ``q_i = sum_n h[i, n] p_n`` predicted by ``p``.

    ``p`` may be shorter than the kernel dimension; missing levels count as empty.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size > kernel.dimension:
        raise ValueError(f"distribution of length {p.size} does not fit a "
                         f"{kernel.dimension}-level kernel")
    return kernel.h[:, : p.size] @ p

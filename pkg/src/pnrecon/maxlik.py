"""Maximum-likelihood photon statistics by expectation-maximisation.

For a diagonal state measured by commuting (number-diagonal) POVM elements,
the extremal equation ``R(rho) rho = rho`` reduces to the multiplicative
update

    p_n <- p_n * g_n / R(n),   g_n = sum_i f_i h[i, n] / q_i,   q = h p

followed by renormalisation. The division by ``R(n)`` makes this the EM
algorithm for data conditioned on landing inside the binned range, so the
conditional log-likelihood ``sum_i f_i ln(q_i / sum_j q_j)`` never
decreases. When the bins resolve the identity (``R == 1``) that is the
plain ``sum_i f_i ln q_i``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from pnrecon import _em
from pnrecon.diagnostics import relative_entropy, shannon_entropy
from pnrecon.fock_kernel import ResponseKernel


class IllPosedError(ValueError):
    """A bin with data has zero predicted probability: the likelihood is -inf."""


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 100_000
    tolerance: float = 1e-10
    subspace: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.subspace is not None and self.subspace < 1:
            raise ValueError("subspace must be positive")


@dataclass
class ReconstructionResult:
    estimate: np.ndarray
    relative_entropy: float
    data_entropy: float
    iterations: int
    converged: bool
    loglik_trace: np.ndarray
    refit: np.ndarray
    seed: int | None = None

    @property
    def k_over_s(self) -> float:
        """Relative entropy as a percentage of the data entropy."""
        return 100.0 * self.relative_entropy / self.data_entropy

    @property
    def mean(self) -> float:
        return float(np.arange(self.estimate.size) @ self.estimate)


def _frequencies(f, rows: int) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (rows,):
        raise ValueError(f"{f.size} frequencies for {rows} bins")
    if np.any(f < 0) or abs(math.fsum(f) - 1.0) > 1e-9:
        raise ValueError("frequencies must be nonnegative and sum to 1")
    return f


def _restricted(kernel: ResponseKernel, options: FitOptions | None) -> ResponseKernel:
    if options is None or options.subspace is None:
        return kernel
    if options.subspace > kernel.dimension:
        raise ValueError(f"subspace {options.subspace} exceeds kernel dimension {kernel.dimension}")
    return kernel.restrict(options.subspace)


def conditional_loglik(f, q) -> float:
    """``sum_i f_i ln(q_i / sum q)`` over bins with data."""
    mask = f > 0
    return float(np.dot(f[mask], np.log(q[mask])) - math.log(q.sum()))


def em_step(kernel: ResponseKernel, f, p) -> np.ndarray:
    """One multiplicative EM update of ``p`` (length = kernel dimension)."""
    h = kernel.h
    f = _frequencies(f, h.shape[0])
    p = np.asarray(p, dtype=float)
    if p.shape != (h.shape[1],):
        raise ValueError(f"distribution of length {p.size} for a {h.shape[1]}-level kernel")
    mask = f > 0
    q = h[mask] @ p
    if np.any(q <= 0):
        raise IllPosedError("a bin with counts has zero predicted probability")
    g = h[mask].T @ (f[mask] / q)
    r = kernel.identity_diag
    update = np.divide(p * g, r, out=np.zeros_like(p), where=r > 0)
    return update / update.sum()


def reconstruct(kernel: ResponseKernel, f, init, options: FitOptions | None = None,
                seed: int | None = None) -> ReconstructionResult:
    """Iterate :func:`em_step` from ``init`` until the largest change is below tolerance.

    Hitting ``max_iterations`` is reported through ``converged=False``.
    """
    options = options or FitOptions()
    kernel = _restricted(kernel, options)
    h = kernel.h
    f = _frequencies(f, h.shape[0])
    p = np.array(init, dtype=float)
    if p.shape != (kernel.dimension,):
        raise ValueError(f"initial distribution has {p.size} levels, subspace has {kernel.dimension}")
    if np.any(p <= 0):
        raise ValueError("initial distribution must be strictly positive")
    p = p / p.sum()
    mask = f > 0
    hm = np.ascontiguousarray(h[mask])
    if np.any(hm @ p <= 0):
        raise IllPosedError("a bin with counts has zero predicted probability")
    r = np.ascontiguousarray(kernel.identity_diag, dtype=float)
    try:
        p, trace, iterations, converged = _em.iterate(
            hm, np.ascontiguousarray(f[mask]), r, p, options.tolerance, options.max_iterations)
    except ValueError as exc:
        raise IllPosedError(str(exc)) from None
    q = h @ p
    return ReconstructionResult(
        estimate=p,
        relative_entropy=relative_entropy(f, q),
        data_entropy=shannon_entropy(f),
        iterations=iterations,
        converged=converged,
        loglik_trace=trace,
        refit=q,
        seed=seed,
    )


def uniform_simplex(dimension: int, seed: int) -> np.ndarray:
    """Point drawn uniformly from the probability simplex (normalised exponential spacings)."""
    e = np.random.default_rng(seed).standard_exponential(dimension)
    return e / e.sum()


def run_restarts(kernel: ResponseKernel, f, n_restarts: int, seed: int,
                 options: FitOptions | None = None, workers: int = 1) -> list[ReconstructionResult]:
    """Reconstruct from ``n_restarts`` random starts; restart ``j`` uses seed ``seed + j``."""
    if n_restarts < 1:
        raise ValueError("need at least one restart")
    options = options or FitOptions()
    dimension = options.subspace or kernel.dimension

    def one(j):
        s = seed + j
        return reconstruct(kernel, f, uniform_simplex(dimension, s), options, seed=s)

    if workers <= 1:
        return [one(j) for j in range(n_restarts)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_restarts)))

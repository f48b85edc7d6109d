"""Synthetic photon-number distributions and random-phase homodyne samplers.

All quadratures use the convention in which the vacuum has variance 1/2
(``Phi_0(x) = exp(-x**2) / sqrt(pi)``), shared with :mod:`pnrecon.fock_kernel`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from pnrecon.fock_kernel import D_MAX, OscillatorGrid, loss_matrix, oscillator_pdf_table

logger = logging.getLogger(__name__)

TAIL_MASS = 1e-9
VACUUM_SIGMA = math.sqrt(0.5)
SAMPLE_CHUNK = 1 << 16
TABLE_REFINEMENT = 8


class TailMassError(ValueError):
    """The requested truncation drops more probability than allowed."""

    def __init__(self, message, required_dimension=None):
        super().__init__(message)
        self.required_dimension = required_dimension


def check_distribution(p, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("a photon distribution is a nonempty 1-D array")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("photon probabilities must be finite and nonnegative")
    if abs(math.fsum(p) - 1.0) > atol:
        raise ValueError(f"photon probabilities sum to {math.fsum(p)}, not 1")
    return p


def _truncate(weights: np.ndarray, dimension: int, name: str) -> np.ndarray:
    """Cut an (effectively complete) unnormalised distribution to ``dimension`` levels."""
    if dimension < 1:
        raise ValueError("dimension must be positive")
    total = math.fsum(weights)
    tails = np.cumsum(weights[::-1])[::-1] / total
    tail = float(tails[dimension]) if dimension < weights.size else 0.0
    if tail >= TAIL_MASS:
        ok = np.flatnonzero(tails < TAIL_MASS)
        required = int(ok[0]) if ok.size else int(weights.size)
        raise TailMassError(
            f"{name}: {tail:.3g} of the probability lies at n >= {dimension}; "
            f"need dimension >= {required}", required)
    p = weights[:dimension].copy()
    return p / math.fsum(p)


def _from_mode(mode: int, log_mode: float, length: int, ratio) -> np.ndarray:
    """Fill ``w[n]`` outward from ``w[mode]`` using ``w[n+1] = w[n] * ratio(n)``."""
    w = np.zeros(length)
    w[mode] = math.exp(log_mode)
    for n in range(mode, length - 1):
        w[n + 1] = w[n] * ratio(n)
    for n in range(mode - 1, -1, -1):
        w[n] = w[n + 1] / ratio(n)
    return w


def coherent_pn(mean: float, dimension: int) -> np.ndarray:
    """Poisson photon statistics of a coherent state, truncated to ``dimension`` levels."""
    if not mean > 0:
        raise ValueError(f"mean photon number must be positive, got {mean}")
    length = max(dimension, int(mean + 40 * math.sqrt(mean) + 100)) + 1
    mode = int(math.floor(mean))
    log_mode = -mean + mode * math.log(mean) - math.lgamma(mode + 1)
    w = _from_mode(mode, log_mode, length, lambda n: mean / (n + 1))
    return _truncate(w, dimension, "coherent state")


def thermal_pn(mean: float, dimension: int) -> np.ndarray:
    """Bose-Einstein (geometric) photon statistics."""
    if not mean > 0:
        raise ValueError(f"mean photon number must be positive, got {mean}")
    q = mean / (1.0 + mean)
    length = max(dimension, int(math.log(1e-30) / math.log(q)) + 1) + 1
    n = np.arange(length)
    w = (1.0 / (1.0 + mean)) * q ** n
    return _truncate(w, dimension, "thermal state")


def squeezed_vacuum_pn(squeeze: float, dimension: int) -> np.ndarray:
    """Photon statistics of squeezed vacuum: even levels only, mean ``sinh(r)**2``."""
    if not squeeze > 0:
        raise ValueError(f"squeezing parameter must be positive, got {squeeze}")
    t2 = math.tanh(squeeze) ** 2
    pairs = int(math.log(1e-30) / math.log(t2)) + 1 if t2 > 0 else 1
    length = max(dimension, 2 * pairs + 2) + 1
    w = np.zeros(length)
    w[0] = 1.0 / math.cosh(squeeze)
    for m in range(0, (length - 1) // 2):
        w[2 * m + 2] = w[2 * m] * t2 * (2 * m + 1) / (2 * m + 2)
    return _truncate(w, dimension, "squeezed vacuum")


def displaced_squeezed_pn(alpha: float, squeeze: float, dimension: int) -> np.ndarray:
    """Photon statistics of ``D(alpha) S(r)|0>`` for real ``alpha`` and ``r``.

    The state is squeezed along the quadrature that carries the displacement
    (amplitude squeezing for ``r > 0``, phase squeezing for ``r < 0``),
    matching :func:`sample_gaussian_quadratures`. Computed numerically in a
    padded Fock space; no closed form is used.
    """
    guess = alpha * alpha + math.sinh(squeeze) ** 2
    size = int(max(dimension, guess + 20 * math.sqrt(guess + 1) + 60 * (1 + abs(squeeze)))) + 60
    vac = np.zeros(size)
    if squeeze != 0:
        t = math.tanh(squeeze)
        vac[0] = 1.0 / math.sqrt(math.cosh(squeeze))
        for m in range(0, (size - 1) // 2):
            # c_{2m+2} / c_{2m} = -tanh(r) * sqrt((2m+1)(2m+2)) / (2(m+1))
            vac[2 * m + 2] = -vac[2 * m] * t * math.sqrt((2 * m + 1) * (2 * m + 2)) / (2 * (m + 1))
    else:
        vac[0] = 1.0
    a = np.diag(np.sqrt(np.arange(1, size)), k=1)
    state = expm(alpha * (a.T - a)) @ vac
    w = state * state
    # the outermost levels feel the truncated ladder operators
    w = w[: size - 30]
    return _truncate(w, dimension, "displaced squeezed state")


def degrade(p, eta: float) -> np.ndarray:
    """Photon statistics after binomial loss with survival probability ``eta``."""
    p = np.asarray(p, dtype=float)
    return loss_matrix(p.size, eta) @ p


@dataclass(frozen=True)
class QuadratureHistogram:
    grid: OscillatorGrid
    counts: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.grid.count,):
            raise ValueError(f"{counts.size} counts for {self.grid.count} bins")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        if self.total <= 0:
            raise ValueError("histogram is empty")
        return self.counts / self.total


def make_histogram(samples, grid: OscillatorGrid) -> QuadratureHistogram:
    """Bin samples into half-open bins ``[edge_i, edge_{i+1})``; out-of-range samples are dropped."""
    samples = np.asarray(samples, dtype=float).ravel()
    edges = grid.edges
    idx = np.searchsorted(edges, samples, side="right") - 1
    inside = (idx >= 0) & (idx < grid.count)
    dropped = int(samples.size - np.count_nonzero(inside))
    if dropped:
        logger.warning("dropped %d of %d samples outside [%g, %g)", dropped, samples.size,
                       edges[0], edges[-1])
    counts = np.bincount(idx[inside], minlength=grid.count)
    return QuadratureHistogram(grid, counts, dropped)


def auto_grid(samples, dx: float) -> OscillatorGrid:
    """Smallest symmetric grid of ``dx`` bins that contains every sample."""
    reach = float(np.max(np.abs(samples)))
    return OscillatorGrid.symmetric(dx * (math.floor(reach / dx) + 1), dx)


def quadrature_density(p, eta: float, x) -> np.ndarray:
    """Phase-averaged quadrature density of ``p`` seen through efficiency ``eta``."""
    pd = degrade(p, eta)
    return pd @ oscillator_pdf_table(x, pd.size)


def _chunked(n_samples: int, seed: int, draw):
    out = np.empty(n_samples)
    for c, start in enumerate(range(0, n_samples, SAMPLE_CHUNK)):
        stop = min(start + SAMPLE_CHUNK, n_samples)
        out[start:stop] = draw(np.random.default_rng(seed + c), stop - start)
    return out


def sample_quadratures(p, eta: float, n_samples: int, seed: int,
                       grid_hint=None, dx: float = 0.1) -> np.ndarray:
    """Draw random-phase homodyne outcomes for the photon distribution ``p``.

    Inverse-CDF sampling on a table with step ``dx / 8`` spanning
    ``grid_hint`` (default: the classical turning points of the highest
    occupied level) widened by six vacuum standard deviations. Chunk ``c``
    of ``SAMPLE_CHUNK`` draws uses seed ``seed + c``.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    p = check_distribution(p)
    if p.size > D_MAX:
        raise ValueError(f"distribution longer than {D_MAX} levels")
    pd = degrade(p, eta)
    occupied = int(np.flatnonzero(pd > 1e-18)[-1]) + 1
    if grid_hint is None:
        reach = math.sqrt(2 * occupied + 1)
        grid_hint = (-reach, reach)
    lo = grid_hint[0] - 6 * VACUUM_SIGMA
    hi = grid_hint[1] + 6 * VACUUM_SIGMA
    step = dx / TABLE_REFINEMENT
    xs = lo + step * np.arange(int(math.ceil((hi - lo) / step)) + 1)
    density = pd[:occupied] @ oscillator_pdf_table(xs, occupied)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * step)])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    cdf, xs = cdf[keep], xs[keep]
    return _chunked(int(n_samples), int(seed), lambda rng, n: np.interp(rng.random(n), cdf, xs))


def sample_gaussian_quadratures(alpha: float, squeeze: float, eta: float,
                                n_samples: int, seed: int) -> np.ndarray:
    """Random-phase homodyne outcomes for a displaced squeezed state.

    Phase uniform, then Gaussian with mean ``sqrt(2 eta) alpha cos(theta)`` and
    variance ``eta (e^{-2r} cos^2 + e^{2r} sin^2) / 2 + (1 - eta) / 2``.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    if n_samples < 1:
        raise ValueError("need at least one sample")

    def draw(rng, n):
        theta = rng.uniform(0.0, 2 * math.pi, n)
        c2 = np.cos(theta) ** 2
        var = 0.5 * eta * (math.exp(-2 * squeeze) * c2 + math.exp(2 * squeeze) * (1 - c2)) + 0.5 * (1 - eta)
        mean = math.sqrt(2 * eta) * alpha * np.cos(theta)
        return mean + np.sqrt(var) * rng.standard_normal(n)

    return _chunked(int(n_samples), int(seed), draw)

"""Number-basis POVM elements for binned random-phase homodyne detection.

A bin centred at ``x_i`` of width ``dx`` contributes, for every Fock level
``n``, the probability

    h[i, n] = dx * sum_k w_k(n, eta) * Phi_k(x_i)

where ``Phi_k = psi_k**2`` is the squared harmonic-oscillator wavefunction
(vacuum variance 1/2) and ``w_k(n, eta)`` are binomial loss weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

D_MAX = 200
K_MAX = 200
FLUSH_BELOW = 1e-300

_PI_QUARTER = math.pi ** -0.25


@dataclass(frozen=True)
class OscillatorGrid:
    """Uniform quadrature bins, identified by their centres."""

    centers: np.ndarray
    width: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim != 1 or centers.size == 0:
            raise ValueError("grid needs at least one bin centre")
        if not (self.width > 0 and math.isfinite(self.width)):
            raise ValueError(f"bin width must be positive, got {self.width}")
        if centers.size > 1:
            steps = np.diff(centers)
            if np.any(steps <= 0):
                raise ValueError("bin centres must be strictly increasing")
            if np.max(np.abs(steps - self.width)) > 1e-12 * max(self.width, np.max(np.abs(centers))):
                raise ValueError("bin centres are not spaced by the bin width")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "width", float(self.width))

    @classmethod
    def from_range(cls, lo: float, hi: float, dx: float) -> "OscillatorGrid":
        """Bins tiling ``[lo, hi)`` exactly; ``hi - lo`` must be a multiple of ``dx``."""
        if not hi > lo:
            raise ValueError(f"empty grid range [{lo}, {hi})")
        m = (hi - lo) / dx
        count = int(round(m))
        if count < 1 or abs(m - count) > 1e-9 * max(1.0, m):
            raise ValueError(f"range [{lo}, {hi}) is not a whole number of bins of width {dx}")
        return cls(lo + dx * (np.arange(count) + 0.5), dx)

    @classmethod
    def symmetric(cls, half_width: float, dx: float) -> "OscillatorGrid":
        return cls.from_range(-half_width, half_width, dx)

    @property
    def count(self) -> int:
        return int(self.centers.size)

    @property
    def lower(self) -> float:
        return float(self.centers[0] - 0.5 * self.width)

    @property
    def upper(self) -> float:
        return float(self.centers[-1] + 0.5 * self.width)

    @property
    def edges(self) -> np.ndarray:
        return self.lower + self.width * np.arange(self.count + 1)

    def __eq__(self, other):
        if not isinstance(other, OscillatorGrid):
            return NotImplemented
        return self.width == other.width and np.array_equal(self.centers, other.centers)

    def __hash__(self):
        return hash((self.width, self.centers.tobytes()))


@dataclass(frozen=True, eq=False)
class ResponseKernel:
    """Binned POVM: ``h[i, n]`` is the probability of bin ``i`` given ``n`` photons."""

    h: np.ndarray
    grid: OscillatorGrid
    efficiency: float
    identity_diag: np.ndarray = field(default=None)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != self.grid.count:
            raise ValueError(f"kernel shape {h.shape} does not match {self.grid.count} bins")
        if np.any(h < 0):
            raise ValueError("kernel entries must be nonnegative")
        r = h.sum(axis=0) if self.identity_diag is None else np.asarray(self.identity_diag, dtype=float)
        h.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "identity_diag", r)

    @property
    def dimension(self) -> int:
        return int(self.h.shape[1])

    def restrict(self, dimension: int) -> "ResponseKernel":
        """Keep Fock levels ``0..dimension-1`` only (a hard truncation)."""
        if not 1 <= dimension <= self.dimension:
            raise ValueError(f"cannot restrict a {self.dimension}-level kernel to {dimension} levels")
        return ResponseKernel(self.h[:, :dimension], self.grid, self.efficiency,
                              self.identity_diag[:dimension])


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("quadrature positions must be finite")
    return x


def wavefunction_table(x, levels: int) -> np.ndarray:
    """Normalised oscillator wavefunctions ``psi_k(x)`` for ``k < levels``.

    Returns an array of shape ``(levels,) + x.shape``. Uses the normalised
    three-term recurrence so nothing overflows for k up to a few hundred.
    """
    x = _check_x(x)
    if levels < 1:
        raise ValueError("need at least one level")
    if levels - 1 > K_MAX:
        raise ValueError(f"levels above {K_MAX} are outside the validated range")
    out = np.empty((levels,) + x.shape)
    out[0] = _PI_QUARTER * np.exp(-0.5 * x * x)
    if levels > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(2, levels):
        out[k] = x * math.sqrt(2.0 / k) * out[k - 1] - math.sqrt((k - 1) / k) * out[k - 2]
    return out


def oscillator_pdf_table(x, levels: int) -> np.ndarray:
    """``Phi_k(x) = psi_k(x)**2`` for ``k < levels``, shape ``(levels,) + x.shape``."""
    return wavefunction_table(x, levels) ** 2


def oscillator_pdf(k: int, x: float) -> float:
    """Quadrature density of the Fock state ``|k>``.

    >>> round(oscillator_pdf(0, 0.0), 10)
    0.5641895835
    """
    if k < 0 or int(k) != k:
        raise ValueError(f"level must be a nonnegative integer, got {k}")
    if k > K_MAX:
        raise ValueError(f"level {k} exceeds the validated maximum {K_MAX}")
    if not math.isfinite(x):
        raise ValueError("quadrature position must be finite")
    return float(oscillator_pdf_table(np.array([x]), int(k) + 1)[-1, 0])


def binomial_loss_weights(n: int, eta: float) -> np.ndarray:
    """Probabilities that ``k = 0..n`` of ``n`` photons survive loss ``1 - eta``.

    Evaluated by a multiplicative recurrence started at the mode (its value
    taken from log-gamma), so neither factorials nor tiny powers of
    ``1 - eta`` can overflow or underflow the whole row.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    if n < 0 or int(n) != n:
        raise ValueError(f"photon number must be a nonnegative integer, got {n}")
    if n > D_MAX:
        raise ValueError(f"photon number {n} exceeds {D_MAX}")
    n = int(n)
    w = np.zeros(n + 1)
    if eta == 1.0:
        w[n] = 1.0
        return w
    mode = min(n, int(math.floor((n + 1) * eta)))
    log_mode = (math.lgamma(n + 1) - math.lgamma(mode + 1) - math.lgamma(n - mode + 1)
                + mode * math.log(eta) + (n - mode) * math.log1p(-eta))
    w[mode] = math.exp(log_mode)
    odds = eta / (1.0 - eta)
    for k in range(mode, n):
        w[k + 1] = w[k] * (n - k) / (k + 1) * odds
    for k in range(mode, 0, -1):
        w[k - 1] = w[k] * k / (n - k + 1) / odds
    w[w < FLUSH_BELOW] = 0.0
    return w / math.fsum(w)


def loss_matrix(dimension: int, eta: float) -> np.ndarray:
    """Upper-triangular matrix ``B[k, n] = w_k(n, eta)`` for ``k, n < dimension``."""
    b = np.zeros((dimension, dimension))
    for n in range(dimension):
        b[: n + 1, n] = binomial_loss_weights(n, eta)
    return b


def build_kernel(grid: OscillatorGrid, eta: float, dimension: int) -> ResponseKernel:
    """Response kernel of a binned, lossy, phase-averaged homodyne detector."""
    if not 1 <= dimension <= D_MAX:
        raise ValueError(f"dimension must lie in [1, {D_MAX}], got {dimension}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
    phi = oscillator_pdf_table(grid.centers, dimension).T
    if eta == 1.0:
        h = grid.width * phi
    else:
        h = grid.width * (phi @ loss_matrix(dimension, eta))
    h[h < FLUSH_BELOW] = 0.0
    return ResponseKernel(h, grid, float(eta))


def write_kernel(kernel: ResponseKernel, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV, ``x,n0,n1,...``) and a JSON sidecar next to it."""
    from pnrecon.io import atomic_write_text, fmt17

    path = Path(path)
    header = "x," + ",".join(f"n{n}" for n in range(kernel.dimension))
    lines = [header]
    for x, row in zip(kernel.grid.centers, kernel.h):
        lines.append(",".join([fmt17(x)] + [fmt17(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")
    meta = {
        "eta": kernel.efficiency,
        "dx": kernel.grid.width,
        "dimension": kernel.dimension,
        "grid_min": kernel.grid.lower,
        "grid_max": kernel.grid.upper,
    }
    sidecar = path.with_suffix(".json")
    atomic_write_text(sidecar, json.dumps(meta, indent=2) + "\n")
    return path, sidecar

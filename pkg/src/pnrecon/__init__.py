"""Photon-number distribution reconstruction from random-phase homodyne data.

Maximum-likelihood (EM) reconstruction of the diagonal density-matrix
elements, a truncated-SVD linear-inversion baseline, and the diagnostics
used to compare them.
"""

from pnrecon.fock_kernel import (
    D_MAX,
    OscillatorGrid,
    ResponseKernel,
    binomial_loss_weights,
    build_kernel,
    loss_matrix,
    oscillator_pdf,
    oscillator_pdf_table,
)
from pnrecon.povm import SubspaceSelection, identity_diagonal, refit, select_subspace
from pnrecon.states import (
    QuadratureHistogram,
    coherent_pn,
    degrade,
    displaced_squeezed_pn,
    make_histogram,
    sample_gaussian_quadratures,
    sample_quadratures,
    squeezed_vacuum_pn,
    thermal_pn,
)
from pnrecon.maxlik import (
    FitOptions,
    IllPosedError,
    ReconstructionResult,
    em_step,
    reconstruct,
    run_restarts,
    uniform_simplex,
)
from pnrecon.linear import DeterministicResult, linear_invert
from pnrecon.diagnostics import (
    EnsembleReport,
    aggregate_ensemble,
    moment,
    relative_entropy,
    shannon_entropy,
)

__version__ = "0.1.0"

"""Command-line pipeline: ``synth``, ``kernel``, ``report``, ``fit``, ``fit-det``, ``ensemble``.

Exit codes: 0 success (non-convergence included, flagged in the output),
1 usage or configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pnrecon import io as pio
from pnrecon.config import ConfigError, RunConfig
from pnrecon.diagnostics import aggregate_ensemble
from pnrecon.fock_kernel import OscillatorGrid, build_kernel, write_kernel
from pnrecon.linear import linear_invert
from pnrecon.maxlik import FitOptions, IllPosedError, reconstruct, run_restarts, uniform_simplex
from pnrecon.povm import select_subspace
from pnrecon.states import auto_grid, make_histogram, sample_gaussian_quadratures, sample_quadratures

OUTDIR_ENV = "PNRECON_OUTDIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("pnrecon")


class NoSubspaceError(pio.DataFormatError):
    """No Fock level passes the identity-resolution threshold."""


@dataclass
class Setup:
    hist: object
    meta: dict
    kernel: object
    n_edge: int
    eta: float


def _grid_for(config: RunConfig, samples) -> OscillatorGrid:
    if config.grid.min is None:
        return auto_grid(samples, config.grid.dx)
    return OscillatorGrid.from_range(config.grid.min, config.grid.max, config.grid.dx)


def _emit_config(out: Path, name: str, config: RunConfig) -> Path:
    return pio.atomic_write_text(out / f"{name}.config.json", config.dumps())


def cmd_synth(config: RunConfig, out: Path) -> dict:
    """Sample a synthetic random-phase histogram; writes ``histogram.csv`` + sidecar."""
    if config.state["kind"] == "displaced_squeezed":
        samples = sample_gaussian_quadratures(config.state["alpha"], config.state["squeeze"],
                                              config.eta, config.n_samples, config.seed)
    else:
        p = config.photon_distribution()
        hint = None if config.grid.min is None else (config.grid.min, config.grid.max)
        samples = sample_quadratures(p, config.eta, config.n_samples, config.seed,
                                     grid_hint=hint, dx=config.grid.dx)
    hist = make_histogram(samples, _grid_for(config, samples))
    pio.write_histogram(hist, out / "histogram.csv", seed=config.seed,
                        state_descriptor=config.state_descriptor(), extra={"eta": config.eta})
    _emit_config(out, "synth", config)
    return {"N": hist.total, "dropped": hist.dropped, "bins": hist.grid.count,
            "grid_min": hist.grid.lower, "grid_max": hist.grid.upper}


def _setup(histogram: Path, config: RunConfig, no_eta: bool = False) -> Setup:
    hist, meta = pio.read_histogram(histogram)
    eta = 1.0 if no_eta else config.eta
    kernel = build_kernel(hist.grid, eta, config.kernel_dimension)
    n_edge = select_subspace(kernel.identity_diag, config.tau).n_edge
    if config.max_subspace is not None:
        n_edge = min(n_edge, config.max_subspace)
    if n_edge == 0:
        raise NoSubspaceError(f"R(0) = {kernel.identity_diag[0]:.6g} is already below tau = "
                              f"{config.tau}: no trusted subspace")
    return Setup(hist, meta, kernel, n_edge, eta)


def _options(config: RunConfig, n_edge: int) -> FitOptions:
    return FitOptions(config.fit.max_iterations, config.fit.tolerance, n_edge)


def cmd_kernel(histogram: Path, config: RunConfig, out: Path) -> dict:
    s = _setup(histogram, config, config.no_eta)
    write_kernel(s.kernel, out / "kernel.csv")
    _emit_config(out, "kernel", config)
    return {"bins": s.kernel.grid.count, "dimension": s.kernel.dimension, "eta": s.eta}


def cmd_report(histogram: Path, config: RunConfig, out: Path) -> dict:
    """Identity-resolution diagonal ``R(n)`` as ``identity.csv`` (the data behind the n_edge cut)."""
    s = _setup(histogram, config, config.no_eta)
    r = s.kernel.identity_diag
    pio.write_csv(out / "identity.csv", ["n", "R"], [(n, v) for n, v in enumerate(r)])
    _emit_config(out, "report", config)
    return {"n_edge": s.n_edge, "tau": config.tau, "R_min": float(r.min())}


def cmd_fit(histogram: Path, config: RunConfig, out: Path) -> dict:
    s = _setup(histogram, config)
    f = s.hist.frequencies
    result = reconstruct(s.kernel, f, uniform_simplex(s.n_edge, config.seed),
                         _options(config, s.n_edge), seed=config.seed)
    pio.write_json(out / "fit.json", pio.result_record(result, n_edge=s.n_edge, tau=config.tau,
                                                       eta=s.eta))
    pio.write_refit(out / "refit.csv", s.hist.grid, f, result.refit)
    pio.write_csv(out / "trace.csv", ["iteration", "loglik"], enumerate(result.loglik_trace))
    _emit_config(out, "fit", config)
    return {"n_edge": s.n_edge, "K": result.relative_entropy, "S": result.data_entropy,
            "K_over_S_pct": result.k_over_s, "mean": result.mean,
            "iterations": result.iterations, "converged": result.converged}


def cmd_fit_det(histogram: Path, config: RunConfig, out: Path) -> dict:
    s = _setup(histogram, config, config.no_eta)
    f = s.hist.frequencies
    result = linear_invert(s.kernel, f, s.n_edge, config.singular_cutoff)
    extra = {"n_edge": s.n_edge, "eta": s.eta, "cutoff": config.singular_cutoff}
    if config.no_eta:
        # detected photon statistics; divide by eta afterwards to compare with the source
        extra["mean_corrected"] = result.mean / config.eta
    pio.write_json(out / "fit_det.json", pio.result_record(result, **extra))
    pio.write_refit(out / "refit_det.csv", s.hist.grid, f, result.refit)
    _emit_config(out, "fit-det", config)
    summary = {"n_edge": s.n_edge, "K": result.relative_entropy, "K_over_S_pct": result.k_over_s,
               "negative_count": result.negative_count, "mean": result.mean}
    if config.no_eta:
        summary["mean_corrected"] = extra["mean_corrected"]
    return summary


def cmd_ensemble(histogram: Path, config: RunConfig, out: Path) -> dict:
    s = _setup(histogram, config)
    results = run_restarts(s.kernel, s.hist.frequencies, config.fit.restarts, config.seed,
                           _options(config, s.n_edge), workers=config.fit.workers)
    report = aggregate_ensemble(results, config.moment_orders)
    pio.write_ensemble(out, report, results, s.n_edge)
    _emit_config(out, "ensemble", config)
    summary = {"n_edge": s.n_edge, "restarts": len(results),
               "converged": int(report.converged.sum()),
               "K_over_S_pct_median": float(np.median(report.k_over_s))}
    summary.update({f"spread{k}": v for k, v in report.spreads.items()})
    return summary


COMMANDS = {
    "synth": cmd_synth,
    "kernel": cmd_kernel,
    "report": cmd_report,
    "fit": cmd_fit,
    "fit-det": cmd_fit_det,
    "ensemble": cmd_ensemble,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _overrides(args) -> dict:
    """Map command-line flags onto config keys; ``None`` means not given."""
    return {
        ("seed",): args.seed,
        ("n_samples",): getattr(args, "n_samples", None),
        ("eta",): args.eta,
        ("tau",): args.tau,
        ("kernel_dimension",): args.kernel_dimension,
        ("max_subspace",): args.max_subspace,
        ("singular_cutoff",): getattr(args, "cutoff", None),
        ("no_eta",): True if getattr(args, "no_eta", False) else None,
        ("grid", "dx"): getattr(args, "dx", None),
        ("grid", "min"): getattr(args, "grid_min", None),
        ("grid", "max"): getattr(args, "grid_max", None),
        ("fit", "tolerance"): args.tolerance,
        ("fit", "max_iterations"): args.max_iterations,
        ("fit", "restarts"): getattr(args, "restarts", None),
        ("fit", "workers"): getattr(args, "workers", None),
    }


def resolve_config(args) -> RunConfig:
    data = RunConfig.load(args.config).to_dict() if args.config else RunConfig().to_dict()
    for path, value in _overrides(args).items():
        if value is None:
            continue
        node = data
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
    state = getattr(args, "state", None)
    if state is not None and state != data["state"].get("kind"):
        data["state"] = {"kind": state}
    for key in ("mean", "squeeze", "alpha"):
        if getattr(args, key, None) is not None:
            data["state"][key] = getattr(args, key)
    if getattr(args, "orders", None):
        data["moment_orders"] = args.orders
    return RunConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path,
                        help=f"output directory (default: ${OUTDIR_ENV} or the current directory)")
    common.add_argument("--seed", type=int)
    common.add_argument("--eta", type=float, help="detection efficiency")
    common.add_argument("--tau", type=float, help="identity-resolution threshold for n_edge")
    common.add_argument("--kernel-dimension", type=int)
    common.add_argument("--max-subspace", type=int, help="cap on n_edge")
    common.add_argument("--tolerance", type=float)
    common.add_argument("--max-iterations", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pnrecon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="sample a synthetic histogram")
    p.add_argument("--state", choices=["coherent", "thermal", "squeezed_vacuum", "displaced_squeezed"])
    p.add_argument("--mean", type=float)
    p.add_argument("--squeeze", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--dx", type=float)
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)

    for name, help_ in [("kernel", "export the response kernel"),
                        ("report", "write the identity-resolution diagonal R(n)"),
                        ("fit", "MaxLik (EM) reconstruction"),
                        ("fit-det", "truncated-SVD linear inversion baseline"),
                        ("ensemble", "MaxLik restarts from random starting points")]:
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("histogram", type=Path)
        if name in ("fit-det", "kernel", "report"):
            p.add_argument("--no-eta", action="store_true", help="build the kernel with eta = 1")
        if name == "fit-det":
            p.add_argument("--cutoff", type=float, help="relative singular-value cutoff")
        if name == "ensemble":
            p.add_argument("--restarts", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--orders", type=int, nargs="+", help="moment orders")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or Path(os.environ.get(OUTDIR_ENV, "."))
    try:
        config = resolve_config(args)
        if args.command == "synth":
            summary = cmd_synth(config, out)
        else:
            summary = COMMANDS[args.command](args.histogram, config, out)
    except ConfigError as exc:
        print(f"pnrecon: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pio.DataFormatError as exc:
        print(f"pnrecon: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IllPosedError, np.linalg.LinAlgError) as exc:
        print(f"pnrecon: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"pnrecon: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for key, value in summary.items():
        if value is None:
            value = "undefined"
        elif key.startswith("K_over_S"):
            value = format(value, ".3g")
        elif isinstance(value, float):
            value = pio.fmt6(value)
        print(f"{key}: {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

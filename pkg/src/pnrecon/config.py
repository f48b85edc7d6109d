"""Run configuration: one JSON file, round-trips losslessly, defaults always written out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from pnrecon import states
from pnrecon.fock_kernel import D_MAX

STATE_PARAMS = {
    "coherent": ("mean",),
    "thermal": ("mean",),
    "squeezed_vacuum": ("squeeze",),
    "displaced_squeezed": ("alpha", "squeeze"),
}


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    """``min``/``max`` of ``None`` mean: smallest symmetric grid holding all samples."""

    min: float | None = None
    max: float | None = None
    dx: float = 0.1


@dataclass
class FitConfig:
    tolerance: float = 1e-10
    max_iterations: int = 100_000
    restarts: int = 100
    workers: int = 1


@dataclass
class RunConfig:
    state: dict = field(default_factory=lambda: {"kind": "coherent", "mean": 30.0})
    state_dimension: int | None = None
    eta: float = 0.85
    grid: GridConfig = field(default_factory=GridConfig)
    n_samples: int = 1_000_000
    seed: int = 1
    tau: float = 0.99
    kernel_dimension: int = 120
    max_subspace: int | None = None
    singular_cutoff: float = 1e-8
    no_eta: bool = False
    fit: FitConfig = field(default_factory=FitConfig)
    moment_orders: list = field(default_factory=lambda: [1, 10, 50])

    def validate(self) -> "RunConfig":
        kind = self.state.get("kind")
        if kind not in STATE_PARAMS:
            raise ConfigError(f"unknown state kind {kind!r}; choose from {sorted(STATE_PARAMS)}")
        extra = set(self.state) - {"kind", *STATE_PARAMS[kind]}
        missing = [p for p in STATE_PARAMS[kind] if p not in self.state]
        if extra or missing:
            raise ConfigError(f"state {kind!r} takes parameters {STATE_PARAMS[kind]}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if not 1 <= self.kernel_dimension <= D_MAX:
            raise ConfigError(f"kernel_dimension must lie in [1, {D_MAX}]")
        if self.max_subspace is not None and self.max_subspace < 1:
            raise ConfigError("max_subspace must be positive")
        if (self.grid.min is None) != (self.grid.max is None):
            raise ConfigError("grid min and max must both be set or both be null")
        if not self.grid.dx > 0:
            raise ConfigError("grid dx must be positive")
        if not 0.0 < self.singular_cutoff < 1.0:
            raise ConfigError("singular_cutoff must lie in (0, 1)")
        if self.fit.restarts < 1 or self.fit.max_iterations < 1 or not self.fit.tolerance > 0:
            raise ConfigError("fit options must be positive")
        if any(not 1 <= int(k) <= 50 for k in self.moment_orders):
            raise ConfigError("moment orders must lie in [1, 50]")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "grid" in data:
                data["grid"] = _sub(GridConfig, data["grid"], "grid")
            if "fit" in data:
                data["fit"] = _sub(FitConfig, data["fit"], "fit")
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def state_descriptor(self) -> str:
        params = ",".join(f"{k}={self.state[k]}" for k in STATE_PARAMS[self.state["kind"]])
        return f"{self.state['kind']}({params})"

    def photon_distribution(self) -> np.ndarray:
        """Ground-truth distribution; with ``state_dimension`` unset, the smallest safe truncation."""
        kind = self.state["kind"]
        if kind == "coherent":
            make = lambda d: states.coherent_pn(self.state["mean"], d)
        elif kind == "thermal":
            make = lambda d: states.thermal_pn(self.state["mean"], d)
        elif kind == "squeezed_vacuum":
            make = lambda d: states.squeezed_vacuum_pn(self.state["squeeze"], d)
        else:
            make = lambda d: states.displaced_squeezed_pn(self.state["alpha"], self.state["squeeze"], d)
        if self.state_dimension is not None:
            return make(self.state_dimension)
        try:
            return make(1)
        except states.TailMassError as exc:
            if exc.required_dimension > D_MAX:
                raise ConfigError(f"state needs {exc.required_dimension} Fock levels; "
                                  f"at most {D_MAX} are supported") from None
            return make(exc.required_dimension)


def _sub(kind, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(kind)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    return kind(**data)

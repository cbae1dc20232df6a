"""Experiment configuration: flat dotted-key files, validation, hashing.

The config format is one ``key = value`` per line, ``#`` comment lines and
blank lines allowed, list values comma-separated.  Unknown keys are errors
(typo safety).  The configuration hash covers the fully resolved values, so
identical effective configs always produce identical artifact headers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bandwidth import BandwidthSchedule, default_delta
from .errors import ConfigError, EmptyData, NonFiniteInput
from .kernels import KernelSpec
from .process import FLAVORS


def _parse_int(v: str) -> int:
    return int(v, 0)


def _parse_float(v: str) -> float:
    return float(v)


def _parse_str(v: str) -> str:
    return v


def _parse_int_list(v: str) -> tuple:
    return tuple(int(x.strip(), 0) for x in v.split(",") if x.strip())


def _parse_float_list(v: str) -> tuple:
    return tuple(float(x.strip()) for x in v.split(",") if x.strip())


_KEY_PARSERS = {
    "flavor": _parse_str,
    "kernel.family": _parse_str,
    "kernel.dimension": _parse_int,
    "kernel.dof": _parse_float,
    "bandwidth.form": _parse_str,
    "bandwidth.C": _parse_float,
    "bandwidth.delta": _parse_float,
    "bandwidth.rate": _parse_float,
    "bandwidth.table_path": _parse_str,
    "run.steps": _parse_int,
    "run.replications": _parse_int,
    "run.master_seed": _parse_int,
    "run.output_dir": _parse_str,
    "run.checkpoints": _parse_int_list,
    "diagnostics.t_grid": _parse_float_list,
    "diagnostics.drift_times": _parse_int_list,
    "diagnostics.tail_threshold_factor": _parse_float,
    "data.path": _parse_str,
    "posterior.quantiles": _parse_float_list,
    "posterior.box_lo": _parse_float,
    "posterior.box_hi": _parse_float,
    "urn.window_sizes": _parse_int_list,
    "urn.anchor": _parse_int,
    "urn.fraction_horizon": _parse_int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; immutable and hashable into artifacts."""

    flavor: str = "kde"
    kernel_family: str = "gaussian"
    kernel_dimension: int = 1
    kernel_dof: float | None = None
    bandwidth_form: str = "power"
    bandwidth_c: float = 1.0
    bandwidth_delta: float | None = None
    bandwidth_rate: float | None = None
    bandwidth_table_path: str | None = None
    steps: int = 1000
    replications: int = 1
    master_seed: int = 0
    output_dir: str = "out"
    checkpoints: tuple = ()
    t_grid: tuple = (0.5, 1.0, 2.0)
    drift_times: tuple = (10, 100)
    tail_threshold_factor: float = 10.0
    data_path: str | None = None
    posterior_quantiles: tuple = (0.05, 0.25, 0.5, 0.75, 0.95)
    posterior_box_lo: float | None = None
    posterior_box_hi: float | None = None
    urn_window_sizes: tuple = (2, 5, 10)
    urn_anchor: int | None = None
    urn_fraction_horizon: int | None = None
    base_dir: str = "."

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ConfigError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.steps < 1:
            raise ConfigError(f"run.steps must be >= 1, got {self.steps}")
        if self.replications < 1:
            raise ConfigError(f"run.replications must be >= 1, got {self.replications}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("run.master_seed must fit in an unsigned 64-bit integer")
        if any(n < 1 or n > self.steps for n in self.checkpoints):
            raise ConfigError("run.checkpoints must lie in [1, run.steps]")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ConfigError("run.checkpoints must be strictly increasing")
        if any(n < 1 for n in self.drift_times):
            raise ConfigError("diagnostics.drift_times must be >= 1")
        if any(not 0 < q < 1 for q in self.posterior_quantiles):
            raise ConfigError("posterior.quantiles must lie in (0, 1)")
        if (self.posterior_box_lo is None) != (self.posterior_box_hi is None):
            raise ConfigError("posterior.box_lo and posterior.box_hi must be set together")
        if self.posterior_box_lo is not None and self.posterior_box_lo > self.posterior_box_hi:
            raise ConfigError("posterior.box_lo must not exceed posterior.box_hi")
        try:
            self.kernel()
            self.schedule()
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc

    # ----------------------------------------------------------- constructors

    @classmethod
    def from_mapping(cls, raw: dict, base_dir: str = ".") -> "ExperimentConfig":
        unknown = sorted(set(raw) - set(_KEY_PARSERS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        parsed = {}
        for key, value in raw.items():
            try:
                parsed[key] = _KEY_PARSERS[key](value.strip() if isinstance(value, str) else value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        rename = {
            "kernel.family": "kernel_family",
            "kernel.dimension": "kernel_dimension",
            "kernel.dof": "kernel_dof",
            "bandwidth.form": "bandwidth_form",
            "bandwidth.C": "bandwidth_c",
            "bandwidth.delta": "bandwidth_delta",
            "bandwidth.rate": "bandwidth_rate",
            "bandwidth.table_path": "bandwidth_table_path",
            "run.steps": "steps",
            "run.replications": "replications",
            "run.master_seed": "master_seed",
            "run.output_dir": "output_dir",
            "run.checkpoints": "checkpoints",
            "diagnostics.t_grid": "t_grid",
            "diagnostics.drift_times": "drift_times",
            "diagnostics.tail_threshold_factor": "tail_threshold_factor",
            "data.path": "data_path",
            "posterior.quantiles": "posterior_quantiles",
            "posterior.box_lo": "posterior_box_lo",
            "posterior.box_hi": "posterior_box_hi",
            "urn.window_sizes": "urn_window_sizes",
            "urn.anchor": "urn_anchor",
            "urn.fraction_horizon": "urn_fraction_horizon",
            "flavor": "flavor",
        }
        return cls(base_dir=base_dir, **{rename[k]: v for k, v in parsed.items()})

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        raw = {}
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key}")
            raw[key] = value.strip()
        return cls.from_mapping(raw, base_dir=str(path.parent))

    def with_overrides(self, master_seed: int | None = None, output_dir: str | None = None):
        cfg = self
        if master_seed is not None:
            cfg = replace(cfg, master_seed=master_seed)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        return cfg

    # ------------------------------------------------------------- components

    def kernel(self) -> KernelSpec:
        return KernelSpec(
            family=self.kernel_family, dim=self.kernel_dimension, dof=self.kernel_dof
        )

    def schedule(self) -> BandwidthSchedule:
        if self.bandwidth_form == "power":
            delta = (
                self.bandwidth_delta
                if self.bandwidth_delta is not None
                else default_delta(self.kernel_dimension)
            )
            return BandwidthSchedule.power(self.bandwidth_c, delta)
        if self.bandwidth_form == "exponential":
            if self.bandwidth_rate is None:
                raise ConfigError("bandwidth.rate required for the exponential form")
            return BandwidthSchedule.exponential(self.bandwidth_rate)
        if self.bandwidth_form == "table":
            if self.bandwidth_table_path is None:
                raise ConfigError("bandwidth.table_path required for the table form")
            return BandwidthSchedule.from_table(
                load_bandwidth_table(Path(self.base_dir) / self.bandwidth_table_path)
            )
        raise ConfigError(f"unknown bandwidth.form {self.bandwidth_form!r}")

    def resolved_data_path(self) -> Path | None:
        if self.data_path is None:
            return None
        return Path(self.base_dir) / self.data_path

    # ------------------------------------------------------------------- echo

    def to_echo(self) -> dict:
        """Flat dotted-key view of every resolved setting."""
        sched = {"bandwidth.form": self.bandwidth_form}
        if self.bandwidth_form == "power":
            delta = (
                self.bandwidth_delta
                if self.bandwidth_delta is not None
                else default_delta(self.kernel_dimension)
            )
            sched.update({"bandwidth.C": self.bandwidth_c, "bandwidth.delta": delta})
        elif self.bandwidth_form == "exponential":
            sched.update({"bandwidth.rate": self.bandwidth_rate})
        else:
            sched.update({"bandwidth.table_path": self.bandwidth_table_path})
        echo = {
            "flavor": self.flavor,
            "kernel.family": self.kernel_family,
            "kernel.dimension": self.kernel_dimension,
            **sched,
            "run.steps": self.steps,
            "run.replications": self.replications,
            "run.master_seed": self.master_seed,
            "run.checkpoints": list(self.checkpoints),
            "diagnostics.t_grid": list(self.t_grid),
            "diagnostics.drift_times": list(self.drift_times),
            "diagnostics.tail_threshold_factor": self.tail_threshold_factor,
            "posterior.quantiles": list(self.posterior_quantiles),
            "urn.window_sizes": list(self.urn_window_sizes),
        }
        if self.kernel_dof is not None:
            echo["kernel.dof"] = self.kernel_dof
        if self.data_path is not None:
            echo["data.path"] = self.data_path
        if self.posterior_box_lo is not None:
            echo["posterior.box_lo"] = self.posterior_box_lo
        if self.posterior_box_hi is not None:
            echo["posterior.box_hi"] = self.posterior_box_hi
        if self.urn_anchor is not None:
            echo["urn.anchor"] = self.urn_anchor
        if self.urn_fraction_horizon is not None:
            echo["urn.fraction_horizon"] = self.urn_fraction_horizon
        return echo

    def config_hash(self) -> str:
        lines = [f"{k} = {v!r}" for k, v in sorted(self.to_echo().items())]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


# --------------------------------------------------------------- file loaders


def load_bandwidth_table(path) -> list[float]:
    """One positive real per line; comments and blanks skipped."""
    values = []
    for line in Path(path).read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        values.append(float(stripped))
    if not values:
        raise ConfigError(f"bandwidth table {path} has no values")
    return values


def load_data_points(path, dim: int = 1) -> np.ndarray:
    """Observed points, one per line, coordinates comma/whitespace separated."""
    rows = []
    for line in Path(path).read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.replace(",", " ").split()
        rows.append([float(p) for p in parts])
    if not rows:
        raise EmptyData(f"data file {path} contains no points")
    arr = np.asarray(rows, dtype=float)
    if arr.shape[1] != dim:
        raise ConfigError(f"data file {path} has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"data file {path} contains non-finite values")
    return arr

"""Experiment configuration files (TOML).

A config is one file per experiment::

    experiment = "stability"
    p = 2.0
    perturbation_levels = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625]
    seeds = [0, 1, 2]

    [grid]
    n = 1
    R = 64

    [metric]
    family = "flat_kahler"

    [density_family]
    name = "smooth"
    amplitude = 0.3

    [solver]
    tol_residual = 1e-10

Unknown top-level keys are rejected so that typos surface as
:class:`ConfigInvalid` naming the field.
"""
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid
from .solver import SolverConfig
from .torus import MetricFamily

EXPERIMENTS = ("stability", "cf_stability", "hoelder", "envelope_hoelder",
               "audit_suite", "solve", "envelope")
#: Experiments that fit an exponent against perturbation levels.
LEVEL_EXPERIMENTS = ("stability", "cf_stability")
MIN_LEVELS = 4

_TOP_LEVEL = {
    "experiment", "grid", "metric", "density_family", "p", "perturbation_levels",
    "seeds", "solver", "output_dir", "form", "perturbation", "families",
    "alphas", "envelope", "audit",
}


@dataclass
class ExperimentConfig:
    experiment: str
    n: int
    R: int
    metric: MetricFamily
    density_family: dict
    p: float
    perturbation_levels: list
    seeds: list
    solver: SolverConfig
    output_dir: Optional[str] = None
    form: str = "exponential"
    perturbation: dict = field(default_factory=dict)
    families: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    envelope: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def q(self):
        """Conjugate exponent of ``p``."""
        return self.p / (self.p - 1.0)

    def echo(self):
        """The parsed config as plain data (for report provenance)."""
        return self.raw


def _require(d, key, where=""):
    if key not in d:
        raise ConfigInvalid(where + key, f"missing required field {where + key!r}")
    return d[key]


def _seeds_from_env(seeds):
    env = os.environ.get("MAGE_SEED")
    if not env:
        return seeds
    try:
        return [int(s) for s in env.replace(",", " ").split()]
    except ValueError:
        raise ConfigInvalid("MAGE_SEED", f"MAGE_SEED must list integers, got {env!r}") from None


def parse_config(d, experiment=None):
    """Validate a config mapping; ``experiment`` overrides the file's value."""
    unknown = set(d) - _TOP_LEVEL
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigInvalid(name, f"unknown config field {name!r}")
    exp = experiment or _require(d, "experiment")
    if exp not in EXPERIMENTS:
        raise ConfigInvalid("experiment", f"unknown experiment {exp!r}")
    grid = _require(d, "grid")
    n = _require(grid, "n", "grid.")
    R = _require(grid, "R", "grid.")
    if not isinstance(n, int) or not isinstance(R, int):
        raise ConfigInvalid("grid", "grid.n and grid.R must be integers")
    metric = MetricFamily.from_dict(d.get("metric", {}))
    needs_p = exp not in ("solve", "envelope")
    p = float(_require(d, "p")) if needs_p else float(d.get("p", 2.0))
    if not p > 1:
        raise ConfigInvalid("p", f"p must exceed 1, got {p}")
    levels = [float(x) for x in d.get("perturbation_levels", [])]
    if exp in LEVEL_EXPERIMENTS:
        if len(levels) < MIN_LEVELS:
            raise ConfigInvalid("perturbation_levels",
                                f"need at least {MIN_LEVELS} perturbation levels")
        if any(b >= a for a, b in zip(levels[:-1], levels[1:])) or levels[-1] <= 0:
            raise ConfigInvalid("perturbation_levels",
                                "perturbation levels must be positive and strictly decreasing")
    seeds = _seeds_from_env([int(s) for s in d.get("seeds", [0])])
    if not seeds:
        raise ConfigInvalid("seeds", "at least one seed is required")
    try:
        solver = SolverConfig.from_dict(d.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("solver", str(exc)) from None
    form = d.get("form", "exponential")
    if form not in ("exponential", "normalized"):
        raise ConfigInvalid("form", f"form must be 'exponential' or 'normalized', got {form!r}")
    density = dict(d.get("density_family", {"name": "constant"}))
    if "name" not in density:
        raise ConfigInvalid("density_family.name")
    return ExperimentConfig(
        experiment=exp, n=n, R=R, metric=metric, density_family=density, p=p,
        perturbation_levels=levels, seeds=seeds, solver=solver,
        output_dir=d.get("output_dir"), form=form,
        perturbation=dict(d.get("perturbation", {})),
        families=list(d.get("families", [])),
        alphas=[float(a) for a in d.get("alphas", [])],
        envelope=dict(d.get("envelope", {})), audit=dict(d.get("audit", {})),
        raw=d,
    )


def load_config(path, experiment=None):
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid("<file>", f"{path}: {exc}") from None
    return parse_config(d, experiment)


def standard_config_path(name):
    """Path of a bundled config, e.g. ``standard_config_path('stability_n1')``."""
    return str(resources.files("mage") / "configs" / f"{name}.toml")


def standard_config(name, experiment=None):
    return load_config(standard_config_path(name), experiment)

"""Experiment configuration: YAML <-> nested dataclasses with strict validation.

Unknown keys, wrong types and inconsistent choices raise
:class:`ConfigError` naming the dotted key path (and the YAML line when the
configuration came from text).  :func:`dump_config` writes a canonical form
that :func:`load_config` reads back unchanged.

Example::

    problem:
      domain: {kind: hypercube, lo: -1.0, hi: 1.0, dim: 2}
      potential: {kind: separable_cosine}
    method:
      cutoff: phi_c
      schedule: {epochs_total: 20000, period: 20000}
    K: 1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

import yaml

from .cutoff import CutoffDomainError, make_cutoff
from .problem import Domain, Potential, Problem
from .train import TrainSchedule

DOMAIN_KINDS = ("hypercube", "ball", "shell")
POTENTIAL_KINDS = ("zero", "constant", "separable_cosine", "inverse_square")
MODES = ("exact_bc", "boundary_penalty")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key path."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {message}")


@dataclass
class DomainConfig:
    kind: str = "hypercube"
    lo: float = -1.0
    hi: float = 1.0
    dim: int = 2
    radius: float = 1.0
    inner_radius: float = 0.5

    def build(self) -> Domain:
        if self.kind == "hypercube":
            return Domain.hypercube(self.lo, self.hi, self.dim)
        if self.kind == "ball":
            return Domain.ball(self.radius, self.dim)
        return Domain.shell(self.inner_radius, self.radius, self.dim)


@dataclass
class PotentialConfig:
    kind: str = "zero"
    c: float = 0.0

    def build(self) -> Potential:
        if self.kind == "zero":
            return Potential.zero()
        if self.kind == "constant":
            return Potential.constant(self.c)
        if self.kind == "separable_cosine":
            return Potential.separable_cosine()
        return Potential.inverse_square(self.c)


@dataclass
class ProblemConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)

    def build(self) -> Problem:
        return Problem(self.domain.build(), self.potential.build())


@dataclass
class ArchitectureConfig:
    width: int = 40
    depth: int = 3


@dataclass
class ScheduleConfig:
    epochs_total: int = 120_000
    lr0: float = 5e-3
    points0: int = 1000
    period: int = 20_000
    lr_factor: float = 0.25
    points_factor: int = 2

    def build(self, seed: int) -> TrainSchedule:
        return TrainSchedule(self.epochs_total, self.lr0, self.points0, self.period,
                             self.lr_factor, self.points_factor, seed=seed)


@dataclass
class LossWeightsConfig:
    beta_factor: float = 4.0
    beta: float | None = None
    gamma_norm: float = 0.0
    gamma_bdry: float = 0.0


@dataclass
class MethodConfig:
    cutoff: str = "phi_c"
    mode: str = "exact_bc"
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    loss: LossWeightsConfig = field(default_factory=LossWeightsConfig)


@dataclass
class SeedsConfig:
    train: int = 0


@dataclass
class ReferenceConfig:
    M: int = 32
    Q: int | None = None


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    K: int = 1
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    output: str = "runs/default"
    log_every: int = 100

    def schedule(self) -> TrainSchedule:
        return self.method.schedule.build(self.seeds.train)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _line_index(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based YAML line numbers."""
    out: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
                out[path] = key_node.start_mark.line + 1
                walk(value_node, path)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, "")
    return out


def _coerce(value: Any, hint, path: str, lines: dict):
    line = lines.get(path)
    optional = False
    origin = getattr(hint, "__args__", None)
    if origin and type(None) in origin:
        optional = True
        hint = next(a for a in origin if a is not type(None))
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "value is required", line)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path, lines)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}", line)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}", line)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}", line)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}", line)
        return value
    raise ConfigError(path, f"unsupported field type {hint!r}", line)


def _build(cls, data, path: str, lines: dict):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(data).__name__}", lines.get(path))
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            sub = f"{path}.{key}" if path else str(key)
            raise ConfigError(sub, f"unknown key; expected one of {sorted(names)}", lines.get(sub))
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            sub = f"{path}.{f.name}" if path else f.name
            kwargs[f.name] = _coerce(data[f.name], hints[f.name], sub, lines)
    return cls(**kwargs)


def _check_choice(value, choices, path, lines):
    if value not in choices:
        raise ConfigError(path, f"{value!r} is not one of {list(choices)}", lines.get(path))


def validate(cfg: ExperimentConfig, lines: dict | None = None) -> ExperimentConfig:
    """Cross-field checks; raises :class:`ConfigError`."""
    lines = lines or {}
    dom, pot, meth = cfg.problem.domain, cfg.problem.potential, cfg.method
    _check_choice(dom.kind, DOMAIN_KINDS, "problem.domain.kind", lines)
    _check_choice(pot.kind, POTENTIAL_KINDS, "problem.potential.kind", lines)
    _check_choice(meth.mode, MODES, "method.mode", lines)
    if dom.dim < 1:
        raise ConfigError("problem.domain.dim", "must be at least 1", lines.get("problem.domain.dim"))
    if dom.kind == "hypercube" and not dom.hi > dom.lo:
        raise ConfigError("problem.domain.hi", "must exceed lo", lines.get("problem.domain.hi"))
    if dom.kind == "shell" and not dom.radius > dom.inner_radius > 0:
        raise ConfigError("problem.domain.inner_radius", "need 0 < inner_radius < radius",
                          lines.get("problem.domain.inner_radius"))
    if cfg.K < 1:
        raise ConfigError("K", "must be at least 1", lines.get("K"))
    for name in ("width", "depth"):
        if getattr(meth.architecture, name) < 1:
            path = f"method.architecture.{name}"
            raise ConfigError(path, "must be at least 1", lines.get(path))
    sched = meth.schedule
    for name in ("epochs_total", "points0", "period", "points_factor"):
        if getattr(sched, name) < 1:
            path = f"method.schedule.{name}"
            raise ConfigError(path, "must be at least 1", lines.get(path))
    if not sched.lr0 > 0:
        raise ConfigError("method.schedule.lr0", "must be positive", lines.get("method.schedule.lr0"))
    if meth.mode == "boundary_penalty" and not meth.loss.gamma_bdry > 0:
        raise ConfigError("method.loss.gamma_bdry", "boundary_penalty mode needs gamma_bdry > 0",
                          lines.get("method.loss.gamma_bdry"))
    try:
        make_cutoff(meth.cutoff, dom.build())
    except (CutoffDomainError, ValueError) as exc:
        raise ConfigError("method.cutoff", str(exc), lines.get("method.cutoff")) from None
    if cfg.reference.M < 2:
        raise ConfigError("reference.M", "must be at least 2", lines.get("reference.M"))
    return cfg


def config_from_dict(data: dict, lines: dict | None = None) -> ExperimentConfig:
    lines = lines or {}
    return validate(_build(ExperimentConfig, data or {}, "", lines), lines)


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"invalid YAML: {exc}") from None
    return config_from_dict(data if data is not None else {}, _line_index(text))


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML text (stable key order)."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)

"""Run configuration for the command-line tools.

Values are resolved in three layers: built-in defaults, then a JSON config
file, then command-line flags. Config keys and flag names match one to
one (flags spell underscores as hyphens). Unit-dependent defaults (radius,
safety constants, frame stride) are filled in last, from the preset for
the resolved unit, and only for fields the user did not set.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Tuple

from .core import Unit
from .datasets import SceneQuery
from .errors import InvalidArgumentError
from .external import ExternalPredictorPool
from .learning import PacBudget
from .predictors import ConstantVelocityPredictor
from .sampling import DeltaKind, PerturbationSpec, PureMode

# Unit presets: perturbation radius, safety constants, dataset frame stride.
_PRESETS = {
    Unit.METERS: {"radius": 0.03, "safety_label": 1.0, "safety_pure": 0.5,
                  "stride": 10},
    Unit.PIXELS: {"radius": 2.0, "safety_label": 50.0, "safety_pure": 50.0,
                  "stride": 12},
}

_BUILTIN_PREDICTORS = ("constant-velocity",)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation."""

    dataset: Optional[str] = None
    unit: str = "meters"
    frame: Optional[int] = None
    ped: Optional[int] = None
    stride: Optional[int] = None
    t_past: int = 8
    t_future: int = 12
    predictor: str = "constant-velocity"
    predictor_params: dict = field(default_factory=dict)
    predictor_cmd: Optional[str] = None
    radius: Optional[float] = None
    kinds: Tuple[str, ...] = ("pure",)
    safety_label: Optional[float] = None
    safety_pure: Optional[float] = None
    epsilon: float = 0.01
    eta: float = 0.01
    t1: int = 30000
    t2: int = 12000
    k_features: int = 54
    k: int = 20
    pure_mode: str = "fresh"
    refs: int = 20
    seed: int = 0
    workers: Optional[int] = None
    out: str = "out"
    pgd_steps: int = 40
    count: int = 1000
    load_surrogate: Optional[str] = None
    timeout: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if isinstance(self.unit, Unit):
            object.__setattr__(self, "unit", self.unit.value)
        try:
            Unit(self.unit)
        except ValueError:
            raise InvalidArgumentError(
                f"unit must be one of {[u.value for u in Unit]}, got {self.unit!r}"
            ) from None
        if not self.kinds:
            raise InvalidArgumentError("at least one error kind is required")
        for kind in self.kinds:
            try:
                DeltaKind(kind)
            except ValueError:
                raise InvalidArgumentError(f"unknown error kind {kind!r}") from None
        try:
            PureMode(self.pure_mode)
        except ValueError:
            raise InvalidArgumentError(
                f"pure_mode must be 'fresh' or 'refset', got {self.pure_mode!r}"
            ) from None
        if self.radius is not None and not self.radius > 0:
            raise InvalidArgumentError("radius must be > 0")
        for name in ("safety_label", "safety_pure"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        for name in ("t1", "t2", "k_features", "k", "refs", "pgd_steps",
                     "count", "t_past", "t_future"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")
        if not self.timeout > 0:
            raise InvalidArgumentError("timeout must be > 0")
        if self.predictor_cmd is None and self.predictor not in _BUILTIN_PREDICTORS:
            raise InvalidArgumentError(
                f"unknown predictor {self.predictor!r}; "
                f"builtins: {', '.join(_BUILTIN_PREDICTORS)}"
            )
        if not isinstance(self.predictor_params, dict):
            raise InvalidArgumentError("predictor_params must be an object")

    # ------------------------------------------------------------------
    # derived accessors

    @property
    def unit_enum(self) -> Unit:
        return Unit(self.unit)

    @property
    def effective_radius(self) -> float:
        return self.radius if self.radius is not None else _PRESETS[self.unit_enum]["radius"]

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride is not None else _PRESETS[self.unit_enum]["stride"]

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers is not None else (os.cpu_count() or 1)

    def safety_for(self, kind) -> float:
        kind = DeltaKind(kind)
        if kind is DeltaKind.LABEL:
            value = self.safety_label
            preset = _PRESETS[self.unit_enum]["safety_label"]
        else:
            value = self.safety_pure
            preset = _PRESETS[self.unit_enum]["safety_pure"]
        return value if value is not None else preset

    def scene_query(self) -> SceneQuery:
        if self.frame is None or self.ped is None:
            raise InvalidArgumentError("--frame and --ped are required")
        return SceneQuery(self.frame, self.ped, t_past=self.t_past,
                          t_future=self.t_future,
                          frame_stride=self.effective_stride)

    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(self.effective_radius)

    def budget(self) -> PacBudget:
        return PacBudget(self.epsilon, self.eta, self.t1, self.t2,
                         self.k_features)

    def build_predictor(self):
        if self.predictor_cmd is not None:
            return ExternalPredictorPool(self.predictor_cmd,
                                         size=self.effective_workers,
                                         timeout=self.timeout)
        params = dict(self.predictor_params)
        params.setdefault("t_future", self.t_future)
        try:
            return ConstantVelocityPredictor(**params)
        except TypeError as exc:
            raise InvalidArgumentError(
                f"bad predictor_params for {self.predictor!r}: {exc}"
            ) from exc

    def to_json_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            doc[f.name] = value
        doc["radius"] = self.effective_radius
        doc["stride"] = self.effective_stride
        doc["safety_label"] = self.safety_for(DeltaKind.LABEL)
        doc["safety_pure"] = self.safety_for(DeltaKind.PURE)
        doc["workers"] = self.effective_workers
        return doc


_CONFIG_KEYS = frozenset(f.name for f in fields(RunConfig))


def read_config_file(path) -> dict:
    """Load a JSON config document and reject unknown keys."""
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidArgumentError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise InvalidArgumentError(
            f"unknown config keys in {path}: {', '.join(unknown)}"
        )
    return doc


def resolve_config(file_values: Optional[dict] = None,
                   flag_values: Optional[dict] = None) -> RunConfig:
    """Merge defaults, config-file values, and flag overrides.

    ``flag_values`` entries equal to None mean "flag not given" and are
    skipped, so file values survive unset flags.
    """
    merged = {}
    for source in (file_values or {}), (flag_values or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _CONFIG_KEYS:
                raise InvalidArgumentError(f"unknown config key {key!r}")
            merged[key] = value
    return RunConfig(**merged)


def require_dataset(config: RunConfig) -> Path:
    if config.dataset is None:
        raise InvalidArgumentError("--dataset is required for this command")
    path = Path(config.dataset)
    if not path.is_file():
        raise InvalidArgumentError(f"dataset file not found: {path}")
    return path

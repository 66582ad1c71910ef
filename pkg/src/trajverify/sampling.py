"""Uniform sampling in the L-infinity ball and evaluation of the
prediction-error random variable.

Two error notions are supported: label error (best-of-K displacement
against recorded ground truth) and pure error (best-of-K displacement
against the model's own prediction at the unperturbed scene). Sample
generation and evaluation are deterministic functions of the base seed,
independent of worker count or scheduling.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import FlatInput, FlatLayout, Scene, Trajectory, ade_k, flatten, scene_with_past
from .errors import InvalidArgumentError, PredictorError
from .predictors import PredictionRequest, Predictor
from .seeding import ROLE_CENTER, ROLE_INPUT, ROLE_PREDICT, derive_seed, rng_for

# inputs are generated per fixed-size chunk so sample i never depends on
# the total count or on how evaluation work is later distributed
_GEN_CHUNK = 1024


class DeltaKind(enum.Enum):
    LABEL = "label"
    PURE = "pure"


class PureMode(enum.Enum):
    FRESH = "fresh"
    REFSET = "refset"


@dataclass(frozen=True)
class PerturbationSpec:
    """L-infinity ball of the given radius around a scene's past; only the
    listed agent indices move (None means all agents, 0 is the predicted
    agent)."""

    radius: float
    perturbed_agents: Optional[frozenset] = None

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidArgumentError("radius must be finite and > 0")
        if self.perturbed_agents is not None:
            agents = frozenset(int(a) for a in self.perturbed_agents)
            if not agents:
                raise InvalidArgumentError("perturbed_agents must not be empty")
            if any(a < 0 for a in agents):
                raise InvalidArgumentError("agent indices must be nonnegative")
            object.__setattr__(self, "perturbed_agents", agents)

    def coordinate_mask(self, layout: FlatLayout) -> np.ndarray:
        """Boolean vector, True where a flat coordinate may be perturbed."""
        if self.perturbed_agents is None:
            return np.ones(layout.dim, dtype=bool)
        bad = [a for a in self.perturbed_agents if a >= layout.n_agents]
        if bad:
            raise InvalidArgumentError(f"agent indices {sorted(bad)} out of range")
        mask = np.zeros(layout.dim, dtype=bool)
        span = 2 * layout.t_past
        for a in sorted(self.perturbed_agents):
            mask[a * span:(a + 1) * span] = True
        return mask


@dataclass(frozen=True)
class LabeledSample:
    """One evaluated sample point: a perturbed input and its observed
    prediction error."""

    input: FlatInput
    delta: float
    kind: DeltaKind
    eval_seed: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise InvalidArgumentError("delta must be finite and nonnegative")


def _snap_into_ball(values, center, radius):
    # closed-ball membership must hold exactly in float arithmetic: nudge
    # any coordinate whose recomputed deviation escapes by a rounding ulp
    while True:
        over = np.abs(values - center) > radius
        if not over.any():
            return values
        values = np.where(over, np.nextafter(values, center), values)


def clamp_to_ball(values, center, radius, mask=None):
    """Project a flat vector into the closed L-infinity ball around
    ``center``; coordinates outside ``mask`` revert to the center. The
    result satisfies |result - center| <= radius exactly."""
    values = np.asarray(values, dtype=float)
    center = np.asarray(center, dtype=float)
    if mask is not None:
        values = np.where(np.asarray(mask, dtype=bool), values, center)
    values = np.clip(values, center - radius, center + radius)
    return _snap_into_ball(values, center, radius)


def sample_flat_inputs(center: Scene, spec: PerturbationSpec, count: int,
                       seed=None) -> list:
    """Draw ``count`` uniform perturbations of the scene past as flat
    vectors. Unperturbed coordinates are copied byte-identically."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    layout = FlatLayout(center.n_agents, center.t_past)
    center_flat = flatten(center).values
    mask = spec.coordinate_mask(layout)
    out = []
    for chunk_start in range(0, count, _GEN_CHUNK):
        rng = rng_for(seed, ROLE_INPUT, chunk_start // _GEN_CHUNK)
        noise = rng.uniform(-spec.radius, spec.radius, size=(_GEN_CHUNK, layout.dim))
        take = min(_GEN_CHUNK, count - chunk_start)
        for row in noise[:take]:
            values = np.where(mask, center_flat + row, center_flat)
            values = _snap_into_ball(values, center_flat, spec.radius)
            out.append(FlatInput(values, layout))
    return out


def sample_inputs(center: Scene, spec: PerturbationSpec, count: int,
                  seed=None) -> list:
    """Like :func:`sample_flat_inputs` but returns perturbed scenes."""
    return [scene_with_past(center, f) for f in sample_flat_inputs(center, spec, count, seed)]


def _checked(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise PredictorError(f"{what} evaluated to a non-finite value")
    return float(value)


def eval_delta_label(scene: Scene, truth: Trajectory, predictor: Predictor,
                     k: int = 20, seed=None) -> float:
    """Best-of-K displacement between predictions at ``scene`` and the
    recorded ground truth."""
    if truth is None:
        raise InvalidArgumentError("label error needs ground truth")
    batch = predictor.predict(PredictionRequest(scene, k, seed))
    return _checked(ade_k(batch.samples, truth), "label delta")


def center_reference_set(center: Scene, predictor: Predictor, m: int = 20,
                         seed=None) -> Tuple[Trajectory, ...]:
    """A fixed set of M predictions at the unperturbed scene, reused across
    reference-set pure-error evaluations."""
    if m < 1:
        raise InvalidArgumentError("reference set needs m >= 1")
    return predictor.predict(PredictionRequest(center, m, seed)).samples


def eval_delta_pure(scene: Scene, center: Scene, predictor: Predictor,
                    k: int = 20, mode: PureMode = PureMode.FRESH, seed=None,
                    references: Optional[Sequence[Trajectory]] = None) -> float:
    """Best-of-K displacement between predictions at ``scene`` and the
    model's own behaviour at ``center``.

    fresh mode draws one new center prediction per evaluation; refset mode
    takes the minimum over a fixed precomputed reference set.
    """
    mode = PureMode(mode)
    batch = predictor.predict(PredictionRequest(scene, k, seed))
    if mode is PureMode.FRESH:
        center_seed = None if seed is None else derive_seed(seed, ROLE_CENTER)
        anchor = predictor.predict(PredictionRequest(center, 1, center_seed)).samples[0]
        return _checked(ade_k(batch.samples, anchor), "pure delta")
    if references is None or len(references) == 0:
        raise InvalidArgumentError("refset mode needs a nonempty reference set")
    return _checked(min(ade_k(batch.samples, ref) for ref in references), "pure delta")


def collect_samples(center: Scene, spec: PerturbationSpec, count: int,
                    kind: DeltaKind, predictor: Predictor, k: int = 20,
                    seed=None, mode: PureMode = PureMode.FRESH,
                    references: Optional[Sequence[Trajectory]] = None,
                    workers: int = 1) -> list:
    """Draw ``count`` perturbed inputs and evaluate each one's prediction
    error. Results are ordered by sample index for any worker count."""
    kind = DeltaKind(kind)
    if workers < 1:
        raise InvalidArgumentError("workers must be >= 1")
    if kind is DeltaKind.LABEL and center.agent_future_truth is None:
        raise InvalidArgumentError("label error needs a scene with ground truth")
    flats = sample_flat_inputs(center, spec, count, seed)

    def evaluate(index_and_flat):
        index, flat = index_and_flat
        scene = scene_with_past(center, flat)
        eval_seed = None if seed is None else derive_seed(seed, ROLE_PREDICT, index)
        if kind is DeltaKind.LABEL:
            delta = eval_delta_label(scene, center.agent_future_truth, predictor,
                                     k=k, seed=eval_seed)
        else:
            delta = eval_delta_pure(scene, center, predictor, k=k, mode=mode,
                                    seed=eval_seed, references=references)
        return LabeledSample(input=flat, delta=delta, kind=kind, eval_seed=eval_seed)

    items = list(enumerate(flats))
    if workers == 1:
        return [evaluate(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(evaluate, items))


def max_sample(samples: Sequence[LabeledSample]) -> LabeledSample:
    """The sample with the largest observed error (first one on ties)."""
    if not samples:
        raise InvalidArgumentError("no samples")
    best = samples[0]
    for s in samples[1:]:
        if s.delta > best.delta:
            best = s
    return best


def dump_samples_csv(path, samples: Sequence[LabeledSample]) -> None:
    """Write samples as CSV with header idx,delta,coord_0,...,coord_{d-1}."""
    if not samples:
        raise InvalidArgumentError("no samples to dump")
    dim = samples[0].input.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx", "delta"] + [f"coord_{j}" for j in range(dim)])
        for i, s in enumerate(samples):
            writer.writerow([i, repr(float(s.delta))] + [repr(float(v)) for v in s.input.values])

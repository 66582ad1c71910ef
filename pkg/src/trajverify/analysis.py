"""Robustness verdicts, closed-form box maximization of the surrogate,
adversary generation, and counterexample validation.

The verdict logic: the surrogate's maximum over the perturbation ball plus
its margin gives a probabilistic upper bound on the prediction error. If
that bound is below the safety constant the scene is robust (YES) up to the
learned error rate and confidence. Otherwise the true model is probed at
the surrogate's maximizer and at the worst sample seen during learning; any
observed violation is a genuine counterexample (NO), and failing that the
result is inconclusive (UNKNOWN) with the bound gap reported.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import FlatInput, FlatLayout, Scene, scene_with_past
from .errors import InvalidArgumentError
from .learning import AffineSurrogate
from .predictors import Predictor
from .sampling import (
    DeltaKind,
    PerturbationSpec,
    PureMode,
    clamp_to_ball,
    eval_delta_label,
    eval_delta_pure,
)
from .seeding import derive_seed

# seed-path branches for verdict probes, exceedance re-draws and attacks
_ARGMAX_STREAM = 21
_REDRAW_STREAM = 41
_ATTACK_STREAM = 31


class Outcome(enum.Enum):
    YES = "YES"
    NO = "NO"
    UNKNOWN = "UNKNOWN"


class GradMode(enum.Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"


@dataclass(frozen=True)
class Counterexample:
    """A real model run whose observed error exceeds the safety constant."""

    flat_values: np.ndarray
    scene: Scene
    observed_delta: float
    eval_seed: Optional[int]
    source: str  # "argmax" or "sampled"
    exceedance_frequency: Optional[float] = None

    def __post_init__(self):
        values = np.array(self.flat_values, dtype=float)
        values.flags.writeable = False
        object.__setattr__(self, "flat_values", values)


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    pac_bound: float
    max_sampled_delta: float
    safety_constant: float
    epsilon: float
    eta: float
    box_maximum: float
    kind: DeltaKind
    counterexample: Optional[Counterexample] = None
    gap: Optional[float] = None
    argmax_delta: Optional[float] = None

    def __post_init__(self):
        robust = self.pac_bound <= self.safety_constant
        if (self.outcome is Outcome.YES) != robust:
            raise InvalidArgumentError(
                "outcome YES must hold exactly when pac_bound <= safety_constant"
            )
        if self.outcome is Outcome.NO:
            if self.counterexample is None:
                raise InvalidArgumentError("NO verdict needs a counterexample")
            if not self.counterexample.observed_delta > self.safety_constant:
                raise InvalidArgumentError(
                    "counterexample must exceed the safety constant"
                )
        if self.outcome is Outcome.UNKNOWN and self.gap is None:
            raise InvalidArgumentError("UNKNOWN verdict needs the bound gap")


def box_max(surrogate: AffineSurrogate, center_values, radius: float,
            mask=None) -> Tuple[float, np.ndarray]:
    """Exact maximum of the affine surrogate over the masked L-infinity
    ball, with its maximizer.

    max = dlt(center) + r * sum of |alpha_i| over masked i; the maximizer
    moves each masked coordinate to the boundary in the direction of its
    coefficient sign and leaves zero-coefficient coordinates at the center.
    """
    if isinstance(center_values, FlatInput):
        center_values = center_values.values
    center_values = np.asarray(center_values, dtype=float)
    if center_values.shape != (surrogate.dim,):
        raise InvalidArgumentError("center dimension does not match surrogate")
    if not (np.isfinite(radius) and radius > 0):
        raise InvalidArgumentError("radius must be finite and > 0")
    if mask is None:
        mask = np.ones(surrogate.dim, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (surrogate.dim,):
            raise InvalidArgumentError("mask dimension does not match surrogate")
    alpha = surrogate.alpha
    value = surrogate.predict_delta(center_values) + radius * float(
        np.abs(alpha[mask]).sum()
    )
    argmax = np.where(mask, center_values + radius * np.sign(alpha), center_values)
    argmax = clamp_to_ball(argmax, center_values, radius, mask=mask)
    return float(value), argmax


def linear_adversary(surrogate: AffineSurrogate, center: Scene,
                     spec: PerturbationSpec) -> Scene:
    """The surrogate's ball maximizer as a perturbed scene."""
    layout = FlatLayout(center.n_agents, center.t_past)
    center_flat = np.concatenate([t.points.reshape(-1) for t in center.past_trajectories()])
    mask = spec.coordinate_mask(layout)
    _, argmax = box_max(surrogate, center_flat, spec.radius, mask)
    return scene_with_past(center, FlatInput(argmax, layout))


def _observe(kind: DeltaKind, center: Scene, flat_values, layout, predictor,
             k, seed, mode, references) -> float:
    scene = scene_with_past(center, FlatInput(flat_values, layout))
    if kind is DeltaKind.LABEL:
        return eval_delta_label(scene, center.agent_future_truth, predictor,
                                k=k, seed=seed)
    return eval_delta_pure(scene, center, predictor, k=k, mode=mode,
                           seed=seed, references=references)


def replay_delta(center: Scene, flat_values, predictor: Predictor,
                 kind: DeltaKind, k: int = 20, eval_seed=None,
                 mode: PureMode = PureMode.FRESH, references=None) -> float:
    """Re-run the model at a stored sample exactly as it was evaluated."""
    layout = FlatLayout(center.n_agents, center.t_past)
    return _observe(DeltaKind(kind), center, flat_values, layout, predictor,
                    k, eval_seed, mode, references)


def exceedance_frequency(center: Scene, flat_values, predictor: Predictor,
                         kind: DeltaKind, threshold: float, k: int = 20,
                         redraws: int = 100, seed=None,
                         mode: PureMode = PureMode.FRESH, references=None) -> float:
    """Fraction of fresh re-draws at a fixed input whose observed error
    exceeds the threshold. 1.0 for deterministic violations."""
    if redraws < 1:
        raise InvalidArgumentError("redraws must be >= 1")
    layout = FlatLayout(center.n_agents, center.t_past)
    kind = DeltaKind(kind)
    hits = 0
    for i in range(redraws):
        redraw_seed = None if seed is None else derive_seed(seed, _REDRAW_STREAM, i)
        value = _observe(kind, center, flat_values, layout, predictor, k,
                         redraw_seed, mode, references)
        hits += value > threshold
    return hits / redraws


def verify(surrogate: AffineSurrogate, center: Scene, spec: PerturbationSpec,
           safety_constant: float, predictor: Predictor, k: int = 20,
           seed=None, mode: PureMode = PureMode.FRESH, references=None,
           redraws: int = 100) -> Verdict:
    """Three-way robustness decision for one scene.

    YES when box maximum + margin stays below the safety constant (no
    model probes needed). Otherwise the maximizer is evaluated on the real
    model and the worst learning-phase sample is re-examined; any observed
    error above the constant is a counterexample (NO), else UNKNOWN with
    the bound gap.
    """
    if surrogate.provenance is None:
        raise InvalidArgumentError("verify needs a surrogate with provenance")
    if not np.isfinite(safety_constant):
        raise InvalidArgumentError("safety constant must be finite")
    kind = surrogate.kind
    if kind is DeltaKind.LABEL and center.agent_future_truth is None:
        raise InvalidArgumentError("label verification needs ground truth")

    layout = FlatLayout(center.n_agents, center.t_past)
    center_flat = np.concatenate([t.points.reshape(-1) for t in center.past_trajectories()])
    mask = spec.coordinate_mask(layout)
    box_value, argmax = box_max(surrogate, center_flat, spec.radius, mask)
    prov = surrogate.provenance
    pac_bound = box_value + surrogate.lambda_star
    common = dict(
        pac_bound=pac_bound,
        max_sampled_delta=prov.max_sampled_delta,
        safety_constant=float(safety_constant),
        epsilon=prov.epsilon,
        eta=prov.eta,
        box_maximum=box_value,
        kind=kind,
    )

    if pac_bound <= safety_constant:
        return Verdict(outcome=Outcome.YES, **common)

    argmax_seed = None if seed is None else derive_seed(seed, _ARGMAX_STREAM)
    argmax_delta = _observe(kind, center, argmax, layout, predictor, k,
                            argmax_seed, mode, references)
    candidates = [(argmax_delta, argmax, argmax_seed, "argmax")]
    if prov.worst_input is not None:
        candidates.append(
            (prov.max_sampled_delta, prov.worst_input, prov.worst_eval_seed, "sampled")
        )

    best = max(candidates, key=lambda c: c[0])
    if best[0] > safety_constant:
        delta, values, eval_seed, source = best
        frequency = None
        if redraws > 0:
            frequency = exceedance_frequency(
                center, values, predictor, kind, safety_constant, k=k,
                redraws=redraws, seed=seed, mode=mode, references=references,
            )
        counterexample = Counterexample(
            flat_values=values,
            scene=scene_with_past(center, FlatInput(values, layout)),
            observed_delta=delta,
            eval_seed=eval_seed,
            source=source,
            exceedance_frequency=frequency,
        )
        return Verdict(outcome=Outcome.NO, counterexample=counterexample,
                       argmax_delta=argmax_delta, **common)

    return Verdict(outcome=Outcome.UNKNOWN, gap=pac_bound - safety_constant,
                   argmax_delta=argmax_delta, **common)


def _ade_gradient(predictor, flat_values, reference_points) -> np.ndarray:
    # gradient of mean distance-to-reference through the predictor's mean
    # output; steps at zero distance contribute nothing
    out = np.asarray(predictor.mean_output_flat(flat_values), dtype=float)
    jac = np.asarray(predictor.output_jacobian(flat_values), dtype=float)
    points = out.reshape(-1, 2)
    diff = points - np.asarray(reference_points, dtype=float)
    norms = np.hypot(diff[:, 0], diff[:, 1])
    grad = np.zeros(flat_values.shape[0])
    t_future = points.shape[0]
    for t in range(t_future):
        if norms[t] > 0:
            unit = diff[t] / norms[t]
            grad += (jac[2 * t] * unit[0] + jac[2 * t + 1] * unit[1]) / t_future
    return grad


def pgd_attack(center: Scene, spec: PerturbationSpec, kind: DeltaKind,
               predictor: Predictor, steps: int = 40, step_size=None,
               grad_mode=GradMode.FINITE_DIFFERENCE, k: int = 20, seed=None,
               mode: PureMode = PureMode.FRESH, references=None,
               probe_h=None) -> Tuple[Scene, float]:
    """Projected sign-gradient ascent on the observed prediction error.

    Starts at the unperturbed scene and returns the best iterate by
    observed error. Finite-difference mode (central differences, common
    random numbers) works on any predictor; analytic mode needs the
    predictor's jacobian hook.
    """
    kind = DeltaKind(kind)
    grad_mode = GradMode(grad_mode)
    if steps < 0:
        raise InvalidArgumentError("steps must be >= 0")
    if kind is DeltaKind.LABEL and center.agent_future_truth is None:
        raise InvalidArgumentError("label attack needs ground truth")
    radius = spec.radius
    step_size = radius / 10.0 if step_size is None else float(step_size)
    probe_h = radius / 100.0 if probe_h is None else float(probe_h)
    if step_size <= 0 or probe_h <= 0:
        raise InvalidArgumentError("step_size and probe_h must be > 0")

    layout = FlatLayout(center.n_agents, center.t_past)
    center_flat = np.concatenate([t.points.reshape(-1) for t in center.past_trajectories()])
    mask = spec.coordinate_mask(layout)
    eval_seed = None if seed is None else derive_seed(seed, _ATTACK_STREAM)

    if grad_mode is GradMode.ANALYTIC:
        if not (hasattr(predictor, "output_jacobian")
                and hasattr(predictor, "mean_output_flat")):
            raise InvalidArgumentError(
                "analytic mode needs a predictor with a jacobian hook"
            )
        if kind is DeltaKind.LABEL:
            reference = center.agent_future_truth.points
        else:
            from .predictors import PredictionRequest

            anchor_seed = None if seed is None else derive_seed(seed, _ATTACK_STREAM, 1)
            reference = predictor.predict(
                PredictionRequest(center, 1, anchor_seed)
            ).samples[0].points

    def objective(values):
        return _observe(kind, center, values, layout, predictor, k,
                        eval_seed, mode, references)

    def gradient(values):
        if grad_mode is GradMode.ANALYTIC:
            return _ade_gradient(predictor, values, reference)
        grad = np.zeros(values.shape[0])
        for j in np.flatnonzero(mask):
            probe = np.zeros(values.shape[0])
            probe[j] = probe_h
            grad[j] = (objective(values + probe) - objective(values - probe)) / (2 * probe_h)
        return grad

    best_values = center_flat
    best_delta = objective(center_flat)
    current = center_flat
    for _ in range(steps):
        direction = np.sign(gradient(current))
        current = clamp_to_ball(current + step_size * np.where(mask, direction, 0.0),
                                center_flat, radius, mask=mask)
        delta = objective(current)
        if delta > best_delta:
            best_delta = delta
            best_values = current
    scene = scene_with_past(center, FlatInput(best_values, layout))
    return scene, float(best_delta)

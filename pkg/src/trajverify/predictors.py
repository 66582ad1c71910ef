"""Black-box stochastic predictor contract and built-in predictors.

A predictor is a sampling oracle: given a scene's observed past it draws K
plausible future trajectories for the agent. Built-ins cover desk-scale
testing needs: a constant-velocity baseline, an affine map with an analytic
jacobian for gradient-based attacks, and two deterministic fixtures whose
prediction-error surface is affine in the input by construction.
"""

from __future__ import annotations

import abc
import dataclasses
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np

from .core import FlatLayout, Scene, Trajectory, flatten
from .errors import InvalidArgumentError, PredictorError
from .seeding import rng_for


@dataclass(frozen=True)
class PredictionRequest:
    """One sampling call: a (possibly perturbed) scene and a draw count."""

    scene: Scene
    sample_count: int = 20
    seed: Optional[int] = None

    def __post_init__(self):
        if self.sample_count < 1:
            raise InvalidArgumentError("sample_count must be >= 1")


@dataclass(frozen=True)
class PredictionBatch:
    """K sampled future trajectories, uniform length."""

    samples: Tuple[Trajectory, ...]

    def __post_init__(self):
        if not self.samples:
            raise InvalidArgumentError("batch must contain at least one sample")
        t_f = len(self.samples[0])
        if any(len(s) != t_f for s in self.samples):
            raise InvalidArgumentError("batch samples must share one length")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def t_future(self) -> int:
        return len(self.samples[0])

    def stacked(self) -> np.ndarray:
        """All samples as one (K, T_f, 2) array."""
        return np.stack([s.points for s in self.samples])


class Predictor(abc.ABC):
    """Sampling oracle contract.

    Subclasses implement `_draw` returning a raw (K, t_future, 2) array;
    the base class enforces shape and finiteness at the boundary so bad
    outputs surface as PredictorError instead of propagating.
    """

    name = "predictor"

    @property
    @abc.abstractmethod
    def t_future(self) -> int:
        """Length of every predicted trajectory."""

    @abc.abstractmethod
    def _draw(self, scene: Scene, k: int, rng: np.random.Generator) -> np.ndarray:
        """Return raw samples, shape (k, t_future, 2)."""

    def predict(self, request: PredictionRequest) -> PredictionBatch:
        scene = request.scene
        raw = np.asarray(
            self._draw(scene, request.sample_count, rng_for(request.seed)), dtype=float
        )
        expected = (request.sample_count, self.t_future, 2)
        if raw.shape != expected:
            raise PredictorError(
                f"{self.name}: sample array has shape {raw.shape}, expected {expected}"
            )
        if not np.all(np.isfinite(raw)):
            raise PredictorError(f"{self.name}: non-finite coordinates in prediction")
        return PredictionBatch(tuple(Trajectory(s, scene.unit) for s in raw))

    def predict_many(self, requests) -> list:
        """Evaluate many requests; order of results matches order of requests."""
        return [self.predict(r) for r in requests]

    def close(self):
        """Release any held resources. No-op for in-process predictors."""


class ConstantVelocityPredictor(Predictor):
    """Extrapolates the agent's last observed step, plus optional isotropic
    Gaussian noise of scale sigma on every coordinate."""

    name = "constant-velocity"

    def __init__(self, t_future: int = 12, sigma: float = 0.0):
        if t_future < 1:
            raise InvalidArgumentError("t_future must be >= 1")
        if not np.isfinite(sigma) or sigma < 0:
            raise InvalidArgumentError("sigma must be finite and >= 0")
        self._t_future = int(t_future)
        self.sigma = float(sigma)

    @property
    def t_future(self) -> int:
        return self._t_future

    def _draw(self, scene, k, rng):
        pts = scene.agent_past.points
        if len(pts) < 2:
            raise InvalidArgumentError("constant-velocity needs at least 2 past points")
        last = pts[-1]
        vel = pts[-1] - pts[-2]
        steps = np.arange(1.0, self._t_future + 1.0)[:, None]
        mean = last[None, :] + steps * vel[None, :]
        out = np.broadcast_to(mean, (k, self._t_future, 2)).copy()
        if self.sigma > 0:
            out += rng.normal(0.0, self.sigma, size=out.shape)
        return out


class AffinePredictor(Predictor):
    """Mean output is a fixed affine map of the flattened scene.

    weight has shape (2*t_future, d) and bias (2*t_future,); the flattened
    output is weight @ vec(X) + bias, optionally plus isotropic Gaussian
    noise. Exposes the exact jacobian for analytic-gradient attacks.
    """

    name = "affine"

    def __init__(self, weight, bias, sigma: float = 0.0):
        weight = np.array(weight, dtype=float)
        bias = np.array(bias, dtype=float)
        if weight.ndim != 2 or weight.shape[0] % 2 != 0 or weight.shape[0] == 0:
            raise InvalidArgumentError("weight must be (2*t_future, d) with t_future >= 1")
        if bias.shape != (weight.shape[0],):
            raise InvalidArgumentError("bias length must match weight rows")
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise InvalidArgumentError("weight and bias must be finite")
        if not np.isfinite(sigma) or sigma < 0:
            raise InvalidArgumentError("sigma must be finite and >= 0")
        weight.flags.writeable = False
        bias.flags.writeable = False
        self.weight = weight
        self.bias = bias
        self.sigma = float(sigma)
        self._t_future = weight.shape[0] // 2

    @property
    def t_future(self) -> int:
        return self._t_future

    @property
    def input_dim(self) -> int:
        return self.weight.shape[1]

    def mean_output_flat(self, flat_values: np.ndarray) -> np.ndarray:
        flat_values = np.asarray(flat_values, dtype=float)
        if flat_values.shape != (self.input_dim,):
            raise InvalidArgumentError(
                f"input has dimension {flat_values.shape}, expected ({self.input_dim},)"
            )
        return self.weight @ flat_values + self.bias

    def output_jacobian(self, flat_values=None) -> np.ndarray:
        """d(flattened output)/d(flattened input); constant for this model."""
        return self.weight

    def _draw(self, scene, k, rng):
        flat = flatten(scene).values
        mean = self.mean_output_flat(flat).reshape(self._t_future, 2)
        out = np.broadcast_to(mean, (k, self._t_future, 2)).copy()
        if self.sigma > 0:
            out += rng.normal(0.0, self.sigma, size=out.shape)
        return out


class AffineDistanceFixture(Predictor):
    """Deterministic predictor whose prediction error is exactly affine on a
    declared input ball.

    Every output step sits at ``anchor + margin(X) * e_x`` with
    margin(X) = bias + weights . (vec(X) - vec(center)). Against the
    anchor-valued ground truth returned by :meth:`truth`, the average
    displacement equals |margin(X)|, so whenever the margin stays positive
    on the ball (bias > r * l1-norm of weights) the error surface is the
    affine function margin(X) itself, with gradient exactly ``weights``.
    """

    name = "affine-distance"

    def __init__(self, center: Scene, weights, bias: float,
                 anchor=(0.0, 0.0), t_future: int = 1):
        if t_future < 1:
            raise InvalidArgumentError("t_future must be >= 1")
        layout = FlatLayout(center.n_agents, center.t_past)
        weights = np.array(weights, dtype=float)
        if weights.shape != (layout.dim,):
            raise InvalidArgumentError(
                f"weights must have length {layout.dim}, got {weights.shape}"
            )
        anchor = np.array(anchor, dtype=float)
        if anchor.shape != (2,) or not np.all(np.isfinite(anchor)):
            raise InvalidArgumentError("anchor must be a finite (x, y) point")
        if not (np.isfinite(bias) and np.all(np.isfinite(weights))):
            raise InvalidArgumentError("bias and weights must be finite")
        weights.flags.writeable = False
        anchor.flags.writeable = False
        self.center = center
        self.layout = layout
        self.weights = weights
        self.bias = float(bias)
        self.anchor = anchor
        self._t_future = int(t_future)
        self._center_flat = flatten(center).values

    @property
    def t_future(self) -> int:
        return self._t_future

    def margin(self, flat_values: np.ndarray) -> float:
        flat_values = np.asarray(flat_values, dtype=float)
        if flat_values.shape != (self.layout.dim,):
            raise InvalidArgumentError("input dimension mismatch")
        return self.bias + float(self.weights @ (flat_values - self._center_flat))

    def expected_delta(self, flat_values) -> float:
        """Closed-form prediction error against :meth:`truth`."""
        return abs(self.margin(flat_values))

    def truth(self) -> Trajectory:
        return Trajectory(np.tile(self.anchor, (self._t_future, 1)), self.center.unit)

    def scene(self) -> Scene:
        """The center scene with this fixture's ground truth attached."""
        return dataclasses.replace(self.center, agent_future_truth=self.truth())

    def output_jacobian(self, flat_values=None) -> np.ndarray:
        jac = np.zeros((2 * self._t_future, self.layout.dim))
        jac[0::2, :] = self.weights[None, :]
        return jac

    def mean_output_flat(self, flat_values: np.ndarray) -> np.ndarray:
        point = self.anchor + np.array([self.margin(flat_values), 0.0])
        return np.tile(point, self._t_future)

    def _draw(self, scene, k, rng):
        point = self.anchor + np.array([self.margin(flatten(scene).values), 0.0])
        return np.tile(point, (k, self._t_future, 1))


class NeighborSensitivePredictor(AffineDistanceFixture):
    """Affine-distance fixture with weights given per (agent, timestep, axis).

    Agent index 0 is the predicted agent; 1..N index neighbors. Coordinates
    not named in the mapping get weight zero, so perturbing them cannot
    change the output. Ground truth for input-attribution checks.
    """

    name = "neighbor-sensitive"

    def __init__(self, center: Scene,
                 coordinate_weights: Mapping[Tuple[int, int, int], float],
                 bias: float, anchor=(0.0, 0.0), t_future: int = 12):
        layout = FlatLayout(center.n_agents, center.t_past)
        weights = np.zeros(layout.dim)
        for (agent, timestep, axis), value in coordinate_weights.items():
            weights[layout.index_of(agent, timestep, axis)] = float(value)
        super().__init__(center, weights, bias, anchor=anchor, t_future=t_future)

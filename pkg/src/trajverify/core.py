"""Trajectory and scene types plus the displacement metrics.

Coordinates are 64-bit floats in scene units (meters for ETH/UCY-style
data, pixels for drone-footage data). All types are immutable values;
every operation here is a pure function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError


class Unit(enum.Enum):
    METERS = "meters"
    PIXELS = "pixels"


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgumentError(f"expected an (T, 2) array of points, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidArgumentError("a trajectory needs at least one point")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("trajectory coordinates must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of 2-D positions sharing one unit."""

    points: np.ndarray
    unit: Unit = Unit.METERS

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        if not isinstance(self.unit, Unit):
            object.__setattr__(self, "unit", Unit(self.unit))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.unit is other.unit and np.array_equal(self.points, other.points)

    def translated(self, dx: float, dy: float) -> "Trajectory":
        return Trajectory(self.points + np.array([dx, dy]), self.unit)


@dataclass(frozen=True)
class SceneMeta:
    scene_name: str = ""
    frame: int = 0
    pedestrian: int = 0


@dataclass(frozen=True)
class Scene:
    """One verification instance: the agent's history, its neighbours'
    histories over the same window, and (optionally) the agent's true
    future."""

    agent_past: Trajectory
    neighbors_past: tuple = ()
    agent_future_truth: Optional[Trajectory] = None
    meta: SceneMeta = field(default_factory=SceneMeta)

    def __post_init__(self):
        object.__setattr__(self, "neighbors_past", tuple(self.neighbors_past))
        t_p = len(self.agent_past)
        for i, nb in enumerate(self.neighbors_past):
            if len(nb) != t_p:
                raise InvalidArgumentError(
                    f"neighbor {i} has length {len(nb)}, agent past has length {t_p}"
                )
            if nb.unit is not self.agent_past.unit:
                raise InvalidArgumentError(f"neighbor {i} unit differs from agent unit")
        if self.agent_future_truth is not None:
            if self.agent_future_truth.unit is not self.agent_past.unit:
                raise InvalidArgumentError("future truth unit differs from agent unit")

    @property
    def t_past(self) -> int:
        return len(self.agent_past)

    @property
    def n_neighbors(self) -> int:
        return len(self.neighbors_past)

    @property
    def n_agents(self) -> int:
        return 1 + len(self.neighbors_past)

    @property
    def unit(self) -> Unit:
        return self.agent_past.unit

    def past_trajectories(self) -> tuple:
        return (self.agent_past,) + self.neighbors_past


@dataclass(frozen=True)
class FlatLayout:
    """Index layout of a flattened scene past.

    Flat index = agent * (2 * t_past) + timestep * 2 + axis, with agent 0
    the to-be-predicted agent, neighbours following in order, and axis 0
    the x coordinate. This ordering is canonical for the whole package.
    """

    n_agents: int
    t_past: int

    def __post_init__(self):
        if self.n_agents < 1 or self.t_past < 1:
            raise InvalidArgumentError("layout needs n_agents >= 1 and t_past >= 1")

    @property
    def dim(self) -> int:
        return 2 * self.t_past * self.n_agents

    def index_of(self, agent: int, timestep: int, axis: int) -> int:
        if not (0 <= agent < self.n_agents):
            raise InvalidArgumentError(f"agent index {agent} out of range")
        if not (0 <= timestep < self.t_past):
            raise InvalidArgumentError(f"timestep {timestep} out of range")
        if axis not in (0, 1):
            raise InvalidArgumentError("axis must be 0 (x) or 1 (y)")
        return agent * 2 * self.t_past + timestep * 2 + axis

    def unravel(self, index: int) -> tuple:
        """Inverse of :meth:`index_of`: flat index -> (agent, timestep, axis)."""
        if not (0 <= index < self.dim):
            raise InvalidArgumentError(f"flat index {index} out of range for dim {self.dim}")
        agent, rest = divmod(index, 2 * self.t_past)
        timestep, axis = divmod(rest, 2)
        return agent, timestep, axis


@dataclass(frozen=True)
class FlatInput:
    """A scene past flattened to one real vector of dimension
    2 * t_past * n_agents."""

    values: np.ndarray
    layout: FlatLayout

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidArgumentError("flat input values must be a 1-D vector")
        if arr.shape[0] != self.layout.dim:
            raise InvalidArgumentError(
                f"flat input has {arr.shape[0]} values, layout expects {self.layout.dim}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.layout.dim


def ade(a: Trajectory, b: Trajectory) -> float:
    """Average displacement error: mean Euclidean distance between
    corresponding points of two equal-length trajectories."""
    if len(a) != len(b):
        raise InvalidArgumentError(f"trajectory lengths differ: {len(a)} vs {len(b)}")
    if a.unit is not b.unit:
        raise InvalidArgumentError(f"trajectory units differ: {a.unit} vs {b.unit}")
    diffs = a.points - b.points
    return float(np.mean(np.hypot(diffs[:, 0], diffs[:, 1])))


def ade_k(candidates: Sequence[Trajectory], reference: Trajectory) -> float:
    """Best-of-K displacement error: the minimum ADE between any candidate
    and the reference."""
    if len(candidates) == 0:
        raise InvalidArgumentError("ade_k needs at least one candidate trajectory")
    return min(ade(c, reference) for c in candidates)


def flatten(scene: Scene) -> FlatInput:
    """Flatten a scene's past trajectories (agent first, then neighbours)
    into one vector, agent-major, timestep next, x before y."""
    layout = FlatLayout(scene.n_agents, scene.t_past)
    stacked = np.concatenate([t.points.reshape(-1) for t in scene.past_trajectories()])
    return FlatInput(stacked, layout)


def unflatten(flat: FlatInput, unit: Unit = Unit.METERS) -> tuple:
    """Invert :func:`flatten`: rebuild the (agent, neighbours...) past
    trajectories from a flat vector."""
    layout = flat.layout
    per_agent = flat.values.reshape(layout.n_agents, layout.t_past, 2)
    return tuple(Trajectory(pts, unit) for pts in per_agent)


def scene_with_past(scene: Scene, flat: FlatInput) -> Scene:
    """A copy of ``scene`` whose past trajectories are replaced by the
    flattened values; future truth and metadata are preserved."""
    if flat.layout != FlatLayout(scene.n_agents, scene.t_past):
        raise InvalidArgumentError("flat layout does not match the scene")
    trajs = unflatten(flat, scene.unit)
    return Scene(
        agent_past=trajs[0],
        neighbors_past=trajs[1:],
        agent_future_truth=scene.agent_future_truth,
        meta=scene.meta,
    )

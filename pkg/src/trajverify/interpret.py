"""Sensitivity attribution from the learned surrogate.

The surrogate's coefficient magnitudes, normalized to [0, 1] by their
maximum, say how strongly each past coordinate drives the prediction
error. Per-step sensitivity aggregates x/y by max; a trajectory's score is
the sum of its member sensitivities. The renderer draws every trajectory
with arrows scaled by per-step sensitivity plus a heatmap inset of the
top-ranked trajectories, and writes a machine-readable CSV sidecar.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .core import FlatLayout, Scene
from .errors import InvalidArgumentError, VerifierError
from .learning import AffineSurrogate


@dataclass(frozen=True)
class PathRank:
    agent: int
    score: float  # sum of the path's coordinate sensitivities
    mean: float   # same, averaged per coordinate


@dataclass(frozen=True)
class SensitivityMap:
    """Per-coordinate sensitivities in [0, 1], shaped (agent, timestep,
    axis); agent 0 is the predicted agent."""

    values: np.ndarray
    layout: FlatLayout

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.layout.n_agents, self.layout.t_past, 2)
        if values.shape != expected:
            raise InvalidArgumentError(f"sensitivity shape {values.shape}, expected {expected}")
        if values.size and (values.min() < 0 or values.max() > 1):
            raise InvalidArgumentError("sensitivities must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def per_step(self) -> np.ndarray:
        """(agent, timestep) sensitivity: max over the two axes."""
        return self.values.max(axis=2)

    def path_scores(self) -> np.ndarray:
        return self.values.sum(axis=(1, 2))

    def ranked_paths(self) -> List[PathRank]:
        """All paths by score descending, ties broken by agent index."""
        scores = self.path_scores()
        per_path = self.layout.t_past * 2
        order = sorted(range(self.layout.n_agents), key=lambda a: (-scores[a], a))
        return [PathRank(a, float(scores[a]), float(scores[a] / per_path)) for a in order]

    def top_paths(self, n: int = 3) -> List[PathRank]:
        return self.ranked_paths()[:n]

    def critical_step(self) -> Tuple[int, int]:
        """(agent, timestep) of the highest per-step sensitivity; ties go
        to the lowest agent, then the earliest step."""
        steps = self.per_step()
        agent, timestep = np.unravel_index(int(np.argmax(steps)), steps.shape)
        return int(agent), int(timestep)


def sensitivity(surrogate: AffineSurrogate, layout: FlatLayout) -> SensitivityMap:
    """Normalized coefficient magnitudes: s_i = |alpha_i| / max_j |alpha_j|,
    all zeros when alpha is identically zero."""
    if surrogate.dim != layout.dim:
        raise InvalidArgumentError(
            f"surrogate dimension {surrogate.dim} does not match layout {layout.dim}"
        )
    magnitude = np.abs(surrogate.alpha)
    peak = magnitude.max() if magnitude.size else 0.0
    values = magnitude / peak if peak > 0 else np.zeros_like(magnitude)
    return SensitivityMap(values.reshape(layout.n_agents, layout.t_past, 2), layout)


def write_sensitivity_csv(path, smap: SensitivityMap) -> None:
    """CSV sidecar: one row per coordinate, header agent,timestep,axis,
    sensitivity, in flat-layout order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "timestep", "axis", "sensitivity"])
        for agent in range(smap.layout.n_agents):
            for timestep in range(smap.layout.t_past):
                for axis in (0, 1):
                    writer.writerow(
                        [agent, timestep, axis,
                         repr(float(smap.values[agent, timestep, axis]))]
                    )


def read_sensitivity_csv(path) -> SensitivityMap:
    """Inverse of :func:`write_sensitivity_csv`."""
    entries = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["agent", "timestep", "axis", "sensitivity"]:
            raise InvalidArgumentError(f"unexpected CSV header in {path}")
        for row in reader:
            agent, timestep, axis = int(row[0]), int(row[1]), int(row[2])
            entries[(agent, timestep, axis)] = float(row[3])
    if not entries:
        raise InvalidArgumentError(f"no sensitivity rows in {path}")
    n_agents = max(k[0] for k in entries) + 1
    t_past = max(k[1] for k in entries) + 1
    layout = FlatLayout(n_agents, t_past)
    values = np.zeros((n_agents, t_past, 2))
    if len(entries) != values.size:
        raise InvalidArgumentError(f"incomplete sensitivity grid in {path}")
    for (agent, timestep, axis), value in entries.items():
        values[agent, timestep, axis] = value
    return SensitivityMap(values, layout)


def _arrow_directions(points: np.ndarray) -> np.ndarray:
    # arrow at step t points along the step taken from t (last step reuses
    # the previous direction); stationary steps point along +x
    t = points.shape[0]
    dirs = np.zeros_like(points)
    if t >= 2:
        dirs[:-1] = points[1:] - points[:-1]
        dirs[-1] = dirs[-2] if t >= 2 else dirs[-1]
    norms = np.hypot(dirs[:, 0], dirs[:, 1])
    still = norms == 0
    dirs[still] = (1.0, 0.0)
    norms[still] = 1.0
    return dirs / norms[:, None]


def render(smap: SensitivityMap, scene: Scene, out_path, format: str = "svg"):
    """Write the sensitivity plot and its CSV sidecar.

    Returns (plot_path, csv_path). The plot shows each trajectory with
    arrows sized by per-step sensitivity and an inset heatmap of the top-3
    paths annotated with their scores.
    """
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    if FlatLayout(scene.n_agents, scene.t_past) != smap.layout:
        raise InvalidArgumentError("scene does not match the sensitivity layout")
    out_path = Path(out_path).with_suffix("." + format.lstrip("."))
    csv_path = out_path.with_suffix(".csv")

    trajectories = scene.past_trajectories()
    all_points = np.vstack([t.points for t in trajectories])
    extent = max(all_points.max(axis=0) - all_points.min(axis=0))
    base = 0.08 * (extent if extent > 0 else 1.0)

    fig, ax = plt.subplots(figsize=(7, 6))
    per_step = smap.per_step()
    cmap = plt.get_cmap("viridis")
    for agent, traj in enumerate(trajectories):
        pts = traj.points
        label = "agent" if agent == 0 else f"neighbor {agent}"
        color = cmap(0.15 + 0.7 * agent / max(1, scene.n_agents - 1)) \
            if scene.n_agents > 1 else cmap(0.15)
        ax.plot(pts[:, 0], pts[:, 1], "-o", color=color, markersize=3,
                linewidth=1.0, label=label)
        dirs = _arrow_directions(pts)
        sizes = base * (0.2 + 0.8 * per_step[agent])
        ax.quiver(pts[:, 0], pts[:, 1], dirs[:, 0] * sizes, dirs[:, 1] * sizes,
                  angles="xy", scale_units="xy", scale=1.0, color=color,
                  width=0.004)
    if scene.agent_future_truth is not None:
        truth = scene.agent_future_truth.points
        ax.plot(truth[:, 0], truth[:, 1], "--", color="gray", linewidth=1.0,
                label="ground truth")
    ax.set_xlabel(f"x ({scene.unit.value})")
    ax.set_ylabel(f"y ({scene.unit.value})")
    ax.set_title("input sensitivity")
    ax.legend(loc="upper left", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")

    top = smap.top_paths(3)
    inset = fig.add_axes([0.62, 0.14, 0.30, 0.18])
    heat = np.stack([per_step[p.agent] for p in top])
    inset.imshow(heat, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    inset.set_yticks(range(len(top)))
    inset.set_yticklabels(
        [("agent" if p.agent == 0 else f"nb {p.agent}") + f"  {p.score:.2f}"
         for p in top], fontsize=7)
    inset.set_xticks([])
    inset.set_title("top paths (score = sum)", fontsize=8)

    try:
        fig.savefig(out_path, format=format)
    except OSError as exc:
        raise VerifierError(f"cannot write plot to {out_path}: {exc}") from exc
    finally:
        plt.close(fig)
    try:
        write_sensitivity_csv(csv_path, smap)
    except OSError as exc:
        raise VerifierError(f"cannot write CSV to {csv_path}: {exc}") from exc
    return out_path, csv_path

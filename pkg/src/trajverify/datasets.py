"""Plain-text trajectory dataset parsing and scene extraction.

Input files follow the common pedestrian-benchmark layout: one record per
line, whitespace-separated columns ``frame pedestrian x y`` (extra columns
ignored). Frames are sampled on a fixed stride; ETH/UCY-style files use a
stride of 10 frame ids per step, drone-footage annotations typically 12.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .core import Scene, SceneMeta, Trajectory, Unit
from .errors import DatasetError, InvalidArgumentError, SceneExtractionError

ETH_UCY_FRAME_STRIDE = 10
SDD_FRAME_STRIDE = 12


@dataclass(frozen=True)
class RawRecord:
    frame: int
    pedestrian: int
    x: float
    y: float

    def __post_init__(self):
        if self.frame < 0:
            raise InvalidArgumentError(f"negative frame id {self.frame}")
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidArgumentError("record coordinates must be finite")


@dataclass(frozen=True)
class SceneQuery:
    """Selects one verification scene: the pedestrian to predict and the
    frame its observation window ends at."""

    frame: int
    pedestrian: int
    t_past: int = 8
    t_future: int = 12
    frame_stride: int = ETH_UCY_FRAME_STRIDE

    def __post_init__(self):
        if self.t_past < 2:
            raise InvalidArgumentError("t_past must be >= 2")
        if self.t_future < 1:
            raise InvalidArgumentError("t_future must be >= 1")
        if self.frame_stride < 1:
            raise InvalidArgumentError("frame_stride must be >= 1")

    def past_frames(self) -> list:
        start = self.frame - (self.t_past - 1) * self.frame_stride
        return [start + i * self.frame_stride for i in range(self.t_past)]

    def future_frames(self) -> list:
        return [self.frame + (i + 1) * self.frame_stride for i in range(self.t_future)]


class TrajectoryStore:
    """Immutable record store indexed by frame and by pedestrian."""

    def __init__(self, records, unit: Unit, name: str = ""):
        self.unit = Unit(unit)
        self.name = name
        self._by_key: Dict[Tuple[int, int], RawRecord] = {}
        by_frame: Dict[int, list] = {}
        by_ped: Dict[int, list] = {}
        for rec in sorted(records, key=lambda r: (r.frame, r.pedestrian)):
            key = (rec.frame, rec.pedestrian)
            if key in self._by_key:
                raise DatasetError(f"duplicate record for frame {rec.frame}, pedestrian {rec.pedestrian}")
            self._by_key[key] = rec
            by_frame.setdefault(rec.frame, []).append(rec)
            by_ped.setdefault(rec.pedestrian, []).append(rec)
        self._by_frame = by_frame
        self._by_ped = by_ped

    def __len__(self) -> int:
        return len(self._by_key)

    @property
    def frames(self) -> list:
        return sorted(self._by_frame)

    @property
    def pedestrians(self) -> list:
        return sorted(self._by_ped)

    def lookup(self, frame: int, pedestrian: int):
        return self._by_key.get((frame, pedestrian))

    def records_for_pedestrian(self, pedestrian: int) -> list:
        return list(self._by_ped.get(pedestrian, ()))

    def pedestrians_at(self, frame: int) -> list:
        return sorted(r.pedestrian for r in self._by_frame.get(frame, ()))


def load_dataset(path, unit: Unit = Unit.METERS, name: str = "") -> TrajectoryStore:
    """Parse a whitespace-separated ``frame pedestrian x y`` file.

    Raises :class:`DatasetError` naming the 1-based line number on any
    malformed line, and on duplicate (frame, pedestrian) pairs.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) < 4:
                raise DatasetError(
                    f"expected at least 4 columns (frame pedestrian x y), got {len(fields)}",
                    line=lineno,
                )
            try:
                frame = _int_field(fields[0])
                ped = _int_field(fields[1])
                x = float(fields[2])
                y = float(fields[3])
            except ValueError as exc:
                raise DatasetError(str(exc), line=lineno) from exc
            try:
                records.append(RawRecord(frame, ped, x, y))
            except InvalidArgumentError as exc:
                raise DatasetError(str(exc), line=lineno) from exc
    return TrajectoryStore(records, unit=unit, name=name or str(path))


def _int_field(text: str) -> int:
    # benchmark files often carry integer ids as "10.0"
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer id, got {text!r}")
    return int(value)


def extract_scene(store: TrajectoryStore, query: SceneQuery) -> Scene:
    """Build the verification scene for ``query``.

    The agent must be observed at every stride-spaced past frame ending at
    ``query.frame``; otherwise a :class:`SceneExtractionError` is raised.
    Neighbours are exactly the other pedestrians observed at all past
    frames. Ground truth is attached when the agent is observed at all
    future frames, and omitted otherwise.
    """
    past_frames = query.past_frames()
    if past_frames[0] < 0:
        raise SceneExtractionError(
            f"query frame {query.frame} leaves no room for {query.t_past} past frames"
        )

    agent_points = []
    for f in past_frames:
        rec = store.lookup(f, query.pedestrian)
        if rec is None:
            raise SceneExtractionError(
                f"pedestrian {query.pedestrian} has no record at required past frame {f}"
            )
        agent_points.append((rec.x, rec.y))
    agent_past = Trajectory(agent_points, store.unit)

    neighbors = []
    candidates = sorted(
        {r.pedestrian for f in past_frames for r in store._by_frame.get(f, ())}
        - {query.pedestrian}
    )
    for ped in candidates:
        recs = [store.lookup(f, ped) for f in past_frames]
        if any(r is None for r in recs):
            continue
        neighbors.append(Trajectory([(r.x, r.y) for r in recs], store.unit))

    truth = None
    future_recs = [store.lookup(f, query.pedestrian) for f in query.future_frames()]
    if all(r is not None for r in future_recs):
        truth = Trajectory([(r.x, r.y) for r in future_recs], store.unit)

    return Scene(
        agent_past=agent_past,
        neighbors_past=tuple(neighbors),
        agent_future_truth=truth,
        meta=SceneMeta(scene_name=store.name, frame=query.frame, pedestrian=query.pedestrian),
    )

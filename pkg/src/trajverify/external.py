"""Client for external predictor processes speaking newline-delimited JSON
over stdin/stdout.

The protocol: a handshake {"op":"info"} returns the process's window
lengths and batch capacity; {"op":"predict","seed":...,"k":...,"scenes":
[...]} returns k sampled futures per scene; {"op":"shutdown"} asks the
process to exit. Any error is replied as {"error": "..."}. One JSON
document per line in each direction.
"""

from __future__ import annotations

import json
import queue
import select
import shlex
import subprocess
import threading
from typing import List, Optional, Sequence

import numpy as np

from .core import Scene, Trajectory
from .errors import InvalidArgumentError, PredictorError, ProtocolError
from .predictors import PredictionBatch, PredictionRequest, Predictor

DEFAULT_TIMEOUT = 300.0


class WireClient:
    """One child process and its NDJSON request/reply channel."""

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        if isinstance(command, str):
            command = shlex.split(command)
        if not command:
            raise InvalidArgumentError("empty external predictor command")
        self.command = list(command)
        self.timeout = float(timeout)
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise PredictorError(f"cannot start {self.command[0]}: {exc}") from exc

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None

    def send(self, message: dict) -> None:
        if not self.alive:
            raise ProtocolError("external predictor process has exited")
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"external predictor pipe closed: {exc}") from exc

    def recv_raw(self) -> dict:
        """The next reply as a dict, error replies included."""
        stream = self._proc.stdout
        ready, _, _ = select.select([stream], [], [], self.timeout)
        if not ready:
            raise PredictorError(
                f"external predictor reply timed out after {self.timeout} s"
            )
        line = stream.readline()
        if line == "":
            raise ProtocolError("external predictor closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"external predictor sent invalid JSON: {exc}") from exc
        if not isinstance(reply, dict):
            raise ProtocolError("external predictor reply is not a JSON object")
        return reply

    def recv(self) -> dict:
        reply = self.recv_raw()
        if "error" in reply:
            raise PredictorError(f"external predictor error: {reply['error']}")
        return reply

    def call(self, message: dict) -> dict:
        self.send(message)
        return self.recv()

    def close(self, graceful: bool = True) -> None:
        if self.alive and graceful:
            try:
                self.send({"op": "shutdown"})
            except (ProtocolError, PredictorError):
                pass
        try:
            self._proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def scene_payload(scene: Scene) -> dict:
    return {
        "agent": scene.agent_past.points.tolist(),
        "neighbors": [nb.points.tolist() for nb in scene.neighbors_past],
    }


class ExternalPredictor(Predictor):
    """Predictor backed by an external process.

    Consecutive requests sharing a sample count are packed into wire
    batches of at most the handshake-declared max_batch scenes. The batch
    seed is the first request's seed; per-scene stream derivation inside a
    batch is the adapter's responsibility.
    """

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self._client = WireClient(command, timeout=timeout)
        try:
            info = self._client.call({"op": "info"})
        except (PredictorError, ProtocolError):
            self._client.close(graceful=False)
            raise
        try:
            self.t_past = int(info["t_past"])
            self._t_future = int(info["t_future"])
            self.max_batch = int(info["max_batch"])
        except (KeyError, TypeError, ValueError) as exc:
            self._client.close(graceful=False)
            raise ProtocolError(f"malformed info reply {info!r}") from exc
        if self.t_past < 1 or self._t_future < 1 or self.max_batch < 1:
            self._client.close(graceful=False)
            raise ProtocolError(f"info reply out of range: {info!r}")
        self.name = str(info.get("name", self._client.command[0]))

    @property
    def t_future(self) -> int:
        return self._t_future

    def _draw(self, scene, k, rng):
        raise NotImplementedError("external predictions bypass _draw")

    def predict(self, request: PredictionRequest) -> PredictionBatch:
        return self.predict_many([request])[0]

    def predict_many(self, requests: Sequence[PredictionRequest]) -> List[PredictionBatch]:
        requests = list(requests)
        out: List[Optional[PredictionBatch]] = [None] * len(requests)
        for req in requests:
            if req.scene.t_past != self.t_past:
                raise PredictorError(
                    f"scene has {req.scene.t_past} past steps, adapter expects {self.t_past}"
                )
        start = 0
        while start < len(requests):
            k = requests[start].sample_count
            stop = start
            while (stop < len(requests)
                   and requests[stop].sample_count == k
                   and stop - start < self.max_batch):
                stop += 1
            chunk = requests[start:stop]
            message = {
                "op": "predict",
                "k": k,
                "scenes": [scene_payload(r.scene) for r in chunk],
            }
            if chunk[0].seed is not None:
                message["seed"] = int(chunk[0].seed)
            reply = self._client.call(message)
            predictions = reply.get("predictions")
            if not isinstance(predictions, list) or len(predictions) != len(chunk):
                raise ProtocolError(
                    f"expected {len(chunk)} prediction groups, got "
                    f"{len(predictions) if isinstance(predictions, list) else type(predictions)}"
                )
            for offset, (req, scene_preds) in enumerate(zip(chunk, predictions)):
                out[start + offset] = self._parse_batch(scene_preds, req)
            start = stop
        return out

    def _parse_batch(self, scene_preds, request: PredictionRequest) -> PredictionBatch:
        arr = np.asarray(scene_preds, dtype=float)
        expected = (request.sample_count, self._t_future, 2)
        if arr.shape != expected:
            raise ProtocolError(
                f"{self.name}: prediction shape {arr.shape}, expected {expected}"
            )
        if not np.all(np.isfinite(arr)):
            raise ProtocolError(f"{self.name}: non-finite prediction coordinates")
        unit = request.scene.unit
        return PredictionBatch(tuple(Trajectory(p, unit) for p in arr))

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class ExternalPredictorPool(Predictor):
    """A fixed pool of external predictor processes sharing one command.

    predict() checks a connection out of the pool, so concurrent callers
    (e.g. parallel sampling workers) are served by distinct processes.
    """

    def __init__(self, command, size: int = 2, timeout: float = DEFAULT_TIMEOUT):
        if size < 1:
            raise InvalidArgumentError("pool size must be >= 1")
        self._members: List[ExternalPredictor] = []
        self._idle: "queue.Queue[ExternalPredictor]" = queue.Queue()
        self._lock = threading.Lock()
        try:
            for _ in range(size):
                member = ExternalPredictor(command, timeout=timeout)
                self._members.append(member)
                self._idle.put(member)
        except Exception:
            self.close()
            raise
        first = self._members[0]
        self.t_past = first.t_past
        self._t_future = first.t_future
        self.max_batch = first.max_batch
        self.name = first.name

    @property
    def t_future(self) -> int:
        return self._t_future

    def _draw(self, scene, k, rng):
        raise NotImplementedError("external predictions bypass _draw")

    def predict(self, request: PredictionRequest) -> PredictionBatch:
        member = self._idle.get()
        try:
            return member.predict(request)
        finally:
            self._idle.put(member)

    def predict_many(self, requests):
        member = self._idle.get()
        try:
            return member.predict_many(requests)
        finally:
            self._idle.put(member)

    def close(self):
        with self._lock:
            members, self._members = self._members, []
        for member in members:
            member.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

"""Reference external predictor speaking the verifier's stdio protocol.

The verifier drives foreign forecasting models through a line-oriented JSON
protocol: one request object per stdin line, one reply object per stdout
line. This module answers that protocol with a dependency-free constant
velocity model plus optional Gaussian noise, and doubles as the working
example for wrapping a real model (see template.py).

Requests and replies:

    {"op": "info"}
        -> {"t_past": 8, "t_future": 12, "max_batch": 64, "name": ...}
    {"op": "predict", "k": K, "seed": S, "scenes": [scene, ...]}
        -> {"predictions": [[K trajectories of t_future [x, y] points], ...]}
    {"op": "shutdown"}
        -> process exits with status 0

A scene is {"agent": [[x, y] * t_past], "neighbors": [[[x, y] * t_past],
...]}. "seed" is optional; omitted means non-reproducible draws. Malformed
requests get {"error": reason} and the loop keeps serving. Unknown keys in
otherwise valid requests are ignored.
"""

import argparse
import json
import math
import random
import sys
from dataclasses import dataclass


@dataclass(frozen=True)
class AdapterConfig:
    t_past: int = 8
    t_future: int = 12
    noise_sigma: float = 0.05
    max_batch: int = 64
    name: str = "constant-velocity-adapter"

    def __post_init__(self):
        if self.t_past < 1:
            raise ValueError("t_past must be >= 1")
        if self.t_future < 1:
            raise ValueError("t_future must be >= 1")
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError("noise_sigma must be finite and >= 0")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


def sample_rng(seed, scene_index, sample_index):
    """Counter-based stream: one generator per (scene, sample) pair.

    Identical seeded requests must produce identical replies, and each
    drawn trajectory gets an independent stream, so the stream key is the
    request seed combined with the two loop counters.
    """
    if seed is None:
        return random.Random()
    return random.Random((seed * 2 ** 64) + (scene_index * 2 ** 32) + sample_index)


class ConstantVelocityModel:
    """Extrapolates the agent's last observed step t_future times.

    With noise_sigma > 0, every predicted coordinate is perturbed by
    independent Gaussian noise from the stream for its (scene, sample)
    pair. Neighbors do not influence this model.
    """

    def __init__(self, t_future, noise_sigma=0.0):
        self.t_future = t_future
        self.noise_sigma = noise_sigma

    def predict_k(self, agent, neighbors, k, rng_factory):
        last_x, last_y = agent[-1]
        prev_x, prev_y = agent[-2]
        vx = last_x - prev_x
        vy = last_y - prev_y
        trajectories = []
        for j in range(k):
            rng = rng_factory(j)
            points = []
            for step in range(1, self.t_future + 1):
                x = last_x + step * vx
                y = last_y + step * vy
                if self.noise_sigma > 0:
                    x += rng.gauss(0.0, self.noise_sigma)
                    y += rng.gauss(0.0, self.noise_sigma)
                points.append([x, y])
            trajectories.append(points)
        return trajectories


class RequestError(Exception):
    """Raised on a malformed request; becomes an {"error": ...} reply."""


def _parse_point(obj, where):
    if (not isinstance(obj, (list, tuple)) or len(obj) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in obj)):
        raise RequestError(f"{where} must be [x, y] number pairs")
    x, y = float(obj[0]), float(obj[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise RequestError(f"{where} coordinates must be finite")
    return x, y


def _parse_trajectory(obj, length, where):
    if not isinstance(obj, list) or len(obj) != length:
        raise RequestError(f"{where} must list exactly {length} points")
    return [_parse_point(p, where) for p in obj]


def _parse_scene(obj, t_past, index):
    if not isinstance(obj, dict):
        raise RequestError(f"scene {index} must be an object")
    if "agent" not in obj:
        raise RequestError(f"scene {index} is missing \"agent\"")
    agent = _parse_trajectory(obj["agent"], t_past, f"scene {index} agent")
    neighbors = obj.get("neighbors", [])
    if not isinstance(neighbors, list):
        raise RequestError(f"scene {index} neighbors must be a list")
    parsed = [_parse_trajectory(nb, t_past, f"scene {index} neighbor {i}")
              for i, nb in enumerate(neighbors)]
    return agent, parsed


def _parse_predict(request, config):
    k = request.get("k")
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise RequestError("predict requires an integer k >= 1")
    seed = request.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise RequestError("seed must be an integer")
    scenes = request.get("scenes")
    if not isinstance(scenes, list) or not scenes:
        raise RequestError("predict requires a non-empty scenes list")
    if len(scenes) > config.max_batch:
        raise RequestError(f"at most {config.max_batch} scenes per request")
    parsed = [_parse_scene(s, config.t_past, i) for i, s in enumerate(scenes)]
    return k, seed, parsed


def handle_request(line, config, model):
    """Returns (reply dict or None, keep_serving flag)."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"error": f"invalid JSON: {exc.msg}"}, True
    if not isinstance(request, dict):
        return {"error": "request must be a JSON object"}, True

    op = request.get("op")
    if op == "info":
        return {"t_past": config.t_past, "t_future": config.t_future,
                "max_batch": config.max_batch, "name": config.name}, True
    if op == "shutdown":
        return None, False
    if op == "predict":
        try:
            k, seed, scenes = _parse_predict(request, config)
        except RequestError as exc:
            return {"error": str(exc)}, True
        predictions = []
        for i, (agent, neighbors) in enumerate(scenes):
            factory = lambda j, i=i: sample_rng(seed, i, j)
            predictions.append(model.predict_k(agent, neighbors, k, factory))
        return {"predictions": predictions}, True
    if op is None:
        return {"error": "request is missing \"op\""}, True
    return {"error": f"unknown op {op!r}"}, True


def serve(config, model=None, stdin=None, stdout=None):
    """Single-threaded request loop; returns the process exit status.

    The verifier gets parallelism by running several adapter processes,
    so one blocking loop per process is the whole concurrency story.
    """
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    if model is None:
        model = ConstantVelocityModel(config.t_future, config.noise_sigma)
    for line in stdin:
        if not line.strip():
            continue
        reply, keep_serving = handle_request(line, config, model)
        if reply is not None:
            stdout.write(json.dumps(reply) + "\n")
            stdout.flush()
        if not keep_serving:
            break
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trajadapter",
        description="constant-velocity reference predictor for the "
                    "trajectory verifier's stdio protocol")
    parser.add_argument("--t-past", type=int, default=8,
                        help="observed points per trajectory (default 8)")
    parser.add_argument("--t-future", type=int, default=12,
                        help="predicted points per trajectory (default 12)")
    parser.add_argument("--sigma", type=float, default=0.05,
                        help="Gaussian noise scale in scene units (default 0.05)")
    parser.add_argument("--max-batch", type=int, default=64,
                        help="largest accepted scenes list (default 64)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = AdapterConfig(t_past=args.t_past, t_future=args.t_future,
                               noise_sigma=args.sigma, max_batch=args.max_batch)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return serve(config)


if __name__ == "__main__":
    sys.exit(main())

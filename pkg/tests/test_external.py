"""Tests for the external predictor wire client."""

import sys
import textwrap

import numpy as np
import pytest

from trajverify import PredictorError, ProtocolError
from trajverify.external import ExternalPredictor, ExternalPredictorPool, WireClient
from trajverify.predictors import PredictionRequest

from scene_builders import walker_scene

STUB_SOURCE = textwrap.dedent(
    r'''
    import argparse, json, sys, time

    def reply(obj):
        sys.stdout.write(json.dumps(obj) + "\n")
        sys.stdout.flush()

    def main():
        ap = argparse.ArgumentParser()
        ap.add_argument("--mode", default="ok")
        ap.add_argument("--t-past", type=int, default=8)
        ap.add_argument("--t-future", type=int, default=12)
        ap.add_argument("--max-batch", type=int, default=4)
        args = ap.parse_args()

        for line in sys.stdin:
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                reply({"error": "bad json"})
                continue
            op = msg.get("op")
            if op == "info":
                if args.mode == "badinfo":
                    reply({"t_past": args.t_past})
                else:
                    reply({"t_past": args.t_past, "t_future": args.t_future,
                           "max_batch": args.max_batch,
                           "name": "stub-" + args.mode})
            elif op == "shutdown":
                sys.exit(0)
            elif op == "predict":
                if args.mode == "die":
                    sys.exit(9)
                if args.mode == "sleep":
                    time.sleep(3.0)
                if args.mode == "error":
                    reply({"error": "refusing to predict"})
                    continue
                if args.mode == "garbage":
                    sys.stdout.write("not json at all\n")
                    sys.stdout.flush()
                    continue
                k = msg["k"]
                scenes = msg["scenes"]
                seed = msg.get("seed", -1)
                preds = []
                for scene in scenes:
                    last = scene["agent"][-1]
                    n_nb = len(scene["neighbors"])
                    samples = []
                    for j in range(k):
                        traj = []
                        for t in range(args.t_future):
                            if args.mode == "nan":
                                traj.append([float("nan"), 0.0])
                            elif args.mode == "echo-seed":
                                traj.append([float(seed), float(j)])
                            elif args.mode == "batchsize":
                                traj.append([float(len(scenes)), float(k)])
                            else:
                                traj.append([last[0] + j, last[1] + t + n_nb])
                        if args.mode == "badshape":
                            traj = traj[:-1]
                        samples.append(traj)
                    preds.append(samples)
                reply({"predictions": preds})
            else:
                reply({"error": "unknown op %r" % (op,)})

    if __name__ == "__main__":
        main()
    '''
)


@pytest.fixture(scope="module")
def stub_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("stub") / "stub_adapter.py"
    path.write_text(STUB_SOURCE)
    return path


def stub_command(stub_path, *extra):
    return [sys.executable, str(stub_path), *extra]


class TestWireClient:
    def test_info_round_trip(self, stub_path):
        with WireClient(stub_command(stub_path)) as client:
            reply = client.call({"op": "info"})
        assert reply == {"t_past": 8, "t_future": 12, "max_batch": 4,
                         "name": "stub-ok"}

    def test_string_command_is_split(self, stub_path):
        command = f"{sys.executable} {stub_path} --t-future 5"
        with WireClient(command) as client:
            assert client.call({"op": "info"})["t_future"] == 5

    def test_empty_command_rejected(self):
        from trajverify import InvalidArgumentError
        with pytest.raises(InvalidArgumentError):
            WireClient([])

    def test_missing_binary(self):
        with pytest.raises(PredictorError, match="cannot start"):
            WireClient(["/nonexistent/adapter-binary"])

    def test_error_reply_raises_but_keeps_connection(self, stub_path):
        with WireClient(stub_command(stub_path)) as client:
            with pytest.raises(PredictorError, match="unknown op"):
                client.call({"op": "frobnicate"})
            assert client.alive
            assert client.call({"op": "info"})["t_past"] == 8

    def test_garbage_line_is_protocol_error(self, stub_path):
        with WireClient(stub_command(stub_path, "--mode", "garbage")) as client:
            with pytest.raises(ProtocolError, match="invalid JSON"):
                client.call({"op": "predict", "k": 1, "scenes": []})

    def test_timeout(self, stub_path):
        with WireClient(stub_command(stub_path, "--mode", "sleep"),
                        timeout=0.3) as client:
            with pytest.raises(PredictorError, match="timed out"):
                client.call({"op": "predict", "k": 1, "scenes": []})

    def test_shutdown_exits_cleanly(self, stub_path):
        client = WireClient(stub_command(stub_path))
        client.call({"op": "info"})
        client.close()
        assert client._proc.returncode == 0


class TestExternalPredictor:
    def test_handshake_populates_metadata(self, stub_path):
        with ExternalPredictor(stub_command(stub_path)) as pred:
            assert pred.t_past == 8
            assert pred.t_future == 12
            assert pred.max_batch == 4
            assert pred.name == "stub-ok"

    def test_malformed_info_rejected(self, stub_path):
        with pytest.raises(ProtocolError, match="malformed info"):
            ExternalPredictor(stub_command(stub_path, "--mode", "badinfo"))

    def test_predict_matches_stub_formula(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=2, start=(1.0, -2.0),
                             velocity=(0.1, 0.2))
        last = scene.agent_past.points[-1]
        with ExternalPredictor(stub_command(stub_path)) as pred:
            batch = pred.predict(PredictionRequest(scene, sample_count=3, seed=7))
        got = batch.stacked()
        assert got.shape == (3, 12, 2)
        for j in range(3):
            for t in range(12):
                assert got[j, t, 0] == last[0] + j
                assert got[j, t, 1] == last[1] + t + 2

    def test_many_scenes_order_preserved(self, stub_path):
        scenes = [walker_scene(t_past=8, n_neighbors=0, start=(float(i), 0.0),
                               velocity=(0.0, 0.0))
                  for i in range(64)]
        requests = [PredictionRequest(s, sample_count=20, seed=3) for s in scenes]
        with ExternalPredictor(stub_command(stub_path)) as pred:
            batches = pred.predict_many(requests)
        assert len(batches) == 64
        for i, batch in enumerate(batches):
            got = batch.stacked()
            assert got.shape == (20, 12, 2)
            # stub encodes the scene's last past x into every sample
            assert np.all(got[0, :, 0] == float(i))
            assert np.all(got[19, :, 0] == float(i) + 19)

    def test_chunking_respects_max_batch(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        requests = [PredictionRequest(scene, sample_count=2, seed=1)
                    for _ in range(10)]
        with ExternalPredictor(stub_command(stub_path, "--mode", "batchsize")) as pred:
            batches = pred.predict_many(requests)
        sizes = [b.stacked()[0, 0, 0] for b in batches]
        assert sizes == [4, 4, 4, 4, 4, 4, 4, 4, 2, 2]

    def test_chunks_split_on_sample_count_change(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        counts = [5, 5, 3, 5]
        requests = [PredictionRequest(scene, sample_count=c, seed=1)
                    for c in counts]
        with ExternalPredictor(stub_command(stub_path, "--mode", "batchsize")) as pred:
            batches = pred.predict_many(requests)
        sizes = [b.stacked()[0, 0, 0] for b in batches]
        ks = [b.stacked()[0, 0, 1] for b in batches]
        assert sizes == [2, 2, 1, 1]
        assert ks == counts

    def test_seed_is_first_requests_seed(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        requests = [PredictionRequest(scene, sample_count=1, seed=s)
                    for s in (42, 99)]
        with ExternalPredictor(stub_command(stub_path, "--mode", "echo-seed")) as pred:
            batches = pred.predict_many(requests)
        # both land in one wire batch, so both see the first seed
        assert batches[0].stacked()[0, 0, 0] == 42.0
        assert batches[1].stacked()[0, 0, 0] == 42.0

    def test_seed_omitted_when_none(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        with ExternalPredictor(stub_command(stub_path, "--mode", "echo-seed")) as pred:
            batch = pred.predict(PredictionRequest(scene, sample_count=1, seed=None))
        assert batch.stacked()[0, 0, 0] == -1.0

    def test_wrong_shape_is_protocol_error(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        with ExternalPredictor(stub_command(stub_path, "--mode", "badshape")) as pred:
            with pytest.raises(ProtocolError, match="shape"):
                pred.predict(PredictionRequest(scene, sample_count=2, seed=1))

    def test_non_finite_is_protocol_error(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        with ExternalPredictor(stub_command(stub_path, "--mode", "nan")) as pred:
            with pytest.raises(ProtocolError, match="non-finite"):
                pred.predict(PredictionRequest(scene, sample_count=2, seed=1))

    def test_past_length_mismatch(self, stub_path):
        scene = walker_scene(t_past=6, n_neighbors=0)
        with ExternalPredictor(stub_command(stub_path)) as pred:
            with pytest.raises(PredictorError, match="past steps"):
                pred.predict(PredictionRequest(scene, sample_count=1, seed=1))

    def test_death_mid_request_is_protocol_error(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        with ExternalPredictor(stub_command(stub_path, "--mode", "die")) as pred:
            with pytest.raises(ProtocolError, match="closed the connection"):
                pred.predict(PredictionRequest(scene, sample_count=1, seed=1))
            with pytest.raises(ProtocolError):
                pred.predict(PredictionRequest(scene, sample_count=1, seed=1))

    def test_error_reply_keeps_predictor_usable(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=0)
        with ExternalPredictor(stub_command(stub_path, "--mode", "error")) as pred:
            with pytest.raises(PredictorError, match="refusing"):
                pred.predict(PredictionRequest(scene, sample_count=1, seed=1))
            assert pred._client.alive


class TestExternalPredictorPool:
    def test_pool_serves_predictions(self, stub_path):
        scene = walker_scene(t_past=8, n_neighbors=1, start=(3.0, 0.0),
                             velocity=(0.0, 0.0))
        with ExternalPredictorPool(stub_command(stub_path), size=2) as pool:
            assert pool.t_future == 12
            assert len(pool._members) == 2
            batch = pool.predict(PredictionRequest(scene, sample_count=2, seed=5))
        assert batch.stacked()[0, 0, 0] == 3.0

    def test_pool_size_validated(self, stub_path):
        from trajverify import InvalidArgumentError
        with pytest.raises(InvalidArgumentError):
            ExternalPredictorPool(stub_command(stub_path), size=0)

    def test_pool_close_terminates_all(self, stub_path):
        pool = ExternalPredictorPool(stub_command(stub_path), size=2)
        members = list(pool._members)
        pool.close()
        for member in members:
            assert not member._client.alive

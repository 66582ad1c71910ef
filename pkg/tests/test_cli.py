"""Tests for run configuration and the command-line entry points."""

import json
import sys

import pytest

from trajverify import BudgetError, InvalidArgumentError
from trajverify.cli import build_parser, run, validate_report
from trajverify.config import (RunConfig, read_config_file, require_dataset,
                               resolve_config)

from test_external import STUB_SOURCE


# ----------------------------------------------------------------------
# dataset fixtures: frame ped x y rows at stride 10


def write_dataset(path, rows):
    path.write_text("".join(f"{f} {p} {x} {y}\n" for f, p, x, y in rows))
    return path


def straight_rows():
    # ped 1 walks at constant velocity through frame 190; ped 2 is a
    # neighbor present over the past window only
    rows = [(f, 1, 0.01 * f, 0.005 * f) for f in range(0, 200, 10)]
    rows += [(f, 2, 2 + 0.01 * f, -1.0) for f in range(0, 80, 10)]
    return rows


def turning_rows():
    # ped 1 walks +x through frame 70 then reverses, so a constant
    # velocity forecast is off by 0.2*i at future step i (ADE 1.3)
    rows = [(f, 1, 0.01 * f, 0.0) for f in range(0, 80, 10)]
    rows += [(70 + 10 * i, 1, 0.7 - 0.1 * i, 0.0) for i in range(1, 13)]
    rows += [(f, 2, 2 + 0.01 * f, -1.0) for f in range(0, 80, 10)]
    return rows


@pytest.fixture(scope="module")
def straight_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "straight.txt"
    return write_dataset(path, straight_rows())


@pytest.fixture(scope="module")
def turning_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "turning.txt"
    return write_dataset(path, turning_rows())


@pytest.fixture(scope="module")
def stub_adapter(tmp_path_factory):
    path = tmp_path_factory.mktemp("stub") / "stub_adapter.py"
    path.write_text(STUB_SOURCE)
    return path


# small PAC budget so CLI runs stay fast; cap for these rates is 11
FAST = ["--epsilon", "0.2", "--eta", "0.05", "--t1", "200", "--t2", "150",
        "--k-features", "10", "--workers", "1", "--pgd-steps", "5"]


def scene_args(dataset):
    return ["--dataset", str(dataset), "--frame", "70", "--ped", "1"]


def zero_surrogate_doc(lambda_star=10.0):
    return {"kind": "pure", "alpha": [0.0] * 32, "beta": 0.0,
            "lambda_star": lambda_star, "epsilon": 0.2, "eta": 0.05,
            "t1": 200, "t2": 150, "key_indices": list(range(9)),
            "max_sampled_delta": 0.0, "seed": 0}


def read_report(out_dir):
    report = json.loads((out_dir / "report.json").read_text())
    validate_report(report)
    return report


class TestRunConfig:
    def test_meter_defaults(self):
        config = RunConfig()
        assert config.effective_radius == 0.03
        assert config.effective_stride == 10
        assert config.safety_for("label") == 1.0
        assert config.safety_for("pure") == 0.5
        assert config.kinds == ("pure",)

    def test_pixel_preset(self):
        config = RunConfig(unit="pixels")
        assert config.effective_radius == 2.0
        assert config.effective_stride == 12
        assert config.safety_for("label") == 50.0
        assert config.safety_for("pure") == 50.0

    def test_explicit_values_beat_preset(self):
        config = RunConfig(unit="pixels", radius=1.5, safety_pure=9.0, stride=5)
        assert config.effective_radius == 1.5
        assert config.safety_for("pure") == 9.0
        assert config.effective_stride == 5

    @pytest.mark.parametrize("kwargs", [
        {"unit": "furlongs"},
        {"kinds": ()},
        {"kinds": ("speed",)},
        {"pure_mode": "stale"},
        {"radius": 0.0},
        {"safety_label": -1.0},
        {"epsilon": 1.5},
        {"t1": 0},
        {"k": 0},
        {"workers": 0},
        {"timeout": 0.0},
        {"predictor": "oracle"},
        {"predictor_params": [1, 2]},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            config = RunConfig(**kwargs)
            config.budget()

    def test_budget_cap_enforced(self):
        config = RunConfig(epsilon=0.2, eta=0.05, t2=150, k_features=12)
        with pytest.raises(BudgetError):
            config.budget()

    def test_scene_query_requires_frame_and_ped(self):
        with pytest.raises(InvalidArgumentError, match="--frame"):
            RunConfig().scene_query()
        query = RunConfig(frame=70, ped=1, unit="pixels").scene_query()
        assert query.frame_stride == 12

    def test_to_json_dict_is_serializable_and_resolved(self):
        doc = RunConfig(unit="pixels").to_json_dict()
        json.dumps(doc)
        assert doc["radius"] == 2.0
        assert doc["safety_label"] == 50.0
        assert doc["workers"] >= 1
        assert doc["kinds"] == ["pure"]

    def test_builtin_predictor_params(self):
        config = RunConfig(predictor_params={"sigma": 0.1, "t_future": 6})
        predictor = config.build_predictor()
        assert predictor.t_future == 6
        with pytest.raises(InvalidArgumentError, match="predictor_params"):
            RunConfig(predictor_params={"bogus": 1}).build_predictor()


class TestResolveConfig:
    def test_flags_override_file_values(self):
        config = resolve_config({"radius": 0.5, "seed": 3},
                                {"radius": 0.7, "seed": None})
        assert config.radius == 0.7
        assert config.seed == 3

    def test_none_flags_are_skipped(self):
        config = resolve_config({}, {"radius": None, "frame": None})
        assert config.radius is None

    def test_unknown_key_rejected(self):
        with pytest.raises(InvalidArgumentError, match="unknown config key"):
            resolve_config({}, {"radiuss": 0.1})

    def test_read_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"radius": 0.5, "kinds": ["label"]}')
        assert read_config_file(path) == {"radius": 0.5, "kinds": ["label"]}

    def test_read_config_file_errors(self, tmp_path):
        missing = tmp_path / "absent.json"
        with pytest.raises(InvalidArgumentError, match="not found"):
            read_config_file(missing)
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(InvalidArgumentError, match="valid JSON"):
            read_config_file(bad)
        array = tmp_path / "array.json"
        array.write_text("[1, 2]")
        with pytest.raises(InvalidArgumentError, match="JSON object"):
            read_config_file(array)
        unknown = tmp_path / "unknown.json"
        unknown.write_text('{"radiuss": 1}')
        with pytest.raises(InvalidArgumentError, match="unknown config keys"):
            read_config_file(unknown)

    def test_require_dataset(self, tmp_path):
        with pytest.raises(InvalidArgumentError, match="--dataset"):
            require_dataset(RunConfig())
        with pytest.raises(InvalidArgumentError, match="not found"):
            require_dataset(RunConfig(dataset=str(tmp_path / "nope.txt")))


class TestVerifyCommand:
    def test_yes_both_kinds(self, straight_dataset, tmp_path):
        out = tmp_path / "out"
        # a constant velocity forecast amplifies last-point shifts by about
        # 13x over 12 future steps, so keep the ball small for a YES
        code = run(["verify", *scene_args(straight_dataset), *FAST,
                    "--kinds", "pure", "label", "--seed", "1",
                    "--radius", "0.002", "--out", str(out)])
        assert code == 0
        report = read_report(out)
        assert report["command"] == "verify"
        assert [r["kind"] for r in report["results"]] == ["pure", "label"]
        for result in report["results"]:
            assert result["outcome"] == "YES"
            assert result["counterexample"] is None
            for key in ("pac_bound", "max_sampled_delta",
                        "linear_adversary_delta", "pgd_delta"):
                assert isinstance(result[key], float)
            assert result["pac_bound"] <= result["safety_constant"]
            assert (out / result["surrogate_file"]).is_file()

    def test_no_with_counterexample(self, turning_dataset, tmp_path):
        out = tmp_path / "out"
        code = run(["verify", *scene_args(turning_dataset), *FAST,
                    "--kinds", "label", "--seed", "1", "--out", str(out)])
        assert code == 1
        result = read_report(out)["results"][0]
        assert result["outcome"] == "NO"
        cx = result["counterexample"]
        assert cx is not None
        assert cx["observed_delta"] > result["safety_constant"]
        # the model is deterministic, so every re-draw exceeds as well
        assert cx["exceedance_frequency"] == 1.0
        assert result["pgd_delta"] > result["safety_constant"]

    def test_unknown_via_loaded_surrogate(self, straight_dataset, tmp_path):
        surrogate_path = tmp_path / "surrogate.json"
        surrogate_path.write_text(json.dumps(zero_surrogate_doc()))
        out = tmp_path / "out"
        code = run(["verify", *scene_args(straight_dataset), *FAST,
                    "--kinds", "pure", "--seed", "1",
                    "--load-surrogate", str(surrogate_path),
                    "--out", str(out)])
        assert code == 2
        result = read_report(out)["results"][0]
        assert result["outcome"] == "UNKNOWN"
        assert result["counterexample"] is None
        assert result["gap"] == pytest.approx(10.0 - 0.5)

    def test_missing_dataset_exits_3_without_report(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = run(["verify", "--dataset", str(tmp_path / "absent.txt"),
                    "--frame", "70", "--ped", "1", "--out", str(out)])
        assert code == 3
        assert "not found" in capsys.readouterr().err
        assert not (out / "report.json").exists()

    def test_reports_are_deterministic_modulo_timestamp(
            self, straight_dataset, tmp_path):
        out = tmp_path / "out"
        texts = []
        for _ in range(2):
            code = run(["verify", *scene_args(straight_dataset), *FAST,
                        "--kinds", "pure", "--seed", "7",
                        "--radius", "0.002", "--out", str(out)])
            assert code == 0
            lines = (out / "report.json").read_text().splitlines()
            texts.append("\n".join(l for l in lines if "generated_at" not in l))
        assert texts[0] == texts[1]

    def test_config_file_with_flag_override(self, straight_dataset, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({
            "radius": 0.5, "seed": 3, "kinds": ["pure"],
            "safety_pure": 500.0,
            "epsilon": 0.2, "eta": 0.05, "t1": 200, "t2": 150,
            "k_features": 10, "workers": 1, "pgd_steps": 5,
        }))
        out = tmp_path / "out"
        code = run(["verify", "--config", str(config_path),
                    *scene_args(straight_dataset), "--radius", "0.7",
                    "--out", str(out)])
        assert code == 0
        config = read_report(out)["config"]
        assert config["radius"] == 0.7
        assert config["seed"] == 3


class TestAttackCommand:
    def test_attack_report_shape(self, turning_dataset, tmp_path):
        out = tmp_path / "out"
        code = run(["attack", *scene_args(turning_dataset), *FAST,
                    "--kinds", "label", "--seed", "1", "--out", str(out)])
        assert code == 0
        attack = read_report(out)["attack"]
        assert set(attack) == {"kind", "linear", "pgd", "gap"}
        for method in ("linear", "pgd"):
            assert set(attack[method]) == {"delta", "scene"}
            assert set(attack[method]["scene"]) == {"agent", "neighbors"}
            assert len(attack[method]["scene"]["agent"]) == 8
        assert attack["gap"] == pytest.approx(
            abs(attack["pgd"]["delta"] - attack["linear"]["delta"]))


class TestExplainCommand:
    def test_explain_writes_plot_and_csv(self, turning_dataset, tmp_path):
        out = tmp_path / "out"
        code = run(["explain", *scene_args(turning_dataset), *FAST,
                    "--kinds", "label", "--seed", "1", "--out", str(out)])
        assert code == 0
        report = read_report(out)
        explain = report["explain"]
        assert (out / explain["plot_file"]).is_file()
        assert (out / explain["csv_file"]).is_file()
        assert (out / explain["surrogate_file"]).is_file()
        assert len(explain["top_paths"]) == 2
        # the agent's own past dominates a constant velocity forecast
        assert explain["top_paths"][0]["agent"] == 0
        assert explain["critical_step"]["agent"] == 0

    def test_load_surrogate_skips_sampling(self, straight_dataset, tmp_path):
        surrogate_path = tmp_path / "surrogate.json"
        surrogate_path.write_text(json.dumps(zero_surrogate_doc()))
        out = tmp_path / "out"
        # a broken predictor command proves no predictions are drawn
        code = run(["explain", *scene_args(straight_dataset),
                    "--kinds", "pure", "--predictor-cmd", "/nonexistent/bin",
                    "--load-surrogate", str(surrogate_path),
                    "--out", str(out)])
        assert code == 0
        assert read_report(out)["explain"]["surrogate_file"] is None


class TestSampleDumpCommand:
    def test_sample_dump(self, straight_dataset, tmp_path):
        out = tmp_path / "out"
        code = run(["sample-dump", *scene_args(straight_dataset), *FAST,
                    "--kinds", "pure", "--count", "50", "--seed", "2",
                    "--out", str(out)])
        assert code == 0
        samples = read_report(out)["samples"]
        assert samples["count"] == 50
        assert samples["kind"] == "pure"
        csv_lines = (out / samples["csv_file"]).read_text().splitlines()
        assert len(csv_lines) == 51


class TestProtocolCheckCommand:
    def test_conforming_adapter_passes(self, stub_adapter, capsys):
        cmd = f"{sys.executable} {stub_adapter}"
        code = run(["protocol-check", "--predictor-cmd", cmd])
        assert code == 0
        output = capsys.readouterr().out
        assert output.count("PASS") == 6
        assert "FAIL" not in output

    def test_bad_shape_adapter_fails(self, stub_adapter, capsys):
        cmd = f"{sys.executable} {stub_adapter} --mode badshape"
        code = run(["protocol-check", "--predictor-cmd", cmd])
        assert code == 1
        captured = capsys.readouterr()
        assert "FAIL: predict returns" in captured.out
        assert "clause(s) failed" in captured.err

    def test_requires_predictor_cmd(self, capsys):
        code = run(["protocol-check"])
        assert code == 3
        assert "--predictor-cmd" in capsys.readouterr().err


class TestParser:
    def test_unknown_subcommand_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["frobnicate"])

    def test_kinds_choices_enforced(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["verify", "--kinds", "speed"])

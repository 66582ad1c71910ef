"""Command-line entry points.

Subcommands: verify (robustness verdict per error kind), attack (linear vs
gradient adversaries), explain (sensitivity plot + CSV), protocol-check
(wire-protocol conformance for an external predictor), sample-dump
(perturbed inputs and their errors as CSV).

Every run writes a schema-validated report.json into --out. Exit status:
0 all verdicts YES (or non-verdict command succeeded), 1 any NO,
2 any UNKNOWN, 3 operational error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from contextlib import closing
from importlib import resources
from pathlib import Path

import jsonschema

from . import learning
from .analysis import (Outcome, linear_adversary, pgd_attack, replay_delta,
                       verify)
from .config import RunConfig, read_config_file, require_dataset, resolve_config
from .core import FlatLayout, flatten
from .datasets import extract_scene, load_dataset
from .errors import VerifierError
from .external import WireClient, scene_payload
from .interpret import render, sensitivity
from .learning import AffineSurrogate, learn_surrogate
from .sampling import (DeltaKind, PureMode, center_reference_set,
                       collect_samples, dump_samples_csv, max_sample)
from .seeding import derive_seed

EXIT_YES = 0
EXIT_NO = 1
EXIT_UNKNOWN = 2
EXIT_ERROR = 3

# Stable per-kind seed streams so label and pure runs do not share draws.
_KIND_STREAMS = {DeltaKind.LABEL: 51, DeltaKind.PURE: 52}
_LINEAR_REPLAY_STREAM = 61


def _utc_timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def load_report_schema() -> dict:
    text = resources.files("trajverify").joinpath("report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_report_schema())


def write_report(report: dict, out_dir: Path) -> Path:
    validate_report(report)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


def _base_report(command: str, config: RunConfig) -> dict:
    return {
        "schema_version": 1,
        "command": command,
        "generated_at": _utc_timestamp(),
        "config": config.to_json_dict(),
    }


def _counterexample_json(cx):
    if cx is None:
        return None
    return {
        "observed_delta": float(cx.observed_delta),
        "source": cx.source,
        "exceedance_frequency": None if cx.exceedance_frequency is None
        else float(cx.exceedance_frequency),
        "eval_seed": None if cx.eval_seed is None else int(cx.eval_seed),
        "scene": scene_payload(cx.scene),
    }


def _load_scene(config: RunConfig):
    path = require_dataset(config)
    store = load_dataset(path, unit=config.unit_enum)
    return extract_scene(store, config.scene_query())


def _references_for(config: RunConfig, kind: DeltaKind, scene, predictor,
                    kind_seed: int):
    """Reference predictions for refset-mode pure error, seeded exactly as
    the learner would seed its own (so learning and checking agree)."""
    if kind is not DeltaKind.PURE or PureMode(config.pure_mode) is not PureMode.REFSET:
        return None
    ref_seed = derive_seed(kind_seed, learning._REFSET_STREAM)
    return center_reference_set(scene, predictor, m=config.refs, seed=ref_seed)


def _surrogate_for(config: RunConfig, kind: DeltaKind, scene, predictor,
                   kind_seed: int, references):
    if config.load_surrogate is not None:
        path = Path(config.load_surrogate)
        if not path.is_file():
            raise VerifierError(f"surrogate file not found: {path}")
        surrogate = AffineSurrogate.load(path)
        if surrogate.kind is not kind:
            raise VerifierError(
                f"loaded surrogate covers kind {surrogate.kind.value!r}, "
                f"requested {kind.value!r}"
            )
        expected_dim = FlatLayout(scene.n_agents, scene.t_past).dim
        if surrogate.dim != expected_dim:
            raise VerifierError(
                f"loaded surrogate has dimension {surrogate.dim}, "
                f"scene needs {expected_dim}"
            )
        return surrogate
    return learn_surrogate(scene, config.perturbation(), config.budget(),
                           kind, predictor, seed=kind_seed, k=config.k,
                           mode=PureMode(config.pure_mode),
                           references=references,
                           workers=config.effective_workers)


def cmd_verify(config: RunConfig) -> int:
    scene = _load_scene(config)
    spec = config.perturbation()
    out_dir = Path(config.out)
    results = []
    outcomes = []
    with closing(config.build_predictor()) as predictor:
        for kind_name in config.kinds:
            kind = DeltaKind(kind_name)
            kind_seed = derive_seed(config.seed, _KIND_STREAMS[kind])
            references = _references_for(config, kind, scene, predictor, kind_seed)
            surrogate = _surrogate_for(config, kind, scene, predictor,
                                       kind_seed, references)
            verdict = verify(surrogate, scene, spec, config.safety_for(kind),
                             predictor, k=config.k, seed=kind_seed,
                             mode=PureMode(config.pure_mode),
                             references=references)

            linear_scene = linear_adversary(surrogate, scene, spec)
            linear_delta = replay_delta(
                scene, flatten(linear_scene).values, predictor, kind,
                k=config.k,
                eval_seed=derive_seed(kind_seed, _LINEAR_REPLAY_STREAM),
                mode=PureMode(config.pure_mode), references=references)
            _, pgd_delta = pgd_attack(scene, spec, kind, predictor,
                                      steps=config.pgd_steps, k=config.k,
                                      seed=kind_seed,
                                      mode=PureMode(config.pure_mode),
                                      references=references)

            out_dir.mkdir(parents=True, exist_ok=True)
            surrogate_file = f"surrogate_{kind.value}.json"
            surrogate.save(out_dir / surrogate_file)

            outcomes.append(verdict.outcome)
            results.append({
                "kind": kind.value,
                "outcome": verdict.outcome.value,
                "safety_constant": float(verdict.safety_constant),
                "epsilon": float(verdict.epsilon),
                "eta": float(verdict.eta),
                "pac_bound": float(verdict.pac_bound),
                "box_maximum": float(verdict.box_maximum),
                "lambda_star": float(surrogate.lambda_star),
                "max_sampled_delta": float(verdict.max_sampled_delta),
                "linear_adversary_delta": float(linear_delta),
                "pgd_delta": float(pgd_delta),
                "argmax_delta": None if verdict.argmax_delta is None
                else float(verdict.argmax_delta),
                "gap": None if verdict.gap is None else float(verdict.gap),
                "counterexample": _counterexample_json(verdict.counterexample),
                "surrogate_file": surrogate_file,
            })

    report = _base_report("verify", config)
    report["results"] = results
    write_report(report, out_dir)
    for outcome, result in zip(outcomes, results):
        print(f"{result['kind']}: {outcome.value} "
              f"(pac_bound={result['pac_bound']:.6g}, "
              f"s={result['safety_constant']:.6g})")
    if any(o is Outcome.NO for o in outcomes):
        return EXIT_NO
    if any(o is Outcome.UNKNOWN for o in outcomes):
        return EXIT_UNKNOWN
    return EXIT_YES


def cmd_attack(config: RunConfig) -> int:
    scene = _load_scene(config)
    spec = config.perturbation()
    kind = DeltaKind(config.kinds[0])
    out_dir = Path(config.out)
    with closing(config.build_predictor()) as predictor:
        kind_seed = derive_seed(config.seed, _KIND_STREAMS[kind])
        references = _references_for(config, kind, scene, predictor, kind_seed)
        surrogate = _surrogate_for(config, kind, scene, predictor, kind_seed,
                                   references)
        linear_scene = linear_adversary(surrogate, scene, spec)
        linear_delta = replay_delta(
            scene, flatten(linear_scene).values, predictor, kind, k=config.k,
            eval_seed=derive_seed(kind_seed, _LINEAR_REPLAY_STREAM),
            mode=PureMode(config.pure_mode), references=references)
        pgd_scene, pgd_delta = pgd_attack(scene, spec, kind, predictor,
                                          steps=config.pgd_steps, k=config.k,
                                          seed=kind_seed,
                                          mode=PureMode(config.pure_mode),
                                          references=references)

    report = _base_report("attack", config)
    report["attack"] = {
        "kind": kind.value,
        "linear": {"delta": float(linear_delta),
                   "scene": scene_payload(linear_scene)},
        "pgd": {"delta": float(pgd_delta),
                "scene": scene_payload(pgd_scene)},
        "gap": abs(float(pgd_delta) - float(linear_delta)),
    }
    write_report(report, out_dir)
    print(f"linear delta {linear_delta:.6g}, pgd delta {pgd_delta:.6g}, "
          f"gap {report['attack']['gap']:.6g}")
    return EXIT_YES


def cmd_explain(config: RunConfig) -> int:
    scene = _load_scene(config)
    kind = DeltaKind(config.kinds[0])
    out_dir = Path(config.out)

    if config.load_surrogate is not None:
        # cached surrogate: no predictions drawn at all
        surrogate = _surrogate_for(config, kind, scene, None, 0, None)
    else:
        with closing(config.build_predictor()) as predictor:
            kind_seed = derive_seed(config.seed, _KIND_STREAMS[kind])
            references = _references_for(config, kind, scene, predictor,
                                         kind_seed)
            surrogate = _surrogate_for(config, kind, scene, predictor,
                                       kind_seed, references)

    layout = FlatLayout(scene.n_agents, scene.t_past)
    smap = sensitivity(surrogate, layout)
    out_dir.mkdir(parents=True, exist_ok=True)
    plot_path, csv_path = render(smap, scene, out_dir / "sensitivity")
    agent, timestep = smap.critical_step()

    surrogate_file = None
    if config.load_surrogate is None:
        surrogate_file = f"surrogate_{kind.value}.json"
        surrogate.save(out_dir / surrogate_file)

    report = _base_report("explain", config)
    report["explain"] = {
        "plot_file": plot_path.name,
        "csv_file": csv_path.name,
        "surrogate_file": surrogate_file,
        "top_paths": [{"agent": int(p.agent), "score": float(p.score),
                       "mean": float(p.mean)} for p in smap.top_paths()],
        "critical_step": {"agent": int(agent), "timestep": int(timestep)},
    }
    write_report(report, out_dir)
    print(f"wrote {plot_path} and {csv_path}")
    return EXIT_YES


def cmd_sample_dump(config: RunConfig) -> int:
    scene = _load_scene(config)
    kind = DeltaKind(config.kinds[0])
    out_dir = Path(config.out)
    with closing(config.build_predictor()) as predictor:
        kind_seed = derive_seed(config.seed, _KIND_STREAMS[kind])
        references = _references_for(config, kind, scene, predictor, kind_seed)
        samples = collect_samples(scene, config.perturbation(), config.count,
                                  kind, predictor, k=config.k, seed=kind_seed,
                                  mode=PureMode(config.pure_mode),
                                  references=references,
                                  workers=config.effective_workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "samples.csv"
    dump_samples_csv(csv_path, samples)

    report = _base_report("sample-dump", config)
    report["samples"] = {
        "csv_file": csv_path.name,
        "count": len(samples),
        "kind": kind.value,
        "max_delta": float(max_sample(samples).delta),
    }
    write_report(report, out_dir)
    print(f"wrote {len(samples)} samples to {csv_path}")
    return EXIT_YES


# ----------------------------------------------------------------------
# protocol conformance


def _check_protocol(command: str, timeout: float, out=None):
    """Run each wire-protocol clause against an external predictor.

    Returns the list of (clause, passed, detail) triples after printing
    one PASS/FAIL line per clause.
    """
    out = sys.stdout if out is None else out
    results = []

    def clause(name, fn):
        try:
            detail = fn() or ""
            results.append((name, True, detail))
        except Exception as exc:  # noqa: BLE001 - any failure fails the clause
            results.append((name, False, str(exc)))

    client_box = {}

    def client() -> WireClient:
        if "c" not in client_box or not client_box["c"].alive:
            client_box["c"] = WireClient(command, timeout=timeout)
        return client_box["c"]

    info_box = {}

    def check_info():
        info = client().call({"op": "info"})
        for key in ("t_past", "t_future", "max_batch"):
            if key not in info:
                raise VerifierError(f"info reply missing {key!r}")
            if int(info[key]) < 1:
                raise VerifierError(f"info[{key!r}] = {info[key]!r} out of range")
        info_box.update(info)
        return f"t_past={info['t_past']} t_future={info['t_future']}"

    def probe_scene():
        t_past = int(info_box.get("t_past", 8))
        agent = [[0.1 * t, 0.2 * t] for t in range(t_past)]
        neighbor = [[1.0 + 0.1 * t, -0.5] for t in range(t_past)]
        return {"agent": agent, "neighbors": [neighbor]}

    def check_shape():
        t_future = int(info_box.get("t_future", 12))
        reply = client().call({"op": "predict", "seed": 1, "k": 3,
                               "scenes": [probe_scene()]})
        preds = reply.get("predictions")
        if not isinstance(preds, list) or len(preds) != 1:
            raise VerifierError(f"expected 1 prediction group, got {preds!r}")
        samples = preds[0]
        if len(samples) != 3:
            raise VerifierError(f"expected 3 samples, got {len(samples)}")
        for traj in samples:
            if len(traj) != t_future:
                raise VerifierError(
                    f"expected {t_future} points per sample, got {len(traj)}")
            for point in traj:
                if len(point) != 2 or not all(
                        isinstance(v, (int, float)) and v == v
                        and abs(v) != float("inf") for v in point):
                    raise VerifierError(f"bad coordinate pair {point!r}")
        return "3 samples of the declared shape"

    def check_determinism():
        message = {"op": "predict", "seed": 7, "k": 2,
                   "scenes": [probe_scene()]}
        first = client().call(message)
        second = client().call(message)
        if first != second:
            raise VerifierError("identical seeded requests returned "
                                "different predictions")
        return "seed 7 repeated exactly"

    def check_error_keeps_alive():
        c = client()
        c.send({"op": "definitely-not-an-op"})
        reply = c.recv_raw()
        if "error" not in reply:
            raise VerifierError(f"expected an error reply, got {reply!r}")
        info = c.call({"op": "info"})
        if "t_past" not in info:
            raise VerifierError("connection unusable after an error reply")
        return "error reply, then info still answered"

    def check_unknown_keys_ignored():
        message = {"op": "predict", "seed": 3, "k": 1,
                   "scenes": [probe_scene()], "x-unknown-extension": True}
        reply = client().call(message)
        if "predictions" not in reply:
            raise VerifierError(f"unknown key was not ignored: {reply!r}")
        return "extra request key tolerated"

    def check_shutdown():
        c = client()
        c.close()
        code = c._proc.returncode
        if code != 0:
            raise VerifierError(f"exit status {code} after shutdown")
        return "exit status 0"

    clause("info declares t_past/t_future/max_batch", check_info)
    clause("predict returns k x t_future x 2 finite coordinates", check_shape)
    clause("identical seeded requests are deterministic", check_determinism)
    clause("malformed request gets an error reply, connection stays alive",
           check_error_keeps_alive)
    clause("unknown request keys are ignored", check_unknown_keys_ignored)
    clause("shutdown exits with status 0", check_shutdown)

    if "c" in client_box:
        client_box["c"].close(graceful=False)

    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"{status}: {name}{suffix}", file=out)
    return results


def cmd_protocol_check(config: RunConfig) -> int:
    if config.predictor_cmd is None:
        raise VerifierError("protocol-check needs --predictor-cmd")
    results = _check_protocol(config.predictor_cmd, config.timeout)
    failed = [name for name, passed, _ in results if not passed]
    if failed:
        print(f"{len(failed)} clause(s) failed", file=sys.stderr)
        return EXIT_NO
    return EXIT_YES


# ----------------------------------------------------------------------
# argument parsing

_COMMANDS = {
    "verify": cmd_verify,
    "attack": cmd_attack,
    "explain": cmd_explain,
    "protocol-check": cmd_protocol_check,
    "sample-dump": cmd_sample_dump,
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    add = parser.add_argument
    add("--config", default=None, help="JSON config file; flags override it")
    add("--dataset", default=None, help="trajectory file (frame ped x y)")
    add("--unit", default=None, choices=["meters", "pixels"])
    add("--frame", type=int, default=None, help="scene anchor frame")
    add("--ped", type=int, default=None, help="predicted pedestrian id")
    add("--stride", type=int, default=None, help="frames between timesteps")
    add("--t-past", dest="t_past", type=int, default=None)
    add("--t-future", dest="t_future", type=int, default=None)
    add("--predictor", default=None, help="builtin predictor name")
    add("--predictor-cmd", dest="predictor_cmd", default=None,
        help="external predictor command line")
    add("--radius", type=float, default=None, help="perturbation radius")
    add("--kinds", nargs="+", choices=["label", "pure"], default=None,
        help="error kinds to verify")
    add("--safety-label", dest="safety_label", type=float, default=None)
    add("--safety-pure", dest="safety_pure", type=float, default=None)
    add("--epsilon", type=float, default=None, help="PAC error rate")
    add("--eta", type=float, default=None, help="PAC confidence level")
    add("--t1", type=int, default=None, help="phase-1 sample count")
    add("--t2", type=int, default=None, help="phase-2 sample count")
    add("--k-features", dest="k_features", type=int, default=None,
        help="free coordinates in the phase-2 fit")
    add("--k", type=int, default=None, help="prediction samples per scene")
    add("--pure-mode", dest="pure_mode", choices=["fresh", "refset"],
        default=None)
    add("--refs", type=int, default=None, help="reference set size")
    add("--seed", type=int, default=None)
    add("--workers", type=int, default=None)
    add("--out", default=None, help="output directory")
    add("--pgd-steps", dest="pgd_steps", type=int, default=None)
    add("--count", type=int, default=None, help="samples for sample-dump")
    add("--load-surrogate", dest="load_surrogate", default=None,
        help="reuse a saved surrogate instead of sampling")
    add("--timeout", type=float, default=None,
        help="external predictor reply timeout in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajverify",
        description="PAC robustness verification for black-box stochastic "
                    "trajectory predictors")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        _add_config_flags(p)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = {}
    if args.config is not None:
        file_values = read_config_file(args.config)
    flag_values = {k: v for k, v in vars(args).items()
                   if k not in ("command", "config")}
    return resolve_config(file_values, flag_values)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        return _COMMANDS[args.command](config)
    except (VerifierError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

"""Command-line orchestration of the full pipeline.

Subcommands: gen-data, train, solve, bench, report.  Every run writes a
manifest (config hash, seed, versions) and, repeated with the same seed,
produces byte-identical CSV/JSON outputs; wall-clock timings go to a
separate timings.json that is excluded from that guarantee.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, bench, classifier, metrics, qubo as qubo_mod, rgs, solvers
from .dataset import (Dataset, SyntheticSpec, generate_synthetic, load_csv,
                      rebalance, save_csv)
from .ising import SPACING_DEFAULT
from .learners import EnsembleConfig, LearnerHyperparams, train_ensemble

logger = logging.getLogger(__name__)

_HYPERPARAMS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "max_depth": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "logreg_c": {"type": "number", "exclusiveMinimum": 0},
        "logreg_max_iter": {"type": "integer", "minimum": 1},
    },
}

_ENSEMBLE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n_learners", "mix"],
    "properties": {
        "n_learners": {"type": "integer", "minimum": 1},
        "mix": {
            "type": "object",
            "additionalProperties": False,
            "properties": {kind: {"type": "number", "minimum": 0}
                           for kind in ("decision_tree", "knn", "gaussian_nb",
                                        "logistic_regression")},
        },
        "variant": {"enum": ["boosting", "subsampling"]},
        "n_subsets": {"type": "integer", "minimum": 1},
        "hyperparams": _HYPERPARAMS_SCHEMA,
    },
}

_SOLVER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": ["brute_force", "uniform", "sa", "rgs", "qaoa", "tebd"]},
        "n_cycles": {"type": "integer", "minimum": 1},
        "n_sweeps": {"type": "integer", "minimum": 1},
        "n_restarts": {"type": "integer", "minimum": 1},
        "beta_initial": {"type": "number", "exclusiveMinimum": 0},
        "beta_final": {"type": "number", "exclusiveMinimum": 0},
        "loading_p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "spacing_um": {"type": "number", "exclusiveMinimum": 0},
        "max_cluster": {"type": "integer", "minimum": 1},
        "n_outer": {"type": "integer", "minimum": 1},
        "shots_per_iter": {"type": "integer", "minimum": 1},
        "chi": {"type": "integer", "minimum": 2},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "n_steps": {"type": "integer", "minimum": 1},
    },
}

_SYNTH_SPEC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_rows": {"type": "integer", "minimum": 10},
        "n_features": {"type": "integer", "minimum": 1},
        "positive_fraction_train": {"type": "number"},
        "positive_fraction_test": {"type": "number"},
        "n_periods": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "ensemble", "solver"],
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["source"],
            "properties": {
                "source": {"enum": ["synthetic", "csv"]},
                "spec": _SYNTH_SPEC_SCHEMA,
                "train_path": {"type": "string"},
                "test_path": {"type": "string"},
                "label_column": {"type": "string"},
                "date_column": {"type": "string"},
            },
        },
        "rebalance": {"enum": ["undersample", "oversample", None]},
        "ensemble": _ENSEMBLE_SCHEMA,
        "lambda": {
            "anyOf": [
                {"type": "number"},
                {"type": "object", "additionalProperties": False,
                 "required": ["grid"],
                 "properties": {"grid": {"type": "array", "minItems": 1,
                                         "items": {"type": "number"}}}},
            ]
        },
        "solver": _SOLVER_SCHEMA,
        "recall_target": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

BENCH_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sizes", "solvers"],
    "properties": {
        "sizes": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "solvers": {"type": "array", "minItems": 1,
                    "items": {"enum": ["uniform", "sa", "rgs"]}},
        "n_instances": {"type": "integer", "minimum": 1},
        "cycles": {"type": "object", "additionalProperties": False,
                   "properties": {"uniform": {"type": "integer", "minimum": 1},
                                  "sa": {"type": "integer", "minimum": 1},
                                  "rgs": {"type": "integer", "minimum": 1}}},
        "threshold": {"type": "number", "exclusiveMinimum": 0},
        "lambda": {"type": "number"},
        "seed": {"type": "integer", "minimum": 0},
    },
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def _load_json(path, schema=None):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if schema is not None:
        try:
            jsonschema.validate(payload, schema)
        except jsonschema.ValidationError as exc:
            path_str = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ValueError(f"config schema error at {path_str}: {exc.message}")
    return payload


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _manifest(out_dir: Path, config_payload, seed: int) -> None:
    import scipy
    import sklearn

    canon = json.dumps(config_payload, sort_keys=True).encode()
    _write_json(out_dir / "manifest.json", {
        "config_hash": hashlib.sha256(canon).hexdigest(),
        "seed": seed,
        "versions": {
            "quboost": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__,
            "python": sys.version.split()[0],
        },
    })


def _ensemble_config(payload: dict, seed: int) -> EnsembleConfig:
    hp = LearnerHyperparams(**payload.get("hyperparams", {}))
    return EnsembleConfig(
        n_learners=payload["n_learners"],
        mix=payload["mix"],
        variant=payload.get("variant", "subsampling"),
        n_subsets=payload.get("n_subsets", 4),
        hyperparams=hp,
        seed=seed,
    )


def _load_datasets(payload: dict, seed: int) -> tuple[Dataset, Dataset]:
    if payload["source"] == "synthetic":
        spec_kwargs = dict(payload.get("spec", {}))
        spec_kwargs.setdefault("seed", seed)
        spec = SyntheticSpec(**spec_kwargs)
        return generate_synthetic(spec)
    for key in ("train_path", "test_path", "label_column", "date_column"):
        if key not in payload:
            raise ValueError(f"csv dataset config requires '{key}'")
    train = load_csv(payload["train_path"], payload["label_column"], payload["date_column"])
    test = load_csv(payload["test_path"], payload["label_column"], payload["date_column"])
    return train, test


def _run_solver(q: qubo_mod.QuboMatrix, payload: dict, seed: int):
    """Returns (bits, cost, trace_or_None, cycles_used)."""
    name = payload["name"]
    if name == "brute_force":
        bits, cost = qubo_mod.brute_force_min(q)
        return bits, cost, None, 0
    if name == "uniform":
        trace = solvers.uniform_solve(q, payload.get("n_cycles", 10000), seed)
    elif name == "sa":
        schedule = solvers.SaSchedule(
            n_sweeps=payload.get("n_sweeps", 1000),
            beta_initial=payload.get("beta_initial", 0.1),
            beta_final=payload.get("beta_final", 10.0),
        )
        trace = solvers.simulated_annealing(q, schedule, payload.get("n_restarts", 20), seed)
    elif name == "rgs":
        p = payload.get("loading_p", rgs.DEFAULT_LOADING_P)
        spacing = payload.get("spacing_um", SPACING_DEFAULT)
        pattern = rgs.design_pattern(q.n, p, spacing)
        from .ising import C6_DEFAULT
        pulses = solvers.default_pulses(q, C6_DEFAULT / spacing**6)
        trace = rgs.rgs_solve(q, pattern, pulses, payload.get("n_cycles", 1000), seed,
                              p=p, max_cluster=payload.get("max_cluster", rgs.DEFAULT_MAX_CLUSTER))
    elif name == "qaoa":
        spacing = payload.get("spacing_um", SPACING_DEFAULT)
        from .ising import C6_DEFAULT, Register
        atoms = Register(positions=rgs._triangular_sites(q.n, spacing))
        sigma = rgs.relabel(q, atoms, 10 * q.n, seed).sigma
        trace = solvers.qaoa_naive(q, atoms, payload.get("n_outer", 10),
                                   payload.get("shots_per_iter", 100), seed, sigma=sigma)
    elif name == "tebd":
        bits, trace = solvers.tebd_solve(q, payload.get("chi", 32),
                                         payload.get("tau", _default_tau(q)),
                                         payload.get("n_steps", 20))
        return trace.best_bits, trace.best_cost, trace, trace.n_cycles
    else:
        raise ValueError(f"unknown solver {name!r}")
    if trace.best_bits is None:
        raise RuntimeError(f"solver {name!r} produced no scored bitstring; increase its cycle budget")
    return trace.best_bits, trace.best_cost, trace, trace.n_cycles


def _default_tau(q: qubo_mod.QuboMatrix) -> float:
    scale = float(np.max(np.abs(q.Q)))
    return 1.0 / scale if scale > 0 else 1.0


def _stage(label: str, timings: dict, fn, *args, **kwargs):
    start = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(label, exc)
    timings[label] = time.perf_counter() - start
    return result


def cmd_gen_data(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = _load_json(args.spec, _SYNTH_SPEC_SCHEMA)
    if args.seed is not None:
        payload["seed"] = args.seed
    spec = SyntheticSpec(**payload)
    train, test = generate_synthetic(spec)
    save_csv(train, out_dir / "train.csv")
    save_csv(test, out_dir / "test.csv")
    _manifest(out_dir, payload, spec.seed)
    print(f"wrote {out_dir / 'train.csv'} ({train.n_rows} rows, "
          f"{train.positive_fraction():.3f} positive) and "
          f"{out_dir / 'test.csv'} ({test.n_rows} rows, "
          f"{test.positive_fraction():.3f} positive)")
    return 0


def cmd_train(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _load_json(args.config, RUN_CONFIG_SCHEMA)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    recall_target = config.get("recall_target", metrics.DEFAULT_RECALL_TARGET)
    timings: dict[str, float] = {}

    train, test = _stage("dataset", timings, _load_datasets, config["dataset"], seed)
    if config.get("rebalance"):
        train = _stage("rebalance", timings, rebalance, train, config["rebalance"], seed)

    ens_config = _ensemble_config(config["ensemble"], seed)
    ensemble, h_train = _stage("learners", timings, train_ensemble, ens_config, train)

    lam_config = config.get("lambda", 0.05)
    if isinstance(lam_config, dict):
        lam = _stage("tune_lambda", timings, classifier.tune_lambda,
                     ens_config, train, lam_config["grid"], seed, recall_target)
    else:
        lam = float(lam_config)

    q = _stage("qubo", timings, qubo_mod.build, h_train, train.labels, lam)
    bits, cost_val, trace, cycles = _stage("solver", timings, _run_solver,
                                           q, config["solver"], seed)
    ref_bits, ref_cost = _stage("reference", timings, solvers.reference_minimum, q, seed)
    gap_val = qubo_mod.gap_from_costs(cost_val, ref_cost) if ref_cost != 0 else None

    def _classify():
        clf = classifier.build_strong_classifier(ensemble, bits, train)
        labels, margins = classifier.predict(clf, test.features)
        return clf, labels, margins

    clf, labels, margins = _stage("classifier", timings, _classify)

    def _metrics():
        curve = metrics.pr_curve(margins, test.labels)
        try:
            precision = metrics.precision_at_recall(curve, recall_target)
        except ValueError:
            precision = None
        counts = metrics.confusion(labels, test.labels)
        return curve, precision, counts

    curve, precision, counts = _stage("metrics", timings, _metrics)

    classifier.save_model(clf, lam, ens_config, out_dir / "model.json")
    classifier.predictions_to_csv(out_dir / "predictions.csv", margins, labels)
    curve.to_csv(out_dir / "pr_curve.csv")
    if trace is not None:
        trace.to_csv(out_dir / "trace.csv", reference_cost=ref_cost)
    qubo_mod.save_qubo(q, out_dir / "qubo.json")
    p_op, r_op = metrics.precision_recall(counts)
    _write_json(out_dir / "report.json", {
        "n_learners": ens_config.n_learners,
        "variant": ens_config.variant,
        "solver": config["solver"]["name"],
        "lambda": lam,
        "selected_learners": int(np.sum(bits)),
        "threshold": clf.threshold,
        "qubo_cost": cost_val,
        "reference_cost": ref_cost,
        "gap": gap_val,
        "cycles_used": cycles,
        "recall_target": recall_target,
        "precision_at_recall_target": precision,
        "operating_point": {"precision": p_op, "recall": r_op,
                            "tp": counts.tp, "fp": counts.fp,
                            "tn": counts.tn, "fn": counts.fn},
        "test_rows": test.n_rows,
    })
    _manifest(out_dir, config, seed)
    _write_json(out_dir / "timings.json", {k: round(v, 6) for k, v in timings.items()})
    print(f"precision at recall {recall_target}: {precision}; gap: {gap_val}; "
          f"cycles: {cycles}; outputs in {out_dir}")
    return 0


def cmd_solve(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    solver_payload = {"name": args.solver}
    if args.config:
        solver_payload.update(_load_json(args.config, _SOLVER_SCHEMA))
        solver_payload["name"] = args.solver
    jsonschema.validate(solver_payload, _SOLVER_SCHEMA)
    seed = args.seed if args.seed is not None else 0
    timings: dict[str, float] = {}
    q = _stage("load_qubo", timings, qubo_mod.load_qubo, args.qubo)
    bits, cost_val, trace, cycles = _stage("solver", timings, _run_solver, q, solver_payload, seed)
    payload = {
        "solver": args.solver,
        "seed": seed,
        "bits": [int(b) for b in bits],
        "cost": cost_val,
        "cycles_used": cycles,
    }
    _write_json(out_dir / "solution.json", payload)
    if trace is not None:
        trace.to_csv(out_dir / "trace.csv")
    _manifest(out_dir, solver_payload, seed)
    _write_json(out_dir / "timings.json", {k: round(v, 6) for k, v in timings.items()})
    print(f"cost {cost_val} with {int(np.sum(bits))}/{q.n} bits set; outputs in {out_dir}")
    return 0


def cmd_bench(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _load_json(args.config, BENCH_CONFIG_SCHEMA)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    sizes = config["sizes"]
    solver_names = config["solvers"]
    n_instances = config.get("n_instances", 5)
    cycles = {"uniform": 20000, "sa": 200, "rgs": 500}
    cycles.update(config.get("cycles", {}))
    threshold = config.get("threshold", 0.01)
    lam = config.get("lambda", 0.05)
    timings: dict[str, float] = {}

    summary: dict = {"threshold": threshold, "sizes": sizes, "solvers": {}}
    fits = {}
    for name in solver_names:
        per_size = []
        for n in sizes:
            instances = _stage(f"instances_N{n}", timings, bench.ensemble_qubo_set,
                               n, n_instances, seed)
            refs, traces = [], []
            for k, q in enumerate(instances):
                ref_bits, ref_cost = solvers.reference_minimum(q, seed)
                refs.append(ref_cost)
                payload = {"name": name, "n_cycles": cycles.get(name, 1000)}
                if name == "sa":
                    payload = {"name": "sa", "n_restarts": cycles.get("sa", 200),
                               "n_sweeps": 300}
                _, _, trace, _ = _stage(f"{name}_N{n}_i{k}", timings, _run_solver,
                                        q, payload, seed + k)
                traces.append(trace)
            mean, std = bench.gap_convergence(traces, refs)
            bench.series_to_csv(out_dir / f"series_{name}_N{n}.csv", mean, std)
            counts = [bench.cycles_to_gap(t, threshold, r) for t, r in zip(traces, refs)]
            budget = traces[0].n_cycles
            mean_count = float(np.mean([budget if c is None else c for c in counts]))
            per_size.append((n, mean_count))
            summary["solvers"].setdefault(name, {})[str(n)] = {
                "mean_cycles_to_threshold": mean_count,
                "unreached": sum(c is None for c in counts),
                "final_mean_gap": float(mean[-1]),
            }
        if len(per_size) >= 3:
            fit = bench.fit_scaling(per_size)
            fits[name] = {"model": fit.model, "a": fit.a, "b": fit.b,
                          "r_squared": fit.r_squared, "points": list(fit.points)}
    _write_json(out_dir / "scaling_fit.json", fits)
    _write_json(out_dir / "summary.json", summary)
    _manifest(out_dir, config, seed)
    _write_json(out_dir / "timings.json", {k: round(v, 6) for k, v in timings.items()})
    print(f"bench outputs in {out_dir}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    report_path = run_dir / "report.json"
    summary_path = run_dir / "summary.json"
    if report_path.exists():
        payload = _load_json(report_path)
        print("training run report")
        for key in sorted(payload):
            print(f"  {key}: {payload[key]}")
    elif summary_path.exists():
        payload = _load_json(summary_path)
        print(f"benchmark summary (gap threshold {payload['threshold']})")
        for name, per_size in sorted(payload["solvers"].items()):
            for n, stats in sorted(per_size.items(), key=lambda kv: int(kv[0])):
                print(f"  {name} N={n}: mean cycles {stats['mean_cycles_to_threshold']:.1f}, "
                      f"final mean gap {stats['final_mean_gap']:.4f}")
    else:
        raise StageError("report", FileNotFoundError(f"no report.json or summary.json in {run_dir}"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quboost",
                                     description="ensemble classification with QUBO solvers")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic train/test CSVs")
    p.add_argument("--spec", required=True, help="SyntheticSpec JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="end-to-end training run")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("solve", help="solve a QUBO file standalone")
    p.add_argument("--qubo", required=True, help="QUBO JSON file")
    p.add_argument("--solver", required=True,
                   choices=["brute_force", "uniform", "sa", "rgs", "qaoa", "tebd"])
    p.add_argument("--config", default=None, help="optional solver-parameter JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="gap-convergence and scaling benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("report", help="print the summary of a finished run")
    p.add_argument("--run", required=True, help="output directory of a previous run")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr)
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

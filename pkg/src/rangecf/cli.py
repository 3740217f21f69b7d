"""Command-line entry point: train models, explain instances, run the
benchmark suite, or serve the HTTP API.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
A single master seed (--seed) fans out to per-component seeds through
`seeds.derive_seed(master, label)`, so each sub-experiment can be repeated
on its own.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import (
    GrowingSphereConfig,
    PlainCfConfig,
    brute_force_minimal_subsets,
    growing_sphere,
    plain_cf,
)
from .enumerator import (
    ConstraintSpec,
    enumerate_explanations,
    explanation_set_to_json,
    load_constraints,
)
from .features import (
    Dataset,
    DatasetError,
    Scaler,
    generate_synthetic,
    load_csv,
    load_instances_csv,
    load_schema,
    save_schema,
    split_train_test,
    synthetic_feature_space,
)
from .metrics import MadScaler, PercentileTable
from .models import (
    MlpClassifier,
    ModelFormatError,
    TrainConfig,
    TrainingDiverged,
    load_model,
    save_model,
    synthetic_rule_classifier,
    train_mlp,
)
from .report import render_all
from .seeds import derive_seed
from .service import ServiceBundle, create_app
from .trials import (
    MethodContext,
    PerturbationSpec,
    RetrainSpec,
    aggregate,
    run_perturbation_trial,
    run_retrain_trial,
    select_unfavorable_instances,
    train_model_pool,
    write_rows_csv,
    write_summary_json,
)

log = logging.getLogger("rangecf")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class ConfigError(Exception):
    pass


def _load_dataset(args) -> Dataset:
    if args.data:
        if not Path(args.schema or "").exists():
            raise ConfigError(f"schema file not found: {args.schema}")
        schema, label = load_schema(args.schema)
        label = args.label or label
        if label is None:
            raise ConfigError("label column not named in schema file or --label")
        return load_csv(args.data, schema, label)
    n = args.synthetic_n
    return generate_synthetic(n, seed=derive_seed(args.seed, "dataset"))


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(args)
    train, test = split_train_test(ds, args.ratio, seed=derive_seed(args.seed, "split"))
    scaler = Scaler.fit(train.rows)
    cfg = TrainConfig(
        epochs=args.epochs,
        hidden=tuple(args.hidden),
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=derive_seed(args.seed, "init"),
    )
    model, report = train_mlp(
        scaler.transform(train.rows), train.labels, scaler.transform(test.rows), test.labels, cfg
    )
    save_model(model, out / "model.json")
    scaler.save(out / "scaler.json")
    save_schema(ds.space, out / "schema.json", label_column=args.label)
    print(f"train accuracy: {report.train_accuracy:.4f}")
    print(f"test accuracy: {report.test_accuracy:.4f}")
    print(f"model written to {out / 'model.json'}")
    return EXIT_OK


def _load_classifier(args):
    if args.rule_model:
        return synthetic_rule_classifier(), synthetic_feature_space()
    if not args.model or not args.scaler or not args.schema:
        raise ConfigError("--model, --scaler and --schema are required without --rule-model")
    schema, _ = load_schema(args.schema)
    clf = MlpClassifier(load_model(args.model), Scaler.load(args.scaler))
    return clf, schema


def cmd_explain(args) -> int:
    clf, schema = _load_classifier(args)
    if args.schema:
        schema, _ = load_schema(args.schema)
    instances = load_instances_csv(args.instances, schema)
    constraints = load_constraints(args.constraints) if args.constraints else ConstraintSpec()
    sink = open(args.out, "w") if args.out else sys.stdout
    mismatches = 0
    try:
        for x in instances:
            if args.method == "minsat":
                result = enumerate_explanations(x, clf, schema, constraints, budget=args.budget)
                record = explanation_set_to_json(result, x, method="minsat")
                if args.verify:
                    oracle = brute_force_minimal_subsets(x, clf, schema, constraints)
                    record["verified"] = set(result.subsets()) == set(oracle.subsets())
                    if not record["verified"]:
                        mismatches += 1
                        log.warning("enumeration differs from brute force for input %s", x.tolist())
            elif args.method == "brute":
                result = brute_force_minimal_subsets(x, clf, schema, constraints)
                record = explanation_set_to_json(result, x, method="brute")
            elif args.method in ("gs", "plaincf"):
                record = _single_shot_record(args, x, clf, schema)
            else:
                raise ConfigError(f"unknown method {args.method!r}")
            sink.write(json.dumps(record) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_RUNTIME if mismatches else EXIT_OK


def _single_shot_record(args, x, clf, schema) -> dict:
    points = []
    calls = 0
    for j in range(args.k):
        seed = derive_seed(args.seed, f"{args.method}-{j}")
        if args.method == "gs":
            outcome = growing_sphere(x, clf, GrowingSphereConfig(seed=seed), scaler=getattr(clf, "scaler", None))
        else:
            if not isinstance(clf, MlpClassifier):
                raise ConfigError("plaincf requires an MLP model (not --rule-model)")
            outcome = plain_cf(x, clf, PlainCfConfig(seed=seed))
        calls += outcome.model_calls
        if outcome.point is not None:
            points.append(outcome.point)
    explanations = []
    for p in points:
        changed = [i + 1 for i in range(schema.d) if p[i] != x[i]]
        explanations.append(
            {
                "changed_indices": changed,
                "cfe": [float(v) for v in p],
                "probability": float(clf.predict_proba(p)),
            }
        )
    return {
        "method": args.method,
        "input": [float(v) for v in x],
        "status": "complete" if explanations else "not_found",
        "model_calls": calls,
        "explanations": explanations,
    }


def cmd_bench(args) -> int:
    with open(args.config) as fh:
        cfg = json.load(fh)
    seed = int(cfg.get("seed", args.seed))
    out = Path(cfg.get("out", args.out or "bench_out"))
    out.mkdir(parents=True, exist_ok=True)

    ds_cfg = cfg.get("dataset", {"source": "synthetic", "n": 20000})
    if ds_cfg.get("source", "synthetic") == "synthetic":
        ds = generate_synthetic(int(ds_cfg.get("n", 20000)), seed=derive_seed(seed, "dataset"))
    else:
        schema, label = load_schema(ds_cfg["schema"])
        ds = load_csv(ds_cfg["path"], schema, ds_cfg.get("label", label or "label"))
    split_ratio = float(ds_cfg.get("split_ratio", 0.7))

    model_cfg = cfg.get("model", {})
    train_cfg = TrainConfig(
        epochs=int(model_cfg.get("epochs", 30)),
        hidden=tuple(model_cfg.get("hidden", (32, 16))),
        batch_size=int(model_cfg.get("batch_size", 128)),
        learning_rate=float(model_cfg.get("learning_rate", 1e-3)),
        seed=0,  # per-model seeds come from the retrain spec
    )
    methods = cfg.get("methods", ["minsat", "gs", "plaincf"])
    constraints = (
        load_constraints(cfg["constraints"]) if cfg.get("constraints") else None
    )

    rows = []
    retrain_cfg = cfg.get("retrain")
    if retrain_cfg:
        rows += run_retrain_trial(
            ds,
            methods=methods,
            retrain=RetrainSpec(num_models=int(retrain_cfg.get("num_models", 2))),
            train_cfg=train_cfg,
            num_instances=int(retrain_cfg.get("num_instances", 100)),
            split_ratio=split_ratio,
            seed=seed,
        )

    perturb_cfg = cfg.get("perturbation")
    if perturb_cfg:
        train, test = split_train_test(ds, split_ratio, seed=derive_seed(seed, "split"))
        scaler = Scaler.fit(train.rows)
        pool = train_model_pool(
            train, test, scaler, RetrainSpec(num_models=2), train_cfg, seed
        )
        clf = pool[0]
        ctx = MethodContext(
            space=ds.space,
            scaler=scaler,
            table=PercentileTable.fit(ds.rows),
            mad=MadScaler.fit(train.rows),
            constraints=constraints,
        )
        instances, _ = select_unfavorable_instances(
            test, [clf], int(perturb_cfg.get("num_instances", 40))
        )
        spec = PerturbationSpec(
            sigmas=tuple(perturb_cfg.get("sigmas", (0.0001, 0.001, 0.01, 0.1))),
            trials_per_sigma=int(perturb_cfg.get("trials_per_sigma", 1)),
            seed=derive_seed(seed, "perturb"),
        )
        rows += run_perturbation_trial(clf, instances, ctx, methods=methods, spec=spec)

    write_rows_csv(rows, out / "results.csv")
    summary = aggregate(rows)
    write_summary_json(summary, out / "summary.json")
    written = [out / "results.csv", out / "summary.json"]
    if cfg.get("figures", True):
        written += render_all(summary, out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    clf, schema = _load_classifier(args)
    percentiles = None
    if args.data:
        rows = load_instances_csv(args.data, schema)
        percentiles = PercentileTable.fit(rows)
    elif args.rule_model:
        percentiles = PercentileTable.fit(
            generate_synthetic(2000, seed=derive_seed(args.seed, "percentiles")).rows
        )
    bundle = ServiceBundle(classifier=clf, space=schema, percentiles=percentiles, budget=args.budget)
    app = create_app(bundle)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rangecf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an MLP and write model/scaler/schema files")
    train.add_argument("--out", default="model_out")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--data", help="CSV dataset; omit to use the synthetic dataset")
    train.add_argument("--schema", help="feature-space schema JSON (required with --data)")
    train.add_argument("--label", help="label column (overrides schema file)")
    train.add_argument("--synthetic-n", type=int, default=20000)
    train.add_argument("--ratio", type=float, default=0.7)
    train.add_argument("--epochs", type=int, default=30)
    train.add_argument("--hidden", type=int, nargs=2, default=(32, 16))
    train.add_argument("--batch-size", type=int, default=128)
    train.add_argument("--learning-rate", type=float, default=1e-3)
    train.set_defaults(func=cmd_train)

    explain = sub.add_parser("explain", help="stream explanation JSON records for a CSV of instances")
    explain.add_argument("--model")
    explain.add_argument("--scaler")
    explain.add_argument("--schema")
    explain.add_argument("--rule-model", action="store_true", help="use the built-in synthetic rule classifier")
    explain.add_argument("--instances", required=True)
    explain.add_argument("--constraints")
    explain.add_argument("--method", default="minsat", choices=["minsat", "brute", "gs", "plaincf"])
    explain.add_argument("--k", type=int, default=1, help="runs per instance for gs/plaincf")
    explain.add_argument("--budget", type=int, default=1_000_000)
    explain.add_argument("--seed", type=int, default=0)
    explain.add_argument("--verify", action="store_true", help="audit minsat output against brute force")
    explain.add_argument("--out", help="output JSONL path (default stdout)")
    explain.set_defaults(func=cmd_explain)

    bench = sub.add_parser("bench", help="run robustness trials and write CSV/JSON/figures")
    bench.add_argument("--config", required=True)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out")
    bench.set_defaults(func=cmd_bench)

    serve = sub.add_parser("serve", help="serve the explanation HTTP API")
    serve.add_argument("--model")
    serve.add_argument("--scaler")
    serve.add_argument("--schema")
    serve.add_argument("--rule-model", action="store_true")
    serve.add_argument("--data", help="reference CSV for percentile summaries")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--budget", type=int, default=100_000)
    serve.add_argument("--seed", type=int, default=0)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ModelFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

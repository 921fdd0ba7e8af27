"""Batch command-line entry point; a thin layer over the core pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer/backend error.
Errors print a human-readable message to stderr, or a JSON object when
--json-errors is given. All randomness sits behind --seed / config seeds,
so identical invocations produce identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .core import load_dataset
from .errors import DataError, QueryfeatError, ScorerError
from .experiments import (
    DEFAULT_FRACTIONS,
    ExperimentConfig,
    ExperimentContext,
    build_scorer,
    canonical_json,
    downstream_grid,
    feature_ablation,
    learning_curve,
    run_fidelity,
)
from .extract import ChunkingConfig, FeatureMatrix, extract_matrix
from .linear import LinearModel, TrainConfig, predict_proba, train
from .metrics import auroc, bootstrap_ci, classification_metrics, make_report
from .scorer import ENV_ENDPOINT
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SCORER = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via our exit-code contract."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="queryfeat", description=__doc__)
    parser.add_argument("--json-errors", action="store_true",
                        help="emit machine-readable JSON on stderr for failures")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scorer_args(p):
        p.add_argument("--scorer", help="mock:<lexicon.json> or http:<url> "
                       f"(default: ${ENV_ENDPOINT} as an http endpoint)")
        p.add_argument("--noise-sigma", type=float, default=0.0,
                       help="Gaussian noise std added to the yes log-probability")
        p.add_argument("--seed", type=int, default=0)

    def add_chunking_args(p):
        p.add_argument("--chunk-size", type=int, default=512)
        p.add_argument("--max-chunks", type=int, default=4)

    p = sub.add_parser("synth", help="generate the synthetic benchmark corpus")
    p.add_argument("--out", required=True, help="output directory for the corpus bundle")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--train", type=int, default=2000, dest="n_train")
    p.add_argument("--test", type=int, default=500, dest="n_test")

    p = sub.add_parser("extract", help="extract a feature matrix to a CSV cache")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    add_scorer_args(p)
    add_chunking_args(p)

    p = sub.add_parser("train", help="train one linear model from a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", required=True, help="label name (e.g. readmit or finding/edema)")
    p.add_argument("--variant", choices=("binary", "continuous"), default="continuous")
    p.add_argument("--out", required=True)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--variant", choices=("binary", "continuous"), default="continuous")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report JSON here instead of stdout")

    for name, help_text in (
        ("grid", "downstream comparison grid"),
        ("curve", "learning curves"),
        ("ablate", "feature-pruning curves"),
        ("fidelity", "per-query extraction quality"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML/JSON config; keys mirror the experiment config")
        p.add_argument("--dataset")
        p.add_argument("--queries")
        p.add_argument("--downstream")
        p.add_argument("--out-dir")
        p.add_argument("--tasks", nargs="*")
        p.add_argument("--resamples", type=int)
        add_scorer_args(p)
        if name == "curve":
            p.add_argument("--variant", default="inferred-continuous-custom")
            p.add_argument("--fractions", nargs="*", type=float)
        if name == "ablate":
            p.add_argument("--variant", default="inferred-continuous-custom")
            p.add_argument("--mode", choices=("random", "magnitude"), default="magnitude")
            p.add_argument("--repeats", type=int, default=10)
        if name == "fidelity":
            p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("serve", help="run the HTTP workbench service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--state-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", help="require this bearer token on every request")
    add_scorer_args(p)
    add_chunking_args(p)

    return parser


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: cannot parse config: {exc}") from exc


def _scorer_spec(args) -> str:
    if getattr(args, "scorer", None):
        return args.scorer
    endpoint = os.environ.get(ENV_ENDPOINT)
    if endpoint:
        return f"http:{endpoint}"
    raise DataError(f"no scorer given: pass --scorer or set ${ENV_ENDPOINT}")


def _experiment_config(args) -> ExperimentConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        raw.update(_load_config_file(args.config))
    overrides = {
        "dataset": args.dataset,
        "queries": args.queries,
        "downstream_queries": getattr(args, "downstream", None),
        "out_dir": getattr(args, "out_dir", None),
        "scorer": getattr(args, "scorer", None),
        "bootstrap_resamples": getattr(args, "resamples", None),
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if getattr(args, "tasks", None):
        raw["tasks"] = tuple(args.tasks)
    if getattr(args, "noise_sigma", 0.0):
        raw["noise_sigma"] = args.noise_sigma
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    for required in ("dataset", "queries", "out_dir"):
        if not raw.get(required):
            raise UsageError(f"missing --{required.replace('_', '-')} (or config key)")
    if not raw.get("scorer"):
        raw["scorer"] = _scorer_spec(args)
    return ExperimentConfig.from_dict(raw)


def _cmd_synth(args) -> int:
    cfg = SynthConfig(seed=args.seed, n_train=args.n_train, n_test=args.n_test)
    dataset = generate(cfg, args.out)
    print(f"wrote corpus bundle to {args.out} "
          f"({len(dataset.documents)} documents, {len(dataset.tasks)} tasks)")
    return EXIT_OK


def _cmd_extract(args) -> int:
    dataset = load_dataset(args.dataset)
    from .core import load_queries

    queries = load_queries(args.queries)
    scorer = build_scorer(_scorer_spec(args), args.noise_sigma, args.seed)
    cfg = ChunkingConfig(max_tokens_per_chunk=args.chunk_size, max_chunks=args.max_chunks)
    matrix = extract_matrix(dataset, queries, scorer, cfg, cache=args.out)
    print(f"wrote {matrix.values.shape[0]}x{matrix.values.shape[1]} feature matrix to {args.out}")
    return EXIT_OK


def _train_rows(args, features: FeatureMatrix, dataset, split: str):
    docs = [d for d in dataset.split_docs(split) if args.task in d.labels]
    known = set(features.doc_ids)
    docs = [d for d in docs if d.doc_id in known]
    if not docs:
        raise DataError(
            f"no {split} documents are labeled for task {args.task!r} "
            "and present in the feature file"
        )
    rows = features.select_docs([d.doc_id for d in docs])
    y = np.array([d.labels[args.task] for d in docs], dtype=float)
    if args.variant == "binary":
        rows = FeatureMatrix(rows.doc_ids, rows.query_ids, rows.binarized(), dict(rows.provenance))
    return rows, y


def _cmd_train(args) -> int:
    features = FeatureMatrix.load(args.features)
    dataset = load_dataset(args.dataset)
    rows, y = _train_rows(args, features, dataset, "train")
    cfg = TrainConfig(l2_strength=args.l2, epochs=args.epochs,
                      tolerance=args.tolerance, seed=args.seed)
    model = train(rows, y, cfg, task=args.task)
    model.save(args.out)
    print(f"wrote model for {args.task!r} ({len(model.query_ids)} features) to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = LinearModel.load(args.model)
    features = FeatureMatrix.load(args.features)
    dataset = load_dataset(args.dataset)
    args.task = model.task
    rows, y = _train_rows(args, features, dataset, args.split)
    scores = predict_proba(model, rows)
    labels = y.astype(int)
    point = auroc(scores, labels)
    ci = bootstrap_ci(lambda idx: auroc(scores[idx], labels[idx]),
                      n=len(labels), resamples=args.resamples, seed=args.seed)
    prf = classification_metrics((scores > 0.5).astype(int), labels)
    report = make_report(f"auroc:{model.task}:{args.split}", point, ci=ci, n=len(labels))
    payload = report.to_json()
    payload.update({"precision": prf.precision, "recall": prf.recall, "f1": prf.f1})
    text = canonical_json(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote report to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_grid(args) -> int:
    ctx = ExperimentContext(_experiment_config(args))
    downstream_grid(ctx)
    print(f"wrote grid.json and manifest.json to {ctx.out_dir}")
    return EXIT_OK


def _cmd_curve(args) -> int:
    ctx = ExperimentContext(_experiment_config(args))
    fractions = args.fractions or DEFAULT_FRACTIONS
    learning_curve(ctx, args.variant, fractions)
    print(f"wrote curves/{args.variant}.json to {ctx.out_dir}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    ctx = ExperimentContext(_experiment_config(args))
    feature_ablation(ctx, args.mode, repeats=args.repeats, variant=args.variant)
    print(f"wrote ablation/{args.mode}.json to {ctx.out_dir}")
    return EXIT_OK


def _cmd_fidelity(args) -> int:
    ctx = ExperimentContext(_experiment_config(args))
    rows = run_fidelity(ctx, split=args.split)
    print(f"wrote fidelity.json ({len(rows)} queries) to {ctx.out_dir}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import run_server

    run_server(
        dataset_path=args.dataset,
        queries_path=args.queries,
        state_dir=args.state_dir,
        scorer_spec=_scorer_spec(args),
        host=args.host,
        port=args.port,
        token=args.token,
        chunking=ChunkingConfig(
            max_tokens_per_chunk=args.chunk_size, max_chunks=args.max_chunks
        ),
        noise_sigma=args.noise_sigma,
        noise_seed=args.seed,
    )
    return EXIT_OK


COMMANDS = {
    "synth": _cmd_synth,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "grid": _cmd_grid,
    "curve": _cmd_curve,
    "ablate": _cmd_ablate,
    "fidelity": _cmd_fidelity,
    "serve": _cmd_serve,
}


def _fail(args_or_none, code: int, kind: str, message: str) -> int:
    json_errors = bool(getattr(args_or_none, "json_errors", False))
    if json_errors:
        print(json.dumps({"error": kind, "message": message, "exit_code": code}),
              file=sys.stderr)
    else:
        print(f"queryfeat: {message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = None
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        code = _fail(args, EXIT_USAGE, "usage", str(exc))
        parser.print_usage(sys.stderr)
        return code
    except ScorerError as exc:
        return _fail(args, EXIT_SCORER, "scorer", str(exc))
    except QueryfeatError as exc:
        return _fail(args, EXIT_DATA, "data", str(exc))
    except FileNotFoundError as exc:
        return _fail(args, EXIT_DATA, "data", str(exc))


if __name__ == "__main__":
    sys.exit(main())

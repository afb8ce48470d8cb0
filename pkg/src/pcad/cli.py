"""Command-line interface.

Subcommands: gen-data, train, eval, probe, export-emb, score. Every
command accepts --config (YAML) and --seed; --seed wins over the config
file. Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cloud import load_manifest
from .config import RunConfig, desk_profile, paper_profile
from .exceptions import ConfigError, DataError, NumericalError
from .synth import DatasetConfig, build_dataset
from .train import check_config_hash, load_checkpoint, train


def _load_run_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    elif getattr(args, "profile", None) == "paper":
        config = paper_profile()
    else:
        config = desk_profile()
    if args.seed is not None:
        config.seed = args.seed
    return config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcad", description="unified multi-category point-cloud anomaly detection"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic multi-category dataset")
    _add_common(p)
    p.add_argument("--out", default="data", help="output directory")
    p.add_argument("--categories", nargs="+", default=None, help="shape family names")
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--train-per-category", type=int, default=None)
    p.add_argument("--test-per-category", type=int, default=None)

    p = sub.add_parser("train", help="train a unified model")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset manifest JSON")
    p.add_argument("--out", default="checkpoint.pt", help="checkpoint path")
    p.add_argument("--profile", choices=["desk", "paper"], default="desk")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--json", help="write the report as JSON here")
    p.add_argument("--export-dir", help="write per-sample score JSON/PLY here")
    p.add_argument(
        "--allow-config-mismatch",
        action="store_true",
        help="evaluate even when --config differs from the checkpoint config",
    )

    p = sub.add_parser("probe", help="run the category-entanglement probe")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=100, help="probe training epochs")
    p.add_argument("--json", help="write the probe report as JSON here")

    p = sub.add_parser("export-emb", help="export per-sample global tokens")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--split", choices=["train", "test"], default="test")

    p = sub.add_parser("score", help="score a single PLY file")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("input", help="input PLY file")
    p.add_argument("--json", help="output JSON path (default: <input>.score.json)")
    p.add_argument("--ply", help="score-annotated PLY path (default: <input>.scored.ply)")
    return parser


def _cmd_gen_data(args) -> int:
    if args.config:
        import yaml

        raw = yaml.safe_load(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {args.config} must hold a mapping")
        try:
            cfg = DatasetConfig(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        cfg = DatasetConfig()
    cfg.out_dir = args.out
    if args.categories is not None:
        cfg.categories = list(args.categories)
    if args.n_points is not None:
        cfg.n_points = args.n_points
    if args.train_per_category is not None:
        cfg.train_per_category = args.train_per_category
    if args.test_per_category is not None:
        cfg.test_per_category = args.test_per_category
    if args.seed is not None:
        cfg.seed = args.seed
    manifest = build_dataset(cfg)
    print(
        f"wrote {len(manifest.samples)} samples over "
        f"{len(manifest.categories)} categories to {cfg.out_dir}"
    )
    return 0


def _cmd_train(args) -> int:
    config = _load_run_config(args)
    manifest = load_manifest(args.data)
    log = None if args.quiet else print
    result = train(config, manifest, checkpoint_path=args.out, log=log)
    print(f"trained {result.steps} steps; checkpoint at {result.checkpoint_path}")
    return 0


def _eval_setup(args):
    model, stored_config, payload = load_checkpoint(args.checkpoint)
    if args.config:
        config = RunConfig.load(args.config)
        if args.seed is not None:
            config.seed = args.seed
        check_config_hash(
            payload, config, override=getattr(args, "allow_config_mismatch", False)
        )
        model.config = config
    manifest = load_manifest(args.data)
    return model, manifest


def _cmd_eval(args) -> int:
    from .evaluate import evaluate_model, format_report

    model, manifest = _eval_setup(args)
    report = evaluate_model(model, manifest, export_dir=args.export_dir)
    print(format_report(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_probe(args) -> int:
    from .evaluate import ice_probe

    model, manifest = _eval_setup(args)
    report = ice_probe(model, manifest, probe_epochs=args.epochs)
    summary = {k: v for k, v in report.items() if k != "pairs"}
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_export_emb(args) -> int:
    from .evaluate import embeddings_json, export_embeddings

    model, manifest = _eval_setup(args)
    rows = export_embeddings(model, manifest, split=args.split)
    Path(args.out).write_text(embeddings_json(rows))
    print(f"wrote {len(rows)} embeddings to {args.out}")
    return 0


def _cmd_score(args) -> int:
    from .evaluate import score_file

    model, _, _ = load_checkpoint(args.checkpoint)
    if args.config:
        config = RunConfig.load(args.config)
        model.config = config
    out_json = args.json or f"{Path(args.input).with_suffix('')}.score.json"
    out_ply = args.ply or f"{Path(args.input).with_suffix('')}.scored.ply"
    record = score_file(model, args.input, out_json=out_json, out_ply=out_ply)
    print(
        f"object score {record['object_score']:.4f} "
        f"(predicted category {record['category']}); wrote {out_json} and {out_ply}"
    )
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "probe": _cmd_probe,
    "export-emb": _cmd_export_emb,
    "score": _cmd_score,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands: gen, train, eval, ablate, dump. Exit codes: 0 success,
1 usage or configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from bicd import __version__
from bicd.datagen import GenConfig, build_dataset, manifest_hash, preset_config, read_dataset, write_dataset
from bicd.datagen.presets import PRESET_TABLE
from bicd.errors import ConfigError, DataError, NumericError, UsageError
from bicd.harness import TrainConfig, ablation_table, dump_representations, evaluate, infer_split, parse_tags, train, write_json
from bicd.harness.evaluate import default_workers
from bicd.model import ModelParams

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT_NAME = "model.ckpt"
log = logging.getLogger("bicd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().rstrip()}")


# Flags mirroring GenConfig ingredients (flag dest -> GenConfig field).
_GEN_FLAGS = {
    "nodes": "n_nodes",
    "confounders": "n_confounders",
    "pervasiveness": "pervasiveness",
    "samples_per_skeleton": "samples_per_skeleton",
    "skeletons": "skeletons",
    "expected_degree": "expected_degree",
    "sigma": "noise_sigma",
    "endogenous_fraction": "endogenous_fraction",
}


def _skeleton_triple(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated counts T,V,E")
    try:
        return tuple(int(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training (override --config values)")
    s = argparse.SUPPRESS
    g.add_argument("--epochs", type=int, default=s)
    g.add_argument("--lr", type=float, default=s)
    g.add_argument("--beta", type=float, default=s)
    g.add_argument("--p0", type=float, default=s)
    g.add_argument("--tau-start", dest="tau_start", type=float, default=s)
    g.add_argument("--tau-end", dest="tau_end", type=float, default=s)
    g.add_argument("--batch-skeletons", dest="batch_skeletons", type=int, default=s)
    g.add_argument("--variant", choices=["none", "no-omega", "no-z", "no-c"], default=s)
    g.add_argument("--omega-mode", dest="omega_mode", choices=["rank", "norm"], default=s)
    g.add_argument("--dropout", type=float, default=s)
    g.add_argument("--mask-rate", dest="mask_rate", type=float, default=s)
    g.add_argument("--hidden", type=int, default=s)
    g.add_argument("--hidden-att", dest="hidden_att", type=int, default=s)
    g.add_argument("--enc-init", dest="enc_init", type=float, default=s)
    g.add_argument("--offset-lr", dest="offset_lr", type=float, default=s)
    g.add_argument("--refine-steps", dest="refine_steps", type=int, default=s)
    g.add_argument("--patience", type=int, default=s)
    g.add_argument("--config", type=Path, help="JSON file with training config fields")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bicd", description="Causal discovery with causal strengths as the variational latent.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate a synthetic dataset directory")
    gen.add_argument("--preset", choices=sorted(PRESET_TABLE))
    s = argparse.SUPPRESS
    gen.add_argument("--nodes", type=int, default=s)
    gen.add_argument("--confounders", type=int, default=s)
    gen.add_argument("--pervasiveness", type=float, default=s)
    gen.add_argument("--samples-per-skeleton", dest="samples_per_skeleton", type=int, default=s)
    gen.add_argument("--skeletons", type=_skeleton_triple, default=s, metavar="T,V,E")
    gen.add_argument("--expected-degree", dest="expected_degree", type=float, default=s)
    gen.add_argument("--sigma", type=float, default=s, help="noise standard deviation")
    gen.add_argument("--endogenous-fraction", dest="endogenous_fraction", type=float, default=s)
    gen.add_argument("--dim", type=int, default=None, help="representation dimension D (default 1)")
    gen.add_argument("--scale", type=float, default=None, help="multiply skeleton counts by this factor")
    gen.add_argument("--config", type=Path, help="JSON file with generator config fields")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--workers", type=int, default=None)
    gen.add_argument("--out", type=Path, required=True)

    tr = sub.add_parser("train", help="train a model on the train split")
    tr.add_argument("--data", type=Path, required=True)
    tr.add_argument("--out", type=Path, required=True)
    tr.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    _add_train_flags(tr)

    ev = sub.add_parser("eval", help="evaluate a trained model")
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--model", type=Path, required=True, help="run directory or checkpoint file")
    ev.add_argument("--split", choices=["train", "valid", "test"], default="test")
    ev.add_argument("--report", type=Path, required=True)
    ev.add_argument("--refine-steps", dest="refine_steps", type=int, default=None)
    ev.add_argument("--workers", type=int, default=None)

    ab = sub.add_parser("ablate", help="train and evaluate all four variants")
    ab.add_argument("--data", type=Path, required=True)
    ab.add_argument("--out", type=Path, required=True)
    ab.add_argument("--seeds", type=_seed_list, default=[0, 1, 2])
    ab.add_argument("--split", choices=["valid", "test"], default="test")
    ab.add_argument("--workers", type=int, default=None)
    _add_train_flags(ab)

    du = sub.add_parser("dump", help="write CSV dumps of representations and edge probabilities")
    du.add_argument("--data", type=Path, required=True)
    du.add_argument("--model", type=Path, required=True)
    du.add_argument("--split", choices=["train", "valid", "test"], default="test")
    du.add_argument("--what", default="edges", help="comma-separated subset of xhat,e,c,l,edges")
    du.add_argument("--out", type=Path, required=True)
    du.add_argument("--refine-steps", dest="refine_steps", type=int, default=None)
    du.add_argument("--workers", type=int, default=None)
    return parser


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return obj


def _train_config(args: argparse.Namespace) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    merged = _load_json(getattr(args, "config", None))
    merged.update({k: v for k, v in vars(args).items() if k in names})
    return TrainConfig.from_dict(merged)


def _gen_config(args: argparse.Namespace) -> GenConfig:
    given = {field: getattr(args, flag) for flag, field in _GEN_FLAGS.items() if hasattr(args, flag)}
    file_cfg = _load_json(args.config)
    if args.preset:
        if given or file_cfg:
            clash = sorted("--" + f.replace("_", "-") for f in _GEN_FLAGS if hasattr(args, f)) or ["--config"]
            raise UsageError(f"--preset cannot be combined with explicit ingredients: {', '.join(clash)}")
        cfg = preset_config(args.preset, args.scale or 1.0)
    else:
        merged = {**file_cfg, **given}
        missing = [f for f in ("n_nodes", "n_confounders", "pervasiveness", "samples_per_skeleton") if f not in merged]
        if missing:
            raise UsageError("without --preset, give --nodes, --confounders, --pervasiveness and --samples-per-skeleton")
        cfg = GenConfig.from_dict(merged)
        if args.scale:
            from bicd.datagen.presets import scale_counts

            cfg = replace(cfg, skeletons=scale_counts(cfg.skeletons, args.scale))
    if args.dim is not None:
        cfg = replace(cfg, dim=args.dim)
    return cfg


def _checkpoint_path(model: Path) -> Path:
    return model / CHECKPOINT_NAME if model.is_dir() else model


def _load_model(model: Path):
    params, hyper = ModelParams.load(_checkpoint_path(model))
    try:
        cfg = TrainConfig.from_dict(hyper["train"])
    except KeyError:
        raise DataError(f"checkpoint {model} carries no training config") from None
    return params, cfg, hyper


def _cmd_gen(args) -> int:
    cfg = _gen_config(args)
    workers = args.workers or default_workers()
    bundle = build_dataset(cfg, args.seed, name=args.preset or "custom", preset=args.preset, workers=workers)
    write_dataset(bundle, args.out)
    write_json({"command": "gen", "preset": args.preset, "seed": args.seed, "generation": cfg.to_dict()}, args.out / "resolved_config.json")
    print(f"wrote {len(bundle.skeletons)} skeletons to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _train_config(args)
    data = read_dataset(args.data)
    digest = manifest_hash(args.data)
    result = train(cfg, data)
    args.out.mkdir(parents=True, exist_ok=True)
    hyper = {"train": cfg.to_dict(), "dataset_manifest_sha256": digest}
    result.params.save(args.out / CHECKPOINT_NAME, hyper)
    write_json({"epochs_run": result.epochs_run, "seconds": result.seconds, "log": result.log}, args.out / "train_log.json")
    write_json({"command": "train", "data": str(args.data), "dataset_manifest_sha256": digest, "train": cfg.to_dict()}, args.out / "resolved_config.json")
    print(f"trained {result.epochs_run} epochs in {result.seconds:.1f}s; checkpoint {args.out / CHECKPOINT_NAME}")
    return EXIT_OK


def _eval_config(cfg: TrainConfig, refine_steps: int | None) -> TrainConfig:
    return cfg if refine_steps is None else replace(cfg, refine_steps=refine_steps)


def _cmd_eval(args) -> int:
    params, cfg, hyper = _load_model(args.model)
    cfg = _eval_config(cfg, args.refine_steps)
    data = read_dataset(args.data)
    digest = manifest_hash(args.data)
    metrics = evaluate(params, cfg, data, args.split, workers=args.workers)
    # No wall-clock fields: re-running the same evaluation reproduces the file byte for byte.
    report = {
        "metrics": metrics.to_dict(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "split": args.split,
        "dataset_manifest_sha256": digest,
        "checkpoint_dataset_manifest_sha256": hyper.get("dataset_manifest_sha256"),
    }
    write_json(report, args.report)
    write_json({"command": "eval", "data": str(args.data), "model": str(args.model), "split": args.split, "dataset_manifest_sha256": digest, "train": cfg.to_dict()}, args.report.with_name(args.report.stem + ".config.json"))
    print(f"{args.split}: auroc {metrics.auroc:.4f}  mse_c {metrics.mse_c:.4f}  recon_mse {metrics.recon_mse:.4f}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = _train_config(args)
    data = read_dataset(args.data)
    digest = manifest_hash(args.data)
    table = ablation_table(cfg, data, args.seeds, args.split, workers=args.workers)
    table["dataset_manifest_sha256"] = digest
    write_json(table, args.out / "ablation.json")
    write_json({"command": "ablate", "data": str(args.data), "seeds": args.seeds, "dataset_manifest_sha256": digest, "train": cfg.to_dict()}, args.out / "resolved_config.json")
    for row in table["rows"]:
        print(f"{row['variant']:>9}: auroc {row['auroc']['mean']:.4f} ± {row['auroc']['std']:.4f}  mse_c {row['mse_c']['mean']:.4f}")
    return EXIT_OK


def _cmd_dump(args) -> int:
    tags = parse_tags(args.what)
    params, cfg, _ = _load_model(args.model)
    cfg = _eval_config(cfg, args.refine_steps)
    data = read_dataset(args.data)
    inferred = infer_split(params, cfg, data, args.split, workers=args.workers)
    files = dump_representations(inferred, tags, args.out)
    write_json({"command": "dump", "data": str(args.data), "model": str(args.model), "split": args.split, "what": tags, "dataset_manifest_sha256": manifest_hash(args.data), "train": cfg.to_dict()}, args.out / "resolved_config.json")
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


_COMMANDS = {"gen": _cmd_gen, "train": _cmd_train, "eval": _cmd_eval, "ablate": _cmd_ablate, "dump": _cmd_dump}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

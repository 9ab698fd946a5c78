"""Command-line interface: train, eval, ablate, and export-heatmaps.

Config files are line-based ``key=value`` with ``#`` comments; unknown keys
are rejected with their line number. Exit codes: 0 success, 1 runtime
failure, 2 usage or config error. The ASD_LOG environment variable
(debug|info|quiet) controls verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import asdt
from .correlation import correlation_matrix
from .errors import ConfigError, ConfigFileError, FormatError, ShapeError, TrainingError
from .heatmaps import rearrange_assignment, write_heatmap_pgm
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .synthetic import GeneratorConfig, generate, load_shard, make_split
from .tensor import Tensor
from .training import TrainConfig, evaluate, train, write_history

logger = logging.getLogger(__name__)


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1"):
        return True
    if lowered in ("false", "0"):
        return False
    raise ValueError(f"expected true/false/1/0, got {raw!r}")


def _parse_stages(raw: str) -> list[int]:
    return [int(part.strip()) for part in raw.split(",") if part.strip()]


_CONFIG_KEYS = {
    # synthetic data
    "image_size": int, "num_attributes": int, "glyph_radius": float, "jitter": float,
    "presence_prob": float, "noise_std": float, "channels": int,
    "train_size": int, "val_size": int,
    # extractor
    "stage_channels": _parse_stages, "kernel_size": int, "pool_factor": int,
    # training
    "epochs": int, "lr": float, "lr_decay": float, "lr_decay_every": int,
    "weight_decay": float, "gamma": float, "batch_size": int, "seed": int,
    "use_asd": _parse_bool, "use_noise_factor": _parse_bool,
    "use_mean_feature": _parse_bool, "use_cmm": _parse_bool, "flip_augment": _parse_bool,
    # ablation
    "ablation_seeds": int,
}


def parse_config_file(path) -> dict:
    """Typed key=value pairs from a config file; raises ConfigFileError."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigFileError(0, f"cannot read config {path}: {exc}") from exc
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(line_no, f"expected key=value, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigFileError(line_no, f"unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value.strip())
        except ValueError as exc:
            raise ConfigFileError(line_no, f"bad value for {key!r}: {exc}") from exc
    return values


@dataclass
class RunSetup:
    generator: GeneratorConfig
    model: ModelConfig
    training: TrainConfig
    train_size: int
    val_size: int
    ablation_seeds: int


def build_setup(values: dict) -> RunSetup:
    def pick(cls_fields, **extra):
        out = {k: values[k] for k in cls_fields if k in values}
        out.update(extra)
        return out

    generator = GeneratorConfig(**pick(
        ("image_size", "num_attributes", "glyph_radius", "jitter",
         "presence_prob", "noise_std", "channels")))
    model = ModelConfig(**pick(
        ("num_attributes", "image_size", "stage_channels", "kernel_size", "pool_factor",
         "use_asd", "use_noise_factor", "use_mean_feature"),
        in_channels=generator.channels))
    training = TrainConfig(**pick(
        ("epochs", "lr", "lr_decay", "lr_decay_every", "weight_decay", "gamma",
         "batch_size", "seed", "use_asd", "use_noise_factor", "use_mean_feature",
         "use_cmm", "flip_augment")))
    return RunSetup(
        generator=generator, model=model, training=training,
        train_size=values.get("train_size", 2000),
        val_size=values.get("val_size", 500),
        ablation_seeds=values.get("ablation_seeds", 5),
    )


def _make_splits(setup: RunSetup, seed: int):
    train_samples = make_split(seed, setup.train_size, setup.generator)
    val_samples = make_split(seed + 1, setup.val_size, setup.generator)
    return train_samples, val_samples


def cmd_train(args) -> int:
    setup = build_setup(parse_config_file(args.config))
    if args.seed is not None:
        setup.training.seed = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_samples, val_samples = _make_splits(setup, setup.training.seed)
    logger.info("training on %d samples, validating on %d", len(train_samples), len(val_samples))
    model, history = train(setup.training, setup.model, train_samples, val_samples)
    write_history(history, out_dir / "history.csv")
    save_checkpoint(model, out_dir / "checkpoint.asdt", generator=setup.generator)
    final = history[-1].val_acc if history else float("nan")
    print(f"final_val_acc {final:.17g}")
    print(f"checkpoint {out_dir / 'checkpoint.asdt'}")
    return 0


def cmd_eval(args) -> int:
    if asdt.is_container(args.data):
        samples = load_shard(args.data)
        expected = samples[0].labels.shape[0]
    else:
        setup = build_setup(parse_config_file(args.data))
        samples = make_split(setup.training.seed + 1, setup.val_size, setup.generator)
        expected = setup.generator.num_attributes
    model, _ = load_checkpoint(args.checkpoint, expect_attributes=expected)
    acc, per_attribute = evaluate(model, samples)
    print(f"mean_accuracy {acc:.17g}")
    for k, value in enumerate(per_attribute):
        print(f"attribute_{k}_accuracy {value:.17g}")
    if args.export_correlation:
        if model.factors is None:
            raise ValueError("checkpoint has no latent factors to correlate")
        asdt.write_tensor(correlation_matrix(model.factors).data, args.export_correlation)
        logger.info("wrote correlation matrix to %s", args.export_correlation)
    return 0


_ABLATION_FLAGS = ("use_noise_factor", "use_mean_feature", "use_cmm")


def ablation_variants() -> list[tuple[str, dict]]:
    """The 2x2x2 AEM flag grid plus the pooled baseline."""
    variants = []
    for noise in (True, False):
        for mean in (True, False):
            for cmm in (True, False):
                flags = {"use_asd": True, "use_noise_factor": noise,
                         "use_mean_feature": mean, "use_cmm": cmm}
                disabled = [f"no_{name.removeprefix('use_')}"
                            for name, on in zip(_ABLATION_FLAGS, (noise, mean, cmm)) if not on]
                variants.append(("full" if not disabled else "+".join(disabled), flags))
    variants.append(("no_asd", {"use_asd": False, "use_noise_factor": True,
                                "use_mean_feature": True, "use_cmm": True}))
    return variants


def run_ablation(setup: RunSetup, variants: list[tuple[str, dict]], num_seeds: int):
    """Train every variant on ``num_seeds`` paired datasets; yields result rows."""
    rows = []
    for i in range(num_seeds):
        seed = setup.training.seed + i
        splits = _make_splits(setup, seed)
        for name, flags in variants:
            cfg = replace(setup.training, seed=seed, **flags)
            _, history = train(cfg, replace(setup.model), *splits)
            acc = history[-1].val_acc if history else float("nan")
            rows.append({"variant": name, "seed": seed, "val_acc": acc, **flags})
            logger.info("ablation %s seed %d: val_acc %.2f", name, seed, acc)
    return rows


def ablation_csv(rows: list[dict]) -> str:
    lines = ["variant,use_asd,use_noise_factor,use_mean_feature,use_cmm,seed,val_acc"]
    variants = []
    for row in rows:
        lines.append(
            f"{row['variant']},{int(row['use_asd'])},{int(row['use_noise_factor'])},"
            f"{int(row['use_mean_feature'])},{int(row['use_cmm'])},{row['seed']},"
            f"{row['val_acc']:.17g}"
        )
        if row["variant"] not in variants:
            variants.append(row["variant"])
    for name in variants:
        accs = [row["val_acc"] for row in rows if row["variant"] == name]
        sample = next(row for row in rows if row["variant"] == name)
        lines.append(
            f"{name},{int(sample['use_asd'])},{int(sample['use_noise_factor'])},"
            f"{int(sample['use_mean_feature'])},{int(sample['use_cmm'])},mean,"
            f"{np.mean(accs):.17g}"
        )
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    setup = build_setup(parse_config_file(args.config))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_ablation(setup, ablation_variants(), setup.ablation_seeds)
    (out_dir / "ablation.csv").write_text(ablation_csv(rows))
    for name in dict.fromkeys(row["variant"] for row in rows):
        accs = [row["val_acc"] for row in rows if row["variant"] == name]
        print(f"{name} mean_val_acc {np.mean(accs):.4f}")
    return 0


def cmd_export_heatmaps(args) -> int:
    model, generator = load_checkpoint(args.checkpoint)
    if model.factors is None:
        raise ValueError("checkpoint was trained without spatial decomposition; no assignment to export")
    if generator is None:
        raise ValueError("checkpoint carries no generator metadata; cannot synthesize a sample")
    sample = generate(args.sample_seed, 0, generator)
    _, assignment = model.forward(Tensor(sample.image))
    h, w = model.config.feature_hw()
    stack = rearrange_assignment(assignment, h, w)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [f"heatmap_attr{k:02d}.pgm" for k in range(model.config.num_attributes)]
    if model.config.use_noise_factor:
        names.append("heatmap_noise.pgm")
    for j, name in enumerate(names):
        write_heatmap_pgm(stack[:, :, j], out_dir / name)
    print(f"wrote {len(names)} heatmaps to {out_dir}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asd",
        description="Train and inspect prior-free attribute recognition models "
                    "built on spatial decomposition of feature maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a shard or synthetic config")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True,
                        help="ASDT shard, or a config file (evaluates its validation split)")
    p_eval.add_argument("--export-correlation", default=None,
                        help="optional path for the factor correlation matrix (ASDT)")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="run the ablation grid and emit a CSV table")
    p_ablate.add_argument("--config", required=True)
    p_ablate.add_argument("--out", required=True)
    p_ablate.set_defaults(func=cmd_ablate)

    p_heat = sub.add_parser("export-heatmaps", help="write per-factor assignment heatmaps as PGM")
    p_heat.add_argument("--checkpoint", required=True)
    p_heat.add_argument("--sample-seed", type=int, required=True)
    p_heat.add_argument("--out", required=True)
    p_heat.set_defaults(func=cmd_export_heatmaps)
    return parser


def _setup_logging():
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "quiet": logging.ERROR}
    level = levels.get(os.environ.get("ASD_LOG", "info").strip().lower(), logging.INFO)
    package_logger = logging.getLogger("asd")
    package_logger.setLevel(level)
    if not package_logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        package_logger.addHandler(handler)


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ConfigFileError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ShapeError, TrainingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

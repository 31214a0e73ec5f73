"""Command line surface for the crossing profiler pipeline.

Five batch subcommands cover the full workflow:

    synth     generate synthetic raw crossing records
    prepare   align, augment, split, and standardize a raw corpus
    train     fit one model variant on a prepared bundle
    eval      report split metrics, optionally with a held-out
              generalization table at several downsample factors
    predict   emit a predicted elevation profile for one sequence

Every command is deterministic for a fixed --seed, writes exactly one
run manifest alongside its outputs, prints diagnostics to stderr only,
and exits 0 on success, 1 on domain errors (bad data, divergence,
leakage), 2 on usage, configuration, or file system errors.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional

import jsonschema

from . import __version__
from .data import (
    AugmentPlan,
    FeatureStats,
    SceneConfig,
    build_dataset,
    export_raw_record,
    ingest_csv,
    ingest_sequence_csv,
    list_raw_records,
    load_bundle,
    record_to_sequence,
    resample_to_length,
    save_bundle,
    stable_seed,
    synthesize_crossing,
)
from .errors import ConfigError, ContractError, CrossingProfilerError
from .models import ModelSpec, load_checkpoint, parse_variant, save_checkpoint, build_model
from .training import TrainConfig, evaluate, generalization_eval, train

RUN_MANIFEST_NAME = "run_manifest.json"
THREADS_ENV_VAR = "CROSSING_PROFILER_THREADS"

_NUMBER = {"type": "number"}
_INTEGER = {"type": "integer"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hump_height_m": _NUMBER,
                "approach_length_m": _NUMBER,
                "crest_half_width_m": _NUMBER,
                "sampling_interval_m": _NUMBER,
                "collection_speed_kmh": {"type": ["number", "null"]},
                "base_altitude_m": _NUMBER,
                "profiler_noise_sd_m": _NUMBER,
                "gps_noise_sd_m": _NUMBER,
                "gps_drift_step_sd_m": _NUMBER,
                "accel_noise_sd": _NUMBER,
                "roll_noise_sd": _NUMBER,
                "pitch_noise_sd": _NUMBER,
                "speed_noise_sd_ms": _NUMBER,
                "profiler_margin_m": _NUMBER,
            },
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "noise_copies": _INTEGER,
                "downsample_pairs": _INTEGER,
                "split_ratios": {
                    "type": "array",
                    "items": _NUMBER,
                    "minItems": 3,
                    "maxItems": 3,
                },
                "sequence_length": _INTEGER,
            },
        },
        "spec": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"type": ["integer", "string"]},
                "input_channels": _INTEGER,
                "d_model": _INTEGER,
                "lstm_hidden": _INTEGER,
                "num_heads": _INTEGER,
                "d_ff": {"type": ["integer", "null"]},
                "num_encoder_blocks": _INTEGER,
                "sequence_length": _INTEGER,
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": _NUMBER,
                "batch_size": _INTEGER,
                "max_epochs": _INTEGER,
                "patience": _INTEGER,
                "dropout_rate": _NUMBER,
                "allow_dropout": {"type": "boolean"},
            },
        },
    },
}


@dataclass
class RunManifest:
    """Record of one command invocation, written next to its outputs."""

    command: str
    config: dict
    seed: int
    tool_version: str = __version__
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    duration_seconds: float = 0.0

    def write(self, path):
        payload = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "duration_seconds": self.duration_seconds,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config file %s is not valid JSON: %s" % (path, exc))
    try:
        jsonschema.validate(instance=config, schema=CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError("config file %s rejected: %s" % (path, exc.message))
    return config


def merged_section(config: dict, name: str, overrides: dict) -> dict:
    """Config-file section with non-None CLI overrides layered on top."""
    section = dict(config.get(name, {}))
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    return section


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(
            "%s must be an integer, got %r" % (THREADS_ENV_VAR, raw)
        )
    if value < 1:
        raise ConfigError("%s must be >= 1, got %d" % (THREADS_ENV_VAR, value))
    return value


def _eprint(*parts):
    print(*parts, file=sys.stderr)


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.monotonic()
    config = load_config(args.config)
    if args.count < 0:
        raise ConfigError("--count must be >= 0, got %d" % args.count)
    scene = merged_section(config, "scene", {})
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for i in range(args.count):
        cfg = SceneConfig(rng_seed=stable_seed(args.seed, "synth", i), **scene)
        record = synthesize_crossing(cfg, "%s_%03d" % (args.prefix, i))
        imu_path, profiler_path = export_raw_record(record, args.out)
        outputs.extend([str(imu_path), str(profiler_path)])
    manifest = RunManifest(
        command="synth",
        config={"scene": scene, "count": args.count, "prefix": args.prefix},
        seed=args.seed,
        outputs=outputs,
        duration_seconds=time.monotonic() - started,
    )
    manifest.write(os.path.join(args.out, RUN_MANIFEST_NAME))
    _eprint("synth: wrote %d records to %s" % (args.count, args.out))
    return 0


def cmd_prepare(args) -> int:
    started = time.monotonic()
    config = load_config(args.config)
    plan_fields = merged_section(
        config,
        "plan",
        {
            "noise_copies": args.noise_copies,
            "downsample_pairs": args.downsample_pairs,
            "sequence_length": args.sequence_length,
        },
    )
    if "split_ratios" in plan_fields:
        plan_fields["split_ratios"] = tuple(plan_fields["split_ratios"])
    plan = AugmentPlan(seed=args.seed, **plan_fields)
    plan.validate()
    paths = list_raw_records(args.raw)
    if not paths:
        raise FileNotFoundError("no raw records (*.imu.csv) found in %s" % args.raw)
    records = [ingest_csv(p) for p in paths]
    bundle = build_dataset(records, plan)
    save_bundle(bundle, args.out)
    manifest = RunManifest(
        command="prepare",
        config={"plan": plan.to_dict()},
        seed=args.seed,
        inputs=[str(p) for p in paths],
        outputs=[args.out],
        duration_seconds=time.monotonic() - started,
    )
    manifest.write(os.path.join(args.out, RUN_MANIFEST_NAME))
    counts = bundle.split_counts
    _eprint(
        "prepare: %d sources -> %d train / %d validation / %d test sequences"
        % (len(records), counts[0], counts[1], counts[2])
    )
    return 0


def _resolve_spec(config: dict, args, bundle_length: int) -> ModelSpec:
    overrides = {
        "variant": args.variant,
        "d_model": args.d_model,
        "lstm_hidden": args.lstm_hidden,
        "num_heads": args.num_heads,
        "d_ff": args.d_ff,
        "num_encoder_blocks": args.encoder_blocks,
        "sequence_length": args.sequence_length,
    }
    fields = merged_section(config, "spec", overrides)
    if "variant" not in fields:
        raise ConfigError("a model variant is required (--variant or config spec.variant)")
    fields["variant"] = parse_variant(fields["variant"])
    fields.setdefault("sequence_length", bundle_length)
    return ModelSpec(**fields)


def cmd_train(args) -> int:
    started = time.monotonic()
    config = load_config(args.config)
    bundle = load_bundle(args.bundle)
    spec = _resolve_spec(config, args, bundle.plan.sequence_length)
    train_fields = merged_section(
        config,
        "train",
        {
            "learning_rate": args.lr,
            "batch_size": args.batch_size,
            "max_epochs": args.max_epochs,
            "patience": args.patience,
            "dropout_rate": args.dropout_rate,
            "allow_dropout": True if args.allow_dropout else None,
        },
    )
    cfg = TrainConfig(seed=args.seed, **train_fields)
    cfg.validate()
    model = build_model(spec, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    history_path = os.path.join(args.out, "history.csv")
    try:
        history = train(model, bundle, cfg)
    except CrossingProfilerError as exc:
        partial = getattr(exc, "history", None)
        if partial is not None:
            partial.to_csv(history_path)
            _eprint("train: flushed %d epochs of history before failure" % len(partial.epochs))
        raise
    history.to_csv(history_path)
    checkpoint_path = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(model, checkpoint_path)
    manifest = RunManifest(
        command="train",
        config={
            "spec": spec.to_dict(),
            "train": {
                "learning_rate": cfg.learning_rate,
                "batch_size": cfg.batch_size,
                "max_epochs": cfg.max_epochs,
                "patience": cfg.patience,
                "dropout_rate": cfg.dropout_rate,
                "allow_dropout": cfg.allow_dropout,
            },
        },
        seed=args.seed,
        inputs=[args.bundle],
        outputs=[checkpoint_path, history_path],
        duration_seconds=time.monotonic() - started,
    )
    manifest.write(os.path.join(args.out, RUN_MANIFEST_NAME))
    best = history.epochs[history.best_epoch]
    _eprint(
        "train: %d epochs, best validation RMSE %.6f m at epoch %d"
        % (len(history.epochs), best.val_rmse_m, best.epoch)
    )
    return 0


def _parse_factors(raw: str) -> List[int]:
    try:
        factors = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError("--downsample expects comma-separated integers, got %r" % raw)
    if not factors:
        raise ConfigError("--downsample needs at least one factor")
    return factors


def cmd_eval(args) -> int:
    started = time.monotonic()
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError("checkpoint not found: %s" % args.checkpoint)
    model = load_checkpoint(args.checkpoint)
    bundle = load_bundle(args.bundle)
    threads = thread_count()
    os.makedirs(args.out, exist_ok=True)
    report = evaluate(model, bundle, threads=threads)
    splits_path = os.path.join(args.out, "metrics_splits.csv")
    report.to_split_csv(splits_path)
    outputs = [splits_path]
    rows = list(report.rows)
    if args.heldout is not None:
        factors = _parse_factors(args.downsample)
        heldout_paths = list_raw_records(args.heldout)
        if not heldout_paths:
            raise FileNotFoundError(
                "no raw records (*.imu.csv) found in %s" % args.heldout
            )
        heldout = [record_to_sequence(ingest_csv(p)) for p in heldout_paths]
        gen_report = generalization_eval(
            model,
            heldout,
            factors=factors,
            seen_source_ids=bundle.all_source_ids(),
            threads=threads,
        )
        gen_path = os.path.join(args.out, "metrics_downsample.csv")
        gen_report.to_downsample_csv(gen_path)
        outputs.append(gen_path)
        rows.extend(gen_report.rows)
        report.rows = rows
    json_path = os.path.join(args.out, "metrics.json")
    report.to_json(json_path)
    outputs.append(json_path)
    manifest = RunManifest(
        command="eval",
        config={
            "checkpoint": args.checkpoint,
            "bundle": args.bundle,
            "heldout": args.heldout,
            "downsample": args.downsample if args.heldout is not None else None,
            "threads": threads,
        },
        seed=args.seed,
        inputs=[args.checkpoint, args.bundle] + ([args.heldout] if args.heldout else []),
        outputs=outputs,
        duration_seconds=time.monotonic() - started,
    )
    manifest.write(os.path.join(args.out, RUN_MANIFEST_NAME))
    for row in rows:
        _eprint(
            "eval: %s %s rmse %.6f m mae %.6f m"
            % (
                row.split if row.downsample_factor is None
                else "%s(factor %d)" % (row.split, row.downsample_factor),
                row.model,
                row.rmse_m,
                row.mae_m,
            )
        )
    return 0


def cmd_predict(args) -> int:
    started = time.monotonic()
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError("checkpoint not found: %s" % args.checkpoint)
    model = load_checkpoint(args.checkpoint)
    if model.standardization is None:
        raise ContractError(
            "checkpoint carries no standardization statistics; train it first"
        )
    stats = FeatureStats.from_dict(model.standardization)
    if args.input.endswith(".imu.csv"):
        seq = record_to_sequence(ingest_csv(args.input))
        has_target = True
    else:
        seq, has_target = ingest_sequence_csv(args.input, require_target=False)
    if not has_target:
        _eprint("predict: input has no ground-truth column; omitting it from output")
    prepared = resample_to_length(seq, model.spec.sequence_length)
    features = stats.standardize_features(prepared.features)
    predicted = stats.destandardize_target(model.predict(features).ravel())

    lines = []
    if has_target:
        lines.append("position_m,predicted_m,ground_truth_m")
        for p, y, t in zip(prepared.positions_m, predicted, prepared.target):
            lines.append("%.17g,%.17g,%.17g" % (p, y, t))
    else:
        lines.append("position_m,predicted_m")
        for p, y in zip(prepared.positions_m, predicted):
            lines.append("%.17g,%.17g" % (p, y))
    text = "\n".join(lines) + "\n"

    if args.out == "-":
        sys.stdout.write(text)
        return 0
    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    manifest = RunManifest(
        command="predict",
        config={"checkpoint": args.checkpoint, "input": args.input},
        seed=args.seed,
        inputs=[args.checkpoint, args.input],
        outputs=[args.out],
        duration_seconds=time.monotonic() - started,
    )
    manifest.write(args.out + ".manifest.json")
    _eprint("predict: wrote %d positions to %s" % (len(predicted), args.out))
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossing-profiler",
        description="Estimate road surface elevation profiles at rail crossings "
        "from drive-over sensor sequences.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic raw records")
    p.add_argument("--count", type=int, default=1, help="number of crossings")
    p.add_argument("--prefix", default="crossing", help="crossing id prefix")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", parents=[common], help="build a training bundle")
    p.add_argument("--raw", required=True, help="directory of raw record CSV pairs")
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument("--noise-copies", type=int)
    p.add_argument("--downsample-pairs", type=int)
    p.add_argument("--sequence-length", type=int)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train one model variant")
    p.add_argument("--bundle", required=True, help="prepared bundle directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variant", help="1/2/3 or a name alias")
    p.add_argument("--d-model", type=int)
    p.add_argument("--lstm-hidden", type=int)
    p.add_argument("--num-heads", type=int)
    p.add_argument("--d-ff", type=int)
    p.add_argument("--encoder-blocks", type=int)
    p.add_argument("--sequence-length", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout-rate", type=float)
    p.add_argument("--allow-dropout", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--heldout", help="directory of held-out raw records")
    p.add_argument("--downsample", default="1,2",
                   help="comma-separated decimation factors for --heldout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="predict one profile")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True,
                   help="sequence CSV, or a raw .imu.csv with its profiler sibling")
    p.add_argument("--out", required=True, help="output CSV path, or - for stdout")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _eprint("error: %s" % exc)
        return 2
    except CrossingProfilerError as exc:
        _eprint("error: %s" % exc)
        return 1
    except FileExistsError as exc:
        _eprint("error: %s" % exc)
        return 2
    except OSError as exc:
        _eprint("error: %s" % exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

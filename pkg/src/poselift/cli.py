"""Command-line entry point: ``poselift <synth|train|predict|eval|export|gradcheck>``.

Configuration is resolved as built-in defaults, then the JSON file given by
``--config`` (sections ``synth``, ``train``, ``eval``, ``export``), then
``--set section.key=value`` overrides, then dedicated flags such as
``--epochs``.  The resolved configuration is logged before anything runs.
Log verbosity comes from the ``POSELIFT_LOG`` environment variable.

Exit codes: 0 success, 2 configuration error, 3 data/I-O error,
4 numerical failure (non-finite training values, failed gradient checks).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path


from . import dataio, evaluation, export, gradcheck, training
from . import geometry as geo
from .checkpoint import load_checkpoint
from .experiment import predict_dataset
from .errors import AlignmentError, ConfigError, DataError, ShapeError, TrainingError

log = logging.getLogger("poselift")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

LOG_ENV = "POSELIFT_LOG"
SECTIONS = ("synth", "train", "eval", "export")


# ---------------------------------------------------------------------------
# configuration


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _read_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {', '.join(sorted(unknown))}")
    return data


def resolve_section(args, section):
    """Merge the file section with ``--set`` overrides aimed at it."""
    merged = dict(_read_config_file(args.config).get(section, {}))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        target, dot, name = key.partition(".")
        if not dot:
            target, name = section, key
        if target not in SECTIONS:
            raise ConfigError(f"override {item!r} names unknown section {target!r}")
        if target == section:
            merged[name] = _parse_value(value)
    if getattr(args, "seed", None) is not None and section in ("synth", "train"):
        merged["seed"] = args.seed
    return merged


def _log_config(name, cfg):
    log.info("resolved %s config: %s", name, json.dumps(cfg, sort_keys=True, default=list))


def _train_config(args, base=None):
    data = base.to_dict() if base is not None else {}
    data.update(resolve_section(args, "train"))
    if args.epochs is not None:
        data["epochs"] = args.epochs
    if args.batch_size is not None:
        data["batch_size"] = args.batch_size
    if args.no_angle_loss:
        data["angle_loss_enabled"] = False
    try:
        return training.TrainConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _load_poses(path, schema_arg=None):
    """Load a pose file with an explicit schema or the one named in its header."""
    if isinstance(schema_arg, geo.SkeletonSchema):
        return dataio.load_pose_file(path, schema_arg)
    if schema_arg is None:
        try:
            with open(path, encoding="utf-8") as fh:
                schema_arg = json.loads(fh.readline()).get("schema")
        except (OSError, json.JSONDecodeError, AttributeError) as exc:
            raise DataError(f"{path}: cannot read header ({exc})") from None
        if schema_arg is None:
            raise DataError(f"{path}: header names no schema; pass --schema")
    return dataio.load_pose_file(path, dataio.load_schema(schema_arg))


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    data = resolve_section(args, "synth")
    cfg = dataio.SynthConfig.from_dict(data)
    _log_config("synth", asdict(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = dataio.synth_dataset(cfg)
    for name, ds in (("train", train), ("test", test)):
        dataio.save_pose_file(ds, out / f"{name}.jsonl")
        dataio.save_pose_file(dataio.gt3d_dataset(ds), out / f"{name}_gt3d.jsonl")
    dataio.save_schema(train.schema, out / "schema.json")
    log.info("wrote %d train and %d test poses to %s", len(train), len(test), out)
    return EXIT_OK


def cmd_train(args):
    state = None
    if args.resume:
        state, base, schema = load_checkpoint(args.resume)
        config = _train_config(args, base)
    else:
        config = _train_config(args)
        schema = None
    _log_config("train", config.to_dict())
    dataset = _load_poses(args.dataset, args.schema)
    if schema is None:
        schema = dataset.schema
    if dataset.unit != geo.NORMALIZED:
        dataset = dataio.normalize_dataset(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    state = training.train(config, dataset, schema, state=state, checkpoint_dir=out, log_path=out / "train_log.jsonl")
    log.info("finished at epoch %d, iteration %d; checkpoint %s", state.epoch, state.iteration, out / "latest.ckpt")
    return EXIT_OK


def cmd_predict(args):
    state, config, schema = load_checkpoint(args.checkpoint)
    _log_config("train (from checkpoint)", config.to_dict())
    dataset = _load_poses(args.poses, args.schema)
    if dataset.schema.digest() != schema.digest():
        raise DataError(f"pose file schema {dataset.schema.name!r} does not match checkpoint schema {schema.name!r}")
    if dataset.dims != 2:
        raise DataError("predict needs a 2D pose file")
    if dataset.unit != geo.NORMALIZED:
        dataset = dataio.normalize_dataset(dataset)
    pred = predict_dataset(state.g_params, dataset)
    pred.view_angles = dataset.view_angles
    dataio.save_pose_file(pred, args.out)
    log.info("wrote %d predicted poses to %s", len(pred), args.out)
    return EXIT_OK


def cmd_eval(args):
    cfg = {"mode": evaluation.RELATIVE, "pck_threshold": None, "label": "Ours"}
    cfg.update(resolve_section(args, "eval"))
    if args.mode is not None:
        cfg["mode"] = args.mode
    if args.pck is not None:
        cfg["pck_threshold"] = args.pck
    if cfg["mode"] not in evaluation.MODES:
        raise ConfigError(f"mode must be one of {', '.join(evaluation.MODES)}")
    _log_config("eval", cfg)
    gt = _load_poses(args.gt, args.schema)
    pred = _load_poses(args.pred, gt.schema)
    report = evaluation.evaluate(pred, gt, cfg["mode"], cfg["pck_threshold"])
    if args.out:
        report.write_jsonl(args.out)
    print(report.format_table(cfg["label"]))
    return EXIT_OK


def cmd_export(args):
    cfg = {"format": "svg", "rotate_every": None, "max_poses": None}
    cfg.update(resolve_section(args, "export"))
    for key in ("format", "rotate_every", "max_poses"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    _log_config("export", cfg)
    dataset = _load_poses(args.poses, args.schema)
    export.export(dataset, args.out, cfg["format"], cfg["rotate_every"], cfg["max_poses"])
    log.info("wrote %s export to %s", cfg["format"], args.out)
    return EXIT_OK


def cmd_gradcheck(args):
    seed = 0 if args.seed is None else args.seed
    _log_config("gradcheck", {"seed": seed, "step": gradcheck.STEP, "tolerance": gradcheck.TOLERANCE})
    results = gradcheck.run_all(seed)
    print(gradcheck.format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with synth/train/eval/export sections")
    common.add_argument("--seed", type=int, help="seed for sampling, initialization and shuffling")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override a config entry, e.g. train.learning_rate=1e-4"
    )
    common.add_argument("--schema", help="skeleton preset name or schema file (default: named in the pose file)")

    parser = argparse.ArgumentParser(prog="poselift", description="Unsupervised 2D-to-3D pose lifting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="sample synthetic train/test pose files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train generator and discriminator")
    p.add_argument("dataset", help="2D pose file")
    p.add_argument("--out", required=True, help="directory for checkpoints and the iteration log")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--no-angle-loss", action="store_true", help="drop the shoulder orientation hinge")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="lift 2D poses with a trained generator")
    p.add_argument("checkpoint")
    p.add_argument("poses", help="2D pose file")
    p.add_argument("--out", required=True, help="3D pose file to write")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="MPJPE / PCK of predictions against ground truth")
    p.add_argument("pred", help="predicted 3D pose file")
    p.add_argument("gt", help="ground-truth 3D pose file")
    p.add_argument("--mode", choices=evaluation.MODES)
    p.add_argument("--pck", type=float, metavar="THRESHOLD", help="also report PCK at this distance")
    p.add_argument("--out", help="JSONL report to write")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", parents=[common], help="write skeleton geometry (json3d, obj, svg)")
    p.add_argument("poses", help="pose file")
    p.add_argument("--format", choices=export.FORMATS)
    p.add_argument("--out", required=True)
    p.add_argument("--rotate-every", type=float, metavar="DEG", help="svg: one panel per rotation step")
    p.add_argument("--max-poses", type=int, help="svg: only draw the first poses")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradcheck", parents=[common], help="run the finite-difference gradient checks")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _setup_logging():
    level = os.environ.get(LOG_ENV, "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (TrainingError, AlignmentError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        if isinstance(exc, TrainingError) and exc.diagnostics:
            log.error("diagnostics: %s", json.dumps(exc.diagnostics, default=str))
        return EXIT_NUMERICAL
    except (DataError, ShapeError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

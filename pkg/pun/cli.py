"""
Command-line interface: `pun simulate | train | prune-init | prune-after |
eval | report`.

Every command takes `--config FILE.json` whose keys are flag destinations
(underscores); explicit flags win over the file, the file over defaults.
"""
import argparse
import json
import logging
import sys
from itertools import count, groupby
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import torch
from attrs import asdict, define, evolve, field

from . import constants, util
from .cg import DcConfig
from .container import (
    Checkpoint,
    EvalRow,
    load_dataset,
    read_eval,
    save_dataset,
    write_eval,
    write_pgm,
    write_report,
    write_summary,
    write_timing,
)
from .denoiser import DenoiserArch, init_params
from .exceptions import NonFiniteError, PunError, ValidationError
from .masks import pun_wt_schedule
from .metrics import EvalSetting, psnr, summarize
from .phantom import DatasetConfig, build_dataset, simulate_sample
from .pruning import PruneConfig, pun_at, pun_it
from .training import OptimizerConfig, TrainReport, train
from .unrolled import UnrollConfig, reconstruct

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)

Command = Callable[[argparse.Namespace], None]
T = TypeVar("T")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--unrolls", type=int, default=constants.NUM_UNROLLS)
    group.add_argument("--lam", type=float, default=constants.DC_LAMBDA)
    group.add_argument("--cg-tol", type=float, default=constants.CG_TOL)
    group.add_argument("--cg-max-iter", type=int, default=constants.CG_MAX_ITER)
    group.add_argument("--layers", type=int, default=constants.NUM_LAYERS)
    group.add_argument("--channels", type=int, default=constants.HIDDEN_CHANNELS)
    group.add_argument("--kernel-size", type=int, default=constants.KERNEL_SIZE)


def _add_optimizer_flags(parser: argparse.ArgumentParser, epochs: int) -> None:
    group = parser.add_argument_group("optimizer")
    group.add_argument("--epochs", type=int, default=epochs)
    group.add_argument("--lr", type=float, default=constants.LEARNING_RATE)
    group.add_argument("--batch-size", type=int, default=constants.BATCH_SIZE)
    group.add_argument("--seed", type=int, default=constants.BASE_SEED)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=Path, required=True, help="training dataset directory")
    parser.add_argument("--val-data", type=Path, help="validation dataset directory")
    parser.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    parser.add_argument(
        "--checkpoint-every",
        type=int,
        default=0,
        metavar="N",
        help="also write the checkpoint after every N training epochs (0: only at the end)",
    )


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of flag values")
    common.add_argument(
        "--serial", action="store_true", help="single-threaded bit-reproducible mode"
    )
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = argparse.ArgumentParser(
        prog="pun", description="Pruning unrolled MRI reconstruction networks."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {}

    sub = subparsers.add_parser("simulate", parents=[common], help="simulate a dataset")
    sub.add_argument("--out", type=Path, required=True)
    sub.add_argument("--split", choices=sorted(constants.SPLIT_SIZES))
    sub.add_argument("--num", type=int, help="number of samples (default: split size)")
    sub.add_argument("--size", type=int, default=constants.IMAGE_SIZE)
    sub.add_argument("--coils", type=int, default=constants.NUM_COILS)
    sub.add_argument("--accel", type=float, default=constants.ACCELERATION)
    sub.add_argument("--acs", type=int, default=constants.ACS_WIDTH)
    sub.add_argument("--noise-sigma", type=float, default=constants.NOISE_SIGMA)
    sub.add_argument("--seed", type=int, default=constants.BASE_SEED)
    sub.add_argument("--family", choices=("base", "shifted"), default="base")
    sub.add_argument("--workers", type=int, default=1)
    sub.set_defaults(handler=cmd_simulate)
    commands["simulate"] = sub

    sub = subparsers.add_parser("train", parents=[common], help="dense or PUN-WT training")
    _add_data_flags(sub)
    sub.add_argument("--mode", choices=("dense", "pun-wt"), default="dense")
    sub.add_argument("--sparsity", type=float, default=constants.PUN_WT_SPARSITY)
    _add_optimizer_flags(sub, constants.EPOCHS)
    _add_model_flags(sub)
    sub.set_defaults(handler=cmd_train)
    commands["train"] = sub

    sub = subparsers.add_parser("prune-init", parents=[common], help="PUN-IT")
    _add_data_flags(sub)
    sub.add_argument("--sparsity", type=float, default=constants.PUN_IT_SPARSITY)
    sub.add_argument("--temperature", type=float, default=constants.TEMPERATURE)
    sub.add_argument("--kl-weight", type=float, default=constants.KL_WEIGHT)
    sub.add_argument("--mask-epochs", type=int, default=constants.MASK_EPOCHS)
    sub.add_argument("--mask-lr", type=float, default=constants.MASK_LEARNING_RATE)
    _add_optimizer_flags(sub, constants.EPOCHS)
    sub.add_argument(
        "--train-epochs", dest="epochs", type=int, default=argparse.SUPPRESS,
        help="alias of --epochs",
    )
    _add_model_flags(sub)
    sub.set_defaults(handler=cmd_prune_init)
    commands["prune-init"] = sub

    sub = subparsers.add_parser("prune-after", parents=[common], help="PUN-AT")
    sub.add_argument("--ckpt", type=Path, required=True, help="dense checkpoint")
    _add_data_flags(sub)
    sub.add_argument("--sparsity", type=float, default=constants.PUN_AT_SPARSITY)
    sub.add_argument("--rounds", type=int, default=constants.PUN_AT_ROUNDS)
    sub.add_argument(
        "--retrain-epochs", type=int, default=constants.PUN_AT_RETRAIN_EPOCHS
    )
    sub.add_argument("--lr", type=float, help="default: the checkpoint's learning rate")
    sub.add_argument("--seed", type=int, default=constants.BASE_SEED)
    sub.set_defaults(handler=cmd_prune_after)
    commands["prune-after"] = sub

    sub = subparsers.add_parser("eval", parents=[common], help="PSNR evaluation")
    sub.add_argument("--ckpt", type=Path, help="checkpoint (not needed for zero-filled)")
    sub.add_argument("--data", type=Path, required=True, help="test dataset directory")
    sub.add_argument("--method", choices=("checkpoint", "zero-filled"), default="checkpoint")
    sub.add_argument("--label", help="method column value (default: checkpoint mode)")
    sub.add_argument("--accel", type=float, help="default: dataset acceleration")
    sub.add_argument("--noise-sigma", type=float, help="default: dataset noise level")
    sub.add_argument("--family", choices=("base", "shifted"), help="default: dataset family")
    sub.add_argument("--csv", type=Path, required=True)
    sub.add_argument("--dump-images", type=Path, help="directory for PGM reconstructions")
    sub.set_defaults(handler=cmd_eval)
    commands["eval"] = sub

    sub = subparsers.add_parser("report", parents=[common], help="summarize eval CSVs")
    sub.add_argument("--csv", type=Path, nargs="+", required=True)
    sub.add_argument("--out", type=Path, required=True)
    sub.add_argument("--plot", type=Path, help="box-plot PNG (needs the plot extra)")
    sub.set_defaults(handler=cmd_report)
    commands["report"] = sub
    return parser, commands


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    command = next((token for token in argv if token in commands), None)
    peek = argparse.ArgumentParser(add_help=False)
    peek.add_argument("--config", type=Path)
    config = peek.parse_known_args(argv)[0].config
    if command is None or config is None:
        return parser.parse_args(argv)
    try:
        values = json.loads(config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error("cannot read --config {}: {}".format(config, exc))
    if not isinstance(values, dict):
        parser.error("--config must hold a JSON object")
    values = {key.replace("-", "_"): value for key, value in values.items()}
    sub = commands[command]
    actions = sub._actions  # pylint: disable=protected-access
    known = {action.dest for action in actions} - {"help", "config"}
    unknown = sorted(set(values) - known)
    if unknown:
        parser.error("unknown --config keys for {}: {}".format(command, unknown))
    for key in ("data", "val_data", "out", "ckpt", "csv", "dump_images", "plot"):
        if isinstance(values.get(key), str):
            values[key] = Path(values[key])
        elif isinstance(values.get(key), list):
            values[key] = [Path(item) for item in values[key]]
    sub.set_defaults(**values)
    # required flags may come from the file
    for action in actions:
        if action.dest in values:
            action.required = False
    return parser.parse_args(argv)


def _arch(args: argparse.Namespace) -> DenoiserArch:
    return DenoiserArch(args.layers, args.channels, args.kernel_size)


def _unroll(args: argparse.Namespace) -> UnrollConfig:
    return UnrollConfig(args.unrolls, DcConfig(args.lam, args.cg_tol, args.cg_max_iter))


def _optimizer(args: argparse.Namespace) -> OptimizerConfig:
    return OptimizerConfig(
        learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed
    )


def _datasets(args: argparse.Namespace):
    cfg, dataset = load_dataset(args.data)
    val = load_dataset(args.val_data)[1] if args.val_data else []
    log.info("loaded %d training and %d validation samples", len(dataset), len(val))
    return cfg, dataset, val


def cmd_simulate(args: argparse.Namespace) -> None:
    base_seed = args.seed
    num = args.num
    if args.split is not None:
        base_seed += constants.SPLIT_SEED_OFFSETS[args.split]
        num = num if num is not None else constants.SPLIT_SIZES[args.split]
    if num is None:
        num = constants.SPLIT_SIZES["train"]
    cfg = DatasetConfig(
        num_samples=num,
        image_size=args.size,
        num_coils=args.coils,
        acceleration=args.accel,
        acs_width=args.acs,
        noise_sigma=args.noise_sigma,
        base_seed=base_seed,
        family=args.family,
    )
    if cfg.family != "base":
        log.warning("family %r: %s", cfg.family, constants.SHIFTED_FAMILY_NOTE)
    records = build_dataset(cfg, workers=1 if args.serial else args.workers)
    save_dataset(args.out, cfg, records)


@define
class EpochCheckpoints:
    """
    Writes `build(report)` to `out` after every `every` training epochs and,
    when training aborts on a non-finite loss, once more from the last good
    report. Partial checkpoints carry a `progress` manifest entry.
    """

    out: Path
    build: Callable[..., Checkpoint]
    every: int = field(default=0, validator=util.non_negative)
    done: int = 0

    def on_epoch_end(self, report: TrainReport) -> None:
        self.done += 1
        if self.every and self.done % self.every == 0:
            self.build(report, progress={"epochs": self.done, "state": "partial"}).save(self.out)

    def run(self, workflow: Callable[..., T], *args: Any, **kwargs: Any) -> T:
        """Call `workflow` with this writer as its `on_epoch_end` hook."""
        try:
            return workflow(*args, on_epoch_end=self.on_epoch_end, **kwargs)
        except NonFiniteError as exc:
            if isinstance(exc.last_good, TrainReport):
                progress = {"epochs": self.done, "state": "aborted"}
                self.build(exc.last_good, progress=progress).save(self.out)
                log.warning("kept the last good checkpoint (%d epochs) in %s", self.done, self.out)
            raise


def cmd_train(args: argparse.Namespace) -> None:
    cfg, dataset, val = _datasets(args)
    arch, unroll, opt = _arch(args), _unroll(args), _optimizer(args)
    init_seed = util.derive_seed(args.seed, "init")
    params = init_params(arch, init_seed)
    schedule = None
    extra: Dict[str, Any] = {}
    if args.mode == "pun-wt":
        schedule = pun_wt_schedule(opt.epochs, args.sparsity)
        extra["prune"] = {"sparsity": args.sparsity, "events": [list(e) for e in schedule]}

    def build(report: TrainReport, **progress: Any) -> Checkpoint:
        return Checkpoint.create(
            report.params,
            arch,
            unroll,
            opt,
            args.mode,
            report.mask,
            data=cfg.to_dict(),
            seeds={"init": init_seed, "shuffle": opt.seed},
            **extra,
            **progress,
        )

    writer = EpochCheckpoints(args.out, build, args.checkpoint_every)
    report = writer.run(train, dataset, params, None, unroll, opt, schedule, val)
    build(report).save(args.out)
    write_report(args.out / constants.REPORT_NAME, [report])
    write_timing(args.out, {"training": report.wall_time, "total": report.wall_time})


def cmd_prune_init(args: argparse.Namespace) -> None:
    cfg, dataset, val = _datasets(args)
    arch, unroll, opt = _arch(args), _unroll(args), _optimizer(args)
    prune_cfg = PruneConfig(
        args.sparsity, args.temperature, args.kl_weight, args.mask_epochs, args.mask_lr
    )
    init_seed = util.derive_seed(args.seed, "init")
    manifest = {
        "data": cfg.to_dict(),
        "prune": prune_cfg.to_dict(),
        "seeds": {"init": init_seed, "shuffle": opt.seed},
    }

    def build(report: TrainReport, **progress: Any) -> Checkpoint:
        return Checkpoint.create(
            report.params, arch, unroll, opt, "pun-it", report.mask, **manifest, **progress
        )

    writer = EpochCheckpoints(args.out, build, args.checkpoint_every)
    params = init_params(arch, init_seed)
    outcome = writer.run(pun_it, dataset, params, prune_cfg, unroll, opt, val)
    checkpoint = Checkpoint.create(
        outcome.params,
        arch,
        unroll,
        opt,
        "pun-it",
        outcome.mask,
        outcome.state.probabilities,
        history=[asdict(record) for record in outcome.state.history],
        **manifest,
    )
    checkpoint.save(args.out)
    write_report(args.out / constants.REPORT_NAME, outcome.reports)
    write_timing(args.out, outcome.timing)


def cmd_prune_after(args: argparse.Namespace) -> None:
    dense = Checkpoint.load(args.ckpt)
    if dense.mask is not None:
        raise ValidationError("{} is not a dense checkpoint".format(args.ckpt))
    cfg, dataset, val = _datasets(args)
    opt = evolve(dense.optimizer, seed=args.seed)
    if args.lr is not None:
        opt = evolve(opt, learning_rate=args.lr)
    manifest = {
        "data": cfg.to_dict(),
        "prune": {
            "retrain_epochs": args.retrain_epochs,
            "rounds": args.rounds,
            "sparsity": args.sparsity,
        },
        "seeds": {"dense": dense.manifest.get("seeds", {}), "shuffle": opt.seed},
    }

    def build(report: TrainReport, **progress: Any) -> Checkpoint:
        return Checkpoint.create(
            report.params, dense.arch, dense.unroll, opt, "pun-at", report.mask,
            **manifest, **progress,
        )

    writer = EpochCheckpoints(args.out, build, args.checkpoint_every)
    outcome = writer.run(
        pun_at, dataset, dense.params, args.sparsity, args.rounds, args.retrain_epochs,
        dense.unroll, opt, val,
    )
    checkpoint = Checkpoint.create(
        outcome.params, dense.arch, dense.unroll, opt, "pun-at", outcome.mask, **manifest
    )
    checkpoint.save(args.out)
    write_report(args.out / constants.REPORT_NAME, outcome.reports)
    write_timing(args.out, outcome.timing)


def cmd_eval(args: argparse.Namespace) -> None:  # pylint: disable=too-many-locals
    checkpoint = None
    if args.method == "checkpoint":
        if args.ckpt is None:
            raise ValidationError("--ckpt is required unless --method zero-filled")
        checkpoint = Checkpoint.load(args.ckpt)
    label = args.label or (checkpoint.manifest["mode"] if checkpoint else "zero-filled")

    cfg, records = load_dataset(args.data)
    eval_cfg = evolve(
        cfg,
        acceleration=cfg.acceleration if args.accel is None else args.accel,
        noise_sigma=cfg.noise_sigma if args.noise_sigma is None else args.noise_sigma,
        family=args.family or cfg.family,
    )
    if eval_cfg.family != cfg.family:
        log.warning("family %r: %s", eval_cfg.family, constants.SHIFTED_FAMILY_NOTE)
        records = build_dataset(eval_cfg)
    else:
        records = [
            simulate_sample(r.ground_truth, r.maps, eval_cfg, r.seed) for r in records
        ]
    if args.dump_images is not None:
        args.dump_images.mkdir(parents=True, exist_ok=True)

    rows: List[EvalRow] = []
    with torch.no_grad():
        for index, record in enumerate(records):
            if checkpoint is None:
                image = record.operator.adjoint(record.kspace)
            else:
                image = reconstruct(
                    record.kspace, record.operator, checkpoint.params,
                    checkpoint.mask, checkpoint.unroll,
                )
            target = record.target
            rows.append(
                EvalRow(
                    index, psnr(image, target), eval_cfg.acceleration,
                    eval_cfg.noise_sigma, eval_cfg.family, label,
                )
            )
            if args.dump_images is not None:
                peak = float(target.abs().max())
                write_pgm(args.dump_images / "{}_{:05d}.pgm".format(label, index), image, peak)
                write_pgm(args.dump_images / "reference_{:05d}.pgm".format(index), target, peak)
    write_eval(args.csv, rows)
    result = summarize(row.psnr_db for row in rows)
    log.info(
        "%s at %sx sigma=%s (%s): mean PSNR %.2f dB, median %.2f dB",
        label, eval_cfg.acceleration, eval_cfg.noise_sigma, eval_cfg.family,
        result.mean, result.median,
    )


def _setting(row: EvalRow) -> Tuple[str, float, float, str]:
    return (row.family, row.accel, row.sigma, row.method)


def cmd_report(args: argparse.Namespace) -> None:
    rows = sorted(
        (row for path in args.csv for row in read_eval(path)),
        key=lambda row: (_setting(row), row.sample_id),
    )
    results = []
    for (family, accel, sigma, method), group in groupby(rows, key=_setting):
        setting = EvalSetting(method, accel, sigma, family)
        results.append(summarize((row.psnr_db for row in group), setting))
    if not results:
        raise ValidationError("no PSNR rows in {}".format(args.csv))
    write_summary(args.out, results)
    if args.plot is not None:
        plot_results(args.plot, results)


def plot_results(path: Path, results) -> None:
    """Box plot of every PSNR distribution (matplotlib, `plot` extra)."""
    try:
        import matplotlib  # pylint: disable=import-outside-toplevel

        matplotlib.use("Agg")
        from matplotlib import pyplot  # pylint: disable=import-outside-toplevel
    except ImportError as exc:
        raise ValidationError("--plot needs matplotlib (pip install pun-mri[plot])") from exc

    labels = [
        "{}\n{}x s={} {}".format(
            r.setting.method, r.setting.acceleration, r.setting.sigma, r.setting.family
        )
        for r in results
    ]
    figure, axes = pyplot.subplots(figsize=(max(4.0, 1.2 * len(results)), 4.0))
    axes.boxplot([r.values for r in results], labels=labels)
    axes.set_ylabel("PSNR (dB)")
    axes.grid(axis="y", alpha=0.3)
    figure.tight_layout()
    figure.savefig(path, metadata={"Software": None})
    pyplot.close(figure)
    log.info("wrote %s", path)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else constants.EXIT_USAGE
    if args.verbose:
        util.set_log_level(logging.DEBUG)
    util.configure_determinism(args.serial)
    handler: Command = args.handler
    log.info("pun %s started", args.command)
    try:
        handler(args)
    except (PunError, OSError) as exc:
        log.error("pun %s failed: %s", args.command, exc)
        return constants.EXIT_FAILURE
    log.info("pun %s finished", args.command)
    return constants.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

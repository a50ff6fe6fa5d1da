"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime
failure. The environment variable LILI_SEED overrides seeds that were not
given on the command line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import codec, datagen, harness, models
from .codec import FieldSpec
from .datagen import DatasetConfig
from .errors import DataError, DecodeError, LiliError
from .nn import TrainConfig
from .oracle import RelationKind

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed_value(explicit: int | None, default: int = 0) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get("LILI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"LILI_SEED must be an integer, got {env!r}") from None
    return default


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lili", description="image-encoded logic relation lab")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a dataset file")
    g.add_argument("--relation", required=True, choices=[k.value for k in RelationKind])
    g.add_argument("--operand-digits", type=int, default=None)
    g.add_argument("--train", type=int, default=10_000)
    g.add_argument("--val", type=int, default=10_000)
    g.add_argument("--test", type=int, default=20_000)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--carry-split", action="store_true")
    g.add_argument("--out", required=True, type=Path)

    t = sub.add_parser("train", help="train a model on a dataset file")
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--model", required=True, choices=["mlp", "dcm"])
    t.add_argument("--optimizer", choices=["adam", "sgd"], default=None,
                   help="mlp default: pick adam vs sgd by validation loss")
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--loss", choices=["mse", "rss"], default=None)
    t.add_argument("--max-epochs", type=int, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--bridge-mode", choices=list(models.BRIDGE_MODES), default="binarize")
    t.add_argument("--curves", type=Path, default=None,
                   help="write loss-curve CSV(s) to this path or stem")
    t.add_argument("--out", required=True, type=Path)

    e = sub.add_parser("eval", help="evaluate a model on one dataset split")
    e.add_argument("--model", required=True, type=Path)
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.add_argument("--report", required=True, type=Path)

    pr = sub.add_parser("predict", help="predict the result image for two operands")
    pr.add_argument("--model", required=True, type=Path)
    pr.add_argument("--a", required=True, type=int)
    pr.add_argument("--b", required=True, type=int)
    pr.add_argument("--dump-pgm", type=Path, default=None)

    r = sub.add_parser("render", help="render a number to a PGM image")
    r.add_argument("--value", required=True, type=int)
    r.add_argument("--digits", required=True, type=int)
    r.add_argument("--base", required=True, type=int, choices=[2, 10])
    r.add_argument("--out", required=True, type=Path)

    d = sub.add_parser("decode", help="decode a PGM image back to a number")
    d.add_argument("--img", required=True, type=Path)
    d.add_argument("--digits", required=True, type=int)
    d.add_argument("--base", required=True, type=int, choices=[2, 10])

    c = sub.add_parser("compare", help="compare two report files")
    c.add_argument("--a", required=True, type=Path)
    c.add_argument("--b", required=True, type=Path)

    ru = sub.add_parser("run", help="run a full experiment from a JSON config")
    ru.add_argument("--config", required=True, type=Path)
    ru.add_argument("--out-dir", type=Path, default=None,
                    help="override the config's output directory")
    return p


def _cmd_gen(args) -> int:
    if args.carry_split and args.relation != RelationKind.MULTIPLICATION.value:
        print("lili gen: --carry-split requires --relation mul", file=sys.stderr)
        return EXIT_USAGE
    cfg = DatasetConfig.make(
        relation=RelationKind(args.relation),
        operand_digits=args.operand_digits,
        counts=(args.train, args.val, args.test),
        seed=_seed_value(args.seed),
        include_carry_split=args.carry_split,
    )
    ds = datagen.build_dataset(cfg)
    datagen.write_dataset(ds, args.out)
    print(f"wrote {sum(cfg.counts)} records to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = datagen.read_dataset(args.data)
    seed = _seed_value(args.seed)
    overrides = {
        k: v
        for k, v in {
            "optimizer": args.optimizer,
            "lr": args.lr,
            "batch_size": args.batch,
            "loss": args.loss,
            "max_epochs": args.max_epochs,
            "patience": args.patience,
        }.items()
        if v is not None
    }
    if args.model == "mlp":
        if args.optimizer is None:
            model, curve = models.train_baseline(dataset, None, seed=seed, overrides=overrides)
        else:
            cfg = models.default_baseline_config(seed, **overrides)
            model, curve = models.train_baseline(dataset, cfg)
        curves = {"mlp": curve}
    else:
        cfg = models.default_dcm_config(seed, **overrides)
        model, curves = models.train_dcm(dataset, cfg, bridge_mode=args.bridge_mode)
    models.save_model(args.out, model)
    if args.curves is not None:
        for name, curve in curves.items():
            path = (
                args.curves
                if len(curves) == 1
                else args.curves.with_name(f"{args.curves.stem}-{name}{args.curves.suffix}")
            )
            path.write_text(curve.to_csv(), encoding="utf-8")
    print(f"saved model to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = models.load_model(args.model)
    dataset = datagen.read_dataset(args.data)
    report = harness.evaluate(model, dataset.split(args.split), split=args.split)
    report.name = f"{args.model.name} on {args.data.name}:{args.split}"
    report.config = {
        "dataset": dataset.config.header_dict(),
        "model": "dcm" if isinstance(model, models.DcmModel) else "mlp",
        "train": None,
        "seed": None,
    }
    harness.write_report(args.report, report)
    print(
        f"exact_match={report.exact_match:.4f} "
        f"per_digit={report.per_digit_accuracy:.4f} "
        f"decode_failures={report.decode_failure_rate:.4f}"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = models.load_model(args.model)
    f = model.shape.input_field
    a_img = codec.render(args.a, f)
    b_img = codec.render(args.b, f)
    if isinstance(model, models.DcmModel):
        pred = models.dcm_predict(model, codec.normalize(a_img), codec.normalize(b_img))
    else:
        pred = models.baseline_predict(model, codec.normalize(a_img), codec.normalize(b_img))
    if args.dump_pgm is not None:
        args.dump_pgm.mkdir(parents=True, exist_ok=True)
        for tag, img in (("a", a_img), ("b", b_img), ("pred", pred)):
            (args.dump_pgm / f"{tag}.pgm").write_bytes(codec.export_pgm(img))
    try:
        decoded = codec.decode(pred, model.shape.output_field)
        flag = " (ambiguous)" if decoded.ambiguous else ""
        print(f"predicted: {decoded.value}{flag}")
    except DecodeError as err:
        print(f"predicted image is not decodable: {type(err).__name__}")
    return EXIT_OK


def _cmd_render(args) -> int:
    f = FieldSpec.for_task(args.base, args.digits)
    img = codec.render(args.value, f)
    args.out.write_bytes(codec.export_pgm(img))
    print(f"wrote {f.rows}x{f.width} image to {args.out}")
    return EXIT_OK


def _cmd_decode(args) -> int:
    f = FieldSpec.for_task(args.base, args.digits)
    img = codec.read_pgm(args.img.read_bytes())
    decoded = codec.decode(img, f)
    flag = " (ambiguous)" if decoded.ambiguous else ""
    print(f"{decoded.value}{flag} margin={decoded.min_margin}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    ra = harness.read_report(args.a)
    rb = harness.read_report(args.b)
    result = harness.compare(ra, rb)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args) -> int:
    conf = json.loads(args.config.read_text(encoding="utf-8"))
    cfg = harness.ExperimentConfig.from_json_dict(conf, out_dir=args.out_dir)
    report = harness.run_experiment(cfg)
    print(
        f"{cfg.name}: exact_match={report.exact_match:.4f} "
        f"per_digit={report.per_digit_accuracy:.4f} "
        f"(artifacts in {cfg.out_dir})"
    )
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "render": _cmd_render,
    "decode": _cmd_decode,
    "compare": _cmd_compare,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as err:
        print(f"lili: file not found: {err.filename}", file=sys.stderr)
        return EXIT_DATA
    except DataError as err:
        print(f"lili: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_DATA
    except LiliError as err:
        print(f"lili: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"lili: unexpected failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

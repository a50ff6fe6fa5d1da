"""Experiment orchestration: metric evaluation, reproducible runs with
on-disk artifacts, and report comparison.

Every run writes a JSON report, per-network curve CSVs, the model file,
the dataset file, and a few sample image quadruples for eyeballing.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codec, datagen, models
from .codec import FieldSpec
from .datagen import Dataset, DatasetConfig, TaskShape
from .errors import DataError, DecodeError, IncomparableReports
from .nn import TrainConfig
from .oracle import RelationKind

log = logging.getLogger(__name__)

EVAL_CHUNK = 512
N_SAMPLE_IMAGES = 4

# Evaluation decodes predictions with exact template matching, so reported
# accuracies carry no recognizer noise; a prediction counts as right only
# when every cell matches the ground-truth rendering.
EVAL_PROTOCOL_NOTE = (
    "exact template decoding; a sample is correct when all cells match the "
    "ground-truth rendering; ambiguous or undecodable predictions count as wrong"
)


@dataclass
class MetricsReport:
    exact_match: float
    per_digit_accuracy: float
    decode_failure_rate: float
    evaluated: int
    split: str = "test"
    subtasks: dict[str, float] | None = None
    config: dict | None = None
    curves: dict | None = None
    wall_clock_seconds: float | None = None
    name: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "metrics": {
                "exact_match": self.exact_match,
                "per_digit_accuracy": self.per_digit_accuracy,
                "decode_failure_rate": self.decode_failure_rate,
                "evaluated": self.evaluated,
                "split": self.split,
                "subtasks": self.subtasks,
            },
            "curves": self.curves,
            "notes": EVAL_PROTOCOL_NOTE,
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricsReport":
        m = d["metrics"]
        return cls(
            exact_match=m["exact_match"],
            per_digit_accuracy=m["per_digit_accuracy"],
            decode_failure_rate=m["decode_failure_rate"],
            evaluated=m["evaluated"],
            split=m.get("split", "test"),
            subtasks=m.get("subtasks"),
            config=d.get("config"),
            curves=d.get("curves"),
            wall_clock_seconds=d.get("wall_clock_seconds"),
            name=d.get("name"),
        )


@dataclass
class _Tally:
    exact: int = 0
    cell_matches: int = 0
    cells_total: int = 0
    failures: int = 0
    n: int = 0

    def grade(self, pred_img: np.ndarray, truth: int, f: FieldSpec) -> None:
        truth_cells = codec.cell_symbols(truth, f)
        failed = False
        try:
            decoded = codec.decode(pred_img, f)
            reads = decoded.cells
            failed = decoded.ambiguous
        except DecodeError as err:
            reads = err.cells or ()
            failed = True
        got = [r.symbol if not r.ambiguous else _NO_MATCH for r in reads]
        got += [_NO_MATCH] * (len(truth_cells) - len(got))
        matches = sum(1 for g, t in zip(got, truth_cells) if g == t)
        self.n += 1
        self.cells_total += len(truth_cells)
        self.cell_matches += matches
        if failed:
            self.failures += 1
        elif matches == len(truth_cells):
            self.exact += 1

    def summary(self) -> tuple[float, float, float]:
        if self.n == 0:
            return 0.0, 0.0, 0.0
        return (
            self.exact / self.n,
            self.cell_matches / self.cells_total,
            self.failures / self.n,
        )


class _NoMatch:
    __slots__ = ()

    def __eq__(self, other):
        return False

    def __hash__(self):
        return 0


_NO_MATCH = _NoMatch()


def evaluate(model, records, split: str = "test") -> MetricsReport:
    """Predict, decode, and compare every record of a split.

    A sample is an exact match when its decoded cells equal the canonical
    rendering of the true result; per-digit accuracy is the fraction of
    matching cells; ambiguous or undecodable predictions count as failures
    (and as wrong). Divide-and-conquer models additionally get per-subtask
    accuracies mirroring their carry/non-carry/synthesis decomposition.
    """
    records = list(records)
    shape: TaskShape = model.shape
    f = shape.output_field
    is_dcm = isinstance(model, models.DcmModel)
    with_aux = is_dcm and records and records[0].c is not None

    main = _Tally()
    sub = {k: _Tally() for k in ("carry", "noncarry", "synthetic_on_truth")} if with_aux else {}
    for lo in range(0, len(records), EVAL_CHUNK):
        chunk = records[lo : lo + EVAL_CHUNK]
        x, _, aux = datagen.materialize_split(chunk, shape, with_aux=with_aux)
        xf = x.astype(np.float64)
        pred = model.predict_batch(xf)
        for row, rec in zip(pred, chunk):
            main.grade(row.reshape(f.rows, f.width), rec.e, f)
        if with_aux:
            u, v = model.subtask_outputs(xf)
            u_bits = codec.binarize(u, 0.5)
            v_bits = codec.binarize(v, 0.5)
            yc, yd = aux
            synth_truth = codec.binarize(
                model.synthetic.outputs(models.synthesis_inputs(yc, yd)), 0.5
            )
            for i, rec in enumerate(chunk):
                sub["carry"].grade(u_bits[i].reshape(f.rows, f.width), rec.c, f)
                sub["noncarry"].grade(v_bits[i].reshape(f.rows, f.width), rec.d, f)
                sub["synthetic_on_truth"].grade(
                    synth_truth[i].reshape(f.rows, f.width), rec.e, f
                )

    exact, per_digit, fail = main.summary()
    subtasks = None
    if with_aux:
        subtasks = {name: tally.summary()[0] for name, tally in sub.items()}
        subtasks["synthetic_end_to_end"] = exact
    return MetricsReport(
        exact_match=exact,
        per_digit_accuracy=per_digit,
        decode_failure_rate=fail,
        evaluated=len(records),
        split=split,
        subtasks=subtasks,
    )


@dataclass
class ExperimentConfig:
    """One reproducible run: dataset, model kind, training policy, output."""

    name: str
    dataset: DatasetConfig
    model_kind: str  # "mlp" | "dcm"
    out_dir: Path
    train: TrainConfig | None = None  # None: baseline protocol default
    bridge_mode: str = "binarize"
    seed: int = 0

    def __post_init__(self):
        if self.model_kind not in ("mlp", "dcm"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.model_kind == "dcm" and not self.dataset.include_carry_split:
            raise ValueError("dcm experiments need a carry-split dataset")
        self.out_dir = Path(self.out_dir)

    @classmethod
    def from_json_dict(cls, d: dict, out_dir: Path | str | None = None) -> "ExperimentConfig":
        ds = d["dataset"]
        dataset = DatasetConfig.make(
            relation=RelationKind(ds["relation"]),
            operand_digits=ds.get("operand_digits"),
            counts=tuple(ds.get("counts", (10_000, 10_000, 20_000))),
            seed=int(ds.get("seed", d.get("seed", 0))),
            include_carry_split=bool(ds.get("include_carry_split", False)),
            result_digits=ds.get("result_digits"),
        )
        train = None
        if d.get("train") is not None:
            train = TrainConfig(**d["train"])
        return cls(
            name=d["name"],
            dataset=dataset,
            model_kind=d["model"],
            out_dir=Path(out_dir if out_dir is not None else d.get("out_dir", d["name"])),
            train=train,
            bridge_mode=d.get("bridge_mode", "binarize"),
            seed=int(d.get("seed", 0)),
        )


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Build (or load) the dataset, train, evaluate on the test split, and
    write all artifacts; partial artifacts are removed on failure."""
    t0 = time.perf_counter()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []
    try:
        dataset = _ensure_dataset(cfg, created)
        if cfg.model_kind == "mlp":
            model, curve = models.train_baseline(dataset, cfg.train, seed=cfg.seed)
            curves = {"mlp": curve}
        else:
            train_cfg = cfg.train or models.default_dcm_config(cfg.seed)
            model, curves = models.train_dcm(dataset, train_cfg, cfg.bridge_mode)

        report = evaluate(model, dataset.test, split="test")
        report.name = cfg.name
        report.config = _config_echo(cfg)
        report.curves = {
            name: {
                "best_epoch": c.best_epoch,
                "best_val_loss": c.val_loss[c.best_epoch],
                "epochs": len(c.val_loss),
            }
            for name, c in curves.items()
        }
        report.wall_clock_seconds = time.perf_counter() - t0

        model_path = cfg.out_dir / "model.lili"
        models.save_model(model_path, model)
        created.append(model_path)
        for name, c in curves.items():
            p = cfg.out_dir / (
                "curves.csv" if len(curves) == 1 else f"curves-{name}.csv"
            )
            p.write_text(c.to_csv(), encoding="utf-8")
            created.append(p)
        _write_samples(cfg.out_dir / "samples", model, dataset.test, created)
        report_path = cfg.out_dir / "report.json"
        write_report(report_path, report)
        created.append(report_path)
        return report
    except Exception:
        for p in reversed(created):
            try:
                p.unlink()
            except OSError:
                pass
        try:
            (cfg.out_dir / "samples").rmdir()
        except OSError:
            pass
        raise


def _ensure_dataset(cfg: ExperimentConfig, created: list[Path]) -> Dataset:
    path = cfg.out_dir / "dataset.txt"
    if path.exists():
        dataset = datagen.read_dataset(path)
        if dataset.config != cfg.dataset:
            raise DataError(
                f"existing dataset at {path} was generated from a different config"
            )
        return dataset
    dataset = datagen.build_dataset(cfg.dataset)
    datagen.write_dataset(dataset, path)
    created.append(path)
    return dataset


def _config_echo(cfg: ExperimentConfig) -> dict:
    return {
        "dataset": cfg.dataset.header_dict(),
        "model": cfg.model_kind,
        "train": None if cfg.train is None else vars(cfg.train).copy(),
        "bridge_mode": cfg.bridge_mode if cfg.model_kind == "dcm" else None,
        "seed": cfg.seed,
    }


def _write_samples(sample_dir: Path, model, records, created: list[Path]) -> None:
    sample_dir.mkdir(exist_ok=True)
    shape: TaskShape = model.shape
    for i, rec in enumerate(records[:N_SAMPLE_IMAGES]):
        a_img = codec.render(rec.a, shape.input_field)
        b_img = codec.render(rec.b, shape.input_field)
        e_img = codec.render(rec.e, shape.output_field)
        x = np.concatenate(
            [codec.normalize(a_img).ravel(), codec.normalize(b_img).ravel()]
        )[None, :]
        pred = model.predict_batch(x)[0].reshape(
            shape.output_field.rows, shape.output_field.width
        )
        for tag, img in (("a", a_img), ("b", b_img), ("e", e_img), ("pred", pred)):
            p = sample_dir / f"{i:03d}-{tag}.pgm"
            p.write_bytes(codec.export_pgm(img))
            created.append(p)


def write_report(path, report: MetricsReport) -> None:
    Path(path).write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_report(path) -> MetricsReport:
    return MetricsReport.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# metrics where a larger value wins; decode failures win by being smaller
_METRIC_SENSE = {
    "exact_match": 1.0,
    "per_digit_accuracy": 1.0,
    "decode_failure_rate": -1.0,
}


def compare(report_a: MetricsReport, report_b: MetricsReport) -> dict:
    """Per-metric deltas (a minus b) over the same dataset identity."""
    ida = _dataset_identity(report_a)
    idb = _dataset_identity(report_b)
    if ida is None or idb is None or ida != idb:
        raise IncomparableReports(
            f"reports cover different datasets: {ida} vs {idb}"
        )
    out = {"a": report_a.name, "b": report_b.name, "dataset": dict(ida), "deltas": {}}
    for metric, sense in _METRIC_SENSE.items():
        va = getattr(report_a, metric)
        vb = getattr(report_b, metric)
        delta = va - vb
        winner = "tie" if delta == 0 else ("a" if delta * sense > 0 else "b")
        out["deltas"][metric] = {"a": va, "b": vb, "delta": delta, "winner": winner}
    return out


def _dataset_identity(report: MetricsReport):
    if not report.config or "dataset" not in report.config:
        return None
    d = report.config["dataset"]
    keys = ("relation", "operand_digits", "result_digits", "seed", "counts")
    try:
        return tuple((k, tuple(d[k]) if isinstance(d[k], list) else d[k]) for k in keys)
    except KeyError:
        return None

"""Dataset generation, the on-disk text format, and pixel materialization.

The persisted content is the integers, not the pixels: images are derived
deterministically through the codec, so files stay tiny and diffable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codec, oracle
from .codec import FieldSpec
from .errors import (
    BadHeader,
    BadMagic,
    MalformedRecord,
    MissingCarrySplit,
    RequestExceedsPairSpace,
    SplitOverlapDetected,
)
from .oracle import Relation, RelationKind, SampleRecord

DATASET_MAGIC = "LILIDS1"
SPLIT_TAGS = {"t": "train", "v": "val", "s": "test"}
TAG_BY_SPLIT = {v: k for k, v in SPLIT_TAGS.items()}


@dataclass(frozen=True)
class TaskShape:
    """Image geometry of one task: two input images -> one output image.

    Inputs and output share one field, so the flattened input length is
    exactly twice the output length.
    """

    input_field: FieldSpec
    output_field: FieldSpec

    def __post_init__(self):
        if self.input_field.pixels != self.output_field.pixels:
            raise ValueError("input and output fields must have equal pixel counts")

    @property
    def pixels(self) -> int:
        return self.output_field.pixels

    @property
    def input_len(self) -> int:
        return 2 * self.pixels

    @property
    def output_len(self) -> int:
        return self.pixels

    def to_json_dict(self) -> dict:
        f = self.output_field
        return {
            "base": f.base,
            "n_cells": f.n_cells,
            "left_pad": f.left_pad,
            "leading_zeros": f.leading_zeros,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TaskShape":
        f = FieldSpec(
            n_cells=int(d["n_cells"]),
            base=int(d["base"]),
            left_pad=int(d["left_pad"]),
            leading_zeros=bool(d["leading_zeros"]),
        )
        return cls(f, f)


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to regenerate one dataset bit-for-bit."""

    relation: RelationKind
    operand_digits: int
    result_digits: int
    counts: tuple[int, int, int]  # train, val, test
    seed: int
    include_carry_split: bool = False

    def __post_init__(self):
        if self.include_carry_split and self.relation is not RelationKind.MULTIPLICATION:
            raise ValueError("carry split applies to multiplication only")
        if any(n < 0 for n in self.counts) or sum(self.counts) < 1:
            raise ValueError("counts must be non-negative and total >= 1")
        rel = self.to_relation()
        if rel.max_result() >= rel.base**self.result_digits:
            raise ValueError(
                f"result_digits={self.result_digits} too narrow for max result "
                f"{rel.max_result()}"
            )

    @classmethod
    def make(
        cls,
        relation: RelationKind,
        operand_digits: int | None = None,
        counts: tuple[int, int, int] = (10_000, 10_000, 20_000),
        seed: int = 0,
        include_carry_split: bool = False,
        result_digits: int | None = None,
    ) -> "DatasetConfig":
        """Config with derived widths: result_digits defaults to the exact
        width of the largest possible result for the (scaled) range."""
        base = 2 if relation in oracle.BITWISE_KINDS else 10
        if operand_digits is None:
            operand_digits = _width_of(oracle.DEFAULT_OPERAND_MAX[relation], base)
        rel = Relation.scaled(relation, operand_digits)
        if result_digits is None:
            result_digits = max(_width_of(rel.max_result(), base), operand_digits)
        return cls(
            relation=relation,
            operand_digits=operand_digits,
            result_digits=result_digits,
            counts=tuple(counts),
            seed=seed,
            include_carry_split=include_carry_split,
        )

    def to_relation(self) -> Relation:
        return Relation.scaled(self.relation, self.operand_digits)

    def task_shape(self) -> TaskShape:
        base = 2 if self.relation in oracle.BITWISE_KINDS else 10
        field = FieldSpec.for_task(base, self.result_digits)
        return TaskShape(field, field)

    def header_dict(self) -> dict:
        return {
            "relation": self.relation.value,
            "base": 2 if self.relation in oracle.BITWISE_KINDS else 10,
            "operand_digits": self.operand_digits,
            "result_digits": self.result_digits,
            "counts": list(self.counts),
            "seed": self.seed,
            "include_carry_split": self.include_carry_split,
        }


def _width_of(value: int, base: int) -> int:
    if value == 0:
        return 1
    n = 0
    while value:
        value //= base
        n += 1
    return n


@dataclass(frozen=True)
class Dataset:
    config: DatasetConfig
    train: tuple[SampleRecord, ...]
    val: tuple[SampleRecord, ...]
    test: tuple[SampleRecord, ...]

    def split(self, name: str) -> tuple[SampleRecord, ...]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def build_dataset(cfg: DatasetConfig) -> Dataset:
    """Rejection-sample unique ordered pairs and split them train/val/test."""
    rel = cfg.to_relation()
    total = sum(cfg.counts)
    space = rel.pair_space()
    if total > space:
        raise RequestExceedsPairSpace(
            f"requested {total} samples but only {space} distinct pairs exist"
        )
    rng = np.random.default_rng(cfg.seed)
    seen: set[tuple[int, int]] = set()
    records: list[SampleRecord] = []
    while len(records) < total:
        a, b = oracle.draw_operand_pair(rel, rng)
        if (a, b) in seen:
            continue
        seen.add((a, b))
        records.append(oracle.make_record(rel, a, b, cfg.include_carry_split))
    n_train, n_val, _ = cfg.counts
    return Dataset(
        config=cfg,
        train=tuple(records[:n_train]),
        val=tuple(records[n_train : n_train + n_val]),
        test=tuple(records[n_train + n_val :]),
    )


def write_dataset(ds: Dataset, sink) -> None:
    """Write the text format; `sink` is a path or a writable text file."""
    if hasattr(sink, "write"):
        _write_dataset(ds, sink)
    else:
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            _write_dataset(ds, fh)


def _write_dataset(ds: Dataset, fh) -> None:
    fh.write(DATASET_MAGIC + "\n")
    fh.write(json.dumps(ds.config.header_dict(), separators=(",", ":")) + "\n")
    for split in ("train", "val", "test"):
        tag = TAG_BY_SPLIT[split]
        for r in ds.split(split):
            if ds.config.include_carry_split:
                fh.write(f"{tag} {r.a} {r.b} {r.c} {r.d}\n")
            else:
                fh.write(f"{tag} {r.a} {r.b}\n")


def read_dataset(source) -> Dataset:
    """Read and revalidate a dataset file (results are recomputed, splits
    rechecked for overlap)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != DATASET_MAGIC:
        raise BadMagic(f"expected magic {DATASET_MAGIC!r}")
    if len(lines) < 2:
        raise BadHeader("missing header line")
    try:
        head = json.loads(lines[1])
        cfg = DatasetConfig(
            relation=RelationKind(head["relation"]),
            operand_digits=int(head["operand_digits"]),
            result_digits=int(head["result_digits"]),
            counts=tuple(int(n) for n in head["counts"]),
            seed=int(head["seed"]),
            include_carry_split=bool(head["include_carry_split"]),
        )
        if len(cfg.counts) != 3:
            raise ValueError("counts must have three entries")
        declared_base = int(head["base"])
    except (KeyError, ValueError, TypeError) as exc:
        raise BadHeader(f"bad dataset header: {exc}") from exc
    rel = cfg.to_relation()
    if declared_base != rel.base:
        raise BadHeader(f"declared base {declared_base} does not match relation")

    expected = sum(cfg.counts)
    body = lines[2:]
    if len(body) != expected:
        raise MalformedRecord(f"expected {expected} records, found {len(body)}")
    want_fields = 5 if cfg.include_carry_split else 3
    seen: set[tuple[int, int]] = set()
    splits: dict[str, list[SampleRecord]] = {"train": [], "val": [], "test": []}
    for lineno, line in enumerate(body, start=3):
        parts = line.split(" ")
        if len(parts) != want_fields or parts[0] not in SPLIT_TAGS:
            raise MalformedRecord(f"line {lineno}: malformed record {line!r}")
        try:
            nums = [int(p) for p in parts[1:]]
        except ValueError as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from exc
        a, b = nums[0], nums[1]
        if (a, b) in seen:
            raise SplitOverlapDetected(f"line {lineno}: duplicate pair ({a}, {b})")
        seen.add((a, b))
        try:
            rec = oracle.make_record(rel, a, b, cfg.include_carry_split)
        except Exception as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from exc
        if cfg.include_carry_split and (rec.c, rec.d) != (nums[2], nums[3]):
            raise MalformedRecord(
                f"line {lineno}: stored carry split ({nums[2]}, {nums[3]}) "
                f"does not match recomputed ({rec.c}, {rec.d})"
            )
        splits[SPLIT_TAGS[parts[0]]].append(rec)
    for name, n in zip(("train", "val", "test"), cfg.counts):
        if len(splits[name]) != n:
            raise MalformedRecord(
                f"split {name} has {len(splits[name])} records, header says {n}"
            )
    return Dataset(cfg, tuple(splits["train"]), tuple(splits["val"]), tuple(splits["test"]))


def materialize(
    record: SampleRecord, shape: TaskShape
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray] | None]:
    """Turn one record into (input vector, target bits, optional aux targets).

    The input is the concatenation of the two normalized operand images
    (values in {-1,+1}); targets are flattened {0,1} renderings.
    """
    a_img = codec.render(record.a, shape.input_field)
    b_img = codec.render(record.b, shape.input_field)
    x = np.concatenate([codec.normalize(a_img).ravel(), codec.normalize(b_img).ravel()])
    y = codec.render(record.e, shape.output_field).ravel()
    aux = None
    if record.c is not None and record.d is not None:
        aux = (
            codec.render(record.c, shape.output_field).ravel(),
            codec.render(record.d, shape.output_field).ravel(),
        )
    return x, y, aux


class _RenderCache:
    """Flattened render cache; operand values repeat heavily in datasets."""

    def __init__(self, field: FieldSpec):
        self.field = field
        self._bits: dict[int, np.ndarray] = {}

    def bits(self, value: int) -> np.ndarray:
        out = self._bits.get(value)
        if out is None:
            out = codec.render(value, self.field).ravel()
            self._bits[value] = out
        return out


def materialize_split(
    records, shape: TaskShape, with_aux: bool = False
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray] | None]:
    """Materialize many records into compact arrays.

    Inputs are int8 in {-1,+1}, targets uint8 in {0,1}; the training loop
    widens per batch, which keeps 60k-sample tasks in a few hundred MB.
    """
    records = list(records)
    cache = _RenderCache(shape.input_field)
    k = shape.pixels
    x = np.empty((len(records), 2 * k), dtype=np.int8)
    y = np.empty((len(records), k), dtype=np.uint8)
    yc = np.empty((len(records), k), dtype=np.uint8) if with_aux else None
    yd = np.empty((len(records), k), dtype=np.uint8) if with_aux else None
    for i, r in enumerate(records):
        x[i, :k] = cache.bits(r.a).astype(np.int8) * 2 - 1
        x[i, k:] = cache.bits(r.b).astype(np.int8) * 2 - 1
        y[i] = cache.bits(r.e)
        if with_aux:
            if r.c is None or r.d is None:
                raise MissingCarrySplit("record lacks carry split values")
            yc[i] = cache.bits(r.c)
            yd[i] = cache.bits(r.d)
    aux = (yc, yd) if with_aux else None
    return x, y, aux

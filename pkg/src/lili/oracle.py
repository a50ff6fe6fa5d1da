"""Exact integer ground truth for the six relations and the carry split.

Everything here is pure integer arithmetic: the brute-force reference the
rest of the package (rendering, training, evaluation) is tested against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NegativeResult, OperandOutOfRange, WidthOverflow


class RelationKind(enum.Enum):
    BITWISE_AND = "and"
    BITWISE_OR = "or"
    BITWISE_XOR = "xor"
    ADDITION = "add"
    SUBTRACTION = "sub"
    MULTIPLICATION = "mul"


BITWISE_KINDS = frozenset(
    {RelationKind.BITWISE_AND, RelationKind.BITWISE_OR, RelationKind.BITWISE_XOR}
)

# Default inclusive operand ranges per relation.
DEFAULT_OPERAND_MAX = {
    RelationKind.BITWISE_AND: 2**14 - 1,
    RelationKind.BITWISE_OR: 2**14 - 1,
    RelationKind.BITWISE_XOR: 2**14 - 1,
    RelationKind.ADDITION: 4_999_999,
    RelationKind.SUBTRACTION: 9_999_999,
    RelationKind.MULTIPLICATION: 3_160,
}


@dataclass(frozen=True)
class Relation:
    """A logic relation over non-negative integers with a fixed operand range."""

    kind: RelationKind
    base: int
    operand_range: tuple[int, int]  # inclusive

    def __post_init__(self):
        expected_base = 2 if self.kind in BITWISE_KINDS else 10
        if self.base != expected_base:
            raise ValueError(f"{self.kind.value} requires base {expected_base}")
        lo, hi = self.operand_range
        if not (0 <= lo <= hi):
            raise ValueError(f"invalid operand range {self.operand_range}")

    @classmethod
    def default(cls, kind: RelationKind) -> "Relation":
        base = 2 if kind in BITWISE_KINDS else 10
        return cls(kind, base, (0, DEFAULT_OPERAND_MAX[kind]))

    @classmethod
    def scaled(cls, kind: RelationKind, operand_digits: int) -> "Relation":
        """Default relation with its range truncated to operand_digits digits."""
        base = 2 if kind in BITWISE_KINDS else 10
        hi = min(DEFAULT_OPERAND_MAX[kind], base**operand_digits - 1)
        return cls(kind, base, (0, hi))

    def max_result(self) -> int:
        lo, hi = self.operand_range
        if self.kind in BITWISE_KINDS:
            # or/xor can set any bit up to the top bit of hi
            return (1 << hi.bit_length()) - 1
        if self.kind is RelationKind.ADDITION:
            return 2 * hi
        if self.kind is RelationKind.SUBTRACTION:
            return hi
        return hi * hi

    def pair_space(self) -> int:
        """Number of distinct admissible ordered pairs (a, b)."""
        n = self.operand_range[1] - self.operand_range[0] + 1
        if self.kind is RelationKind.SUBTRACTION:
            return n * (n + 1) // 2  # pairs with a >= b
        return n * n


@dataclass(frozen=True)
class SampleRecord:
    """One logic instance: operands, exact result, optional carry split."""

    a: int
    b: int
    e: int
    c: int | None = None
    d: int | None = None


@dataclass(frozen=True)
class DigitVector:
    """Positional digits, least-significant first, zero-padded to width."""

    digits: tuple[int, ...]
    width: int
    base: int = 10

    def value(self) -> int:
        return sum(d * self.base**k for k, d in enumerate(self.digits))


def apply_relation(rel: Relation, a: int, b: int) -> int:
    """Exact result of the relation; raises on range or sign violations."""
    lo, hi = rel.operand_range
    if not (lo <= a <= hi and lo <= b <= hi):
        raise OperandOutOfRange(
            f"operands ({a}, {b}) outside [{lo}, {hi}] for {rel.kind.value}"
        )
    k = rel.kind
    if k is RelationKind.BITWISE_AND:
        return a & b
    if k is RelationKind.BITWISE_OR:
        return a | b
    if k is RelationKind.BITWISE_XOR:
        return a ^ b
    if k is RelationKind.ADDITION:
        return a + b
    if k is RelationKind.SUBTRACTION:
        if a < b:
            raise NegativeResult(f"{a} - {b} would be negative")
        return a - b
    return a * b


def carry_split(a: int, b: int) -> tuple[int, int]:
    """Split a*b into (carry part, non-carry part) of long multiplication.

    Column sums v_k = sum over i+j=k of a_i*b_j; the non-carry part keeps
    each column's units digit (v_k mod 10 at position k) and the carry part
    collects the column carries shifted one position left (floor(v_k/10) at
    position k+1). The parts always sum to the exact product.
    """
    if a < 0 or b < 0:
        raise ValueError("carry_split requires non-negative operands")
    if a == 0 or b == 0:
        return 0, 0
    da = _decimal_digits(a)
    db = _decimal_digits(b)
    cols = [0] * (len(da) + len(db) - 1)
    for i, p in enumerate(da):
        if p == 0:
            continue
        for j, q in enumerate(db):
            cols[i + j] += p * q
    c = 0
    d = 0
    for k, v in enumerate(cols):
        d += (v % 10) * 10**k
        c += (v // 10) * 10 ** (k + 1)
    return c, d


def digits(value: int, base: int, width: int) -> DigitVector:
    """Positional expansion of value, least-significant first."""
    if base < 2:
        raise ValueError("base must be >= 2")
    if width < 1:
        raise ValueError("width must be >= 1")
    if value < 0 or value >= base**width:
        raise WidthOverflow(f"{value} does not fit {width} base-{base} digits")
    out = []
    v = value
    for _ in range(width):
        out.append(v % base)
        v //= base
    return DigitVector(tuple(out), width, base)


def draw_operand_pair(rel: Relation, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform operand pair; subtraction pairs are swapped so a >= b."""
    lo, hi = rel.operand_range
    a = int(rng.integers(lo, hi + 1))
    b = int(rng.integers(lo, hi + 1))
    if rel.kind is RelationKind.SUBTRACTION and a < b:
        a, b = b, a
    return a, b


def make_record(rel: Relation, a: int, b: int, include_carry_split: bool = False) -> SampleRecord:
    e = apply_relation(rel, a, b)
    if include_carry_split:
        if rel.kind is not RelationKind.MULTIPLICATION:
            raise ValueError("carry split is defined for multiplication only")
        c, d = carry_split(a, b)
        return SampleRecord(a, b, e, c, d)
    return SampleRecord(a, b, e)


def _decimal_digits(value: int) -> list[int]:
    out = []
    v = value
    while v:
        out.append(v % 10)
        v //= 10
    return out

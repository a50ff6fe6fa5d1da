"""Bit-exact digit-image rendering and exact template-matching decoding.

Images are plain numpy arrays: a pixel grid is uint8 with values in {0, 1}
(1 = ink), a real grid is float64 with values in [-1, 1]. A field is the
fixed geometry a number is rendered into: 15 rows, 8-pixel-wide cells, one
cell per digit, plus a left pad.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BlankAfterDigit, EmptyField, ShapeMismatch, WidthOverflow

ROWS = 15
CELL_WIDTH = 8

# 3x5 digit font, rows top to bottom, 1 = ink. Upscaled 2x at render time.
_FONT_3X5 = {
    0: ("111", "101", "101", "101", "111"),
    1: ("010", "110", "010", "010", "111"),
    2: ("111", "001", "111", "100", "111"),
    3: ("111", "001", "111", "001", "111"),
    4: ("101", "101", "111", "001", "001"),
    5: ("111", "100", "111", "001", "111"),
    6: ("111", "100", "111", "101", "111"),
    7: ("111", "001", "001", "001", "001"),
    8: ("111", "101", "111", "101", "111"),
    9: ("111", "101", "111", "001", "111"),
}

# Glyph placement inside the 8x15 cell: 2x upscale -> 6x10, at col 1, row 2.
_GLYPH_COL = 1
_GLYPH_ROW = 2


def _build_templates() -> np.ndarray:
    """Full-cell templates, index 0 = blank, 1 + d = digit d."""
    cells = np.zeros((11, ROWS, CELL_WIDTH), dtype=np.uint8)
    for d, rows in _FONT_3X5.items():
        glyph = np.array([[int(ch) for ch in row] for row in rows], dtype=np.uint8)
        up = np.kron(glyph, np.ones((2, 2), dtype=np.uint8))
        cells[1 + d, _GLYPH_ROW : _GLYPH_ROW + 10, _GLYPH_COL : _GLYPH_COL + 6] = up
    return cells


CELL_TEMPLATES = _build_templates()
GLYPHS = {d: CELL_TEMPLATES[1 + d] for d in range(10)}
BLANK_CELL = CELL_TEMPLATES[0]

# Flattened templates and per-template ink counts, used by cell scoring.
_TEMPLATES_FLAT = CELL_TEMPLATES.reshape(11, -1).astype(np.int64)
_TEMPLATE_INK = _TEMPLATES_FLAT.sum(axis=1)
_CELL_PIXELS = ROWS * CELL_WIDTH


@dataclass(frozen=True)
class FieldSpec:
    """Geometry of one rendered number: cells, base, and padding."""

    n_cells: int
    base: int
    left_pad: int
    leading_zeros: bool
    rows: int = ROWS
    cell_width: int = CELL_WIDTH

    def __post_init__(self):
        if self.base not in (2, 10):
            raise ValueError("base must be 2 or 10")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        if self.rows != ROWS or self.cell_width != CELL_WIDTH:
            raise ValueError("only 15-row, 8-wide cells are supported")

    @classmethod
    def for_task(cls, base: int, n_cells: int) -> "FieldSpec":
        # 14-digit binary fields reproduce the 15x120 geometry; 7-digit
        # decimal fields the 15x60 one; anything else pads by 4.
        left_pad = 8 if (base == 2 and n_cells == 14) else 4
        return cls(n_cells=n_cells, base=base, left_pad=left_pad, leading_zeros=base == 2)

    @property
    def width(self) -> int:
        return self.left_pad + self.cell_width * self.n_cells

    @property
    def pixels(self) -> int:
        return self.rows * self.width

    def capacity(self) -> int:
        return self.base**self.n_cells


class CellRead(NamedTuple):
    """Classification of one cell: symbol None means blank."""

    symbol: int | None
    margin: int
    ambiguous: bool


@dataclass(frozen=True)
class DecodedNumber:
    value: int
    cells: tuple[CellRead, ...]
    min_margin: int

    @property
    def ambiguous(self) -> bool:
        return any(c.ambiguous for c in self.cells)


def cell_symbols(value: int, field: FieldSpec) -> list[int | None]:
    """Per-cell content for the canonical rendering, left to right."""
    if value < 0 or value >= field.capacity():
        raise WidthOverflow(
            f"{value} does not fit {field.n_cells} base-{field.base} cells"
        )
    digs = []
    v = value
    while v:
        digs.append(v % field.base)
        v //= field.base
    if not digs:
        digs = [0]
    if field.leading_zeros:
        digs += [0] * (field.n_cells - len(digs))
    out: list[int | None] = [None] * (field.n_cells - len(digs))
    out += [int(d) for d in reversed(digs)]
    return out


def render(value: int, field: FieldSpec) -> np.ndarray:
    """Render value into a fresh {0,1} image of the field's geometry.

    Digits go most-significant leftmost; binary fields render full width
    with leading zeros, decimal fields leave unused leading cells blank;
    0 renders as a single '0' in the rightmost cell.
    """
    img = np.zeros((field.rows, field.width), dtype=np.uint8)
    for i, sym in enumerate(cell_symbols(value, field)):
        if sym is None:
            continue
        col = field.left_pad + i * field.cell_width
        img[:, col : col + field.cell_width] = CELL_TEMPLATES[1 + sym]
    return img


def normalize(img: np.ndarray) -> np.ndarray:
    """Map {0,1} pixels to {-1,+1} reals (fixed affine map 2p - 1)."""
    return img.astype(np.float64) * 2.0 - 1.0


def binarize(values: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold any real grid to {0,1}; the comparison is inclusive (>=).

    Use the default 0.5 for unit-interval inputs and 0.0 for [-1,1] inputs.
    """
    return (np.asarray(values) >= threshold).astype(np.uint8)


def classify_cells(img: np.ndarray, field: FieldSpec) -> list[CellRead]:
    """Score every cell against the 11 templates by pixel agreement.

    Ties are broken blank-first then ascending digit, and flagged ambiguous.
    """
    if img.shape != (field.rows, field.width):
        raise ShapeMismatch(
            f"image shape {img.shape} does not match field {field.rows}x{field.width}"
        )
    body = img[:, field.left_pad :]
    cells = (
        body.reshape(field.rows, field.n_cells, field.cell_width)
        .transpose(1, 0, 2)
        .reshape(field.n_cells, _CELL_PIXELS)
        .astype(np.int64)
    )
    # agreement = pixels equal = P - sum(c) - sum(t) + 2*c.t
    scores = (
        _CELL_PIXELS
        - cells.sum(axis=1, keepdims=True)
        - _TEMPLATE_INK[None, :]
        + 2 * (cells @ _TEMPLATES_FLAT.T)
    )
    reads = []
    for row in scores:
        best = int(np.argmax(row))  # first max: blank, then digits ascending
        order = np.sort(row)[::-1]
        margin = int(order[0] - order[1])
        sym = None if best == 0 else best - 1
        reads.append(CellRead(sym, margin, margin == 0))
    return reads


def decode(img: np.ndarray, field: FieldSpec) -> DecodedNumber:
    """Recognize the number in a binary image of this field's geometry.

    Blank cells are legal only as a prefix; an interior blank raises
    BlankAfterDigit and an all-blank image raises EmptyField (both carry
    the per-cell reads). Total on arbitrary {0,1} images otherwise.
    """
    reads = classify_cells(img, field)
    symbols = [r.symbol for r in reads]
    first_digit = next((i for i, s in enumerate(symbols) if s is not None), None)
    if first_digit is None:
        raise EmptyField("all cells blank", cells=tuple(reads))
    if any(s is None for s in symbols[first_digit:]):
        raise BlankAfterDigit("blank cell after a digit", cells=tuple(reads))
    value = 0
    for s in symbols[first_digit:]:
        value = value * field.base + s
    return DecodedNumber(value, tuple(reads), min(r.margin for r in reads))


def export_pgm(img: np.ndarray) -> bytes:
    """Binary PGM (P5, maxval 255).

    {0,1} pixel grids map ink to 255 and background to 0; real grids map
    [-1,1] linearly to [0,255] with round-half-up (0.0 -> 128).
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D image")
    if arr.dtype.kind in "ui" or arr.dtype == np.bool_:
        payload = (arr.astype(np.uint8) * 255).tobytes()
    else:
        scaled = np.floor((arr + 1.0) * 127.5 + 0.5)
        payload = np.clip(scaled, 0, 255).astype(np.uint8).tobytes()
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    return header + payload


def read_pgm(data: bytes) -> np.ndarray:
    """Parse a binary PGM back into a {0,1} pixel grid (threshold 128)."""
    from .errors import BadHeader, BadMagic

    if not data.startswith(b"P5"):
        raise BadMagic("not a binary PGM (P5) file")
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise BadHeader("malformed PGM header") from None
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    if maxval <= 0 or maxval > 255:
        raise BadHeader(f"unsupported maxval {maxval}")
    raw = data[pos : pos + w * h]
    if len(raw) != w * h:
        raise BadHeader("truncated PGM payload")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
    return (arr >= 128).astype(np.uint8)

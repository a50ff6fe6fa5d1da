import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lili import codec
from lili.codec import FieldSpec
from lili.errors import (
    BadHeader,
    BadMagic,
    BlankAfterDigit,
    EmptyField,
    ShapeMismatch,
    WidthOverflow,
)

DEC7 = FieldSpec.for_task(10, 7)
BIN14 = FieldSpec.for_task(2, 14)


class TestFieldSpec:
    def test_reference_geometries(self):
        assert (BIN14.rows, BIN14.width) == (15, 120)
        assert BIN14.pixels == 1800
        assert (DEC7.rows, DEC7.width) == (15, 60)
        assert DEC7.pixels == 900

    def test_other_fields_pad_by_four(self):
        f = FieldSpec.for_task(2, 8)
        assert f.left_pad == 4 and f.width == 68
        f = FieldSpec.for_task(10, 4)
        assert f.left_pad == 4 and f.width == 36

    def test_leading_zero_policy(self):
        assert BIN14.leading_zeros and not DEC7.leading_zeros


class TestGlyphs:
    def test_pairwise_hamming_distance(self):
        templates = codec.CELL_TEMPLATES
        for i in range(11):
            for j in range(i + 1, 11):
                dist = int(np.sum(templates[i] != templates[j]))
                assert dist >= 4, f"templates {i} and {j} too close ({dist})"

    def test_glyph_placement(self):
        cell = codec.GLYPHS[8]
        assert cell.shape == (15, 8)
        ys, xs = np.nonzero(cell)
        assert ys.min() == 2 and ys.max() == 11
        assert xs.min() == 1 and xs.max() == 6


class TestRender:
    def test_zero_decimal(self):
        img = codec.render(0, DEC7)
        syms = codec.cell_symbols(0, DEC7)
        assert syms == [None] * 6 + [0]
        # six leading cells blank, glyph '0' in the last cell
        body = img[:, DEC7.left_pad :]
        cells = body.reshape(15, 7, 8).transpose(1, 0, 2)
        assert not cells[:6].any()
        assert (cells[6] == codec.GLYPHS[0]).all()

    def test_binary_renders_all_cells(self):
        img = codec.render(0b00010101110000, BIN14)
        cells = img[:, BIN14.left_pad :].reshape(15, 14, 8).transpose(1, 0, 2)
        for cell in cells:
            assert cell.any()  # '0' and '1' glyphs both have ink

    def test_values_and_size(self):
        img = codec.render(1234567, DEC7)
        assert img.shape == (15, 60)
        assert set(np.unique(img)) <= {0, 1}

    def test_width_overflow(self):
        with pytest.raises(WidthOverflow):
            codec.render(10**7, DEC7)
        with pytest.raises(WidthOverflow):
            codec.render(2**14, BIN14)


class TestNormalizeBinarize:
    def test_constant_grids(self):
        g = np.zeros((3, 4), dtype=np.uint8)
        assert (codec.normalize(g) == -1.0).all()
        assert (codec.normalize(g + 1) == 1.0).all()

    def test_normalize_inverse(self):
        img = codec.render(42, DEC7)
        n = codec.normalize(img)
        assert ((n + 1) / 2 == img).all()

    @given(st.integers(min_value=0, max_value=10**7 - 1))
    def test_normalize_bijection_roundtrip(self, v):
        img = codec.render(v, DEC7)
        n = codec.normalize(img)
        assert set(np.unique(n)) <= {-1.0, 1.0}
        assert (codec.binarize(n, 0.0) == img).all()

    def test_threshold_is_inclusive(self):
        assert codec.binarize(np.array([[0.51, 0.49]]), 0.5).tolist() == [[1, 0]]
        assert (codec.binarize(np.full((2, 2), 0.5), 0.5) == 1).all()


class TestDecode:
    def test_worked_multiplication_roundtrip(self):
        d = codec.decode(codec.render(1730889, DEC7), DEC7)
        assert d.value == 1730889
        assert d.min_margin > 0 and not d.ambiguous

    @given(st.integers(min_value=0, max_value=10**7 - 1))
    def test_decimal_roundtrip(self, v):
        d = codec.decode(codec.render(v, DEC7), DEC7)
        assert d.value == v and not d.ambiguous

    @given(st.integers(min_value=0, max_value=2**14 - 1))
    def test_binary_roundtrip(self, v):
        d = codec.decode(codec.render(v, BIN14), BIN14)
        assert d.value == v and not d.ambiguous

    def test_empty_field(self):
        with pytest.raises(EmptyField) as exc:
            codec.decode(np.zeros((15, 60), dtype=np.uint8), DEC7)
        assert len(exc.value.cells) == 7

    def test_blank_after_digit(self):
        img = np.zeros((15, 60), dtype=np.uint8)
        # digit in the first cell, rest blank
        img[:, 4:12] = codec.GLYPHS[5]
        with pytest.raises(BlankAfterDigit):
            codec.decode(img, DEC7)

    def test_leading_zero_digits_still_decode(self):
        img = np.zeros((15, 36), dtype=np.uint8)
        f = FieldSpec.for_task(10, 4)
        for i, d in enumerate((0, 1, 2, 3)):
            img[:, 4 + 8 * i : 12 + 8 * i] = codec.GLYPHS[d]
        assert codec.decode(img, f).value == 123

    def test_tie_is_flagged_ambiguous(self):
        # glyphs 3 and 9 differ in 4 pixels; flipping two of them ties
        img = np.zeros((15, 36), dtype=np.uint8)
        f = FieldSpec.for_task(10, 4)
        cell = codec.GLYPHS[3].copy()
        diff = np.argwhere(codec.GLYPHS[3] != codec.GLYPHS[9])
        for y, x in diff[:2]:
            cell[y, x] = 1 - cell[y, x]
        img[:, 4 + 8 * 3 : 12 + 8 * 3] = cell
        d = codec.decode(img, f)
        assert d.ambiguous and d.min_margin == 0
        assert d.cells[3].symbol == 3  # tie broken toward the lower digit

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            codec.decode(np.zeros((15, 60), dtype=np.uint8), BIN14)

    @given(st.binary(min_size=900, max_size=900))
    def test_total_on_arbitrary_images(self, blob):
        img = (np.frombuffer(blob, dtype=np.uint8).reshape(15, 60) & 1).astype(np.uint8)
        try:
            d = codec.decode(img, DEC7)
            assert 0 <= d.value < 10**7
        except (EmptyField, BlankAfterDigit):
            pass


class TestPgm:
    def test_single_pixel_values(self):
        one = codec.export_pgm(np.array([[1]], dtype=np.uint8))
        assert one == b"P5\n1 1\n255\n\xff"
        zero = codec.export_pgm(np.array([[0]], dtype=np.uint8))
        assert zero.endswith(b"\x00")

    def test_realgrid_rounding(self):
        # fixed rule: v -> floor((v+1)*127.5 + 0.5), so 0.0 -> 128
        data = codec.export_pgm(np.array([[-1.0, -0.5, 0.0, 0.5, 1.0]]))
        assert data.split(b"\n", 3)[3] == bytes([0, 64, 128, 191, 255])

    def test_roundtrip_through_reader(self):
        img = codec.render(90817, DEC7)
        back = codec.read_pgm(codec.export_pgm(img))
        assert (back == img).all()

    def test_reader_rejects_garbage(self):
        with pytest.raises(BadMagic):
            codec.read_pgm(b"JUNK")
        with pytest.raises(BadHeader):
            codec.read_pgm(b"P5\n2 2\n255\n\x00")  # truncated payload

"""Wire-format round-trip and corruption handling."""

import math
import struct

import pytest

from otvm.dataio import DataError, MAGIC, RawDataset, decode, encode

from checks import NA_DOUBLE


def header(name: bytes, rows: int, cols: int) -> bytes:
    return MAGIC + bytes([1, 0]) + struct.pack("<H", len(name)) + name \
        + struct.pack("<QQ", rows, cols)


class TestRoundTrip:
    def test_simple(self):
        cells = [0.0, 1.0, 2.0, -3.5, 1e300, -0.0]
        blob = encode("geno", 2, 3, cells)
        got = decode(blob)
        assert got == RawDataset("geno", 2, 3, tuple(cells))

    def test_layout_is_exact(self):
        blob = encode("d", 1, 2, [1.5, -2.0])
        assert blob == header(b"d", 1, 2) + struct.pack("<dd", 1.5, -2.0)

    def test_na_payload_survives(self):
        # NA is a NaN with low word 1954; pack/unpack must not launder it.
        blob = encode("x", 1, 1, [NA_DOUBLE])
        got = decode(blob)
        bits = struct.unpack("<Q", struct.pack("<d", got.cells[0]))[0]
        assert bits == 0x7FF00000000007A2

    def test_nan_and_inf_cells(self):
        blob = encode("x", 1, 3, [math.nan, math.inf, -math.inf])
        got = decode(blob)
        assert math.isnan(got.cells[0])
        assert got.cells[1] == math.inf
        assert got.cells[2] == -math.inf

    def test_utf8_name(self):
        blob = encode("données", 1, 1, [0.0])
        assert decode(blob).name == "données"

    def test_random_round_trips(self):
        import random
        rng = random.Random(20260819)
        for _ in range(50):
            rows = rng.randint(1, 8)
            cols = rng.randint(1, 8)
            cells = [rng.uniform(-1e6, 1e6) for _ in range(rows * cols)]
            name = "d%d" % rng.randint(0, 999)
            assert decode(encode(name, rows, cols, cells)) == \
                RawDataset(name, rows, cols, tuple(cells))


class TestEncodeChecks:
    def test_cell_count_must_match(self):
        with pytest.raises(ValueError):
            encode("x", 2, 2, [1.0, 2.0, 3.0])

    def test_dims_positive(self):
        with pytest.raises(ValueError):
            encode("x", 0, 1, [])


class TestDecodeErrors:
    def err(self, blob: bytes) -> DataError:
        with pytest.raises(DataError) as ei:
            decode(blob)
        return ei.value

    def test_truncated_payload(self):
        # Header promises 2x2 but only 3 doubles follow.
        blob = header(b"x", 2, 2) + struct.pack("<3d", 1.0, 2.0, 3.0)
        assert self.err(blob).kind == "TruncatedPayload"

    def test_bad_magic(self):
        blob = b"EVOD" + encode("x", 1, 1, [0.0])[4:]
        assert self.err(blob).kind == "MalformedHeader"

    def test_bad_version(self):
        good = encode("x", 1, 1, [0.0])
        blob = good[:4] + bytes([2]) + good[5:]
        assert self.err(blob).kind == "MalformedHeader"

    def test_reserved_nonzero(self):
        good = encode("x", 1, 1, [0.0])
        blob = good[:5] + bytes([9]) + good[6:]
        assert self.err(blob).kind == "MalformedHeader"

    def test_short_header(self):
        assert self.err(MAGIC + bytes([1, 0])).kind == "MalformedHeader"

    def test_truncated_name(self):
        blob = MAGIC + bytes([1, 0]) + struct.pack("<H", 10) + b"abc"
        assert self.err(blob).kind == "MalformedHeader"

    def test_zero_dims(self):
        blob = header(b"x", 0, 3)
        assert self.err(blob).kind == "MalformedHeader"

    def test_trailing_garbage(self):
        blob = encode("x", 1, 1, [0.0]) + b"\x00"
        assert self.err(blob).kind == "MalformedHeader"

    def test_non_utf8_name(self):
        blob = MAGIC + bytes([1, 0]) + struct.pack("<H", 2) + b"\xff\xfe" \
            + struct.pack("<QQ", 1, 1) + struct.pack("<d", 0.0)
        assert self.err(blob).kind == "MalformedHeader"

    def test_empty_blob(self):
        assert self.err(b"").kind == "MalformedHeader"

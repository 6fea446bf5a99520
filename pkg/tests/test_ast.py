"""Structural behavior of the transcript AST types."""

import dataclasses
import math

import pytest

from otvm.ast import (
    Cell,
    DatasetSrc,
    DefMatrix,
    ForLoop,
    Literal,
    LoopIndex,
    Matrix,
    Ordered,
    Register,
    ScalarInstr,
    Taint,
    Unordered,
    taint_join,
)


class TestTaint:
    def test_join_lattice(self):
        C, P = Taint.CONCRETE, Taint.PSEUDONYM
        assert taint_join(C, C) is C
        assert taint_join(C, P) is P
        assert taint_join(P, C) is P
        assert taint_join(P, P) is P


class TestLiteral:
    def test_value_equality(self):
        assert Literal(2.5) == Literal(2.5)
        assert Literal(2.5) != Literal(2.0)

    def test_negative_zero_normalized(self):
        assert Literal(-0.0) == Literal(0.0)
        assert hash(Literal(-0.0)) == hash(Literal(0.0))

    def test_nan_equals_itself(self):
        # round-trip equality needs NaN literals to compare equal
        assert Literal(math.nan) == Literal(math.nan)
        assert hash(Literal(math.nan)) == hash(Literal(math.nan))

    def test_immutable(self):
        lit = Literal(1.0)
        with pytest.raises(AttributeError):
            lit.value = 2.0


class TestSeqs:
    def test_ordered_default_step(self):
        assert Ordered(1, 5).step == 1

    def test_unordered_needs_one_item(self):
        with pytest.raises(ValueError):
            Unordered(())
        assert Unordered((3,)).items == (3,)
        assert Unordered((3, 1)).items == (3, 1)


class TestInstrs:
    def test_operands_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            Matrix(1).id = 2
        with pytest.raises(dataclasses.FrozenInstanceError):
            Register(1).id = 2

    def test_def_matrix_shape(self):
        d = DefMatrix(1, 10, 7, False, DatasetSrc("geno"))
        assert (d.rows, d.cols) == (10, 7)
        assert d.source.name == "geno"

    def test_cell_with_loop_index(self):
        c = Cell(1, LoopIndex(1), 1)
        assert c.matrix_id == 1
        assert isinstance(c.row, LoopIndex)

    def test_loop_body_is_tuple(self):
        inner = ScalarInstr("set", Register(1), (Literal(0.0),))
        loop = ForLoop(1, 1, 10, 1, (inner,))
        assert loop.body == (inner,)

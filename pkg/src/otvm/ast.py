"""Abstract syntax for oblivious transcripts.

A transcript is a straight-line program over matrices and scalar registers.
The only control structure is a counted loop with concrete bounds, so the
dynamic instruction sequence of a valid transcript is a function of the
program text and declared shapes alone — never of the data it will later
be replayed on.

Node kinds:

    Operand   — a reference in transcript syntax: matrix ``$n``, register
                ``%n``, cell ``$n@(i,j)``, loop index ``\\n``, literal ``#v``.
    Instr     — DefMatrix / ScalarInstr / EditInstr / SelectInstr / ForLoop.
    Seq       — an index sequence: Ordered ``[a:b:c]`` or Unordered ``[a,b,c]``.
    Taint     — the two-point lattice Concrete < Pseudonym.
    Program   — ordered instructions plus the dataset declaration map.

Invariants:
    - All ids (matrix, register, loop depth) are positive integers.
    - Cell and seq indices are 1-based.
    - Literal payloads are finite decimals or the NaN token; -0.0 is
      normalized to 0.0 and NaN literals compare equal so structural
      equality survives a print/parse round trip.
    - Nested loops are named by depth: the loop at nesting depth k binds
      ``\\k``.

These are pure value types: no interior mutation after construction, safe
to share between threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union


class Taint(enum.Enum):
    """Two-point classification lattice: Concrete below Pseudonym."""

    CONCRETE = "concrete"
    PSEUDONYM = "pseudonym"


def taint_join(a: Taint, b: Taint) -> Taint:
    """Least upper bound: Pseudonym iff either input is Pseudonym."""
    if a is Taint.PSEUDONYM or b is Taint.PSEUDONYM:
        return Taint.PSEUDONYM
    return Taint.CONCRETE


# ---------------------------------------------------------------------------
# Operands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Matrix:
    """Matrix reference ``$id``."""

    id: int


@dataclass(frozen=True)
class Register:
    """Scalar register reference ``%id``."""

    id: int


@dataclass(frozen=True)
class LoopIndex:
    """Loop-index reference ``\\depth``; concrete by construction."""

    depth: int


# A cell index expression: a 1-based integer or an enclosing loop index.
IndexExpr = Union[int, LoopIndex]


@dataclass(frozen=True)
class Cell:
    """Single-cell reference ``$matrix_id@(row,col)``; 1-based indices."""

    matrix_id: int
    row: IndexExpr
    col: IndexExpr


class Literal:
    """Literal scalar ``#value``: a finite decimal or the NaN token.

    NaN literals are equal to each other and -0.0 is normalized, so AST
    equality is structural.
    """

    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if value == 0.0:
            value = 0.0  # normalize -0.0
        object.__setattr__(self, "value", value)

    def __setattr__(self, name, val):  # pragma: no cover - guard
        raise AttributeError("Literal is immutable")

    def __eq__(self, other):
        if not isinstance(other, Literal):
            return NotImplemented
        if math.isnan(self.value) and math.isnan(other.value):
            return True
        return self.value == other.value

    def __hash__(self):
        return hash("nan") if math.isnan(self.value) else hash(self.value)

    def __repr__(self):
        return f"Literal({self.value!r})"


Operand = Union[Matrix, Register, Cell, LoopIndex, Literal]

# Loop bounds in valid programs are integers or enclosing loop indices.
# The wider Operand forms are representable so validation (not parsing)
# can reject a tainted or non-static bound with the right error kind.
Bound = Union[int, LoopIndex, Register, Cell, Matrix, Literal]


# ---------------------------------------------------------------------------
# Index sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ordered:
    """Arithmetic index sequence ``[from:to:step]`` (``[a]``, ``[a:b]`` forms).

    Bounds are 1-based integers or loop indices; step is a nonzero integer
    literal in valid programs (validation enforces).
    """

    start: IndexExpr
    stop: IndexExpr
    step: int = 1


@dataclass(frozen=True)
class Unordered:
    """Explicit index list ``[a]`` or ``[a,b,c]``; at least one element.

    A singleton ``[a]`` is Unordered; the colon forms are Ordered. That
    keeps one canonical printed form per sequence value.
    """

    items: tuple[IndexExpr, ...]

    def __post_init__(self):
        if len(self.items) < 1:
            raise ValueError("Unordered seq needs >= 1 item")


Seq = Union[Ordered, Unordered]


# ---------------------------------------------------------------------------
# Matrix definition sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RowsSrc:
    """Inline contents, one tuple per row.

    Row entries are scalar operands (literals, registers, cells, loop
    indices), printed as ``row <n> <entry> ...`` with a 1-based row
    number. The row number is positional, so it is not stored here.
    """

    rows: tuple[tuple[Operand, ...], ...]


@dataclass(frozen=True)
class DatasetSrc:
    """Cells come from the named client dataset; the pseudonym root."""

    name: str


@dataclass(frozen=True)
class EmptySrc:
    """All zeros."""


@dataclass(frozen=True)
class RandSrc:
    """Seeded uniform [0,1) cells; public backend randomness."""


@dataclass(frozen=True)
class OpSrc:
    """Elementwise / matmul result: ``opcode`` applied to operands."""

    opcode: str
    args: tuple[Operand, ...]


@dataclass(frozen=True)
class BindSrc:
    """Column or row concatenation of two matrices."""

    kind: str  # "cbind" | "rbind"
    args: tuple[Operand, ...]


DefSource = Union[RowsSrc, DatasetSrc, EmptySrc, RandSrc, OpSrc, BindSrc]


# ---------------------------------------------------------------------------
# Instructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DefMatrix:
    """``def [const] $id [1:rows] [1:cols] ... end id``.

    The end marker must echo the matrix id (framing check, done by the
    parser). ``is_const`` asserts the contents are Concrete; validation
    rejects a const definition whose computed taint is Pseudonym.
    """

    id: int
    rows: int
    cols: int
    is_const: bool
    source: DefSource


@dataclass(frozen=True)
class ScalarInstr:
    """Register-producing instruction: arithmetic, compare, logic,
    class tests, summaries, ``set``, ``indexvar``.

    ``range`` carries its second destination in ``dest2`` (min in ``dest``,
    max in ``dest2``); every other opcode leaves ``dest2`` None.
    """

    opcode: str
    dest: Register
    args: tuple[Operand, ...]
    dest2: Register | None = None


@dataclass(frozen=True)
class EditInstr:
    """``update | slice | slice_const | dim`` with two index seqs.

    update: writes src into dest at rseq x cseq (scalar src broadcasts).
    slice: defines dest as the rseq x cseq submatrix of src.
    slice_const: slice that also requires src Concrete; result is Concrete.
    dim: defines dest as src reshaped to |rseq| x |cseq| in row-major order.
    """

    opcode: str
    dest: Matrix
    rseq: Seq
    cseq: Seq
    src: Operand


@dataclass(frozen=True)
class SelectInstr:
    """Two-way data-oblivious choice; the only secret-conditioned construct.

    dest is a register or cell (scalar select) or a matrix id
    (elementwise select that defines the matrix).
    """

    dest: Union[Register, Cell, Matrix]
    cond: Operand
    on_true: Operand
    on_false: Operand


@dataclass(frozen=True)
class ForLoop:
    """Counted loop; executes floor((to-from)/step)+1 iterations.

    ``index_id`` names the binding ``\\index_id`` and must equal the
    nesting depth. Bounds must be concrete and static in valid programs;
    the wider Bound forms exist so validation can reject them precisely.
    """

    index_id: int
    start: Bound
    stop: Bound
    step: Bound
    body: tuple["Instr", ...]


Instr = Union[DefMatrix, ScalarInstr, EditInstr, SelectInstr, ForLoop]


@dataclass(frozen=True)
class Program:
    """An ordered transcript. Ids are defined before use in straight-line
    order (validation enforces)."""

    instrs: tuple[Instr, ...]

    @property
    def declared_datasets(self) -> dict[str, tuple[int, int]]:
        """Dataset name -> (rows, cols) from the dataset definitions.

        Derived on demand so it can never disagree with the instruction
        list. First definition wins on a repeated name; validation
        rejects inconsistent repeats.
        """
        out: dict[str, tuple[int, int]] = {}

        def walk(instrs):
            for ins in instrs:
                if isinstance(ins, DefMatrix) and isinstance(ins.source, DatasetSrc):
                    out.setdefault(ins.source.name, (ins.rows, ins.cols))
                elif isinstance(ins, ForLoop):
                    walk(ins.body)

        walk(self.instrs)
        return out


# Opcode vocabularies shared by parser, validator, and evaluator.

ARITH_OPS = ("+", "-", "*", "/", "%%", "^")
COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_BIN_OPS = ("&", "|")
LOGIC_NOT = "!"
IS_OPS = ("NA?", "NAN?", "INF?")
MATH1_OPS = ("abs", "sign", "sqrt", "floor", "ceiling",
             "exp", "log", "sin", "cos", "tan")
SUMMARY_OPS = ("sum", "prod", "min", "max", "any", "all", "range")
MATMUL_OP = "%*%"

# Every opcode legal as an elementwise/matrix def source.
MATRIX_OPS = (ARITH_OPS + COMPARE_OPS + LOGIC_BIN_OPS + (LOGIC_NOT,)
              + IS_OPS + MATH1_OPS + (MATMUL_OP,))

# Every opcode legal as a scalar (register) instruction, minus set/indexvar
# which are handled separately.
SCALAR_OPS = (ARITH_OPS + COMPARE_OPS + LOGIC_BIN_OPS + (LOGIC_NOT,)
              + IS_OPS + MATH1_OPS + SUMMARY_OPS)

UNARY_OPS = (LOGIC_NOT,) + IS_OPS + MATH1_OPS

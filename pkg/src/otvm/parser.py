"""Text form of oblivious transcripts: parsing and canonical printing.

One instruction per line. Matrix definitions and loops are bracketed
blocks whose closing line echoes the id they opened with, so framing
damage is detectable without type information. Canonical grammar::

    program   := { instr }
    instr     := def-block | loop | edit | select | scalar
    loop      := 'forloop' k bound bound bound NL { instr } 'endloop' k NL
    def-block := 'def' ['const'] $m [1:R] [1:C] NL { TAB body NL } 'end' m NL
    body      := 'row' n entry {entry}          -- inline rows, numbered from 1
               | 'dataset' name                 -- named client data
               | 'empty' | 'rand'               -- zeros / seeded uniforms
               | matop arg {arg}                -- elementwise or %*%
               | ('cbind'|'rbind') arg {arg}    -- concatenation
    edit      := ('update'|'slice'|'slice const'|'dim') $d seq seq src
    select    := 'select' dest arg arg arg
    scalar    := binop %d arg arg | unop %d arg | sumop %d arg
               | 'range' %lo %hi arg | 'set' %d arg | 'indexvar' %d

    arg       := $m | %r | $m@(ix,ix) | \\k | #value
    entry,src := arg without the bare-matrix form for row entries;
                 src additionally allows a bare matrix
    seq       := [ix:ix:ix] | [ix:ix] | [ix{,ix}]      -- no interior spaces
    bound     := integer | arg
    ix        := integer | \\k
    value     := decimal float (optional exponent) | 'NaN'

Parsing tolerates blank lines and repeated blanks between tokens; the
leading TAB on definition body lines is structural and required. There
is no comment syntax. ``print_program`` emits one canonical spelling
(single spaces, three-field ordered sequences, ``end``/``endloop``
echoes), and ``parse(print_program(p)) == p`` for every well-formed
program ``p``.

Errors carry a 1-based line and column plus a kind:

    Lex     -- a malformed token (``$0``, ``#frog``, ``[1:]``)
    Syntax  -- well-formed tokens in an illegal arrangement
    Framing -- block closers missing or echoing the wrong id
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .ast import (
    ARITH_OPS,
    COMPARE_OPS,
    LOGIC_BIN_OPS,
    LOGIC_NOT,
    IS_OPS,
    MATH1_OPS,
    MATMUL_OP,
    SUMMARY_OPS,
    BindSrc,
    Cell,
    DatasetSrc,
    DefMatrix,
    EditInstr,
    EmptySrc,
    ForLoop,
    Literal,
    LoopIndex,
    Matrix,
    OpSrc,
    Ordered,
    Program,
    RandSrc,
    Register,
    RowsSrc,
    ScalarInstr,
    SelectInstr,
    Unordered,
)


@dataclass(eq=False)
class ParseError(Exception):
    """Positioned parse failure; ``kind`` is Lex, Syntax, or Framing."""

    line: int
    column: int
    message: str
    kind: str

    def __str__(self):
        return (f"{self.kind} error at line {self.line}, "
                f"column {self.column}: {self.message}")


_NAT = re.compile(r"[1-9][0-9]*\Z")
_INT = re.compile(r"(?:0|-?[1-9][0-9]*)\Z")
_NAME = re.compile(r"[A-Za-z0-9]+\Z")
_FLOAT = re.compile(r"-?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\Z")
_IX = r"(?:0|-?[1-9][0-9]*|\\[1-9][0-9]*)"
_CELL = re.compile(r"\$([1-9][0-9]*)@\((%s),(%s)\)\Z" % (_IX, _IX))
_LENGTH = re.compile(r"\[1:([1-9][0-9]*)\]\Z")

_BINARY = frozenset(ARITH_OPS) | frozenset(COMPARE_OPS) | frozenset(LOGIC_BIN_OPS)
_UNARY = frozenset((LOGIC_NOT,)) | frozenset(IS_OPS) | frozenset(MATH1_OPS)
_SUMMARY = frozenset(SUMMARY_OPS) - {"range"}
_BODY_OPS = _BINARY | _UNARY | {MATMUL_OP}
_EDIT_HEADS = ("update", "slice", "dim")

# Line shape: (line number, starts-with-tab, [(column, token), ...]).
_Row = tuple[int, bool, list[tuple[int, str]]]


def _rows_of(text: str) -> list[_Row]:
    rows: list[_Row] = []
    for ln, raw in enumerate(text.split("\n"), 1):
        if not raw.strip():
            continue
        fields = [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", raw)]
        rows.append((ln, raw.startswith("\t"), fields))
    return rows


def _field(row: _Row, i: int, what: str) -> tuple[int, str]:
    ln, _tab, fields = row
    if i >= len(fields):
        col, text = fields[-1]
        raise ParseError(ln, col + len(text) + 1, f"expected {what}", "Syntax")
    return fields[i]


def _no_more(row: _Row, i: int) -> None:
    ln, _tab, fields = row
    if i < len(fields):
        col, text = fields[i]
        raise ParseError(ln, col, f"unexpected trailing token {text!r}", "Syntax")


def _ix_of(text: str):
    """Sequence/cell index: integer or loop index; None when malformed."""
    if text.startswith("\\"):
        if _NAT.match(text[1:]):
            return LoopIndex(int(text[1:]))
        return None
    if _INT.match(text):
        return int(text)
    return None


def _operand(ln: int, col: int, text: str):
    """Any argument form: matrix, register, cell, loop index, literal."""
    if text.startswith("$"):
        if "@" in text:
            m = _CELL.match(text)
            if not m:
                raise ParseError(ln, col, f"malformed cell reference {text!r}",
                                 "Lex")
            return Cell(int(m.group(1)), _ix_of(m.group(2)), _ix_of(m.group(3)))
        if _NAT.match(text[1:]):
            return Matrix(int(text[1:]))
        raise ParseError(ln, col, f"malformed matrix id {text!r}", "Lex")
    if text.startswith("%"):
        if text in ("%%", MATMUL_OP):
            raise ParseError(ln, col, f"expected an operand, got {text!r}",
                             "Syntax")
        if _NAT.match(text[1:]):
            return Register(int(text[1:]))
        raise ParseError(ln, col, f"malformed register id {text!r}", "Lex")
    if text.startswith("\\"):
        if _NAT.match(text[1:]):
            return LoopIndex(int(text[1:]))
        raise ParseError(ln, col, f"malformed loop index {text!r}", "Lex")
    if text.startswith("#"):
        payload = text[1:]
        if payload == "NaN":
            return Literal(math.nan)
        if not _FLOAT.match(payload):
            raise ParseError(ln, col, f"malformed literal {text!r}", "Lex")
        value = float(payload)
        if math.isinf(value):
            raise ParseError(ln, col, f"literal {text!r} out of range", "Lex")
        return Literal(value)
    raise ParseError(ln, col, f"expected an operand, got {text!r}", "Syntax")


def _scalar_operand(ln: int, col: int, text: str):
    op = _operand(ln, col, text)
    if isinstance(op, Matrix):
        raise ParseError(ln, col, "expected a scalar operand, got a matrix",
                         "Syntax")
    return op


def _register(ln: int, col: int, text: str) -> Register:
    op = _operand(ln, col, text)
    if not isinstance(op, Register):
        raise ParseError(ln, col, f"expected a register, got {text!r}",
                         "Syntax")
    return op


def _matrix(ln: int, col: int, text: str) -> Matrix:
    op = _operand(ln, col, text)
    if not isinstance(op, Matrix):
        raise ParseError(ln, col, f"expected a matrix, got {text!r}", "Syntax")
    return op


def _natural(ln: int, col: int, text: str, what: str) -> int:
    if not _NAT.match(text):
        raise ParseError(ln, col, f"expected {what}, got {text!r}", "Syntax")
    return int(text)


def _seq(ln: int, col: int, text: str):
    if not (text.startswith("[") and text.endswith("]") and len(text) > 2):
        raise ParseError(ln, col, f"malformed sequence {text!r}", "Lex")
    inner = text[1:-1]
    if ":" in inner:
        parts = inner.split(":")
        if len(parts) not in (2, 3) or "," in inner:
            raise ParseError(ln, col, f"malformed sequence {text!r}", "Lex")
        start = _ix_of(parts[0])
        stop = _ix_of(parts[1])
        if start is None or stop is None:
            raise ParseError(ln, col, f"malformed sequence {text!r}", "Lex")
        step = 1
        if len(parts) == 3:
            if not _INT.match(parts[2]):
                raise ParseError(ln, col,
                                 f"sequence step must be an integer in {text!r}",
                                 "Lex")
            step = int(parts[2])
        return Ordered(start, stop, step)
    items = []
    for part in inner.split(","):
        ix = _ix_of(part)
        if ix is None:
            raise ParseError(ln, col, f"malformed sequence {text!r}", "Lex")
        items.append(ix)
    return Unordered(tuple(items))


def _bound(ln: int, col: int, text: str):
    if _INT.match(text):
        return int(text)
    return _operand(ln, col, text)


class _Parser:
    def __init__(self, text: str):
        self.rows = _rows_of(text)
        self.i = 0
        self.last_line = self.rows[-1][0] if self.rows else 0

    def peek(self):
        return self.rows[self.i] if self.i < len(self.rows) else None

    def take(self) -> _Row:
        row = self.rows[self.i]
        self.i += 1
        return row

    # -- blocks ------------------------------------------------------------

    def program(self) -> Program:
        instrs = self.instrs(depth=0, closer=None)
        return Program(tuple(instrs))

    def instrs(self, depth: int, closer):
        """Parse until EOF (closer None) or a closing keyword line.

        The closer line is left unconsumed for the caller to echo-check.
        """
        out = []
        while True:
            row = self.peek()
            if row is None:
                if closer is None:
                    return out
                raise ParseError(self.last_line + 1, 1,
                                 f"missing {closer!r} before end of input",
                                 "Framing")
            ln, tab, fields = row
            col, head = fields[0]
            if tab:
                raise ParseError(ln, col,
                                 "indented line outside a definition body",
                                 "Syntax")
            if head in ("end", "endloop"):
                if head != closer:
                    raise ParseError(ln, col,
                                     f"{head!r} without a matching opener",
                                     "Framing")
                return out
            out.append(self.instr(depth))

    def instr(self, depth: int):
        ln, _tab, fields = self.peek()
        head = fields[0][1]
        if head == "def":
            return self.def_block()
        if head == "forloop":
            return self.loop(depth)
        if head in _EDIT_HEADS:
            return self.edit()
        if head == "select":
            return self.select()
        return self.scalar()

    def loop(self, depth: int) -> ForLoop:
        row = self.take()
        ln = row[0]
        col, text = _field(row, 1, "a loop index id")
        index_id = _natural(ln, col, text, "a loop index id")
        bounds = []
        for k, what in ((2, "a loop start"), (3, "a loop stop"),
                        (4, "a loop step")):
            col, text = _field(row, k, what)
            bounds.append(_bound(ln, col, text))
        _no_more(row, 5)
        body = self.instrs(depth + 1, closer="endloop")
        erow = self.take()
        eln = erow[0]
        ecol, etext = _field(erow, 1, "the loop index id")
        echoed = _natural(eln, ecol, etext, "the loop index id")
        if echoed != index_id:
            raise ParseError(eln, ecol,
                             f"endloop {echoed} does not close forloop "
                             f"{index_id}", "Framing")
        _no_more(erow, 2)
        return ForLoop(index_id, bounds[0], bounds[1], bounds[2], tuple(body))

    def def_block(self) -> DefMatrix:
        row = self.take()
        ln = row[0]
        j = 1
        col, text = _field(row, j, "a matrix id")
        is_const = text == "const"
        if is_const:
            j += 1
            col, text = _field(row, j, "a matrix id")
        dest = _matrix(ln, col, text)
        dims = []
        for what in ("a row extent [1:n]", "a column extent [1:n]"):
            j += 1
            col, text = _field(row, j, what)
            m = _LENGTH.match(text)
            if not m:
                raise ParseError(ln, col, f"expected {what}, got {text!r}",
                                 "Syntax")
            dims.append(int(m.group(1)))
        _no_more(row, j + 1)

        source = self.def_body(dest.id)

        erow = self.peek()
        if erow is None:
            raise ParseError(self.last_line + 1, 1,
                             f"definition of ${dest.id} is not closed by "
                             f"'end {dest.id}'", "Framing")
        eln, etab, efields = erow
        ecol, ehead = efields[0]
        if etab or ehead != "end":
            raise ParseError(eln, ecol,
                             f"expected 'end {dest.id}' to close the "
                             f"definition", "Framing")
        self.take()
        ecol, etext = _field(erow, 1, "the matrix id")
        echoed = _natural(eln, ecol, etext, "the matrix id")
        if echoed != dest.id:
            raise ParseError(eln, ecol,
                             f"end {echoed} does not close def ${dest.id}",
                             "Framing")
        _no_more(erow, 2)
        return DefMatrix(dest.id, dims[0], dims[1], is_const, source)

    def def_body(self, dest_id: int):
        rows_acc = []
        single = None
        while True:
            nxt = self.peek()
            if nxt is None or not nxt[1]:
                break
            row = self.take()
            ln, _tab, fields = row
            col, head = fields[0]
            if single is not None or (rows_acc and head != "row"):
                raise ParseError(ln, col, "definition already has contents",
                                 "Syntax")
            if head == "row":
                rows_acc.append(self.row_line(row, len(rows_acc) + 1))
            else:
                single = self.single_source(row)
        if single is not None:
            return single
        if rows_acc:
            return RowsSrc(tuple(rows_acc))
        nrow = self.peek()
        pos = (nrow[0], nrow[2][0][0]) if nrow else (self.last_line + 1, 1)
        raise ParseError(pos[0], pos[1],
                         f"definition of ${dest_id} has no contents", "Syntax")

    def row_line(self, row: _Row, expect_n: int):
        ln, _tab, fields = row
        col, text = _field(row, 1, "a row number")
        n = _natural(ln, col, text, "a row number")
        if n != expect_n:
            raise ParseError(ln, col,
                             f"row number {n} out of order (expected "
                             f"{expect_n})", "Syntax")
        entries = []
        k = 2
        while k < len(fields):
            col, text = fields[k]
            entries.append(_scalar_operand(ln, col, text))
            k += 1
        if not entries:
            _field(row, 2, "a row entry")
        return tuple(entries)

    def single_source(self, row: _Row):
        ln, _tab, fields = row
        col, head = fields[0]
        if head == "dataset":
            ncol, ntext = _field(row, 1, "a dataset name")
            if not _NAME.match(ntext):
                raise ParseError(ln, ncol,
                                 f"malformed dataset name {ntext!r}", "Lex")
            _no_more(row, 2)
            return DatasetSrc(ntext)
        if head == "empty":
            _no_more(row, 1)
            return EmptySrc()
        if head == "rand":
            _no_more(row, 1)
            return RandSrc()
        if head in ("cbind", "rbind"):
            args = []
            k = 1
            while k < len(fields):
                acol, atext = fields[k]
                args.append(_operand(ln, acol, atext))
                k += 1
            if not args:
                _field(row, 1, "an argument")
            return BindSrc(head, tuple(args))
        if head in _BODY_OPS:
            arity = 1 if head in _UNARY else 2
            args = []
            for k in range(arity):
                acol, atext = _field(row, 1 + k, "an argument")
                args.append(_operand(ln, acol, atext))
            _no_more(row, 1 + arity)
            return OpSrc(head, tuple(args))
        raise ParseError(ln, col,
                         f"unknown definition source {head!r}", "Syntax")

    # -- straight-line instructions ----------------------------------------

    def edit(self) -> EditInstr:
        row = self.take()
        ln = row[0]
        col, opcode = row[2][0]
        j = 1
        if opcode == "slice":
            ncol, ntext = _field(row, 1, "a destination matrix")
            if ntext == "const":
                opcode = "slice_const"
                j = 2
        dcol, dtext = _field(row, j, "a destination matrix")
        dest = _matrix(ln, dcol, dtext)
        rcol, rtext = _field(row, j + 1, "a row sequence")
        rseq = _seq(ln, rcol, rtext)
        ccol, ctext = _field(row, j + 2, "a column sequence")
        cseq = _seq(ln, ccol, ctext)
        scol, stext = _field(row, j + 3, "a source operand")
        src = _operand(ln, scol, stext)
        _no_more(row, j + 4)
        return EditInstr(opcode, dest, rseq, cseq, src)

    def select(self) -> SelectInstr:
        row = self.take()
        ln = row[0]
        dcol, dtext = _field(row, 1, "a destination")
        dest = _operand(ln, dcol, dtext)
        if isinstance(dest, (Literal, LoopIndex)):
            raise ParseError(ln, dcol,
                             "select destination must be a register, cell, "
                             "or matrix", "Syntax")
        args = []
        for k, what in ((2, "a condition"), (3, "a true operand"),
                        (4, "a false operand")):
            acol, atext = _field(row, k, what)
            args.append(_operand(ln, acol, atext))
        _no_more(row, 5)
        return SelectInstr(dest, args[0], args[1], args[2])

    def scalar(self) -> ScalarInstr:
        row = self.take()
        ln = row[0]
        col, opcode = row[2][0]
        if opcode == "indexvar":
            dcol, dtext = _field(row, 1, "a destination register")
            dest = _register(ln, dcol, dtext)
            _no_more(row, 2)
            return ScalarInstr("indexvar", dest, ())
        if opcode == "set":
            dcol, dtext = _field(row, 1, "a destination register")
            dest = _register(ln, dcol, dtext)
            acol, atext = _field(row, 2, "an argument")
            arg = _operand(ln, acol, atext)
            _no_more(row, 3)
            return ScalarInstr("set", dest, (arg,))
        if opcode == "range":
            dcol, dtext = _field(row, 1, "a low destination register")
            dest = _register(ln, dcol, dtext)
            d2col, d2text = _field(row, 2, "a high destination register")
            dest2 = _register(ln, d2col, d2text)
            acol, atext = _field(row, 3, "an argument")
            arg = _operand(ln, acol, atext)
            _no_more(row, 4)
            return ScalarInstr("range", dest, (arg,), dest2)
        if opcode in _BINARY or opcode in _UNARY or opcode in _SUMMARY:
            arity = 2 if opcode in _BINARY else 1
            dcol, dtext = _field(row, 1, "a destination register")
            dest = _register(ln, dcol, dtext)
            args = []
            for k in range(arity):
                acol, atext = _field(row, 2 + k, "an argument")
                args.append(_operand(ln, acol, atext))
            _no_more(row, 2 + arity)
            return ScalarInstr(opcode, dest, tuple(args))
        raise ParseError(ln, col, f"unknown instruction {opcode!r}", "Syntax")


def parse(text: str) -> Program:
    """Parse transcript text; raises ParseError on the first defect."""
    return _Parser(text).program()


# ---------------------------------------------------------------------------
# Canonical printing
# ---------------------------------------------------------------------------


def _fmt_float(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        raise ValueError("non-finite literal has no text form")
    return repr(value)


def _fmt_ix(ix) -> str:
    return f"\\{ix.depth}" if isinstance(ix, LoopIndex) else str(ix)


def _fmt_operand(op) -> str:
    if isinstance(op, Matrix):
        return f"${op.id}"
    if isinstance(op, Register):
        return f"%{op.id}"
    if isinstance(op, Cell):
        return f"${op.matrix_id}@({_fmt_ix(op.row)},{_fmt_ix(op.col)})"
    if isinstance(op, LoopIndex):
        return f"\\{op.depth}"
    if isinstance(op, Literal):
        return f"#{_fmt_float(op.value)}"
    raise TypeError(f"not an operand: {op!r}")


def _fmt_seq(seq) -> str:
    if isinstance(seq, Ordered):
        return f"[{_fmt_ix(seq.start)}:{_fmt_ix(seq.stop)}:{seq.step}]"
    return "[" + ",".join(_fmt_ix(i) for i in seq.items) + "]"


def _fmt_bound(b) -> str:
    return str(b) if isinstance(b, int) else _fmt_operand(b)


def _emit(instrs, out: list) -> None:
    for ins in instrs:
        if isinstance(ins, DefMatrix):
            const = "const " if ins.is_const else ""
            out.append(f"def {const}${ins.id} [1:{ins.rows}] [1:{ins.cols}]")
            src = ins.source
            if isinstance(src, RowsSrc):
                for n, entries in enumerate(src.rows, 1):
                    cells = " ".join(_fmt_operand(e) for e in entries)
                    out.append(f"\trow {n} {cells}")
            elif isinstance(src, DatasetSrc):
                out.append(f"\tdataset {src.name}")
            elif isinstance(src, EmptySrc):
                out.append("\tempty")
            elif isinstance(src, RandSrc):
                out.append("\trand")
            elif isinstance(src, OpSrc):
                args = " ".join(_fmt_operand(a) for a in src.args)
                out.append(f"\t{src.opcode} {args}")
            elif isinstance(src, BindSrc):
                args = " ".join(_fmt_operand(a) for a in src.args)
                out.append(f"\t{src.kind} {args}")
            else:  # pragma: no cover - exhaustive over DefSource
                raise TypeError(f"unknown source {src!r}")
            out.append(f"end {ins.id}")
        elif isinstance(ins, ForLoop):
            out.append(f"forloop {ins.index_id} {_fmt_bound(ins.start)} "
                       f"{_fmt_bound(ins.stop)} {_fmt_bound(ins.step)}")
            _emit(ins.body, out)
            out.append(f"endloop {ins.index_id}")
        elif isinstance(ins, EditInstr):
            op = "slice const" if ins.opcode == "slice_const" else ins.opcode
            out.append(f"{op} ${ins.dest.id} {_fmt_seq(ins.rseq)} "
                       f"{_fmt_seq(ins.cseq)} {_fmt_operand(ins.src)}")
        elif isinstance(ins, SelectInstr):
            out.append(f"select {_fmt_operand(ins.dest)} "
                       f"{_fmt_operand(ins.cond)} "
                       f"{_fmt_operand(ins.on_true)} "
                       f"{_fmt_operand(ins.on_false)}")
        elif isinstance(ins, ScalarInstr):
            parts = [ins.opcode, _fmt_operand(ins.dest)]
            if ins.dest2 is not None:
                parts.append(_fmt_operand(ins.dest2))
            parts.extend(_fmt_operand(a) for a in ins.args)
            out.append(" ".join(parts))
        else:  # pragma: no cover - exhaustive over Instr
            raise TypeError(f"unknown instruction {ins!r}")


def print_program(p: Program) -> str:
    """Render the one canonical text form; inverse of ``parse``."""
    out: list = []
    _emit(p.instrs, out)
    return "".join(line + "\n" for line in out)

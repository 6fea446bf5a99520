"""Backend virtual machine: replay a validated transcript on real data.

The frontend traced pseudonyms; this side binds datasets to the matrix
ids, then executes the straight-line instruction stream. Control flow
never consults a data value: loop bounds are static, every elementwise
pass covers all rows*cols cells, folds visit every cell, and selection
is the branch-free ct_select. FixedScalar refuses __bool__, so a data
value reaching a Python branch predicate raises rather than leaks.

Observability model. A run appends TraceRecords — (opcode, shape,
taint) triples holding no values — to the VmState:

    - one ("load", dims, Pseudonym) per declared dataset, in sorted
      name order, before the first instruction;
    - one record per executed instruction, named by its mnemonic
      (a def inside a loop records once per iteration);
    - one record per leaf-family invocation an instruction makes: the
      elementwise op of a definition body, "%*%", "rand", the fold op
      of a summary, and select's "ct_select". Copies (rows, empty,
      dataset binds, cbind/rbind, set, indexvar, edits) invoke none.

per-cell arithmetic lands in the OpCount instead. The record total is
a function of the program and its static bounds alone;
static_trace_count computes it by symbolic unrolling and run() asserts
the dynamic count equals it.

Runtime errors (EvalError) are limited to concrete index arithmetic:
IndexOutOfBounds for a position outside the matrix, ShapeMismatch for
an update window/source disagreement, ElementCountMismatch for a
non-conserving reshape. Validation already rejects every statically
visible instance; these remain reachable only through loop-index
positions.

Fold semantics: sum/prod thread add/mul through all cells; min/max
thread compare+ct_select, so one NA or NaN cell degrades the fold to
NA from that point on; any/all thread Kleene or/and over cell truth.
There is no skip-missing mode here — upstream code masks first.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .ast import (
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
    Taint,
    taint_join,
)
from .dataio import DataError, decode
from .fixedpoint import (
    ARITH_FN,
    COMPARE_FN,
    IS_FN,
    LOGIC_FN,
    MATH1_FN,
    F_NA,
    F_ZERO,
    FixedScalar,
    OpCount,
    ct_select,
    from_double,
    logic,
)
from .validate import TaintedProgram

Scalar = tuple[FixedScalar, Taint]


@dataclass
class Block:
    """Dense matrix value: row-major cells plus a creation-time taint."""

    rows: int
    cols: int
    cells: list[FixedScalar]
    taint: Taint

    def at(self, r: int, c: int) -> FixedScalar:
        """1-based cell read; bounds are the caller's concern."""
        return self.cells[(r - 1) * self.cols + (c - 1)]


@dataclass(frozen=True)
class TraceRecord:
    """One observable step: never carries values, raws, or tags."""

    opcode: str
    shape: tuple[int, int]
    taint: Taint


@dataclass
class VmState:
    """Architectural state of one run; owned by a single thread."""

    matrices: dict[int, Block] = field(default_factory=dict)
    registers: dict[int, Scalar] = field(default_factory=dict)
    loop_indices: list[tuple[int, int]] = field(default_factory=list)
    trace: list[TraceRecord] = field(default_factory=list)
    oc: OpCount = field(default_factory=OpCount)
    rng: random.Random = field(default_factory=random.Random)


@dataclass(eq=False)
class EvalError(Exception):
    """Runtime fault from concrete index arithmetic."""

    kind: str  # IndexOutOfBounds | ShapeMismatch | ElementCountMismatch
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _not_fn(a, oc):
    return logic("!", a, oc=oc)


_FN2 = {**ARITH_FN, **COMPARE_FN, **LOGIC_FN}
_FN1 = {**MATH1_FN, **IS_FN, "!": _not_fn}


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------


def load_dataset(name: str, blob: bytes,
                 declared: tuple[int, int] | None = None,
                 oc: OpCount | None = None) -> Block:
    """Decode a blob into a Pseudonym Block.

    The embedded name is informational; binding is by the manifest, so
    a differing embedded name is not an error. Every cell goes through
    from_double, whose step sequence is value-independent.
    """
    raw = decode(blob)
    if declared is not None and (raw.rows, raw.cols) != declared:
        raise DataError(
            "DimensionMismatch",
            f"dataset {name!r} is {raw.rows}x{raw.cols} on disk but "
            f"declared {declared[0]}x{declared[1]}")
    oc = oc if oc is not None else OpCount()
    cells = [from_double(v, oc) for v in raw.cells]
    return Block(raw.rows, raw.cols, cells, Taint.PSEUDONYM)


# ---------------------------------------------------------------------------
# Kernel operations (pure; trace/oc passed in)
# ---------------------------------------------------------------------------


def _record(trace, opcode: str, shape: tuple[int, int], taint: Taint) -> None:
    if trace is not None:
        trace.append(TraceRecord(opcode, shape, taint))


def _cell_of(x, i: int):
    """Cell i of a Block, or the scalar itself (broadcast)."""
    return x.cells[i] if isinstance(x, Block) else x[0]


def _taint_of(x) -> Taint:
    return x.taint if isinstance(x, Block) else x[1]


def _shape_of(args) -> tuple[int, int]:
    for a in args:
        if isinstance(a, Block):
            return (a.rows, a.cols)
    return (1, 1)


def eval_elementwise(op: str, args, oc: OpCount | None = None, trace=None):
    """Apply a scalar family over all cells; scalars broadcast.

    Returns a Block, or a Scalar when every operand is scalar.
    """
    oc = oc if oc is not None else OpCount()
    rows, cols = _shape_of(args)
    taint = Taint.CONCRETE
    for a in args:
        taint = taint_join(taint, _taint_of(a))
    n = rows * cols
    if len(args) == 1:
        fn = _FN1[op]
        (a,) = args
        cells = [fn(_cell_of(a, i), oc) for i in range(n)]
    else:
        fn = _FN2[op]
        a, b = args
        cells = [fn(_cell_of(a, i), _cell_of(b, i), oc) for i in range(n)]
    _record(trace, op, (rows, cols), taint)
    if not any(isinstance(a, Block) for a in args):
        return (cells[0], taint)
    return Block(rows, cols, cells, taint)


def matmul(a: Block, b: Block, oc: OpCount | None = None, trace=None) -> Block:
    """Naive triple loop; iteration counts depend on dims alone."""
    oc = oc if oc is not None else OpCount()
    taint = taint_join(a.taint, b.taint)
    mul = ARITH_FN["*"]
    add = ARITH_FN["+"]
    inner = a.cols
    m = b.cols
    ac = a.cells
    bc = b.cells
    cells = []
    for i in range(a.rows):
        arow = ac[i * inner:(i + 1) * inner]
        for j in range(m):
            acc = mul(arow[0], bc[j], oc)
            ix = m + j
            for k in range(1, inner):
                acc = add(acc, mul(arow[k], bc[ix], oc), oc)
                ix += m
            cells.append(acc)
    _record(trace, "%*%", (a.rows, b.cols), taint)
    return Block(a.rows, b.cols, cells, taint)


def eval_select(cond, t, f, oc: OpCount | None = None, trace=None):
    """Branch-free three-way merge; ct_select in every cell.

    Matrix operands share dims (validated); scalars broadcast. A cond
    cell that is NA or NaN yields NA in that cell.
    """
    oc = oc if oc is not None else OpCount()
    args = (cond, t, f)
    rows, cols = _shape_of(args)
    taint = Taint.CONCRETE
    for a in args:
        taint = taint_join(taint, _taint_of(a))
    cells = [ct_select(_cell_of(cond, i), _cell_of(t, i), _cell_of(f, i), oc)
             for i in range(rows * cols)]
    _record(trace, "ct_select", (rows, cols), taint)
    if not any(isinstance(a, Block) for a in args):
        return (cells[0], taint)
    return Block(rows, cols, cells, taint)


def eval_summary(op: str, m: Block, oc: OpCount | None = None,
                 trace=None) -> tuple[tuple[FixedScalar, ...], Taint]:
    """Fold all cells in row-major order; see module docstring for the
    missing-value behavior. Returns (min, max) for range, else one
    value."""
    oc = oc if oc is not None else OpCount()
    cells = m.cells
    add = ARITH_FN["+"]
    mul = ARITH_FN["*"]
    lt = COMPARE_FN["<"]
    gt = COMPARE_FN[">"]
    out: tuple[FixedScalar, ...]
    if op == "sum" or op == "prod":
        fn = add if op == "sum" else mul
        acc = cells[0]
        for x in cells[1:]:
            acc = fn(acc, x, oc)
        out = (acc,)
    elif op == "min" or op == "max":
        cmp_fn = lt if op == "min" else gt
        acc = cells[0]
        for x in cells[1:]:
            acc = ct_select(cmp_fn(x, acc, oc), x, acc, oc)
        out = (acc,)
    elif op == "any" or op == "all":
        fold = LOGIC_FN["|"] if op == "any" else LOGIC_FN["&"]
        acc = fold(cells[0], cells[0], oc)  # normalize to a truth value
        for x in cells[1:]:
            acc = fold(acc, x, oc)
        out = (acc,)
    elif op == "range":
        lo = cells[0]
        hi = cells[0]
        for x in cells[1:]:
            lo = ct_select(lt(x, lo, oc), x, lo, oc)
            hi = ct_select(gt(x, hi, oc), x, hi, oc)
        out = (lo, hi)
    else:
        raise ValueError(f"unknown summary op {op!r}")
    _record(trace, op, (1, 1), m.taint)
    return out, m.taint


def _positions(seq, loop_values: list[int]) -> list[int]:
    """Resolve a sequence to concrete 1-based positions."""
    def ix(v):
        return loop_values[v.depth - 1] if isinstance(v, LoopIndex) else v
    if isinstance(seq, Ordered):
        start = ix(seq.start)
        stop = ix(seq.stop)
        n = (stop - start) // seq.step + 1
        return [start + k * seq.step for k in range(n)]
    return [ix(v) for v in seq.items]


def eval_edit(op: str, dest: Block, rseq, cseq, src,
              loop_values: list[int] | None = None) -> Block:
    """update / slice / slice_const / dim over concrete windows.

    dest is the matrix being edited for update and the source matrix
    for the three extraction forms (their result is returned). src is
    a Block or Scalar for update (scalars broadcast), ignored
    otherwise. Pure: the input Block is never mutated.
    """
    loop_values = loop_values or []
    rpos = _positions(rseq, loop_values)
    cpos = _positions(cseq, loop_values)

    if op == "dim":
        if len(rpos) * len(cpos) != dest.rows * dest.cols:
            raise EvalError(
                "ElementCountMismatch",
                f"reshape to {len(rpos)}x{len(cpos)} from "
                f"{dest.rows}x{dest.cols}")
        return Block(len(rpos), len(cpos), list(dest.cells), dest.taint)

    for r in rpos:
        if not 1 <= r <= dest.rows:
            raise EvalError("IndexOutOfBounds",
                            f"row {r} outside 1..{dest.rows}")
    for c in cpos:
        if not 1 <= c <= dest.cols:
            raise EvalError("IndexOutOfBounds",
                            f"column {c} outside 1..{dest.cols}")

    if op == "update":
        if isinstance(src, Block):
            if (src.rows, src.cols) != (len(rpos), len(cpos)):
                raise EvalError(
                    "ShapeMismatch",
                    f"window is {len(rpos)}x{len(cpos)} but source is "
                    f"{src.rows}x{src.cols}")
            getter = src.at
        else:
            getter = lambda i, j: src[0]  # noqa: E731 - tiny broadcast shim
        cells = list(dest.cells)
        for i, r in enumerate(rpos, 1):
            for j, c in enumerate(cpos, 1):
                cells[(r - 1) * dest.cols + (c - 1)] = getter(i, j)
        taint = taint_join(dest.taint, _taint_of(src))
        return Block(dest.rows, dest.cols, cells, taint)

    # slice / slice_const extract the window from dest.
    cells = [dest.at(r, c) for r in rpos for c in cpos]
    taint = Taint.CONCRETE if op == "slice_const" else dest.taint
    return Block(len(rpos), len(cpos), cells, taint)


def oblivious_lookup(table: Block, index: Scalar,
                     oc: OpCount | None = None, first: int = 1) -> Scalar:
    """Positional lookup by full scan: n compare+select steps always.

    The n x 1 table covers the contiguous integer domain first..first+n-1;
    an index outside it (or NA/NaN) yields NA. The index never steers
    which cells are touched.
    """
    oc = oc if oc is not None else OpCount()
    eq = COMPARE_FN["=="]
    acc = F_NA
    for k, entry in enumerate(table.cells):
        key = from_double(float(first + k), oc)
        acc = ct_select(eq(index[0], key, oc), entry, acc, oc)
    return (acc, taint_join(table.taint, index[1]))


def compare_traces(t1, t2) -> bool:
    """Element-wise equality of two observable sequences."""
    return list(t1) == list(t2)


# ---------------------------------------------------------------------------
# The dispatch loop
# ---------------------------------------------------------------------------


def _loop_values(state: VmState) -> list[int]:
    return [v for _d, v in state.loop_indices]


def _scalar_operand(state: VmState, op) -> Scalar:
    if isinstance(op, Literal):
        return (from_double(op.value, state.oc), Taint.CONCRETE)
    if isinstance(op, LoopIndex):
        value = state.loop_indices[op.depth - 1][1]
        return (from_double(float(value), state.oc), Taint.CONCRETE)
    if isinstance(op, Register):
        return state.registers[op.id]
    if isinstance(op, Cell):
        block = state.matrices[op.matrix_id]
        vals = _loop_values(state)
        r = vals[op.row.depth - 1] if isinstance(op.row, LoopIndex) else op.row
        c = vals[op.col.depth - 1] if isinstance(op.col, LoopIndex) else op.col
        if not (1 <= r <= block.rows and 1 <= c <= block.cols):
            raise EvalError(
                "IndexOutOfBounds",
                f"cell ({r},{c}) outside {block.rows}x{block.cols}")
        return (block.at(r, c), block.taint)
    raise TypeError(f"not a scalar operand: {op!r}")  # pragma: no cover


def _value_operand(state: VmState, op):
    """Block for matrix operands, Scalar otherwise."""
    if isinstance(op, Matrix):
        return state.matrices[op.id]
    return _scalar_operand(state, op)


def _bound_value(state: VmState, b) -> int:
    if isinstance(b, int):
        return b
    if isinstance(b, LoopIndex):
        return state.loop_indices[b.depth - 1][1]
    if isinstance(b, Literal):
        return int(b.value)
    raise TypeError(f"non-static bound {b!r} survived validation")


def _as_block(x) -> Block:
    if isinstance(x, Block):
        return x
    return Block(1, 1, [x[0]], x[1])


def _exec_def(state: VmState, ins: DefMatrix, cache: dict[str, Block]) -> None:
    src = ins.source
    if isinstance(src, RowsSrc):
        cells = []
        taint = Taint.CONCRETE
        for row in src.rows:
            for entry in row:
                v, t = _scalar_operand(state, entry)
                cells.append(v)
                taint = taint_join(taint, t)
        block = Block(ins.rows, ins.cols, cells, taint)
    elif isinstance(src, DatasetSrc):
        base = cache[src.name]
        block = Block(base.rows, base.cols, list(base.cells), base.taint)
    elif isinstance(src, EmptySrc):
        block = Block(ins.rows, ins.cols,
                      [F_ZERO] * (ins.rows * ins.cols), Taint.CONCRETE)
    elif isinstance(src, RandSrc):
        cells = [from_double(state.rng.random(), state.oc)
                 for _ in range(ins.rows * ins.cols)]
        block = Block(ins.rows, ins.cols, cells, Taint.CONCRETE)
        _record(state.trace, "rand", (ins.rows, ins.cols), Taint.CONCRETE)
    elif isinstance(src, OpSrc):
        args = [_value_operand(state, a) for a in src.args]
        if src.opcode == "%*%":
            block = matmul(args[0], args[1], state.oc, state.trace)
        else:
            block = _as_block(eval_elementwise(src.opcode, args, state.oc,
                                               state.trace))
    elif isinstance(src, BindSrc):
        blocks = [_as_block(_value_operand(state, a)) for a in src.args]
        taint = Taint.CONCRETE
        for b in blocks:
            taint = taint_join(taint, b.taint)
        cells = []
        if src.kind == "cbind":
            rows = blocks[0].rows
            for r in range(1, rows + 1):
                for b in blocks:
                    cells.extend(b.at(r, c) for c in range(1, b.cols + 1))
            block = Block(rows, sum(b.cols for b in blocks), cells, taint)
        else:
            for b in blocks:
                cells.extend(b.cells)
            block = Block(sum(b.rows for b in blocks), blocks[0].cols,
                          cells, taint)
    else:  # pragma: no cover - exhaustive over DefSource
        raise TypeError(f"unknown source {src!r}")
    state.matrices[ins.id] = block
    _record(state.trace, "def", (block.rows, block.cols), block.taint)


def _exec_scalar(state: VmState, ins: ScalarInstr) -> None:
    op = ins.opcode
    if op == "indexvar":
        value = state.loop_indices[-1][1]
        out = (from_double(float(value), state.oc), Taint.CONCRETE)
        state.registers[ins.dest.id] = out
        _record(state.trace, op, (1, 1), Taint.CONCRETE)
        return
    if op == "set":
        out = _scalar_operand(state, ins.args[0])
        state.registers[ins.dest.id] = out
        _record(state.trace, op, (1, 1), out[1])
        return
    if op in ("sum", "prod", "min", "max", "any", "all", "range"):
        block = state.matrices[ins.args[0].id]
        values, taint = eval_summary(op, block, state.oc, state.trace)
        state.registers[ins.dest.id] = (values[0], taint)
        if op == "range":
            state.registers[ins.dest2.id] = (values[1], taint)
        _record(state.trace, op, (1, 1), taint)
        return
    args = [_scalar_operand(state, a) for a in ins.args]
    out = eval_elementwise(op, args, state.oc, state.trace)
    state.registers[ins.dest.id] = out
    _record(state.trace, op, (1, 1), out[1])


def _exec_edit(state: VmState, ins: EditInstr) -> None:
    vals = _loop_values(state)
    if ins.opcode == "update":
        dest = state.matrices[ins.dest.id]
        src = _value_operand(state, ins.src)
        block = eval_edit("update", dest, ins.rseq, ins.cseq, src, vals)
    else:
        src = state.matrices[ins.src.id]
        block = eval_edit(ins.opcode, src, ins.rseq, ins.cseq, None, vals)
    state.matrices[ins.dest.id] = block
    _record(state.trace, ins.opcode, (block.rows, block.cols), block.taint)


def _exec_select(state: VmState, ins: SelectInstr) -> None:
    args = [_value_operand(state, a)
            for a in (ins.cond, ins.on_true, ins.on_false)]
    out = eval_select(args[0], args[1], args[2], state.oc, state.trace)
    dest = ins.dest
    if isinstance(dest, Register):
        state.registers[dest.id] = out
        _record(state.trace, "select", (1, 1), out[1])
        return
    if isinstance(dest, Cell):
        block = state.matrices[dest.matrix_id]
        vals = _loop_values(state)
        r = (vals[dest.row.depth - 1] if isinstance(dest.row, LoopIndex)
             else dest.row)
        c = (vals[dest.col.depth - 1] if isinstance(dest.col, LoopIndex)
             else dest.col)
        if not (1 <= r <= block.rows and 1 <= c <= block.cols):
            raise EvalError(
                "IndexOutOfBounds",
                f"cell ({r},{c}) outside {block.rows}x{block.cols}")
        cells = list(block.cells)
        cells[(r - 1) * block.cols + (c - 1)] = out[0]
        taint = taint_join(block.taint, out[1])
        state.matrices[dest.matrix_id] = Block(block.rows, block.cols,
                                               cells, taint)
        _record(state.trace, "select", (1, 1), taint)
        return
    block = _as_block(out)
    state.matrices[dest.id] = block
    _record(state.trace, "select", (block.rows, block.cols), block.taint)


def _exec_block(state: VmState, instrs, cache: dict[str, Block]) -> None:
    for ins in instrs:
        if isinstance(ins, DefMatrix):
            _exec_def(state, ins, cache)
        elif isinstance(ins, ScalarInstr):
            _exec_scalar(state, ins)
        elif isinstance(ins, EditInstr):
            _exec_edit(state, ins)
        elif isinstance(ins, SelectInstr):
            _exec_select(state, ins)
        elif isinstance(ins, ForLoop):
            start = _bound_value(state, ins.start)
            stop = _bound_value(state, ins.stop)
            step = _bound_value(state, ins.step)
            iters = (stop - start) // step + 1
            _record(state.trace, "forloop", (iters, 1), Taint.CONCRETE)
            depth = len(state.loop_indices) + 1
            state.loop_indices.append((depth, start))
            for k in range(iters):
                state.loop_indices[-1] = (depth, start + k * step)
                _exec_block(state, ins.body, cache)
            state.loop_indices.pop()
        else:  # pragma: no cover - exhaustive over Instr
            raise TypeError(f"unknown instruction {ins!r}")


def static_trace_count(p: Program) -> int:
    """TraceRecord total as a function of program and static bounds."""

    def bound(b, env: list[int]) -> int:
        if isinstance(b, int):
            return b
        if isinstance(b, LoopIndex):
            return env[b.depth - 1]
        if isinstance(b, Literal):
            return int(b.value)
        raise TypeError(f"non-static bound {b!r}")

    def count(instrs, env: list[int]) -> int:
        total = 0
        for ins in instrs:
            if isinstance(ins, DefMatrix):
                total += 1
                if isinstance(ins.source, (OpSrc, RandSrc)):
                    total += 1
            elif isinstance(ins, ScalarInstr):
                total += 1 if ins.opcode in ("set", "indexvar") else 2
            elif isinstance(ins, SelectInstr):
                total += 2
            elif isinstance(ins, EditInstr):
                total += 1
            else:
                start = bound(ins.start, env)
                stop = bound(ins.stop, env)
                step = bound(ins.step, env)
                iters = (stop - start) // step + 1
                total += 1
                for k in range(iters):
                    total += count(ins.body, env + [start + k * step])
        return total

    return len(p.declared_datasets) + count(p.instrs, [])


def execute(tp: TaintedProgram, datasets: dict[str, bytes],
            seed: int = 0) -> VmState:
    """Replay the program; returns the full architectural state.

    Every declared dataset must be supplied. Loads happen once, up
    front, in sorted name order; a dataset definition binds a copy.
    """
    state = VmState(rng=random.Random(seed))
    program = tp.program
    cache: dict[str, Block] = {}
    for name, dims in sorted(program.declared_datasets.items()):
        if name not in datasets:
            raise ValueError(f"dataset {name!r} was not supplied")
        block = load_dataset(name, datasets[name], dims, state.oc)
        cache[name] = block
        _record(state.trace, "load", (block.rows, block.cols), block.taint)
    _exec_block(state, program.instrs, cache)
    want = static_trace_count(program)
    if len(state.trace) != want:
        raise AssertionError(
            f"trace length {len(state.trace)} != static count {want}")
    return state


def run(tp: TaintedProgram, datasets: dict[str, bytes],
        seed: int = 0) -> dict[int, Block]:
    """Replay and return the final matrices, keyed by id."""
    return execute(tp, datasets, seed).matrices

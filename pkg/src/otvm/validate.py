"""Static admission checks: taint propagation and shape analysis.

A transcript is admitted before any client data is opened. Validation
sees only the program and a map of dataset names to declared shapes, so
it is deterministic and leaks nothing about values.

Taint model: every matrix and register carries Concrete or Pseudonym.
Dataset-sourced matrices are Pseudonym roots; literal rows, ``empty``,
``rand``, and loop indices are Concrete. Results join their operand
taints (a pseudonym operand makes a pseudonym result). Three fences:

- a pseudonym may never reach an argument position that shapes control
  flow or layout: loop bounds (``LoopBoundTainted``) and the
  ``slice const`` / ``dim`` sources (``Rule3PseudonymToUnsafe``).
  Sequence and cell indices are integers or loop indices by syntax, so
  they are concrete by construction.
- nothing pseudonym-derived may be classified back to Concrete: a
  ``const`` definition or any write into a ``const`` matrix whose value
  joins to Pseudonym is ``Rule1Downgrade``.
- shapes are checked wherever they are static: elementwise dims,
  inner dims of ``%*%``, select operand dims, bind alignment, edit
  windows against matrix extents, row literals against the declared
  shape, and declared dataset dims against the provided map
  (``DimensionMismatch``; an absent name is ``DatasetUnknown``).

Anything structurally unexecutable is ``IllegalConstruct``: use before
definition is ``UndefinedOperand``; a second static definition site for
a matrix id, a non-static loop bound or slice extent, an empty or
zero-step loop range, a matrix operand in a scalar position, and loop
index ids that do not equal their nesting depth are all rejected.

Loop bodies are validated to a taint fixpoint: passes repeat until no
taint changes (joins are monotone, so this terminates), and the final
stable pass checks every rule against the settled taints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import (
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
    Taint,
    Unordered,
    taint_join,
)

RULE_KINDS = (
    "Rule1Downgrade",
    "Rule3PseudonymToUnsafe",
    "UndefinedOperand",
    "DimensionMismatch",
    "DatasetUnknown",
    "LoopBoundTainted",
    "IllegalConstruct",
)


@dataclass(eq=False)
class ValidationError(Exception):
    """First violated rule, at the flat textual instruction index."""

    index: int
    rule: str
    message: str

    def __str__(self):
        return f"instruction {self.index}: {self.rule}: {self.message}"


@dataclass
class TaintedProgram:
    """A validated program with its stable taint and shape summaries.

    matrix_taints/register_taints are the joins over every write, so a
    Pseudonym entry means the id held pseudonym-derived data at some
    point. matrix_dims carries the static shape of every matrix id.
    """

    program: Program
    matrix_taints: dict[int, Taint]
    register_taints: dict[int, Taint]
    matrix_dims: dict[int, tuple[int, int]]


# Inclusive value range of an integer quantity, plus whether it is exact
# (False once derived from a conservative superset).
_Range = tuple[int, int, bool]


@dataclass
class _Ctx:
    datasets: dict[str, tuple[int, int]]
    mats: dict[int, tuple[int, int]] = field(default_factory=dict)
    mat_taint: dict[int, Taint] = field(default_factory=dict)
    mat_const: dict[int, bool] = field(default_factory=dict)
    regs: dict[int, Taint] = field(default_factory=dict)
    def_sites: dict[int, int] = field(default_factory=dict)  # mat id -> id(node)
    loop_ranges: list[_Range] = field(default_factory=list)
    changed: bool = False

    def set_mat_taint(self, mid: int, taint: Taint) -> None:
        old = self.mat_taint.get(mid, Taint.CONCRETE)
        new = taint_join(old, taint) if mid in self.mat_taint else taint
        if self.mat_taint.get(mid) is not new:
            self.changed = True
        self.mat_taint[mid] = new

    def set_reg_taint(self, rid: int, taint: Taint) -> None:
        old = self.regs.get(rid)
        new = taint if old is None else taint_join(old, taint)
        if old is not new:
            self.changed = True
        self.regs[rid] = new


def _err(idx: int, rule: str, msg: str):
    raise ValidationError(idx, rule, msg)


def _ix_range(ctx: _Ctx, idx: int, ix) -> _Range:
    """Value range of a static index expression (int or loop index)."""
    if isinstance(ix, LoopIndex):
        if not 1 <= ix.depth <= len(ctx.loop_ranges):
            _err(idx, "UndefinedOperand",
                 f"loop index \\{ix.depth} is not bound here")
        return ctx.loop_ranges[ix.depth - 1]
    return (ix, ix, True)


def _check_pos(ctx: _Ctx, idx: int, ix, extent: int, what: str) -> None:
    """Reject a 1-based position that is statically outside [1, extent].

    Loop-index positions are checked only when the loop's value range is
    exact; a conservative range must not reject a valid program.
    """
    lo, hi, exact = _ix_range(ctx, idx, ix)
    if not exact:
        return
    if lo < 1 or hi > extent:
        _err(idx, "DimensionMismatch",
             f"{what} position spans {lo}..{hi}, outside 1..{extent}")


def _operand_taint(ctx: _Ctx, idx: int, op) -> Taint:
    if isinstance(op, Literal):
        return Taint.CONCRETE
    if isinstance(op, LoopIndex):
        if not 1 <= op.depth <= len(ctx.loop_ranges):
            _err(idx, "UndefinedOperand",
                 f"loop index \\{op.depth} is not bound here")
        return Taint.CONCRETE
    if isinstance(op, Register):
        if op.id not in ctx.regs:
            _err(idx, "UndefinedOperand", f"register %{op.id} is not defined")
        return ctx.regs[op.id]
    if isinstance(op, Matrix):
        if op.id not in ctx.mats:
            _err(idx, "UndefinedOperand", f"matrix ${op.id} is not defined")
        return ctx.mat_taint[op.id]
    if isinstance(op, Cell):
        if op.matrix_id not in ctx.mats:
            _err(idx, "UndefinedOperand",
                 f"matrix ${op.matrix_id} is not defined")
        rows, cols = ctx.mats[op.matrix_id]
        _check_pos(ctx, idx, op.row, rows, "cell row")
        _check_pos(ctx, idx, op.col, cols, "cell column")
        return ctx.mat_taint[op.matrix_id]
    raise TypeError(f"not an operand: {op!r}")  # pragma: no cover


def _operand_dims(ctx: _Ctx, op):
    """Matrix shape, or None for scalar (broadcast) operands."""
    return ctx.mats[op.id] if isinstance(op, Matrix) else None


def _seq_len(ctx: _Ctx, idx: int, seq) -> int:
    """Static element count of an index sequence.

    Ordered sequences with loop-index endpoints have no static length
    and would make shapes (and the step trace) data of the iteration;
    they are rejected. Singleton loop-index picks spell ``[\\k]``.
    """
    if isinstance(seq, Unordered):
        return len(seq.items)
    if isinstance(seq.start, LoopIndex) or isinstance(seq.stop, LoopIndex):
        _err(idx, "IllegalConstruct",
             "ordered sequence bounds must be integers so the extent is "
             "static; use [\\k] for a single loop-indexed position")
    if seq.step == 0:
        _err(idx, "IllegalConstruct", "sequence step may not be zero")
    n = (seq.stop - seq.start) // seq.step + 1
    if n < 1:
        _err(idx, "IllegalConstruct",
             f"sequence [{seq.start}:{seq.stop}:{seq.step}] is empty")
    return n


def _seq_positions_ok(ctx: _Ctx, idx: int, seq, extent: int, what: str) -> None:
    if isinstance(seq, Unordered):
        for ix in seq.items:
            _check_pos(ctx, idx, ix, extent, what)
        return
    last = seq.start + ((seq.stop - seq.start) // seq.step) * seq.step
    lo = min(seq.start, last)
    hi = max(seq.start, last)
    if lo < 1 or hi > extent:
        _err(idx, "DimensionMismatch",
             f"{what} positions span {lo}..{hi}, outside 1..{extent}")


def _define_matrix(ctx: _Ctx, idx: int, node, mid: int,
                   dims: tuple[int, int], taint: Taint, is_const: bool) -> None:
    site = ctx.def_sites.get(mid)
    if site is not None and site != id(node):
        _err(idx, "IllegalConstruct",
             f"matrix ${mid} already has a definition site")
    if site == id(node) and ctx.mats[mid] != dims:
        # Same loop-resident site disagreeing with itself can only mean
        # a non-static shape slipped through; refuse.
        _err(idx, "IllegalConstruct",
             f"matrix ${mid} changes shape across iterations")
    ctx.def_sites[mid] = id(node)
    ctx.mats[mid] = dims
    ctx.mat_const[mid] = is_const
    if is_const and taint is Taint.PSEUDONYM:
        _err(idx, "Rule1Downgrade",
             f"const matrix ${mid} holds pseudonym-derived data")
    ctx.set_mat_taint(mid, taint)


def _write_matrix(ctx: _Ctx, idx: int, mid: int, taint: Taint) -> None:
    if ctx.mat_const.get(mid) and taint is Taint.PSEUDONYM:
        _err(idx, "Rule1Downgrade",
             f"pseudonym write into const matrix ${mid}")
    ctx.set_mat_taint(mid, taint)


# ---------------------------------------------------------------------------
# Per-instruction checks
# ---------------------------------------------------------------------------


def _check_def(ctx: _Ctx, idx: int, ins: DefMatrix) -> None:
    src = ins.source
    dims = (ins.rows, ins.cols)
    if isinstance(src, RowsSrc):
        if len(src.rows) != ins.rows:
            _err(idx, "DimensionMismatch",
                 f"${ins.id} declares {ins.rows} rows but lists "
                 f"{len(src.rows)}")
        taint = Taint.CONCRETE
        for row in src.rows:
            if len(row) != ins.cols:
                _err(idx, "DimensionMismatch",
                     f"${ins.id} declares {ins.cols} columns but a row "
                     f"lists {len(row)}")
            for entry in row:
                taint = taint_join(taint, _operand_taint(ctx, idx, entry))
    elif isinstance(src, DatasetSrc):
        if src.name not in ctx.datasets:
            _err(idx, "DatasetUnknown",
                 f"dataset {src.name!r} is not in the declaration map")
        if ctx.datasets[src.name] != dims:
            dr, dc = ctx.datasets[src.name]
            _err(idx, "DimensionMismatch",
                 f"dataset {src.name!r} is declared {dr}x{dc} but "
                 f"${ins.id} is {ins.rows}x{ins.cols}")
        taint = Taint.PSEUDONYM
    elif isinstance(src, (EmptySrc, RandSrc)):
        taint = Taint.CONCRETE
    elif isinstance(src, OpSrc):
        taint = Taint.CONCRETE
        mdims = None
        for arg in src.args:
            taint = taint_join(taint, _operand_taint(ctx, idx, arg))
        if src.opcode == MATMUL_OP:
            a, b = src.args
            if not (isinstance(a, Matrix) and isinstance(b, Matrix)):
                _err(idx, "IllegalConstruct",
                     "%*% needs two matrix operands")
            (ar, ac), (br, bc) = ctx.mats[a.id], ctx.mats[b.id]
            if ac != br:
                _err(idx, "DimensionMismatch",
                     f"%*% inner dimensions {ac} and {br} differ")
            mdims = (ar, bc)
        else:
            for arg in src.args:
                d = _operand_dims(ctx, arg)
                if d is None:
                    continue
                if mdims is not None and d != mdims:
                    _err(idx, "DimensionMismatch",
                         f"elementwise {src.opcode} over {mdims[0]}x"
                         f"{mdims[1]} and {d[0]}x{d[1]}")
                mdims = d
        if mdims is None:
            mdims = (1, 1)
        if mdims != dims:
            _err(idx, "DimensionMismatch",
                 f"${ins.id} declares {ins.rows}x{ins.cols} but its source "
                 f"yields {mdims[0]}x{mdims[1]}")
    elif isinstance(src, BindSrc):
        taint = Taint.CONCRETE
        shapes = []
        for arg in src.args:
            taint = taint_join(taint, _operand_taint(ctx, idx, arg))
            shapes.append(_operand_dims(ctx, arg) or (1, 1))
        if src.kind == "cbind":
            rows0 = shapes[0][0]
            if any(r != rows0 for r, _c in shapes):
                _err(idx, "DimensionMismatch",
                     "cbind operands disagree on row count")
            mdims = (rows0, sum(c for _r, c in shapes))
        else:
            cols0 = shapes[0][1]
            if any(c != cols0 for _r, c in shapes):
                _err(idx, "DimensionMismatch",
                     "rbind operands disagree on column count")
            mdims = (sum(r for r, _c in shapes), cols0)
        if mdims != dims:
            _err(idx, "DimensionMismatch",
                 f"${ins.id} declares {ins.rows}x{ins.cols} but the bind "
                 f"yields {mdims[0]}x{mdims[1]}")
    else:  # pragma: no cover - exhaustive over DefSource
        raise TypeError(f"unknown source {src!r}")
    _define_matrix(ctx, idx, ins, ins.id, dims, taint, ins.is_const)


def _check_scalar(ctx: _Ctx, idx: int, ins: ScalarInstr) -> None:
    op = ins.opcode
    if op == "indexvar":
        if not ctx.loop_ranges:
            _err(idx, "UndefinedOperand",
                 "indexvar outside any loop has no index to read")
        ctx.set_reg_taint(ins.dest.id, Taint.CONCRETE)
        return
    if op == "set":
        (arg,) = ins.args
        if isinstance(arg, Matrix):
            _err(idx, "IllegalConstruct",
                 "set copies a scalar; a matrix operand has no scalar value")
        ctx.set_reg_taint(ins.dest.id, _operand_taint(ctx, idx, arg))
        return
    if op in SUMMARY_OPS:
        (arg,) = ins.args
        if not isinstance(arg, Matrix):
            _err(idx, "IllegalConstruct",
                 f"{op} folds a matrix; got a scalar operand")
        taint = _operand_taint(ctx, idx, arg)
        ctx.set_reg_taint(ins.dest.id, taint)
        if ins.dest2 is not None:
            ctx.set_reg_taint(ins.dest2.id, taint)
        return
    taint = Taint.CONCRETE
    for arg in ins.args:
        if isinstance(arg, Matrix):
            _err(idx, "IllegalConstruct",
                 f"matrix operand in scalar {op}; use a definition body")
        taint = taint_join(taint, _operand_taint(ctx, idx, arg))
    ctx.set_reg_taint(ins.dest.id, taint)


def _check_edit(ctx: _Ctx, idx: int, ins: EditInstr) -> None:
    rlen = _seq_len(ctx, idx, ins.rseq)
    clen = _seq_len(ctx, idx, ins.cseq)
    if ins.opcode == "update":
        if ins.dest.id not in ctx.mats:
            _err(idx, "UndefinedOperand",
                 f"update target ${ins.dest.id} is not defined")
        rows, cols = ctx.mats[ins.dest.id]
        _seq_positions_ok(ctx, idx, ins.rseq, rows, "row")
        _seq_positions_ok(ctx, idx, ins.cseq, cols, "column")
        taint = _operand_taint(ctx, idx, ins.src)
        sdims = _operand_dims(ctx, ins.src)
        if sdims is not None and sdims != (rlen, clen):
            _err(idx, "DimensionMismatch",
                 f"update window is {rlen}x{clen} but source is "
                 f"{sdims[0]}x{sdims[1]}")
        _write_matrix(ctx, idx, ins.dest.id, taint)
        return

    # slice / slice const / dim define a fresh destination from a matrix.
    if not isinstance(ins.src, Matrix):
        _err(idx, "IllegalConstruct",
             f"{ins.opcode} reads a matrix; got a scalar operand")
    taint = _operand_taint(ctx, idx, ins.src)
    srows, scols = ctx.mats[ins.src.id]
    if ins.opcode == "dim":
        if taint is Taint.PSEUDONYM:
            _err(idx, "Rule3PseudonymToUnsafe",
                 "dim reshapes layout and may not take a pseudonym")
        for seq, what in ((ins.rseq, "row"), (ins.cseq, "column")):
            if not (isinstance(seq, Ordered) and seq.start == 1
                    and seq.step == 1):
                _err(idx, "IllegalConstruct",
                     f"dim {what} extent must be [1:n:1]")
        if rlen * clen != srows * scols:
            _err(idx, "DimensionMismatch",
                 f"dim to {rlen}x{clen} does not conserve "
                 f"{srows}x{scols} elements")
    else:
        _seq_positions_ok(ctx, idx, ins.rseq, srows, "row")
        _seq_positions_ok(ctx, idx, ins.cseq, scols, "column")
        if ins.opcode == "slice_const":
            if taint is Taint.PSEUDONYM:
                _err(idx, "Rule3PseudonymToUnsafe",
                     "slice const asserts concrete data and may not take "
                     "a pseudonym")
            taint = Taint.CONCRETE
    _define_matrix(ctx, idx, ins, ins.dest.id, (rlen, clen), taint,
                   is_const=(ins.opcode == "slice_const"))


def _check_select(ctx: _Ctx, idx: int, ins: SelectInstr) -> None:
    taint = Taint.CONCRETE
    mdims = None
    for arg in (ins.cond, ins.on_true, ins.on_false):
        taint = taint_join(taint, _operand_taint(ctx, idx, arg))
        d = _operand_dims(ctx, arg)
        if d is not None:
            if mdims is not None and d != mdims:
                _err(idx, "DimensionMismatch",
                     f"select operands are {mdims[0]}x{mdims[1]} and "
                     f"{d[0]}x{d[1]}")
            mdims = d
    dest = ins.dest
    if isinstance(dest, Register):
        if mdims is not None:
            _err(idx, "IllegalConstruct",
                 "select into a register needs scalar operands")
        ctx.set_reg_taint(dest.id, taint)
        return
    if isinstance(dest, Cell):
        if mdims is not None:
            _err(idx, "IllegalConstruct",
                 "select into a cell needs scalar operands")
        if dest.matrix_id not in ctx.mats:
            _err(idx, "UndefinedOperand",
                 f"matrix ${dest.matrix_id} is not defined")
        rows, cols = ctx.mats[dest.matrix_id]
        _check_pos(ctx, idx, dest.row, rows, "cell row")
        _check_pos(ctx, idx, dest.col, cols, "cell column")
        _write_matrix(ctx, idx, dest.matrix_id, taint)
        return
    # Matrix destination: a full overwrite; fresh ids become definitions.
    dims = mdims or (1, 1)
    if dest.id in ctx.mats and ctx.def_sites.get(dest.id) != id(ins):
        if ctx.mats[dest.id] != dims:
            _err(idx, "DimensionMismatch",
                 f"select writes {dims[0]}x{dims[1]} into ${dest.id} of "
                 f"{ctx.mats[dest.id][0]}x{ctx.mats[dest.id][1]}")
        _write_matrix(ctx, idx, dest.id, taint)
    else:
        _define_matrix(ctx, idx, ins, dest.id, dims, taint, is_const=False)


def _static_bound(ctx: _Ctx, idx: int, b, what: str) -> _Range:
    if isinstance(b, bool):  # bool is an int subtype; refuse quietly
        _err(idx, "IllegalConstruct", f"loop {what} must be an integer")
    if isinstance(b, int):
        return (b, b, True)
    if isinstance(b, LoopIndex):
        return _ix_range(ctx, idx, b)
    if isinstance(b, Literal):
        v = b.value
        if v != v or v != int(v):
            _err(idx, "IllegalConstruct",
                 f"loop {what} literal {v!r} is not an integer")
        return (int(v), int(v), True)
    taint = _operand_taint(ctx, idx, b)
    if taint is Taint.PSEUDONYM:
        _err(idx, "LoopBoundTainted",
             f"loop {what} is pseudonym-derived; iteration counts must "
             f"be public")
    _err(idx, "IllegalConstruct",
         f"loop {what} is not static; use an integer or an enclosing "
         f"loop index")


def _min_iterations(frm: _Range, to: _Range, step: _Range) -> int:
    flo, fhi, _ = frm
    tlo, thi, _ = to
    slo, shi, _ = step
    if slo > 0:
        return (tlo - fhi) // shi + 1
    return (thi - flo) // slo + 1


def _check_loop(ctx: _Ctx, idx: int, ins: ForLoop) -> int:
    depth = len(ctx.loop_ranges)
    if ins.index_id != depth + 1:
        _err(idx, "IllegalConstruct",
             f"loop index id {ins.index_id} at nesting depth {depth + 1}; "
             f"loops are named by depth")
    frm = _static_bound(ctx, idx, ins.start, "start")
    to = _static_bound(ctx, idx, ins.stop, "stop")
    step = _static_bound(ctx, idx, ins.step, "step")
    if step[0] <= 0 <= step[1]:
        _err(idx, "IllegalConstruct", "loop step may be zero")
    if _min_iterations(frm, to, step) < 1:
        _err(idx, "IllegalConstruct",
             "loop range is empty for some reachable bounds")

    exact = frm[2] and to[2] and step[2]
    if exact:
        n = (to[0] - frm[0]) // step[0] + 1
        last = frm[0] + (n - 1) * step[0]
        rng = (min(frm[0], last), max(frm[0], last), True)
    else:
        rng = (min(frm[0], to[0]), max(frm[1], to[1]), False)
    ctx.loop_ranges.append(rng)

    # Taint fixpoint over the body. Joins only grow, so any error raised
    # mid-fixpoint is also an error at the fixpoint; repeat until stable
    # and run one final pass so joins-at-stability are also checked.
    while True:
        ctx.changed = False
        end = _check_block(ctx, ins.body, idx + 1)
        if not ctx.changed:
            break
    ctx.loop_ranges.pop()
    return end


def _check_block(ctx: _Ctx, instrs, idx: int) -> int:
    """Validate a straight-line block; returns the next flat index."""
    for ins in instrs:
        if isinstance(ins, ForLoop):
            idx = _check_loop(ctx, idx, ins)
            continue
        if isinstance(ins, DefMatrix):
            _check_def(ctx, idx, ins)
        elif isinstance(ins, ScalarInstr):
            _check_scalar(ctx, idx, ins)
        elif isinstance(ins, EditInstr):
            _check_edit(ctx, idx, ins)
        elif isinstance(ins, SelectInstr):
            _check_select(ctx, idx, ins)
        else:  # pragma: no cover - exhaustive over Instr
            raise TypeError(f"unknown instruction {ins!r}")
        idx += 1
    return idx


def validate(p: Program,
             datasets: dict[str, tuple[int, int]]) -> TaintedProgram:
    """Admit a program against declared dataset shapes.

    Raises ValidationError at the first violation, indexed by flat
    textual instruction position (loop headers count as one).
    """
    ctx = _Ctx(datasets=dict(datasets))
    _check_block(ctx, p.instrs, 0)
    return TaintedProgram(
        program=p,
        matrix_taints=dict(ctx.mat_taint),
        register_taints=dict(ctx.regs),
        matrix_dims=dict(ctx.mats),
    )

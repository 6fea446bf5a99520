"""Tracing core: contexts, pseudonym values, and operator capture.

A TraceContext records transcript text while ordinary-looking host code
runs on pseudonym stand-ins. Pseudonyms carry shape and taint but no
data cells, so every overloaded operation appends an instruction and
returns a fresh pseudonym; nothing is ever computed from real values.
The emitted text is the contract with the replaying VM and is checked
by its `check` command, never interpreted here.

Conventions that keep emission deterministic and replayable:
  * matrix ids ($k) and register ids (%k) are minted from per-context
    counters in trace order;
  * loop ids are nesting depths, so the index operand of the loop at
    depth d is written \\d;
  * all indices and loop bounds must be host integers or loop indices
    (concrete by construction); pseudonym-dependent control flow and
    indexing are rejected at trace time;
  * host `if`/`while`/`for` cannot see pseudonym truth values: bool()
    and iter() on a pseudonym raise, pointing at select_if / forloop.

One TraceContext per thread; `with TraceContext() as ctx:` installs it
as the thread's current context for the module-level helpers.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence, Union

Number = Union[bool, int, float]

CONCRETE = "Concrete"
PSEUDONYM = "Pseudonym"

# Opcode families mirrored from the transcript grammar (External
# Interface); the emitter never invents opcodes outside these.
ARITH_OPS = ("+", "-", "*", "/", "%%", "^")
COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&", "|", "!")
IS_OPS = ("NA?", "NAN?", "INF?")
MATH1_OPS = ("abs", "sign", "sqrt", "floor", "ceiling",
             "exp", "log", "sin", "cos", "tan")
SUMMARY_OPS = ("sum", "prod", "min", "max", "any", "all")

_UNARY = set(MATH1_OPS) | set(IS_OPS) | {"!"}


class TraceError(Exception):
    """A program cannot be traced: bad shapes, tainted control flow,
    duplicate dataset names, or values with no transcript form."""


_STATE = threading.local()


def _stack() -> list:
    if not hasattr(_STATE, "stack"):
        _STATE.stack = []
    return _STATE.stack


def current_context() -> "TraceContext":
    stack = _stack()
    if not stack:
        raise TraceError("no active TraceContext; use 'with TraceContext()'"
                         " or pass pseudonyms created from one")
    return stack[-1]


def _join(*taints: str) -> str:
    return PSEUDONYM if PSEUDONYM in taints else CONCRETE


def _lit(value: Number) -> str:
    """Literal operand text. Only finite doubles and NaN have a form."""
    if isinstance(value, bool):
        value = 1.0 if value else 0.0
    value = float(value)
    if math.isnan(value):
        return "#NaN"
    if math.isinf(value):
        raise TraceError("infinity has no literal form in a transcript")
    return f"#{value!r}"


class PseudonymScalar:
    """A scalar stand-in: an operand string plus taint, bound to the
    context that minted it. Arithmetic, comparison, and logic operators
    emit scalar instructions and return fresh register pseudonyms."""

    __slots__ = ("ctx", "text", "taint")

    def __init__(self, ctx: "TraceContext", text: str, taint: str):
        self.ctx = ctx
        self.text = text
        self.taint = taint

    def __repr__(self):
        return f"PseudonymScalar({self.text}, {self.taint})"

    def __bool__(self):
        raise TraceError("a pseudonym has no truth value; rewrite the "
                         "branch with select_if(cond, then, else)")

    def __iter__(self):
        raise TraceError("a pseudonym is not iterable; use forloop for "
                         "repetition")

    __hash__ = object.__hash__

    # -- operator capture ---------------------------------------------------

    def _bin(self, op: str, other, reflected: bool = False):
        try:
            a, b = (other, self) if reflected else (self, other)
            return apply_op(op, (a, b), ctx=self.ctx)
        except TypeError:
            return NotImplemented

    def __add__(self, o):
        return self._bin("+", o)

    def __radd__(self, o):
        return self._bin("+", o, True)

    def __sub__(self, o):
        return self._bin("-", o)

    def __rsub__(self, o):
        return self._bin("-", o, True)

    def __mul__(self, o):
        return self._bin("*", o)

    def __rmul__(self, o):
        return self._bin("*", o, True)

    def __truediv__(self, o):
        return self._bin("/", o)

    def __rtruediv__(self, o):
        return self._bin("/", o, True)

    def __mod__(self, o):
        return self._bin("%%", o)

    def __rmod__(self, o):
        return self._bin("%%", o, True)

    def __pow__(self, o):
        return self._bin("^", o)

    def __rpow__(self, o):
        return self._bin("^", o, True)

    def __eq__(self, o):
        return self._bin("==", o)

    def __ne__(self, o):
        return self._bin("!=", o)

    def __lt__(self, o):
        return self._bin("<", o)

    def __le__(self, o):
        return self._bin("<=", o)

    def __gt__(self, o):
        return self._bin(">", o)

    def __ge__(self, o):
        return self._bin(">=", o)

    def __and__(self, o):
        return self._bin("&", o)

    def __rand__(self, o):
        return self._bin("&", o, True)

    def __or__(self, o):
        return self._bin("|", o)

    def __ror__(self, o):
        return self._bin("|", o, True)

    def __invert__(self):
        return apply_op("!", (self,), ctx=self.ctx)

    def __neg__(self):
        return apply_op("-", (0.0, self), ctx=self.ctx)

    def __pos__(self):
        return self

    def __abs__(self):
        return apply_op("abs", (self,), ctx=self.ctx)


class LoopIndex(PseudonymScalar):
    """The induction variable of an enclosing forloop: a concrete
    operand (\\d) that is also legal in index and sequence positions."""

    __slots__ = ("depth",)

    def __init__(self, ctx: "TraceContext", depth: int):
        super().__init__(ctx, f"\\{depth}", CONCRETE)
        self.depth = depth


def _scalar_operand(ctx: "TraceContext", v) -> tuple:
    """(operand text, taint) for a scalar position."""
    if isinstance(v, PseudonymScalar):
        if v.ctx is not ctx:
            raise TraceError("pseudonym belongs to a different TraceContext")
        return v.text, v.taint
    if isinstance(v, (bool, int, float)):
        return _lit(v), CONCRETE
    if isinstance(v, PseudonymMatrix):
        raise TraceError("expected a scalar operand, got a matrix")
    raise TypeError(f"cannot trace operand of type {type(v).__name__}")


def _operand(ctx: "TraceContext", v) -> tuple:
    """(operand text, taint, dims-or-None) for any value position."""
    if isinstance(v, PseudonymMatrix):
        if v.ctx is not ctx:
            raise TraceError("pseudonym belongs to a different TraceContext")
        return f"${v.mid}", v.taint, (v.rows, v.cols)
    text, taint = _scalar_operand(ctx, v)
    return text, taint, None


def _find_context(args, ctx=None) -> "TraceContext":
    if ctx is not None:
        return ctx
    for a in args:
        if isinstance(a, (PseudonymScalar, PseudonymMatrix)):
            return a.ctx
    return current_context()


def _common_dims(dims: Sequence) -> tuple | None:
    """Broadcast rule: scalars stretch to any shape, matrix shapes must
    match exactly. Returns the matrix shape or None when all scalar."""
    shape = None
    for d in dims:
        if d is None:
            continue
        if shape is None:
            shape = d
        elif d != shape:
            raise TraceError(f"shape mismatch: {shape[0]}x{shape[1]} "
                             f"vs {d[0]}x{d[1]}")
    return shape


def apply_op(op: str, args: Sequence, ctx: "TraceContext" = None):
    """Emit one elementwise instruction and return its result pseudonym.

    Scalar-only operands produce a register; any matrix operand makes
    the result a matrix of the common shape. This single entry point
    backs every overloaded operator and math helper.
    """
    arity = 1 if op in _UNARY else 2
    if len(args) != arity:
        raise TraceError(f"{op} takes {arity} operand(s), got {len(args)}")
    ctx = _find_context(args, ctx)
    parts = [_operand(ctx, a) for a in args]
    taint = _join(*(p[1] for p in parts))
    shape = _common_dims([p[2] for p in parts])
    texts = " ".join(p[0] for p in parts)
    if shape is None:
        dest = ctx._new_register()
        ctx._line(f"{op} {dest} {texts}")
        return PseudonymScalar(ctx, dest, taint)
    mid = ctx._def_block(shape[0], shape[1], [f"{op} {texts}"])
    return PseudonymMatrix(ctx, mid, shape[0], shape[1], taint)


# -- sequence (index window) encoding ----------------------------------------


def _check_pos(pos: int, bound: int, what: str) -> None:
    if not 1 <= pos <= bound:
        raise TraceError(f"{what} index {pos} outside 1..{bound}")


def _seq(axis_len: int, key, what: str) -> tuple:
    """Encode one index expression as (seq text, element count).

    Accepted forms: int (1-based), LoopIndex, slice with R meaning
    (start and stop inclusive, default step 1), or a list/tuple of
    ints. Anything pseudonym-valued is rejected: index positions feed
    unsafe operations and must be concrete.
    """
    if isinstance(key, bool):
        raise TraceError(f"{what} index must be an integer, got a bool")
    if isinstance(key, int):
        _check_pos(key, axis_len, what)
        return f"[{key}]", 1
    if isinstance(key, LoopIndex):
        # runtime range depends on the loop; the VM bounds-checks it
        return f"[{key.text}]", 1
    if isinstance(key, PseudonymScalar):
        raise TraceError(f"{what} index cannot depend on a pseudonym")
    if isinstance(key, slice):
        start = 1 if key.start is None else key.start
        stop = axis_len if key.stop is None else key.stop
        step = 1 if key.step is None else key.step
        for v in (start, stop, step):
            if not isinstance(v, int) or isinstance(v, bool):
                raise TraceError(f"{what} slice parts must be integers")
        if step == 0 or (stop - start) * step < 0:
            raise TraceError(f"{what} slice {start}:{stop}:{step} is empty")
        _check_pos(start, axis_len, what)
        _check_pos(stop, axis_len, what)
        return f"[{start}:{stop}:{step}]", (stop - start) // step + 1
    if isinstance(key, (list, tuple)):
        if not key:
            raise TraceError(f"{what} index list is empty")
        for v in key:
            if not isinstance(v, int) or isinstance(v, bool):
                raise TraceError(f"{what} index list must hold integers")
            _check_pos(v, axis_len, what)
        return "[" + ",".join(str(v) for v in key) + "]", len(key)
    raise TraceError(f"unsupported {what} index {key!r}")


class PseudonymMatrix:
    """A matrix stand-in: id, shape, and taint only ("no data cells").

    Indexing with a (row, col) pair of ints/loop indices reads a cell
    pseudonym; richer keys emit `slice`. Item assignment emits
    `update`. Elementwise operators broadcast against scalars; `@` is
    the matrix product.
    """

    __slots__ = ("ctx", "mid", "rows", "cols", "taint")

    def __init__(self, ctx: "TraceContext", mid: int, rows: int, cols: int,
                 taint: str):
        self.ctx = ctx
        self.mid = mid
        self.rows = rows
        self.cols = cols
        self.taint = taint

    def __repr__(self):
        return (f"PseudonymMatrix(${self.mid}, {self.rows}x{self.cols}, "
                f"{self.taint})")

    def __bool__(self):
        raise TraceError("a pseudonym has no truth value; rewrite the "
                         "branch with select_if(cond, then, else)")

    def __iter__(self):
        raise TraceError("a pseudonym is not iterable; use forloop for "
                         "repetition")

    __hash__ = object.__hash__

    # -- indexing -----------------------------------------------------------

    def _pair(self, key) -> tuple:
        if not isinstance(key, tuple) or len(key) != 2:
            raise TraceError("matrix indexing needs [row, col]")
        return key

    def __getitem__(self, key):
        r, c = self._pair(key)
        if isinstance(r, (int, LoopIndex)) and not isinstance(r, bool) \
                and isinstance(c, (int, LoopIndex)) and not isinstance(c, bool):
            rt = r.text if isinstance(r, LoopIndex) else str(r)
            ct = c.text if isinstance(c, LoopIndex) else str(c)
            if isinstance(r, int):
                _check_pos(r, self.rows, "row")
            if isinstance(c, int):
                _check_pos(c, self.cols, "column")
            return PseudonymScalar(self.ctx, f"${self.mid}@({rt},{ct})",
                                   self.taint)
        rseq, nrows = _seq(self.rows, r, "row")
        cseq, ncols = _seq(self.cols, c, "column")
        mid = self.ctx._new_matrix()
        self.ctx._line(f"slice ${mid} {rseq} {cseq} ${self.mid}")
        return PseudonymMatrix(self.ctx, mid, nrows, ncols, self.taint)

    def __setitem__(self, key, value):
        r, c = self._pair(key)
        rseq, nrows = _seq(self.rows, r, "row")
        cseq, ncols = _seq(self.cols, c, "column")
        text, taint, dims = _operand(self.ctx, value)
        if dims is not None and dims != (nrows, ncols):
            raise TraceError(f"update window is {nrows}x{ncols} but source "
                             f"is {dims[0]}x{dims[1]}")
        self.ctx._line(f"update ${self.mid} {rseq} {cseq} {text}")
        self.taint = _join(self.taint, taint)

    # -- operators ----------------------------------------------------------

    def _bin(self, op: str, other, reflected: bool = False):
        try:
            a, b = (other, self) if reflected else (self, other)
            return apply_op(op, (a, b), ctx=self.ctx)
        except TypeError:
            return NotImplemented

    __add__ = PseudonymScalar.__add__
    __radd__ = PseudonymScalar.__radd__
    __sub__ = PseudonymScalar.__sub__
    __rsub__ = PseudonymScalar.__rsub__
    __mul__ = PseudonymScalar.__mul__
    __rmul__ = PseudonymScalar.__rmul__
    __truediv__ = PseudonymScalar.__truediv__
    __rtruediv__ = PseudonymScalar.__rtruediv__
    __mod__ = PseudonymScalar.__mod__
    __rmod__ = PseudonymScalar.__rmod__
    __pow__ = PseudonymScalar.__pow__
    __rpow__ = PseudonymScalar.__rpow__
    __eq__ = PseudonymScalar.__eq__
    __ne__ = PseudonymScalar.__ne__
    __lt__ = PseudonymScalar.__lt__
    __le__ = PseudonymScalar.__le__
    __gt__ = PseudonymScalar.__gt__
    __ge__ = PseudonymScalar.__ge__
    __and__ = PseudonymScalar.__and__
    __rand__ = PseudonymScalar.__rand__
    __or__ = PseudonymScalar.__or__
    __ror__ = PseudonymScalar.__ror__

    def __invert__(self):
        return apply_op("!", (self,), ctx=self.ctx)

    def __neg__(self):
        return apply_op("-", (0.0, self), ctx=self.ctx)

    def __pos__(self):
        return self

    def __abs__(self):
        return apply_op("abs", (self,), ctx=self.ctx)

    def __matmul__(self, other):
        if not isinstance(other, PseudonymMatrix):
            raise TraceError("matrix product needs a matrix on both sides")
        if other.ctx is not self.ctx:
            raise TraceError("pseudonym belongs to a different TraceContext")
        if self.cols != other.rows:
            raise TraceError(f"matrix product shapes {self.rows}x{self.cols}"
                             f" and {other.rows}x{other.cols} do not chain")
        mid = self.ctx._def_block(self.rows, other.cols,
                                  [f"%*% ${self.mid} ${other.mid}"])
        return PseudonymMatrix(self.ctx, mid, self.rows, other.cols,
                               _join(self.taint, other.taint))


class TraceContext:
    """Accumulates transcript lines and mints ids in program order."""

    def __init__(self):
        self._preamble: list[str] = []  # constant tables, hoisted to top
        self._lines: list[str] = []
        self._next_matrix = 1
        self._next_register = 1
        self._loop_depth = 0
        self._datasets: dict[str, PseudonymMatrix] = {}
        self._logfact: tuple | None = None  # (matrix id, domain)

    # -- plumbing -----------------------------------------------------------

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _stack().pop()
        assert popped is self, "unbalanced TraceContext nesting"
        return False

    def _line(self, text: str) -> None:
        self._lines.append(text)

    def _new_matrix(self) -> int:
        mid = self._next_matrix
        self._next_matrix += 1
        return mid

    def _new_register(self) -> str:
        rid = self._next_register
        self._next_register += 1
        return f"%{rid}"

    def _def_block(self, rows: int, cols: int, body: list,
                   const: bool = False, preamble: bool = False) -> int:
        if rows < 1 or cols < 1:
            raise TraceError(f"matrix shape {rows}x{cols} must be positive")
        mid = self._new_matrix()
        head = "def const" if const else "def"
        out = [f"{head} ${mid} [1:{rows}] [1:{cols}]"]
        out += [f"\t{b}" for b in body]
        out.append(f"end {mid}")
        (self._preamble if preamble else self._lines).extend(out)
        return mid

    def _empty(self, rows: int, cols: int) -> PseudonymMatrix:
        mid = self._def_block(rows, cols, ["empty"])
        return PseudonymMatrix(self, mid, rows, cols, CONCRETE)

    # -- public surface -----------------------------------------------------

    def declare_dataset(self, name: str, rows: int, cols: int
                        ) -> PseudonymMatrix:
        """Bind a named client dataset of known shape and return its
        pseudonym. The tracer never reads the data itself."""
        if not isinstance(name, str) or not name.isalnum() \
                or not name.isascii():
            raise TraceError(f"dataset name {name!r} must be ASCII "
                             "alphanumeric")
        if name in self._datasets:
            raise TraceError(f"dataset {name!r} already declared")
        if not isinstance(rows, int) or not isinstance(cols, int) \
                or isinstance(rows, bool) or isinstance(cols, bool):
            raise TraceError("dataset shape must be integers")
        mid = self._def_block(rows, cols, [f"dataset {name}"])
        pm = PseudonymMatrix(self, mid, rows, cols, PSEUDONYM)
        self._datasets[name] = pm
        return pm

    def forloop(self, from_: int, to: int, step: int,
                body: Callable) -> None:
        """Concrete-bound counted loop. The body runs exactly once at
        trace time with a LoopIndex argument, so the transcript stays
        O(body) regardless of the iteration count."""
        for label, v in (("from", from_), ("to", to), ("step", step)):
            if isinstance(v, PseudonymScalar):
                if v.taint == PSEUDONYM:
                    raise TraceError(f"forloop {label} bound depends on a "
                                     "pseudonym; oblivious programs cannot "
                                     "loop on sensitive values")
                raise TraceError(f"forloop {label} bound must be a host "
                                 "integer, not a traced scalar")
            if not isinstance(v, int) or isinstance(v, bool):
                raise TraceError(f"forloop {label} bound must be an integer")
        if step == 0:
            raise TraceError("forloop step cannot be 0")
        if (to - from_) * step < 0:
            raise TraceError(f"forloop {from_}..{to} step {step} would run "
                             "zero times; the replay loop construct cannot "
                             "express that")
        self._loop_depth += 1
        depth = self._loop_depth
        self._line(f"forloop {depth} {from_} {to} {step}")
        try:
            body(LoopIndex(self, depth))
        finally:
            self._line(f"endloop {depth}")
            self._loop_depth -= 1

    def select_if(self, cond, then_val, else_val):
        """Branch-free conditional: both arms are already traced by the
        time they arrive here, and a single `select` picks per element.
        Emission is uniform even for a concrete condition."""
        ctx_args = (cond, then_val, else_val)
        parts = [_operand(self, a) for a in ctx_args]
        taint = _join(*(p[1] for p in parts))
        shape = _common_dims([p[2] for p in parts])
        texts = " ".join(p[0] for p in parts)
        if shape is None:
            dest = self._new_register()
            self._line(f"select {dest} {texts}")
            return PseudonymScalar(self, dest, taint)
        mid = self._new_matrix()
        self._line(f"select ${mid} {texts}")
        return PseudonymMatrix(self, mid, shape[0], shape[1], taint)

    def emit(self) -> str:
        """Serialize the transcript accumulated so far."""
        lines = self._preamble + self._lines
        return "\n".join(lines) + ("\n" if lines else "")


# -- module-level conveniences bound to the current thread context -----------


def declare_dataset(name: str, rows: int, cols: int) -> PseudonymMatrix:
    return current_context().declare_dataset(name, rows, cols)


def forloop(from_: int, to: int, step: int, body: Callable) -> None:
    return current_context().forloop(from_, to, step, body)


def select_if(cond, then_val, else_val):
    ctx = _find_context((cond, then_val, else_val))
    return ctx.select_if(cond, then_val, else_val)


def emit(ctx: TraceContext | None = None) -> str:
    return (ctx or current_context()).emit()

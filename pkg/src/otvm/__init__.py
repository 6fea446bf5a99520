"""Two-phase data-oblivious execution.

A transcript is a straight-line program recorded against pseudonymous
data; this package parses, validates, and replays transcripts against
real data with a constant-operation-count fixed-point virtual machine.
"""

from .ast import (
    ARITH_OPS,
    COMPARE_OPS,
    IS_OPS,
    LOGIC_BIN_OPS,
    LOGIC_NOT,
    MATH1_OPS,
    MATMUL_OP,
    SUMMARY_OPS,
    Cell,
    DatasetSrc,
    DefMatrix,
    EditInstr,
    EmptySrc,
    ForLoop,
    Literal,
    LoopIndex,
    Matrix,
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
from .dataio import DataError, RawDataset, decode, encode
from .evaluator import (
    Block,
    EvalError,
    TraceRecord,
    VmState,
    compare_traces,
    eval_edit,
    eval_select,
    eval_summary,
    execute,
    load_dataset,
    matmul,
    oblivious_lookup,
    run,
    static_trace_count,
)
from .fixedpoint import (
    FixedScalar,
    OpCount,
    arith,
    compare,
    ct_select,
    from_double,
    is_class,
    logic,
    math1,
    to_double,
)
from .parser import ParseError, parse, print_program
from .validate import RULE_KINDS, TaintedProgram, ValidationError, validate

__all__ = [
    "ARITH_OPS", "COMPARE_OPS", "IS_OPS", "LOGIC_BIN_OPS", "LOGIC_NOT",
    "MATH1_OPS", "MATMUL_OP", "SUMMARY_OPS",
    "Cell", "DatasetSrc", "DefMatrix", "EditInstr", "EmptySrc", "ForLoop",
    "Literal", "LoopIndex", "Matrix", "Ordered", "Program", "RandSrc",
    "Register", "RowsSrc", "ScalarInstr", "SelectInstr", "Taint",
    "Unordered", "taint_join",
    "FixedScalar", "OpCount", "arith", "compare", "ct_select",
    "from_double", "is_class", "logic", "math1", "to_double",
    "ParseError", "parse", "print_program",
    "RULE_KINDS", "TaintedProgram", "ValidationError", "validate",
    "DataError", "RawDataset", "decode", "encode",
    "Block", "EvalError", "TraceRecord", "VmState", "compare_traces",
    "eval_edit", "eval_select", "eval_summary", "execute", "load_dataset",
    "matmul", "oblivious_lookup", "run", "static_trace_count",
]

__version__ = "0.1.0"

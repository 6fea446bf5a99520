"""Pseudonym-tracing frontend for the oblivious-transcript toolchain.

Host code written against this package runs once, on data-free
pseudonyms, and leaves behind a straight-line transcript that the
replay VM validates and executes on the real datasets. See `core` for
the capture machinery and `lib` for the R-flavored function library.
"""

from .core import (
    CONCRETE,
    PSEUDONYM,
    LoopIndex,
    PseudonymMatrix,
    PseudonymScalar,
    TraceContext,
    TraceError,
    apply_op,
    current_context,
    declare_dataset,
    emit,
    forloop,
    select_if,
)
from .lib import (
    all,
    any,
    as_numeric,
    ceiling,
    colMeans,
    colSums,
    cos,
    exp,
    fisher_test_2x2,
    floor,
    is_infinite,
    is_na,
    is_nan,
    log,
    max,
    mean,
    min,
    na_rm_sum,
    ncol,
    nrow,
    pchisq_df1,
    pmax,
    pmin,
    prod,
    range_of,
    rowMeans,
    rowSums,
    sign,
    sin,
    sqrt,
    sum,
    t,
    tan,
)

__version__ = "0.1.0"

__all__ = [
    "CONCRETE",
    "PSEUDONYM",
    "LoopIndex",
    "PseudonymMatrix",
    "PseudonymScalar",
    "TraceContext",
    "TraceError",
    "apply_op",
    "current_context",
    "declare_dataset",
    "emit",
    "forloop",
    "select_if",
    "all",
    "any",
    "as_numeric",
    "ceiling",
    "colMeans",
    "colSums",
    "cos",
    "exp",
    "fisher_test_2x2",
    "floor",
    "is_infinite",
    "is_na",
    "is_nan",
    "log",
    "max",
    "mean",
    "min",
    "na_rm_sum",
    "ncol",
    "nrow",
    "pchisq_df1",
    "pmax",
    "pmin",
    "prod",
    "range_of",
    "rowMeans",
    "rowSums",
    "sign",
    "sin",
    "sqrt",
    "sum",
    "t",
    "tan",
    "__version__",
]

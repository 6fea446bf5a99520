"""Math helpers and the supplemental statistics library.

Everything here expands into ordinary transcript instructions through
the same capture path as the overloaded operators; none of it computes
on real data. Reductions follow the replay VM's missing-value rules
(a single NA poisons sum/prod/min/max), so R idioms that need NA
removal go through na_rm_sum.

Shape notes: the transcript's windows take only concrete positions or
loop indices, with no index arithmetic. That shapes two functions:
  * t() moves one cell per step inside a nested loop (constant-size
    transcript, quadratic replay cost in the cell count);
  * as_numeric() flattens column-major with one slice+update pair per
    column (transcript linear in the column count).
"""

from __future__ import annotations

import math
from typing import Union

from .core import (
    CONCRETE,
    LoopIndex,
    PseudonymMatrix,
    PseudonymScalar,
    TraceError,
    _join,
    _lit,
    _scalar_operand,
    apply_op,
    current_context,
)

Value = Union[PseudonymScalar, PseudonymMatrix, bool, int, float]


def _ctx_of(*args):
    for a in args:
        if isinstance(a, (PseudonymScalar, PseudonymMatrix)):
            return a.ctx
    return current_context()


# -- elementwise math --------------------------------------------------------


def exp(x: Value):
    return apply_op("exp", (x,), ctx=_ctx_of(x))


def log(x: Value):
    return apply_op("log", (x,), ctx=_ctx_of(x))


def sqrt(x: Value):
    return apply_op("sqrt", (x,), ctx=_ctx_of(x))


def sin(x: Value):
    return apply_op("sin", (x,), ctx=_ctx_of(x))


def cos(x: Value):
    return apply_op("cos", (x,), ctx=_ctx_of(x))


def tan(x: Value):
    return apply_op("tan", (x,), ctx=_ctx_of(x))


def floor(x: Value):
    return apply_op("floor", (x,), ctx=_ctx_of(x))


def ceiling(x: Value):
    return apply_op("ceiling", (x,), ctx=_ctx_of(x))


def sign(x: Value):
    return apply_op("sign", (x,), ctx=_ctx_of(x))


def is_na(x: Value):
    return apply_op("NA?", (x,), ctx=_ctx_of(x))


def is_nan(x: Value):
    return apply_op("NAN?", (x,), ctx=_ctx_of(x))


def is_infinite(x: Value):
    return apply_op("INF?", (x,), ctx=_ctx_of(x))


# -- whole-matrix reductions --------------------------------------------------


def _reduce(op: str, x) -> PseudonymScalar:
    if not isinstance(x, PseudonymMatrix):
        raise TraceError(f"{op} reduces a matrix pseudonym")
    dest = x.ctx._new_register()
    x.ctx._line(f"{op} {dest} ${x.mid}")
    return PseudonymScalar(x.ctx, dest, x.taint)


def sum(x) -> PseudonymScalar:  # noqa: A001 - R-style name, module-qualified
    return _reduce("sum", x)


def prod(x) -> PseudonymScalar:
    return _reduce("prod", x)


def min(x) -> PseudonymScalar:  # noqa: A001
    return _reduce("min", x)


def max(x) -> PseudonymScalar:  # noqa: A001
    return _reduce("max", x)


def any(x) -> PseudonymScalar:  # noqa: A001
    return _reduce("any", x)


def all(x) -> PseudonymScalar:  # noqa: A001
    return _reduce("all", x)


def range_of(x) -> tuple:
    """(low, high) extremes as two scalar pseudonyms."""
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("range_of reduces a matrix pseudonym")
    lo = x.ctx._new_register()
    hi = x.ctx._new_register()
    x.ctx._line(f"range {lo} {hi} ${x.mid}")
    return (PseudonymScalar(x.ctx, lo, x.taint),
            PseudonymScalar(x.ctx, hi, x.taint))


# -- supplemental library ------------------------------------------------------


def nrow(x: PseudonymMatrix) -> int:
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("nrow takes a matrix pseudonym")
    return x.rows


def ncol(x: PseudonymMatrix) -> int:
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("ncol takes a matrix pseudonym")
    return x.cols


def _axis_fold(x: PseudonymMatrix, along_rows: bool) -> PseudonymMatrix:
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("axis reductions take a matrix pseudonym")
    ctx = x.ctx
    n = x.rows if along_rows else x.cols
    dest = ctx._empty(n, 1) if along_rows else ctx._empty(1, n)

    def body(ix: LoopIndex):
        line = x[ix, :] if along_rows else x[:, ix]
        total = sum(line)
        if along_rows:
            dest[ix, 1] = total
        else:
            dest[1, ix] = total

    ctx.forloop(1, n, 1, body)
    dest.taint = _join(dest.taint, x.taint)
    return dest


def rowSums(x: PseudonymMatrix) -> PseudonymMatrix:
    """Per-row totals as an n-by-1 matrix."""
    return _axis_fold(x, along_rows=True)


def colSums(x: PseudonymMatrix) -> PseudonymMatrix:
    """Per-column totals as a 1-by-n matrix."""
    return _axis_fold(x, along_rows=False)


def rowMeans(x: PseudonymMatrix) -> PseudonymMatrix:
    return rowSums(x) / float(x.cols)


def colMeans(x: PseudonymMatrix) -> PseudonymMatrix:
    return colSums(x) / float(x.rows)


def mean(x: PseudonymMatrix) -> PseudonymScalar:
    """Grand mean of all cells (NA-poisoning, as with sum)."""
    return sum(x) / float(x.rows * x.cols)


def pmin(a: Value, b: Value):
    """Elementwise minimum; NA in either argument yields NA."""
    return _ctx_of(a, b).select_if(a < b if isinstance(a, (PseudonymScalar,
                                   PseudonymMatrix)) else b > a, a, b)


def pmax(a: Value, b: Value):
    """Elementwise maximum; NA in either argument yields NA."""
    return _ctx_of(a, b).select_if(a > b if isinstance(a, (PseudonymScalar,
                                   PseudonymMatrix)) else b < a, a, b)


def t(x: PseudonymMatrix) -> PseudonymMatrix:
    """Transpose. Cells move one at a time under two nested loops, so
    the transcript is constant-size; replay touches rows*cols windows."""
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("t takes a matrix pseudonym")
    ctx = x.ctx
    dest = ctx._empty(x.cols, x.rows)

    def outer(i: LoopIndex):
        def inner(j: LoopIndex):
            dest[j, i] = x[i, j]
        ctx.forloop(1, x.cols, 1, inner)

    ctx.forloop(1, x.rows, 1, outer)
    dest.taint = _join(dest.taint, x.taint)
    return dest


def as_numeric(x):
    """R-style numeric coercion: scalars pass through, matrices flatten
    to a column vector in column-major order."""
    if isinstance(x, PseudonymScalar):
        return x
    if isinstance(x, (bool, int, float)):
        return float(x)
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("as_numeric takes a scalar or matrix pseudonym")
    ctx = x.ctx
    if x.cols == 1:
        return x[:, 1]  # slice keeps taint and order
    dest = ctx._empty(x.rows * x.cols, 1)
    for j in range(1, x.cols + 1):
        col = x[:, j]
        lo = (j - 1) * x.rows + 1
        dest[slice(lo, lo + x.rows - 1), 1] = col
    dest.taint = _join(dest.taint, x.taint)
    return dest


def na_rm_sum(x: PseudonymMatrix) -> PseudonymScalar:
    """Sum with NA cells treated as 0 (sum(x, na.rm=TRUE))."""
    if not isinstance(x, PseudonymMatrix):
        raise TraceError("na_rm_sum takes a matrix pseudonym")
    cleaned = x.ctx.select_if(is_na(x), 0.0, x)
    return sum(cleaned)


# Rational erf approximation, 5-term (Abramowitz & Stegun 7.1.26);
# absolute error under 1.5e-7, well inside the 1e-3 service contract.
_ERF_P = 0.3275911
_ERF_A = (0.254829592, -0.284496736, 1.421413741, -1.453152027, 1.061405429)


def pchisq_df1(q: Value):
    """Lower-tail chi-square CDF with one degree of freedom:
    P(X <= q) = erf(sqrt(q/2)). Defined for q >= 0; negative inputs
    propagate NaN from sqrt, NA propagates as NA."""
    x = sqrt(q * 0.5)
    u = 1.0 / (1.0 + _ERF_P * x)
    poly = _ERF_A[4]
    for coef in (_ERF_A[3], _ERF_A[2], _ERF_A[1], _ERF_A[0]):
        poly = poly * u + coef
    poly = poly * u
    return 1.0 - poly * exp(-(x * x))


_FISHER_TIE_EPS = 1e-6  # log-pmf slack for "at most as probable"


def _logfact_table(ctx, domain: int) -> int:
    """Constant column of log(k!) for k = 0..domain, declared once per
    context and hoisted so every call shares it."""
    if ctx._logfact is not None:
        mid, have = ctx._logfact
        if domain <= have:
            return mid
        raise TraceError(f"log-factorial table already fixed at domain "
                         f"{have}, cannot widen to {domain}")
    rows = [f"row {k + 1} {_lit(math.lgamma(k + 1))}"
            for k in range(domain + 1)]
    mid = ctx._def_block(domain + 1, 1, rows, const=True, preamble=True)
    ctx._logfact = (mid, domain)
    return mid


def fisher_test_2x2(a: Value, r1: int, c1: int, n: int, *,
                    domain: int = 170) -> PseudonymScalar:
    """Two-sided Fisher exact p-value for a 2x2 table with concrete
    margins: row-1 total r1, column-1 total c1, grand total n. `a` is
    the (possibly pseudonym) count in the top-left cell.

    All tables with those margins are enumerated at trace time; the
    observed table's log-probability is fetched by a constant scan of
    equality-selects, so the replayed work never depends on `a`. A
    candidate counts toward the p-value when its log-pmf is at most
    the observed one plus 1e-6 (exact ties are bit-equal and always
    count). If the data disagrees with the declared margins, the
    result degrades to 1.0 rather than leaking anything.
    """
    for label, v in (("r1", r1), ("c1", c1), ("n", n)):
        if not isinstance(v, int) or isinstance(v, bool):
            raise TraceError(f"fisher margin {label} must be a concrete "
                             "integer")
    if n < 1 or not 0 <= r1 <= n or not 0 <= c1 <= n:
        raise TraceError(f"inconsistent margins r1={r1} c1={c1} n={n}")
    if n > domain:
        raise TraceError(f"margins need factorials up to {n}! but the "
                         f"table domain ends at {domain}")
    ctx = _ctx_of(a)
    a_text, a_taint = _scalar_operand(ctx, a)
    fid = _logfact_table(ctx, domain)

    def lf(v: int) -> str:
        return f"${fid}@({v + 1},1)"

    r2, c2 = n - r1, n - c1
    klo = 0 if c1 <= r2 else c1 - r2
    khi = r1 if r1 <= c1 else c1

    def scalar(op: str, *args: str) -> str:
        dest = ctx._new_register()
        ctx._line(f"{op} {dest} {' '.join(args)}")
        return dest

    # log normalizer: lf(r1)+lf(r2)+lf(c1)+lf(c2)-lf(n)
    norm = scalar("+", lf(r1), lf(r2))
    norm = scalar("+", norm, lf(c1))
    norm = scalar("+", norm, lf(c2))
    norm = scalar("-", norm, lf(n))

    # per-candidate factorial mass s(k); scan out s(observed)
    s_obs = "#0.0"
    s_of = {}
    for k in range(klo, khi + 1):
        s_k = scalar("+", lf(k), lf(r1 - k))
        s_k = scalar("+", s_k, lf(c1 - k))
        s_k = scalar("+", s_k, lf(n - r1 - c1 + k))
        s_of[k] = s_k
        hit = scalar("==", a_text, _lit(float(k)))
        dest = ctx._new_register()
        ctx._line(f"select {dest} {hit} {s_k} {s_obs}")
        s_obs = dest
    thresh = scalar("-", s_obs, _lit(_FISHER_TIE_EPS))

    total = "#0.0"
    for k in range(klo, khi + 1):
        logp = scalar("-", norm, s_of[k])
        pmf = scalar("exp", logp)
        keep = scalar(">=", s_of[k], thresh)
        dest = ctx._new_register()
        ctx._line(f"select {dest} {keep} {pmf} #0.0")
        total = scalar("+", total, dest)
    return PseudonymScalar(ctx, total, _join(a_taint, CONCRETE))

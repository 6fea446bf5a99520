"""Constant-operation-count Q31.32 fixed-point scalars with R-style
NA/NaN/Inf algebra.

Every scalar is a 64-bit two's-complement ``raw`` encoding value*2^32 plus
a class ``tag``: NUM, NA, NAN, POS_INF, NEG_INF. When tag != NUM, raw is
canonically 0. The representable NUM range is [-2^31, 2^31 - 2^-32];
results outside it saturate to the infinity tags, never wrap.

Constant-trace contract
-----------------------
The sequence of primitive steps each operation executes is a function of
the opcode alone. There is no branch, no early exit, and no table index
that depends on a raw value or tag. Data-dependent choices are made with
mask arithmetic on plain integers:

    mask   m = -flag              (flag in {0,1} -> 0 or -1)
    select   (t & m) | (f & ~m)
    negate-if (x ^ m) - m

Python big-integer primitives (+, *, %, //, <<, >>, bit_length,
comparisons) each count as one step; the observable this artifact defends
is the operation trace and the OpCount ledger, not wall-clock time.

Iterative kernels run a fixed number of iterations regardless of input:
exp 14 Taylor steps, log 17 series steps, sin/cos/tan 62 rotation steps,
sqrt 48 digit-recurrence steps, div 96 long-division steps. Each iteration
bumps ``<op>.step`` in the OpCount so a shortcut (early exit) is visible
as a count divergence. One-shot operations bump their opcode key once per
call.

NA notes: R's missing marker is a NaN whose low 32-bit word is 1954
(bit pattern 0x7FF00000000007A2). NA is distinct from NaN: is.na(NA) and
is.na(NaN) are both 1, is.nan(NA) is 0. NA absorbs through ALL arithmetic
here, including pow (so 1^NA is NA, stricter than R's 1).
"""

from __future__ import annotations

import math
import struct
from collections import defaultdict
from decimal import Decimal, localcontext

FRAC = 32
ONE = 1 << FRAC                  # 1.0 in Q31.32
MASK32 = ONE - 1
MAX_RAW = (1 << 63) - 1          # 2^31 - 2^-32
MIN_RAW = -(1 << 63)             # -2^31

TAG_NUM = 0
TAG_NA = 1
TAG_NAN = 2
TAG_PINF = 3
TAG_NINF = 4

TAG_NAMES = ("NUM", "NA", "NAN", "POS_INF", "NEG_INF")

# R's NA_REAL: NaN with low 32-bit word 1954.
NA_BITS = 0x7FF00000000007A2
NAN_BITS = 0x7FF8000000000000
PINF_BITS = 0x7FF0000000000000
NINF_BITS = 0xFFF0000000000000

_pack_d = struct.Struct("<d").pack
_unpack_d = struct.Struct("<d").unpack
_pack_q = struct.Struct("<Q").pack
_unpack_q = struct.Struct("<Q").unpack


class OpCount(defaultdict):
    """Per-opcode step counters; the obliviousness audit observable.

    Counts depend only on the opcode sequence executed, never on operand
    values. One OpCount belongs to one evaluation context / thread.
    """

    def __init__(self, *args):
        super().__init__(int, *args)

    def bump(self, key: str, n: int = 1) -> None:
        self[key] += n


class FixedScalar:
    """Q31.32 value with class tag; the unit of all sensitive computation.

    Treat as immutable. Truth-testing is forbidden (the VM must never
    branch on a scalar); use ct_select instead. repr is diagnostic only.
    """

    __slots__ = ("raw", "tag")

    def __init__(self, raw: int, tag: int):
        self.raw = raw
        self.tag = tag

    def __bool__(self):
        raise TypeError(
            "truth value of a FixedScalar is data-dependent; use ct_select")

    def __eq__(self, other):
        if not isinstance(other, FixedScalar):
            return NotImplemented
        return self.raw == other.raw and self.tag == other.tag

    def __hash__(self):
        return hash((self.raw, self.tag))

    def __repr__(self):
        if self.tag == TAG_NUM:
            return f"FixedScalar({self.raw / ONE!r})"
        return f"FixedScalar(<{TAG_NAMES[self.tag]}>)"


F_ZERO = FixedScalar(0, TAG_NUM)
F_ONE = FixedScalar(ONE, TAG_NUM)
F_NA = FixedScalar(0, TAG_NA)
F_NAN = FixedScalar(0, TAG_NAN)
F_PINF = FixedScalar(0, TAG_PINF)
F_NINF = FixedScalar(0, TAG_NINF)


# ---------------------------------------------------------------------------
# High-precision constants (import-time, integer-only afterwards)
# ---------------------------------------------------------------------------

_LN2_STR = ("0.6931471805599453094172321214581765680755"
            "00134360255254120680009493393621969694716")
_PI_STR = ("3.1415926535897932384626433832795028841971"
           "69399375105820974944592307816406286208999")

with localcontext() as _ctx:
    _ctx.prec = 90
    _LN2_D = Decimal(_LN2_STR)
    _PI_D = Decimal(_PI_STR)
    _HALF = Decimal("0.5")
    LN2_Q62 = int(_LN2_D * (1 << 62) + _HALF)
    PI_Q62 = int(_PI_D * (1 << 62) + _HALF)
    TWO_PI_Q62 = int(2 * _PI_D * (1 << 62) + _HALF)
    HALF_PI_Q62 = int(_PI_D / 2 * (1 << 62) + _HALF)
    INV_LN2_Q62 = int((1 / _LN2_D) * (1 << 62) + _HALF)
    INV_2PI_Q62 = int((1 / (2 * _PI_D)) * (1 << 62) + _HALF)

ONE62 = 1 << 62


def _atan_table() -> tuple[int, ...]:
    # atan(2^-i) in Q62 for i = 0..61; integer Taylor series, exact shifts.
    tbl = [PI_Q62 >> 2]
    P = 78
    for i in range(1, 62):
        t = 1 << (P - i)
        term = t
        acc = t
        sgn = -1
        for j in range(1, 40):
            term >>= 2 * i
            acc += sgn * (term // (2 * j + 1))
            sgn = -sgn
        tbl.append((acc + (1 << (P - 63))) >> (P - 62))
    return tuple(tbl)


def _cordic_kinv() -> int:
    # 1/G in Q62 where G^2 = prod(1 + 2^-2i), i = 0..61.
    Q = 140
    g = 1 << Q
    for i in range(62):
        g += g >> (2 * i)
    g_root = math.isqrt(g)            # G in Q70
    return (1 << 132) // g_root       # 2^(62+70) / (G*2^70)


ATAN_Q62 = _atan_table()
K_INV_Q62 = _cordic_kinv()


# ---------------------------------------------------------------------------
# Conversions
# ---------------------------------------------------------------------------


def from_double(x: float, oc: OpCount | None = None) -> FixedScalar:
    """IEEE-754 double -> FixedScalar, identical step sequence per call.

    NaN with low word 1954 -> NA; other NaN -> NAN; +/-inf -> infinity
    tags; finite values round to nearest Q31.32 (ties away from zero) and
    saturate to the infinity tags outside the NUM range.
    """
    if oc is None:
        oc = OpCount()
    oc["from_double"] += 1
    bits = _unpack_q(_pack_d(x))[0]
    sign = bits >> 63
    bexp = (bits >> 52) & 0x7FF
    frac = bits & ((1 << 52) - 1)
    special = bexp == 0x7FF
    isnan = special & (frac != 0)
    isna = isnan & ((bits & 0xFFFFFFFF) == 1954)
    isinf = special & (frac == 0)
    # finite lane (computed unconditionally; masked out for specials)
    norm = bexp != 0
    mant = frac | ((1 << 52) & -norm)
    sh = (bexp - 1075 + (1 - norm) + 32) & -(1 - special)
    nn = sh >= 0
    sl = sh & -nn
    sr = (-sh) & -(1 - nn)
    # any right shift past the 53 mantissa bits rounds to 0; clamping
    # there keeps tiny/zero inputs from building huge shift constants
    sr = _isel(sr > 54, 54, sr)
    mag = ((mant + ((1 << sr) >> 1)) >> sr) << sl
    raw = (mag ^ -sign) + sign
    pos_ovf = (1 - special) & (raw > MAX_RAW)
    neg_ovf = (1 - special) & (raw < MIN_RAW)
    nan = isnan & (1 - isna)
    pinf = (isinf & (1 - sign)) | pos_ovf
    ninf = (isinf & sign) | neg_ovf
    m_na = -isna
    m_nan = -nan
    m_pi = -pinf
    m_ni = -ninf
    tag = ((TAG_NA & m_na)
           | (TAG_NAN & m_nan & ~m_na)
           | (TAG_PINF & m_pi & ~m_na & ~m_nan)
           | (TAG_NINF & m_ni & ~m_na & ~m_nan & ~m_pi))
    raw = raw & -(tag == TAG_NUM)
    return FixedScalar(raw, tag)


def to_double(a: FixedScalar, oc: OpCount | None = None) -> float:
    """FixedScalar -> IEEE-754 double; NA reproduces the 1954-payload NaN.

    Export-side inverse of from_double up to Q31.32 quantization; uses the
    same mask-select discipline on the bit patterns.
    """
    if oc is None:
        oc = OpCount()
    oc["to_double"] += 1
    f = float(a.raw) * 2.0 ** -32
    fbits = _unpack_q(_pack_d(f))[0]
    t = a.tag
    m_na = -(t == TAG_NA)
    m_nan = -(t == TAG_NAN)
    m_pi = -(t == TAG_PINF)
    m_ni = -(t == TAG_NINF)
    m_num = ~(m_na | m_nan | m_pi | m_ni)
    bits = ((NA_BITS & m_na) | (NAN_BITS & m_nan) | (PINF_BITS & m_pi)
            | (NINF_BITS & m_ni) | (fbits & m_num))
    return _unpack_d(_pack_q(bits))[0]


# ---------------------------------------------------------------------------
# Internal mask helpers
# ---------------------------------------------------------------------------


def _tag_of(na: int, nan: int, pinf: int, ninf: int) -> int:
    # Priority NA > NAN > POS_INF > NEG_INF > NUM.
    m_na = -na
    m_nan = -nan & ~m_na
    m_pi = -pinf & ~m_na & ~m_nan
    m_ni = -ninf & ~m_na & ~m_nan & ~m_pi
    return ((TAG_NA & m_na) | (TAG_NAN & m_nan)
            | (TAG_PINF & m_pi) | (TAG_NINF & m_ni))


def _isel(flag: int, t: int, f: int) -> int:
    # Integer select on a 0/1 flag.
    m = -flag
    return (t & m) | (f & ~m)


# ---------------------------------------------------------------------------
# Arithmetic leaf functions
# ---------------------------------------------------------------------------


def _add(a: FixedScalar, b: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["+"] += 1
    at = a.tag
    bt = b.tag
    an = at == TAG_NUM
    bn = bt == TAG_NUM
    api = at == TAG_PINF
    ani = at == TAG_NINF
    bpi = bt == TAG_PINF
    bni = bt == TAG_NINF
    s = a.raw + b.raw
    num = an & bn
    po = num & (s > MAX_RAW)
    no = num & (s < MIN_RAW)
    na = (at == TAG_NA) | (bt == TAG_NA)
    nan = (at == TAG_NAN) | (bt == TAG_NAN) | (api & bni) | (ani & bpi)
    pinf = (api & (bpi | bn)) | (bpi & an) | po
    ninf = (ani & (bni | bn)) | (bni & an) | no
    tag = _tag_of(na, nan, pinf, ninf)
    return FixedScalar(s & -(tag == TAG_NUM), tag)


def _sub(a: FixedScalar, b: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["-"] += 1
    at = a.tag
    bt = b.tag
    an = at == TAG_NUM
    bn = bt == TAG_NUM
    api = at == TAG_PINF
    ani = at == TAG_NINF
    bpi = bt == TAG_PINF
    bni = bt == TAG_NINF
    s = a.raw - b.raw
    num = an & bn
    po = num & (s > MAX_RAW)
    no = num & (s < MIN_RAW)
    na = (at == TAG_NA) | (bt == TAG_NA)
    nan = (at == TAG_NAN) | (bt == TAG_NAN) | (api & bpi) | (ani & bni)
    pinf = (api & (bni | bn)) | (bni & an) | po
    ninf = (ani & (bpi | bn)) | (bpi & an) | no
    tag = _tag_of(na, nan, pinf, ninf)
    return FixedScalar(s & -(tag == TAG_NUM), tag)


def _mul(a: FixedScalar, b: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["*"] += 1
    at = a.tag
    bt = b.tag
    an = at == TAG_NUM
    bn = bt == TAG_NUM
    api = at == TAG_PINF
    ani = at == TAG_NINF
    bpi = bt == TAG_PINF
    bni = bt == TAG_NINF
    ainf = api | ani
    binf = bpi | bni
    # Full 128-bit product, low fraction word dropped (truncation, not
    # rounding): keeps the step identical for every operand value.
    p = (a.raw * b.raw) >> 32
    num = an & bn
    ovf = num & ((p > MAX_RAW) | (p < MIN_RAW))
    az = an & (a.raw == 0)
    bz = bn & (b.raw == 0)
    aneg = (a.raw < 0) | ani
    bneg = (b.raw < 0) | bni
    negr = aneg ^ bneg
    na = (at == TAG_NA) | (bt == TAG_NA)
    nan = ((at == TAG_NAN) | (bt == TAG_NAN)
           | (ainf & bz) | (binf & az))
    infr = ((ainf & (binf | (bn & (1 - bz))))
            | (binf & an & (1 - az)) | ovf)
    pinf = infr & (1 - negr)
    ninf = infr & negr
    tag = _tag_of(na, nan, pinf, ninf)
    return FixedScalar(p & -(tag == TAG_NUM), tag)


def _div(a: FixedScalar, b: FixedScalar, oc: OpCount) -> FixedScalar:
    """Fixed 96-step restoring long division on the scaled magnitude."""
    oc["/"] += 1
    at = a.tag
    bt = b.tag
    an = at == TAG_NUM
    bn = bt == TAG_NUM
    api = at == TAG_PINF
    ani = at == TAG_NINF
    bpi = bt == TAG_PINF
    bni = bt == TAG_NINF
    ainf = api | ani
    binf = bpi | bni
    sx = a.raw < 0
    sy = b.raw < 0
    ma = -sx
    A = (a.raw ^ ma) - ma
    mb = -sy
    B = ((b.raw ^ mb) - mb) + (b.raw == 0)
    N = A << 32
    q = 0
    rem = 0
    for i in range(95, -1, -1):
        oc["/.step"] += 1
        rem = (rem << 1) | ((N >> i) & 1)
        ge = rem >= B
        rem -= B & -ge
        q = (q << 1) | ge
    negr = (sx | ani) ^ (sy | bni)
    mq = -negr
    qs = (q ^ mq) - mq
    num = an & bn
    bz = bn & (b.raw == 0)
    az = an & (a.raw == 0)
    good = num & (1 - bz)
    ovf = good & ((qs > MAX_RAW) | (qs < MIN_RAW))
    na = (at == TAG_NA) | (bt == TAG_NA)
    nan = ((at == TAG_NAN) | (bt == TAG_NAN)
           | (ainf & binf) | (az & bz))
    infr = (ainf & bn) | (num & bz & (1 - az)) | ovf
    pinf = infr & (1 - negr)
    ninf = infr & negr
    tag = _tag_of(na, nan, pinf, ninf)
    # NUM tag arises on the good lane (raw = quotient) and on the
    # finite/infinite lane (raw = 0); good distinguishes them.
    raw = qs & -(tag == TAG_NUM) & -good
    return FixedScalar(raw, tag)


def _mod(a: FixedScalar, b: FixedScalar, oc: OpCount) -> FixedScalar:
    """R's %%: floored remainder, sign of the divisor."""
    oc["%%"] += 1
    at = a.tag
    bt = b.tag
    an = at == TAG_NUM
    bn = bt == TAG_NUM
    api = at == TAG_PINF
    ani = at == TAG_NINF
    bpi = bt == TAG_PINF
    bni = bt == TAG_NINF
    bz = bn & (b.raw == 0)
    b_safe = b.raw + (b.raw == 0)
    r = a.raw % b_safe
    # finite %% infinity: the dividend when signs agree (or it is 0),
    # otherwise the infinity itself (R convention).
    agree = ((a.raw > 0) & bpi) | ((a.raw < 0) & bni) | (a.raw == 0)
    na = (at == TAG_NA) | (bt == TAG_NA)
    nan = ((at == TAG_NAN) | (bt == TAG_NAN)
           | api | ani | (an & bz))
    pinf = an & bpi & (1 - agree)
    ninf = an & bni & (1 - agree)
    tag = _tag_of(na, nan, pinf, ninf)
    num_fin = an & bn & (1 - bz)
    keep_a = an & (bpi | bni) & agree
    raw = _isel(num_fin, r, _isel(keep_a, a.raw, 0))
    return FixedScalar(raw & -(tag == TAG_NUM), tag)


# --- shared transcendental cores (fixed iteration counts) ---


def _exp_core(x_q62: int, oc: OpCount, step_key: str) -> int:
    """exp of a Q2.62 argument -> nonnegative Q31.32 (caller saturates)."""
    t = x_q62 * INV_LN2_Q62
    k = (t + (1 << 123)) >> 124
    lo = k < -80
    k = _isel(lo, -80, k)
    hi = k > 80
    k = _isel(hi, 80, k)
    r = x_q62 - k * LN2_Q62
    rlo = r < -ONE62
    r = _isel(rlo, -ONE62, r)
    rhi = r > ONE62
    r = _isel(rhi, ONE62, r)
    acc = ONE62
    for i in range(14, 0, -1):
        oc[step_key] += 1
        acc = ONE62 + ((r * acc) >> 62) // i
    s = 30 - k
    nn = s >= 0
    sr = s & -nn
    sl = (-s) & -(1 - nn)
    return ((acc + ((1 << sr) >> 1)) >> sr) << sl


def _ln_core(pos_raw: int, oc: OpCount, step_key: str) -> int:
    """ln of a positive Q31.32 raw (>= 1) -> signed Q2.62."""
    n = pos_raw.bit_length() - 1
    m = pos_raw << (62 - n)
    t = ((m - ONE62) << 62) // (m + ONE62)
    acc = t
    tsq = (t * t) >> 62
    term = t
    for j in range(1, 17):
        oc[step_key] += 1
        term = (term * tsq) >> 62
        acc += term // (2 * j + 1)
    return (n - 32) * LN2_Q62 + (acc << 1)


def _pow(a: FixedScalar, b: FixedScalar, oc: OpCount) -> FixedScalar:
    """a^b: exp(b*ln|a|) magnitude lane plus mask-selected special cases."""
    oc["^"] += 1
    at = a.tag
    bt = b.tag
    an = at == TAG_NUM
    bn = bt == TAG_NUM
    api = at == TAG_PINF
    ani = at == TAG_NINF
    bpi = bt == TAG_PINF
    bni = bt == TAG_NINF
    ma = -(a.raw < 0)
    abs_a = (a.raw ^ ma) - ma
    base_safe = abs_a + (abs_a == 0)
    l = _ln_core(base_safe, oc, "^.step")
    t_q62 = (b.raw * l + (1 << 31)) >> 32
    v = _exp_core(t_q62, oc, "^.step")
    ovf = v > MAX_RAW
    az = an & (a.raw == 0)
    bz = bn & (b.raw == 0)
    a_neg = an & (a.raw < 0)
    int_b = bn & ((b.raw & MASK32) == 0)
    odd_b = int_b & ((b.raw >> 32) & 1)
    x_gt1 = (an & (abs_a > ONE)) | api | ani
    x_eq1 = an & (abs_a == ONE)
    b_pos = bn & (b.raw > 0)
    b_neg = bn & (b.raw < 0)

    na = (at == TAG_NA) | (bt == TAG_NA)
    nan = (at == TAG_NAN) | (bt == TAG_NAN)
    # priority-ordered lanes below NA/NAN; each lane yields (raw, tag) ints.
    neg_res = a_neg & odd_b
    mv = -neg_res
    v_sat = _isel(ovf, 0, v)
    gen_raw = ((v_sat ^ mv) - mv)
    gen_tag = _isel(ovf, _isel(neg_res, TAG_NINF, TAG_PINF), TAG_NUM)

    raw = gen_raw
    tag = gen_tag
    # negative base with non-integer exponent -> NaN
    frac_neg = a_neg & (1 - int_b)
    raw = _isel(frac_neg, 0, raw)
    tag = _isel(frac_neg, TAG_NAN, tag)
    # zero base, nonzero finite exponent
    raw = _isel(az & b_pos, 0, raw)
    tag = _isel(az & b_pos, TAG_NUM, tag)
    raw = _isel(az & b_neg, 0, raw)
    tag = _isel(az & b_neg, TAG_PINF, tag)
    # infinite base, nonzero finite exponent
    raw = _isel(api & b_pos, 0, raw)
    tag = _isel(api & b_pos, TAG_PINF, tag)
    raw = _isel(api & b_neg, 0, raw)
    tag = _isel(api & b_neg, TAG_NUM, tag)
    ni_sign = _isel(odd_b, TAG_NINF, TAG_PINF)
    raw = _isel(ani & b_pos, 0, raw)
    tag = _isel(ani & b_pos, ni_sign, tag)
    raw = _isel(ani & b_neg, 0, raw)
    tag = _isel(ani & b_neg, TAG_NUM, tag)
    # zero exponent: 1 for every non-NA/NAN base
    raw = _isel(bz, ONE, raw)
    tag = _isel(bz, TAG_NUM, tag)
    # infinite exponent
    big = x_gt1
    one_m = x_eq1
    raw = _isel(bpi & big, 0, raw)
    tag = _isel(bpi & big, TAG_PINF, tag)
    raw = _isel(bpi & (1 - big) & (1 - one_m), 0, raw)
    tag = _isel(bpi & (1 - big) & (1 - one_m), TAG_NUM, tag)
    raw = _isel(bni & big, 0, raw)
    tag = _isel(bni & big, TAG_NUM, tag)
    raw = _isel(bni & (1 - big) & (1 - one_m), 0, raw)
    tag = _isel(bni & (1 - big) & (1 - one_m), TAG_PINF, tag)
    raw = _isel((bpi | bni) & one_m, ONE, raw)
    tag = _isel((bpi | bni) & one_m, TAG_NUM, tag)
    # NAN then NA dominate everything
    raw = _isel(nan, 0, raw)
    tag = _isel(nan, TAG_NAN, tag)
    raw = _isel(na, 0, raw)
    tag = _isel(na, TAG_NA, tag)
    return FixedScalar(raw & -(tag == TAG_NUM), tag)


# ---------------------------------------------------------------------------
# Unary math leaf functions
# ---------------------------------------------------------------------------


def _abs(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["abs"] += 1
    at = a.tag
    m = -(a.raw < 0)
    r = (a.raw ^ m) - m
    ovf = (at == TAG_NUM) & (r > MAX_RAW)
    na = at == TAG_NA
    nan = at == TAG_NAN
    pinf = (at == TAG_PINF) | (at == TAG_NINF) | ovf
    tag = _tag_of(na, nan, pinf, 0)
    return FixedScalar(r & -(tag == TAG_NUM), tag)


def _sign(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["sign"] += 1
    at = a.tag
    s = (a.raw > 0) - (a.raw < 0)
    s = _isel(at == TAG_PINF, 1, _isel(at == TAG_NINF, -1, s))
    na = at == TAG_NA
    nan = at == TAG_NAN
    tag = _tag_of(na, nan, 0, 0)
    return FixedScalar((s * ONE) & -(tag == TAG_NUM), tag)


def _floor(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["floor"] += 1
    at = a.tag
    r = a.raw & ~MASK32
    na = at == TAG_NA
    nan = at == TAG_NAN
    tag = _tag_of(na, nan, at == TAG_PINF, at == TAG_NINF)
    return FixedScalar(r & -(tag == TAG_NUM), tag)


def _ceiling(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["ceiling"] += 1
    at = a.tag
    r = (a.raw + MASK32) & ~MASK32
    ovf = (at == TAG_NUM) & (r > MAX_RAW)
    na = at == TAG_NA
    nan = at == TAG_NAN
    tag = _tag_of(na, nan, (at == TAG_PINF) | ovf, at == TAG_NINF)
    return FixedScalar(r & -(tag == TAG_NUM), tag)


def _sqrt(a: FixedScalar, oc: OpCount) -> FixedScalar:
    """Fixed 48-step restoring digit recurrence on raw << 32."""
    oc["sqrt"] += 1
    at = a.tag
    neg = a.raw < 0
    pos = a.raw & -(1 - neg)
    N = pos << 32
    root = 0
    rem = 0
    for i in range(47, -1, -1):
        oc["sqrt.step"] += 1
        rem = (rem << 2) | ((N >> (2 * i)) & 3)
        trial = (root << 2) | 1
        ge = rem >= trial
        rem -= trial & -ge
        root = (root << 1) | ge
    na = at == TAG_NA
    nan = (at == TAG_NAN) | ((at == TAG_NUM) & neg) | (at == TAG_NINF)
    tag = _tag_of(na, nan, at == TAG_PINF, 0)
    return FixedScalar(root & -(tag == TAG_NUM), tag)


def _exp(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["exp"] += 1
    at = a.tag
    v = _exp_core(a.raw << 30, oc, "exp.step")
    ovf = v > MAX_RAW
    an = at == TAG_NUM
    na = at == TAG_NA
    nan = at == TAG_NAN
    pinf = (at == TAG_PINF) | (an & ovf)
    tag = _tag_of(na, nan, pinf, 0)
    # exp(-inf) = 0: NEG_INF lane lands on tag NUM with raw forced to 0.
    raw = v & -(tag == TAG_NUM) & -an
    return FixedScalar(raw, tag)


def _log(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["log"] += 1
    at = a.tag
    pos = a.raw > 0
    safe = _isel(pos, a.raw, 1)
    l = _ln_core(safe, oc, "log.step")
    r = (l + (1 << 29)) >> 30
    an = at == TAG_NUM
    zero = an & (a.raw == 0)
    negv = an & (a.raw < 0)
    na = at == TAG_NA
    nan = (at == TAG_NAN) | negv | (at == TAG_NINF)
    tag = _tag_of(na, nan, at == TAG_PINF, zero)
    return FixedScalar(r & -(tag == TAG_NUM) & -pos, tag)


def _sincos_core(x_raw: int, oc: OpCount, step_key: str) -> tuple[int, int]:
    """(sin, cos) of a Q31.32 raw angle, both in Q2.62; 62 CORDIC steps."""
    t = x_raw * INV_2PI_Q62
    k = (t + (1 << 93)) >> 94
    r = (x_raw << 30) - k * TWO_PI_Q62
    m = -(r < 0)
    ab = (r ^ m) - m
    big = ab > HALF_PI_Q62
    pi_s = (PI_Q62 ^ m) - m
    r2 = _isel(big, pi_s - r, r)
    X = K_INV_Q62
    Y = 0
    Z = r2
    for i in range(62):
        oc[step_key] += 1
        mz = -(Z < 0)
        sx = ((Y >> i) ^ mz) - mz
        sy = ((X >> i) ^ mz) - mz
        sz = (ATAN_Q62[i] ^ mz) - mz
        X -= sx
        Y += sy
        Z -= sz
    mc = -big
    X = (X ^ mc) - mc
    return Y, X


def _trig_tags(at: int) -> int:
    na = at == TAG_NA
    nan = (at == TAG_NAN) | (at == TAG_PINF) | (at == TAG_NINF)
    return _tag_of(na, nan, 0, 0)


def _sin(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["sin"] += 1
    y, _ = _sincos_core(a.raw, oc, "sin.step")
    tag = _trig_tags(a.tag)
    r = (y + (1 << 29)) >> 30
    return FixedScalar(r & -(tag == TAG_NUM), tag)


def _cos(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["cos"] += 1
    _, x = _sincos_core(a.raw, oc, "cos.step")
    tag = _trig_tags(a.tag)
    r = (x + (1 << 29)) >> 30
    return FixedScalar(r & -(tag == TAG_NUM), tag)


def _tan(a: FixedScalar, oc: OpCount) -> FixedScalar:
    oc["tan"] += 1
    y, x = _sincos_core(a.raw, oc, "tan.step")
    xs = x + (x == 0)
    t = (y << 32) // xs
    ovf_p = t > MAX_RAW
    ovf_n = t < MIN_RAW
    an = a.tag == TAG_NUM
    base = _trig_tags(a.tag)
    tag = _isel(an & ovf_p, TAG_PINF, _isel(an & ovf_n, TAG_NINF, base))
    return FixedScalar(t & -(tag == TAG_NUM), tag)


# ---------------------------------------------------------------------------
# Comparison, logic, class tests, select
# ---------------------------------------------------------------------------


_CMP_BIG = 1 << 68


def _cmp_bits(a: FixedScalar, b: FixedScalar) -> tuple[int, int, int]:
    # (lt, eq, bad): ordering over NUM/INF with a synthetic +/-BIG key;
    # bad = either side NA or NaN.
    at = a.tag
    bt = b.tag
    ka = a.raw + _CMP_BIG * ((at == TAG_PINF) - (at == TAG_NINF))
    kb = b.raw + _CMP_BIG * ((bt == TAG_PINF) - (bt == TAG_NINF))
    bad = ((at == TAG_NA) | (at == TAG_NAN)
           | (bt == TAG_NA) | (bt == TAG_NAN))
    return (ka < kb), (ka == kb), bad


def _cmp_result(bit: int, bad: int) -> FixedScalar:
    # tag is TAG_NA (== 1) exactly when bad.
    return FixedScalar(ONE & -(bit & (1 - bad)), bad & 1)


def _eq(a, b, oc):
    oc["=="] += 1
    lt, eq, bad = _cmp_bits(a, b)
    return _cmp_result(eq, bad)


def _ne(a, b, oc):
    oc["!="] += 1
    lt, eq, bad = _cmp_bits(a, b)
    return _cmp_result(1 - eq, bad)


def _lt(a, b, oc):
    oc["<"] += 1
    lt, eq, bad = _cmp_bits(a, b)
    return _cmp_result(lt, bad)


def _le(a, b, oc):
    oc["<="] += 1
    lt, eq, bad = _cmp_bits(a, b)
    return _cmp_result(lt | eq, bad)


def _gt(a, b, oc):
    oc[">"] += 1
    lt, eq, bad = _cmp_bits(a, b)
    return _cmp_result((1 - lt) & (1 - eq), bad)


def _ge(a, b, oc):
    oc[">="] += 1
    lt, eq, bad = _cmp_bits(a, b)
    return _cmp_result(1 - lt, bad)


def _truth_bits(a: FixedScalar) -> tuple[int, int, int]:
    # (truthy, falsy, unknown) for three-valued logic; infinities are
    # truthy, NA and NaN are both unknown (R's logical coercion).
    at = a.tag
    an = at == TAG_NUM
    falsy = an & (a.raw == 0)
    truthy = (an & (a.raw != 0)) | (at == TAG_PINF) | (at == TAG_NINF)
    unk = (at == TAG_NA) | (at == TAG_NAN)
    return truthy, falsy, unk


def _and(a, b, oc):
    oc["&"] += 1
    a_t, a_f, a_u = _truth_bits(a)
    b_t, b_f, b_u = _truth_bits(b)
    res_false = a_f | b_f
    res_unk = (1 - res_false) & (a_u | b_u)
    raw = ONE & -((1 - res_false) & (1 - res_unk))
    return FixedScalar(raw, res_unk & 1)


def _or(a, b, oc):
    oc["|"] += 1
    a_t, a_f, a_u = _truth_bits(a)
    b_t, b_f, b_u = _truth_bits(b)
    res_true = a_t | b_t
    res_unk = (1 - res_true) & (a_u | b_u)
    return FixedScalar(ONE & -res_true, res_unk & 1)


def _not(a, oc):
    oc["!"] += 1
    a_t, a_f, a_u = _truth_bits(a)
    return FixedScalar(ONE & -a_f, a_u & 1)


def _is_na(a, oc):
    oc["NA?"] += 1
    hit = (a.tag == TAG_NA) | (a.tag == TAG_NAN)
    return FixedScalar(ONE & -hit, TAG_NUM)


def _is_nan(a, oc):
    oc["NAN?"] += 1
    return FixedScalar(ONE & -(a.tag == TAG_NAN), TAG_NUM)


def _is_inf(a, oc):
    oc["INF?"] += 1
    hit = (a.tag == TAG_PINF) | (a.tag == TAG_NINF)
    return FixedScalar(ONE & -hit, TAG_NUM)


def ct_select(cond: FixedScalar, t: FixedScalar, f: FixedScalar,
              oc: OpCount | None = None) -> FixedScalar:
    """Two-way constant-trace choice: t when cond is truthy, f when falsy,
    NA when cond is NA/NaN. Identical step sequence for every cond."""
    if oc is None:
        oc = OpCount()
    oc["select"] += 1
    c_t, c_f, c_u = _truth_bits(cond)
    m = -c_t
    mu = -c_u
    raw = ((t.raw & m) | (f.raw & ~m)) & ~mu
    tag = (((t.tag & m) | (f.tag & ~m)) & ~mu) | (TAG_NA & mu)
    return FixedScalar(raw, tag)


# ---------------------------------------------------------------------------
# Public dispatch tables and spec-surface wrappers
# ---------------------------------------------------------------------------

ARITH_FN = {"+": _add, "-": _sub, "*": _mul, "/": _div, "%%": _mod, "^": _pow}
MATH1_FN = {"abs": _abs, "sign": _sign, "sqrt": _sqrt, "floor": _floor,
            "ceiling": _ceiling, "exp": _exp, "log": _log,
            "sin": _sin, "cos": _cos, "tan": _tan}
COMPARE_FN = {"==": _eq, "!=": _ne, "<": _lt, "<=": _le, ">": _gt, ">=": _ge}
LOGIC_FN = {"&": _and, "|": _or}
IS_FN = {"NA?": _is_na, "NAN?": _is_nan, "INF?": _is_inf}

_ARITH_ALIAS = {"add": "+", "sub": "-", "mul": "*", "div": "/",
                "mod": "%%", "pow": "^"}
_COMPARE_ALIAS = {"eq": "==", "ne": "!=", "lt": "<", "le": "<=",
                  "gt": ">", "ge": ">="}
_IS_ALIAS = {"is.na": "NA?", "is.nan": "NAN?", "is.infinite": "INF?"}


def arith(op: str, a: FixedScalar, b: FixedScalar,
          oc: OpCount | None = None) -> FixedScalar:
    """add/sub/mul/div/mod/pow (or +,-,*,/,%%,^)."""
    fn = ARITH_FN.get(_ARITH_ALIAS.get(op, op))
    if fn is None:
        raise ValueError(f"unknown arith op {op!r}")
    return fn(a, b, oc if oc is not None else OpCount())


def math1(op: str, a: FixedScalar, oc: OpCount | None = None) -> FixedScalar:
    """abs/sign/sqrt/floor/ceiling/exp/log/sin/cos/tan."""
    fn = MATH1_FN.get(op)
    if fn is None:
        raise ValueError(f"unknown math1 op {op!r}")
    return fn(a, oc if oc is not None else OpCount())


def compare(op: str, a: FixedScalar, b: FixedScalar,
            oc: OpCount | None = None) -> FixedScalar:
    """==,!=,<,<=,>,>= -> 0.0/1.0, or NA when either side is NA/NaN."""
    fn = COMPARE_FN.get(_COMPARE_ALIAS.get(op, op))
    if fn is None:
        raise ValueError(f"unknown compare op {op!r}")
    return fn(a, b, oc if oc is not None else OpCount())


def logic(op: str, a: FixedScalar, b: FixedScalar | None = None,
          oc: OpCount | None = None) -> FixedScalar:
    """Three-valued &, |, ! (Kleene truth tables)."""
    oc = oc if oc is not None else OpCount()
    if op == "!":
        if b is not None:
            raise ValueError("! is unary")
        return _not(a, oc)
    fn = LOGIC_FN.get(op)
    if fn is None:
        raise ValueError(f"unknown logic op {op!r}")
    if b is None:
        raise ValueError(f"{op} is binary")
    return fn(a, b, oc)


def is_class(op: str, a: FixedScalar, oc: OpCount | None = None) -> FixedScalar:
    """is.na / is.nan / is.infinite (NA?/NAN?/INF?) -> strict 0.0/1.0."""
    fn = IS_FN.get(_IS_ALIAS.get(op, op))
    if fn is None:
        raise ValueError(f"unknown class test {op!r}")
    return fn(a, oc if oc is not None else OpCount())

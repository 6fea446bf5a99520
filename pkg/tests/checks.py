"""Comparison helpers bridging oracle values and fixed-point results."""

from __future__ import annotations

import math
import struct

from otvm.fixedpoint import (
    TAG_NA, TAG_NAN, TAG_NINF, TAG_NUM, TAG_PINF, FixedScalar, to_double,
)

import oracles
from oracles import NA, snap_q32

MAXV = 2.0**31 - 2.0**-32
MINV = -(2.0**31)

NA_DOUBLE = struct.unpack("<d", struct.pack("<Q", 0x7FF00000000007A2))[0]


def as_oracle(x: float):
    """Double -> oracle value: the 1954-payload NaN becomes the NA marker."""
    if isinstance(x, float) and math.isnan(x):
        bits = struct.unpack("<Q", struct.pack("<d", x))[0]
        if bits & 0xFFFFFFFF == 1954:
            return NA
    return x


def matches(res: FixedScalar, ref, rel: float = 1e-5,
            abs_min: float = 2.0**-28) -> str | None:
    """None when res agrees with the oracle value ref, else a reason.

    Finite refs near the representable boundary accept saturation to the
    matching infinity, since the fixed-point range contract maps
    out-of-range magnitudes to the infinity tags.
    """
    if ref is NA:
        return None if res.tag == TAG_NA else f"want NA, got {res!r}"
    if isinstance(ref, float) and math.isnan(ref):
        return None if res.tag == TAG_NAN else f"want NaN, got {res!r}"
    if ref == math.inf:
        return None if res.tag == TAG_PINF else f"want +inf, got {res!r}"
    if ref == -math.inf:
        return None if res.tag == TAG_NINF else f"want -inf, got {res!r}"
    tol = max(abs_min, rel * abs(ref))
    if ref > MAXV - tol and res.tag == TAG_PINF:
        return None
    if ref < MINV + tol and res.tag == TAG_NINF:
        return None
    if res.tag != TAG_NUM:
        return f"want {ref!r}, got {res!r}"
    got = to_double(res)
    if abs(got - ref) <= tol:
        return None
    return f"want {ref!r} +/- {tol:g}, got {got!r}"


def assert_matches(res: FixedScalar, ref, rel: float = 1e-5,
                   abs_min: float = 2.0**-28, ctx: str = "") -> None:
    reason = matches(res, ref, rel, abs_min)
    assert reason is None, f"{ctx}: {reason}" if ctx else reason


# Per-op sampling domains for accuracy sweeps. Each sampler returns
# grid-snapped doubles so the oracle and the fixed path see the same
# exact inputs.


def _u(rng, lo, hi):
    return snap_q32(rng.uniform(lo, hi))


def _nonzero(rng, lo_mag, hi):
    v = rng.uniform(lo_mag, hi)
    return snap_q32(v if rng.random() < 0.5 else -v)


def sample_binary(op: str, rng):
    if op in ("+", "-", "*"):
        return _u(rng, -1000, 1000), _u(rng, -1000, 1000)
    if op == "/":
        return _u(rng, -1000, 1000), _nonzero(rng, 1e-3, 1000)
    if op == "%%":
        return _u(rng, -1000, 1000), _nonzero(rng, 0.5, 1000)
    if op == "^":
        return _u(rng, 0.1, 8.0), _u(rng, -3.0, 3.0)
    if op in ("==", "!=", "<", "<=", ">", ">="):
        a = _u(rng, -10, 10)
        b = a if rng.random() < 0.25 else _u(rng, -10, 10)
        return a, b
    raise ValueError(op)


def sample_unary(op: str, rng):
    if op == "exp":
        return _u(rng, -20, 20)
    if op == "log":
        return _u(rng, 1e-6, 20)
    if op in ("sin", "cos", "tan"):
        return _u(rng, -1000, 1000)
    if op == "sqrt":
        return _u(rng, 0, 1000)
    return _u(rng, -1000, 1000)


def special_pool(rng, n: int = 0) -> list:
    """Doubles spanning every tag class plus assorted magnitudes."""
    pool = [NA_DOUBLE, math.nan, math.inf, -math.inf, 0.0, -0.0,
            1.0, -1.0, 0.5, -2.5, 2.0**-32, -(2.0**-32),
            2.0**30, -(2.0**30), 1.5e9, -1.5e9, 3.125, 1954.0]
    for _ in range(n):
        pool.append(snap_q32(rng.uniform(-100, 100)))
    return pool

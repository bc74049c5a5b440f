"""Working-precision helpers built on MPFR (via gmpy2).

Deep nest levels need interval widths far below ``1e-300``, so the nest and
parameter code works with ``mpfr`` numbers whose significand length is chosen
adaptively.  Statistics along long orbits stay in binary64.
"""
import math
import os

import gmpy2
from gmpy2 import mpfr

MPFR = type(mpfr(0))

#: Significand length used when high precision is first switched on.
BASE_BITS = 128
#: Hard ceiling for adaptive escalation.
MAX_BITS = 1 << 17

_MODES = ("auto", "double", "high")


def precision_mode():
    """Return the default precision mode from ``NESTLAB_PRECISION``.

    ``auto`` (default) starts at ``BASE_BITS`` and escalates on demand,
    ``double`` starts at 53 bits, ``high`` starts at 512 bits.
    """
    mode = os.environ.get("NESTLAB_PRECISION", "auto").strip().lower()
    return mode if mode in _MODES else "auto"


def initial_bits(mode=None):
    mode = mode or precision_mode()
    return {"auto": BASE_BITS, "double": 53, "high": 512}[mode]


def working_bits(bits):
    """Context manager setting the MPFR working precision to ``bits``."""
    return gmpy2.context(gmpy2.get_context(), precision=int(bits))


def mp(x, bits=None):
    """Convert ``x`` (float, int, str or mpfr) to mpfr at ``bits`` precision."""
    if bits is None:
        return x if isinstance(x, MPFR) else mpfr(x)
    return mpfr(x, int(bits))


def is_mp(x):
    return isinstance(x, MPFR)


def log2abs(x):
    """Approximate ``log2|x|`` (within one unit) without underflow.

    Returns ``-inf`` for zero.
    """
    if isinstance(x, MPFR):
        if x == 0:
            return -math.inf
        return float(gmpy2.get_exp(x)) - 0.5
    x = abs(float(x))
    return math.log2(x) if x > 0 else -math.inf


def bits_for_tolerance(tol, margin=64):
    """Bits needed to resolve an absolute tolerance ``tol`` near unit scale."""
    lt = log2abs(tol)
    if not math.isfinite(lt):
        return MAX_BITS
    return max(BASE_BITS, int(math.ceil(-lt)) + margin)


def to_str(x, digits=None):
    """Round-trippable decimal representation of a float or mpfr."""
    if isinstance(x, MPFR):
        if digits is None:
            digits = int(x.precision * 0.30103) + 2
        if not gmpy2.is_finite(x):
            return str(x)
        if x == 0:
            return "0.0"
        # digits() gives value = 0.MANT * 10**exp; format() is unreliable across gmpy2 versions
        mant, exp, _ = x.digits(10, digits)
        sign = "-" if mant.startswith("-") else ""
        mant = mant.lstrip("-")
        return f"{sign}{mant[0]}.{mant[1:] or '0'}e{exp - 1:+d}"
    return repr(float(x))

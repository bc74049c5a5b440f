"""Principal nest, first-return and first-landing decompositions.

The nest ``I_1 > I_2 > ...`` is built by following the critical orbit in MPFR
arithmetic.  At the first return time ``m_i`` of the critical point to
``I_i`` the central domain ``I_{i+1}`` is obtained by pulling ``I_i`` back
along the branch word of the orbit, so no root finding is involved.  A
running bound on the propagated rounding error decides when a comparison is
unsafe; the whole construction is then repeated at a higher precision.

Conventions
-----------
* Words are ``bytes`` of branch symbols, one per iterate: ``0`` left of the
  critical point, ``1`` right of it, ``2`` the critical point itself.
* Levels are numbered from 1.  A level ``i`` is *non-central* when
  ``R_i(0)`` falls outside ``I_{i+1}``; :attr:`PrincipalNest.non_central_indices`
  lists these ``i``.  The decay ratio attached to a non-central level ``i`` is
  ``|I_{i+2}| / |I_{i+1}|``.
"""
import enum
import json
import math
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .errors import (BudgetExceeded, EscapedNest, InsufficientLevels,
                     NoReversingFixedPoint, PeriodicCritical, PrecisionExhausted)
from .maps import Perturbed, RealQuadratic
from .precision import (MAX_BITS, MPFR, initial_bits, log2abs, to_str, working_bits)

__all__ = [
    "Termination", "NestLevel", "PrincipalNest", "ReturnDomain", "DomainList",
    "Renormalizable", "NotDetected", "reversing_fixed_point", "build_nest",
    "return_domains", "landing_domains", "domain_of_critical_return",
    "scaling_ratios", "detect_renormalization", "nest_to_jsonl",
    "pullback", "iterate_word", "word_str",
]

LEFT, RIGHT, CRIT = 0, 1, 2


class Termination(str, enum.Enum):
    DEPTH_CAP = "depth cap"
    WIDTH_CAP = "width cap"
    RENORMALIZATION = "renormalization detected"
    PERIODIC_CRITICAL = "periodic critical point"
    PRECISION_EXHAUSTED = "precision exhausted"
    RETURN_BUDGET = "return-time budget exhausted"
    ESCAPED = "critical orbit attracted away from the nest"


def word_str(word):
    """Readable form of a branch word, e.g. ``b'\\x02\\x00\\x01'`` -> ``'CLR'``."""
    return "".join("LRC"[s] for s in word)


def word_from_str(text):
    return bytes("LRC".index(ch) for ch in text)


# --- branch operations at a fixed working precision ---------------------------

class _Ops:
    """Map, derivative and inverse branches specialised to MPFR arithmetic.

    Must be created and used inside a ``working_bits`` context.
    """

    def __init__(self, family):
        self.family = family
        if isinstance(family, RealQuadratic):
            t = family._t(mpfr(0))
            t = +t
            t1, it = t - 1, 1 / t
            self.t = t
            self.c = mpfr(0)
            self.fc = t1
            self.f = lambda y: t1 - t * y * y
            self.df = lambda y: -2 * t * y

            def inv(v, s, t1=t1, it=it):
                r = (t1 - v) * it
                r = gmpy2.sqrt(r) if r > 0 else r * 0
                return r if s else -r
            self.inv = inv
        elif isinstance(family, Perturbed):
            self.c = family.critical_point(mpfr(0))
            self.fc = family.f(self.c)
            self.f = family.f
            self.df = family.df
            self.inv = lambda v, s: family.inverse(v, 1 if s else -1)
        else:
            raise TypeError("nest construction needs a real unimodal family")

    def side(self, y):
        return RIGHT if y > self.c else LEFT


def pullback(ops, word, lo, hi):
    """Pull the interval ``[lo, hi]`` back along ``word`` (last symbol first).

    The result is the interval of points whose orbit follows ``word`` and
    lands in ``[lo, hi]`` after ``len(word)`` steps.  A symbol ``CRIT`` may only
    appear first; it produces the symmetric component around the critical
    point.
    """
    inv = ops.inv
    for k in range(len(word) - 1, -1, -1):
        s = word[k]
        if s == CRIT:
            if k:
                raise ValueError("critical symbol inside a word")
            low = lo if lo < hi else hi
            return inv(low, LEFT), inv(low, RIGHT)
        x0, x1 = inv(lo, s), inv(hi, s)
        lo, hi = (x0, x1) if x0 < x1 else (x1, x0)
    return lo, hi


def pullback_point(ops, word, x):
    inv = ops.inv
    for k in range(len(word) - 1, -1, -1):
        x = inv(x, word[k])
    return x


def iterate_word(ops, x, n):
    """Forward orbit ``x, f(x), ..., f^n(x)``."""
    out = [x]
    f = ops.f
    for _ in range(n):
        x = f(x)
        out.append(x)
    return out


# --- data types ---------------------------------------------------------------

@dataclass(frozen=True)
class NestLevel:
    """One level ``I_i = [left, right]`` of the principal nest.

    Attributes
    ----------
    index : int
        Level number ``i`` (from 1).
    left, right : mpfr
        Endpoints of ``I_i``.
    return_time : int or None
        First return time ``m_i`` of the critical point to ``I_i``; ``None``
        when the construction stopped before the return was seen.
    central_return : bool or None
        Whether ``R_i(0)`` lies in ``I_{i+1}``.
    critical_return : mpfr or None
        ``R_i(0)``.
    visits : tuple of int or None
        Times at which the critical orbit visits ``int I_i`` between
        ``m_i`` and the landing time ``m_{i+1}`` in ``I_{i+1}`` (inclusive).
    """

    index: int
    left: object
    right: object
    return_time: int = None
    central_return: bool = None
    critical_return: object = None
    visits: tuple = None

    @property
    def width(self):
        return self.right - self.left

    @property
    def log_width(self):
        return float(gmpy2.log(self.right - self.left))

    @property
    def central_return_time(self):
        return self.return_time

    @property
    def landing_itinerary_length(self):
        return None if self.visits is None else len(self.visits) - 1

    def contains(self, x):
        return self.left < x < self.right


@dataclass(frozen=True)
class PrincipalNest:
    """The principal nest of a real unimodal map.

    Attributes
    ----------
    family : MapFamily
    levels : tuple of NestLevel
    termination : Termination
    detail : dict
        Extra termination data (period of a restrictive interval, time
        reached, ...).
    bits : int
        MPFR precision at which the construction succeeded.
    signs : bytes
        Branch symbols of the critical orbit ``y_0 = c, y_1, ..., y_T``.
    """

    family: object
    levels: tuple
    termination: Termination
    detail: dict
    bits: int
    signs: bytes
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.levels)

    def level(self, i):
        if not 1 <= i <= len(self.levels):
            raise InsufficientLevels(f"level {i} not built", level=i, depth=len(self.levels))
        return self.levels[i - 1]

    @property
    def depth(self):
        return len(self.levels)

    @property
    def non_central_indices(self):
        return [lv.index for lv in self.levels if lv.central_return is False]

    @property
    def central_flags(self):
        return [lv.central_return for lv in self.levels if lv.central_return is not None]

    @property
    def return_times(self):
        return [lv.return_time for lv in self.levels if lv.return_time is not None]

    def ops(self, bits=None):
        return _Ops(self.family)

    def landing_word(self, i):
        """Branch word of ``R_i(0)`` up to its landing in ``I_{i+1}``."""
        lv = self.level(i)
        if lv.visits is None:
            raise InsufficientLevels(f"landing of level {i} not observed", level=i)
        return self.signs[lv.visits[0]:lv.visits[-1]]

    def first_landing_segment(self, i):
        """Word of the return domain ``I^{tau_i}_i`` that contains ``R_i(0)``."""
        lv = self.level(i)
        if lv.central_return:
            return self.central_word(i)
        if lv.visits is None or len(lv.visits) < 2:
            raise InsufficientLevels(f"second visit of level {i} not observed", level=i)
        return self.signs[lv.visits[0]:lv.visits[1]]

    def central_word(self, i):
        """Word of the central domain ``I_{i+1}`` of ``R_i``."""
        m = self.level(i).return_time
        if m is None:
            raise InsufficientLevels(f"return to level {i} not observed", level=i)
        return bytes([CRIT]) + self.signs[1:m]

    def tau_label(self, i):
        lv = self.level(i)
        if lv.central_return is None:
            return None
        if lv.central_return:
            return "0"
        try:
            return word_str(self.first_landing_segment(i))
        except InsufficientLevels:
            return "?"

    def tau_index(self, i, **kw):
        """Index of the return domain of ``I_i`` containing ``R_i(0)``."""
        lv = self.level(i)
        if lv.central_return:
            return 0
        doms = return_domains(self, i, **kw)
        seg = self.first_landing_segment(i)
        for d in doms:
            if d.word == seg:
                return d.index
        raise InsufficientLevels(f"domain of R_{i}(0) not enumerated", level=i)

    def to_records(self):
        yield {
            "record": "nest",
            "family": self.family.describe(),
            "depth": self.depth,
            "termination": self.termination.value,
            "detail": {k: (v if isinstance(v, (int, float, str)) else str(v))
                       for k, v in self.detail.items()},
            "bits": self.bits,
            "non_central_indices": self.non_central_indices,
        }
        for lv in self.levels:
            yield {
                "record": "level",
                "level": lv.index,
                "left": to_str(lv.left, 20),
                "right": to_str(lv.right, 20),
                "log_width": lv.log_width,
                "return_time": lv.return_time,
                "central_return": lv.central_return,
                "tau_label": self.tau_label(lv.index),
                "landing_itinerary_length": lv.landing_itinerary_length,
            }


def nest_to_jsonl(nest):
    """Serialize a nest: one header line, then one line per level."""
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in nest.to_records())


# --- fixed point ----------------------------------------------------------------

def reversing_fixed_point(family, bits=None):
    """Orientation-reversing fixed point ``p`` (``Df(p) < 0``); ``I_1 = [-p, p]``.

    Parameters
    ----------
    family : RealQuadratic or Perturbed
    bits : int, optional
        Return an mpfr at this precision instead of a float.

    Raises
    ------
    NoReversingFixedPoint
        When every fixed point has ``Df >= 0`` (``tau <= 1`` for quadratics).
    """
    if bits is not None:
        with working_bits(bits):
            return _reversing_fixed_point(family, mpfr(0))
    return float(_reversing_fixed_point(family, 0.0))


def _reversing_fixed_point(family, zero):
    if isinstance(family, RealQuadratic):
        t = family._t(zero)
        p = (t - 1) / t
        if not -2 * t * p < 0:
            raise NoReversingFixedPoint(f"no reversing fixed point for tau={family.tau}")
        return p
    if not isinstance(family, Perturbed):
        raise TypeError("real family required")
    c = family.critical_point(zero)
    lo, hi = c, zero + 1
    if not family.f(lo) - lo > 0:
        raise NoReversingFixedPoint("f(c) <= c")
    tol = 4e-16 if not isinstance(zero, type(mpfr(0))) else mpfr(2) ** (6 - zero.precision if zero.precision else -50)
    x = (lo + hi) / 2
    for _ in range(20000):
        h = family.f(x) - x
        if h > 0:
            lo = x
        else:
            hi = x
        d = family.df(x) - 1
        xn = x - h / d if d != 0 else (lo + hi) / 2
        if not lo < xn < hi:
            xn = (lo + hi) / 2
        if abs(xn - x) <= tol * (1 + abs(x)) or hi - lo <= tol:
            x = xn
            break
        x = xn
    if not family.df(x) < 0:
        raise NoReversingFixedPoint("fixed point is orientation preserving")
    return x


# --- nest construction ----------------------------------------------------------

class _NeedBits(Exception):
    def __init__(self, bits, state):
        self.bits = bits
        self.state = state


def _logaddexp2(a, b):
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log2(1.0 + 2.0 ** (b - a))


def build_nest(family, max_depth=64, min_width=1e-30, max_return_time=20000,
               central_cascade=40, period_tol=1e-12, max_period=64,
               bits=None, max_bits=MAX_BITS):
    """Build the principal nest of a real unimodal map.

    Parameters
    ----------
    family : RealQuadratic or Perturbed
    max_depth : int
        Maximum number of levels.
    min_width : float
        Stop once a level narrower than this is produced.
    max_return_time : int
        Budget on the total length of the critical orbit followed.
    central_cascade : int
        Consecutive central returns with a constant return time that are
        reported as a renormalization cascade.
    period_tol : float
        Distance below which the critical orbit is considered periodic.  It is
        applied relative to the current level (``min(period_tol, 1e-6 |I_n|)``)
        so that genuinely deep returns are not mistaken for periodicity.
    max_period : int
        Longest cycle checked for (pre)periodicity of the critical orbit.
    bits : int, optional
        Starting MPFR precision (default from the precision mode).
    max_bits : int
        Ceiling for precision escalation.

    Returns
    -------
    PrincipalNest

    Raises
    ------
    PeriodicCritical
        The critical point is periodic or preperiodic within tolerance.
    EscapedNest
        The critical orbit never returns to ``I_1``.
    PrecisionExhausted
        Precision ran out before the first level return could be decided.
    """
    bits = int(bits or initial_bits())
    while True:
        try:
            with working_bits(bits):
                state = _NestState(family, bits, max_depth, min_width, max_return_time,
                                   central_cascade, period_tol, max_period)
                state.run()
            return state.finish()
        except _NeedBits as exc:
            if bits >= max_bits:
                st = exc.state
                if st.first_return_seen():
                    st.termination = Termination.PRECISION_EXHAUSTED
                    return st.finish()
                raise PrecisionExhausted("precision exhausted before the first return",
                                         bits=bits) from None
            bits = min(max_bits, max(2 * bits, int(exc.bits)))


class _NestState:
    def __init__(self, family, bits, max_depth, min_width, max_return_time,
                 central_cascade, period_tol, max_period):
        self.family = family
        self.bits = bits
        self.max_depth = max_depth
        self.log_min_width = math.log2(min_width) if min_width > 0 else -math.inf
        self.max_return_time = max_return_time
        self.cascade = central_cascade
        self.period_tol = period_tol
        self.max_period = max_period
        self.ops = _Ops(family)
        self.levels = []
        self.signs = bytearray([CRIT])
        self.termination = None
        self.detail = {}

    def first_return_seen(self):
        return bool(self.levels) and self.levels[0]["return_time"] is not None

    def need(self, deficit):
        raise _NeedBits(self.bits + int(deficit) + 64, self)

    def _new_level(self, a, b):
        self.levels.append({"a": a, "b": b, "return_time": None, "central": None,
                            "ret": None, "visits": None})

    def run(self):
        try:
            self._run()
        except _Stop:
            pass

    def _run(self):
        ops = self.ops
        f, df, c = ops.f, ops.df, ops.c
        p = _reversing_fixed_point(self.family, mpfr(0))
        if isinstance(self.family, RealQuadratic):
            a1, b1 = -p, p
        else:
            q = ops.inv(p, LEFT if p > c else RIGHT)
            a1, b1 = (q, p) if q < p else (p, q)
        self._new_level(a1, b1)
        if self._width_stop(a1, b1):
            return
        y = c
        err = -self.bits + 1.0
        hist = []            # recent (y, log2|Df(y)|) for periodicity checks
        landing = None       # visit list of the level awaiting landing
        run_len, run_m = 0, None
        t = 0
        while True:
            if t >= self.max_return_time:
                self.termination = Termination.RETURN_BUDGET
                self.detail["time"] = t
                return
            d = df(y)
            ld = log2abs(d)
            hist.append((y, ld))
            if len(hist) > self.max_period + 1:
                hist.pop(0)
            y = f(y)
            t += 1
            err = _logaddexp2(err + ld, -self.bits + 2.0)
            # side of the critical point
            dist_c = abs(y - c)
            n = len(self.levels)
            cur = self.levels[-1]
            width = cur["b"] - cur["a"]
            lw = log2abs(width)
            tol_eff = min(math.log2(self.period_tol), math.log2(1e-6) + lw)
            ldc = log2abs(dist_c)
            if ldc < tol_eff:
                if ldc > err + 8:
                    raise PeriodicCritical("critical point returns within tolerance",
                                           time=t, distance=float(dist_c))
                if self.bits >= MAX_BITS:
                    raise PeriodicCritical("critical point hit at working precision", time=t)
                self.need(err + 16 - ldc if ldc > -math.inf else self.bits)
            if ldc < err + 6:
                self.need(err + 16 - ldc)
            self.signs.append(RIGHT if y > c else LEFT)
            # (pre)periodicity against recent orbit points, shallow regime only
            if lw > math.log2(1e-6):
                self._check_cycle(y, hist, err, cur)
            # landing bookkeeping for level n-1
            if landing is not None:
                prev = self.levels[-2]
                if self._inside(y, prev["a"], prev["b"], err):
                    landing.append(t)
            if not self._inside(y, cur["a"], cur["b"], err):
                continue
            # first return of the critical point to I_n (and central cascade)
            while True:
                cur["return_time"] = t
                cur["ret"] = y
                if landing is not None:
                    self.levels[-2]["visits"] = tuple(landing)
                landing = [t]
                a, b = self._central_domain(t, cur)
                if a is None:
                    self.termination = Termination.RENORMALIZATION
                    self.detail["period"] = t
                    self.detail["level"] = n
                    cur["central"] = None
                    return
                central = self._inside(y, a, b, err)
                cur["central"] = central
                if central:
                    if run_m == t:
                        run_len += 1
                    else:
                        run_len, run_m = 1, t
                    if run_len >= self.cascade:
                        self._new_level(a, b)
                        self.termination = Termination.RENORMALIZATION
                        self.detail["period"] = t
                        self.detail["level"] = n + 1 - run_len
                        return
                else:
                    run_len, run_m = 0, None
                self._new_level(a, b)
                n += 1
                if n >= self.max_depth:
                    self.termination = Termination.DEPTH_CAP
                    return
                if self._width_stop(a, b):
                    return
                cur = self.levels[-1]
                if not central:
                    break
                # central return: the same orbit point is already in I_{n}
                landing = [t]
                self.levels[-2]["visits"] = (t,)

    def _width_stop(self, a, b):
        lw = log2abs(b - a)
        if lw < self.log_min_width:
            self.termination = Termination.WIDTH_CAP
            return True
        return False

    def _inside(self, y, a, b, err):
        da, db = y - a, b - y
        la, lb = log2abs(da), log2abs(db)
        if min(la, lb) < err + 6:
            self.need(err + 16 - min(la, lb))
        return da > 0 and db > 0

    def _central_domain(self, m, cur):
        """Pull ``I_n`` back along the critical word; ``None`` if restrictive."""
        ops = self.ops
        lo, hi = pullback(ops, self.signs[1:m], cur["a"], cur["b"])
        if not lo < ops.fc:
            raise _NeedBits(self.bits * 2, self)
        a, b = ops.inv(lo, LEFT), ops.inv(lo, RIGHT)
        half = b - a
        if log2abs(half) * 2 < -self.bits + 24:
            self.need(-2 * log2abs(half) + 64 - self.bits)
        if a <= cur["a"] and b >= cur["b"]:
            return None, None
        if not (a > cur["a"] and b < cur["b"]):
            # rounding-level overlap with the parent interval
            self.need(64)
        return a, b

    def _check_cycle(self, y, hist, err, cur):
        tol = self.period_tol
        acc = 0.0
        for p in range(1, len(hist)):
            yp, ld = hist[-p]
            acc += ld
            dist = abs(y - yp)
            if dist < tol:
                ldist = log2abs(dist)
                if ldist > err + 8 or ldist == -math.inf and self.bits >= 2048:
                    if acc > 0:
                        raise PeriodicCritical("critical orbit lands on a repelling cycle",
                                               period=p)
                    if not self.first_return_seen() or not (cur["a"] < y < cur["b"]):
                        if not self.first_return_seen():
                            raise EscapedNest("critical orbit attracted to a cycle",
                                              period=p)
                        self.termination = Termination.ESCAPED
                        self.detail["period"] = p
                        raise _Stop
                elif ldist <= err + 8:
                    self.need(err + 24 - max(ldist, -self.bits))

    def finish(self):
        if self.termination is None:
            self.termination = Termination.RETURN_BUDGET
        lvls = []
        for i, d in enumerate(self.levels, 1):
            lvls.append(NestLevel(i, d["a"], d["b"], d["return_time"], d["central"],
                                  d["ret"], d["visits"]))
        if not lvls or lvls[0].return_time is None:
            if self.termination in (Termination.RETURN_BUDGET, Termination.ESCAPED):
                raise EscapedNest("critical orbit never returned to I_1",
                                  time=self.detail.get("time"))
        return PrincipalNest(self.family, tuple(lvls), self.termination, dict(self.detail),
                             self.bits, bytes(self.signs))


class _Stop(Exception):
    pass


# --- return and landing domains -------------------------------------------------

@dataclass(frozen=True)
class ReturnDomain:
    """A branch domain of the first return (or landing) map of level ``level``.

    ``word`` holds the branch symbols of the points of the domain up to the
    return; ``return_time == len(word)``.  ``index`` is 0 for the central
    domain, positive to the right and negative to the left of it, with
    ``|index|`` growing away from the critical point.  Landing domains carry
    the itinerary of return-domain indices instead.
    """

    level: int
    left: object
    right: object
    index: int
    return_time: int
    word: bytes
    itinerary: tuple = ()

    @property
    def width(self):
        return self.right - self.left

    def contains(self, x):
        return self.left <= x <= self.right

    def to_record(self):
        return {"level": self.level, "left": to_str(self.left, 20),
                "right": to_str(self.right, 20), "index": self.index,
                "return_time": self.return_time, "word": word_str(self.word),
                "itinerary": list(self.itinerary)}


class DomainList(list):
    """List of domains with enumeration bookkeeping.

    Attributes
    ----------
    unresolved : float
        Fraction of the window not covered because of pruning (width floor or
        time budget) or truncation by the window.
    truncated : bool
        True when ``max_domains`` stopped the enumeration.
    """

    def __init__(self, items=(), level=None, unresolved=0.0, truncated=False, bits=None):
        super().__init__(items)
        self.level = level
        self.unresolved = unresolved
        self.truncated = truncated
        self.bits = bits


def _domain_bits(nest, lv, width_floor):
    lw = log2abs(lv.width)
    return max(128, int(96 + math.log2(1.0 / width_floor) - 2 * lw))


def _exact(x):
    # mpfr inputs are taken as given, not rounded to the working precision
    return x if isinstance(x, MPFR) else mpfr(x)


def _index_domains(doms, c):
    right = sorted((d for d in doms if d.left >= c), key=lambda d: d.left)
    left = sorted((d for d in doms if d.right <= c), key=lambda d: d.right, reverse=True)
    out = []
    for k, d in enumerate(right, 1):
        out.append(ReturnDomain(d.level, d.left, d.right, k, d.return_time, d.word, d.itinerary))
    for k, d in enumerate(left, 1):
        out.append(ReturnDomain(d.level, d.left, d.right, -k, d.return_time, d.word, d.itinerary))
    return out


def return_domains(nest, i, window=None, max_domains=20000, width_floor=1e-3,
                   max_return_time=None, include_central=True):
    """Enumerate return domains of ``R_i`` meeting a width floor.

    Cut points (preimages of ``dI_i``) are propagated by splitting the image
    of every phase piece where it crosses ``dI_i``; the phase position of each
    cut is obtained by exact pullback along the piece's branch word.

    Parameters
    ----------
    nest : PrincipalNest
    i : int
        Level.
    window : (float, float), optional
        Sub-interval of ``I_i`` (default: all of ``I_i``).
    max_domains : int
    width_floor : float
        Pieces narrower than ``width_floor * |I_i|`` are abandoned.
    max_return_time : int, optional
        Default ``50 m_i + 1000``.
    include_central : bool

    Returns
    -------
    DomainList
        Domains sorted from left to right.

    Raises
    ------
    BudgetExceeded
        When ``max_domains`` is reached; the partial list is attached.
    """
    lv = nest.level(i)
    key = ("rd", i, window, max_domains, width_floor, max_return_time, include_central)
    if key in nest._cache:
        return nest._cache[key]
    m = lv.return_time
    if max_return_time is None:
        max_return_time = 50 * (m or 1) + 1000
    bits = _domain_bits(nest, lv, width_floor)
    with working_bits(bits):
        ops = _Ops(nest.family)
        # keep the level's own endpoints so boundary domains end exactly on them
        a, b = lv.left, lv.right
        wa, wb = (a, b) if window is None else (max(a, _exact(window[0])), min(b, _exact(window[1])))
        total = wb - wa
        if not total > 0:
            raise ValueError("window does not meet I_i")
        floor_abs = (b - a) * width_floor
        snap = (b - a) * mpfr(2) ** -40
        found, lost = [], mpfr(0)
        stack = []
        central = None
        if m is not None and i < nest.depth:
            nxt = nest.level(i + 1)
            central = (nxt.left, nxt.right)
        parts = []
        if central is None:
            # central domain unknown: split at the critical point only
            parts = [(wa, min(wb, ops.c)), (max(wa, ops.c), wb)]
        else:
            ca, cb = central
            parts = [(wa, min(wb, ca)), (max(wa, cb), wb)]
            if include_central and wa <= ca and cb <= wb:
                found.append(ReturnDomain(i, ca, cb, 0, m, nest.central_word(i)))
            elif min(wb, cb) > max(wa, ca):
                lost += min(wb, cb) - max(wa, ca)
        for u0, u1 in parts:
            if not u1 > u0:
                continue
            s = RIGHT if u0 >= ops.c else LEFT
            stack.append((u0, u1, ops.f(u0), ops.f(u1), bytes([s]), 1))
        truncated = False
        f = ops.f
        while stack:
            u0, u1, v0, v1, word, k = stack.pop()
            if u1 - u0 < floor_abs:
                lost += u1 - u0
                continue
            # boundary orbits land exactly on dI_i; absorb their rounding
            if abs(v0 - a) < snap:
                v0 = a
            elif abs(v0 - b) < snap:
                v0 = b
            if abs(v1 - a) < snap:
                v1 = a
            elif abs(v1 - b) < snap:
                v1 = b
            if v0 <= v1:
                ul, vl, uh, vh = u0, v0, u1, v1
            else:
                ul, vl, uh, vh = u1, v1, u0, v0
            if vh <= a or vl >= b:
                if k >= max_return_time:
                    lost += u1 - u0
                    continue
                s = RIGHT if vl >= b else LEFT
                stack.append((u0, u1, f(v0), f(v1), word + bytes([s]), k + 1))
                continue
            # the image meets int I_i: split at the boundary points
            mid_lo, mid_hi = ul, uh
            if vl < a:
                ua = pullback_point(ops, word, a)
                stack.append((min(ul, ua), max(ul, ua), vl if ul < ua else a,
                              a if ul < ua else vl, word, k))
                mid_lo = ua
            if vh > b:
                ub = pullback_point(ops, word, b)
                stack.append((min(uh, ub), max(uh, ub), b if ub < uh else vh,
                              vh if ub < uh else b, word, k))
                mid_hi = ub
            lo_, hi_ = (mid_lo, mid_hi) if mid_lo < mid_hi else (mid_hi, mid_lo)
            if vl <= a and vh >= b:
                found.append(ReturnDomain(i, lo_, hi_, 0, k, word))
                if len(found) >= max_domains:
                    truncated = True
                    break
            else:
                lost += hi_ - lo_
        doms = [d for d in found if d.index == 0 and d.word[:1] == bytes([CRIT])]
        lat = [d for d in found if d.word[:1] != bytes([CRIT])]
        # the domain hit by the critical orbit is always reported
        try:
            hit = domain_of_critical_return(nest, i, _ops=ops)
        except InsufficientLevels:
            hit = None
        if hit is not None and hit.index != 0 and all(d.word != hit.word for d in lat):
            if wa <= hit.left and hit.right <= wb:
                lat.append(hit)
                lost -= min(lost, hit.width)
        out = DomainList(sorted(doms + _index_domains(lat, ops.c), key=lambda d: d.left),
                         level=i, unresolved=float(lost / total), truncated=truncated, bits=bits)
    if truncated:
        raise BudgetExceeded(f"more than {max_domains} domains", partial=out,
                             level=i, max_domains=max_domains)
    nest._cache[key] = out
    return out


def domain_of_critical_return(nest, i, _ops=None):
    """Return domain of ``I_i`` containing ``R_i(0)`` (from the critical orbit)."""
    lv = nest.level(i)
    if lv.central_return is None:
        raise InsufficientLevels(f"R_{i}(0) not computed", level=i)
    if lv.central_return:
        nxt = nest.level(i + 1)
        return ReturnDomain(i, nxt.left, nxt.right, 0, lv.return_time, nest.central_word(i))
    word = nest.first_landing_segment(i)
    # this domain can be far thinner than any enumeration floor, so pull back
    # at the precision that resolved the critical orbit itself
    with working_bits(max(nest.bits, gmpy2.get_context().precision)):
        ops = _Ops(nest.family)
        lo, hi = pullback(ops, word, lv.left, lv.right)
        c = ops.c
    return ReturnDomain(i, lo, hi, 0 if lo < c < hi else 1, len(word), word)


def landing_domains(nest, i, max_itinerary_length=2, width_floor=1e-3,
                    max_domains=20000, domains=None):
    """First-landing domains ``C^d_i`` from ``I_i`` to ``I_{i+1}``.

    ``C^d_i`` with ``d = (j_1, ..., j_m)`` is the set of points that follow the
    lateral return branches ``j_1, ..., j_m`` and then enter ``I_{i+1}``.  The
    empty itinerary gives ``I_{i+1}`` itself.

    Parameters
    ----------
    nest : PrincipalNest
    i : int
    max_itinerary_length : int
    width_floor : float
        Relative to ``|I_i|``.
    max_domains : int
    domains : DomainList, optional
        Precomputed return domains of level ``i``.

    Returns
    -------
    DomainList
    """
    lv = nest.level(i)
    if lv.return_time is None or i >= nest.depth:
        raise InsufficientLevels(f"I_{i + 1} not built", level=i)
    if domains is None:
        domains = return_domains(nest, i, width_floor=width_floor)
    lateral = [d for d in domains if d.index != 0]
    bits = max(domains.bits or nest.bits, _domain_bits(nest, lv, width_floor))
    out = []
    with working_bits(bits):
        ops = _Ops(nest.family)
        nxt = nest.level(i + 1)
        floor_abs = lv.width * width_floor
        frontier = [ReturnDomain(i, +nxt.left, +nxt.right, 0, 0, b"", ())]
        out.append(frontier[0])
        for _ in range(max_itinerary_length):
            new = []
            for cd in frontier:
                for d in lateral:
                    lo, hi = pullback(ops, d.word, cd.left, cd.right)
                    if hi - lo < floor_abs:
                        continue
                    new.append(ReturnDomain(i, lo, hi, d.index, d.return_time + cd.return_time,
                                            d.word + cd.word, (d.index,) + cd.itinerary))
            out.extend(new)
            if len(out) > max_domains:
                raise BudgetExceeded(f"more than {max_domains} landing domains",
                                     partial=DomainList(out[:max_domains], level=i),
                                     level=i)
            frontier = new
    return DomainList(sorted(out, key=lambda d: d.left), level=i, bits=bits)


def verify_return_domain(nest, dom, rel_tol=1e-9, target=None, samples=0):
    """Check the return-time contract of a domain by forward iteration.

    Endpoint and midpoint orbits must avoid ``int I_i`` before the return
    time (allowing ``rel_tol |I_i|`` slack) and land in the target interval
    (``I_i`` by default) at the return time, endpoints on its boundary.
    Lateral branches are additionally checked for strict monotonicity at
    ``samples`` interior points.
    """
    lv = nest.level(dom.level)
    lw = log2abs(lv.width)
    rel = log2abs(dom.width) - lw if dom.width > 0 else -float(nest.bits)
    bits = max(nest.bits, _domain_bits(nest, lv, 1e-6), int(96 - rel - 2 * lw))
    with working_bits(bits):
        ops = _Ops(nest.family)
        a, b = +lv.left, +lv.right
        ta, tb = (a, b) if target is None else (+target[0], +target[1])
        tol_i = (b - a) * rel_tol
        tol_t = (tb - ta) * rel_tol
        pts = [+dom.left, +dom.right, (dom.left + dom.right) / 2]
        m = dom.return_time
        for j, x in enumerate(pts):
            for k in range(1, m + 1):
                x = ops.f(x)
                if k < m and target is None and a + tol_i < x < b - tol_i:
                    return False
            if not ta - tol_t <= x <= tb + tol_t:
                return False
            if j < 2 and min(abs(x - ta), abs(x - tb)) > tol_t:
                return False
        if samples and dom.index != 0:
            xs = [dom.left + (dom.right - dom.left) * mpfr(k) / (samples + 1)
                  for k in range(samples + 2)]
            ys = []
            for x in xs:
                for _ in range(m):
                    x = ops.f(x)
                ys.append(x)
            inc = all(y1 > y0 for y0, y1 in zip(ys, ys[1:]))
            dec = all(y1 < y0 for y0, y1 in zip(ys, ys[1:]))
            if not (inc or dec):
                return False
    return True


# --- scaling and renormalization ------------------------------------------------

def scaling_ratios(nest):
    """Decay ratios ``(k, |I_{l_k+2}| / |I_{l_k+1}|)`` over non-central levels ``l_k``.

    Raises
    ------
    InsufficientLevels
        Fewer than two ratios are available.
    """
    out = []
    for k, l in enumerate(nest.non_central_indices, 1):
        if l + 2 <= nest.depth:
            r = nest.level(l + 2).log_width - nest.level(l + 1).log_width
            out.append((k, math.exp(r)))
    if len(out) < 2:
        raise InsufficientLevels("need at least two non-central levels", available=len(out))
    return out


def log_scaling_ratios(nest):
    """Like :func:`scaling_ratios` but returns natural logs (no underflow)."""
    out = []
    for k, l in enumerate(nest.non_central_indices, 1):
        if l + 2 <= nest.depth:
            out.append((k, nest.level(l + 2).log_width - nest.level(l + 1).log_width))
    return out


@dataclass(frozen=True)
class Renormalizable:
    level: int
    period: int

    def __bool__(self):
        return True


@dataclass(frozen=True)
class NotDetected:
    def __bool__(self):
        return False


def detect_renormalization(nest, K_central=40):
    """Look for the cascade signature of a restrictive interval.

    Returns :class:`Renormalizable` when ``K_central`` consecutive central
    returns share one return time (or the builder found the central branch
    mapping a level into itself), else :class:`NotDetected`.
    """
    if nest.termination == Termination.RENORMALIZATION and "period" in nest.detail:
        run = 0
        for lv in nest.levels:
            run = run + 1 if lv.central_return else 0
        if nest.levels[-1].central_return is None or run >= K_central:
            return Renormalizable(int(nest.detail.get("level", 1)), int(nest.detail["period"]))
    run, m0, start = 0, None, None
    for lv in nest.levels:
        if lv.central_return and lv.return_time == m0:
            run += 1
        elif lv.central_return:
            run, m0, start = 1, lv.return_time, lv.index
        else:
            run, m0 = 0, None
        if run >= K_central:
            return Renormalizable(start, m0)
    return NotDetected()

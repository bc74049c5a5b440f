"""Parameter windows and the phase-parameter correspondence.

For a one-parameter curve ``lam -> f_lam`` and a base parameter ``lam0`` the
combinatorics of the principal nest of ``f_lam0`` up to level ``i`` is frozen
into a *template* (branch word of the critical orbit and return times).  While
``lam`` stays in the window ``J_i`` every object of the nest can be continued
by replaying the template with the inverse branches of ``f_lam``.  Points of
the boundary set ``K_i`` are addressed symbolically (a level endpoint pulled
back along a branch word), so their continuation is exact.

* ``J_1`` is the component of the level-1 signature around ``lam0``, found by
  expanding steps and bisection.
* For ``i >= 2``, ``J_i = Xi_{i-1}(C_{i-1})`` where ``C_{i-1}`` is the landing
  domain of ``R_{i-1}(0)``; its endpoints solve
  ``R_{i-1}(0)[lam] = x(lam)`` for the two boundary addresses of ``C_{i-1}``.
* ``Xi_i(x)`` is the unique ``lam`` in ``J_i`` with ``R_i(0)[lam] = x(lam)``.
"""
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import (AddressUnresolvable, EscapedNest, InsufficientLevels,
                     InsufficientRows, MonotonicityViolation, NestlabError,
                     NotInF, PeriodicCritical, PrecisionExhausted)
from .maps import QuadraticFamily
from .nest import (CRIT, LEFT, RIGHT, Termination, _Ops, _reversing_fixed_point, RealQuadratic,
                   build_nest, pullback, pullback_point, return_domains, word_str)
from .precision import log2abs, to_str, working_bits

__all__ = [
    "Address", "CombinatorialSignature", "ParamWindow", "XiTable",
    "QsDistortionReport", "PhaseParameter", "DeepParameter",
    "combinatorial_signature", "param_window", "xi_samples",
    "phase_phase_samples", "qs_distortion", "parameter_scaling_ratios",
    "descend", "log_parameter_scaling_ratios", "phpa1_addresses", "phpa2_addresses", "windows_csv",
    "xi_table_csv",
]


# --- symbolic addresses -----------------------------------------------------------

@dataclass(frozen=True)
class Address:
    """A point of ``K_i`` given symbolically.

    The point is the base point of level ``level`` (``'L'``/``'R'`` endpoint of
    ``I_level``, or ``'u'``: the affine fraction ``fraction`` in ``(-1, 1)``)
    pulled back along ``word``.
    """

    level: int
    base: str
    word: bytes = b""
    fraction: object = None

    def __str__(self):
        b = self.base if self.base != "u" else f"u{float(self.fraction):+.6f}"
        return f"{self.level}{b}:{word_str(self.word)}"

    def shift(self):
        """Address of the image point (drops the first branch symbol)."""
        if not self.word:
            raise ValueError("empty word")
        return Address(self.level, self.base, self.word[1:], self.fraction)


@dataclass(frozen=True)
class CombinatorialSignature:
    """Return times, central flags and landing words of levels ``1..i``.

    Two parameters lie in the same window ``J_i`` exactly when their
    signatures at level ``i`` coincide.
    """

    level: int
    records: tuple

    def __str__(self):
        return ";".join(f"{m}{'c' if c else 'n'}:{w}" for m, c, w in self.records)


def combinatorial_signature(family, i, max_return_time=20000, nest=None):
    """Signature of the principal nest of ``family`` at level ``i``.

    Levels ``1..i-1`` contribute ``(m_k, central_k, landing word)``; level ``i``
    contributes its return time only.

    Raises
    ------
    NotInF
        If the nest does not reach a return at level ``i``.
    """
    if nest is None:
        try:
            nest = build_nest(family, max_depth=i + 1, min_width=0.0,
                              max_return_time=max_return_time)
        except (EscapedNest, PeriodicCritical) as exc:
            raise NotInF(f"no principal nest: {exc}", level=0) from None
    if nest.depth < i or nest.level(i).return_time is None:
        raise NotInF(f"nest stops before the return at level {i}",
                     level=nest.depth, termination=nest.termination.value)
    recs = []
    for k in range(1, i):
        lv = nest.level(k)
        recs.append((lv.return_time, bool(lv.central_return), word_str(nest.landing_word(k))))
    recs.append((nest.level(i).return_time, None, ""))
    return CombinatorialSignature(i, tuple(recs))


# --- windows, tables and reports -------------------------------------------------------

@dataclass(frozen=True)
class ParamWindow:
    """Parameter window ``J_i = [lo, hi]`` with the solver tolerance used."""

    level: int
    lo: object
    hi: object
    tol: object
    bits: int = 0

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def log_width(self):
        return float(gmpy2.log(self.hi - self.lo))

    def contains(self, lam):
        return self.lo <= lam <= self.hi

    @property
    def digits(self):
        """Decimal digits that resolve the window to about ``1e-12`` of its width."""
        return max(20, int(-self.log_width / math.log(10)) + 14)

    def to_record(self):
        d = self.digits
        return {"level": self.level, "lo": to_str(self.lo, d), "hi": to_str(self.hi, d),
                "log_width": self.log_width, "tol": float(self.tol)}


@dataclass(frozen=True)
class XiTable:
    """Rows ``(address, x at lam0, Xi_i(x))`` sorted by phase position."""

    level: int
    addresses: tuple
    phase: tuple
    params: tuple
    orientation: int
    tag: str = ""

    def arrays(self):
        """Phase and parameter columns normalized to ``[0, 1]`` as floats."""
        x = list(self.phase)
        y = list(self.params)
        x0, x1 = min(x), max(x)
        y0, y1 = min(y), max(y)
        xs = np.array([float((v - x0) / (x1 - x0)) for v in x])
        ys = np.array([float((v - y0) / (y1 - y0)) for v in y])
        return xs, ys

    def is_monotone(self):
        ys = self.params
        inc = all(b > a for a, b in zip(ys, ys[1:]))
        dec = all(b < a for a, b in zip(ys, ys[1:]))
        return inc or dec


@dataclass(frozen=True)
class QsDistortionReport:
    """Largest symmetric-triple ratio found (a lower bound of the qs constant)."""

    level: int
    tag: str
    M: float
    triples: int
    worst: tuple = ()


# --- continuation machinery -----------------------------------------------------------

def _levels_at(ops, family, signs, rts, upto):
    """Continue ``I_1..I_upto`` at the parameter of ``ops``."""
    p = _reversing_fixed_point(family, mpfr(0))
    if isinstance(family, RealQuadratic):
        lv = [(-p, p)]
    else:
        q = ops.inv(p, LEFT if p > ops.c else RIGHT)
        lv = [(q, p) if q < p else (p, q)]
    for k in range(1, upto):
        a, b = lv[-1]
        lo, _ = pullback(ops, signs[1:rts[k - 1]], a, b)
        lv.append((ops.inv(lo, LEFT), ops.inv(lo, RIGHT)))
    return lv


def _address_point(ops, lv, addr):
    a, b = lv[addr.level - 1]
    if addr.base == "L":
        x = a
    elif addr.base == "R":
        x = b
    else:
        x = (a + b) / 2 + (b - a) / 2 * addr.fraction
    return pullback_point(ops, addr.word, x)


def _solve_bracket(fn, lo, hi, flo, fhi, tol, max_iter=4000):
    """Illinois regula falsi with bisection safeguard on a sign-changing bracket."""
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise AddressUnresolvable("no sign change on the bracket")
    side = 0
    for it in range(max_iter):
        if hi - lo <= tol:
            break
        width = hi - lo
        if it % 4 == 3:
            x = (lo + hi) / 2
        else:
            x = (lo * fhi - hi * flo) / (fhi - flo)
            if not lo < x < hi:
                x = (lo + hi) / 2
        fx = fn(x)
        if fx == 0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
            if side == -1:
                fhi /= 2
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo /= 2
            side = 1
        if hi - lo > width * 0.75 and it % 4 == 2:
            m = (lo + hi) / 2
            fm = fn(m)
            if (fm > 0) == (flo > 0):
                lo, flo = m, fm
            else:
                hi, fhi = m, fm
    else:
        raise AddressUnresolvable("solver budget exhausted")
    return (lo + hi) / 2


class PhaseParameter:
    """Phase-parameter machinery around a base parameter ``lam0``.

    Parameters
    ----------
    curve : QuadraticFamily or PerturbedFamily
    lam0 : float, str or mpfr
    nest : PrincipalNest, optional
        Nest of ``curve.at(lam0)``; built on demand.
    rel_tol : float
        Window endpoints are solved to ``rel_tol`` times the expected window
        width.
    max_return_time : int
        Budget for the base nest.
    """

    def __init__(self, curve, lam0, nest=None, rel_tol=1e-8, max_return_time=20000,
                 max_depth=64, windows=None):
        self.curve = curve
        self.lam0 = lam0 if isinstance(lam0, type(mpfr(0))) else mpfr(str(lam0), 256)
        self.rel_tol = rel_tol
        if nest is None:
            try:
                nest = build_nest(curve.at(self.lam0), max_depth=max_depth, min_width=0.0,
                                  max_return_time=max_return_time)
            except (EscapedNest, PeriodicCritical) as exc:
                raise NotInF(str(exc)) from None
        self.nest = nest
        self.signs = nest.signs
        self.rts = [lv.return_time for lv in nest.levels if lv.return_time is not None]
        self.windows = dict(windows or {})

    @property
    def max_level(self):
        return len(self.rts)

    def _bits(self, tol):
        return max(self.nest.bits, self.lam0.precision, int(-log2abs(tol)) + 96)

    def _phi(self, i, addr, bits):
        """``lam -> R_i(0)[lam] - x_addr(lam)``."""
        signs, rts, curve = self.signs, self.rts, self.curve
        upto = max(i, addr.level)
        m = rts[i - 1]

        def phi(lam):
            fam = curve.at(lam)
            ops = _Ops(fam)
            lv = _levels_at(ops, fam, signs, rts, upto)
            y = ops.c
            f = ops.f
            for _ in range(m):
                y = f(y)
            return y - _address_point(ops, lv, addr)
        return phi

    def point(self, addr, lam=None, bits=None):
        """Coordinate of ``addr`` at parameter ``lam`` (default ``lam0``)."""
        lam = self.lam0 if lam is None else lam
        bits = bits or max(self.nest.bits, getattr(lam, "precision", 53))
        with working_bits(bits):
            fam = self.curve.at(lam)
            ops = _Ops(fam)
            lv = _levels_at(ops, fam, self.signs, self.rts, addr.level)
            return _address_point(ops, lv, addr)

    def critical_return(self, i, lam=None, bits=None):
        lam = self.lam0 if lam is None else lam
        bits = bits or max(self.nest.bits, getattr(lam, "precision", 53))
        with working_bits(bits):
            ops = _Ops(self.curve.at(lam))
            y = ops.c
            for _ in range(self.rts[i - 1]):
                y = ops.f(y)
            return y

    # windows ---------------------------------------------------------------------
    def window(self, i):
        """``J_i`` (computed recursively and cached)."""
        if i in self.windows:
            return self.windows[i]
        if i > self.max_level:
            raise InsufficientLevels(f"base nest has no return at level {i}", level=i)
        if i == 1:
            w = self._window1()
        else:
            prev = self.window(i - 1)
            landing = self.signs[self.rts[i - 2]:self.rts[i - 1]]
            # expected width from the phase proportion of the landing domain
            ratio = self._phase_ratio(i, landing)
            tol = prev.width * ratio * self.rel_tol
            ends = [self.xi(i - 1, Address(i, s, landing), tol=tol) for s in "LR"]
            lo, hi = min(ends), max(ends)
            w = ParamWindow(i, lo, hi, tol, self._bits(tol))
        if not w.lo <= self.lam0 <= w.hi:
            raise MonotonicityViolation(f"lam0 outside the computed J_{i}", level=i)
        self.windows[i] = w
        return w

    def _phase_ratio(self, i, landing):
        with working_bits(max(self.nest.bits, 128)):
            ops = _Ops(self.curve.at(self.lam0))
            a, b = self.nest.level(i).left, self.nest.level(i).right
            lo, hi = pullback(ops, landing, a, b)
            pa, pb = self.nest.level(i - 1).left, self.nest.level(i - 1).right
            return (hi - lo) / (pb - pa)

    def _signature1(self, lam, bits):
        m = self.rts[0]
        with working_bits(bits):
            fam = self.curve.at(lam)
            ops = _Ops(fam)
            try:
                p = _reversing_fixed_point(fam, mpfr(0))
            except NestlabError:
                return False
            a, b = (-p, p) if isinstance(fam, RealQuadratic) else sorted(
                (p, ops.inv(p, LEFT if p > ops.c else RIGHT)))
            y = ops.c
            for t in range(1, m + 1):
                y = ops.f(y)
                inside = a < y < b
                if t < m:
                    if inside or (RIGHT if y > ops.c else LEFT) != self.signs[t]:
                        return False
                elif not inside:
                    return False
            return True

    def _window1(self):
        lo_b, hi_b = (mpfr(str(x)) for x in self.curve.bounds)
        width0 = abs(self.nest.level(1).width)
        tol = mpfr(self.rel_tol) * 1e-3
        bits = self._bits(tol)
        lam0 = self.lam0
        if not self._signature1(lam0, bits):
            raise NotInF("base parameter fails its own level-1 signature")
        ends = []
        for direction, bound in ((-1, lo_b), (1, hi_b)):
            inside, h = lam0, mpfr(1e-9)
            out = None
            while True:
                cand = lam0 + direction * h
                if (direction < 0 and cand <= bound) or (direction > 0 and cand >= bound):
                    if self._signature1(bound, bits):
                        out = None
                        inside = bound
                    else:
                        out = bound
                    break
                if self._signature1(cand, bits):
                    inside = cand
                    h *= 2
                else:
                    out = cand
                    break
            if out is not None:
                good, bad = inside, out
                with working_bits(bits):
                    while abs(bad - good) > tol:
                        mid = (good + bad) / 2
                        if self._signature1(mid, bits):
                            good = mid
                        else:
                            bad = mid
                inside = good
            ends.append(inside)
        return ParamWindow(1, ends[0], ends[1], tol, bits)

    # Xi ----------------------------------------------------------------------------
    def xi(self, i, addr, tol=None, bracket=None):
        """``Xi_i`` at the point with address ``addr``.

        Parameters
        ----------
        i : int
        addr : Address
        tol : float, optional
            Absolute parameter tolerance (default ``rel_tol |J_i|``).
        bracket : (lo, hi), optional
            Sub-interval of ``J_i`` known to contain the answer.
        """
        J = self.window(i)
        if tol is None:
            tol = J.width * self.rel_tol
        bits = self._bits(tol)
        with working_bits(bits):
            phi = self._phi(i, addr, bits)
            lo, hi = (J.lo, J.hi) if bracket is None else bracket
            lo, hi = +lo, +hi
            flo, fhi = phi(lo), phi(hi)
            if (flo > 0) == (fhi > 0) and bracket is not None:
                lo, hi = +J.lo, +J.hi
                flo, fhi = phi(lo), phi(hi)
            if (flo > 0) == (fhi > 0):
                # R_i(0) sweeps I_i over J_i, so points of dI_i map to endpoints of J_i;
                # there phi vanishes up to the accuracy the endpoint was solved to
                slack = 16 * abs(self.nest.level(i).width) * (tol / J.width + 2 ** (8 - bits))
                if min(abs(flo), abs(fhi)) <= slack:
                    return lo if abs(flo) < abs(fhi) else hi
            try:
                return _solve_bracket(phi, lo, hi, flo, fhi, tol)
            except AddressUnresolvable as exc:
                raise AddressUnresolvable(f"Xi_{i}({addr}): {exc}", level=i,
                                          address=str(addr)) from None

    def xi_table(self, i, addresses, tol=None, tag=""):
        """Solve ``Xi_i`` on many addresses using monotonicity for brackets."""
        J = self.window(i)
        pts = [(self.point(a), a) for a in addresses]
        pts.sort(key=lambda t: t[0])
        # drop coincident addresses (shared boundary points of adjacent domains)
        uniq = [pts[0]]
        for x, a in pts[1:]:
            if x != uniq[-1][0]:
                uniq.append((x, a))
        pts = uniq
        n = len(pts)
        if n < 2:
            raise InsufficientRows("need at least two addresses")
        if tol is None:
            # resolve the closest pair of rows, not just J_i
            gap = min(b[0] - a[0] for a, b in zip(pts, pts[1:])) / abs(self.nest.level(i).width)
            tol = J.width * min(self.rel_tol, 1e-6 * gap)
        sol = [None] * n
        sol[0] = self.xi(i, pts[0][1], tol)
        sol[-1] = self.xi(i, pts[-1][1], tol)
        inc = sol[-1] > sol[0]
        stack = [(0, n - 1)]
        while stack:
            l, r = stack.pop()
            if r - l < 2:
                continue
            k = (l + r) // 2
            br = (sol[l], sol[r]) if inc else (sol[r], sol[l])
            sol[k] = self.xi(i, pts[k][1], tol, bracket=br)
            stack.append((l, k))
            stack.append((k, r))
        tab = XiTable(i, tuple(a for _, a in pts), tuple(x for x, _ in pts), tuple(sol),
                      1 if inc else -1, tag)
        if not tab.is_monotone():
            raise MonotonicityViolation(f"Xi_{i} table is not monotone", level=i, tag=tag)
        return tab

    def phase_phase(self, i, lam, addresses, bits=None):
        """``H_i[lam]`` on ``addresses``: list of ``(x at lam0, x at lam)``."""
        J = self.window(i)
        if not J.lo <= lam <= J.hi:
            raise AddressUnresolvable(f"lam outside J_{i}", level=i)
        bits = bits or self._bits(J.width * self.rel_tol)
        return [(self.point(a, bits=bits), self.point(a, lam, bits=bits)) for a in addresses]


def param_window(curve, lam0, i, tol=None, pp=None, **kw):
    """Parameter window ``J_i`` of ``lam0`` on ``curve``.

    Raises
    ------
    NotInF
        When ``lam0`` has no principal nest return at level ``i`` or its nest
        ends in a renormalization cascade at or above level ``i``.
    """
    pp = pp or PhaseParameter(curve, lam0, **kw)
    nest = pp.nest
    if (nest.termination == Termination.RENORMALIZATION
            and int(nest.detail.get("level", 1)) <= i):
        raise NotInF(f"lam0 is renormalizable at level {nest.detail.get('level')}",
                     level=nest.depth, period=nest.detail.get("period"))
    if i > pp.max_level:
        raise NotInF(f"nest of lam0 has no return at level {i}", level=pp.max_level)
    if tol is not None:
        pp.rel_tol = float(tol)
    return pp.window(i)


def xi_samples(pp, i, points):
    """:class:`XiTable` of ``Xi_i`` over symbolic ``points``."""
    return pp.xi_table(i, points)


def phase_phase_samples(pp, lam, i, points):
    """Table ``x -> H_i[lam](x)`` over symbolic ``points``."""
    return pp.phase_phase(i, lam, points)


# --- restriction sets ------------------------------------------------------------------

def _lateral_domains(nest, i, width_floor, max_lateral):
    doms = [d for d in return_domains(nest, i, width_floor=width_floor) if d.index != 0]
    doms.sort(key=lambda d: d.right - d.left, reverse=True)
    return doms[:max_lateral]


def phpa1_addresses(pp, i, width_floor=1e-3, max_lateral=24):
    """Addresses of ``K_i`` inside ``I^{tau_i}_i``.

    They are the images under the branch of ``I^{tau_i}_i`` of ``dI_i``,
    ``dI_{i+1}`` and of ``dI^j_i``, ``dC^j_i`` for the widest lateral domains.
    """
    nest = pp.nest
    lv = nest.level(i)
    if lv.central_return or lv.central_return is None:
        raise InsufficientLevels(f"level {i} has no lateral critical return", level=i)
    wt = nest.first_landing_segment(i)
    out = []
    for w in [b""] + [d.word for d in _lateral_domains(nest, i, width_floor, max_lateral)]:
        for s in "LR":
            out.append(Address(i, s, wt + w))
            out.append(Address(i + 1, s, wt + w))
    return out


def phpa2_addresses(pp, i, width_floor=1e-3, max_lateral=24):
    """Addresses of ``dI_i`` and ``dI^j_i`` outside the central domain."""
    nest = pp.nest
    out = [Address(i, "L"), Address(i, "R")]
    for d in _lateral_domains(nest, i, width_floor, max_lateral):
        for s in "LR":
            out.append(Address(i, s, d.word))
    return out


# --- distortion metrics ------------------------------------------------------------------

def qs_distortion(x, h=None, triple_budget=1000, scales=5, level=0, tag=""):
    """Symmetric-triple distortion of a monotone table.

    Parameters
    ----------
    x : array_like or XiTable
        Abscissae (strictly increasing after sorting) or a table.
    h : array_like
        Values (strictly monotone).
    triple_budget : int
        Number of triples, spread evenly over ``scales`` dyadic scales.

    Returns
    -------
    QsDistortionReport
        ``M = max max(rho, 1/rho)`` with
        ``rho = |h(x+t) - h(x)| / |h(x) - h(x-t)|`` and ``h`` linearly
        interpolated between rows.

    Examples
    --------
    >>> qs_distortion([0, 0.5, 1], [0, 0.125, 1]).M
    7.0
    """
    if isinstance(x, XiTable):
        level, tag = x.level, x.tag
        x, h = x.arrays()
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.size < 3:
        raise InsufficientRows("need at least three rows")
    o = np.argsort(x)
    x, h = x[o], h[o]
    if h[-1] < h[0]:
        h = -h
    # rows closer than double resolution carry no information at these scales
    keep = np.r_[True, (np.diff(x) != 0) & (np.diff(h) != 0)]
    x, h = x[keep], h[keep]
    if x.size < 3:
        raise InsufficientRows("fewer than three distinguishable rows")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(h) <= 0):
        raise MonotonicityViolation("table is not strictly monotone")
    span = x[-1] - x[0]
    per = max(1, triple_budget // scales)
    best, worst, count = 1.0, (), 0
    for s in range(1, scales + 1):
        t = span * 2.0 ** -s
        lo, hi = x[0] + t, x[-1] - t
        cs = np.array([lo]) if hi <= lo else np.linspace(lo, hi, per)
        hm = np.interp(cs - t, x, h)
        h0 = np.interp(cs, x, h)
        hp = np.interp(cs + t, x, h)
        rho = (hp - h0) / (h0 - hm)
        dev = np.maximum(rho, 1.0 / rho)
        count += cs.size
        k = int(np.argmax(dev))
        if dev[k] > best:
            best, worst = float(dev[k]), (float(cs[k]), float(t))
    return QsDistortionReport(level, tag, best, count, worst)


def parameter_scaling_ratios(windows, nest):
    """``(k, |J_{l_k+2}| / |J_{l_k+1}|)`` over non-central levels ``l_k``.

    ``windows`` maps levels to :class:`ParamWindow` (or is a list of them).
    """
    if not isinstance(windows, dict):
        windows = {w.level: w for w in windows}
    out = []
    for k, l in enumerate(nest.non_central_indices, 1):
        if l + 1 in windows and l + 2 in windows:
            r = windows[l + 2].log_width - windows[l + 1].log_width
            out.append((k, math.exp(r)))
    if len(out) < 2:
        raise InsufficientLevels("need at least two non-central windows", available=len(out))
    return out


def log_parameter_scaling_ratios(windows, nest):
    if not isinstance(windows, dict):
        windows = {w.level: w for w in windows}
    out = []
    for k, l in enumerate(nest.non_central_indices, 1):
        if l + 1 in windows and l + 2 in windows:
            out.append((k, windows[l + 2].log_width - windows[l + 1].log_width))
    return out


# --- combinatorial descent ------------------------------------------------------------------

@dataclass
class DeepParameter:
    """A parameter reached by combinatorial descent, with its windows."""

    curve: object
    lam: object
    depth: int
    pp: PhaseParameter
    choices: list = field(default_factory=list)

    @property
    def nest(self):
        return self.pp.nest

    @property
    def windows(self):
        return dict(self.pp.windows)


def _pick_lateral(nest, i, rng, width_floor, max_return, allow_central):
    doms = return_domains(nest, i, width_floor=width_floor)
    cands = [d for d in doms if (d.index != 0 or allow_central) and d.return_time <= max_return]
    if not cands:
        raise InsufficientLevels(f"no admissible return domain at level {i}", level=i)
    w = np.array([float((d.right - d.left) / nest.level(i).width) for d in cands])
    k = int(rng.choice(len(cands), p=w / w.sum()))
    return cands[k]


def descend(curve, depth, rng, lam_range=None, width_floor=1e-2, allow_central=False,
            max_return_factor=3, fraction=0.6, rel_tol=1e-8, max_tries=50,
            max_return_time=4000):
    """Sample a parameter whose principal nest has ``depth`` designed levels.

    Starting from a uniformly drawn parameter with a level-1 return, each step
    chooses a lateral return domain ``I^j_i`` with probability proportional to
    its width, picks a target ``u`` uniformly in ``(-fraction, fraction)``,
    and moves the parameter inside ``J_i`` (via ``Xi_i``) so that
    ``R_i(0)`` lands on the pullback of the point ``u`` of ``I_{i+1}`` through
    the branch of ``I^j_i``.  The new parameter lies in ``J_{i+1}`` and
    ``R_{i+1}(0)`` sits at relative position ``u`` in ``I_{i+1}``.

    Parameters
    ----------
    curve : QuadraticFamily or PerturbedFamily
    depth : int
        Number of levels whose return is prescribed.
    rng : numpy.random.Generator
    lam_range : (float, float), optional
        Range for the initial uniform draw (default: the curve bounds).
    width_floor : float
        Domain enumeration floor, relative to ``|I_i|``.
    allow_central : bool
        Permit the central domain (central returns) as a choice.
    max_return_factor : int
        Only domains with return time at most ``max_return_factor * m_i + 8``
        are eligible.

    Returns
    -------
    DeepParameter
    """
    lo, hi = lam_range or curve.bounds
    for _ in range(max_tries):
        lam = mpfr(repr(float(rng.uniform(float(lo), float(hi)))), 256)
        try:
            pp = PhaseParameter(curve, lam, rel_tol=rel_tol, max_depth=2,
                                max_return_time=max_return_time)
            if pp.max_level < 1 or pp.nest.depth < 2:
                continue
            pp.window(1)
            break
        except NestlabError:
            continue
    else:
        raise NotInF("no starting parameter with a level-1 return")
    choices = []
    for i in range(1, depth):
        nest = pp.nest
        dom = _pick_lateral(nest, i, rng, width_floor,
                            max_return_factor * nest.level(i).return_time + 8,
                            allow_central)
        u = mpfr(repr(float(rng.uniform(-fraction, fraction))))
        word = dom.word if dom.index != 0 else b""
        J = pp.window(i)
        # expected size of the next window fixes the accuracy needed now
        with working_bits(max(nest.bits, 128)):
            ops = _Ops(curve.at(pp.lam0))
            nx = nest.level(i + 1)
            clo, chi = pullback(ops, word, nx.left, nx.right)
            ratio = (chi - clo) / nest.level(i).width
        tol = J.width * ratio * rel_tol
        lam = pp.xi(i, Address(i + 1, "u", word, u), tol=tol)
        windows = dict(pp.windows)
        bits = max(pp._bits(tol), 128)
        with working_bits(bits):
            lam = +lam
        nest_new = build_nest(curve.at(lam), max_depth=i + 2, min_width=0.0,
                              max_return_time=max(max_return_time, 4 * (nest.level(i).return_time + dom.return_time) + 100))
        pp = PhaseParameter(curve, lam, nest=nest_new, rel_tol=rel_tol, windows=windows)
        if pp.max_level < i + 1:
            raise NotInF(f"descent lost level {i + 1}", level=i + 1)
        pp.window(i + 1)
        choices.append((i, dom.index, dom.return_time, float(u)))
    return DeepParameter(curve, pp.lam0, depth, pp, choices)


# --- export --------------------------------------------------------------------------------

def windows_csv(pp, levels=None):
    """CSV rows: level, window endpoints, phase and parameter widths, ratios."""
    nest = pp.nest
    levels = levels or sorted(pp.windows)
    lines = ["level,lam_lo,lam_hi,log_param_width,log_phase_width,central,log_param_ratio,log_phase_ratio"]
    prev = None
    for i in levels:
        w = pp.windows[i]
        lv = nest.level(i)
        pr = "" if prev is None else f"{w.log_width - prev[0]:.12g}"
        ph = "" if prev is None else f"{lv.log_width - prev[1]:.12g}"
        lines.append(f"{i},{to_str(w.lo, w.digits)},{to_str(w.hi, w.digits)},{w.log_width:.12g},"
                     f"{lv.log_width:.12g},{lv.central_return},{pr},{ph}")
        prev = (w.log_width, lv.log_width)
    return "\n".join(lines) + "\n"


def xi_table_csv(tab):
    lines = ["level,address,x,lam"]
    for a, x, l in zip(tab.addresses, tab.phase, tab.params):
        lines.append(f"{tab.level},{a},{to_str(x, 25)},{to_str(l, 25)}")
    return "\n".join(lines) + "\n"

"""Critical-orbit statistics and classification.

All estimators work on the binary64 critical orbit ``y_k = f^k(c)``,
``k = 1..N``.  Sums of ``ln|Df|`` are accumulated in log space so long orbits
never overflow.
"""
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CriticalHit, EscapedNest, NestlabError, PeriodicCritical
from .maps import Perturbed, RealQuadratic
from .nest import Termination, build_nest, detect_renormalization, reversing_fixed_point

__all__ = [
    "Verdict", "Confidence", "OrbitStats", "Recurrence", "Budget",
    "critical_orbit", "ce_exponent", "recurrence_exponent",
    "weak_regularity_deficit", "find_attracting_cycle", "classify",
]

#: Distance to the critical point treated as an exact hit in binary64.
HIT_TOL = 64 * np.finfo(float).eps


class Verdict(str, enum.Enum):
    HYPERBOLIC = "Hyperbolic"
    REGULAR = "Regular"
    NON_REGULAR_CANDIDATE = "NonRegularCandidate"
    PERIODIC_CRITICAL = "PeriodicCritical"
    UNDETERMINED = "Undetermined"


class Confidence(str, enum.Enum):
    CLOSED_FORM = "certified-by-closed-form"
    ROBUST = "numerically-robust"
    HEURISTIC = "heuristic"


def critical_orbit(family, N):
    """Binary64 critical orbit ``f(c), ..., f^N(c)`` and the critical point.

    Returns
    -------
    y : ndarray, shape (N,)
    c : float
    """
    N = int(N)
    y = np.empty(N)
    if isinstance(family, RealQuadratic):
        t = float(family.tau)
        t1 = t - 1.0
        x = 0.0
        c = 0.0
        for k in range(N):
            x = t1 - t * x * x
            y[k] = x
    else:
        c = float(family.critical_point(0.0))
        f = family.f
        x = c
        for k in range(N):
            x = float(f(x))
            y[k] = x
    return y, c


def _log_df(family, y):
    if isinstance(family, RealQuadratic):
        with np.errstate(divide="ignore"):
            return np.log(2.0 * float(family.tau) * np.abs(y))
    df = np.array([float(family.df(float(v))) for v in y])
    with np.errstate(divide="ignore"):
        return np.log(np.abs(df))


def _check_hits(y, c):
    near = np.flatnonzero(np.abs(y - c) <= HIT_TOL * (1.0 + abs(c)))
    if near.size:
        raise CriticalHit("critical orbit hits the critical point",
                          time=int(near[0]) + 1, value=float(y[near[0]]))


def ce_exponent(family, N, orbit=None):
    """Lower Lyapunov exponent of the critical value.

    ``min_{N/2 <= n <= N} (1/n) sum_{k=1}^{n} ln|Df(f^k(c))|``.

    Parameters
    ----------
    family : RealQuadratic or Perturbed
    N : int
        Orbit length, at least 1000.

    Returns
    -------
    float
        Nats per iterate.

    Raises
    ------
    CriticalHit
        If the orbit comes within ``64 eps`` of the critical point.

    Examples
    --------
    >>> round(ce_exponent(RealQuadratic(2.0), 10_000), 6) == round(math.log(4), 6)
    True
    """
    if N < 1000:
        raise ValueError("N must be at least 1000")
    y, c = orbit if orbit is not None else critical_orbit(family, N)
    _check_hits(y, c)
    s = np.cumsum(_log_df(family, y))
    n = np.arange(1, N + 1)
    lo = N // 2
    return float(np.min(s[lo - 1:] / n[lo - 1:]))


@dataclass(frozen=True)
class Recurrence:
    """Recurrence exponent estimate with its record-setting times."""

    value: float
    record_times: tuple
    record_values: tuple

    def __float__(self):
        return self.value


def recurrence_exponent(family, N, orbit=None):
    """``max_{2 <= n <= N} -ln|f^n(c) - c| / ln n`` and its record times.

    Raises
    ------
    PeriodicCritical
        If some ``|f^n(c) - c|`` vanishes within tolerance.
    """
    if N < 1000:
        raise ValueError("N must be at least 1000")
    y, c = orbit if orbit is not None else critical_orbit(family, N)
    d = np.abs(y - c)
    if np.any(d <= HIT_TOL * (1.0 + abs(c))):
        raise PeriodicCritical("critical orbit returns to the critical point")
    n = np.arange(2, N + 1)
    g = -np.log(d[1:]) / np.log(n)
    run = np.maximum.accumulate(g)
    rec = np.flatnonzero(np.r_[True, run[1:] > run[:-1]])
    return Recurrence(float(run[-1]), tuple(int(k) + 2 for k in rec),
                      tuple(float(run[k]) for k in rec))


def weak_regularity_deficit(family, delta, N, orbit=None):
    """``(1/N) sum_{|f^k(c) - c| < delta} |ln|Df(f^k(c))||``.

    ``delta`` may be a scalar or an array (one value per entry).
    """
    if N < 1000:
        raise ValueError("N must be at least 1000")
    y, c = orbit if orbit is not None else critical_orbit(family, N)
    _check_hits(y, c)
    dist = np.abs(y - c)
    w = np.abs(_log_df(family, y))
    order = np.argsort(dist)
    csum = np.r_[0.0, np.cumsum(w[order])]
    deltas = np.atleast_1d(np.asarray(delta, dtype=float))
    if np.any((deltas <= 0) | (deltas > 1)):
        raise ValueError("delta must lie in (0, 1]")
    cnt = np.searchsorted(dist[order], deltas, side="left")
    out = csum[cnt] / N
    return float(out[0]) if np.ndim(delta) == 0 else out


# --- cycles ---------------------------------------------------------------------

def _refine_cycle(f, df, x, p, iters=60):
    for _ in range(iters):
        z, d = x, 1.0
        for _ in range(p):
            d *= df(z)
            z = f(z)
        g = z - x
        if d == 1.0:
            break
        step = g / (d - 1.0)
        x -= step
        if abs(step) < 1e-15 * (1.0 + abs(x)):
            break
    z, d, pts = x, 1.0, []
    for _ in range(p):
        pts.append(z)
        d *= df(z)
        z = f(z)
    return x, abs(z - x), d, pts


def find_attracting_cycle(family, orbit, max_period=64, seed_tol=1e-7):
    """Certify an attracting cycle from near-returns of the orbit tail.

    Returns
    -------
    (period, multiplier, points, residual) or None
    """
    y = orbit
    f = lambda v: float(family.f(v))
    df = lambda v: float(family.df(v))
    for p in range(1, max_period + 1):
        if len(y) <= p + 1:
            break
        if abs(y[-1] - y[-1 - p]) > seed_tol * (1.0 + abs(y[-1])):
            continue
        x, res, mult, pts = _refine_cycle(f, df, float(y[-1]), p)
        if res < 1e-10 and abs(mult) < 1.0:
            return p, mult, pts, res
    return None


def _preperiodic_repelling(family, y, c, max_period, horizon=2000, tol=1e-12):
    """Detect an early exact landing on a repelling cycle."""
    h = min(len(y), horizon)
    z = y[:h]
    for p in range(1, max_period + 1):
        if h <= p:
            break
        hits = np.flatnonzero(np.abs(z[p:] - z[:-p]) < tol)
        if hits.size:
            k = int(hits[0])
            mult = 1.0
            for j in range(p):
                mult *= float(family.df(float(z[k + j])))
            if abs(mult) > 1.0:
                return p, mult, k + 1
    return None


# --- classification ---------------------------------------------------------------

@dataclass(frozen=True)
class Budget:
    """Iteration budget of :func:`classify`.

    ``recurrence_fraction`` is the heuristic recurrence threshold relative to
    ``|I_1|``; ``nest`` toggles the principal-nest stage.
    """

    N: int = 100_000
    max_period: int = 64
    cascade: int = 40
    deltas: tuple = (0.1, 0.01, 0.001)
    recurrence_fraction: float = 0.05
    nest: bool = True
    nest_return_time: int = 5000
    nest_depth: int = 16


@dataclass(frozen=True)
class OrbitStats:
    """Classification verdict with the orbit statistics behind it."""

    parameter: dict
    classification: Verdict
    confidence: Confidence
    N: int
    ce_exponent: float = None
    gamma_hat: float = None
    deficits: dict = field(default_factory=dict)
    period: int = None
    multiplier: float = None
    recurrent: bool = None
    min_distance: float = None
    nest_depth: int = None
    nest_termination: str = None
    note: str = ""

    @property
    def is_hyperbolic(self):
        return self.classification in (Verdict.HYPERBOLIC, Verdict.REGULAR)

    @property
    def weak_regularity_deficit(self):
        return self.deficits

    def to_record(self):
        def num(v):
            if v is None:
                return None
            v = float(v)
            return v if math.isfinite(v) else str(v)
        return {
            "parameter": self.parameter,
            "classification": self.classification.value,
            "confidence": self.confidence.value,
            "N": self.N,
            "ce_exponent": num(self.ce_exponent),
            "gamma_hat": num(self.gamma_hat),
            "deficit": {str(k): num(v) for k, v in self.deficits.items()},
            "period": self.period,
            "multiplier": num(self.multiplier),
            "recurrent": self.recurrent,
            "min_distance": num(self.min_distance),
            "nest_depth": self.nest_depth,
            "nest_termination": self.nest_termination,
            "heuristic_recurrence_test": True,
            "note": self.note,
        }


def classify(family, budget=None):
    """Classify a real unimodal map from its critical orbit.

    Pipeline: exact critical hits and early landings on repelling cycles give
    ``PeriodicCritical``; a certified attracting cycle gives ``Regular``
    (hyperbolic with non-periodic critical point); otherwise the orbit
    statistics (and optionally the principal nest) are computed and a map
    with positive lower Lyapunov exponent is a ``NonRegularCandidate``.
    Everything else is ``Undetermined``.

    Returns
    -------
    OrbitStats
    """
    b = budget or Budget()
    param = family.describe()
    N = int(b.N)
    y, c = critical_orbit(family, N)
    base = dict(parameter=param, N=N)
    dist = np.abs(y - c)
    if not np.all(np.isfinite(y)):
        return OrbitStats(classification=Verdict.UNDETERMINED, confidence=Confidence.HEURISTIC,
                          note="orbit left the interval", **base)
    if np.any(dist <= HIT_TOL * (1.0 + abs(c))):
        k = int(np.flatnonzero(dist <= HIT_TOL * (1.0 + abs(c)))[0]) + 1
        return OrbitStats(classification=Verdict.PERIODIC_CRITICAL, confidence=Confidence.ROBUST,
                          period=k, note="critical orbit returns to the critical point", **base)
    pre = _preperiodic_repelling(family, y, c, b.max_period)
    if pre is not None:
        p, mult, k = pre
        exact = bool(y[k - 1] == y[k - 1 + p])
        conf = Confidence.CLOSED_FORM if exact else Confidence.ROBUST
        try:
            # the orbit shadows a repelling cycle, so the exponent is log|mult|/p
            ce = ce_exponent(family, N, (y, c))
        except NestlabError:
            ce = None
        return OrbitStats(classification=Verdict.PERIODIC_CRITICAL, confidence=conf,
                          period=p, multiplier=mult, ce_exponent=ce,
                          note=f"critical orbit lands on a repelling {p}-cycle at time {k}", **base)
    cyc = find_attracting_cycle(family, y, b.max_period)
    if cyc is not None:
        p, mult, pts, res = cyc
        if min(abs(v - c) for v in pts) <= 1e-12:
            return OrbitStats(classification=Verdict.PERIODIC_CRITICAL,
                              confidence=Confidence.ROBUST, period=p, multiplier=mult,
                              note="superattracting cycle through the critical point", **base)
        return OrbitStats(classification=Verdict.REGULAR, confidence=Confidence.ROBUST,
                          period=p, multiplier=mult,
                          note=f"attracting {p}-cycle, residual {res:.1e}", **base)
    orbit = (y, c)
    ce = ce_exponent(family, N, orbit)
    gam = recurrence_exponent(family, N, orbit).value
    deficits = dict(zip(b.deltas, weak_regularity_deficit(family, np.array(b.deltas), N, orbit)))
    try:
        p1 = abs(reversing_fixed_point(family) - c)
    except NestlabError:
        p1 = 1.0
    mind = float(dist.min())
    late = dist[N // 2:].min() if N >= 4 else mind
    recurrent = bool(mind < b.recurrence_fraction * 2 * p1
                     and late < b.recurrence_fraction * 2 * p1)
    depth = term = None
    note = ""
    if b.nest:
        try:
            nest = build_nest(family, max_depth=b.nest_depth,
                              max_return_time=b.nest_return_time, central_cascade=b.cascade)
            depth, term = nest.depth, nest.termination.value
            if detect_renormalization(nest, b.cascade):
                note = "renormalization cascade in the principal nest"
        except PeriodicCritical as exc:
            return OrbitStats(classification=Verdict.PERIODIC_CRITICAL,
                              confidence=Confidence.ROBUST, note=str(exc), **base)
        except NestlabError as exc:
            term = type(exc).__name__
    verdict = Verdict.NON_REGULAR_CANDIDATE if ce > 0 and recurrent else Verdict.UNDETERMINED
    return OrbitStats(classification=verdict, confidence=Confidence.HEURISTIC,
                      ce_exponent=ce, gamma_hat=gam, deficits=deficits, recurrent=recurrent,
                      min_distance=mind, nest_depth=depth, nest_termination=term,
                      note=note, **base)

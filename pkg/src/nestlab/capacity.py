"""Quasisymmetric capacities and the exclusion recursion.

The modified capacity of ``X`` in ``I`` is a supremum over compositions
``h1 o h2`` of a quasisymmetric map and a diffeomorphism with non-negative
Schwarzian derivative.  The supremum itself is not computable; this module
returns lower bounds over explicit parametric families:

* ``h2`` -- Moebius maps of ``I`` onto itself (zero Schwarzian);
* ``h1`` -- radial power maps ``y -> sign(y - y0)|y - y0|^s``, whose
  symmetric quasiconformal extension ``z |z|^(s-1)`` has dilatation
  ``max(s, 1/s)``, so ``s in [1/gamma, gamma]``.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInterval, InsufficientLevels, OutOfRange
from .nest import (LEFT, RIGHT, _Ops, domain_of_critical_return, return_domains)
from .precision import working_bits

log = logging.getLogger(__name__)

__all__ = [
    "CapacityEstimate", "ExclusionSequence", "ExclusionRow",
    "proportion_capacity", "qs_capacity_lower_bound", "exclusion_sequence",
    "measure_exclusion_data", "largest_gap", "exclusion_csv", "exclusion_diagnostic",
]


@dataclass(frozen=True)
class CapacityEstimate:
    """A certified lower bound on a capacity, with the family that achieved it."""

    value: float
    gamma: float
    test_family: str
    witness: dict = field(default_factory=dict)


def _normalize(X, I):
    """Merge ``X`` and express it inside ``I`` as sub-intervals of ``[0, 1]``."""
    a, b = I
    L = b - a
    if not L > 0:
        raise EmptyInterval("interval has no length")
    segs = []
    for lo, hi in X:
        lo, hi = max(lo, a), min(hi, b)
        if hi > lo:
            segs.append((float((lo - a) / L), float((hi - a) / L)))
    segs.sort()
    merged = []
    for lo, hi in segs:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return np.array(merged, dtype=float).reshape(-1, 2)


def proportion_capacity(X, I):
    """``|X cap I| / |I|`` (the identity member of the test family).

    Examples
    --------
    >>> round(proportion_capacity([(-0.1, 0.1)], (-1.0, 1.0)).value, 12)
    0.1
    """
    seg = _normalize(X, I)
    val = float(np.sum(seg[:, 1] - seg[:, 0])) if seg.size else 0.0
    return CapacityEstimate(min(1.0, val), 1.0, "identity")


def _mobius(x, k):
    return x / (x + k * (1.0 - x))


def _power(y, y0, s):
    d = y - y0
    return np.sign(d) * np.abs(d) ** s


def qs_capacity_lower_bound(X, I, gamma=1.0, budget=None):
    """Lower bound on the modified gamma-qs capacity of ``X`` in ``I``.

    Parameters
    ----------
    X : sequence of (lo, hi)
    I : (lo, hi)
    gamma : float
        Quasisymmetry constant, ``>= 1``.
    budget : dict, optional
        Grid sizes ``{"mobius": 81, "power": 11, "center": 41}``.

    Returns
    -------
    CapacityEstimate
        Best ratio ``|h(X)| / |h(I)|`` over the grid; the identity is always a
        member, so the value is at least :func:`proportion_capacity`.
    """
    if gamma < 1:
        raise ValueError("gamma must be at least 1")
    bud = {"mobius": 81, "power": 11, "center": 41}
    bud.update(budget or {})
    seg = _normalize(X, I)
    if seg.size == 0:
        return CapacityEstimate(0.0, gamma, "mobius x power grid")
    ks = np.unique(np.r_[1.0, np.logspace(-6, 6, int(bud["mobius"]))])
    if gamma > 1:
        ss = np.unique(np.r_[1.0, np.exp(np.linspace(-math.log(gamma), math.log(gamma),
                                                     int(bud["power"])))])
        y0s = np.linspace(0.0, 1.0, int(bud["center"]))
    else:
        ss = np.array([1.0])
        y0s = np.array([0.0])
    lo, hi = seg[:, 0], seg[:, 1]
    best, wit = -1.0, {}
    for k in ks:
        mlo, mhi = _mobius(lo, k), _mobius(hi, k)
        for s in ss:
            for y0 in (y0s if s != 1.0 else y0s[:1]):
                tot = _power(1.0, y0, s) - _power(0.0, y0, s)
                val = float(np.sum(_power(mhi, y0, s) - _power(mlo, y0, s)) / tot)
                if val > best:
                    best, wit = val, {"mobius_k": float(k), "power_s": float(s),
                                      "center": float(y0)}
    ident = float(np.sum(hi - lo))
    return CapacityEstimate(min(1.0, max(best, ident)), gamma, "mobius x power grid", wit)


@dataclass(frozen=True)
class ExclusionSequence:
    """``alpha_2, alpha_3, ...`` from ``alpha_{n+1} = 1 - (1-eps_{n+1})(1-alpha_n)``."""

    eps: tuple
    alpha2: float
    alpha: tuple

    def closed_form(self):
        return 1.0 - (1.0 - self.alpha2) * float(np.prod([1.0 - e for e in self.eps]))


def exclusion_sequence(eps, alpha2):
    """Iterate the saturated exclusion recursion.

    Parameters
    ----------
    eps : sequence of float
        ``eps_3, eps_4, ...`` in ``[0, 1)``.
    alpha2 : float
        In ``[0, 1)``.

    Examples
    --------
    >>> exclusion_sequence([0.25], 0.5).alpha
    (0.5, 0.625)
    """
    eps = tuple(float(e) for e in eps)
    if not 0.0 <= alpha2 < 1.0 or any(not 0.0 <= e < 1.0 for e in eps):
        raise OutOfRange("eps and alpha2 must lie in [0, 1)")
    alpha = [float(alpha2)]
    for e in eps:
        # 1 - (1 - e)(1 - a), arranged to be exact when e = 0
        alpha.append(alpha[-1] + e * (1.0 - alpha[-1]))
    return ExclusionSequence(eps, float(alpha2), tuple(alpha))


def largest_gap(domains, I):
    """Longest sub-interval of ``I`` missed by ``domains`` (same units as ``I``)."""
    a, b = I
    cur, gap = a, 0
    for d in sorted(domains, key=lambda d: d.left):
        if d.left > cur:
            gap = max(gap, d.left - cur)
        cur = max(cur, d.right)
    return max(gap, b - cur)


@dataclass(frozen=True)
class ExclusionRow:
    level: int
    eps: float
    alpha: float
    kind: str
    central: bool
    unresolved: float
    gap: float
    eps_qs: float = None


def _central_preimages(ops, word, lo, hi):
    """Components of the central-branch preimage of ``[lo, hi]``.

    ``word`` is the critical word without its leading critical symbol.
    Returns one interval (around the critical point) or two.
    """
    inv = ops.inv
    for k in range(len(word) - 1, -1, -1):
        x0, x1 = inv(lo, word[k]), inv(hi, word[k])
        lo, hi = (x0, x1) if x0 < x1 else (x1, x0)
    if hi >= ops.fc:
        return [(inv(lo, LEFT), inv(lo, RIGHT))]
    return [(inv(lo, LEFT), inv(hi, LEFT)), (inv(hi, RIGHT), inv(lo, RIGHT))]


def measure_exclusion_data(nest, levels=None, width_floor=1e-3, gamma=None, budget=None,
                           alpha=True, smoothing=None):
    """Proportion estimates of ``eps_n`` and ``alpha_n`` along a nest.

    ``eps_n`` is the proportion in ``I_n`` of the components ``T^{-1}, T^0,
    T^1`` of the central-branch preimage under ``R_{n-1}`` of the return
    domains of ``I_{n-1}``: ``T^0`` contains the critical point and
    ``T^{+-1}`` are the preimages of ``I_n`` itself.  After a central return
    these coincide with ``I_{n+1}``.  ``alpha_n`` is the enumerated proportion
    of return domains of ``I_n`` (a lower bound of the true proportion).

    Parameters
    ----------
    nest : PrincipalNest
    levels : iterable of int, optional
        Default: every ``n >= 2`` with ``I_{n+1}`` built.
    width_floor : float
        Enumeration floor for ``alpha_n``.
    gamma : float, optional
        Also report the qs lower bound of ``eps_n``.
    alpha : bool
        Enumerate return domains for ``alpha_n`` (the expensive part); when
        False ``alpha``, ``unresolved`` and ``gap`` are NaN.
    smoothing : callable, optional
        Increasing diffeomorphism applied to ``I_n`` before ``eps_n`` is
        measured.  Quadratic maps need none (their Schwarzian is already
        negative); perturbed maps may supply one.

    Returns
    -------
    list of ExclusionRow
    """
    if levels is None:
        levels = [n for n in range(2, nest.depth)
                  if nest.level(n - 1).return_time is not None
                  and (not alpha or nest.level(n).return_time is not None)]
    rows = []
    for n in levels:
        if n < 2 or n >= nest.depth or nest.level(n - 1).return_time is None:
            raise InsufficientLevels(f"level {n} lacks the data for eps_n", level=n)
        prev, lv = nest.level(n - 1), nest.level(n)
        bits = max(nest.bits, 128)
        with working_bits(bits):
            ops = _Ops(nest.family)
            word = nest.signs[1:prev.return_time]
            In = (+lv.left, +lv.right)
            if prev.central_return:
                nxt = nest.level(n + 1)
                T = [(+nxt.left, +nxt.right)]
            else:
                tau_dom = domain_of_critical_return(nest, n - 1, _ops=ops)
                T = _central_preimages(ops, word, tau_dom.left, tau_dom.right)
                T += _central_preimages(ops, word, In[0], In[1])
            if smoothing is not None:
                T = [(smoothing(a), smoothing(b)) for a, b in T]
                In = (smoothing(In[0]), smoothing(In[1]))
            width = In[1] - In[0]
            eps = float(sum(b - a for a, b in T) / width)
            if alpha and lv.return_time:
                doms = return_domains(nest, n, width_floor=width_floor)
                al = float(sum(d.right - d.left for d in doms) / width)
                gap = float(largest_gap(doms, In) / width)
                unres = doms.unresolved
            else:
                al = gap = unres = math.nan
        eq = None
        if gamma is not None:
            eq = qs_capacity_lower_bound(T, In, gamma, budget).value
        kind = "proportion" if smoothing is None else "proportion-smoothed"
        rows.append(ExclusionRow(n, eps, min(al, 1.0), kind, bool(prev.central_return),
                                 unres, gap, eq))
    return rows


def exclusion_csv(rows):
    """CSV with measured ``eps_n``, ``alpha_n`` and the recursion bound."""
    lines = ["level,eps,alpha,bound,kind,central,unresolved,gap"]
    if rows:
        seq = exclusion_sequence([r.eps for r in rows[1:]], min(rows[0].alpha, 1 - 1e-16))
        bounds = seq.alpha
    for r, bd in zip(rows, bounds if rows else []):
        lines.append(f"{r.level},{r.eps:.12g},{r.alpha:.12g},{bd:.12g},{r.kind},"
                     f"{r.central},{r.unresolved:.6g},{r.gap:.6g}")
    return "\n".join(lines) + "\n"


def exclusion_diagnostic(rows, slack=0.05):
    """Compare measured ``alpha_n`` with the recursion driven by measured ``eps``.

    The recursion is proved for the true capacity, not for proportion
    estimates, so excesses are logged rather than raised.

    Returns
    -------
    list of (level, measured alpha, bound, within bound + slack)
    """
    rows = [r for r in rows if not math.isnan(r.alpha)]
    if not rows:
        return []
    seq = exclusion_sequence([r.eps for r in rows[1:]], min(rows[0].alpha, 1 - 1e-16))
    out = []
    for r, bd in zip(rows, seq.alpha):
        ok = r.alpha <= bd + slack
        if not ok:
            log.info("level %d: measured alpha %.4g exceeds bound %.4g + %.2g",
                     r.level, r.alpha, bd, slack)
        out.append((r.level, r.alpha, bd, ok))
    return out

"""Map families and their pointwise calculus.

Three kinds are provided:

* :class:`RealQuadratic` -- ``q_tau(x) = tau - 1 - tau x**2`` on ``I = [-1, 1]``,
  normalized so that ``f(-1) = -1`` and ``f`` is even;
* :class:`ComplexQuadratic` -- ``p_c(z) = z**2 + c``;
* :class:`Perturbed` -- ``q_tau o (id + lam w)`` for a polynomial ``w`` vanishing
  at ``+-1``.

All methods accept floats, complex numbers, numpy arrays, or ``mpfr`` values,
and the arithmetic is carried out in the type of the argument.  The two
quadratic normalizations are related by ``z = -tau x`` and ``c = tau - tau**2``
(see :func:`tau_to_c`).
"""
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .errors import DomainError, NotUnimodal, SingularAtCritical
from .precision import MPFR

__all__ = [
    "MapFamily", "RealQuadratic", "ComplexQuadratic", "Perturbed",
    "QuadraticFamily", "PerturbedFamily", "BumpFieldSpec",
    "eval_map", "deriv_map", "schwarzian", "special_bump_field",
    "bump_field_derivative", "rescaled_bump_field", "make_perturbed_family",
    "validate_unimodal", "tau_to_c", "c_to_tau", "tau_to_a",
    "to_complex_coordinate", "from_complex_coordinate",
]


def _like(value, x):
    """Cast a parameter to the arithmetic type of ``x``."""
    if isinstance(x, MPFR):
        return value if isinstance(value, MPFR) else gmpy2.mpfr(value)
    if isinstance(value, MPFR):
        return float(value)
    return value


def _sqrt(x):
    if isinstance(x, MPFR):
        return gmpy2.sqrt(x) if x > 0 else x * 0
    return math.sqrt(x) if x > 0 else 0.0


class MapFamily:
    """Common interface of the map kinds.

    Subclasses implement ``f``, ``df``, ``d2f``, ``d3f``.  Real kinds also
    implement ``critical_point`` and ``inverse``.
    """

    kind = "abstract"
    real = True

    def f(self, x):
        raise NotImplementedError

    def df(self, x):
        raise NotImplementedError

    def d2f(self, x):
        raise NotImplementedError

    def d3f(self, x):
        raise NotImplementedError

    def critical_point(self, like=0.0):
        raise NotImplementedError

    def inverse(self, v, side):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


@dataclass(frozen=True)
class RealQuadratic(MapFamily):
    """The quadratic family ``q_tau(x) = tau - 1 - tau x**2``, ``tau in [1/2, 2]``.

    Parameters
    ----------
    tau : float, str or mpfr
        Parameter.  Strings are parsed at the working precision when the map
        is evaluated on mpfr arguments.

    Examples
    --------
    >>> q = RealQuadratic(2.0)
    >>> q.f(0.0), q.f(1.0)
    (1.0, -1.0)
    """

    tau: object
    kind = "RealQuadratic"

    def __post_init__(self):
        t = float(self.tau)
        if not 0.5 <= t <= 2.0:
            raise DomainError(f"tau={t} outside [1/2, 2]", tau=t)

    def _t(self, x):
        if isinstance(self.tau, str):
            return gmpy2.mpfr(self.tau) if isinstance(x, MPFR) else float(self.tau)
        return _like(self.tau, x)

    def f(self, x):
        t = self._t(x)
        return t - 1 - t * x * x

    def df(self, x):
        return -2 * self._t(x) * x

    def d2f(self, x):
        return -2 * self._t(x) + 0 * x

    def d3f(self, x):
        return 0 * x

    def critical_point(self, like=0.0):
        return like * 0

    def inverse(self, v, side):
        """Preimage of ``v`` on the branch ``side`` (+1 right of 0, -1 left)."""
        t = self._t(v)
        r = _sqrt((t - 1 - v) / t)
        return r if side > 0 else -r

    def describe(self):
        return {"kind": self.kind, "tau": str(self.tau)}


@dataclass(frozen=True)
class ComplexQuadratic(MapFamily):
    """``p_c(z) = z**2 + c``."""

    c: complex
    kind = "ComplexQuadratic"
    real = False

    def f(self, z):
        return z * z + self.c

    def df(self, z):
        return 2 * z

    def d2f(self, z):
        return 2 + 0 * z

    def d3f(self, z):
        return 0 * z

    def critical_point(self, like=0.0):
        return like * 0

    def describe(self):
        c = complex(self.c)
        return {"kind": self.kind, "c": [c.real, c.imag]}


def _poly_eval(coeffs, x, deriv=0):
    """Horner evaluation of the ``deriv``-th derivative (coefficients low to high)."""
    cs = list(coeffs)
    for _ in range(deriv):
        cs = [k * cs[k] for k in range(1, len(cs))]
    acc = 0 * x
    for c in reversed(cs):
        acc = acc * x + _like(c, x)
    return acc


def _poly_abs_bound(coeffs, deriv):
    """Crude bound of the ``deriv``-th derivative of ``w`` on ``[-1, 1]``."""
    cs = [abs(float(c)) for c in coeffs]
    for _ in range(deriv):
        cs = [k * cs[k] for k in range(1, len(cs))]
    return float(sum(cs))


@dataclass(frozen=True)
class Perturbed(MapFamily):
    """``f = q_tau o g`` with ``g = id + lam w``.

    Parameters
    ----------
    tau : float or mpfr
        Base quadratic parameter.
    w : tuple of float
        Polynomial coefficients of ``w`` in increasing degree, with
        ``w(-1) = w(1) = 0``.
    lam : float or mpfr
        Perturbation size.
    """

    tau: object
    w: tuple
    lam: object = 0.0
    kind = "Perturbed"

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(c) for c in self.w) or (0.0,))
        t = float(self.tau)
        if not 0.5 <= t <= 2.0:
            raise DomainError(f"tau={t} outside [1/2, 2]", tau=t)
        if abs(_poly_eval(self.w, -1.0)) > 1e-12 or abs(_poly_eval(self.w, 1.0)) > 1e-12:
            raise DomainError("w must vanish at -1 and 1")

    @property
    def base(self):
        return RealQuadratic(self.tau)

    def g(self, x, deriv=0):
        lam = _like(self.lam, x)
        if deriv == 0:
            return x + lam * _poly_eval(self.w, x)
        if deriv == 1:
            return 1 + lam * _poly_eval(self.w, x, 1)
        return lam * _poly_eval(self.w, x, deriv)

    def f(self, x):
        return self.base.f(self.g(x))

    def df(self, x):
        return self.base.df(self.g(x)) * self.g(x, 1)

    def d2f(self, x):
        y, g1, g2 = self.g(x), self.g(x, 1), self.g(x, 2)
        q = self.base
        return q.d2f(y) * g1 * g1 + q.df(y) * g2

    def d3f(self, x):
        y, g1, g2, g3 = self.g(x), self.g(x, 1), self.g(x, 2), self.g(x, 3)
        q = self.base
        return 3 * q.d2f(y) * g1 * g2 + q.df(y) * g3

    def g_inverse(self, y):
        """Solve ``g(x) = y`` on ``[-1, 1]`` (``g`` is increasing)."""
        if float(self.lam) == 0:
            return y
        one = _like(1.0, y)
        lo, hi = -one, one
        x = y
        if isinstance(y, MPFR):
            tol = gmpy2.mpfr(2) ** (4 - y.precision)
        else:
            tol = 4e-16
        for _ in range(400):
            gx = self.g(x) - y
            if gx > 0:
                hi = x
            else:
                lo = x
            step = gx / self.g(x, 1)
            xn = x - step
            if not lo <= xn <= hi:
                xn = (lo + hi) / 2
            if abs(xn - x) <= tol * (1 + abs(x)):
                return xn
            x = xn
        return x

    def critical_point(self, like=0.0):
        return self.g_inverse(like * 0)

    def inverse(self, v, side):
        return self.g_inverse(self.base.inverse(v, side))

    def describe(self):
        return {"kind": self.kind, "tau": str(self.tau), "w": list(self.w),
                "lam": str(self.lam)}


def eval_map(family, x, extend=False):
    """Evaluate ``family`` at ``x``.

    Raises
    ------
    DomainError
        For real kinds evaluated outside ``[-1, 1]`` unless ``extend`` is set.
    """
    if family.real and not extend:
        _check_domain(x)
    return family.f(x)


def _check_domain(x):
    arr = np.asarray(x, dtype=object if isinstance(x, MPFR) else None)
    if np.iscomplexobj(arr):
        raise DomainError("complex argument for a real map")
    if isinstance(x, MPFR):
        bad = not -1 <= x <= 1
    else:
        with np.errstate(invalid="ignore"):
            bad = bool(np.any(np.abs(np.asarray(x, dtype=float)) > 1.0))
    if bad:
        raise DomainError("argument outside [-1, 1]")


def deriv_map(family, x, order=1, extend=False):
    """Exact derivative of order 1, 2 or 3 of the family formula."""
    if family.real and not extend:
        _check_domain(x)
    try:
        return {1: family.df, 2: family.d2f, 3: family.d3f}[order](x)
    except KeyError:
        raise ValueError("order must be 1, 2 or 3") from None


def schwarzian(family, x, tol=1e-12):
    """Schwarzian derivative ``D3f/Df - 3/2 (D2f/Df)**2``.

    Raises
    ------
    SingularAtCritical
        If ``|Df(x)| < tol``.
    """
    d1 = family.df(x)
    if abs(d1) < tol:
        raise SingularAtCritical("Df vanishes", x=float(x))
    r = family.d2f(x) / d1
    return family.d3f(x) / d1 - 1.5 * r * r


# --- families of maps --------------------------------------------------------

@dataclass(frozen=True)
class QuadraticFamily:
    """The one-parameter curve ``tau -> q_tau`` restricted to ``bounds``."""

    bounds: tuple = (0.5, 2.0)

    def at(self, tau):
        return RealQuadratic(tau)

    def describe(self):
        return {"curve": "quadratic", "bounds": list(self.bounds)}


@dataclass(frozen=True)
class PerturbedFamily:
    """The curve ``lam -> q_tau o (id + lam w)`` over a certified ``lam_range``."""

    tau: object
    w: tuple
    lam_range: tuple
    bounds: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(c) for c in self.w))
        object.__setattr__(self, "bounds", tuple(self.lam_range))

    def at(self, lam):
        return Perturbed(self.tau, self.w, lam)

    def describe(self):
        return {"curve": "perturbed", "tau": str(self.tau), "w": list(self.w),
                "bounds": [float(b) for b in self.bounds]}


def validate_unimodal(family, grid=4096, refinements=3):
    """Check that a real family has exactly one critical point in ``int I``.

    For :class:`Perturbed` maps the sign of ``Dg = 1 + lam Dw`` is checked on a
    grid and certified between grid points with the bound
    ``|lam| sup|D2w| h/2``.  Quadratic maps are unimodal by construction.

    Returns
    -------
    bool
    """
    if not isinstance(family, Perturbed):
        return family.real
    lam = float(family.lam)
    if lam == 0:
        return True
    bound = abs(lam) * _poly_abs_bound(family.w, 2)
    n = int(grid)
    for _ in range(refinements + 1):
        xs = np.linspace(-1.0, 1.0, n)
        gp = 1.0 + lam * np.polynomial.polynomial.polyval(
            xs, np.polynomial.polynomial.polyder(family.w))
        if np.any(gp <= 0):
            return False
        # product D(id + lam w) * Df changes sign exactly once
        prod = gp * family.base.df(xs + lam * np.polynomial.polynomial.polyval(xs, family.w))
        s = np.sign(prod[1:-1])
        if np.count_nonzero(np.diff(s[s != 0])) != 1:
            return False
        h = 2.0 / (n - 1)
        if gp.min() - bound * h / 2 > 0:
            return True
        n *= 4
    return False


def make_perturbed_family(tau, w, lam_range, grid=4096, lam_grid=1024):
    """Build the family ``lam -> q_tau o (id + lam w)`` over ``lam_range``.

    Parameters
    ----------
    tau : float
    w : sequence of float
        Coefficients of ``w`` (increasing degree); ``w(+-1) = 0`` is required.
    lam_range : (float, float)
    grid : int
        Spatial validation grid passed to :func:`validate_unimodal`.
    lam_grid : int
        Number of parameter values scanned on each side of 0.

    Returns
    -------
    PerturbedFamily

    Raises
    ------
    NotUnimodal
        With the first scanned ``lam`` (moving away from 0) at which
        unimodality fails.

    Notes
    -----
    The set of admissible ``lam`` is an interval containing 0 because
    ``1 + lam Dw(x) > 0`` is a family of half-line conditions, so the scan is
    exhaustive once both ends pass.
    """
    lo, hi = (float(b) for b in lam_range)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise DomainError("lam_range must be a bounded interval")
    w = tuple(float(c) for c in w) or (0.0,)
    Perturbed(tau, w, 0.0)
    for end in (hi, lo):
        if end == 0 or validate_unimodal(Perturbed(tau, w, end), grid):
            continue
        start = 0.0 if lo <= 0.0 <= hi else (lo if end == hi else hi)
        for lam in np.linspace(start, end, lam_grid + 1)[1:]:
            if not validate_unimodal(Perturbed(tau, w, float(lam)), grid):
                raise NotUnimodal(float(lam))
        raise NotUnimodal(end)
    return PerturbedFamily(tau, w, (lo, hi))


# --- bump field ---------------------------------------------------------------

@dataclass(frozen=True)
class BumpFieldSpec:
    """Special bump field ``v_n`` transported to an interval ``A1``.

    Parameters
    ----------
    n : int
        Steepness index.
    interval : (float, float)
        Target interval ``A1``; ``Q`` is the affine orientation-preserving
        map ``A1 -> [-1, 1]``.
    amplitude : float
        Scale factor applied after transport (a free configuration knob).
    """

    n: int
    interval: tuple = (-1.0, 1.0)
    amplitude: float = 1.0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be a positive integer")
        a, b = self.interval
        if not b > a:
            raise ValueError("empty target interval")

    def Q(self, x):
        a, b = self.interval
        return (2 * x - (a + b)) / (b - a)


def special_bump_field(spec, z):
    """``v_n(z) = (1-z^2)(1-e^{-2n}) + (2/n)(e^{-n(1+z)} + e^{-n(1-z)} - e^{-2n} - 1)``."""
    n = int(spec.n)
    z = np.asarray(z, dtype=float) if not np.isscalar(z) else float(z)
    e2 = math.exp(-2 * n)
    return ((1 - z * z) * (1 - e2)
            + (2.0 / n) * (np.exp(-n * (1 + z)) + np.exp(-n * (1 - z)) - e2 - 1))


def bump_field_derivative(spec, z):
    n = int(spec.n)
    z = np.asarray(z, dtype=float) if not np.isscalar(z) else float(z)
    e2 = math.exp(-2 * n)
    return -2 * z * (1 - e2) + 2 * (np.exp(-n * (1 - z)) - np.exp(-n * (1 + z)))


def rescaled_bump_field(spec, x, derivative=False):
    """``amplitude * v_n(Q(x))`` on ``A1`` (or its derivative in ``x``)."""
    a, b = spec.interval
    z = spec.Q(np.asarray(x, dtype=float) if not np.isscalar(x) else float(x))
    if derivative:
        return spec.amplitude * bump_field_derivative(spec, z) * 2.0 / (b - a)
    return spec.amplitude * special_bump_field(spec, z)


# --- conjugacy between normalizations -----------------------------------------

def tau_to_a(tau):
    """The helper ``a = tau**2 - tau``; ``q_tau`` is conjugate to ``z**2 - a``."""
    return tau * tau - tau


def tau_to_c(tau):
    """``c = tau - tau**2`` such that ``z = -tau x`` conjugates ``q_tau`` to ``z**2 + c``."""
    return -tau_to_a(tau)


def c_to_tau(c):
    """Inverse of :func:`tau_to_c` on ``c in [-2, 1/4]`` (root with ``tau >= 1/2``)."""
    c = float(c)
    if not -2.0 <= c <= 0.25:
        raise DomainError("real c outside [-2, 1/4]", c=c)
    return 0.5 * (1.0 + math.sqrt(1.0 - 4.0 * c))


def to_complex_coordinate(tau, x):
    return -tau * x


def from_complex_coordinate(tau, z):
    return -z / tau

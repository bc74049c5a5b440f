"""Lens-shaped complex neighbourhoods and a grid estimator of annulus moduli.

Moduli follow the convention ``mod({1 < |z| < r}) = ln r``.  The estimator
solves the discrete Dirichlet problem (potential 1 on the inner curve, 0 on
the outer one) on a square resistor network.  Edges cut by a boundary curve
get conductance ``1/t``, ``t`` the fraction of the edge inside the domain,
which keeps the error smooth under refinement.  The Dirichlet energy ``E`` of
the solution approximates the conductance of the annulus and
``mod = 2 pi / E``.

Two grids are available.  ``"cartesian"`` covers the bounding box of the
outer curve.  ``"logpolar"`` works in ``(theta, log|z - z0|)`` about a point
of the inner region; by conformal invariance the energy is unchanged, and
scale ratios of ``1e-10`` or less cost only a longer strip.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInterval, GridTooCoarse, InsufficientLevels, NotNested

__all__ = [
    "DThetaPiece", "ModulusEstimate", "d_theta_boundary", "annulus_modulus",
    "nest_modulus_proxy", "polyline_csv", "circle",
]

_TMIN = 1e-3


@dataclass(frozen=True)
class DThetaPiece:
    """The lens ``D_theta(A)``: two circular arcs through ``a, b`` meeting
    the real line at angle ``theta``.

    ``boundary`` is a closed counter-clockwise polyline (complex array,
    first vertex not repeated).
    """

    A: tuple
    theta: float
    boundary: np.ndarray

    @property
    def half_width(self):
        return 0.5 * (self.A[1] - self.A[0])

    @property
    def midpoint(self):
        return 0.5 * (self.A[0] + self.A[1])

    @property
    def height(self):
        """Maximal imaginary part, ``h tan(theta/2)``."""
        return self.half_width * math.tan(0.5 * self.theta)

    def area(self):
        """Exact lens area."""
        h, t = self.half_width, self.theta
        R = h / math.sin(t)
        return R * R * (2 * t - math.sin(2 * t))

    def contains(self, z, strict=True):
        """Membership in the closed (or open) lens, vectorised over ``z``."""
        z = np.asarray(z, dtype=complex)
        h, t = self.half_width, self.theta
        R = h / math.sin(t)
        off = h / math.tan(t)
        w = z - self.midpoint
        d1 = np.abs(w - 1j * off)
        d2 = np.abs(w + 1j * off)
        if strict:
            return (d1 < R) & (d2 < R)
        return (d1 <= R * (1 + 1e-12)) & (d2 <= R * (1 + 1e-12))


def d_theta_boundary(A, theta, resolution=1024):
    """Polyline of ``D_theta(A)``.

    The upper arc lies on the circle centred at ``m - i h cot(theta)`` with
    radius ``h / sin(theta)`` (``m`` the midpoint, ``h`` the half-length of
    ``A``); the lower arc is its mirror image.

    Parameters
    ----------
    A : (float, float)
    theta : float
        In ``(0, pi/2]``.
    resolution : int
        Number of vertices.

    Examples
    --------
    >>> p = d_theta_boundary((-1.0, 1.0), math.pi / 2, 8)
    >>> bool(np.allclose(abs(p.boundary), 1.0))
    True
    """
    a, b = float(A[0]), float(A[1])
    if not b > a:
        raise DegenerateInterval("A must have positive length", A=[a, b])
    if not 0 < theta <= math.pi / 2 + 1e-15:
        raise ValueError("theta must lie in (0, pi/2]")
    n = max(int(resolution) // 2, 2)
    h, m = 0.5 * (b - a), 0.5 * (a + b)
    R = h / math.sin(theta)
    off = h / math.tan(theta)
    phi = np.linspace(math.pi / 2 - theta, math.pi / 2 + theta, n + 1)[:-1]
    upper = m + R * np.cos(phi) + 1j * (R * np.sin(phi) - off)
    upper[0] = b
    lower = np.r_[a, np.conj(upper[1:][::-1])]
    pts = np.concatenate([upper, lower])
    return DThetaPiece((a, b), float(theta), pts)


def circle(r, n=1024, center=0.0):
    """Closed polyline of a circle (helper for calibration)."""
    t = 2 * np.pi * np.arange(n) / n
    return center + r * np.exp(1j * t)


@dataclass(frozen=True)
class ModulusEstimate:
    """Grid estimate of ``mod`` with a refinement pair.

    ``error`` is ``|value - coarse|`` where ``coarse`` used half the grid.
    """

    value: float
    grid: int
    method: str
    error: float
    coarse: float


def _as_complex(poly):
    p = np.asarray(poly)
    if p.ndim == 2 and p.shape[1] == 2:
        p = p[:, 0] + 1j * p[:, 1]
    p = p.astype(complex)
    if abs(p[0] - p[-1]) == 0:
        p = p[:-1]
    return p


def _crossings(p, y, axis):
    """Sorted coordinates where the closed polyline ``p`` crosses the line
    ``Im z = y`` (axis 0) or ``Re z = y`` (axis 1)."""
    q = np.roll(p, -1)
    if axis == 0:
        u0, u1, v0, v1 = p.imag, q.imag, p.real, q.real
    else:
        u0, u1, v0, v1 = p.real, q.real, p.imag, q.imag
    hit = (u0 <= y) != (u1 <= y)
    x = v0[hit] + (y - u0[hit]) * (v1[hit] - v0[hit]) / (u1[hit] - u0[hit])
    return np.sort(x)


def _inside(p, z):
    """Even-odd membership of points ``z`` in the closed polyline ``p``."""
    z = np.asarray(z, dtype=complex)
    q = np.roll(p, -1)
    out = np.zeros(z.shape, dtype=bool)
    for k in range(0, len(p), 512):
        a, b = p[k:k + 512, None], q[k:k + 512, None]
        y = z.imag[None, :]
        hit = (a.imag <= y) != (b.imag <= y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = a.real + (y - a.imag) * (b.real - a.real) / (b.imag - a.imag)
        out ^= (np.sum(hit & (x < z.real[None, :]), axis=0) % 2).astype(bool)
    return out


def _solve(S, fx, fy, periodic_x=False):
    """Discrete Dirichlet energy of the network on the node grid ``S``.

    ``S[j, i]`` is 0 (free), 1 (potential 1) or 2 (potential 0).  ``fx[j, i]``
    is the boundary crossing position along edge ``(j,i)-(j,i+1)`` measured
    from the left node in cell units; ``fy`` likewise for vertical edges.
    """
    ny, nx = S.shape
    free = S == 0
    idx = -np.ones(S.shape, dtype=np.int64)
    idx[free] = np.arange(int(free.sum()))
    nfree = int(free.sum())
    if nfree == 0:
        raise GridTooCoarse("no interior nodes")
    rows, cols, vals = [], [], []
    diag = np.zeros(nfree)
    rhs = np.zeros(nfree)
    flux_w, flux_i = [], []

    def edges(Sa, Sb, Ia, Ib, f):
        fa, fb = Sa == 0, Sb == 0
        both = fa & fb
        rows.append(Ia[both]); cols.append(Ib[both]); vals.append(np.ones(both.sum()))
        np.add.at(diag, Ia[both], 1.0)
        np.add.at(diag, Ib[both], 1.0)
        if np.any((Sa == 1) & (Sb == 2)) or np.any((Sa == 2) & (Sb == 1)):
            raise GridTooCoarse("boundary curves closer than one grid cell")
        for side, Sfree, Ifree, Sbnd, t in ((0, fa & ~fb, Ia, Sb, f), (1, fb & ~fa, Ib, Sa, 1.0 - f)):
            m = Sfree
            w = 1.0 / np.maximum(t[m], _TMIN)
            np.add.at(diag, Ifree[m], w)
            hot = Sbnd[m] == 1
            np.add.at(rhs, Ifree[m][hot], w[hot])
            flux_w.append(w[hot]); flux_i.append(Ifree[m][hot])

    edges(S[:, :-1], S[:, 1:], idx[:, :-1], idx[:, 1:], fx[:, :-1])
    if periodic_x:
        edges(S[:, -1], S[:, 0], idx[:, -1], idx[:, 0], fx[:, -1])
    edges(S[:-1, :], S[1:, :], idx[:-1, :], idx[1:, :], fy[:-1, :])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    A = sp.coo_matrix((np.r_[-v, -v, diag], (np.r_[r, c, np.arange(nfree)],
                                              np.r_[c, r, np.arange(nfree)])),
                      shape=(nfree, nfree)).tocsr()
    u = _linsolve(A, rhs)
    fw, fi = np.concatenate(flux_w), np.concatenate(flux_i)
    return float(np.sum(fw * (1.0 - u[fi])))


def _linsolve(A, b):
    import pyamg
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    u = ml.solve(b, tol=1e-12, accel="cg", maxiter=500)
    return u


def _cartesian_energy(outer, inner, N):
    lo = complex(outer.real.min(), outer.imag.min())
    hi = complex(outer.real.max(), outer.imag.max())
    span = max(hi.real - lo.real, hi.imag - lo.imag)
    h = span / (N - 5)
    x = lo.real - 2 * h + h * np.arange(N)
    y = lo.imag - 2 * h + h * np.arange(N)
    ext = min(inner.real.max() - inner.real.min(), inner.imag.max() - inner.imag.min())
    if ext < 4 * h:
        raise GridTooCoarse("inner curve thinner than 4 cells", cells=ext / h)
    S = np.full((N, N), 2, dtype=np.int8)
    fx = np.full((N, N), 0.5)
    fy = np.full((N, N), 0.5)
    for axis, coords, other, F in ((0, y, x, fx), (1, x, y, fy)):
        for j, yy in enumerate(coords):
            co = _crossings(outer, yy, axis)
            ci = _crossings(inner, yy, axis)
            ino = np.searchsorted(co, other) % 2 == 1
            ini = np.searchsorted(ci, other) % 2 == 1
            row = np.where(ini, 1, np.where(ino, 0, 2)).astype(np.int8)
            if axis == 0:
                S[j, :] = row
            # position of the first crossing after each node
            allc = np.r_[np.sort(np.r_[co, ci]), np.inf]
            nxt = allc[np.searchsorted(allc, other, side="right")]
            t = np.clip((nxt - other) / h, 0.0, 1.0)
            if axis == 0:
                F[j, :] = t
            else:
                F[:, j] = t
    return _solve(S, fx, fy)


def _radial(p, z0, theta):
    """Distance from ``z0`` to the star-shaped polyline ``p`` along rays."""
    w = p - z0
    ang = np.unwrap(np.angle(w))
    if ang[-1] < ang[0]:
        w, ang = w[::-1], ang[::-1]
    d = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
    if np.any(d <= 0) or abs(ang[-1] + d[-1] - ang[0] - 2 * np.pi) > 1e-9:
        raise NotNested("curve is not star-shaped about the inner centre")
    th = ang[0] + np.mod(theta - ang[0], 2 * np.pi)
    k = np.searchsorted(ang, th, side="right") - 1
    a = w[k]
    b = w[(k + 1) % len(w)]
    e = np.exp(1j * th)
    seg = b - a
    cross = lambda u, v: u.real * v.imag - u.imag * v.real
    return cross(a, seg) / cross(e, seg)


def _logpolar_energy(outer, inner, N, z0):
    dth = 2 * np.pi / N
    th = dth * np.arange(N)
    rin = np.log(_radial(inner, z0, th))
    rout = np.log(_radial(outer, z0, th))
    if np.any(rout - rin < 2 * dth):
        raise GridTooCoarse("boundary curves closer than two log-polar cells")
    r0 = rin.min() - 2 * dth
    M = int(math.ceil((rout.max() + 2 * dth - r0) / dth)) + 1
    rho = r0 + dth * np.arange(M)
    R = rho[:, None]
    S = np.where(R <= rin[None, :], 1, np.where(R < rout[None, :], 0, 2)).astype(np.int8)
    # radial edges: exact crossing positions
    fy = np.full((M, N), 0.5)
    nb = np.where(S == 1, rin[None, :], rout[None, :])
    fy[:] = np.clip((nb - R) / dth, 0.0, 1.0)
    # angular edges: interpolate the boundary between neighbouring rays
    fx = np.full((M, N), 0.5)
    for b in (rin, rout):
        b0, b1 = b[None, :], np.roll(b, -1)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (R - b0) / (b1 - b0)
        cut = (R > np.minimum(b0, b1)) & (R <= np.maximum(b0, b1))
        fx = np.where(cut, np.clip(np.nan_to_num(t, nan=0.5), 0.0, 1.0), fx)
    return _solve(S, fx, fy, periodic_x=True)


def annulus_modulus(outer, inner, grid=512, method="cartesian", center=None):
    """Modulus of the annulus between two closed polylines.

    Parameters
    ----------
    outer, inner : array_like
        Complex arrays or ``(n, 2)`` arrays of vertices.
    grid : int
        Nodes per side (cartesian) or per turn (logpolar).
    method : {"cartesian", "logpolar", "auto"}
        ``"auto"`` picks logpolar when the inner curve spans fewer than 32
        cartesian cells.
    center : complex, optional
        Pole of the log-polar grid; defaults to the centroid of the inner
        vertices.

    Returns
    -------
    ModulusEstimate
    """
    outer, inner = _as_complex(outer), _as_complex(inner)
    if not np.all(_inside(outer, inner)) or np.any(_inside(inner, outer)):
        raise NotNested("inner curve is not strictly inside the outer curve")
    grid = int(grid)
    if grid < 16:
        raise GridTooCoarse("grid must have at least 16 nodes", grid=grid)
    if method == "auto":
        span = max(np.ptp(outer.real), np.ptp(outer.imag))
        ext = min(np.ptp(inner.real), np.ptp(inner.imag))
        method = "cartesian" if ext * grid >= 32 * span else "logpolar"
    if method == "cartesian":
        run = lambda n: _cartesian_energy(outer, inner, n)
    elif method == "logpolar":
        z0 = complex(np.mean(inner)) if center is None else complex(center)
        run = lambda n: _logpolar_energy(outer, inner, n, z0)
    else:
        raise ValueError(f"unknown method {method!r}")
    fine = 2 * np.pi / run(grid)
    coarse = 2 * np.pi / run(grid // 2)
    return ModulusEstimate(fine, grid, method, abs(fine - coarse), coarse)


def nest_modulus_proxy(nest, phi, psi, levels=None, grid=256, resolution=2048):
    """Moduli of ``D_phi(I_{l+1}) minus closure D_psi(I_{l+2})`` at non-central levels.

    Parameters
    ----------
    nest : PrincipalNest
    phi, psi : float
        Lens angles, ``0 < psi < phi <= pi/2``.
    levels : iterable of int, optional
        Non-central levels ``l`` to use; default all with ``I_{l+2}`` built.
    grid : int
        Angular nodes of the log-polar grid.

    Returns
    -------
    list of (k, level, ModulusEstimate)
        ``k`` counts non-central levels from 1.
    """
    if not 0 < psi < phi <= math.pi / 2 + 1e-15:
        raise ValueError("need 0 < psi < phi <= pi/2")
    nc = list(nest.non_central_indices)
    if levels is None:
        levels = [l for l in nc if l + 2 <= nest.depth]
    levels = list(levels)
    if len(levels) < 2:
        raise InsufficientLevels("need at least two non-central levels", available=len(levels))
    out = []
    for l in levels:
        if l not in nc or l + 2 > nest.depth:
            raise InsufficientLevels(f"level {l} is not a usable non-central level", level=l)
        a, b = nest.level(l + 1), nest.level(l + 2)
        # normalise so that I_{l+1} = [-1, 1]; moduli are conformally invariant
        mid, half = (a.left + a.right) / 2, (a.right - a.left) / 2
        A = (-1.0, 1.0)
        B = (float((b.left - mid) / half), float((b.right - mid) / half))
        outer = d_theta_boundary(A, phi, resolution)
        inner = d_theta_boundary(B, psi, resolution)
        if not np.all(outer.contains(inner.boundary, strict=False)):
            raise NotNested("lens pieces fail containment", level=l)
        est = annulus_modulus(outer.boundary, inner.boundary, grid, "logpolar",
                              center=inner.midpoint)
        out.append((nc.index(l) + 1, l, est))
    return out


def polyline_csv(poly):
    """``x,y`` point list of a closed polyline (first vertex repeated)."""
    p = _as_complex(getattr(poly, "boundary", poly))
    p = np.r_[p, p[:1]]
    return "x,y\n" + "".join(f"{z.real:.17g},{z.imag:.17g}\n" for z in p)

"""Classification of parameters of ``z^2 + c`` and seeded box surveys.

Each ``c`` is either escaping (some iterate of 0 leaves the disk of radius
``R``), hyperbolic (an attracting cycle is found and refined) or
undetermined within the budget.  Renormalizable and non-renormalizable
parameters are not told apart: undetermined samples are candidates for the
boundary of the Mandelbrot set.
"""
import enum
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Kind", "ComplexVerdict", "BoxSurvey", "classify_complex", "classify_many",
    "box_survey", "verdicts_jsonl", "survey_csv", "raster", "raster_ppm",
    "raster_csv",
]

RESIDUAL_TOL = 1e-10


class Kind(str, enum.Enum):
    ESCAPING = "Escaping"
    HYPERBOLIC = "Hyperbolic"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ComplexVerdict:
    """Outcome for one parameter.

    ``escape_time`` is the first ``n`` with ``|z_n| > R``.  For hyperbolic
    verdicts ``cycle`` is a refined periodic point with
    ``|p_c^period(z) - z| = residual``.
    """

    c: complex
    kind: Kind
    iterations: int
    escape_time: int = None
    period: int = None
    multiplier: complex = None
    cycle: complex = None
    residual: float = None

    def to_record(self):
        d = {"c": [self.c.real, self.c.imag], "verdict": self.kind.value,
             "iterations": self.iterations}
        if self.kind is Kind.ESCAPING:
            d["escape_time"] = self.escape_time
        elif self.kind is Kind.HYPERBOLIC:
            d.update(period=self.period,
                     multiplier=[self.multiplier.real, self.multiplier.imag],
                     residual=self.residual)
        return d


def _refine_cycle(c, z, p, steps=60):
    """Newton on ``p_c^p(z) - z``; returns ``(z, multiplier, residual)``."""
    for _ in range(steps):
        w, d = z, 1.0 + 0j
        for _ in range(p):
            d = 2 * w * d
            w = w * w + c
        g = w - z
        if abs(d - 1) == 0:
            break
        dz = g / (d - 1)
        z = z - dz
        if abs(dz) < 1e-16 * max(1.0, abs(z)):
            break
    w, d = z, 1.0 + 0j
    for _ in range(p):
        d = 2 * w * d
        w = w * w + c
    return z, d, abs(w - z)


def _detect_cycle(c, tail, max_period, tol=1e-6):
    """Search the orbit tail for an attracting cycle of minimal period."""
    with np.errstate(all="ignore"):
        return _detect(c, [complex(t) for t in tail], max_period, tol)


def _detect(c, tail, max_period, tol):
    z = tail[-1]
    for p in range(1, max_period + 1):
        if p >= len(tail):
            break
        if abs(z - tail[-1 - p]) < tol * max(1.0, abs(z)):
            zs, mult, res = _refine_cycle(c, z, p)
            if res < RESIDUAL_TOL and abs(mult) < 1:
                # reduce to the minimal period
                for q in range(1, p):
                    if p % q == 0:
                        zq, mq, rq = _refine_cycle(c, zs, q)
                        if rq < RESIDUAL_TOL and abs(mq) < 1:
                            return q, mq, zq, rq
                return p, mult, zs, res
    return None


def classify_complex(c, N=10_000, R=2.0, max_period=64):
    """Escaping, hyperbolic or undetermined.

    Parameters
    ----------
    c : complex
    N : int
        Iteration budget, at least 100.
    R : float
        Escape radius, at least 2.
    max_period : int

    Examples
    --------
    >>> classify_complex(0).period
    1
    >>> classify_complex(0.3).kind.value
    'Escaping'
    """
    verdicts = classify_many(np.array([complex(c)]), N, R, max_period)
    return verdicts[0]


def classify_many(cs, N=10_000, R=2.0, max_period=64):
    """Vectorised :func:`classify_complex` over an array of parameters."""
    if N < 100:
        raise ValueError("N must be at least 100")
    if R < 2:
        raise ValueError("R must be at least 2")
    cs = np.asarray(cs, dtype=complex).ravel()
    n = cs.size
    z = np.zeros(n, dtype=complex)
    esc = np.full(n, -1, dtype=np.int64)
    keep = max(2 * max_period + 2, 8)
    tail = np.zeros((keep, n), dtype=complex)
    R2 = R * R
    idx = np.arange(n)
    for k in range(1, N + 1):
        za = z[idx]
        za = za * za + cs[idx]
        z[idx] = za
        out = za.real * za.real + za.imag * za.imag > R2
        if out.any():
            esc[idx[out]] = k
            idx = idx[~out]
            if idx.size == 0:
                break
        if k > N - keep:
            tail[k - (N - keep) - 1, idx] = z[idx]
    res = []
    for j in range(n):
        c = complex(cs[j])
        if esc[j] >= 0:
            res.append(ComplexVerdict(c, Kind.ESCAPING, int(esc[j]), escape_time=int(esc[j])))
            continue
        found = _detect_cycle(c, list(tail[:, j]), max_period)
        if found:
            p, mult, zc, r = found
            res.append(ComplexVerdict(c, Kind.HYPERBOLIC, N, period=p, multiplier=complex(mult),
                                      cycle=complex(zc), residual=float(r)))
        else:
            res.append(ComplexVerdict(c, Kind.UNDETERMINED, N))
    return res


@dataclass(frozen=True)
class BoxSurvey:
    """Counts and densities of verdicts over uniformly sampled parameters."""

    box: tuple
    N: int
    seed: int
    budget: int
    counts: dict
    verdicts: list = field(repr=False, default_factory=list)

    def density(self, kind):
        return self.counts.get(Kind(kind).value, 0) / self.N

    def stderr(self, kind):
        p = self.density(kind)
        return float(np.sqrt(p * (1 - p) / self.N))

    def to_record(self):
        return {"box": list(self.box), "N": self.N, "seed": self.seed, "budget": self.budget,
                "counts": self.counts,
                "density": {k.value: self.density(k) for k in Kind},
                "stderr": {k.value: self.stderr(k) for k in Kind}}


def _chunks(cs, jobs):
    return [c for c in np.array_split(cs, max(1, jobs)) if c.size]


def _work(args):
    cs, budget, R, max_period = args
    return classify_many(cs, budget, R, max_period)


def box_survey(box, N=1000, seed=0, budget=10_000, R=2.0, max_period=64, jobs=1):
    """Classify ``N`` seeded uniform samples of a complex rectangle.

    Parameters
    ----------
    box : (re_min, re_max, im_min, im_max)
    N : int
        Number of samples.
    seed : int
    budget : int
        Iteration cap per sample.
    jobs : int
        Worker processes; the result does not depend on it.
    """
    x0, x1, y0, y1 = map(float, box)
    rng = np.random.default_rng(seed)
    u = rng.random((N, 2))
    cs = (x0 + (x1 - x0) * u[:, 0]) + 1j * (y0 + (y1 - y0) * u[:, 1])
    parts = [(c, budget, R, max_period) for c in _chunks(cs, jobs)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_work, parts))
    else:
        results = [_work(p) for p in parts]
    verdicts = [v for r in results for v in r]
    counts = {k.value: 0 for k in Kind}
    for v in verdicts:
        counts[v.kind.value] += 1
    return BoxSurvey((x0, x1, y0, y1), int(N), int(seed), int(budget), counts, verdicts)


def verdicts_jsonl(verdicts, extra=None):
    """One JSON line per verdict, in input order."""
    extra = extra or {}
    return "".join(json.dumps({"index": i, **v.to_record(), **extra}, sort_keys=True) + "\n"
                   for i, v in enumerate(verdicts))


def survey_csv(surveys):
    lines = ["re_min,re_max,im_min,im_max,N,seed,budget,"
             + ",".join(f"n_{k.value},density_{k.value},stderr_{k.value}" for k in Kind)]
    for s in surveys:
        row = [*(f"{b:.17g}" for b in s.box), str(s.N), str(s.seed), str(s.budget)]
        for k in Kind:
            row += [str(s.counts[k.value]), f"{s.density(k):.12g}", f"{s.stderr(k):.12g}"]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def raster(box, width, height, budget=1000, R=2.0, max_period=32):
    """Verdict grid over a rectangle; row 0 is the top edge.

    Returns an integer array: 0 escaping, 1 hyperbolic, 2 undetermined.
    """
    x0, x1, y0, y1 = map(float, box)
    xs = x0 + (x1 - x0) * (np.arange(width) + 0.5) / width
    ys = y1 - (y1 - y0) * (np.arange(height) + 0.5) / height
    cs = (xs[None, :] + 1j * ys[:, None]).ravel()
    code = {Kind.ESCAPING: 0, Kind.HYPERBOLIC: 1, Kind.UNDETERMINED: 2}
    vs = classify_many(cs, budget, R, max_period)
    return np.array([code[v.kind] for v in vs], dtype=np.uint8).reshape(height, width)


_PALETTE = np.array([[255, 255, 255], [30, 30, 30], [200, 40, 40]], dtype=np.uint8)


def raster_ppm(grid):
    """Binary PPM bytes: white escaping, black hyperbolic, red undetermined."""
    h, w = grid.shape
    return f"P6\n{w} {h}\n255\n".encode() + _PALETTE[grid].tobytes()


def raster_csv(grid):
    return "\n".join(",".join(str(int(v)) for v in row) for row in grid) + "\n"

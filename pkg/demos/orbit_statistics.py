"""Orbit statistics across the real quadratic family.

Classifies a seeded sample of parameters and summarises the Lyapunov and
recurrence exponents of the chaotic ones.

Run: python demos/orbit_statistics.py [n_samples] [N]
"""
import sys
from collections import Counter

import numpy as np

from nestlab.maps import RealQuadratic
from nestlab.stats import Budget, Verdict, classify

n = int(sys.argv[1]) if len(sys.argv) > 1 else 40
N = int(sys.argv[2]) if len(sys.argv) > 2 else 10**5

# two closed forms first: tau = 2 is Chebyshev, tau = 1.2 has an attracting fixed point
for tau in (2.0, 1.2):
    v = classify(RealQuadratic(tau), Budget(N=N))
    print(f"tau = {tau}: {v.classification.value}, ce = {v.ce_exponent}, "
          f"period = {v.period}, multiplier = {v.multiplier}")

taus = np.random.default_rng(0).uniform(1.5, 2.0, n)
verdicts = [classify(RealQuadratic(float(t)), Budget(N=N, nest=False)) for t in taus]
print(f"\n{n} samples of tau in [1.5, 2]:", dict(Counter(v.classification.value for v in verdicts)))
chaotic = [v for v in verdicts if v.classification is Verdict.NON_REGULAR_CANDIDATE]
if chaotic:
    ce = np.array([v.ce_exponent for v in chaotic])
    gam = np.array([v.gamma_hat for v in chaotic])
    print(f"chaotic: median ce = {np.median(ce):.3f}, median gamma_hat = {np.median(gam):.3f}")
    periods = Counter(v.period for v in verdicts if v.period)
    print("attracting cycle periods:", dict(sorted(periods.items())))

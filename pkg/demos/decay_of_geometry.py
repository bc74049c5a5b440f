"""Deep parameters by combinatorial descent, and how their geometry decays.

A parameter drawn uniformly usually has a shallow nest before floating point
gives out.  ``descend`` instead steers the parameter inside the nested
parameter windows, so every level is a prescribed non-central return.

Run: python demos/decay_of_geometry.py [n_seeds]
"""
import math
import sys

import numpy as np

from nestlab.capacity import measure_exclusion_data
from nestlab.geometry import nest_modulus_proxy
from nestlab.maps import QuadraticFamily, RealQuadratic
from nestlab.nest import log_scaling_ratios
from nestlab.params import descend, log_parameter_scaling_ratios
from nestlab.stats import Budget, classify

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 4
curve = QuadraticFamily((1.5, 2.0))


def fmt(v):
    return " ".join(f"{x:6.2f}" for x in v)


for seed in range(n_seeds):
    dp = descend(curve, 8, np.random.default_rng(seed), lam_range=(1.84, 2.0))
    v = classify(RealQuadratic(dp.lam), Budget(N=10**5, nest=False))
    print(f"seed {seed}: tau = {float(dp.lam):.15f}  {v.classification.value}  "
          f"ce = {v.ce_exponent:.3f}")
    phase = [r for _, r in log_scaling_ratios(dp.nest)]
    param = [r for _, r in log_parameter_scaling_ratios(dp.windows, dp.nest)]
    eps = [r.eps for r in measure_exclusion_data(dp.nest, alpha=False)]
    mods = [e.value for _, _, e in nest_modulus_proxy(dp.nest, math.pi / 2, math.pi / 4,
                                                      grid=128)]
    print(f"  phase log ratios     {fmt(phase)}")
    print(f"  parameter log ratios {fmt(param)}")
    print(f"  log eps_n            {fmt(np.log(eps))}")
    print(f"  modulus proxy        {fmt(mods)}")

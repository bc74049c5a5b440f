"""Walk down the principal nest of one chaotic quadratic map.

Run: python demos/principal_nest.py [tau]
"""
import sys

from nestlab.maps import RealQuadratic
from nestlab.nest import (build_nest, log_scaling_ratios, return_domains,
                          verify_return_domain)
from nestlab.precision import to_str

tau = float(sys.argv[1]) if len(sys.argv) > 1 else 1.9
nest = build_nest(RealQuadratic(tau), max_depth=10)
print(f"tau = {tau}: depth {nest.depth}, stopped by {nest.termination.value}")

# each level is the central return domain of the one above it
for i in range(1, nest.depth + 1):
    lv = nest.level(i)
    if lv.return_time is None:
        kind, rt = "return not resolved", "-"
    else:
        kind, rt = ("central" if lv.central_return else "non-central"), lv.return_time
    print(f"  I_{i}: half-width {to_str(lv.right, 8):>16}  return time {rt:>5}  {kind}")

# the first return to I_2 splits it into branches; every one is checked
# by iterating its endpoints back onto the boundary
doms = return_domains(nest, 2, width_floor=1e-2)
ok = all(verify_return_domain(nest, d, 1e-9) for d in doms)
# the domain hit by the critical orbit is listed even when it is thinner
print(f"\nlevel 2: {len(doms)} return domains at a 1% floor, all verified: {ok}")
for d in doms[:6]:
    print(f"  index {d.index:>3}  return time {d.return_time:>3}  relative width "
          f"{float(d.width / nest.level(2).width):.3e}")

# scaling ratios after non-central returns shrink: the geometry decays
print("\nlog |I_{l+2}| / |I_{l+1}| at the non-central levels")
for k, r in log_scaling_ratios(nest):
    print(f"  k = {k}: {r:7.3f}")

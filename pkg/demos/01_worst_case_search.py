"""
Worst-case search on a single row
=================================

For a fixed candidate solution a chance-constrained row reduces to a scalar
function V(h, tau). Positive values mean some distribution in the ambiguity
set violates the row. This script evaluates V on a small instance, finds
its maximum analytically and checks the answer against a grid search.
"""

import numpy as np

from unimodal_drcc.separation import (
    SeparationInstance,
    brute_force_worst_case,
    tau_bracket,
    violation_value,
    worst_case,
)

# alpha = 1, eps = 0.05, unit spread, no slack, mode offset h in [0.1, 0.6]
inst = SeparationInstance(alpha=1.0, epsilon=0.05, R_tilde=1.0, c_tilde=0.0, h_lo=0.1, h_hi=0.6)

print("V(h, tau) at a few points")
for h, tau in [(0.1, 2.0), (0.3, 3.0), (0.2, 2.5), (0.4, 11.0), (0.6, 10.0), (0.5, 10.5)]:
    print(f"  h={h:.1f} tau={tau:5.1f}  V={violation_value(h, tau, inst):+.4f}")

# V is not jointly concave: the midpoint of two points can lie above the chord
mid = violation_value(0.2, 2.5, inst)
chord = 0.5 * (violation_value(0.1, 2.0, inst) + violation_value(0.3, 3.0, inst))
print(f"\nmidpoint {mid:.4f} vs chord {chord:.4f}")

# the tau axis splits where the free maximizer in h leaves [h_lo, h_hi]
lo, hi = tau_bracket(inst)
print(f"tau bracket: [{lo:.4f}, {hi:.4f}]")

wc = worst_case(inst)
bf = brute_force_worst_case(inst)
print(f"\nanalytic: tau*={wc.tau_star:.6f} h*={wc.h_star:.6f} V={wc.violation:.9f} (case {wc.case})")
print(f"grid:     tau*={bf.tau_star:.6f} h*={bf.h_star:.6f} V={bf.violation:.9f}")

# a sweep over the slack c shows when the row stops being violated
print("\nslack c   worst V")
for c in np.linspace(0.0, 3.0, 7):
    w = worst_case(SeparationInstance(1.0, 0.05, 1.0, float(c), 0.1, 0.6))
    print(f"  {c:4.2f}   {w.violation:+.4f}")

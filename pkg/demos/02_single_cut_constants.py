"""
Constants of the single-cone ambiguity sets
===========================================

Three of the ambiguity sets reduce to one second-order cone
K * ||C^{1/2} a(x)|| <= b(x) - mu^T a(x). This script tabulates K for
moments only (D1), a unimodal distribution with mode at the mean (D4) and
univariate unimodality with unknown mode (D5).
"""

import math

import numpy as np

from unimodal_drcc.ambiguity import d4_tau_star, k_factor
from unimodal_drcc.uncertainty import UnimodalityConfig

print(" eps      K1       K4       K5     tau*")
for eps in np.round(np.arange(0.01, 0.161, 0.01), 2):
    u = UnimodalityConfig(1.0, float(eps))
    print(f"{eps:4.2f}  {k_factor('D1', u):7.4f}  {k_factor('D4', u):7.4f}  "
          f"{k_factor('D5', u):7.4f}  {d4_tau_star(u):6.4f}")

# the D4 constant is a 1-D maximization; compare with a dense grid
u = UnimodalityConfig(1.0, 0.05)
taus = np.linspace(u.tau0, 10.0, 1_000_001)
g = np.sqrt(np.maximum((1 - u.epsilon - 1 / taus) / u.epsilon, 0.0))
print(f"\nK4 closed form {k_factor('D4', u):.6f}, grid {math.sqrt(3) * np.max(g / taus):.6f}")

# larger alpha is a weaker shape restriction, so K4 climbs back toward K1
for alpha in (1.0, 2.0, 3.0, 5.0):
    print(f"alpha={alpha:.0f}: K4 = {k_factor('D4', UnimodalityConfig(alpha, 0.05)):.4f}")

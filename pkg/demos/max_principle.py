"""Monte Carlo maximum-principle bound across noise levels.

Usage: python3 demos/max_principle.py [n_paths]
"""

import sys

from driftlab.geometry import MixedNormSpec
from driftlab.transport import epsilon_sweep, max_principle_bound, transport_solution

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
r = epsilon_sweep((0.4, 0.2, 0.1), n_paths=n, h=1e-3, seed=0)
print("eps      ", r["eps"])
print("N_hat    ", [f"{v:.4f}" for v in r["N_hat"]])
print(f"spread {r['spread']:.3f}, kappa {r['bookkeeping']['kappa']:g}")

# a solution of the transport equality: the bound shrinks with eps
tf, b = transport_solution(2)
for eps in (0.4, 0.2, 0.1):
    m = max_principle_bound(tf, b, eps, 20.0, n, MixedNormSpec(8, 4 / 3, 2), 3.0, 3.0, 1e-3,
                            seed=0)
    print(f"eps={eps}: u(0)={m['u0'] + 0.0:g}  u0_mc={m['u0_mc']:.4f} +- {m['u0_mc_se']:.4f}")

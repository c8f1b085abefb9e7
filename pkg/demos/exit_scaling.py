"""Exit-time scaling for planar Brownian motion and a singular drift.

Usage: python3 demos/exit_scaling.py [n_paths]
"""

import sys

from driftlab.engine import DiffusionSpec, bm
from driftlab.estimators import exit_moment_scaling
from driftlab.fields import make_drift

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5000

for spec in (bm(2), DiffusionSpec(d=2, b=make_drift("example21", 2, alpha=1.4, beta=0.8),
                                  nu=20.0, label="singular drift")):
    rep = exit_moment_scaling(spec, [0.5, 1.0, 2.0], n, 1e-3, seed=1)
    print(spec.label)
    print("   " + "  ".join(f"{h:>10}" for h in rep.header[:4]))
    for row in rep.rows():
        print("   " + "  ".join(f"{v:10.5g}" for v in row[:4]))
    print(f"   fitted exponent {rep.exponent_hat:.3f} (Brownian scaling: 2)")

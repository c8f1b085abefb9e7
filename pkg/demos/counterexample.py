"""Walk through the transport counterexample at the baseline exponents.

Prints the derived exponents, the transport-identity residual, the
mixed-norm membership table and the hypothesis that fails.
"""

from driftlab.transport import (counterexample_report, example51_instance,
                                membership_check, verify_transport_identity)

inst = example51_instance(d=2, eps=0.5, q0=2.0)
print(f"p0={inst.p0:g} q0={inst.q0:g} alpha={inst.alpha:g} beta={inst.beta:g} "
      f"p in {inst.p_interval}, chosen p={inst.p:g} q={inst.q:g}")
print("inequalities:", {k: bool(v) for k, v in inst.checks.items()})

for t_min in (1e-1, 1e-3, 1e-6):
    r = verify_transport_identity(inst, 2000, seed=0, t_min=t_min)
    print(f"|u_t + b.Du| max over |t| >= {t_min:g}: {r:.2e}")
print(f"same with 2b: {verify_transport_identity(inst, 2000, seed=0, drift_scale=2.0):.3g}")

mem = membership_check(inst, levels=(8, 16, 24), resolution=16, alpha_violation=0.8)
for name in ("b", "du_dt", "hess", "du_dt_violation"):
    norms = ", ".join(f"{v:.4g}" for v in mem[name]["norms"])
    print(f"{name:16} norms by grading level: {norms}")

rep = counterexample_report(inst, 500, seed=0)
print(f"u(0) = {rep['u0']}, sup over the parabolic boundary = {rep['boundary_max_abs_u']:.1e}")
print("failed hypothesis:", rep["failed_hypothesis"])

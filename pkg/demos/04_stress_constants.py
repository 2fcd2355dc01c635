"""
Sampling the structural constants of the stress law
===================================================

Coercivity, growth, concentration sensitivity and monotonicity constants are
estimated from random strains. The coercivity constant never drops below
``2 nu0 (p_minus - 1)``.
"""

from cdpflow import ExponentFn, StressModel
from cdpflow.verify import estimate_stress_constants

print(f"{'p_minus':>7} {'floor':>8} {'K1':>8} {'K2':>8} {'K3':>8} {'K4':>8}")
for p_minus in (2.0, 1.8, 1.6, 1.4):
    e = ExponentFn.constant(2.0) if p_minus == 2.0 else ExponentFn.logistic(p_minus, 2.0)
    k = estimate_stress_constants(StressModel(1.0, e), 20_000, 10.0, seed=0, dim=3)
    print(f"{p_minus:7.1f} {2 * (p_minus - 1):8.4f} {k.K1:8.4f} {k.K2:8.4f} {k.K3:8.4f} {k.K4:8.4f}")

"""
Twin runs and continuous dependence
===================================

Two solutions started a distance ``eps`` apart stay close: the squared
separation ``delta(t)`` scales like ``eps**2``. The ratio ``delta / eps**2``
therefore collapses onto one curve.
"""

from cdpflow import config
from cdpflow.solver import twin_run

ex = config.load("twin-contraction")
v0, c0 = ex.initial_fields()

curves = {eps: twin_run(ex.solver, v0, c0, eps, seed=ex.seed) for eps in (1e-4, 1e-5, 1e-6)}

t = curves[1e-4].t
print(f"{'t':>6} " + " ".join(f"{'eps=' + format(e, 'g'):>12}" for e in curves))
for i in range(0, len(t), 10):
    print(f"{t[i]:6.3f} " + " ".join(f"{c.scaled[i]:12.6f}" for c in curves.values()))

# identical data never separate
print("eps = 0 separation:", twin_run(ex.solver, v0, c0, 0.0).delta.max())

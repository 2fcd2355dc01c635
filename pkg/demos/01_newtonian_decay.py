"""
Newtonian decay of a shear mode
===============================

With a constant exponent ``p = 2`` the stress is linear and a single Fourier
shear mode decays at the Stokes rate ``exp(-nu0 (2 pi)^2 t)``. The integrating
factor treats that rate exactly, so the discrete decay matches to roundoff.
"""

import math

import numpy as np

from cdpflow import ExponentFn, ScalarField, SolverConfig, StressModel, VectorField, make_grid, run

# a 2D grid with 64 points per side and a Galerkin cutoff of 21 modes
grid = make_grid(2, 64, 21)
x = grid.coords()

# v0 = (sin 2 pi y, 0): divergence-free and an eigenmode of the Stokes operator
v0 = VectorField(grid, np.stack([np.sin(2 * np.pi * x[1]), np.zeros(grid.shape)]))
c0 = ScalarField(grid, np.zeros(grid.shape))

nu0 = 0.05
cfg = SolverConfig(grid, StressModel(nu0, ExponentFn.constant(2.0)), dt=1e-4, t_end=0.1, delta=0.0)
report = run(cfg, v0, c0, report_every=100)

# kinetic energy 1/2 |v|^2 decays at twice the amplitude rate
print(f"{'t':>6} {'kinetic':>14} {'exact':>14} {'rel.err':>9}")
for t, ke in zip(report.series("t"), report.series("kinetic")):
    exact = 0.25 * math.exp(-2 * nu0 * (2 * math.pi) ** 2 * t)
    print(f"{t:6.3f} {ke:14.10f} {exact:14.10f} {abs(ke - exact) / exact:9.1e}")

"""
Galerkin refinement
===================

Smooth data evolved with cutoffs K = 5, 10, 21, 42 on the same grid. The
sup-in-time distance between consecutive cutoffs shrinks as K doubles.
"""

from cdpflow import config
from cdpflow.solver import cutoff_refinement

ex = config.load("galerkin-refine")
v0, c0 = ex.initial_fields()
cutoffs = [5, 10, 21, 42]
for (a, b), d in zip(zip(cutoffs, cutoffs[1:]), cutoff_refinement(ex.solver, v0, c0, cutoffs)):
    print(f"K={a:>2} -> {b:>2}: sup_t |v_K - v_2K|_2 = {d:.5f}")

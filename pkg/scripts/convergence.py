"""Self-convergence studies: solver time step and Duhamel panel count.

usage: python scripts/convergence.py
"""

import logging
import math

import numpy as np

from aggrekit import duhamel as dh, solver
from aggrekit.grid import Field, Grid, gaussian_bump
from aggrekit.kernels import KernelSpec


def solver_study():
    g = Grid(1, 10.0, 128)
    k = KernelSpec("gaussian", amplitude=2.0, width=1.0)
    finals = []
    dts = [0.04, 0.02, 0.01, 0.005, 0.0025]
    for dt in dts:
        cfg = solver.SimConfig(g, k, solver.InitialData([solver.Bump(3.0, 0.7)]), t_end=1.0, dt_init=dt,
                               cfl_safety=100.0, stiffness_guard=100.0)
        finals.append(solver.run(cfg).final.values)
    print("ETD-RK2, t_end=1: dt, |u_dt - u_dt/2|_inf, observed order")
    prev = None
    for dt, a, b in zip(dts, finals, finals[1:]):
        e = float(np.max(np.abs(a - b)))
        print(f"  {dt:8.4f}  {e:.3e}  " + (f"{math.log2(prev / e):.2f}" if prev else ""))
        prev = e


def duhamel_study():
    g = Grid(1, 8.0, 64)
    T = 0.5
    k = KernelSpec("gaussian")
    u0 = Field(g, gaussian_bump(g, 1.0, 0.8))
    v0 = Field(g, gaussian_bump(g, 2.0, 0.6, (0.5,)))
    vals = {}
    for m in (16, 32, 64, 128, 256):
        vals[m] = dh.bilinear_term(dh.Trajectory.heat(u0, T, m), dh.Trajectory.heat(v0, T, m), T, k).values
    print("Duhamel product integration, T=0.5: panels, relative change on doubling, order")
    prev = None
    ms = sorted(vals)
    for a, b in zip(ms, ms[1:]):
        e = float(np.max(np.abs(vals[a] - vals[b])) / np.max(np.abs(vals[b])))
        print(f"  {a:4d}  {e:.3e}  " + (f"{math.log2(prev / e):.2f}" if prev else ""))
        prev = e


if __name__ == "__main__":
    logging.basicConfig(level=logging.ERROR)
    solver_study()
    duhamel_study()

"""Sup-norm response of the solution to a shrinking density perturbation.

Solves the normalized equation for ``f`` and for ``f (1 - eps b)`` with a
bump ``b``, then fits ``log ||u_f - u_g||_inf`` against ``log ||f - g||_2``.
On a curve (n = 1) the fitted slope should be close to 1.

    python demos/stability_probe.py
"""
import numpy as np

from mage import make_grid, make_metric, solve_normalized
from mage.families import perturb, perturbation, smooth
from mage.spectral import fit_exponent, lp_norm

grid = make_grid(1, 64)
metric = make_metric(grid)
f = smooth(grid, seed=0, amplitude=0.3)
b = perturbation(grid, seed=0, width=0.1)
base = solve_normalized(f, metric)

samples = []
for eps in (0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625):
    g = perturb(f, b, eps, "multiplicative", -1.0)
    sol = solve_normalized(g, metric)
    lp = lp_norm(f - g, 2.0, metric)
    sup = np.abs(sol.u - base.u).max()
    samples.append((lp, sup))
    print(f"eps={eps:<8} ||f-g||_2={lp:.3e}  sup|u_f-u_g|={sup:.3e}  c={sol.c:.6f}")

slope, intercept, r2 = fit_exponent(samples)
print(f"fitted slope {slope:.3f} (r^2 = {r2:.4f})")

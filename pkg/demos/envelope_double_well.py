"""The omega-psh envelope of a double-well obstacle on a curve.

The hump between the two wells is too concave to be omega-psh, so the
envelope detaches from the obstacle there; elsewhere it touches it.

    python demos/envelope_double_well.py
"""
import numpy as np

from mage import make_grid, make_metric
from mage.envelope import envelope, envelope_hoelder_report
from mage.families import double_well

grid = make_grid(1, 64)
metric = make_metric(grid)
f = double_well(grid)
res = envelope(f, metric)
print(f"lambda reached {res.lambda_final:g}, "
      f"contact fraction {res.contact_mask.mean():.2f}, "
      f"off-contact MA density {res.offcontact_ma_sup:.1e}")
print(f"max (P - f) = {(res.P - f).max():.1e}, "
      f"largest gap f - P = {(f - res.P).max():.4f}")

# The obstacle is smooth, so measure exponents at grid scale.
rep = envelope_hoelder_report(f, 1.0, metric, delta_ladder=np.arange(1, 9) / 64, result=res)
print(f"Hoelder exponents on 1..8 cells: obstacle {rep.alpha_f:.3f}, envelope {rep.alpha_P:.3f}")

"""Fitted decay exponents of derivatives of the potential of a test bump."""
from bubblepot import kernel as ker
from bubblepot import potential as pot

RADII = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0]

for n in (2, 3):
    phi = pot.TestBump((0.0,) * n, 1.0)
    for alpha in ker.multi_indices(n, 3):
        for beta in [(0,) * n] + ker.multi_indices(n, 1):
            fit = pot.decay_check(phi, alpha, beta, RADII)
            bound = -(n + 1 + sum(beta))
            print(f"n={n} alpha={alpha} beta={beta}: slope {fit.slope:+.4f} (expected <= {bound})")

# Link weights for a single pair of nodes, step by step.
# Run: python3 demos/01_link_weights.py

import numpy as np

from anomnet.netbuild import DelayRange, cross_covariance, link_weights

rs = np.random.default_rng(0)

# one year of daily anomalies for node m
a_m = rs.normal(size=365)

# node n echoes m three days later, plus its own noise
a_n = 0.8 * np.roll(a_m, 3) + 0.6 * rs.normal(size=365)

# covariance of a_m[d] with a_n[d + tau] for tau in -10..10
curve = cross_covariance(a_m, a_n, DelayRange(10))
for tau, c in zip(curve.lags(), curve.values):
    print(f"{tau:+3d} {c:+.3f} " + "#" * int(max(c, 0) * 40))

# P: how far the peak stands above the curve's mean, in curve std units
w = link_weights(curve)
print("P =", round(w.P, 3), "at tau", w.tau_P)
print("N =", round(w.N, 3), "at tau", w.tau_N)

# an unrelated pair for comparison
w0 = link_weights(cross_covariance(a_m, rs.normal(size=365), DelayRange(10)))
print("unrelated pair: P =", round(w0.P, 3))

# a flat curve has no spread and gets no weight
print(link_weights(np.full(21, 0.3)))

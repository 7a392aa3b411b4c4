# The mmse curve and its derivative
#
# For a two-point prior on {-1, +1} with unit noise everything is a
# one-dimensional integral, so Monte Carlo can be compared with quadrature.
# The slope of mmse(t) equals -E Tr{Cov Q^{-1} Cov R}; integrating over
# [1, 2] gives mmse(1) - mmse(2), which cannot exceed Tr(R Cov(mu)).

import numpy as np

from sloc import oracles
from sloc.measures import two_point
from sloc.verify import McConfig, integrated_identity_check, mmse, mmse_derivative_check

mu, q, r = two_point(), [[1.0]], [[1.0]]
cfg = McConfig(seed=1, n_samples=200_000)

print("   t    mmse (MC)      se        quadrature")
for t in (0.0, 0.5, 1.0, 1.5, 2.0, 4.0):
    est = mmse(mu, q, t, r, cfg)
    print(f"{t:4.1f}  {est.value:.6f}  {est.std_error:.6f}  {oracles.two_point_expectation('mmse', t):.6f}")

d = mmse_derivative_check(mu, q, 1.5, r, cfg, delta=1e-3)
print(f"\nslope at t=1.5: finite difference {d.fd:.5f}, identity {d.identity_rhs.value:.5f}, "
      f"quadrature {oracles.two_point_mmse_derivative(1.5):.5f}, agree={d.agree}")

c = integrated_identity_check(mu, q, r, cfg)
print(f"integral {c.integral.value:.5f} vs mmse(1)-mmse(2) {c.mmse1.value - c.mmse2.value:.5f}, "
      f"bound {c.trace_bound:.1f}, pass={c.passed}")

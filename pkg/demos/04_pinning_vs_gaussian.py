# Revealing coordinates versus adding Gaussian noise
#
# Revealing each coordinate with probability eps also decomposes mu, but
# the information it spends can be large compared with the covariance it
# removes. Side by side on the uniform measure over {-1, +1}^4.

import numpy as np

from sloc.measures import DiscreteMeasure
from sloc.verify import McConfig, estimate_mixture_cov, estimate_mutual_information, estimate_pinning

cube = np.array(np.meshgrid(*[[-1.0, 1.0]] * 4)).reshape(4, -1).T
mu = DiscreteMeasure(cube)  # uniform, Cov(mu) = I
cfg = McConfig(seed=0, n_samples=50_000)

print("channel   param   I(theta;x)   max eig E Cov")
for eps in (0.1, 0.25, 0.5, 0.75):
    est = estimate_pinning(mu, eps, cfg)
    print(f"erasure   {eps:5.2f}   {est['mi'].value:9.4f}   {np.linalg.eigvalsh(est['cov'].value)[-1]:.4f}")
for c in (9.0, 3.0, 1.0, 1 / 3):
    q = c * np.eye(4)
    mi = estimate_mutual_information(mu, q, cfg)
    cv = estimate_mixture_cov(mu, q, cfg)
    print(f"gaussian  {c:5.2f}   {mi.value:9.4f}   {np.linalg.eigvalsh(cv.value)[-1]:.4f}")

# Decomposing a discrete measure through a Gaussian channel
#
# Observe x ~ mu through y = sqrt(tau) x + Q^{1/2} z with tau uniform on [1, 2].
# Each observation gives a posterior mu_theta; averaged over theta these
# posteriors recover mu. Three facts bound how spread out the pieces are:
#   E Cov(mu_theta)             <= Q
#   I(theta; x)                 <= 1/2 log det(I + 2 Q^{-1} Cov(mu))
#   E Cov Q^{-1} Cov (mu_theta) <= Cov(mu)

import numpy as np

from sloc.measures import cov, random_measure
from sloc.verify import McConfig, verify_theorem

mu = random_measure(seed=3, n=3, k=10, geometry="clustered")
print("atoms:", mu.k, "dimension:", mu.dim)
print("prior covariance eigenvalues:", np.round(np.linalg.eigvalsh(cov(mu).array), 4))

# Q comparable to the spread of the measure
q = 2.0 * cov(mu).array + 1e-9 * np.eye(3)
cfg = McConfig(seed=0, n_samples=100_000)

reports = verify_theorem(mu, q, cfg)
for r in reports.values():
    print(f"{r.which:8s} slack={r.slack: .5f}  ci_slack={r.ci_slack:.5f}  pass={r.passed}")

# shrink the first bound by 50x and the checker should refuse
bad = verify_theorem(mu, q, cfg, cov1_bound_scale=1 / 50)["cov1"]
print("with Q/50 as the bound:", "pass" if bad.passed else "rejected", f"(slack {bad.slack:.4f})")

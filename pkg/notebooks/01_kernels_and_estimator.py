# %% [markdown]
# # Gaussian copula kernels and the restricted estimator
#
# The test is built from one ingredient: the probability that both
# pseudo-observations fall below their thresholds `u = (u1, u2)` under a
# Gaussian copula with correlation `rho = tanh(alpha)`.  This notebook checks
# the kernel against the closed form at the medians and then fits `alpha`
# from quadrant counts.

# %%
import math

import numpy as np

from deppred.estimator import fit_alpha
from deppred.gauss import bvn_cdf, copula_drho, copula_value, quadrant_probs

for rho in (-0.9, -0.5, 0.0, 0.5, 0.9):
    closed = 0.25 + math.asin(rho) / (2 * math.pi)
    print(f"rho={rho:+.1f}  bvn(0,0)={bvn_cdf(0.0, 0.0, rho):.15f}  closed form={closed:.15f}")

# %% [markdown]
# The four quadrant probabilities at a lower-tail point sum to one, and the
# derivative in `rho` agrees with a central difference.

# %%
u, rho = (0.1, 0.1), 0.46
p = quadrant_probs(u, rho)
print("quadrant probabilities", p, "sum", p.sum())
h = 1e-5
print("d/drho", copula_drho(u, rho), "central difference",
      (copula_value(u, rho + h) - copula_value(u, rho - h)) / (2 * h))

# %% [markdown]
# ## Fitting alpha from counts
#
# Draw multinomial counts from a known correlation and recover it.  An empty
# quadrant pushes the likelihood to the edge of the Fréchet interval, which is
# reported through `boundary_flag`.

# %%
rng = np.random.default_rng(0)
truth = math.tanh(0.5)
for n in (200, 2000, 20000):
    counts = rng.multinomial(n, quadrant_probs(u, truth))
    fit = fit_alpha(u, counts)
    print(f"n={n:6d} counts={counts} alpha_hat={fit.alpha_hat:.4f} (true 0.5)")

print(fit_alpha((0.3, 0.4), [100, 0, 0, 0]))

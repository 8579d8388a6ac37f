"""Moment envelopes: the p-th-norm bounds everything else is built from.

A heavy-tailed variable has finite moments only up to its tail index r; its
moment function p -> |xi|_p blows up at r.  Envelopes capture that shape as
first-class objects.
"""

import numpy as np

from polymoment import (
    Indicator,
    PowerGrowth,
    PowerSingularity,
    Scaled,
    empirical_moments,
    gls_norm,
    natural_moments_pareto_power,
    tabulate_envelope,
)

# The benchmark variable: eps^(1/4) with P(eps > x) = 1/x.  Its p-th norm is
# exactly (4/(4-p))^(1/p), finite for p < 4.
print("exact p-th norms of the Pareto-power benchmark (tail index 4):")
for p in [1.0, 2.0, 3.0, 3.9]:
    print(f"  p={p:<4} |xi|_p = {natural_moments_pareto_power(4.0, p):.6f}")

# The same shape as an envelope with an explicit singularity at r = 4.
env = PowerSingularity(r=4.0, power=0.25)
print("\npower-singularity envelope (r-p)^(-1/4):")
for p in [2.0, 3.9, 3.999, 4.0, 5.0]:
    print(f"  nu({p}) = {env(p)}")
print("evaluation beyond the support is +inf, and compositions propagate it")

# Indicator envelopes make the moment norm collapse to a classical L_r norm.
ind = Indicator(r=4.0)
print(f"\nindicator envelope: nu(3) = {ind(3.0)}, nu(4) = {ind(4.0)}, nu(4.5) = {ind(4.5)}")

# The moment norm sup_p |xi|_p / nu(p): against its own moment function
# ("natural" envelope) every variable has norm exactly one.
grid = np.linspace(2.0, 3.8, 10)
natural = tabulate_envelope(lambda p: natural_moments_pareto_power(4.0, p), grid)
norm = gls_norm(lambda p: natural(p), natural, grid)
print(f"\nmoment norm of the variable against its own envelope: {norm}")
scaled = gls_norm(lambda p: natural(p), Scaled(natural, 2.0), grid)
print(f"against the doubled envelope the norm halves: {scaled}")

# Growth envelopes describe light tails: sqrt(p) is the sub-gaussian shape.
gauss = PowerGrowth(growth=0.5)
print(f"\nsub-gaussian envelope sqrt(p): nu(4) = {gauss(4.0)}, nu(100) = {gauss(100.0)}")

# Empirical moments come with batch-means error bars (heavy tails make naive
# CLT bars untrustworthy).
rng = np.random.default_rng(1)
sample = (1.0 - rng.random(200000)) ** (-0.25)
est = empirical_moments(sample, 2.0, tail_index=4.0)
print(f"\nempirical |xi|_2 from 2e5 draws: {est.value:.5f} +- {est.stderr:.5f}"
      f" (exact {natural_moments_pareto_power(4.0, 2.0):.5f})")
est_hi = empirical_moments(sample, 3.5, tail_index=4.0)
print(f"at p=3.5 the estimate is flagged high-variance: {est_hi.high_variance}")

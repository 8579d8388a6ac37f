"""Composing envelopes: the moment calculus for products of variables.

If |xi|_q <= nu1(q) and |eta|_q <= nu2(q), Hoelder's inequality bounds the
product's moments by the infimal composition

    (nu1 (x) nu2)(p) = inf over a + b = 1 of nu1(p/a) * nu2(p/b),

finite exactly below the combined exponent (1/r1 + 1/r2)^(-1).
"""

import numpy as np

from polymoment import (
    Indicator,
    PowerGrowth,
    PowerSingularity,
    combined_exponent,
    otimes,
    otimes_chain,
)

# Two sub-gaussian factors compose to a sub-exponential product: the
# composition of sqrt(p) with itself is exactly 2p.
g = PowerGrowth(growth=0.5)
print("sqrt(p) composed with itself (exact value 2p):")
for p in [1.0, 4.0, 9.0]:
    res = otimes(g, g, p, full_output=True)
    print(f"  p={p:<4} value {res.value:.12f}  optimal split {res.split:.6f}")

# Indicator envelopes reproduce the classical Lebesgue-norm inequality
# |xi eta|_p <= |xi|_{r1} |eta|_{r2} with 1/p = 1/r1 + 1/r2.
i4 = Indicator(r=4.0)
r = combined_exponent([4.0, 4.0])
print(f"\ntwo L_4 factors: combined exponent {r}")
for p in [1.5, 1.99, 2.0, 3.0]:
    print(f"  (ind4 (x) ind4)({p}) = {otimes(i4, i4, p)}")

# Heavy factors: two Pareto-power envelopes with r = 4 compose into an
# envelope with the combined exponent 2 and the summed singularity power.
ps4 = PowerSingularity(r=4.0, power=0.25)
print("\ntwo r=4 Pareto-power singularities (combined exponent 2):")
for p in [1.0, 1.5, 1.9, 1.99]:
    print(f"  composed({p}) = {otimes(ps4, ps4, p):.6f}")

# Chains fold left and materialise on a grid; a single element is returned
# unchanged and indicator chains stay exactly one on their support.
chain = otimes_chain([Indicator(r=6.0)] * 3)
print(f"\nthree L_6 factors fold to the L_2 envelope:"
      f" value at 1.5 = {chain(1.5)}, support edge = {chain.support.upper}")

trinomial = otimes_chain(
    [PowerGrowth(growth=0.5), PowerGrowth(growth=0.5), PowerGrowth(growth=1.0)],
    p_grid=np.linspace(1.0, 10.0, 37),
)
print("\n(sqrt(p) (x) sqrt(p)) (x) p equals 8 p^2:")
for p in trinomial.p_grid[::12]:
    print(f"  p={p:<6.3f} chain {trinomial(float(p)):.4f}   8p^2 {8 * p * p:.4f}")

"""Concrete sampled models of the multilinear sums the bounds apply to.

Models pin down the coefficient tensor, the per-factor input distributions,
the dependence regime, and which cells share underlying draws.  Sampling is
inverse-quantile from counter-based uniform streams, so every number below
reproduces exactly from its seed.
"""

import math

import numpy as np

from polymoment import (
    CoefficientTensor,
    DependenceRegime,
    ParetoPower,
    PolynomialModel,
    Rademacher,
    sample_cells,
    sample_Q,
    sample_R,
    sample_reverse_V,
    variance_of_Q,
)

# A small fully independent model with unit-variance inputs.
model = PolynomialModel(
    d=2, n=5,
    coefficients=CoefficientTensor.uniform(2, 5),
    regime=DependenceRegime("common_independent"),
    distributions=(
        ParetoPower(6.0, centered=True, standardized=True),
        ParetoPower(8.0, centered=True, standardized=True),
    ),
)
q = sample_Q(model, seed=1, replications=200000)
exact_var = variance_of_Q(model.coefficients, model.sigma_matrix())
print(f"common independent d=2 n=5: Var Q exact {exact_var:.3f},"
      f" empirical {q.var():.3f}, combined exponent {model.combined_r:.3f}")

# Martingale dependence is built constructively: sign-symmetrised draws times
# a bounded modulator driven by the past, so conditional means vanish by
# construction.  Check it against a past-measurable test function.
mart = PolynomialModel(
    d=2, n=6,
    coefficients=CoefficientTensor.uniform(2, 6),
    regime=DependenceRegime("martingale"),
    distributions=(
        ParetoPower(6.0, standardized=True),
        ParetoPower(8.0, standardized=True),
    ),
)
cells = sample_cells(mart, seed=2, replications=200000)
g = np.sign(cells[:, :3, :].sum(axis=(1, 2)))  # bounded function of the past
prod = cells[:, 3, 0] * g
print(f"\nmartingale check E[cell * g(past)] = {prod.mean():+.5f}"
      f" (3 sigma = {3 * prod.std() / math.sqrt(prod.size):.5f})")

# Sharing rules realise coinciding factor vectors; with every cell driven by
# one draw the sum is a power of a single Pareto variable and its moments
# stop existing at the combined exponent.
shared = PolynomialModel(
    d=2, n=4,
    coefficients=CoefficientTensor.uniform(2, 4),
    regime=DependenceRegime("martingale"),
    distributions=(ParetoPower(4.0, standardized=True),) * 2,
    sharing="all",
)
aq = np.abs(sample_Q(shared, seed=3, replications=200000))
print(f"\nfully shared draws: combined exponent {shared.combined_r}, and the"
      f" empirical tail decays accordingly:")
for x in [10.0, 20.0, 40.0]:
    print(f"  P(|Q| >= {x:>4}) = {float(np.mean(aq >= x)):.5f}")

# Arbitrary centered polynomials allow diagonal powers: the degree-2
# diagonal model sums b_j (cell_j^2 - E cell^2).
diag = PolynomialModel(
    d=2, n=10,
    coefficients=CoefficientTensor.uniform(1, 10),
    regime=DependenceRegime("common_independent"),
    distributions=(ParetoPower(6.0, centered=True, standardized=True),),
    multiplicities=(2,),
)
r = sample_R(diag, seed=4, replications=200000)
print(f"\ndiagonal degree-2 model: E R^2 = {np.mean(r ** 2):.3f}"
      f" (moment edge at {diag.combined_r:.2f})")

# Reverse-window sums over tuples in [n_start, N]; the full window is the
# ordinary forward sum, draw for draw.
v = sample_reverse_V(model, seed=1, replications=1000, n_start=1, N=5)
q1k = sample_Q(model, seed=1, replications=1000)
print(f"\nfull-window reverse sum reproduces the forward sum: {np.array_equal(v, q1k)}")

# Rademacher inputs with d*n small admit exact enumeration.
tiny = PolynomialModel(
    d=2, n=3,
    coefficients=CoefficientTensor.uniform(2, 3),
    regime=DependenceRegime("common_independent"),
    distributions=(Rademacher(), Rademacher()),
)
from polymoment import brute_force_moments

print(f"\nexact moments of the 2^6-state sign model: "
      f"{np.round(brute_force_moments(tiny, [1, 2, 3, 4]), 6)}")

"""Composition calculus for moment envelopes.

The central operation is the infimal Hoelder composition

    (nu1 (x) nu2)(p) = inf { nu1(p/a) * nu2(p/b) : a, b > 0, a + b = 1 },

which bounds the moment function of a product of two variables by the
envelopes of its factors.  Iterating it, and interleaving growth constants
for martingale or independent sums, produces recursive bound chains for
multilinear sums ``sum b(I) prod_m xi(i_m, m)`` under four dependence
regimes, in both time directions.  The chains' final stage is an envelope
dominating ``sup_b |Q_d|_p`` over unit-norm coefficient tensors.

Also provided: the dominant-term envelope for arbitrary centered polynomials
of independent heavy-tailed variables, the Doob maximal-inequality factor
``p/(p-1)``, and the good-lambda envelope correction ``(r - p)^(-1/r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._optim import bracketed_min, chebyshev_grid
from .envelope import (
    EnvelopeDomainError,
    MomentEnvelope,
    PowerSingularity,
    Product,
    SlowlyVarying,
    SupportInterval,
    Tabulated,
)

__all__ = [
    "ChainFeasibilityError",
    "GrowthConstant",
    "DependenceRegime",
    "MARTINGALE",
    "COMMON_INDEPENDENT",
    "INSIDE_INDEPENDENT",
    "VECTOR_INDEPENDENT",
    "FORWARD",
    "REVERSE",
    "combined_exponent",
    "otimes",
    "OtimesResult",
    "otimes_chain",
    "ZetaChain",
    "zeta_chain",
    "polynomial_dominant_envelope",
    "DoobMaximal",
    "doob_maximal_envelope",
    "good_lambda_envelope",
]

MARTINGALE = "martingale"
COMMON_INDEPENDENT = "common_independent"
INSIDE_INDEPENDENT = "inside_independent"
VECTOR_INDEPENDENT = "vector_independent"
FORWARD = "forward"
REVERSE = "reverse"

_TAGS = (MARTINGALE, COMMON_INDEPENDENT, INSIDE_INDEPENDENT, VECTOR_INDEPENDENT)
_DIRECTIONS = (FORWARD, REVERSE)

# regimes whose recursion multiplies envelopes pointwise instead of composing
_PRODUCT_TAGS = (COMMON_INDEPENDENT, VECTOR_INDEPENDENT)


class ChainFeasibilityError(ValueError):
    """Raised when the combined singularity exponent does not exceed 1."""


@dataclass(frozen=True)
class DependenceRegime:
    """Dependence structure of the input family plus the time direction."""

    tag: str = MARTINGALE
    direction: str = FORWARD

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError(f"unknown dependence tag {self.tag!r}; expected one of {_TAGS}")
        if self.direction not in _DIRECTIONS:
            raise ValueError(
                f"unknown direction {self.direction!r}; expected one of {_DIRECTIONS}"
            )

    @property
    def reverse(self) -> bool:
        return self.direction == REVERSE


@dataclass(frozen=True)
class GrowthConstant:
    """Exponent-dependent constant K(p) multiplying each chain stage.

    The martingale constant is ``p * sqrt(2)`` and the independent-sum
    constant ``0.87 * p / log p``, both stated for p >= 2.  Below 2 the
    argument is clamped to 2, which keeps chains finite on grids reaching
    down to p = 1 (the independent constant diverges as p -> 1).
    """

    kind: str = "martingale"
    fn: Optional[Callable[[float], float]] = None

    @classmethod
    def martingale(cls) -> "GrowthConstant":
        return cls(kind="martingale")

    @classmethod
    def independent(cls) -> "GrowthConstant":
        return cls(kind="independent")

    @classmethod
    def custom(cls, fn: Callable[[float], float]) -> "GrowthConstant":
        return cls(kind="custom", fn=fn)

    def __call__(self, p: float) -> float:
        if self.kind == "custom":
            out = float(self.fn(p))
            if not (out > 0):
                raise ValueError(f"growth constant must be positive, got {out} at p={p}")
            return out
        q = max(float(p), 2.0)
        if self.kind == "martingale":
            return q * math.sqrt(2.0)
        return 0.87 * q / math.log(q)


def combined_exponent(uppers: Sequence[float]) -> float:
    """Harmonic combination ``(sum_m 1/r_m)^(-1)`` of singularity exponents."""
    s = 0.0
    for r in uppers:
        if r <= 0:
            raise ValueError(f"singularity exponents must be positive, got {r}")
        if math.isfinite(r):
            s += 1.0 / r
    return math.inf if s == 0.0 else 1.0 / s


class OtimesResult(NamedTuple):
    value: float
    split: float  # share of the exponent routed to the first envelope


_INSET = 1e-12  # relative inset from the open feasibility endpoints


def _otimes_search(
    nu1: MomentEnvelope, nu2: MomentEnvelope, p: float, coarse: int
) -> OtimesResult:
    """Minimise nu1(p/a) * nu2(p/(1-a)) over the feasible split interval.

    The search interval comes from the evaluable exponent ranges (tabulated
    envelopes may declare a wider support than they can evaluate); splits
    outside it are infinite anyway.
    """
    r1, closed1 = nu1.evaluable_upper()
    r2, closed2 = nu2.evaluable_upper()
    a_lo = p / r1 if math.isfinite(r1) else 0.0
    a_hi = 1.0 - (p / r2 if math.isfinite(r2) else 0.0)
    if a_hi <= a_lo:
        return OtimesResult(math.inf, math.nan)
    width = a_hi - a_lo
    inset = max(_INSET * max(width, 1.0), 1e-300)
    lo = a_lo + inset
    hi = a_hi - inset
    if hi <= lo:
        lo = hi = 0.5 * (a_lo + a_hi)

    def objective(a: float) -> float:
        if a <= 0.0 or a >= 1.0:
            return math.inf
        v1 = nu1(p / a)
        if math.isinf(v1):
            return math.inf
        v2 = nu2(p / (1.0 - a))
        return v1 * v2

    a_best, v_best = bracketed_min(objective, lo, hi, coarse=coarse, tol=_INSET)
    # closed evaluable endpoints are genuinely attainable; include them exactly
    if math.isfinite(r1) and closed1 and 0.0 < a_lo < 1.0:
        v = objective(a_lo)
        if v < v_best:
            a_best, v_best = a_lo, v
    if math.isfinite(r2) and closed2 and 0.0 < a_hi < 1.0:
        v = objective(a_hi)
        if v < v_best:
            a_best, v_best = a_hi, v
    return OtimesResult(v_best, a_best)


def otimes(
    nu1: MomentEnvelope,
    nu2: MomentEnvelope,
    p: float,
    coarse: int = 64,
    full_output: bool = False,
):
    """Infimal Hoelder composition of two envelopes at exponent ``p``.

    Returns ``+inf`` when no feasible split exists, i.e. when
    ``p >= (1/r1 + 1/r2)^(-1)`` for the two singularity exponents.  The
    minimiser is located by a coarse scan over the feasible interval
    ``[p/r1, 1 - p/r2]`` followed by golden-section refinement; the
    objective can be non-convex for exotic slowly varying factors, so
    bracket-then-refine is the robust choice.

    With ``full_output=True`` returns an :class:`OtimesResult` carrying the
    minimising share ``a`` of the exponent routed to ``nu1``.
    """
    p = float(p)
    if not math.isfinite(p) or p < 1.0:
        raise EnvelopeDomainError(f"exponent must be finite and >= 1, got {p}")
    r1 = nu1.support.upper
    r2 = nu2.support.upper
    load = (p / r1 if math.isfinite(r1) else 0.0) + (p / r2 if math.isfinite(r2) else 0.0)
    if load >= 1.0:
        res = OtimesResult(math.inf, math.nan)
        return res if full_output else res.value

    # canonical argument order (smaller singularity exponent first) makes the
    # operation numerically symmetric: forward and mirrored chains then agree
    # exactly for equal inputs
    swapped = r2 < r1
    first, second = (nu2, nu1) if swapped else (nu1, nu2)
    res = _otimes_search(first, second, p, coarse)
    if swapped and not math.isnan(res.split):
        res = OtimesResult(res.value, 1.0 - res.split)
    return res if full_output else res.value


def _stage_grid(
    eff_upper: float,
    declared_upper: float,
    points: int,
    p_max_hint: Optional[float],
    final: bool,
) -> np.ndarray:
    """Chebyshev exponent grid for materialising a chain stage.

    Intermediate stages extend almost to the effective (evaluable) combined
    exponent so later compositions can query them across their whole feasible
    range; the final stage keeps a wider safety margin below the declared
    combined exponent.  Growth stages (infinite exponent) get headroom above
    the caller's largest exponent because later compositions evaluate stages
    at ``p / a > p``.
    """
    if math.isfinite(eff_upper):
        tight = 1.0 + (1.0 - 1e-6) * (eff_upper - 1.0)
        if final and math.isfinite(declared_upper):
            hi = min(1.0 + 0.999 * (declared_upper - 1.0), tight)
        else:
            hi = tight
        return chebyshev_grid(1.0, hi, points)
    base = p_max_hint if p_max_hint is not None else 64.0
    if final:
        return chebyshev_grid(1.0, 64.0, points)
    # growth stages span a wide headroom range; densify to keep the
    # log-interpolation error small where later stages will query them
    return chebyshev_grid(1.0, max(64.0, 16.0 * base), 4 * points - 3)


def otimes_chain(
    envs: Sequence[MomentEnvelope],
    p_grid: Optional[Sequence[float]] = None,
    points: int = 257,
    coarse: int = 64,
) -> MomentEnvelope:
    """Left fold ``((nu1 (x) nu2) (x) ...) (x) nu_d`` materialised on a grid.

    Intermediate stages are tabulated on their own partial-exponent grids so
    that later compositions can evaluate them anywhere in their feasible
    range.  A single-element list returns the envelope unchanged.  Raises
    :class:`ChainFeasibilityError` when the combined exponent is <= 1.
    """
    envs = list(envs)
    if len(envs) == 0:
        raise ValueError("empty envelope list")
    if len(envs) == 1:
        return envs[0]
    uppers = [e.support.upper for e in envs]
    r_comb = combined_exponent(uppers)
    if r_comb <= 1.0:
        raise ChainFeasibilityError(
            f"combined singularity exponent {r_comb:.6g} <= 1: the composed envelope"
            " has empty exponent domain (reciprocal exponents sum to >= 1)"
        )
    final_grid = None if p_grid is None else np.asarray(p_grid, dtype=float)
    p_max_hint = None if final_grid is None else float(final_grid[-1])

    acc = envs[0]
    r_acc = uppers[0]
    eff_acc = acc.evaluable_upper()[0]
    for k, nxt in enumerate(envs[1:], start=2):
        r_acc = combined_exponent([r_acc, uppers[k - 1]])
        eff_acc = combined_exponent([eff_acc, nxt.evaluable_upper()[0]])
        last = k == len(envs)
        if last and final_grid is not None:
            grid = final_grid
        else:
            grid = _stage_grid(eff_acc, r_acc, points, p_max_hint, final=last)
        vals = np.array([otimes(acc, nxt, float(p), coarse=coarse) for p in grid])
        if np.any(~np.isfinite(vals)):
            raise ChainFeasibilityError(
                "composed envelope is infinite at a requested grid point; keep the"
                f" grid strictly below the combined exponent {r_acc:.6g}"
            )
        acc = Tabulated(grid, vals, upper=r_acc if math.isfinite(r_acc) else None)
        eff_acc = acc.evaluable_upper()[0]
    return acc


@dataclass(frozen=True)
class ZetaChain:
    """Recursive bound chain for a multilinear sum.

    ``stages`` are in computation order, so ``stages[-1]`` (also ``.bound``)
    is the envelope dominating ``sup_b |Q_d|_p`` regardless of direction; for
    reverse chains ``stages[k]`` refers to factor index ``d - k``.
    """

    stages: Tuple[MomentEnvelope, ...]
    regime: DependenceRegime
    inputs: Tuple[MomentEnvelope, ...]
    combined_r: float

    def __post_init__(self):
        if len(self.stages) != len(self.inputs):
            raise ValueError("one chain stage per input envelope required")
        # each stage must stay inside the partial combined exponent
        order = self.inputs if not self.regime.reverse else tuple(reversed(self.inputs))
        partial = []
        s = 0.0
        for env in order:
            r = env.support.upper
            if math.isfinite(r):
                s += 1.0 / r
            partial.append(math.inf if s == 0.0 else 1.0 / s)
        for stage, bound_r in zip(self.stages, partial):
            if stage.support.upper > bound_r * (1.0 + 1e-9):
                raise ValueError(
                    "chain stage support exceeds its partial combined exponent"
                )

    @property
    def bound(self) -> MomentEnvelope:
        return self.stages[-1]

    @property
    def depth(self) -> int:
        return len(self.stages)


def _stage_from_values(grid: np.ndarray, vals: np.ndarray, upper: float) -> Tabulated:
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise ChainFeasibilityError(
            "chain stage evaluated to a non-finite or non-positive value; the grid"
            " must stay strictly inside the combined support"
        )
    return Tabulated(grid, vals, upper=upper if math.isfinite(upper) else None)


def zeta_chain(
    regime: DependenceRegime,
    nus: Sequence[MomentEnvelope],
    K_M: Optional[GrowthConstant] = None,
    K_I: Optional[GrowthConstant] = None,
    p_grid: Optional[Sequence[float]] = None,
    points: int = 257,
) -> ZetaChain:
    """Build the recursive bound chain for a given dependence regime.

    Forward recursions (reverse chains run the same recursion over the
    reversed factor list, which is exactly the mirrored endpoint condition):

    * martingale:        z1 = K_M nu1,  z_{m+1} = K_M (z_m (x) nu_{m+1})
    * common independent: z1 = K_I nu1,  z_{m+1} = K_M z_m nu_{m+1}  (pointwise)
    * inside independent: z1 = K_I nu1,  z_{m+1} = K_M (z_m (x) nu_{m+1})
    * vector independent: z1 = K_M nu1,  z_{m+1} = K_M z_m nu_{m+1}  (pointwise)

    The final stage dominates ``sup_b |Q_d|_p`` on the grid.  Stages are
    materialised as tabulated envelopes; composition stages get their own
    partial-exponent grids so later stages can evaluate them off-grid.
    """
    nus = list(nus)
    if len(nus) == 0:
        raise ValueError("empty input envelope list")
    if K_M is None:
        K_M = GrowthConstant.martingale()
    if K_I is None:
        K_I = GrowthConstant.independent()

    uppers = [nu.support.upper for nu in nus]
    r_comb = combined_exponent(uppers)
    if r_comb <= 1.0:
        raise ChainFeasibilityError(
            f"combined singularity exponent {r_comb:.6g} <= 1: no exponent grid is"
            " feasible (reciprocal exponents sum to >= 1)"
        )

    order = nus if not regime.reverse else list(reversed(nus))

    # effective (evaluable) combined exponent, accounting for the small
    # inset each intermediate tabulation takes off its own evaluable range
    if regime.tag in _PRODUCT_TAGS:
        eff_comb = combined_exponent([nu.evaluable_upper()[0] for nu in nus])
    else:
        eff_comb = order[0].evaluable_upper()[0]
        for nu in order[1:]:
            h = combined_exponent([eff_comb, nu.evaluable_upper()[0]])
            eff_comb = 1.0 + (1.0 - 1e-6) * (h - 1.0) if math.isfinite(h) else h

    if p_grid is None:
        final_grid = _stage_grid(eff_comb, r_comb, points, None, final=True)
    else:
        final_grid = np.asarray(p_grid, dtype=float)
        if final_grid.size == 0:
            raise ValueError("empty exponent grid")
        if final_grid[0] < 1.0 or final_grid[-1] >= r_comb:
            raise EnvelopeDomainError(
                f"exponent grid must lie inside [1, {r_comb:.6g}) for this chain"
            )
    p_max_hint = float(final_grid[-1])

    init_K = K_M if regime.tag in (MARTINGALE, VECTOR_INDEPENDENT) else K_I
    pointwise = regime.tag in _PRODUCT_TAGS
    d = len(order)

    stages = []
    if pointwise:
        # pointwise-product recursion: every stage lives on the final grid
        km_vals = np.array([K_M(p) for p in final_grid])
        vals = np.array([init_K(p) * order[0](p) for p in final_grid])
        stages.append(_stage_from_values(final_grid, vals, r_comb))
        for m in range(1, d):
            nu_vals = np.array([order[m](p) for p in final_grid])
            vals = km_vals * vals * nu_vals
            stages.append(_stage_from_values(final_grid, vals, r_comb))
    else:
        # composition recursion: stage m covers its partial combined exponent
        r_acc = order[0].support.upper
        eff_acc = order[0].evaluable_upper()[0]
        if d == 1:
            grid = final_grid
        else:
            grid = _stage_grid(eff_acc, r_acc, points, p_max_hint, final=False)
        vals = np.array([init_K(p) * order[0](p) for p in grid])
        stages.append(_stage_from_values(grid, vals, r_acc))
        for m in range(1, d):
            nxt = order[m]
            r_acc = combined_exponent([r_acc, nxt.support.upper])
            eff_acc = combined_exponent(
                [stages[-1].evaluable_upper()[0], nxt.evaluable_upper()[0]]
            )
            last = m == d - 1
            grid = (
                final_grid
                if last
                else _stage_grid(eff_acc, r_acc, points, p_max_hint, final=False)
            )
            vals = np.array(
                [K_M(p) * otimes(stages[-1], nxt, float(p)) for p in grid]
            )
            stages.append(_stage_from_values(grid, vals, r_acc))

    return ZetaChain(tuple(stages), regime, tuple(nus), r_comb)


def polynomial_dominant_envelope(
    tail_params: Sequence[Tuple],
    d: int,
    scale: float = 1.0,
    p_grid: Optional[Sequence[float]] = None,
    points: int = 129,
) -> Tabulated:
    """Dominant-term moment envelope for an arbitrary centered polynomial.

    ``tail_params`` lists per-factor tail descriptors ``(r, gamma)`` or
    ``(r, gamma, L)`` for inputs with regular-variation tails
    ``x^(-r) (log x)^gamma L(log x)``.  For a degree-``d`` polynomial of
    common independent such variables, the worst contribution comes from the
    d-th power of a variable with the smallest tail index ``r_min``, giving

        rho_d(p)^p  proportional to  (r_min/d - p)^(-(gamma_bar + 1))
                                     * L_bar(1/(r_min/d - p))

    on ``[1, r_min/d)``, where ``gamma_bar`` and ``L_bar`` maximise over the
    factors attaining ``r_min``.  The multiplicative constant is unspecified
    by the underlying inequality and defaults to 1 (shape-only bound).
    """
    if d < 1:
        raise ValueError("polynomial degree must be >= 1")
    if len(tail_params) == 0:
        raise ValueError("at least one tail descriptor required")
    parsed = []
    for tp in tail_params:
        if len(tp) == 2:
            r, gamma = tp
            L = SlowlyVarying.constant(1.0)
        else:
            r, gamma, L = tp
        parsed.append((float(r), float(gamma), L))
    r_min = min(r for r, _, _ in parsed)
    if not (r_min > d):
        raise ValueError(
            f"smallest tail index {r_min} must exceed the degree {d} for a finite bound"
        )
    at_rmin = [t for t in parsed if math.isclose(t[0], r_min, rel_tol=1e-12)]
    gamma_bar = max(g for _, g, _ in at_rmin)
    at_gamma = [t for t in at_rmin if math.isclose(t[1], gamma_bar, rel_tol=1e-12, abs_tol=1e-12)]
    slow_fns = [L for _, _, L in at_gamma]

    def L_bar(z: float) -> float:
        return max(L(z) for L in slow_fns)

    upper = r_min / d
    if p_grid is None:
        grid = chebyshev_grid(1.0, 1.0 + 0.999 * (upper - 1.0), points)
    else:
        grid = np.asarray(p_grid, dtype=float)
        if grid[-1] >= upper:
            raise EnvelopeDomainError(f"grid must stay below the support edge {upper:.6g}")

    def rho(p: float) -> float:
        gap = upper - p
        moment_bound = scale * gap ** (-(gamma_bar + 1.0)) * L_bar(1.0 / gap)
        return moment_bound ** (1.0 / p)

    vals = np.array([rho(float(p)) for p in grid])
    return Tabulated(grid, vals, upper=upper, upper_closed=False)


@dataclass(frozen=True)
class DoobMaximal(MomentEnvelope):
    """Envelope for the running maximum: the inner bound times ``p/(p-1)``."""

    inner: MomentEnvelope = None

    @property
    def support(self) -> SupportInterval:
        sup = self.inner.support
        return SupportInterval(max(sup.lower, 1.0), sup.upper, sup.upper_closed)

    def evaluable_upper(self):
        return self.inner.evaluable_upper()

    def __call__(self, p: float) -> float:
        p = float(p)
        if p <= 1.0:
            raise EnvelopeDomainError(
                f"the maximal-inequality factor p/(p-1) is undefined at p={p}"
            )
        return super().__call__(p)

    def _value(self, p: float) -> float:
        return self.inner(p) * p / (p - 1.0)


def doob_maximal_envelope(zeta: MomentEnvelope) -> DoobMaximal:
    """Pointwise multiply a bound envelope by the Doob factor ``p/(p-1)``."""
    return DoobMaximal(zeta)


def good_lambda_envelope(
    psi: MomentEnvelope,
    beta: float,
    epsilon: float,
    comparison_constant: float = 1.0,
) -> MomentEnvelope:
    """Envelope correction from a good-lambda distributional comparison.

    Two nonnegative variables linked by a good-lambda inequality with
    parameters ``beta > 1`` and ``epsilon in (0, 1)`` satisfy a moment-norm
    comparison up to the envelope ``psi(p) * (r - p)^(-1/r)`` with
    ``r = |log epsilon / log beta|``.  The comparison constant is not pinned
    down by the inequality; ``comparison_constant`` scales the returned
    envelope (default 1).  Requires ``r > 1``.
    """
    beta = float(beta)
    epsilon = float(epsilon)
    if not (beta > 1.0):
        raise ValueError(f"beta must exceed 1, got {beta}")
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    r = abs(math.log(epsilon) / math.log(beta))
    if not (r > 1.0):
        raise ValueError(f"derived exponent r={r:.6g} must exceed 1")
    correction = PowerSingularity(
        r=r, power=1.0 / r, scale=comparison_constant, lower=psi.support.lower
    )
    return Product((psi, correction))

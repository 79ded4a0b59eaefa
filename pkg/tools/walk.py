"""
Lazy signed random walk Y = sum eta_i v_i and its concentration probability.

eta takes +1 and -1 with probability mu/2 each and 0 with probability 1 - mu.
The exact distribution is computed with integer weights over the common
denominator (2q)^n for mu = p/q and only normalized to fractions at the end.
"""

import logging
from fractions import Fraction
from functools import lru_cache
from math import comb, pi
from typing import Dict, Iterable, Tuple

import numpy as np

from errors import DomainError, SupportTooLargeError
from models import ConcentrationResult, Distribution, FourierEstimate, Multiset, WalkParams

logger = logging.getLogger(__name__)

DEFAULT_SUPPORT_CAP = 10_000_000


@lru_cache(maxsize=256)
def _equal_steps_weights(m: int, num: int, den: int) -> Tuple[int, ...]:
    """
    Integer weights of eta_1 + ... + eta_m at a = -m..m over denominator (2 den)^m.

    A step contributes num (for +1), num (for -1) and 2(den - num) (for 0).
    """
    lazy = 2 * (den - num)
    weights = [0] * (2 * m + 1)
    for j in range(m + 1):
        moving = m - j
        base = comb(m, j) * lazy**j * num**moving
        if base == 0:
            continue
        # moving steps with u ups land at 2u - moving
        for up in range(moving + 1):
            weights[2 * up - moving + m] += base * comb(moving, up)
    return tuple(weights)


def _integer_law(v: Multiset, p: WalkParams) -> Tuple[Dict[int, int], int]:
    num, den = p.mu.numerator, p.mu.denominator
    law: Dict[int, int] = {0: 1}
    steps = 0
    for value, multiplicity in v.entries:
        if value == 0:
            continue
        weights = _equal_steps_weights(multiplicity, num, den)
        step_law = {value * (j - multiplicity): w for j, w in enumerate(weights) if w}
        merged: Dict[int, int] = {}
        for base, bw in law.items():
            for shift, sw in step_law.items():
                key = base + shift
                merged[key] = merged.get(key, 0) + bw * sw
        law = merged
        steps += multiplicity
    return law, (2 * den) ** steps


def _check_support(v: Multiset, support_cap: int) -> None:
    total = v.total_abs()
    if total > support_cap:
        raise SupportTooLargeError(
            f"support too large ({total} > {support_cap}); use fourier_estimate",
            size=total,
            limit=support_cap,
        )


def exact_distribution(v: Multiset, p: WalkParams, *, support_cap: int = DEFAULT_SUPPORT_CAP) -> Distribution:
    _check_support(v, support_cap)
    law, denominator = _integer_law(v, p)
    logger.debug(f"walk law over {len(law)} atoms (n={v.size}, mu={p.mu})")
    return Distribution.from_dict({x: Fraction(w, denominator) for x, w in law.items() if w})


def concentration(v: Multiset, p: WalkParams, *, support_cap: int = DEFAULT_SUPPORT_CAP) -> ConcentrationResult:
    """max_a P(Y = a); ties go to the smallest |a|, then to a >= 0"""
    _check_support(v, support_cap)
    law, denominator = _integer_law(v, p)
    best = min((x for x, w in law.items() if w), key=lambda x: (-law[x], abs(x), x < 0))
    return ConcentrationResult(best_atom=best, probability=Fraction(law[best], denominator))


def equal_steps_atom(m: int, p: WalkParams, a: int) -> Fraction:
    """P(eta_1 + ... + eta_m = a) from the binomial closed form"""
    if m < 0:
        raise DomainError("m must be non-negative")
    mu = p.mu
    total = Fraction(0)
    for j in range(m + 1):
        moving = m - j
        if (a + moving) % 2 or abs(a) > moving:
            continue
        total += comb(m, j) * (1 - mu) ** j * (mu / 2) ** moving * comb(moving, (a + moving) // 2)
    return total


def equal_steps_distribution(m: int, p: WalkParams) -> Distribution:
    if m < 0:
        raise DomainError("m must be non-negative")
    weights = _equal_steps_weights(m, p.mu.numerator, p.mu.denominator)
    denominator = (2 * p.mu.denominator) ** m
    return Distribution.from_dict({j - m: Fraction(w, denominator) for j, w in enumerate(weights) if w})


def is_separated(s: Iterable[int], tau: int) -> bool:
    """True when distinct elements of s are at least tau apart"""
    ordered = sorted(set(s))
    return all(b - a >= tau for a, b in zip(ordered, ordered[1:]))


def separated_set_mass(m: int, p: WalkParams, s: Iterable[int]) -> Fraction:
    return sum((equal_steps_atom(m, p, a) for a in set(s)), Fraction(0))


def erdos_extremal(n: int) -> Fraction:
    """Concentration of n equal nonzero steps at mu = 1"""
    return Fraction(comb(n, n // 2), 2**n)


def fourier_estimate(v: Multiset, p: WalkParams, grid: int) -> FourierEstimate:
    """
    Midpoint-rule estimate of the integral over [0, 1] of prod (1 - mu + mu cos 2 pi v_j x).

    For mu <= 1/2 the integrand is nonnegative and the integral equals P(Y = 0).
    Nodes are x_k = (2k + 1) / (2 grid); phases v_j x_k are reduced exactly
    modulo 1 with integer arithmetic before taking cosines.
    """
    mu = p.mu
    if mu > Fraction(1, 2):
        raise DomainError("fourier_estimate needs mu <= 1/2")
    if grid < 16:
        raise DomainError("grid must be at least 16")

    nonzero = v.nonzero()
    if nonzero.size == 0:
        return FourierEstimate(estimate=1.0, error_bound=0.0, grid=grid)

    period = 2 * grid
    odd = 2 * np.arange(grid, dtype=np.int64) + 1
    mu_f = float(mu)
    integrand = np.ones(grid)
    for value, multiplicity in nonzero.entries:
        residue = value % period
        phase = (residue * odd) % period
        factor = 1.0 - mu_f + mu_f * np.cos(2.0 * pi * phase / period)
        integrand *= factor**multiplicity
    estimate = float(np.mean(integrand))

    error_bound = 2.0 * pi * mu_f * nonzero.total_abs() / (4.0 * grid)
    return FourierEstimate(estimate=estimate, error_bound=error_bound, grid=grid)


def halasz_factor(v: Multiset, p: WalkParams, xi) -> float:
    """Pointwise prod ((1 - mu) + mu cos 2 pi v_i xi)"""
    mu_f = float(p.mu)
    xi = Fraction(xi)
    result = 1.0
    for value, multiplicity in v.entries:
        phase = (value * xi) % 1
        result *= (1.0 - mu_f + mu_f * np.cos(2.0 * pi * float(phase))) ** multiplicity
    return float(result)


def halasz_profile(v: Multiset, p: WalkParams, grid: int) -> np.ndarray:
    """Values of halasz_factor at j / grid for j = 0..grid-1"""
    if grid < 1:
        raise DomainError("grid must be positive")
    mu_f = float(p.mu)
    j = np.arange(grid, dtype=np.int64)
    profile = np.ones(grid)
    for value, multiplicity in v.entries:
        phase = ((value % grid) * j) % grid
        profile *= (1.0 - mu_f + mu_f * np.cos(2.0 * pi * phase / grid)) ** multiplicity
    return profile

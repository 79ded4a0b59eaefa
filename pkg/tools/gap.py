"""
Generalized arithmetic progressions and the searches the inverse algorithms run on them.

All predicates produce explicit witnesses. Small boxes are enumerated in full;
larger ones are searched meet-in-the-middle over a split of the generators,
or by solving the widest coordinate by exact division.
"""

import logging
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import factorial, lcm, prod
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from errors import DomainError, EnumerationCapError, SearchBudgetError
from models import (
    CoverageEntry,
    DilateCoverageReport,
    DissociationWitness,
    Gap,
    MembershipWitness,
    Multiset,
    ProperResult,
    TorsionResult,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_RANK = 8
DEFAULT_ENUMERATION_CAP = 1_000_000_000
DEFAULT_FULL_ENUMERATION_VOLUME = 10_000
DEFAULT_DISSOCIATION_BUDGET = 100_000_000
DEFAULT_CUBE_MAX = 30

Word = Union[Multiset, Sequence[int]]


def _word(w: Word) -> List[int]:
    return w.values() if isinstance(w, Multiset) else [int(x) for x in w]


def zero_out(lower: int, upper: int) -> Iterator[int]:
    """Integers of [lower, upper] ordered by |m|, positive before negative"""
    if lower > 0:
        yield from range(lower, upper + 1)
        return
    if upper < 0:
        yield from range(upper, lower - 1, -1)
        return
    yield 0
    for r in range(1, max(upper, -lower) + 1):
        if r <= upper:
            yield r
        if -r >= lower:
            yield -r


def symmetric_gap(generators: Sequence, bound: int) -> Gap:
    """Q(w, k) = {sum m_i w_i : |m_i| <= k}"""
    if bound < 0:
        raise DomainError("bound must be non-negative")
    gens = tuple(Fraction(x) for x in generators)
    return Gap(generators=gens, lower=(-bound,) * len(gens), upper=(bound,) * len(gens))


def volume(g: Gap) -> int:
    return prod(hi - lo + 1 for lo, hi in zip(g.lower, g.upper))


def evaluate(g: Gap, coefficients: Sequence[int]) -> Fraction:
    if len(coefficients) != g.rank:
        raise DomainError(f"expected {g.rank} coefficients, got {len(coefficients)}")
    return g.offset + sum((m * a for m, a in zip(coefficients, g.generators)), Fraction(0))


def in_box(g: Gap, coefficients: Sequence[int]) -> bool:
    return len(coefficients) == g.rank and all(lo <= m <= hi for m, lo, hi in zip(coefficients, g.lower, g.upper))


def minkowski_sum(g1: Gap, g2: Gap) -> Gap:
    return Gap(
        offset=g1.offset + g2.offset,
        generators=g1.generators + g2.generators,
        lower=g1.lower + g2.lower,
        upper=g1.upper + g2.upper,
    )


def scalar_dilate(g: Gap, s) -> Gap:
    s = Fraction(s)
    return Gap(offset=g.offset * s, generators=tuple(a * s for a in g.generators), lower=g.lower, upper=g.upper)


def iterated_sum(g: Gap, times: int) -> Gap:
    """times * P = P + ... + P as a progression with scaled bounds"""
    if times < 1:
        raise DomainError("iterated sum needs at least one summand")
    return Gap(
        offset=g.offset * times,
        generators=g.generators,
        lower=tuple(lo * times for lo in g.lower),
        upper=tuple(hi * times for hi in g.upper),
    )


def torsion_sumset_gap(w: Sequence, bound: int, other_bound: int, tau: int) -> Gap:
    """(1/tau) * Q(w, bound * (other_bound + tau)), which holds Q(w, bound) + Q(v, other_bound)"""
    return scalar_dilate(symmetric_gap(w, bound * (other_bound + tau)), Fraction(1, tau))


def enumerate_values(g: Gap, *, enumeration_cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Tuple[Tuple[int, ...], Fraction]]:
    size = volume(g)
    if size > enumeration_cap:
        raise EnumerationCapError(f"volume {size} exceeds enumeration cap", size=size, limit=enumeration_cap)
    ranges = [list(zero_out(lo, hi)) for lo, hi in zip(g.lower, g.upper)]
    for coeffs in product(*ranges):
        yield coeffs, evaluate(g, coeffs)


@lru_cache(maxsize=128)
def _value_index(g: Gap) -> Dict[Fraction, Tuple[int, ...]]:
    index: Dict[Fraction, Tuple[int, ...]] = {}
    for coeffs, value in enumerate_values(g):
        index.setdefault(value, coeffs)
    return index


def _integer_form(g: Gap, target: Fraction) -> Tuple[List[int], int]:
    scale = lcm(target.denominator, *(a.denominator for a in g.generators))
    return [int(a * scale) for a in g.generators], int(target * scale)


def _solve_single(step: int, target: int, lower: int, upper: int) -> Optional[int]:
    if step == 0:
        return next(zero_out(lower, upper)) if target == 0 else None
    if target % step:
        return None
    m = target // step
    return m if lower <= m <= upper else None


def balanced_split(sizes: Sequence[int], coords: Sequence[int]) -> Tuple[List[int], List[int]]:
    left: List[int] = []
    right: List[int] = []
    left_vol = right_vol = 1
    for c in sorted(coords, key=lambda i: -sizes[i]):
        if left_vol <= right_vol:
            left.append(c)
            left_vol *= sizes[c]
        else:
            right.append(c)
            right_vol *= sizes[c]
    return left, right


def contains(
    g: Gap,
    x,
    *,
    max_rank: int = DEFAULT_MAX_RANK,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
    full_enumeration_volume: int = DEFAULT_FULL_ENUMERATION_VOLUME,
) -> Optional[MembershipWitness]:
    """Witness coefficients for x in g, or None when x is not an element"""
    x = Fraction(x)
    if g.rank > max_rank:
        raise EnumerationCapError(f"rank {g.rank} exceeds max {max_rank}", size=g.rank, limit=max_rank)
    if g.rank == 0:
        return MembershipWitness(coefficients=()) if x == g.offset else None

    if volume(g) <= full_enumeration_volume:
        found = _value_index(g).get(x)
        return MembershipWitness(coefficients=found) if found is not None else None

    steps, target = _integer_form(g, x - g.offset)
    if g.rank == 1:
        m = _solve_single(steps[0], target, g.lower[0], g.upper[0])
        return MembershipWitness(coefficients=(m,)) if m is not None else None

    sizes = [hi - lo + 1 for lo, hi in zip(g.lower, g.upper)]
    widest = max(range(g.rank), key=lambda i: sizes[i])
    rest = [i for i in range(g.rank) if i != widest]
    division_cost = prod(sizes[i] for i in rest)
    left, right = balanced_split(sizes, range(g.rank))
    mitm_cost = prod(sizes[i] for i in left) + prod(sizes[i] for i in right)
    cost = min(division_cost, mitm_cost)
    if cost > enumeration_cap:
        raise EnumerationCapError(f"membership search needs {cost} states", size=cost, limit=enumeration_cap)

    def assemble(parts: Dict[int, int]) -> MembershipWitness:
        return MembershipWitness(coefficients=tuple(parts[i] for i in range(g.rank)))

    if division_cost <= mitm_cost:
        ranges = [list(zero_out(g.lower[i], g.upper[i])) for i in rest]
        for coeffs in product(*ranges):
            partial = sum(m * steps[i] for m, i in zip(coeffs, rest))
            m = _solve_single(steps[widest], target - partial, g.lower[widest], g.upper[widest])
            if m is not None:
                return assemble({**dict(zip(rest, coeffs)), widest: m})
        return None

    table: Dict[int, Tuple[int, ...]] = {}
    for coeffs in product(*(list(zero_out(g.lower[i], g.upper[i])) for i in right)):
        table.setdefault(sum(m * steps[i] for m, i in zip(coeffs, right)), coeffs)
    for coeffs in product(*(list(zero_out(g.lower[i], g.upper[i])) for i in left)):
        partial = sum(m * steps[i] for m, i in zip(coeffs, left))
        hit = table.get(target - partial)
        if hit is not None:
            return assemble({**dict(zip(left, coeffs)), **dict(zip(right, hit))})
    return None


def is_proper(g: Gap, *, enumeration_cap: int = DEFAULT_ENUMERATION_CAP) -> ProperResult:
    """
    Injectivity of the coefficient map on the box.

    The box is walked in zero-out order per coordinate, last coordinate
    fastest; a reported collision is the first repeated value in that walk,
    as (earlier coefficients, later coefficients).
    """
    seen: Dict[Fraction, Tuple[int, ...]] = {}
    for coeffs, value in enumerate_values(g, enumeration_cap=enumeration_cap):
        earlier = seen.setdefault(value, coeffs)
        if earlier != coeffs:
            return ProperResult(proper=False, collision=(earlier, coeffs))
    return ProperResult(proper=True)


def cube_contains(w: Word, x, *, cube_max: int = DEFAULT_CUBE_MAX) -> Optional[Tuple[int, ...]]:
    """Sign vector e with sum e_i w_i = x, by meet-in-the-middle over the two halves of w"""
    word = _word(w)
    if len(word) > cube_max:
        raise DomainError(f"cube search limited to {cube_max} elements, got {len(word)}")
    x = Fraction(x)
    half = len(word) // 2
    head, tail = word[:half], word[half:]

    table: Dict[int, Tuple[int, ...]] = {}
    for signs in product((1, -1), repeat=len(tail)):
        table.setdefault(sum(e * a for e, a in zip(signs, tail)), signs)
    for signs in product((1, -1), repeat=len(head)):
        hit = table.get(x - sum(e * a for e, a in zip(signs, head)))
        if hit is not None:
            return signs + hit
    return None


def is_k_dissociated(
    w: Word, k: int, *, budget: int = DEFAULT_DISSOCIATION_BUDGET
) -> Union[bool, DissociationWitness]:
    """
    True when no nonzero m with |m_i| <= k has sum m_i w_i = 0, else a witness.

    Repeated values count as distinct positions.
    """
    word = _word(w)
    if k < 1:
        raise DomainError("k must be positive")
    half = len(word) // 2
    head, tail = word[:half], word[half:]
    states = (2 * k + 1) ** len(head) + (2 * k + 1) ** len(tail)
    if states > budget:
        raise SearchBudgetError(f"relation search needs {states} states", size=states, limit=budget)

    box = list(zero_out(-k, k))
    table: Dict[int, Tuple[int, ...]] = {}
    nontrivial_zero: Optional[Tuple[int, ...]] = None
    for coeffs in product(box, repeat=len(tail)):
        total = sum(m * a for m, a in zip(coeffs, tail))
        table.setdefault(total, coeffs)
        if total == 0 and nontrivial_zero is None and any(coeffs):
            nontrivial_zero = coeffs

    for coeffs in product(box, repeat=len(head)):
        if any(coeffs):
            hit = table.get(-sum(m * a for m, a in zip(coeffs, head)))
        else:
            hit = nontrivial_zero
        if hit is not None:
            return DissociationWitness(coefficients=coeffs + hit)
    return True


def torsion(x, g: Gap, bound: int, **limits) -> TorsionResult:
    """Smallest tau in [1, bound] with tau * x in g"""
    if bound < 1:
        raise DomainError("torsion bound must be at least 1")
    x = Fraction(x)
    for tau in range(1, bound + 1):
        witness = contains(g, tau * x, **limits)
        if witness is not None:
            return TorsionResult(tau=tau, witness=witness)
    return TorsionResult()


def dilate_coverage(v: Multiset, w: Word, k: int, **limits) -> DilateCoverageReport:
    """For each value of v the least tau <= k with tau * v_i in Q(w, k), or an exceptional mark"""
    g = symmetric_gap(_word(w), k)
    entries = []
    covered = exceptional = 0
    for value, multiplicity in v.entries:
        result = torsion(value, g, k, **limits)
        if result.tau is None:
            exceptional += multiplicity
            entries.append(CoverageEntry(value=value, multiplicity=multiplicity))
        else:
            covered += multiplicity
            entries.append(
                CoverageEntry(
                    value=value,
                    multiplicity=multiplicity,
                    tau=result.tau,
                    coefficients=result.witness.coefficients,
                )
            )
    return DilateCoverageReport(entries=tuple(entries), covered=covered, exceptional=exceptional)


def lacunary_constant(rank: int) -> int:
    """Ratio constant for d + 1 nonzero elements of a rank d symmetric progression"""
    return rank * factorial(rank)


def lacunary_pair(xs: Sequence, vol: int, rank: int) -> Tuple[int, int, Fraction, bool]:
    """
    Consecutive pair (by magnitude) of the nonzero xs with the smallest ratio.

    Returns the indices into xs of the smaller and larger element, their
    ratio, and whether the ratio is within lacunary_constant(rank) * vol.
    """
    nonzero = [(abs(Fraction(x)), i) for i, x in enumerate(xs) if x != 0]
    if len(nonzero) < 2:
        raise DomainError("need at least two nonzero elements")
    nonzero.sort()
    best = min(range(1, len(nonzero)), key=lambda j: nonzero[j][0] / nonzero[j - 1][0])
    ratio = nonzero[best][0] / nonzero[best - 1][0]
    return nonzero[best - 1][1], nonzero[best][1], ratio, ratio <= lacunary_constant(rank) * vol

"""
Split a symmetric integer progression P into P_small + P_sparse around a target scale.

The scale is taken from a geometric ladder of rungs around r0. At each rung a
bounded search collects coefficient vectors m with |sum m_i v_i| small; the
rational span X of those relations decides the split. Writing X as the graph
x_J = T x_I over a coordinate set I, generator i in I becomes
(v_i + w_i) + (-w_i) with w = T^t v_J, and the remaining generators go to the
sparse part unchanged. The verifier is the source of truth: a rung is only
returned once its split passes every clause exactly.
"""

import logging
from fractions import Fraction
from itertools import combinations
from math import gcd, lcm, prod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import (
    DiscretizationVerificationError,
    DomainError,
    KernelSearchExhaustedError,
    NoAdmissibleScaleError,
)
from models import (
    DiscretizationParams,
    DiscretizationReport,
    DiscretizationResult,
    Gap,
    GeneratorSplit,
    SolveStatus,
    SparsenessMethod,
    VerificationClause,
)
from tools import gap as gaps
from tools.exact_linalg import null_space_exact, rank_exact, solve_rational

logger = logging.getLogger(__name__)

DEFAULT_LADDER_SPAN = 12
DEFAULT_COEFF_CAP = 1000
DEFAULT_KERNEL_BUDGET = 10_000_000
DEFAULT_SPARSE_CHECK_BUDGET = 2_000_000
MAX_RANK = 4
INT64_SAFE = 2**62


def ladder(r0: int, ratio: int, span: int) -> List[int]:
    """Rungs max(1, round(r0 * ratio^j)) for |j| <= span, nearest to r0 first"""
    rungs: List[int] = []
    for j in sorted(range(-span, span + 1), key=lambda j: (abs(j), j)):
        rung = max(1, round(Fraction(r0) * Fraction(ratio) ** j))
        if rung not in rungs:
            rungs.append(rung)
    return rungs


def _magnitudes(p: Gap, enumeration_volume: int) -> List[int]:
    if gaps.volume(p) <= enumeration_volume:
        return sorted({abs(int(value)) for _, value in gaps.enumerate_values(p)})
    return sorted({abs(int(g)) for g in p.generators})


def is_admissible(magnitudes: Sequence[int], r_scale: int, s: int) -> bool:
    """No magnitude falls strictly inside (R / 2s, R s)"""
    low = Fraction(r_scale, 2 * s)
    high = r_scale * s
    return not any(low < x < high for x in magnitudes)


def _small_vectors(steps: Sequence[int], caps: Sequence[int], threshold: int) -> np.ndarray:
    """Box vectors |m_i| <= caps_i (box order) with |sum m_i steps_i| <= threshold, one slice of m_0 at a time"""
    safe = sum(c * abs(v) for c, v in zip(caps, steps)) < INT64_SAFE
    dtype = np.int64 if safe else object
    if len(caps) == 1:
        rest = np.zeros((1, 0), dtype=dtype)
        rest_values = np.zeros(1, dtype=dtype)
    else:
        axes = [np.arange(-c, c + 1, dtype=np.int64) for c in caps[1:]]
        rest = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(caps) - 1).astype(dtype)
        rest_values = rest @ np.array([int(v) for v in steps[1:]], dtype=dtype)
    found = []
    for m0 in range(-caps[0], caps[0] + 1):
        hits = np.abs(rest_values + m0 * int(steps[0])) <= threshold
        if hits.any():
            head = np.full((int(hits.sum()), 1), m0, dtype=dtype)
            found.append(np.hstack([head, rest[hits]]))
    if not found:
        return np.zeros((0, len(caps)), dtype=dtype)
    return np.vstack(found)


def kernel_basis(
    steps: Sequence[int],
    caps: Sequence[int],
    threshold: int,
) -> List[Tuple[int, ...]]:
    """
    Basis of the rational span of the m in the box with |sum m_i steps_i| <= threshold.

    Candidates are taken in box order; a candidate joins the basis when it is
    not annihilated by every vector of the current span's orthogonal complement.
    """
    d = len(steps)
    small = _small_vectors(steps, caps, threshold)
    basis: List[Tuple[int, ...]] = []
    complement = [tuple(1 if i == j else 0 for j in range(d)) for i in range(d)]
    while complement and len(small):
        normals = np.array(complement, dtype=small.dtype).T
        outside = np.any((small @ normals) != 0, axis=1)
        if not outside.any():
            break
        first = int(np.argmax(outside))
        basis.append(tuple(int(x) for x in small[first]))
        small = small[first + 1 :][outside[first + 1 :]]
        complement = null_space_exact(basis)
    return basis


def _stable_kernel(
    steps: Sequence[int],
    bounds: Sequence[int],
    threshold: int,
    b: int,
    coeff_cap: int,
    kernel_budget: int,
) -> Tuple[List[Tuple[int, ...]], int]:
    """Escalate caps min(coeff_cap, max(M_i, 1) b^(t-1)) until the kernel dimension repeats"""
    previous: Optional[List[Tuple[int, ...]]] = None
    previous_caps: Optional[Tuple[int, ...]] = None
    escalation = 0
    while True:
        escalation += 1
        caps = tuple(min(coeff_cap, max(m, 1) * b ** (escalation - 1)) for m in bounds)
        if caps == previous_caps:
            return previous, escalation - 1
        size = prod(2 * c + 1 for c in caps)
        if size > kernel_budget:
            if previous is None:
                raise KernelSearchExhaustedError(
                    f"kernel box of {size} vectors exceeds budget {kernel_budget}",
                    {"box": size, "budget": kernel_budget},
                )
            logger.warning(f"Kernel search stopped at escalation {escalation - 1} before stabilizing")
            return previous, escalation - 1
        basis = kernel_basis(steps, caps, threshold)
        logger.debug(f"Kernel escalation {escalation}: caps {caps}, dimension {len(basis)}")
        if previous is not None and len(basis) == len(previous):
            return basis, escalation
        previous, previous_caps = basis, caps


def _coordinate_set(basis: List[Tuple[int, ...]], d: int) -> Tuple[int, ...]:
    r = len(basis)
    for columns in combinations(range(d), r):
        if rank_exact([[row[c] for c in columns] for row in basis]) == r:
            return columns
    raise DomainError("kernel basis has no full-rank coordinate projection")


def split_from_kernel(p: Gap, basis: List[Tuple[int, ...]]) -> Tuple[Gap, Gap, Tuple[GeneratorSplit, ...], Tuple[int, ...]]:
    """P_small, P_sparse and the per-generator decomposition for a kernel span"""
    d = p.rank
    r = len(basis)
    v = [int(g) for g in p.generators]
    bounds = list(p.upper)
    if r == d:
        splits = tuple(GeneratorSplit(small=g, sparse=0) for g in v)
        return p, Gap(), splits, tuple(range(d))
    if r == 0:
        splits = tuple(GeneratorSplit(small=0, sparse=g) for g in v)
        return Gap(), p, splits, ()

    chosen = _coordinate_set(basis, d)
    rest = [j for j in range(d) if j not in chosen]
    k_chosen = [[row[c] for c in chosen] for row in basis]
    graph: List[Tuple[Fraction, ...]] = []
    for j in rest:
        solved = solve_rational(k_chosen, [row[j] for row in basis])
        if solved.status != SolveStatus.SOLVED:
            raise DomainError("coordinate projection of the kernel is singular")
        graph.append(solved.solution)

    shift = {i: sum((graph[t][pos] * v[j] for t, j in enumerate(rest)), Fraction(0)) for pos, i in enumerate(chosen)}
    splits = []
    for i in range(d):
        if i in shift:
            splits.append(GeneratorSplit(small=v[i] + shift[i], sparse=-shift[i]))
        else:
            splits.append(GeneratorSplit(small=0, sparse=v[i]))

    def build(pairs) -> Gap:
        kept = [(g, m) for g, m in pairs if g != 0]
        return Gap(
            generators=tuple(g for g, _ in kept),
            lower=tuple(-m for _, m in kept),
            upper=tuple(m for _, m in kept),
        )

    p_small = build((splits[i].small, bounds[i]) for i in chosen)
    p_sparse = build((splits[i].sparse, bounds[i]) for i in range(d))
    return p_small, p_sparse, tuple(splits), chosen


def discretize(
    p: Gap,
    r0: int,
    s: int,
    b: int = 2,
    *,
    ladder_span: int = DEFAULT_LADDER_SPAN,
    coeff_cap: int = DEFAULT_COEFF_CAP,
    kernel_budget: int = DEFAULT_KERNEL_BUDGET,
    sparse_check_budget: int = DEFAULT_SPARSE_CHECK_BUDGET,
    enumeration_volume: int = gaps.DEFAULT_FULL_ENUMERATION_VOLUME,
) -> DiscretizationResult:
    if not p.is_symmetric or not p.is_integral:
        raise DomainError("discretize needs a symmetric integer progression")
    if p.rank > MAX_RANK:
        raise DomainError(f"discretize supports rank at most {MAX_RANK}")
    if b < 2 or r0 < 1 or s < 1:
        raise DomainError("need b >= 2, r0 >= 1 and s >= 1")

    vol = gaps.volume(p)
    ratio = max(2, s * vol)
    magnitudes = _magnitudes(p, enumeration_volume)
    steps = [int(g) for g in p.generators]
    diagnostics: Dict[str, list] = {"inadmissible": [], "kernel_exhausted": [], "rejected": []}

    for rung_index, r_scale in enumerate(ladder(r0, ratio, ladder_span)):
        if not is_admissible(magnitudes, r_scale, s):
            diagnostics["inadmissible"].append(r_scale)
            continue
        threshold = r_scale // (2 * s)
        try:
            basis, escalations = _stable_kernel(steps, p.upper, threshold, b, coeff_cap, kernel_budget)
        except KernelSearchExhaustedError as e:
            diagnostics["kernel_exhausted"].append({"rung": r_scale, **e.diagnostics})
            continue

        p_small, p_sparse, splits, chosen = split_from_kernel(p, basis)
        result = DiscretizationResult(
            r_scale=r_scale,
            p_small=p_small,
            p_sparse=p_sparse,
            decomposition=splits,
            params_used=DiscretizationParams(
                b=b,
                s=s,
                r0=r0,
                ladder_ratio=ratio,
                rung=rung_index,
                kernel_rank=len(basis),
                escalations=escalations,
                coordinate_set=chosen,
                scale_ratio=Fraction(r_scale, r0),
            ),
        )
        report = verify_discretization(
            result, p, s, sparse_check_budget=sparse_check_budget, enumeration_volume=enumeration_volume
        )
        if report.valid and report.exhaustive:
            logger.info(f"Discretized at R = {r_scale} (kernel rank {len(basis)}, rung {rung_index})")
            return result.model_copy(update={"verification": report})
        failed = [c.name for c in report.clauses if not c.passed]
        logger.debug(f"Rung R = {r_scale} rejected: failed {failed}, exhaustive={report.exhaustive}")
        diagnostics["rejected"].append({"rung": r_scale, "failed": failed, "exhaustive": report.exhaustive})

    if diagnostics["rejected"]:
        raise DiscretizationVerificationError("no candidate split passed verification", diagnostics)
    if diagnostics["kernel_exhausted"]:
        raise KernelSearchExhaustedError("kernel search exhausted on every admissible rung", diagnostics)
    raise NoAdmissibleScaleError("no ladder rung avoids the magnitudes of the progression", diagnostics)


# ---------------------------------------------------------------------- verification


def _max_abs(g: Gap) -> Fraction:
    return abs(g.offset) + sum(
        (max(abs(lo), abs(hi)) * abs(a) for a, lo, hi in zip(g.generators, g.lower, g.upper)),
        Fraction(0),
    )


def _half_values(steps: Sequence[int], widths: Sequence[int]) -> np.ndarray:
    """Sorted values of sum m_i steps_i over |m_i| <= widths_i"""
    safe = sum(w * abs(x) for w, x in zip(widths, steps)) < INT64_SAFE
    values = np.zeros(1, dtype=np.int64 if safe else object)
    for step, width in zip(steps, widths):
        axis = np.arange(-width, width + 1, dtype=np.int64)
        if not safe:
            axis = axis.astype(object)
        values = np.add.outer(values, axis * step).ravel()
    return np.sort(values)


def _separation_violation(
    steps: Sequence[int], widths: Sequence[int], separation: int, budget: int
) -> Tuple[Optional[bool], Optional[int]]:
    """
    Look for sum m_i steps_i with 0 < |value| < separation over |m_i| <= widths_i.

    Returns (found, value) or (None, None) when a half box exceeds the budget.
    """
    sizes = [2 * w + 1 for w in widths]
    left, right = gaps.balanced_split(sizes, range(len(steps)))
    if max(prod(sizes[i] for i in left), prod(sizes[i] for i in right)) > budget:
        return None, None
    a = _half_values([steps[i] for i in left], [widths[i] for i in left])
    bvals = _half_values([steps[i] for i in right], [widths[i] for i in right])
    lo = np.searchsorted(bvals, -a - separation, side="right")
    hi = np.searchsorted(bvals, -a + separation, side="left")
    zlo = np.searchsorted(bvals, -a, side="left")
    zhi = np.searchsorted(bvals, -a, side="right")
    bad = (hi - lo) > (zhi - zlo)
    if not bad.any():
        return False, None
    i = int(np.argmax(bad))
    window = [int(x) + int(a[i]) for x in bvals[int(lo[i]) : int(hi[i])]]
    return True, next(x for x in window if x != 0)


def _sampled_violation(
    steps: Sequence[int], widths: Sequence[int], separation: int, samples: int, seed: int
) -> Optional[int]:
    rng = np.random.Generator(np.random.Philox(key=seed))
    draws = [rng.integers(-w, w + 1, size=samples) for w in widths]
    for row in range(samples):
        value = sum(int(col[row]) * x for col, x in zip(draws, steps))
        if value != 0 and abs(value) < separation:
            return value
    return None


def check_sparseness(
    p_sparse: Gap, r_scale: int, s: int, *, budget: int = DEFAULT_SPARSE_CHECK_BUDGET, seed: int = 0
) -> Tuple[bool, SparsenessMethod, float, str]:
    """Distinct elements of s * P_sparse are at least R s apart (difference box |m_i| <= s (M'_i - M_i))"""
    kept = [(a, hi - lo) for a, lo, hi in zip(p_sparse.generators, p_sparse.lower, p_sparse.upper) if a != 0 and hi > lo]
    if not kept:
        return True, SparsenessMethod.TRIVIAL, 1.0, "single element"
    scale = lcm(*(a.denominator for a, _ in kept))
    steps = [int(a * scale) for a, _ in kept]
    widths = [s * w for _, w in kept]
    separation = r_scale * s * scale

    common = 0
    for x in steps:
        common = gcd(common, x)
    if common >= separation:
        return True, SparsenessMethod.MODULE_GCD, 1.0, f"gcd {Fraction(common, scale)}"

    found, value = _separation_violation(steps, widths, separation, budget)
    if found is not None:
        detail = f"difference {Fraction(value, scale)}" if found else ""
        return not found, SparsenessMethod.MEET_IN_THE_MIDDLE, 1.0, detail

    box = prod(2 * w + 1 for w in widths)
    logger.warning(f"Sparseness box of {box} differences too large; sampling {budget}")
    value = _sampled_violation(steps, widths, separation, budget, seed)
    detail = f"difference {Fraction(value, scale)}" if value is not None else ""
    return value is None, SparsenessMethod.SAMPLED, min(1.0, budget / box), detail


def verify_discretization(
    res: DiscretizationResult,
    p: Gap,
    s: int,
    *,
    sparse_check_budget: int = DEFAULT_SPARSE_CHECK_BUDGET,
    enumeration_volume: int = gaps.DEFAULT_FULL_ENUMERATION_VOLUME,
    seed: int = 0,
) -> DiscretizationReport:
    """Check decomposition, smallness, sparseness, covering and rank/volume of a split"""
    r_scale = res.r_scale
    vol = gaps.volume(p)
    clauses = []

    exact = len(res.decomposition) == p.rank and all(
        part.small + part.sparse == g for part, g in zip(res.decomposition, p.generators)
    )
    clauses.append(VerificationClause(name="decomposition", passed=exact))

    largest = _max_abs(res.p_small)
    clauses.append(
        VerificationClause(
            name="smallness",
            passed=largest <= Fraction(r_scale, s),
            detail=f"max |P_small| = {largest}, R/S = {Fraction(r_scale, s)}",
            margin=float(Fraction(r_scale, s) - largest),
        )
    )

    sparse_ok, method, coverage_fraction, detail = check_sparseness(
        res.p_sparse, r_scale, s, budget=sparse_check_budget, seed=seed
    )
    clauses.append(VerificationClause(name="sparseness", passed=sparse_ok, detail=f"{method.value} {detail}".strip()))

    covering_ok = exact
    covering_exhaustive = vol <= sparse_check_budget
    if exact:
        if covering_exhaustive:
            elements = (coeffs for coeffs, _ in gaps.enumerate_values(p))
        else:
            rng = np.random.Generator(np.random.Philox(key=seed + 1))
            draws = [rng.integers(lo, hi + 1, size=sparse_check_budget) for lo, hi in zip(p.lower, p.upper)]
            elements = (tuple(int(col[i]) for col in draws) for i in range(sparse_check_budget))
        limits = {"full_enumeration_volume": enumeration_volume}
        for coeffs in elements:
            small = sum((m * part.small for m, part in zip(coeffs, res.decomposition)), Fraction(0))
            sparse = sum((m * part.sparse for m, part in zip(coeffs, res.decomposition)), Fraction(0))
            if gaps.contains(res.p_small, small, **limits) is None or gaps.contains(res.p_sparse, sparse, **limits) is None:
                covering_ok = False
                break
    clauses.append(VerificationClause(name="covering", passed=covering_ok))

    ranks_ok = res.p_small.rank <= p.rank and res.p_sparse.rank <= p.rank
    volumes_ok = gaps.volume(res.p_small) <= vol and gaps.volume(res.p_sparse) <= vol
    clauses.append(
        VerificationClause(
            name="rank_volume",
            passed=ranks_ok and volumes_ok,
            detail=f"ranks {res.p_small.rank}/{res.p_sparse.rank}, volumes {gaps.volume(res.p_small)}/{gaps.volume(res.p_sparse)} of {vol}",
        )
    )
    clauses.append(
        VerificationClause(name="scale", passed=True, detail=f"R/r0 = {res.params_used.scale_ratio}")
    )

    exhaustive = method != SparsenessMethod.SAMPLED and covering_exhaustive
    if not covering_exhaustive:
        coverage_fraction = min(coverage_fraction, sparse_check_budget / vol)
    return DiscretizationReport(
        clauses=tuple(clauses),
        sparseness_method=method,
        exhaustive=exhaustive,
        coverage_fraction=coverage_fraction,
        valid=all(c.passed for c in clauses),
    )

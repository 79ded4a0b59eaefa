import logging
from fractions import Fraction
from math import factorial, lcm, log
from typing import Dict, List, Optional, Tuple, Union

from config import ToolkitSettings
from errors import DomainError, RankOverflowError, SearchBudgetError, SupportTooLargeError
from models import (
    Budget,
    CoverageRoute,
    CubeCertificate,
    CubeWitness,
    DilateCoverageReport,
    DilateCoverCertificate,
    ForwardBound,
    Gap,
    GapCertificate,
    GapMember,
    HypothesisStatus,
    InverseFailureReport,
    Multiset,
    RefinementStage,
    VerificationClause,
    VerificationReport,
    WalkParams,
)
from tools import gap as gaps
from tools.walk import concentration

logger = logging.getLogger(__name__)

AnyCertificate = Union[CubeCertificate, DilateCoverCertificate, GapCertificate]


def selection_key(value: int, multiplicity: int) -> Tuple[int, int, bool]:
    """Highest multiplicity first, then smallest |value|, then positive"""
    return (-multiplicity, abs(value), value < 0)


def _doubled(generators: List[int], bounds: List[int]) -> Gap:
    """2Q for Q = sum of Q(g_i, b_i)"""
    return Gap(
        generators=tuple(Fraction(g) for g in generators),
        lower=tuple(-2 * b for b in bounds),
        upper=tuple(2 * b for b in bounds),
    )


class InverseAgent:
    """Runs the zeroth, first and second inverse algorithms and checks their certificates"""

    def __init__(self, settings: Optional[ToolkitSettings] = None):
        self.settings = settings or ToolkitSettings()

    @property
    def _limits(self) -> Dict[str, int]:
        return {
            "max_rank": self.settings.max_gap_rank,
            "enumeration_cap": self.settings.enumeration_cap,
            "full_enumeration_volume": self.settings.full_enumeration_volume,
        }

    def _dissociated(self, word: List[int], k: int) -> bool:
        return gaps.is_k_dissociated(word, k, budget=self.settings.dissociation_budget) is True

    def hypothesis(self, v: Multiset, mu: Fraction, threshold: float, strict: bool = False) -> HypothesisStatus:
        """Status of P_mu(v) >= threshold (or > when strict); unknown past the support cap"""
        try:
            p = concentration(v, WalkParams(mu=mu), support_cap=self.settings.support_cap).probability
        except SupportTooLargeError as e:
            logger.warning(f"Hypothesis left unknown: {e}")
            return HypothesisStatus.UNKNOWN
        ok = p > threshold if strict else p >= threshold
        return HypothesisStatus.HOLDS if ok else HypothesisStatus.FAILS

    # ------------------------------------------------------------------ zeroth

    def zeroth_inverse(self, v: Multiset) -> CubeCertificate:
        """Greedy maximal 1-dissociated word w with every element of v placed in S(w) or Q(w, 1)"""
        if v.size == 0:
            raise DomainError("zeroth inverse needs a nonempty multiset")

        zeros = v.multiplicity(0)
        order = sorted(
            (x for x in v.nonzero().values()),
            key=lambda x: (-abs(x), x < 0),
        )
        word: List[int] = []
        remaining = list(order)
        grew = True
        while grew:
            grew = False
            left = []
            for x in remaining:
                if self._dissociated(word + [x], 1):
                    if len(word) == self.settings.cube_max:
                        raise SearchBudgetError(
                            f"dissociated word exceeds {self.settings.cube_max} elements",
                            size=len(word) + 1,
                            limit=self.settings.cube_max,
                        )
                    word.append(x)
                    grew = True
                else:
                    left.append(x)
            remaining = left
        logger.info(f"Zeroth inverse: |w| = {len(word)} from n = {v.size} ({zeros} zeros)")

        in_word = Multiset.from_values(word)
        rest = v.nonzero().minus(in_word)
        witnesses: List[CubeWitness] = []
        for value, multiplicity in in_word.entries:
            j = word.index(value)
            unit = tuple(1 if i == j else 0 for i in range(len(word)))
            witnesses.append(CubeWitness(value=value, multiplicity=multiplicity, in_word=True, coefficients=unit))
        for value, multiplicity in rest.entries:
            witnesses.append(
                CubeWitness(value=value, multiplicity=multiplicity, coefficients=self._cube_witness(word, value))
            )

        status = self.hypothesis(v, Fraction(1), 2.0 ** (-len(word) - 1), strict=True)
        return CubeCertificate(word=tuple(word), zeros=zeros, witnesses=tuple(witnesses), hypothesis=status)

    def _cube_witness(self, word: List[int], value: int) -> Tuple[int, ...]:
        signs = gaps.cube_contains(word, value, cube_max=self.settings.cube_max)
        if signs is not None:
            return signs
        # w is 1-dissociated and w + [value] is not, so the relation has a unit last coefficient
        relation = gaps.is_k_dissociated(word + [value], 1, budget=self.settings.dissociation_budget)
        if relation is True:
            raise DomainError(f"{value} extends the word; greedy scan was not maximal")
        *head, last = relation.coefficients
        return tuple(-m * last for m in head)

    # ------------------------------------------------------------------ first

    def first_inverse(self, v: Multiset, p: WalkParams, d: int, k: int) -> DilateCoverCertificate:
        """
        Grow a k-dissociated word until fewer than k^2 elements extend it.

        Raises RankOverflowError when the word would reach length d.
        """
        if k < 2 or d < 1:
            raise DomainError("first inverse needs k >= 2 and d >= 1")

        nonzero = v.nonzero()
        word: List[int] = []
        while True:
            extending = [
                (value, multiplicity)
                for value, multiplicity in nonzero.entries
                if self._dissociated(word + [value], k)
            ]
            count = sum(m for _, m in extending)
            logger.debug(f"First inverse: r = {len(word)}, {count} extending elements")
            if count < k * k:
                break
            if len(word) + 1 >= d:
                raise RankOverflowError(
                    f"k-dissociated word would reach length {d} ({count} extending elements)",
                    word=tuple(word),
                    extending=count,
                )
            value, _ = min(extending, key=lambda e: selection_key(*e))
            word.append(value)
            logger.info(f"First inverse: appended {value}, r = {len(word)}")

        exceptional = Multiset(entries=tuple(extending))
        coverage = gaps.dilate_coverage(v.minus(exceptional), word, k, **self._limits)
        if coverage.exceptional:
            logger.warning(f"{coverage.exceptional} non-extending elements left uncovered")
            stray = Multiset(entries=tuple((e.value, e.multiplicity) for e in coverage.entries if e.tau is None))
            exceptional = exceptional.concat(stray)
            coverage = DilateCoverageReport(
                entries=tuple(e for e in coverage.entries if e.tau is not None),
                covered=coverage.covered,
                exceptional=0,
            )

        status = self.hypothesis(v, p.mu, self.settings.inverse_c * k ** (-d))
        logger.info(f"First inverse: halted at r = {len(word)} with {exceptional.size} exceptional")
        return DilateCoverCertificate(
            word=tuple(word),
            k=k,
            d=d,
            mu=p.mu,
            exceptional=exceptional,
            coverage=coverage,
            hypothesis=status,
        )

    # ------------------------------------------------------------------ second

    def second_inverse(
        self,
        v: Multiset,
        p: WalkParams,
        d: int,
        k: int,
        eps: Fraction,
        torsion_k: Optional[int] = None,
    ) -> Union[GapCertificate, InverseFailureReport]:
        K = torsion_k or self.settings.torsion_k
        eps = Fraction(eps)
        if k < self.settings.k0:
            raise DomainError(f"second inverse needs k >= {self.settings.k0}")
        if K < 2:
            raise DomainError("torsion threshold K must be at least 2")

        try:
            first = self.first_inverse(v, p, d, k)
        except RankOverflowError as e:
            return InverseFailureReport(reason="rank-overflow", word=e.word, error_message=str(e))

        word = list(first.word)
        r = len(word)
        status = first.hypothesis
        if r == 0:
            logger.info("Second inverse: empty word, every nonzero element is exceptional")
            zero = v.multiplicity(0)
            members = (GapMember(value=0, multiplicity=zero, route=CoverageRoute.ZERO, coefficients=()),) if zero else ()
            return GapCertificate(
                word=(),
                q=Gap(),
                s=1,
                dilation=1,
                exceptional=v.nonzero(),
                members=members,
                k=k,
                d=d,
                torsion_k=K,
                eps=eps,
                mu=p.mu,
                hypothesis=status,
            )

        dilate_routes = {e.value: (e.tau, e.coefficients) for e in first.coverage.entries if e.tau is not None}
        current = v.nonzero().minus(first.exceptional.nonzero())
        generators: List[int] = list(word)
        bounds: List[int] = [k * k] * r
        coordinates: List[Tuple[Fraction, ...]] = []
        stages: List[RefinementStage] = []
        l_bound = l_effective = k * k
        tau_product = 1
        max_stages = (d + 1) * log(k) / log(K) + 1

        while True:
            doubled = _doubled(generators, bounds)
            high = [
                (value, multiplicity)
                for value, multiplicity in current.entries
                if gaps.torsion(value, doubled, K - 1, **self._limits).tau is None
            ]
            count = sum(m for _, m in high)
            logger.debug(f"Second inverse: stage {len(stages)}, {count} high-torsion elements")
            if count < k * k:
                break
            if len(stages) + 1 > max_stages:
                return InverseFailureReport(
                    reason="iteration-guard",
                    word=tuple(word),
                    trace=tuple(stages),
                    error_message=f"more than {max_stages:.2f} refinement stages",
                )

            ordered = sorted(high, key=lambda e: selection_key(*e))
            removed: Dict[int, int] = {}
            need = k * k
            for value, multiplicity in ordered:
                take = min(need, multiplicity)
                removed[value] = take
                need -= take
                if need == 0:
                    break
            element = ordered[0][0]
            found = gaps.torsion(element, doubled, k, **self._limits)
            if found.tau is None:
                return InverseFailureReport(
                    reason="torsion-bound",
                    word=tuple(word),
                    trace=tuple(stages),
                    error_message=f"torsion of {element} exceeds k = {k}",
                )
            tau = found.tau
            coords = self._word_coordinates(found.witness.coefficients, r, coordinates, tau)

            removed_set = Multiset.from_counts(removed)
            current = current.minus(removed_set)
            generators.append(element)
            bounds.append(tau * tau)
            coordinates.append(coords)
            tau_product *= tau
            l_bound *= tau + tau * tau
            l_effective *= tau + 2 * tau * tau
            stages.append(
                RefinementStage(
                    index=len(stages) + 1,
                    element=element,
                    tau=tau,
                    removed=removed_set,
                    coefficients=found.witness.coefficients,
                    word_coordinates=coords,
                    l_bound=l_bound,
                    l_effective=l_effective,
                )
            )
            logger.info(f"Second inverse: stage {len(stages)} added {element} with torsion {tau}")

        final = _doubled(generators, bounds)

        torsion_routes: Dict[int, Tuple[int, Tuple[Fraction, ...]]] = {}
        for value in v.nonzero().distinct:
            found = gaps.torsion(value, final, K, **self._limits)
            if found.tau is not None:
                coords = self._word_coordinates(found.witness.coefficients, r, coordinates, found.tau)
                torsion_routes[value] = (found.tau, coords)

        if self.settings.second_inverse_dilation == "factorial":
            dilation = factorial(K)
        else:
            dilation = lcm(1, *(t for t, _ in torsion_routes.values()))
        s = dilation * tau_product
        bound = 2 * dilation * l_effective

        members: List[GapMember] = []
        exceptional: Dict[int, int] = {}
        zero = v.multiplicity(0)
        if zero:
            members.append(GapMember(value=0, multiplicity=zero, route=CoverageRoute.ZERO, coefficients=(0,) * r))
        for value, multiplicity in v.nonzero().entries:
            scaled = None
            route = None
            if value in torsion_routes:
                scaled = tuple(c * s for c in torsion_routes[value][1])
                route = CoverageRoute.TORSION
            elif value in dilate_routes:
                tau_v, a = dilate_routes[value]
                candidate = tuple(Fraction(ai, tau_v) * s for ai in a)
                if all(c.denominator == 1 for c in candidate):
                    scaled = candidate
                    route = CoverageRoute.DILATE
            if scaled is None or any(c.denominator != 1 for c in scaled):
                exceptional[value] = multiplicity
                continue
            coefficients = tuple(int(c) for c in scaled)
            if any(abs(c) > bound for c in coefficients):
                logger.warning(f"Widening final bound to fit {value}")
                bound = max(abs(c) for c in coefficients)
            members.append(GapMember(value=value, multiplicity=multiplicity, route=route, coefficients=coefficients))

        q = gaps.symmetric_gap([Fraction(w, s) for w in word], bound)
        logger.info(
            f"Second inverse: D = {len(stages)}, s = {s}, bound = {bound}, "
            f"{sum(exceptional.values())} exceptional"
        )
        return GapCertificate(
            word=tuple(word),
            q=q,
            s=s,
            dilation=dilation,
            exceptional=Multiset.from_counts(exceptional),
            members=tuple(members),
            trace=tuple(stages),
            k=k,
            d=d,
            torsion_k=K,
            eps=eps,
            mu=p.mu,
            hypothesis=status,
        )

    @staticmethod
    def _word_coordinates(
        coefficients: Tuple[int, ...],
        r: int,
        stage_coordinates: List[Tuple[Fraction, ...]],
        tau: int,
    ) -> Tuple[Fraction, ...]:
        """Rational w-coordinates of x given tau * x = sum over word and refinement generators"""
        coords = [Fraction(c) for c in coefficients[:r]]
        for beta, stage in zip(coefficients[r:], stage_coordinates):
            for i in range(r):
                coords[i] += beta * stage[i]
        return tuple(c / tau for c in coords)

    # ------------------------------------------------------------------ forward

    def forward_bound(self, v: Multiset, g: Gap, p: WalkParams) -> ForwardBound:
        """Exact check of P_mu(v) >= n^-d V^-1 for v inside a symmetric progression"""
        if not g.is_symmetric:
            raise DomainError("forward bound needs a symmetric progression")
        for value in v.distinct:
            if gaps.contains(g, value, **self._limits) is None:
                raise DomainError(f"{value} is not an element of the progression")
        probability = concentration(v, p, support_cap=self.settings.support_cap).probability
        bound = Fraction(1, max(v.size, 1) ** g.rank * gaps.volume(g))
        return ForwardBound(probability=probability, bound=bound, holds=probability >= bound)

    # ------------------------------------------------------------------ verify

    def verify_certificate(self, cert: AnyCertificate, v: Multiset, budget: Budget) -> VerificationReport:
        if isinstance(cert, CubeCertificate):
            clauses, status = self._verify_cube(cert, v, budget)
        elif isinstance(cert, DilateCoverCertificate):
            clauses, status = self._verify_dilate(cert, v, budget)
        elif isinstance(cert, GapCertificate):
            clauses, status = self._verify_gap(cert, v, budget)
        else:
            raise DomainError(f"unknown certificate type {type(cert).__name__}")

        unconditional = all(c.passed for c in clauses if not c.conditional)
        conditional = all(c.passed for c in clauses if c.conditional)
        valid = unconditional and (conditional or status != HypothesisStatus.HOLDS)
        if not valid:
            failed = [c.name for c in clauses if not c.passed]
            logger.warning(f"{cert.kind} certificate failed clauses: {failed}")
        return VerificationReport(kind=cert.kind, clauses=tuple(clauses), hypothesis=status, valid=valid)

    def _verify_cube(self, cert: CubeCertificate, v: Multiset, budget: Budget):
        word = list(cert.word)
        clauses = [
            VerificationClause(name="word_in_v", passed=v.contains_multiset(Multiset.from_values(word))),
            VerificationClause(name="dissociated", passed=self._dissociated(word, 1) if word else True),
        ]

        bad = []
        for w in cert.witnesses:
            if len(w.coefficients) != len(word) or any(c not in (-1, 0, 1) for c in w.coefficients):
                bad.append(w.value)
                continue
            if w.in_word:
                ones = [i for i, c in enumerate(w.coefficients) if c]
                ok = len(ones) == 1 and w.coefficients[ones[0]] == 1 and word[ones[0]] == w.value
            else:
                ok = sum(c * x for c, x in zip(w.coefficients, word)) == w.value
            if not ok:
                bad.append(w.value)
        clauses.append(VerificationClause(name="witnesses", passed=not bad, detail=f"bad: {bad}" if bad else ""))

        placed = Multiset(entries=tuple((w.value, w.multiplicity) for w in cert.witnesses) + ((0, cert.zeros),))
        clauses.append(VerificationClause(name="coverage", passed=placed == v))

        status = self.hypothesis(v, Fraction(1), 2.0 ** (-budget.d - 1), strict=True)
        clauses.append(
            VerificationClause(
                name="size",
                passed=len(word) <= budget.d,
                conditional=True,
                detail=f"|w| = {len(word)}, d = {budget.d}",
                margin=float(budget.d - len(word)),
            )
        )
        return clauses, status

    def _verify_dilate(self, cert: DilateCoverCertificate, v: Multiset, budget: Budget):
        word = list(cert.word)
        clauses = [
            VerificationClause(name="word_in_v", passed=v.contains_multiset(Multiset.from_values(word))),
            VerificationClause(name="k_dissociated", passed=self._dissociated(word, cert.k) if word else True),
        ]

        bad = []
        for e in cert.coverage.entries:
            if e.tau is None or e.coefficients is None or len(e.coefficients) != len(word):
                bad.append(e.value)
                continue
            ok = (
                1 <= e.tau <= cert.k
                and all(abs(c) <= cert.k for c in e.coefficients)
                and e.tau * e.value == sum(c * x for c, x in zip(e.coefficients, word))
            )
            if not ok:
                bad.append(e.value)
        clauses.append(VerificationClause(name="witnesses", passed=not bad, detail=f"bad: {bad}" if bad else ""))

        covered = Multiset(entries=tuple((e.value, e.multiplicity) for e in cert.coverage.entries))
        clauses.append(VerificationClause(name="partition", passed=covered.concat(cert.exceptional) == v))

        status = self.hypothesis(v, cert.mu, self.settings.inverse_c * budget.k ** (-budget.d))
        clauses.append(
            VerificationClause(
                name="rank",
                passed=len(word) <= budget.d - 1,
                conditional=True,
                detail=f"r = {len(word)}",
                margin=float(budget.d - 1 - len(word)),
            )
        )
        clauses.append(
            VerificationClause(
                name="exceptional",
                passed=cert.exceptional.size <= budget.k**2,
                conditional=True,
                detail=f"{cert.exceptional.size} of at most {budget.k ** 2}",
                margin=float(budget.k**2 - cert.exceptional.size),
            )
        )
        return clauses, status

    def _verify_gap(self, cert: GapCertificate, v: Multiset, budget: Budget):
        q = cert.q
        bad = [
            m.value
            for m in cert.members
            if not (gaps.in_box(q, m.coefficients) and gaps.evaluate(q, m.coefficients) == m.value)
        ]
        members = Multiset(entries=tuple((m.value, m.multiplicity) for m in cert.members))
        generator_values = [cert.s * g for g in q.generators]
        clauses = [
            VerificationClause(name="members", passed=not bad, detail=f"bad: {bad}" if bad else ""),
            VerificationClause(name="partition", passed=members.concat(cert.exceptional) == v),
            VerificationClause(
                name="generators",
                passed=cert.s > 0
                and all(g.denominator == 1 and v.multiplicity(int(g)) > 0 for g in generator_values),
            ),
        ]

        d, k, eps = budget.d, budget.k, float(budget.eps)
        log_k = log(k)
        vol = gaps.volume(q)
        clauses.extend(
            [
                VerificationClause(
                    name="rank",
                    passed=q.rank <= d - 1,
                    conditional=True,
                    detail=f"rank {q.rank}",
                    margin=float(d - 1 - q.rank),
                ),
                VerificationClause(
                    name="volume",
                    passed=log(vol) <= (2 * (d * d - 1) + eps) * log_k,
                    conditional=True,
                    detail=f"log volume {log(vol):.3f} vs {(2 * (d * d - 1) + eps) * log_k:.3f}",
                    margin=(2 * (d * d - 1) + eps) * log_k - log(vol),
                ),
                VerificationClause(
                    name="exceptional",
                    passed=cert.exceptional.size <= eps * k * k * log_k,
                    conditional=True,
                    detail=f"{cert.exceptional.size} vs {eps * k * k * log_k:.2f}",
                    margin=eps * k * k * log_k - cert.exceptional.size,
                ),
                VerificationClause(
                    name="dilation",
                    passed=log(cert.s) <= (d + eps) * log_k,
                    conditional=True,
                    detail=f"s = {cert.s}",
                    margin=(d + eps) * log_k - log(cert.s),
                ),
            ]
        )
        status = self.hypothesis(v, cert.mu, self.settings.inverse_c * k ** (-d))
        return clauses, status

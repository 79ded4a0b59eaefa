import random
from fractions import Fraction

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from agents.inverse_agent import InverseAgent, selection_key
from config import ToolkitSettings
from errors import DomainError, RankOverflowError
from models import (
    Budget,
    CoverageRoute,
    DilateCoverageReport,
    HypothesisStatus,
    InverseFailureReport,
    Multiset,
    WalkParams,
)
from tools.gap import contains, evaluate, symmetric_gap, volume


@pytest.fixture
def agent(settings) -> InverseAgent:
    return InverseAgent(settings)


def test_selection_key_order():
    entries = [(5, 2), (-3, 4), (3, 4), (1, 1)]
    assert sorted(entries, key=lambda e: selection_key(*e)) == [(3, 4), (-3, 4), (5, 2), (1, 1)]


class TestZerothInverse:
    def test_repeated_value(self, agent):
        cert = agent.zeroth_inverse(Multiset.from_values([5, 5, 5]))
        assert cert.word == (5,)
        by_value = {(w.value, w.in_word): w for w in cert.witnesses}
        assert by_value[(5, True)].coefficients == (1,)
        assert by_value[(5, False)].coefficients == (1,)
        assert by_value[(5, False)].multiplicity == 2

    def test_dissociated_pair(self, agent):
        cert = agent.zeroth_inverse(Multiset.from_values([1, 2]))
        assert sorted(cert.word) == [1, 2]
        assert all(w.in_word for w in cert.witnesses)

    def test_colliding_cube_sums_are_not_appended(self, agent):
        cert = agent.zeroth_inverse(Multiset.from_values([3, 1, 1]))
        assert cert.word == (3, 1)
        extra = next(w for w in cert.witnesses if not w.in_word)
        assert extra.value == 1
        assert sum(c * x for c, x in zip(extra.coefficients, cert.word)) == 1

    def test_zeros_reported_separately(self, agent):
        cert = agent.zeroth_inverse(Multiset.from_values([0, 0, 4]))
        assert cert.zeros == 2
        assert cert.word == (4,)

    def test_empty_rejected(self, agent):
        with pytest.raises(DomainError):
            agent.zeroth_inverse(Multiset())

    @pytest.mark.parametrize(
        "values",
        [[5, 5, 5], [1, 2], [3, 1, 1], [0, 2, 2, 4, 6], [1, 1, 1, 1, 2, 3], [7, -7, 14, 21, 0]],
    )
    def test_certificates_verify(self, agent, values):
        v = Multiset.from_values(values)
        cert = agent.zeroth_inverse(v)
        report = agent.verify_certificate(cert, v, Budget(d=len(cert.word), k=1))
        assert report.valid
        assert all(c.passed for c in report.clauses)

    def test_size_bound_under_hypothesis(self, agent):
        # P_1(1^6) = 5/16 > 2^-3, so the word has at most d = 2 elements
        v = Multiset.from_counts({1: 6})
        cert = agent.zeroth_inverse(v)
        report = agent.verify_certificate(cert, v, Budget(d=2, k=1))
        assert report.hypothesis == HypothesisStatus.HOLDS
        assert report.clause("size").passed
        assert report.clause("size").margin == 2 - len(cert.word)

    def test_tampered_witness(self, agent):
        v = Multiset.from_values([3, 1, 1])
        cert = agent.zeroth_inverse(v)
        broken = tuple(
            w.model_copy(update={"coefficients": (1, 1)}) if not w.in_word else w for w in cert.witnesses
        )
        report = agent.verify_certificate(cert.model_copy(update={"witnesses": broken}), v, Budget(d=2, k=1))
        assert not report.clause("witnesses").passed
        assert report.clause("coverage").passed
        assert not report.valid


class TestFirstInverse:
    def test_repeated_ones(self, agent, sign_walk):
        v = Multiset.from_counts({1: 100})
        cert = agent.first_inverse(v, sign_walk, 2, 10)
        assert cert.word == (1,)
        assert cert.exceptional.size == 0
        assert all(entry.tau == 1 for entry in cert.coverage.entries)
        assert agent.verify_certificate(cert, v, Budget(d=2, k=10)).valid

    def test_interval(self, agent, sign_walk):
        v = Multiset.from_values(range(1, 51))
        cert = agent.first_inverse(v, sign_walk, 2, 10)
        assert len(cert.word) <= 1
        assert cert.exceptional.size <= 100
        report = agent.verify_certificate(cert, v, Budget(d=2, k=10))
        assert report.valid
        assert report.clause("exceptional").passed

    def test_generic_integers_overflow(self, agent, sign_walk):
        rng = random.Random(40)
        values = set()
        while len(values) < 40:
            values.add(rng.getrandbits(40) | 1 << 39)
        with pytest.raises(RankOverflowError) as info:
            agent.first_inverse(Multiset.from_values(values), sign_walk, 2, 4)
        assert len(info.value.word) == 1

    def test_parameter_checks(self, agent, sign_walk):
        with pytest.raises(DomainError):
            agent.first_inverse(Multiset.from_values([1]), sign_walk, 2, 1)

    def test_too_many_exceptional(self, agent, sign_walk):
        v = Multiset.from_values(range(1, 6))
        cert = agent.first_inverse(v, sign_walk, 2, 2)
        assert cert.word == (1,)
        assert cert.exceptional == Multiset.from_values([3, 4, 5])
        tampered = cert.model_copy(
            update={
                "exceptional": v,
                "coverage": DilateCoverageReport(entries=(), covered=0, exceptional=0),
            }
        )
        report = agent.verify_certificate(tampered, v, Budget(d=2, k=2))
        assert not report.clause("exceptional").passed
        assert report.clause("exceptional").margin == -1.0
        assert report.clause("partition").passed
        assert report.clause("witnesses").passed

    def test_partition_mismatch(self, agent, sign_walk):
        v = Multiset.from_counts({1: 100})
        cert = agent.first_inverse(v, sign_walk, 2, 10)
        report = agent.verify_certificate(cert, v.concat(Multiset.from_values([2])), Budget(d=2, k=10))
        assert not report.clause("partition").passed
        assert not report.valid


class TestSecondInverse:
    def test_progression_sample(self, agent, sign_walk, sevens):
        cert = agent.second_inverse(sevens, sign_walk, 2, 14, Fraction(1, 2), 8)
        assert cert.kind == "gap"
        assert cert.q.rank <= 1
        assert cert.exceptional.size == 0
        assert cert.trace == ()
        assert cert.s == 1
        assert cert.q == symmetric_gap([7], 392)
        assert agent.verify_certificate(cert, sevens, Budget(d=2, k=14)).valid

    def test_refinement_stage(self, agent, sign_walk, nine_and_one):
        cert = agent.second_inverse(nine_and_one, sign_walk, 2, 14, Fraction(1, 2), 8)
        assert cert.word == (9,)
        (stage,) = cert.trace
        assert (stage.element, stage.tau) == (1, 9)
        assert stage.removed == Multiset.from_counts({1: 196})
        assert (stage.l_bound, stage.l_effective) == (17640, 33516)
        assert cert.s == 9
        assert cert.q == symmetric_gap([1], 67032)
        members = {m.value: m for m in cert.members}
        assert members[9].coefficients == (9,)
        assert members[1].coefficients == (1,)
        assert cert.exceptional.size == 0
        report = agent.verify_certificate(cert, nine_and_one, Budget(d=2, k=14))
        assert report.valid
        assert all(c.passed for c in report.clauses)

    def test_factorial_dilation(self, sign_walk, sevens):
        agent = InverseAgent(ToolkitSettings(second_inverse_dilation="factorial"))
        cert = agent.second_inverse(sevens, sign_walk, 2, 14, Fraction(1, 2), 8)
        assert cert.dilation == cert.s == 40320
        assert cert.q.upper == (2 * 40320 * 196,)
        assert cert.q.generators == (Fraction(7, 40320),)
        report = agent.verify_certificate(cert, sevens, Budget(d=2, k=14))
        assert report.clause("members").passed
        assert report.clause("partition").passed

    def test_interval_is_mostly_exceptional(self, agent, sign_walk):
        v = Multiset.from_values(range(1, 61))
        cert = agent.second_inverse(v, sign_walk, 2, 12, Fraction(1, 2), 8)
        assert cert.q.rank <= 1
        report = agent.verify_certificate(cert, v, Budget(d=2, k=12))
        assert report.valid
        assert report.clause("exceptional").passed

    def test_zero_members(self, agent, sign_walk, sevens):
        cert = agent.second_inverse(sevens, sign_walk, 2, 14, Fraction(1, 2), 8)
        zero = next(m for m in cert.members if m.value == 0)
        assert zero.route == CoverageRoute.ZERO
        assert zero.multiplicity == 4

    def test_rank_overflow_is_reported(self, agent, sign_walk):
        rng = random.Random(7)
        values = {rng.getrandbits(40) | 1 << 39 for _ in range(300)}
        result = agent.second_inverse(Multiset.from_values(values), sign_walk, 2, 8, Fraction(1, 2), 8)
        assert isinstance(result, InverseFailureReport)
        assert result.reason == "rank-overflow"
        assert not result.success

    def test_small_k_rejected(self, agent, sign_walk):
        with pytest.raises(DomainError):
            agent.second_inverse(Multiset.from_values([1]), sign_walk, 2, 4, Fraction(1, 2))

    def test_corrupted_member(self, agent, sign_walk, nine_and_one):
        cert = agent.second_inverse(nine_and_one, sign_walk, 2, 14, Fraction(1, 2), 8)
        members = tuple(
            m.model_copy(update={"coefficients": (2,)}) if m.value == 1 else m for m in cert.members
        )
        report = agent.verify_certificate(cert.model_copy(update={"members": members}), nine_and_one, Budget(d=2, k=14))
        assert not report.clause("members").passed
        for name in ("partition", "generators", "rank", "volume", "exceptional", "dilation"):
            assert report.clause(name).passed
        assert not report.valid


class TestStructuredCorpus:
    @pytest.mark.parametrize(
        "counts",
        [
            {3 * a: 6 for a in range(1, 11)},
            {1: 150, 2: 60, 3: 20},
            {5: 120, 10: 80, 15: 40, -5: 30},
            {2 * a + 10 * b: 3 for a in range(-3, 4) for b in range(-2, 3)},
            {4: 250, 6: 200},
        ],
    )
    def test_second_inverse_certificates_verify(self, agent, sign_walk, counts):
        v = Multiset.from_counts(counts)
        result = agent.second_inverse(v, sign_walk, 3, 8, Fraction(1, 2), 8)
        if isinstance(result, InverseFailureReport):
            pytest.skip(f"no certificate: {result.reason}")
        report = agent.verify_certificate(result, v, Budget(d=3, k=8))
        assert report.valid
        for clause in report.clauses:
            if not clause.conditional:
                assert clause.passed, clause.name
            if clause.margin is not None:
                assert (clause.margin >= 0) == clause.passed, clause.name

    @pytest.mark.parametrize(
        "counts",
        [{1: 100}, {2: 70, 4: 50}, {3 * a: 8 for a in range(-6, 7)}, {1: 40, 1000: 40}],
    )
    def test_first_inverse_certificates_verify(self, agent, sign_walk, counts):
        v = Multiset.from_counts(counts)
        cert = agent.first_inverse(v, sign_walk, 3, 4)
        report = agent.verify_certificate(cert, v, Budget(d=3, k=4))
        assert report.valid


class TestForwardBound:
    def test_example(self, agent, sign_walk):
        g = symmetric_gap([1, 10], 2)
        v = Multiset.from_values([1, 10, 12, -21])
        check = agent.forward_bound(v, g, sign_walk)
        assert check.holds
        assert check.bound == Fraction(1, 4**2 * volume(g))

    def test_requires_membership(self, agent, sign_walk):
        with pytest.raises(DomainError):
            agent.forward_bound(Multiset.from_values([3]), symmetric_gap([2], 1), sign_walk)

    @hsettings(max_examples=100, deadline=None)
    @given(
        st.lists(st.integers(1, 20), min_size=1, max_size=3),
        st.integers(1, 3),
        st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(1, 4)]),
        st.data(),
    )
    def test_progression_elements_are_concentrated(self, generators, bound, mu, data):
        assert_forward_bound(generators, bound, mu, data.draw(st.integers(1, 8)), data)

    @pytest.mark.slow
    @hsettings(max_examples=40, deadline=None)
    @given(
        st.lists(st.integers(1, 20), min_size=1, max_size=3),
        st.integers(1, 3),
        st.sampled_from([Fraction(1), Fraction(1, 2), Fraction(1, 4)]),
        st.data(),
    )
    def test_long_words_are_concentrated(self, generators, bound, mu, data):
        assert_forward_bound(generators, bound, mu, data.draw(st.integers(9, 40)), data)


def assert_forward_bound(generators, bound, mu, n, data):
    g = symmetric_gap(generators, bound)
    if volume(g) > 200:
        g = symmetric_gap(generators, 1)
    coeffs = data.draw(
        st.lists(st.lists(st.integers(-g.upper[0], g.upper[0]), min_size=g.rank, max_size=g.rank), min_size=n, max_size=n)
    )
    v = Multiset.from_values(int(evaluate(g, c)) for c in coeffs)
    assert all(contains(g, x) is not None for x in v.distinct)
    assert InverseAgent().forward_bound(v, g, WalkParams(mu=mu)).holds

from fractions import Fraction
from itertools import product
from math import comb, log2

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from errors import DomainError, SupportTooLargeError
from models import Multiset, WalkParams
from tools.walk import (
    concentration,
    equal_steps_atom,
    equal_steps_distribution,
    erdos_extremal,
    exact_distribution,
    fourier_estimate,
    halasz_factor,
    halasz_profile,
    is_separated,
    separated_set_mass,
)

MUS = [Fraction(1), Fraction(1, 2), Fraction(1, 4)]
LAZY_MUS = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 3)]

small_values = st.lists(st.integers(-5, 5), min_size=0, max_size=6)
nonzero_values = st.lists(st.integers(-12, 12).filter(bool), min_size=1, max_size=8)


def brute_force(values, mu):
    law = {}
    steps = [(eta, w) for eta, w in ((-1, mu / 2), (0, 1 - mu), (1, mu / 2)) if w]
    for pattern in product(steps, repeat=len(values)):
        weight = Fraction(1)
        total = 0
        for (eta, w), x in zip(pattern, values):
            weight *= w
            total += eta * x
        law[total] = law.get(total, 0) + weight
    return law


def p(v, mu=1):
    return concentration(Multiset.from_values(v), WalkParams.of(mu)).probability


class TestExactDistribution:
    def test_empty(self, sign_walk):
        assert exact_distribution(Multiset(), sign_walk).as_dict() == {0: 1}

    def test_one_two_three(self, one_two_three, sign_walk):
        law = exact_distribution(one_two_three, sign_walk).as_dict()
        eighth = Fraction(1, 8)
        assert law == {-6: eighth, -4: eighth, -2: eighth, 0: Fraction(1, 4), 2: eighth, 4: eighth, 6: eighth}

    def test_single_lazy_step(self, lazy_walk):
        law = exact_distribution(Multiset.from_values([1]), lazy_walk).as_dict()
        assert law == {-1: Fraction(1, 4), 0: Fraction(1, 2), 1: Fraction(1, 4)}

    def test_zero_elements_do_not_move(self, sign_walk):
        assert exact_distribution(Multiset.from_values([0, 0, 2]), sign_walk).as_dict() == {
            -2: Fraction(1, 2),
            2: Fraction(1, 2),
        }

    def test_support_cap(self, sign_walk):
        with pytest.raises(SupportTooLargeError) as info:
            exact_distribution(Multiset.from_values([10**6, 10**6]), sign_walk, support_cap=1000)
        assert info.value.limit == 1000

    @hsettings(max_examples=80, deadline=None)
    @given(small_values, st.sampled_from(MUS))
    def test_matches_enumeration(self, values, mu):
        assert exact_distribution(Multiset.from_values(values), WalkParams(mu=mu)).as_dict() == brute_force(values, mu)

    @pytest.mark.slow
    @hsettings(max_examples=150, deadline=None)
    @given(st.lists(st.integers(-5, 5), max_size=10), st.sampled_from(MUS))
    def test_matches_enumeration_larger(self, values, mu):
        assert exact_distribution(Multiset.from_values(values), WalkParams(mu=mu)).as_dict() == brute_force(values, mu)


class TestConcentration:
    def test_two_ones(self, sign_walk):
        result = concentration(Multiset.from_values([1, 1]), sign_walk)
        assert (result.best_atom, result.probability) == (0, Fraction(1, 2))

    def test_one_two_three(self, one_two_three, sign_walk):
        result = concentration(one_two_three, sign_walk)
        assert (result.best_atom, result.probability) == (0, Fraction(1, 4))

    @pytest.mark.parametrize("mu", MUS)
    def test_empty(self, mu):
        result = concentration(Multiset(), WalkParams(mu=mu))
        assert (result.best_atom, result.probability) == (0, 1)

    def test_tie_prefers_nonnegative(self, sign_walk):
        # +-1 each with probability 1/2
        assert concentration(Multiset.from_values([1]), sign_walk).best_atom == 1

    def test_serializes_with_short_keys(self, one_two_three, sign_walk):
        dumped = concentration(one_two_three, sign_walk).model_dump(mode="json", by_alias=True)
        assert dumped == {"a": 0, "p": "1/4"}

    @hsettings(max_examples=60, deadline=None)
    @given(small_values, st.randoms())
    def test_order_invariance(self, values, random):
        shuffled = list(values)
        random.shuffle(shuffled)
        assert p(values) == p(shuffled)

    @hsettings(max_examples=60, deadline=None)
    @given(small_values, st.sampled_from(LAZY_MUS))
    def test_argmax_at_zero_for_lazy_walks(self, values, mu):
        assert concentration(Multiset.from_values(values), WalkParams(mu=mu)).best_atom == 0

    @hsettings(max_examples=200, deadline=None)
    @given(nonzero_values)
    def test_equal_steps_dominate(self, values):
        assert p(values) <= erdos_extremal(len(values))


class TestWordCalculus:
    @hsettings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-5, 5), max_size=4), st.lists(st.integers(-5, 5), max_size=4), st.sampled_from(MUS))
    def test_product_inequality(self, v, w, mu):
        pv, pw, pvw = p(v, mu), p(w, mu), p(v + w, mu)
        assert pv * pw <= pvw <= pv

    @hsettings(max_examples=80, deadline=None)
    @given(st.lists(st.integers(-5, 5), max_size=5), st.sampled_from([Fraction(1), Fraction(1, 2)]))
    def test_rescaling_inequality(self, v, mu):
        assert p(v, mu) <= p(v, mu / 4)

    @hsettings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-5, 5), max_size=3), st.sampled_from(LAZY_MUS), st.integers(2, 3))
    def test_repetition_inequality(self, v, mu, times):
        word = Multiset.from_values(v)
        lhs = concentration(word, WalkParams(mu=mu)).probability
        rhs = concentration(word.power(times), WalkParams(mu=mu / times)).probability
        assert lhs <= rhs

    @hsettings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(-4, 4), max_size=2),
        st.lists(st.lists(st.integers(-4, 4), min_size=1, max_size=2), min_size=1, max_size=3),
        st.sampled_from(LAZY_MUS),
    )
    def test_some_word_dominates_when_repeated(self, v, words, mu):
        base = Multiset.from_values(v)
        family = [Multiset.from_values(w) for w in words]
        joined = base
        for w in family:
            joined = joined.concat(w)
        walk = WalkParams(mu=mu)
        lhs = concentration(joined, walk).probability
        assert any(lhs <= concentration(base.concat(w.power(len(family))), walk).probability for w in family)

    def test_concat_and_power(self):
        v = Multiset.from_values([1, 2])
        assert v.concat(v) == v.power(2) == Multiset.from_counts({1: 2, 2: 2})


class TestEqualSteps:
    def test_examples(self):
        assert equal_steps_atom(2, WalkParams.of("1/2"), 0) == Fraction(3, 8)
        assert equal_steps_atom(3, WalkParams.of(1), 0) == 0
        assert equal_steps_atom(4, WalkParams.of(1), 0) == Fraction(3, 8)

    def test_negative_length(self, sign_walk):
        with pytest.raises(DomainError):
            equal_steps_atom(-1, sign_walk, 0)

    @pytest.mark.parametrize("mu", [Fraction(1), Fraction(1, 2)])
    def test_closed_form_matches_distribution(self, mu):
        walk = WalkParams(mu=mu)
        for m in range(0, 51):
            law = exact_distribution(Multiset.from_counts({1: m}), walk)
            for atom in law.atoms:
                assert equal_steps_atom(m, walk, atom.value) == atom.prob
            assert equal_steps_distribution(m, walk) == law

    def test_erdos_sharpness(self, sign_walk):
        for n in range(1, 51):
            assert p([1] * n) == erdos_extremal(n) == Fraction(comb(n, n // 2), 2**n)

    @pytest.mark.parametrize("mu", [Fraction(1), Fraction(1, 2), Fraction(1, 5)])
    def test_symmetric_and_monotone(self, mu):
        walk = WalkParams(mu=mu)
        m = 9
        for a in range(0, m + 1):
            assert equal_steps_atom(m, walk, a) == equal_steps_atom(m, walk, -a)
            assert equal_steps_atom(m, walk, a) >= equal_steps_atom(m, walk, a + 2)

    def test_separated_set_mass(self, sign_walk):
        s = {-4, 0, 4}
        assert is_separated(s, 4)
        assert not is_separated(s, 5)
        expected = sum(equal_steps_atom(6, sign_walk, a) for a in s)
        assert separated_set_mass(6, sign_walk, s) == expected
        assert separated_set_mass(6, sign_walk, s) <= 1


class TestScaling:
    def test_interval_decay_exponent(self):
        probs = [p(range(1, n + 1)) for n in (16, 32, 64, 128)]
        for smaller, larger in zip(probs, probs[1:]):
            slope = log2(larger) - log2(smaller)
            assert -1.75 <= slope <= -1.25


class TestFourier:
    def test_single_step(self, lazy_walk):
        est = fourier_estimate(Multiset.from_values([1]), lazy_walk, 64)
        assert abs(est.estimate - 0.5) <= est.error_bound + 1e-12

    def test_empty(self, lazy_walk):
        est = fourier_estimate(Multiset(), lazy_walk, 16)
        assert est.estimate == 1.0
        assert est.error_bound == 0.0

    def test_two_ones(self, lazy_walk):
        est = fourier_estimate(Multiset.from_values([1, 1]), lazy_walk, 256)
        assert abs(est.estimate - 3 / 8) <= est.error_bound + 1e-12

    def test_rejects_large_mu(self, sign_walk):
        with pytest.raises(DomainError):
            fourier_estimate(Multiset.from_values([1]), sign_walk, 64)

    def test_rejects_small_grid(self, lazy_walk):
        with pytest.raises(DomainError):
            fourier_estimate(Multiset.from_values([1]), lazy_walk, 8)

    @hsettings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-6, 6), min_size=1, max_size=6), st.sampled_from(LAZY_MUS))
    def test_agrees_with_exact_zero_atom(self, values, mu):
        v = Multiset.from_values(values)
        walk = WalkParams(mu=mu)
        est = fourier_estimate(v, walk, 512)
        exact = float(exact_distribution(v, walk).prob(0))
        assert abs(est.estimate - exact) <= est.error_bound + 1e-9


class TestHalasz:
    def test_at_zero(self, one_two_three, lazy_walk):
        assert halasz_factor(one_two_three, lazy_walk, 0) == 1.0

    def test_half_period(self, sign_walk, lazy_walk):
        assert halasz_factor(Multiset.from_values([1]), sign_walk, Fraction(1, 2)) == pytest.approx(-1.0)
        assert halasz_factor(Multiset.from_values([2]), lazy_walk, Fraction(1, 2)) == pytest.approx(1.0)

    def test_profile_matches_pointwise(self, one_two_three, lazy_walk):
        profile = halasz_profile(one_two_three, lazy_walk, 40)
        for j in (0, 3, 17, 39):
            assert profile[j] == pytest.approx(halasz_factor(one_two_three, lazy_walk, Fraction(j, 40)), abs=1e-12)

    @hsettings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-30, 30), min_size=1, max_size=12), st.sampled_from(MUS))
    def test_pointwise_inequalities(self, values, mu):
        v = Multiset.from_values(values)
        coarse = halasz_profile(v, WalkParams(mu=mu / 4), 10_000)
        fine = halasz_profile(v, WalkParams(mu=mu / 16), 10_000)
        assert np.all(coarse <= fine**4 + 1e-12)

        assert_pairwise_bound(v, mu, 400)

    @pytest.mark.slow
    @hsettings(max_examples=8, deadline=None)
    @given(st.lists(st.integers(-30, 30), min_size=1, max_size=12), st.sampled_from(MUS))
    def test_pairwise_inequality_on_fine_grid(self, values, mu):
        assert_pairwise_bound(Multiset.from_values(values), mu, 10_000)


def assert_pairwise_bound(v, mu, grid, rows=250):
    """F_{mu/4}(x) F_{mu/4}(y) <= F_{mu/16}(x + y)^2 at every pair of grid points, a block of rows at a time"""
    coarse = halasz_profile(v, WalkParams(mu=mu / 4), grid)
    fine = halasz_profile(v, WalkParams(mu=mu / 16), grid)
    idx = np.arange(grid)
    for start in range(0, grid, rows):
        block = idx[start : start + rows]
        shifted = fine[(block[:, None] + idx[None, :]) % grid]
        assert np.all(np.outer(coarse[block], coarse) <= shifted**2 + 1e-12)

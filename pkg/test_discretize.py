from fractions import Fraction

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from errors import DiscretizationError, DomainError, KernelSearchExhaustedError, NoAdmissibleScaleError
from models import Gap, SparsenessMethod
from tools.discretize import (
    check_sparseness,
    discretize,
    is_admissible,
    kernel_basis,
    ladder,
    verify_discretization,
)
from tools.gap import symmetric_gap, volume


class TestLadder:
    def test_nearest_rung_first(self):
        assert ladder(100, 10, 1) == [100, 10, 1000]

    def test_rungs_floor_at_one(self):
        assert ladder(1, 10, 2) == [1, 10, 100]

    def test_zero_span(self):
        assert ladder(12345, 7, 0) == [12345]

    def test_admissible(self):
        assert is_admissible([5, 1000], 100, 2)
        assert not is_admissible([50], 100, 2)
        # the window is open at both ends
        assert is_admissible([25, 200], 100, 2)


class TestKernelBasis:
    def test_two_scales(self):
        assert kernel_basis([1, 10**9], [5, 5], 50) == [(-5, 0)]

    def test_exact_relation(self):
        assert kernel_basis([2, 3], [3, 3], 0) == [(-3, 2)]

    def test_everything_small(self):
        basis = kernel_basis([1, 2], [2, 2], 100)
        assert len(basis) == 2

    def test_nothing_small(self):
        assert kernel_basis([7], [3], 0) == []


class TestDiscretize:
    def test_two_scale_split(self, two_scale_gap):
        res = discretize(two_scale_gap, 10**4, 100)
        assert res.r_scale == 10**4
        assert res.p_small == symmetric_gap([1], 5)
        assert res.p_sparse == symmetric_gap([10**9], 5)
        assert res.verification.valid
        assert res.verification.exhaustive
        assert res.verification.sparseness_method == SparsenessMethod.MODULE_GCD
        assert res.params_used.kernel_rank == 1
        assert res.params_used.scale_ratio == 1
        for part, g in zip(res.decomposition, two_scale_gap.generators):
            assert part.small + part.sparse == g

    def test_everything_small(self):
        p = symmetric_gap([3], 2)
        res = discretize(p, 10**6, 2)
        assert res.p_small == p
        assert res.p_sparse == Gap()
        assert res.verification.valid

    def test_everything_sparse(self):
        p = symmetric_gap([7], 3)
        res = discretize(p, 1, 2)
        assert res.r_scale == 1
        assert res.p_small == Gap()
        assert res.p_sparse == p
        assert res.verification.valid

    def test_rejects_bad_input(self, two_scale_gap):
        with pytest.raises(DomainError):
            discretize(Gap(offset=1, generators=(1,), lower=(-1,), upper=(1,)), 10, 2)
        with pytest.raises(DomainError):
            discretize(symmetric_gap([1, 2, 3, 4, 5], 1), 10, 2)
        with pytest.raises(DomainError):
            discretize(two_scale_gap, 10, 2, b=1)
        with pytest.raises(DomainError):
            discretize(two_scale_gap, 0, 2)

    def test_no_admissible_scale(self):
        with pytest.raises(NoAdmissibleScaleError) as info:
            discretize(symmetric_gap([1], 1000), 1000, 1, ladder_span=0)
        assert info.value.diagnostics["inadmissible"] == [1000]

    def test_kernel_budget(self):
        with pytest.raises(KernelSearchExhaustedError):
            discretize(symmetric_gap([3], 2), 10**6, 2, ladder_span=0, kernel_budget=1)

    @pytest.mark.slow
    @hsettings(max_examples=50, deadline=None)
    @given(
        st.integers(1, 3).flatmap(
            lambda rank: st.tuples(
                st.lists(st.integers(1, 10**12), min_size=rank, max_size=rank),
                st.lists(st.integers(1, {1: 499, 2: 15, 3: 4}[rank]), min_size=rank, max_size=rank),
            )
        ),
        st.tuples(st.integers(1, 9), st.integers(0, 6)).map(lambda t: t[0] * 10 ** t[1]),
        st.tuples(st.integers(1, 9), st.integers(0, 5)).map(lambda t: t[0] * 10 ** t[1]),
    )
    def test_returned_splits_verify(self, shape, r0, s):
        generators, bounds = shape
        p = Gap(generators=tuple(generators), lower=tuple(-m for m in bounds), upper=tuple(bounds))
        assert volume(p) <= 1000
        try:
            res = discretize(p, r0, s)
        except DiscretizationError as e:
            assert e.diagnostics
            assert any(e.diagnostics.values())
            return
        report = verify_discretization(res, p, s)
        assert report.valid
        assert report.exhaustive


class TestVerification:
    def test_sparse_collision_is_caught(self, two_scale_gap):
        res = discretize(two_scale_gap, 10**4, 100)
        sparse = Gap(generators=(10**9, 10**9 + 1), lower=(-5, -1), upper=(5, 1))
        report = verify_discretization(res.model_copy(update={"p_sparse": sparse}), two_scale_gap, 100)
        assert not report.valid
        assert [c.name for c in report.clauses if not c.passed] == ["sparseness"]
        assert report.sparseness_method == SparsenessMethod.MEET_IN_THE_MIDDLE

    def test_large_small_part_is_caught(self, two_scale_gap):
        res = discretize(two_scale_gap, 10**4, 100)
        small = Gap(generators=(1, 1000), lower=(-5, -1), upper=(5, 1))
        report = verify_discretization(res.model_copy(update={"p_small": small}), two_scale_gap, 100)
        assert [c.name for c in report.clauses if not c.passed] == ["smallness"]
        assert report.clause("smallness").margin == -905.0
        assert res.verification.clause("smallness").margin == 95.0

    def test_broken_decomposition(self, two_scale_gap):
        res = discretize(two_scale_gap, 10**4, 100)
        parts = (res.decomposition[0].model_copy(update={"small": Fraction(2)}),) + res.decomposition[1:]
        report = verify_discretization(res.model_copy(update={"decomposition": parts}), two_scale_gap, 100)
        assert not report.clause("decomposition").passed
        assert not report.clause("covering").passed


class TestSparseness:
    def test_single_point(self):
        ok, method, fraction, _ = check_sparseness(Gap(), 10, 2)
        assert ok and method == SparsenessMethod.TRIVIAL and fraction == 1.0

    def test_common_divisor(self):
        ok, method, _, _ = check_sparseness(symmetric_gap([10**6], 3), 100, 10)
        assert ok and method == SparsenessMethod.MODULE_GCD

    def test_close_generators(self):
        ok, method, _, detail = check_sparseness(symmetric_gap([100, 101], 1), 10, 2)
        assert not ok
        assert method == SparsenessMethod.MEET_IN_THE_MIDDLE
        assert detail.startswith("difference")

    def test_separated_generators(self):
        ok, method, _, _ = check_sparseness(symmetric_gap([1000, 10**6 + 1], 1), 10, 2)
        assert ok and method == SparsenessMethod.MEET_IN_THE_MIDDLE

    def test_sampling_fallback(self):
        ok, method, fraction, _ = check_sparseness(symmetric_gap([10**6, 10**6 + 7], 50), 2, 1, budget=100)
        # no difference in the box equals +-1
        assert ok
        assert method == SparsenessMethod.SAMPLED
        assert fraction == pytest.approx(100 / 201**2)

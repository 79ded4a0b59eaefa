from fractions import Fraction

import pytest

from config import ToolkitSettings
from models import Gap, Multiset, WalkParams
from tools.gap import symmetric_gap


@pytest.fixture
def settings() -> ToolkitSettings:
    return ToolkitSettings(mc_chunk=2_000)


@pytest.fixture
def sign_walk() -> WalkParams:
    return WalkParams(mu=Fraction(1))


@pytest.fixture
def lazy_walk() -> WalkParams:
    return WalkParams(mu=Fraction(1, 2))


@pytest.fixture
def one_two_three() -> Multiset:
    return Multiset.from_values([1, 2, 3])


@pytest.fixture
def two_scale_gap() -> Gap:
    """{m1 + m2 * 10^9 : |m_i| <= 5}"""
    return symmetric_gap([1, 10**9], 5)


@pytest.fixture
def nine_and_one() -> Multiset:
    return Multiset.from_counts({9: 300, 1: 200})


@pytest.fixture
def sevens() -> Multiset:
    """200 elements of Q({7}, 20): 7 forty times, every other 7a four times"""
    counts = {7 * a: 4 for a in range(-20, 21) if a != 1}
    counts[7] = 40
    return Multiset.from_counts(counts)

"""
Random {-1, 0, 1} matrices: sampling, exact singularity and extreme singular values.

Entry stream: trial t of seed s draws from numpy's Philox generator keyed by s
with counter t << 192 (the trial index occupies the top counter word, so
trials never share a stream). The n - l random rows are filled row-major from
integers(0, 2q) for mu = p/q: u < p gives +1, p <= u < 2p gives -1, otherwise 0.
"""

import logging
from fractions import Fraction
from itertools import product
from math import log, sqrt
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import DomainError, NonConvergenceError
from models import MatrixSample, SpectralSummary, WalkParams
from tools.exact_linalg import det_exact

logger = logging.getLogger(__name__)

WILSON_Z = 1.959963984540054
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=trial << 192))


def _check_fixed_rows(n: int, fixed_rows: Optional[Sequence[Sequence[int]]]) -> Tuple[Tuple[int, ...], ...]:
    rows = tuple(tuple(int(x) for x in row) for row in (fixed_rows or ()))
    if len(rows) >= n and rows:
        raise DomainError(f"{len(rows)} fixed rows leave no random rows for n = {n}")
    if any(len(row) != n for row in rows):
        raise DomainError(f"fixed rows must have length {n}")
    return rows


def sample_matrix(
    n: int,
    p: WalkParams,
    seed: int,
    fixed_rows: Optional[Sequence[Sequence[int]]] = None,
    trial: int = 0,
) -> MatrixSample:
    if n < 1:
        raise DomainError("n must be at least 1")
    fixed = _check_fixed_rows(n, fixed_rows)
    random_rows = n - len(fixed)
    num, den = p.mu.numerator, p.mu.denominator
    draws = trial_generator(seed, trial).integers(0, 2 * den, size=(random_rows, n))
    entries = np.where(draws < num, 1, np.where(draws < 2 * num, -1, 0))
    rows = tuple(tuple(int(x) for x in row) for row in entries) + fixed
    return MatrixSample(n=n, mu=p.mu, entries=rows, seed=seed, trial=trial, fixed_rows=len(fixed))


def is_singular_exact(m: MatrixSample) -> bool:
    return det_exact(m.entries) == 0


def _as_float(m: MatrixSample) -> np.ndarray:
    return np.array(m.entries, dtype=float)


def smallest_singular_value(m: MatrixSample, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """
    sigma_n by inverse iteration on A^t A; exactly singular matrices return 0.0.

    Stops once successive Rayleigh estimates ||A x|| agree to relative tol.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if is_singular_exact(m):
        return 0.0
    a = _as_float(m)
    if m.n == 1:
        return abs(float(a[0, 0]))

    x = trial_generator(m.seed, m.trial).standard_normal(m.n)
    x /= np.linalg.norm(x)
    estimate = float(np.linalg.norm(a @ x))
    try:
        for _ in range(max_iter):
            y = np.linalg.solve(a, np.linalg.solve(a.T, x))
            x = y / np.linalg.norm(y)
            updated = float(np.linalg.norm(a @ x))
            if abs(updated - estimate) <= tol * updated:
                return updated
            estimate = updated
        lower = 1.0 / float(np.linalg.norm(np.linalg.inv(a), "fro"))
    except np.linalg.LinAlgError:
        # numerically singular although exactly invertible
        logger.warning("Inverse iteration hit a numerically singular matrix; using SVD")
        return float(np.linalg.svd(a, compute_uv=False)[-1])
    raise NonConvergenceError(f"sigma_n did not converge in {max_iter} iterations", bracket=(lower, estimate))


def largest_singular_value(m: MatrixSample, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """sigma_1 by power iteration on A^t A"""
    if tol <= 0:
        raise DomainError("tol must be positive")
    a = _as_float(m)
    if not a.any():
        return 0.0
    x = trial_generator(m.seed, m.trial).standard_normal(m.n)
    x /= np.linalg.norm(x)
    estimate = float(np.linalg.norm(a @ x))
    for _ in range(max_iter):
        y = a.T @ (a @ x)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        updated = float(np.linalg.norm(a @ x))
        if abs(updated - estimate) <= tol * updated:
            return updated
        estimate = updated
    upper = float(np.linalg.norm(a, "fro"))
    raise NonConvergenceError(f"sigma_1 did not converge in {max_iter} iterations", bracket=(estimate, upper))


def condition_number(m: MatrixSample, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    if is_singular_exact(m):
        return float("inf")
    return largest_singular_value(m, tol, max_iter) / smallest_singular_value(m, tol, max_iter)


def spectral_summary(m: MatrixSample, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SpectralSummary:
    singular = is_singular_exact(m)
    sigma_max = largest_singular_value(m, tol, max_iter)
    sigma_min = 0.0 if singular else smallest_singular_value(m, tol, max_iter)
    cond = float("inf") if singular else sigma_max / sigma_min
    return SpectralSummary(sigma_max=sigma_max, sigma_min=sigma_min, cond=cond, singular=singular)


def entry_law(p: WalkParams) -> List[Tuple[int, Fraction]]:
    mu = p.mu
    return [(v, w) for v, w in ((-1, mu / 2), (0, 1 - mu), (1, mu / 2)) if w]


def brute_force_singularity(n: int, p: WalkParams) -> Fraction:
    """Exact P(M singular) by enumerating every entry pattern (n <= 3)"""
    if not 1 <= n <= 3:
        raise DomainError("brute force singularity needs 1 <= n <= 3")
    law = entry_law(p)
    total = Fraction(0)
    for pattern in product(law, repeat=n * n):
        values = [v for v, _ in pattern]
        if det_exact([values[i * n : (i + 1) * n] for i in range(n)]) == 0:
            weight = Fraction(1)
            for _, w in pattern:
                weight *= w
            total += weight
    return total


def delta_mu(p: WalkParams) -> Fraction:
    """max(1 - mu, mu / 2)"""
    return max(1 - p.mu, p.mu / 2)


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> Tuple[float, float]:
    if trials <= 0:
        raise DomainError("trials must be positive")
    phat = successes / trials
    denom = 1 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def tail_threshold(n: int, b_exponent: float) -> float:
    """n^-B"""
    return float(np.exp(-b_exponent * log(n))) if n > 1 else 1.0


def count_singular(
    n: int,
    p: WalkParams,
    seed: int,
    trials: range,
    fixed_rows: Optional[Sequence[Sequence[int]]] = None,
) -> int:
    return sum(is_singular_exact(sample_matrix(n, p, seed, fixed_rows, trial)) for trial in trials)


def sigma_values(n: int, p: WalkParams, seed: int, trials: range, tol: float = 1e-8, max_iter: int = DEFAULT_MAX_ITER) -> List[float]:
    """sigma_n per trial, 0.0 for exactly singular samples"""
    values = []
    for trial in trials:
        m = sample_matrix(n, p, seed, None, trial)
        try:
            values.append(smallest_singular_value(m, tol, max_iter))
        except NonConvergenceError as e:
            logger.warning(f"Trial {trial}: {e} (bracket {e.bracket}); using SVD")
            values.append(float(np.linalg.svd(_as_float(m), compute_uv=False)[-1]))
    return values

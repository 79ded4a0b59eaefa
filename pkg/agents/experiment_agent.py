import asyncio
import logging
import time
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from config import ToolkitSettings
from errors import DomainError
from models import (
    McEstimate,
    Multiset,
    Quantity,
    SweepConfig,
    SweepRow,
    TailCurve,
    TailPoint,
    WalkParams,
)
from tools import randmat
from tools.walk import concentration, equal_steps_distribution

logger = logging.getLogger(__name__)

# (1 - eps)^n with eps = 0.001 is the proven singularity rate
SINGULARITY_EPS = 0.001


def singularity_comparators(n: int, p: WalkParams) -> dict:
    return {
        "one_minus_eps_pow_n": (1 - SINGULARITY_EPS) ** n,
        "half_pow_n": 0.5**n,
        "delta_mu_pow_n": float(randmat.delta_mu(p)) ** n,
    }


def equal_steps_peak(n: int, p: WalkParams) -> Fraction:
    """Largest atom of the walk on 1^n, the extremal value of the concentration"""
    return max(atom.prob for atom in equal_steps_distribution(n, p).atoms)


def sweep_multiset(config: SweepConfig, n: int, source: Optional[Multiset] = None) -> Multiset:
    """{1..n}, 1^n, or the first n values of the input multiset"""
    if source is not None:
        values = source.values()
        if n > len(values):
            raise DomainError(f"input multiset has only {len(values)} values, sweep asks for {n}")
        return Multiset.from_values(values[:n])
    if config.family == "constant":
        return Multiset.from_counts({1: n})
    return Multiset.from_values(range(1, n + 1))


class ExperimentAgent:
    """Monte Carlo estimates over random sign matrices and parameter sweeps"""

    def __init__(self, settings: Optional[ToolkitSettings] = None):
        self.settings = settings or ToolkitSettings()

    def _chunks(self, trials: int) -> List[range]:
        if trials < 1:
            raise DomainError("trials must be at least 1")
        size = self.settings.mc_chunk
        return [range(start, min(start + size, trials)) for start in range(0, trials, size)]

    def _estimate(
        self,
        quantity: Quantity,
        n: int,
        p: WalkParams,
        trials: int,
        successes: int,
        seed: int,
        b_exponent: Optional[float] = None,
        comparators: Optional[dict] = None,
    ) -> McEstimate:
        low, high = randmat.wilson_interval(successes, trials)
        return McEstimate(
            quantity=quantity,
            n=n,
            mu=p.mu,
            trials=trials,
            successes=successes,
            estimate=successes / trials,
            ci_low=low,
            ci_high=high,
            seed=seed,
            b_exponent=b_exponent,
            delta_mu=randmat.delta_mu(p),
            comparators=comparators or {},
        )

    async def estimate_singularity(
        self,
        n: int,
        p: WalkParams,
        trials: int,
        seed: Optional[int] = None,
        fixed_rows: Optional[Sequence[Sequence[int]]] = None,
    ) -> McEstimate:
        """Fraction of exactly singular samples with a Wilson interval"""
        seed = self.settings.default_seed if seed is None else seed
        chunks = self._chunks(trials)
        # validates n and the fixed rows before any worker starts
        randmat.sample_matrix(n, p, seed, fixed_rows)

        counts = await asyncio.gather(
            *(asyncio.to_thread(randmat.count_singular, n, p, seed, chunk, fixed_rows) for chunk in chunks)
        )
        estimate = self._estimate(
            Quantity.SINGULARITY, n, p, trials, sum(counts), seed, comparators=singularity_comparators(n, p)
        )
        logger.info(
            f"Singularity n={n} mu={p.mu}: {estimate.successes}/{trials} "
            f"[{estimate.ci_low:.4g}, {estimate.ci_high:.4g}]"
        )
        return estimate

    async def _sigma_samples(self, n: int, p: WalkParams, trials: int, seed: int) -> List[float]:
        chunks = self._chunks(trials)
        randmat.sample_matrix(n, p, seed)
        parts = await asyncio.gather(
            *(
                asyncio.to_thread(randmat.sigma_values, n, p, seed, chunk, 1e-8, self.settings.spectral_max_iter)
                for chunk in chunks
            )
        )
        return [sigma for part in parts for sigma in part]

    async def sigma_tail_curve(
        self,
        n: int,
        p: WalkParams,
        b_exponents: Sequence[float],
        trials: int,
        seed: Optional[int] = None,
    ) -> TailCurve:
        """
        Empirical P(sigma_n <= n^-B) for each B from a single pass of sigma_n per trial.

        Exactly singular samples have sigma_n = 0 and count for every B, so the
        success counts are non-increasing in B.
        """
        seed = self.settings.default_seed if seed is None else seed
        sigmas = await self._sigma_samples(n, p, trials, seed)
        points = []
        for b in b_exponents:
            threshold = randmat.tail_threshold(n, b)
            successes = sum(1 for sigma in sigmas if sigma <= threshold)
            low, high = randmat.wilson_interval(successes, trials)
            points.append(
                TailPoint(
                    b_exponent=b,
                    threshold=threshold,
                    successes=successes,
                    estimate=successes / trials,
                    ci_low=low,
                    ci_high=high,
                )
            )
        return TailCurve(n=n, mu=p.mu, trials=trials, seed=seed, points=tuple(points))

    async def estimate_sigma_tail(
        self,
        n: int,
        p: WalkParams,
        b_exponent: float,
        trials: int,
        seed: Optional[int] = None,
    ) -> McEstimate:
        curve = await self.sigma_tail_curve(n, p, [b_exponent], trials, seed)
        point = curve.points[0]
        estimate = self._estimate(
            Quantity.SIGMA_TAIL,
            n,
            p,
            trials,
            point.successes,
            curve.seed,
            b_exponent=b_exponent,
            comparators={"threshold": point.threshold},
        )
        logger.info(f"Sigma tail n={n} mu={p.mu} B={b_exponent}: {point.successes}/{trials}")
        return estimate

    # ------------------------------------------------------------------ sweeps

    async def _concentration_rows(self, config: SweepConfig, source: Optional[Multiset]) -> List[Tuple[SweepRow, float]]:
        def row(n: int, mu: str) -> Tuple[SweepRow, float]:
            started = time.perf_counter()
            p = WalkParams.of(mu)
            v = sweep_multiset(config, n, source)
            result = concentration(v, p, support_cap=self.settings.support_cap)
            sweep_row = SweepRow(
                n=n,
                mu=str(p.mu),
                quantity=Quantity.CONCENTRATION,
                estimate=float(result.probability),
                comparator_value=float(equal_steps_peak(n, p)),
            )
            return sweep_row, (time.perf_counter() - started) * 1000

        return await asyncio.gather(*(asyncio.to_thread(row, n, mu) for n in config.n for mu in config.mu))

    async def _singularity_rows(self, config: SweepConfig, seed: int) -> List[Tuple[SweepRow, float]]:
        async def row(n: int, mu: str) -> Tuple[SweepRow, float]:
            started = time.perf_counter()
            p = WalkParams.of(mu)
            est = await self.estimate_singularity(n, p, config.trials, seed)
            sweep_row = SweepRow(
                n=n,
                mu=str(p.mu),
                trials=est.trials,
                seed=seed,
                quantity=Quantity.SINGULARITY,
                estimate=est.estimate,
                ci_low=est.ci_low,
                ci_high=est.ci_high,
                comparator_value=est.comparators["delta_mu_pow_n"],
            )
            return sweep_row, (time.perf_counter() - started) * 1000

        return [await row(n, mu) for n in config.n for mu in config.mu]

    async def _sigma_tail_rows(self, config: SweepConfig, seed: int) -> List[Tuple[SweepRow, float]]:
        rows = []
        for n in config.n:
            for mu in config.mu:
                started = time.perf_counter()
                p = WalkParams.of(mu)
                curve = await self.sigma_tail_curve(n, p, config.b_exponent, config.trials, seed)
                elapsed = (time.perf_counter() - started) * 1000 / len(curve.points)
                for point in curve.points:
                    sweep_row = SweepRow(
                        n=n,
                        mu=str(p.mu),
                        trials=config.trials,
                        seed=seed,
                        quantity=Quantity.SIGMA_TAIL,
                        estimate=point.estimate,
                        ci_low=point.ci_low,
                        ci_high=point.ci_high,
                        comparator_value=point.threshold,
                    )
                    rows.append((sweep_row, elapsed))
        return rows

    async def run_sweep(self, config: SweepConfig, source: Optional[Multiset] = None) -> List[SweepRow]:
        """One row per point of the parameter cross-product, in (n, mu[, B]) order"""
        seed = self.settings.default_seed if config.seed is None else config.seed
        logger.info(f"Sweep {config.quantity.value}: n={config.n} mu={config.mu}")

        if config.quantity == Quantity.CONCENTRATION:
            timed = await self._concentration_rows(config, source)
        elif config.quantity == Quantity.SINGULARITY:
            timed = await self._singularity_rows(config, seed)
        else:
            timed = await self._sigma_tail_rows(config, seed)

        if not config.timings:
            return [row for row, _ in timed]
        return [row.model_copy(update={"runtime_ms": round(ms, 3)}) for row, ms in timed]

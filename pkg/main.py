#!/usr/bin/env python3
"""
Littlewood-Offord toolkit - command line entry point

Exit status: 0 success, 1 usage or validation error, 2 verification failure,
3 resource limit or non-convergence.
"""

import argparse
import asyncio
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from agents.experiment_agent import ExperimentAgent
from agents.inverse_agent import InverseAgent
from config import ToolkitSettings, load_settings
from errors import (
    DiscretizationError,
    NonConvergenceError,
    RankOverflowError,
    ResourceLimitError,
    ToolkitError,
)
from models import (
    Budget,
    InverseFailureReport,
    Quantity,
    Rational,
    SweepConfig,
    SweepRow,
    WalkParams,
)
from tools import serialization
from tools.discretize import discretize, verify_discretization
from tools.walk import concentration

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_RESOURCE = 3

Subcommand = Literal["concentration", "inverse0", "inverse1", "inverse2", "verify", "discretize", "mc-sing", "mc-tail", "sweep"]

REQUIRED = {
    "concentration": ("input",),
    "inverse0": ("input",),
    "inverse1": ("input", "d", "k"),
    "inverse2": ("input", "d", "k"),
    "verify": ("kind", "input"),
    "discretize": ("gap", "r0", "s"),
    "mc-sing": ("n", "trials"),
    "mc-tail": ("n", "trials"),
    "sweep": ("sweep_config",),
}

CSV_SUBCOMMANDS = {"mc-sing", "mc-tail", "sweep"}


class ExperimentConfig(BaseModel):
    """One CLI invocation, validated before dispatch"""

    subcommand: Subcommand
    input: Optional[str] = Field(default=None, description="Multiset file, or the artifact to verify")
    multiset: Optional[str] = Field(default=None, description="Multiset a certificate is verified against")
    gap: Optional[str] = Field(default=None, description="Gap JSON file")
    sweep_config: Optional[str] = Field(default=None, description="Sweep JSON file")
    fixed_rows: Optional[str] = Field(default=None, description="Fixed matrix rows, one per line")
    kind: Optional[Literal["cube", "dilate", "gap", "discretization"]] = None
    mu: Rational = Fraction(1)
    n: Optional[int] = Field(default=None, ge=1)
    d: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    eps: Rational = Fraction(1, 2)
    torsion_k: Optional[int] = Field(default=None, ge=2)
    r0: Optional[int] = Field(default=None, ge=1)
    s: Optional[int] = Field(default=None, ge=1)
    b: int = Field(default=2, ge=2)
    ladder_span: Optional[int] = Field(default=None, ge=0)
    trials: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    b_exponent: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    output: Optional[str] = None
    format: Optional[Literal["json", "csv"]] = None
    timings: bool = False

    @field_validator("mu")
    @classmethod
    def valid_mu(cls, mu: Fraction) -> Fraction:
        return WalkParams(mu=mu).mu

    @model_validator(mode="after")
    def required_for_subcommand(self):
        missing = [name for name in REQUIRED[self.subcommand] if getattr(self, name) is None]
        if self.subcommand == "verify":
            if self.kind == "discretization":
                missing += [] if self.gap else ["gap"]
            else:
                missing += [name for name in ("multiset", "d", "k") if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.subcommand} needs --{', --'.join(m.replace('_', '-') for m in missing)}")
        if self.format == "csv" and self.subcommand not in CSV_SUBCOMMANDS:
            raise ValueError(f"{self.subcommand} writes JSON only")
        return self

    @property
    def walk(self) -> WalkParams:
        return WalkParams(mu=self.mu)

    @property
    def output_format(self) -> str:
        if self.format:
            return self.format
        return "csv" if self.subcommand in CSV_SUBCOMMANDS else "json"


class Toolkit:
    """Dispatches a validated config to the agents and kernels; returns (text, exit status)"""

    def __init__(self, settings: Optional[ToolkitSettings] = None):
        self.settings = settings or load_settings()
        self.inverse_agent = InverseAgent(self.settings)
        self.experiment_agent = ExperimentAgent(self.settings)

    def seed(self, config: ExperimentConfig) -> int:
        return self.settings.default_seed if config.seed is None else config.seed

    def dispatch(self, config: ExperimentConfig) -> Tuple[str, int]:
        handler = getattr(self, "_" + config.subcommand.replace("-", "_"))
        return handler(config)

    def _concentration(self, config: ExperimentConfig) -> Tuple[str, int]:
        v = serialization.read_multiset(config.input)
        result = concentration(v, config.walk, support_cap=self.settings.support_cap)
        return result.model_dump_json(by_alias=True), EXIT_OK

    def _inverse0(self, config: ExperimentConfig) -> Tuple[str, int]:
        cert = self.inverse_agent.zeroth_inverse(serialization.read_multiset(config.input))
        return cert.model_dump_json(indent=2), EXIT_OK

    def _inverse1(self, config: ExperimentConfig) -> Tuple[str, int]:
        v = serialization.read_multiset(config.input)
        try:
            cert = self.inverse_agent.first_inverse(v, config.walk, config.d, config.k)
        except RankOverflowError as e:
            report = InverseFailureReport(reason="rank-overflow", word=e.word, error_message=str(e))
            return report.model_dump_json(indent=2), EXIT_VERIFICATION
        return cert.model_dump_json(indent=2), EXIT_OK

    def _inverse2(self, config: ExperimentConfig) -> Tuple[str, int]:
        v = serialization.read_multiset(config.input)
        result = self.inverse_agent.second_inverse(v, config.walk, config.d, config.k, config.eps, config.torsion_k)
        status = EXIT_VERIFICATION if isinstance(result, InverseFailureReport) else EXIT_OK
        return result.model_dump_json(indent=2), status

    def _verify(self, config: ExperimentConfig) -> Tuple[str, int]:
        if config.kind == "discretization":
            result = serialization.load_discretization(config.input)
            report = verify_discretization(
                result,
                serialization.read_gap(config.gap),
                result.params_used.s,
                sparse_check_budget=self.settings.sparse_check_budget,
                enumeration_volume=self.settings.full_enumeration_volume,
                seed=self.seed(config),
            )
        else:
            cert = serialization.load_certificate(config.input)
            if cert.kind != config.kind:
                raise ValueError(f"artifact is a {cert.kind} certificate, not {config.kind}")
            budget = Budget(d=config.d, k=config.k, eps=config.eps)
            report = self.inverse_agent.verify_certificate(cert, serialization.read_multiset(config.multiset), budget)
        return report.model_dump_json(indent=2), EXIT_OK if report.valid else EXIT_VERIFICATION

    def _discretize(self, config: ExperimentConfig) -> Tuple[str, int]:
        result = discretize(
            serialization.read_gap(config.gap),
            config.r0,
            config.s,
            config.b,
            ladder_span=self.settings.ladder_span if config.ladder_span is None else config.ladder_span,
            coeff_cap=self.settings.coeff_cap,
            kernel_budget=self.settings.kernel_budget,
            sparse_check_budget=self.settings.sparse_check_budget,
            enumeration_volume=self.settings.full_enumeration_volume,
        )
        return result.model_dump_json(indent=2), EXIT_OK

    def _mc_sing(self, config: ExperimentConfig) -> Tuple[str, int]:
        fixed = serialization.read_fixed_rows(config.fixed_rows) if config.fixed_rows else None
        estimate = asyncio.run(
            self.experiment_agent.estimate_singularity(config.n, config.walk, config.trials, self.seed(config), fixed)
        )
        if config.output_format == "json":
            return estimate.model_dump_json(indent=2), EXIT_OK
        row = SweepRow(
            n=estimate.n,
            mu=str(estimate.mu),
            trials=estimate.trials,
            seed=estimate.seed,
            quantity=Quantity.SINGULARITY,
            estimate=estimate.estimate,
            ci_low=estimate.ci_low,
            ci_high=estimate.ci_high,
            comparator_value=estimate.comparators["delta_mu_pow_n"],
        )
        return serialization.rows_to_csv([row]), EXIT_OK

    def _mc_tail(self, config: ExperimentConfig) -> Tuple[str, int]:
        sweep = SweepConfig(
            quantity=Quantity.SIGMA_TAIL,
            n=[config.n],
            mu=[str(config.mu)],
            trials=config.trials,
            seed=self.seed(config),
            b_exponent=config.b_exponent,
        )
        if config.output_format == "csv":
            return self._sweep_rows(sweep, config.timings), EXIT_OK
        agent = self.experiment_agent
        if len(config.b_exponent) == 1:
            result = asyncio.run(
                agent.estimate_sigma_tail(config.n, config.walk, config.b_exponent[0], config.trials, self.seed(config))
            )
        else:
            result = asyncio.run(
                agent.sigma_tail_curve(config.n, config.walk, config.b_exponent, config.trials, self.seed(config))
            )
        return result.model_dump_json(indent=2), EXIT_OK

    def _sweep_rows(self, sweep: SweepConfig, timings: bool, config_dir: Optional[Path] = None) -> str:
        source = None
        if sweep.input_path:
            path = Path(sweep.input_path)
            if config_dir is not None and not path.is_absolute():
                path = config_dir / path
            source = serialization.read_multiset(path)
        if timings:
            sweep = sweep.model_copy(update={"timings": True})
        rows = asyncio.run(self.experiment_agent.run_sweep(sweep, source))
        return serialization.rows_to_csv(rows)

    def _sweep(self, config: ExperimentConfig) -> Tuple[str, int]:
        path = Path(config.sweep_config)
        sweep = SweepConfig.model_validate_json(path.read_text())
        if config.seed is not None:
            sweep = sweep.model_copy(update={"seed": config.seed})
        if config.output_format == "json":
            raise ValueError("sweep writes CSV only")
        return self._sweep_rows(sweep, config.timings or sweep.timings, path.parent), EXIT_OK


def run(config: ExperimentConfig, settings: Optional[ToolkitSettings] = None) -> int:
    """Dispatch one invocation, write its artifact and return the exit status"""
    toolkit = Toolkit(settings)
    try:
        text, status = toolkit.dispatch(config)
    except (ResourceLimitError, NonConvergenceError) as e:
        logger.error(f"Resource limit: {e}")
        return EXIT_RESOURCE
    except DiscretizationError as e:
        logger.error(f"Discretization failed: {e} {e.diagnostics}")
        return EXIT_VERIFICATION
    except (ToolkitError, ValueError, OSError) as e:
        logger.error(f"{config.subcommand}: {e}")
        return EXIT_USAGE

    if config.output:
        serialization.write_atomic(config.output, text)
        logger.info(f"Wrote {config.output}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return status


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors here exit with 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lo-toolkit", description="Littlewood-Offord concentration, inverse and random matrix tools")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="Write the artifact here instead of stdout")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--timings", action="store_true", help="Fill runtime_ms in CSV output")
    common.add_argument("--seed", type=int, help="Defaults to LO_DEFAULT_SEED")
    common.add_argument("--mu", default="1", help="Walk laziness parameter, e.g. 1/2")

    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("concentration", parents=[common], help="Exact concentration probability")
    p.add_argument("--input", required=True, help="Multiset file")

    p = sub.add_parser("inverse0", parents=[common], help="Cube structure for mu = 1")
    p.add_argument("--input", required=True)

    for name, help_text in (("inverse1", "k-dissociated dilate cover"), ("inverse2", "Progression containment")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--input", required=True)
        p.add_argument("--d", type=int, required=True)
        p.add_argument("--k", type=int, required=True)
        if name == "inverse2":
            p.add_argument("--eps", default="1/2")
            p.add_argument("--torsion-k", type=int)

    p = sub.add_parser("verify", parents=[common], help="Re-check a certificate or discretization")
    p.add_argument("--kind", required=True, choices=["cube", "dilate", "gap", "discretization"])
    p.add_argument("--input", required=True, help="Artifact JSON")
    p.add_argument("--multiset", help="Multiset the certificate covers")
    p.add_argument("--gap", help="Progression the discretization splits")
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--eps", default="1/2")

    p = sub.add_parser("discretize", parents=[common], help="Small plus sparse split of a progression")
    p.add_argument("--gap", required=True)
    p.add_argument("--r0", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--ladder-span", type=int)

    p = sub.add_parser("mc-sing", parents=[common], help="Monte Carlo singularity probability")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--fixed-rows", help="Fixed rows file")

    p = sub.add_parser("mc-tail", parents=[common], help="Monte Carlo smallest singular value tail")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--b-exponent", type=float, nargs="+", default=[1.0])

    p = sub.add_parser("sweep", parents=[common], help="Parameter sweep to CSV")
    p.add_argument("--config", dest="sweep_config", required=True, help="Sweep JSON file")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    settings = load_settings()
    logging.basicConfig(level=settings.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig(**{key: value for key, value in vars(args).items() if value is not None})
    except ValidationError as e:
        parser.print_usage(sys.stderr)
        for error in e.errors():
            print(f"{parser.prog}: error: {error['msg']}", file=sys.stderr)
        return EXIT_USAGE
    return run(config, settings)


if __name__ == "__main__":
    sys.exit(main())

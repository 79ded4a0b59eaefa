"""
Runtime settings for the toolkit.

Values come from the environment (optionally a .env file, see env.sample.txt)
and fall back to the defaults below.
"""

import os
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, Field


class ToolkitSettings(BaseModel):
    """Tunable limits and constants used across the kernels and agents"""

    default_seed: int = Field(default=20240101, ge=0, lt=2**64, description="Seed used when none is given")
    support_cap: int = Field(default=10_000_000, ge=1, description="Walk support cap (sum of |v_i|)")
    enumeration_cap: int = Field(default=1_000_000_000, ge=1, description="GAP enumeration state cap")
    full_enumeration_volume: int = Field(default=10_000, ge=1, description="Enumerate the whole box below this volume")
    max_gap_rank: int = Field(default=8, ge=0, description="Max rank accepted by membership search")
    dissociation_budget: int = Field(default=100_000_000, ge=1, description="Relation search budget")
    cube_max: int = Field(default=30, ge=1, description="Max word length for cube search")
    inverse_c: float = Field(default=1.0, gt=0, description="Constant C in P >= C k^-d")
    k0: int = Field(default=8, ge=2, description="Minimum k for the second inverse algorithm")
    torsion_k: int = Field(default=8, ge=2, description="Torsion threshold K")
    second_inverse_dilation: Literal["lcm", "factorial"] = "lcm"
    ladder_span: int = Field(default=12, ge=0, description="Discretization ladder half-width")
    coeff_cap: int = Field(default=1000, ge=1, description="Kernel search coefficient cap")
    kernel_budget: int = Field(default=10_000_000, ge=1, description="Kernel search box budget")
    sparse_check_budget: int = Field(default=2_000_000, ge=1, description="Half-box size for sparseness checks")
    spectral_max_iter: int = Field(default=10_000, ge=1, description="Inverse/power iteration cap")
    mc_chunk: int = Field(default=10_000, ge=1, description="Monte Carlo trials per worker chunk")
    log_level: str = Field(default="INFO", description="Logging level")


_ENV_MAP = {
    "default_seed": "LO_DEFAULT_SEED",
    "support_cap": "LO_SUPPORT_CAP",
    "enumeration_cap": "LO_ENUMERATION_CAP",
    "full_enumeration_volume": "LO_FULL_ENUMERATION_VOLUME",
    "max_gap_rank": "LO_MAX_GAP_RANK",
    "dissociation_budget": "LO_DISSOCIATION_BUDGET",
    "cube_max": "LO_CUBE_MAX",
    "inverse_c": "LO_INVERSE_C",
    "k0": "LO_K0",
    "torsion_k": "LO_TORSION_K",
    "second_inverse_dilation": "LO_SECOND_INVERSE_DILATION",
    "ladder_span": "LO_LADDER_SPAN",
    "coeff_cap": "LO_COEFF_CAP",
    "kernel_budget": "LO_KERNEL_BUDGET",
    "sparse_check_budget": "LO_SPARSE_CHECK_BUDGET",
    "spectral_max_iter": "LO_SPECTRAL_MAX_ITER",
    "mc_chunk": "LO_MC_CHUNK",
    "log_level": "LO_LOG_LEVEL",
}


def load_settings(dotenv: bool = True) -> ToolkitSettings:
    """Build settings from LO_* environment variables (pydantic validates them)"""
    if dotenv:
        load_dotenv()

    overrides = {}
    for field_name, env_name in _ENV_MAP.items():
        value = os.getenv(env_name)
        if value is not None and value != "":
            overrides[field_name] = value

    return ToolkitSettings(**overrides)

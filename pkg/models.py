from collections import Counter
from enum import Enum
from fractions import Fraction
from typing import Annotated, Dict, Iterable, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise ValueError(f"expected an exact rational (int or 'p/q' string), got {type(value).__name__}")


# Exact rationals travel as "p/q" strings (or "p" when integral)
Rational = Annotated[
    Fraction,
    BeforeValidator(_to_fraction),
    PlainSerializer(lambda f: str(f), return_type=str),
]

# Integers that may exceed 64 bits are written as decimal strings
BigInt = Annotated[int, PlainSerializer(lambda i: str(i), return_type=str)]


class HypothesisStatus(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNKNOWN = "unknown"


class SolveStatus(str, Enum):
    SOLVED = "solved"
    NO_SOLUTION = "no_solution"
    UNDERDETERMINED = "underdetermined"


class CoverageRoute(str, Enum):
    TORSION = "torsion"
    DILATE = "dilate"
    ZERO = "zero"


class SparsenessMethod(str, Enum):
    TRIVIAL = "trivial"
    MODULE_GCD = "module_gcd"
    MEET_IN_THE_MIDDLE = "meet_in_the_middle"
    SAMPLED = "sampled"


class Quantity(str, Enum):
    CONCENTRATION = "concentration"
    SINGULARITY = "singularity"
    SIGMA_TAIL = "sigma_tail"


class Multiset(BaseModel):
    """Finite multiset of integers stored as sorted (value, multiplicity) pairs"""

    model_config = ConfigDict(frozen=True)

    entries: Tuple[Tuple[int, int], ...] = ()

    @field_validator("entries")
    @classmethod
    def canonical(cls, entries):
        counts: Dict[int, int] = {}
        for value, multiplicity in entries:
            if multiplicity < 0:
                raise ValueError(f"negative multiplicity for {value}")
            if multiplicity:
                counts[value] = counts.get(value, 0) + multiplicity
        return tuple(sorted(counts.items()))

    @classmethod
    def from_values(cls, values: Iterable[int]) -> "Multiset":
        return cls(entries=tuple(Counter(int(x) for x in values).items()))

    @classmethod
    def from_counts(cls, counts: Dict[int, int]) -> "Multiset":
        return cls(entries=tuple(counts.items()))

    @property
    def size(self) -> int:
        return sum(m for _, m in self.entries)

    @property
    def distinct(self) -> List[int]:
        return [x for x, _ in self.entries]

    def counts(self) -> Dict[int, int]:
        return dict(self.entries)

    def values(self) -> List[int]:
        """Expanded values in sorted order"""
        out: List[int] = []
        for value, multiplicity in self.entries:
            out.extend([value] * multiplicity)
        return out

    def multiplicity(self, value: int) -> int:
        return self.counts().get(value, 0)

    def total_abs(self) -> int:
        return sum(abs(x) * m for x, m in self.entries)

    def nonzero(self) -> "Multiset":
        return Multiset(entries=tuple((x, m) for x, m in self.entries if x != 0))

    def concat(self, other: "Multiset") -> "Multiset":
        return Multiset(entries=self.entries + other.entries)

    def power(self, times: int) -> "Multiset":
        if times < 0:
            raise ValueError("power must be non-negative")
        return Multiset(entries=tuple((x, m * times) for x, m in self.entries))

    def minus(self, other: "Multiset") -> "Multiset":
        counts = self.counts()
        for value, multiplicity in other.entries:
            if counts.get(value, 0) < multiplicity:
                raise ValueError(f"{value} occurs fewer than {multiplicity} times")
            counts[value] -= multiplicity
        return Multiset.from_counts(counts)

    def contains_multiset(self, other: "Multiset") -> bool:
        counts = self.counts()
        return all(counts.get(x, 0) >= m for x, m in other.entries)


class WalkParams(BaseModel):
    """Lazy walk parameter: steps are +v, -v with prob mu/2 each, 0 with prob 1-mu"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mu: Rational = Fraction(1)

    @field_validator("mu")
    @classmethod
    def in_unit_interval(cls, mu: Fraction) -> Fraction:
        if not (0 < mu <= 1):
            raise ValueError("mu must satisfy 0 < mu <= 1")
        return mu

    @classmethod
    def of(cls, mu: Union[str, int, Fraction]) -> "WalkParams":
        return cls(mu=mu)


class Atom(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: BigInt
    prob: Rational


class Distribution(BaseModel):
    """Exact law of a walk endpoint; probabilities are positive and sum to 1"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    atoms: Tuple[Atom, ...]

    @model_validator(mode="after")
    def normalized(self):
        if any(atom.prob <= 0 for atom in self.atoms):
            raise ValueError("atom probabilities must be positive")
        if sum((atom.prob for atom in self.atoms), Fraction(0)) != 1:
            raise ValueError("probabilities must sum to exactly 1")
        return self

    @classmethod
    def from_dict(cls, probs: Dict[int, Fraction]) -> "Distribution":
        return cls(atoms=tuple(Atom(value=x, prob=p) for x, p in sorted(probs.items()) if p))

    def as_dict(self) -> Dict[int, Fraction]:
        return {atom.value: atom.prob for atom in self.atoms}

    def prob(self, value: int) -> Fraction:
        return self.as_dict().get(value, Fraction(0))


class ConcentrationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, populate_by_name=True)

    best_atom: int = Field(serialization_alias="a")
    probability: Rational = Field(serialization_alias="p")


class FourierEstimate(BaseModel):
    estimate: float
    error_bound: float = Field(ge=0)
    grid: int


class SolveResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: SolveStatus
    solution: Optional[Tuple[Rational, ...]] = None


class Gap(BaseModel):
    """Generalized arithmetic progression offset + sum m_i g_i, lower_i <= m_i <= upper_i"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    offset: Rational = Fraction(0)
    generators: Tuple[Rational, ...] = ()
    lower: Tuple[int, ...] = ()
    upper: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def consistent(self):
        if not (len(self.generators) == len(self.lower) == len(self.upper)):
            raise ValueError("generators, lower and upper must have equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("every lower bound must not exceed its upper bound")
        return self

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def is_symmetric(self) -> bool:
        return self.offset == 0 and all(lo == -hi for lo, hi in zip(self.lower, self.upper))

    @property
    def is_integral(self) -> bool:
        return self.offset.denominator == 1 and all(g.denominator == 1 for g in self.generators)


class MembershipWitness(BaseModel):
    coefficients: Tuple[int, ...]


class ProperResult(BaseModel):
    proper: bool
    collision: Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]] = None


class TorsionResult(BaseModel):
    """tau is None when no dilate up to the bound lands in the progression"""

    tau: Optional[int] = None
    witness: Optional[MembershipWitness] = None


class DissociationWitness(BaseModel):
    coefficients: Tuple[int, ...]


class CoverageEntry(BaseModel):
    value: BigInt
    multiplicity: int = Field(ge=1)
    tau: Optional[int] = None
    coefficients: Optional[Tuple[int, ...]] = None


class DilateCoverageReport(BaseModel):
    entries: Tuple[CoverageEntry, ...]
    covered: int
    exceptional: int


class Budget(BaseModel):
    """The caller's (d, k, eps) for certificate verification"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: int = Field(ge=1)
    k: int = Field(ge=1)
    eps: Rational = Fraction(1, 2)


class CubeWitness(BaseModel):
    value: BigInt
    multiplicity: int = Field(ge=1)
    in_word: bool = False
    coefficients: Tuple[int, ...]


class CubeCertificate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["cube"] = "cube"
    word: Tuple[int, ...]
    zeros: int = 0
    witnesses: Tuple[CubeWitness, ...]
    hypothesis: HypothesisStatus = HypothesisStatus.UNKNOWN


class DilateCoverCertificate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["dilate"] = "dilate"
    word: Tuple[int, ...]
    k: int
    d: int
    mu: Rational
    exceptional: Multiset
    coverage: DilateCoverageReport
    hypothesis: HypothesisStatus = HypothesisStatus.UNKNOWN


class RefinementStage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    element: BigInt
    tau: int
    removed: Multiset
    coefficients: Tuple[int, ...]
    word_coordinates: Tuple[Rational, ...]
    l_bound: BigInt
    l_effective: BigInt


class GapMember(BaseModel):
    value: BigInt
    multiplicity: int = Field(ge=1)
    route: CoverageRoute
    coefficients: Tuple[BigInt, ...]


class GapCertificate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["gap"] = "gap"
    word: Tuple[int, ...]
    q: Gap
    s: BigInt
    dilation: BigInt
    exceptional: Multiset
    members: Tuple[GapMember, ...]
    trace: Tuple[RefinementStage, ...] = ()
    k: int
    d: int
    torsion_k: int
    eps: Rational
    mu: Rational
    hypothesis: HypothesisStatus = HypothesisStatus.UNKNOWN


class InverseFailureReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    success: bool = False
    reason: str
    word: Tuple[int, ...] = ()
    trace: Tuple[RefinementStage, ...] = ()
    error_message: Optional[str] = None


Certificate = Annotated[
    Union[CubeCertificate, DilateCoverCertificate, GapCertificate],
    Field(discriminator="kind"),
]


class VerificationClause(BaseModel):
    name: str
    passed: bool
    conditional: bool = False
    detail: str = ""
    # bound minus observed value for quantitative clauses, negative when violated
    margin: Optional[float] = None


class VerificationReport(BaseModel):
    kind: str
    clauses: Tuple[VerificationClause, ...]
    hypothesis: HypothesisStatus = HypothesisStatus.UNKNOWN
    valid: bool

    def clause(self, name: str) -> VerificationClause:
        for clause in self.clauses:
            if clause.name == name:
                return clause
        raise KeyError(name)


class ForwardBound(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    probability: Rational
    bound: Rational
    holds: bool


class GeneratorSplit(BaseModel):
    """v_i = small + sparse for one generator of the input progression"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    small: Rational
    sparse: Rational


class DiscretizationParams(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    b: int
    s: int
    r0: BigInt
    ladder_ratio: BigInt
    rung: int
    kernel_rank: int
    escalations: int
    coordinate_set: Tuple[int, ...] = ()
    scale_ratio: Rational


class DiscretizationReport(BaseModel):
    clauses: Tuple[VerificationClause, ...]
    sparseness_method: SparsenessMethod
    exhaustive: bool = True
    coverage_fraction: float = 1.0
    valid: bool

    def clause(self, name: str) -> VerificationClause:
        for clause in self.clauses:
            if clause.name == name:
                return clause
        raise KeyError(name)


class DiscretizationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    r_scale: BigInt
    p_small: Gap
    p_sparse: Gap
    decomposition: Tuple[GeneratorSplit, ...]
    params_used: DiscretizationParams
    verification: Optional[DiscretizationReport] = None


class MatrixSample(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int = Field(ge=1)
    mu: Rational
    entries: Tuple[Tuple[int, ...], ...]
    seed: int
    trial: int = 0
    fixed_rows: int = 0


class SpectralSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    sigma_max: float
    sigma_min: float
    cond: float
    singular: bool


class McEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    quantity: Quantity
    n: int
    mu: Rational
    trials: int
    successes: int
    estimate: float
    ci_low: float
    ci_high: float
    seed: int
    b_exponent: Optional[float] = None
    delta_mu: Rational
    comparators: Dict[str, float] = Field(default_factory=dict)


class TailPoint(BaseModel):
    b_exponent: float
    threshold: float
    successes: int
    estimate: float
    ci_low: float
    ci_high: float


class TailCurve(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    mu: Rational
    trials: int
    seed: int
    points: Tuple[TailPoint, ...]


class SweepRow(BaseModel):
    """One CSV row of a sweep; runtime_ms stays None unless timings are requested"""

    n: int
    mu: str
    trials: Optional[int] = None
    seed: Optional[int] = None
    quantity: Quantity
    estimate: float
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    comparator_value: Optional[float] = None
    runtime_ms: Optional[float] = None


class SweepConfig(BaseModel):
    """Parameter sweep read from a JSON file"""

    quantity: Quantity
    family: Literal["interval", "constant"] = "interval"
    input_path: Optional[str] = None
    n: List[int] = Field(..., min_length=1)
    mu: List[str] = Field(default_factory=lambda: ["1"], min_length=1)
    trials: int = Field(default=1000, ge=1)
    seed: Optional[int] = None
    b_exponent: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    timings: bool = False

    @field_validator("quantity", mode="before")
    @classmethod
    def subcommand_names(cls, quantity):
        # sweeps may name the quantity after its CLI subcommand
        return {"mc-sing": Quantity.SINGULARITY, "mc-tail": Quantity.SIGMA_TAIL}.get(quantity, quantity)

    @field_validator("n")
    @classmethod
    def positive_sizes(cls, sizes: List[int]) -> List[int]:
        if any(size < 1 for size in sizes):
            raise ValueError("every n must be positive")
        return sizes

    @field_validator("mu")
    @classmethod
    def valid_mu(cls, mus: List[str]) -> List[str]:
        for mu in mus:
            WalkParams.of(mu)
        return mus

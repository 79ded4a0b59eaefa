"""
File formats read and written by the CLI.

Multisets are text, one `value[xmultiplicity]` token per line (`7`, `-3x12`);
blank lines and `#` comments are skipped. Gaps, certificates and
discretizations are the JSON dumps of their models. Sweeps are CSV.
"""

import csv
import io
import logging
import os
import tempfile
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from pydantic import TypeAdapter

from errors import DomainError
from models import Certificate, DiscretizationResult, Gap, Multiset, SweepRow

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "n",
    "mu",
    "trials",
    "seed",
    "quantity",
    "estimate",
    "ci_low",
    "ci_high",
    "comparator_value",
    "runtime_ms",
)

_certificates = TypeAdapter(Certificate)

PathLike = Union[str, Path]


def parse_multiset(text: str) -> Multiset:
    counts = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        token = raw.split("#", 1)[0].strip()
        if not token:
            continue
        value, sep, multiplicity = token.lower().partition("x")
        try:
            value = int(value)
            multiplicity = int(multiplicity) if sep else 1
        except ValueError:
            raise DomainError(f"line {line_no}: cannot parse {raw.strip()!r} as value[xmultiplicity]")
        if multiplicity < 1:
            raise DomainError(f"line {line_no}: multiplicity must be positive")
        counts[value] = counts.get(value, 0) + multiplicity
    return Multiset.from_counts(counts)


def format_multiset(v: Multiset) -> str:
    lines = [str(x) if m == 1 else f"{x}x{m}" for x, m in v.entries]
    return "\n".join(lines) + ("\n" if lines else "")


def read_multiset(path: PathLike) -> Multiset:
    return parse_multiset(Path(path).read_text())


def read_gap(path: PathLike) -> Gap:
    return Gap.model_validate_json(Path(path).read_text())


def read_fixed_rows(path: PathLike) -> List[Tuple[int, ...]]:
    """One whitespace-separated integer row per line"""
    rows = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rows.append(tuple(int(x) for x in raw.split()))
        except ValueError:
            raise DomainError(f"line {line_no}: fixed rows must be integers")
    return rows


def load_certificate(path: PathLike) -> Certificate:
    return _certificates.validate_json(Path(path).read_text())


def load_discretization(path: PathLike) -> DiscretizationResult:
    return DiscretizationResult.model_validate_json(Path(path).read_text())


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        record = row.model_dump(mode="json")
        writer.writerow({column: "" if record[column] is None else record[column] for column in CSV_COLUMNS})
    return buffer.getvalue()


def write_atomic(path: PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug(f"Wrote {target}")

"""
Exact integer and rational linear algebra.

Determinants use fraction-free Bareiss elimination so intermediate values stay
integral; rank uses row-primitive integer elimination.
"""

import logging
from fractions import Fraction
from math import gcd, lcm
from typing import List, Sequence, Tuple

from errors import DimensionError
from models import SolveResult, SolveStatus

logger = logging.getLogger(__name__)

ExactRational = Fraction


class IntMatrix:
    """Immutable dense matrix of Python ints"""

    __slots__ = ("_rows", "nrows", "ncols")

    def __init__(self, rows: Sequence[Sequence[int]]):
        data = tuple(tuple(int(x) for x in row) for row in rows)
        widths = {len(row) for row in data}
        if len(widths) > 1:
            raise DimensionError("ragged matrix rows")
        self._rows = data
        self.nrows = len(data)
        self.ncols = widths.pop() if widths else 0

    @classmethod
    def identity(cls, n: int) -> "IntMatrix":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @property
    def rows(self) -> Tuple[Tuple[int, ...], ...]:
        return self._rows

    def column(self, j: int) -> Tuple[int, ...]:
        return tuple(row[j] for row in self._rows)

    def transpose(self) -> "IntMatrix":
        return IntMatrix([self.column(j) for j in range(self.ncols)])

    def select_columns(self, columns: Sequence[int]) -> "IntMatrix":
        return IntMatrix([[row[j] for j in columns] for row in self._rows])

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        if self.ncols != other.nrows:
            raise DimensionError(f"cannot multiply {self.nrows}x{self.ncols} by {other.nrows}x{other.ncols}")
        cols = [other.column(j) for j in range(other.ncols)]
        return IntMatrix([[sum(a * b for a, b in zip(row, col)) for col in cols] for row in self._rows])

    def __eq__(self, other) -> bool:
        return isinstance(other, IntMatrix) and self._rows == other._rows

    def __hash__(self) -> int:
        return hash(self._rows)

    def __repr__(self) -> str:
        return f"IntMatrix({[list(r) for r in self._rows]})"


def _as_matrix(m) -> IntMatrix:
    return m if isinstance(m, IntMatrix) else IntMatrix(m)


def det_exact(m) -> int:
    """Exact determinant of a square integer matrix (Bareiss)"""
    m = _as_matrix(m)
    if m.nrows != m.ncols:
        raise DimensionError(f"determinant needs a square matrix, got {m.nrows}x{m.ncols}")
    n = m.nrows
    if n == 0:
        return 1

    a = [list(row) for row in m.rows]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            pivot = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if pivot is None:
                return 0
            a[k], a[pivot] = a[pivot], a[k]
            sign = -sign
        akk = a[k][k]
        for i in range(k + 1, n):
            aik = a[i][k]
            row_i, row_k = a[i], a[k]
            for j in range(k + 1, n):
                row_i[j] = (row_i[j] * akk - aik * row_k[j]) // prev
        prev = akk
    return sign * a[n - 1][n - 1]


def _echelon(rows: List[List[int]], ncols: int) -> Tuple[List[List[int]], List[int]]:
    """Integer row echelon form with primitive rows; returns (rows, pivot columns)"""
    a = [list(r) for r in rows]
    pivots: List[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if pivot is None:
            continue
        a[r], a[pivot] = a[pivot], a[r]
        p = a[r][c]
        for i in range(r + 1, len(a)):
            f = a[i][c]
            if f == 0:
                continue
            row = [x * p - f * y for x, y in zip(a[i], a[r])]
            g = 0
            for x in row:
                g = gcd(g, x)
            a[i] = [x // g for x in row] if g > 1 else row
        pivots.append(c)
        r += 1
        if r == len(a):
            break
    return a, pivots


def rank_exact(m) -> int:
    m = _as_matrix(m)
    if m.nrows == 0 or m.ncols == 0:
        return 0
    _, pivots = _echelon([list(r) for r in m.rows], m.ncols)
    return len(pivots)


def solve_rational(a, b: Sequence[int]) -> SolveResult:
    """
    Solve a x = b exactly for square integer a.

    Nonsingular systems are solved by Cramer's rule; singular ones are
    classified as no-solution or underdetermined by comparing ranks.
    """
    a = _as_matrix(a)
    b = [int(x) for x in b]
    if a.nrows != a.ncols:
        raise DimensionError(f"solve needs a square matrix, got {a.nrows}x{a.ncols}")
    if len(b) != a.nrows:
        raise DimensionError(f"right-hand side has length {len(b)}, expected {a.nrows}")

    det = det_exact(a)
    if det != 0:
        solution = []
        for j in range(a.ncols):
            replaced = [list(row) for row in a.rows]
            for i in range(a.nrows):
                replaced[i][j] = b[i]
            solution.append(Fraction(det_exact(IntMatrix(replaced)), det))
        return SolveResult(status=SolveStatus.SOLVED, solution=tuple(solution))

    augmented = [list(row) + [bi] for row, bi in zip(a.rows, b)]
    if rank_exact(augmented) > rank_exact(a):
        return SolveResult(status=SolveStatus.NO_SOLUTION)
    logger.debug("singular system is consistent; solution set is underdetermined")
    return SolveResult(status=SolveStatus.UNDERDETERMINED)


def null_space_exact(m) -> List[Tuple[int, ...]]:
    """Primitive integer basis of {x : m x = 0}, one vector per free column"""
    m = _as_matrix(m)
    n = m.ncols
    rows = [[Fraction(x) for x in row] for row in m.rows]
    pivots: List[int] = []
    r = 0
    for c in range(n):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        lead = rows[r][c]
        rows[r] = [x / lead for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break

    basis = []
    for free in (c for c in range(n) if c not in pivots):
        vector = [Fraction(0)] * n
        vector[free] = Fraction(1)
        for row, c in zip(rows, pivots):
            vector[c] = -row[free]
        scale = lcm(*(x.denominator for x in vector))
        ints = [int(x * scale) for x in vector]
        g = 0
        for x in ints:
            g = gcd(g, x)
        basis.append(tuple(x // g for x in ints))
    return basis

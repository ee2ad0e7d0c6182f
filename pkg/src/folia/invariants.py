"""Multi-matrix symmetric invariants and Newton transformations.

The central objects are the coefficients sigma_lambda defined by the expansion

    det(I_m + t_1 A_1 + ... + t_k A_k) = sum_{|lambda| <= m} sigma_lambda * t^lambda,

the Newton transformations T_k(A), and the trace identities that evaluate
invariants of sums (in particular rank-one updates) without expanding the
characteristic polynomial of the sum.

Two scalar modes are supported, selected by the dtype of the input arrays:

* exact mode  -- numpy object arrays holding ``fractions.Fraction`` entries;
  no rounding ever happens, identities can be compared with ``==``;
* float mode  -- ordinary float64 arrays; callers compare with tolerances.

``sigma`` evaluates a single coefficient by a direct combinatorial sum over
row subsets and column assignments, which scales to m = 8.  ``det_expand`` is
the independent oracle: it expands the full determinant polynomial by a
memoized Laplace expansion over polynomial entries and is meant for small
sizes only.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations

import numpy as np
from sympy.utilities.iterables import multiset_permutations, partitions

ORACLE_MAX_DIM = 8
ORACLE_MAX_MATRICES = 4


class DimensionMismatchError(ValueError):
    """Matrices in one invariant evaluation must share a square shape."""


# ---------------------------------------------------------------------------
# scalar / matrix helpers

def exact_matrix(rows) -> np.ndarray:
    """Build an exact-mode matrix (object array of Fractions)."""
    data = [[Fraction(entry) for entry in row] for row in rows]
    out = np.empty((len(data), len(data[0])), dtype=object)
    for i, row in enumerate(data):
        for j, entry in enumerate(row):
            out[i, j] = entry
    return out


def is_exact(matrix: np.ndarray) -> bool:
    return matrix.dtype == object


def identity(m: int, exact: bool) -> np.ndarray:
    if exact:
        return exact_matrix([[1 if i == j else 0 for j in range(m)] for i in range(m)])
    return np.eye(m)


def _as_square(matrix) -> np.ndarray:
    out = matrix if isinstance(matrix, np.ndarray) else np.asarray(matrix, dtype=float)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {out.shape}")
    return out


def _common_dim(matrices) -> int:
    dims = {mat.shape[0] for mat in matrices}
    if len(dims) > 1:
        raise DimensionMismatchError(f"inconsistent matrix dimensions {sorted(dims)}")
    return dims.pop()


def _det_rows(rows: list[list]) -> Fraction | float:
    """Determinant of a small dense matrix given as nested lists.

    Uses exact Gaussian elimination when any entry is a Fraction, float LU
    via numpy otherwise.
    """
    m = len(rows)
    if m == 0:
        return 1
    if not any(isinstance(e, Fraction) for row in rows for e in row):
        return float(np.linalg.det(np.asarray(rows, dtype=float)))
    a = [[Fraction(e) for e in row] for row in rows]
    sign = 1
    prod = Fraction(1)
    for col in range(m):
        pivot = next((r for r in range(col, m) if a[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            sign = -sign
        p = a[col][col]
        prod *= p
        for r in range(col + 1, m):
            factor = a[r][col] / p
            if factor:
                for c in range(col + 1, m):
                    a[r][c] -= factor * a[col][c]
    return sign * prod


def det(matrix: np.ndarray) -> Fraction | float:
    matrix = _as_square(matrix)
    if is_exact(matrix):
        return _det_rows([list(row) for row in matrix])
    return float(np.linalg.det(matrix))


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.dot(a, b)


def trace(matrix: np.ndarray):
    tot = matrix[0, 0]
    for i in range(1, matrix.shape[0]):
        tot = tot + matrix[i, i]
    return tot


# ---------------------------------------------------------------------------
# multi-indices and the polynomial oracle representation

class MultiIndex(tuple):
    """Tuple lambda = (lambda_1, ..., lambda_k) of non-negative integers.

    ``total`` is |lambda| = sum lambda_i, ``weight`` is
    ||lambda|| = sum i * lambda_i (used by the power-series determinant).
    """

    def __new__(cls, entries):
        entries = tuple(int(e) for e in entries)
        if any(e < 0 for e in entries):
            raise ValueError(f"multi-index entries must be non-negative: {entries}")
        return super().__new__(cls, entries)

    @property
    def total(self) -> int:
        return sum(self)

    @property
    def weight(self) -> int:
        return sum((i + 1) * e for i, e in enumerate(self))


class MultiPolynomial:
    """Polynomial in t_1..t_nvars with exponent-tuple keyed coefficients."""

    def __init__(self, nvars: int, terms: dict | None = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for expo, coeff in terms.items():
                if coeff != 0:
                    self.terms[tuple(expo)] = coeff

    @classmethod
    def constant(cls, nvars: int, value) -> "MultiPolynomial":
        return cls(nvars, {(0,) * nvars: value})

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, lam):
        lam = tuple(lam)
        if len(lam) < self.nvars:
            lam = lam + (0,) * (self.nvars - len(lam))
        elif len(lam) > self.nvars:
            if any(e != 0 for e in lam[self.nvars:]):
                return 0
            lam = lam[: self.nvars]
        return self.terms.get(lam, 0)

    def __add__(self, other: "MultiPolynomial") -> "MultiPolynomial":
        out = dict(self.terms)
        for expo, coeff in other.terms.items():
            acc = out.get(expo, 0) + coeff
            if acc == 0:
                out.pop(expo, None)
            else:
                out[expo] = acc
        return MultiPolynomial(self.nvars, out)

    def __neg__(self) -> "MultiPolynomial":
        return MultiPolynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "MultiPolynomial") -> "MultiPolynomial":
        return self + (-other)

    def __mul__(self, other: "MultiPolynomial") -> "MultiPolynomial":
        out: dict[tuple, object] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                expo = tuple(a + b for a, b in zip(e1, e2))
                acc = out.get(expo, 0) + c1 * c2
                if acc == 0:
                    out.pop(expo, None)
                else:
                    out[expo] = acc
        return MultiPolynomial(self.nvars, out)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiPolynomial) and self.terms == other.terms

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        bits = []
        for expo in sorted(self.terms):
            mono = "*".join(f"t{i + 1}^{e}" for i, e in enumerate(expo) if e)
            bits.append(f"{self.terms[expo]}" + (f"*{mono}" if mono else ""))
        return " + ".join(bits)


class TruncatedSeries:
    """Univariate polynomial truncated beyond a fixed order (inclusive)."""

    def __init__(self, order: int, coeffs=None):
        self.order = order
        self.coeffs = {}
        if coeffs:
            items = coeffs.items() if isinstance(coeffs, dict) else enumerate(coeffs)
            for k, c in items:
                if c != 0 and k <= order:
                    self.coeffs[int(k)] = c

    @classmethod
    def constant(cls, order: int, value) -> "TruncatedSeries":
        return cls(order, {0: value})

    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, k: int):
        return self.coeffs.get(k, 0)

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            acc = out.get(k, 0) + c
            if acc == 0:
                out.pop(k, None)
            else:
                out[k] = acc
        return TruncatedSeries(self.order, out)

    def __neg__(self) -> "TruncatedSeries":
        return TruncatedSeries(self.order, {k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return self + (-other)

    def __mul__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        out: dict[int, object] = {}
        for k1, c1 in self.coeffs.items():
            for k2, c2 in other.coeffs.items():
                k = k1 + k2
                if k > self.order:
                    continue
                acc = out.get(k, 0) + c1 * c2
                if acc == 0:
                    out.pop(k, None)
                else:
                    out[k] = acc
        return TruncatedSeries(self.order, out)

    def __eq__(self, other) -> bool:
        return isinstance(other, TruncatedSeries) and self.coeffs == other.coeffs


def _laplace_det(entry, m: int, one):
    """Memoized Laplace expansion of an m x m matrix of ring elements.

    ``entry(r, c)`` returns the (r, c) element; ``one`` is the ring unit.
    Row r = m - len(cols) is expanded at each level, so the memo key is the
    remaining column tuple alone.
    """
    memo: dict[tuple, object] = {(): one}

    def minor(cols: tuple) -> object:
        if cols in memo:
            return memo[cols]
        r = m - len(cols)
        acc = None
        for idx, c in enumerate(cols):
            p = entry(r, c)
            if p.is_zero():
                continue
            sub = minor(cols[:idx] + cols[idx + 1:])
            term = p * sub
            if idx % 2 == 1:
                term = -term
            acc = term if acc is None else acc + term
        if acc is None:
            acc = one + (-one)
        memo[cols] = acc
        return acc

    return minor(tuple(range(m)))


def det_expand(matrices) -> MultiPolynomial:
    """Full expansion of det(I_m + t_1 A_1 + ... + t_k A_k) -- the oracle.

    Keeps exact coefficients for object-dtype inputs.  Limited to k <= 4
    matrices of size m <= 8 (cost grows like 2^m times polynomial size).
    """
    matrices = [_as_square(mat) for mat in matrices]
    k = len(matrices)
    if not 1 <= k <= ORACLE_MAX_MATRICES:
        raise ValueError(f"det_expand handles 1..{ORACLE_MAX_MATRICES} matrices, got {k}")
    m = _common_dim(matrices)
    if m > ORACLE_MAX_DIM:
        raise ValueError(f"det_expand limited to m <= {ORACLE_MAX_DIM}, got {m}")

    unit = tuple((0,) * k)

    def entry(r, c):
        terms = {}
        if r == c:
            terms[unit] = 1
        for i, mat in enumerate(matrices):
            val = mat[r, c]
            if val != 0:
                expo = tuple(1 if j == i else 0 for j in range(k))
                terms[expo] = val
        return MultiPolynomial(k, terms)

    return _laplace_det(entry, m, MultiPolynomial.constant(k, 1))


def det_series_truncated(b_list, order: int) -> TruncatedSeries:
    """Truncated det(I + t B_1 + t^2 B_2 + ...) by exact polynomial Laplace."""
    b_list = [_as_square(b) for b in b_list]
    m = _common_dim(b_list)

    def entry(r, c):
        terms = {}
        if r == c:
            terms[0] = 1
        for i, mat in enumerate(b_list):
            val = mat[r, c]
            if val != 0:
                terms[i + 1] = val
        return TruncatedSeries(order, terms)

    return _laplace_det(entry, m, TruncatedSeries.constant(order, 1))


# ---------------------------------------------------------------------------
# direct invariant evaluation

def sigma(matrices, lam):
    """Coefficient sigma_lambda(A_1,...,A_k) of the determinant expansion.

    Evaluated directly: choose |lambda| rows, assign lambda_i of the chosen
    columns to matrix i, and sum the signed mixed minors.  Returns exact zero
    for |lambda| > m (those coefficients vanish identically).
    """
    matrices = [_as_square(mat) for mat in matrices]
    lam = MultiIndex(lam)
    if len(lam) != len(matrices):
        raise ValueError(f"multi-index length {len(lam)} != number of matrices {len(matrices)}")
    exact = any(is_exact(mat) for mat in matrices)
    if not matrices:
        return Fraction(1) if exact else 1.0
    m = _common_dim(matrices)
    r = lam.total
    if r > m:
        return Fraction(0) if exact else 0.0
    if r == 0:
        return Fraction(1) if exact else 1.0

    slots = [i for i, li in enumerate(lam) for _ in range(li)]
    total = Fraction(0) if exact else 0.0
    for rows in combinations(range(m), r):
        for assign in multiset_permutations(slots):
            sub = [[matrices[assign[q]][rows[p], rows[q]] for q in range(r)]
                   for p in range(r)]
            total = total + _det_rows(sub)
    return total


def sigma_k(matrix, k: int):
    """Elementary symmetric invariant sigma_k of a single matrix."""
    return sigma((matrix,), (k,))


def newton_transform(matrix: np.ndarray, k: int) -> np.ndarray:
    """Newton transformation T_k(A) = sigma_k(A) I - A T_{k-1}(A).

    Computed both by the recursion and by the explicit alternating sum
    sum_i (-1)^i sigma_{k-i}(A) A^i; the two must agree.
    """
    matrix = _as_square(matrix)
    m = matrix.shape[0]
    if not 0 <= k <= m:
        raise ValueError(f"Newton transformation needs 0 <= k <= {m}, got {k}")
    exact = is_exact(matrix)
    sig = [sigma_k(matrix, j) for j in range(k + 1)]
    eye = identity(m, exact)

    t_rec = eye
    for j in range(1, k + 1):
        t_rec = sig[j] * eye - mat_mul(matrix, t_rec)

    t_exp = np.zeros_like(matrix) if not exact else exact_matrix([[0] * m] * m)
    power = eye
    for i in range(k + 1):
        coeff = sig[k - i] if i % 2 == 0 else -sig[k - i]
        t_exp = t_exp + coeff * power
        power = mat_mul(power, matrix)

    if exact:
        if not all(t_rec[i, j] == t_exp[i, j] for i in range(m) for j in range(m)):
            raise AssertionError("Newton recursion and explicit sum disagree")
    else:
        scale = 1.0 + float(np.max(np.abs(t_rec.astype(float))))
        if not np.allclose(t_rec.astype(float), t_exp.astype(float), atol=1e-9 * scale):
            raise AssertionError("Newton recursion and explicit sum disagree")
    return t_rec


def sigma_pair(b: np.ndarray, c: np.ndarray, k: int, l: int):
    """sigma_{k,l}(B, C) through the trace-product reduction.

    Uses sigma_{k,l} = sigma_k(B) sigma_l(C) - sum_i sigma_{k-i,l-i,i}(B,C,BC);
    for l = 1 this collapses to tr(T_k(B) C).
    """
    b = _as_square(b)
    c = _as_square(c)
    _common_dim([b, c])
    if k < 0 or l < 0:
        raise ValueError("sigma_pair needs non-negative orders")
    if k == 0:
        return sigma_k(c, l)
    if l == 0:
        return sigma_k(b, k)
    if l == 1:
        return trace(mat_mul(newton_transform(b, k), c))
    total = sigma_k(b, k) * sigma_k(c, l)
    bc = mat_mul(b, c)
    for i in range(1, min(k, l) + 1):
        total = total - sigma((b, c, bc), (k - i, l - i, i))
    return total


def _rank_at_most_one(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    m = matrix.shape[0]
    exact = is_exact(matrix)
    if exact:
        scale = 0
    else:
        scale = float(np.max(np.abs(matrix))) ** 2 + 1.0
    for i, j in combinations(range(m), 2):
        for p, q in combinations(range(m), 2):
            minor = matrix[i, p] * matrix[j, q] - matrix[i, q] * matrix[j, p]
            if exact:
                if minor != 0:
                    return False
            elif abs(minor) > tol * scale:
                return False
    return True


def sigma_rank_one_update(c: np.ndarray, a: np.ndarray, k: int):
    """sigma_k(C + A) for rank(A) <= 1, via sigma_k(C) + tr(T_{k-1}(C) A)."""
    c = _as_square(c)
    a = _as_square(a)
    _common_dim([c, a])
    if not _rank_at_most_one(a):
        raise ValueError("update matrix must have rank <= 1 (a 2x2 minor is nonzero)")
    if k == 0:
        return sigma_k(c, 0)
    return sigma_k(c, k) + trace(mat_mul(newton_transform(c, k - 1), a))


def sigma_sum_decomposition(c: np.ndarray, d: np.ndarray | None, rank_ones, k: int):
    """sigma_k(C + D + A_1 + ... + A_s) by the telescoping trace formula.

    Each A_i must have rank <= 1.  The C/D mixing enters through the pair
    invariants sigma_{k-j,j}(C, D); each rank-one term contributes
    tr(T_{k-1}(partial sum) A_i).
    """
    c = _as_square(c)
    mats = [c]
    if d is not None:
        d = _as_square(d)
        mats.append(d)
    rank_ones = [_as_square(a) for a in rank_ones]
    mats.extend(rank_ones)
    _common_dim(mats)
    for a in rank_ones:
        if not _rank_at_most_one(a):
            raise ValueError("summands after C and D must have rank <= 1")

    total = sigma_k(c, k)
    if d is not None:
        for j in range(1, k + 1):
            total = total + sigma((c, d), (k - j, j))
    partial = c if d is None else c + d
    for a in rank_ones:
        if k >= 1:
            total = total + trace(mat_mul(newton_transform(partial, k - 1), a))
        partial = partial + a
    return total


def weighted_multi_indices(weight: int):
    """All multi-indices lambda with ||lambda|| = weight, trailing zeros trimmed.

    A lambda with sum i*lambda_i = weight corresponds to an integer partition
    of ``weight`` (lambda_i = multiplicity of part i).
    """
    out = []
    for part in partitions(weight):
        length = max(part)
        lam = tuple(part.get(i, 0) for i in range(1, length + 1))
        out.append(MultiIndex(lam))
    out.sort()
    return out


def det_series_coefficients(b_list, order: int):
    """First ``order``+1 Taylor coefficients of det(I + sum_i t^i B_i).

    Coefficient k is sum over ||lambda|| = k of sigma_lambda(B_1,...,B_k);
    matrices beyond the supplied list are treated as zero.  The series
    converges for |t| below 1/limsup ||B_k||^{1/k}.
    """
    b_list = [_as_square(b) for b in b_list]
    m = _common_dim(b_list) if b_list else 0
    exact = any(is_exact(b) for b in b_list)
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0
    coeffs = [one]
    for k in range(1, order + 1):
        total = zero
        for lam in weighted_multi_indices(k):
            if lam.total > m:
                continue
            if len(lam) > len(b_list):
                if any(e != 0 for e in lam[len(b_list):]):
                    continue
                lam = MultiIndex(lam[: len(b_list)])
            total = total + sigma(tuple(b_list[: len(lam)]), lam)
        coeffs.append(total)
    return coeffs


def det_rank_one_sum(c_list, p_list):
    """det(I_m + sum_i C_i P_i^t) evaluated as det(I_k + G), G_ij = C_i . P_j.

    The rank-one-sum determinant reduces the m x m problem to the k x k Gram
    matrix of the column pairs (Weinstein-Aronszajn form; e.g. for k = 1 the
    value is 1 + C_1^t P_1).
    """
    if len(c_list) != len(p_list):
        raise ValueError("need equally many column and row vectors")
    k = len(c_list)
    if not 1 <= k <= ORACLE_MAX_MATRICES:
        raise ValueError(f"supported for 1..{ORACLE_MAX_MATRICES} vector pairs, got {k}")
    c_list = [np.asarray(c) if isinstance(c, np.ndarray) else np.asarray(c, dtype=float)
              for c in c_list]
    p_list = [np.asarray(p) if isinstance(p, np.ndarray) else np.asarray(p, dtype=float)
              for p in p_list]
    dims = {v.shape[0] for v in c_list} | {v.shape[0] for v in p_list}
    if len(dims) != 1:
        raise DimensionMismatchError("vectors must share one dimension")
    exact = any(v.dtype == object for v in c_list + p_list)
    gram = [[sum(c_list[i][t] * p_list[j][t] for t in range(c_list[i].shape[0]))
             + (1 if i == j else 0)
             for j in range(k)] for i in range(k)]
    if exact:
        return _det_rows([[Fraction(e) for e in row] for row in gram])
    return _det_rows(gram)

import random
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from folia.invariants import (
    DimensionMismatchError,
    MultiIndex,
    det,
    det_expand,
    det_rank_one_sum,
    det_series_coefficients,
    det_series_truncated,
    exact_matrix,
    identity,
    mat_mul,
    newton_transform,
    sigma,
    sigma_k,
    sigma_pair,
    sigma_rank_one_update,
    sigma_sum_decomposition,
    trace,
    weighted_multi_indices,
)


def rand_rational_matrix(rng, m, lo=-4, hi=4, den=3):
    return exact_matrix([[Fraction(rng.randint(lo, hi), rng.randint(1, den))
                          for _ in range(m)] for _ in range(m)])


def rand_invertible(rng, m):
    while True:
        q = rand_rational_matrix(rng, m)
        if det(q) != 0:
            return q


def exact_inverse(mat):
    m = mat.shape[0]
    aug = [[Fraction(mat[i, j]) for j in range(m)]
           + [Fraction(1 if i == j else 0) for j in range(m)] for i in range(m)]
    for col in range(m):
        piv = next(r for r in range(col, m) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [e / p for e in aug[col]]
        for r in range(m):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return exact_matrix([row[m:] for row in aug])


def all_multi_indices(k, max_total):
    if k == 0:
        yield ()
        return
    for head in range(max_total + 1):
        for tail in all_multi_indices(k - 1, max_total - head):
            yield (head,) + tail


def test_multi_index_norms():
    lam = MultiIndex((1, 0, 2))
    assert lam.total == 3
    assert lam.weight == 1 + 3 * 2
    with pytest.raises(ValueError):
        MultiIndex((1, -1))


def test_det_expand_identity_3x3():
    poly = det_expand([identity(3, exact=True)])
    assert poly.coefficient((0,)) == 1
    assert poly.coefficient((1,)) == 3
    assert poly.coefficient((2,)) == 3
    assert poly.coefficient((3,)) == 1


def test_det_expand_diag12():
    poly = det_expand([exact_matrix([[1, 0], [0, 2]])])
    # (1+t)(1+2t) = 1 + 3t + 2t^2
    assert poly.coefficient((1,)) == 3
    assert poly.coefficient((2,)) == 2


def test_det_expand_two_matrices_mixed_coefficient():
    poly = det_expand([identity(3, exact=True), exact_matrix(np.diag([1, 2, 0]))])
    assert poly.coefficient((1, 1)) == 6
    assert poly.coefficient((0, 0)) == 1


def test_sigma_trace_of_identity():
    assert sigma((identity(3, exact=True),), (1,)) == 3


def test_sigma_pair_example():
    a = exact_matrix([[1, 0], [0, 2]])
    b = exact_matrix([[1, 1], [0, 1]])
    assert sigma((a, b), (1, 1)) == 3
    assert trace(a) * trace(b) - trace(mat_mul(a, b)) == 3


def test_sigma_identity_with_diag():
    val = sigma((identity(3, exact=True), exact_matrix(np.diag([1, 2, 0]))), (1, 1))
    assert val == 6


def test_sigma_beyond_dimension_is_zero():
    a = rand_rational_matrix(random.Random(0), 3)
    assert sigma((a,), (4,)) == 0


def test_sigma_length_mismatch_errors():
    a = rand_rational_matrix(random.Random(1), 3)
    with pytest.raises(ValueError):
        sigma((a,), (1, 1))


def test_sigma_dimension_mismatch_errors():
    rng = random.Random(2)
    with pytest.raises(DimensionMismatchError):
        sigma((rand_rational_matrix(rng, 2), rand_rational_matrix(rng, 3)), (1, 1))


@pytest.mark.parametrize("m,k", [(2, 1), (3, 2), (4, 2), (5, 3)])
def test_sigma_matches_oracle(m, k):
    rng = random.Random(100 * m + k)
    mats = tuple(rand_rational_matrix(rng, m) for _ in range(k))
    poly = det_expand(mats)
    for lam in all_multi_indices(k, m):
        assert sigma(mats, lam) == poly.coefficient(lam), lam


def test_lemma_slots_zero_matrix_and_drop():
    rng = random.Random(5)
    m = 3
    zero = exact_matrix([[0] * m] * m)
    a2, a3 = (rand_rational_matrix(rng, m) for _ in range(2))
    assert sigma((zero, a2, a3), (1, 1, 1)) == 0
    assert sigma((a2, a3), (0, 2)) == sigma((a3,), (2,))


def test_lemma_permutation_equivariance():
    rng = random.Random(6)
    m = 3
    mats = tuple(rand_rational_matrix(rng, m) for _ in range(3))
    lam = (1, 0, 2)
    for s in permutations(range(3)):
        permuted = tuple(mats[s[i]] for i in range(3))
        lam_s = tuple(lam[s[i]] for i in range(3))
        assert sigma(permuted, lam_s) == sigma(mats, lam)


def test_lemma_identity_slot_binomial():
    rng = random.Random(7)
    m = 4
    a2 = rand_rational_matrix(rng, m)
    for lam1 in range(3):
        lam_hat = (2,)
        from math import comb
        expected = comb(m - 2, lam1) * sigma((a2,), lam_hat)
        assert sigma((identity(m, exact=True), a2), (lam1,) + lam_hat) == expected


def test_lemma_repeated_matrix_contraction():
    rng = random.Random(8)
    m = 4
    a = rand_rational_matrix(rng, m)
    b = rand_rational_matrix(rng, m)
    from math import comb
    lhs = sigma((a, a, b), (1, 2, 1))
    rhs = comb(3, 1) * sigma((a, b), (3, 1))
    assert lhs == rhs


def test_lemma_linearity_and_scaling():
    rng = random.Random(9)
    m = 3
    a, b, c = (rand_rational_matrix(rng, m) for _ in range(3))
    assert sigma((a + b, c), (1, 1)) == sigma((a, c), (1, 1)) + sigma((b, c), (1, 1))
    s = Fraction(3, 2)
    assert sigma((s * a, c), (2, 1)) == s ** 2 * sigma((a, c), (2, 1))


def test_conjugation_invariance():
    rng = random.Random(10)
    m = 3
    mats = tuple(rand_rational_matrix(rng, m) for _ in range(2))
    q = rand_invertible(rng, m)
    qinv = exact_inverse(q)
    conj = tuple(mat_mul(mat_mul(q, a), qinv) for a in mats)
    for lam in [(1, 0), (1, 1), (2, 1), (0, 3)]:
        assert sigma(conj, lam) == sigma(mats, lam)


def test_newton_transform_basics():
    a = exact_matrix([[1, 0], [0, 2]])
    t0 = newton_transform(a, 0)
    assert all(t0[i, j] == (1 if i == j else 0) for i in range(2) for j in range(2))
    t1 = newton_transform(a, 1)
    assert t1[0, 0] == 2 and t1[1, 1] == 1 and t1[0, 1] == 0


def test_newton_cayley_hamilton():
    rng = random.Random(11)
    for m in (2, 3, 4, 5):
        a = rand_rational_matrix(rng, m)
        tm = newton_transform(a, m)
        assert all(tm[i, j] == 0 for i in range(m) for j in range(m))


def test_newton_scaling_homogeneity():
    rng = random.Random(12)
    a = rand_rational_matrix(rng, 4)
    s = Fraction(-5, 3)
    for k in range(5):
        lhs = newton_transform(s * a, k)
        rhs = s ** k * newton_transform(a, k)
        assert all(lhs[i, j] == rhs[i, j] for i in range(4) for j in range(4))


def test_sigma_pair_trace_identity_k1():
    rng = random.Random(13)
    for _ in range(4):
        b = rand_rational_matrix(rng, 3)
        c = rand_rational_matrix(rng, 3)
        assert sigma_pair(b, c, 1, 1) == trace(b) * trace(c) - trace(mat_mul(b, c))
        assert sigma_pair(b, c, 1, 1) == sigma((b, c), (1, 1))


def test_sigma_pair_newton_trace_k2():
    rng = random.Random(14)
    b = rand_rational_matrix(rng, 4)
    c = rand_rational_matrix(rng, 4)
    assert sigma_pair(b, c, 2, 1) == trace(mat_mul(newton_transform(b, 2), c))
    assert sigma_pair(b, c, 2, 1) == sigma((b, c), (2, 1))


def test_sigma_pair_degenerate_orders():
    rng = random.Random(15)
    b = rand_rational_matrix(rng, 3)
    c = rand_rational_matrix(rng, 3)
    assert sigma_pair(b, c, 0, 2) == sigma_k(c, 2)
    assert sigma_pair(b, c, 2, 0) == sigma_k(b, 2)


def test_sigma_pair_general_matches_direct():
    rng = random.Random(16)
    b = rand_rational_matrix(rng, 4)
    c = rand_rational_matrix(rng, 4)
    for k, l in [(1, 1), (2, 2), (2, 1), (1, 3)]:
        assert sigma_pair(b, c, k, l) == sigma((b, c), (k, l))


def test_rank_one_update_zero():
    rng = random.Random(17)
    c = rand_rational_matrix(rng, 3)
    zero = exact_matrix([[0] * 3] * 3)
    for k in range(4):
        assert sigma_rank_one_update(c, zero, k) == sigma_k(c, k)


def test_rank_one_update_offdiagonal_example():
    c = exact_matrix(np.diag([1, 2, 3]))
    a = exact_matrix([[0, 1, 0], [0, 0, 0], [0, 0, 0]])  # e1 e2^t
    # T_1(C) is diagonal, so the trace term vanishes and sigma_2 is unchanged
    assert sigma_rank_one_update(c, a, 2) == 11
    assert sigma((c + a,), (2,)) == 11


def test_rank_one_update_random_matches_oracle():
    rng = random.Random(18)
    m = 4
    c = rand_rational_matrix(rng, m)
    u = [Fraction(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(m)]
    v = [Fraction(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(m)]
    a = exact_matrix([[u[i] * v[j] for j in range(m)] for i in range(m)])
    poly = det_expand([c + a])
    for k in range(1, m + 1):
        assert sigma_rank_one_update(c, a, k) == poly.coefficient((k,))


def test_rank_one_update_rejects_rank_two():
    rng = random.Random(19)
    c = rand_rational_matrix(rng, 3)
    with pytest.raises(ValueError):
        sigma_rank_one_update(c, identity(3, exact=True), 1)


def test_sum_decomposition_trivial():
    rng = random.Random(20)
    c = rand_rational_matrix(rng, 3)
    for k in range(4):
        assert sigma_sum_decomposition(c, None, [], k) == sigma_k(c, k)


def test_sum_decomposition_pair_identity():
    rng = random.Random(21)
    c = rand_rational_matrix(rng, 4)
    d = rand_rational_matrix(rng, 4)
    for k in range(5):
        direct = sigma_k(c + d, k)
        total = sum((sigma((c, d), (k - i, i)) for i in range(k + 1)), Fraction(0))
        assert total == direct
        assert sigma_sum_decomposition(c, d, [], k) == direct


def test_sum_decomposition_with_rank_ones():
    rng = random.Random(22)
    m = 4
    c = rand_rational_matrix(rng, m)
    d = rand_rational_matrix(rng, m)
    ones = []
    for _ in range(2):
        u = [Fraction(rng.randint(-2, 2), rng.randint(1, 2)) for _ in range(m)]
        v = [Fraction(rng.randint(-2, 2), rng.randint(1, 2)) for _ in range(m)]
        ones.append(exact_matrix([[u[i] * v[j] for j in range(m)] for i in range(m)]))
    total_matrix = c + d + ones[0] + ones[1]
    poly = det_expand([total_matrix])
    for k in range(m + 1):
        assert sigma_sum_decomposition(c, d, ones, k) == poly.coefficient((k,))


def test_weighted_multi_indices():
    lams = weighted_multi_indices(3)
    assert MultiIndex((3,)) in lams
    assert MultiIndex((1, 1)) in lams
    assert MultiIndex((0, 0, 1)) in lams
    assert all(lam.weight == 3 for lam in lams)
    assert len(lams) == 3


def test_det_series_single_matrix_reduces_to_sigma():
    rng = random.Random(23)
    a = rand_rational_matrix(rng, 3)
    coeffs = det_series_coefficients([a], 3)
    for k in range(4):
        assert coeffs[k] == sigma_k(a, k)


def test_det_series_jacobi_prefix():
    # B1 = A, B2 = -R/2, B3 = -RA/6: the t^2 coefficient is sigma_2(A) - tr(R)/2
    rng = random.Random(24)
    m = 3
    a = rand_rational_matrix(rng, m)
    r = rand_rational_matrix(rng, m)
    b2 = Fraction(-1, 2) * r
    b3 = Fraction(-1, 6) * mat_mul(r, a)
    coeffs = det_series_coefficients([a, b2, b3], 3)
    assert coeffs[2] == sigma_k(a, 2) - Fraction(1, 2) * trace(r)


def test_det_series_matches_truncated_polynomial_oracle():
    rng = random.Random(25)
    m = 3
    bs = [rand_rational_matrix(rng, m) for _ in range(3)]
    coeffs = det_series_coefficients(bs, 3)
    oracle = det_series_truncated(bs, 3)
    for k in range(4):
        assert coeffs[k] == oracle.coefficient(k)


def test_det_rank_one_sum_k1():
    c = exact_matrix([[1], [2], [3]])[:, 0]
    p = exact_matrix([[2], [0], [1]])[:, 0]
    val = det_rank_one_sum([c], [p])
    assert val == 1 + (1 * 2 + 2 * 0 + 3 * 1)


def test_det_rank_one_sum_k2_displayed_form():
    rng = random.Random(26)
    m = 5
    vecs = [np.array([Fraction(rng.randint(-3, 3)) for _ in range(m)], dtype=object)
            for _ in range(4)]
    c1, c2, p1, p2 = vecs
    dot = lambda x, y: sum(x[i] * y[i] for i in range(m))
    expected = (1 + dot(c1, p1) + dot(c2, p2)
                + dot(c1, p1) * dot(c2, p2) - dot(c1, p2) * dot(c2, p1))
    assert det_rank_one_sum([c1, c2], [p1, p2]) == expected


def test_det_rank_one_sum_matches_direct_determinant():
    rng = random.Random(27)
    m, k = 6, 3
    cs = [np.array([Fraction(rng.randint(-3, 3), rng.randint(1, 2)) for _ in range(m)],
                   dtype=object) for _ in range(k)]
    ps = [np.array([Fraction(rng.randint(-3, 3), rng.randint(1, 2)) for _ in range(m)],
                   dtype=object) for _ in range(k)]
    direct = identity(m, exact=True)
    for c, p in zip(cs, ps):
        direct = direct + np.outer(c, p)
    assert det_rank_one_sum(cs, ps) == det(direct)


def test_float_mode_sigma_close_to_exact():
    rng = random.Random(28)
    m = 4
    exact = rand_rational_matrix(rng, m)
    approx = exact.astype(float)
    for k in range(m + 1):
        assert sigma_k(approx, k) == pytest.approx(float(sigma_k(exact, k)), abs=1e-10)

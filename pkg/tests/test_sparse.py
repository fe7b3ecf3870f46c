import numpy as np
import pytest

from selinv.sparse import (MatrixFormatError, SparseMatrix, gen_arrow,
                           gen_laplacian_2d, gen_random_diag_dominant,
                           gen_tridiagonal, read_matrix_market,
                           symmetrize_pattern, write_matrix_market)


def test_from_coo_sums_duplicates():
    A = SparseMatrix.from_coo(3, [0, 0, 2, 1], [0, 0, 1, 2], [1.0, 2.0, 5.0, 7.0])
    D = A.to_dense()
    # [DERIVED] hand expansion: duplicate (0,0) entries sum to 3
    assert D[0, 0] == 3.0 and D[2, 1] == 5.0 and D[1, 2] == 7.0
    assert A.col_rows(0).tolist() == [0]


def test_invariants_enforced():
    with pytest.raises(ValueError):
        SparseMatrix(2, [0, 2, 2], [1, 0], [1.0, 1.0])  # rows not increasing
    with pytest.raises(MatrixFormatError):
        SparseMatrix.from_coo(2, [0], [5], [1.0])  # index out of range


def test_roundtrip_matrix_market(tmp_path):
    for A in [gen_tridiagonal(7), gen_arrow(5), gen_random_diag_dominant(30, 1)]:
        p = tmp_path / "m.mtx"
        write_matrix_market(A, str(p))
        B = read_matrix_market(str(p))
        assert A == B


def test_read_one_by_one(tmp_path):
    p = tmp_path / "t.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 5.0\n")
    A = read_matrix_market(str(p))
    # [TRIVIAL] smallest well-formed input
    assert A.n == 1 and A.to_dense()[0, 0] == 5.0


def test_read_symmetric_expands(tmp_path):
    p = tmp_path / "s.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real symmetric\n"
                 "2 2 2\n1 1 4.0\n2 1 -1.5\n")
    A = read_matrix_market(str(p))
    # [TRIVIAL] symmetry expansion: both (2,1) and (1,2) present
    D = A.to_dense()
    assert D[1, 0] == -1.5 and D[0, 1] == -1.5


def test_read_duplicate_summed(tmp_path):
    p = tmp_path / "d.mtx"
    lines = ["%%MatrixMarket matrix coordinate real general", "5 5 7",
             "1 1 2.0", "2 2 2.0", "3 3 2.0", "4 4 2.0", "5 5 2.0",
             "1 2 0.5", "1 2 0.25"]
    p.write_text("\n".join(lines) + "\n")
    A = read_matrix_market(str(p))
    # [DERIVED] hand expansion of the file: duplicate (1,2) sums to 0.75
    assert A.to_dense()[0, 1] == 0.75


def test_read_errors(tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("this is not a matrix\n")
    with pytest.raises(MatrixFormatError):
        read_matrix_market(str(bad))
    rect = tmp_path / "rect.mtx"
    rect.write_text("%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n")
    with pytest.raises(MatrixFormatError):
        read_matrix_market(str(rect))
    oob = tmp_path / "oob.mtx"
    oob.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
    with pytest.raises(MatrixFormatError):
        read_matrix_market(str(oob))


def test_symmetrize_idempotent_and_preserves_values():
    A = gen_laplacian_2d(3, 3)
    S = symmetrize_pattern(A)
    assert S == A  # symmetric input unchanged
    # strictly lower bidiagonal -> tridiagonal pattern with explicit zeros above
    B = SparseMatrix.from_coo(4, [1, 2, 3], [0, 1, 2], [1.0, 2.0, 3.0])
    S = symmetrize_pattern(B)
    assert np.array_equal(S.to_dense(), B.to_dense())
    assert S.col_rows(1).tolist() == [0, 2]  # (0,1) is now structural
    assert symmetrize_pattern(S) == S


def test_symmetrize_matches_dense_boolean_oracle():
    rng = np.random.default_rng(7)
    D = np.where(rng.random((20, 20)) < 0.15, rng.standard_normal((20, 20)), 0.0)
    A = SparseMatrix.from_dense(D)
    S = symmetrize_pattern(A)
    # [DERIVED] dense boolean OR oracle for the union pattern
    want = (D != 0) | (D.T != 0)
    got = np.zeros_like(want)
    for j in range(20):
        got[S.col_rows(j), j] = True
    assert np.array_equal(got, want)
    assert np.array_equal(S.to_dense(), D)  # values preserved, added are zero


def test_gen_laplacian_2d():
    assert np.array_equal(gen_laplacian_2d(1, 1).to_dense(), [[4.0]])
    assert np.array_equal(gen_laplacian_2d(2, 1).to_dense(),
                          [[4.0, -1.0], [-1.0, 4.0]])
    A = gen_laplacian_2d(3, 3)
    assert A.n == 9 and A.nnz == 33
    # [DERIVED] dense eigensolve oracle: SPD
    assert np.linalg.eigvalsh(A.to_dense()).min() > 0
    D = A.to_dense()
    assert np.all(D.sum(axis=1) >= 0)
    assert np.all(2 * np.abs(np.diag(D)) >= np.abs(D).sum(axis=1))  # diag dominant


def test_generators_structure():
    T = gen_tridiagonal(5).to_dense()
    assert np.array_equal(T, 4 * np.eye(5) - np.eye(5, k=1) - np.eye(5, k=-1))
    Ar = gen_arrow(4).to_dense()
    assert Ar[3, 3] == 4 and np.all(Ar[3, :3] == -1) and np.all(Ar[:3, 3] == -1)
    R = gen_random_diag_dominant(50, seed=3)
    D = R.to_dense()
    assert np.all(2 * np.abs(np.diag(D)) > np.abs(D).sum(axis=1) - 1e-12)
    assert R == gen_random_diag_dominant(50, seed=3)  # deterministic

"""
Integer-lattice kernel used by every integer-forcing rate computation.

All routines work on Gram matrices ``G = F^T F`` rather than on bases, since
the rate expressions only ever provide the quadratic form. Integer vectors are
compared with the form ``a^T G a``; a vector and its negation are treated as
the same coefficient vector, normalized so its first nonzero entry is positive.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np
from scipy.linalg import lapack

from .exceptions import ContractError, DefinitenessError, RefusalError

DEFAULT_DELTA = 0.99
DEFAULT_COORD_BOUND = 8
MAX_ORACLE_DIM = 5


@dataclass(frozen=True)
class IntegerCoeffMatrix:
    """Full-rank integer coefficient matrix with one candidate vector per row.

    Attributes
    ----------
    entries : ndarray of int64, shape (n, n)
        Coefficient vectors as rows, sorted by ascending quadratic form.
    row_forms : ndarray of float, shape (n,)
        ``a^T G a`` for each row, same order as ``entries``.
    method : str
        How the matrix was selected (``"lll"``, ``"enumerate"``,
        ``"identity"``, ``"candidate"``).
    """

    entries: np.ndarray
    row_forms: np.ndarray
    method: str = "lll"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def max_form(self):
        return float(self.row_forms[-1])

    @property
    def dim(self):
        return self.entries.shape[0]


def check_gram(G, tol=1e-12):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
        raise ContractError(f"Gram matrix must be square and nonempty, got shape {G.shape}")
    scale = max(1.0, float(np.max(np.abs(G))))
    if np.max(np.abs(G - G.T)) > tol * scale:
        raise ContractError("Gram matrix is not symmetric")
    return G


def gram_factor(M):
    """Upper-triangular ``F`` with ``F^T F = M``.

    Raises
    ------
    DefinitenessError
        If ``M`` is not positive definite; ``pivot`` names the first leading
        minor (zero-based) that failed.
    """
    M = check_gram(M)
    F, info = lapack.dpotrf(M, lower=0, clean=1)
    if info > 0:
        raise DefinitenessError(info - 1)
    if info < 0:
        raise ContractError(f"invalid argument {-info} passed to Cholesky")
    return np.triu(F)


def bareiss_det(A):
    """Exact determinant of a square integer matrix (fraction-free elimination)."""
    M = [[int(x) for x in row] for row in np.asarray(A).tolist()]
    n = len(M)
    if n == 0:
        return 1
    sign = 1
    prev = 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k] != 0:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return 0
        pivot = M[k][k]
        for i in range(k + 1, n):
            row_i = M[i]
            row_k = M[k]
            mik = row_i[k]
            for j in range(k + 1, n):
                row_i[j] = (row_i[j] * pivot - mik * row_k[j]) // prev
            row_i[k] = 0
        prev = pivot
    return sign * M[n - 1][n - 1]


def integer_rank(A):
    """Exact rank of an integer matrix (rows or columns, either way)."""
    M = [[int(x) for x in row] for row in np.asarray(A).tolist()]
    if not M:
        return 0
    rows, cols = len(M), len(M[0])
    rank = 0
    prev = 1
    for c in range(cols):
        pivot_row = next((r for r in range(rank, rows) if M[r][c] != 0), None)
        if pivot_row is None:
            continue
        M[rank], M[pivot_row] = M[pivot_row], M[rank]
        pivot = M[rank][c]
        for r in range(rank + 1, rows):
            mrc = M[r][c]
            for j in range(c + 1, cols):
                M[r][j] = (M[r][j] * pivot - mrc * M[rank][j]) // prev
            M[r][c] = 0
        prev = pivot
        rank += 1
        if rank == rows:
            break
    return rank


def is_unimodular(U):
    return abs(bareiss_det(U)) == 1


def lll_reduce(G, delta=DEFAULT_DELTA, start=None):
    """LLL-reduce the lattice with Gram matrix ``G``.

    Parameters
    ----------
    G : array_like, shape (n, n)
        Positive definite Gram matrix of the input basis.
    delta : float
        Lovasz parameter in (0.25, 1).
    start : array_like of int, optional
        Unimodular matrix whose columns seed the reduction (warm start).

    Returns
    -------
    G_red : ndarray
        ``U^T G U``, the Gram matrix of the reduced basis.
    U : ndarray of int64
        Unimodular change of basis; column ``k`` is the coefficient vector of
        reduced basis vector ``k``.
    """
    if not 0.25 < delta < 1:
        raise ContractError(f"delta must lie in (0.25, 1), got {delta}")
    G = check_gram(G)
    n = G.shape[0]
    if start is None:
        basis = [[int(i == j) for j in range(n)] for i in range(n)]
        g = G.tolist()
    else:
        U0 = np.asarray(start, dtype=np.int64)
        basis = U0.T.tolist()
        g = (U0.T @ G @ U0).tolist()
    mu = [[0.0] * n for _ in range(n)]
    B = [0.0] * n
    B[0] = g[0][0]
    if B[0] <= 0:
        raise DefinitenessError(0)

    def size_reduce(k, l):
        m = mu[k][l]
        if abs(m) <= 0.5:
            return
        q = round(m)
        gk, gl = g[k], g[l]
        gkk = gk[k] - 2 * q * gk[l] + q * q * gl[l]
        for i in range(n):
            gk[i] -= q * gl[i]
        gk[k] = gkk
        for i in range(n):
            g[i][k] = gk[i]
        bk, bl = basis[k], basis[l]
        for i in range(n):
            bk[i] -= q * bl[i]
        mu[k][l] -= q
        mk, ml = mu[k], mu[l]
        for i in range(l):
            mk[i] -= q * ml[i]

    def swap(k, kmax):
        g[k], g[k - 1] = g[k - 1], g[k]
        for row in g:
            row[k], row[k - 1] = row[k - 1], row[k]
        basis[k], basis[k - 1] = basis[k - 1], basis[k]
        mk, mk1 = mu[k], mu[k - 1]
        for j in range(k - 1):
            mk[j], mk1[j] = mk1[j], mk[j]
        m = mk[k - 1]
        b_new = B[k] + m * m * B[k - 1]
        mk[k - 1] = m * B[k - 1] / b_new
        B[k] = B[k - 1] * B[k] / b_new
        B[k - 1] = b_new
        for i in range(k + 1, kmax + 1):
            mi = mu[i]
            t = mi[k]
            mi[k] = mi[k - 1] - m * t
            mi[k - 1] = t + mk[k - 1] * mi[k]

    k, kmax = 1, 0
    while k < n:
        if k > kmax:
            kmax = k
            gk = g[k]
            mk = mu[k]
            for j in range(k):
                s = gk[j]
                mj = mu[j]
                for i in range(j):
                    s -= mj[i] * mk[i] * B[i]
                mk[j] = s / B[j]
            s = gk[k]
            for j in range(k):
                s -= mk[j] * mk[j] * B[j]
            if s <= 0:
                raise DefinitenessError(k)
            B[k] = s
        size_reduce(k, k - 1)
        if B[k] < (delta - mu[k][k - 1] ** 2) * B[k - 1]:
            swap(k, kmax)
            k = max(1, k - 1)
        else:
            for l in range(k - 2, -1, -1):
                size_reduce(k, l)
            k += 1

    U = np.array(basis, dtype=np.int64).T
    return np.array(g), U


def normalize_sign(a):
    """Flip ``a`` so its first nonzero coordinate is positive."""
    a = np.asarray(a, dtype=np.int64)
    nz = np.flatnonzero(a)
    if nz.size and a[nz[0]] < 0:
        return -a
    return a


def quadratic_forms(A, G):
    """``a^T G a`` for each row ``a`` of ``A``."""
    A = np.asarray(A, dtype=float)
    return np.einsum("ij,jk,ik->i", A, np.asarray(G, dtype=float), A)


def sort_rows(A, G, method="lll", meta=None):
    """Normalize signs and order rows by ascending form.

    Equal forms are ordered by descending lexicographic order of the
    sign-normalized vectors, so unit vectors come out as ``e_1, e_2, ...``.
    """
    rows = [normalize_sign(a) for a in np.asarray(A, dtype=np.int64)]
    forms = quadratic_forms(np.array(rows), G)
    order = sorted(range(len(rows)), key=lambda i: (forms[i], tuple(-rows[i])))
    entries = np.array([rows[i] for i in order], dtype=np.int64)
    return IntegerCoeffMatrix(entries, forms[order], method, meta or {})


def shortest_independent_vectors_bruteforce(G, coord_bound=DEFAULT_COORD_BOUND):
    """Exhaustive oracle for the best full-rank set of integer vectors.

    Enumerates every integer vector with ``|a_i| <= coord_bound`` and greedily
    keeps the shortest ones that stay linearly independent. Greedy selection
    over a matroid minimizes the largest kept form, so the result is optimal
    among bounded-coordinate sets. Test and small-dimension use only.
    """
    G = check_gram(G)
    n = G.shape[0]
    if n > MAX_ORACLE_DIM:
        raise RefusalError(f"enumeration oracle supports dim <= {MAX_ORACLE_DIM}, got {n}")
    if coord_bound < 1:
        raise ContractError("coord_bound must be a positive integer")
    span = np.arange(-coord_bound, coord_bound + 1)
    grid = np.array(list(itertools.product(span, repeat=n)), dtype=np.int64)
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    keep = nz.any(axis=1) & (grid[np.arange(len(grid)), first] > 0)
    cands = grid[keep]
    forms = np.einsum("ij,jk,ik->i", cands.astype(float), G, cands.astype(float))
    # lexsort: last key is primary
    keys = [-cands[:, j] for j in range(n - 1, -1, -1)] + [forms]
    order = np.lexsort(keys)
    chosen = []
    for idx in order:
        trial = chosen + [cands[idx]]
        if integer_rank(np.array(trial)) == len(trial):
            chosen = trial
            if len(chosen) == n:
                break
    return sort_rows(np.array(chosen), G, method="enumerate")


def full_rank_permutation(A):
    """Column order making every leading square submatrix of ``A`` nonsingular.

    Returns ``perm`` such that ``A[:m, perm[:m]]`` has nonzero determinant
    for ``m = 1..n``. Columns are chosen greedily, smallest index first; the
    greedy choice always succeeds when ``A`` is full rank.
    """
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ContractError("integer matrix must be square")
    perm = []
    remaining = list(range(n))
    for m in range(1, n + 1):
        for j in remaining:
            if bareiss_det(A[:m, perm + [j]]) != 0:
                perm.append(j)
                remaining.remove(j)
                break
        else:
            raise ContractError("integer matrix is singular")
    return perm


def leading_minors_nonzero(A, perm):
    A = np.asarray(A, dtype=np.int64)[:, list(perm)]
    return all(bareiss_det(A[:m, :m]) != 0 for m in range(1, A.shape[0] + 1))


def select_integer_matrix(G, mode="lll", delta=DEFAULT_DELTA, candidates=(),
                          coord_bound=DEFAULT_COORD_BOUND):
    """Heuristic solver for the min-max full-rank integer matrix.

    Minimizes ``max_i a_i^T G a_i`` over full-rank integer matrices. The
    LLL-reduced basis is compared against the identity and any supplied
    ``candidates`` (e.g. the matrix found at a nearby distortion); the one
    with the smallest largest form wins.

    Parameters
    ----------
    G : array_like
        Positive definite Gram matrix.
    mode : {"lll", "lll_then_enumerate"}
        ``lll_then_enumerate`` additionally runs the exhaustive oracle
        (dimension <= 5 only).
    candidates : iterable of array_like
        Extra full-rank integer matrices (rows are coefficient vectors).
    """
    G = check_gram(G)
    n = G.shape[0]
    if mode not in ("lll", "lll_then_enumerate"):
        raise ContractError(f"unknown selector mode {mode!r}")
    if mode == "lll_then_enumerate" and n > MAX_ORACLE_DIM:
        raise RefusalError(f"enumeration mode supports dim <= {MAX_ORACLE_DIM}, got {n}")
    start = None
    cands = list(candidates)
    if cands:
        start = np.asarray(cands[0], dtype=np.int64).T
        if not is_unimodular(start):
            start = None
    _, U = lll_reduce(G, delta, start=start)
    best = sort_rows(U.T, G, method="lll")
    pool = [(np.eye(n, dtype=np.int64), "identity")]
    pool += [(np.asarray(c, dtype=np.int64), "candidate") for c in cands]
    for mat, label in pool:
        forms = quadratic_forms(mat, G)
        if forms.max() < best.max_form * (1 - 1e-12):
            if integer_rank(mat) == n:
                best = sort_rows(mat, G, method=label)
    if mode == "lll_then_enumerate":
        oracle = shortest_independent_vectors_bruteforce(G, coord_bound)
        if oracle.max_form < best.max_form * (1 - 1e-12):
            best = oracle
    return best

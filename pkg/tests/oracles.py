"""
Slow reference implementations used as test oracles.

Each routine computes its quantity along a different path than the package:
explicit filters instead of log-determinant identities, exact rational
arithmetic instead of fraction-free elimination, brute-force permutations
instead of dynamic programming. None of them imports ``ifcran``.
"""

from fractions import Fraction
import itertools
import math

import numpy as np


def rank_fraction(rows):
    """Exact rank by Gaussian elimination over the rationals."""
    M = [[Fraction(int(x)) for x in r] for r in rows]
    if not M:
        return 0
    rank, ncol = 0, len(M[0])
    for c in range(ncol):
        piv = next((r for r in range(rank, len(M)) if M[r][c] != 0), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        for r in range(len(M)):
            if r != rank and M[r][c] != 0:
                f = M[r][c] / M[rank][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[rank])]
        rank += 1
    return rank


def det_leibniz(A):
    """Exact integer determinant by the permutation expansion (n <= 6)."""
    A = [[int(x) for x in r] for r in A]
    n = len(A)
    total = 0
    for p in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if p[i] > p[j])
        prod = 1
        for i in range(n):
            prod *= A[i][p[i]]
        total += -prod if inv % 2 else prod
    return total


def min_max_form(G, bound=3):
    """Smallest achievable largest form over full-rank integer sets, |a_i| <= bound."""
    n = G.shape[0]
    vecs = [np.array(v) for v in itertools.product(range(-bound, bound + 1), repeat=n) if any(v)]
    vecs.sort(key=lambda v: float(v @ G @ v))
    chosen = []
    for v in vecs:
        if rank_fraction(chosen + [v]) == len(chosen) + 1:
            chosen.append(v)
            if len(chosen) == n:
                return float(v @ G @ v)
    raise AssertionError("no full-rank set found")


def shortest_vector_form(G, bound=3):
    n = G.shape[0]
    return min(float(np.array(v) @ G @ np.array(v))
               for v in itertools.product(range(-bound, bound + 1), repeat=n) if any(v))


# ---------------------------------------------------------------------------
# source coding

def conditional_variance(K, j, given, d):
    """Var(y_j | y_i + q_i, i in given) with quantization noise variances ``d``."""
    if not given:
        return K[j, j]
    g = list(given)
    S = K[np.ix_(g, g)] + np.diag([d[i] for i in g])
    c = K[j, g]
    return K[j, j] - c @ np.linalg.inv(S) @ c


def wz_rates_conditional(K, d, order):
    """WZ rate of each basestation in decompression order, via conditional variances."""
    return [0.5 * math.log2(1 + conditional_variance(K, j, order[:l], d) / d[j])
            for l, j in enumerate(order)]


def bisect(fn, target, lo, hi, iters=200):
    """Decreasing ``fn``: smallest-gap ``x`` with ``fn(x) <= target``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def wz_calibrate_bisection(K, c, order):
    """Per-basestation bisection on the determinant-ratio WZ rate."""
    L = K.shape[0]
    d = np.zeros(L)
    for l, j in enumerate(order):
        T = list(order[: l + 1])

        def rate(x):
            dd = d.copy()
            dd[j] = x
            M = K + np.diag(dd)
            num = np.linalg.det(M[np.ix_(T, T)])
            den = np.linalg.det(M[np.ix_(T[:-1], T[:-1])]) if l else 1.0
            return 0.5 * math.log2(num / den) - 0.5 * math.log2(x)

        d[j] = bisect(rate, c, 0.0, K[j, j] * 4)
    return d


# ---------------------------------------------------------------------------
# channel decoding

def ml_rate(H, P, D):
    L, K = H.shape
    N = np.eye(L) + np.diag(D)
    best = math.inf
    for m in range(1, K + 1):
        for S in itertools.combinations(range(K), m):
            HS = H[:, list(S)]
            r = math.log2(np.linalg.det(P * HS @ HS.T + N) / np.linalg.det(N)) / (2 * m)
            best = min(best, r)
    return best


def mmse_sinr_filter(H, P, D, users=None, k=0):
    """SINR of user ``k`` from an explicit MMSE filter against ``users``."""
    L, K = H.shape
    users = list(range(K)) if users is None else list(users)
    N = np.eye(L) + np.diag(D)
    C = P * H[:, users] @ H[:, users].T + N
    b = P * np.linalg.solve(C, H[:, k])
    sig = P * (b @ H[:, k]) ** 2
    interf = sum(P * (b @ H[:, j]) ** 2 for j in users if j != k)
    return sig / (interf + b @ N @ b)


def mmse_rate(H, P, D):
    return min(0.5 * math.log2(1 + mmse_sinr_filter(H, P, D, k=k)) for k in range(H.shape[1]))


def sic_rates_for_order(H, P, D, order):
    rem = list(order)
    out = []
    for k in order:
        out.append(0.5 * math.log2(1 + mmse_sinr_filter(H, P, D, users=rem, k=k)))
        rem.remove(k)
    return out


def sic_best(H, P, D):
    """Best symmetric SIC rate and the first order (lexicographic) attaining it."""
    best, arg = -math.inf, None
    for order in itertools.permutations(range(H.shape[1])):
        r = min(sic_rates_for_order(H, P, D, order))
        if r > best + 1e-10:
            best, arg = r, order
    return best, arg


def ifcc_effective_variance(H, P, D, a):
    """Effective noise of combination ``a`` with the explicit MMSE projection."""
    L = H.shape[0]
    N = np.eye(L) + np.diag(D)
    a = np.asarray(a, dtype=float)
    b = P * np.linalg.solve(P * H @ H.T + N, H @ a)
    return b @ N @ b + P * np.sum((H.T @ b - a) ** 2)


def ifcc_rate(H, P, D, bound=3):
    """Parallel IF rate with the best full-rank integer set over |a_i| <= bound."""
    K = H.shape[1]
    vecs = [np.array(v) for v in itertools.product(range(-bound, bound + 1), repeat=K) if any(v)]
    vecs.sort(key=lambda v: ifcc_effective_variance(H, P, D, v))
    chosen = []
    for v in vecs:
        if rank_fraction(chosen + [v]) == len(chosen) + 1:
            chosen.append(v)
            if len(chosen) == K:
                return max(0.0, 0.5 * math.log2(P / ifcc_effective_variance(H, P, D, v)))

"""
Symmetric rates of the central-processor decoders.

The central processor sees ``y_hat = H x + z + q`` with unit-variance noise
``z`` and quantization noise ``q ~ N(0, D)``. Four decoders are covered:
joint ML, linear MMSE, MMSE with successive interference cancellation and
integer-forcing channel coding (IFCC) with parallel decoding.

The ``*_batch`` helpers take a stack of distortion vectors ``D`` with shape
(n, L) for one ``H`` and return one rate per row; the scalar functions wrap
them.
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np
from scipy import linalg

from . import lattice
from .exceptions import ContractError, RefusalError

MAX_ML_USERS = 16
MAX_EXHAUSTIVE_SIC = 8
# relative tolerance when comparing candidate decoding orders
ORDER_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class EffectiveChannel:
    """Channel ``H`` (L x K), power ``P`` and quantization distortions ``D``.

    ``D = 0`` models unlimited fronthaul.
    """

    H: np.ndarray
    P: float
    D: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        D = np.asarray(self.D, dtype=float).reshape(-1)
        if D.size == 1 and H.shape[0] != 1:
            D = np.full(H.shape[0], float(D[0]))
        if D.shape[0] != H.shape[0]:
            raise ContractError(f"D has {D.shape[0]} entries for {H.shape[0]} basestations")
        if np.any(D < 0) or not np.all(np.isfinite(D)):
            raise ContractError("distortions must be finite and nonnegative")
        if not self.P > 0:
            raise ContractError(f"power must be positive, got {self.P}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "D", D)

    @property
    def L(self):
        return self.H.shape[0]

    @property
    def K(self):
        return self.H.shape[1]

    @classmethod
    def from_channel(cls, h, D):
        return cls(h.H, h.P, D)


def _as_batch(H, D):
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[None, :]
    if D.shape[1] != H.shape[0]:
        raise ContractError("distortion batch does not match the number of basestations")
    if np.any(D < 0):
        raise ContractError("distortions must be nonnegative")
    return D


def _subset_masks(K):
    """Boolean table (2^K, K); row ``m`` marks the users in bitmask ``m``."""
    m = np.arange(2**K)
    return (m[:, None] >> np.arange(K)[None, :]) & 1 == 1


def subset_logdets(H, P, D):
    """``0.5 log2 |I + D + P H_S H_S^T|`` for every user subset ``S``.

    Returns (n, 2^K), indexed by subset bitmask (bit ``k`` = user ``k``).
    """
    H = np.asarray(H, dtype=float)
    D = _as_batch(H, D)
    L, K = H.shape
    masks = _subset_masks(K)
    # P H_S H_S^T for every subset, (2^K, L, L)
    HS = H[None, :, :] * masks[:, None, :]
    C = P * np.einsum("slk,smk->slm", HS, HS)
    noise = (1.0 + D)[:, None, :, None] * np.eye(L)  # (n, 1, L, L)
    _, logdet = np.linalg.slogdet(noise + C[None])
    return 0.5 * logdet / math.log(2)


def rate_ml_batch(H, P, D):
    H = np.asarray(H, dtype=float)
    K = H.shape[1]
    if K > MAX_ML_USERS:
        raise RefusalError(f"joint ML enumerates 2^K subsets; K <= {MAX_ML_USERS} supported")
    f = subset_logdets(H, P, D)
    sizes = _subset_masks(K).sum(axis=1)
    per_subset = (f[:, 1:] - f[:, :1]) / sizes[None, 1:]
    return np.maximum(per_subset.min(axis=1), 0.0)


def rate_ml(ec):
    """Symmetric rate of joint ML decoding.

    Minimum over nonempty user subsets ``S`` of
    ``log2(|P H_S H_S^T + I + D| / |I + D|) / (2 |S|)``.
    """
    return float(rate_ml_batch(ec.H, ec.P, ec.D)[0])


def _sinr_batch(H, P, D):
    """Per-user MMSE SINR, (n, K).

    With ``M = P H H^T + I + D`` and ``q_k = P h_k^T M^{-1} h_k``, the MMSE
    filter ``b_k = P h_k^T M^{-1}`` gives ``SINR_k = q_k / (1 - q_k)``.
    """
    H = np.asarray(H, dtype=float)
    D = _as_batch(H, D)
    L = H.shape[0]
    M = P * H @ H.T + np.eye(L)
    M = M[None] + D[:, :, None] * np.eye(L)[None]
    X = np.linalg.solve(M, np.broadcast_to(H, (len(D),) + H.shape))
    q = P * np.einsum("lk,nlk->nk", H, X)
    q = np.clip(q, 0.0, None)
    return q / np.maximum(1.0 - q, np.finfo(float).tiny)


def rate_mmse_batch(H, P, D):
    return 0.5 * np.log2(1.0 + _sinr_batch(H, P, D)).min(axis=1)


def rate_mmse(ec):
    """Symmetric rate of a linear MMSE receiver (worst user)."""
    return float(rate_mmse_batch(ec.H, ec.P, ec.D)[0])


def sic_order_rates(ec, order):
    """Rate of each user when decoding in ``order`` with MMSE-SIC.

    Entry ``i`` is the rate of user ``order[i]``; the interference it sees
    comes from users decoded after it.
    """
    K = ec.K
    order = [int(k) for k in order]
    if sorted(order) != list(range(K)):
        raise ContractError(f"order {order} is not a permutation of 0..{K - 1}")
    f = subset_logdets(ec.H, ec.P, ec.D)[0]
    mask = (1 << K) - 1
    rates = np.empty(K)
    for i, k in enumerate(order):
        rates[i] = f[mask] - f[mask & ~(1 << k)]
        mask &= ~(1 << k)
    return rates


def _sic_dp(f, K):
    """Best symmetric SIC rate for every set of still-undecoded users.

    ``f`` is (n, 2^K). ``best[:, S] = max_k min(f[S] - f[S \\ k], best[S \\ k])``.
    """
    n = f.shape[0]
    best = np.empty((n, 2**K))
    best[:, 0] = np.inf
    for S in range(1, 2**K):
        vals = [np.minimum(f[:, S] - f[:, S & ~(1 << k)], best[:, S & ~(1 << k)])
                for k in range(K) if S >> k & 1]
        best[:, S] = np.max(vals, axis=0)
    return best


def rate_mmse_sic_batch(H, P, D):
    """Best symmetric MMSE-SIC rate over all decoding orders, per row of ``D``."""
    H = np.asarray(H, dtype=float)
    K = H.shape[1]
    if K > MAX_EXHAUSTIVE_SIC:
        raise RefusalError(f"exhaustive SIC ordering supports K <= {MAX_EXHAUSTIVE_SIC}")
    f = subset_logdets(H, P, D)
    return np.maximum(_sic_dp(f, K)[:, -1], 0.0)


def rate_mmse_sic(ec, order_policy=None):
    """Symmetric rate of an MMSE-SIC decoder.

    Parameters
    ----------
    ec : EffectiveChannel
    order_policy : {"exhaustive", "greedy"} or sequence of int, optional
        ``"exhaustive"`` maximizes the symmetric rate over all decoding
        orders (ties go to the lexicographically smallest order),
        ``"greedy"`` decodes next the user with the highest current SINR,
        and a sequence fixes the order. Defaults to exhaustive for
        ``K <= 8`` and greedy otherwise.

    Returns
    -------
    rate : float
    order : tuple of int
    """
    K = ec.K
    if order_policy is None:
        order_policy = "exhaustive" if K <= MAX_EXHAUSTIVE_SIC else "greedy"
    if isinstance(order_policy, str):
        if order_policy == "exhaustive":
            if K > MAX_EXHAUSTIVE_SIC:
                raise RefusalError(
                    f"exhaustive SIC ordering supports K <= {MAX_EXHAUSTIVE_SIC}")
            f = subset_logdets(ec.H, ec.P, ec.D)
            best = _sic_dp(f, K)[0]
            f = f[0]
            # walk down choosing the smallest user that keeps the optimum
            target = best[-1]
            order, S = [], (1 << K) - 1
            while S:
                for k in range(K):
                    if not S >> k & 1:
                        continue
                    R = S & ~(1 << k)
                    v = min(f[S] - f[R], best[R])
                    if v >= target - ORDER_TIE_RTOL * max(1.0, abs(target)):
                        order.append(k)
                        S = R
                        break
            order = tuple(order)
        elif order_policy == "greedy":
            f = subset_logdets(ec.H, ec.P, ec.D)[0]
            order, S = [], (1 << K) - 1
            while S:
                cand = [(f[S] - f[S & ~(1 << k)], -k) for k in range(K) if S >> k & 1]
                k = -max(cand)[1]
                order.append(k)
                S &= ~(1 << k)
            order = tuple(order)
        else:
            raise ContractError(f"unknown SIC order policy {order_policy!r}")
    else:
        order = tuple(int(k) for k in order_policy)
    rates = sic_order_rates(ec, order)
    return max(float(rates.min()), 0.0), order


def ifcc_gram(H, P, D):
    """Effective-noise Gram ``G_c = (I/P + H^T (I + D)^{-1} H)^{-1}``.

    ``a^T G_c a`` is the effective noise variance of the integer combination
    ``a`` after MMSE equalization.
    """
    H = np.asarray(H, dtype=float)
    D = np.asarray(D, dtype=float)
    K = H.shape[1]
    M = np.eye(K) / P + H.T @ (H / (1.0 + D)[:, None])
    c = linalg.cho_factor(M, lower=True)
    G = linalg.cho_solve(c, np.eye(K))
    return 0.5 * (G + G.T)


def rate_ifcc(ec, mode="lll", delta=lattice.DEFAULT_DELTA, candidates=()):
    """Symmetric rate of integer-forcing channel decoding (parallel).

    Returns
    -------
    rate : float
        ``min_m 0.5 log2+(P / a_m^T G_c a_m)`` over rows of the selected ``A_c``.
    A : IntegerCoeffMatrix
    """
    G = ifcc_gram(ec.H, ec.P, ec.D)
    A = lattice.select_integer_matrix(G, mode=mode, delta=delta, candidates=candidates)
    ratio = ec.P / A.max_form
    return (0.5 * math.log2(ratio) if ratio > 1 else 0.0), A


def rate_ifcc_fixed(ec, A):
    """IFCC rate for a given full-rank integer matrix ``A`` (rows are equations)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    if lattice.integer_rank(A) < ec.K:
        raise ContractError("integer matrix must have full rank")
    forms = lattice.quadratic_forms(A, ifcc_gram(ec.H, ec.P, ec.D))
    ratio = ec.P / forms.max()
    return 0.5 * math.log2(ratio) if ratio > 1 else 0.0


def rate_decoder_batch(decoder, H, P, D):
    """Rate of ``decoder`` for every row of the distortion batch ``D``."""
    if decoder == "ml":
        return rate_ml_batch(H, P, D)
    if decoder == "mmse":
        return rate_mmse_batch(H, P, D)
    if decoder == "mmse_sic":
        H = np.asarray(H, dtype=float)
        if H.shape[1] <= MAX_EXHAUSTIVE_SIC:
            return rate_mmse_sic_batch(H, P, D)
    D = _as_batch(np.asarray(H, dtype=float), D)
    return np.array([rate_decoder(decoder, EffectiveChannel(H, P, d)) for d in D])


def rate_decoder(decoder, ec, delta=lattice.DEFAULT_DELTA):
    """Symmetric rate of ``decoder`` in {"ml", "mmse", "mmse_sic", "ifcc"}."""
    if decoder == "ml":
        return rate_ml(ec)
    if decoder == "mmse":
        return rate_mmse(ec)
    if decoder == "mmse_sic":
        return rate_mmse_sic(ec)[0]
    if decoder == "ifcc":
        return rate_ifcc(ec, delta=delta)[0]
    raise ContractError(f"unknown decoder {decoder!r}")


DECODERS = ("ml", "mmse", "mmse_sic", "ifcc")


def all_orders(K):
    """Every decoding order of ``K`` users in lexicographic order."""
    return list(itertools.permutations(range(K)))

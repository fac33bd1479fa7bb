"""
Compression rates and distortion calibration for the source-coding schemes.

Schemes: single-user compression (SUC), Wyner-Ziv with successive
decompression (WZ), symmetric Berger-Tung (BT), symmetric and asymmetric
integer-forcing source coding (IFSC), and opportunistic IFSC for local CSIR.

Functions taking ``h`` accept either a :class:`~ifcran.model.ChannelMatrix`
or an observation covariance ``K_YY`` directly. All rates are in bits per
real channel use.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import lattice
from .exceptions import CalibrationError, ContractError, RefusalError
from .model import CALIBRATION_STREAM, ChannelMatrix, covariance, sample_channel

BISECTION_TOL = 1e-6
BISECTION_MAX_ITER = 200
MAX_EXHAUSTIVE_WZ = 8
# slack when deciding rate <= c_sym on computed values
RATE_SLACK = 1e-12


@dataclass
class DistortionProfile:
    """Per-basestation quantization distortions ``d_1..d_L``.

    ``beta`` holds the opportunistic scale factors and is set only for the
    opportunistic scheme.
    """

    d: np.ndarray
    scheme: str
    beta: np.ndarray | None = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        if np.any(self.d < 0):
            raise ContractError("distortions must be nonnegative")
        if (self.beta is not None) != (self.scheme == "ifsc_opportunistic"):
            raise ContractError("beta is required exactly for the opportunistic scheme")


@dataclass
class SourceCalibration:
    """Result of fitting distortions to the fronthaul constraint.

    Attributes
    ----------
    profile : DistortionProfile
    rates : ndarray
        Achieved compression rate of each basestation (bits).
    A : IntegerCoeffMatrix or None
        Integer matrix used by the IFSC schemes.
    perm : list of int or None
        Column order with full-rank leading submatrices (asymmetric IFSC).
    order : tuple of int or None
        Decompression order (Wyner-Ziv).
    iterations : int
        Bisection probes used (IFSC symmetric).
    path : list of float
        Distortion probed at each bisection iteration.
    provenance : str
        How the result was obtained, e.g. ``"symmetric-fallback"``.
    """

    profile: DistortionProfile
    rates: np.ndarray
    A: lattice.IntegerCoeffMatrix | None = None
    perm: list | None = None
    order: tuple | None = None
    iterations: int = 0
    path: list = field(default_factory=list)
    provenance: str = ""

    @property
    def d(self):
        return self.profile.d


def log_plus(x):
    """``max(0, log2(x))``."""
    return max(0.0, math.log2(x)) if x > 0 else 0.0


def _cov(h):
    if isinstance(h, ChannelMatrix):
        return covariance(h)
    K = np.atleast_2d(np.asarray(h, dtype=float))
    return K


def _expand(c_sym):
    if not c_sym > 0:
        raise CalibrationError(f"c_sym must be positive for a finite distortion, got {c_sym}")
    return 2.0 ** (2.0 * c_sym) - 1.0


# ---------------------------------------------------------------------------
# single-user compression

def rate_suc(h_row, P, d):
    """Single-user compression rate for one basestation."""
    if not d > 0:
        raise ContractError(f"distortion must be positive, got {d}")
    h_row = np.asarray(h_row, dtype=float)
    return 0.5 * math.log2(1.0 + (P * float(h_row @ h_row) + 1.0) / d)


def distortion_suc(h_row, P, c_sym):
    """Distortion that makes the single-user rate equal ``c_sym``."""
    h_row = np.asarray(h_row, dtype=float)
    return (P * float(h_row @ h_row) + 1.0) / _expand(c_sym)


def suc_distortions(h, c_sym):
    """SUC distortions for every basestation (``diag(K_YY) / (2^{2c} - 1)``)."""
    return np.diag(_cov(h)).copy() / _expand(c_sym)


def calibrate_suc(h, c_sym):
    d = suc_distortions(h, c_sym)
    K = _cov(h)
    rates = 0.5 * np.log2(1.0 + np.diag(K) / d)
    return SourceCalibration(DistortionProfile(d, "suc"), rates, provenance="closed-form")


# ---------------------------------------------------------------------------
# Wyner-Ziv

def rate_wz(h, D, order):
    """Wyner-Ziv compression rates under decompression order ``order``.

    Entry ``l`` of the result is the rate of basestation ``order[l]``, the
    l-th one decompressed. Computed as log-determinant ratios of
    ``K_YY + D`` over growing index sets.
    """
    K = _cov(h)
    d = np.broadcast_to(np.asarray(D, dtype=float), (K.shape[0],))
    if np.any(d <= 0):
        raise ContractError("Wyner-Ziv rates need strictly positive distortions")
    M = K + np.diag(d)
    order = list(order)
    if sorted(order) != list(range(K.shape[0])):
        raise ContractError(f"order {order} is not a permutation of 0..{K.shape[0] - 1}")
    rates = np.empty(len(order))
    prev = 0.0
    for l in range(len(order)):
        T = order[: l + 1]
        sign, logdet = np.linalg.slogdet(M[np.ix_(T, T)])
        if sign <= 0:
            raise ContractError("singular Wyner-Ziv determinant")
        rates[l] = 0.5 * (logdet - prev) / math.log(2) - 0.5 * math.log2(d[order[l]])
        prev = logdet
    return rates


def _conditional_variances(K, prefixes, dvals):
    """Variance of each ``y_j`` given the reconstructions in each prefix.

    ``prefixes`` is (n, k) of basestation indices and ``dvals`` the matching
    distortions. Returns (n, L).
    """
    n, k = prefixes.shape
    diag = np.diag(K)
    if k == 0:
        return np.broadcast_to(diag, (n, K.shape[0])).copy()
    M = K[prefixes[:, :, None], prefixes[:, None, :]]
    M = M + dvals[:, :, None] * np.eye(k)[None]
    R = K[prefixes]
    X = np.linalg.solve(M, R)
    return diag[None, :] - np.einsum("nkl,nkl->nl", R, X)


def wz_order_tree(K, c_sym=None, d=None):
    """Walk every decompression order level by level.

    With ``c_sym`` each basestation is calibrated in turn to rate ``c_sym``
    (closed form: its rate is ``0.5 log2(1 + var/d)`` with ``var`` the
    conditional variance given earlier reconstructions). With a symmetric
    ``d`` the per-order rates are returned instead.

    Returns
    -------
    orders : ndarray (L!, L)
        All permutations, in lexicographic order.
    values : ndarray (L!, L)
        Distortion per basestation index (calibrated mode) or rate of the
        l-th decompressed basestation (symmetric mode).
    """
    K = np.asarray(K, dtype=float)
    L = K.shape[0]
    if L > MAX_EXHAUSTIVE_WZ:
        raise RefusalError(f"exhaustive Wyner-Ziv search supports L <= {MAX_EXHAUSTIVE_WZ}")
    if (c_sym is None) == (d is None):
        raise ContractError("give exactly one of c_sym or d")
    expand = _expand(c_sym) if c_sym is not None else None
    prefixes = np.zeros((1, 0), dtype=np.int64)
    dvals = np.zeros((1, 0))
    rates = np.zeros((1, 0))
    for k in range(L):
        cv = _conditional_variances(K, prefixes, dvals)
        mask = np.ones((len(prefixes), L), dtype=bool)
        if k:
            np.put_along_axis(mask, prefixes, False, axis=1)
        parent, child = np.nonzero(mask)
        var = np.maximum(cv[parent, child], 0.0)
        prefixes = np.concatenate([prefixes[parent], child[:, None]], axis=1)
        if expand is not None:
            dnew = var / expand
            rnew = np.full(len(var), float(c_sym))
        else:
            dnew = np.full(len(var), float(d))
            rnew = 0.5 * np.log2(1.0 + var / d)
        dvals = np.concatenate([dvals[parent], dnew[:, None]], axis=1)
        rates = np.concatenate([rates[parent], rnew[:, None]], axis=1)
    if expand is None:
        return prefixes, rates
    D = np.empty_like(dvals)
    np.put_along_axis(D, prefixes, dvals, axis=1)
    return prefixes, D


def _wz_greedy(K, c_sym=None, d=None):
    L = K.shape[0]
    order, dv = [], []
    expand = _expand(c_sym) if c_sym is not None else None
    for _ in range(L):
        cv = _conditional_variances(K, np.array([order], dtype=np.int64).reshape(1, -1),
                                    np.array([dv]).reshape(1, -1))[0]
        cv[order] = np.inf
        j = int(np.argmin(cv))
        order.append(j)
        dv.append(max(cv[j], 0.0) / expand if expand is not None else d)
    return tuple(order), np.array(dv)


def calibrate_wz(h, c_sym, order_policy="greedy", metric=None):
    """Sequential Wyner-Ziv distortions saturating the fronthaul.

    Parameters
    ----------
    order_policy : "exhaustive", "greedy" or a sequence of indices
        ``greedy`` decompresses next the basestation whose calibrated
        distortion is smallest given those already decompressed.
        ``exhaustive`` tries every order (L <= 8).
    metric : callable, optional
        Exhaustive mode only. Maps an (n_orders, L) array of distortions to
        scores; the order with the smallest score wins (first in
        lexicographic order on ties). Defaults to the sum of distortions.
    """
    K = _cov(h)
    L = K.shape[0]
    expand = _expand(c_sym)
    provenance = order_policy if isinstance(order_policy, str) else "fixed"
    if isinstance(order_policy, str) and order_policy == "exhaustive":
        orders, D = wz_order_tree(K, c_sym=c_sym)
        scores = D.sum(axis=1) if metric is None else np.asarray(metric(D), dtype=float)
        best = int(np.argmin(scores))
        order, d = tuple(int(i) for i in orders[best]), D[best]
    elif isinstance(order_policy, str) and order_policy == "greedy":
        order, dv = _wz_greedy(K, c_sym=c_sym)
        d = np.empty(L)
        d[list(order)] = dv
    elif isinstance(order_policy, str):
        raise ContractError(f"unknown order policy {order_policy!r}")
    else:
        order = tuple(int(i) for i in order_policy)
        if sorted(order) != list(range(L)):
            raise ContractError(f"order {order} is not a permutation")
        d = np.empty(L)
        for l, j in enumerate(order):
            T = np.array([order[:l]], dtype=np.int64).reshape(1, -1)
            cv = _conditional_variances(K, T, d[list(order[:l])].reshape(1, -1))[0, j]
            d[j] = max(cv, 0.0) / expand
    if np.any(d <= 0):
        raise CalibrationError("Wyner-Ziv calibration produced a zero distortion")
    rates = np.empty(L)
    rates[list(order)] = rate_wz(K, d, order)
    return SourceCalibration(DistortionProfile(d, "wz"), rates, order=order,
                             provenance=provenance)


def wz_symmetric_rate(h, d, order_policy="exhaustive"):
    """Compression rate of WZ with symmetric distortion ``d``.

    The largest per-basestation rate under the best order (exhaustive) or
    the greedy order. Returns ``(rate, order)``.
    """
    K = _cov(h)
    if not d > 0:
        raise ContractError("distortion must be positive")
    if order_policy == "exhaustive":
        orders, rates = wz_order_tree(K, d=d)
        worst = rates.max(axis=1)
        best = int(np.argmin(worst))
        return float(worst[best]), tuple(int(i) for i in orders[best])
    if order_policy == "greedy":
        order, _ = _wz_greedy(K, d=d)
        return float(rate_wz(K, d, order).max()), order
    raise ContractError(f"unknown order policy {order_policy!r}")


# ---------------------------------------------------------------------------
# Berger-Tung

def rate_bt(h, d):
    """Symmetric Berger-Tung rate ``log2|I + K_YY/d| / (2L)``."""
    if not d > 0:
        raise ContractError(f"distortion must be positive, got {d}")
    K = _cov(h)
    L = K.shape[0]
    sign, logdet = np.linalg.slogdet(np.eye(L) + K / d)
    return logdet / (2 * L * math.log(2))


def bisect_distortion(rate_fn, target, hi, lo=0.0, tol=BISECTION_TOL,
                      max_iter=BISECTION_MAX_ITER):
    """Bisection for a nonincreasing rate function of the distortion.

    Keeps ``rate(hi) <= target`` and ``rate(lo) > target`` and stops once
    ``target - tol <= rate(hi) <= target``.

    Returns
    -------
    d, rate, iterations, path
    """
    if not tol > 0:
        raise ContractError(f"tol must be positive, got {tol}")
    r_hi = rate_fn(hi)
    if r_hi > target + RATE_SLACK:
        raise CalibrationError(f"upper bracket {hi} violates the rate target ({r_hi} > {target})")
    path = [hi]
    it = 0
    while target - r_hi > tol:
        if it >= max_iter:
            raise CalibrationError(
                f"bisection did not reach tol {tol} in {max_iter} iterations "
                f"(rate {r_hi} at d={hi})")
        it += 1
        if hi - lo <= 1e-13 * hi:
            # Bracket collapsed on a jump. A heuristic rate (e.g. LLL-selected
            # matrices) may have improved since lo was probed: re-probe it and
            # back off geometrically while it stays feasible.
            r = rate_fn(lo)
            path.append(lo)
            if lo == 0.0 or r > target + RATE_SLACK:
                raise CalibrationError(f"rate function jumps across the target at d={hi}")
            hi, r_hi, lo = lo, r, 0.5 * lo
            continue
        mid = 0.5 * (lo + hi)
        r = rate_fn(mid)
        path.append(mid)
        if r > target + RATE_SLACK:
            lo = mid
        else:
            hi, r_hi = mid, r
    return hi, r_hi, it, path


def calibrate_bt(h, c_sym, tol=BISECTION_TOL, max_iter=BISECTION_MAX_ITER):
    """Symmetric BT distortion with ``rate_bt = c_sym`` (within ``tol``)."""
    K = _cov(h)
    lam = np.linalg.eigvalsh(K)
    L = K.shape[0]
    hi = float(lam.max()) / _expand(c_sym)
    fn = lambda d: float(np.sum(np.log2(1.0 + lam / d))) / (2 * L)
    d, r, it, path = bisect_distortion(fn, c_sym, hi, tol=tol, max_iter=max_iter)
    return SourceCalibration(DistortionProfile(np.full(L, d), "bt"), np.full(L, r),
                             iterations=it, path=path, provenance="bisection")


# ---------------------------------------------------------------------------
# integer-forcing source coding

def rate_ifsc_sym(h, d, mode="lll", candidates=(), delta=lattice.DEFAULT_DELTA):
    """Symmetric IFSC compression rate at distortion ``d``.

    Returns ``(rate, A)`` where ``A`` is the selected integer matrix for the
    Gram matrix ``K_YY/d + I``.
    """
    if not d > 0:
        raise ContractError(f"distortion must be positive, got {d}")
    K = _cov(h)
    G = K / d + np.eye(K.shape[0])
    A = lattice.select_integer_matrix(G, mode=mode, delta=delta, candidates=candidates)
    return 0.5 * log_plus(A.max_form), A


def calibrate_ifsc_sym(h, c_sym, tol=BISECTION_TOL, max_iter=BISECTION_MAX_ITER,
                       mode="lll", delta=lattice.DEFAULT_DELTA):
    """Symmetric IFSC distortion by bisection.

    Starts from ``[0, max_l K_ll / (2^{2c} - 1)]``; the upper end meets the
    constraint with ``A = I``. Each probe re-selects the integer matrix with
    LLL, also offering the matrix from the current feasible end as a
    candidate, which keeps the selected rate continuous along the search.
    """
    if not tol > 0:
        raise ContractError(f"tol must be positive, got {tol}")
    K = _cov(h)
    L = K.shape[0]
    hi = float(np.max(np.diag(K))) / _expand(c_sym)
    state = {"best": None}
    probes = {}

    def fn(d):
        cands = [] if state["best"] is None else [state["best"].entries]
        r, A = rate_ifsc_sym(K, d, mode=mode, candidates=cands, delta=delta)
        probes[d] = A
        if r <= c_sym + RATE_SLACK:
            state["best"] = A
        return r

    d, r, it, path = bisect_distortion(fn, c_sym, hi, tol=tol, max_iter=max_iter)
    A = probes[d]
    return SourceCalibration(DistortionProfile(np.full(L, d), "ifsc_sym"), np.full(L, r),
                             A=A, iterations=it, path=path, provenance="bisection")


def rate_ifsc_asym(h, D, A, perm=None, check_order=True):
    """Asymmetric IFSC rates with algebraic successive decompression.

    Entry ``l`` is the rate of row ``l`` of ``A``, normalized by the
    distortion of basestation ``perm[l]``.

    Raises
    ------
    ContractError
        If rows are not ordered by ascending ``a^T (K_YY + D) a`` or the
        permuted leading submatrices are rank deficient.
    """
    K = _cov(h)
    L = K.shape[0]
    d = np.broadcast_to(np.asarray(D, dtype=float), (L,))
    entries = A.entries if isinstance(A, lattice.IntegerCoeffMatrix) else np.asarray(A, np.int64)
    perm = list(range(L)) if perm is None else list(perm)
    forms = lattice.quadratic_forms(entries, K + np.diag(d))
    if check_order:
        if np.any(np.diff(forms) < -1e-9 * np.abs(forms[1:])):
            raise ContractError("rows of A are not sorted by ascending effective variance")
        if not lattice.leading_minors_nonzero(entries, perm):
            raise ContractError("permuted leading submatrices of A are not full rank")
    return np.array([0.5 * log_plus(forms[l] / d[perm[l]]) for l in range(L)])


def calibrate_ifsc_asym(h, c_sym, tol=BISECTION_TOL, symmetric=None, max_passes=None):
    """Asymmetric IFSC distortions from the symmetric solution.

    Starts from the symmetric calibration and its integer matrix, finds a
    column order with full-rank leading submatrices, and solves the linear
    system that puts every row exactly at ``c_sym``. The solve can reorder
    the effective variances; rows are then re-sorted under the new
    distortions and the system solved again, for at most ``max_passes``
    passes (default ``L``). If no pass yields positive distortions with
    consistently ordered rows, the symmetric result is returned with
    ``provenance`` starting ``"symmetric-fallback"``.
    """
    K = _cov(h)
    L = K.shape[0]
    sym = symmetric if symmetric is not None else calibrate_ifsc_sym(K, c_sym, tol=tol)
    max_passes = L if max_passes is None else max_passes
    expand = 2.0 ** (2.0 * c_sym)
    e_all = lattice.quadratic_forms(sym.A.entries, K)

    def fallback(reason):
        perm = lattice.full_rank_permutation(sym.A.entries)
        rates = rate_ifsc_asym(K, sym.d, sym.A, perm, check_order=False)
        return SourceCalibration(DistortionProfile(sym.d.copy(), "ifsc_asym"), rates,
                                 A=sym.A, perm=perm, iterations=sym.iterations, path=sym.path,
                                 provenance=f"symmetric-fallback: {reason}")

    rows = sym.A.entries.copy()
    e = e_all.copy()
    d = sym.d.copy()
    for n_pass in range(1, max_passes + 1):
        forms = lattice.quadratic_forms(rows, K + np.diag(d))
        order = np.argsort(forms, kind="stable")
        rows, e = rows[order], e[order]
        perm = lattice.full_rank_permutation(rows)
        Ap = rows[:, perm].astype(float)
        try:
            x = np.linalg.solve(expand * np.eye(L) - Ap * Ap, e)
        except np.linalg.LinAlgError:
            return fallback("singular system")
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            return fallback("nonpositive distortion")
        d = np.empty(L)
        d[perm] = x
        forms = lattice.quadratic_forms(rows, K + np.diag(d))
        if np.all(np.diff(forms) >= -1e-9 * np.abs(forms[1:])):
            break
    else:
        return fallback(f"row order unsettled after {max_passes} passes")
    A = lattice.IntegerCoeffMatrix(rows, forms, sym.A.method, {"passes": n_pass})
    rates = rate_ifsc_asym(K, d, A, perm)
    if np.any(rates > c_sym + 1e-6):
        return fallback("rate target missed")
    return SourceCalibration(DistortionProfile(d, "ifsc_asym"), rates, A=A, perm=perm,
                             iterations=sym.iterations, path=sym.path,
                             provenance=f"linear-solve ({n_pass} pass{'es' if n_pass > 1 else ''})")


def opportunistic_profile(h, c_sym, d_t):
    """Scale factors and distortions of opportunistic IFSC at target ``d_t``.

    A basestation whose single-user distortion beats ``d_t`` scales its
    observation up so that it is reconstructed at that single-user
    distortion instead.
    """
    if not d_t > 0:
        raise ContractError(f"target distortion must be positive, got {d_t}")
    K = _cov(h)
    threshold = np.diag(K) / _expand(c_sym)
    beta = np.where(d_t <= threshold, 1.0, np.sqrt(d_t / threshold))
    d = d_t / beta**2
    return DistortionProfile(d, "ifsc_opportunistic", beta=beta)


def rate_ifsc_opportunistic(h, c_sym, d_t, mode="lll", candidates=(),
                            delta=lattice.DEFAULT_DELTA):
    """Opportunistic IFSC compression rate.

    Returns ``(rate, profile, A)``.
    """
    K = _cov(h)
    profile = opportunistic_profile(K, c_sym, d_t)
    G = (K + np.diag(profile.d)) / d_t
    A = lattice.select_integer_matrix(G, mode=mode, delta=delta, candidates=candidates)
    return 0.5 * log_plus(A.max_form), profile, A


# ---------------------------------------------------------------------------
# local CSIR: fixed distortion calibrated against a draw set

LOCAL_SCHEMES = ("ifsc_local", "ifsc_opportunistic", "wz_symmetric", "wz_exhaustive",
                 "wz_greedy", "bt")


@dataclass
class OutageCalibration:
    """Fixed distortion ``d_t`` and its empirical compression outage."""

    scheme: str
    d_t: float
    outage: float
    rho_s: float
    n_draws: int
    probes: int = 0


class CompressionRate:
    """Compression rate of a fixed-distortion scheme on one channel.

    Keeps the last integer matrix per channel as a warm start for the next
    probe.
    """

    def __init__(self, scheme, c_sym, delta=lattice.DEFAULT_DELTA):
        if scheme not in LOCAL_SCHEMES:
            raise ContractError(f"unknown fixed-distortion scheme {scheme!r}")
        self.scheme = scheme
        self.c_sym = c_sym
        self.delta = delta
        self._warm = {}

    def upper_distortion(self, K):
        """A distortion at which this scheme is never in compression outage."""
        if self.scheme == "bt":
            return float(np.linalg.eigvalsh(K).max()) / _expand(self.c_sym)
        return float(np.max(np.diag(K))) / _expand(self.c_sym)

    def __call__(self, K, d, key=None):
        scheme = self.scheme
        if scheme == "bt":
            return rate_bt(K, d)
        if scheme.startswith("wz"):
            L = K.shape[0]
            policy = "greedy" if scheme == "wz_greedy" or L > MAX_EXHAUSTIVE_WZ else "exhaustive"
            return wz_symmetric_rate(K, d, policy)[0]
        cands = [self._warm[key]] if key in self._warm else []
        if scheme == "ifsc_local":
            r, A = rate_ifsc_sym(K, d, candidates=cands, delta=self.delta)
        else:
            r, _, A = rate_ifsc_opportunistic(K, self.c_sym, d, candidates=cands,
                                              delta=self.delta)
        if key is not None:
            self._warm[key] = A.entries
        return r


def calibrate_outage_distortion(scheme, s, channels=None, rho_s=None, rtol=BISECTION_TOL,
                                max_iter=BISECTION_MAX_ITER, delta=lattice.DEFAULT_DELTA):
    """Smallest fixed distortion whose compression outage is at most ``rho_s``.

    Bisection over ``d_t`` against one fixed draw set: by default ``s.trials``
    channels from the calibration stream of ``s.seed``, independent of the
    evaluation draws. A channel is in outage when its compression rate
    exceeds ``s.c_sym``. Channels whose status is implied by an earlier
    probe (rates are nonincreasing in ``d_t``) are not re-evaluated; the
    returned outage is recomputed on every channel.

    Parameters
    ----------
    scheme : {"ifsc_local", "ifsc_opportunistic", "wz_symmetric", "wz_exhaustive", "wz_greedy", "bt"}
    s : Scenario
    channels : sequence of ChannelMatrix, optional
        Overrides the draw set.
    rho_s : float, optional
        Defaults to ``s.rho_s``.
    """
    rho_s = s.rho_s if rho_s is None else rho_s
    if channels is None:
        channels = [sample_channel(s, n, stream=CALIBRATION_STREAM) for n in range(s.trials)]
    covs = [covariance(h) if isinstance(h, ChannelMatrix) else np.asarray(h, float)
            for h in channels]
    N = len(covs)
    rate = CompressionRate(scheme, s.c_sym, delta)
    if rho_s >= 1:
        return OutageCalibration(scheme, 0.0, 1.0, rho_s, N)
    if rho_s < 0:
        raise ContractError("rho_s must be nonnegative")
    allowed = math.floor(rho_s * N + 1e-9)

    def outage_count(d, ok_min=None, bad_max=None):
        bad = 0
        for n, K in enumerate(covs):
            if ok_min is not None and d >= ok_min[n]:
                continue
            if bad_max is not None and d <= bad_max[n]:
                bad += 1
                continue
            if rate(K, d, key=n) > s.c_sym + RATE_SLACK:
                bad += 1
                if bad_max is not None:
                    bad_max[n] = max(bad_max[n], d)
            elif ok_min is not None:
                ok_min[n] = min(ok_min[n], d)
        return bad

    def search(pruned):
        lo = 0.0
        hi = max(rate.upper_distortion(K) for K in covs)
        ok_min = np.full(N, np.inf) if pruned else None
        bad_max = np.zeros(N) if pruned else None
        count = outage_count(hi, ok_min, bad_max)
        if count > allowed:
            raise CalibrationError(
                f"{scheme}: outage {count / N:.4f} at the upper bracket exceeds rho_s={rho_s}")
        probes = 1
        while hi - lo > rtol * hi:
            if probes > max_iter:
                raise CalibrationError(f"{scheme}: outage bisection did not converge")
            mid = 0.5 * (lo + hi)
            probes += 1
            if outage_count(mid, ok_min, bad_max) > allowed:
                lo = mid
            else:
                hi = mid
        return hi, probes

    d_t, probes = search(pruned=True)
    rate._warm.clear()
    count = outage_count(d_t)
    if count > allowed:
        d_t, more = search(pruned=False)
        probes += more
        count = outage_count(d_t)
    return OutageCalibration(scheme, d_t, count / N, rho_s, N, probes)

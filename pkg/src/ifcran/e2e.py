"""
End-to-end symmetric rates: a compression scheme at the basestations
followed by a decoder at the central processor, evaluated over fading.

Under global CSIR the compression scheme is fitted to each channel so that
every fronthaul link runs at ``c_sym``. Under local CSIR a single distortion
``d_t`` is fixed in advance for the whole channel distribution; a channel on
which that distortion needs more than ``c_sym`` bits is a compression outage
and contributes rate 0.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from . import chandec, srccode
from .exceptions import CalibrationError, ContractError
from .model import CALIBRATION_STREAM, EVALUATION_STREAM, covariance, sample_channel

log = logging.getLogger(__name__)

SOURCES = ("suc", "wz_exhaustive", "wz_greedy", "bt", "ifsc_sym", "ifsc_asym",
           "ifsc_local", "ifsc_opportunistic")
DECODERS = chandec.DECODERS
GLOBAL_SOURCES = ("suc", "wz_exhaustive", "wz_greedy", "bt", "ifsc_sym", "ifsc_asym")
# fixed-distortion schemes; suc needs no calibration since each basestation
# can fit its own distortion from its local observation power
LOCAL_SOURCES = ("suc", "wz_exhaustive", "wz_greedy", "bt", "ifsc_local",
                 "ifsc_opportunistic")
# decompression-order search for WZ under local CSIR
_LOCAL_SCHEME = {"wz_exhaustive": "wz_exhaustive", "wz_greedy": "wz_greedy", "bt": "bt",
                 "ifsc_local": "ifsc_local", "ifsc_opportunistic": "ifsc_opportunistic"}


@dataclass(frozen=True, order=True)
class SchemePair:
    """A compression scheme, a decoder and the CSIR model they run under."""

    source: str
    decoder: str
    csir: str = "global"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ContractError(f"unknown source scheme {self.source!r}")
        if self.decoder not in DECODERS:
            raise ContractError(f"unknown decoder {self.decoder!r}")
        if self.csir == "global" and self.source not in GLOBAL_SOURCES:
            raise ContractError(f"{self.source} needs local CSIR")
        if self.csir == "local" and self.source not in LOCAL_SOURCES:
            raise ContractError(f"{self.source} needs global CSIR")
        if self.csir not in ("global", "local"):
            raise ContractError(f"csir must be 'global' or 'local', got {self.csir!r}")

    @property
    def label(self):
        return f"{self.source}+{self.decoder}"

    @property
    def needs_calibration(self):
        """True when a fixed distortion must be fitted before evaluation."""
        return self.csir == "local" and self.source != "suc"

    @classmethod
    def parse(cls, text, csir="global"):
        """Build from ``"source+decoder"``."""
        try:
            source, decoder = text.split("+")
        except ValueError:
            raise ContractError(f"expected 'source+decoder', got {text!r}") from None
        return cls(source.strip(), decoder.strip(), csir)


@dataclass(frozen=True)
class Settings:
    """Numerical knobs: bisection tolerance and LLL parameter."""

    tol: float = srccode.BISECTION_TOL
    delta: float = srccode.lattice.DEFAULT_DELTA

    def __post_init__(self):
        if not self.tol > 0:
            raise ContractError(f"tol must be positive, got {self.tol}")
        if not 0.25 < self.delta < 1:
            raise ContractError(f"delta must lie in (0.25, 1), got {self.delta}")


DEFAULT_SETTINGS = Settings()


@dataclass
class TrialRate:
    """End-to-end rate on one channel."""

    rate: float
    compression_outage: bool = False
    D: np.ndarray | None = None


class TrialCache:
    """Source calibrations for one channel, shared between decoders."""

    def __init__(self):
        self.store = {}

    def get(self, key, compute):
        if key not in self.store:
            self.store[key] = compute()
        return self.store[key]


def _decode(pair, h, D, cfg):
    ec = chandec.EffectiveChannel(h.H, h.P, D)
    return chandec.rate_decoder(pair.decoder, ec, delta=cfg.delta)


def _global_rate(h, c_sym, pair, cache, cfg):
    K = covariance(h)
    src = pair.source
    tol, delta = cfg.tol, cfg.delta

    def sym():
        return cache.get(("ifsc_sym", c_sym),
                         lambda: srccode.calibrate_ifsc_sym(K, c_sym, tol=tol, delta=delta))
    if src == "suc":
        d = srccode.suc_distortions(K, c_sym)
    elif src == "wz_greedy" or (src == "wz_exhaustive" and h.L > srccode.MAX_EXHAUSTIVE_WZ):
        d = cache.get(("wz_greedy", c_sym), lambda: srccode.calibrate_wz(K, c_sym, "greedy")).d
    elif src == "wz_exhaustive":
        # order chosen at the compression stage: smallest total distortion
        d = cache.get(("wz_exhaustive", c_sym),
                      lambda: srccode.calibrate_wz(K, c_sym, "exhaustive")).d
    elif src == "bt":
        d = cache.get(("bt", c_sym), lambda: srccode.calibrate_bt(K, c_sym, tol=tol)).d
    elif src == "ifsc_sym":
        d = sym().d
    elif src == "ifsc_asym":
        d = cache.get(("ifsc_asym", c_sym),
                      lambda: srccode.calibrate_ifsc_asym(K, c_sym, tol=tol, symmetric=sym())).d
    else:
        raise ContractError(f"{src} is not a global-CSIR scheme")
    return TrialRate(_decode(pair, h, d, cfg), D=d)


def _local_rate(h, c_sym, pair, d_t, cache, cfg):
    K = covariance(h)
    src = pair.source
    if src == "suc":
        d = srccode.suc_distortions(K, c_sym)
        return TrialRate(_decode(pair, h, d, cfg), D=d)
    if d_t is None:
        raise ContractError(f"{pair.label} under local CSIR needs a calibrated d_t")
    if not d_t > 0:
        # a zero distortion is only feasible with unlimited fronthaul
        return TrialRate(0.0, compression_outage=True)

    def compress():
        if src == "ifsc_opportunistic":
            r, profile, _ = srccode.rate_ifsc_opportunistic(K, c_sym, d_t, delta=cfg.delta)
            return r, profile.d
        r = srccode.CompressionRate(_LOCAL_SCHEME[src], c_sym, cfg.delta)(K, d_t)
        return r, np.full(h.L, d_t)

    r, d = cache.get(("local", src, c_sym, d_t), compress)
    if r > c_sym + srccode.RATE_SLACK:
        return TrialRate(0.0, compression_outage=True)
    return TrialRate(_decode(pair, h, d, cfg), D=d)


def rate_end_to_end(h, s, pair, d_t=None, cache=None, settings=DEFAULT_SETTINGS):
    """Symmetric end-to-end rate of ``pair`` on channel ``h``.

    Parameters
    ----------
    h : ChannelMatrix
    s : Scenario
        Supplies ``c_sym``.
    pair : SchemePair
    d_t : float, optional
        Fixed distortion from :func:`srccode.calibrate_outage_distortion`;
        required for local-CSIR schemes other than SUC.
    cache : TrialCache, optional
        Shares calibrations between decoders on the same channel.
    settings : Settings, optional

    Returns
    -------
    TrialRate
    """
    if pair.csir != s.csir:
        raise ContractError(f"pair csir {pair.csir!r} does not match scenario {s.csir!r}")
    if s.c_sym == 0:
        return TrialRate(0.0, compression_outage=pair.csir == "local")
    cache = TrialCache() if cache is None else cache
    if pair.csir == "global":
        return _global_rate(h, s.c_sym, pair, cache, settings)
    return _local_rate(h, s.c_sym, pair, d_t, cache, settings)


def cutset_bound(h, c_sym):
    """Upper bound on the sum rate: ``min(L c_sym, 0.5 log2|P H^T H + I|)``."""
    H = np.asarray(h.H, dtype=float)
    _, logdet = np.linalg.slogdet(h.P * H.T @ H + np.eye(H.shape[1]))
    return min(H.shape[0] * c_sym, 0.5 * logdet / math.log(2))


def order_statistic_rate(rates, rho):
    """Largest rate ``R`` whose empirical failure probability is at most ``rho``.

    Lower order statistic at index ``floor(rho N)`` of the ascending rates.
    """
    rates = np.sort(np.asarray(rates, dtype=float))
    idx = min(math.floor(rho * len(rates) + 1e-9), len(rates) - 1)
    return float(rates[idx])


@dataclass
class OutagePoint:
    """Outage statistics of one scheme pair at one scenario."""

    pair: SchemePair
    scenario: object
    outage_rate: float
    mean_rate: float
    compression_outage_frac: float
    unreliable: bool
    d_t: float | None = None
    rates: np.ndarray = field(default=None, repr=False)


@dataclass
class OutageCurve:
    """Outage points of one scheme pair along a sweep axis."""

    pair: SchemePair
    points: list

    @property
    def label(self):
        return self.pair.label

    @property
    def grid(self):
        return [(p.scenario.c_sym, p.scenario.snr_db) for p in self.points]


def calibrate_source(source, s, settings=DEFAULT_SETTINGS):
    """Fixed distortion of a local-CSIR source at ``s.rho_s`` on the calibration draws."""
    if s.c_sym == 0:
        return 0.0
    try:
        cal = srccode.calibrate_outage_distortion(_LOCAL_SCHEME[source], s, rtol=settings.tol,
                                                  delta=settings.delta)
    except CalibrationError as exc:
        raise CalibrationError(f"c_sym={s.c_sym:g}, snr_db={s.snr_db:g}: {exc}") from exc
    log.info("calibrated %s at c_sym=%g snr=%g: d_t=%.6g, outage %.4f",
             source, s.c_sym, s.snr_db, cal.d_t, cal.outage)
    return cal.d_t


def calibrate_pairs(s, pairs, settings=DEFAULT_SETTINGS):
    """Fixed distortions for the local-CSIR pairs, keyed by source scheme."""
    out = {}
    for pair in pairs:
        if pair.needs_calibration and pair.source not in out:
            out[pair.source] = calibrate_source(pair.source, s, settings)
    return out


def evaluate_trials(s, pairs, trials, d_t=None, settings=DEFAULT_SETTINGS):
    """End-to-end rates for ``trials`` of ``s``.

    Returns ``(rates, outage)``, both (len(pairs), len(trials)).
    """
    d_t = d_t or {}
    rates = np.zeros((len(pairs), len(trials)))
    outage = np.zeros((len(pairs), len(trials)), dtype=bool)
    for j, n in enumerate(trials):
        h = sample_channel(s, n, stream=EVALUATION_STREAM)
        cache = TrialCache()
        for i, pair in enumerate(pairs):
            try:
                tr = rate_end_to_end(h, s, pair, d_t.get(pair.source), cache, settings)
            except CalibrationError as exc:
                raise CalibrationError(f"{pair.label}, c_sym={s.c_sym:g}, snr_db={s.snr_db:g}, "
                                       f"trial {n}: {exc}") from exc
            rates[i, j] = tr.rate
            outage[i, j] = tr.compression_outage
    return rates, outage


def trial_chunks(n, parts):
    """Split ``range(n)`` into at most ``parts`` contiguous ranges."""
    bounds = np.linspace(0, n, max(1, parts) + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def summarize(s, pairs, rates, outage, d_t=None):
    """Outage points from per-trial rates (pairs x trials)."""
    d_t = d_t or {}
    unreliable = s.rho * s.trials < 1
    if unreliable:
        log.warning("rho*N = %g < 1: outage rate is the sample minimum", s.rho * s.trials)
    return [OutagePoint(pair, s, order_statistic_rate(rates[i], s.rho), float(rates[i].mean()),
                        float(outage[i].mean()), unreliable, d_t.get(pair.source), rates[i])
            for i, pair in enumerate(pairs)]


def _star(args):
    fn, *rest = args
    return fn(*rest)


def evaluate_point(s, pairs, workers=1, settings=DEFAULT_SETTINGS, d_t=None):
    """Outage points of several pairs at one scenario, sharing channel draws.

    Trials are split into contiguous chunks, evaluated in worker processes
    when ``workers > 1``, and concatenated in trial order, so the result
    does not depend on ``workers``.
    """
    pairs = list(pairs)
    if d_t is None:
        d_t = calibrate_pairs(s, pairs, settings)
    chunks = trial_chunks(s.trials, 4 * workers if workers > 1 else 1)
    jobs = [(evaluate_trials, s, pairs, c, d_t, settings) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_star, jobs))
    else:
        parts = [_star(j) for j in jobs]
    rates = np.concatenate([p[0] for p in parts], axis=1)
    outage = np.concatenate([p[1] for p in parts], axis=1)
    return summarize(s, pairs, rates, outage, d_t)


def outage_rate(pair, s, workers=1, settings=DEFAULT_SETTINGS):
    """Outage rate of ``pair`` over ``s.trials`` seeded channel draws."""
    return evaluate_point(s, [pair], workers, settings)[0]


@dataclass
class GapCurve:
    """Empirical probability that the sum rate misses the cut-set bound by more than ``delta``."""

    deltas: np.ndarray
    p_diff: np.ndarray
    gaps: np.ndarray = field(repr=False)


def gap_diagnostic(s, pair, deltas, settings=DEFAULT_SETTINGS):
    """Fraction of draws with ``K * rate < cutset_bound - delta`` for each delta."""
    if pair != SchemePair("ifsc_sym", "ifcc", "global") or s.csir != "global":
        raise ContractError("gap diagnostic covers the global (ifsc_sym, ifcc) pair only")
    deltas = np.asarray(deltas, dtype=float)
    gaps = np.empty(s.trials)
    for n in range(s.trials):
        h = sample_channel(s, n)
        gaps[n] = cutset_bound(h, s.c_sym) - s.K * rate_end_to_end(h, s, pair, settings=settings).rate
    p = (gaps[None, :] > deltas[:, None]).mean(axis=1)
    return GapCurve(deltas, p, gaps)


def calibration_channels(s):
    """The draw set local-CSIR distortions are fitted on."""
    return [sample_channel(s, n, stream=CALIBRATION_STREAM) for n in range(s.trials)]

"""Scenario configuration, reproducible channel draws and observation covariance."""

from dataclasses import dataclass, asdict, replace

import numpy as np

from .exceptions import ContractError

CSIR_MODES = ("global", "local")

# spawn-key prefixes separating independent draw sets under one master seed
EVALUATION_STREAM = 0
CALIBRATION_STREAM = 1


@dataclass(frozen=True)
class Scenario:
    """All parameters of one Monte Carlo experiment.

    ``rho_s`` defaults to half of ``rho`` (equal split between compression
    and channel outage) when left as ``None``.
    """

    K: int
    L: int
    snr_db: float
    c_sym: float
    csir: str = "global"
    rho: float = 0.05
    rho_s: float | None = None
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.rho_s is None:
            object.__setattr__(self, "rho_s", self.rho / 2)
        self.validate()

    def validate(self):
        if int(self.K) != self.K or self.K < 1:
            raise ContractError(f"K must be a positive integer, got {self.K}")
        if int(self.L) != self.L or self.L < 1:
            raise ContractError(f"L must be a positive integer, got {self.L}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ContractError(f"trials must be a positive integer, got {self.trials}")
        if not np.isfinite(self.snr_db):
            raise ContractError("snr_db must be finite")
        if not self.c_sym >= 0:
            raise ContractError(f"c_sym must be nonnegative, got {self.c_sym}")
        if self.csir not in CSIR_MODES:
            raise ContractError(f"csir must be one of {CSIR_MODES}, got {self.csir!r}")
        if not 0 < self.rho < 1:
            raise ContractError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.rho_s < 1:
            raise ContractError(f"rho_s must lie in (0, 1), got {self.rho_s}")
        if self.csir == "local" and not self.rho_s < self.rho:
            raise ContractError("rho_s must be smaller than rho under local CSIR")
        if not 0 <= self.seed < 2**64:
            raise ContractError("seed must be a 64-bit unsigned integer")

    @property
    def power(self):
        return snr_to_power(self.snr_db)

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ChannelMatrix:
    """One real fading realization ``H`` (L x K) with transmit power ``P``."""

    H: np.ndarray
    P: float

    @property
    def L(self):
        return self.H.shape[0]

    @property
    def K(self):
        return self.H.shape[1]


def snr_to_power(snr_db):
    """Linear transmit power for unit-variance noise."""
    if not np.isfinite(snr_db):
        raise ContractError("snr_db must be finite")
    return 10.0 ** (snr_db / 10.0)


def trial_rng(seed, trial, stream=EVALUATION_STREAM):
    """Generator for one trial, a pure function of ``(seed, stream, trial)``.

    Uses a PCG64 bit generator seeded through ``SeedSequence`` with the trial
    index in the spawn key, so draws do not depend on evaluation order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(trial)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_channel(s, trial, stream=EVALUATION_STREAM):
    """Draw ``H`` with i.i.d. N(0, 1) entries for trial ``trial`` of ``s``.

    Normals come from numpy's ``Generator.standard_normal`` (ziggurat method).
    """
    if not 0 <= trial < s.trials:
        raise ContractError(f"trial {trial} outside [0, {s.trials})")
    H = trial_rng(s.seed, trial, stream).standard_normal((s.L, s.K))
    return ChannelMatrix(H, s.power)


def covariance(h):
    """Observation covariance ``K_YY = P H H^T + I``."""
    H = np.asarray(h.H, dtype=float)
    return h.P * H @ H.T + np.eye(H.shape[0])

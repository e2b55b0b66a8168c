"""Finite-blocklength error model.

Normal-approximation packet error rate for a complex AWGN link, its inverse
(minimal slot length for a target error), and the cumulative-blocklength
variant used for incremental-redundancy HARQ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

LN2 = math.log(2.0)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x_lin):
    return 10.0 * np.log10(np.asarray(x_lin, dtype=float))


@dataclass(frozen=True)
class ChannelSpec:
    """Block-fading link: linear SNR, Shannon capacity (bit/symbol) and dispersion.

    Build with :meth:`from_snr` or :meth:`from_db`; ``dispersion`` may be
    overridden to inject non-Gaussian dispersion values.
    """

    snr_linear: float
    capacity: float
    dispersion: float

    def __post_init__(self):
        if not 0.0 < self.snr_linear < math.inf:
            raise ValueError(f"snr_linear must be positive and finite, got {self.snr_linear}")
        if not math.isclose(self.capacity, math.log2(1.0 + self.snr_linear), rel_tol=1e-12):
            raise ValueError("capacity must equal log2(1 + snr_linear)")
        if not self.dispersion > 0:
            raise ValueError(f"dispersion must be positive, got {self.dispersion}")

    @classmethod
    def from_snr(cls, snr_linear: float, dispersion: float | None = None) -> "ChannelSpec":
        snr_linear = float(snr_linear)
        if not 0.0 < snr_linear < math.inf:
            raise ValueError(f"snr_linear must be positive and finite, got {snr_linear}")
        if dispersion is None:
            dispersion = 1.0 - 1.0 / (1.0 + snr_linear) ** 2
        return cls(snr_linear, math.log2(1.0 + snr_linear), float(dispersion))

    @classmethod
    def from_db(cls, snr_db: float) -> "ChannelSpec":
        return cls.from_snr(float(db_to_linear(snr_db)))

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr_linear)

    def scaled(self, factor: float) -> "ChannelSpec":
        """Same link with transmit power multiplied by ``factor``."""
        return ChannelSpec.from_snr(self.snr_linear * factor)


@dataclass(frozen=True)
class FblParams:
    packet_bits: int = 16
    eps_max: float = 0.2

    def __post_init__(self):
        if int(self.packet_bits) != self.packet_bits or self.packet_bits < 1:
            raise ValueError(f"packet_bits must be a positive integer, got {self.packet_bits}")
        # eps_max above 0.5 would allow rates beyond capacity
        if not 0.0 < self.eps_max <= 0.5:
            raise ValueError(f"eps_max must lie in (0, 0.5], got {self.eps_max}")


@dataclass(frozen=True)
class FrameBudget:
    """Frame timing in seconds: loop latency T, symbol time T_S, feedback cost T_f."""

    frame_time: float = 10e-3
    symbol_time: float = 4e-6
    feedback_time: float = 0.0

    def __post_init__(self):
        if not (self.frame_time > 0 and self.symbol_time > 0):
            raise ValueError("frame_time and symbol_time must be positive")
        if self.feedback_time < 0:
            raise ValueError("feedback_time must be nonnegative")
        if self.n_max < 1:
            raise ValueError("frame_time must hold at least one symbol")

    @property
    def n_max(self) -> int:
        # guard against 10e-3 / 4e-6 landing a hair below 2500
        return int(math.floor(self.frame_time / self.symbol_time + 1e-9))

    @property
    def feedback_symbols(self) -> int:
        return int(math.ceil(self.feedback_time / self.symbol_time - 1e-9))


def q_function(x):
    """Gaussian tail probability Q(x) = erfc(x / sqrt 2) / 2."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1).

    ``erfcinv`` is polished with two Newton steps on Q so that the round trip
    holds to ~1e-12 relative even deep in the tail.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise ValueError("q_inverse is defined on the open interval (0, 1)")
    x = math.sqrt(2.0) * erfcinv(2.0 * p_arr)
    for _ in range(2):
        # dQ/dx = -phi(x)
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step = (0.5 * erfc(x / math.sqrt(2.0)) - p_arr) / pdf
        x = np.where(pdf > 0, x + step, x)
    return float(x) if np.ndim(x) == 0 else x


def _q_argument(ch: ChannelSpec, n, d: int):
    n = np.asarray(n, dtype=float)
    return np.sqrt(n / ch.dispersion) * (ch.capacity - d / n) * LN2


def packet_error_rate(ch: ChannelSpec, n, d: int):
    """Normal-approximation error rate of a ``d``-bit packet in ``n`` symbols.

    Vectorised over ``n``; every ``n`` must be >= 1.
    """
    if np.any(np.asarray(n) < 1):
        raise ValueError("blocklength must be >= 1")
    return q_function(_q_argument(ch, n, d))


def error_curve(ch: ChannelSpec, d: int, n_max: int) -> np.ndarray:
    """Error rate for every blocklength 0..n_max; index 0 is a certain failure."""
    eps = np.ones(n_max + 1)
    if n_max >= 1:
        eps[1:] = packet_error_rate(ch, np.arange(1, n_max + 1), d)
    return eps


def min_blocklength(ch: ChannelSpec, params: FblParams) -> int:
    """Smallest integer blocklength whose error rate does not exceed eps_max.

    The error target fixes the Q-argument, which is quadratic in sqrt(n); the
    positive root gives sqrt(n). Rounding is then corrected by an integer
    tightness check.
    """
    d = params.packet_bits
    beta = -math.sqrt(2.0 * ch.dispersion) * float(erfcinv(2.0 * params.eps_max)) / LN2
    sqrt_n = (math.sqrt(beta * beta + 4.0 * ch.capacity * d) - beta) / (2.0 * ch.capacity)
    n = max(1, math.ceil(sqrt_n * sqrt_n))
    while packet_error_rate(ch, n, d) > params.eps_max:
        n += 1
    while n > 1 and packet_error_rate(ch, n - 1, d) <= params.eps_max:
        n -= 1
    return n


def harq2_error_rate(ch: ChannelSpec, cumulative_n, d: int):
    """Type-II HARQ error after attempts totalling ``cumulative_n`` symbols."""
    return packet_error_rate(ch, cumulative_n, d)


def harq2_error_rates(ch: ChannelSpec, slots, d: int) -> np.ndarray:
    return np.atleast_1d(harq2_error_rate(ch, np.cumsum(slots), d))


def combined_arq_error(attempt_errors) -> float:
    """Overall failure after independent attempts, built up one attempt at a time."""
    total = 0.0
    for e in attempt_errors:
        total = total + e - total * e
    return total

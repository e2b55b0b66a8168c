"""Static baselines: optimal one-shot UL/DL split, static HARQ, naive CLARQ."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleError
from .fbl import (
    ChannelSpec,
    FblParams,
    FrameBudget,
    _q_argument,
    harq2_error_rates,
    min_blocklength,
    packet_error_rate,
)
from .schedule import Schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OneShotSplit:
    n_ul: int
    n_dl: int
    eps_ul: float
    eps_dl: float
    equal_error_root: float

    @property
    def loop_reliability(self) -> float:
        return (1.0 - self.eps_ul) * (1.0 - self.eps_dl)

    @property
    def loop_error(self) -> float:
        return self.eps_ul + self.eps_dl - self.eps_ul * self.eps_dl

    def as_schedule(self) -> Schedule:
        return Schedule((self.n_ul,), self.n_dl)


def one_shot_cubic(ul: ChannelSpec, dl: ChannelSpec, d: int, n_total: float) -> np.ndarray:
    """Coefficients (highest power first) of the cubic in the UL slot length whose
    roots include the split where UL and DL error rates coincide."""
    vu, vd, cu, cd, n = ul.dispersion, dl.dispersion, ul.capacity, dl.capacity, float(n_total)
    return np.array([
        vu * cd**2 + vd * cu**2,
        2 * d * vu * cd - 2 * n * vu * cd**2 - n * vd * cu**2 - 2 * d * vd * cu,
        n**2 * vu * cd**2 + d**2 * vu - 2 * d * n * vu * cd + 2 * d * n * vd * cu + d**2 * vd,
        -(d**2) * n * vd,
    ])


def equal_error_split(ul: ChannelSpec, dl: ChannelSpec, d: int, n_total: float) -> float:
    """Real UL length in (0, n_total) at which UL and DL error rates are equal.

    Solved as a bracketed root of the Q-argument difference, which is strictly
    increasing in the UL length; this is the unique admissible root of the cubic.
    """
    n_total = float(n_total)

    def gap(x):
        return float(_q_argument(ul, x, d) - _q_argument(dl, n_total - x, d))

    tiny = 1e-12 * n_total
    return brentq(gap, tiny, n_total - tiny, xtol=1e-12, rtol=4 * np.finfo(float).eps)


TIE_RTOL = 8 * np.finfo(float).eps


def first_argmin(values: np.ndarray) -> int:
    """Index of the first entry within a few ulps of the minimum.

    Candidates that differ only by rounding count as ties, so the lowest
    index (shortest UL slot) wins them deterministically.
    """
    best = float(np.min(values))
    return int(np.argmax(values <= best + abs(best) * TIE_RTOL))


def _split_errors(ul, dl, d, n_total, m):
    eu = packet_error_rate(ul, m, d)
    ed = packet_error_rate(dl, n_total - m, d)
    return eu, ed, eu + ed - eu * ed


def solve_one_shot(ul: ChannelSpec, dl: ChannelSpec, params: FblParams, n_total: int,
                   n_min: tuple[int, int] | None = None) -> OneShotSplit:
    """Best single UL slot + single DL slot within ``n_total`` symbols.

    Every admissible split is scored by its loop error (not by reliability,
    which rounds to 1 on good channels); on ties the shorter UL slot wins.
    The real equal-error root is reported alongside.

    Raises InfeasibleError when both slot minima cannot fit.
    """
    n_total = int(n_total)
    d = params.packet_bits
    nu, nd = n_min if n_min is not None else (min_blocklength(ul, params), min_blocklength(dl, params))
    lo, hi = nu, n_total - nd
    if n_total < 2 or lo > hi:
        raise InfeasibleError(f"{n_total} symbols cannot host UL >= {nu} and DL >= {nd}")
    m = np.arange(lo, hi + 1)
    eu, ed, err = _split_errors(ul, dl, d, n_total, m)
    k = first_argmin(err)
    return OneShotSplit(
        n_ul=int(m[k]),
        n_dl=n_total - int(m[k]),
        eps_ul=float(eu[k]),
        eps_dl=float(ed[k]),
        equal_error_root=equal_error_split(ul, dl, d, n_total),
    )


def static_harq_reliability(ul: ChannelSpec, dl: ChannelSpec, params: FblParams, budget: FrameBudget,
                            ul_slots, dl_slots) -> float:
    """Closed-loop reliability of a fixed multi-slot type-II HARQ schedule.

    Errors are evaluated at the total blocklength accumulated per direction.
    Attempts whose cumulative error exceeds eps_max are logged, not rejected.
    """
    ul_slots = [int(x) for x in ul_slots]
    dl_slots = [int(x) for x in dl_slots]
    if not ul_slots or len(ul_slots) != len(dl_slots):
        raise ValueError("need the same positive number of UL and DL slots")
    if min(ul_slots + dl_slots) < 1:
        raise ValueError("slots must be positive")
    attempts = len(ul_slots)
    duration = sum(ul_slots + dl_slots) * budget.symbol_time + (2 * attempts - 1) * budget.feedback_time
    if duration > budget.frame_time * (1 + 1e-12):
        raise ValueError(f"schedule needs {duration:.6g} s but the frame is {budget.frame_time:.6g} s")
    d = params.packet_bits
    eps_ul = harq2_error_rates(ul, ul_slots, d)
    eps_dl = harq2_error_rates(dl, dl_slots, d)
    bad = np.flatnonzero((eps_ul > params.eps_max) | (eps_dl > params.eps_max))
    if bad.size:
        log.warning("static HARQ attempts %s exceed eps_max=%g", (bad + 1).tolist(), params.eps_max)
    return float((1.0 - eps_ul[-1]) * (1.0 - eps_dl[-1]))


def naive_clarq_policy(ul: ChannelSpec, dl: ChannelSpec, params: FblParams, n_remaining: int,
                       n_min: tuple[int, int] | None = None) -> int:
    """UL length of the greedy stage: the one-shot optimum of what remains."""
    return solve_one_shot(ul, dl, params, n_remaining, n_min=n_min).n_ul


def naive_schedule(ul: ChannelSpec, dl: ChannelSpec, params: FblParams, n_max: int) -> Schedule:
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    n, slots = int(n_max), []
    while n >= nu + nd:
        m = naive_clarq_policy(ul, dl, params, n, n_min=(nu, nd))
        slots.append(m)
        n -= m
    return Schedule(slots, n) if slots else Schedule.empty()

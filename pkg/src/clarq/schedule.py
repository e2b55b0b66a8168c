"""Nested CLARQ schedules and their closed-loop metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbl import ChannelSpec, FblParams, packet_error_rate


@dataclass(frozen=True)
class Schedule:
    """UL attempt lengths plus the last DL slot.

    Every earlier DL slot is implied: a failed UL attempt hands the rest of
    its DL slot to the next stage, so DL slot i equals everything left after
    UL slots 1..i.
    """

    ul_slots: tuple[int, ...]
    final_dl: int

    def __post_init__(self):
        object.__setattr__(self, "ul_slots", tuple(int(m) for m in self.ul_slots))
        object.__setattr__(self, "final_dl", int(self.final_dl))
        if any(m < 1 for m in self.ul_slots):
            raise ValueError("UL slots must be positive")
        if self.ul_slots and self.final_dl < 1:
            raise ValueError("final DL slot must be positive")

    @classmethod
    def empty(cls) -> "Schedule":
        return cls((), 0)

    @property
    def attempts(self) -> int:
        return len(self.ul_slots)

    @property
    def total(self) -> int:
        return sum(self.ul_slots) + self.final_dl

    @property
    def dl_slots(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.total - np.cumsum(self.ul_slots)) if self.ul_slots else ()

    def is_empty(self) -> bool:
        return not self.ul_slots

    def is_feasible(self, n_min_ul: int, n_min_dl: int) -> bool:
        return all(m >= n_min_ul for m in self.ul_slots) and all(m >= n_min_dl for m in self.dl_slots)

    def compact(self) -> list[int]:
        """[n^U_1, ..., n^U_I, n^D_I] as printed in reports."""
        return [*self.ul_slots, self.final_dl] if self.ul_slots else []


@dataclass(frozen=True)
class ScheduleStats:
    loop_reliability: float
    expected_ul_energy: float
    min_ul_energy: float
    max_ul_energy: float

    @property
    def loop_error(self) -> float:
        return 1.0 - self.loop_reliability


def stage_errors(sched: Schedule, ul: ChannelSpec, dl: ChannelSpec, params: FblParams):
    if sched.is_empty():
        return np.empty(0), np.empty(0)
    d = params.packet_bits
    eps_ul = np.atleast_1d(packet_error_rate(ul, sched.ul_slots, d))
    eps_dl = np.atleast_1d(packet_error_rate(dl, sched.dl_slots, d))
    return eps_ul, eps_dl


def reliability_from_errors(eps_ul, eps_dl) -> float:
    """Sum over attempts of P(reach attempt i) * P(UL and DL of attempt i succeed)."""
    eps_ul = np.asarray(eps_ul, dtype=float)
    eps_dl = np.asarray(eps_dl, dtype=float)
    reach = np.concatenate(([1.0], np.cumprod(eps_ul)[:-1])) if eps_ul.size else eps_ul
    return float(np.sum(reach * (1.0 - eps_ul) * (1.0 - eps_dl)))


def loop_error_from_errors(eps_ul, eps_dl) -> float:
    """Complement of :func:`reliability_from_errors`, summed directly so that
    errors far below machine epsilon keep their precision."""
    eps_ul = np.asarray(eps_ul, dtype=float)
    eps_dl = np.asarray(eps_dl, dtype=float)
    if eps_ul.size == 0:
        return 1.0
    reach = np.concatenate(([1.0], np.cumprod(eps_ul)[:-1]))
    return float(np.prod(eps_ul) + np.sum(reach * (1.0 - eps_ul) * eps_dl))


def loop_error(sched: Schedule, ul: ChannelSpec, dl: ChannelSpec, params: FblParams) -> float:
    return loop_error_from_errors(*stage_errors(sched, ul, dl, params))


def loop_reliability(sched: Schedule, ul: ChannelSpec, dl: ChannelSpec, params: FblParams) -> float:
    """Closed-loop reliability of a simple-ARQ CLARQ schedule."""
    return reliability_from_errors(*stage_errors(sched, ul, dl, params))


def energy_stats(sched: Schedule, ul: ChannelSpec, dl: ChannelSpec, params: FblParams,
                 p_ul: float = 1.0) -> ScheduleStats:
    """UL energy per frame at constant per-symbol energy ``p_ul``.

    Attempt i is only transmitted after i-1 UL failures, so the expectation
    weights each slot by the probability of reaching it.
    """
    eps_ul, eps_dl = stage_errors(sched, ul, dl, params)
    slots = np.asarray(sched.ul_slots, dtype=float)
    if slots.size == 0:
        return ScheduleStats(0.0, 0.0, 0.0, 0.0)
    reach = np.concatenate(([1.0], np.cumprod(eps_ul)[:-1]))
    return ScheduleStats(
        loop_reliability=reliability_from_errors(eps_ul, eps_dl),
        expected_ul_energy=float(p_ul * np.sum(reach * slots)),
        min_ul_energy=float(p_ul * slots[0]),
        max_ul_energy=float(p_ul * slots.sum()),
    )

"""Joint per-attempt power and blocklength search for CLARQ under a UL energy budget.

Each UL attempt picks a power level p (a multiple of the nominal per-bit
energy), which scales the UL SNR linearly. For a fixed attempt count I and
power tuple the best nested blocklengths come from a backward stage
recursion; tuples that share a suffix share its tables. When the budget cuts
off a tuple's unconstrained optimum, the tuple is re-solved by enumerating
all but the last UL slot, with the last slot capped by what the budget still
allows.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baseline import TIE_RTOL
from .errors import InfeasibleError
from .fbl import ChannelSpec, FblParams, error_curve, min_blocklength
from .schedule import ScheduleStats, loop_error_from_errors

log = logging.getLogger(__name__)

MAX_LEVELS = 3
MAX_ATTEMPTS = 4
BUDGET_KINDS = ("expected", "worst_case")


@dataclass(frozen=True)
class ApcConfig:
    power_levels: tuple[float, ...]
    energy_budget: float
    n_max: int
    budget_kind: str = "expected"
    max_attempts: int | None = None
    energy_per_symbol: float = 1.0

    def __post_init__(self):
        levels = tuple(float(p) for p in self.power_levels)
        object.__setattr__(self, "power_levels", levels)
        if not levels:
            raise ValueError("power_levels must not be empty")
        if any(p <= 0 for p in levels):
            raise ValueError("power levels must be positive")
        if any(a >= b for a, b in zip(levels, levels[1:])):
            raise ValueError("power_levels must be strictly ascending")
        if len(levels) > MAX_LEVELS:
            raise ValueError(f"at most {MAX_LEVELS} power levels are supported")
        if not self.energy_budget > 0:
            raise ValueError("energy_budget must be positive")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if self.budget_kind not in BUDGET_KINDS:
            raise ValueError(f"budget_kind must be one of {BUDGET_KINDS}")
        if self.max_attempts is not None and not 1 <= self.max_attempts <= MAX_ATTEMPTS:
            raise ValueError(f"max_attempts must lie in [1, {MAX_ATTEMPTS}]")
        if not self.energy_per_symbol > 0:
            raise ValueError("energy_per_symbol must be positive")


@dataclass(frozen=True)
class ApcStage:
    n_ul: int
    n_dl: int
    power: float


@dataclass(frozen=True)
class ApcSchedule:
    stages: tuple[ApcStage, ...]

    @property
    def attempts(self) -> int:
        return len(self.stages)

    @property
    def ul_slots(self) -> tuple[int, ...]:
        return tuple(s.n_ul for s in self.stages)

    @property
    def dl_slots(self) -> tuple[int, ...]:
        return tuple(s.n_dl for s in self.stages)

    @property
    def powers(self) -> tuple[float, ...]:
        return tuple(s.power for s in self.stages)

    def table_row(self) -> str:
        return " ".join(f"({s.n_ul},{s.n_dl},{s.power:g})" for s in self.stages)

    @classmethod
    def from_slots(cls, n_max: int, ul_slots: Sequence[int], powers: Sequence[float]) -> "ApcSchedule":
        rest, stages = int(n_max), []
        for m, p in zip(ul_slots, powers):
            rest -= int(m)
            stages.append(ApcStage(int(m), rest, float(p)))
        return cls(tuple(stages))


@dataclass(frozen=True)
class ApcResult:
    schedule: ApcSchedule
    stats: ScheduleStats
    loop_error: float
    worst_case_energy: float
    budget_binding: bool
    tuples_searched: int = field(default=0, compare=False)


def schedule_errors(sched: ApcSchedule, ul_base: ChannelSpec, dl: ChannelSpec, params: FblParams):
    from .fbl import packet_error_rate

    d = params.packet_bits
    eps_ul = np.array([float(packet_error_rate(ul_base.scaled(s.power), s.n_ul, d)) for s in sched.stages])
    eps_dl = np.array([float(packet_error_rate(dl, s.n_dl, d)) for s in sched.stages])
    return eps_ul, eps_dl


def evaluate(sched: ApcSchedule, ul_base: ChannelSpec, dl: ChannelSpec, params: FblParams,
             energy_per_symbol: float = 1.0) -> tuple[ScheduleStats, float, float]:
    """(stats, loop error, worst-case energy) of a power-annotated schedule.

    Expected energy weights attempt i by the probability that attempts
    1..i-1 all failed in UL.
    """
    eps_ul, eps_dl = schedule_errors(sched, ul_base, dl, params)
    e = energy_per_symbol * np.array(sched.ul_slots, dtype=float) * np.array(sched.powers)
    reach = np.concatenate(([1.0], np.cumprod(eps_ul)[:-1]))
    err = loop_error_from_errors(eps_ul, eps_dl)
    stats = ScheduleStats(
        loop_reliability=1.0 - err,
        expected_ul_energy=float(np.dot(reach, e)),
        min_ul_energy=float(e[0]),
        max_ul_energy=float(e.sum()),
    )
    return stats, err, float(e.sum())


class _Tables:
    """Error curves and per-suffix stage tables for one problem instance."""

    def __init__(self, ul_base: ChannelSpec, dl: ChannelSpec, params: FblParams, cfg: ApcConfig):
        self.cfg = cfg
        n = cfg.n_max
        d = params.packet_bits
        self.n = n
        self.ed = error_curve(dl, d, n)
        self.nd = min_blocklength(dl, params)
        self.eu = {}
        self.nu = {}
        for p in cfg.power_levels:
            ch = ul_base.scaled(p)
            self.eu[p] = error_curve(ch, d, n)
            self.nu[p] = min_blocklength(ch, params)
        self._suffix: dict[tuple, tuple[np.ndarray, np.ndarray]] = {(): (np.ones(n + 1), None)}
        self._prefix_min: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def stage_values(self, p: float, f_next: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Best error and UL slot for every remaining length in ``r`` given the tail table ``f_next``."""
        r = r[:, None]
        m = np.arange(self.n + 1)[None, :]
        rest = np.clip(r - m, 0, None)
        eu, ed = self.eu[p][m], self.ed[rest]
        tail = f_next[rest]
        val = (eu * np.where(np.isfinite(tail), tail, 1.0) + ed) - eu * ed
        ok = (m >= self.nu[p]) & (r - m >= self.nd) & np.isfinite(tail)
        val = np.where(ok, val, np.inf)
        best = val.min(axis=1)
        thresh = best + np.abs(np.where(np.isfinite(best), best, 0.0)) * TIE_RTOL
        arg = np.argmax(val <= thresh[:, None], axis=1)
        return best, np.where(np.isfinite(best), arg, -1)

    def suffix(self, powers: tuple[float, ...]):
        """Best-error table over remaining length for stages using ``powers``."""
        if powers not in self._suffix:
            f_next, _ = self.suffix(powers[1:])
            self._suffix[powers] = self.stage_values(powers[0], f_next, np.arange(self.n + 1))
        return self._suffix[powers]

    def unconstrained(self, powers: tuple[float, ...]) -> tuple[float, list[int]] | None:
        f_next, _ = self.suffix(powers[1:])
        best, arg = self.stage_values(powers[0], f_next, np.array([self.n]))
        if not np.isfinite(best[0]):
            return None
        slots, r = [int(arg[0])], self.n - int(arg[0])
        for k in range(1, len(powers)):
            _, a = self.suffix(powers[k:])
            slots.append(int(a[r]))
            r -= slots[-1]
        return float(best[0]), slots

    def prefix_min(self, p: float) -> tuple[np.ndarray, np.ndarray]:
        """Terminal error table: T[r, c] = min over UL slots m <= c of the last-stage error."""
        if p not in self._prefix_min:
            n = self.n
            r = np.arange(n + 1)[:, None]
            m = np.arange(n + 1)[None, :]
            rest = np.clip(r - m, 0, None)
            eu, ed = self.eu[p][m], self.ed[rest]
            val = np.where((m >= self.nu[p]) & (r - m >= self.nd), (eu + ed) - eu * ed, np.inf)
            run = np.minimum.accumulate(val, axis=1)
            prev = np.concatenate((np.full((n + 1, 1), np.inf), run[:, :-1]), axis=1)
            improved = val < prev - np.abs(np.where(np.isfinite(prev), prev, 0.0)) * TIE_RTOL
            idx = np.maximum.accumulate(np.where(improved, m, -1), axis=1)
            self._prefix_min[p] = (run, idx.astype(np.int32))
        return self._prefix_min[p]


def _constrained(tab: _Tables, powers: tuple[float, ...], budget: float, kind: str,
                 e_sym: float) -> tuple[float, list[int]] | None:
    """Best schedule for a fixed power tuple whose energy respects the budget.

    Every UL slot but the last is enumerated (the second-to-last one as a
    vector); the last is read from the capped prefix-minimum table.
    """
    last = powers[-1]
    table, argt = tab.prefix_min(last)
    n, nd = tab.n, tab.nd
    best_err, best_slots = math.inf, None

    def finish(prefix: list[int], r: int, acc_err: float, reach: float, spent: float):
        """Vectorised over the second-to-last slot (or directly terminal when I = 1)."""
        nonlocal best_err, best_slots
        k = len(prefix)
        if k == len(powers) - 1:
            cap = _cap(budget - spent, e_sym * last * (reach if kind == "expected" else 1.0))
            cap = min(cap, r - nd)
            if cap < tab.nu[last]:
                return
            err = acc_err + reach * table[r, cap]
            if err < best_err * (1 - TIE_RTOL):
                best_err, best_slots = err, prefix + [int(argt[r, cap])]
            return
        p = powers[k]
        m = np.arange(tab.nu[p], r + 1)
        r2 = r - m
        eu, ed = tab.eu[p][m], tab.ed[r2]
        reach2 = reach * eu
        stage_w = e_sym * p * m * (reach if kind == "expected" else 1.0)
        spent2 = spent + stage_w
        cap = _cap_vec(budget - spent2, e_sym * last * (reach2 if kind == "expected" else 1.0))
        cap = np.minimum(cap, r2 - nd)
        ok = (r2 >= tab.nu[last] + nd) & (cap >= tab.nu[last])
        if not ok.any():
            return
        m, r2, eu, ed, reach2, cap = m[ok], r2[ok], eu[ok], ed[ok], reach2[ok], cap[ok]
        err = acc_err + reach * (1.0 - eu) * ed + reach2 * table[r2, cap]
        j = int(np.argmin(err))
        if err[j] < best_err * (1 - TIE_RTOL):
            best_err = float(err[j])
            best_slots = prefix + [int(m[j]), int(argt[r2[j], cap[j]])]

    def recurse(prefix: list[int], r: int, acc_err: float, reach: float, spent: float):
        k = len(prefix)
        if k >= len(powers) - 2:
            finish(prefix, r, acc_err, reach, spent)
            return
        p = powers[k]
        need_after = sum(tab.nu[q] for q in powers[k + 1:]) + nd
        for m in range(tab.nu[p], r - need_after + 1):
            eu, ed = tab.eu[p][m], tab.ed[r - m]
            w = e_sym * p * m * (reach if kind == "expected" else 1.0)
            if spent + w > budget * (1 + 1e-12):
                break
            recurse(prefix + [m], r - m, acc_err + reach * (1.0 - eu) * ed, reach * eu, spent + w)

    if len(powers) == 1:
        finish([], n, 0.0, 1.0, 0.0)
    else:
        recurse([], n, 0.0, 1.0, 0.0)
    if best_slots is None:
        return None
    return best_err, best_slots


def _cap(energy_left: float, per_symbol: float) -> int:
    if energy_left < 0:
        return -1
    return int(math.floor(energy_left / per_symbol * (1 + 1e-12)))


def _cap_vec(energy_left: np.ndarray, per_symbol) -> np.ndarray:
    out = np.floor(energy_left / per_symbol * (1 + 1e-12))
    return np.where(energy_left < 0, -1, out).astype(np.int64)


def attempt_limit(ul_base: ChannelSpec, dl: ChannelSpec, params: FblParams, cfg: ApcConfig) -> int:
    """Largest attempt count whose slot minima fit, capped by ``cfg.max_attempts``."""
    nu = min(min_blocklength(ul_base.scaled(p), params) for p in cfg.power_levels)
    nd = min_blocklength(dl, params)
    if nu + nd > cfg.n_max:
        return 0
    fit = (cfg.n_max - nd) // nu
    if cfg.max_attempts is not None:
        return min(fit, cfg.max_attempts)
    if fit > MAX_ATTEMPTS:
        raise ValueError(f"instance admits up to {fit} attempts; exhaustive search is limited to "
                         f"{MAX_ATTEMPTS}, set max_attempts to bound it")
    return fit


def solve_apc(ul_base: ChannelSpec, dl: ChannelSpec, params: FblParams, cfg: ApcConfig) -> ApcResult:
    """Lowest loop error over power tuples and nested blocklengths within the energy budget.

    Ties in loop error go to the lower expected energy, then to fewer attempts.
    Raises InfeasibleError when no schedule meets the slot minima and the budget.
    """
    limit = attempt_limit(ul_base, dl, params, cfg)
    if limit == 0:
        raise InfeasibleError(f"{cfg.n_max} symbols cannot host a single UL+DL attempt")
    tab = _Tables(ul_base, dl, params, cfg)
    e_sym, budget, kind = cfg.energy_per_symbol, cfg.energy_budget, cfg.budget_kind

    def energy_ok(slots, powers) -> tuple[bool, float, float]:
        sched = ApcSchedule.from_slots(cfg.n_max, slots, powers)
        stats, err, worst = evaluate(sched, ul_base, dl, params, e_sym)
        used = stats.expected_ul_energy if kind == "expected" else worst
        return used <= budget * (1 + 1e-12), err, stats.expected_ul_energy

    candidates = []
    for count in range(1, limit + 1):
        for powers in itertools.product(cfg.power_levels, repeat=count):
            sol = tab.unconstrained(powers)
            if sol is not None:
                candidates.append((sol[0], powers, sol[1]))
    candidates.sort(key=lambda c: (c[0], len(c[1])))

    best = None  # (err, expected energy, attempts, powers, slots, binding)
    searched = 0
    for free_err, powers, slots in candidates:
        if best is not None and free_err > best[0] * (1 + TIE_RTOL):
            break
        searched += 1
        ok, err, energy = energy_ok(slots, powers)
        binding = False
        if not ok:
            sol = _constrained(tab, powers, budget, kind, e_sym)
            if sol is None:
                continue
            slots, binding = sol[1], True
            ok, err, energy = energy_ok(slots, powers)
            if not ok:  # rounding at the cap boundary
                log.debug("discarding %s: constrained solution overshoots the budget", powers)
                continue
        key = (err, energy, len(powers))
        if best is None or key < (best[0] * (1 - TIE_RTOL), best[1], best[2]):
            best = (err, energy, len(powers), powers, slots, binding)
    if best is None:
        raise InfeasibleError("no schedule satisfies the energy budget")
    _, _, _, powers, slots, binding = best
    sched = ApcSchedule.from_slots(cfg.n_max, slots, powers)
    stats, err, worst = evaluate(sched, ul_base, dl, params, e_sym)
    return ApcResult(sched, stats, err, worst, binding, searched)

"""Frame-level simulation of the CLARQ protocol.

A frame runs UL attempts until one is acknowledged, then spends whatever is
left on a single DL slot. Every UL attempt is followed by one ACK/NACK that
costs ``feedback_time``; the DL completion is not acknowledged.

Because a failed attempt always leads to the same next stage, any schedule
source collapses into a deterministic :class:`Plan`, and frames are simulated
in vectorised blocks. Frame ``f`` draws its uniforms from the substream
``(seed, f // BLOCK_FRAMES)`` at offset ``f % BLOCK_FRAMES``, so results do
not depend on worker count or chunking.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .baseline import naive_clarq_policy, solve_one_shot
from .dp import DpPolicy
from .errors import InfeasibleError
from .fbl import ChannelSpec, FblParams, FrameBudget, min_blocklength, packet_error_rate
from .schedule import Schedule, reliability_from_errors

BLOCK_FRAMES = 1 << 16

ScheduleSource = Union[Schedule, DpPolicy, str]


@dataclass(frozen=True)
class Plan:
    ul_slots: tuple[int, ...]
    dl_slots: tuple[int, ...]
    eps_ul: tuple[float, ...]
    eps_dl: tuple[float, ...]
    budget: FrameBudget

    @property
    def attempts(self) -> int:
        return len(self.ul_slots)

    @property
    def analytic_reliability(self) -> float:
        return reliability_from_errors(self.eps_ul, self.eps_dl)

    def attempt_distribution(self) -> np.ndarray:
        """P(exactly i attempts used), i = 1..I; the last entry absorbs total UL failure."""
        eps = np.asarray(self.eps_ul)
        reach = np.concatenate(([1.0], np.cumprod(eps)[:-1]))
        probs = reach * (1.0 - eps)
        probs[-1] = reach[-1]
        return probs

    def expected_ul_symbols(self) -> float:
        return float(np.dot(self.attempt_distribution(), np.cumsum(self.ul_slots)))

    def elapsed(self, attempts_used, ul_success) -> np.ndarray:
        b = self.budget
        idx = np.asarray(attempts_used) - 1
        cum_ul = np.cumsum(self.ul_slots)[idx]
        dl = np.asarray(self.dl_slots)[idx]
        sym = cum_ul + np.where(ul_success, dl, 0)
        return sym * b.symbol_time + (idx + 1) * b.feedback_time


def _stage_errors(ul, dl, params, ul_slots, dl_slots):
    d = params.packet_bits
    return (tuple(float(x) for x in np.atleast_1d(packet_error_rate(ul, ul_slots, d))),
            tuple(float(x) for x in np.atleast_1d(packet_error_rate(dl, dl_slots, d))))


def build_plan(source: ScheduleSource, ul: ChannelSpec, dl: ChannelSpec, params: FblParams,
               budget: FrameBudget) -> Plan:
    """Resolve a schedule source into the per-attempt slot plan for this budget.

    ``source`` is a fixed :class:`Schedule`, a :class:`DpPolicy` (looked up on
    the blocklength left after charging each feedback), ``"naive"`` or
    ``"one_shot"``.
    """
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    kf = budget.feedback_symbols
    remaining = budget.n_max
    ul_slots: list[int] = []
    dl_slots: list[int] = []

    if isinstance(source, Schedule):
        for i, m in enumerate(source.ul_slots, start=1):
            if remaining < nu + nd + kf:
                raise ValueError(f"attempt {i} starts with {remaining} symbols; needs {nu + nd + kf}")
            rest = remaining - m - kf
            if m < nu or rest < nd:
                raise ValueError(f"attempt {i} (UL {m}, DL {rest}) violates the slot minima")
            ul_slots.append(m)
            dl_slots.append(rest)
            remaining = rest
    elif isinstance(source, DpPolicy):
        if source.n_max < budget.n_max:
            raise ValueError(f"policy covers {source.n_max} symbols, frame has {budget.n_max}")
        while remaining - kf >= nu + nd:
            avail = remaining - kf
            m = int(source.phi[avail])
            ul_slots.append(m)
            dl_slots.append(avail - m)
            remaining = avail - m
    elif source == "naive":
        while remaining - kf >= nu + nd:
            avail = remaining - kf
            m = naive_clarq_policy(ul, dl, params, avail, n_min=(nu, nd))
            ul_slots.append(m)
            dl_slots.append(avail - m)
            remaining = avail - m
    elif source == "one_shot":
        split = solve_one_shot(ul, dl, params, budget.n_max - kf, n_min=(nu, nd))
        ul_slots, dl_slots = [split.n_ul], [split.n_dl]
    else:
        raise ValueError(f"unknown schedule source {source!r}")

    if not ul_slots:
        raise InfeasibleError(f"{budget.n_max} symbols cannot host a single UL+DL attempt")
    eps_ul, eps_dl = _stage_errors(ul, dl, params, ul_slots, dl_slots)
    return Plan(tuple(ul_slots), tuple(dl_slots), eps_ul, eps_dl, budget)


@dataclass(frozen=True)
class SimConfig:
    frames: int
    seed: int
    source: ScheduleSource
    budget: FrameBudget = field(default_factory=FrameBudget)
    workers: int = 1

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be >= 1")


@dataclass(frozen=True)
class FrameOutcome:
    frame_index: int
    ul_attempts_used: int
    ul_success: bool
    dl_success: bool
    ul_symbols_spent: int
    elapsed_time: float


@dataclass
class FrameOutcomes:
    """Column store of frame outcomes; iterate for :class:`FrameOutcome` records."""

    ul_attempts: np.ndarray
    ul_success: np.ndarray
    dl_success: np.ndarray
    ul_symbols: np.ndarray
    elapsed: np.ndarray

    def __len__(self):
        return len(self.ul_attempts)

    def __iter__(self) -> Iterator[FrameOutcome]:
        for i in range(len(self)):
            yield FrameOutcome(i, int(self.ul_attempts[i]), bool(self.ul_success[i]),
                               bool(self.dl_success[i]), int(self.ul_symbols[i]), float(self.elapsed[i]))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def simulate_block(plan: Plan, seed: int, block: int, count: int) -> FrameOutcomes:
    rng = _block_rng(seed, block)
    draws = rng.random((count, plan.attempts, 2))
    ul_ok = draws[:, :, 0] >= np.asarray(plan.eps_ul)
    any_ok = ul_ok.any(axis=1)
    first = np.where(any_ok, ul_ok.argmax(axis=1), plan.attempts - 1)
    dl_draw = draws[np.arange(count), first, 1]
    dl_ok = any_ok & (dl_draw >= np.asarray(plan.eps_dl)[first])
    used = first + 1
    return FrameOutcomes(
        ul_attempts=used.astype(np.int16),
        ul_success=any_ok,
        dl_success=dl_ok,
        ul_symbols=np.cumsum(plan.ul_slots)[first].astype(np.int64),
        elapsed=plan.elapsed(used, any_ok),
    )


@dataclass
class SimSummary:
    frames: int
    loop_successes: int
    attempt_histogram: list[int]
    ul_slots: list[int]
    dl_slots: list[int]
    analytic_reliability: float
    analytic_expected_ul_symbols: float
    max_elapsed: float

    @property
    def empirical_reliability(self) -> float:
        return self.loop_successes / self.frames

    @property
    def empirical_error(self) -> float:
        return 1.0 - self.empirical_reliability

    @property
    def analytic_error(self) -> float:
        return 1.0 - self.analytic_reliability

    @property
    def binomial_sigma(self) -> float:
        p = self.analytic_reliability
        return float(np.sqrt(p * (1.0 - p) / self.frames))

    def _symbols_per_frame(self) -> tuple[np.ndarray, np.ndarray]:
        return np.cumsum(self.ul_slots), np.asarray(self.attempt_histogram, dtype=float)

    @property
    def mean_ul_symbols(self) -> float:
        sym, hist = self._symbols_per_frame()
        return float(np.dot(sym, hist) / self.frames)

    @property
    def ul_symbols_std(self) -> float:
        sym, hist = self._symbols_per_frame()
        mean = self.mean_ul_symbols
        return float(np.sqrt(np.dot(hist, (sym - mean) ** 2) / self.frames))

    def ul_symbols_percentile(self, q: float) -> int:
        sym, hist = self._symbols_per_frame()
        cdf = np.cumsum(hist) / self.frames
        return int(sym[min(int(np.searchsorted(cdf, q / 100.0 - 1e-12)), len(sym) - 1)])

    def merge(self, other: "SimSummary") -> "SimSummary":
        return SimSummary(
            frames=self.frames + other.frames,
            loop_successes=self.loop_successes + other.loop_successes,
            attempt_histogram=[a + b for a, b in zip(self.attempt_histogram, other.attempt_histogram)],
            ul_slots=self.ul_slots,
            dl_slots=self.dl_slots,
            analytic_reliability=self.analytic_reliability,
            analytic_expected_ul_symbols=self.analytic_expected_ul_symbols,
            max_elapsed=max(self.max_elapsed, other.max_elapsed),
        )

    def to_record(self) -> dict:
        rec = asdict(self)
        rec.update(
            empirical_reliability=self.empirical_reliability,
            empirical_error=self.empirical_error,
            analytic_error=self.analytic_error,
            binomial_sigma=self.binomial_sigma,
            mean_ul_symbols=self.mean_ul_symbols,
            ul_symbols_std=self.ul_symbols_std,
            ul_symbols_p50=self.ul_symbols_percentile(50),
            ul_symbols_p90=self.ul_symbols_percentile(90),
            ul_symbols_p99=self.ul_symbols_percentile(99),
        )
        return rec


def _summarize(plan: Plan, out: FrameOutcomes) -> SimSummary:
    hist = np.bincount(out.ul_attempts, minlength=plan.attempts + 1)[1:]
    return SimSummary(
        frames=len(out),
        loop_successes=int(out.dl_success.sum()),
        attempt_histogram=[int(x) for x in hist],
        ul_slots=list(plan.ul_slots),
        dl_slots=list(plan.dl_slots),
        analytic_reliability=plan.analytic_reliability,
        analytic_expected_ul_symbols=plan.expected_ul_symbols(),
        max_elapsed=float(out.elapsed.max()),
    )


CSV_COLUMNS = ("frame_index", "ul_attempts", "ul_success", "dl_success", "ul_symbols", "elapsed_us")


@dataclass
class SimResult:
    plan: Plan
    summary: SimSummary
    outcomes: FrameOutcomes | None = None


def run_plan(plan: Plan, frames: int, seed: int, workers: int = 1, keep_outcomes: bool = False,
             csv_path=None) -> SimResult:
    n_blocks = -(-frames // BLOCK_FRAMES)
    sizes = [min(BLOCK_FRAMES, frames - b * BLOCK_FRAMES) for b in range(n_blocks)]

    def work(b):
        return simulate_block(plan, seed, b, sizes[b])

    writer = None
    fh = None
    if csv_path is not None:
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
    summary = None
    kept = []
    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for b, out in enumerate(pool.map(work, range(n_blocks))):
                part = _summarize(plan, out)
                summary = part if summary is None else summary.merge(part)
                if keep_outcomes:
                    kept.append(out)
                if writer is not None:
                    start = b * BLOCK_FRAMES
                    for i in range(len(out)):
                        writer.writerow((start + i, int(out.ul_attempts[i]), int(out.ul_success[i]),
                                         int(out.dl_success[i]), int(out.ul_symbols[i]),
                                         f"{out.elapsed[i] * 1e6:.3f}"))
    finally:
        if fh is not None:
            fh.close()
    outcomes = None
    if keep_outcomes:
        outcomes = FrameOutcomes(*(np.concatenate([getattr(o, f) for o in kept])
                                   for f in ("ul_attempts", "ul_success", "dl_success", "ul_symbols", "elapsed")))
    return SimResult(plan, summary, outcomes)


def run_frames(cfg: SimConfig, ul: ChannelSpec, dl: ChannelSpec, params: FblParams,
               keep_outcomes: bool = False, csv_path=None) -> SimResult:
    """Simulate ``cfg.frames`` frames; the plan is validated before any frame runs."""
    plan = build_plan(cfg.source, ul, dl, params, cfg.budget)
    return run_plan(plan, cfg.frames, cfg.seed, workers=cfg.workers, keep_outcomes=keep_outcomes,
                    csv_path=csv_path)


def write_summary(result: SimResult, path) -> None:
    Path(path).write_text(json.dumps(result.summary.to_record(), indent=2) + "\n")

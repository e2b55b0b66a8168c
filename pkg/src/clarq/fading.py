"""Monte Carlo over random block-fading channels.

Each run draws one UL/DL SNR pair (constant for the whole frame) as

    SNR_dB = base + shadow + fade,   shadow ~ N(0, sigma^2) dB,
    fade = 10 log10(X) - fading_scale_db,   X ~ Exp(1),

and evaluates the analytic loop error of every requested strategy on that
same pair, so strategies are compared on paired draws.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baseline import naive_schedule, solve_one_shot
from .dp import extract_schedule, solve_policy
from .errors import InfeasibleError
from .fbl import ChannelSpec, FblParams, min_blocklength
from .schedule import Schedule, loop_error

STRATEGIES = ("optimal", "one_shot", "naive", "lut")


@dataclass(frozen=True)
class FadingModel:
    base_snr_db: float = 10.0
    shadow_sigma_db: float = 3.0
    fading_scale_db: float = 10.0
    fading: bool = True
    ul_dl_independent: bool = True

    def __post_init__(self):
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be nonnegative")

    def draw_db(self, rng: np.random.Generator, size=None) -> np.ndarray:
        snr = self.base_snr_db + self.shadow_sigma_db * rng.standard_normal(size)
        if self.fading:
            snr = snr + 10.0 * np.log10(rng.standard_exponential(size)) - self.fading_scale_db
        return snr

    def snr_range_db(self, tail_sigmas: float = 4.0) -> tuple[float, float]:
        """Interval that holds all but a negligible fraction of draws."""
        spread = tail_sigmas * self.shadow_sigma_db
        lo, hi = self.base_snr_db - spread, self.base_snr_db + spread
        if self.fading:
            # 10 log10 Exp(1) lies in [-40, 10] dB with probability ~1 - 1e-4
            lo += -40.0 - self.fading_scale_db
            hi += 10.0 - self.fading_scale_db
        return lo, hi


def draw_channel_pair(model: FadingModel, rng: np.random.Generator) -> tuple[ChannelSpec, ChannelSpec]:
    ul_db = float(model.draw_db(rng))
    dl_db = float(model.draw_db(rng)) if model.ul_dl_independent else ul_db
    return ChannelSpec.from_db(ul_db), ChannelSpec.from_db(dl_db)


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(run,))))


def strategy_schedule(strategy: str, ul: ChannelSpec, dl: ChannelSpec, params: FblParams, n_max: int,
                      lut=None) -> Schedule:
    """Schedule a strategy picks for these channels; empty when nothing fits."""
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    if nu + nd > n_max and strategy != "lut":
        return Schedule.empty()
    if strategy == "optimal":
        return extract_schedule(solve_policy(ul, dl, params, n_max), n_max, validity_ceiling=n_max + 1)
    if strategy == "one_shot":
        return solve_one_shot(ul, dl, params, n_max, n_min=(nu, nd)).as_schedule()
    if strategy == "naive":
        return naive_schedule(ul, dl, params, n_max)
    if strategy == "lut":
        if lut is None:
            raise ValueError("strategy 'lut' needs a lookup table")
        return lut.lookup(ul.snr_db, dl.snr_db)
    raise ValueError(f"unknown strategy {strategy!r}")


def schedule_loop_error(sched: Schedule, ul: ChannelSpec, dl: ChannelSpec, params: FblParams) -> float:
    return loop_error(sched, ul, dl, params)


@dataclass(frozen=True)
class RunRecord:
    run: int
    ul_snr_db: float
    dl_snr_db: float
    loop_errors: dict


@dataclass
class McAggregate:
    strategy: str
    per_run_errors: list[float] = field(default_factory=list)

    @property
    def runs(self) -> int:
        return len(self.per_run_errors)

    @property
    def mean_loop_error(self) -> float:
        return float(np.mean(self.per_run_errors))

    def bootstrap_ci(self, level: float = 0.95, resamples: int = 2000, seed: int = 0) -> tuple[float, float]:
        x = np.asarray(self.per_run_errors)
        rng = np.random.default_rng(seed)
        means = x[rng.integers(0, x.size, (resamples, x.size))].mean(axis=1)
        a = (1.0 - level) / 2.0
        return float(np.quantile(means, a)), float(np.quantile(means, 1.0 - a))


@dataclass(frozen=True)
class _Job:
    model: FadingModel
    strategies: tuple[str, ...]
    params: FblParams
    n_max: int
    seed: int
    lut: object = None


def _run_one(job: _Job, run: int) -> RunRecord:
    ul, dl = draw_channel_pair(job.model, run_rng(job.seed, run))
    errors = {}
    for s in job.strategies:
        try:
            sched = strategy_schedule(s, ul, dl, job.params, job.n_max, job.lut)
        except InfeasibleError:
            sched = Schedule.empty()
        errors[s] = schedule_loop_error(sched, ul, dl, job.params)
    return RunRecord(run, ul.snr_db, dl.snr_db, errors)


def _run_chunk(job: _Job, runs: Sequence[int]) -> list[RunRecord]:
    return [_run_one(job, r) for r in runs]


def run_campaign_records(model: FadingModel, strategies: Sequence[str], params: FblParams, n_max: int,
                         runs: int, seed: int, workers: int = 1, lut=None) -> list[RunRecord]:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    job = _Job(model, tuple(strategies), params, int(n_max), int(seed), lut)
    if workers <= 1:
        return _run_chunk(job, range(runs))
    chunks = [list(range(i, runs, workers)) for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [job] * len(chunks), chunks))
    records = [rec for part in parts for rec in part]
    records.sort(key=lambda r: r.run)
    return records


def aggregate(records: Sequence[RunRecord], strategies: Sequence[str]) -> dict[str, McAggregate]:
    return {s: McAggregate(s, [r.loop_errors[s] for r in records]) for s in strategies}


def run_campaign(model: FadingModel, strategies: Sequence[str], params: FblParams, n_max: int, runs: int,
                 seed: int, workers: int = 1, lut=None) -> dict[str, McAggregate]:
    """Mean analytic loop error per strategy over ``runs`` paired channel draws."""
    records = run_campaign_records(model, strategies, params, n_max, runs, seed, workers, lut)
    return aggregate(records, strategies)


CAMPAIGN_COLUMNS = ("run", "ul_snr_db", "dl_snr_db", "strategy", "loop_error")


def write_campaign_csv(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CAMPAIGN_COLUMNS)
        for r in records:
            for s, e in r.loop_errors.items():
                w.writerow((r.run, repr(r.ul_snr_db), repr(r.dl_snr_db), s, repr(e)))


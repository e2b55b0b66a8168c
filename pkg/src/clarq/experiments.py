"""Experiment drivers behind the command line.

Each driver takes a validated :class:`ExperimentConfig` and returns a table
(column names plus rows) and optional side artifacts; writing files is left
to the caller so that nothing is created before a run succeeds.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .apc import ApcConfig, solve_apc
from .baseline import naive_schedule, solve_one_shot
from .config import ExperimentConfig
from .dp import extract_schedule, policy_to_text, save_policy, solve_policy
from .errors import InfeasibleError
from .fading import FadingModel, aggregate, run_campaign_records, write_campaign_csv
from .fbl import ChannelSpec, FblParams, min_blocklength
from .lut import LutSpec, build_lut, lut_grid_range, lut_to_text, resolution_experiment, save_lut
from .protocol import SimConfig, run_frames
from .schedule import energy_stats, loop_error, stage_errors

INFEASIBLE = "infeasible"
OK = "ok"


@dataclass
class Result:
    columns: tuple[str, ...]
    rows: list[dict]
    messages: list[str] = field(default_factory=list)
    # file name -> writer(path); written next to the main CSV
    artifacts: dict[str, Callable[[Path], None]] = field(default_factory=dict)

    @property
    def infeasible_only(self) -> bool:
        return bool(self.rows) and all(r.get("status") == INFEASIBLE for r in self.rows)


def run_policy(cfg: ExperimentConfig) -> Result:
    sc = cfg.scenario
    ul, dl, params, n = sc.ul, sc.dl, sc.params(), sc.n_max
    cols = ("attempt", "n_ul", "n_dl", "eps_ul", "eps_dl", "status")
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    if nu + nd > n:
        return Result(cols, [dict(attempt=0, n_ul="", n_dl="", eps_ul="", eps_dl="", status=INFEASIBLE)],
                      [f"infeasible: n_min UL {nu} + DL {nd} exceeds n_max {n}"])
    policy = solve_policy(ul, dl, params, n)
    sched = extract_schedule(policy, n)
    st = energy_stats(sched, ul, dl, params)
    err = loop_error(sched, ul, dl, params)
    rows = []
    eu, ed = stage_errors(sched, ul, dl, params)
    for i, (m, r) in enumerate(zip(sched.ul_slots, sched.dl_slots)):
        rows.append(dict(attempt=i + 1, n_ul=m, n_dl=r, eps_ul=float(eu[i]), eps_dl=float(ed[i]), status=OK))
    msgs = [
        f"n_min UL/DL: {nu}/{nd}",
        f"schedule: [{', '.join(map(str, sched.compact()))}]",
        f"loop error: {err:.4e}",
        f"UL energy expected/min/max: {st.expected_ul_energy:.2f}/{st.min_ul_energy:.0f}/{st.max_ul_energy:.0f}",
    ]
    res = Result(cols, rows, msgs)
    if cfg.params["save_policy"]:
        res.artifacts[cfg.params["save_policy"]] = lambda p: save_policy(policy, p)
    if cfg.params["policy_text"]:
        res.artifacts[cfg.params["policy_text"]] = lambda p: Path(p).write_text(policy_to_text(policy))
    return res


def _n_range(cfg: ExperimentConfig, nu: int, nd: int) -> range:
    hi = cfg.params["n_max_max"] or cfg.scenario.n_max
    lo = cfg.params["n_max_min"] or min(nu + nd, hi)
    return range(lo, hi + 1, cfg.params["n_max_step"])


def run_sweep_nmax(cfg: ExperimentConfig) -> Result:
    sc = cfg.scenario
    ul, dl, params = sc.ul, sc.dl, sc.params()
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    ns = _n_range(cfg, nu, nd)
    policy = solve_policy(ul, dl, params, ns[-1])
    cols = ("n_max", "first_ul_slot", "attempts", "loop_error", "expected_energy", "min_energy", "max_energy",
            "one_shot_energy", "status")
    rows = []
    for n in ns:
        sched = extract_schedule(policy, n, validity_ceiling=n + 1)
        if sched.is_empty():
            rows.append(dict(n_max=n, first_ul_slot="", attempts=0, loop_error=1.0, expected_energy="",
                             min_energy="", max_energy="", one_shot_energy="", status=INFEASIBLE))
            continue
        st = energy_stats(sched, ul, dl, params)
        one = solve_one_shot(ul, dl, params, n, n_min=(nu, nd))
        rows.append(dict(n_max=n, first_ul_slot=sched.ul_slots[0], attempts=sched.attempts,
                         loop_error=loop_error(sched, ul, dl, params), expected_energy=st.expected_ul_energy,
                         min_energy=st.min_ul_energy, max_energy=st.max_ul_energy,
                         one_shot_energy=float(one.n_ul), status=OK))
    return Result(cols, rows, [f"{len(rows)} rows for n_max {ns[0]}..{ns[-1]}"])


def run_benchmark(cfg: ExperimentConfig) -> Result:
    sc = cfg.scenario
    ul, dl, params = sc.ul, sc.dl, sc.params()
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    ns = _n_range(cfg, nu, nd)
    policy = solve_policy(ul, dl, params, ns[-1])
    cols = ("n_max", "optimal_error", "naive_error", "one_shot_error", "optimal_attempts", "naive_attempts",
            "status")
    rows = []
    for n in ns:
        opt = extract_schedule(policy, n, validity_ceiling=n + 1)
        if opt.is_empty():
            rows.append(dict(n_max=n, optimal_error=1.0, naive_error=1.0, one_shot_error=1.0,
                             optimal_attempts=0, naive_attempts=0, status=INFEASIBLE))
            continue
        naive = naive_schedule(ul, dl, params, n)
        one = solve_one_shot(ul, dl, params, n, n_min=(nu, nd))
        rows.append(dict(n_max=n, optimal_error=loop_error(opt, ul, dl, params),
                         naive_error=loop_error(naive, ul, dl, params), one_shot_error=one.loop_error,
                         optimal_attempts=opt.attempts, naive_attempts=naive.attempts, status=OK))
    return Result(cols, rows, [f"{len(rows)} rows for n_max {ns[0]}..{ns[-1]}"])


def run_sensitivity_grid(cfg: ExperimentConfig) -> Result:
    sc, p = cfg.scenario, cfg.params
    n = sc.n_max
    snrs = np.arange(p["snr_db_min"], p["snr_db_max"] + 1e-9, p["snr_db_step"])
    cols = ("snr_db", "packet_bits", "n_min", "attempts", "optimal_error", "naive_error", "one_shot_error",
            "status")
    rows = []
    for snr, d in itertools.product(snrs, p["packet_bits"]):
        ch = ChannelSpec.from_db(float(snr))
        params = FblParams(d, sc.eps_max)
        nm = min_blocklength(ch, params)
        if 2 * nm > n:
            rows.append(dict(snr_db=float(snr), packet_bits=d, n_min=nm, attempts=0, optimal_error=1.0,
                             naive_error=1.0, one_shot_error=1.0, status=INFEASIBLE))
            continue
        opt = extract_schedule(solve_policy(ch, ch, params, n), n, validity_ceiling=n + 1)
        rows.append(dict(snr_db=float(snr), packet_bits=d, n_min=nm, attempts=opt.attempts,
                         optimal_error=loop_error(opt, ch, ch, params),
                         naive_error=loop_error(naive_schedule(ch, ch, params, n), ch, ch, params),
                         one_shot_error=solve_one_shot(ch, ch, params, n, n_min=(nm, nm)).loop_error,
                         status=OK))
    return Result(cols, rows, [f"{len(rows)} grid points"])


def _model(p: dict, sigma: float | None = None, scale: float | None = None) -> FadingModel:
    return FadingModel(p["base_snr_db"], p["shadow_sigma_db"] if sigma is None else sigma,
                       p["fading_scale_db"] if scale is None else scale, p["fading"], p["ul_dl_independent"])


def run_fading_campaign(cfg: ExperimentConfig) -> Result:
    sc, p = cfg.scenario, cfg.params
    params, n = sc.params(), sc.n_max
    cols = ("shadow_sigma_db", "fading_scale_db", "strategy", "runs", "mean_loop_error", "ci95_low",
            "ci95_high", "status")
    rows, all_records = [], []
    for sigma, scale in itertools.product(p["shadow_sigma_db"], p["fading_scale_db"]):
        model = _model(p, sigma, scale)
        records = run_campaign_records(model, p["strategies"], params, n, p["runs"], cfg.seed, cfg.workers)
        all_records.append((sigma, scale, records))
        for name, agg in aggregate(records, p["strategies"]).items():
            lo, hi = agg.bootstrap_ci(seed=cfg.seed)
            rows.append(dict(shadow_sigma_db=sigma, fading_scale_db=scale, strategy=name, runs=agg.runs,
                             mean_loop_error=agg.mean_loop_error, ci95_low=lo, ci95_high=hi, status=OK))

    def write_runs(path: Path):
        if len(all_records) == 1:
            write_campaign_csv(all_records[0][2], path)
            return
        stem = path.with_suffix("")
        for sigma, scale, records in all_records:
            write_campaign_csv(records, Path(f"{stem}_sigma{sigma:g}_scale{scale:g}.csv"))

    res = Result(cols, rows, [f"{len(all_records)} campaign(s) of {p['runs']} runs"])
    res.artifacts["fading_campaign_runs.csv"] = write_runs
    return res


def run_lut_resolution(cfg: ExperimentConfig) -> Result:
    sc, p = cfg.scenario, cfg.params
    params, n = sc.params(), sc.n_max
    model = _model(p)
    cache: dict = {}
    rows_ = resolution_experiment(p["steps_db"], model, params, n, p["runs"], cfg.seed, cfg.workers, cache)
    cols = ("step_db", "grid_points", "mean_loop_error", "exact_mean_loop_error", "status")
    rows = [dict(step_db=r.step_db, grid_points=r.grid_points, mean_loop_error=r.mean_loop_error,
                 exact_mean_loop_error=r.exact_mean_loop_error, status=OK) for r in rows_]
    res = Result(cols, rows, [f"{p['runs']} runs per step; exact CLARQ mean {rows_[0].exact_mean_loop_error:.4e}"])
    if p["save_lut"] or p["lut_text"]:
        lo, hi = lut_grid_range(model)
        step = min(p["steps_db"])
        finest = build_lut(LutSpec(lo, max(hi, lo + step), step, params, n), cache)
        if p["save_lut"]:
            res.artifacts[p["save_lut"]] = lambda path: save_lut(finest, path)
        if p["lut_text"]:
            res.artifacts[p["lut_text"]] = lambda path: Path(path).write_text(lut_to_text(finest))
    return res


def run_apc_case(cfg: ExperimentConfig) -> Result:
    sc, p = cfg.scenario, cfg.params
    ul, dl, params = sc.ul, sc.dl, sc.params()
    e_sym = p["energy_per_symbol"]
    cols = ("n_max", "mode", "loop_error", "expected_energy", "worst_case_energy", "budget", "stages", "status")
    rows = []
    for n in p["n_max_values"]:
        policy = solve_policy(ul, dl, params, n)
        plain = extract_schedule(policy, n, validity_ceiling=n + 1)
        if plain.is_empty():
            for mode in ("with_apc", "without_apc"):
                rows.append(dict(n_max=n, mode=mode, loop_error=1.0, expected_energy="", worst_case_energy="",
                                 budget="", stages="", status=INFEASIBLE))
            continue
        st = energy_stats(plain, ul, dl, params, p_ul=e_sym)
        budget = st.max_ul_energy
        acfg = ApcConfig(tuple(p["power_levels"]), budget, n, p["budget_kind"],
                         plain.attempts if p["cap_attempts"] else None, e_sym)
        try:
            res = solve_apc(ul, dl, params, acfg)
            rows.append(dict(n_max=n, mode="with_apc", loop_error=res.loop_error,
                             expected_energy=res.stats.expected_ul_energy, worst_case_energy=res.worst_case_energy,
                             budget=budget, stages=res.schedule.table_row(), status=OK))
        except InfeasibleError:
            rows.append(dict(n_max=n, mode="with_apc", loop_error=1.0, expected_energy="", worst_case_energy="",
                             budget=budget, stages="", status=INFEASIBLE))
        stages = " ".join(f"({m},{r},1)" for m, r in zip(plain.ul_slots, plain.dl_slots))
        rows.append(dict(n_max=n, mode="without_apc", loop_error=loop_error(plain, ul, dl, params),
                         expected_energy=st.expected_ul_energy, worst_case_energy=st.max_ul_energy,
                         budget=budget, stages=stages, status=OK))
    return Result(cols, rows, [f"{len(p['n_max_values'])} n_max values"])


def run_simulate(cfg: ExperimentConfig) -> Result:
    sc, p = cfg.scenario, cfg.params
    ul, dl, params, budget = sc.ul, sc.dl, sc.params(), sc.budget()
    if p["source"] == "optimal":
        source = solve_policy(ul, dl, params, budget.n_max)
    else:
        source = p["source"]
    sim = SimConfig(p["frames"], cfg.seed, source, budget, cfg.workers)

    def frames_writer(path: Path):
        # the outcome stream is regenerated from the seed rather than held in memory
        run_frames(sim, ul, dl, params, csv_path=path)

    result = run_frames(sim, ul, dl, params)
    rec = result.summary.to_record()
    cols = ("frames", "ul_slots", "dl_slots", "empirical_error", "analytic_error", "binomial_sigma",
            "mean_ul_symbols", "analytic_expected_ul_symbols", "ul_symbols_p50", "ul_symbols_p99",
            "attempt_histogram", "max_elapsed_us", "status")
    row = {k: rec[k] for k in cols if k in rec}
    row.update(ul_slots=" ".join(map(str, rec["ul_slots"])), dl_slots=" ".join(map(str, rec["dl_slots"])),
               attempt_histogram=" ".join(map(str, rec["attempt_histogram"])),
               max_elapsed_us=rec["max_elapsed"] * 1e6, status=OK)
    z = (rec["empirical_error"] - rec["analytic_error"]) / rec["binomial_sigma"] if rec["binomial_sigma"] else 0.0
    res = Result(cols, [row], [f"empirical {rec['empirical_error']:.4e} vs analytic {rec['analytic_error']:.4e} "
                               f"({z:+.2f} sigma)"])
    res.artifacts["simulate_summary.json"] = lambda path: Path(path).write_text(
        json.dumps(rec, indent=2) + "\n")
    if p["write_frames"]:
        res.artifacts["simulate_frames.csv"] = frames_writer
    return res


DRIVERS: dict[str, Callable[[ExperimentConfig], Result]] = {
    "policy": run_policy,
    "sweep_nmax": run_sweep_nmax,
    "benchmark": run_benchmark,
    "sensitivity_grid": run_sensitivity_grid,
    "fading_campaign": run_fading_campaign,
    "lut_resolution": run_lut_resolution,
    "apc_case": run_apc_case,
    "simulate": run_simulate,
}


def run_experiment(cfg: ExperimentConfig) -> Result:
    return DRIVERS[cfg.experiment](cfg)

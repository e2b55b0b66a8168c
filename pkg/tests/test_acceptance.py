"""Acceptance criteria 1-10, each checked at its stated tolerance.

Every test prints a single ``criterion N: PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from clarq.apc import ApcConfig, solve_apc
from clarq.baseline import naive_schedule, solve_one_shot, static_harq_reliability
from clarq.dp import extract_schedule, solve_policy, verify_structure
from clarq.fading import FadingModel, aggregate, run_campaign_records
from clarq.fbl import ChannelSpec, FblParams, FrameBudget, error_curve, min_blocklength
from clarq.lut import resolution_experiment
from clarq.protocol import SimConfig, run_frames
from clarq.scenarios import SCENARIOS
from clarq.schedule import energy_stats, loop_error

from oracles import brute_force_schedules, toy_instance

A = SCENARIOS["scenario_a"]
P = FblParams()


def test_criterion_01_minimal_blocklengths(verdict):
    cases = [(0.05, 322), (0.07, 232), (0.03, 533)]
    got, times = [], []
    for snr, _ in cases:
        ch = ChannelSpec.from_snr(snr)
        min_blocklength(ch, P)
        runs = []
        for _ in range(50):
            t = time.perf_counter()
            n = min_blocklength(ch, P)
            runs.append(time.perf_counter() - t)
        got.append(n)
        times.append(float(np.median(runs)))
    ok = got == [n for _, n in cases] and max(times) < 1e-3
    verdict.record(1, ok, f"n_min {got} (want 322/232/533), median runtime {max(times) * 1e6:.0f} us")


def test_criterion_02_reference_schedule(verdict):
    t = time.perf_counter()
    sched = extract_schedule(solve_policy(A.ul, A.dl, P, 2500), 2500)
    elapsed = time.perf_counter() - t
    ok = sched.ul_slots == (902, 674, 462) and sched.final_dl == 462 and elapsed < 5.0
    verdict.record(2, ok, f"schedule {sched.compact()} in {elapsed:.2f} s")


def test_criterion_03_error_rates(verdict):
    policy = solve_policy(A.ul, A.dl, P, 2500)
    opt = loop_error(extract_schedule(policy, 2500), A.ul, A.dl, P)
    one = solve_one_shot(A.ul, A.dl, P, 2500).loop_error
    ok = (abs(opt / 7.8e-8 - 1) <= 0.05 and abs(one / 3.68e-6 - 1) <= 0.05 and one / opt >= 40)
    verdict.record(3, ok, f"optimal {opt:.4e}, one-shot {one:.4e}, ratio {one / opt:.1f}")


def test_criterion_04_oracle_equivalence(verdict):
    rng = np.random.default_rng(4)
    t = time.perf_counter()
    value_miss = schedule_miss = 0
    for _ in range(50):
        ul, dl, params, n_max = toy_instance(rng)
        pol = solve_policy(ul, dl, params, n_max)
        eu = error_curve(ul, params.packet_bits, n_max)
        ed = error_curve(dl, params.packet_bits, n_max)
        best, ties = brute_force_schedules(eu, ed, n_max, pol.n_min_ul, pol.n_min_dl)
        sched = extract_schedule(pol, n_max)
        # the two sides sum the same terms in different orders
        value_miss += not math.isclose(float(pol.eta[n_max]), best, rel_tol=1e-12)
        schedule_miss += sched.ul_slots != min(ties)
    elapsed = time.perf_counter() - t
    ok = value_miss == 0 and schedule_miss == 0 and elapsed < 60
    verdict.record(4, ok, f"50 toy instances: {value_miss} value / {schedule_miss} schedule mismatches, "
                          f"{elapsed:.1f} s")


def _structure_instances(count: int, seed: int):
    """Half symmetric, half independent UL/DL SNRs in [-16, -3] dB."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        ul = ChannelSpec.from_db(rng.uniform(-16, -3))
        dl = ul if i % 2 == 0 else ChannelSpec.from_db(rng.uniform(-16, -3))
        lo = min_blocklength(ul, P) + min_blocklength(dl, P)
        n_max = int(rng.integers(lo, max(lo + 1, min(4000, 12 * lo))))
        yield ul, dl, n_max


def test_criterion_05_structure(verdict):
    counts = {"symmetric": {}, "asymmetric": {}}
    for ul, dl, n_max in _structure_instances(200, 5):
        pol = solve_policy(ul, dl, P, n_max)
        report = verify_structure(extract_schedule(pol, n_max, validity_ceiling=n_max + 1), pol)
        kind = counts["symmetric" if pol.symmetric else "asymmetric"]
        for name in report.failures:
            kind[name] = kind.get(name, 0) + 1
    total = sum(sum(c.values()) for c in counts.values())
    verdict.record(5, total == 0, f"200 instances, violations by check: {counts}")


def test_criterion_06_simulator(verdict):
    sc = A.with_overrides({"n_max": 1200})
    budget = sc.budget()
    policy = solve_policy(sc.ul, sc.dl, P, 1200)
    t = time.perf_counter()
    res = run_frames(SimConfig(1_000_000, 6, policy, budget), sc.ul, sc.dl, P)
    elapsed = time.perf_counter() - t
    s = res.summary
    z_err = (s.empirical_error - s.analytic_error) / s.binomial_sigma
    expected = energy_stats(extract_schedule(policy, 1200), sc.ul, sc.dl, P).expected_ul_energy
    z_energy = (s.mean_ul_symbols - expected) / (s.ul_symbols_std / math.sqrt(s.frames))
    ok = (1e-3 <= s.analytic_error <= 1e-1 and abs(z_err) <= 3 and abs(z_energy) <= 3 and elapsed < 120)
    verdict.record(6, ok, f"analytic {s.analytic_error:.4e}, empirical {s.empirical_error:.4e} ({z_err:+.2f} sigma); "
                          f"UL symbols {s.mean_ul_symbols:.2f} vs {expected:.2f} ({z_energy:+.2f} sigma); "
                          f"{elapsed:.1f} s")


def test_criterion_07_static_harq_bound(verdict, caplog):
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(100):
        ul = ChannelSpec.from_db(rng.uniform(-16, -3))
        dl = ChannelSpec.from_db(rng.uniform(-16, -3))
        n_max = int(rng.integers(600, 2600))
        kf = int(rng.integers(0, 40))
        attempts = int(rng.integers(1, 5))
        usable = n_max - (2 * attempts - 1) * kf
        cuts = np.sort(rng.choice(np.arange(1, usable), size=2 * attempts - 1, replace=False))
        parts = np.diff(np.concatenate(([0], cuts, [usable])))
        budget = FrameBudget(n_max * 4e-6, 4e-6, kf * 4e-6)
        rel = static_harq_reliability(ul, dl, P, budget, parts[0::2], parts[1::2])
        best = solve_one_shot(ul, dl, P, n_max - kf, n_min=(1, 1)).loop_reliability
        violations += rel > best
    verdict.record(7, violations == 0, f"100 static HARQ schedules, {violations} beat the one-shot optimum")


# published with-APC rows: n_max -> (loop error, UL slots)
APC_ROWS = {
    1200: (2.75e-3, (434, 349)),
    1400: (4.40e-4, (507, 406)),
    1600: (6.90e-5, (562, 470)),
    1800: (7.79e-6, (523, 400, 398)),
}


def test_criterion_08_adaptive_power(verdict):
    t = time.perf_counter()
    lines, err_ok, slot_ok, dom_err, dom_energy = [], True, True, True, True
    for n, (ref_err, ref_slots) in APC_ROWS.items():
        plain = extract_schedule(solve_policy(A.ul, A.dl, P, n), n)
        st = energy_stats(plain, A.ul, A.dl, P, p_ul=4.0)
        cfg = ApcConfig((1.0, 1.25), st.max_ul_energy, n, "expected", plain.attempts, 4.0)
        res = solve_apc(A.ul, A.dl, P, cfg)
        plain_err = loop_error(plain, A.ul, A.dl, P)
        e_ok = abs(res.loop_error / ref_err - 1) <= 0.10
        s_ok = (len(res.schedule.ul_slots) == len(ref_slots)
                and all(abs(a - b) <= 2 for a, b in zip(res.schedule.ul_slots, ref_slots)))
        err_ok &= e_ok
        slot_ok &= s_ok
        dom_err &= res.loop_error < plain_err
        dom_energy &= res.stats.expected_ul_energy < st.expected_ul_energy
        lines.append(f"{n}: {res.schedule.table_row()} err {res.loop_error:.3e} ({res.loop_error / ref_err - 1:+.1%})"
                     f" energy {res.stats.expected_ul_energy:.1f} vs plain {st.expected_ul_energy:.1f}")
    elapsed = time.perf_counter() - t
    ok = err_ok and slot_ok and dom_err and dom_energy and elapsed < 600
    verdict.record(8, ok, f"errors within 10%: {err_ok}; slots within 2: {slot_ok}; error dominance: {dom_err}; "
                          f"mean-energy dominance: {dom_energy}; {elapsed:.0f} s | " + " | ".join(lines))


def _shape_violations(sc):
    ul, dl = sc.ul, sc.dl
    nu, nd = min_blocklength(ul, P), min_blocklength(dl, P)
    policy = solve_policy(ul, dl, P, 2500)
    bad = {"error_monotone": 0, "ordering": 0, "first_slot_jumps": 0, "energy": 0}
    prev = None
    for n in range(nu + nd, 2501):
        sched = extract_schedule(policy, n, validity_ceiling=n + 1)
        opt = float(policy.eta[n])
        naive = loop_error(naive_schedule(ul, dl, P, n), ul, dl, P)
        one = solve_one_shot(ul, dl, P, n, n_min=(nu, nd))
        if not (opt <= naive * (1 + 1e-12) and naive <= one.loop_error * (1 + 1e-9)):
            bad["ordering"] += 1
        if sched.attempts >= 2 and energy_stats(sched, ul, dl, P).expected_ul_energy > one.n_ul:
            bad["energy"] += 1
        if prev is not None:
            p_err, p_first, p_att = prev
            bad["error_monotone"] += opt > p_err
            jumped = sched.attempts > p_att
            bad["first_slot_jumps"] += (sched.ul_slots[0] < p_first) != jumped
        prev = (opt, sched.ul_slots[0], sched.attempts)
    return bad


def test_criterion_09_sweep_shapes(verdict):
    found = {name: _shape_violations(sc) for name, sc in SCENARIOS.items()}
    ok = all(v == 0 for bad in found.values() for v in bad.values())
    verdict.record(9, ok, f"n_max from n_min^U + n_min^D to 2500, violations: {found}")


def _paired_increase(lower, higher, seed=0):
    """95% bootstrap interval of the mean paired difference higher - lower."""
    d = np.asarray(higher) - np.asarray(lower)
    rng = np.random.default_rng(seed)
    means = d[rng.integers(0, d.size, (2000, d.size))].mean(axis=1)
    return float(np.quantile(means, 0.025)), float(np.quantile(means, 0.975))


@pytest.mark.slow
def test_criterion_10_fading_campaigns(verdict):
    seed, runs = 10, 1000
    strategies = ["optimal", "one_shot", "naive"]
    notes, ok = [], True

    t = time.perf_counter()
    big = run_campaign_records(FadingModel(), strategies, P, 2500, 5000, seed)
    big_time = time.perf_counter() - t
    ok &= big_time < 600
    notes.append(f"5000-run campaign {big_time:.0f} s")
    # per-run substreams make the first runs of the long campaign the short campaign
    campaigns = {(3.0, 10.0): big[:runs]}
    for sigma in (5.0, 7.0, 10.0):
        campaigns[(sigma, 10.0)] = run_campaign_records(FadingModel(shadow_sigma_db=sigma), strategies, P, 2500,
                                                        runs, seed)
    for scale in (15.0, 20.0):
        campaigns[(3.0, scale)] = run_campaign_records(FadingModel(fading_scale_db=scale), strategies, P, 2500,
                                                       runs, seed)

    dominated = sum(r.loop_errors["optimal"] > min(r.loop_errors["one_shot"], r.loop_errors["naive"]) * (1 + 1e-12)
                    for recs in [big, *campaigns.values()] for r in recs)
    ok &= dominated == 0
    notes.append(f"realizations where a baseline beats optimal: {dominated}")

    def opt_errors(key):
        return [r.loop_errors["optimal"] for r in campaigns[key]]

    for label, keys in (("sigma", [(s, 10.0) for s in (3.0, 5.0, 7.0, 10.0)]),
                        ("scale", [(3.0, s) for s in (10.0, 15.0, 20.0)])):
        means = [aggregate(campaigns[k], ["optimal"])["optimal"].mean_loop_error for k in keys]
        cis = [_paired_increase(opt_errors(a), opt_errors(b)) for a, b in zip(keys, keys[1:])]
        mono = all(a < b for a, b in zip(means, means[1:]))
        ok &= mono
        sure = all(lo > 0 for lo, _ in cis)
        notes.append(f"{label} means {[f'{m:.3e}' for m in means]} increasing: {mono} "
                     f"(paired 95% intervals exclude zero: {sure})")

    rows = resolution_experiment([16.0, 8.0, 4.0, 2.0, 1.0], FadingModel(), P, 2500, runs, seed)
    lut_means = [r.mean_loop_error for r in rows]
    lut_mono = all(a >= b for a, b in zip(lut_means, lut_means[1:])) and lut_means[-1] >= rows[0].exact_mean_loop_error
    ok &= lut_mono
    notes.append(f"LUT steps 16..1 dB means {[f'{m:.4e}' for m in lut_means]} "
                 f"(exact {rows[0].exact_mean_loop_error:.4e}) nonincreasing: {lut_mono}")
    verdict.record(10, ok, "; ".join(notes))

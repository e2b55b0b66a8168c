"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from clarq.fbl import ChannelSpec, FblParams


def q_by_integration(x: float) -> float:
    return quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), x, math.inf, epsabs=0, epsrel=1e-13)[0]


def q_inverse_by_bisection(p: float) -> float:
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(mid / math.sqrt(2)) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def per_scalar(ch: ChannelSpec, n: int, d: int) -> float:
    """Error rate written out term by term with the standard library."""
    c = math.log2(1 + ch.snr_linear)
    v = 1 - 1 / (1 + ch.snr_linear) ** 2
    arg = math.sqrt(n / v) * (c - d / n) * math.log(2)
    return 0.5 * math.erfc(arg / math.sqrt(2))


def min_blocklength_by_scan(ch: ChannelSpec, params: FblParams, limit: int = 10**6) -> int:
    """Smallest n with error <= eps_max, scanning upward from 1.

    The error is not monotone for n < d / C, so the scan starts at the first
    n where the rate drops below capacity.
    """
    n = max(1, math.floor(params.packet_bits / ch.capacity))
    while n > 1 and per_scalar(ch, n - 1, params.packet_bits) <= params.eps_max:
        n -= 1
    while per_scalar(ch, n, params.packet_bits) > params.eps_max:
        n += 1
        if n > limit:
            raise RuntimeError("scan limit")
    return n


def count_nested(n_max: int, nu: int, nd: int) -> int:
    """Number of nested schedules (UL sequences) that fit into n_max."""
    memo = {}

    def c(r):
        if r < nu + nd:
            return 0
        if r not in memo:
            memo[r] = sum(1 + c(r - m) for m in range(nu, r - nd + 1))
        return memo[r]

    return c(n_max)


def brute_force_schedules(eu: np.ndarray, ed: np.ndarray, n_max: int, nu: int, nd: int):
    """Enumerate every nested schedule by depth-first search.

    Returns (best_error, [all UL sequences within 1e-12 relative of best]).
    Every DFS node (a UL sequence m_1..m_I) is a complete schedule whose last
    DL slot takes what remains.
    """
    best = [math.inf]
    ties: list[tuple[int, ...]] = []
    eu = eu.tolist()
    ed = ed.tolist()

    def visit(prefix, r, acc, reach):
        for m in range(nu, r - nd + 1):
            rest = r - m
            err = acc + reach * (eu[m] + (1 - eu[m]) * ed[rest])
            seq = prefix + (m,)
            if err < best[0] * (1 - 1e-12):
                best[0] = err
                ties.clear()
                ties.append(seq)
            elif err <= best[0] * (1 + 1e-12):
                ties.append(seq)
            if rest >= nu + nd:
                visit(seq, rest, acc + reach * (1 - eu[m]) * ed[rest], reach * eu[m])

    visit((), n_max, 0.0, 1.0)
    return best[0], [t for t in ties if _close(_err(t, eu, ed, n_max), best[0])]


def _err(seq, eu, ed, n_max):
    acc, reach, r = 0.0, 1.0, n_max
    for i, m in enumerate(seq):
        r -= m
        if i == len(seq) - 1:
            return acc + reach * (eu[m] + (1 - eu[m]) * ed[r])
        acc += reach * (1 - eu[m]) * ed[r]
        reach *= eu[m]
    raise ValueError


def _close(a, b):
    return abs(a - b) <= 1e-12 * max(abs(b), 1e-300)


def toy_instance(rng: np.random.Generator, max_count: int = 100_000, n_cap: int = 200):
    """Random channels with slot minima in [3, 12] and an n_max small enough to enumerate."""
    from clarq.fbl import min_blocklength

    while True:
        d = int(rng.integers(2, 9))
        params = FblParams(d, float(rng.uniform(0.15, 0.45)))
        ul = ChannelSpec.from_db(float(rng.uniform(-6, 10)))
        dl = ChannelSpec.from_db(float(rng.uniform(-6, 10)))
        nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
        if not (3 <= nu <= 12 and 3 <= nd <= 12):
            continue
        hi = nu + nd
        while hi + 1 <= n_cap and count_nested(hi + 1, nu, nd) <= max_count:
            hi += 1
        n_max = int(rng.integers((nu + nd + hi) // 2, hi + 1))
        return ul, dl, params, n_max


def brute_force_apc(ul, dl, params: FblParams, levels, budget: float, kind: str, n_max: int,
                    max_attempts: int, energy_per_symbol: float = 1.0):
    """Lowest loop error over every power tuple and nested slot sequence that meets the budget.

    Returns (error, expected energy) of the best candidate, or None.
    """
    from clarq.fbl import min_blocklength, packet_error_rate

    d = params.packet_bits
    nd = min_blocklength(dl, params)
    best = None

    def score(slots, powers):
        acc, reach, r, expected, worst = 0.0, 1.0, n_max, 0.0, 0.0
        for i, (m, p) in enumerate(zip(slots, powers)):
            r -= m
            eu = float(packet_error_rate(ul.scaled(p), m, d))
            ed = float(packet_error_rate(dl, r, d))
            e = energy_per_symbol * m * p
            expected += reach * e
            worst += e
            if i == len(slots) - 1:
                acc += reach * (eu + (1 - eu) * ed)
            else:
                acc += reach * (1 - eu) * ed
            reach *= eu
        used = expected if kind == "expected" else worst
        return acc, expected, used <= budget * (1 + 1e-12)

    def visit(slots, powers, r):
        nonlocal best
        if len(slots) == max_attempts:
            return
        for p in levels:
            nu = min_blocklength(ul.scaled(p), params)
            for m in range(nu, r - nd + 1):
                s, q = slots + (m,), powers + (p,)
                err, energy, ok = score(s, q)
                if ok and (best is None or (err, energy) < best):
                    best = (err, energy)
                visit(s, q, r - m)

    visit((), (), n_max)
    return best

"""Integer dynamic program for the optimal CLARQ policy.

For every remaining blocklength n the policy stores the best next UL slot
(``phi``) and the smallest achievable closed-loop error from that point on
(``eta``); the reliability table ``xi`` is its complement. Working with the
error keeps full relative precision when reliabilities round to 1.0. Tables
are filled bottom-up in n, so each entry only reads already-final smaller
entries.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import TIE_RTOL
from .errors import FblValidityWarning
from .fbl import ChannelSpec, FblParams, error_curve, min_blocklength, packet_error_rate
from .schedule import Schedule

VALIDITY_CEILING = 4000

_BLOCK_CELLS = 1 << 22

POLICY_MAGIC = b"CLRQPOL1"
_POLICY_HEADER = struct.Struct("<8sH3d3dIdIII")


@dataclass(frozen=True, eq=False)
class DpPolicy:
    ul: ChannelSpec
    dl: ChannelSpec
    params: FblParams
    n_min_ul: int
    n_min_dl: int
    phi: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.phi.setflags(write=False)
        self.eta.setflags(write=False)

    @property
    def xi(self) -> np.ndarray:
        """Best closed-loop reliability for each remaining blocklength."""
        return 1.0 - self.eta

    @property
    def n_max(self) -> int:
        return len(self.phi) - 1

    @property
    def symmetric(self) -> bool:
        return (self.ul.capacity == self.dl.capacity and self.ul.dispersion == self.dl.dispersion
                and self.n_min_ul == self.n_min_dl)

    def __eq__(self, other):
        if not isinstance(other, DpPolicy):
            return NotImplemented
        return (self.ul == other.ul and self.dl == other.dl and self.params == other.params
                and self.n_min_ul == other.n_min_ul and self.n_min_dl == other.n_min_dl
                and np.array_equal(self.phi, other.phi) and np.array_equal(self.eta, other.eta))

    def stage_error(self, n: int, m: int) -> float:
        """Loop error of sending m UL symbols now and following the policy afterwards."""
        d = self.params.packet_bits
        eu = float(packet_error_rate(self.ul, m, d))
        ed = float(packet_error_rate(self.dl, n - m, d))
        return (eu * float(self.eta[n - m]) + ed) - eu * ed


def solve_policy(ul: ChannelSpec, dl: ChannelSpec, params: FblParams, n_max: int,
                 prune: bool = False) -> DpPolicy:
    """Fill the policy tables for every remaining blocklength up to ``n_max``.

    ``prune`` restricts the UL slot to at most half of what remains, which is
    only valid for symmetric (TDD) links.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    d = params.packet_bits
    nu, nd = min_blocklength(ul, params), min_blocklength(dl, params)
    if prune and not (ul == dl and nu == nd):
        raise ValueError("pruning is only sound for symmetric links")
    eu = error_curve(ul, d, n_max)
    ed = error_curve(dl, d, n_max)
    phi = np.arange(n_max + 1, dtype=np.int32)
    eta = np.ones(n_max + 1)
    # eta[n] only reads eta[n - m] with m >= nu, so up to nu consecutive
    # entries depend solely on already-final ones and are solved together
    start = nu + nd
    rows_cap = max(1, _BLOCK_CELLS // max(1, n_max))
    while start <= n_max:
        stop = min(start + nu, start + rows_cap, n_max + 1)
        n = np.arange(start, stop)[:, None]
        m = np.arange(nu, stop - nd)[None, :]
        rest = np.clip(n - m, 0, None)
        r = (eu[m] * eta[rest] + ed[rest]) - eu[m] * ed[rest]
        valid = m <= (n // 2 if prune else n - nd)
        r = np.where(valid, r, np.inf)
        best = r.min(axis=1, keepdims=True)
        k = np.argmax(r <= best + np.abs(best) * TIE_RTOL, axis=1)
        rows = np.arange(stop - start)
        phi[start:stop] = m[0, k]
        eta[start:stop] = r[rows, k]
        start = stop
    return DpPolicy(ul, dl, params, nu, nd, phi, eta)


def extract_schedule(policy: DpPolicy, n_max: int, validity_ceiling: int = VALIDITY_CEILING) -> Schedule:
    """Read the allocation stage by stage from the Phi table."""
    n_max = int(n_max)
    if n_max > policy.n_max:
        raise ValueError(f"policy covers n <= {policy.n_max}, asked for {n_max}")
    n, slots = n_max, []
    while n >= policy.n_min_ul + policy.n_min_dl:
        slots.append(int(policy.phi[n]))
        n -= slots[-1]
    if not slots:
        return Schedule.empty()
    sched = Schedule(slots, n)
    longest = max(sched.dl_slots + sched.ul_slots)
    if longest > validity_ceiling:
        warnings.warn(f"slot of {longest} symbols exceeds the finite-blocklength validity "
                      f"ceiling {validity_ceiling}", FblValidityWarning, stacklevel=2)
    return sched


def optimal_schedule(ul: ChannelSpec, dl: ChannelSpec, params: FblParams, n_max: int) -> Schedule:
    return extract_schedule(solve_policy(ul, dl, params, n_max), n_max)


@dataclass
class StructureReport:
    checks: dict[str, bool] = field(default_factory=dict)
    messages: dict[str, str] = field(default_factory=dict)

    def record(self, name: str, ok: bool, message: str = ""):
        self.checks[name] = bool(ok)
        if not ok:
            self.messages[name] = message

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def __str__(self):
        if self.ok:
            return "all structure checks passed"
        return "; ".join(f"{k}: {self.messages.get(k, 'failed')}" for k in self.failures)


def verify_structure(sched: Schedule, policy: DpPolicy, symmetric: bool | None = None) -> StructureReport:
    """Check an optimal schedule against the known structural properties.

    monotone       UL slots never grow from one attempt to the next.
    terminal       last stage is the best one-shot split of what it has left; on
                   symmetric links this is the equal-error split up to one symbol.
    slot_bounds    (symmetric only) n^U_i in [n_min, 2^(I-i+1) n_min) and
                   n^D_i in [(I-i+1) n_min, 2^(I-i+1) n_min).
    attempt_bounds (symmetric only) log2(n_max/n_min) - 1 < I <= n_max/n_min - 1.
    """
    report = StructureReport()
    if symmetric is None:
        symmetric = policy.symmetric
    ul_slots = list(sched.ul_slots)
    I = len(ul_slots)
    if I == 0:
        for name in ("monotone", "terminal", "slot_bounds", "attempt_bounds"):
            report.record(name, True)
        return report

    d = policy.params.packet_bits
    rising = [i + 1 for i in range(I - 1) if ul_slots[i] < ul_slots[i + 1]]
    report.record("monotone", not rising, f"UL slot grows after attempt(s) {rising}")

    last_n = ul_slots[-1] + sched.final_dl
    if symmetric:
        def gap(m):
            return abs(float(packet_error_rate(policy.ul, m, d) - packet_error_rate(policy.dl, last_n - m, d)))
        m = ul_slots[-1]
        g = gap(m)
        ok = all(g <= gap(k) for k in (m - 1, m + 1) if 1 <= k < last_n)
        report.record("terminal", ok, f"terminal split {m}/{last_n - m} is not equal-error")
    else:
        nu, nd = policy.n_min_ul, policy.n_min_dl
        # a terminal split must leave too little for another attempt
        lo = max(nu, last_n - (nu + nd) + 1)
        cands = np.arange(lo, last_n - nd + 1)
        eu = packet_error_rate(policy.ul, cands, d)
        ed = packet_error_rate(policy.dl, last_n - cands, d)
        errs = eu + ed - eu * ed
        got = float(errs[ul_slots[-1] - lo]) if ul_slots[-1] >= lo else math.inf
        report.record("terminal", got <= float(np.min(errs)) * (1 + 1e-12),
                      f"terminal split {ul_slots[-1]}/{sched.final_dl} is not the one-shot optimum")

    if symmetric:
        n_min = policy.n_min_ul
        dl_slots = sched.dl_slots
        bad = []
        for i in range(1, I + 1):
            cap = 2 ** (I - i + 1) * n_min
            u, dd = ul_slots[i - 1], dl_slots[i - 1]
            if not (n_min <= u < cap):
                bad.append(f"n^U_{i}={u} not in [{n_min}, {cap})")
            if not ((I - i + 1) * n_min <= dd < cap):
                bad.append(f"n^D_{i}={dd} not in [{(I - i + 1) * n_min}, {cap})")
        report.record("slot_bounds", not bad, "; ".join(bad))
        ratio = sched.total / n_min
        ok = math.log2(ratio) - 1 < I <= ratio - 1
        report.record("attempt_bounds", ok,
                      f"I={I} outside ({math.log2(ratio) - 1:.3f}, {ratio - 1:.3f}]")
    else:
        report.record("slot_bounds", True)
        report.record("attempt_bounds", True)
    return report


# --- serialization -----------------------------------------------------------

def policy_to_bytes(policy: DpPolicy) -> bytes:
    """Versioned little-endian record: header, then phi as int32 and the loop-error table as float64."""
    header = _POLICY_HEADER.pack(
        POLICY_MAGIC, 1,
        policy.ul.snr_linear, policy.ul.capacity, policy.ul.dispersion,
        policy.dl.snr_linear, policy.dl.capacity, policy.dl.dispersion,
        policy.params.packet_bits, policy.params.eps_max,
        policy.n_min_ul, policy.n_min_dl, policy.n_max,
    )
    return header + policy.phi.astype("<i4").tobytes() + policy.eta.astype("<f8").tobytes()


def policy_from_bytes(blob: bytes) -> DpPolicy:
    size = _POLICY_HEADER.size
    if len(blob) < size:
        raise ValueError("truncated policy record")
    (magic, version, su, cu, vu, sd, cd, vd, d, eps_max, nu, nd, n_max) = _POLICY_HEADER.unpack(blob[:size])
    if magic != POLICY_MAGIC or version != 1:
        raise ValueError("not a version-1 CLARQ policy record")
    count = n_max + 1
    expected = size + count * 4 + count * 8
    if len(blob) != expected:
        raise ValueError(f"policy record has {len(blob)} bytes, expected {expected}")
    phi = np.frombuffer(blob, dtype="<i4", count=count, offset=size).astype(np.int32)
    eta = np.frombuffer(blob, dtype="<f8", count=count, offset=size + 4 * count).astype(float)
    return DpPolicy(ChannelSpec(su, cu, vu), ChannelSpec(sd, cd, vd), FblParams(d, eps_max), nu, nd, phi, eta)


def save_policy(policy: DpPolicy, path) -> None:
    Path(path).write_bytes(policy_to_bytes(policy))


def load_policy(path) -> DpPolicy:
    return policy_from_bytes(Path(path).read_bytes())


def policy_to_text(policy: DpPolicy) -> str:
    lines = [
        "# CLARQ policy v1",
        f"# ul_snr_linear={policy.ul.snr_linear!r} dl_snr_linear={policy.dl.snr_linear!r}",
        f"# packet_bits={policy.params.packet_bits} eps_max={policy.params.eps_max!r}",
        f"# n_min_ul={policy.n_min_ul} n_min_dl={policy.n_min_dl} n_max={policy.n_max}",
        "n\tphi\tloop_error",
    ]
    lines += [f"{n}\t{int(p)}\t{x!r}" for n, (p, x) in enumerate(zip(policy.phi, policy.eta.tolist()))]
    return "\n".join(lines) + "\n"

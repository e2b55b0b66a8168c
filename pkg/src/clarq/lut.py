"""SNR-indexed look-up tables of pre-solved CLARQ schedules."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dp import extract_schedule, solve_policy
from .fading import FadingModel, run_campaign
from .fbl import ChannelSpec, FblParams, min_blocklength
from .schedule import Schedule

LUT_MAGIC = b"CLRQLUT1"
_LUT_HEADER = struct.Struct("<8sHdddIdIBII")


@dataclass(frozen=True)
class LutSpec:
    snr_min_db: float
    snr_max_db: float
    step_db: float
    params: FblParams = field(default_factory=FblParams)
    n_max: int = 2500
    diagonal: bool = False

    def __post_init__(self):
        if not self.step_db > 0:
            raise ValueError(f"step_db must be positive, got {self.step_db}")
        if not self.snr_min_db < self.snr_max_db:
            raise ValueError("snr_min_db must be below snr_max_db")
        if not 1 <= self.n_max <= 0xFFFF:
            raise ValueError("n_max must fit in 16 bits")

    @property
    def points(self) -> int:
        return int(math.floor((self.snr_max_db - self.snr_min_db) / self.step_db + 1e-9)) + 1

    def grid(self) -> np.ndarray:
        return self.snr_min_db + self.step_db * np.arange(self.points)

    def index(self, snr_db: float) -> int:
        """Grid index at or below ``snr_db``, clamped to the grid."""
        k = math.floor((snr_db - self.snr_min_db) / self.step_db + 1e-9)
        return min(max(k, 0), self.points - 1)


SolveCache = dict


def _solve_point(ul_db: float, dl_db: float, params: FblParams, n_max: int) -> Schedule:
    ul, dl = ChannelSpec.from_db(ul_db), ChannelSpec.from_db(dl_db)
    if min_blocklength(ul, params) + min_blocklength(dl, params) > n_max:
        return Schedule.empty()
    return extract_schedule(solve_policy(ul, dl, params, n_max), n_max, validity_ceiling=n_max + 1)


@dataclass(frozen=True, eq=False)
class Lut:
    spec: LutSpec
    entries: tuple  # entries[i][j] for UL point i and DL point j; 1-D when diagonal

    def entry(self, i: int, j: int) -> Schedule:
        if self.spec.diagonal:
            return self.entries[min(i, j)]
        return self.entries[i][j]

    def lookup(self, ul_snr_db: float, dl_snr_db: float) -> Schedule:
        """Schedule of the nearest grid point at or below the measured SNRs."""
        return self.entry(self.spec.index(ul_snr_db), self.spec.index(dl_snr_db))

    def __eq__(self, other):
        if not isinstance(other, Lut):
            return NotImplemented
        return self.spec == other.spec and self.entries == other.entries


def build_lut(spec: LutSpec, cache: SolveCache | None = None) -> Lut:
    """Solve every grid point.

    ``cache`` maps rounded (UL dB, DL dB) pairs to schedules so grids with
    nested step sizes share their common points.
    """
    cache = {} if cache is None else cache
    grid = spec.grid()

    def solve(a, b):
        key = (round(float(a), 9), round(float(b), 9), spec.params, spec.n_max)
        if key not in cache:
            cache[key] = _solve_point(float(a), float(b), spec.params, spec.n_max)
        return cache[key]

    if spec.diagonal:
        entries = tuple(solve(g, g) for g in grid)
    else:
        entries = tuple(tuple(solve(a, b) for b in grid) for a in grid)
    return Lut(spec, entries)


# --- serialization -----------------------------------------------------------

def lut_to_bytes(lut: Lut) -> bytes:
    s = lut.spec
    k = s.points
    rows = 1 if s.diagonal else k
    out = [_LUT_HEADER.pack(LUT_MAGIC, 1, s.snr_min_db, s.snr_max_db, s.step_db, s.params.packet_bits,
                            s.params.eps_max, s.n_max, int(s.diagonal), rows, k)]
    flat = lut.entries if s.diagonal else [e for row in lut.entries for e in row]
    for sched in flat:
        slots = sched.compact()
        out.append(struct.pack(f"<H{len(slots)}H", len(slots), *slots))
    return b"".join(out)


def lut_from_bytes(blob: bytes) -> Lut:
    size = _LUT_HEADER.size
    if len(blob) < size:
        raise ValueError("truncated LUT record")
    magic, version, lo, hi, step, d, eps_max, n_max, diag, rows, cols = _LUT_HEADER.unpack_from(blob)
    if magic != LUT_MAGIC or version != 1:
        raise ValueError("not a version-1 CLARQ LUT record")
    spec = LutSpec(lo, hi, step, FblParams(d, eps_max), n_max, bool(diag))
    if cols != spec.points or rows != (1 if spec.diagonal else cols):
        raise ValueError("LUT dimensions disagree with its grid")
    pos, flat = size, []
    try:
        for _ in range(rows * cols):
            (count,) = struct.unpack_from("<H", blob, pos)
            slots = struct.unpack_from(f"<{count}H", blob, pos + 2)
            pos += 2 + 2 * count
            flat.append(Schedule(slots[:-1], slots[-1]) if count else Schedule.empty())
    except struct.error:
        raise ValueError("truncated LUT record") from None
    if pos != len(blob):
        raise ValueError("trailing bytes after LUT entries")
    if spec.diagonal:
        entries = tuple(flat)
    else:
        entries = tuple(tuple(flat[i * cols:(i + 1) * cols]) for i in range(rows))
    return Lut(spec, entries)


def save_lut(lut: Lut, path) -> None:
    Path(path).write_bytes(lut_to_bytes(lut))


def load_lut(path) -> Lut:
    return lut_from_bytes(Path(path).read_bytes())


def lut_to_text(lut: Lut) -> str:
    s = lut.spec
    lines = [
        "# CLARQ LUT v1",
        f"# snr_min_db={s.snr_min_db!r} snr_max_db={s.snr_max_db!r} step_db={s.step_db!r} "
        f"diagonal={s.diagonal}",
        f"# packet_bits={s.params.packet_bits} eps_max={s.params.eps_max!r} n_max={s.n_max}",
        "ul_snr_db\tdl_snr_db\tslots",
    ]
    grid = s.grid()
    for i, a in enumerate(grid):
        for j, b in enumerate(grid):
            if s.diagonal and i != j:
                continue
            slots = lut.entry(i, j).compact()
            lines.append(f"{a:g}\t{b:g}\t{','.join(map(str, slots)) or '-'}")
    return "\n".join(lines) + "\n"


# --- resolution experiment -----------------------------------------------------

@dataclass(frozen=True)
class ResolutionRow:
    step_db: float
    grid_points: int
    mean_loop_error: float
    exact_mean_loop_error: float


def lut_grid_range(model: FadingModel) -> tuple[float, float]:
    """Fading range rounded outward to whole dB so that nested steps share points."""
    lo, hi = model.snr_range_db()
    return float(math.floor(lo)), float(math.ceil(hi))


def resolution_experiment(steps_db: Sequence[float], model: FadingModel, params: FblParams, n_max: int,
                          runs: int, seed: int, workers: int = 1,
                          cache: SolveCache | None = None) -> list[ResolutionRow]:
    """Mean loop error of LUT-driven CLARQ for each grid step, next to exact CLARQ.

    All campaigns use the same seed, so every step sees the same channel draws.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    cache = {} if cache is None else cache
    lo, hi = lut_grid_range(model)
    exact = run_campaign(model, ["optimal"], params, n_max, runs, seed, workers)["optimal"].mean_loop_error
    rows = []
    for step in steps_db:
        lut = build_lut(LutSpec(lo, max(hi, lo + step), step, params, n_max), cache)
        agg = run_campaign(model, ["lut"], params, n_max, runs, seed, workers, lut=lut)["lut"]
        rows.append(ResolutionRow(float(step), lut.spec.points, agg.mean_loop_error, exact))
    return rows


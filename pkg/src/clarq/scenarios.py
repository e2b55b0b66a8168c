"""Reference system presets.

The SNRs are stored as the linear values 0.05 / 0.07 / 0.03 (about -13.01,
-11.55 and -15.23 dB); only these reproduce the published minimal
blocklengths 322 / 232 / 533. The whole-dB labels the presets are known by
(-13 / -11 / -15) are kept separately in ``label_db``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .fbl import ChannelSpec, FblParams, FrameBudget, db_to_linear


@dataclass(frozen=True)
class Scenario:
    name: str
    ul_snr_linear: float
    dl_snr_linear: float
    frame_time: float = 10e-3
    symbol_time: float = 4e-6
    feedback_time: float = 0.0
    packet_bits: int = 16
    eps_max: float = 0.2
    label_db: tuple[int, int] | None = None

    def __post_init__(self):
        if not (self.ul_snr_linear > 0 and self.dl_snr_linear > 0):
            raise ValueError("SNRs must be positive")
        # builds the derived objects once so that bad values fail here
        self.params()
        self.budget()

    @property
    def ul(self) -> ChannelSpec:
        return ChannelSpec.from_snr(self.ul_snr_linear)

    @property
    def dl(self) -> ChannelSpec:
        return ChannelSpec.from_snr(self.dl_snr_linear)

    @property
    def n_max(self) -> int:
        return self.budget().n_max

    def params(self) -> FblParams:
        return FblParams(self.packet_bits, self.eps_max)

    def budget(self) -> FrameBudget:
        return FrameBudget(self.frame_time, self.symbol_time, self.feedback_time)

    def with_overrides(self, overrides: dict) -> "Scenario":
        """Apply Table-I style overrides.

        Besides the dataclass fields this accepts ``ul_snr_db``/``dl_snr_db``
        and ``n_max`` (which sets the frame time to n_max symbols).
        """
        changes = dict(overrides)
        for side in ("ul", "dl"):
            key = f"{side}_snr_db"
            if key in changes:
                changes[f"{side}_snr_linear"] = float(db_to_linear(changes.pop(key)))
        if "ul_snr_linear" in changes or "dl_snr_linear" in changes:
            changes["label_db"] = None
        if "n_max" in changes:
            n = changes.pop("n_max")
            if int(n) != n or n < 1:
                raise ValueError(f"n_max must be a positive integer, got {n}")
            t_s = changes.get("symbol_time", self.symbol_time)
            changes["frame_time"] = int(n) * t_s
        return replace(self, **changes)

    def to_record(self) -> dict:
        rec = {f.name: getattr(self, f.name) for f in fields(self)}
        rec["n_max"] = self.n_max
        return rec


OVERRIDE_KEYS = frozenset(
    {f.name for f in fields(Scenario) if f.name not in ("name", "label_db")} | {"ul_snr_db", "dl_snr_db", "n_max"}
)

SCENARIOS = {
    "scenario_a": Scenario("scenario_a", ul_snr_linear=0.05, dl_snr_linear=0.05, label_db=(-13, -13)),
    "scenario_b": Scenario("scenario_b", ul_snr_linear=0.07, dl_snr_linear=0.03, label_db=(-11, -15)),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from None

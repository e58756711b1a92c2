"""Joint communication / computation / confidentiality cost model.

For one device, one channel and one cut the three raw costs are:

  communication  latency  = intermediate_bytes * 8 / shannon_rate
                 energy   = tx_power * latency
  computation    energy   = device_flops / peak_flops * compute_power
  confidentiality cost    = 1 - [a*kl_open + (1-a)*kl_closed] / kl_max

The confidentiality direction is deliberate: larger KL divergence between
originals and attack reconstructions means stronger confidentiality, so
the weighted KL ratio is inverted to become a cost. A raw-ratio cost would
reward weak privacy.

Raw communication and computation costs carry physical units, so each is
min-max normalized over the candidate set (per device) before weighting;
a degenerate range (max == min) normalizes to 0. The communication term
blends latency and energy with ``lambda_latency`` after each is scaled.
The effect value of a decision is the weighted sum of the three
normalized terms, averaged over devices, and lies in [0, 1] whenever the
weights sum to 1. The reward used by the optimizer is its additive
inverse.

``brute_force_optimal`` enumerates every joint decision and is the exact
oracle the learning agents are validated against. Evaluations are
independent, so they could run in parallel; the result is deterministic
regardless of order because ties break toward deeper cuts (better
confidentiality at equal effect), lexicographically from the first
device.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .errors import MissingEntryError
from .netmodel import (
    ChannelDistribution,
    ChannelState,
    DeviceProfile,
    device_from_kind,
    resolve_channel,
    shannon_rate,
    tx_energy,
    tx_latency,
)
from .nnprofile import (
    ModelProfile,
    PartitionPoint,
    build_resnet50_usam_profile,
    device_flops,
    intermediate_bytes,
    _cut_index,
)


@dataclass(frozen=True)
class ConfEntry:
    """Per-cut KL divergences (nats) of the two attack reconstructions."""

    kl_open: float
    kl_closed: float
    ssim_open: float | None = None   # optional cross-check columns
    ssim_closed: float | None = None

    def __post_init__(self) -> None:
        if self.kl_open < 0 or self.kl_closed < 0:
            raise ValueError("KL divergences must be >= 0")
        for name in ("ssim_open", "ssim_closed"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ConfidentialityTable:
    """One ConfEntry per partition candidate, in candidate order."""

    entries: tuple[ConfEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("confidentiality table must not be empty")
        object.__setattr__(
            self,
            "_kl_max",
            max(max(e.kl_open, e.kl_closed) for e in self.entries),
        )

    @property
    def kl_max(self) -> float:
        return self._kl_max

    def entry(self, cut_index: int) -> ConfEntry:
        if not 0 <= cut_index < len(self.entries):
            raise MissingEntryError(
                f"confidentiality table has no entry for cut {cut_index}"
            )
        return self.entries[cut_index]


def default_conf_table(num_candidates: int = 5) -> ConfidentialityTable:
    """Illustrative monotone table: KL doubles with each deeper cut.

    For five cuts this is (0.5, 1, 2, 4, 8) nats in both columns. These are
    plumbing defaults, not measured values; real tables come from a
    reconstruction corpus via the privacy metrics.
    """
    return ConfidentialityTable(
        tuple(ConfEntry(0.5 * 2**i, 0.5 * 2**i) for i in range(num_candidates))
    )


@dataclass(frozen=True)
class TriCoWeights:
    """Weights of the three cost terms plus two inner mixing knobs."""

    w_comm: float = 1.0 / 3.0
    w_comp: float = 1.0 / 3.0
    w_conf: float = 1.0 / 3.0
    alpha_open: float = 0.5      # open-box share of the KL ratio
    lambda_latency: float = 0.5  # latency share inside the comm term

    def __post_init__(self) -> None:
        for name in ("w_comm", "w_comp", "w_conf"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        total = self.w_comm + self.w_comp + self.w_conf
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"cost weights must sum to 1, got {total}")
        if not 0.0 <= self.alpha_open <= 1.0:
            raise ValueError("alpha_open must lie in [0, 1]")
        if not 0.0 <= self.lambda_latency <= 1.0:
            raise ValueError("lambda_latency must lie in [0, 1]")


@dataclass(frozen=True)
class TriCoBreakdown:
    """Raw and normalized costs of one (device, cut) pair."""

    cut_index: int
    cut_name: str
    comm_latency_s: float
    comm_energy_j: float
    comp_energy_j: float
    conf_cost: float
    n_comm: float
    n_comp: float
    n_conf: float
    effect: float


@dataclass(frozen=True)
class Scenario:
    """One optimization instance: devices, channels, model, table, weights."""

    devices: tuple[DeviceProfile, ...]
    channels: tuple[ChannelState | ChannelDistribution, ...]
    profile: ModelProfile
    conf_table: ConfidentialityTable
    weights: TriCoWeights

    def __post_init__(self) -> None:
        if not self.devices:
            raise ValueError("scenario needs at least one device")
        if len(self.channels) != len(self.devices):
            raise ValueError("scenario needs exactly one channel per device")
        if len(self.conf_table.entries) < self.profile.num_candidates:
            raise ValueError(
                "confidentiality table must cover all partition candidates"
            )

    @property
    def num_devices(self) -> int:
        return len(self.devices)

    @property
    def num_candidates(self) -> int:
        return self.profile.num_candidates

    def resolved_channels(self) -> tuple[ChannelState, ...]:
        return tuple(resolve_channel(ch) for ch in self.channels)


@dataclass(frozen=True)
class PartitionDecision:
    """One candidate index per device."""

    cuts: tuple[int, ...]

    def points(self) -> tuple[PartitionPoint, ...]:
        return tuple(PartitionPoint(c) for c in self.cuts)


def comm_cost(
    dev: DeviceProfile,
    ch: ChannelState,
    profile: ModelProfile,
    cut: PartitionPoint | int,
) -> tuple[float, float]:
    """(latency_s, energy_j) of shipping the cut's features to the server."""
    latency = tx_latency(intermediate_bytes(profile, cut), shannon_rate(ch))
    return latency, tx_energy(dev.tx_power_w, latency)


def comp_cost(
    dev: DeviceProfile, profile: ModelProfile, cut: PartitionPoint | int
) -> float:
    """Energy (J) the device spends on its side of the forward pass."""
    return device_flops(profile, cut) / dev.peak_flops * dev.compute_power_w


def conf_cost(
    table: ConfidentialityTable, cut: PartitionPoint | int, alpha_open: float = 0.5
) -> float:
    """Confidentiality cost in [0, 1]; 0 at the table's KL maximum.

    When every KL in the table is zero (reconstructions match originals
    everywhere) there is no confidentiality anywhere and the cost is 1.
    """
    idx = cut.candidate_index if isinstance(cut, PartitionPoint) else int(cut)
    entry = table.entry(idx)
    kl_max = table.kl_max
    if kl_max == 0.0:
        return 1.0
    ratio = (alpha_open * entry.kl_open + (1.0 - alpha_open) * entry.kl_closed) / kl_max
    return min(1.0, max(0.0, 1.0 - ratio))


def _minmax(values: list[float]) -> list[float]:
    """Min-max scale to [0, 1]; a degenerate range maps everything to 0."""
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) for v in values]


def candidate_costs(
    dev: DeviceProfile,
    ch: ChannelState,
    profile: ModelProfile,
    table: ConfidentialityTable,
    weights: TriCoWeights,
) -> list[TriCoBreakdown]:
    """Raw and normalized costs for every candidate cut of one device."""
    cuts = range(profile.num_candidates)
    lats, ens = zip(*(comm_cost(dev, ch, profile, c) for c in cuts))
    comps = [comp_cost(dev, profile, c) for c in cuts]
    confs = [conf_cost(table, c, weights.alpha_open) for c in cuts]

    n_lat = _minmax(list(lats))
    n_en = _minmax(list(ens))
    n_comm = [
        weights.lambda_latency * nl + (1.0 - weights.lambda_latency) * ne
        for nl, ne in zip(n_lat, n_en)
    ]
    n_comp = _minmax(comps)

    rows = []
    for c in cuts:
        eff = effect_value(weights, n_comm[c], n_comp[c], confs[c])
        rows.append(
            TriCoBreakdown(
                cut_index=c,
                cut_name=profile.cut_name(c),
                comm_latency_s=lats[c],
                comm_energy_j=ens[c],
                comp_energy_j=comps[c],
                conf_cost=confs[c],
                n_comm=n_comm[c],
                n_comp=n_comp[c],
                n_conf=confs[c],
                effect=eff,
            )
        )
    return rows


def effect_value(
    weights: TriCoWeights, n_comm: float, n_comp: float, n_conf: float
) -> float:
    return weights.w_comm * n_comm + weights.w_comp * n_comp + weights.w_conf * n_conf


def scenario_breakdowns(
    scenario: Scenario, channels: tuple[ChannelState, ...] | None = None
) -> list[list[TriCoBreakdown]]:
    """Per-device candidate cost tables, with distributions at their means
    unless concrete channels are supplied."""
    chans = channels if channels is not None else scenario.resolved_channels()
    return [
        candidate_costs(dev, ch, scenario.profile, scenario.conf_table, scenario.weights)
        for dev, ch in zip(scenario.devices, chans)
    ]


def decision_effect(
    scenario: Scenario,
    decision: PartitionDecision,
    channels: tuple[ChannelState, ...] | None = None,
) -> float:
    """Effect of one joint decision: mean of the per-device effects.

    fsum keeps the mean exactly permutation invariant in device order.
    """
    tables = scenario_breakdowns(scenario, channels)
    if len(decision.cuts) != scenario.num_devices:
        raise ValueError("decision must assign one cut per device")
    per_device = [tables[d][_cut_index(scenario.profile, c)].effect
                  for d, c in enumerate(decision.cuts)]
    return math.fsum(per_device) / len(per_device)


def brute_force_optimal(
    scenario: Scenario, channels: tuple[ChannelState, ...] | None = None
) -> tuple[PartitionDecision, float]:
    """Exhaustive argmin of the effect over candidates^devices.

    Ties break toward the lexicographically largest cut vector, i.e. the
    deeper cut wins, starting from the first device.
    """
    tables = scenario_breakdowns(scenario, channels)
    effects = [[row.effect for row in table] for table in tables]
    n_dev = scenario.num_devices
    best_cuts: tuple[int, ...] | None = None
    best_effect = math.inf
    for cuts in product(range(scenario.num_candidates), repeat=n_dev):
        eff = math.fsum(effects[d][c] for d, c in enumerate(cuts)) / n_dev
        if eff < best_effect or (eff == best_effect and cuts > best_cuts):
            best_effect = eff
            best_cuts = cuts
    return PartitionDecision(best_cuts), best_effect


CONF_TABLE_HEADER = "cut_name,kl_open,kl_closed,ssim_open,ssim_closed"


def format_conf_table(
    table: ConfidentialityTable, cut_names: list[str] | None = None
) -> str:
    """CSV confidentiality table, rows in candidate order.

    Absent SSIM columns stay empty. Floats use shortest round-trip decimal
    formatting.
    """
    names = cut_names or [f"cut{i}" for i in range(len(table.entries))]
    if len(names) != len(table.entries):
        raise ValueError("need one cut name per table entry")
    lines = [CONF_TABLE_HEADER]
    for name, e in zip(names, table.entries):
        ssim_open = "" if e.ssim_open is None else repr(e.ssim_open)
        ssim_closed = "" if e.ssim_closed is None else repr(e.ssim_closed)
        lines.append(f"{name},{e.kl_open!r},{e.kl_closed!r},{ssim_open},{ssim_closed}")
    return "\n".join(lines) + "\n"


def parse_conf_table(text: str) -> tuple[ConfidentialityTable, list[str]]:
    from .errors import ConfigError

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CONF_TABLE_HEADER:
        raise ConfigError(
            f"confidentiality table must start with header {CONF_TABLE_HEADER!r}"
        )
    entries, names = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ConfigError(f"conf table line {lineno}: expected 5 fields")
        name, kl_open, kl_closed, ssim_open, ssim_closed = (p.strip() for p in parts)
        try:
            entries.append(
                ConfEntry(
                    kl_open=float(kl_open),
                    kl_closed=float(kl_closed),
                    ssim_open=float(ssim_open) if ssim_open else None,
                    ssim_closed=float(ssim_closed) if ssim_closed else None,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"conf table line {lineno}: {exc}") from exc
        names.append(name)
    try:
        return ConfidentialityTable(tuple(entries)), names
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


COST_TABLE_HEADER = (
    "device,cut_name,comm_latency_s,comm_energy_j,comp_energy_j,"
    "conf_cost,n_comm,n_comp,n_conf,effect"
)


def format_cost_table(
    scenario: Scenario, tables: list[list[TriCoBreakdown]] | None = None
) -> str:
    """CSV cost table, one row per (device, candidate cut).

    Floats use shortest round-trip decimal formatting, so re-running a
    scenario reproduces the file byte for byte.
    """
    if tables is None:
        tables = scenario_breakdowns(scenario)
    lines = [COST_TABLE_HEADER]
    for dev, rows in zip(scenario.devices, tables):
        for r in rows:
            lines.append(
                f"{dev.id},{r.cut_name},{r.comm_latency_s!r},{r.comm_energy_j!r},"
                f"{r.comp_energy_j!r},{r.conf_cost!r},{r.n_comm!r},{r.n_comp!r},"
                f"{r.n_conf!r},{r.effect!r}"
            )
    return "\n".join(lines) + "\n"


def default_scenario(seeded_conf: ConfidentialityTable | None = None) -> Scenario:
    """The stock 2-device, 5-cut instance used by examples and tests.

    One UAV and one vehicle with the standard device constants, both on a
    5..20 MHz / 5..15 dB channel, the 224x224 backbone profile, the
    monotone confidentiality table and equal weights.
    """
    profile = build_resnet50_usam_profile(224, 224)
    dist = ChannelDistribution(bandwidth_range=(5e6, 20e6), snr_range_db=(5.0, 15.0))
    return Scenario(
        devices=(device_from_kind("uav1", "uav"), device_from_kind("veh1", "vehicle")),
        channels=(dist, dist),
        profile=profile,
        conf_table=seeded_conf or default_conf_table(profile.num_candidates),
        weights=TriCoWeights(),
    )

"""Scenario configuration loading and validation.

Configs are YAML files with explicit sections. Unknown keys are rejected
anywhere in the tree so typos fail loudly instead of silently falling
back to defaults. Every module-level invariant is checked at load time
and reported with the offending key path.

Sections (all optional unless a command needs them):

  devices:          list of {id, kind, peak_flops?, compute_power_w?,
                    tx_power_w?, battery_j?}; omitted numbers fall back to
                    the per-kind defaults
  channels:         per device id, either {fixed: {bandwidth_hz,
                    snr_db | snr_linear}} or {distribution: {bandwidth_hz:
                    [lo, hi], snr_db: [lo, hi]}}
  model:            {builtin: resnet50_usam, input_h, input_w,
                    usam_flops_fraction?} or {profile_file: path}
  confidentiality:  {table: [{kl_open, kl_closed, ssim_open?,
                    ssim_closed?}, ...]} in candidate order, or
                    {corpus_dir: path}, or {table_file: path}; omitted
                    entirely means the monotone default table
  weights:          {w_comm?, w_comp?, w_conf?, alpha_open?,
                    lambda_latency?}
  optimizer:        {agent, steps?, seed?, moving_avg_window?, horizon?,
                    bandwidth_bins?, snr_bins?, battery_bins?, hyper?:
                    {...Hyperparams fields...}}
  retrieval:        {locations?, dim?, seeds?, seed?, noise?: {satellite?,
                    uav?, ground?}, images_per_view?, fusion?}
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import yaml

from .errors import ConfigError, DimensionError
from .netmodel import (
    ChannelDistribution,
    ChannelState,
    DeviceProfile,
    KIND_DEFAULTS,
    snr_db_to_linear,
)
from .nnprofile import ModelProfile, build_resnet50_usam_profile, load_profile
from .rlopt.agents import AGENTS, Hyperparams
from .trico import (
    ConfEntry,
    ConfidentialityTable,
    Scenario,
    TriCoWeights,
    default_conf_table,
    parse_conf_table,
)


@dataclass(frozen=True)
class OptimizerConfig:
    agent: str = "q_learning"
    steps: int = 3000
    seed: int = 0
    horizon: int = 1
    bandwidth_bins: int = 1
    snr_bins: int = 2
    battery_bins: int = 1
    hyper: Hyperparams = Hyperparams()


@dataclass(frozen=True)
class RetrievalConfig:
    locations: int = 200
    dim: int = 64
    seeds: int = 10
    seed: int = 0
    noise_satellite: float = 0.0
    noise_uav: float = 0.5
    noise_ground: float = 0.5
    images_per_view: int = 4
    fusion: str = "mean"

    @property
    def view_noise(self) -> dict[str, float]:
        return {
            "satellite": self.noise_satellite,
            "uav": self.noise_uav,
            "ground": self.noise_ground,
        }


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario | None
    optimizer: OptimizerConfig
    retrieval: RetrievalConfig
    profile: ModelProfile | None


def _require_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _check_keys(node: dict, allowed: set[str], path: str) -> None:
    unknown = set(node) - allowed
    if unknown:
        raise ConfigError(
            f"{path}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


def _coerce_number(value, path: str):
    # YAML 1.1 reads exponents without a sign ("1.0e6") as strings, so
    # numeric-looking strings are accepted too
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{path}: expected a number, got {value!r}")


def _get_number(node: dict, key: str, path: str, default=None):
    if key not in node:
        if default is not None:
            return default
        raise ConfigError(f"{path}: missing required key {key!r}")
    return _coerce_number(node[key], f"{path}.{key}")


def _parse_devices(node, path: str) -> tuple[DeviceProfile, ...]:
    if not isinstance(node, list) or not node:
        raise ConfigError(f"{path}: expected a nonempty list of devices")
    devices = []
    seen_ids = set()
    for i, entry in enumerate(node):
        dpath = f"{path}[{i}]"
        entry = _require_mapping(entry, dpath)
        _check_keys(
            entry,
            {"id", "kind", "peak_flops", "compute_power_w", "tx_power_w", "battery_j"},
            dpath,
        )
        if "id" not in entry or "kind" not in entry:
            raise ConfigError(f"{dpath}: devices need 'id' and 'kind'")
        kind = entry["kind"]
        if kind not in KIND_DEFAULTS:
            raise ConfigError(
                f"{dpath}.kind: unknown kind {kind!r}; allowed: "
                f"{sorted(KIND_DEFAULTS)}"
            )
        if entry["id"] in seen_ids:
            raise ConfigError(f"{dpath}.id: duplicate device id {entry['id']!r}")
        seen_ids.add(entry["id"])
        values = dict(KIND_DEFAULTS[kind])
        for key in ("peak_flops", "compute_power_w", "tx_power_w"):
            if key in entry:
                values[key] = _get_number(entry, key, dpath)
        battery = None
        if "battery_j" in entry:
            battery = _get_number(entry, "battery_j", dpath)
        try:
            devices.append(
                DeviceProfile(
                    id=str(entry["id"]), kind=kind, battery_j=battery, **values
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{dpath}: {exc}") from exc
    return tuple(devices)


def _parse_channel(node, path: str):
    node = _require_mapping(node, path)
    _check_keys(node, {"fixed", "distribution"}, path)
    if ("fixed" in node) == ("distribution" in node):
        raise ConfigError(f"{path}: give exactly one of 'fixed' or 'distribution'")
    try:
        if "fixed" in node:
            fixed = _require_mapping(node["fixed"], f"{path}.fixed")
            _check_keys(fixed, {"bandwidth_hz", "snr_db", "snr_linear"}, f"{path}.fixed")
            if ("snr_db" in fixed) == ("snr_linear" in fixed):
                raise ConfigError(
                    f"{path}.fixed: give exactly one of 'snr_db' or 'snr_linear'"
                )
            snr = (
                snr_db_to_linear(_get_number(fixed, "snr_db", f"{path}.fixed"))
                if "snr_db" in fixed
                else _get_number(fixed, "snr_linear", f"{path}.fixed")
            )
            return ChannelState(
                bandwidth_hz=_get_number(fixed, "bandwidth_hz", f"{path}.fixed"),
                snr_linear=snr,
            )
        dist = _require_mapping(node["distribution"], f"{path}.distribution")
        _check_keys(dist, {"bandwidth_hz", "snr_db"}, f"{path}.distribution")
        for key in ("bandwidth_hz", "snr_db"):
            if key not in dist or not isinstance(dist[key], list) or len(dist[key]) != 2:
                raise ConfigError(
                    f"{path}.distribution.{key}: expected a [min, max] pair"
                )
        return ChannelDistribution(
            bandwidth_range=tuple(
                _coerce_number(v, f"{path}.distribution.bandwidth_hz")
                for v in dist["bandwidth_hz"]
            ),
            snr_range_db=tuple(
                _coerce_number(v, f"{path}.distribution.snr_db")
                for v in dist["snr_db"]
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_model(node, path: str, base_dir: Path) -> ModelProfile:
    node = _require_mapping(node, path)
    _check_keys(
        node,
        {"builtin", "input_h", "input_w", "usam_flops_fraction", "profile_file"},
        path,
    )
    if ("builtin" in node) == ("profile_file" in node):
        raise ConfigError(f"{path}: give exactly one of 'builtin' or 'profile_file'")
    try:
        if "profile_file" in node:
            return load_profile(base_dir / str(node["profile_file"]))
        if node["builtin"] != "resnet50_usam":
            raise ConfigError(
                f"{path}.builtin: only 'resnet50_usam' is available, "
                f"got {node['builtin']!r}"
            )
        return build_resnet50_usam_profile(
            input_h=int(_get_number(node, "input_h", path, default=224)),
            input_w=int(_get_number(node, "input_w", path, default=224)),
            usam_flops_fraction=_get_number(
                node, "usam_flops_fraction", path, default=0.01
            ),
        )
    except (ValueError, OSError, DimensionError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_confidentiality(node, path: str, base_dir: Path, num_candidates: int):
    if node is None:
        return default_conf_table(num_candidates)
    node = _require_mapping(node, path)
    _check_keys(node, {"table", "corpus_dir", "table_file"}, path)
    given = [k for k in ("table", "corpus_dir", "table_file") if k in node]
    if len(given) != 1:
        raise ConfigError(
            f"{path}: give exactly one of 'table', 'corpus_dir' or 'table_file'"
        )
    try:
        if "table" in node:
            rows = node["table"]
            if not isinstance(rows, list) or not rows:
                raise ConfigError(f"{path}.table: expected a nonempty list")
            entries = []
            for i, row in enumerate(rows):
                rpath = f"{path}.table[{i}]"
                row = _require_mapping(row, rpath)
                _check_keys(
                    row, {"kl_open", "kl_closed", "ssim_open", "ssim_closed"}, rpath
                )
                entries.append(
                    ConfEntry(
                        kl_open=_get_number(row, "kl_open", rpath),
                        kl_closed=_get_number(row, "kl_closed", rpath),
                        ssim_open=row.get("ssim_open"),
                        ssim_closed=row.get("ssim_closed"),
                    )
                )
            return ConfidentialityTable(tuple(entries))
        if "table_file" in node:
            text = (base_dir / str(node["table_file"])).read_text()
            table, _ = parse_conf_table(text)
            return table
        from .privmetrics import build_conf_table, load_corpus_dir

        corpus = load_corpus_dir(base_dir / str(node["corpus_dir"]))
        return build_conf_table(corpus)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_weights(node, path: str) -> TriCoWeights:
    if node is None:
        return TriCoWeights()
    node = _require_mapping(node, path)
    _check_keys(
        node, {"w_comm", "w_comp", "w_conf", "alpha_open", "lambda_latency"}, path
    )
    kwargs = {key: _get_number(node, key, path) for key in node}
    try:
        return TriCoWeights(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_optimizer(node, path: str) -> OptimizerConfig:
    if node is None:
        return OptimizerConfig()
    node = _require_mapping(node, path)
    _check_keys(
        node,
        {
            "agent", "steps", "seed", "horizon",
            "bandwidth_bins", "snr_bins", "battery_bins", "hyper",
        },
        path,
    )
    agent = node.get("agent", "q_learning")
    if agent not in AGENTS:
        raise ConfigError(
            f"{path}.agent: unknown agent {agent!r}; choose one of {sorted(AGENTS)}"
        )
    hyper_kwargs = {}
    if "hyper" in node:
        hyper_node = _require_mapping(node["hyper"], f"{path}.hyper")
        allowed = {f.name for f in dataclass_fields(Hyperparams)}
        _check_keys(hyper_node, allowed, f"{path}.hyper")
        hyper_kwargs = dict(hyper_node)
        if "hidden" in hyper_kwargs:
            hidden = hyper_kwargs["hidden"]
            if not isinstance(hidden, list) or not all(
                isinstance(h, int) for h in hidden
            ):
                raise ConfigError(f"{path}.hyper.hidden: expected a list of ints")
            hyper_kwargs["hidden"] = tuple(hidden)
    try:
        return OptimizerConfig(
            agent=agent,
            steps=int(_get_number(node, "steps", path, default=3000)),
            seed=int(_get_number(node, "seed", path, default=0)),
            horizon=int(_get_number(node, "horizon", path, default=1)),
            bandwidth_bins=int(_get_number(node, "bandwidth_bins", path, default=1)),
            snr_bins=int(_get_number(node, "snr_bins", path, default=2)),
            battery_bins=int(_get_number(node, "battery_bins", path, default=1)),
            hyper=Hyperparams(**hyper_kwargs),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_retrieval(node, path: str) -> RetrievalConfig:
    if node is None:
        return RetrievalConfig()
    node = _require_mapping(node, path)
    _check_keys(
        node,
        {"locations", "dim", "seeds", "seed", "noise", "images_per_view", "fusion"},
        path,
    )
    noise = {"satellite": 0.0, "uav": 0.5, "ground": 0.5}
    if "noise" in node:
        noise_node = _require_mapping(node["noise"], f"{path}.noise")
        _check_keys(noise_node, {"satellite", "uav", "ground"}, f"{path}.noise")
        for key in noise_node:
            noise[key] = _get_number(noise_node, key, f"{path}.noise")
    fusion = node.get("fusion", "mean")
    if fusion not in ("mean", "max_score"):
        raise ConfigError(
            f"{path}.fusion: expected 'mean' or 'max_score', got {fusion!r}"
        )
    try:
        return RetrievalConfig(
            locations=int(_get_number(node, "locations", path, default=200)),
            dim=int(_get_number(node, "dim", path, default=64)),
            seeds=int(_get_number(node, "seeds", path, default=10)),
            seed=int(_get_number(node, "seed", path, default=0)),
            noise_satellite=noise["satellite"],
            noise_uav=noise["uav"],
            noise_ground=noise["ground"],
            images_per_view=int(_get_number(node, "images_per_view", path, default=4)),
            fusion=fusion,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


TOP_LEVEL_SECTIONS = {
    "devices", "channels", "model", "confidentiality", "weights",
    "optimizer", "retrieval",
}


def parse_config(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    base_dir = base_dir or Path(".")
    try:
        root = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if root is None:
        root = {}
    root = _require_mapping(root, "config")
    _check_keys(root, TOP_LEVEL_SECTIONS, "config")

    profile = None
    if "model" in root:
        profile = _parse_model(root["model"], "model", base_dir)

    scenario = None
    if "devices" in root:
        if profile is None:
            raise ConfigError("config: a 'devices' section needs a 'model' section")
        devices = _parse_devices(root["devices"], "devices")
        channels_node = _require_mapping(root.get("channels", {}), "channels")
        _check_keys(channels_node, {d.id for d in devices}, "channels")
        channels = []
        for dev in devices:
            if dev.id not in channels_node:
                raise ConfigError(f"channels: missing channel for device {dev.id!r}")
            channels.append(_parse_channel(channels_node[dev.id], f"channels.{dev.id}"))
        conf_table = _parse_confidentiality(
            root.get("confidentiality"), "confidentiality", base_dir,
            profile.num_candidates,
        )
        weights = _parse_weights(root.get("weights"), "weights")
        try:
            scenario = Scenario(
                devices=devices,
                channels=tuple(channels),
                profile=profile,
                conf_table=conf_table,
                weights=weights,
            )
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from exc
    elif "channels" in root or "confidentiality" in root or "weights" in root:
        raise ConfigError(
            "config: channels/confidentiality/weights sections need a "
            "'devices' section"
        )

    return ScenarioConfig(
        scenario=scenario,
        optimizer=_parse_optimizer(root.get("optimizer"), "optimizer"),
        retrieval=_parse_retrieval(root.get("retrieval"), "retrieval"),
        profile=profile,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


DEFAULT_CONFIG_YAML = """\
# Two-device split-inference scenario: one UAV, one vehicle, both talking
# to a ground server over a 5..20 MHz / 5..15 dB channel.
devices:
  - id: uav1
    kind: uav          # 0.641 TFLOPS, 30 W compute, 1 W transmit
  - id: veh1
    kind: vehicle      # 1.3 TFLOPS, 30 W compute, 2 W transmit

channels:
  uav1:
    distribution: {bandwidth_hz: [5.0e6, 20.0e6], snr_db: [5.0, 15.0]}
  veh1:
    distribution: {bandwidth_hz: [5.0e6, 20.0e6], snr_db: [5.0, 15.0]}

model:
  builtin: resnet50_usam
  input_h: 224
  input_w: 224

# kl values in nats per candidate cut, shallow to deep; these are the
# illustrative monotone defaults (omit the section to get the same table)
confidentiality:
  table:
    - {kl_open: 0.5, kl_closed: 0.5}
    - {kl_open: 1.0, kl_closed: 1.0}
    - {kl_open: 2.0, kl_closed: 2.0}
    - {kl_open: 4.0, kl_closed: 4.0}
    - {kl_open: 8.0, kl_closed: 8.0}

weights:
  w_comm: 0.3333333333333333
  w_comp: 0.3333333333333333
  w_conf: 0.3333333333333334
  alpha_open: 0.5
  lambda_latency: 0.5

optimizer:
  agent: actor_critic
  steps: 3000
  seed: 7
  snr_bins: 2

retrieval:
  locations: 200
  dim: 64
  seeds: 10
  noise: {satellite: 0.0, uav: 0.5, ground: 0.5}
"""

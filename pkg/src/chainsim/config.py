"""Scenario configuration: TOML/JSON loading, validation, seed derivation.

Every run embeds the resolved raw config; a scenario is reproducible from
(config, seed, tool version) alone. Seeds are mandatory, never wall-clock.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .mining import MinerAgent, validate_roster
from .netsim import BlockParams, RelayPlan
from .topology import LatencySpec, TopologySpec, TopologyError


class ConfigError(ValueError):
    """Invalid scenario config; carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass(frozen=True)
class MetricsParams:
    epsilon_coalition: float = 0.5
    epsilon_s: float = 0.01
    z: int = 6
    tau_bound_ms: float = 5000.0
    attacker_alpha: float = 0.3
    s_trials: int = 5000
    s_horizon: int = 400
    delta_margin_ms: float = 0.0
    min_spv_receipts: int = 2


@dataclass(frozen=True)
class SweepParams:
    path: str
    values: tuple = ()


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration_s: float
    topology: TopologySpec
    miners: tuple[MinerAgent, ...]
    relay: RelayPlan
    block: BlockParams
    metrics: MetricsParams
    default_bandwidth_bps: int
    sweep: SweepParams | None
    raw: dict = field(repr=False, default_factory=dict)


def _require(raw: dict, key: str, kind, path: str):
    if key not in raw:
        raise ConfigError(f"{path}{key}", "missing required field")
    value = raw[key]
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}{key}", "expected a number, got a boolean")
    if not isinstance(value, kind):
        names = "/".join(k.__name__ for k in kind) if isinstance(kind, tuple) else kind.__name__
        raise ConfigError(f"{path}{key}", f"expected {names}, got {type(value).__name__}")
    return value


def _optional(raw: dict, key: str, kind, default, path: str):
    if key not in raw:
        return default
    return _require(raw, key, kind, path)


def parse_config(raw: dict) -> ScenarioConfig:
    name = _require(raw, "name", str, "")
    seed = _require(raw, "seed", int, "")
    duration_s = float(_require(raw, "duration_s", (int, float), ""))
    if duration_s <= 0:
        raise ConfigError("duration_s", "must be positive")

    topo_raw = _require(raw, "topology", dict, "")
    lat_raw = _optional(topo_raw, "latency", dict, {}, "topology.")
    latency = LatencySpec(
        kind=_optional(lat_raw, "kind", str, "constant", "topology.latency."),
        ms=float(_optional(lat_raw, "ms", (int, float), 10.0, "topology.latency.")),
        lo_ms=float(_optional(lat_raw, "lo_ms", (int, float), 5.0, "topology.latency.")),
        hi_ms=float(_optional(lat_raw, "hi_ms", (int, float), 50.0, "topology.latency.")),
        mu=float(_optional(lat_raw, "mu", (int, float), 3.0, "topology.latency.")),
        sigma=float(_optional(lat_raw, "sigma", (int, float), 0.5, "topology.latency.")),
    )
    topology = TopologySpec(
        kind=_require(topo_raw, "kind", str, "topology."),
        n=_optional(topo_raw, "n", int, 0, "topology."),
        k=_optional(topo_raw, "k", int, 4, "topology."),
        beta=float(_optional(topo_raw, "beta", (int, float), 0.1, "topology.")),
        p=float(_optional(topo_raw, "p", (int, float), 0.1, "topology.")),
        m=_optional(topo_raw, "m", int, 0, "topology."),
        o=_optional(topo_raw, "o", int, 0, "topology."),
        # Scenario runs need a connected block overlay among miners.
        miner_mesh=_optional(topo_raw, "miner_mesh", bool, True, "topology."),
        latency=latency,
        seed=_optional(topo_raw, "seed", int, seed, "topology."),
    )
    try:
        topology.validate()
    except TopologyError as exc:
        raise ConfigError("topology", str(exc)) from exc

    miners_raw = _require(raw, "miners", list, "")
    if not miners_raw:
        raise ConfigError("miners", "roster must contain at least one miner")
    miners = []
    for i, m in enumerate(miners_raw):
        if not isinstance(m, dict):
            raise ConfigError(f"miners[{i}]", "expected a table")
        bandwidth_mbps = _optional(m, "bandwidth_mbps", (int, float), None, f"miners[{i}].")
        miners.append(
            MinerAgent(
                id=_require(m, "id", str, f"miners[{i}]."),
                alpha=float(_require(m, "alpha", (int, float), f"miners[{i}].")),
                bandwidth_bps=None if bandwidth_mbps is None else int(bandwidth_mbps * 1_000_000),
                min_feerate=float(_optional(m, "min_feerate", (int, float), 0.0, f"miners[{i}].")),
                electricity_cost_rate=float(
                    _optional(m, "electricity_cost_rate", (int, float), 0.0, f"miners[{i}].")
                ),
                hardware_cost=float(_optional(m, "hardware_cost", (int, float), 0.0, f"miners[{i}].")),
            )
        )
    try:
        validate_roster(miners)
    except ValueError as exc:
        raise ConfigError("miners", str(exc)) from exc

    relay_raw = _optional(raw, "relay", dict, {}, "")
    relay = RelayPlan(
        kind=_optional(relay_raw, "kind", str, "unicast-flood", "relay."),
        fanout=_optional(relay_raw, "fanout", int, 8, "relay."),
        overhead_bytes=_optional(relay_raw, "overhead_bytes", int, 80, "relay."),
    )
    try:
        relay.validate()
    except ValueError as exc:
        raise ConfigError("relay", str(exc)) from exc

    pow_raw = _optional(raw, "pow", dict, {}, "")
    pow_mode = _optional(pow_raw, "mode", str, "abstract", "pow.")
    if pow_mode not in ("abstract", "concrete"):
        raise ConfigError("pow.mode", f"unknown mode {pow_mode!r}")

    block_raw = _optional(raw, "block", dict, {}, "")
    block = BlockParams(
        max_bytes=_optional(block_raw, "max_bytes", int, 8_000_000, "block."),
        avg_tx_bytes=_optional(block_raw, "avg_tx_bytes", int, 400, "block."),
        target_interval_s=float(
            _optional(block_raw, "target_interval_s", (int, float), 600.0, "block.")
        ),
        tx_rate_per_s=(
            None
            if "tx_rate_per_s" not in block_raw
            else float(_require(block_raw, "tx_rate_per_s", (int, float), "block."))
        ),
        feerate=float(_optional(block_raw, "feerate", (int, float), 1.0, "block.")),
        subsidy=_optional(block_raw, "subsidy", int, 50, "block."),
        bits=_optional(pow_raw, "bits", int, BlockParams.bits, "pow."),
        pow_mode=pow_mode,
    )
    if block.max_bytes <= 0 or block.avg_tx_bytes <= 0 or block.target_interval_s <= 0:
        raise ConfigError("block", "sizes and target interval must be positive")

    metrics_raw = _optional(raw, "metrics", dict, {}, "")
    metrics = MetricsParams(
        epsilon_coalition=float(
            _optional(metrics_raw, "epsilon_coalition", (int, float), 0.5, "metrics.")
        ),
        epsilon_s=float(_optional(metrics_raw, "epsilon_s", (int, float), 0.01, "metrics.")),
        z=_optional(metrics_raw, "z", int, 6, "metrics."),
        tau_bound_ms=float(_optional(metrics_raw, "tau_bound_ms", (int, float), 5000.0, "metrics.")),
        attacker_alpha=float(
            _optional(metrics_raw, "attacker_alpha", (int, float), 0.3, "metrics.")
        ),
        s_trials=_optional(metrics_raw, "s_trials", int, 5000, "metrics."),
        s_horizon=_optional(metrics_raw, "s_horizon", int, 400, "metrics."),
        delta_margin_ms=float(
            _optional(metrics_raw, "delta_margin_ms", (int, float), 0.0, "metrics.")
        ),
        min_spv_receipts=_optional(metrics_raw, "min_spv_receipts", int, 2, "metrics."),
    )
    if not 0.0 <= metrics.attacker_alpha < 1.0:
        raise ConfigError("metrics.attacker_alpha", "must lie in [0, 1)")
    if metrics.z < 1:
        raise ConfigError("metrics.z", "confirmation depth must be >= 1")

    network_raw = _optional(raw, "network", dict, {}, "")
    bandwidth_mbps = float(
        _optional(network_raw, "default_bandwidth_mbps", (int, float), 100.0, "network.")
    )
    if bandwidth_mbps <= 0:
        raise ConfigError("network.default_bandwidth_mbps", "must be positive")

    sweep = None
    if "sweep" in raw:
        sweep_raw = _require(raw, "sweep", dict, "")
        values = _require(sweep_raw, "values", list, "sweep.")
        if len(values) < 1:
            raise ConfigError("sweep.values", "sweep needs at least one value")
        sweep = SweepParams(path=_require(sweep_raw, "path", str, "sweep."), values=tuple(values))

    return ScenarioConfig(
        name=name,
        seed=seed,
        duration_s=duration_s,
        topology=topology,
        miners=tuple(miners),
        relay=relay,
        block=block,
        metrics=metrics,
        default_bandwidth_bps=int(bandwidth_mbps * 1_000_000),
        sweep=sweep,
        raw=raw,
    )


def load_raw(path: str | Path) -> dict:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".json":
        return json.loads(data.decode())
    try:
        return tomllib.loads(data.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"cannot parse TOML: {exc}") from exc


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(load_raw(path))


def canonical_json(raw: dict) -> str:
    return json.dumps(raw, sort_keys=True, separators=(",", ":"))


def config_digest(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def apply_override(raw: dict, dotted_path: str, value) -> dict:
    """New raw dict with the dotted field replaced (used by sweeps)."""
    out = json.loads(json.dumps(raw))
    cursor = out
    parts = dotted_path.split(".")
    for part in parts[:-1]:
        if part not in cursor or not isinstance(cursor[part], dict):
            cursor[part] = {}
        cursor = cursor[part]
    cursor[parts[-1]] = value
    return out


def derive_child_seed(seed: int, index: int) -> int:
    """64-bit child seed for sweep point `index`, decorrelated by hashing."""
    digest = hashlib.sha256(f"{seed}|{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF

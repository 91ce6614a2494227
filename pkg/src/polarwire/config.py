"""Experiment configuration and the construction pipeline.

A config is a JSON object validated against :data:`CONFIG_SCHEMA` before
any work starts; unknown fields are rejected. All randomness derives from
``params.master_seed`` through :func:`polarwire.rng.stream`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from . import rng as rngmod
from .channels import BccSpec, ChannelError, ConstructionParams, WiretapSpec, spec_from_json
from .partition import (
    BccCommonPartition,
    IndexPartition,
    build_bcc_partitions,
    build_wiretap_partition,
    classify,
    load_partition,
    save_partition,
)
from .polar import RuleSet
from .reliability import DEFAULT_CAP, BitChannelStats, bcc_stats, compute_stats

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_ROW2 = {"type": "array", "items": {"type": "array", "items": _PROB, "minItems": 2, "maxItems": 2}, "minItems": 2, "maxItems": 2}
_CHANNEL = {
    "oneOf": [
        {"type": "object", "properties": {"kind": {"const": "bsc"}, "p": _PROB}, "required": ["kind", "p"], "additionalProperties": False},
        {"type": "object", "properties": {"kind": {"const": "bec"}, "eps": _PROB}, "required": ["kind", "eps"], "additionalProperties": False},
        {
            "type": "object",
            "properties": {
                "kind": {"const": "table"},
                "rows": {"type": "array", "items": {"type": "array", "items": _PROB, "minItems": 1}, "minItems": 2, "maxItems": 2},
            },
            "required": ["kind", "rows"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "spec": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "wiretap"},
                        "p_v": _PROB,
                        "p_x_given_v": _ROW2,
                        "w1": _CHANNEL,
                        "w2": _CHANNEL,
                    },
                    "required": ["type", "p_v", "w1", "w2"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "bcc"},
                        "p_u": _PROB,
                        "p_v_given_u": _ROW2,
                        "p_x_given_v": _ROW2,
                        "w1": _CHANNEL,
                        "w2": _CHANNEL,
                    },
                    "required": ["type", "p_u", "p_v_given_u", "w1", "w2"],
                    "additionalProperties": False,
                },
            ]
        },
        "params": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 20},
                "m": {"type": "integer", "minimum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "delta_low": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "delta_high": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
            "required": ["n"],
            "additionalProperties": False,
        },
        "trials": {"type": "integer", "minimum": 0},
        "outputs": {"type": "string"},
        "stats": {
            "type": "object",
            "properties": {
                "method": {"enum": ["auto", "exact", "montecarlo", "bec_closed_form"]},
                "samples": {"type": "integer", "minimum": 1},
                "alphabet_cap": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "flags": {
            "type": "object",
            "properties": {
                "reveal_B_to_eve": {"type": "boolean"},
                "rule_mode": {"enum": ["seeded_sampling", "argmax_prior"]},
                "orientation_override": {"enum": ["auto", "forward_rx1", "forward_rx2"]},
            },
            "additionalProperties": False,
        },
        "leakage": {
            "type": "object",
            "properties": {
                "budget": {"type": "integer", "minimum": 1},
                "max_leakage_bits": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema_version", "spec", "params"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    spec: WiretapSpec | BccSpec
    params: ConstructionParams
    trials: int = 200
    outputs: str = "out"
    stats_method: str = "auto"
    samples: int = 20000
    alphabet_cap: int = DEFAULT_CAP
    reveal_B_to_eve: bool = True
    rule_mode: str = "seeded_sampling"
    orientation_override: str = "auto"
    leakage_budget: int = 1 << 26
    max_leakage_bits: float | None = None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def is_bcc(self) -> bool:
        return isinstance(self.spec, BccSpec)

    def to_json(self) -> dict:
        obj = {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec.to_json(),
            "params": self.params.to_json(),
            "trials": self.trials,
            "outputs": self.outputs,
            "stats": {"method": self.stats_method, "samples": self.samples, "alphabet_cap": self.alphabet_cap},
            "flags": {
                "reveal_B_to_eve": self.reveal_B_to_eve,
                "rule_mode": self.rule_mode,
                "orientation_override": self.orientation_override,
            },
            "leakage": {"budget": self.leakage_budget},
        }
        if self.max_leakage_bits is not None:
            obj["leakage"]["max_leakage_bits"] = self.max_leakage_bits
        return obj


def parse_config(obj: dict) -> ExperimentConfig:
    """Validate and convert a config object; raises :class:`ConfigError`."""
    try:
        jsonschema.validate(obj, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    try:
        spec = spec_from_json(obj["spec"])
        params = ConstructionParams(**obj["params"])
    except (ChannelError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    stats = obj.get("stats", {})
    flags = obj.get("flags", {})
    leak = obj.get("leakage", {})
    return ExperimentConfig(
        spec=spec,
        params=params,
        trials=obj.get("trials", 200),
        outputs=obj.get("outputs", "out"),
        stats_method=stats.get("method", "auto"),
        samples=stats.get("samples", 20000),
        alphabet_cap=stats.get("alphabet_cap", DEFAULT_CAP),
        reveal_B_to_eve=flags.get("reveal_B_to_eve", True),
        rule_mode=flags.get("rule_mode", "seeded_sampling"),
        orientation_override=flags.get("orientation_override", "auto"),
        leakage_budget=leak.get("budget", 1 << 26),
        max_leakage_bits=leak.get("max_leakage_bits"),
        raw=obj,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(obj)


@dataclass
class Construction:
    """Stats, partitions and rule sets for one config."""

    stats: BitChannelStats | tuple[BitChannelStats, BitChannelStats]
    partition: IndexPartition | tuple[BccCommonPartition, IndexPartition]
    rules: RuleSet | tuple[RuleSet, RuleSet]


def rules_for(cfg: ExperimentConfig, partition) -> RuleSet | tuple[RuleSet, RuleSet]:
    seed = cfg.params.master_seed
    if cfg.is_bcc:
        cp, sp = partition
        return (
            RuleSet(rngmod.derive_seed(seed, "rules-common"), frozenset(cp.rule.tolist()), cfg.rule_mode),
            RuleSet(rngmod.derive_seed(seed, "rules-secret"), frozenset(sp.B.tolist() + sp.D.tolist()), cfg.rule_mode),
        )
    return RuleSet(rngmod.derive_seed(seed, "rules"), frozenset(partition.B.tolist() + partition.D.tolist()), cfg.rule_mode)


def _swap_flag(cfg: ExperimentConfig) -> bool | None:
    return {"auto": None, "forward_rx1": False, "forward_rx2": True}[cfg.orientation_override]


def partition_from_stats(cfg: ExperimentConfig, stats):
    p = cfg.params
    if cfg.is_bcc:
        common, secret = stats
        return build_bcc_partitions(
            classify(common, p.delta_low, p.delta_high), classify(secret, p.delta_low, p.delta_high), _swap_flag(cfg)
        )
    return build_wiretap_partition(classify(stats, p.delta_low, p.delta_high))


def construct(cfg: ExperimentConfig) -> Construction:
    p = cfg.params
    stats_seed = rngmod.derive_seed(p.master_seed, "stats")
    if cfg.is_bcc:
        stats = bcc_stats(cfg.spec, p.n, cfg.stats_method, cfg.samples, stats_seed, cfg.alphabet_cap)
    else:
        stats = compute_stats(cfg.spec, p.n, cfg.stats_method, cfg.samples, stats_seed, cfg.alphabet_cap)
    partition = partition_from_stats(cfg, stats)
    return Construction(stats, partition, rules_for(cfg, partition))


def save_construction(con: Construction, stats_path: str | Path) -> list[Path]:
    """Write stats.json (plus CSV) and partition.json next to it."""
    stats_path = Path(stats_path)
    stats_path.parent.mkdir(parents=True, exist_ok=True)
    written = [stats_path]
    if isinstance(con.stats, tuple):
        obj = {"schema_version": SCHEMA_VERSION, "layers": {"common": con.stats[0].to_json(), "secret": con.stats[1].to_json()}}
        stats_path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
        for layer, st, roles in (("common", con.stats[0], ("prior", "y", "z")), ("secret", con.stats[1], ("u", "uy", "uz"))):
            csv_path = stats_path.with_name(f"{stats_path.stem}_{layer}.csv")
            csv_path.write_text(st.to_csv(roles))
            written.append(csv_path)
    else:
        con.stats.save(stats_path)
        csv_path = stats_path.with_suffix(".csv")
        csv_path.write_text(con.stats.to_csv())
        written.append(csv_path)
    part_path = stats_path.with_name("partition.json")
    save_partition(list(con.partition) if isinstance(con.partition, tuple) else con.partition, part_path)
    written.append(part_path)
    return written


def load_construction(cfg: ExperimentConfig, stats_path: str | Path) -> Construction:
    """Rebuild a construction from files written by :func:`save_construction`."""
    stats_path = Path(stats_path)
    obj = json.loads(stats_path.read_text())
    if "layers" in obj:
        stats = (BitChannelStats.from_json(obj["layers"]["common"]), BitChannelStats.from_json(obj["layers"]["secret"]))
    else:
        stats = BitChannelStats.from_json(obj)
    part = load_partition(stats_path.with_name("partition.json"))
    partition = tuple(part) if isinstance(part, list) else part
    return Construction(stats, partition, rules_for(cfg, partition))

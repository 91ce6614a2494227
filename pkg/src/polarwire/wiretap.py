"""Chained polar coding for the wiretap channel.

A cluster is ``m`` blocks plus a pre-shared seed. In every block the
transform-domain vector ``t`` is filled as

* ``B`` and ``D``: deterministic rules ``lambda_i(t^{i-1})``,
* ``R1`` and ``E``: fresh uniform bits,
* ``R2``: the seed (block 1) or the previous block's ``E`` values,
* ``I \\ E``: message bits,

then ``v = t G_N`` and ``x_i ~ P(x | v_i)``. Receiver 1 decodes blocks in
order, copying each decoded ``E`` into the next block's ``R2``.

Every array carries a leading trial axis so many independent clusters are
encoded and decoded at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .channels import Dmc, JointSource, WiretapSpec
from .partition import IndexPartition, InfeasiblePartition
from .polar import Role, RuleSet, sc_pass

SCHEMA_VERSION = 1
SET_LABELS = ("I", "E", "B", "R1", "R2", "D")


class LayoutError(ValueError):
    """Message or seed lengths do not match the partition."""


@dataclass(frozen=True)
class SeedBlock:
    """``|R2|`` uniform bits shared in advance with Receiver 1."""

    bits: np.ndarray
    seed_id: int = 0

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if np.any(bits > 1):
            raise LayoutError("seed bits must be 0/1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def draw(cls, size: int, master_seed: int, seed_id: int = 0, trials: int | None = None) -> "SeedBlock":
        shape = (size,) if trials is None else (trials, size)
        gen = rngmod.stream(master_seed, "seed-block", seed_id)
        return cls(gen.integers(0, 2, size=shape, dtype=np.uint8), seed_id)


def normalized_leaves(source: JointSource, name: str, obs: np.ndarray | None, shape: tuple[int, ...]) -> np.ndarray:
    """Leaf beliefs ``P(v_i, obs_i)`` normalised per position, shape ``shape + (2,)``."""
    tab = source.table(name)
    if obs is None:
        col = tab[:, 0] / tab[:, 0].sum()
        return np.broadcast_to(col, shape + (2,))
    pairs = np.moveaxis(tab[:, np.asarray(obs)], 0, -1)
    mass = pairs.sum(axis=-1, keepdims=True)
    return np.divide(pairs, mass, out=np.zeros_like(pairs), where=mass > 0)


def sample_x(p_x_given_v: np.ndarray, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``x_i ~ P(x | v_i)`` independently."""
    return (rng.random(v.shape) < np.asarray(p_x_given_v)[v, 1]).astype(np.uint8)


def apply_channel(dmc: Dmc, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Memoryless channel outputs (alphabet indices) for inputs ``x``."""
    cdf = np.cumsum(dmc.likelihood, axis=1)[:, :-1]
    r = rng.random(x.shape)
    return (r[..., None] >= cdf[x]).sum(axis=-1).astype(np.int64)


def encode_roles(partition: IndexPartition) -> np.ndarray:
    """Encoder role map: rules on B and D, supplied values elsewhere."""
    roles = np.full(partition.N, Role.COPY, dtype=np.int64)
    roles[partition.B] = Role.RULE
    roles[partition.D] = Role.RULE
    return roles


def decode_roles(partition: IndexPartition) -> np.ndarray:
    """Receiver 1 roles: rules on B and D, MAP on I and R1, copy on R2."""
    roles = np.full(partition.N, Role.MESSAGE, dtype=np.int64)
    roles[partition.B] = Role.RULE
    roles[partition.D] = Role.RULE
    roles[partition.R2] = Role.COPY
    return roles


def index_labels(partition: IndexPartition) -> list[str]:
    labels = [""] * partition.N
    for name in ("I", "B", "R1", "R2", "D"):
        for i in getattr(partition, name):
            labels[i] = name
    for i in partition.E:
        labels[i] = "E"
    return labels


def _as_trials(arr, ndim: int, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim == ndim - 1:
        return arr[None], True
    if arr.ndim != ndim:
        raise LayoutError(f"{what} has {arr.ndim} dimensions")
    return arr, False


def chain_encode(
    source: JointSource,
    partition: IndexPartition,
    rules: RuleSet,
    messages: np.ndarray,
    fill: np.ndarray,
    seed_bits: np.ndarray,
    prior_name: str = "prior",
    prior_obs: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Build ``t`` and ``v`` for a batch of clusters.

    ``messages``: ``(T, m, |I \\ E|)``; ``fill``: ``(T, m, |E| + |R1|)``
    values for ``E`` then ``R1``; ``seed_bits``: ``(T, |R2|)``;
    ``prior_obs``: optional ``(T, m, N)`` side information seen by the rules.
    """
    if not partition.feasible:
        raise InfeasiblePartition(f"|I| = {partition.I.size} < |R2| = {partition.R2.size}")
    T, m = messages.shape[:2]
    N = partition.N
    msg_idx = partition.message
    fill_idx = np.concatenate([partition.E, partition.R1])
    if messages.shape != (T, m, msg_idx.size):
        raise LayoutError(f"messages must have shape {(T, m, msg_idx.size)}, got {messages.shape}")
    if fill.shape != (T, m, fill_idx.size):
        raise LayoutError(f"E/R1 values must have shape {(T, m, fill_idx.size)}, got {fill.shape}")
    if seed_bits.shape != (T, partition.R2.size):
        raise LayoutError(f"seed must have shape {(T, partition.R2.size)}, got {seed_bits.shape}")
    roles = encode_roles(partition)
    t = np.zeros((T, m, N), dtype=np.uint8)
    v = np.zeros((T, m, N), dtype=np.uint8)
    chain = seed_bits
    for j in range(m):
        values = np.zeros((T, N), dtype=np.uint8)
        values[:, msg_idx] = messages[:, j]
        values[:, fill_idx] = fill[:, j]
        values[:, partition.R2] = chain
        obs = None if prior_obs is None else prior_obs[:, j]
        leaves = normalized_leaves(source, prior_name, obs, (T, N))
        res = sc_pass(leaves, roles, rules, "encode_sample", values=values)
        t[:, j], v[:, j] = res.t, res.v
        chain = res.t[:, partition.E]
    return t, v


def chain_decode(
    source: JointSource,
    partition: IndexPartition,
    rules: RuleSet,
    obs: np.ndarray,
    seed_bits: np.ndarray,
    good: str = "y",
    prior_name: str = "prior",
    prior_obs: np.ndarray | None = None,
) -> np.ndarray:
    """Forward decoding of ``(T, m, N)`` observation indices; returns ``t_hat``."""
    T, m, N = obs.shape
    roles = decode_roles(partition)
    t_hat = np.zeros((T, m, N), dtype=np.uint8)
    chain = seed_bits
    for j in range(m):
        values = np.zeros((T, N), dtype=np.uint8)
        values[:, partition.R2] = chain
        side = None if prior_obs is None else prior_obs[:, j]
        prior = normalized_leaves(source, prior_name, side, (T, N))
        res = sc_pass(prior, roles, rules, "decode_map", values=values, obs_leaves=normalized_leaves(source, good, obs[:, j], (T, N)))
        t_hat[:, j] = res.t
        chain = res.t[:, partition.E]
    return t_hat


@dataclass
class ChainCluster:
    """Transcript of a batch of encoded clusters (leading trial axis)."""

    m: int
    t: np.ndarray
    v: np.ndarray
    x: np.ndarray
    messages: np.ndarray
    E_values: np.ndarray
    R1_values: np.ndarray
    R2_values: np.ndarray
    seed: SeedBlock
    partition: IndexPartition
    rules: RuleSet

    def check_chain(self) -> None:
        """Block j's R2 equals block j-1's E; block 1's R2 equals the seed."""
        seed = np.broadcast_to(self.seed.bits, self.R2_values[:, 0].shape)
        assert np.array_equal(self.R2_values[:, 0], seed), "block 1 R2 differs from the seed"
        for j in range(1, self.m):
            assert np.array_equal(self.R2_values[:, j], self.E_values[:, j - 1]), f"chain broken at block {j + 1}"

    def to_json(self, trial: int = 0, stage: str | None = None) -> dict:
        blocks = [
            {
                "block": j + 1,
                "t": self.t[trial, j].tolist(),
                "v": self.v[trial, j].tolist(),
                "x": self.x[trial, j].tolist(),
            }
            for j in range(self.m)
        ]
        obj = {
            "schema_version": SCHEMA_VERSION,
            "m": self.m,
            "roles": index_labels(self.partition),
            "seed": np.asarray(self.seed.bits if self.seed.bits.ndim == 1 else self.seed.bits[trial]).tolist(),
            "rules": self.rules.to_json(),
            "blocks": blocks,
        }
        if stage is not None:
            obj["stage"] = stage
        return obj

    def save(self, path: str | Path, trial: int = 0) -> None:
        Path(path).write_text(json.dumps(self.to_json(trial), indent=1, sort_keys=True) + "\n")


def seed_matrix(seed: SeedBlock, T: int, width: int) -> np.ndarray:
    """Seed bits as a ``(T, width)`` matrix; a single row is shared by all trials."""
    bits = seed.bits
    if bits.shape[-1] != width or (bits.ndim == 2 and bits.shape[0] != T):
        raise LayoutError(f"seed block must hold {width} bits per trial, got shape {bits.shape}")
    return np.broadcast_to(bits, (T, width))


def encode_cluster(
    messages: np.ndarray,
    seed: SeedBlock,
    partition: IndexPartition,
    rules: RuleSet,
    spec: WiretapSpec,
    rng: np.random.Generator,
    x_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ChainCluster]:
    """Encode ``(m, |I \\ E|)`` messages, or ``(T, m, |I \\ E|)`` for T clusters.

    Fresh E and R1 bits are drawn from ``rng`` in one call of shape
    ``(T, m, |E| + |R1|)``; ``x`` is sampled from ``x_rng`` (default ``rng``).
    """
    msgs, single = _as_trials(messages, 3, "messages")
    T, m = msgs.shape[:2]
    seed_bits = seed_matrix(seed, T, partition.R2.size)
    width = partition.E.size + partition.R1.size
    fill = rng.integers(0, 2, size=(T, m, width), dtype=np.uint8)
    t, v = chain_encode(spec.source(), partition, rules, msgs, fill, seed_bits)
    x = sample_x(spec.p_x_given_v, v, rng if x_rng is None else x_rng)
    cluster = ChainCluster(
        m=m,
        t=t,
        v=v,
        x=x,
        messages=msgs,
        E_values=t[..., partition.E],
        R1_values=t[..., partition.R1],
        R2_values=t[..., partition.R2],
        seed=seed,
        partition=partition,
        rules=rules,
    )
    cluster.check_chain()
    return (x[0] if single else x), cluster


@dataclass
class DecodedCluster:
    messages: np.ndarray  # (T, m, |I \ E|)
    t: np.ndarray         # (T, m, N)


def decode_cluster(
    y: np.ndarray, seed: SeedBlock, partition: IndexPartition, rules: RuleSet, spec: WiretapSpec
) -> DecodedCluster:
    """Receiver 1's forward pass over ``(m, N)`` or ``(T, m, N)`` outputs."""
    y = np.asarray(y, dtype=np.int64)
    single = y.ndim == 2
    if single:
        y = y[None]
    T = y.shape[0]
    seed_bits = seed_matrix(seed, T, partition.R2.size)
    t_hat = chain_decode(spec.source(), partition, rules, y, seed_bits, good="y")
    msgs = t_hat[..., partition.message]
    if single:
        return DecodedCluster(msgs[0], t_hat[0])
    return DecodedCluster(msgs, t_hat)


@dataclass(frozen=True)
class RateReport:
    N: int
    m: int
    message_rate: float
    seed_rate: float
    frozen_overhead: float
    message_bits: int
    target: float | None

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **self.__dict__}


def wiretap_rates(partition: IndexPartition, m: int, N: int | None = None, target: float | None = None) -> RateReport:
    """Message rate (|I|-|E|)/N, seed rate |R2|/(mN), frozen (|B|+|D|)/(mN)."""
    N = partition.N if N is None else N
    k = partition.I.size - partition.E.size
    return RateReport(
        N=N,
        m=m,
        message_rate=k / N,
        seed_rate=partition.R2.size / (m * N),
        frozen_overhead=(partition.B.size + partition.D.size) / (m * N),
        message_bits=m * k,
        target=target,
    )

"""Two-stage polar coding for the broadcast channel with confidential messages.

Stage 1 (common layer) builds ``q(j)`` over the ``U`` source and sends
``u(j) = q(j) G_N``. Positions decodable by both receivers (``I_u``) carry
common bits in every block. The forward receiver's exclusive set ``D1``
carries common bits in blocks ``1..m-1``; each is repeated in the next
block on ``E2``, a subset of the backward receiver's exclusive set ``D2``.
Block 1 fixes ``D2`` to zeros (known to the forward receiver) and block
``m`` fixes ``D1`` to zeros (known to the backward receiver). The rest of
``D2`` carries shared uniform bits known to the forward receiver.

Stage 2 (secret layer) is the wiretap chain over ``V`` with ``u(j)`` as
side information; ``E`` and ``R1`` carry the extra (non-secret) payload.

Receiver 1 is the forward receiver unless the common partition is
``swapped``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channels import BccSpec, JointSource
from .partition import BccCommonPartition, IndexPartition
from .polar import Role, RuleSet, polar_transform, sc_pass
from .wiretap import LayoutError, SeedBlock, chain_decode, chain_encode, index_labels, normalized_leaves, sample_x, seed_matrix

SCHEMA_VERSION = 1


def common_bits_per_cluster(common: BccCommonPartition, m: int) -> int:
    return m * common.I_u.size + (m - 1) * common.D1.size


def _d2_free(common: BccCommonPartition) -> np.ndarray:
    return np.setdiff1d(common.D2, common.E2)


def _split_common(common: BccCommonPartition, bits: np.ndarray, m: int) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Per block: (I_u bits, D1 bits or None for the last block)."""
    out, pos = [], 0
    ku, kd = common.I_u.size, common.D1.size
    for j in range(m):
        iu = bits[:, pos : pos + ku]
        pos += ku
        d1 = None
        if j < m - 1:
            d1 = bits[:, pos : pos + kd]
            pos += kd
        out.append((iu, d1))
    return out


@dataclass
class BccCluster:
    """Transcript of a batch of BCC clusters (leading trial axis)."""

    m: int
    q: np.ndarray
    u: np.ndarray
    t: np.ndarray
    v: np.ndarray
    x: np.ndarray
    common: np.ndarray
    secret: np.ndarray
    extra: np.ndarray
    d2_random: np.ndarray
    seed: SeedBlock
    common_partition: BccCommonPartition
    secret_partition: IndexPartition
    common_rules: RuleSet
    secret_rules: RuleSet

    def check_chain(self) -> None:
        """E2 of block j equals D1 of block j-1; endpoint blocks hold zeros."""
        cp = self.common_partition
        for j in range(1, self.m):
            assert np.array_equal(self.q[:, j][:, cp.E2], self.q[:, j - 1][:, cp.D1]), f"common chain broken at block {j + 1}"
        assert not self.q[:, 0][:, cp.D2].any(), "block 1 D2 must be fixed zeros"
        assert not self.q[:, -1][:, cp.D1].any(), "block m D1 must be fixed zeros"
        sp = self.secret_partition
        seed = np.broadcast_to(self.seed.bits, self.t[:, 0][:, sp.R2].shape)
        assert np.array_equal(self.t[:, 0][:, sp.R2], seed), "secret block 1 R2 differs from the seed"
        for j in range(1, self.m):
            assert np.array_equal(self.t[:, j][:, sp.R2], self.t[:, j - 1][:, sp.E]), f"secret chain broken at block {j + 1}"

    def to_json(self, trial: int = 0) -> dict:
        common_roles = [""] * self.common_partition.N
        for name in ("I_u", "D1", "D2", "rule"):
            for i in getattr(self.common_partition, name):
                common_roles[i] = name
        for i in self.common_partition.E2:
            common_roles[i] = "E2"
        stages = [
            {
                "stage": "common",
                "roles": common_roles,
                "rules": self.common_rules.to_json(),
                "swapped": self.common_partition.swapped,
                "blocks": [
                    {"block": j + 1, "q": self.q[trial, j].tolist(), "u": self.u[trial, j].tolist()} for j in range(self.m)
                ],
            },
            {
                "stage": "secret",
                "roles": index_labels(self.secret_partition),
                "rules": self.secret_rules.to_json(),
                "seed": np.asarray(self.seed.bits if self.seed.bits.ndim == 1 else self.seed.bits[trial]).tolist(),
                "blocks": [
                    {
                        "block": j + 1,
                        "t": self.t[trial, j].tolist(),
                        "v": self.v[trial, j].tolist(),
                        "x": self.x[trial, j].tolist(),
                    }
                    for j in range(self.m)
                ],
            },
        ]
        return {"schema_version": SCHEMA_VERSION, "m": self.m, "stages": stages}

    def save(self, path: str | Path, trial: int = 0) -> None:
        Path(path).write_text(json.dumps(self.to_json(trial), indent=1, sort_keys=True) + "\n")


def _encode_common(
    source: JointSource, cp: BccCommonPartition, rules: RuleSet, common: np.ndarray, d2_random: np.ndarray, m: int
) -> tuple[np.ndarray, np.ndarray]:
    T, N = common.shape[0], cp.N
    roles = np.full(N, Role.COPY, dtype=np.int64)
    roles[cp.rule] = Role.RULE
    free = _d2_free(cp)
    q = np.zeros((T, m, N), dtype=np.uint8)
    u = np.zeros((T, m, N), dtype=np.uint8)
    leaves = normalized_leaves(source, "prior", None, (T, N))
    for j, (iu, d1) in enumerate(_split_common(cp, common, m)):
        values = np.zeros((T, N), dtype=np.uint8)
        values[:, cp.I_u] = iu
        if d1 is not None:
            values[:, cp.D1] = d1
        if j > 0:
            values[:, cp.E2] = q[:, j - 1][:, cp.D1]
            values[:, free] = d2_random[:, j]
        placed = cp.I_u.size + cp.D1.size + cp.D2.size + cp.rule.size
        assert placed == N, "common layout does not cover the block"
        res = sc_pass(leaves, roles, rules, "encode_sample", values=values)
        q[:, j], u[:, j] = res.t, res.v
    return q, u


def bcc_encode(
    common: np.ndarray,
    secret: np.ndarray,
    extra: np.ndarray,
    seed: SeedBlock,
    partitions: tuple[BccCommonPartition, IndexPartition],
    rules: tuple[RuleSet, RuleSet],
    spec: BccSpec,
    rng: np.random.Generator,
    x_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, BccCluster]:
    """Encode a batch of clusters.

    Shapes (leading trial axis ``T`` optional): ``common`` ``(T, m|I_u| +
    (m-1)|D1|)``; ``secret`` ``(T, m, |I \\ E|)``; ``extra`` ``(T, m, |E| +
    |R1|)`` ordered E then R1. Shared D2 bits come from ``rng``; ``x`` is
    sampled from ``x_rng`` (default ``rng``).
    """
    cp, sp = partitions
    secret = np.asarray(secret, dtype=np.uint8)
    single = secret.ndim == 2
    if single:
        secret = secret[None]
        common = np.asarray(common, dtype=np.uint8)[None]
        extra = np.asarray(extra, dtype=np.uint8)[None]
    common = np.asarray(common, dtype=np.uint8)
    extra = np.asarray(extra, dtype=np.uint8)
    T, m = secret.shape[:2]
    if common.shape != (T, common_bits_per_cluster(cp, m)):
        raise LayoutError(f"common bits must have shape {(T, common_bits_per_cluster(cp, m))}, got {common.shape}")
    free = _d2_free(cp)
    d2_random = rng.integers(0, 2, size=(T, m, free.size), dtype=np.uint8)
    d2_random[:, 0] = 0
    q, u = _encode_common(spec.common_source(), cp, rules[0], common, d2_random, m)
    seed_bits = seed_matrix(seed, T, sp.R2.size)
    t, v = chain_encode(spec.secret_source(), sp, rules[1], secret, extra, seed_bits, prior_name="u", prior_obs=u)
    x = sample_x(spec.p_x_given_v, v, rng if x_rng is None else x_rng)
    cluster = BccCluster(m, q, u, t, v, x, common, secret, extra, d2_random, seed, cp, sp, rules[0], rules[1])
    cluster.check_chain()
    return (x[0] if single else x), cluster


def _decode_common_forward(
    source: JointSource, cp: BccCommonPartition, rules: RuleSet, obs: np.ndarray, name: str, d2_random: np.ndarray
) -> np.ndarray:
    T, m, N = obs.shape
    roles = np.full(N, Role.RULE, dtype=np.int64)
    roles[cp.I_u] = Role.MESSAGE
    roles[cp.D1] = Role.MESSAGE
    roles[cp.D2] = Role.COPY
    free = _d2_free(cp)
    prior = normalized_leaves(source, "prior", None, (T, N))
    q_hat = np.zeros((T, m, N), dtype=np.uint8)
    for j in range(m):
        values = np.zeros((T, N), dtype=np.uint8)
        if j > 0:
            values[:, cp.E2] = q_hat[:, j - 1][:, cp.D1]
            values[:, free] = d2_random[:, j]
        res = sc_pass(prior, roles, rules, "decode_map", values=values, obs_leaves=normalized_leaves(source, name, obs[:, j], (T, N)))
        q_hat[:, j] = res.t
    return q_hat


def _decode_common_backward(
    source: JointSource, cp: BccCommonPartition, rules: RuleSet, obs: np.ndarray, name: str
) -> np.ndarray:
    T, m, N = obs.shape
    roles = np.full(N, Role.RULE, dtype=np.int64)
    roles[cp.I_u] = Role.MESSAGE
    roles[cp.D2] = Role.MESSAGE
    roles[cp.D1] = Role.COPY
    prior = normalized_leaves(source, "prior", None, (T, N))
    q_hat = np.zeros((T, m, N), dtype=np.uint8)
    for j in reversed(range(m)):
        values = np.zeros((T, N), dtype=np.uint8)
        if j < m - 1:
            values[:, cp.D1] = q_hat[:, j + 1][:, cp.E2]
        res = sc_pass(prior, roles, rules, "decode_map", values=values, obs_leaves=normalized_leaves(source, name, obs[:, j], (T, N)))
        q_hat[:, j] = res.t
    return q_hat


def _common_bits(cp: BccCommonPartition, q_hat: np.ndarray) -> np.ndarray:
    m = q_hat.shape[1]
    parts = []
    for j in range(m):
        parts.append(q_hat[:, j][:, cp.I_u])
        if j < m - 1:
            parts.append(q_hat[:, j][:, cp.D1])
    return np.concatenate(parts, axis=1)


def _decode_common(spec, cp, rules, obs, name, d2_random):
    source = spec.common_source()
    if name == cp.forward:
        if d2_random is None:
            raise LayoutError("the forward receiver needs the shared D2 bits")
        return _decode_common_forward(source, cp, rules, obs, name, d2_random)
    return _decode_common_backward(source, cp, rules, obs, name)


@dataclass
class Rx1Output:
    common: np.ndarray
    secret: np.ndarray
    extra: np.ndarray
    q: np.ndarray
    u: np.ndarray
    t: np.ndarray


def bcc_decode_rx1(
    y: np.ndarray,
    seed: SeedBlock,
    partitions: tuple[BccCommonPartition, IndexPartition],
    rules: tuple[RuleSet, RuleSet],
    spec: BccSpec,
    d2_random: np.ndarray | None = None,
    u_override: np.ndarray | None = None,
) -> Rx1Output:
    """Receiver 1: common layer, then the secret layer given ``u_hat``.

    ``u_override`` replaces the decoded ``u_hat`` (failure injection).
    """
    cp, sp = partitions
    y = np.asarray(y, dtype=np.int64)
    single = y.ndim == 2
    if single:
        y = y[None]
        d2_random = None if d2_random is None else np.asarray(d2_random)[None]
    T = y.shape[0]
    q_hat = _decode_common(spec, cp, rules[0], y, "y", d2_random)
    u_hat = polar_transform(q_hat) if u_override is None else np.asarray(u_override, dtype=np.uint8).reshape(q_hat.shape)
    ny = spec.w1.output_size
    seed_bits = seed_matrix(seed, T, sp.R2.size)
    t_hat = chain_decode(
        spec.secret_source(), sp, rules[1], u_hat.astype(np.int64) * ny + y, seed_bits, good="uy", prior_name="u", prior_obs=u_hat
    )
    fill_idx = np.concatenate([sp.E, sp.R1])
    out = Rx1Output(_common_bits(cp, q_hat), t_hat[..., sp.message], t_hat[..., fill_idx], q_hat, u_hat, t_hat)
    if single:
        out = Rx1Output(*(a[0] for a in (out.common, out.secret, out.extra, out.q, out.u, out.t)))
    return out


def bcc_decode_rx2(
    z: np.ndarray,
    partitions: tuple[BccCommonPartition, IndexPartition],
    rules: tuple[RuleSet, RuleSet],
    spec: BccSpec,
    d2_random: np.ndarray | None = None,
) -> np.ndarray:
    """Receiver 2: common bits only (backward unless the layout is swapped)."""
    cp = partitions[0]
    z = np.asarray(z, dtype=np.int64)
    single = z.ndim == 2
    if single:
        z = z[None]
        d2_random = None if d2_random is None else np.asarray(d2_random)[None]
    bits = _common_bits(cp, _decode_common(spec, cp, rules[0], z, "z", d2_random))
    return bits[0] if single else bits


@dataclass(frozen=True)
class BccRates:
    N: int
    m: int
    R0: float
    Rs: float
    R1: float
    common_fraction: float
    common_bits: int
    targets: dict | None = None

    @property
    def sandwich_holds(self) -> bool:
        """(m-1)/m * f <= R0 <= f with f the forward receiver's decodable fraction."""
        f = self.common_fraction
        return (self.m - 1) / self.m * f <= self.R0 + 1e-15 and self.R0 <= f + 1e-15

    def to_json(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, **self.__dict__}
        out["sandwich_holds"] = self.sandwich_holds
        return out


def bcc_rate_triple(
    partitions: tuple[BccCommonPartition, IndexPartition], m: int, N: int | None = None, targets: dict | None = None
) -> BccRates:
    """R0 = (m|I_u| + (m-1)|D1|)/(mN), Rs = (|I|-|E|)/N, R1 = (|E|+|R1|)/N.

    The extra payload uses all of ``H_{V|U} & L_{V|U,Y}`` outside the secret
    positions, so no decodable surplus is left over.
    """
    cp, sp = partitions
    N = cp.N if N is None else N
    bits = common_bits_per_cluster(cp, m)
    return BccRates(
        N=N,
        m=m,
        R0=bits / (m * N),
        Rs=(sp.I.size - sp.E.size) / N,
        R1=(sp.E.size + sp.R1.size) / N,
        common_fraction=(cp.I_u.size + cp.D1.size) / N,
        common_bits=bits,
        targets=targets,
    )

"""Reliability, leakage and rate measurements.

* :func:`run_reliability` runs Monte-Carlo trials of encode, channel and
  decode for a wiretap or BCC experiment.
* :func:`exact_leakage` is the brute-force oracle: it enumerates messages,
  encoder randomness and eavesdropper outputs to get ``I(M; Z)`` in bits.
* :func:`leakage_proxy` is a per-index heuristic for block lengths where
  enumeration is impossible. It is an estimate, not a bound.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .bcc import bcc_decode_rx1, bcc_decode_rx2, bcc_encode, common_bits_per_cluster
from .channels import BccSpec, Dmc, WiretapSpec, all_bit_vectors, compose_effective_channel
from .partition import BccCommonPartition, IndexPartition, InfeasiblePartition
from .polar import Role, RuleSet, sc_pass
from .reliability import BitChannelStats
from .wiretap import SeedBlock, apply_channel, chain_encode, decode_cluster, encode_cluster, normalized_leaves

SCHEMA_VERSION = 1
RELIABILITY_COLUMNS = ("trials", "errors", "rate", "ci_lo", "ci_hi", "receiver")
LEAKAGE_COLUMNS = ("method", "value_bits", "scope", "N", "m", "message_bits", "certified")
DEFAULT_LEAKAGE_BUDGET = 1 << 26
TRIAL_CHUNK = 64


class BudgetExceeded(RuntimeError):
    """Exact enumeration would exceed the configured budget."""


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = errors / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return float(max(center - half, 0.0)), float(min(center + half, 1.0))


def config_digest(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass(frozen=True)
class ReceiverOutcome:
    receiver: str
    trials: int
    errors: int

    @property
    def rate(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.errors, self.trials)


@dataclass
class ReliabilityReport:
    """Cluster error counts per receiver with Wilson 95% intervals."""

    trials: int
    outcomes: list[ReceiverOutcome]
    digest: str = ""
    meta: dict = field(default_factory=dict)

    def outcome(self, receiver: str) -> ReceiverOutcome:
        for o in self.outcomes:
            if o.receiver == receiver:
                return o
        raise KeyError(receiver)

    def rows(self) -> list[dict]:
        out = []
        for o in self.outcomes:
            lo, hi = o.interval
            out.append(
                {"trials": o.trials, "errors": o.errors, "rate": o.rate, "ci_lo": lo, "ci_hi": hi, "receiver": o.receiver}
            )
        return out

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "reliability", "digest": self.digest, "meta": self.meta, "rows": self.rows()}


@dataclass
class LeakageReport:
    """A leakage value in bits; ``certified`` is True only for exact values."""

    method: str
    value_bits: float
    scope: str
    N: int
    m: int
    message_bits: int
    meta: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.method == "exact_enumeration"

    @property
    def per_message_bit(self) -> float:
        return self.value_bits / self.message_bits if self.message_bits else 0.0

    def rows(self) -> list[dict]:
        return [
            {
                "method": self.method,
                "value_bits": self.value_bits,
                "scope": self.scope,
                "N": self.N,
                "m": self.m,
                "message_bits": self.message_bits,
                "certified": self.certified,
            }
        ]

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "leakage", "meta": self.meta, "rows": self.rows()}


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit_report(report, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.json`` (suffix of ``path`` ignored).

    Output is a pure function of the report, so repeated writes are
    byte-identical. A report without rows yields a header-only CSV.
    """
    base = Path(path)
    base = base.with_suffix("") if base.suffix in (".csv", ".json") else base
    if isinstance(report, LeakageReport):
        columns = LEAKAGE_COLUMNS
    else:
        columns = RELIABILITY_COLUMNS
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in report.rows():
        writer.writerow([_fmt(row[c]) for c in columns])
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    csv_path.write_text(buf.getvalue())
    json_path.write_text(json.dumps(report.to_json(), indent=1, sort_keys=True) + "\n")
    return csv_path, json_path


# ---------------------------------------------------------------- reliability


@dataclass(frozen=True)
class WiretapExperiment:
    spec: WiretapSpec
    partition: IndexPartition
    rules: RuleSet
    m: int
    master_seed: int


@dataclass(frozen=True)
class BccExperiment:
    spec: BccSpec
    partitions: tuple[BccCommonPartition, IndexPartition]
    rules: tuple[RuleSet, RuleSet]
    m: int
    master_seed: int


def _chunks(trials: int, chunk: int = TRIAL_CHUNK):
    for c, start in enumerate(range(0, trials, chunk)):
        yield c, min(chunk, trials - start)


def _wiretap_chunk(exp: WiretapExperiment, c: int, size: int) -> np.ndarray:
    p, s = exp.partition, exp.master_seed
    msgs = rngmod.stream(s, "messages", c).integers(0, 2, (size, exp.m, p.message.size), dtype=np.uint8)
    seed = SeedBlock(rngmod.stream(s, "seed-block", c).integers(0, 2, (size, p.R2.size), dtype=np.uint8), c)
    x, _ = encode_cluster(msgs, seed, p, exp.rules, exp.spec, rngmod.stream(s, "encoder", c), rngmod.stream(s, "x-map", c))
    y = apply_channel(exp.spec.w1, x, rngmod.stream(s, "channel-y", c))
    dec = decode_cluster(y, seed, p, exp.rules, exp.spec)
    return np.any(dec.messages != msgs, axis=(1, 2))


def _bcc_chunk(exp: BccExperiment, c: int, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cp, sp = exp.partitions
    s, m = exp.master_seed, exp.m
    g = rngmod.stream(s, "messages", c)
    common = g.integers(0, 2, (size, common_bits_per_cluster(cp, m)), dtype=np.uint8)
    secret = g.integers(0, 2, (size, m, sp.message.size), dtype=np.uint8)
    extra = g.integers(0, 2, (size, m, sp.E.size + sp.R1.size), dtype=np.uint8)
    seed = SeedBlock(rngmod.stream(s, "seed-block", c).integers(0, 2, (size, sp.R2.size), dtype=np.uint8), c)
    x, cl = bcc_encode(
        common, secret, extra, seed, exp.partitions, exp.rules, exp.spec, rngmod.stream(s, "encoder", c), rngmod.stream(s, "x-map", c)
    )
    y = apply_channel(exp.spec.w1, x, rngmod.stream(s, "channel-y", c))
    z = apply_channel(exp.spec.w2, x, rngmod.stream(s, "channel-z", c))
    rx1 = bcc_decode_rx1(y, seed, exp.partitions, exp.rules, exp.spec, cl.d2_random)
    rx2 = bcc_decode_rx2(z, exp.partitions, exp.rules, exp.spec, cl.d2_random)
    c1 = np.any(rx1.common != common, axis=1)
    s1 = np.any(rx1.secret != secret, axis=(1, 2))
    c2 = np.any(rx2 != common, axis=1)
    return c1, s1, c2


def run_reliability(exp: WiretapExperiment | BccExperiment, trials: int, threads: int = 1, digest: str = "") -> ReliabilityReport:
    """Monte-Carlo cluster error rates.

    Trials run in chunks of :data:`TRIAL_CHUNK`; chunk ``c`` draws from
    streams keyed ``(master_seed, purpose, c)``, so results do not depend
    on ``threads`` or on scheduling.
    """
    chunks = list(_chunks(trials))
    if isinstance(exp, WiretapExperiment):
        work = lambda cs: _wiretap_chunk(exp, *cs)  # noqa: E731
    else:
        work = lambda cs: _bcc_chunk(exp, *cs)  # noqa: E731
    if threads > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(cs) for cs in chunks]
    if isinstance(exp, WiretapExperiment):
        errs = np.concatenate(results) if results else np.zeros(0, bool)
        outcomes = [ReceiverOutcome("rx1_message", trials, int(errs.sum()))]
    else:
        c1, s1, c2 = (np.concatenate([r[k] for r in results]) if results else np.zeros(0, bool) for k in range(3))
        outcomes = [
            ReceiverOutcome("rx1_common", trials, int(c1.sum())),
            ReceiverOutcome("rx1_secret", trials, int(s1.sum())),
            ReceiverOutcome("rx1_joint", trials, int((c1 | s1).sum())),
            ReceiverOutcome("rx2_common", trials, int(c2.sum())),
        ]
    return ReliabilityReport(trials, outcomes, digest)


# ------------------------------------------------------------ exact leakage


def _mutual_information(joint: np.ndarray) -> float:
    """I(A;B) in bits of a 2-D joint table (rows A, columns B)."""
    joint = joint / joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / (pa @ pb)[mask]
    return max(float(np.sum(joint[mask] * np.log2(ratio))), 0.0)


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] == 0:
        return np.zeros(bits.shape[:-1], dtype=np.int64)
    return bits @ (1 << np.arange(bits.shape[-1] - 1, -1, -1, dtype=np.int64))


def block_output_law(v: np.ndarray, eff: Dmc) -> np.ndarray:
    """``P(z^N | v^N)`` for each row of ``v``; columns index ``z^N`` in base |Z|."""
    w = eff.likelihood
    out = np.ones((v.shape[0], 1))
    for i in range(v.shape[1]):
        out = (out[:, :, None] * w[v[:, i]][:, None, :]).reshape(v.shape[0], -1)
    return out


def _compact(keys: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(keys, return_inverse=True)
    return inv.reshape(keys.shape), uniq.size


def _wiretap_block_kernel(spec: WiretapSpec, partition: IndexPartition, rules: RuleSet, eff: Dmc, reveal: np.ndarray):
    """Enumerate one block over (chain-in, message, fill).

    Returns ``v``, the message/chain-in/E-out keys and the revealed-bit keys
    of every enumerated row, plus the law ``P(z | v)``.
    """
    N = partition.N
    k, s = partition.message.size, partition.R2.size
    f = partition.E.size + partition.R1.size
    combos = all_bit_vectors(s + k + f)
    T = combos.shape[0]
    seed, msg, fill = combos[:, :s], combos[:, s : s + k], combos[:, s + k :]
    t, v = chain_encode(spec.source(), partition, rules, msg[:, None], fill[:, None], seed)
    t, v = t[:, 0], v[:, 0]
    return {
        "v": v,
        "chain_in": _bits_to_int(seed),
        "msg": _bits_to_int(msg),
        "e_out": _bits_to_int(t[:, partition.E]),
        "revealed": _bits_to_int(t[:, reveal]),
        "weight": np.full(T, 2.0 ** -f),
        "k": k,
        "s": s,
        "law": block_output_law(v, eff),
    }


def exact_leakage(
    spec: WiretapSpec,
    partition: IndexPartition,
    rules: RuleSet,
    m: int = 1,
    reveal_B_to_eve: bool = True,
    include_final_E: bool = False,
    budget: int = DEFAULT_LEAKAGE_BUDGET,
) -> LeakageReport:
    """Exact ``I(M^m; Z^m)`` of the chained wiretap code, in bits.

    Messages are uniform; the seed, E and R1 bits are uniform and summed out
    exactly. Rules are fixed and known to the eavesdropper. With
    ``reveal_B_to_eve`` the B-bit values join the eavesdropper's view; with
    ``include_final_E`` so do the E values of block ``m``.
    """
    if not partition.feasible:
        raise InfeasiblePartition("partition cannot be chained")
    N = partition.N
    eff = compose_effective_channel(spec.p_x_given_v, spec.w2)
    k, s = partition.message.size, partition.R2.size
    f = partition.E.size + partition.R1.size
    nz = eff.output_size**N
    enum_rows = 2 ** (s + k + f)
    # joint table size across the chain: messages x (outputs, revealed) x chain state
    cost = max(enum_rows * nz, 2 ** (m * k) * nz**m * 2**s * (2 ** partition.B.size if reveal_B_to_eve else 1))
    if cost > budget:
        raise BudgetExceeded(f"enumeration needs about {cost} cells, budget is {budget}")
    reveal = partition.B if reveal_B_to_eve else np.zeros(0, dtype=np.int64)
    ker = _wiretap_block_kernel(spec, partition, rules, eff, reveal)
    rkey, nrev = _compact(ker["revealed"])
    ns = 2**s
    # block kernel K[c_in, msg, c_out, obs] with obs = (revealed, z)
    K = np.zeros((ns, 2**k, ns, nrev * nz))
    for row in range(ker["v"].shape[0]):
        lo = rkey[row] * nz
        K[ker["chain_in"][row], ker["msg"][row], ker["e_out"][row], lo : lo + nz] += ker["weight"][row] * ker["law"][row]
    # J[msgs, obs, c]: joint over messages so far, observations so far, chain state
    J = np.full((1, 1, ns), 1.0 / ns)
    for _ in range(m):
        J = np.einsum("aoc,cmdz->amozd", J, K)
        a, mm, o, zz, d = J.shape
        J = J.reshape(a * mm, o * zz, d)
    if include_final_E:
        a, o, d = J.shape
        table = J.reshape(a, o * d)
    else:
        table = J.sum(axis=2)
    value = _mutual_information(table)
    scope = "I(M;Z,E_m)" if include_final_E else "I(M;Z)"
    return LeakageReport(
        "exact_enumeration",
        value,
        scope,
        N,
        m,
        m * k,
        meta={"reveal_B_to_eve": reveal_B_to_eve, "eve_channel": spec.w2.to_json()},
    )


def exact_bcc_leakage(
    spec: BccSpec,
    partitions: tuple[BccCommonPartition, IndexPartition],
    rules: tuple[RuleSet, RuleSet],
    budget: int = DEFAULT_LEAKAGE_BUDGET,
) -> LeakageReport:
    """Exact ``I(M; U^N, Z^N)`` for a single BCC block (``m = 1``).

    The common bits on ``I_u`` are uniform and summed out; ``u`` is revealed
    to the eavesdropper alongside ``z``.
    """
    cp, sp = partitions
    if not sp.feasible:
        raise InfeasiblePartition("secret partition cannot be chained")
    N = cp.N
    eff = compose_effective_channel(spec.p_x_given_v, spec.w2)
    nz = eff.output_size**N
    kc = cp.I_u.size
    k, s = sp.message.size, sp.R2.size
    f = sp.E.size + sp.R1.size
    rows = 2 ** (kc + s + k + f)
    cost = rows * nz
    if cost > budget:
        raise BudgetExceeded(f"enumeration needs about {cost} cells, budget is {budget}")
    combos = all_bit_vectors(kc + s + k + f)
    common, seed = combos[:, :kc], combos[:, kc : kc + s]
    msg, fill = combos[:, kc + s : kc + s + k], combos[:, kc + s + k :]
    R = combos.shape[0]
    roles = np.full(N, Role.COPY, dtype=np.int64)
    roles[cp.rule] = Role.RULE
    values = np.zeros((R, N), dtype=np.uint8)
    values[:, cp.I_u] = common
    src = spec.common_source()
    u = sc_pass(normalized_leaves(src, "prior", None, (R, N)), roles, rules[0], "encode_sample", values=values).v
    t, v = chain_encode(spec.secret_source(), sp, rules[1], msg[:, None], fill[:, None], seed, prior_name="u", prior_obs=u[:, None])
    law = block_output_law(v[:, 0], eff)
    ukey, nu = _compact(_bits_to_int(u))
    mkey = _bits_to_int(msg)
    table = np.zeros((2**k, nu * nz))
    w = 2.0 ** -(kc + s + f)
    for r in range(R):
        table[mkey[r], ukey[r] * nz : (ukey[r] + 1) * nz] += w * law[r]
    return LeakageReport("exact_enumeration", _mutual_information(table), "I(M;U,Z)", N, 1, k)


def leakage_proxy(stats: BitChannelStats, partition: IndexPartition, observer: str = "z") -> LeakageReport:
    """Sum over I (message and E positions) of ``1 - z_given_z**2``.

    Since ``Z^2 <= H``, each term bounds the per-index entropy deficit from
    above; the sum is a heuristic indicator, never a certificate.
    """
    z = np.asarray(stats.z[observer])
    idx = partition.I
    value = float(np.sum(1.0 - z[idx] ** 2))
    return LeakageReport(
        "proxy_bound",
        value,
        "sum over I of 1 - Z^2",
        partition.N,
        1,
        int(partition.message.size),
        meta={"stats_method": stats.method, "note": "heuristic estimate, not a certified bound"},
    )


def rule_averaged_block_law(spec: WiretapSpec, partition: IndexPartition) -> np.ndarray:
    """Exact law of ``v^N`` for one block when rule bits are drawn from
    ``P(T_i | T^{i-1})`` rather than fixed (uniform messages, seed, E, R1).

    Enumerates every ``t`` vector and weights it by the product of its
    per-index probabilities. Returns a length-``2**N`` vector indexed by
    ``v`` read as a big-endian integer.
    """
    N = partition.N
    src = spec.source()
    t_all = all_bit_vectors(N)
    roles = np.full(N, Role.COPY, dtype=np.int64)
    leaves = normalized_leaves(src, "prior", None, (t_all.shape[0], N))
    res = sc_pass(leaves, roles, RuleSet(0), "encode_sample", values=t_all)
    rule_idx = np.concatenate([partition.B, partition.D]).astype(np.int64)
    free_idx = np.setdiff1d(np.arange(N), rule_idx)
    post = res.prior_posterior
    mass = post.sum(axis=-1)
    p_t = np.take_along_axis(post, t_all[..., None].astype(np.int64), axis=-1)[..., 0] / mass
    weight = np.prod(p_t[:, rule_idx], axis=1) * 2.0 ** -free_idx.size
    out = np.zeros(2**N)
    np.add.at(out, _bits_to_int(res.v), weight)
    return out


def iid_law(spec: WiretapSpec, N: int) -> np.ndarray:
    """Product law of ``v^N`` indexed like :func:`rule_averaged_block_law`."""
    v = all_bit_vectors(N)
    p = np.where(v == 1, spec.p_v, 1 - spec.p_v)
    out = np.zeros(2**N)
    out[_bits_to_int(v)] = np.prod(p, axis=1)
    return out


def fixed_rule_block_law(spec: WiretapSpec, partition: IndexPartition, rules: RuleSet) -> np.ndarray:
    """Law of ``v^N`` for one block with the given fixed rules."""
    N = partition.N
    k, s = partition.message.size, partition.R2.size
    f = partition.E.size + partition.R1.size
    combos = all_bit_vectors(s + k + f)
    _, v = chain_encode(
        spec.source(), partition, rules, combos[:, None, s : s + k], combos[:, None, s + k :], combos[:, :s]
    )
    out = np.zeros(2**N)
    np.add.at(out, _bits_to_int(v[:, 0]), 2.0 ** -(s + k + f))
    return out


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())

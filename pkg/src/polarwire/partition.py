"""Index classification and the partitions built from it.

An index is high-entropy (H) for an observer when its Bhattacharyya value
is at least ``delta_high`` and low-entropy (L) when it is at most
``delta_low``. When the two thresholds meet, an index at the threshold is
counted as L only, so every index lands in exactly one class. Indices in
neither class are unclassified: they are never treated as decodable (not L)
nor as hidden from the eavesdropper (not H), which sends them to R1, R2 or D
and keeps them out of I and B.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .reliability import BitChannelStats

SCHEMA_VERSION = 1
WIRETAP_SETS = ("I", "B", "R1", "R2", "D")


class InfeasiblePartition(ValueError):
    """The chain cannot be closed: fewer I indices than R2 indices."""


@dataclass(frozen=True)
class Flags:
    """Per-observer membership masks produced by :func:`classify`."""

    n: int
    delta_low: float
    delta_high: float
    high: dict[str, np.ndarray]
    low: dict[str, np.ndarray]

    @property
    def N(self) -> int:
        return 1 << self.n

    def unclassified(self, name: str) -> np.ndarray:
        return np.flatnonzero(~(self.high[name] | self.low[name]))

    @classmethod
    def from_masks(cls, n: int, high: dict, low: dict) -> "Flags":
        """Build flags directly from masks (tests, hand-made layouts)."""
        N = 1 << n
        h = {k: np.asarray(v, dtype=bool) for k, v in high.items()}
        lo = {k: np.asarray(v, dtype=bool) for k, v in low.items()}
        for name in set(h) | set(lo):
            h.setdefault(name, np.zeros(N, dtype=bool))
            lo.setdefault(name, np.zeros(N, dtype=bool))
            if h[name].shape != (N,) or lo[name].shape != (N,):
                raise ValueError(f"masks for {name!r} must have length {N}")
            if np.any(h[name] & lo[name]):
                raise ValueError(f"index both high and low for {name!r}")
        return cls(n, float("nan"), float("nan"), h, lo)


def classify(stats: BitChannelStats, delta_low: float = 0.01, delta_high: float = 0.99) -> Flags:
    """Threshold every observer's Z values into H/L/unclassified masks."""
    if not 0 <= delta_low <= delta_high <= 1:
        raise ValueError("need 0 <= delta_low <= delta_high <= 1")
    high, low = {}, {}
    for name, z in stats.z.items():
        low[name] = z <= delta_low
        high[name] = (z >= delta_high) & ~low[name]
    return Flags(stats.n, float(delta_low), float(delta_high), high, low)


def _idx(mask: np.ndarray) -> np.ndarray:
    return np.flatnonzero(mask).astype(np.int64)


def select_E(I: Sequence[int], size: int) -> np.ndarray:
    """The ``size`` smallest indices of ``I``, ascending."""
    I = np.sort(np.asarray(I, dtype=np.int64))
    if size < 0 or size > I.size:
        raise InfeasiblePartition(f"need |I| >= |R2| but |I| = {I.size} < {size}")
    return I[:size]


@dataclass(frozen=True)
class IndexPartition:
    """Disjoint index sets covering ``range(N)`` plus the chaining subset E.

    ``kind`` names the construction. For the baselines some sets are empty
    and ``R1`` holds the single random set of the degraded-case scheme.
    """

    n: int
    I: np.ndarray
    B: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    D: np.ndarray
    E: np.ndarray
    kind: str = "wiretap"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        N = 1 << self.n
        for name in WIRETAP_SETS + ("E",):
            arr = np.sort(np.asarray(getattr(self, name), dtype=np.int64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        allidx = np.concatenate([getattr(self, s) for s in WIRETAP_SETS])
        if allidx.size != N or not np.array_equal(np.sort(allidx), np.arange(N)):
            raise ValueError("sets must partition range(N)")
        if not np.all(np.isin(self.E, self.I)):
            raise ValueError("E must be a subset of I")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def feasible(self) -> bool:
        return self.I.size >= self.R2.size and self.E.size == self.R2.size

    @property
    def message(self) -> np.ndarray:
        """Message-carrying indices ``I \\ E``."""
        return np.setdiff1d(self.I, self.E)

    def sizes(self) -> dict[str, int]:
        return {s: int(getattr(self, s).size) for s in WIRETAP_SETS + ("E",)}

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "kind": self.kind,
            "sets": {s: getattr(self, s).tolist() for s in WIRETAP_SETS + ("E",)},
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IndexPartition":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported partition schema version {obj.get('schema_version')!r}")
        sets = obj["sets"]
        return cls(int(obj["n"]), *(sets[s] for s in WIRETAP_SETS + ("E",)), kind=obj["kind"], meta=obj.get("meta", {}))


def build_wiretap_partition(
    flags: Flags, prior: str = "prior", good: str = "y", bad: str = "z", strict: bool = False
) -> IndexPartition:
    """I = H_V & L_{V|Y} & H_{V|Z}, B = H_V & ~L_{V|Y} & H_{V|Z},
    R1 = H_V & L_{V|Y} & ~H_{V|Z}, R2 = H_V & ~L_{V|Y} & ~H_{V|Z}, D = ~H_V.

    With ``strict`` an infeasible chain (|I| < |R2|) raises; otherwise E is
    left empty and ``feasible`` reports the problem.
    """
    hv, ly, hz = flags.high[prior], flags.low[good], flags.high[bad]
    sets = dict(
        I=_idx(hv & ly & hz),
        B=_idx(hv & ~ly & hz),
        R1=_idx(hv & ly & ~hz),
        R2=_idx(hv & ~ly & ~hz),
        D=_idx(~hv),
    )
    if sets["I"].size >= sets["R2"].size:
        E = select_E(sets["I"], sets["R2"].size)
    elif strict:
        raise InfeasiblePartition(f"|I| = {sets['I'].size} < |R2| = {sets['R2'].size}")
    else:
        E = np.zeros(0, dtype=np.int64)
    meta = {
        "delta_low": flags.delta_low,
        "delta_high": flags.delta_high,
        "observers": [prior, good, bad],
        "unclassified_policy": "not L, not H",
        "unclassified": {k: flags.unclassified(k).tolist() for k in (prior, good, bad)},
    }
    return IndexPartition(flags.n, E=E, kind="wiretap", meta=meta, **sets)


@dataclass(frozen=True)
class HondaYamamotoPartition:
    """F_r = H_X & ~L_{X|Y}, F_d = ~H_X, I = H_X & L_{X|Y}."""

    n: int
    F_r: np.ndarray
    F_d: np.ndarray
    I: np.ndarray


def build_hy_partition(flags: Flags, prior: str = "prior", good: str = "y") -> HondaYamamotoPartition:
    hx, ly = flags.high[prior], flags.low[good]
    return HondaYamamotoPartition(flags.n, _idx(hx & ~ly), _idx(~hx), _idx(hx & ly))


def symmetric_good_set(flags: Flags, good: str = "y") -> np.ndarray:
    """Good indices of a symmetric channel with uniform input: L_{X|Y}."""
    return _idx(flags.low[good])


def build_baseline_partition(kind: str, flags: Flags, good: str = "y", bad: str = "z") -> IndexPartition:
    """The two degraded-case baselines, mapped onto the five-set layout.

    ``mahdavifar``: R = L_{X|Z} (stored in R1), I = L_{X|Y} minus R,
    B = ~L_{X|Y}. ``sasoglu``: I~ = L & H_Z, B~ = ~L & H_Z,
    R1~ = L & ~H_Z, R2~ = ~L & ~H_Z, with E~ the |R2~| smallest of I~.
    Uniform input is assumed, so D is empty.
    """
    ly, lz, hz = flags.low[good], flags.low[bad], flags.high[bad]
    if kind == "mahdavifar":
        sets = dict(I=_idx(ly & ~lz), B=_idx(~ly), R1=_idx(lz), R2=_idx(np.zeros_like(ly)), D=_idx(np.zeros_like(ly)))
        # R = L_{X|Z} may stick out of L_{X|Y} for non-degraded pairs; keep it
        # random rather than frozen so the sets stay disjoint
        sets["B"] = np.setdiff1d(sets["B"], sets["R1"])
        E = np.zeros(0, dtype=np.int64)
    elif kind == "sasoglu":
        sets = dict(I=_idx(ly & hz), B=_idx(~ly & hz), R1=_idx(ly & ~hz), R2=_idx(~ly & ~hz), D=_idx(np.zeros_like(ly)))
        E = select_E(sets["I"], sets["R2"].size) if sets["I"].size >= sets["R2"].size else np.zeros(0, dtype=np.int64)
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    return IndexPartition(flags.n, E=E, kind=kind, meta={"observers": [good, bad]}, **sets)


@dataclass(frozen=True)
class BccCommonPartition:
    """Common-layer (Q-domain) sets.

    ``D1``/``D2`` are the exclusive decodable sets of the forward and
    backward receivers *after* orientation: the forward receiver is Receiver
    1 unless ``swapped``. ``E2`` holds the |D1| smallest indices of D2.
    ``rule`` covers everything else (deterministic, shared with both).
    """

    n: int
    I_u: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    E2: np.ndarray
    rule: np.ndarray
    swapped: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("I_u", "D1", "D2", "E2", "rule"):
            arr = np.sort(np.asarray(getattr(self, name), dtype=np.int64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        cover = np.concatenate([self.I_u, self.D1, self.D2, self.rule])
        if cover.size != self.N or not np.array_equal(np.sort(cover), np.arange(self.N)):
            raise ValueError("common sets must partition range(N)")
        if self.E2.size != self.D1.size or not np.all(np.isin(self.E2, self.D2)):
            raise ValueError("E2 must be a subset of D2 with |E2| = |D1|")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def forward(self) -> str:
        """Observer of the receiver that decodes blocks in forward order."""
        return "z" if self.swapped else "y"

    @property
    def backward(self) -> str:
        return "y" if self.swapped else "z"

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "kind": "bcc_common",
            "swapped": self.swapped,
            "sets": {k: getattr(self, k).tolist() for k in ("I_u", "D1", "D2", "E2", "rule")},
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BccCommonPartition":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported partition schema version {obj.get('schema_version')!r}")
        s = obj["sets"]
        return cls(int(obj["n"]), s["I_u"], s["D1"], s["D2"], s["E2"], s["rule"], bool(obj["swapped"]), obj.get("meta", {}))


def build_bcc_common_partition(flags_u: Flags, swap: bool | None = None) -> BccCommonPartition:
    """I_u = I1 & I2 with I_k = H_U & L_{U|obs_k}; D1 = I1 \\ I2, D2 = I2 \\ I1.

    ``swap=None`` orients automatically so that the backward receiver's
    exclusive set is the larger one.
    """
    hu = flags_u.high["prior"]
    i1, i2 = hu & flags_u.low["y"], hu & flags_u.low["z"]
    d1, d2 = i1 & ~i2, i2 & ~i1
    if swap is None:
        swap = int(d2.sum()) < int(d1.sum())
    if swap:
        d1, d2 = d2, d1
    if d2.sum() < d1.sum():
        raise InfeasiblePartition(f"|D2| = {int(d2.sum())} < |D1| = {int(d1.sum())} in the chosen orientation")
    I_u = i1 & i2
    rule = ~(I_u | d1 | d2)
    D2 = _idx(d2)
    meta = {
        "I_u1": _idx(i1).tolist(),
        "I_u2": _idx(i2).tolist(),
        "delta_low": flags_u.delta_low,
        "delta_high": flags_u.delta_high,
    }
    return BccCommonPartition(flags_u.n, _idx(I_u), _idx(d1), D2, D2[: int(d1.sum())], _idx(rule), bool(swap), meta)


def build_bcc_partitions(
    flags_u: Flags, flags_v_given_u: Flags, swap: bool | None = None
) -> tuple[BccCommonPartition, IndexPartition]:
    """Common (U-layer) partition and the U-conditioned secret partition."""
    common = build_bcc_common_partition(flags_u, swap)
    secret = build_wiretap_partition(flags_v_given_u, prior="u", good="uy", bad="uz")
    secret = IndexPartition(
        secret.n, secret.I, secret.B, secret.R1, secret.R2, secret.D, secret.E, kind="bcc_secret", meta=secret.meta
    )
    return common, secret


def save_partition(partition: IndexPartition | BccCommonPartition | Sequence, path: str | Path) -> None:
    """Write one partition, or a list of them, as ``partition.json``."""
    if isinstance(partition, (list, tuple)):
        obj = {"schema_version": SCHEMA_VERSION, "partitions": [p.to_json() for p in partition]}
    else:
        obj = partition.to_json()
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_partition(path: str | Path):
    obj = json.loads(Path(path).read_text())
    if "partitions" in obj:
        return [_from_json(p) for p in obj["partitions"]]
    return _from_json(obj)


def _from_json(obj: dict):
    if obj.get("kind") == "bcc_common":
        return BccCommonPartition.from_json(obj)
    return IndexPartition.from_json(obj)

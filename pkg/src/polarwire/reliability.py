"""Per-index Bhattacharyya and conditional-entropy statistics.

Three estimators share one result type:

* :func:`exact_bit_stats` synthesises the joint law of every bit channel
  level by level (minus/plus combining), merging output symbols with equal
  posteriors, which is lossless for Z and H.
* :func:`mc_bit_stats` samples blocks and runs the posterior recursion along
  the true path.
* :func:`bec_bit_stats` is the closed-form erasure recursion.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .channels import BccSpec, ConstructionParams, JointSource, WiretapSpec, binary_entropy, channel_family
from .polar import bhattacharyya, polar_transform, sc_recursion

SCHEMA_VERSION = 1
DEFAULT_CAP = 1 << 20
MC_BATCH_CELLS = 1 << 17
WIRETAP_ROLES = ("prior", "y", "z")
SECRET_ROLES = ("u", "uy", "uz")


class CapExceeded(ValueError):
    """Exact synthesis would exceed the alphabet cap; use mc_bit_stats."""


@dataclass
class BitChannelStats:
    """Per-index statistics for each observer of a block.

    ``z[name][i]`` estimates ``Z(T_i | T^{i-1}, obs^N)`` and ``h[name][i]``
    the matching conditional entropy in bits. ``z_se``/``h_se`` are Monte
    Carlo standard errors (zero for exact methods).
    """

    n: int
    method: str
    z: dict[str, np.ndarray]
    h: dict[str, np.ndarray]
    z_se: dict[str, np.ndarray] = field(default_factory=dict)
    h_se: dict[str, np.ndarray] = field(default_factory=dict)
    sample_count: int = 0

    def __post_init__(self) -> None:
        for name in self.z:
            self.z_se.setdefault(name, np.zeros(self.N))
            self.h_se.setdefault(name, np.zeros(self.N))

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def observers(self) -> list[str]:
        return list(self.z)

    def records(self, roles: Sequence[str] = WIRETAP_ROLES) -> list[dict]:
        out = []
        for i in range(self.N):
            rec = {"index": i, "method": self.method, "sample_count": self.sample_count}
            for name in roles:
                rec[f"z_{name}"] = float(self.z[name][i])
                rec[f"h_{name}"] = float(self.h[name][i])
            out.append(rec)
        return out

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "method": self.method,
            "sample_count": self.sample_count,
            "observers": {
                name: {
                    "z": self.z[name].tolist(),
                    "h": self.h[name].tolist(),
                    "z_se": self.z_se[name].tolist(),
                    "h_se": self.h_se[name].tolist(),
                }
                for name in self.z
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BitChannelStats":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported stats schema version {obj.get('schema_version')!r}")
        obs = obj["observers"]
        return cls(
            n=int(obj["n"]),
            method=obj["method"],
            z={k: np.asarray(v["z"], dtype=float) for k, v in obs.items()},
            h={k: np.asarray(v["h"], dtype=float) for k, v in obs.items()},
            z_se={k: np.asarray(v["z_se"], dtype=float) for k, v in obs.items()},
            h_se={k: np.asarray(v["h_se"], dtype=float) for k, v in obs.items()},
            sample_count=int(obj.get("sample_count", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "BitChannelStats":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_csv(self, roles: Sequence[str] = WIRETAP_ROLES) -> str:
        """CSV with columns ``index,z_prior,z_y,z_z,h_prior,h_y,h_z,method,stderr``.

        ``roles`` names the observers placed in the prior/y/z columns;
        ``stderr`` is the largest Z standard error of the three.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "z_prior", "z_y", "z_z", "h_prior", "h_y", "h_z", "method", "stderr"])
        for i in range(self.N):
            se = max(float(self.z_se[r][i]) for r in roles)
            writer.writerow(
                [i]
                + [repr(float(self.z[r][i])) for r in roles]
                + [repr(float(self.h[r][i])) for r in roles]
                + [self.method, repr(se)]
            )
        return buf.getvalue()


def _merge_columns(table: np.ndarray) -> np.ndarray:
    """Merge output symbols with identical posteriors and drop null ones."""
    mass = table.sum(axis=0)
    keep = mass > 0
    table, mass = table[:, keep], mass[keep]
    key = np.round(table[1] / mass, 13)
    uniq, inverse = np.unique(key, return_inverse=True)
    out = np.zeros((2, uniq.size))
    np.add.at(out, (slice(None), inverse), table)
    return out


def _minus(t: np.ndarray) -> np.ndarray:
    t0, t1 = t
    return np.stack([np.outer(t0, t0) + np.outer(t1, t1), np.outer(t1, t0) + np.outer(t0, t1)]).reshape(2, -1)


def _plus(t: np.ndarray) -> np.ndarray:
    t0, t1 = t
    # output is (o1, o2, t1); entry [t2] uses T[t1 ^ t2, o1] T[t2, o2]
    p0 = np.stack([np.outer(t0, t0), np.outer(t1, t0)], axis=-1)
    p1 = np.stack([np.outer(t1, t1), np.outer(t0, t1)], axis=-1)
    return np.stack([p0, p1]).reshape(2, -1)


def _z_and_h(table: np.ndarray) -> tuple[float, float]:
    mass = table.sum(axis=0)
    z = float(np.sum(2.0 * np.sqrt(table[0] * table[1])))
    with np.errstate(divide="ignore", invalid="ignore"):
        post1 = np.where(mass > 0, table[1] / mass, 0.0)
    h = float(np.sum(mass * binary_entropy(post1)))
    return min(max(z, 0.0), 1.0), min(max(h, 0.0), 1.0)


def synthesize_bit_channels(table: np.ndarray, n: int, cap: int = DEFAULT_CAP) -> list[np.ndarray]:
    """Joint tables ``P(t_i, obs^N, t^{i-1})`` (symbol-merged) for all ``i``."""
    chans = [_merge_columns(np.asarray(table, dtype=float))]
    for _ in range(n):
        nxt = []
        for c in chans:
            if 2 * c.shape[1] ** 2 > cap:
                raise CapExceeded(
                    f"bit-channel alphabet {2 * c.shape[1] ** 2} exceeds cap {cap}; use mc_bit_stats"
                )
            nxt.append(_merge_columns(_minus(c)))
            nxt.append(_merge_columns(_plus(c)))
        chans = nxt
    return chans


def exact_bit_stats(
    source: JointSource | WiretapSpec,
    params: ConstructionParams | int,
    alphabet_cap: int = DEFAULT_CAP,
    observers: Iterable[str] | None = None,
) -> BitChannelStats:
    """Exact Z and H for every index and observer."""
    source = _as_source(source)
    n = params.n if isinstance(params, ConstructionParams) else int(params)
    names = list(observers) if observers is not None else list(source.observers)
    z, h = {}, {}
    for name in names:
        chans = synthesize_bit_channels(source.table(name), n, alphabet_cap)
        zh = np.array([_z_and_h(c) for c in chans])
        z[name], h[name] = zh[:, 0], zh[:, 1]
    return BitChannelStats(n=n, method="exact", z=z, h=h)


def _as_source(source) -> JointSource:
    if isinstance(source, WiretapSpec):
        return source.source()
    if isinstance(source, JointSource):
        return source
    raise TypeError(f"expected a JointSource or WiretapSpec, got {type(source).__name__}")


def mc_batch_size(N: int) -> int:
    """Samples per PRNG stream; a fixed function of N so runs reproduce."""
    return max(1, MC_BATCH_CELLS // N)


def mc_bit_stats(
    source: JointSource | WiretapSpec,
    params: ConstructionParams | int,
    samples: int,
    seed: int,
    observers: Iterable[str] | None = None,
) -> BitChannelStats:
    """Monte Carlo Z and H along sampled true paths.

    Samples are drawn in batches of :func:`mc_batch_size`; batch ``b`` uses
    the stream ``(seed, "mc-stats", N, b)``, so the estimate depends only on
    ``(source, N, samples, seed)``. Standard errors are floored at
    ``1 / samples``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    source = _as_source(source)
    n = params.n if isinstance(params, ConstructionParams) else int(params)
    N = 1 << n
    names = list(observers) if observers is not None else list(source.observers)
    tables = []
    for name in names:
        tab = source.table(name)
        mass = tab.sum(axis=0)
        tables.append(np.divide(tab, mass, out=np.full_like(tab, 0.5), where=mass > 0).T)
    K = len(names)
    sums = np.zeros((4, K, N))
    batch = mc_batch_size(N)
    for b, start in enumerate(range(0, samples, batch)):
        size = min(batch, samples - start)
        gen = rngmod.stream(seed, "mc-stats", N, b)
        s, obs = source.sample(gen, (size, N))
        t = polar_transform(s)
        leaves = np.stack([tables[k][obs[name]] for k, name in enumerate(names)])
        zs = np.zeros((K, size, N))
        hs = np.zeros((K, size, N))

        def decide(i: int, post: np.ndarray) -> np.ndarray:
            zs[:, :, i] = bhattacharyya(post)
            hs[:, :, i] = binary_entropy(post[..., 1])
            return t[:, i]

        sc_recursion(leaves, decide)
        sums[0] += zs.sum(axis=1)
        sums[1] += (zs**2).sum(axis=1)
        sums[2] += hs.sum(axis=1)
        sums[3] += (hs**2).sum(axis=1)
    mean_z, mean_h = sums[0] / samples, sums[2] / samples
    denom = max(samples - 1, 1)
    var_z = np.clip(sums[1] / samples - mean_z**2, 0, None) * samples / denom
    var_h = np.clip(sums[3] / samples - mean_h**2, 0, None) * samples / denom
    # floor at the one-event resolution: an index whose rare event never
    # occurred in the sample would otherwise report a zero standard error
    floor = 1.0 / samples
    se_z = np.maximum(np.sqrt(var_z / samples), floor)
    se_h = np.maximum(np.sqrt(var_h / samples), floor)
    return BitChannelStats(
        n=n,
        method="montecarlo",
        z={name: np.clip(mean_z[k], 0, 1) for k, name in enumerate(names)},
        h={name: np.clip(mean_h[k], 0, 1) for k, name in enumerate(names)},
        z_se={name: se_z[k] for k, name in enumerate(names)},
        h_se={name: se_h[k] for k, name in enumerate(names)},
        sample_count=samples,
    )


def bec_bit_stats(eps: float, n: int) -> np.ndarray:
    """Z of every bit channel of BEC(eps) with uniform input (exact)."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    z = np.array([float(eps)])
    for _ in range(n):
        nz = np.empty(2 * z.size)
        nz[0::2] = 2 * z - z * z
        nz[1::2] = z * z
        z = nz
    return z


def bec_wiretap_applicable(spec: WiretapSpec) -> bool:
    """Uniform V sent directly over two BECs."""
    f1, f2 = channel_family(spec.w1), channel_family(spec.w2)
    return (
        spec.p_v == 0.5
        and np.array_equal(spec.p_x_given_v, np.eye(2))
        and f1 is not None
        and f2 is not None
        and f1[0] == f2[0] == "bec"
    )


def bec_wiretap_stats(spec: WiretapSpec, n: int) -> BitChannelStats:
    """Closed-form stats for uniform V over BECs; H equals Z for erasures."""
    if not bec_wiretap_applicable(spec):
        raise ValueError("closed form needs uniform V, X = V and BEC channels")
    N = 1 << n
    zy = bec_bit_stats(channel_family(spec.w1)[1], n)
    zz = bec_bit_stats(channel_family(spec.w2)[1], n)
    ones = np.ones(N)
    return BitChannelStats(
        n=n,
        method="bec_closed_form",
        z={"prior": ones, "y": zy, "z": zz},
        h={"prior": ones.copy(), "y": zy.copy(), "z": zz.copy()},
    )


def compute_stats(
    source: JointSource | WiretapSpec,
    n: int,
    method: str = "auto",
    samples: int = 20000,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> BitChannelStats:
    """Dispatch: closed form, exact synthesis, or Monte Carlo.

    ``auto`` prefers the closed form, then exact synthesis, and falls back to
    Monte Carlo when the cap is exceeded.
    """
    if method in ("auto", "bec_closed_form") and isinstance(source, WiretapSpec) and bec_wiretap_applicable(source):
        return bec_wiretap_stats(source, n)
    if method == "bec_closed_form":
        raise ValueError("closed form not applicable to this spec")
    if method in ("auto", "exact"):
        try:
            return exact_bit_stats(source, n, cap)
        except CapExceeded:
            if method == "exact":
                raise
    if method in ("auto", "montecarlo"):
        return mc_bit_stats(source, n, samples, seed)
    raise ValueError(f"unknown stats method {method!r}")


def bcc_stats(
    spec: BccSpec, n: int, method: str = "auto", samples: int = 20000, seed: int = 0, cap: int = DEFAULT_CAP
) -> tuple[BitChannelStats, BitChannelStats]:
    """Stats for the common (U) layer and the U-conditioned secret (V) layer."""
    common = compute_stats(spec.common_source(), n, method, samples, rngmod.derive_seed(seed, "stats-common"), cap)
    secret = compute_stats(spec.secret_source(), n, method, samples, rngmod.derive_seed(seed, "stats-secret"), cap)
    return common, secret

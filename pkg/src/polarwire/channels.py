"""Binary-input channels, joint source specifications and closed-form
information quantities.

All probabilities are kept in the linear domain and every information
quantity is in bits.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

ROW_TOL = 1e-12
ERASURE = 2
DEFAULT_SYMMETRY_CAP = 10


class ChannelError(ValueError):
    """Invalid channel or distribution parameters."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_stochastic(table: np.ndarray, what: str) -> None:
    if table.ndim != 2 or table.shape[0] != 2 or table.shape[1] < 1:
        raise ChannelError(f"{what}: expected a 2 x k table, got shape {table.shape}")
    if not np.all(np.isfinite(table)) or np.any(table < 0) or np.any(table > 1):
        raise ChannelError(f"{what}: entries must lie in [0, 1]")
    if np.any(np.abs(table.sum(axis=1) - 1.0) > ROW_TOL):
        raise ChannelError(f"{what}: rows must sum to 1 (tolerance {ROW_TOL})")


def _check_probability(p: float, what: str) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"{what} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class Dmc:
    """Binary-input DMC given by its likelihood table ``W(y|x)``.

    ``likelihood[x, y]`` is the probability of output ``y`` given input ``x``.
    ``kind``/``param`` only record how the channel was built (for JSON);
    the table is the single source of truth.
    """

    likelihood: np.ndarray
    kind: str = "table"
    param: float | None = None

    def __post_init__(self) -> None:
        table = _frozen(self.likelihood)
        _check_stochastic(table, "likelihood")
        object.__setattr__(self, "likelihood", table)

    input_size = 2

    @property
    def output_size(self) -> int:
        return self.likelihood.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dmc):
            return NotImplemented
        return self.likelihood.shape == other.likelihood.shape and bool(
            np.array_equal(self.likelihood, other.likelihood)
        )

    def __hash__(self) -> int:
        return hash(self.likelihood.tobytes())

    def to_json(self) -> dict[str, Any]:
        if self.kind == "bsc":
            return {"kind": "bsc", "p": self.param}
        if self.kind == "bec":
            return {"kind": "bec", "eps": self.param}
        return {"kind": "table", "rows": self.likelihood.tolist()}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Dmc":
        kind = obj.get("kind")
        if kind == "bsc":
            return standard_channel("bsc", obj["p"])
        if kind == "bec":
            return standard_channel("bec", obj["eps"])
        if kind == "table":
            return cls(np.asarray(obj["rows"], dtype=float))
        raise ChannelError(f"unknown channel kind {kind!r}")


def standard_channel(kind: str, param: float) -> Dmc:
    """BSC(p) with two outputs, or BEC(eps) with the erasure at output 2."""
    kind = kind.lower()
    param = _check_probability(param, f"{kind} parameter")
    if kind == "bsc":
        return Dmc(np.array([[1 - param, param], [param, 1 - param]]), "bsc", param)
    if kind == "bec":
        return Dmc(np.array([[1 - param, 0.0, param], [0.0, 1 - param, param]]), "bec", param)
    raise ChannelError(f"unknown channel family {kind!r}")


def bsc(p: float) -> Dmc:
    return standard_channel("bsc", p)


def bec(eps: float) -> Dmc:
    return standard_channel("bec", eps)


def conditional_table(rows: Any, what: str = "conditional") -> np.ndarray:
    table = _frozen(np.asarray(rows, dtype=float))
    if table.shape != (2, 2):
        raise ChannelError(f"{what}: expected a 2 x 2 table, got shape {table.shape}")
    _check_stochastic(table, what)
    return table


def bsc_table(p: float) -> np.ndarray:
    """``[[1-p, p], [p, 1-p]]``, the usual test-channel conditional."""
    return conditional_table([[1 - p, p], [p, 1 - p]])


def compose_effective_channel(p_x_given_v: Any, w: Dmc) -> Dmc:
    """The channel ``P(y|v) = sum_x P(x|v) W(y|x)``."""
    pxv = conditional_table(p_x_given_v, "p_x_given_v")
    out = pxv @ w.likelihood
    # re-normalise away the rounding of the matrix product
    out = out / out.sum(axis=1, keepdims=True)
    return Dmc(out)


def binary_entropy(p: float | np.ndarray) -> float | np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    h = np.where((p <= 0) | (p >= 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def _input_distribution(input_dist: Any) -> np.ndarray:
    px = np.atleast_1d(np.asarray(input_dist, dtype=float))
    if px.shape == (1,):
        p1 = _check_probability(px[0], "P(X=1)")
        px = np.array([1 - p1, p1])
    if px.shape != (2,) or np.any(px < 0) or abs(px.sum() - 1) > ROW_TOL:
        raise ChannelError("input distribution must be a distribution on {0, 1}")
    return px


def joint_mutual_information(joint: np.ndarray) -> float:
    """I(S;O) in bits from a joint table ``joint[s, o]``."""
    joint = np.asarray(joint, dtype=float)
    ps = joint.sum(axis=1, keepdims=True)
    po = joint.sum(axis=0, keepdims=True)
    denom = ps * po
    mask = joint > 0
    mi = float(np.sum(joint[mask] * np.log2(joint[mask] / denom[mask])))
    return max(mi, 0.0)


def mutual_information(input_dist: Any, dmc: Dmc) -> float:
    """I(X;Y) for the given input law (a pair, or P(X=1)) over ``dmc``."""
    px = _input_distribution(input_dist)
    return min(joint_mutual_information(px[:, None] * dmc.likelihood), 1.0)


def channel_family(dmc: Dmc) -> tuple[str, float] | None:
    """Recognise a BSC or BEC from the table; ``None`` for anything else."""
    w = dmc.likelihood
    if dmc.output_size == 2 and abs(w[0, 0] - w[1, 1]) <= ROW_TOL and abs(w[0, 1] - w[1, 0]) <= ROW_TOL:
        return "bsc", float(w[0, 1])
    if (
        dmc.output_size == 3
        and w[0, 1] <= ROW_TOL
        and w[1, 0] <= ROW_TOL
        and abs(w[0, 2] - w[1, 2]) <= ROW_TOL
    ):
        return "bec", float(w[0, 2])
    return None


def is_degraded_analytic(w1: Dmc, w2: Dmc) -> bool | None:
    """Whether ``w2`` is degraded with respect to ``w1``.

    Only BSC/BSC and BEC/BEC pairs are decided, using the closed-form
    conditions; every other pair returns ``None`` (unknown).
    """
    f1, f2 = channel_family(w1), channel_family(w2)
    if f1 is None or f2 is None or f1[0] != f2[0]:
        return None
    (family, a), (_, b) = f1, f2
    if family == "bec":
        return b >= a - ROW_TOL
    # BSC(q) with q > 1/2 is BSC(1-q) followed by a relabelling
    return min(b, 1 - b) >= min(a, 1 - a) - ROW_TOL


def degraded_secrecy_capacity(w1: Dmc, w2: Dmc, family: str) -> float:
    """``C(W1) - C(W2)`` for an analytically degraded BSC or BEC pair."""
    family = family.lower()
    f1, f2 = channel_family(w1), channel_family(w2)
    if f1 is None or f2 is None or f1[0] != family or f2[0] != family:
        raise ChannelError(f"both channels must be {family.upper()}s")
    if not is_degraded_analytic(w1, w2):
        raise ChannelError("W2 is not degraded with respect to W1")
    # both families are symmetric, so capacity is the uniform-input MI
    if family == "bec":
        return max((1 - f1[1]) - (1 - f2[1]), 0.0)
    return max(float(binary_entropy(f2[1]) - binary_entropy(f1[1])), 0.0)


def _involutions(candidates: list[list[int]], k: int) -> Iterator[list[int]]:
    perm = [-1] * k

    def rec(y: int) -> Iterator[list[int]]:
        while y < k and perm[y] != -1:
            y += 1
        if y == k:
            yield list(perm)
            return
        for z in candidates[y]:
            if perm[z] != -1 or z < y:
                continue
            perm[y], perm[z] = z, y
            yield from rec(y + 1)
            perm[y] = perm[z] = -1

    yield from rec(0)


def check_symmetry(dmc: Dmc, cap: int = DEFAULT_SYMMETRY_CAP) -> tuple[int, ...] | None:
    """Find an involution ``pi`` of the outputs with ``W(pi(y)|1) = W(y|0)``.

    The search is exhaustive over involutions (fixed points tried first);
    returns ``None`` when none exists.
    """
    k = dmc.output_size
    if k > cap:
        raise ChannelError(f"output alphabet {k} exceeds symmetry-search cap {cap}")
    w = dmc.likelihood
    # y may map to z only if both directions of the swap are consistent
    candidates = [
        [z for z in range(k) if abs(w[1, z] - w[0, y]) <= ROW_TOL and abs(w[1, y] - w[0, z]) <= ROW_TOL]
        for y in range(k)
    ]
    for y in range(k):
        candidates[y].sort(key=lambda z: (z != y, z))
    for perm in _involutions(candidates, k):
        return tuple(perm)
    return None


@dataclass(frozen=True)
class JointSource:
    """An i.i.d. binary source jointly distributed with hidden outcomes.

    ``joint[s, k]`` is the probability of source bit ``s`` and hidden outcome
    ``k``. Each observer sees ``obs_map[k]``, an index into its own output
    alphabet. Positions of a block are i.i.d. copies of this law.
    """

    joint: np.ndarray
    observers: dict[str, tuple[np.ndarray, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        joint = _frozen(self.joint)
        if joint.ndim != 2 or joint.shape[0] != 2 or abs(joint.sum() - 1) > 1e-9 or np.any(joint < 0):
            raise ChannelError("joint source table must be a 2 x K distribution")
        object.__setattr__(self, "joint", joint)
        obs = {}
        for name, (mapping, size) in self.observers.items():
            mapping = np.asarray(mapping, dtype=np.int64)
            mapping.setflags(write=False)
            if mapping.shape != (joint.shape[1],) or mapping.min() < 0 or mapping.max() >= size:
                raise ChannelError(f"observer {name!r}: bad outcome map")
            obs[name] = (mapping, int(size))
        obs.setdefault("prior", (np.zeros(joint.shape[1], dtype=np.int64), 1))
        object.__setattr__(self, "observers", obs)

    @property
    def p1(self) -> float:
        return float(self.joint[1].sum())

    def table(self, name: str) -> np.ndarray:
        """Joint table ``P(s, o)`` for one observer."""
        mapping, size = self.observers[name]
        out = np.zeros((2, size))
        np.add.at(out, (slice(None), mapping), self.joint)
        return out

    def information(self, name: str) -> float:
        return joint_mutual_information(self.table(name))

    def sample(self, rng: np.random.Generator, shape: int | tuple[int, ...]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        flat = self.joint.ravel()
        cdf = np.cumsum(flat)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(shape), side="right")
        idx = np.minimum(idx, flat.size - 1)
        s, k = np.divmod(idx, self.joint.shape[1])
        return s.astype(np.uint8), {name: m[k] for name, (m, _) in self.observers.items()}


def _xyz_kernel(p_x_given_v: np.ndarray, w1: Dmc, w2: Dmc) -> np.ndarray:
    """``K[v, y, z] = sum_x P(x|v) W1(y|x) W2(z|x)``."""
    return np.einsum("vx,xy,xz->vyz", p_x_given_v, w1.likelihood, w2.likelihood)


@dataclass(frozen=True)
class WiretapSpec:
    """Joint law of ``V -> X -> (Y, Z)`` with binary V and X."""

    p_v: float
    p_x_given_v: np.ndarray
    w1: Dmc
    w2: Dmc

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_v", _check_probability(self.p_v, "p_v"))
        object.__setattr__(self, "p_x_given_v", conditional_table(self.p_x_given_v, "p_x_given_v"))

    def source(self) -> JointSource:
        ny, nz = self.w1.output_size, self.w2.output_size
        pv = np.array([1 - self.p_v, self.p_v])
        joint = (pv[:, None, None] * _xyz_kernel(self.p_x_given_v, self.w1, self.w2)).reshape(2, ny * nz)
        k = np.arange(ny * nz)
        return JointSource(joint, {"y": (k // nz, ny), "z": (k % nz, nz)})

    def secrecy_target(self) -> float:
        """``I(V;Y) - I(V;Z)`` for this (not necessarily optimal) V."""
        src = self.source()
        return src.information("y") - src.information("z")

    def to_json(self) -> dict[str, Any]:
        return {
            "type": "wiretap",
            "p_v": self.p_v,
            "p_x_given_v": self.p_x_given_v.tolist(),
            "w1": self.w1.to_json(),
            "w2": self.w2.to_json(),
        }

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self) -> int:
        return hash(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "WiretapSpec":
        return cls(
            obj["p_v"],
            obj.get("p_x_given_v", [[1.0, 0.0], [0.0, 1.0]]),
            Dmc.from_json(obj["w1"]),
            Dmc.from_json(obj["w2"]),
        )


@dataclass(frozen=True)
class BccSpec:
    """Joint law of ``U -> V -> X -> (Y, Z)`` with binary U, V, X."""

    p_u: float
    p_v_given_u: np.ndarray
    p_x_given_v: np.ndarray
    w1: Dmc
    w2: Dmc

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_u", _check_probability(self.p_u, "p_u"))
        object.__setattr__(self, "p_v_given_u", conditional_table(self.p_v_given_u, "p_v_given_u"))
        object.__setattr__(self, "p_x_given_v", conditional_table(self.p_x_given_v, "p_x_given_v"))

    def common_source(self) -> JointSource:
        """U as the source, observed through the composed channels."""
        ny, nz = self.w1.output_size, self.w2.output_size
        pu = np.array([1 - self.p_u, self.p_u])
        kern = np.einsum("uv,vyz->uyz", self.p_v_given_u, _xyz_kernel(self.p_x_given_v, self.w1, self.w2))
        joint = (pu[:, None, None] * kern).reshape(2, ny * nz)
        k = np.arange(ny * nz)
        return JointSource(joint, {"y": (k // nz, ny), "z": (k % nz, nz)})

    def secret_source(self) -> JointSource:
        """V as the source with U revealed to every observer.

        Observers: ``u`` (U alone), ``uy`` (U and Y), ``uz`` (U and Z).
        """
        ny, nz = self.w1.output_size, self.w2.output_size
        pu = np.array([1 - self.p_u, self.p_u])
        kern = _xyz_kernel(self.p_x_given_v, self.w1, self.w2)
        # joint[v, u, y, z]
        joint = np.einsum("u,uv,vyz->vuyz", pu, self.p_v_given_u, kern).reshape(2, 2 * ny * nz)
        k = np.arange(2 * ny * nz)
        u, rest = np.divmod(k, ny * nz)
        y, z = np.divmod(rest, nz)
        return JointSource(
            joint,
            {"u": (u, 2), "uy": (u * ny + y, 2 * ny), "uz": (u * nz + z, 2 * nz)},
        )

    def wiretap_given_u(self, u: int) -> WiretapSpec:
        """The wiretap spec seen by the secret layer when U is fixed to ``u``."""
        return WiretapSpec(self.p_v_given_u[u, 1], self.p_x_given_v, self.w1, self.w2)

    def targets(self) -> dict[str, float]:
        common, secret = self.common_source(), self.secret_source()
        i_uy, i_uz = common.information("y"), common.information("z")
        i_vu = secret.information("u")
        i_vy_u = secret.information("uy") - i_vu
        i_vz_u = secret.information("uz") - i_vu
        return {
            "I(U;Y)": i_uy,
            "I(U;Z)": i_uz,
            "I(V;Y|U)": i_vy_u,
            "I(V;Z|U)": i_vz_u,
            "R0_max": min(i_uy, i_uz),
            "Rs_max": i_vy_u - i_vz_u,
            "R_total_max": i_vy_u + min(i_uy, i_uz),
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "type": "bcc",
            "p_u": self.p_u,
            "p_v_given_u": self.p_v_given_u.tolist(),
            "p_x_given_v": self.p_x_given_v.tolist(),
            "w1": self.w1.to_json(),
            "w2": self.w2.to_json(),
        }

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self) -> int:
        return hash(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "BccSpec":
        return cls(
            obj["p_u"],
            obj["p_v_given_u"],
            obj.get("p_x_given_v", [[1.0, 0.0], [0.0, 1.0]]),
            Dmc.from_json(obj["w1"]),
            Dmc.from_json(obj["w2"]),
        )


def spec_from_json(obj: dict[str, Any]) -> WiretapSpec | BccSpec:
    kind = obj.get("type")
    if kind == "wiretap":
        return WiretapSpec.from_json(obj)
    if kind == "bcc":
        return BccSpec.from_json(obj)
    raise ChannelError(f"unknown spec type {kind!r}")


@dataclass(frozen=True)
class ConstructionParams:
    """Block length, classification thresholds, cluster size and seed.

    An index is high-entropy when its Bhattacharyya value is at least
    ``delta_high`` and low-entropy when it is at most ``delta_low``.
    """

    n: int
    beta: float = 0.25
    delta_low: float = 0.01
    delta_high: float = 0.99
    m: int = 1
    master_seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 0:
            raise ChannelError("n must be a non-negative integer")
        if not 0 < self.beta < 0.5:
            raise ChannelError("beta must lie in (0, 1/2)")
        if not 0 < self.delta_low <= self.delta_high < 1:
            raise ChannelError("need 0 < delta_low <= delta_high < 1")
        if self.m < 1:
            raise ChannelError("m must be at least 1")
        if not 0 <= self.master_seed < 1 << 64:
            raise ChannelError("master_seed must be a 64-bit unsigned integer")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def delta_n(self) -> float:
        """The asymptotic threshold ``2^(-N^beta)`` (informational only)."""
        return float(2.0 ** (-(self.N**self.beta)))

    def to_json(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "beta": self.beta,
            "delta_low": self.delta_low,
            "delta_high": self.delta_high,
            "m": self.m,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ConstructionParams":
        return cls(**obj)


def all_bit_vectors(k: int) -> np.ndarray:
    """All ``2^k`` binary vectors of length ``k``, lexicographic, MSB first."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.uint8)


__all__: Sequence[str] = [
    "ChannelError",
    "Dmc",
    "standard_channel",
    "bsc",
    "bec",
    "bsc_table",
    "compose_effective_channel",
    "binary_entropy",
    "joint_mutual_information",
    "mutual_information",
    "channel_family",
    "is_degraded_analytic",
    "degraded_secrecy_capacity",
    "check_symmetry",
    "JointSource",
    "WiretapSpec",
    "BccSpec",
    "spec_from_json",
    "ConstructionParams",
    "all_bit_vectors",
]

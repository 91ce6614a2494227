"""Polarizing transform and successive-cancellation posterior recursion.

Index conventions (0-based): ``v = t G_N`` with ``G_N = B_N F^{(x)n}``, so
``t = v G_N`` as well. Bit ``t_i`` is decided in natural order
``i = 0, ..., N-1``. The nonuniform source prior enters only at the leaves.

The recursion is batched: leaf beliefs have shape ``(K, B, N, 2)`` for ``K``
trees that share every decision (e.g. a prior-only tree used by the
deterministic rules and an observation tree used for MAP decisions) and
``B`` independent blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, NamedTuple

import numpy as np

from . import rng as rngmod


class PolarError(ValueError):
    pass


class BeliefPair(NamedTuple):
    p0: float
    p1: float

    @property
    def argmax(self) -> int:
        # ties go to 0
        return int(self.p1 > self.p0)


def _log2_length(length: int) -> int:
    if length < 1 or length & (length - 1):
        raise PolarError(f"length {length} is not a power of two")
    return length.bit_length() - 1


def bit_reversal(n: int) -> np.ndarray:
    """Permutation of ``range(2**n)`` reversing each index's n-bit expansion."""
    perm = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        perm = np.concatenate([2 * perm, 2 * perm + 1])
    return perm


def polar_transform(u: np.ndarray) -> np.ndarray:
    """``u G_N`` over GF(2) along the last axis, in O(N log N)."""
    u = np.asarray(u, dtype=np.uint8)
    N = u.shape[-1]
    n = _log2_length(N)
    x = u.copy()
    lead = x.shape[:-1]
    h = 1
    while h < N:
        blocks = x.reshape(lead + (N // (2 * h), 2, h))
        blocks[..., 0, :] ^= blocks[..., 1, :]
        h *= 2
    return x[..., bit_reversal(n)]


def _normalize(pair: np.ndarray) -> np.ndarray:
    s = pair[..., 0] + pair[..., 1]
    ok = s > 0
    out = np.zeros_like(pair)
    np.divide(pair, s[..., None], out=out, where=ok[..., None])
    return out


def leaf_beliefs(prior1: float | np.ndarray, likelihood: np.ndarray | None, N: int) -> np.ndarray:
    """Normalised leaf pairs ``P(v=b) L(obs|b)``; shape ``(..., N, 2)``."""
    p1 = np.asarray(prior1, dtype=float)
    prior = np.stack([1 - p1, p1], axis=-1)
    if prior.ndim == 1:
        prior = np.broadcast_to(prior, (N, 2))
    if likelihood is None:
        return _normalize(np.array(prior, dtype=float))
    return _normalize(prior * np.asarray(likelihood, dtype=float))


Decide = Callable[[int, np.ndarray], np.ndarray]


def sc_recursion(leaves: np.ndarray, decide: Decide) -> np.ndarray:
    """Run one successive-cancellation pass.

    ``leaves`` holds beliefs on ``v`` in natural order, shape ``(K, B, N, 2)``.
    ``decide(i, post)`` receives the ``(K, B, 2)`` posteriors of ``t_i`` given
    the already-decided prefix and returns the ``(B,)`` decided bits.
    Returns ``v`` re-encoded from the decided ``t`` (shape ``(B, N)``).
    Pairs whose mass vanishes (inconsistent observations) stay ``(0, 0)``.
    """
    leaves = np.asarray(leaves, dtype=float)
    N = leaves.shape[-2]
    n = _log2_length(N)
    # the recursion below works on u F^{(x)n}; G_N adds the bit reversal
    w = leaves[..., bit_reversal(n), :]
    return _recurse(w, decide, 0)[..., bit_reversal(n)]


def _recurse(bel: np.ndarray, decide: Decide, offset: int) -> np.ndarray:
    length = bel.shape[-2]
    if length == 1:
        bit = np.asarray(decide(offset, bel[..., 0, :]), dtype=np.uint8)
        return bit[:, None]
    half = length // 2
    a, b = bel[..., :half, :], bel[..., half:, :]
    # upper branch: parity of the two halves
    c = np.empty_like(a)
    c[..., 0] = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    c[..., 1] = a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]
    s = _recurse(_normalize(c), decide, offset)
    # lower branch given the upper partial sums s: d_u ~ a_{s^u} b_u
    flip = s.astype(bool)
    a0 = np.where(flip, a[..., 1], a[..., 0])
    a1 = np.where(flip, a[..., 0], a[..., 1])
    d = np.stack([a0 * b[..., 0], a1 * b[..., 1]], axis=-1)
    r = _recurse(_normalize(d), decide, offset + half)
    return np.concatenate([s ^ r, r], axis=-1)


def bit_posterior(prior1: float | np.ndarray, likelihoods: np.ndarray | None, i: int, prefix) -> BeliefPair:
    """``P(T_i | T^{i-1} = prefix, observations)`` for a single block.

    ``prior1`` is ``P(V=1)`` (scalar or per position); ``likelihoods`` is an
    ``(N, 2)`` array of ``L(obs_j | v_j = b)``, or ``None`` for no
    observation. Raises ``PolarError`` if the prefix and the observations
    are inconsistent (zero posterior mass).
    """
    prefix = np.asarray(prefix, dtype=np.uint8).ravel()
    if likelihoods is not None:
        likelihoods = np.asarray(likelihoods, dtype=float)
        N = likelihoods.shape[0]
    else:
        N = np.asarray(prior1).size
    if np.ndim(prior1) == 0 and likelihoods is None:
        raise PolarError("block length is ambiguous: pass per-position priors or likelihoods")
    if not 0 <= i < N or prefix.size != i:
        raise PolarError(f"need 0 <= i < N and a prefix of length i (got i={i}, len={prefix.size})")
    leaves = leaf_beliefs(prior1, likelihoods, N)
    if np.any(leaves.sum(axis=-1) == 0):
        raise PolarError("degenerate leaf: both masses are zero")
    captured: list[np.ndarray] = []

    def decide(j: int, post: np.ndarray) -> np.ndarray:
        if j == i:
            captured.append(post[0, 0].copy())
        return np.array([prefix[j] if j < i else 0], dtype=np.uint8)

    sc_recursion(leaves[None, None], decide)
    p0, p1 = captured[0]
    if p0 + p1 <= 0:
        raise PolarError("inconsistent prefix: zero posterior mass")
    return BeliefPair(float(p0), float(p1))


class Role(IntEnum):
    MESSAGE = 0
    RANDOM = 1
    RULE = 2
    COPY = 3


@dataclass(frozen=True)
class RuleSet:
    """Deterministic maps ``lambda_i(t^{i-1})`` shared by encoder and decoder.

    In ``seeded_sampling`` mode ``lambda_i`` returns 1 iff ``w_i < P(T_i = 1 |
    t^{i-1})`` where ``w_i`` is a uniform drawn once per index from
    ``rule_seed``. For a random seed this samples ``T_i`` from its
    conditional law independently across indices. ``argmax_prior`` returns
    the more likely bit (ties to 0).
    """

    rule_seed: int
    scope: frozenset[int] = frozenset()
    mode: str = "seeded_sampling"

    def __post_init__(self) -> None:
        if self.mode not in ("seeded_sampling", "argmax_prior"):
            raise PolarError(f"unknown rule mode {self.mode!r}")
        object.__setattr__(self, "scope", frozenset(int(i) for i in self.scope))

    def uniforms(self, N: int) -> np.ndarray:
        return rngmod.stream(self.rule_seed, "rule", N).random(N)

    def evaluator(self, N: int) -> Callable[[int, np.ndarray], np.ndarray]:
        """``f(i, p1) -> bits`` for a batch of conditional probabilities."""
        if self.mode == "argmax_prior":
            return lambda i, p1: (np.asarray(p1) > 0.5).astype(np.uint8)
        w = self.uniforms(N)
        return lambda i, p1: (w[i] < np.asarray(p1)).astype(np.uint8)

    def to_json(self) -> dict:
        return {"rule_seed": self.rule_seed, "scope": sorted(self.scope), "mode": self.mode}

    @classmethod
    def from_json(cls, obj: dict) -> "RuleSet":
        return cls(int(obj["rule_seed"]), frozenset(obj.get("scope", ())), obj.get("mode", "seeded_sampling"))


@dataclass
class PassResult:
    t: np.ndarray          # (B, N) decided or encoded transform-domain bits
    v: np.ndarray          # (B, N) = t G_N
    posterior: np.ndarray  # (B, N, 2) observation-tree posteriors (decode) or prior-tree (encode)
    prior_posterior: np.ndarray  # (B, N, 2)
    degenerate: np.ndarray  # (B, N) bool, zero-mass posteriors met along the pass


def _check_roles(roles: np.ndarray, N: int) -> np.ndarray:
    roles = np.asarray(roles, dtype=np.int64)
    if roles.shape != (N,) or np.any((roles < 0) | (roles > 3)):
        raise PolarError("role map must assign exactly one role to each of the N indices")
    return roles


def sc_pass(
    prior_leaves: np.ndarray,
    roles: np.ndarray,
    rules: RuleSet,
    mode: str,
    values: np.ndarray | None = None,
    obs_leaves: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> PassResult:
    """One left-to-right pass over a batch of blocks.

    ``prior_leaves``: ``(B, N, 2)`` (or ``(N, 2)``) beliefs on ``v`` without
    the channel observation, used by the rules. ``obs_leaves``: the same with
    the observation folded in (``decode_map`` only).

    ``encode_sample``: MESSAGE and COPY bits come from ``values``; RANDOM bits
    are drawn from ``rng`` (or taken from ``values`` when ``rng`` is None);
    RULE bits come from ``rules``.
    ``decode_map``: MESSAGE and RANDOM bits are MAP decisions on the
    observation tree, COPY bits come from ``values``, RULE bits from
    ``rules`` applied to the decided prefix.
    """
    prior_leaves = np.asarray(prior_leaves, dtype=float)
    if mode == "decode_map":
        if obs_leaves is None:
            raise PolarError("decode_map needs observation leaves")
        obs_leaves = np.asarray(obs_leaves, dtype=float)
        B, N = obs_leaves.shape[0], obs_leaves.shape[1]
    elif mode == "encode_sample":
        if values is None:
            raise PolarError("encode_sample needs supplied values")
        B, N = np.asarray(values).shape
    else:
        raise PolarError(f"unknown pass mode {mode!r}")
    roles = _check_roles(roles, N)
    prior_leaves = np.broadcast_to(prior_leaves, (B, N, 2))

    if values is None:
        if np.any((roles == Role.COPY) | ((roles == Role.MESSAGE) & (mode == "encode_sample"))):
            raise PolarError("missing supplied values")
        values = np.zeros((B, N), dtype=np.uint8)
    values = np.asarray(values, dtype=np.uint8)
    if values.shape != (B, N):
        raise PolarError(f"supplied values must have shape {(B, N)}")
    if mode == "encode_sample" and rng is not None:
        drawn = rng.integers(0, 2, size=(B, N), dtype=np.uint8)
        values = np.where(roles == Role.RANDOM, drawn, values).astype(np.uint8)

    trees = [prior_leaves] if mode == "encode_sample" else [prior_leaves, obs_leaves]
    leaves = np.stack(trees)
    rule = rules.evaluator(N)
    t = np.zeros((B, N), dtype=np.uint8)
    post = np.zeros((B, N, 2))
    prior_post = np.zeros((B, N, 2))
    degenerate = np.zeros((B, N), dtype=bool)

    def decide(i: int, p: np.ndarray) -> np.ndarray:
        pp = p[0]
        prior_post[:, i] = pp
        po = p[-1]
        post[:, i] = po
        role = roles[i]
        if role == Role.RULE:
            mass = pp.sum(axis=-1)
            p1 = np.divide(pp[:, 1], mass, out=np.zeros(B), where=mass > 0)
            degenerate[:, i] = mass <= 0
            bits = rule(i, p1)
        elif role == Role.COPY or mode == "encode_sample":
            bits = values[:, i]
        else:
            degenerate[:, i] = po.sum(axis=-1) <= 0
            bits = (po[:, 1] > po[:, 0]).astype(np.uint8)
        t[:, i] = bits
        return bits

    v = sc_recursion(leaves, decide)
    return PassResult(t, v, post, prior_post, degenerate)


def bhattacharyya(pair: np.ndarray) -> np.ndarray:
    """``2 sqrt(p0 p1)`` of normalised pairs."""
    pair = np.asarray(pair, dtype=float)
    return 2.0 * np.sqrt(np.clip(pair[..., 0] * pair[..., 1], 0.0, None))

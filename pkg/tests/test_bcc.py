import json

import numpy as np
import pytest

from polarwire.bcc import (
    bcc_decode_rx1,
    bcc_decode_rx2,
    bcc_encode,
    bcc_rate_triple,
    common_bits_per_cluster,
)
from polarwire.channels import BccSpec, WiretapSpec, bsc, bsc_table
from polarwire.partition import (
    BccCommonPartition,
    IndexPartition,
    build_bcc_partitions,
    build_wiretap_partition,
    classify,
)
from polarwire.polar import RuleSet
from polarwire.reliability import bcc_stats, exact_bit_stats
from polarwire.wiretap import LayoutError, SeedBlock, encode_cluster

from conftest import IDENTITY


def hand_common(swapped=False):
    """N = 8: I_u = {0}, D1 = {1,2}, D2 = {3,4,5}, E2 = {3,4}, rule = {6,7}."""
    return BccCommonPartition(3, [0], [1, 2], [3, 4, 5], [3, 4], [6, 7], swapped)


def hand_secret():
    return IndexPartition(3, I=[1, 3, 5, 7], B=[0], R1=[4], R2=[2, 6], D=[], E=[1, 3])


def rules_for(cp, sp, seed=31):
    return (
        RuleSet(seed, frozenset(cp.rule.tolist())),
        RuleSet(seed + 1, frozenset(sp.B.tolist() + sp.D.tolist())),
    )


def noiseless_bcc():
    """V = U and both outputs noiseless: every layout round trips."""
    return BccSpec(0.5, IDENTITY, IDENTITY, bsc(0.0), bsc(0.0))


def all_rule_secret():
    # V = U leaves the secret layer no entropy
    return IndexPartition(3, I=[], B=[], R1=[], R2=[], D=list(range(8)), E=[])


def draw_payload(rng, cp, sp, m, T):
    common = rng.integers(0, 2, (T, common_bits_per_cluster(cp, m)), dtype=np.uint8)
    secret = rng.integers(0, 2, (T, m, sp.message.size), dtype=np.uint8)
    extra = rng.integers(0, 2, (T, m, sp.E.size + sp.R1.size), dtype=np.uint8)
    seed = SeedBlock(rng.integers(0, 2, (T, sp.R2.size), dtype=np.uint8))
    return common, secret, extra, seed


def run(cp, sp, m, spec=None, T=20, seed=0):
    spec = noiseless_bcc() if spec is None else spec
    rng = np.random.default_rng(seed)
    rules = rules_for(cp, sp)
    common, secret, extra, sb = draw_payload(rng, cp, sp, m, T)
    x, cl = bcc_encode(common, secret, extra, sb, (cp, sp), rules, spec, rng)
    return spec, rules, (common, secret, extra, sb), x, cl


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_forward_and_backward_receivers_recover_common_bits(m):
    cp, sp = hand_common(), all_rule_secret()
    spec, rules, (common, _, _, sb), x, cl = run(cp, sp, m, seed=m)
    assert np.array_equal(x, cl.u)
    rx1 = bcc_decode_rx1(x, sb, (cp, sp), rules, spec, d2_random=cl.d2_random)
    assert np.array_equal(rx1.common, common)
    assert np.array_equal(rx1.q, cl.q)
    assert np.array_equal(bcc_decode_rx2(x, (cp, sp), rules, spec), common)


@pytest.mark.parametrize("m", [1, 3])
def test_swapped_layout_reverses_receiver_roles(m):
    cp, sp = hand_common(swapped=True), all_rule_secret()
    assert cp.forward == "z"
    spec, rules, (common, _, _, sb), x, cl = run(cp, sp, m, seed=10 + m)
    assert np.array_equal(bcc_decode_rx1(x, sb, (cp, sp), rules, spec).common, common)
    assert np.array_equal(bcc_decode_rx2(x, (cp, sp), rules, spec, d2_random=cl.d2_random), common)


@pytest.mark.parametrize("m", [1, 2, 4])
def test_secret_layer_round_trip_given_u(m):
    """Noiseless Y pins V; with the true U the whole secret chain is recovered."""
    cp, sp = hand_common(), hand_secret()
    spec = BccSpec(0.5, bsc_table(0.25), IDENTITY, bsc(0.0), bsc(0.0))
    _, rules, (_, secret, extra, sb), x, cl = run(cp, sp, m, spec=spec, seed=20 + m)
    rx1 = bcc_decode_rx1(x, sb, (cp, sp), rules, spec, d2_random=cl.d2_random, u_override=cl.u)
    assert np.array_equal(rx1.secret, secret)
    assert np.array_equal(rx1.extra, extra)
    assert np.array_equal(rx1.t, cl.t)


def test_forward_receiver_needs_shared_bits():
    cp, sp = hand_common(), all_rule_secret()
    spec, rules, (_, _, _, sb), x, _ = run(cp, sp, 2)
    with pytest.raises(LayoutError):
        bcc_decode_rx1(x, sb, (cp, sp), rules, spec)


def test_common_chain_audit():
    cp, sp = hand_common(), all_rule_secret()
    _, _, _, _, cl = run(cp, sp, 4)
    cl.check_chain()
    for j in range(1, 4):
        assert np.array_equal(cl.q[:, j][:, cp.E2], cl.q[:, j - 1][:, cp.D1])
    assert not cl.q[:, 0][:, cp.D2].any()
    assert not cl.q[:, -1][:, cp.D1].any()
    assert not cl.d2_random[:, 0].any()
    cl.q[:, 2, cp.E2[0]] ^= 1
    with pytest.raises(AssertionError):
        cl.check_chain()


def test_common_bit_count():
    cp = hand_common()
    for m in (1, 2, 7):
        assert common_bits_per_cluster(cp, m) == m * 1 + (m - 1) * 2
    sp = all_rule_secret()
    short = np.zeros((1, 5), dtype=np.uint8)  # m = 2 needs 2 + 2 = 4 bits
    with pytest.raises(LayoutError):
        bcc_encode(short, np.zeros((1, 2, 0)), np.zeros((1, 2, 0)), SeedBlock(np.zeros(0)), (cp, sp), rules_for(cp, sp), noiseless_bcc(), np.random.default_rng(0))


def test_rate_triple_example():
    r = bcc_rate_triple((hand_common(), hand_secret()), 4)
    assert r.common_bits == 10
    assert r.R0 == pytest.approx(10 / 32)
    assert r.Rs == pytest.approx(2 / 8)
    assert r.R1 == pytest.approx(3 / 8)
    assert r.common_fraction == pytest.approx(3 / 8)
    assert r.sandwich_holds
    assert r.to_json()["sandwich_holds"] is True


@pytest.mark.parametrize("m", [1, 2, 5, 50])
def test_rate_sandwich(m):
    cp = hand_common()
    r = bcc_rate_triple((cp, hand_secret()), m)
    f = (cp.I_u.size + cp.D1.size) / cp.N
    assert (m - 1) / m * f <= r.R0 <= f
    assert r.sandwich_holds


def test_wrong_u_breaks_secret_layer():
    """Failure injection: a flipped u_hat replaces the decoded common layer."""
    spec = BccSpec(0.5, bsc_table(0.1), IDENTITY, bsc(0.02), bsc(0.3))
    common_stats, secret_stats = bcc_stats(spec, 4)
    cp, sp = build_bcc_partitions(classify(common_stats, 0.2, 0.8), classify(secret_stats, 0.2, 0.8))
    assert sp.message.size > 0
    _, rules, (_, secret, _, sb), x, cl = run(cp, sp, 2, spec=spec, T=2000, seed=3)
    y = (x ^ (np.random.default_rng(4).random(x.shape) < 0.02)).astype(np.uint8)

    def block_errors(u):
        out = bcc_decode_rx1(y, sb, (cp, sp), rules, spec, d2_random=cl.d2_random, u_override=u)
        return np.any(out.secret != secret, axis=(1, 2)).mean(), np.any(out.t != cl.t, axis=(1, 2)).mean()

    good_msg, good_t = block_errors(cl.u)
    bad_msg, bad_t = block_errors(1 - cl.u)
    assert good_msg < 0.1 and good_t < 0.1
    assert bad_msg > 0.3 and bad_t > 0.9


def test_constant_u_reduces_to_wiretap():
    """With U fixed the secret layer is the single-layer wiretap chain."""
    p_v, m, T = 0.3, 3, 40
    w1, w2 = bsc(0.05), bsc(0.3)
    bspec = BccSpec(0.0, np.array([[1 - p_v, p_v], [1 - p_v, p_v]]), IDENTITY, w1, w2)
    wspec = WiretapSpec(p_v, IDENTITY, w1, w2)
    common_stats, secret_stats = bcc_stats(bspec, 4)
    cp, sp = build_bcc_partitions(classify(common_stats, 0.2, 0.8), classify(secret_stats, 0.2, 0.8))
    wp = build_wiretap_partition(classify(exact_bit_stats(wspec, 4), 0.2, 0.8))
    assert wp.message.size > 0
    for name in ("I", "B", "R1", "R2", "D", "E"):
        assert np.array_equal(getattr(sp, name), getattr(wp, name))
    assert cp.I_u.size == cp.D1.size == cp.D2.size == 0

    rng = np.random.default_rng(8)
    msgs = rng.integers(0, 2, (T, m, wp.message.size), dtype=np.uint8)
    sb = SeedBlock(rng.integers(0, 2, (T, wp.R2.size), dtype=np.uint8))
    secret_rules = RuleSet(5, frozenset(wp.B.tolist() + wp.D.tolist()))
    xw, _ = encode_cluster(msgs, sb, wp, secret_rules, wspec, np.random.default_rng(1), x_rng=np.random.default_rng(2))
    extra = np.random.default_rng(1).integers(0, 2, (T, m, wp.E.size + wp.R1.size), dtype=np.uint8)
    rules = (RuleSet(4, frozenset(cp.rule.tolist())), secret_rules)
    xb, cl = bcc_encode(np.zeros((T, 0)), msgs, extra, sb, (cp, sp), rules, bspec, np.random.default_rng(99), x_rng=np.random.default_rng(2))
    assert not cl.u.any()
    assert np.array_equal(xb, xw)


def test_cluster_json(tmp_path):
    cp, sp = hand_common(), hand_secret()
    _, _, _, _, cl = run(cp, sp, 2, spec=BccSpec(0.5, bsc_table(0.25), IDENTITY, bsc(0.0), bsc(0.0)), T=3)
    cl.save(tmp_path / "bcc.json", trial=2)
    obj = json.loads((tmp_path / "bcc.json").read_text())
    assert obj["schema_version"] == 1 and obj["m"] == 2
    common, secret = obj["stages"]
    assert common["roles"] == ["I_u", "D1", "D1", "E2", "E2", "D2", "rule", "rule"]
    assert common["blocks"][1]["q"] == cl.q[2, 1].tolist()
    assert secret["seed"] == cl.seed.bits[2].tolist()
    assert secret["blocks"][0]["x"] == cl.x[2, 0].tolist()

import itertools
from collections import Counter

import pytest

from metaopera import multisig as ms


@pytest.fixture(scope="module")
def keys():
    return [ms.keygen(f"k{i}".encode()) for i in range(40)]


def test_keygen_deterministic_and_sized():
    a1, a2, b = ms.keygen(b"A"), ms.keygen(b"A"), ms.keygen(b"B")
    assert a1 == a2 and a1.sk == a2.sk and a1.pop == a2.pop
    assert a1.vk != b.vk
    assert len(a1.vk) == 34 and len(a1.pop) == 66
    assert ms.VK_BYTES * 8 == 272 and ms.SIG_BYTES * 8 == 528 and ms.POP_BYTES * 8 == 528


def test_sign_verify(keys):
    k, other = keys[0], keys[1]
    sig = ms.sign(k.sk, b"hello")
    assert len(sig) == 66
    assert ms.verify(k.vk, b"hello", sig)
    assert not ms.verify(k.vk, b"hellp", sig)
    assert not ms.verify(other.vk, b"hello", sig)
    assert ms.sign(k.sk, b"hello") == sig


def test_aggregate_single_signer(keys):
    share = ms.sign_share(keys[3], b"m")
    agg = ms.aggregate([share], b"m")
    assert agg.signer_set == (keys[3].vk,)
    assert ms.verify_aggregate(agg.signer_set, b"m", agg.sig)


def test_aggregate_rejects_empty_and_mixed(keys):
    with pytest.raises(ms.AggregationError):
        ms.aggregate([], b"m")
    with pytest.raises(ms.AggregationError):
        ms.aggregate([ms.sign_share(keys[0], b"m"), ms.sign_share(keys[1], b"n")], b"m")


def test_forty_shares_and_every_single_corruption(keys):
    msg = b"attest"
    shares = [ms.sign_share(k, msg) for k in keys]
    agg = ms.aggregate(shares, msg)
    assert ms.verify_aggregate(agg.signer_set, msg, agg.sig)
    garbage = bytes([0x5A]) * 66
    for i in range(len(shares)):
        bad = list(shares)
        bad[i] = ms.Share(bad[i].vk, msg, garbage)
        forged = ms.aggregate(bad, msg)
        assert not ms.verify_aggregate(forged.signer_set, msg, forged.sig), i


def test_aggregate_size_independent_of_signers():
    many = [ms.keygen(f"big{i}".encode()) for i in range(400)]
    one = ms.aggregate([ms.sign_share(many[0], b"x")], b"x")
    all_ = ms.aggregate([ms.sign_share(k, b"x") for k in many], b"x")
    assert len(one.sig) == len(all_.sig) == 66


def test_pop_checks(keys):
    k, other = keys[5], keys[6]
    assert ms.verify_pop(k.vk, k.pop)
    assert not ms.verify_pop(k.vk, other.pop)
    assert not ms.verify_pop(ms.keygen(b"unrelated").vk, k.pop)


def test_pop_every_single_bit_flip_rejected(keys):
    k = keys[7]
    for bit in range(len(k.pop) * 8):
        flipped = bytearray(k.pop)
        flipped[bit // 8] ^= 1 << (bit % 8)
        assert not ms.verify_pop(k.vk, bytes(flipped)), bit


def test_unknown_key_never_verifies():
    rogue = b"\x01" * 34
    assert not ms.verify(rogue, b"m", b"\x00" * 66)
    assert not ms.verify_pop(rogue, b"\x00" * 66)
    assert not ms.verify_aggregate([rogue], b"m", b"\x00" * 66)


def test_subsets_up_to_eight_keys_brute_force(keys):
    """verify_aggregate accepts exactly when the contributed shares match the signer list."""
    pool = keys[:8]
    msg = b"subset"
    subsets = [s for r in range(1, 9) for s in itertools.combinations(range(8), r)]
    aggs = {s: ms.aggregate([ms.sign_share(pool[i], msg) for i in s], msg).sig for s in subsets}
    for claimed in subsets:
        vks = [pool[i].vk for i in claimed]
        for contributed, sig in aggs.items():
            expect = Counter(claimed) == Counter(contributed)
            assert ms.verify_aggregate(vks, msg, sig) is expect


def test_duplicate_signers_are_counted():
    k1, k2 = ms.keygen(b"d1"), ms.keygen(b"d2")
    twice = ms.aggregate([ms.sign_share(k1, b"m"), ms.sign_share(k1, b"m")], b"m")
    assert ms.verify_aggregate([k1.vk, k1.vk], b"m", twice.sig)
    assert not ms.verify_aggregate([k1.vk], b"m", twice.sig)
    assert not ms.verify_aggregate([k2.vk, k2.vk], b"m", twice.sig)

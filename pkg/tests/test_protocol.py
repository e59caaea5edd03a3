import random
from dataclasses import replace
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from _support import direct_token, drive_group, make_registry, manual_oracle, manual_sid, roster_of
from gkelab.auth import keypair
from gkelab.errors import (
    DuplicateIdentity,
    IdentityNotInRoster,
    InvalidElement,
    MissingKC,
    MissingRound1,
    MissingRound2,
    NotInSubgroup,
    PeerNotInRoster,
    RosterTooSmall,
    SelfPeer,
    SubgroupNotSubsetOfRoster,
    SubgroupTooSmall,
    UnexpectedMessage,
    WrongPhase,
    WrongVariant,
)
from gkelab.group import TOY
from gkelab.oracles import ZERO, xor, xor_all
from gkelab.protocol import (
    CONFIRMATION_MISMATCH,
    signed_payload,
    XOR_SUM_NONZERO,
    KCMsg,
    Phase,
    Round1Msg,
    Round2Msg,
    Variant,
    compute_group_key,
    compute_subgroup_key,
    decode_message,
    encode_message,
    finalize_kc,
    kc_message,
    on_round1_complete,
    p2p_key,
    recover_chain,
    session_id,
    start_session,
    subgroup_round1,
)

SK = keypair(TOY, random.Random(0), secret=2)[0]


def test_start_session_example():
    state, msg = start_session("U1", roster_of(3), TOY, Variant.ORIGINAL, random.Random(0), SK, exponent=3)
    assert msg == Round1Msg("U1", 8)
    assert state.phase is Phase.SENT_ROUND1


@pytest.mark.parametrize("roster, err", [
    (("A", "B"), RosterTooSmall),
    (("A", "B", "A"), DuplicateIdentity),
    (("B", "C", "D"), IdentityNotInRoster),
])
def test_start_session_errors(roster, err):
    with pytest.raises(err):
        start_session("A", roster, TOY, Variant.ORIGINAL, random.Random(0), SK)


def test_sid_encoding_bit_exact():
    ys = {"U1": 8, "U2": 9, "U3": 13}
    assert session_id(roster_of(3), ys, TOY) == manual_sid(ys.items())


def test_round2_edge_values_n3():
    # exponents (3,5,7): party 1's edge secrets are 2^21 = 12 and 2^15 = 16 mod 23
    states, r1, r2, _, _ = drive_group(TOY, [3, 5, 7])
    s1 = states["U1"]
    sid = manual_sid([("U1", 8), ("U2", 9), ("U3", 13)])
    assert s1.sid == sid
    assert s1.left_token == manual_oracle(0x01, [bytes([12]), sid])
    assert s1.right_token == manual_oracle(0x01, [bytes([16]), sid])
    assert r2[0].z == xor(s1.left_token, s1.right_token)
    assert xor_all(m.z for m in r2) == ZERO


def test_round1_rejects_identity_element():
    roster = roster_of(3)
    state, _ = start_session("U1", roster, TOY, Variant.ORIGINAL, random.Random(0), SK, exponent=3)
    msgs = [Round1Msg("U1", 8), Round1Msg("U2", 1), Round1Msg("U3", 13)]
    with pytest.raises(InvalidElement):
        on_round1_complete(state, msgs, random.Random(0))
    with pytest.raises(MissingRound1):
        on_round1_complete(state, msgs[:2], random.Random(0))
    with pytest.raises(UnexpectedMessage):
        on_round1_complete(state, msgs + [Round1Msg("U9", 8)], random.Random(0))


def test_honest_n3_keys_match_and_chain_is_direct():
    states, *_ = drive_group(TOY, [3, 5, 7])
    keys = {s.key for s in states.values()}
    assert len(keys) == 1 and None not in keys
    sid = states["U1"].sid
    x = [3, 5, 7]
    direct = tuple(direct_token(x[j], x[(j + 1) % 3], sid) for j in range(3))
    for s in states.values():
        assert s.tokens == direct
        assert s.phase is Phase.KEY_COMPUTED
    assert states["U1"].key == manual_oracle(0x02, [*direct, sid])


def test_recover_chain_from_every_start_n4():
    x = [2, 9, 4, 7]
    states, _, r2, _, _ = drive_group(TOY, x)
    sid = states["U1"].sid
    zs = [m.z for m in r2]
    direct = tuple(direct_token(x[j], x[(j + 1) % 4], sid) for j in range(4))
    for i in range(4):
        start = direct[(i - 1) % 4]
        assert recover_chain(start, i, zs) == direct


def test_tampered_z_aborts_everyone():
    pre = _pre_key_states(TOY, [3, 5, 7, 2])
    bad = list(pre[1])
    bad[1] = replace(bad[1], z=xor(bad[1].z, b"\x00" * 31 + b"\x01"))
    for s in pre[0].values():
        out = compute_group_key(s, bad, pre[2])
        assert out.phase is Phase.ABORTED and out.abort_reason == XOR_SUM_NONZERO
        assert out.key is None


def _pre_key_states(params, x, variant=Variant.ORIGINAL):
    roster = roster_of(len(x))
    sks, registry = make_registry(roster, params)
    rngs = {u: random.Random(u) for u in roster}
    states, r1, r2 = {}, [], []
    for k, u in enumerate(roster):
        states[u], m = start_session(u, roster, params, variant, rngs[u], sks[u], exponent=x[k])
        r1.append(m)
    for u in roster:
        states[u], m = on_round1_complete(states[u], r1, rngs[u])
        r2.append(m)
    return states, r2, registry, sks, rngs


def test_wrong_signer_gives_bad_signature():
    states, r2, registry, sks, _ = _pre_key_states(TOY, [3, 5, 7])
    # pick a signer whose key differs from U2's
    other = next(u for u in ("U1", "U3") if registry[u] != registry["U2"])
    msg = r2[1]
    forged = Round2Msg("U2", msg.z, sks[other].sign(signed_payload("U2", msg.z, states["U1"].sid), random.Random(1)))
    msgs = [r2[0], forged, r2[2]]
    out = compute_group_key(states["U1"], msgs, registry)
    assert out.phase is Phase.ABORTED and out.abort_reason == "BadSignature(U2)"
    with pytest.raises(MissingRound2):
        compute_group_key(states["U1"], r2[:2], registry)


def test_phase_discipline_leaves_state_unchanged():
    states, r2, registry, _, rngs = _pre_key_states(TOY, [3, 5, 7])
    s = states["U1"]
    snapshot = replace(s)
    with pytest.raises(WrongPhase):
        on_round1_complete(s, [], random.Random(0))
    with pytest.raises(WrongVariant):
        kc_message(s, random.Random(0))
    with pytest.raises(WrongPhase):
        finalize_kc(s, [], registry)
    with pytest.raises(WrongPhase):
        compute_subgroup_key(s, r2, registry)
    assert s == snapshot
    done = compute_group_key(s, r2, registry)
    with pytest.raises(WrongPhase):
        compute_group_key(done, r2, registry)


def test_p2p_examples_and_symmetry():
    states, *_ = drive_group(TOY, [3, 5, 7, 2, 9])
    s1, s2 = states["U1"], states["U2"]
    assert pow(s2.y, s1.x, 23) == pow(s1.y, s2.x, 23) == 16
    assert p2p_key(s1, "U2") == p2p_key(s2, "U1")
    pair = lambda u, y: manual_sid([(u, y)])
    assert p2p_key(s1, "U2") == manual_oracle(0x03, [bytes([16]), pair("U1", 8), pair("U2", 9)])
    with pytest.raises(SelfPeer):
        p2p_key(s1, "U1")
    with pytest.raises(PeerNotInRoster):
        p2p_key(s1, "U7")
    fresh, _ = start_session("U1", roster_of(3), TOY, Variant.ORIGINAL, random.Random(0), SK)
    with pytest.raises(WrongPhase):
        p2p_key(fresh, "U2")


def test_key_confirm_honest_n5():
    states, _, _, _, kc = drive_group(TOY, [3, 5, 7, 2, 9], variant=Variant.KEY_CONFIRM)
    assert len({m.m for m in kc}) == 1
    assert all(s.phase is Phase.ACCEPTED for s in states.values())
    assert len({s.key for s in states.values()}) == 1


def test_kc_bad_signature_and_missing():
    states, _, _, registry, _ = drive_group(TOY, [3, 5, 7, 2], variant=Variant.KEY_CONFIRM, confirm=False)
    sent, kc = {}, []
    for u, s in states.items():
        sent[u], m = kc_message(s, random.Random(u))
        kc.append(m)
    broken = list(kc)
    sig = broken[2].sig
    broken[2] = replace(broken[2], sig=replace(sig, s=(sig.s + 1) % TOY.q))
    for s in sent.values():
        out = finalize_kc(s, broken, registry)
        assert out.phase is Phase.ABORTED and out.abort_reason == "BadSignature(U3)"
    with pytest.raises(MissingKC):
        finalize_kc(sent["U1"], kc[:3], registry)
    # a mismatching (validly signed) confirmation value
    u4 = sent["U4"]
    wrong_m = bytes(32)
    fake = KCMsg("U4", wrong_m, u4.signing_key.sign(signed_payload("U4", wrong_m, u4.context), random.Random(3)))
    out = finalize_kc(sent["U1"], kc[:3] + [fake], registry)
    assert out.abort_reason == CONFIRMATION_MISMATCH


def _subgroup_run(x, spid, variant=Variant.ORIGINAL, tokens_use_ssid=False):
    states, _, _, registry, _ = drive_group(TOY, x, variant=variant, confirm=False)
    subs, msgs = {}, []
    for u in spid:
        subs[u], m = subgroup_round1(states[u], spid, random.Random(u), tokens_use_ssid=tokens_use_ssid)
        msgs.append(m)
    for u in spid:
        subs[u] = compute_subgroup_key(subs[u], msgs, registry)
    return states, subs, msgs, registry


@pytest.mark.parametrize("use_ssid", [False, True])
def test_subgroup_stage(use_ssid):
    x = [3, 5, 7, 2]
    spid = ("U1", "U2", "U4")
    states, subs, msgs, _ = _subgroup_run(x, spid, tokens_use_ssid=use_ssid)
    assert xor_all(m.z for m in msgs) == ZERO
    sid = states["U1"].sid
    ys = {u: states[u].y for u in spid}
    ssid = manual_sid([(u, ys[u]) for u in spid])
    ctx = ssid if use_ssid else sid
    sx = [3, 5, 2]
    direct = tuple(direct_token(sx[j], sx[(j + 1) % 3], ctx) for j in range(3))
    # U1's z over its new neighbours U4 and U2
    assert msgs[0].z == xor(direct[2], direct[0])
    keys = {s.key for s in subs.values()}
    assert keys == {manual_oracle(0x04, [*direct, ssid])}
    assert states["U1"].key not in keys


def test_subgroup_tampered_z():
    states, _, _, registry, _ = drive_group(TOY, [3, 5, 7, 2], confirm=False)
    spid = ("U1", "U2", "U3")
    subs, msgs = {}, []
    for u in spid:
        subs[u], m = subgroup_round1(states[u], spid, random.Random(0))
        msgs.append(m)
    msgs[0] = replace(msgs[0], z=xor(msgs[0].z, b"\x80" + bytes(31)))
    out = compute_subgroup_key(subs["U2"], msgs, registry)
    assert out.abort_reason == XOR_SUM_NONZERO


def test_subgroup_errors():
    states, *_ = drive_group(TOY, [3, 5, 7, 2])
    s = states["U1"]
    rng = random.Random(0)
    with pytest.raises(SubgroupNotSubsetOfRoster):
        subgroup_round1(s, ("U1", "U2", "U9"), rng)
    with pytest.raises(SubgroupNotSubsetOfRoster):
        subgroup_round1(s, roster_of(4), rng)
    with pytest.raises(NotInSubgroup):
        subgroup_round1(s, ("U2", "U3", "U4"), rng)
    with pytest.raises(SubgroupTooSmall):
        subgroup_round1(s, ("U1", "U2"), rng)
    with pytest.raises(DuplicateIdentity):
        subgroup_round1(s, ("U1", "U2", "U2"), rng)
    fresh, _ = start_session("U1", roster_of(4), TOY, Variant.ORIGINAL, rng, SK)
    with pytest.raises(WrongPhase):
        subgroup_round1(fresh, ("U1", "U2", "U3"), rng)


def test_subgroup_key_confirm():
    states, subs, msgs, registry = _subgroup_run([3, 5, 7, 2, 9], ("U1", "U3", "U5"), variant=Variant.KEY_CONFIRM)
    sent, kc = {}, []
    for u, s in subs.items():
        sent[u], m = kc_message(s, random.Random(u))
        kc.append(m)
    done = [finalize_kc(s, kc, registry) for s in sent.values()]
    assert all(d.phase is Phase.ACCEPTED for d in done)
    assert len({d.key for d in done}) == 1


def test_key_separation():
    states, subs, _, _ = _subgroup_run([3, 5, 7, 2, 9], ("U1", "U2", "U3"))
    group = states["U1"].key
    sub = subs["U1"].key
    p2p = {p2p_key(states["U1"], u) for u in ("U2", "U3", "U4", "U5")}
    assert len({group, sub, *p2p}) == 6


def test_message_codec_roundtrip():
    states, r1, r2, _, kc = drive_group(TOY, [3, 5, 7], variant=Variant.KEY_CONFIRM)
    for m in [*r1, *r2, *kc]:
        blob = encode_message(m, TOY)
        assert decode_message(blob, TOY) == m
    assert encode_message(r1[0], TOY) == b"\x01" + manual_sid([("U1", 8)])
    for bad in (b"", b"\x09", b"\x01\x00\x00", encode_message(r2[0], TOY)[:-1]):
        with pytest.raises(ValueError):
            decode_message(bad, TOY)


def test_honest_agreement_exhaustive_n3():
    for x in product(range(1, 11), repeat=3):
        states, *_ = drive_group(TOY, list(x))
        assert len({s.key for s in states.values()}) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8).flatmap(lambda n: st.lists(st.integers(1, 10), min_size=n, max_size=n)),
       st.sampled_from(list(Variant)))
def test_honest_agreement_property(x, variant):
    states, _, r2, _, _ = drive_group(TOY, x, variant=variant)
    assert xor_all(m.z for m in r2) == ZERO
    assert len({s.key for s in states.values()}) == 1
    if variant is Variant.KEY_CONFIRM:
        assert all(s.phase is Phase.ACCEPTED for s in states.values())
    sid = states["U1"].sid
    n = len(x)
    direct = tuple(direct_token(x[j], x[(j + 1) % n], sid) for j in range(n))
    assert all(s.tokens == direct for s in states.values())

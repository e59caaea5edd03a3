"""Participant state machines for mBD+P, mBD+S and their key-confirmation variants.

Every operation takes a :class:`ParticipantState` and returns a new one; states
are frozen, so a rejected call leaves the caller's state untouched.

Positions on the cycle are 0-based here.  ``tokens[j]`` is the edge token
between ``members[j]`` and ``members[j+1]`` (wrapping), i.e. the canonical
order z'_{1,2}, ..., z'_{n,1}.
"""
from __future__ import annotations

import enum
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace

from gkelab import oracles
from gkelab.auth import Registry, Signature, SigningKey
from gkelab.errors import (
    DuplicateIdentity,
    IdentityNotInRoster,
    MissingKC,
    MissingMessages,
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
from gkelab.group import GroupParams, check_element, encode_element, random_scalar
from gkelab.oracles import Digest, OracleTag, encode_fields, oracle_eval, oracle_eval_wide, xor

MIN_MEMBERS = 3

GROUP_STAGE = "group"
SUBGROUP_STAGE = "subgroup"

XOR_SUM_NONZERO = "XorSumNonzero"
CONFIRMATION_MISMATCH = "ConfirmationMismatch"


def bad_signature(identity: str) -> str:
    return f"BadSignature({identity})"


class Phase(enum.IntEnum):
    INIT = 0
    SENT_ROUND1 = 1
    SENT_ROUND2 = 2
    KEY_COMPUTED = 3
    SENT_KC = 4
    ACCEPTED = 5
    ABORTED = 6

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")

    @classmethod
    def from_label(cls, label: str) -> Phase:
        return cls[label.upper().replace("-", "_")]


class Variant(enum.Enum):
    ORIGINAL = "original"
    KEY_CONFIRM = "key-confirm"


@dataclass(frozen=True)
class Round1Msg:
    identity: str
    y: int


@dataclass(frozen=True)
class Round2Msg:
    identity: str
    z: Digest
    sig: Signature


@dataclass(frozen=True)
class KCMsg:
    identity: str
    m: Digest
    sig: Signature


Message = Round1Msg | Round2Msg | KCMsg

KIND_ROUND1, KIND_ROUND2, KIND_KC = 1, 2, 3


def encode_message(msg: Message, params: GroupParams) -> bytes:
    ident = msg.identity.encode()
    if isinstance(msg, Round1Msg):
        return bytes([KIND_ROUND1]) + encode_fields([ident, encode_element(msg.y, params)])
    kind, payload = (KIND_ROUND2, msg.z) if isinstance(msg, Round2Msg) else (KIND_KC, msg.m)
    return bytes([kind]) + encode_fields([ident, payload, msg.sig.to_bytes(params)])


def _split_fields(data: bytes) -> list[bytes]:
    out, i = [], 0
    while i < len(data):
        if i + 4 > len(data):
            raise ValueError("truncated length prefix")
        n = int.from_bytes(data[i:i + 4], "big")
        i += 4
        if i + n > len(data):
            raise ValueError("truncated field")
        out.append(data[i:i + n])
        i += n
    return out


def decode_message(data: bytes, params: GroupParams) -> Message:
    """Inverse of :func:`encode_message`.  Raises ValueError on a malformed record."""
    if not data:
        raise ValueError("empty record")
    kind, fields = data[0], _split_fields(data[1:])
    if kind == KIND_ROUND1:
        if len(fields) != 2 or len(fields[1]) != params.element_size:
            raise ValueError("bad round-1 record")
        return Round1Msg(fields[0].decode(), int.from_bytes(fields[1], "big"))
    if kind in (KIND_ROUND2, KIND_KC):
        if len(fields) != 3 or len(fields[1]) != oracles.DIGEST_SIZE:
            raise ValueError("bad round-2/kc record")
        sig = Signature.from_bytes(fields[2], params)
        if sig is None:
            raise ValueError("bad signature field")
        cls = Round2Msg if kind == KIND_ROUND2 else KCMsg
        return cls(fields[0].decode(), fields[1], sig)
    raise ValueError(f"unknown message kind {kind}")


def session_id(members: Sequence[str], ys: Mapping[str, int], params: GroupParams) -> bytes:
    """sid = (U_1|y_1, ..., U_n|y_n) as length-prefixed fields in cycle order."""
    fields: list[bytes] = []
    for ident in members:
        fields += [ident.encode(), encode_element(ys[ident], params)]
    return encode_fields(fields)


def signed_payload(identity: str, value: Digest, context: bytes) -> bytes:
    return encode_fields([identity.encode(), value, context])


def key_fingerprint(key: bytes) -> Digest:
    return oracle_eval(OracleTag.Hkc, [b"fingerprint", key])


def validate_roster(roster: Sequence[str]) -> tuple[str, ...]:
    roster = tuple(roster)
    if len(roster) < MIN_MEMBERS:
        raise RosterTooSmall(f"need at least {MIN_MEMBERS} members, got {len(roster)}")
    if len(set(roster)) != len(roster):
        raise DuplicateIdentity(f"roster has repeated identities: {roster}")
    return roster


@dataclass(frozen=True)
class ParticipantState:
    identity: str
    roster: tuple[str, ...]
    params: GroupParams
    variant: Variant
    signing_key: SigningKey = field(repr=False)
    x: int = field(repr=False)
    y: int
    phase: Phase = Phase.INIT
    stage: str = GROUP_STAGE
    members: tuple[str, ...] = ()
    ys: Mapping[str, int] = field(default_factory=dict)
    sid: bytes | None = None
    context: bytes | None = None
    token_context: bytes | None = None
    left_token: Digest | None = field(default=None, repr=False)
    right_token: Digest | None = field(default=None, repr=False)
    zs: tuple[Digest, ...] = ()
    tokens: tuple[Digest, ...] = field(default=(), repr=False)
    key: bytes | None = field(default=None, repr=False)
    kc_key: bytes | None = field(default=None, repr=False)
    confirmation: Digest | None = None
    abort_reason: str | None = None

    @property
    def position(self) -> int:
        return self.members.index(self.identity)

    @property
    def holds_key(self) -> bool:
        """True once the party considers its session key final."""
        if self.variant is Variant.ORIGINAL:
            return self.phase is Phase.KEY_COMPUTED
        return self.phase is Phase.ACCEPTED


def _require(state: ParticipantState, phase: Phase, stage: str | None = None) -> None:
    if state.phase is not phase:
        raise WrongPhase(f"{state.identity}: expected {phase.label}, in {state.phase.label}")
    if stage is not None and state.stage != stage:
        raise WrongPhase(f"{state.identity}: operation belongs to the {stage} stage, state is {state.stage}")


def _collect(msgs: Iterable, members: Sequence[str], missing: type[MissingMessages]) -> dict:
    by_id: dict = {}
    for m in msgs:
        if m.identity not in members:
            raise UnexpectedMessage(f"message from non-member {m.identity!r}")
        if m.identity in by_id:
            raise UnexpectedMessage(f"{m.identity!r} sent twice")
        by_id[m.identity] = m
    absent = [i for i in members if i not in by_id]
    if absent:
        raise missing(f"no message from {absent}")
    return by_id


def abort(state: ParticipantState, reason: str) -> ParticipantState:
    return replace(state, phase=Phase.ABORTED, abort_reason=reason, key=None, kc_key=None)


def start_session(
    identity: str,
    roster: Sequence[str],
    params: GroupParams,
    variant: Variant,
    rng: random.Random,
    signing_key: SigningKey,
    *,
    exponent: int | None = None,
) -> tuple[ParticipantState, Round1Msg]:
    """Round 1: draw x_i and broadcast y_i = g^x_i.

    ``exponent`` pins x_i instead of drawing it; test harnesses use it to
    enumerate exponent tuples.
    """
    roster = validate_roster(roster)
    if identity not in roster:
        raise IdentityNotInRoster(identity)
    x = random_scalar(params, rng) if exponent is None else exponent
    if not 1 <= x < params.q:
        raise ValueError(f"exponent must lie in [1, q-1], got {x}")
    y = pow(params.g, x, params.p)
    state = ParticipantState(
        identity=identity, roster=roster, params=params, variant=variant,
        signing_key=signing_key, x=x, y=y, phase=Phase.SENT_ROUND1, members=roster,
    )
    return state, Round1Msg(identity, y)


def edge_token(shared: int, token_context: bytes, params: GroupParams) -> Digest:
    """z' = H(k', sid) for the DH value k' shared across one cycle edge."""
    return oracle_eval(OracleTag.H, [encode_element(shared, params), token_context])


def _round2(
    state: ParticipantState, rng: random.Random, mask: Digest | None = None
) -> tuple[ParticipantState, Round2Msg]:
    """Edge tokens, z_i and its signature, for whichever stage ``state`` is in.

    ``mask`` is XORed into the broadcast z; only the insider attack sets it.
    """
    p, members, i = state.params, state.members, state.position
    n = len(members)
    left_y = state.ys[members[(i - 1) % n]]
    right_y = state.ys[members[(i + 1) % n]]
    left = edge_token(pow(left_y, state.x, p.p), state.token_context, p)
    right = edge_token(pow(right_y, state.x, p.p), state.token_context, p)
    z = xor(left, right)
    if mask is not None:
        z = xor(z, mask)
    sig = state.signing_key.sign(signed_payload(state.identity, z, state.context), rng)
    new = replace(state, phase=Phase.SENT_ROUND2, left_token=left, right_token=right)
    return new, Round2Msg(state.identity, z, sig)


def _accept_round1(state: ParticipantState, msgs: Iterable[Round1Msg]) -> ParticipantState:
    _require(state, Phase.SENT_ROUND1, GROUP_STAGE)
    by_id = _collect(msgs, state.roster, MissingRound1)
    ys = {ident: check_element(by_id[ident].y, state.params) for ident in state.roster}
    sid = session_id(state.roster, ys, state.params)
    return replace(state, ys=ys, sid=sid, context=sid, token_context=sid)


def on_round1_complete(
    state: ParticipantState, msgs: Iterable[Round1Msg], rng: random.Random
) -> tuple[ParticipantState, Round2Msg]:
    return _round2(_accept_round1(state, msgs), rng)


def recover_chain(start_token: Digest, start_index: int, zs: Sequence[Digest]) -> tuple[Digest, ...]:
    """Walk the cycle from the party at ``start_index`` rebuilding every edge token.

    ``start_token`` is that party's left token z'_{i-1,i}; z'_{j,j+1} =
    z'_{j-1,j} xor z_j for j = i, ..., i+n-1.  The result is reindexed to
    canonical order regardless of where the walk began.
    """
    n = len(zs)
    tokens: list[Digest | None] = [None] * n
    prev = start_token
    for step in range(n):
        j = (start_index + step) % n
        prev = xor(prev, zs[j])
        tokens[j] = prev
    return tuple(tokens)  # type: ignore[arg-type]


def _derive_keys(state: ParticipantState, tokens: Sequence[Digest]) -> tuple[bytes, bytes | None]:
    fields = [*tokens, state.context]
    if state.variant is Variant.KEY_CONFIRM:
        wide = oracle_eval_wide(fields)
        return wide.left, wide.right
    tag = OracleTag.Hg if state.stage == GROUP_STAGE else OracleTag.Hs
    return oracle_eval(tag, fields), None


def _compute_key(
    state: ParticipantState,
    msgs: Iterable[Round2Msg],
    registry: Registry,
    start_mask: Digest | None = None,
) -> ParticipantState:
    _require(state, Phase.SENT_ROUND2)
    by_id = _collect(msgs, state.members, MissingRound2)
    zs = tuple(by_id[i].z for i in state.members)
    state = replace(state, zs=zs)
    if oracles.xor_all(zs) != oracles.ZERO:
        return abort(state, XOR_SUM_NONZERO)
    for ident in state.members:
        m = by_id[ident]
        if not registry.verify(ident, signed_payload(ident, m.z, state.context), m.sig):
            return abort(state, bad_signature(ident))
    start = state.left_token if start_mask is None else xor(state.left_token, start_mask)
    tokens = recover_chain(start, state.position, zs)
    key, kc_key = _derive_keys(state, tokens)
    return replace(state, phase=Phase.KEY_COMPUTED, tokens=tokens, key=key, kc_key=kc_key)


def compute_group_key(
    state: ParticipantState, msgs: Iterable[Round2Msg], registry: Registry
) -> ParticipantState:
    """XOR-sum and signature checks, chain recovery, then k_i (or (k_i, k_i^kc))."""
    if state.stage != GROUP_STAGE:
        raise WrongPhase("compute_group_key called on a subgroup-stage state")
    return _compute_key(state, msgs, registry)


def p2p_key(state: ParticipantState, peer: str) -> bytes:
    """Pairwise key k_{i,j}; the pair is ordered by roster index so k_{i,j} = k_{j,i}."""
    if state.sid is None:
        raise WrongPhase(f"{state.identity}: peer values unknown before round 1 completes")
    if peer not in state.roster:
        raise PeerNotInRoster(peer)
    if peer == state.identity:
        raise SelfPeer(peer)
    p = state.params
    shared = pow(state.ys[peer], state.x, p.p)
    a, b = sorted((state.identity, peer), key=state.roster.index)
    pair = [encode_fields([ident.encode(), encode_element(state.ys[ident], p)]) for ident in (a, b)]
    return oracle_eval(OracleTag.Hp, [encode_element(shared, p), *pair])


def _enter_subgroup(
    state: ParticipantState, spid: Sequence[str], *, tokens_use_ssid: bool = False
) -> ParticipantState:
    if state.stage != GROUP_STAGE or state.sid is None or state.phase in (Phase.INIT, Phase.SENT_ROUND1):
        raise WrongPhase(f"{state.identity}: group-stage round 1 must complete first")
    if state.phase is Phase.ABORTED:
        raise WrongPhase(f"{state.identity}: group stage aborted")
    spid = tuple(spid)
    outsiders = [i for i in spid if i not in state.roster]
    if outsiders:
        raise SubgroupNotSubsetOfRoster(f"{outsiders} not in roster")
    if len(set(spid)) != len(spid):
        raise DuplicateIdentity(f"subgroup has repeated identities: {spid}")
    if len(spid) >= len(state.roster):
        raise SubgroupNotSubsetOfRoster("subgroup must be a proper subset of the roster")
    if state.identity not in spid:
        raise NotInSubgroup(state.identity)
    if len(spid) < MIN_MEMBERS:
        raise SubgroupTooSmall(f"need at least {MIN_MEMBERS} subgroup members, got {len(spid)}")
    ssid = session_id(spid, state.ys, state.params)
    return replace(
        state, stage=SUBGROUP_STAGE, members=spid, phase=Phase.SENT_ROUND1,
        context=ssid, token_context=ssid if tokens_use_ssid else state.sid,
        left_token=None, right_token=None, zs=(), tokens=(), key=None, kc_key=None,
        confirmation=None, abort_reason=None,
    )


def subgroup_round1(
    state: ParticipantState, spid: Sequence[str], rng: random.Random, *, tokens_use_ssid: bool = False
) -> tuple[ParticipantState, Round2Msg]:
    """Subgroup round, reusing x_i and the group-stage y values.

    Tokens hash the full sid by default; ``tokens_use_ssid`` switches them to
    the subgroup's ssid.  The signature always covers ssid.
    """
    return _round2(_enter_subgroup(state, spid, tokens_use_ssid=tokens_use_ssid), rng)


def compute_subgroup_key(
    state: ParticipantState, msgs: Iterable[Round2Msg], registry: Registry
) -> ParticipantState:
    if state.stage != SUBGROUP_STAGE:
        raise WrongPhase("compute_subgroup_key called on a group-stage state")
    return _compute_key(state, msgs, registry)


def kc_message(state: ParticipantState, rng: random.Random) -> tuple[ParticipantState, KCMsg]:
    """M_i = Hkc(k_i^kc, sid), signed together with the identity and sid."""
    if state.variant is not Variant.KEY_CONFIRM:
        raise WrongVariant("key confirmation only exists in the key-confirm variant")
    _require(state, Phase.KEY_COMPUTED)
    m = oracle_eval(OracleTag.Hkc, [state.kc_key, state.context])
    sig = state.signing_key.sign(signed_payload(state.identity, m, state.context), rng)
    return replace(state, phase=Phase.SENT_KC, confirmation=m), KCMsg(state.identity, m, sig)


def finalize_kc(state: ParticipantState, msgs: Iterable[KCMsg], registry: Registry) -> ParticipantState:
    _require(state, Phase.SENT_KC)
    by_id = _collect(msgs, state.members, MissingKC)
    for ident in state.members:
        m = by_id[ident]
        if not registry.verify(ident, signed_payload(ident, m.m, state.context), m.sig):
            return abort(state, bad_signature(ident))
    if any(by_id[i].m != state.confirmation for i in state.members):
        return abort(state, CONFIRMATION_MISMATCH)
    return replace(state, phase=Phase.ACCEPTED)

"""Two colluding insiders splitting their common neighbour's key from the group.

The insiders U_{i-1} and U_{i+1} each XOR a shared mask r_M into their
broadcast z.  The mask appears twice in the global XOR-sum, so the check
passes and every signature is genuine, yet the chain walk diverges: parties
other than the victim see edges (i-1,i) and (i,i+1) masked, while the victim
sees every other edge masked.

The right-hand insider would, left to itself, land on the victim's chain, so
it starts its walk from a masked left token to stay with the majority.
"""
from __future__ import annotations

import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from gkelab.auth import Registry
from gkelab.errors import NotAnInsider
from gkelab.group import GroupParams, encode_element
from gkelab.oracles import DIGEST_SIZE, ZERO, Digest, OracleTag, oracle_eval, oracle_eval_wide, xor
from gkelab.protocol import (
    GROUP_STAGE,
    SUBGROUP_STAGE,
    ParticipantState,
    Round1Msg,
    Round2Msg,
    Variant,
    _accept_round1,
    _compute_key,
    _enter_subgroup,
    _round2,
    session_id,
)


@dataclass(frozen=True)
class AdversaryConfig:
    """``victim`` is a 1-based roster position; the insiders are its cyclic
    neighbours on the attacked stage's cycle (roster or subgroup)."""

    victim: int
    rmask: bytes
    stage: str = GROUP_STAGE

    def __post_init__(self):
        if len(self.rmask) != DIGEST_SIZE:
            raise ValueError(f"rmask must be {DIGEST_SIZE} bytes, got {len(self.rmask)}")
        if self.victim < 1:
            raise ValueError("victim is a 1-based roster position")
        if self.stage not in (GROUP_STAGE, SUBGROUP_STAGE):
            raise ValueError(f"unknown attack stage {self.stage!r}")

    @property
    def neutral(self) -> bool:
        """A zero mask leaves every message identical to an honest run."""
        return self.rmask == ZERO

    def victim_identity(self, roster: Sequence[str]) -> str:
        return roster[self.victim - 1]

    def insiders(self, roster: Sequence[str], members: Sequence[str] | None = None) -> tuple[str, str]:
        """(left, right) neighbours of the victim on the ``members`` cycle."""
        members = roster if members is None else members
        v = list(members).index(self.victim_identity(roster))
        n = len(members)
        return members[(v - 1) % n], members[(v + 1) % n]

    def to_dict(self) -> dict:
        return {"victim": self.victim, "rmask": self.rmask.hex(), "stage": self.stage}

    @classmethod
    def from_dict(cls, d: Mapping) -> AdversaryConfig:
        return cls(victim=int(d["victim"]), rmask=bytes.fromhex(d["rmask"]), stage=d.get("stage", GROUP_STAGE))


def _check_insider(state: ParticipantState, config: AdversaryConfig, members: Sequence[str]) -> None:
    if state.identity not in config.insiders(state.roster, members):
        raise NotAnInsider(f"{state.identity} is not adjacent to the victim")


def malicious_round2(
    state: ParticipantState, config: AdversaryConfig, msgs: Iterable[Round1Msg], rng: random.Random
) -> tuple[ParticipantState, Round2Msg]:
    """Honest round 2 except that the broadcast z carries r_M; the signature covers the masked z."""
    _check_insider(state, config, state.roster)
    return _round2(_accept_round1(state, msgs), rng, mask=config.rmask)


def malicious_subgroup_round1(
    state: ParticipantState,
    spid: Sequence[str],
    config: AdversaryConfig,
    rng: random.Random,
    *,
    tokens_use_ssid: bool = False,
) -> tuple[ParticipantState, Round2Msg]:
    _check_insider(state, config, spid)
    entered = _enter_subgroup(state, spid, tokens_use_ssid=tokens_use_ssid)
    return _round2(entered, rng, mask=config.rmask)


def insider_compute_key(
    state: ParticipantState, msgs: Iterable[Round2Msg], registry: Registry, config: AdversaryConfig
) -> ParticipantState:
    """Key computation for an insider, landing on the non-victims' key."""
    _check_insider(state, config, state.members)
    _, right = config.insiders(state.roster, state.members)
    return _compute_key(state, msgs, registry, start_mask=config.rmask if state.identity == right else None)


@dataclass(frozen=True)
class DivergencePrediction:
    honest_key: bytes
    victim_key: bytes
    honest_tokens: tuple[Digest, ...]
    victim_tokens: tuple[Digest, ...]


def predict_divergence(
    exponents: Mapping[str, int],
    config: AdversaryConfig,
    params: GroupParams,
    *,
    spid: Sequence[str] | None = None,
    variant: Variant = Variant.ORIGINAL,
    tokens_use_ssid: bool = False,
) -> DivergencePrediction:
    """Both keys of an attacked run, computed straight from every secret exponent.

    ``exponents`` is ordered by roster.  Pass ``spid`` when the attack
    targets the subgroup stage.
    """
    roster = list(exponents)
    ys = {u: pow(params.g, x, params.p) for u, x in exponents.items()}
    sid = session_id(roster, ys, params)
    if config.stage == SUBGROUP_STAGE:
        if spid is None:
            raise ValueError("subgroup attack needs spid")
        members = list(spid)
        context = session_id(members, ys, params)
        token_context = context if tokens_use_ssid else sid
        tag = OracleTag.Hs
    else:
        members, context, token_context, tag = roster, sid, sid, OracleTag.Hg

    n = len(members)
    true_tokens = []
    for j in range(n):
        a, b = exponents[members[j]], exponents[members[(j + 1) % n]]
        shared = pow(params.g, a * b % params.q, params.p)
        true_tokens.append(oracle_eval(OracleTag.H, [encode_element(shared, params), token_context]))

    v = members.index(config.victim_identity(roster))
    victim_edges = {(v - 1) % n, v}
    honest = tuple(xor(t, config.rmask) if j in victim_edges else t for j, t in enumerate(true_tokens))
    victim = tuple(t if j in victim_edges else xor(t, config.rmask) for j, t in enumerate(true_tokens))

    def derive(tokens):
        if variant is Variant.KEY_CONFIRM:
            return oracle_eval_wide([*tokens, context]).left
        return oracle_eval(tag, [*tokens, context])

    return DivergencePrediction(derive(honest), derive(victim), honest, victim)

"""Deterministic broadcast simulation, transcripts, and outcome checks.

A run is fully determined by its :class:`Scenario`.  The master seed is
hashed with a label ("party:3", "registry", ...) to give each consumer its
own ``random.Random``, so transcripts replay byte-for-byte.
"""
from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from gkelab import __version__
from gkelab.adversary import AdversaryConfig, insider_compute_key, malicious_round2, malicious_subgroup_round1
from gkelab.auth import Registry, Signature, keypair
from gkelab.errors import InvalidElement, InvalidScenario, MalformedTranscript, RoundIncomplete, UnexpectedMessage
from gkelab.group import PRESETS, GroupParams, get_preset, validate_element
from gkelab.oracles import DIGEST_SIZE, ZERO, xor_all
from gkelab.protocol import (
    GROUP_STAGE,
    SUBGROUP_STAGE,
    KCMsg,
    ParticipantState,
    Phase,
    Round1Msg,
    Round2Msg,
    Variant,
    abort,
    compute_group_key,
    compute_subgroup_key,
    decode_message,
    encode_message,
    finalize_kc,
    kc_message,
    key_fingerprint,
    on_round1_complete,
    session_id,
    signed_payload,
    start_session,
    subgroup_round1,
)

SCHEMA = "gkelab-transcript/1"

PROTOCOLS = {
    "mbd-p": (Variant.ORIGINAL, False),
    "mbd-s": (Variant.ORIGINAL, True),
    "mbd-p-kc": (Variant.KEY_CONFIRM, False),
    "mbd-s-kc": (Variant.KEY_CONFIRM, True),
}

AGREEMENT = "agreement"
VICTIM_DIVERGENCE = "victim-divergence"
ABORT_DETECTED = "abort-detected"
UNEXPECTED = "unexpected"
_SEVERITY = [AGREEMENT, VICTIM_DIVERGENCE, ABORT_DETECTED, UNEXPECTED]

MISSING_KC = "MissingKC"


def derive_rng(seed: int, label: str) -> random.Random:
    digest = hashlib.sha256(seed.to_bytes(8, "big") + label.encode()).digest()
    return random.Random(int.from_bytes(digest, "big"))


def random_rmask(seed: int) -> bytes:
    return derive_rng(seed, "rmask").randbytes(DIGEST_SIZE)


@dataclass(frozen=True)
class Scenario:
    protocol: str
    n: int
    seed: int
    group: str = "toy"
    subgroup: tuple[int, ...] | None = None
    adversary: AdversaryConfig | None = None
    subgroup_tokens_use_ssid: bool = False

    @property
    def variant(self) -> Variant:
        return PROTOCOLS[self.protocol][0]

    @property
    def has_subgroup_stage(self) -> bool:
        return PROTOCOLS[self.protocol][1]

    @property
    def roster(self) -> tuple[str, ...]:
        return tuple(f"U{i}" for i in range(1, self.n + 1))

    @property
    def spid(self) -> tuple[str, ...] | None:
        """Subgroup identities; defaults to everyone but the last member."""
        if not self.has_subgroup_stage:
            return None
        positions = self.subgroup if self.subgroup is not None else tuple(range(1, self.n))
        return tuple(f"U{i}" for i in positions)

    @property
    def active_adversary(self) -> AdversaryConfig | None:
        if self.adversary is None or self.adversary.neutral:
            return None
        return self.adversary

    def problems(self) -> list[str]:
        out = []
        if self.protocol not in PROTOCOLS:
            return [f"protocol: unknown {self.protocol!r}, choose from {sorted(PROTOCOLS)}"]
        if self.n < 3:
            out.append(f"n: need at least 3 parties, got {self.n}")
        if self.group not in PRESETS:
            out.append(f"group: unknown preset {self.group!r}")
        if not 0 <= self.seed < 2**64:
            out.append("seed: must fit in an unsigned 64-bit integer")
        if self.subgroup is not None and not self.has_subgroup_stage:
            out.append("subgroup: only the mbd-s protocols have a subgroup stage")
        spid_positions = None
        if self.has_subgroup_stage:
            spid_positions = self.subgroup if self.subgroup is not None else tuple(range(1, self.n))
            if any(not 1 <= i <= self.n for i in spid_positions):
                out.append(f"subgroup: positions must lie in 1..{self.n}")
            if len(set(spid_positions)) != len(spid_positions):
                out.append("subgroup: repeated position")
            if not 3 <= len(spid_positions) < self.n:
                out.append(f"subgroup: size must be in [3, {self.n - 1}], got {len(spid_positions)}")
        adv = self.adversary
        if adv is not None:
            if not 1 <= adv.victim <= self.n:
                out.append(f"adversary.victim: must lie in 1..{self.n}")
            if adv.stage == SUBGROUP_STAGE:
                if not self.has_subgroup_stage:
                    out.append("adversary.stage: subgroup attack needs an mbd-s protocol")
                elif spid_positions is not None and adv.victim not in spid_positions:
                    out.append("adversary.victim: must be a subgroup member for a subgroup attack")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise InvalidScenario(problems)

    def to_dict(self) -> dict:
        d = {"protocol": self.protocol, "n": self.n, "group": self.group, "seed": self.seed}
        if self.has_subgroup_stage:
            d["subgroup"] = [int(u[1:]) for u in self.spid]
            d["subgroup_tokens_use_ssid"] = self.subgroup_tokens_use_ssid
        # a zero mask behaves exactly like no adversary and is recorded as such
        d["adversary"] = self.active_adversary.to_dict() if self.active_adversary else None
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> Scenario:
        adv = d.get("adversary")
        sub = d.get("subgroup")
        return cls(
            protocol=d["protocol"], n=int(d["n"]), seed=int(d["seed"]), group=d.get("group", "toy"),
            subgroup=tuple(int(i) for i in sub) if sub is not None else None,
            adversary=AdversaryConfig.from_dict(adv) if adv else None,
            subgroup_tokens_use_ssid=bool(d.get("subgroup_tokens_use_ssid", False)),
        )


class BroadcastBus:
    """Synchronous, lossless broadcast with a round barrier.

    Every member posts exactly once per round; :meth:`deliver` refuses to
    release a round until all have, then hands the same ordered records
    (sender order = member order) to everyone.
    """

    def __init__(self):
        self.log: list[tuple[str, str, bytes]] = []
        self._label: str | None = None
        self._members: tuple[str, ...] = ()
        self._pending: dict[str, bytes] = {}

    def open_round(self, label: str, members: Sequence[str]) -> None:
        if self._label is not None:
            raise RoundIncomplete(f"round {self._label!r} still open")
        self._label, self._members, self._pending = label, tuple(members), {}

    def post(self, sender: str, record: bytes) -> None:
        if self._label is None:
            raise RoundIncomplete("no round open")
        if sender not in self._members or sender in self._pending:
            raise UnexpectedMessage(f"{sender!r} cannot post in round {self._label!r}")
        self._pending[sender] = record

    def deliver(self) -> tuple[bytes, ...]:
        missing = [m for m in self._members if m not in self._pending]
        if missing:
            raise RoundIncomplete(f"round {self._label!r} waiting on {missing}")
        records = tuple(self._pending[m] for m in self._members)
        self.log.extend((self._label, m, self._pending[m]) for m in self._members)
        self._label = None
        return records


@dataclass
class Transcript:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Transcript:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedTranscript(f"not JSON: {exc}") from exc
        if not isinstance(data, dict) or data.get("schema") != SCHEMA:
            raise MalformedTranscript(f"missing or unknown schema tag (want {SCHEMA})")
        return cls(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> Transcript:
        return cls.from_json(Path(path).read_text())


@dataclass
class SimulationResult:
    scenario: Scenario
    transcript: Transcript
    registry: Registry
    group_states: dict[str, ParticipantState]
    subgroup_states: dict[str, ParticipantState] = field(default_factory=dict)

    @property
    def exponents(self) -> dict[str, int]:
        return {u: s.x for u, s in self.group_states.items()}


def _message_record(msg, params: GroupParams) -> dict:
    if isinstance(msg, Round1Msg):
        return {"identity": msg.identity, "y": msg.y.to_bytes(params.element_size, "big").hex()}
    payload_key, payload = ("z", msg.z) if isinstance(msg, Round2Msg) else ("m", msg.m)
    return {"identity": msg.identity, payload_key: payload.hex(), "sig": msg.sig.to_bytes(params).hex()}


def _outcome(state: ParticipantState) -> dict:
    return {
        "identity": state.identity,
        "phase": state.phase.label,
        "abort_reason": state.abort_reason,
        "key_fingerprint": key_fingerprint(state.key).hex() if state.holds_key else None,
    }


def _exchange(bus: BroadcastBus, label: str, members, outgoing: dict, params: GroupParams) -> list:
    bus.open_round(label, members)
    for u in members:
        bus.post(u, encode_message(outgoing[u], params))
    return [decode_message(r, params) for r in bus.deliver()]


def _confirm(bus, label, members, states, rng, registry, params) -> None:
    """Key-confirmation round; a party left without every peer's M aborts."""
    live = [u for u in members if states[u].phase is Phase.KEY_COMPUTED]
    if not live:
        return
    if len(live) < len(members):
        for u in live:
            states[u] = abort(states[u], MISSING_KC)
        return
    outgoing = {}
    for u in members:
        states[u], outgoing[u] = kc_message(states[u], rng[u])
    received = _exchange(bus, label, members, outgoing, params)
    for u in members:
        states[u] = finalize_kc(states[u], received, registry)


def simulate(scenario: Scenario) -> SimulationResult:
    scenario.validate()
    params = get_preset(scenario.group)
    roster, variant = scenario.roster, scenario.variant
    adv = scenario.active_adversary

    key_rng = derive_rng(scenario.seed, "registry")
    signing = {u: keypair(params, key_rng)[0] for u in roster}
    registry = Registry([(u, signing[u].verify_key) for u in roster])
    rng = {u: derive_rng(scenario.seed, f"party:{k}") for k, u in enumerate(roster, 1)}
    bus = BroadcastBus()

    # group stage
    states: dict[str, ParticipantState] = {}
    outgoing = {}
    for u in roster:
        states[u], outgoing[u] = start_session(u, roster, params, variant, rng[u], signing[u])
    r1 = _exchange(bus, "round1", roster, outgoing, params)

    group_insiders = adv.insiders(roster) if adv and adv.stage == GROUP_STAGE else ()
    for u in roster:
        if u in group_insiders:
            states[u], outgoing[u] = malicious_round2(states[u], adv, r1, rng[u])
        else:
            states[u], outgoing[u] = on_round1_complete(states[u], r1, rng[u])
    r2 = _exchange(bus, "round2", roster, outgoing, params)
    for u in roster:
        if u in group_insiders:
            states[u] = insider_compute_key(states[u], r2, registry, adv)
        else:
            states[u] = compute_group_key(states[u], r2, registry)
    if variant is Variant.KEY_CONFIRM:
        _confirm(bus, "kc", roster, states, rng, registry, params)
    stage_logs = [(GROUP_STAGE, roster, dict(states))]

    # subgroup stage, only when every subgroup member finished the group stage
    sub_states: dict[str, ParticipantState] = {}
    spid = scenario.spid
    if spid is not None and all(states[u].phase is not Phase.ABORTED for u in spid):
        use_ssid = scenario.subgroup_tokens_use_ssid
        sub_insiders = adv.insiders(roster, spid) if adv and adv.stage == SUBGROUP_STAGE else ()
        outgoing = {}
        for u in spid:
            if u in sub_insiders:
                sub_states[u], outgoing[u] = malicious_subgroup_round1(
                    states[u], spid, adv, rng[u], tokens_use_ssid=use_ssid)
            else:
                sub_states[u], outgoing[u] = subgroup_round1(states[u], spid, rng[u], tokens_use_ssid=use_ssid)
        sr = _exchange(bus, "subgroup-round1", spid, outgoing, params)
        for u in spid:
            if u in sub_insiders:
                sub_states[u] = insider_compute_key(sub_states[u], sr, registry, adv)
            else:
                sub_states[u] = compute_subgroup_key(sub_states[u], sr, registry)
        if variant is Variant.KEY_CONFIRM:
            _confirm(bus, "subgroup-kc", spid, sub_states, rng, registry, params)
        stage_logs.append((SUBGROUP_STAGE, spid, sub_states))

    transcript = _build_transcript(scenario, params, registry, bus.log, stage_logs)
    return SimulationResult(scenario, transcript, registry, states, sub_states)


_STAGE_ROUNDS = {
    GROUP_STAGE: ("round1", "round2", "kc"),
    SUBGROUP_STAGE: ("subgroup-round1", "subgroup-kc"),
}


def _build_transcript(scenario, params, registry, log, stage_logs) -> Transcript:
    stages = []
    for name, members, states in stage_logs:
        rounds = []
        for label in _STAGE_ROUNDS[name]:
            msgs = [_message_record(decode_message(rec, params), params) for lab, _, rec in log if lab == label]
            if msgs:
                rounds.append({"label": label, "messages": msgs})
        stages.append({
            "name": name,
            "members": list(members),
            "rounds": rounds,
            "outcomes": [_outcome(states[u]) for u in members],
        })
    data = {
        "schema": SCHEMA,
        "scenario": scenario.to_dict(),
        "group": params.name,
        "registry": registry.to_records(),
        "stages": stages,
        "metadata": {
            "generator": f"gkelab {__version__}",
            "rounds": len({lab for lab, _, _ in log}),
            "messages": len(log),
        },
    }
    return Transcript(data)


def run_scenario(scenario: Scenario) -> Transcript:
    return simulate(scenario).transcript


# --- transcript checks --------------------------------------------------------------------------


@dataclass
class VerificationResult:
    ok: bool
    diagnostics: list[str]

    def __bool__(self) -> bool:
        return self.ok


def _load_common(t: Transcript):
    d = t.data
    try:
        if d.get("schema") != SCHEMA:
            raise MalformedTranscript(f"unknown schema {d.get('schema')!r}")
        scenario = Scenario.from_dict(d["scenario"])
        params = get_preset(d["group"])
        registry = Registry.from_records(d["registry"], params)
        stages = d["stages"]
        for st in stages:
            missing = {"name", "members", "rounds", "outcomes"} - set(st)
            if missing:
                raise MalformedTranscript(f"stage lacks {sorted(missing)}")
    except MalformedTranscript:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedTranscript(f"transcript structure: {exc!r}") from exc
    return scenario, params, registry, stages


def _rounds(stage: Mapping) -> dict[str, list]:
    return {r["label"]: r["messages"] for r in stage["rounds"]}


def _signed_round(label, msgs, members, payload_key, context, registry, params, diags):
    """Check identity order and every signature; returns the payload digests."""
    ids = [m.get("identity") for m in msgs]
    if ids != list(members):
        diags.append(f"{label}: senders {ids} do not match members {list(members)}")
    payloads = []
    for k, m in enumerate(msgs):
        try:
            payload = bytes.fromhex(m[payload_key])
            sig = Signature.from_bytes(bytes.fromhex(m["sig"]), params)
        except (KeyError, ValueError, TypeError):
            diags.append(f"{label}[{k}]: malformed message")
            continue
        if len(payload) != DIGEST_SIZE:
            diags.append(f"{label}[{k}] from {m['identity']}: {payload_key} has wrong length")
            continue
        payloads.append(payload)
        if not registry.verify(m["identity"], signed_payload(m["identity"], payload, context), sig):
            diags.append(f"{label}[{k}] from {m['identity']}: signature does not verify")
    return payloads


def verify_transcript(t: Transcript) -> VerificationResult:
    """Independently re-check every signature and XOR-sum in a transcript.

    Also checks that recorded outcomes are consistent with the broadcasts:
    nobody holds a key over a nonzero XOR-sum, and nobody accepts when the
    confirmation values disagree.
    """
    scenario, params, registry, stages = _load_common(t)
    diags: list[str] = []
    try:
        variant = scenario.variant
    except KeyError:
        raise MalformedTranscript(f"unknown protocol {scenario.protocol!r}") from None
    if list(registry) != list(scenario.roster):
        diags.append("registry identities do not match the roster")
    names = [s["name"] for s in stages]
    if not names or names[0] != GROUP_STAGE:
        diags.append("transcript has no group stage")
        return VerificationResult(False, diags)

    ys: dict[str, int] | None = None
    sid = None
    for stage in stages:
        name, members = stage["name"], stage["members"]
        rounds = _rounds(stage)
        if name == GROUP_STAGE:
            if members != list(scenario.roster):
                diags.append("group stage members differ from roster")
            ys = {}
            r1 = rounds.get("round1", [])
            if [m.get("identity") for m in r1] != members:
                diags.append("round1: senders do not match members")
            for k, m in enumerate(r1):
                try:
                    ys[m["identity"]] = validate_element(bytes.fromhex(m["y"]), params)
                except (KeyError, ValueError, TypeError, InvalidElement) as exc:
                    diags.append(f"round1[{k}]: invalid public value ({exc})")
            if set(ys) != set(members):
                return VerificationResult(False, diags)
            sid = session_id(members, ys, params)
            context, z_label, kc_label = sid, "round2", "kc"
        elif name == SUBGROUP_STAGE:
            if scenario.spid is None or members != list(scenario.spid):
                diags.append("subgroup stage members differ from scenario")
            if ys is None or not set(members) <= set(ys):
                diags.append("subgroup members lack group-stage public values")
                continue
            context, z_label, kc_label = session_id(members, ys, params), "subgroup-round1", "subgroup-kc"
        else:
            diags.append(f"unknown stage {name!r}")
            continue

        outcomes = stage["outcomes"]
        if [o.get("identity") for o in outcomes] != members:
            diags.append(f"{name}: outcome identities do not match members")
        holders = [o for o in outcomes if o.get("key_fingerprint")]
        for o in outcomes:
            try:
                phase = Phase.from_label(o["phase"])
            except (KeyError, AttributeError):
                diags.append(f"{name}: bad phase for {o.get('identity')}")
                continue
            holds = phase is (Phase.KEY_COMPUTED if variant is Variant.ORIGINAL else Phase.ACCEPTED)
            if holds != bool(o.get("key_fingerprint")):
                diags.append(f"{name}: {o.get('identity')} fingerprint inconsistent with phase {phase.label}")

        if z_label not in rounds:
            diags.append(f"{name}: missing {z_label}")
            continue
        zs = _signed_round(z_label, rounds[z_label], members, "z", context, registry, params, diags)
        if len(zs) == len(members) and xor_all(zs) != ZERO:
            diags.append(f"{z_label}: XOR of all z values is nonzero")
        if variant is Variant.KEY_CONFIRM and kc_label in rounds:
            ms = _signed_round(kc_label, rounds[kc_label], members, "m", context, registry, params, diags)
            if len(set(ms)) > 1 and holders:
                diags.append(f"{kc_label}: confirmation values differ yet a party accepted")
        elif variant is Variant.KEY_CONFIRM and holders:
            diags.append(f"{name}: party accepted without a confirmation round")
    return VerificationResult(not diags, diags)


@dataclass
class OutcomeReport:
    classification: str
    stages: list[dict]

    def to_dict(self) -> dict:
        return {"classification": self.classification, "stages": self.stages}


def _classify_stage(stage: Mapping, insiders: set[str]) -> dict:
    outcomes = stage["outcomes"]
    aborted = {o["identity"]: o["abort_reason"] for o in outcomes if o["phase"] == Phase.ABORTED.label}
    fps = {o["identity"]: o["key_fingerprint"] for o in outcomes if o["key_fingerprint"]}
    report = {"stage": stage["name"]}
    if not aborted and len(fps) == len(outcomes):
        counts = Counter(fps.values())
        if len(counts) == 1:
            return {**report, "classification": AGREEMENT, "evidence": {"fingerprint": next(iter(counts))}}
        if len(counts) == 2 and sorted(counts.values())[0] == 1 and len(outcomes) >= 3:
            lone = next(fp for fp, c in counts.items() if c == 1)
            divergent = [u for u, fp in fps.items() if fp == lone]
            return {**report, "classification": VICTIM_DIVERGENCE,
                    "evidence": {"divergent": divergent,
                                 "partition": [[u for u, fp in fps.items() if fp == v] for v in counts]}}
    honest = [o["identity"] for o in outcomes if o["identity"] not in insiders]
    if not fps and honest and all(u in aborted for u in honest):
        return {**report, "classification": ABORT_DETECTED, "evidence": {"abort_reasons": aborted}}
    return {**report, "classification": UNEXPECTED,
            "evidence": {"abort_reasons": aborted, "fingerprints": fps}}


def check_agreement(t: Transcript) -> OutcomeReport:
    """Classify a transcript's outcome from its recorded fingerprints and aborts."""
    scenario, _, _, stages = _load_common(t)
    adv = scenario.active_adversary
    reports = []
    try:
        for stage in stages:
            insiders = set()
            if adv is not None and adv.stage == stage["name"]:
                insiders = set(adv.insiders(scenario.roster, stage["members"]))
            reports.append(_classify_stage(stage, insiders))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedTranscript(f"outcomes: {exc!r}") from exc
    if not reports:
        return OutcomeReport(UNEXPECTED, [])
    overall = max((r["classification"] for r in reports), key=_SEVERITY.index)
    return OutcomeReport(overall, reports)


def expected_classification(scenario: Scenario) -> str:
    if scenario.active_adversary is None:
        return AGREEMENT
    return ABORT_DETECTED if scenario.variant is Variant.KEY_CONFIRM else VICTIM_DIVERGENCE

"""Key-prefixed Schnorr signatures over the session group, and the identity registry.

A signature is ``(e, s)`` where ``e`` is the full challenge digest
``H(R, vk, m)`` and ``s = k + int(e)*sk mod q``.  Verification rebuilds
``R = g^s * vk^(-int(e))`` and re-derives ``e``.  Comparing whole digests
(rather than ``e mod q``) keeps tamper detection sharp even on the toy
group, where q has only 11 values.
"""
from __future__ import annotations

import hmac
import random
from functools import cached_property
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

from gkelab.errors import DuplicateIdentity, InvalidElement
from gkelab.group import (
    Element,
    GroupParams,
    check_element,
    encode_element,
    random_scalar,
    validate_element,
)
from gkelab.oracles import DIGEST_SIZE, signature_challenge


@dataclass(frozen=True)
class Signature:
    e: bytes
    s: int

    def to_bytes(self, params: GroupParams) -> bytes:
        return self.e + self.s.to_bytes(params.scalar_size, "big")

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> Signature | None:
        """Returns None for a blob of the wrong size."""
        if len(data) != DIGEST_SIZE + params.scalar_size:
            return None
        return cls(bytes(data[:DIGEST_SIZE]), int.from_bytes(data[DIGEST_SIZE:], "big"))


def _challenge(r: Element, vk: Element, message: bytes, params: GroupParams) -> bytes:
    return signature_challenge([encode_element(r, params), encode_element(vk, params), message])


@dataclass(frozen=True)
class VerifyKey:
    params: GroupParams
    element: Element

    def __post_init__(self):
        check_element(self.element, self.params)

    def verify(self, message: bytes, sig: Signature | bytes | None) -> bool:
        p = self.params
        if isinstance(sig, (bytes, bytearray)):
            sig = Signature.from_bytes(bytes(sig), p)
        if sig is None or len(sig.e) != DIGEST_SIZE or not 0 <= sig.s < p.q:
            return False
        c = int.from_bytes(sig.e, "big") % p.q
        r = pow(p.g, sig.s, p.p) * pow(self.element, p.q - c, p.p) % p.p
        return hmac.compare_digest(_challenge(r, self.element, message, p), sig.e)

    def to_bytes(self) -> bytes:
        return encode_element(self.element, self.params)


@dataclass(frozen=True)
class SigningKey:
    params: GroupParams
    secret: int = field(repr=False)

    @cached_property
    def verify_key(self) -> VerifyKey:
        return VerifyKey(self.params, pow(self.params.g, self.secret, self.params.p))

    def sign(self, message: bytes, rng: random.Random) -> Signature:
        p = self.params
        k = random_scalar(p, rng)
        r = pow(p.g, k, p.p)
        e = _challenge(r, self.verify_key.element, message, p)
        s = (k + int.from_bytes(e, "big") * self.secret) % p.q
        return Signature(e, s)


def keypair(params: GroupParams, rng: random.Random, secret: int | None = None) -> tuple[SigningKey, VerifyKey]:
    sk = SigningKey(params, random_scalar(params, rng) if secret is None else secret)
    return sk, sk.verify_key


def sign(sk: SigningKey, message: bytes, rng: random.Random) -> Signature:
    return sk.sign(message, rng)


def verify(vk: VerifyKey, message: bytes, sig: Signature | bytes | None) -> bool:
    return vk.verify(message, sig)


class Registry(Mapping):
    """Identity -> VerifyKey, fixed before any session starts."""

    def __init__(self, entries: Mapping[str, VerifyKey] | list[tuple[str, VerifyKey]]):
        items = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
        keys: dict[str, VerifyKey] = {}
        for ident, vk in items:
            if ident in keys:
                raise DuplicateIdentity(ident)
            keys[ident] = vk
        self._keys = keys

    def __getitem__(self, ident: str) -> VerifyKey:
        return self._keys[ident]

    def __iter__(self) -> Iterator[str]:
        return iter(self._keys)

    def __len__(self) -> int:
        return len(self._keys)

    def verify(self, ident: str, message: bytes, sig: Signature | bytes | None) -> bool:
        vk = self._keys.get(ident)
        return vk is not None and vk.verify(message, sig)

    def to_records(self) -> list[dict]:
        return [{"identity": i, "vk": vk.to_bytes().hex()} for i, vk in self._keys.items()]

    @classmethod
    def from_records(cls, records: list[dict], params: GroupParams) -> Registry:
        try:
            return cls([(r["identity"], VerifyKey(params, validate_element(bytes.fromhex(r["vk"]), params)))
                        for r in records])
        except (KeyError, ValueError, InvalidElement) as exc:
            raise ValueError(f"bad registry record: {exc}") from exc

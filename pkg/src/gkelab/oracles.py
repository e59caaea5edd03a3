"""Domain-separated hash oracles and XOR on their digests.

All oracles share one preimage layout::

    tag_byte || (len(field) as 4-byte big-endian || field) * k

hashed with SHAKE-256 to DIGEST_SIZE bytes (twice that for the wide oracle).
The length prefixes make the field list recoverable from the preimage, so
``["ab", "c"]`` and ``["a", "bc"]`` never collide.
"""
from __future__ import annotations

import enum
import hashlib
from collections.abc import Iterable
from dataclasses import dataclass

from gkelab.errors import LengthMismatch, WideTagMisuse

TAU = 256
DIGEST_SIZE = TAU // 8

Digest = bytes


class OracleTag(enum.IntEnum):
    H = 0x01        # edge token: H(k', sid)
    Hg = 0x02       # group key
    Hp = 0x03       # pairwise key
    Hs = 0x04       # subgroup key
    HgWide = 0x05   # (session key, confirmation key)
    Hkc = 0x06      # confirmation message / key fingerprints


# Schnorr challenge hash; kept apart from the six protocol tags.
SIGNATURE_TAG = 0x10


def length_prefixed(field: bytes) -> bytes:
    return len(field).to_bytes(4, "big") + field


def encode_fields(fields: Iterable[bytes]) -> bytes:
    return b"".join(length_prefixed(bytes(f)) for f in fields)


def preimage(tag: int, fields: Iterable[bytes]) -> bytes:
    return bytes([tag]) + encode_fields(fields)


def _shake(tag: int, fields: Iterable[bytes], size: int) -> bytes:
    return hashlib.shake_256(preimage(tag, fields)).digest(size)


def oracle_eval(tag: OracleTag, fields: Iterable[bytes]) -> Digest:
    if tag == OracleTag.HgWide:
        raise WideTagMisuse("HgWide produces 2*tau bits; use oracle_eval_wide")
    return _shake(int(tag), fields, DIGEST_SIZE)


@dataclass(frozen=True)
class WideDigest:
    raw: bytes

    @property
    def left(self) -> Digest:
        return self.raw[:DIGEST_SIZE]

    @property
    def right(self) -> Digest:
        return self.raw[DIGEST_SIZE:]


def oracle_eval_wide(fields: Iterable[bytes]) -> WideDigest:
    return WideDigest(_shake(int(OracleTag.HgWide), fields, 2 * DIGEST_SIZE))


def signature_challenge(fields: Iterable[bytes]) -> Digest:
    return _shake(SIGNATURE_TAG, fields, DIGEST_SIZE)


def xor(a: Digest, b: Digest) -> Digest:
    if len(a) != len(b):
        raise LengthMismatch(f"cannot xor {len(a)}-byte and {len(b)}-byte digests")
    return bytes(x ^ y for x, y in zip(a, b))


def xor_all(digests: Iterable[Digest]) -> Digest:
    acc = bytes(DIGEST_SIZE)
    for d in digests:
        acc = xor(acc, d)
    return acc


ZERO = bytes(DIGEST_SIZE)

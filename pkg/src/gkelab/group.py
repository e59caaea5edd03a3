"""Prime-order subgroup of Z_p^* used for every exponentiation in the protocols.

Elements and scalars are plain ints; the helpers here enforce the ranges.
Two presets ship: ``toy`` (p=23, q=11, g=2), small enough to enumerate, and
``modp-2048``, the 2048-bit MODP safe prime with g=2 generating the
quadratic residues (order q = (p-1)/2).
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from gkelab.errors import InvalidElement

Scalar = int
Element = int


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int
    name: str

    @property
    def element_size(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_size(self) -> int:
        return (self.q.bit_length() + 7) // 8

    def is_element(self, e: int) -> bool:
        return 1 < e < self.p and pow(e, self.q, self.p) == 1


TOY = GroupParams(p=23, q=11, g=2, name="toy")

_MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9"
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
MODP_2048 = GroupParams(p=_MODP_2048_P, q=(_MODP_2048_P - 1) // 2, g=2, name="modp-2048")

PRESETS = {TOY.name: TOY, MODP_2048.name: MODP_2048}


def get_preset(name: str) -> GroupParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown group preset {name!r}; choose from {sorted(PRESETS)}") from None


def random_scalar(params: GroupParams, rng: random.Random) -> Scalar:
    """Uniform scalar in [1, q-1]; zero is excluded so g^x is never the identity."""
    return rng.randint(1, params.q - 1)


def check_element(e: int, params: GroupParams) -> Element:
    if not params.is_element(e):
        raise InvalidElement(f"{e} is not a non-identity member of the order-{params.q} subgroup")
    return e


def exp(base: Element, s: Scalar, params: GroupParams) -> Element:
    check_element(base, params)
    return pow(base, s, params.p)


def encode_element(e: Element, params: GroupParams) -> bytes:
    return e.to_bytes(params.element_size, "big")


def validate_element(data: bytes, params: GroupParams) -> Element:
    """Decode a fixed-width big-endian element and check subgroup membership."""
    if len(data) != params.element_size:
        raise InvalidElement(f"expected {params.element_size} bytes, got {len(data)}")
    return check_element(int.from_bytes(data, "big"), params)

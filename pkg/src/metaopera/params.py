"""Protocol constants and their validation.

Sizes are kept in bytes; the bit-level figures they come from are
272-bit keys, 528-bit signatures/PoPs and a 256-bit hash.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from fractions import Fraction
import math

# Reference figures quoted with the original measurements. They are
# reported next to the model outputs but never used as targets.
TEXT_TX_CONFIRM_MIN = 33.33
TEXT_TX_PRIME_CONFIRM_MIN = 41.67
TEXT_TRANSFER_MIN = 76.5
TEXT_SIDECHAINS_H = 5.251
TABLE_METAOPERA_H = 1.832
TABLE_SIDECHAINS_H = 6.251
TABLE_ROWS_H = {
    "metaopera": {"relay_confirm": 1.112, "proof": 0.025, "target_confirm": 0.695},
    "sidechains": {"relay_confirm": 5.556, "target_confirm": 0.695},
}


@dataclass(frozen=True)
class ProtocolParams:
    tx_bytes: int = 250
    height_bytes: int = 32
    rand_bytes: int = 32
    vk_bytes: int = 34
    sig_bytes: int = 66
    pop_bytes: int = 66
    hash_bits: int = 256
    block_interval: int = 5
    relay_k: int = 400
    target_k: int = 500
    committee_size: int = 400
    t_proof: int = 90
    signer_fraction: Fraction = Fraction(1, 10)

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "signer_fraction":
                if not 0 < value <= 1:
                    raise ValueError(f"signer_fraction must be in (0, 1], got {value}")
                continue
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{f.name} must be an int, got {value!r}")
            if f.name in ("relay_k", "target_k", "t_proof"):
                if value < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {value}")
            elif value <= 0:
                raise ValueError(f"{f.name} must be > 0, got {value}")
        if self.hash_bits % 8:
            raise ValueError("hash_bits must be a whole number of bytes")

    @property
    def hash_bytes(self) -> int:
        return self.hash_bits // 8

    def signer_count(self, size_c: int) -> int:
        """Number of committee members whose keys go into a proof."""
        if size_c < 1:
            raise ValueError(f"committee size must be >= 1, got {size_c}")
        return math.ceil(self.signer_fraction * size_c)

    def with_(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)


DEFAULT_PARAMS = ProtocolParams()

"""Look-alike address comparison used by the poisoning rules.

Wallet UIs elide the middle of addresses, so visually identical means
matching leading and trailing hex digits. The paper-level minimum is one
nibble each side; the defaults here (3 leading, 4 trailing) cover the
documented large-scale incident pair while staying conservative. Both knobs
are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Address


@dataclass(frozen=True, slots=True)
class SimilarityConfig:
    prefix_nibbles: int = 3
    suffix_nibbles: int = 4

    def __post_init__(self) -> None:
        if not 1 <= self.prefix_nibbles + self.suffix_nibbles <= 40:
            raise ValueError("prefix_nibbles + suffix_nibbles must be in [1, 40]")
        if self.prefix_nibbles < 0 or self.suffix_nibbles < 0:
            raise ValueError("nibble counts must be non-negative")


DEFAULT_SIMILARITY = SimilarityConfig()


def similar_hex(a: str, b: str, prefix_nibbles: int, suffix_nibbles: int) -> bool:
    """Core comparison over equal-width lowercase hex strings.

    True iff the strings differ somewhere but share at least the requested
    number of leading and trailing nibbles. Width-agnostic so reduced-width
    test oracles can exercise it exhaustively.
    """
    if len(a) != len(b):
        raise ValueError("similarity requires equal-width hex strings")
    if a == b:
        return False
    if prefix_nibbles and a[:prefix_nibbles] != b[:prefix_nibbles]:
        return False
    if suffix_nibbles and a[-suffix_nibbles:] != b[-suffix_nibbles:]:
        return False
    return True


def addresses_similar(a: Address, b: Address, cfg: SimilarityConfig = DEFAULT_SIMILARITY) -> bool:
    """Symmetric, irreflexive look-alike test over full 40-nibble addresses."""
    return similar_hex(a.nibbles, b.nibbles, cfg.prefix_nibbles, cfg.suffix_nibbles)

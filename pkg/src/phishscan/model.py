"""Core domain types shared across the detection pipeline.

Everything here is immutable after construction and safe to share between
threads. Token amounts are exact unsigned 256-bit integers; USD values are
Decimal and only appear at the valuation boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum

MAX_UINT256 = (1 << 256) - 1


class AddressParseError(ValueError):
    """Raised when text cannot be parsed as a 20-byte hex address."""


class VerdictDecodeError(ValueError):
    """Raised when a serialized verdict line is malformed."""


@dataclass(frozen=True, slots=True)
class Address:
    """20-byte account identifier; equality and hashing are byte-exact."""

    raw: bytes

    def __post_init__(self) -> None:
        if len(self.raw) != 20:
            raise AddressParseError(f"address must be 20 bytes, got {len(self.raw)}")

    @property
    def hex(self) -> str:
        return "0x" + self.raw.hex()

    @property
    def nibbles(self) -> str:
        """40 lowercase hex chars without the 0x prefix."""
        return self.raw.hex()

    def __str__(self) -> str:
        return self.hex

    def __repr__(self) -> str:
        return f"Address({self.hex})"


ZERO_ADDRESS = Address(b"\x00" * 20)


def normalize_address(hex_text: str) -> Address:
    """Parse `0x` + 40 hex chars (any case) into a canonical Address."""
    if not isinstance(hex_text, str) or not hex_text.startswith("0x") or len(hex_text) != 42:
        raise AddressParseError(f"malformed address text: {hex_text!r}")
    try:
        raw = bytes.fromhex(hex_text[2:])
    except ValueError as exc:
        raise AddressParseError(f"non-hex characters in address: {hex_text!r}") from exc
    return Address(raw)


def parse_hash32(hex_text: str) -> bytes:
    """Parse a 0x-prefixed 32-byte hash."""
    if not hex_text.startswith("0x") or len(hex_text) != 66:
        raise ValueError(f"malformed 32-byte hash: {hex_text!r}")
    return bytes.fromhex(hex_text[2:])


def hash_hex(h: bytes) -> str:
    return "0x" + h.hex()


class TransferKind(Enum):
    NATIVE = "native"
    ERC20 = "erc20"
    ERC721 = "erc721"


@dataclass(frozen=True, slots=True)
class Log:
    """One receipt log entry."""

    emitter: Address
    topics: tuple[bytes, ...]
    data: bytes

    def __post_init__(self) -> None:
        if len(self.topics) > 4:
            raise ValueError(f"log has {len(self.topics)} topics, max is 4")
        for t in self.topics:
            if len(t) != 32:
                raise ValueError("log topics must be 32 bytes")


@dataclass(frozen=True, slots=True)
class Transaction:
    """A confirmed transaction with its receipt logs -- the unit of detection."""

    hash: bytes
    from_: Address
    to: Address | None
    value_wei: int
    input: bytes
    status: int  # 1 = success, 0 = failure (receipt-style)
    gas_used: int
    effective_gas_price_wei: int
    block_number: int
    tx_index: int
    logs: tuple[Log, ...] = ()

    def __post_init__(self) -> None:
        if len(self.hash) != 32:
            raise ValueError("transaction hash must be 32 bytes")
        if self.status not in (0, 1):
            raise ValueError(f"status must be 0 or 1, got {self.status}")
        if self.logs and self.status != 1:
            raise ValueError("failed transactions cannot carry logs")
        if not 0 <= self.value_wei <= MAX_UINT256:
            raise ValueError("value_wei out of uint256 range")

    @property
    def success(self) -> bool:
        return self.status == 1


@dataclass(frozen=True, slots=True)
class TransferEvent:
    """A normalized native / ERC-20 / ERC-721 value movement."""

    kind: TransferKind
    token: Address | None
    from_: Address
    to: Address
    amount: int  # wei / raw token units / tokenId
    tx_hash: bytes
    block_number: int
    log_index: int | None = None

    def __post_init__(self) -> None:
        if self.kind is TransferKind.NATIVE:
            if self.token is not None or self.log_index is not None:
                raise ValueError("native transfers carry no token or log index")
        elif self.token is None:
            raise ValueError(f"{self.kind.value} transfer requires a token address")
        if not 0 <= self.amount <= MAX_UINT256:
            raise ValueError("amount out of uint256 range")


@dataclass(frozen=True)
class DecodedCall:
    """Selector plus the semantic parameters the rules consume.

    `params` uses a small fixed vocabulary: recipient, offerer, owner,
    spender, operator, fees_bps, price_wei, transfer_items, value, approved,
    from, to, new_implementation.
    """

    selector: bytes
    function_name: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.selector) != 4:
            raise ValueError("selector must be 4 bytes")
        fees = self.params.get("fees_bps")
        if fees is not None and not 0 <= fees <= 10_000:
            raise ValueError(f"fees_bps out of range: {fees}")


class Category(Enum):
    ICE_PHISHING = "IcePhishing"
    NFT_ORDER = "NftOrder"
    ADDRESS_POISONING = "AddressPoisoning"
    PAYABLE_FUNCTION = "PayableFunction"


class SubCategory(Enum):
    APPROVE = "Approve"
    PERMIT = "Permit"
    SET_APPROVE_FOR_ALL = "SetApproveForAll"
    BULK_TRANSFER = "BulkTransfer"
    PROXY_UPGRADE = "ProxyUpgrade"
    FREE_BUY_ORDER = "FreeBuyOrder"
    ZERO_VALUE = "ZeroValue"
    FAKE_TOKEN = "FakeToken"
    DUST_VALUE = "DustValue"
    AIRDROP_FUNCTION = "AirdropFunction"
    WALLET_FUNCTION = "WalletFunction"


SUBCATEGORIES_OF: dict[Category, frozenset[SubCategory]] = {
    Category.ICE_PHISHING: frozenset(
        {SubCategory.APPROVE, SubCategory.PERMIT, SubCategory.SET_APPROVE_FOR_ALL}
    ),
    Category.NFT_ORDER: frozenset(
        {SubCategory.BULK_TRANSFER, SubCategory.PROXY_UPGRADE, SubCategory.FREE_BUY_ORDER}
    ),
    Category.ADDRESS_POISONING: frozenset(
        {SubCategory.ZERO_VALUE, SubCategory.FAKE_TOKEN, SubCategory.DUST_VALUE}
    ),
    Category.PAYABLE_FUNCTION: frozenset(
        {SubCategory.AIRDROP_FUNCTION, SubCategory.WALLET_FUNCTION}
    ),
}

RULE_IDS: dict[SubCategory, str] = {
    SubCategory.APPROVE: "I-A",
    SubCategory.PERMIT: "I-B",
    SubCategory.SET_APPROVE_FOR_ALL: "I-C",
    SubCategory.BULK_TRANSFER: "II-A",
    SubCategory.PROXY_UPGRADE: "II-B",
    SubCategory.FREE_BUY_ORDER: "II-C",
    SubCategory.ZERO_VALUE: "III-A",
    SubCategory.FAKE_TOKEN: "III-B",
    SubCategory.DUST_VALUE: "III-C",
    SubCategory.AIRDROP_FUNCTION: "IV-A",
    SubCategory.WALLET_FUNCTION: "IV-B",
}


@dataclass(frozen=True, slots=True)
class Evidence:
    """One matched rule and the transactions supporting it."""

    rule_id: str
    supporting_tx_hashes: tuple[bytes, ...]


@dataclass(frozen=True, slots=True)
class Verdict:
    """A detection result with evidence and an optional USD loss."""

    tx_hash: bytes
    category: Category
    sub_category: SubCategory
    scammer: tuple[Address, ...]
    victim: Address
    evidence: tuple[Evidence, ...]
    loss_usd: Decimal | None = None

    def __post_init__(self) -> None:
        if self.sub_category not in SUBCATEGORIES_OF[self.category]:
            raise ValueError(
                f"sub-category {self.sub_category.value} not valid under {self.category.value}"
            )
        if not self.evidence:
            raise ValueError("verdict requires at least one evidence entry")
        if self.loss_usd is not None and self.loss_usd < 0:
            raise ValueError("loss_usd must be >= 0")


def verdict_to_json(v: Verdict) -> str:
    """Serialize one verdict to its wire form (single JSON line, fixed key order)."""
    obj = {
        "txHash": hash_hex(v.tx_hash),
        "category": v.category.value,
        "subCategory": v.sub_category.value,
        "scammer": [a.hex for a in v.scammer],
        "victim": v.victim.hex,
        "evidence": [
            {"ruleId": e.rule_id, "supportingTxHashes": [hash_hex(h) for h in e.supporting_tx_hashes]}
            for e in v.evidence
        ],
        "lossUsd": str(v.loss_usd) if v.loss_usd is not None else None,
    }
    return json.dumps(obj, separators=(",", ":"))


def verdict_from_json(line: str) -> Verdict:
    """Decode one verdict line; inverse of :func:`verdict_to_json`."""
    try:
        obj = json.loads(line)
        return Verdict(
            tx_hash=parse_hash32(obj["txHash"]),
            category=Category(obj["category"]),
            sub_category=SubCategory(obj["subCategory"]),
            scammer=tuple(normalize_address(a) for a in obj["scammer"]),
            victim=normalize_address(obj["victim"]),
            evidence=tuple(
                Evidence(
                    rule_id=e["ruleId"],
                    supporting_tx_hashes=tuple(parse_hash32(h) for h in e["supportingTxHashes"]),
                )
                for e in obj["evidence"]
            ),
            loss_usd=Decimal(obj["lossUsd"]) if obj.get("lossUsd") is not None else None,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise VerdictDecodeError(f"malformed verdict line: {exc}") from exc

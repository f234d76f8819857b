"""Calldata decoding: selector classification, token-standard calls, and
per-market order adapters.

Decoding is total and pure: unrecognized input yields None, malformed
argument bytes are tallied as diagnostics and treated as unrecognized.
Market adapters are bound to contract addresses through markets.csv and
their function layouts ship as JSON files (one per adapter).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import abi
from .ingest import ChainSource, Diagnostics
from .model import Address, DecodedCall, Transaction
from .refdata import LabelRegistry

logger = logging.getLogger(__name__)


class SelectorClass:
    AIRDROP = "Airdrop"
    WALLET = "Wallet"


# ERC-20 / ERC-721 selectors (keccak-derived; re-verified by the test suite
# against an independent hash implementation).
SEL_APPROVE = bytes.fromhex("095ea7b3")  # approve(address,uint256)
SEL_TRANSFER = bytes.fromhex("a9059cbb")  # transfer(address,uint256)
SEL_TRANSFER_FROM = bytes.fromhex("23b872dd")  # transferFrom(address,address,uint256)
SEL_INCREASE_ALLOWANCE = bytes.fromhex("39509351")  # increaseAllowance(address,uint256)
SEL_PERMIT = bytes.fromhex("d505accf")  # ERC-2612 permit
SEL_SET_APPROVAL_FOR_ALL = bytes.fromhex("a22cb465")  # setApprovalForAll(address,bool)
SEL_SAFE_TRANSFER_FROM = bytes.fromhex("42842e0e")  # safeTransferFrom(address,address,uint256)
SEL_SAFE_TRANSFER_FROM_DATA = bytes.fromhex("b88d4fde")  # ... + bytes

PERMIT_TYPES = ["address", "address", "uint256", "uint256", "uint8", "bytes32", "bytes32"]
PERMIT2_SINGLE_TYPES = [
    "address",
    "((address,uint160,uint48,uint48),address,uint256)",
    "bytes",
]


def selector_of(input_bytes: bytes) -> bytes | None:
    """First 4 bytes of calldata, or None when too short."""
    if len(input_bytes) < 4:
        return None
    return input_bytes[:4]


def classify_selector(selector: bytes, registry: LabelRegistry) -> str | None:
    """Airdrop / Wallet class per registry membership, else None."""
    if selector in registry.airdrop_selectors:
        return SelectorClass.AIRDROP
    if selector in registry.wallet_selectors:
        return SelectorClass.WALLET
    return None


def _diag(diagnostics: Diagnostics | None, note: str) -> None:
    if diagnostics is not None:
        diagnostics.decode_errors += 1
        diagnostics.note(note)


def decode_token_call(
    tx: Transaction,
    registry: LabelRegistry | None = None,
    diagnostics: Diagnostics | None = None,
) -> DecodedCall | None:
    """Decode approve-family, transfer-family, permit and permit2 calls."""
    sel = selector_of(tx.input)
    if sel is None:
        return None
    try:
        if sel == SEL_APPROVE:
            spender, value = abi.decode_call_args(["address", "uint256"], tx.input)
            return DecodedCall(sel, "approve", {"owner": tx.from_, "spender": spender, "value": value})
        if sel == SEL_INCREASE_ALLOWANCE:
            spender, value = abi.decode_call_args(["address", "uint256"], tx.input)
            return DecodedCall(
                sel, "increaseAllowance", {"owner": tx.from_, "spender": spender, "value": value}
            )
        if sel == SEL_TRANSFER:
            to, value = abi.decode_call_args(["address", "uint256"], tx.input)
            return DecodedCall(sel, "transfer", {"from": tx.from_, "to": to, "value": value})
        if sel == SEL_TRANSFER_FROM:
            from_, to, value = abi.decode_call_args(["address", "address", "uint256"], tx.input)
            return DecodedCall(sel, "transferFrom", {"from": from_, "to": to, "value": value})
        if sel == SEL_PERMIT:
            owner, spender, value, _deadline, _v, _r, _s = abi.decode_call_args(
                PERMIT_TYPES, tx.input
            )
            return DecodedCall(sel, "permit", {"owner": owner, "spender": spender, "value": value})
        if sel == SEL_SET_APPROVAL_FOR_ALL:
            operator, approved = abi.decode_call_args(["address", "bool"], tx.input)
            return DecodedCall(
                sel,
                "setApprovalForAll",
                {"owner": tx.from_, "operator": operator, "approved": approved},
            )
        if sel in (SEL_SAFE_TRANSFER_FROM, SEL_SAFE_TRANSFER_FROM_DATA):
            types = ["address", "address", "uint256"]
            if sel == SEL_SAFE_TRANSFER_FROM_DATA:
                types.append("bytes")
            decoded = abi.decode_call_args(types, tx.input)
            return DecodedCall(
                sel,
                "safeTransferFrom",
                {"from": decoded[0], "to": decoded[1], "value": decoded[2]},
            )
        if (
            registry is not None
            and tx.to is not None
            and tx.to in registry.permit2_contracts
            and sel in registry.permit2_selectors
        ):
            owner, single, _sig = abi.decode_call_args(PERMIT2_SINGLE_TYPES, tx.input)
            details, spender, _deadline = single
            token, amount, _expiration, _nonce = details
            return DecodedCall(
                sel,
                "permit2",
                {"owner": owner, "spender": spender, "token": token, "value": amount},
            )
    except abi.AbiDecodeError as exc:
        _diag(diagnostics, f"token call decode failed for 0x{sel.hex()} in {tx.hash.hex()}: {exc}")
        return None
    return None


@dataclass(frozen=True, slots=True)
class OrderInfo:
    """Aggregated view of an NFT market order, as the rules consume it.

    price_wei is the consideration the order promises the seller before any
    fee diversion; fees_bps is the diverted share; recipient is the address
    that actually ends up with the seller-side value.
    """

    market: str
    offerer: Address
    recipient: Address
    price_wei: int
    fees_bps: int
    nft_items: tuple[tuple[Address, int], ...]

    def __post_init__(self) -> None:
        if not 0 <= self.fees_bps <= 10_000:
            raise ValueError(f"fees_bps out of range: {self.fees_bps}")


@dataclass(frozen=True)
class AdapterFunction:
    name: str
    selector: bytes
    inputs: tuple[str, ...]


@dataclass(frozen=True)
class Adapter:
    adapter_id: str
    kind: str  # seaport | blur | helper | proxy
    functions: dict[bytes, AdapterFunction]


def load_adapters(directory: str | Path | None = None) -> dict[str, Adapter]:
    """Load adapter ABI JSON files; defaults to the packaged data directory."""
    adapters: dict[str, Adapter] = {}
    if directory is None:
        root = resources.files("phishscan").joinpath("data/abi")
        entries = [p for p in root.iterdir() if p.name.endswith(".json")]
    else:
        entries = sorted(Path(directory).glob("*.json"))
    for entry in entries:
        obj = json.loads(entry.read_text())
        functions = {}
        for fn in obj["functions"]:
            sel = bytes.fromhex(fn["selector"][2:])
            functions[sel] = AdapterFunction(fn["name"], sel, tuple(fn["inputs"]))
        adapters[obj["adapter"]] = Adapter(obj["adapter"], obj["kind"], functions)
    return adapters


_PACKAGED_ADAPTERS: dict[str, Adapter] | None = None


def packaged_adapters() -> dict[str, Adapter]:
    global _PACKAGED_ADAPTERS
    if _PACKAGED_ADAPTERS is None:
        _PACKAGED_ADAPTERS = load_adapters()
    return _PACKAGED_ADAPTERS


# Seaport item types: 0 native, 1 ERC-20, 2 ERC-721, 3 ERC-1155, 4/5 criteria.
_SEAPORT_NFT_ITEM_TYPES = {2, 3, 4, 5}
_SEAPORT_PAYMENT_ITEM_TYPES = {0, 1}
_BLUR_SIDE_SELL = 1


def decode_market_order(
    tx: Transaction,
    registry: LabelRegistry,
    provider: ChainSource | None = None,
    adapters: dict[str, Adapter] | None = None,
    diagnostics: Diagnostics | None = None,
) -> OrderInfo | DecodedCall | None:
    """Decode an NFT-market interaction into an OrderInfo or a DecodedCall.

    Returns None when tx.to is not a registered market contract or the
    selector is not one the rules consume.
    """
    if tx.to is None:
        return None
    entry = registry.nft_markets.get(tx.to)
    if entry is None:
        return None
    adapters = adapters if adapters is not None else packaged_adapters()
    adapter = adapters.get(entry.adapter)
    if adapter is None:
        _diag(diagnostics, f"no adapter ABI loaded for {entry.adapter}")
        return None
    sel = selector_of(tx.input)
    if sel is None:
        return None
    fn = adapter.functions.get(sel)
    if fn is None:
        return None
    try:
        args = abi.decode_call_args(list(fn.inputs), tx.input)
        if adapter.kind == "seaport":
            return _order_from_seaport(entry.market, args)
        if adapter.kind == "blur":
            return _order_from_blur(entry.market, args)
        if adapter.kind == "helper":
            items, recipient = args
            return DecodedCall(
                sel,
                "bulkTransfer",
                {
                    "transfer_items": tuple((token, token_id) for token, token_id in items),
                    "recipient": recipient,
                },
            )
        if adapter.kind == "proxy":
            (new_implementation,) = args
            owner = provider.proxy_owner(tx.to) if provider is not None else None
            return DecodedCall(
                sel,
                "upgradeTo",
                {"new_implementation": new_implementation, "owner": owner},
            )
    except (abi.AbiDecodeError, ValueError) as exc:
        _diag(diagnostics, f"order decode failed for {entry.adapter} in {tx.hash.hex()}: {exc}")
        return None
    return None


def _order_from_seaport(market: str, args: tuple) -> OrderInfo:
    advanced_order, _resolvers, _conduit_key, fulfill_recipient = args
    parameters = advanced_order[0]
    offerer = parameters[0]
    offer_items = parameters[2]
    consideration = parameters[3]

    nft_items = tuple(
        (item[1], item[2]) for item in offer_items if item[0] in _SEAPORT_NFT_ITEM_TYPES
    )
    price_to_offerer = 0
    total = 0
    best_other: tuple[int, Address] | None = None
    for item_type, _token, _ident, start_amount, _end_amount, recipient in consideration:
        if item_type not in _SEAPORT_PAYMENT_ITEM_TYPES:
            continue
        total += start_amount
        if recipient == offerer:
            price_to_offerer += start_amount
        elif best_other is None or start_amount > best_other[0]:
            best_other = (start_amount, recipient)

    fees_bps = 0 if total == 0 else ((total - price_to_offerer) * 10_000) // total
    if price_to_offerer > 0:
        recipient = offerer
    elif best_other is not None:
        recipient = best_other[1]
    else:
        recipient = fulfill_recipient
    return OrderInfo(
        market=market,
        offerer=offerer,
        recipient=recipient,
        price_wei=price_to_offerer,
        fees_bps=min(fees_bps, 10_000),
        nft_items=nft_items,
    )


def _order_from_blur(market: str, args: tuple) -> OrderInfo:
    sell_input, buy_input = args
    sell_order = sell_input[0] if sell_input[0][1] == _BLUR_SIDE_SELL else buy_input[0]
    (trader, _side, _policy, collection, token_id, _amount, _payment_token, price,
     _listing_time, _expiration, fees, _salt, _extra) = sell_order

    fees_bps = sum(rate for rate, _recipient in fees)
    if fees_bps > 10_000:
        raise abi.AbiDecodeError(f"blur order fee rates sum to {fees_bps} bps")
    if fees_bps >= 10_000 and fees:
        # full diversion: seller-side value lands with the dominant fee recipient
        recipient = max(fees, key=lambda f: f[0])[1]
    else:
        recipient = trader
    return OrderInfo(
        market=market,
        offerer=trader,
        recipient=recipient,
        price_wei=price,
        fees_bps=fees_bps,
        nft_items=((collection, token_id),),
    )

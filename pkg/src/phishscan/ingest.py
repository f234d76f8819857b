"""Block/receipt acquisition and transfer-event extraction.

Two data sources implement the same provider surface: offline JSONL
fixtures (the default for tests and replays) and a JSON-RPC node endpoint.
Only successful transactions yield transfer events, and extraction is
receipts-only: no call-trace internal transfers.
"""

from __future__ import annotations

import csv
import json
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .model import (
    Address,
    Log,
    Transaction,
    TransferEvent,
    TransferKind,
    normalize_address,
    parse_hash32,
)

logger = logging.getLogger(__name__)

# keccak256("Transfer(address,address,uint256)"); shared by ERC-20 (3 topics)
# and ERC-721 (4 topics, tokenId indexed).
TRANSFER_TOPIC = bytes.fromhex("ddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef")
# keccak256("TransferSingle(address,address,address,uint256,uint256)")
TRANSFER_SINGLE_TOPIC = bytes.fromhex(
    "c3d58168c5ae7397731d063d5bbf3d657854427343f4c083240f7aacaa2d0f62"
)
# keccak256("TransferBatch(address,address,address,uint256[],uint256[])")
TRANSFER_BATCH_TOPIC = bytes.fromhex(
    "4a39dc06d4c0dbc64b70af90fd698a233a518aa5d07e595d983b8c0526c8f7fb"
)


class BlockNotFoundError(Exception):
    """The requested block is outside the provider's range."""


class TransportError(Exception):
    """Retryable I/O failure talking to the data source."""


class BalanceUnavailableError(Exception):
    """The provider cannot serve historical balance state."""


@dataclass(frozen=True, slots=True)
class Block:
    number: int
    timestamp: int
    transactions: tuple[Transaction, ...]

    def __post_init__(self) -> None:
        for i, tx in enumerate(self.transactions):
            if tx.tx_index != i:
                raise ValueError(f"block {self.number}: tx index {tx.tx_index} at position {i}")
            if tx.block_number != self.number:
                raise ValueError(f"block {self.number}: tx carries block {tx.block_number}")


@dataclass(frozen=True, slots=True)
class BalanceKey:
    token: Address | None  # None = native
    holder: Address
    block_number: int


@dataclass
class Diagnostics:
    """Counters for degradations that must never become hard failures."""

    malformed_logs: int = 0
    decode_errors: int = 0
    balance_unavailable: int = 0
    notes: list[str] = field(default_factory=list)

    def note(self, text: str) -> None:
        self.notes.append(text)


class ChainSource(Protocol):
    def get_block(self, number: int) -> Block: ...

    def balance_of(self, key: BalanceKey) -> int: ...

    def proxy_owner(self, proxy: Address) -> Address | None: ...


def ingest_block(provider: ChainSource, number: int) -> Block:
    """Fetch one block with full transactions and receipt logs."""
    return provider.get_block(number)


def balance_of(provider: ChainSource, key: BalanceKey) -> int:
    """Holder's balance at the end of block_number - 1 (pre-state of that block)."""
    return provider.balance_of(key)


def extract_transfers(tx: Transaction, diagnostics: Diagnostics | None = None) -> list[TransferEvent]:
    """Normalize a transaction into transfer events, in log order.

    Failed transactions contribute nothing. Logs whose payload has the
    wrong length are skipped and tallied, never raised.
    """
    if not tx.success:
        return []
    events: list[TransferEvent] = []
    if tx.value_wei > 0 and tx.to is not None:
        events.append(
            TransferEvent(
                kind=TransferKind.NATIVE,
                token=None,
                from_=tx.from_,
                to=tx.to,
                amount=tx.value_wei,
                tx_hash=tx.hash,
                block_number=tx.block_number,
            )
        )
    for index, log in enumerate(tx.logs):
        if not log.topics:
            continue
        topic0 = log.topics[0]
        if topic0 == TRANSFER_TOPIC:
            event = _decode_transfer_log(tx, log, index, diagnostics)
            if event is not None:
                events.append(event)
        elif topic0 == TRANSFER_SINGLE_TOPIC:
            events.extend(_decode_1155_single(tx, log, index, diagnostics))
        elif topic0 == TRANSFER_BATCH_TOPIC:
            events.extend(_decode_1155_batch(tx, log, index, diagnostics))
    return events


def _topic_address(topic: bytes) -> Address:
    return Address(topic[12:])


def _skip(diagnostics: Diagnostics | None, why: str) -> None:
    if diagnostics is not None:
        diagnostics.malformed_logs += 1
        diagnostics.note(why)


def _decode_transfer_log(
    tx: Transaction, log: Log, index: int, diagnostics: Diagnostics | None
) -> TransferEvent | None:
    if len(log.topics) == 3:
        if len(log.data) != 32:
            _skip(diagnostics, f"erc20 transfer log with {len(log.data)}-byte data in {log.emitter.hex}")
            return None
        return TransferEvent(
            kind=TransferKind.ERC20,
            token=log.emitter,
            from_=_topic_address(log.topics[1]),
            to=_topic_address(log.topics[2]),
            amount=int.from_bytes(log.data, "big"),
            tx_hash=tx.hash,
            block_number=tx.block_number,
            log_index=index,
        )
    if len(log.topics) == 4:
        if len(log.data) != 0:
            _skip(diagnostics, f"erc721 transfer log with unexpected data in {log.emitter.hex}")
            return None
        return TransferEvent(
            kind=TransferKind.ERC721,
            token=log.emitter,
            from_=_topic_address(log.topics[1]),
            to=_topic_address(log.topics[2]),
            amount=int.from_bytes(log.topics[3], "big"),
            tx_hash=tx.hash,
            block_number=tx.block_number,
            log_index=index,
        )
    _skip(diagnostics, f"transfer log with {len(log.topics)} topics in {log.emitter.hex}")
    return None


def _decode_1155_single(
    tx: Transaction, log: Log, index: int, diagnostics: Diagnostics | None
) -> list[TransferEvent]:
    # ERC-1155 single transfers normalize to erc721-kind events; the rules
    # never inspect 1155 amounts, so a zero-amount move is dropped.
    if len(log.topics) != 4 or len(log.data) != 64:
        _skip(diagnostics, f"malformed TransferSingle log in {log.emitter.hex}")
        return []
    token_id = int.from_bytes(log.data[:32], "big")
    value = int.from_bytes(log.data[32:], "big")
    if value == 0:
        return []
    return [
        TransferEvent(
            kind=TransferKind.ERC721,
            token=log.emitter,
            from_=_topic_address(log.topics[2]),
            to=_topic_address(log.topics[3]),
            amount=token_id,
            tx_hash=tx.hash,
            block_number=tx.block_number,
            log_index=index,
        )
    ]


def _decode_1155_batch(
    tx: Transaction, log: Log, index: int, diagnostics: Diagnostics | None
) -> list[TransferEvent]:
    if len(log.topics) != 4 or len(log.data) < 128 or len(log.data) % 32 != 0:
        _skip(diagnostics, f"malformed TransferBatch log in {log.emitter.hex}")
        return []
    try:
        ids_off = int.from_bytes(log.data[:32], "big")
        values_off = int.from_bytes(log.data[32:64], "big")
        ids = _read_uint_array(log.data, ids_off)
        values = _read_uint_array(log.data, values_off)
        if len(ids) != len(values):
            raise ValueError("ids/values length mismatch")
    except ValueError:
        _skip(diagnostics, f"malformed TransferBatch payload in {log.emitter.hex}")
        return []
    from_, to = _topic_address(log.topics[2]), _topic_address(log.topics[3])
    return [
        TransferEvent(
            kind=TransferKind.ERC721,
            token=log.emitter,
            from_=from_,
            to=to,
            amount=token_id,
            tx_hash=tx.hash,
            block_number=tx.block_number,
            log_index=index,
        )
        for token_id, value in zip(ids, values)
        if value > 0
    ]


def _read_uint_array(data: bytes, offset: int) -> list[int]:
    if offset + 32 > len(data):
        raise ValueError("array offset out of range")
    count = int.from_bytes(data[offset : offset + 32], "big")
    end = offset + 32 + count * 32
    if end > len(data):
        raise ValueError("array payload out of range")
    return [
        int.from_bytes(data[offset + 32 + i * 32 : offset + 64 + i * 32], "big")
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# fixture provider


def _parse_fixture_tx(obj: dict, block_number: int, tx_index: int) -> Transaction:
    logs = tuple(
        Log(
            emitter=normalize_address(entry["address"]),
            topics=tuple(bytes.fromhex(t[2:]) for t in entry.get("topics", [])),
            data=bytes.fromhex(entry.get("data", "0x")[2:]),
        )
        for entry in obj.get("logs", [])
    )
    return Transaction(
        hash=parse_hash32(obj["hash"]),
        from_=normalize_address(obj["from"]),
        to=normalize_address(obj["to"]) if obj.get("to") else None,
        value_wei=int(obj["valueWei"]),
        input=bytes.fromhex(obj.get("input", "0x")[2:]),
        status=int(obj["status"]),
        gas_used=int(obj["gasUsed"]),
        effective_gas_price_wei=int(obj["effectiveGasPriceWei"]),
        block_number=block_number,
        tx_index=tx_index,
        logs=logs,
    )


def parse_fixture_block(line: str) -> Block:
    obj = json.loads(line)
    number = int(obj["number"])
    txs = tuple(
        _parse_fixture_tx(tx_obj, number, i) for i, tx_obj in enumerate(obj.get("txs", []))
    )
    return Block(number=number, timestamp=int(obj["timestamp"]), transactions=txs)


class FixtureProvider:
    """Offline chain source backed by a fixture directory.

    Layout: blocks.jsonl (one block per line), balances.csv
    (token,holder,block,amount; empty token = native; amount is the balance
    at the end of that block), proxies.csv (proxy,owner).
    """

    def __init__(self, directory: str | Path):
        directory = Path(directory)
        blocks_path = directory / "blocks.jsonl"
        if not blocks_path.exists():
            raise TransportError(f"fixture directory has no blocks.jsonl: {directory}")
        self._blocks: dict[int, Block] = {}
        with blocks_path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                block = parse_fixture_block(line)
                self._blocks[block.number] = block
        self._balances: dict[tuple[Address | None, Address], tuple[list[int], list[int]]] = {}
        self._has_balances = False
        balances_path = directory / "balances.csv"
        if balances_path.exists():
            self._has_balances = True
            staged: dict[tuple[Address | None, Address], list[tuple[int, int]]] = {}
            with balances_path.open(newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != ["token", "holder", "block", "amount"]:
                    raise TransportError(f"bad balances.csv header in {directory}")
                for row in reader:
                    if not row or not any(row):
                        continue
                    token = normalize_address(row[0]) if row[0].strip() else None
                    staged.setdefault((token, normalize_address(row[1])), []).append(
                        (int(row[2]), int(row[3]))
                    )
            for key, pts in staged.items():
                pts.sort(key=lambda p: p[0])
                self._balances[key] = ([b for b, _ in pts], [a for _, a in pts])
        self._proxies: dict[Address, Address] = {}
        proxies_path = directory / "proxies.csv"
        if proxies_path.exists():
            with proxies_path.open(newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != ["proxy", "owner"]:
                    raise TransportError(f"bad proxies.csv header in {directory}")
                for row in reader:
                    if row and any(row):
                        self._proxies[normalize_address(row[0])] = normalize_address(row[1])
        logger.info("fixtures loaded: %d blocks from %s", len(self._blocks), directory)

    @property
    def block_numbers(self) -> list[int]:
        return sorted(self._blocks)

    def get_block(self, number: int) -> Block:
        block = self._blocks.get(number)
        if block is None:
            raise BlockNotFoundError(f"block {number} not in fixtures")
        return block

    def iter_blocks(self, from_block: int, to_block: int) -> Iterable[Block]:
        for number in range(from_block, to_block + 1):
            if number in self._blocks:
                yield self._blocks[number]

    def balance_of(self, key: BalanceKey) -> int:
        if not self._has_balances:
            raise BalanceUnavailableError("fixture directory has no balances.csv")
        entry = self._balances.get((key.token, key.holder))
        if entry is None:
            return 0
        blocks, amounts = entry
        # pre-state of the inspected block = balance at end of block - 1
        idx = bisect_right(blocks, key.block_number - 1)
        return amounts[idx - 1] if idx else 0

    def proxy_owner(self, proxy: Address) -> Address | None:
        return self._proxies.get(proxy)


# ---------------------------------------------------------------------------
# JSON-RPC provider

ERC20_BALANCE_OF_SELECTOR = bytes.fromhex("70a08231")  # balanceOf(address)
PROXY_OWNER_SELECTOR = bytes.fromhex("8da5cb5b")  # owner()


class RpcProvider:
    """Chain source over standard EVM JSON-RPC (needs the `requests` extra)."""

    def __init__(self, url: str, *, timeout: float = 30.0, session=None):
        self.url = url
        self.timeout = timeout
        if session is None:
            try:
                import requests
            except ImportError as exc:  # pragma: no cover
                raise TransportError("RPC support requires the 'requests' package") from exc
            session = requests.Session()
        self._session = session
        self._id = 0

    def _call(self, method: str, params: list):
        self._id += 1
        payload = {"jsonrpc": "2.0", "id": self._id, "method": method, "params": params}
        try:
            response = self._session.post(self.url, json=payload, timeout=self.timeout)
            body = response.json()
        except Exception as exc:
            raise TransportError(f"RPC transport failure for {method}: {exc}") from exc
        if "error" in body:
            raise TransportError(f"RPC error for {method}: {body['error']}")
        return body.get("result")

    def get_block(self, number: int) -> Block:
        raw = self._call("eth_getBlockByNumber", [hex(number), True])
        if raw is None:
            raise BlockNotFoundError(f"block {number} not found")
        txs = []
        for i, tx in enumerate(raw.get("transactions", [])):
            receipt = self._call("eth_getTransactionReceipt", [tx["hash"]])
            if receipt is None:
                raise TransportError(f"missing receipt for {tx['hash']}")
            status = int(receipt.get("status", "0x1"), 16)
            logs = tuple(
                Log(
                    emitter=normalize_address(entry["address"]),
                    topics=tuple(bytes.fromhex(t[2:]) for t in entry.get("topics", [])),
                    data=bytes.fromhex(entry.get("data", "0x")[2:]),
                )
                for entry in receipt.get("logs", [])
            )
            txs.append(
                Transaction(
                    hash=parse_hash32(tx["hash"]),
                    from_=normalize_address(tx["from"]),
                    to=normalize_address(tx["to"]) if tx.get("to") else None,
                    value_wei=int(tx.get("value", "0x0"), 16),
                    input=bytes.fromhex(tx.get("input", "0x")[2:]),
                    status=status,
                    gas_used=int(receipt.get("gasUsed", "0x0"), 16),
                    effective_gas_price_wei=int(receipt.get("effectiveGasPrice", "0x0"), 16),
                    block_number=number,
                    tx_index=i,
                    logs=logs if status == 1 else (),
                )
            )
        return Block(
            number=number,
            timestamp=int(raw.get("timestamp", "0x0"), 16),
            transactions=tuple(txs),
        )

    def balance_of(self, key: BalanceKey) -> int:
        tag = hex(key.block_number - 1)
        try:
            if key.token is None:
                raw = self._call("eth_getBalance", [key.holder.hex, tag])
                return int(raw, 16)
            calldata = ERC20_BALANCE_OF_SELECTOR + key.holder.raw.rjust(32, b"\x00")
            raw = self._call(
                "eth_call", [{"to": key.token.hex, "data": "0x" + calldata.hex()}, tag]
            )
            return int(raw, 16) if raw and raw != "0x" else 0
        except TransportError as exc:
            raise BalanceUnavailableError(str(exc)) from exc

    def proxy_owner(self, proxy: Address) -> Address | None:
        try:
            raw = self._call(
                "eth_call", [{"to": proxy.hex, "data": "0x" + PROXY_OWNER_SELECTOR.hex()}, "latest"]
            )
        except TransportError:
            return None
        if not raw or len(raw) < 42:
            return None
        return Address(bytes.fromhex(raw[2:].rjust(64, "0"))[12:])

"""Per-address transfer/call history index, appended in block order.

The store is keyed by both endpoints of every transfer, so records forged
by attackers (where the nominal sender never signed anything) still show up
in that sender's history -- poisoning detection depends on this.

Persistence is an append-only log of length-prefixed binary records plus a
periodic snapshot metadata file; the in-memory index is rebuilt by replay
on startup. Single writer, many readers: queries never observe a partially
applied block.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .ingest import Block
from .model import Address, DecodedCall, TransferEvent, TransferKind
from .similarity import SimilarityConfig, addresses_similar

logger = logging.getLogger(__name__)

LOG_MAGIC = b"PHL1"
DEFAULT_SNAPSHOT_EVERY = 10_000


class SequencingError(Exception):
    """Blocks must be appended in strictly ascending order."""


class GrantKind(Enum):
    APPROVE = "approve"
    INCREASE_ALLOWANCE = "increaseAllowance"
    PERMIT = "permit"
    PERMIT2 = "permit2"
    SET_APPROVAL_FOR_ALL = "setApprovalForAll"


APPROVE_LIKE = frozenset({GrantKind.APPROVE, GrantKind.INCREASE_ALLOWANCE})
PERMIT_LIKE = frozenset({GrantKind.PERMIT, GrantKind.PERMIT2})
ALL_GRANT_KINDS = frozenset(GrantKind)

_FUNCTION_TO_KIND = {
    "approve": GrantKind.APPROVE,
    "increaseAllowance": GrantKind.INCREASE_ALLOWANCE,
    "permit": GrantKind.PERMIT,
    "permit2": GrantKind.PERMIT2,
    "setApprovalForAll": GrantKind.SET_APPROVAL_FOR_ALL,
}


@dataclass(frozen=True, slots=True)
class GrantRecord:
    """One approval-shaped call, as indexed for grant lookups.

    For approve/increaseAllowance/setApprovalForAll the owner is the tx
    sender; for permit-style calls it is the signer named in calldata, which
    may be submitted by anyone.
    """

    block_number: int
    seq: int
    tx_hash: bytes
    kind: GrantKind
    owner: Address
    grantee: Address
    token: Address  # the contract the call targeted
    counterparty: Address  # tx.to
    is_revocation: bool


def grant_from_call(tx_from: Address, tx_to: Address, call: DecodedCall) -> tuple | None:
    """Map a decoded call to (kind, owner, grantee, is_revocation), or None."""
    kind = _FUNCTION_TO_KIND.get(call.function_name or "")
    if kind is None:
        return None
    params = call.params
    if kind is GrantKind.SET_APPROVAL_FOR_ALL:
        return kind, tx_from, params["operator"], not params.get("approved", False)
    if kind in (GrantKind.PERMIT, GrantKind.PERMIT2):
        return kind, params["owner"], params["spender"], params.get("value", 0) == 0
    owner = tx_from
    grantee = params["spender"]
    if kind is GrantKind.INCREASE_ALLOWANCE and params.get("value", 0) == 0:
        return None  # zero increase grants nothing and revokes nothing
    return kind, owner, grantee, params.get("value", 0) == 0


class HistoryStore:
    """Append-only, point-in-time queryable history of transfers and grants."""

    def __init__(
        self,
        path: str | Path | None = None,
        *,
        snapshot_every: int = DEFAULT_SNAPSHOT_EVERY,
    ):
        self.up_to_block: int | None = None
        self.event_count = 0
        self._events: list[TransferEvent] = []
        self._out: dict[Address, list[TransferEvent]] = {}
        self._in: dict[Address, list[TransferEvent]] = {}
        self._pair: dict[tuple[Address, Address], list[TransferEvent]] = {}
        self._valuable_best: dict[Address, dict[Address, TransferEvent]] = {}
        self._grants: dict[tuple[Address, Address], list[GrantRecord]] = {}
        self._grants_by_owner: dict[Address, list[GrantRecord]] = {}
        self._counterparties: dict[Address, dict[Address, int]] = {}
        self._first_seen: dict[Address, int] = {}
        self._seq = 0

        self._snapshot_every = snapshot_every
        self._checksum = hashlib.sha256()
        self._log_fh = None
        self._dir: Path | None = None
        if path is not None:
            self._dir = Path(path)
            self._dir.mkdir(parents=True, exist_ok=True)
            self._open_log()

    # -- persistence -------------------------------------------------------

    @property
    def _log_path(self) -> Path:
        return self._dir / "events.log"

    @property
    def _snapshot_path(self) -> Path:
        return self._dir / "snapshot.json"

    def _open_log(self) -> None:
        if self._log_path.exists():
            self._replay()
            self._log_fh = self._log_path.open("ab")
        else:
            self._log_fh = self._log_path.open("wb")
            self._log_fh.write(LOG_MAGIC)
            self._log_fh.flush()

    def _replay(self) -> None:
        with self._log_path.open("rb") as fh:
            magic = fh.read(4)
            if magic != LOG_MAGIC:
                raise ValueError(f"bad history log magic in {self._log_path}")
            while True:
                header = fh.read(4)
                if not header:
                    break
                if len(header) < 4:
                    logger.warning("truncated record header in %s; stopping replay", self._log_path)
                    break
                (length,) = struct.unpack(">I", header)
                payload = fh.read(length)
                if len(payload) < length:
                    logger.warning("truncated record payload in %s; stopping replay", self._log_path)
                    break
                self._checksum.update(payload)
                self._apply_record(payload)
        if self._snapshot_path.exists():
            meta = json.loads(self._snapshot_path.read_text())
            if meta["eventCount"] > self.event_count:
                raise ValueError(
                    f"history log behind snapshot: {self.event_count} < {meta['eventCount']}"
                )
        logger.info(
            "history replayed: %d events up to block %s", self.event_count, self.up_to_block
        )

    def _apply_record(self, payload: bytes) -> None:
        kind = payload[0]
        if kind == 1:
            self._index_transfer(_decode_transfer_record(payload), persist=False)
        elif kind == 2:
            record = _decode_grant_record(payload)
            self._seq = max(self._seq, record.seq + 1)
            self._index_grant(record, persist=False)
        block = struct.unpack(">Q", payload[4:12])[0]
        self.up_to_block = block if self.up_to_block is None else max(self.up_to_block, block)

    def write_snapshot(self) -> None:
        if self._dir is None:
            return
        if self._log_fh is not None:
            self._log_fh.flush()
        meta = {
            "upToBlock": self.up_to_block,
            "eventCount": self.event_count,
            "checksum": self._checksum.hexdigest(),
        }
        self._snapshot_path.write_text(json.dumps(meta, separators=(",", ":")) + "\n")

    def close(self) -> None:
        if self._log_fh is not None:
            self.write_snapshot()
            self._log_fh.close()
            self._log_fh = None

    def _persist(self, payload: bytes) -> None:
        if self._log_fh is None:
            return
        self._checksum.update(payload)
        self._log_fh.write(struct.pack(">I", len(payload)) + payload)

    # -- appending ---------------------------------------------------------

    def append_block(
        self,
        block: Block,
        transfers_per_tx: list[list[TransferEvent]],
        calls_per_tx: list[DecodedCall | None],
    ) -> None:
        """Advance the store by one block; re-appends and regressions are rejected.

        Gaps in the number sequence are allowed and equivalent to empty
        blocks; within a block, records are indexed in transaction order.
        """
        if self.up_to_block is not None and block.number <= self.up_to_block:
            raise SequencingError(
                f"block {block.number} not after stored height {self.up_to_block}"
            )
        if len(transfers_per_tx) != len(block.transactions) or len(calls_per_tx) != len(
            block.transactions
        ):
            raise ValueError("per-tx lists must align with block transactions")
        for tx, transfers, call in zip(block.transactions, transfers_per_tx, calls_per_tx):
            for event in transfers:
                self._index_transfer(event, persist=True)
            if call is not None and tx.to is not None:
                mapped = grant_from_call(tx.from_, tx.to, call)
                if mapped is not None:
                    kind, owner, grantee, is_revocation = mapped
                    record = GrantRecord(
                        block_number=block.number,
                        seq=self._seq,
                        tx_hash=tx.hash,
                        kind=kind,
                        owner=owner,
                        grantee=grantee,
                        token=tx.to,
                        counterparty=tx.to,
                        is_revocation=is_revocation,
                    )
                    self._seq += 1
                    self._index_grant(record, persist=True)
        self.up_to_block = block.number
        if self._dir is not None and block.number % self._snapshot_every == 0:
            self.write_snapshot()

    def _touch(self, address: Address, block: int, counterparty: Address) -> None:
        if address not in self._first_seen:
            self._first_seen[address] = block
        peers = self._counterparties.get(address)
        if peers is None:
            peers = {}
            self._counterparties[address] = peers
        if counterparty not in peers:
            peers[counterparty] = block

    def _index_transfer(self, event: TransferEvent, *, persist: bool) -> None:
        self._events.append(event)
        self.event_count += 1
        self._out.setdefault(event.from_, []).append(event)
        self._in.setdefault(event.to, []).append(event)
        self._pair.setdefault((event.from_, event.to), []).append(event)
        if event.amount > 0:
            best = self._valuable_best.setdefault(event.from_, {})
            current = best.get(event.to)
            if current is None or event.amount > current.amount:
                best[event.to] = event
        self._touch(event.from_, event.block_number, event.to)
        self._touch(event.to, event.block_number, event.from_)
        if persist:
            self._persist(_encode_transfer_record(event))

    def _index_grant(self, record: GrantRecord, *, persist: bool) -> None:
        self._grants.setdefault((record.owner, record.grantee), []).append(record)
        self._grants_by_owner.setdefault(record.owner, []).append(record)
        self._touch(record.owner, record.block_number, record.grantee)
        if persist:
            self._persist(_encode_grant_record(record))

    # -- queries (point-in-time: results never exceed up_to) ---------------

    def _check_bound(self, up_to: int) -> bool:
        """False when the store is empty; raises when up_to exceeds coverage."""
        if self.up_to_block is None:
            return False
        if up_to > self.up_to_block:
            raise ValueError(f"query up_to {up_to} beyond stored height {self.up_to_block}")
        return True

    def find_grant(
        self,
        owner: Address,
        grantee: Address,
        kinds: frozenset[GrantKind] | set[GrantKind],
        up_to: int,
    ) -> GrantRecord | None:
        """Most recent live grant of a requested kind from owner to grantee."""
        if not self._check_bound(up_to):
            return None
        records = self._grants.get((owner, grantee))
        if not records:
            return None
        for record in reversed(records):
            if record.block_number > up_to:
                continue
            if record.kind in kinds and not record.is_revocation:
                return record
        return None

    def find_prior_transfer_to(
        self, sender: Address, dest: Address, up_to: int
    ) -> TransferEvent | None:
        """Earliest transfer recorded with nominal source `sender` and target `dest`."""
        if not self._check_bound(up_to):
            return None
        records = self._pair.get((sender, dest))
        if not records:
            return None
        first = records[0]
        return first if first.block_number <= up_to else None

    def find_genuine_similar_transfer(
        self,
        sender: Address,
        fake_dest: Address,
        up_to: int,
        sim_cfg: SimilarityConfig,
    ) -> TransferEvent | None:
        """Highest-value transfer from `sender` to an address that looks like
        `fake_dest` but is distinct from it."""
        if not self._check_bound(up_to):
            return None
        best: TransferEvent | None = None
        candidates = self._valuable_best.get(sender)
        if not candidates:
            return None
        for dest, top_event in candidates.items():
            if not addresses_similar(dest, fake_dest, sim_cfg):
                continue
            event = top_event
            if event.block_number > up_to:
                # the cached best may be too recent; fall back to the pair list
                event = None
                for candidate in self._pair.get((sender, dest), ()):
                    if candidate.block_number > up_to or candidate.amount == 0:
                        continue
                    if event is None or candidate.amount > event.amount:
                        event = candidate
                if event is None:
                    continue
            if best is None or event.amount > best.amount:
                best = event
        return best

    def find_revocation(
        self,
        owner: Address,
        grantee: Address,
        token: Address,
        after_block: int,
        up_to: int,
    ) -> GrantRecord | None:
        """Earliest revocation of (token, grantee) by owner in (after_block, up_to]."""
        if not self._check_bound(up_to):
            return None
        for record in self._grants.get((owner, grantee), ()):
            if (
                record.is_revocation
                and record.token == token
                and after_block < record.block_number <= up_to
            ):
                return record
        return None

    # -- accessors ---------------------------------------------------------

    def out_transfers(self, address: Address) -> list[TransferEvent]:
        return self._out.get(address, [])

    def in_transfers(self, address: Address) -> list[TransferEvent]:
        return self._in.get(address, [])

    def grants_of_owner(self, owner: Address) -> list[GrantRecord]:
        return self._grants_by_owner.get(owner, [])

    def first_seen_block(self, address: Address) -> int | None:
        return self._first_seen.get(address)

    def counterparties_of(self, address: Address) -> dict[Address, int]:
        return self._counterparties.get(address, {})

    def all_events(self) -> list[TransferEvent]:
        """Raw event log in append order (oracle surface for tests)."""
        return list(self._events)


# ---------------------------------------------------------------------------
# binary record codecs

_KIND_CODE = {TransferKind.NATIVE: 0, TransferKind.ERC20: 1, TransferKind.ERC721: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_GRANT_CODE = {k: i for i, k in enumerate(GrantKind)}
_CODE_GRANT = {i: k for k, i in _GRANT_CODE.items()}


def _encode_transfer_record(event: TransferEvent) -> bytes:
    flags = (1 if event.token is not None else 0) | (2 if event.log_index is not None else 0)
    parts = [
        bytes([1, _KIND_CODE[event.kind], flags, 0]),
        struct.pack(">Q", event.block_number),
        event.tx_hash,
        event.from_.raw,
        event.to.raw,
        event.amount.to_bytes(32, "big"),
    ]
    if event.token is not None:
        parts.append(event.token.raw)
    if event.log_index is not None:
        parts.append(struct.pack(">I", event.log_index))
    return b"".join(parts)


def _decode_transfer_record(payload: bytes) -> TransferEvent:
    kind = _CODE_KIND[payload[1]]
    flags = payload[2]
    block = struct.unpack(">Q", payload[4:12])[0]
    tx_hash = payload[12:44]
    from_ = Address(payload[44:64])
    to = Address(payload[64:84])
    amount = int.from_bytes(payload[84:116], "big")
    cursor = 116
    token = None
    if flags & 1:
        token = Address(payload[cursor : cursor + 20])
        cursor += 20
    log_index = None
    if flags & 2:
        log_index = struct.unpack(">I", payload[cursor : cursor + 4])[0]
    return TransferEvent(
        kind=kind,
        token=token,
        from_=from_,
        to=to,
        amount=amount,
        tx_hash=tx_hash,
        block_number=block,
        log_index=log_index,
    )


def _encode_grant_record(record: GrantRecord) -> bytes:
    return b"".join(
        [
            bytes([2, _GRANT_CODE[record.kind], 1 if record.is_revocation else 0, 0]),
            struct.pack(">Q", record.block_number),
            struct.pack(">I", record.seq),
            record.tx_hash,
            record.owner.raw,
            record.grantee.raw,
            record.token.raw,
            record.counterparty.raw,
        ]
    )


def _decode_grant_record(payload: bytes) -> GrantRecord:
    return GrantRecord(
        block_number=struct.unpack(">Q", payload[4:12])[0],
        seq=struct.unpack(">I", payload[12:16])[0],
        tx_hash=payload[16:48],
        kind=_CODE_GRANT[payload[1]],
        owner=Address(payload[48:68]),
        grantee=Address(payload[68:88]),
        token=Address(payload[88:108]),
        counterparty=Address(payload[108:128]),
        is_revocation=bool(payload[2] & 1),
    )

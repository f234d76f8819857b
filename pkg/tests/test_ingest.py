import json

import pytest

from keccak_oracle import keccak256
from phishscan.ingest import (
    TRANSFER_BATCH_TOPIC,
    TRANSFER_SINGLE_TOPIC,
    TRANSFER_TOPIC,
    BalanceKey,
    BlockNotFoundError,
    Diagnostics,
    FixtureProvider,
    extract_transfers,
    parse_fixture_block,
)
from phishscan.model import Address, Log, Transaction, TransferKind

TOKEN = Address(b"\xaa" * 20)
ALICE = Address(b"\x01" * 20)
BOB = Address(b"\x02" * 20)


def _tx(value_wei=0, logs=(), status=1, to=BOB, input_bytes=b""):
    return Transaction(
        hash=b"\x33" * 32, from_=ALICE, to=to, value_wei=value_wei, input=input_bytes,
        status=status, gas_used=50_000, effective_gas_price_wei=20 * 10**9,
        block_number=7, tx_index=0, logs=tuple(logs) if status == 1 else (),
    )


def _topic(addr: Address) -> bytes:
    return addr.raw.rjust(32, b"\x00")


def _erc20_log(frm, to, amount, token=TOKEN):
    return Log(emitter=token, topics=(TRANSFER_TOPIC, _topic(frm), _topic(to)),
               data=amount.to_bytes(32, "big"))


def test_transfer_topic_constants_match_keccak_oracle():
    assert TRANSFER_TOPIC == keccak256(b"Transfer(address,address,uint256)")
    assert TRANSFER_SINGLE_TOPIC == keccak256(
        b"TransferSingle(address,address,address,uint256,uint256)"
    )
    assert TRANSFER_BATCH_TOPIC == keccak256(
        b"TransferBatch(address,address,address,uint256[],uint256[])"
    )


def test_native_transfer_from_value():
    events = extract_transfers(_tx(value_wei=10**18))
    assert len(events) == 1
    event = events[0]
    assert event.kind is TransferKind.NATIVE
    assert (event.from_, event.to, event.amount) == (ALICE, BOB, 10**18)
    assert event.token is None and event.log_index is None


def test_zero_value_erc20_transfer_is_extracted():
    events = extract_transfers(_tx(logs=[_erc20_log(ALICE, BOB, 0)]))
    assert len(events) == 1
    assert events[0].kind is TransferKind.ERC20
    assert events[0].amount == 0


def test_four_topic_transfer_is_erc721_with_token_id_from_topic():
    token_id = 1404
    log = Log(
        emitter=TOKEN,
        topics=(TRANSFER_TOPIC, _topic(ALICE), _topic(BOB), token_id.to_bytes(32, "big")),
        data=b"",
    )
    events = extract_transfers(_tx(logs=[log]))
    assert events[0].kind is TransferKind.ERC721
    assert events[0].amount == token_id


def test_erc1155_single_normalizes_to_erc721_kind():
    log = Log(
        emitter=TOKEN,
        topics=(TRANSFER_SINGLE_TOPIC, _topic(ALICE), _topic(ALICE), _topic(BOB)),
        data=(55).to_bytes(32, "big") + (2).to_bytes(32, "big"),
    )
    events = extract_transfers(_tx(logs=[log]))
    assert [(e.kind, e.amount) for e in events] == [(TransferKind.ERC721, 55)]


def test_malformed_log_is_skipped_and_tallied():
    bad = Log(emitter=TOKEN, topics=(TRANSFER_TOPIC, _topic(ALICE), _topic(BOB)),
              data=b"\x01" * 31)  # wrong data length
    diagnostics = Diagnostics()
    events = extract_transfers(_tx(logs=[bad, _erc20_log(ALICE, BOB, 5)]), diagnostics)
    assert len(events) == 1
    assert diagnostics.malformed_logs == 1


def test_failed_tx_contributes_nothing():
    assert extract_transfers(_tx(value_wei=10**18, status=0)) == []


def test_extraction_is_pure():
    tx = _tx(value_wei=3, logs=[_erc20_log(ALICE, BOB, 9)])
    assert extract_transfers(tx) == extract_transfers(tx)


def test_ordering_follows_log_order():
    tx = _tx(value_wei=1, logs=[_erc20_log(ALICE, BOB, 1), _erc20_log(BOB, ALICE, 2)])
    events = extract_transfers(tx)
    assert [e.amount for e in events] == [1, 1, 2]
    assert [e.log_index for e in events] == [None, 0, 1]


# -- fixture provider ---------------------------------------------------------


def _write_fixture(tmp_path, blocks, balances=None, proxies=None):
    with (tmp_path / "blocks.jsonl").open("w") as fh:
        for block in blocks:
            fh.write(json.dumps(block) + "\n")
    if balances is not None:
        (tmp_path / "balances.csv").write_text(
            "token,holder,block,amount\n" + "".join(f"{r}\n" for r in balances)
        )
    if proxies is not None:
        (tmp_path / "proxies.csv").write_text(
            "proxy,owner\n" + "".join(f"{a},{b}\n" for a, b in proxies)
        )
    return FixtureProvider(tmp_path)


def _block_obj(number, txs):
    return {"number": number, "timestamp": 1_700_000_000 + number, "txs": txs}


def _tx_obj(i=0, value="0", logs=()):
    return {
        "hash": "0x" + bytes([i + 1]).rjust(32, b"\x00").hex(),
        "from": ALICE.hex,
        "to": BOB.hex,
        "valueWei": value,
        "input": "0x",
        "status": 1,
        "gasUsed": 21000,
        "effectiveGasPriceWei": "20000000000",
        "logs": list(logs),
    }


def test_fixture_block_with_two_txs(tmp_path):
    provider = _write_fixture(
        tmp_path, [_block_obj(17_000_000, [_tx_obj(0), _tx_obj(1)])]
    )
    block = provider.get_block(17_000_000)
    assert len(block.transactions) == 2
    assert [tx.tx_index for tx in block.transactions] == [0, 1]


def test_empty_block(tmp_path):
    provider = _write_fixture(tmp_path, [_block_obj(5, [])])
    assert provider.get_block(5).transactions == ()


def test_block_beyond_fixture_range(tmp_path):
    provider = _write_fixture(tmp_path, [_block_obj(5, [])])
    with pytest.raises(BlockNotFoundError):
        provider.get_block(6)


def test_balance_pre_state_semantics(tmp_path):
    token_hex = TOKEN.hex
    provider = _write_fixture(
        tmp_path,
        [_block_obj(5, [])],
        balances=[f"{token_hex},{ALICE.hex},10,500000000"],
    )
    key = BalanceKey(token=TOKEN, holder=ALICE, block_number=11)
    assert provider.balance_of(key) == 500_000_000
    # balance recorded at end of block 10 is not visible when inspecting block 10
    assert provider.balance_of(BalanceKey(TOKEN, ALICE, 10)) == 0


def test_balance_native_and_never_seen(tmp_path):
    provider = _write_fixture(
        tmp_path, [_block_obj(5, [])], balances=[f",{ALICE.hex},10,12345"]
    )
    assert provider.balance_of(BalanceKey(None, ALICE, 12)) == 12345
    assert provider.balance_of(BalanceKey(None, BOB, 12)) == 0


def test_balance_unavailable_without_fixture_file(tmp_path):
    from phishscan.ingest import BalanceUnavailableError

    provider = _write_fixture(tmp_path, [_block_obj(5, [])])
    with pytest.raises(BalanceUnavailableError):
        provider.balance_of(BalanceKey(None, ALICE, 12))


def test_proxy_owner_fixture(tmp_path):
    provider = _write_fixture(
        tmp_path, [_block_obj(5, [])], proxies=[(TOKEN.hex, ALICE.hex)]
    )
    assert provider.proxy_owner(TOKEN) == ALICE
    assert provider.proxy_owner(BOB) is None


def test_per_holder_flow_sums_match_balance_deltas(small_corpus):
    """Net in-out per holder per token reconciles against a running ledger."""
    provider, _registry, _prices, _floors = small_corpus
    deltas: dict[tuple, int] = {}
    for number in provider.block_numbers:
        for tx in provider.get_block(number).transactions:
            for event in extract_transfers(tx):
                if event.kind is TransferKind.ERC20:
                    deltas[(event.token, event.to)] = deltas.get((event.token, event.to), 0) + event.amount
                    deltas[(event.token, event.from_)] = deltas.get((event.token, event.from_), 0) - event.amount
    # ledger must balance: every token's total delta across holders is zero
    per_token: dict = {}
    for (token, _holder), delta in deltas.items():
        per_token[token] = per_token.get(token, 0) + delta
    assert all(v == 0 for v in per_token.values())


def test_parse_fixture_block_round_trips_status_and_logs():
    raw = json.dumps(
        _block_obj(9, [_tx_obj(0, value="1000", logs=[{
            "address": TOKEN.hex,
            "topics": ["0x" + TRANSFER_TOPIC.hex(), "0x" + _topic(ALICE).hex(), "0x" + _topic(BOB).hex()],
            "data": "0x" + (7).to_bytes(32, "big").hex(),
        }])])
    )
    block = parse_fixture_block(raw)
    tx = block.transactions[0]
    assert tx.value_wei == 1000 and len(tx.logs) == 1
    events = extract_transfers(tx)
    assert [e.kind for e in events] == [TransferKind.NATIVE, TransferKind.ERC20]

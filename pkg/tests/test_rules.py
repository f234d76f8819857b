import random
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from phishscan import abi
from phishscan.decoder import (
    SEL_APPROVE,
    SEL_PERMIT,
    SEL_SET_APPROVAL_FOR_ALL,
    SEL_TRANSFER,
    SEL_TRANSFER_FROM,
)
from phishscan.history import ALL_GRANT_KINDS, HistoryStore
from phishscan.ingest import BalanceKey, BalanceUnavailableError, Block, TRANSFER_TOPIC
from phishscan.model import (
    Address,
    Category,
    Log,
    SubCategory,
    Transaction,
    normalize_address,
)
from phishscan.refdata import FloorOracle, LabelRegistry, MarketEntry, PriceOracle, PricePoint
from phishscan.rules import (
    DetectionContext,
    RemedialAction,
    RuleConfig,
    SimilarityConfig,
    addresses_similar,
    classify_remediation,
    detect_payable,
    detect_poisoning_attack,
    detect_tx,
    load_rule_config,
)
from phishscan.similarity import similar_hex

GENUINE = normalize_address("0xa7b4bac8f0f9692e56750aefb5f6cb5516e90570")
FAKE = normalize_address("0xa7bf48749d2e4aa29e3209879956b9baa9e90570")

VICTIM = Address(b"\x11" * 20)
SCAMMER = Address(b"\x22" * 20)
RECEIVER = Address(b"\x23" * 20)
USDT = Address(b"\x31" * 20)
FAKE_USDT = Address(b"\x32" * 20)
WETH = Address(b"\x33" * 20)
COLLECTION = Address(b"\x41" * 20)
BLUR = Address(b"\x51" * 20)
SEAPORT = Address(b"\x52" * 20)
HELPER = Address(b"\x53" * 20)
PROXY = Address(b"\x54" * 20)
SCAM_CONTRACT = Address(b"\x61" * 20)
VERIFIED_CONTRACT = Address(b"\x62" * 20)
RELAYER = Address(b"\x71" * 20)

WALLET_SELECTOR = bytes.fromhex("5fba79f5")
AIRDROP_SELECTOR = bytes.fromhex("ef5cfb8c")


# ---------------------------------------------------------------------------
# similarity


def test_flagship_pair_is_similar_under_defaults():
    assert addresses_similar(GENUINE, FAKE)


def test_identical_addresses_are_not_similar():
    assert not addresses_similar(GENUINE, GENUINE)


@given(st.binary(min_size=20, max_size=20), st.binary(min_size=20, max_size=20))
def test_similarity_symmetric_and_irreflexive(a_raw, b_raw):
    a, b = Address(a_raw), Address(b_raw)
    assert addresses_similar(a, b) == addresses_similar(b, a)
    assert not addresses_similar(a, a)


def brute_force_similar(a: str, b: str, prefix: int, suffix: int) -> bool:
    """Independent reduced-width comparator: per-position character loops."""
    if a == b:
        return False
    for i in range(prefix):
        if a[i] != b[i]:
            return False
    for i in range(1, suffix + 1):
        if a[-i] != b[-i]:
            return False
    return True


def test_similarity_matches_brute_force_on_toy_width():
    rng = random.Random(4)
    hexdigits = "0123456789abcdef"
    for _ in range(20_000):
        width = 16
        a = "".join(rng.choice(hexdigits) for _ in range(width))
        # bias toward near-matches so both outcomes are exercised
        b = list(a)
        for _ in range(rng.randrange(0, 6)):
            b[rng.randrange(width)] = rng.choice(hexdigits)
        b = "".join(b)
        prefix, suffix = rng.randrange(0, 5), rng.randrange(0, 5)
        if prefix + suffix == 0:
            prefix = 1
        assert similar_hex(a, b, prefix, suffix) == brute_force_similar(a, b, prefix, suffix)


def test_similarity_config_bounds():
    with pytest.raises(ValueError):
        SimilarityConfig(prefix_nibbles=0, suffix_nibbles=0)
    with pytest.raises(ValueError):
        SimilarityConfig(prefix_nibbles=40, suffix_nibbles=1)


# ---------------------------------------------------------------------------
# world-building helpers


class StubProvider:
    def __init__(self):
        self.balances: dict[tuple, int] = {}
        self.proxies: dict[Address, Address] = {}
        self.available = True

    def get_block(self, number):  # pragma: no cover - unused in rule tests
        raise NotImplementedError

    def balance_of(self, key: BalanceKey) -> int:
        if not self.available:
            raise BalanceUnavailableError("balances offline")
        return self.balances.get((key.token, key.holder), 0)

    def proxy_owner(self, proxy):
        return self.proxies.get(proxy)


def make_registry() -> LabelRegistry:
    return LabelRegistry(
        authorized_set=frozenset({RELAYER}),
        cex_set=frozenset(),
        nft_markets={
            BLUR: MarketEntry(BLUR, "Blur", "blur1"),
            SEAPORT: MarketEntry(SEAPORT, "OpenSea", "seaport11"),
            HELPER: MarketEntry(HELPER, "OpenSea", "openseaHelper"),
            PROXY: MarketEntry(PROXY, "OpenSea", "openseaFactory"),
        },
        canonical_tokens={"USDT": (USDT, 6), "WETH": (WETH, 18)},
        airdrop_selectors=frozenset({AIRDROP_SELECTOR}),
        wallet_selectors=frozenset({WALLET_SELECTOR}),
        verified_sources=frozenset({VERIFIED_CONTRACT}),
        token_symbols={USDT: "USDT", FAKE_USDT: "USDT", WETH: "WETH"},
        contract_set=frozenset(
            {USDT, FAKE_USDT, WETH, BLUR, SEAPORT, HELPER, PROXY, SCAM_CONTRACT, VERIFIED_CONTRACT, COLLECTION}
        ),
    )


def make_ctx() -> tuple[DetectionContext, StubProvider]:
    provider = StubProvider()
    ctx = DetectionContext(
        registry=make_registry(),
        store=HistoryStore(),
        provider=provider,
        prices=PriceOracle(
            [
                PricePoint("ETH", 0, Decimal("2000")),
                PricePoint("USDT", 0, Decimal("1.00")),
                PricePoint("WETH", 0, Decimal("2000")),
            ]
        ),
        floors=FloorOracle([(COLLECTION, 0, Decimal("10000.00"))]),
    )
    return ctx, provider


_tx_counter = [0]


def make_tx(frm, to, *, value=0, input_bytes=b"", logs=(), block=200, index=0, status=1):
    _tx_counter[0] += 1
    return Transaction(
        hash=_tx_counter[0].to_bytes(32, "big"),
        from_=frm, to=to, value_wei=value, input=input_bytes,
        status=status, gas_used=90_000, effective_gas_price_wei=20 * 10**9,
        block_number=block, tx_index=index, logs=tuple(logs) if status == 1 else (),
    )


def erc20_log(token, frm, to, amount):
    return Log(
        emitter=token,
        topics=(TRANSFER_TOPIC, frm.raw.rjust(32, b"\x00"), to.raw.rjust(32, b"\x00")),
        data=amount.to_bytes(32, "big"),
    )


def erc721_log(collection, frm, to, token_id):
    return Log(
        emitter=collection,
        topics=(
            TRANSFER_TOPIC,
            frm.raw.rjust(32, b"\x00"),
            to.raw.rjust(32, b"\x00"),
            token_id.to_bytes(32, "big"),
        ),
        data=b"",
    )


def append_history(ctx: DetectionContext, *txs_with_logs, start_block=100):
    """Feed setup transactions through the real prepare/append path."""
    from phishscan.rules import prepare_tx

    number = start_block
    for tx in txs_with_logs:
        tx = Transaction(
            hash=tx.hash, from_=tx.from_, to=tx.to, value_wei=tx.value_wei, input=tx.input,
            status=tx.status, gas_used=tx.gas_used,
            effective_gas_price_wei=tx.effective_gas_price_wei,
            block_number=number, tx_index=0, logs=tx.logs,
        )
        prepared = prepare_tx(tx, ctx)
        block = Block(number=number, timestamp=1_700_000_000 + number, transactions=(tx,))
        ctx.store.append_block(block, [prepared.transfers], [prepared.token_call])
        number += 1
    # pad coverage up to just before the default detection block
    while (ctx.store.up_to_block or start_block - 1) < 199:
        number = (ctx.store.up_to_block or start_block - 1) + 1
        ctx.store.append_block(
            Block(number=number, timestamp=1_700_000_000 + number, transactions=()), [], []
        )


CFG = RuleConfig()


# ---------------------------------------------------------------------------
# ice phishing


def approve_tx(owner, spender, value=2**256 - 1, token=USDT):
    return make_tx(owner, token,
                   input_bytes=abi.encode_call(SEL_APPROVE, ["address", "uint256"], (spender, value)))


def drain_tx(spender, owner, receiver, amount, token=USDT, block=200):
    return make_tx(
        spender, token, block=block,
        input_bytes=abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (owner, receiver, amount)
        ),
        logs=[erc20_log(token, owner, receiver, amount)],
    )


def test_full_drain_after_approve_is_ice_approve():
    ctx, provider = make_ctx()
    append_history(ctx, approve_tx(VICTIM, SCAMMER))
    provider.balances[(USDT, VICTIM)] = 500 * 10**6
    verdicts = detect_tx(drain_tx(SCAMMER, VICTIM, RECEIVER, 500 * 10**6), ctx, CFG)
    assert len(verdicts) == 1
    v = verdicts[0]
    assert (v.category, v.sub_category) == (Category.ICE_PHISHING, SubCategory.APPROVE)
    assert v.victim == VICTIM
    assert set(v.scammer) == {SCAMMER, RECEIVER}
    assert v.loss_usd == Decimal("500.00")
    assert v.evidence[0].rule_id == "I-A"
    assert len(v.evidence[0].supporting_tx_hashes) == 2  # drain + enabling grant


def test_scammer_submitted_permit_is_ice_permit():
    ctx, provider = make_ctx()
    permit = make_tx(
        SCAMMER, USDT,
        input_bytes=abi.encode_call(
            SEL_PERMIT,
            ["address", "address", "uint256", "uint256", "uint8", "bytes32", "bytes32"],
            (VICTIM, SCAMMER, 2**256 - 1, 2 * 10**9, 27, b"\x01" * 32, b"\x02" * 32),
        ),
    )
    append_history(ctx, permit)
    provider.balances[(USDT, VICTIM)] = 10**9
    verdicts = detect_tx(drain_tx(SCAMMER, VICTIM, SCAMMER, 10**9), ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.PERMIT]


def test_erc721_drain_after_set_approval_is_ice_safa():
    ctx, _provider = make_ctx()
    grant = make_tx(
        VICTIM, COLLECTION,
        input_bytes=abi.encode_call(SEL_SET_APPROVAL_FOR_ALL, ["address", "bool"], (SCAMMER, True)),
    )
    append_history(ctx, grant)
    steal = make_tx(
        SCAMMER, COLLECTION,
        input_bytes=abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (VICTIM, SCAMMER, 77)
        ),
        logs=[erc721_log(COLLECTION, VICTIM, SCAMMER, 77)],
    )
    verdicts = detect_tx(steal, ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.SET_APPROVE_FOR_ALL]
    assert verdicts[0].loss_usd == Decimal("10000.00")  # collection floor


def test_self_transfer_is_not_ice():
    ctx, provider = make_ctx()
    append_history(ctx, approve_tx(VICTIM, VICTIM))
    provider.balances[(USDT, VICTIM)] = 10**6
    tx = make_tx(
        VICTIM, USDT,
        input_bytes=abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (VICTIM, RECEIVER, 10**6)
        ),
        logs=[erc20_log(USDT, VICTIM, RECEIVER, 10**6)],
    )
    assert detect_tx(tx, ctx, CFG) == []


def test_partial_drain_is_not_ice():
    ctx, provider = make_ctx()
    append_history(ctx, approve_tx(VICTIM, SCAMMER))
    provider.balances[(USDT, VICTIM)] = 1000 * 10**6
    verdicts = detect_tx(drain_tx(SCAMMER, VICTIM, SCAMMER, 400 * 10**6), ctx, CFG)
    assert verdicts == []


def test_partial_drain_flagged_under_lower_ratio():
    ctx, provider = make_ctx()
    append_history(ctx, approve_tx(VICTIM, SCAMMER))
    provider.balances[(USDT, VICTIM)] = 1000 * 10**6
    cfg = RuleConfig(drain_ratio=Decimal("0.4"))
    verdicts = detect_tx(drain_tx(SCAMMER, VICTIM, SCAMMER, 400 * 10**6), ctx, cfg)
    assert [v.sub_category for v in verdicts] == [SubCategory.APPROVE]


def test_authorized_sender_is_not_ice():
    ctx, provider = make_ctx()
    append_history(ctx, approve_tx(VICTIM, RELAYER))
    provider.balances[(USDT, VICTIM)] = 10**6
    assert detect_tx(drain_tx(RELAYER, VICTIM, RECEIVER, 10**6), ctx, CFG) == []


def test_drain_without_discoverable_grant_is_not_flagged():
    ctx, provider = make_ctx()
    append_history(ctx)
    provider.balances[(USDT, VICTIM)] = 10**6
    assert detect_tx(drain_tx(SCAMMER, VICTIM, SCAMMER, 10**6), ctx, CFG) == []


def test_balance_unavailable_degrades_to_no_verdict():
    ctx, provider = make_ctx()
    append_history(ctx, approve_tx(VICTIM, SCAMMER))
    provider.available = False
    assert detect_tx(drain_tx(SCAMMER, VICTIM, SCAMMER, 10**6), ctx, CFG) == []
    assert ctx.diagnostics.balance_unavailable > 0


# ---------------------------------------------------------------------------
# NFT order


def _blur_exec(price, fees, seller=VICTIM, buyer=SCAMMER, collection=COLLECTION, token_id=7):
    input_type = (
        "((address,uint8,address,address,uint256,uint256,address,uint256,uint256,uint256,"
        "(uint16,address)[],uint256,bytes),uint8,bytes32,bytes32,bytes,uint8,uint256)"
    )

    def wrap(side, trader, side_fees):
        order = (trader, side, Address(b"\x0a" * 20), collection, token_id, 1,
                 Address(b"\x00" * 20), price, 0, 10**10, side_fees, 3, b"")
        return (order, 27, b"\x01" * 32, b"\x02" * 32, b"", 0, 0)

    calldata = abi.encode_call(
        bytes.fromhex("9a1fc3a7"), [input_type, input_type],
        (wrap(1, seller, fees), wrap(0, buyer, [])),
    )
    return make_tx(buyer, BLUR, value=price, input_bytes=calldata,
                   logs=[erc721_log(collection, seller, buyer, token_id)])


def test_blur_hundred_percent_fee_is_free_buy_order():
    ctx, _ = make_ctx()
    append_history(ctx)
    verdicts = detect_tx(_blur_exec(5 * 10**18, [(10_000, SCAMMER)]), ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.FREE_BUY_ORDER]
    v = verdicts[0]
    assert v.victim == VICTIM and SCAMMER in v.scammer
    assert v.loss_usd == Decimal("10000.00")


def test_fair_blur_sale_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx)
    assert detect_tx(_blur_exec(5 * 10**18, [(250, RECEIVER)]), ctx, CFG) == []


def test_seaport_zero_price_is_free_buy_order():
    ctx, _ = make_ctx()
    append_history(ctx)
    types = [
        "((address,address,(uint8,address,uint256,uint256,uint256)[],"
        "(uint8,address,uint256,uint256,uint256,address)[],uint8,uint256,uint256,"
        "bytes32,uint256,bytes32,uint256),uint120,uint120,bytes,bytes)",
        "(uint256,uint8,uint256,uint256,bytes32[])[]",
        "bytes32",
        "address",
    ]
    params = (VICTIM, Address(b"\x0c" * 20), [(2, COLLECTION, 7, 1, 1)], [],
              0, 0, 10**10, b"\x00" * 32, 1, b"\x00" * 32, 0)
    calldata = abi.encode_call(
        bytes.fromhex("e7acab24"), types, ((params, 1, 1, b"\x99" * 64, b""), [], b"\x00" * 32, SCAMMER)
    )
    tx = make_tx(SCAMMER, SEAPORT, input_bytes=calldata,
                 logs=[erc721_log(COLLECTION, VICTIM, SCAMMER, 7)])
    verdicts = detect_tx(tx, ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.FREE_BUY_ORDER]


def test_bulk_transfer_to_other_recipient():
    ctx, _ = make_ctx()
    append_history(ctx)
    calldata = abi.encode_call(
        bytes.fromhex("8628f225"), ["(address,uint256)[]", "address"],
        ([(COLLECTION, 7)], SCAMMER),
    )
    tx = make_tx(VICTIM, HELPER, input_bytes=calldata,
                 logs=[erc721_log(COLLECTION, VICTIM, SCAMMER, 7)])
    verdicts = detect_tx(tx, ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.BULK_TRANSFER]
    assert verdicts[0].scammer == (SCAMMER,)


def test_bulk_transfer_to_self_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx)
    calldata = abi.encode_call(
        bytes.fromhex("8628f225"), ["(address,uint256)[]", "address"],
        ([(COLLECTION, 7)], VICTIM),
    )
    tx = make_tx(VICTIM, HELPER, input_bytes=calldata,
                 logs=[erc721_log(COLLECTION, VICTIM, VICTIM, 7)])
    assert detect_tx(tx, ctx, CFG) == []


def test_proxy_upgrade_by_non_owner():
    ctx, provider = make_ctx()
    append_history(ctx)
    provider.proxies[PROXY] = VICTIM
    new_impl = Address(b"\x66" * 20)
    tx = make_tx(SCAMMER, PROXY,
                 input_bytes=abi.encode_call(bytes.fromhex("3659cfe6"), ["address"], (new_impl,)))
    verdicts = detect_tx(tx, ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.PROXY_UPGRADE]
    assert verdicts[0].victim == VICTIM
    assert set(verdicts[0].scammer) == {SCAMMER, new_impl}
    assert verdicts[0].loss_usd is None


def test_proxy_upgrade_by_owner_is_benign():
    ctx, provider = make_ctx()
    append_history(ctx)
    provider.proxies[PROXY] = VICTIM
    tx = make_tx(VICTIM, PROXY,
                 input_bytes=abi.encode_call(bytes.fromhex("3659cfe6"), ["address"], (RECEIVER,)))
    assert detect_tx(tx, ctx, CFG) == []


# ---------------------------------------------------------------------------
# address poisoning (victim side)


def transfer_tx(frm, to_addr, amount, token=USDT, block=200):
    return make_tx(
        frm, token, block=block,
        input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (to_addr, amount)),
        logs=[erc20_log(token, frm, to_addr, amount)],
    )


def forged_record_tx(attacker, nominal_from, fake_to, amount, token):
    return make_tx(
        attacker, token,
        input_bytes=abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (nominal_from, fake_to, amount)
        ),
        logs=[erc20_log(token, nominal_from, fake_to, amount)],
    )


def test_fake_token_poisoning_flagship_shape():
    ctx, _ = make_ctx()
    attacker = Address(b"\x99" * 20)
    append_history(
        ctx,
        transfer_tx(VICTIM, GENUINE, 10_000_000 * 10**6),
        forged_record_tx(attacker, VICTIM, FAKE, 10_000_000 * 10**6, FAKE_USDT),
    )
    mistake = transfer_tx(VICTIM, FAKE, 20_000_000 * 10**6)
    verdicts = detect_tx(mistake, ctx, CFG)
    assert len(verdicts) == 1
    v = verdicts[0]
    assert (v.category, v.sub_category) == (Category.ADDRESS_POISONING, SubCategory.FAKE_TOKEN)
    assert v.victim == VICTIM and v.scammer == (FAKE,)
    assert v.loss_usd == Decimal("20000000.00")
    assert len(v.evidence[0].supporting_tx_hashes) == 3  # mistake + planted + genuine


def test_zero_value_planted_record():
    ctx, _ = make_ctx()
    attacker = Address(b"\x99" * 20)
    append_history(
        ctx,
        transfer_tx(VICTIM, GENUINE, 5_000 * 10**6),
        forged_record_tx(attacker, VICTIM, FAKE, 0, USDT),
    )
    verdicts = detect_tx(transfer_tx(VICTIM, FAKE, 700 * 10**6), ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.ZERO_VALUE]


def test_transfer_to_unpoisoned_address_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx, transfer_tx(VICTIM, GENUINE, 5_000 * 10**6))
    other = Address(b"\x88" * 20)
    assert detect_tx(transfer_tx(VICTIM, other, 700 * 10**6), ctx, CFG) == []


def test_dust_planted_record_boundary():
    ctx, _ = make_ctx()
    # $0.005 of USDT planted from the look-alike itself
    append_history(
        ctx,
        transfer_tx(VICTIM, GENUINE, 5_000 * 10**6),
        transfer_tx(FAKE, VICTIM, 5_000),  # 0.005 USDT
    )
    verdicts = detect_tx(transfer_tx(VICTIM, FAKE, 900 * 10**6), ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.DUST_VALUE]


def test_incoming_at_dust_threshold_is_not_dust():
    ctx, _ = make_ctx()
    append_history(
        ctx,
        transfer_tx(VICTIM, GENUINE, 5_000 * 10**6),
        transfer_tx(FAKE, VICTIM, 10_000),  # exactly $0.01: not below the threshold
    )
    assert detect_tx(transfer_tx(VICTIM, FAKE, 900 * 10**6), ctx, CFG) == []


def test_valuable_prior_contact_is_not_poisoning():
    ctx, _ = make_ctx()
    # victim already paid this address real money twice; second payment is fine
    append_history(
        ctx,
        transfer_tx(VICTIM, GENUINE, 5_000 * 10**6),
        transfer_tx(VICTIM, FAKE, 1_000 * 10**6),
    )
    assert detect_tx(transfer_tx(VICTIM, FAKE, 900 * 10**6), ctx, CFG) == []


# ---------------------------------------------------------------------------
# address poisoning (attack side)


def test_batch_zero_value_attack_single_record():
    ctx, _ = make_ctx()
    append_history(ctx)
    attacker = Address(b"\x99" * 20)
    victims = [Address(bytes([0x70 + i]) * 20) for i in range(30)]
    logs = [erc20_log(USDT, v, Address(bytes([0xA0 + i]) * 20), 0) for i, v in enumerate(victims)]
    tx = make_tx(attacker, USDT, input_bytes=bytes.fromhex("deadbeef"), logs=logs)
    records = detect_poisoning_attack(tx, __prepare(tx, ctx), ctx, CFG, 1_700_000_000)
    assert len(records) == 1
    record = records[0]
    assert record.kind is SubCategory.ZERO_VALUE
    assert len(record.poisoned_victims) == 30
    assert record.attacker == attacker


def __prepare(tx, ctx):
    from phishscan.rules import prepare_tx

    return prepare_tx(tx, ctx).transfers


def test_fake_token_attack_record():
    ctx, _ = make_ctx()
    append_history(ctx)
    attacker = Address(b"\x99" * 20)
    tx = forged_record_tx(attacker, VICTIM, FAKE, 10_000_000 * 10**6, FAKE_USDT)
    records = detect_poisoning_attack(tx, __prepare(tx, ctx), ctx, CFG, 0)
    assert [r.kind for r in records] == [SubCategory.FAKE_TOKEN]
    assert records[0].poisoned_victims == (VICTIM,)


def test_ordinary_valuable_transfer_is_no_attack():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = transfer_tx(VICTIM, RECEIVER, 500 * 10**6)
    assert detect_poisoning_attack(tx, __prepare(tx, ctx), ctx, CFG, 0) == []


def test_dust_attack_requires_similar_counterpart_and_fresh_sender():
    ctx, _ = make_ctx()
    append_history(ctx, transfer_tx(VICTIM, GENUINE, 5_000 * 10**6))
    dust = transfer_tx(FAKE, VICTIM, 5_000)  # fresh look-alike dusts the victim
    records = detect_poisoning_attack(dust, __prepare(dust, ctx), ctx, CFG, 0)
    assert [r.kind for r in records] == [SubCategory.DUST_VALUE]
    assert records[0].poisoned_victims == (VICTIM,)
    # same dust toward a victim with no similar counterpart: not an attack
    stranger = Address(b"\x77" * 20)
    dust2 = transfer_tx(FAKE, stranger, 5_000)
    assert detect_poisoning_attack(dust2, __prepare(dust2, ctx), ctx, CFG, 0) == []


# ---------------------------------------------------------------------------
# payable function


def test_wallet_function_scam():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = make_tx(VICTIM, SCAM_CONTRACT, value=5 * 10**17, input_bytes=WALLET_SELECTOR)
    verdicts = detect_tx(tx, ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.WALLET_FUNCTION]
    assert verdicts[0].loss_usd == Decimal("1000.00")  # 0.5 ETH at $2000


def test_airdrop_function_scam():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = make_tx(VICTIM, SCAM_CONTRACT, value=2 * 10**17, input_bytes=AIRDROP_SELECTOR)
    verdicts = detect_tx(tx, ctx, CFG)
    assert [v.sub_category for v in verdicts] == [SubCategory.AIRDROP_FUNCTION]


def test_verified_source_payable_call_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = make_tx(VICTIM, VERIFIED_CONTRACT, value=5 * 10**17, input_bytes=WALLET_SELECTOR)
    assert detect_tx(tx, ctx, CFG) == []


def test_payable_with_logs_or_zero_value_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx)
    with_logs = make_tx(VICTIM, SCAM_CONTRACT, value=10**17, input_bytes=WALLET_SELECTOR,
                        logs=[erc20_log(USDT, SCAM_CONTRACT, VICTIM, 1)])
    assert detect_payable(with_logs, ctx) is None
    no_value = make_tx(VICTIM, SCAM_CONTRACT, value=0, input_bytes=WALLET_SELECTOR)
    assert detect_payable(no_value, ctx) is None


def test_payable_to_eoa_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = make_tx(VICTIM, RECEIVER, value=10**18, input_bytes=WALLET_SELECTOR)
    assert detect_tx(tx, ctx, CFG) == []


def test_unlisted_selector_is_benign():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = make_tx(VICTIM, SCAM_CONTRACT, value=10**18, input_bytes=bytes.fromhex("deadbeef"))
    assert detect_tx(tx, ctx, CFG) == []


# ---------------------------------------------------------------------------
# orchestration


def test_benign_swap_yields_nothing():
    ctx, provider = make_ctx()
    append_history(ctx)
    pool = Address(b"\x7a" * 20)
    provider.balances[(WETH, pool)] = 10**27
    router = Address(b"\x7b" * 20)
    tx = make_tx(
        VICTIM, router, input_bytes=bytes.fromhex("38ed1739") + b"\x00" * 64,
        logs=[erc20_log(USDT, VICTIM, pool, 500 * 10**6), erc20_log(WETH, pool, VICTIM, 10**17)],
    )
    assert detect_tx(tx, ctx, CFG) == []


def test_compound_tx_emits_both_categories_in_order():
    ctx, provider = make_ctx()
    attacker_victim = SCAMMER  # drains someone AND falls for poisoning in one tx
    append_history(
        ctx,
        approve_tx(VICTIM, SCAMMER),
        transfer_tx(SCAMMER, GENUINE, 9_000 * 10**6),
        transfer_tx(FAKE, SCAMMER, 5_000),
    )
    provider.balances[(USDT, VICTIM)] = 10**9
    tx = make_tx(
        SCAMMER, USDT,
        input_bytes=bytes.fromhex("deadbeef"),
        logs=[
            erc20_log(USDT, VICTIM, SCAMMER, 10**9),  # the drain
            erc20_log(USDT, SCAMMER, FAKE, 800 * 10**6),  # the poisoned payment
        ],
    )
    verdicts = detect_tx(tx, ctx, CFG)
    assert [v.category for v in verdicts] == [Category.ICE_PHISHING, Category.ADDRESS_POISONING]


def test_failed_tx_yields_nothing():
    ctx, _ = make_ctx()
    append_history(ctx)
    tx = make_tx(VICTIM, SCAM_CONTRACT, value=10**18, input_bytes=WALLET_SELECTOR, status=0)
    assert detect_tx(tx, ctx, CFG) == []


# ---------------------------------------------------------------------------
# remediation


def _theft_world():
    ctx, provider = make_ctx()
    grant_tx_ = approve_tx(VICTIM, SCAMMER)
    append_history(ctx, grant_tx_)
    provider.balances[(USDT, VICTIM)] = 10**9
    theft = drain_tx(SCAMMER, VICTIM, SCAMMER, 10**9, block=200)
    from phishscan.rules import prepare_tx

    prepared = prepare_tx(theft, ctx)
    ctx.store.append_block(
        Block(number=200, timestamp=1_700_000_200, transactions=(theft,)),
        [prepared.transfers], [prepared.token_call],
    )
    grant = ctx.store.find_grant(VICTIM, SCAMMER, ALL_GRANT_KINDS, 199)
    return ctx, grant, theft


def _append_single(ctx, tx):
    from phishscan.rules import prepare_tx

    prepared = prepare_tx(tx, ctx)
    ctx.store.append_block(
        Block(number=tx.block_number, timestamp=1_700_000_000 + tx.block_number, transactions=(tx,)),
        [prepared.transfers], [prepared.token_call],
    )


def test_remediation_revoke():
    ctx, grant, theft = _theft_world()
    revoke = make_tx(VICTIM, USDT, block=205,
                     input_bytes=abi.encode_call(SEL_APPROVE, ["address", "uint256"], (SCAMMER, 0)))
    _append_single(ctx, revoke)
    action = classify_remediation(
        VICTIM, grant, ctx.store, ctx.prices, ctx.floors, ctx.registry,
        horizon=205, after_block=200,
    )
    assert action is RemedialAction.REVOKE


def test_remediation_asset_transfer():
    ctx, grant, theft = _theft_world()
    fresh = Address(b"\x79" * 20)
    move = transfer_tx(VICTIM, fresh, 3 * 10**18, token=WETH, block=205)
    _append_single(ctx, move)
    action = classify_remediation(
        VICTIM, grant, ctx.store, ctx.prices, ctx.floors, ctx.registry,
        horizon=205, after_block=200,
    )
    assert action is RemedialAction.ASSET_TRANSFER


def test_remediation_none():
    ctx, grant, theft = _theft_world()
    action = classify_remediation(
        VICTIM, grant, ctx.store, ctx.prices, ctx.floors, ctx.registry,
        horizon=200, after_block=200,
    )
    assert action is RemedialAction.NONE


# ---------------------------------------------------------------------------
# config loading


def test_load_rule_config_from_json_and_overrides(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(
        '{"drain_ratio": "0.9", "dust_max_usd": "0.02",'
        ' "similarity": {"prefix_nibbles": 4, "suffix_nibbles": 5}}'
    )
    cfg = load_rule_config(path, dust_max_usd="0.05")
    assert cfg.drain_ratio == Decimal("0.9")
    assert cfg.dust_max_usd == Decimal("0.05")
    assert cfg.similarity.prefix_nibbles == 4
    assert cfg.similarity.suffix_nibbles == 5


def test_load_rule_config_from_toml(tmp_path):
    path = tmp_path / "rules.toml"
    path.write_text('drain_ratio = "0.8"\nfree_order_max_price_wei = 1\n[similarity]\nprefix_nibbles = 2\n')
    cfg = load_rule_config(path)
    assert cfg.drain_ratio == Decimal("0.8")
    assert cfg.free_order_max_price_wei == 1
    assert cfg.similarity.prefix_nibbles == 2
    assert cfg.similarity.suffix_nibbles == 4  # default preserved


def test_rule_config_validation():
    with pytest.raises(ValueError):
        RuleConfig(drain_ratio=Decimal("1.5"))
    with pytest.raises(ValueError):
        RuleConfig(dust_max_usd=Decimal("0"))

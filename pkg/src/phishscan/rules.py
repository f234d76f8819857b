"""The detection engine: prerequisites and sub-rules for the four scam
categories, the poisoning attack-transaction detector, and the victim
remediation classifier.

Detectors are pure functions over an immutable context snapshot whose
history covers blocks strictly before the inspected transaction. Missing
data (balances, proxy owners, prices) always degrades conservatively:
no verdict rather than a guess.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from pathlib import Path

from . import flow
from .decoder import (
    Adapter,
    OrderInfo,
    SelectorClass,
    classify_selector,
    decode_market_order,
    decode_token_call,
    packaged_adapters,
    selector_of,
)
from .history import (
    ALL_GRANT_KINDS,
    APPROVE_LIKE,
    PERMIT_LIKE,
    GrantKind,
    GrantRecord,
    HistoryStore,
)
from .ingest import BalanceKey, BalanceUnavailableError, ChainSource, Diagnostics, extract_transfers
from .model import (
    Address,
    Category,
    DecodedCall,
    Evidence,
    RULE_IDS,
    SubCategory,
    Transaction,
    TransferEvent,
    TransferKind,
    Verdict,
)
from .refdata import FloorOracle, LabelRegistry, PriceOracle
from .similarity import SimilarityConfig, addresses_similar

__all__ = [
    "RuleConfig",
    "DetectionContext",
    "AttackRecord",
    "RemedialAction",
    "addresses_similar",
    "SimilarityConfig",
    "detect_ice",
    "detect_nft_order",
    "detect_poisoning_victim",
    "detect_poisoning_attack",
    "detect_payable",
    "detect_tx",
    "prepare_tx",
    "detect_prepared",
    "classify_remediation",
    "load_rule_config",
]


@dataclass(frozen=True)
class RuleConfig:
    drain_ratio: Decimal = Decimal(1)  # fraction of the pre-block balance that counts as a drain
    dust_max_usd: Decimal = Decimal("0.01")
    free_order_max_price_wei: int = 0
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)

    def __post_init__(self) -> None:
        if not 0 < self.drain_ratio <= 1:
            raise ValueError("drain_ratio must be in (0, 1]")
        if self.dust_max_usd <= 0:
            raise ValueError("dust_max_usd must be > 0")
        if self.free_order_max_price_wei < 0:
            raise ValueError("free_order_max_price_wei must be >= 0")


def load_rule_config(path: str | Path | None = None, **overrides) -> RuleConfig:
    """Build a RuleConfig from an optional TOML/JSON file plus overrides.

    Override keys mirror the config fields; None values are ignored so CLI
    flags can pass through unset options.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            try:
                import tomllib  # py311+
            except ImportError:  # pragma: no cover
                import tomli as tomllib
            data = tomllib.loads(text)
    sim_data = data.get("similarity", {})
    merged = {
        "drain_ratio": data.get("drain_ratio"),
        "dust_max_usd": data.get("dust_max_usd"),
        "free_order_max_price_wei": data.get("free_order_max_price_wei"),
        "prefix_nibbles": sim_data.get("prefix_nibbles"),
        "suffix_nibbles": sim_data.get("suffix_nibbles"),
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    defaults = RuleConfig()
    similarity = SimilarityConfig(
        prefix_nibbles=int(merged["prefix_nibbles"] if merged["prefix_nibbles"] is not None
                           else defaults.similarity.prefix_nibbles),
        suffix_nibbles=int(merged["suffix_nibbles"] if merged["suffix_nibbles"] is not None
                           else defaults.similarity.suffix_nibbles),
    )
    return RuleConfig(
        drain_ratio=Decimal(str(merged["drain_ratio"])) if merged["drain_ratio"] is not None
        else defaults.drain_ratio,
        dust_max_usd=Decimal(str(merged["dust_max_usd"])) if merged["dust_max_usd"] is not None
        else defaults.dust_max_usd,
        free_order_max_price_wei=int(merged["free_order_max_price_wei"])
        if merged["free_order_max_price_wei"] is not None
        else defaults.free_order_max_price_wei,
        similarity=similarity,
    )


@dataclass
class DetectionContext:
    """Everything the detectors consult; immutable for the inspected block."""

    registry: LabelRegistry
    store: HistoryStore
    provider: ChainSource | None
    prices: PriceOracle
    floors: FloorOracle
    adapters: dict[str, Adapter] | None = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self) -> None:
        if self.adapters is None:
            self.adapters = packaged_adapters()


@dataclass(frozen=True, slots=True)
class AttackRecord:
    """A transaction that plants poison records, kept for gas accounting."""

    tx_hash: bytes
    attacker: Address
    kind: SubCategory  # ZeroValue | FakeToken | DustValue
    poisoned_victims: tuple[Address, ...]
    gas_used: int
    effective_gas_price_wei: int
    block_number: int
    timestamp: int

    def __post_init__(self) -> None:
        if not self.poisoned_victims:
            raise ValueError("attack record requires at least one victim")
        if self.kind not in (SubCategory.ZERO_VALUE, SubCategory.FAKE_TOKEN, SubCategory.DUST_VALUE):
            raise ValueError(f"not a poisoning kind: {self.kind}")


class RemedialAction(Enum):
    REVOKE = "Revoke"
    ASSET_TRANSFER = "AssetTransfer"
    NONE = "None"


# ---------------------------------------------------------------------------
# I: ice phishing


def _drained(tx: Transaction, event: TransferEvent, ctx: DetectionContext, cfg: RuleConfig) -> bool:
    """True when the transfer moves (at least) the drain share of the owner's
    pre-block balance. ERC-721 items are indivisible: moving one is a full
    drain of that item."""
    if event.kind is TransferKind.ERC721:
        return True
    if ctx.provider is None:
        ctx.diagnostics.balance_unavailable += 1
        return False
    try:
        balance = ctx.provider.balance_of(
            BalanceKey(token=event.token, holder=event.from_, block_number=tx.block_number)
        )
    except BalanceUnavailableError:
        ctx.diagnostics.balance_unavailable += 1
        return False
    if balance <= 0:
        # nothing to drain, or the fixture lacks the holder; stay conservative
        return False
    ratio = Fraction(cfg.drain_ratio)
    return Fraction(event.amount) >= ratio * Fraction(balance)


_GRANT_SUBCATEGORY = (
    (APPROVE_LIKE, SubCategory.APPROVE),
    (PERMIT_LIKE, SubCategory.PERMIT),
    (frozenset({GrantKind.SET_APPROVAL_FOR_ALL}), SubCategory.SET_APPROVE_FOR_ALL),
)


def detect_ice(
    tx: Transaction,
    transfers: list[TransferEvent],
    ctx: DetectionContext,
    cfg: RuleConfig,
) -> list[Verdict]:
    """Unauthorized sender draining someone else's tokens under a prior grant."""
    if not tx.success or tx.from_ in ctx.registry.authorized_set:
        return []
    drains: dict[Address, list[TransferEvent]] = {}
    for event in transfers:
        if event.kind is TransferKind.NATIVE or event.from_ == tx.from_:
            continue
        if _drained(tx, event, ctx, cfg):
            drains.setdefault(event.from_, []).append(event)
    verdicts = []
    up_to = tx.block_number - 1
    for victim, events in drains.items():
        grant = ctx.store.find_grant(victim, tx.from_, ALL_GRANT_KINDS, up_to)
        if grant is None:
            continue  # no discoverable enabling grant: insufficient evidence
        sub = next(sub for kinds, sub in _GRANT_SUBCATEGORY if grant.kind in kinds)
        scammer = [tx.from_]
        for event in events:
            if event.to not in scammer:
                scammer.append(event.to)
        legs = [flow.leg_from_transfer(e) for e in events]
        loss = flow.loss_usd(legs, ctx.prices, ctx.floors, ctx.registry)
        verdicts.append(
            Verdict(
                tx_hash=tx.hash,
                category=Category.ICE_PHISHING,
                sub_category=sub,
                scammer=tuple(scammer),
                victim=victim,
                evidence=(Evidence(RULE_IDS[sub], (tx.hash, grant.tx_hash)),),
                loss_usd=loss.total_usd,
            )
        )
    return verdicts


# ---------------------------------------------------------------------------
# II: NFT order


def _nft_legs(items, block_number: int) -> list[flow.AssetLeg]:
    counts: dict[Address, int] = {}
    for collection, _token_id in items:
        counts[collection] = counts.get(collection, 0) + 1
    return [
        flow.AssetLeg(TransferKind.ERC721, collection, count, block_number)
        for collection, count in counts.items()
    ]


def detect_nft_order(
    tx: Transaction,
    order_or_call: OrderInfo | DecodedCall | None,
    ctx: DetectionContext,
    cfg: RuleConfig,
) -> Verdict | None:
    """Bulk-transfer diversion, hostile proxy upgrade, or free buy order."""
    if order_or_call is None or not tx.success:
        return None
    if isinstance(order_or_call, DecodedCall):
        call = order_or_call
        if call.function_name == "bulkTransfer":
            recipient = call.params["recipient"]
            if recipient == tx.from_:
                return None
            items = call.params.get("transfer_items", ())
            loss = flow.loss_usd(
                _nft_legs(items, tx.block_number), ctx.prices, ctx.floors, ctx.registry
            )
            return Verdict(
                tx_hash=tx.hash,
                category=Category.NFT_ORDER,
                sub_category=SubCategory.BULK_TRANSFER,
                scammer=(recipient,),
                victim=tx.from_,
                evidence=(Evidence(RULE_IDS[SubCategory.BULK_TRANSFER], (tx.hash,)),),
                loss_usd=loss.total_usd,
            )
        if call.function_name == "upgradeTo":
            owner = call.params.get("owner")
            if owner is None:
                ctx.diagnostics.note(f"proxy owner unknown for {tx.to.hex}; upgrade not judged")
                return None
            if owner == tx.from_:
                return None
            scammer = [tx.from_]
            new_impl = call.params.get("new_implementation")
            if new_impl is not None and new_impl not in scammer:
                scammer.append(new_impl)
            return Verdict(
                tx_hash=tx.hash,
                category=Category.NFT_ORDER,
                sub_category=SubCategory.PROXY_UPGRADE,
                scammer=tuple(scammer),
                victim=owner,
                evidence=(Evidence(RULE_IDS[SubCategory.PROXY_UPGRADE], (tx.hash,)),),
                loss_usd=None,  # enables later theft; nothing moved yet
            )
        return None

    order = order_or_call
    free = (
        order.price_wei <= cfg.free_order_max_price_wei
        or order.fees_bps == 10_000
        or order.recipient != order.offerer
    )
    if not free:
        return None
    scammer = [a for a in (order.recipient, tx.from_) if a != order.offerer]
    deduped = tuple(dict.fromkeys(scammer))
    if not deduped:
        return None  # offerer fulfilling their own order: self-dealing, not phishing
    loss = flow.loss_usd(
        _nft_legs(order.nft_items, tx.block_number), ctx.prices, ctx.floors, ctx.registry
    )
    return Verdict(
        tx_hash=tx.hash,
        category=Category.NFT_ORDER,
        sub_category=SubCategory.FREE_BUY_ORDER,
        scammer=deduped,
        victim=order.offerer,
        evidence=(Evidence(RULE_IDS[SubCategory.FREE_BUY_ORDER], (tx.hash,)),),
        loss_usd=loss.total_usd,
    )


# ---------------------------------------------------------------------------
# III: address poisoning


def _is_dust(event: TransferEvent, ctx: DetectionContext, cfg: RuleConfig) -> bool:
    """Value in (0, dust threshold): USD when priceable, whole-unit otherwise."""
    if event.amount == 0:
        return False
    usd = flow.transfer_usd(event, ctx.prices, ctx.floors, ctx.registry)
    if usd is not None:
        return usd < cfg.dust_max_usd
    if event.kind is TransferKind.ERC721:
        return False
    decimals = ctx.registry.decimals_of(event.token) if event.token else 18
    return event.amount * 100 < 10 ** (decimals if decimals is not None else 18)


def _planted_sub_category(
    planted: TransferEvent, ctx: DetectionContext, cfg: RuleConfig
) -> SubCategory | None:
    if planted.token is not None and ctx.registry.is_fake_token(planted.token):
        return SubCategory.FAKE_TOKEN
    if planted.amount == 0:
        return SubCategory.ZERO_VALUE
    if _is_dust(planted, ctx, cfg):
        return SubCategory.DUST_VALUE
    return None


def detect_poisoning_victim(
    tx: Transaction,
    transfers: list[TransferEvent],
    ctx: DetectionContext,
    cfg: RuleConfig,
) -> list[Verdict]:
    """Victim pays a look-alike address that was planted into their history.

    The planted record is either an outgoing forgery (zero-value or fake
    token transferFrom naming the victim as source) or an incoming dust
    transfer from the look-alike address itself.
    """
    if not tx.success:
        return []
    up_to = tx.block_number - 1
    verdicts: dict[Address, Verdict] = {}
    for event in transfers:
        if event.from_ != tx.from_ or event.amount == 0 or event.to in verdicts:
            continue
        genuine = ctx.store.find_genuine_similar_transfer(
            tx.from_, event.to, up_to, cfg.similarity
        )
        if genuine is None:
            continue
        planted = ctx.store.find_prior_transfer_to(tx.from_, event.to, up_to)
        sub = None
        if planted is not None:
            sub = _planted_sub_category(planted, ctx, cfg)
        else:
            incoming = ctx.store.find_prior_transfer_to(event.to, tx.from_, up_to)
            if incoming is not None and _is_dust(incoming, ctx, cfg):
                planted, sub = incoming, SubCategory.DUST_VALUE
        if sub is None:
            continue
        loss = flow.loss_usd(
            [flow.leg_from_transfer(event)], ctx.prices, ctx.floors, ctx.registry
        )
        verdicts[event.to] = Verdict(
            tx_hash=tx.hash,
            category=Category.ADDRESS_POISONING,
            sub_category=sub,
            scammer=(event.to,),
            victim=tx.from_,
            evidence=(
                Evidence(RULE_IDS[sub], (tx.hash, planted.tx_hash, genuine.tx_hash)),
            ),
            loss_usd=loss.total_usd,
        )
    return list(verdicts.values())


def detect_poisoning_attack(
    tx: Transaction,
    transfers: list[TransferEvent],
    ctx: DetectionContext,
    cfg: RuleConfig,
    block_timestamp: int,
) -> list[AttackRecord]:
    """Flag transactions that plant poison records (the scammer side)."""
    if not tx.success:
        return []
    zero_victims: list[Address] = []
    fake_victims: list[Address] = []
    dust_victims: list[Address] = []
    for event in transfers:
        if event.kind is TransferKind.ERC721:
            continue
        token = event.token
        if token is not None and event.from_ != tx.from_:
            if ctx.registry.is_fake_token(token):
                fake_victims.append(event.from_)
                continue
            if event.amount == 0 and ctx.registry.price_symbol_of(token) is not None:
                zero_victims.append(event.from_)
                continue
        if event.amount > 0 and _is_dust(event, ctx, cfg):
            priceable = token is None or ctx.registry.price_symbol_of(token) is not None
            if not priceable:
                continue
            if ctx.store.first_seen_block(event.from_) is not None:
                continue  # dust senders are throwaway look-alikes, not reused
            peers = ctx.store.counterparties_of(event.to)
            if any(addresses_similar(peer, event.from_, cfg.similarity) for peer in peers):
                dust_victims.append(event.to)

    records = []
    for kind, victims in (
        (SubCategory.ZERO_VALUE, zero_victims),
        (SubCategory.FAKE_TOKEN, fake_victims),
        (SubCategory.DUST_VALUE, dust_victims),
    ):
        if victims:
            records.append(
                AttackRecord(
                    tx_hash=tx.hash,
                    attacker=tx.from_,
                    kind=kind,
                    poisoned_victims=tuple(dict.fromkeys(victims)),
                    gas_used=tx.gas_used,
                    effective_gas_price_wei=tx.effective_gas_price_wei,
                    block_number=tx.block_number,
                    timestamp=block_timestamp,
                )
            )
    return records


# ---------------------------------------------------------------------------
# IV: payable function


def detect_payable(tx: Transaction, ctx: DetectionContext) -> Verdict | None:
    """Value sent into a silent, closed-source contract via a bait selector."""
    if not tx.success or tx.to is None or tx.value_wei == 0 or tx.logs:
        return None
    registry = ctx.registry
    if not registry.is_contract(tx.to) or registry.is_verified_source(tx.to):
        return None
    sel = selector_of(tx.input)
    if sel is None:
        return None
    cls = classify_selector(sel, registry)
    if cls is None:
        return None
    sub = SubCategory.AIRDROP_FUNCTION if cls == SelectorClass.AIRDROP else SubCategory.WALLET_FUNCTION
    loss = flow.loss_usd(
        [flow.AssetLeg(TransferKind.NATIVE, None, tx.value_wei, tx.block_number)],
        ctx.prices,
        ctx.floors,
        ctx.registry,
    )
    return Verdict(
        tx_hash=tx.hash,
        category=Category.PAYABLE_FUNCTION,
        sub_category=sub,
        scammer=(tx.to,),
        victim=tx.from_,
        evidence=(Evidence(RULE_IDS[sub], (tx.hash,)),),
        loss_usd=loss.total_usd,
    )


# ---------------------------------------------------------------------------
# orchestration


@dataclass(frozen=True)
class PreparedTx:
    """Per-transaction work shared between detection and history append."""

    transfers: list[TransferEvent]
    token_call: DecodedCall | None
    order_or_call: OrderInfo | DecodedCall | None


def prepare_tx(tx: Transaction, ctx: DetectionContext) -> PreparedTx:
    transfers = extract_transfers(tx, ctx.diagnostics)
    token_call = decode_token_call(tx, ctx.registry, ctx.diagnostics)
    order_or_call = None
    if tx.to is not None and tx.to in ctx.registry.nft_markets:
        order_or_call = decode_market_order(
            tx, ctx.registry, ctx.provider, ctx.adapters, ctx.diagnostics
        )
    return PreparedTx(transfers=transfers, token_call=token_call, order_or_call=order_or_call)


def detect_prepared(
    tx: Transaction, prepared: PreparedTx, ctx: DetectionContext, cfg: RuleConfig
) -> list[Verdict]:
    """All verdicts for one transaction, in fixed category order."""
    verdicts: list[Verdict] = []
    verdicts.extend(detect_ice(tx, prepared.transfers, ctx, cfg))
    nft = detect_nft_order(tx, prepared.order_or_call, ctx, cfg)
    if nft is not None:
        verdicts.append(nft)
    verdicts.extend(detect_poisoning_victim(tx, prepared.transfers, ctx, cfg))
    payable = detect_payable(tx, ctx)
    if payable is not None:
        verdicts.append(payable)
    return verdicts


def detect_tx(tx: Transaction, ctx: DetectionContext, cfg: RuleConfig) -> list[Verdict]:
    """Run the four detectors against one transaction (history must already
    cover all blocks before it)."""
    if not tx.success:
        return []
    return detect_prepared(tx, prepare_tx(tx, ctx), ctx, cfg)


# ---------------------------------------------------------------------------
# victim remediation

_ASSET_TRANSFER_SHARE = Decimal("0.95")


def classify_remediation(
    victim: Address,
    grant: GrantRecord,
    store: HistoryStore,
    prices: PriceOracle,
    floors: FloorOracle,
    registry: LabelRegistry,
    horizon: int,
    after_block: int | None = None,
) -> RemedialAction:
    """What the victim did after the theft enabled by `grant`.

    Revoke wins when the same (token, spender) allowance is later zeroed.
    Otherwise the victim counts as having transferred assets away when at
    least 95% of their post-theft priceable outflow lands on one fresh
    address. `after_block` is where the observation window opens (the theft
    block; defaults to the grant's block).
    """
    start = after_block if after_block is not None else grant.block_number
    revocation = store.find_revocation(
        victim, grant.grantee, grant.token, after_block=start, up_to=horizon
    )
    if revocation is not None:
        return RemedialAction.REVOKE

    usd_by_dest: dict[Address, Decimal] = {}
    first_to_dest: dict[Address, int] = {}
    total = Decimal(0)
    for event in store.out_transfers(victim):
        if not start < event.block_number <= horizon or event.amount == 0:
            continue
        usd = flow.transfer_usd(event, prices, floors, registry)
        if usd is None:
            continue
        usd_by_dest[event.to] = usd_by_dest.get(event.to, Decimal(0)) + usd
        first_to_dest.setdefault(event.to, event.block_number)
        total += usd
    if total <= 0:
        return RemedialAction.NONE
    dest, dest_usd = max(usd_by_dest.items(), key=lambda kv: (kv[1], kv[0].raw))
    first_seen = store.first_seen_block(dest)
    fresh = first_seen is None or first_seen >= first_to_dest[dest]
    if fresh and dest_usd >= _ASSET_TRANSFER_SHARE * total:
        return RemedialAction.ASSET_TRANSFER
    return RemedialAction.NONE

"""Post-detection analytics: USD valuation, cash-out organization discovery,
stolen-NFT sale tracking, and poisoning gas accounting.

Valuation is exact-decimal and happens only here: ERC-20 and native amounts
price at the event's block, NFTs price at the collection floor. Assets
outside the supported price set stay unpriced and are excluded from sums.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, localcontext
from typing import TYPE_CHECKING, Iterable

from .model import Address, TransferEvent, TransferKind, Verdict
from .refdata import FloorOracle, LabelRegistry, PriceOracle, UnpriceableError

if TYPE_CHECKING:  # pragma: no cover
    from .rules import AttackRecord

logger = logging.getLogger(__name__)

USD_CENTS = Decimal("0.01")
WEI_PER_ETH = Decimal(10) ** 18


# ---------------------------------------------------------------------------
# loss valuation


@dataclass(frozen=True, slots=True)
class AssetLeg:
    """One valued movement inside a verdict: native wei, erc20 raw units, or
    an NFT count for a collection."""

    kind: TransferKind
    token: Address | None  # token or collection; None for native
    amount: int  # wei / raw units / NFT count
    block_number: int


@dataclass(frozen=True, slots=True)
class LossResult:
    total_usd: Decimal | None  # None when every leg was unpriceable
    partial: bool  # True when some legs were skipped as unpriceable


def leg_from_transfer(event: TransferEvent) -> AssetLeg:
    amount = 1 if event.kind is TransferKind.ERC721 else event.amount
    return AssetLeg(
        kind=event.kind, token=event.token, amount=amount, block_number=event.block_number
    )


def _leg_usd(
    leg: AssetLeg, prices: PriceOracle, floors: FloorOracle, registry: LabelRegistry
) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 80  # uint256 amounts times prices stay exact
        if leg.kind is TransferKind.NATIVE:
            return Decimal(leg.amount) * prices.native_price_usd(leg.block_number) / WEI_PER_ETH
        if leg.kind is TransferKind.ERC20:
            decimals = registry.decimals_of(leg.token)
            if decimals is None:
                raise UnpriceableError(f"unknown decimals for {leg.token.hex}")
            price = prices.price_usd(leg.token, leg.block_number, registry)
            return Decimal(leg.amount) * price / (Decimal(10) ** decimals)
        return Decimal(leg.amount) * floors.floor_price_usd(leg.token, leg.block_number)


def loss_usd(
    legs: Iterable[AssetLeg],
    prices: PriceOracle,
    floors: FloorOracle,
    registry: LabelRegistry,
) -> LossResult:
    """Sum the USD value of priceable legs; additive and homogeneous."""
    total = Decimal(0)
    priced_any = False
    partial = False
    for leg in legs:
        try:
            total += _leg_usd(leg, prices, floors, registry)
            priced_any = True
        except UnpriceableError:
            partial = True
    if not priced_any:
        return LossResult(total_usd=None, partial=partial)
    return LossResult(total_usd=total.quantize(USD_CENTS), partial=partial)


def transfer_usd(
    event: TransferEvent,
    prices: PriceOracle,
    floors: FloorOracle,
    registry: LabelRegistry,
) -> Decimal | None:
    """Exact USD value of one transfer event, or None when unpriceable.

    Not rounded: threshold comparisons (dust, edge pruning) need the exact
    value, so any display rounding is the caller's business.
    """
    try:
        return _leg_usd(leg_from_transfer(event), prices, floors, registry)
    except UnpriceableError:
        return None


# ---------------------------------------------------------------------------
# organization discovery


@dataclass(frozen=True)
class FlowConfig:
    min_edge_usd: Decimal = Decimal(100)
    aggregator_fan_in: int = 3  # ">= n distinct cashiers" promotes an aggregator
    rounds: int = 3


@dataclass(frozen=True, slots=True)
class FlowEdge:
    src: Address
    dst: Address
    total_usd: Decimal
    first_block: int
    last_block: int

    def __post_init__(self) -> None:
        if self.total_usd < 0 or self.first_block > self.last_block:
            raise ValueError("malformed flow edge")


@dataclass(frozen=True)
class Organization:
    id: str
    cashiers: frozenset[Address]
    aggregators: frozenset[Address]
    depositors: frozenset[Address]
    total_profit_usd: Decimal

    def __post_init__(self) -> None:
        if not self.cashiers:
            raise ValueError("organization requires at least one cashier")
        if (
            self.cashiers & self.aggregators
            or self.cashiers & self.depositors
            or self.aggregators & self.depositors
        ):
            raise ValueError("organization role sets must be pairwise disjoint")


class _UnionFind:
    def __init__(self) -> None:
        self._parent: dict[Address, Address] = {}

    def find(self, x: Address) -> Address:
        parent = self._parent.setdefault(x, x)
        while parent != x:
            self._parent[x] = parent = self._parent.setdefault(parent, parent)
            x, parent = parent, self._parent[parent]
        return x

    def union(self, a: Address, b: Address) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic root: smaller address wins
            if rb.raw < ra.raw:
                ra, rb = rb, ra
            self._parent[rb] = ra


def _collapse_dex_hop(
    event: TransferEvent,
    tx_events: list[TransferEvent],
    registry: LabelRegistry,
) -> tuple[Address, TransferEvent] | None:
    """Fold src -> router -> recipient swaps into one edge valued at the
    output leg; uncollapsible router edges are removed entirely."""
    for out in tx_events:
        if out.from_ == event.to and out.token != event.token:
            return out.to, out
    return None


def extract_flow_edges(
    frontier: set[Address],
    events_by_sender: dict[Address, list[TransferEvent]],
    events_by_tx: dict[bytes, list[TransferEvent]],
    registry: LabelRegistry,
    prices: PriceOracle,
    floors: FloorOracle,
    cfg: FlowConfig,
) -> dict[tuple[Address, Address], FlowEdge]:
    """Outgoing edges from the frontier, DEX hops collapsed, dust pruned."""
    edges: dict[tuple[Address, Address], FlowEdge] = {}
    for src in sorted(frontier, key=lambda a: a.raw):
        for event in events_by_sender.get(src, ()):
            if event.amount == 0:
                continue
            dst = event.to
            valued_event = event
            if dst in registry.dex_routers:
                folded = _collapse_dex_hop(event, events_by_tx.get(event.tx_hash, []), registry)
                if folded is None:
                    continue
                dst, valued_event = folded
            usd = transfer_usd(valued_event, prices, floors, registry)
            if usd is None or usd < cfg.min_edge_usd:
                continue
            key = (src, dst)
            prior = edges.get(key)
            if prior is None:
                edges[key] = FlowEdge(src, dst, usd, event.block_number, event.block_number)
            else:
                edges[key] = FlowEdge(
                    src,
                    dst,
                    prior.total_usd + usd,
                    min(prior.first_block, event.block_number),
                    max(prior.last_block, event.block_number),
                )
    return edges


def discover_orgs(
    verdicts: list[Verdict],
    transfer_stream: Iterable[TransferEvent],
    registry: LabelRegistry,
    prices: PriceOracle,
    floors: FloorOracle,
    cfg: FlowConfig = FlowConfig(),
) -> list[Organization]:
    """Cluster scammer addresses into cash-out organizations.

    Locates cashiers from verdicts, expands their outgoing transfers for a
    fixed number of rounds, labels destinations (CEX-whitelisted addresses as
    depositors, destinations fed by enough distinct cashiers as aggregators),
    and merges organizations only through shared aggregators. Output is
    ordered by profit, descending.
    """
    if not verdicts:
        return []

    cashiers: list[Address] = []
    seen: set[Address] = set()
    for v in verdicts:
        for scammer in v.scammer:
            if scammer not in seen:
                seen.add(scammer)
                cashiers.append(scammer)
    cashier_set = set(cashiers)

    events_by_sender: dict[Address, list[TransferEvent]] = {}
    events_by_tx: dict[bytes, list[TransferEvent]] = {}
    for event in transfer_stream:
        events_by_sender.setdefault(event.from_, []).append(event)
        events_by_tx.setdefault(event.tx_hash, []).append(event)

    all_edges: dict[tuple[Address, Address], FlowEdge] = {}
    frontier = set(cashier_set)
    expanded: set[Address] = set()
    depositors: set[Address] = set()
    aggregators: set[Address] = set()
    for _round in range(cfg.rounds):
        frontier -= expanded
        if not frontier:
            break
        edges = extract_flow_edges(
            frontier, events_by_sender, events_by_tx, registry, prices, floors, cfg
        )
        expanded |= frontier
        all_edges.update(edges)
        next_frontier: set[Address] = set()
        cashier_indegree: dict[Address, set[Address]] = {}
        for (src, dst), _edge in all_edges.items():
            if src in cashier_set:
                cashier_indegree.setdefault(dst, set()).add(src)
        for _src, dst in edges:
            if dst in cashier_set:
                continue
            if dst in registry.cex_set:
                depositors.add(dst)
            elif len(cashier_indegree.get(dst, ())) >= cfg.aggregator_fan_in:
                aggregators.add(dst)
                next_frontier.add(dst)
            else:
                next_frontier.add(dst)  # unknown; expanded again next round
        frontier = next_frontier

    aggregators -= cashier_set
    depositors -= cashier_set | aggregators

    # organizations = components over direct cashier -> aggregator edges
    uf = _UnionFind()
    for cashier in cashiers:
        uf.find(cashier)
    for (src, dst) in all_edges:
        if src in cashier_set and dst in aggregators:
            uf.union(src, dst)

    members: dict[Address, dict[str, set[Address]]] = {}
    for cashier in cashiers:
        root = uf.find(cashier)
        members.setdefault(root, {"cashiers": set(), "aggregators": set(), "depositors": set()})[
            "cashiers"
        ].add(cashier)
    for aggregator in aggregators:
        root = uf.find(aggregator)
        if root in members:
            members[root]["aggregators"].add(aggregator)

    # depositors attach to the org that can reach them through unknown hops;
    # shared reach resolves to the smallest org id (depositors never merge orgs)
    org_of: dict[Address, Address] = {}
    for root, sets in members.items():
        org_nodes = sets["cashiers"] | sets["aggregators"]
        stack = list(org_nodes)
        reachable: set[Address] = set(org_nodes)
        while stack:
            node = stack.pop()
            for (src, dst) in all_edges:
                if src != node or dst in reachable:
                    continue
                reachable.add(dst)
                if dst not in depositors and dst not in cashier_set:
                    stack.append(dst)
        for d in depositors & reachable:
            if d not in org_of or root.raw < org_of[d].raw:
                org_of[d] = root
    for d, root in org_of.items():
        members[root]["depositors"].add(d)

    profit: dict[Address, Decimal] = {root: Decimal(0) for root in members}
    for v in verdicts:
        if v.loss_usd is None or not v.scammer:
            continue
        profit[uf.find(v.scammer[0])] += v.loss_usd

    orgs = [
        Organization(
            id="org-" + root.hex,
            cashiers=frozenset(sets["cashiers"]),
            aggregators=frozenset(sets["aggregators"]),
            depositors=frozenset(sets["depositors"]),
            total_profit_usd=profit[root].quantize(USD_CENTS),
        )
        for root, sets in members.items()
    ]
    orgs.sort(key=lambda o: (-o.total_profit_usd, o.id))
    return orgs


# ---------------------------------------------------------------------------
# stolen-NFT sale tracking

ROLE_CASHIER = "cashier"
ROLE_AGGREGATOR = "fund aggregator"


@dataclass
class NftSalesTable:
    """Counts of stolen-NFT sales per (market, seller role), plus unsold."""

    sales: dict[tuple[str, str], int] = field(default_factory=dict)
    held: int = 0

    def record_sale(self, market: str, role: str) -> None:
        key = (market, role)
        self.sales[key] = self.sales.get(key, 0) + 1

    def by_market(self) -> dict[str, dict[str, int]]:
        table: dict[str, dict[str, int]] = {}
        for (market, role), count in sorted(self.sales.items()):
            table.setdefault(market, {})[role] = count
        return table


def track_nft_sales(
    stolen: list[tuple[Address, int, Address]],
    events_with_market: Iterable[tuple[TransferEvent, str | None]],
    registry: LabelRegistry,
) -> NftSalesTable:
    """Follow each stolen (collection, tokenId, thief) forward.

    A sale is the first subsequent transfer of the item mediated by a
    registered market contract; the seller role is cashier when the thief
    sells directly, fund aggregator when a later holder sells. Items that
    never reach a market count as held.
    """
    by_item: dict[tuple[Address, int], list[tuple[TransferEvent, str | None]]] = {}
    for event, market in events_with_market:
        if event.kind is not TransferKind.ERC721 or event.token is None:
            continue
        by_item.setdefault((event.token, event.amount), []).append((event, market))

    table = NftSalesTable()
    for collection, token_id, thief in stolen:
        chain = by_item.get((collection, token_id), [])
        holder = thief
        sold = False
        for event, market in chain:
            if event.from_ != holder:
                continue
            if market is not None:
                table.record_sale(market, ROLE_CASHIER if holder == thief else ROLE_AGGREGATOR)
                sold = True
                break
            holder = event.to
        if not sold:
            table.held += 1
    return table


# ---------------------------------------------------------------------------
# poisoning gas accounting


def poisoning_gas_total(
    records: Iterable["AttackRecord"],
) -> tuple[Decimal, list[tuple[str, Decimal]]]:
    """Total ETH burned by attack transactions, plus a per-day series."""
    total_wei = 0
    daily_wei: dict[str, int] = {}
    for record in records:
        wei = record.gas_used * record.effective_gas_price_wei
        total_wei += wei
        day = datetime.fromtimestamp(record.timestamp, tz=timezone.utc).date().isoformat()
        daily_wei[day] = daily_wei.get(day, 0) + wei
    with localcontext() as ctx:
        ctx.prec = 60
        total_eth = Decimal(total_wei) / WEI_PER_ETH
        series = [(day, Decimal(wei) / WEI_PER_ETH) for day, wei in sorted(daily_wei.items())]
    return total_eth, series

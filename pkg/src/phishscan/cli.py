"""Command-line surface: detection over block ranges, single-tx explanation,
organization discovery, report emission, corpus generation, benchmarking.

Exit codes: 0 ok, 2 chain source unreachable, 3 bad input/config, 4 not
found.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from decimal import Decimal
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import flow as flow_mod
from .decoder import (
    SEL_APPROVE,
    SEL_INCREASE_ALLOWANCE,
    SEL_PERMIT,
    selector_of,
)
from .history import GrantKind
from .ingest import FixtureProvider, RpcProvider, TransportError, extract_transfers
from .model import (
    Category,
    SubCategory,
    Verdict,
    VerdictDecodeError,
    hash_hex,
    normalize_address,
    parse_hash32,
    verdict_from_json,
)
from .pipeline import build_history, run_detection
from .refdata import ConfigError, ValidationError, load_oracles, load_registry_dir
from .rules import RuleConfig, classify_remediation, load_rule_config

EXIT_OK = 0
EXIT_UNREACHABLE = 2
EXIT_BAD_INPUT = 3
EXIT_NOT_FOUND = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_environment(fixtures, rpc, registry_dir):
    """Resolve provider + registry + oracles; registry defaults to
    <fixtures>/registry when present."""
    if fixtures is None and rpc is None:
        _fail(EXIT_BAD_INPUT, "one of --fixtures or --rpc is required")
    if registry_dir is None and fixtures is not None:
        candidate = Path(fixtures) / "registry"
        if candidate.is_dir():
            registry_dir = candidate
    if registry_dir is None:
        _fail(EXIT_BAD_INPUT, "--registry-dir is required (or <fixtures>/registry must exist)")
    try:
        registry = load_registry_dir(registry_dir)
        prices, floors = load_oracles(registry_dir)
    except (ConfigError, ValidationError) as exc:
        _fail(EXIT_BAD_INPUT, str(exc))
    if fixtures is not None:
        try:
            provider = FixtureProvider(fixtures)
        except (TransportError, ValueError) as exc:
            _fail(EXIT_BAD_INPUT, f"cannot load fixtures: {exc}")
        source = "fixtures"
    else:
        provider = RpcProvider(rpc)
        try:
            provider._call("eth_blockNumber", [])
        except TransportError as exc:
            _fail(EXIT_UNREACHABLE, f"RPC endpoint unreachable: {exc}")
        source = "rpc"
    return provider, registry, prices, floors, source


def _rule_config(config, **overrides) -> RuleConfig:
    try:
        return load_rule_config(config, **overrides)
    except (ValueError, KeyError) as exc:
        _fail(EXIT_BAD_INPUT, f"bad rule config: {exc}")


def _block_span(provider, from_block, to_block):
    if from_block is not None and to_block is not None:
        return from_block, to_block
    if isinstance(provider, FixtureProvider) and provider.block_numbers:
        numbers = provider.block_numbers
        return (
            from_block if from_block is not None else numbers[0],
            to_block if to_block is not None else numbers[-1],
        )
    _fail(EXIT_BAD_INPUT, "--from/--to are required with an RPC source")


def _category_summary(verdicts: list[Verdict]) -> list[tuple[str, int, Decimal]]:
    rows = []
    for category in Category:
        members = [v for v in verdicts if v.category is category]
        loss = sum((v.loss_usd for v in members if v.loss_usd is not None), Decimal(0))
        rows.append((category.value, len(members), loss))
    return rows


def _print_summary(verdicts: list[Verdict]) -> None:
    click.echo(f"{'Category':<20}{'Number':>10}{'Loss ($)':>20}{'Average ($)':>16}")
    total_n, total_loss = 0, Decimal(0)
    for name, count, loss in _category_summary(verdicts):
        avg = (loss / count).quantize(Decimal("0.01")) if count else Decimal("0.00")
        click.echo(f"{name:<20}{count:>10}{loss:>20}{avg:>16}")
        total_n += count
        total_loss += loss
    total_avg = (total_loss / total_n).quantize(Decimal("0.01")) if total_n else Decimal("0.00")
    click.echo(f"{'Total':<20}{total_n:>10}{total_loss:>20}{total_avg:>16}")


rule_options = [
    click.option("--config", type=click.Path(exists=True), default=None, help="TOML/JSON rule config."),
    click.option("--drain-ratio", type=str, default=None),
    click.option("--dust-max-usd", type=str, default=None),
    click.option("--free-order-max-price-wei", type=int, default=None),
    click.option("--prefix-nibbles", type=int, default=None),
    click.option("--suffix-nibbles", type=int, default=None),
]

source_options = [
    click.option("--fixtures", type=click.Path(exists=True, file_okay=False), default=None),
    click.option("--rpc", envvar="PHISHSCAN_RPC_URL", default=None),
    click.option(
        "--registry-dir",
        envvar="PHISHSCAN_REGISTRY_DIR",
        type=click.Path(exists=True, file_okay=False),
        default=None,
    ),
]


def _apply(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@click.group()
def main():
    """Rule-based detection of payload-level phishing on EVM chains."""


@main.command()
@_apply(source_options)
@click.option("--from", "from_block", type=int, default=None)
@click.option("--to", "to_block", type=int, default=None)
@click.option("--out", type=click.Path(), required=True, help="Verdict stream (newline JSON).")
@click.option("--attacks-out", type=click.Path(), default=None)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--threads", type=int, default=1)
@click.option("--history-dir", type=click.Path(), default=None)
@_apply(rule_options)
def detect(fixtures, rpc, registry_dir, from_block, to_block, out, attacks_out,
           manifest_path, threads, history_dir, config, drain_ratio, dust_max_usd,
           free_order_max_price_wei, prefix_nibbles, suffix_nibbles):
    """Detect scams over a block range and write the verdict stream."""
    provider, registry, prices, floors, source = _load_environment(fixtures, rpc, registry_dir)
    cfg = _rule_config(
        config,
        drain_ratio=drain_ratio,
        dust_max_usd=dust_max_usd,
        free_order_max_price_wei=free_order_max_price_wei,
        prefix_nibbles=prefix_nibbles,
        suffix_nibbles=suffix_nibbles,
    )
    from_block, to_block = _block_span(provider, from_block, to_block)
    attacks_out = attacks_out or out + ".attacks.jsonl"
    manifest_path = manifest_path or out + ".manifest.json"
    with open(out, "w") as verdict_sink, open(attacks_out, "w") as attack_sink:
        result = run_detection(
            provider, registry, prices, floors, cfg, from_block, to_block,
            threads=threads, input_source=source, history_dir=history_dir,
            verdict_sink=verdict_sink, attack_sink=attack_sink,
        )
    Path(manifest_path).write_text(result.manifest.to_json() + "\n")
    _print_summary(result.verdicts)
    click.echo(f"verdicts: {out}")
    click.echo(f"attacks: {attacks_out}")
    click.echo(f"manifest: {manifest_path}")


@main.command("classify-tx")
@click.argument("tx_hash")
@_apply(source_options)
@_apply(rule_options)
def classify_tx(tx_hash, fixtures, rpc, registry_dir, config, drain_ratio, dust_max_usd,
                free_order_max_price_wei, prefix_nibbles, suffix_nibbles):
    """Explain the verdicts (if any) for one transaction."""
    provider, registry, prices, floors, source = _load_environment(fixtures, rpc, registry_dir)
    cfg = _rule_config(
        config,
        drain_ratio=drain_ratio,
        dust_max_usd=dust_max_usd,
        free_order_max_price_wei=free_order_max_price_wei,
        prefix_nibbles=prefix_nibbles,
        suffix_nibbles=suffix_nibbles,
    )
    try:
        wanted = parse_hash32(tx_hash)
    except ValueError as exc:
        _fail(EXIT_BAD_INPUT, str(exc))
    if not isinstance(provider, FixtureProvider):
        _fail(EXIT_BAD_INPUT, "classify-tx currently requires --fixtures")
    target_block = None
    for number in provider.block_numbers:
        for tx in provider.get_block(number).transactions:
            if tx.hash == wanted:
                target_block = number
    if target_block is None:
        _fail(EXIT_NOT_FOUND, f"transaction {tx_hash} not found in fixtures")
    start = provider.block_numbers[0]
    result = run_detection(
        provider, registry, prices, floors, cfg, start, target_block, input_source=source
    )
    matched = [v for v in result.verdicts if v.tx_hash == wanted]
    if not matched:
        click.echo("no verdict")
        return
    for verdict in matched:
        loss = f"${verdict.loss_usd}" if verdict.loss_usd is not None else "unknown"
        click.echo(
            f"{verdict.evidence[0].rule_id} {verdict.category.value}/{verdict.sub_category.value}; "
            f"victim={verdict.victim.hex}; "
            f"scammer={','.join(a.hex for a in verdict.scammer)}; loss={loss}"
        )
        for ev in verdict.evidence:
            support = " ".join(hash_hex(h) for h in ev.supporting_tx_hashes)
            click.echo(f"  rule {ev.rule_id} supported by: {support}")


def _read_verdict_file(path: str) -> list[Verdict]:
    verdicts = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    verdicts.append(verdict_from_json(line))
    except (OSError, VerdictDecodeError) as exc:
        _fail(EXIT_BAD_INPUT, f"cannot read verdict file: {exc}")
    return verdicts


def _transfer_stream(provider: FixtureProvider):
    events = []
    for number in provider.block_numbers:
        for tx in provider.get_block(number).transactions:
            events.extend(extract_transfers(tx))
    return events


@main.command()
@click.option("--verdicts", "verdict_file", type=click.Path(exists=True), required=True)
@_apply(source_options)
@click.option("--out", type=click.Path(), default=None, help="Organizations JSON output.")
@click.option("--min-edge-usd", type=str, default="100")
@click.option("--fan-in", type=int, default=3)
@click.option("--rounds", type=int, default=3)
def orgs(verdict_file, fixtures, rpc, registry_dir, out, min_edge_usd, fan_in, rounds):
    """Cluster verdict scammers into cash-out organizations."""
    provider, registry, prices, floors, _source = _load_environment(fixtures, rpc, registry_dir)
    if not isinstance(provider, FixtureProvider):
        _fail(EXIT_BAD_INPUT, "orgs currently requires --fixtures")
    verdicts = _read_verdict_file(verdict_file)
    cfg = flow_mod.FlowConfig(
        min_edge_usd=Decimal(min_edge_usd), aggregator_fan_in=fan_in, rounds=rounds
    )
    organizations = flow_mod.discover_orgs(
        verdicts, _transfer_stream(provider), registry, prices, floors, cfg
    )
    total = sum((o.total_profit_usd for o in organizations), Decimal(0))
    payload = []
    click.echo(f"{'Rank':<6}{'Organization':<50}{'Profit ($)':>16}{'Share':>9}")
    for rank, org in enumerate(organizations, start=1):
        share = (org.total_profit_usd / total * 100).quantize(Decimal("0.1")) if total else Decimal(0)
        click.echo(f"#{rank:<5}{org.id:<50}{org.total_profit_usd:>16}{share:>8}%")
        payload.append(
            {
                "id": org.id,
                "cashiers": sorted(a.hex for a in org.cashiers),
                "aggregators": sorted(a.hex for a in org.aggregators),
                "depositors": sorted(a.hex for a in org.depositors),
                "totalProfitUsd": str(org.total_profit_usd),
            }
        )
    if out:
        Path(out).write_text(json.dumps(payload, indent=2) + "\n")
        click.echo(f"organizations: {out}")


@main.command()
@click.option("--verdicts", "verdict_file", type=click.Path(exists=True), required=True)
@click.option("--attacks", "attacks_file", type=click.Path(exists=True), default=None)
@_apply(source_options)
@click.option("--out-dir", type=click.Path(), required=True)
def report(verdict_file, attacks_file, fixtures, rpc, registry_dir, out_dir):
    """Emit the measurement data series and tables for a verdict stream."""
    provider, registry, prices, floors, _source = _load_environment(fixtures, rpc, registry_dir)
    if not isinstance(provider, FixtureProvider):
        _fail(EXIT_BAD_INPUT, "report currently requires --fixtures")
    verdicts = _read_verdict_file(verdict_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tx_block: dict[bytes, tuple[int, int]] = {}
    grant_tx = {}
    approve_calls = permit_calls = 0
    numbers = provider.block_numbers
    for number in numbers:
        block = provider.get_block(number)
        for tx in block.transactions:
            tx_block[tx.hash] = (number, block.timestamp)
            if not tx.success:
                continue
            sel = selector_of(tx.input)
            if sel in (SEL_APPROVE, SEL_INCREASE_ALLOWANCE):
                approve_calls += 1
            elif sel == SEL_PERMIT or (
                tx.to is not None and tx.to in registry.permit2_contracts
                and sel in registry.permit2_selectors
            ):
                permit_calls += 1
            grant_tx[tx.hash] = tx

    # per-day loss series
    from datetime import datetime, timezone

    daily: dict[str, tuple[int, Decimal]] = {}
    for v in verdicts:
        entry = tx_block.get(v.tx_hash)
        if entry is None:
            continue
        day = datetime.fromtimestamp(entry[1], tz=timezone.utc).date().isoformat()
        count, loss = daily.get(day, (0, Decimal(0)))
        daily[day] = (count + 1, loss + (v.loss_usd or Decimal(0)))
    with (out / "daily_loss.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "txCount", "lossUsd"])
        for day in sorted(daily):
            count, loss = daily[day]
            writer.writerow([day, count, str(loss)])

    # category table
    with (out / "categories.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "number", "lossUsd", "averageUsd"])
        for name, count, loss in _category_summary(verdicts):
            avg = (loss / count).quantize(Decimal("0.01")) if count else Decimal("0.00")
            writer.writerow([name, count, str(loss), str(avg)])

    # approve/permit phishing share
    ice = [v for v in verdicts if v.category is Category.ICE_PHISHING]
    approve_phish = sum(1 for v in ice if v.sub_category is SubCategory.APPROVE)
    permit_phish = sum(1 for v in ice if v.sub_category is SubCategory.PERMIT)
    with (out / "approve_permit.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["call", "total", "phishing", "share"])
        for name, total_calls, phishing in (
            ("approve", approve_calls, approve_phish),
            ("permit", permit_calls, permit_phish),
        ):
            share = (
                (Decimal(phishing) / total_calls * 100).quantize(Decimal("0.01"))
                if total_calls
                else Decimal("0.00")
            )
            writer.writerow([name, total_calls, phishing, f"{share}%"])

    # remediation breakdown over ice-phishing victims
    store, ctx = build_history(provider, registry, numbers[0], numbers[-1])
    remediation = {"Revoke": 0, "AssetTransfer": 0, "None": 0}
    for v in ice:
        if len(v.evidence[0].supporting_tx_hashes) < 2:
            continue
        grant_hash = v.evidence[0].supporting_tx_hashes[1]
        tx = grant_tx.get(grant_hash)
        theft = tx_block.get(v.tx_hash)
        if tx is None or theft is None:
            continue
        grant = next(
            (
                g
                for g in store.grants_of_owner(v.victim)
                if g.tx_hash == grant_hash and not g.is_revocation
            ),
            None,
        )
        if grant is None:
            continue
        action = classify_remediation(
            v.victim, grant, store, prices, floors, registry,
            horizon=numbers[-1], after_block=theft[0],
        )
        remediation[action.value] += 1
    with (out / "remediation.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measure", "number", "proportion"])
        total_r = sum(remediation.values())
        for measure in ("Revoke", "AssetTransfer", "None"):
            share = (
                (Decimal(remediation[measure]) / total_r * 100).quantize(Decimal("0.1"))
                if total_r
                else Decimal("0.0")
            )
            writer.writerow([measure, remediation[measure], f"{share}%"])

    # stolen NFT market table
    stolen = []
    market_of_tx: dict[bytes, str | None] = {}
    events_with_market = []
    for number in numbers:
        block = provider.get_block(number)
        for tx in block.transactions:
            entry = registry.nft_markets.get(tx.to) if tx.to is not None else None
            market_of_tx[tx.hash] = entry.market if entry else None
            for event in extract_transfers(tx):
                events_with_market.append((event, market_of_tx[tx.hash]))
    nft_subcats = {SubCategory.SET_APPROVE_FOR_ALL, SubCategory.BULK_TRANSFER, SubCategory.FREE_BUY_ORDER}
    for v in verdicts:
        if v.sub_category not in nft_subcats:
            continue
        entry = tx_block.get(v.tx_hash)
        if entry is None:
            continue
        block = provider.get_block(entry[0])
        for tx in block.transactions:
            if tx.hash != v.tx_hash:
                continue
            for event in extract_transfers(tx):
                if event.kind.value == "erc721" and event.from_ == v.victim:
                    stolen.append((event.token, event.amount, event.to))
    sales = flow_mod.track_nft_sales(stolen, events_with_market, registry)
    with (out / "nft_markets.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        markets = sorted({m for m, _r in sales.sales})
        writer.writerow(["seller"] + markets + ["held"])
        for role in (flow_mod.ROLE_CASHIER, flow_mod.ROLE_AGGREGATOR):
            row = [role] + [sales.sales.get((m, role), 0) for m in markets]
            row.append(sales.held if role == flow_mod.ROLE_CASHIER else "")
            writer.writerow(row)

    # poisoning gas series
    if attacks_file:
        from .rules import AttackRecord

        records = []
        with open(attacks_file) as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                records.append(
                    AttackRecord(
                        tx_hash=parse_hash32(obj["txHash"]),
                        attacker=normalize_address(obj["attacker"]),
                        kind=SubCategory(obj["kind"]),
                        poisoned_victims=tuple(
                            normalize_address(a) for a in obj["poisonedVictims"]
                        ),
                        gas_used=int(obj["gasUsed"]),
                        effective_gas_price_wei=int(obj["effectiveGasPriceWei"]),
                        block_number=int(obj["blockNumber"]),
                        timestamp=int(obj["timestamp"]),
                    )
                )
        total_eth, series = flow_mod.poisoning_gas_total(records)
        with (out / "gas_daily.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "gasEth"])
            for day, eth in series:
                writer.writerow([day, str(eth)])
        click.echo(f"poisoning gas total: {total_eth} ETH over {len(records)} attack txs")

    click.echo(f"report written to {out}")


@main.command("gen-corpus")
@click.option("--out", type=click.Path(), required=True)
@click.option("--per-subcat", type=int, default=200)
@click.option("--benign", type=int, default=2000)
@click.option("--seed", type=int, default=7)
@click.option("--flagship", is_flag=True, help="Write the two real-incident fixtures instead.")
@click.option("--bench", is_flag=True, help="Write a dense benchmarking corpus instead.")
@click.option("--blocks", type=int, default=100, help="Bench profile: number of blocks.")
@click.option("--txs-per-block", type=int, default=150, help="Bench profile: txs per block.")
def gen_corpus(out, per_subcat, benign, seed, flagship, bench, blocks, txs_per_block):
    """Generate a labeled synthetic corpus (fixtures + registry + labels)."""
    if flagship and bench:
        _fail(EXIT_BAD_INPUT, "--flagship and --bench are mutually exclusive")
    if flagship:
        corpus_mod.write_flagship_fixtures(out)
        click.echo(f"flagship fixtures written to {out}")
        return
    if bench:
        summary = corpus_mod.generate_bench_corpus(out, blocks=blocks, txs_per_block=txs_per_block, seed=seed)
        click.echo(f"bench corpus: {summary.blocks} blocks, {summary.benign_txs} txs at {out}")
        return
    summary = corpus_mod.generate_corpus(out, per_subcategory=per_subcat, benign=benign, seed=seed)
    click.echo(
        f"corpus: {summary.positive_txs} scam txs, {summary.attack_txs} attack txs, "
        f"{summary.benign_txs} benign scenarios over {summary.blocks} blocks at {out}"
    )


@main.command()
@_apply(source_options)
@click.option("--threads", type=int, default=1)
@_apply(rule_options)
def bench(fixtures, rpc, registry_dir, threads, config, drain_ratio, dust_max_usd,
          free_order_max_price_wei, prefix_nibbles, suffix_nibbles):
    """Measure per-block detection latency over pre-loaded fixtures."""
    provider, registry, prices, floors, source = _load_environment(fixtures, rpc, registry_dir)
    if not isinstance(provider, FixtureProvider):
        _fail(EXIT_BAD_INPUT, "bench requires --fixtures")
    cfg = _rule_config(
        config,
        drain_ratio=drain_ratio,
        dust_max_usd=dust_max_usd,
        free_order_max_price_wei=free_order_max_price_wei,
        prefix_nibbles=prefix_nibbles,
        suffix_nibbles=suffix_nibbles,
    )
    numbers = provider.block_numbers
    if not numbers:
        click.echo("blocks: 0")
        return
    t0 = time.perf_counter()
    result = run_detection(
        provider, registry, prices, floors, cfg, numbers[0], numbers[-1],
        threads=threads, input_source=source,
    )
    wall = (time.perf_counter() - t0) * 1000
    times = sorted(result.block_times_ms)
    count = len(times)
    avg = sum(times) / count
    median = times[count // 2] if count % 2 else (times[count // 2 - 1] + times[count // 2]) / 2
    click.echo(f"blocks: {count}  txs: {result.manifest.tx_count}")
    click.echo(f"avg T/B: {avg:.1f} ms   median T/B: {median:.1f} ms   max T/B: {times[-1]:.1f} ms")
    click.echo(f"total wall: {wall:.0f} ms")
    budget_ms = 12_000
    if avg >= budget_ms:
        click.echo(f"FAIL: average {avg:.1f} ms exceeds the {budget_ms} ms block budget", err=True)
        sys.exit(1)
    click.echo(f"PASS: average under the {budget_ms} ms block budget")


if __name__ == "__main__":
    main()

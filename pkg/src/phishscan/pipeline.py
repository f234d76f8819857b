"""Block-ordered detection pipeline.

Ingest feeds transactions through per-tx preparation (transfer extraction
plus calldata decoding) and the detectors, emits verdicts in strict
(block, txIndex, category) order, then appends the block to history so the
next block sees a snapshot covering everything before it. Per-tx work may
run on a thread pool; output order is normalized regardless of thread
count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .history import HistoryStore
from .ingest import BlockNotFoundError, ChainSource, Diagnostics
from .model import Category, Verdict, hash_hex, verdict_to_json
from .refdata import FloorOracle, LabelRegistry, PriceOracle
from .rules import AttackRecord, DetectionContext, RuleConfig, detect_poisoning_attack, detect_prepared, prepare_tx

logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    """What a detection run saw and produced; written next to the verdicts."""

    config_hash: str
    input_source: str  # "fixtures" | "rpc"
    block_range: tuple[int, int]
    verdict_counts: dict[str, int]
    elapsed_ms: dict[str, float]
    tx_count: int = 0
    malformed_logs: int = 0
    decode_errors: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "configHash": self.config_hash,
                "inputSource": self.input_source,
                "blockRange": {"from": self.block_range[0], "to": self.block_range[1]},
                "verdictCount": self.verdict_counts,
                "elapsedMs": {k: round(v, 3) for k, v in self.elapsed_ms.items()},
                "txCount": self.tx_count,
                "malformedLogs": self.malformed_logs,
                "decodeErrors": self.decode_errors,
            },
            indent=2,
        )


def config_hash(cfg: RuleConfig) -> str:
    canonical = json.dumps(
        {
            "drainRatio": str(cfg.drain_ratio),
            "dustMaxUsd": str(cfg.dust_max_usd),
            "freeOrderMaxPriceWei": cfg.free_order_max_price_wei,
            "prefixNibbles": cfg.similarity.prefix_nibbles,
            "suffixNibbles": cfg.similarity.suffix_nibbles,
        },
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode()).hexdigest()


def attack_to_json(record: AttackRecord) -> str:
    return json.dumps(
        {
            "txHash": hash_hex(record.tx_hash),
            "attacker": record.attacker.hex,
            "kind": record.kind.value,
            "poisonedVictims": [v.hex for v in record.poisoned_victims],
            "gasUsed": record.gas_used,
            "effectiveGasPriceWei": str(record.effective_gas_price_wei),
            "blockNumber": record.block_number,
            "timestamp": record.timestamp,
        },
        separators=(",", ":"),
    )


@dataclass
class RunResult:
    manifest: RunManifest
    verdicts: list[Verdict] = field(default_factory=list)
    attacks: list[AttackRecord] = field(default_factory=list)
    block_times_ms: list[float] = field(default_factory=list)


def run_detection(
    provider: ChainSource,
    registry: LabelRegistry,
    prices: PriceOracle,
    floors: FloorOracle,
    cfg: RuleConfig,
    from_block: int,
    to_block: int,
    *,
    threads: int = 1,
    input_source: str = "fixtures",
    history_dir: str | Path | None = None,
    verdict_sink=None,
    attack_sink=None,
    collect: bool = True,
) -> RunResult:
    """Detect over [from_block, to_block]; blocks absent from the source are
    treated as empty. Sinks receive serialized lines as they are emitted."""
    store = HistoryStore(history_dir)
    diagnostics = Diagnostics()
    ctx = DetectionContext(
        registry=registry,
        store=store,
        provider=provider,
        prices=prices,
        floors=floors,
        diagnostics=diagnostics,
    )
    elapsed = {"ingest": 0.0, "detect": 0.0, "append": 0.0, "emit": 0.0}
    counts = {c.value: 0 for c in Category}
    result = RunResult(
        manifest=RunManifest(
            config_hash=config_hash(cfg),
            input_source=input_source,
            block_range=(from_block, to_block),
            verdict_counts=counts,
            elapsed_ms=elapsed,
        )
    )

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for number in range(from_block, to_block + 1):
            t_block = time.perf_counter()
            try:
                block = provider.get_block(number)
            except BlockNotFoundError:
                continue
            elapsed["ingest"] += (time.perf_counter() - t_block) * 1000

            t_detect = time.perf_counter()
            txs = block.transactions
            if pool is not None:
                prepared = list(pool.map(lambda tx: prepare_tx(tx, ctx), txs))
                per_tx = list(
                    pool.map(
                        lambda pair: (
                            detect_prepared(pair[0], pair[1], ctx, cfg),
                            detect_poisoning_attack(
                                pair[0], pair[1].transfers, ctx, cfg, block.timestamp
                            ),
                        ),
                        zip(txs, prepared),
                    )
                )
            else:
                prepared = [prepare_tx(tx, ctx) for tx in txs]
                per_tx = [
                    (
                        detect_prepared(tx, prep, ctx, cfg),
                        detect_poisoning_attack(tx, prep.transfers, ctx, cfg, block.timestamp),
                    )
                    for tx, prep in zip(txs, prepared)
                ]
            elapsed["detect"] += (time.perf_counter() - t_detect) * 1000

            t_emit = time.perf_counter()
            for verdicts, attacks in per_tx:
                for verdict in verdicts:
                    counts[verdict.category.value] += 1
                    if verdict_sink is not None:
                        verdict_sink.write(verdict_to_json(verdict) + "\n")
                    if collect:
                        result.verdicts.append(verdict)
                for attack in attacks:
                    if attack_sink is not None:
                        attack_sink.write(attack_to_json(attack) + "\n")
                    if collect:
                        result.attacks.append(attack)
            elapsed["emit"] += (time.perf_counter() - t_emit) * 1000

            t_append = time.perf_counter()
            store.append_block(
                block,
                [p.transfers for p in prepared],
                [p.token_call if tx.success else None for tx, p in zip(txs, prepared)],
            )
            elapsed["append"] += (time.perf_counter() - t_append) * 1000
            result.manifest.tx_count += len(txs)
            result.block_times_ms.append((time.perf_counter() - t_block) * 1000)
    finally:
        if pool is not None:
            pool.shutdown()
        store.close()

    elapsed["total"] = sum(elapsed.values())
    result.manifest.malformed_logs = diagnostics.malformed_logs
    result.manifest.decode_errors = diagnostics.decode_errors
    return result


def build_history(
    provider: ChainSource,
    registry: LabelRegistry,
    from_block: int,
    to_block: int,
) -> tuple[HistoryStore, DetectionContext]:
    """Replay blocks into a history store without running the detectors."""
    store = HistoryStore()
    ctx = DetectionContext(
        registry=registry,
        store=store,
        provider=provider,
        prices=PriceOracle([]),  # valuation is not needed for replay
        floors=FloorOracle([]),
        diagnostics=Diagnostics(),
    )
    for number in range(from_block, to_block + 1):
        try:
            block = provider.get_block(number)
        except BlockNotFoundError:
            continue
        prepared = [prepare_tx(tx, ctx) for tx in block.transactions]
        store.append_block(
            block,
            [p.transfers for p in prepared],
            [
                p.token_call if tx.success else None
                for tx, p in zip(block.transactions, prepared)
            ],
        )
    return store, ctx

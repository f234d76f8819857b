"""Synthetic corpus generation with by-construction ground truth.

Builds fixture directories (blocks.jsonl, balances.csv, proxies.csv, a full
registry) plus a labels.jsonl file recording every planted scam and attack
transaction. Generation is fully deterministic for a given seed: addresses,
hashes and amounts derive from namespaced SHA-256, so the same seed always
produces a byte-identical directory.

Planted scenarios cover all eleven sub-categories; the benign pool includes
the near-miss suite (self-approvals, verified-source payable calls,
bulk-transfers to self, fairly priced orders, transfers to never-poisoned
addresses, authorized relayers, partial allowance spends).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from . import abi
from .decoder import (
    SEL_APPROVE,
    SEL_INCREASE_ALLOWANCE,
    SEL_PERMIT,
    SEL_SET_APPROVAL_FOR_ALL,
    SEL_TRANSFER,
    SEL_TRANSFER_FROM,
    PERMIT2_SINGLE_TYPES,
    PERMIT_TYPES,
)
from .ingest import TRANSFER_TOPIC
from .model import MAX_UINT256, Address

START_BLOCK = 100
BASE_TIMESTAMP = 1_672_531_200  # 2023-01-01T00:00:00Z
BLOCK_SECONDS = 12
SCENARIOS_PER_CHUNK = 8
BLOCKS_PER_CHUNK = 4

# canonical ERC-20 contracts (mainnet addresses keep fixtures realistic)
CANONICAL_TOKENS: list[tuple[str, str, int]] = [
    ("USDT", "0xdac17f958d2ee523a2206206994597c13d831ec7", 6),
    ("USDC", "0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48", 6),
    ("DAI", "0x6b175474e89094c44da98b954eedeac495271d0f", 18),
    ("WETH", "0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2", 18),
    ("WBTC", "0x2260fac5e5542a773aa44fbcfedf7c193bc2c599", 8),
    ("stETH", "0xae7ab96520de3a18e5e111b5eaab095312d7fe84", 18),
    ("BUSD", "0x4fabb145d64652a948d72533023f6e7a623c7c53", 18),
]

PRICES_USD: dict[str, Decimal] = {
    "ETH": Decimal("2000"),
    "USDT": Decimal("1.00"),
    "USDC": Decimal("1.00"),
    "DAI": Decimal("1.00"),
    "WETH": Decimal("2000"),
    "WBTC": Decimal("30000"),
    "stETH": Decimal("2000"),
    "BUSD": Decimal("1.00"),
}

SEAPORT_ADDRESS = "0x00000000006c3852cbef3e08e8df289169ede581"
BLUR_ADDRESS = "0x000000000000ad05ccc4f10045630fb830b95127"
PERMIT2_ADDRESS = "0x000000000022d473030f116ddee9f6b43ac78ba3"
PERMIT2_SINGLE_SELECTOR = "0x2b67b570"
BULK_TRANSFER_SELECTOR = bytes.fromhex("8628f225")
UPGRADE_TO_SELECTOR = bytes.fromhex("3659cfe6")
SEAPORT_FULFILL_SELECTOR = bytes.fromhex("e7acab24")
BLUR_EXECUTE_SELECTOR = bytes.fromhex("9a1fc3a7")

# payable-scam selector registry: bait function names by class
AIRDROP_SELECTOR_ROWS: list[tuple[str, str]] = [
    ("0x4e71d92d", "claim"),
    ("0x3158952e", "Claim"),
    ("0xaad3ec96", "claim"),
    ("0x0c7ef932", "Claim"),
    ("0xb88a802f", "claimReward"),
    ("0x79372f9a", "claimReward"),
    ("0xaf7ec6cb", "claimReward"),
    ("0x63e32091", "claimReward"),
    ("0xef5cfb8c", "claimRewards"),
    ("0x4185f8eb", "receiveETH"),
]
WALLET_SELECTOR_ROWS: list[tuple[str, str]] = [
    ("0x5fba79f5", "SecurityUpdate"),
    ("0xaf347b61", "SecurityUpdate"),
    ("0x62929a1e", "ConnectWallet"),
    ("0x9c9316c5", "NetworkMerge"),
    ("0x1b9265b8", "pay"),
]

NFT_COLLECTION_FLOORS: list[Decimal] = [
    Decimal("500.00"),
    Decimal("1200.00"),
    Decimal("2500.00"),
    Decimal("4000.00"),
    Decimal("8000.00"),
    Decimal("12000.00"),
    Decimal("18000.00"),
    Decimal("25000.00"),
]

SEAPORT_ORDER_INPUT_TYPES = [
    "((address,address,(uint8,address,uint256,uint256,uint256)[],(uint8,address,uint256,uint256,uint256,address)[],uint8,uint256,uint256,bytes32,uint256,bytes32,uint256),uint120,uint120,bytes,bytes)",
    "(uint256,uint8,uint256,uint256,bytes32[])[]",
    "bytes32",
    "address",
]
BLUR_INPUT_TYPE = (
    "((address,uint8,address,address,uint256,uint256,address,uint256,uint256,uint256,"
    "(uint16,address)[],uint256,bytes),uint8,bytes32,bytes32,bytes,uint8,uint256)"
)

SUBCATEGORY_ORDER = [
    "Approve",
    "Permit",
    "SetApproveForAll",
    "BulkTransfer",
    "ProxyUpgrade",
    "FreeBuyOrder",
    "ZeroValue",
    "FakeToken",
    "DustValue",
    "AirdropFunction",
    "WalletFunction",
]
CATEGORY_OF_SUBCATEGORY = {
    "Approve": "IcePhishing",
    "Permit": "IcePhishing",
    "SetApproveForAll": "IcePhishing",
    "BulkTransfer": "NftOrder",
    "ProxyUpgrade": "NftOrder",
    "FreeBuyOrder": "NftOrder",
    "ZeroValue": "AddressPoisoning",
    "FakeToken": "AddressPoisoning",
    "DustValue": "AddressPoisoning",
    "AirdropFunction": "PayableFunction",
    "WalletFunction": "PayableFunction",
}

_BENIGN_VARIANTS = 13


@dataclass
class CorpusSummary:
    out_dir: Path
    positive_txs: int
    attack_txs: int
    benign_txs: int
    blocks: int


class _Derive:
    """Namespaced deterministic byte derivation."""

    def __init__(self, seed: int):
        self.seed = seed

    def _digest(self, namespace: str) -> bytes:
        return hashlib.sha256(f"{self.seed}|{namespace}".encode()).digest()

    def address(self, namespace: str) -> Address:
        return Address(self._digest("addr:" + namespace)[:20])

    def tx_hash(self, namespace: str) -> bytes:
        return self._digest("tx:" + namespace)

    def word(self, namespace: str) -> bytes:
        return self._digest("word:" + namespace)

    def uniform(self, namespace: str, lo: int, hi: int) -> int:
        return lo + int.from_bytes(self._digest("num:" + namespace)[:8], "big") % (hi - lo + 1)

    def similar_address(self, genuine: Address, namespace: str) -> Address:
        """Look-alike sharing 3 leading and 4 trailing nibbles, differing between."""
        nib = genuine.nibbles
        middle = self._digest("sim:" + namespace).hex()[: 40 - 3 - 4]
        fake = nib[:3] + middle + nib[-4:]
        if fake == nib:  # astronomically unlikely; perturb deterministically
            fake = nib[:3] + ("0" if middle[0] != "0" else "1") + middle[1:] + nib[-4:]
        return Address(bytes.fromhex(fake))


class CorpusBuilder:
    def __init__(self, out_dir: str | Path, seed: int = 7):
        self.out = Path(out_dir)
        self.d = _Derive(seed)
        self.blocks: dict[int, list[dict]] = {}
        self.labels: list[dict] = []
        self.balances: list[tuple[str, str, int, int]] = []
        self.proxies: list[tuple[str, str]] = []
        self.market_rows: list[tuple[str, str, str]] = [
            (SEAPORT_ADDRESS, "OpenSea", "seaport11"),
            (BLUR_ADDRESS, "Blur", "blur1"),
        ]
        self.symbol_rows: list[tuple[str, str]] = []
        self.verified: list[str] = []
        self.contracts: list[str] = []
        self.authorized: list[tuple[str, str]] = []
        self.cex_rows: list[tuple[str, str]] = []
        self.router_rows: list[tuple[str, str]] = []
        self._scenario_counter = 0
        self._counts = {"positive": 0, "attack": 0, "benign": 0}

        self.helper_market = self.d.address("market:helper")
        self.market_rows.append((self.helper_market.hex, "OpenSea", "openseaHelper"))
        self.relayer = self.d.address("authorized:relayer")
        self.authorized.append((self.relayer.hex, "relay-service"))
        self.router = self.d.address("dex:router")
        self.router_rows.append((self.router.hex, "swap-router"))
        self.pool = self.d.address("dex:pool")
        self.fee_collector = self.d.address("market:fee-collector")
        self.cex_rows.append((self.d.address("cex:alpha").hex, "cex-alpha"))
        self.cex_rows.append((self.d.address("cex:beta").hex, "cex-beta"))
        self.verified_contract = self.d.address("contract:verified-claim")
        self.mev_contract = self.d.address("contract:mev-bot")
        self.collections = [self.d.address(f"nft:collection:{i}") for i in range(len(NFT_COLLECTION_FLOORS))]
        self.fake_tokens = [
            (self.d.address(f"token:fake:{i}"), CANONICAL_TOKENS[i % 2][0]) for i in range(4)
        ]
        for addr, symbol in self.fake_tokens:
            self.symbol_rows.append((addr.hex, symbol))
        for symbol, addr, _dec in CANONICAL_TOKENS:
            self.symbol_rows.append((addr, symbol))
            self.verified.append(addr)
            self.contracts.append(addr)
        for addr, _sym in self.fake_tokens:
            self.contracts.append(addr.hex)
        for addr in (
            SEAPORT_ADDRESS,
            BLUR_ADDRESS,
            PERMIT2_ADDRESS,
            self.helper_market.hex,
            self.router.hex,
            self.pool.hex,
            self.verified_contract.hex,
            self.mev_contract.hex,
        ):
            self.contracts.append(addr)
        for addr in (SEAPORT_ADDRESS, BLUR_ADDRESS, PERMIT2_ADDRESS, self.router.hex, self.verified_contract.hex):
            self.verified.append(addr)
        for col in self.collections:
            self.contracts.append(col.hex)
            self.verified.append(col.hex)

    # -- low-level assembly -------------------------------------------------

    def _next_chunk(self) -> int:
        chunk = self._scenario_counter // SCENARIOS_PER_CHUNK
        self._scenario_counter += 1
        return START_BLOCK + chunk * BLOCKS_PER_CHUNK

    def _add_tx(
        self,
        block: int,
        ns: str,
        frm: Address,
        to: Address | None,
        *,
        value_wei: int = 0,
        input_bytes: bytes = b"",
        logs: list[dict] | None = None,
        status: int = 1,
        tx_hash: bytes | None = None,
    ) -> bytes:
        tx_hash = tx_hash if tx_hash is not None else self.d.tx_hash(ns)
        self.blocks.setdefault(block, []).append(
            {
                "hash": "0x" + tx_hash.hex(),
                "from": frm.hex,
                "to": to.hex if to is not None else None,
                "valueWei": str(value_wei),
                "input": "0x" + input_bytes.hex(),
                "status": status,
                "gasUsed": self.d.uniform("gas:" + ns, 21_000, 400_000),
                "effectiveGasPriceWei": self.d.uniform("gasprice:" + ns, 10, 40) * 10**9,
                "logs": logs or [],
            }
        )
        return tx_hash

    @staticmethod
    def _erc20_log(token: Address, frm: Address, to: Address, amount: int) -> dict:
        return {
            "address": token.hex,
            "topics": [
                "0x" + TRANSFER_TOPIC.hex(),
                "0x" + frm.raw.rjust(32, b"\x00").hex(),
                "0x" + to.raw.rjust(32, b"\x00").hex(),
            ],
            "data": "0x" + amount.to_bytes(32, "big").hex(),
        }

    @staticmethod
    def _erc721_log(collection: Address, frm: Address, to: Address, token_id: int) -> dict:
        return {
            "address": collection.hex,
            "topics": [
                "0x" + TRANSFER_TOPIC.hex(),
                "0x" + frm.raw.rjust(32, b"\x00").hex(),
                "0x" + to.raw.rjust(32, b"\x00").hex(),
                "0x" + token_id.to_bytes(32, "big").hex(),
            ],
            "data": "0x",
        }

    def _token(self, i: int) -> tuple[Address, str, int]:
        symbol, addr, decimals = CANONICAL_TOKENS[i % 3]  # USDT / USDC / DAI rotation
        return Address(bytes.fromhex(addr[2:])), symbol, decimals

    def _label_verdict(
        self,
        tx_hash: bytes,
        sub_category: str,
        victim: Address,
        scammer: list[Address],
        loss_usd: Decimal | None,
    ) -> None:
        self._counts["positive"] += 1
        self.labels.append(
            {
                "txHash": "0x" + tx_hash.hex(),
                "kind": "verdict",
                "category": CATEGORY_OF_SUBCATEGORY[sub_category],
                "subCategory": sub_category,
                "victim": victim.hex,
                "scammer": [s.hex for s in scammer],
                "lossUsd": str(loss_usd) if loss_usd is not None else None,
            }
        )

    def _label_attack(self, tx_hash: bytes, kind: str, attacker: Address, victims: list[Address]) -> None:
        self._counts["attack"] += 1
        self.labels.append(
            {
                "txHash": "0x" + tx_hash.hex(),
                "kind": "attack",
                "attack": kind,
                "attacker": attacker.hex,
                "victims": [v.hex for v in victims],
            }
        )

    def _usd(self, symbol: str, raw: int, decimals: int) -> Decimal:
        return (Decimal(raw) * PRICES_USD[symbol] / Decimal(10) ** decimals).quantize(Decimal("0.01"))

    # -- ice phishing scenarios ----------------------------------------------

    def ice_approve(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"ice_a:{i}"
        victim = self.d.address(ns + ":victim")
        scammer = self.d.address(ns + ":scammer")
        receiver = scammer if i % 2 == 0 else self.d.address(ns + ":receiver")
        token, symbol, decimals = self._token(i)
        units = self.d.uniform(ns + ":units", 200, 90_000)
        raw = units * 10**decimals
        if i % 2 == 0:
            grant_input = abi.encode_call(SEL_APPROVE, ["address", "uint256"], (scammer, MAX_UINT256))
        else:
            grant_input = abi.encode_call(
                SEL_INCREASE_ALLOWANCE, ["address", "uint256"], (scammer, raw)
            )
        self._add_tx(base, ns + ":grant", victim, token, input_bytes=grant_input)
        self.balances.append((token.hex, victim.hex, base, raw))
        drain_input = abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (victim, receiver, raw)
        )
        drain = self._add_tx(
            base + 2,
            ns + ":drain",
            scammer,
            token,
            input_bytes=drain_input,
            logs=[self._erc20_log(token, victim, receiver, raw)],
        )
        scammers = [scammer] + ([receiver] if receiver != scammer else [])
        self._label_verdict(drain, "Approve", victim, scammers, self._usd(symbol, raw, decimals))
        self._remediate(ns, base, victim, scammer, token, i)

    def ice_permit(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"ice_p:{i}"
        victim = self.d.address(ns + ":victim")
        scammer = self.d.address(ns + ":scammer")
        token, symbol, decimals = self._token(i)
        units = self.d.uniform(ns + ":units", 500, 120_000)
        raw = units * 10**decimals
        if i % 2 == 0:
            permit_input = abi.encode_call(
                SEL_PERMIT,
                PERMIT_TYPES,
                (
                    victim,
                    scammer,
                    MAX_UINT256,
                    BASE_TIMESTAMP + 10**6,
                    27,
                    self.d.word(ns + ":r"),
                    self.d.word(ns + ":s"),
                ),
            )
            self._add_tx(base + 1, ns + ":permit", scammer, token, input_bytes=permit_input)
        else:
            permit2_input = abi.encode_call(
                bytes.fromhex(PERMIT2_SINGLE_SELECTOR[2:]),
                PERMIT2_SINGLE_TYPES,
                (
                    victim,
                    ((token, (1 << 160) - 1, 0, 0), scammer, BASE_TIMESTAMP + 10**6),
                    self.d.word(ns + ":sig"),
                ),
            )
            self._add_tx(
                base + 1,
                ns + ":permit2",
                scammer,
                Address(bytes.fromhex(PERMIT2_ADDRESS[2:])),
                input_bytes=permit2_input,
            )
        self.balances.append((token.hex, victim.hex, base + 1, raw))
        drain_input = abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (victim, scammer, raw)
        )
        drain = self._add_tx(
            base + 2,
            ns + ":drain",
            scammer,
            token,
            input_bytes=drain_input,
            logs=[self._erc20_log(token, victim, scammer, raw)],
        )
        self._label_verdict(drain, "Permit", victim, [scammer], self._usd(symbol, raw, decimals))

    def ice_set_approval(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"ice_s:{i}"
        victim = self.d.address(ns + ":victim")
        scammer = self.d.address(ns + ":scammer")
        collection = self.collections[i % len(self.collections)]
        token_id = self.d.uniform(ns + ":id", 1, 9_999)
        grant_input = abi.encode_call(
            SEL_SET_APPROVAL_FOR_ALL, ["address", "bool"], (scammer, True)
        )
        self._add_tx(base, ns + ":grant", victim, collection, input_bytes=grant_input)
        drain_input = abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (victim, scammer, token_id)
        )
        drain = self._add_tx(
            base + 2,
            ns + ":drain",
            scammer,
            collection,
            input_bytes=drain_input,
            logs=[self._erc721_log(collection, victim, scammer, token_id)],
        )
        floor = NFT_COLLECTION_FLOORS[i % len(NFT_COLLECTION_FLOORS)]
        self._label_verdict(drain, "SetApproveForAll", victim, [scammer], floor)

    def _remediate(self, ns: str, base: int, victim: Address, scammer: Address, token: Address, i: int) -> None:
        """Post-theft behavior for ice victims: revoke / move assets / nothing."""
        if i % 3 == 0:
            revoke_input = abi.encode_call(SEL_APPROVE, ["address", "uint256"], (scammer, 0))
            self._add_tx(base + 3, ns + ":revoke", victim, token, input_bytes=revoke_input)
        elif i % 3 == 1:
            other = Address(bytes.fromhex(CANONICAL_TOKENS[3][1][2:]))  # WETH holdings
            fresh = self.d.address(ns + ":fresh-wallet")
            remaining = self.d.uniform(ns + ":rem", 1, 20) * 10**18
            move_input = abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (fresh, remaining))
            self._add_tx(
                base + 3,
                ns + ":exit",
                victim,
                other,
                input_bytes=move_input,
                logs=[self._erc20_log(other, victim, fresh, remaining)],
            )

    # -- NFT order scenarios ---------------------------------------------------

    def nft_bulk(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"nft_b:{i}"
        victim = self.d.address(ns + ":victim")
        scammer = self.d.address(ns + ":scammer")
        count = 1 + i % 3
        items = []
        logs = []
        loss = Decimal(0)
        for j in range(count):
            collection = self.collections[(i + j) % len(self.collections)]
            token_id = self.d.uniform(f"{ns}:id:{j}", 1, 9_999)
            items.append((collection, token_id))
            logs.append(self._erc721_log(collection, victim, scammer, token_id))
            loss += NFT_COLLECTION_FLOORS[(i + j) % len(NFT_COLLECTION_FLOORS)]
        input_bytes = abi.encode_call(
            BULK_TRANSFER_SELECTOR, ["(address,uint256)[]", "address"], (items, scammer)
        )
        tx = self._add_tx(
            base + 2, ns + ":bulk", victim, self.helper_market, input_bytes=input_bytes, logs=logs
        )
        self._label_verdict(tx, "BulkTransfer", victim, [scammer], loss.quantize(Decimal("0.01")))

    def nft_proxy_upgrade(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"nft_u:{i}"
        owner = self.d.address(ns + ":owner")
        scammer = self.d.address(ns + ":scammer")
        new_impl = self.d.address(ns + ":impl")
        proxy = self.d.address(ns + ":proxy")
        self.market_rows.append((proxy.hex, "OpenSea", "openseaFactory"))
        self.proxies.append((proxy.hex, owner.hex))
        self.contracts.append(proxy.hex)
        input_bytes = abi.encode_call(UPGRADE_TO_SELECTOR, ["address"], (new_impl,))
        tx = self._add_tx(base + 2, ns + ":upgrade", scammer, proxy, input_bytes=input_bytes)
        self._label_verdict(tx, "ProxyUpgrade", owner, [scammer, new_impl], None)

    def _seaport_input(
        self,
        offerer: Address,
        nft_items: list[tuple[Address, int]],
        consideration: list[tuple[int, Address, int, int, Address]],
        recipient: Address,
        ns: str,
    ) -> bytes:
        offer = [(2, collection, token_id, 1, 1) for collection, token_id in nft_items]
        cons = [
            (item_type, token, 0, amount, amount, cons_recipient)
            for item_type, token, _ident, amount, cons_recipient in consideration
        ]
        params = (
            offerer,
            self.d.address(ns + ":zone"),
            offer,
            cons,
            0,
            BASE_TIMESTAMP,
            BASE_TIMESTAMP + 10**6,
            b"\x00" * 32,
            self.d.uniform(ns + ":salt", 1, 10**9),
            b"\x00" * 32,
            len(cons),
        )
        advanced = (params, 1, 1, self.d.word(ns + ":sig"), b"")
        return abi.encode_call(
            SEAPORT_FULFILL_SELECTOR,
            SEAPORT_ORDER_INPUT_TYPES,
            (advanced, [], b"\x00" * 32, recipient),
        )

    def _blur_input(
        self,
        seller: Address,
        buyer: Address,
        collection: Address,
        token_id: int,
        price_wei: int,
        fees: list[tuple[int, Address]],
        ns: str,
    ) -> bytes:
        def order(trader: Address, side: int) -> tuple:
            return (
                trader,
                side,
                self.d.address(ns + ":policy"),
                collection,
                token_id,
                1,
                Address(b"\x00" * 20),
                price_wei,
                BASE_TIMESTAMP,
                BASE_TIMESTAMP + 10**6,
                fees if side == 1 else [],
                self.d.uniform(ns + ":salt:" + str(side), 1, 10**9),
                b"",
            )

        def wrap(side: int, trader: Address) -> tuple:
            return (
                order(trader, side),
                27,
                self.d.word(f"{ns}:r:{side}"),
                self.d.word(f"{ns}:s:{side}"),
                b"",
                0,
                0,
            )

        return abi.encode_call(
            BLUR_EXECUTE_SELECTOR, [BLUR_INPUT_TYPE, BLUR_INPUT_TYPE], (wrap(1, seller), wrap(0, buyer))
        )

    def nft_free_order(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"nft_f:{i}"
        victim = self.d.address(ns + ":victim")
        scammer = self.d.address(ns + ":scammer")
        collection = self.collections[i % len(self.collections)]
        token_id = self.d.uniform(ns + ":id", 1, 9_999)
        floor = NFT_COLLECTION_FLOORS[i % len(NFT_COLLECTION_FLOORS)]
        variant = i % 3
        logs = [self._erc721_log(collection, victim, scammer, token_id)]
        if variant == 0:  # zero-consideration order
            input_bytes = self._seaport_input(victim, [(collection, token_id)], [], scammer, ns)
            tx = self._add_tx(
                base + 2,
                ns + ":fulfill",
                scammer,
                Address(bytes.fromhex(SEAPORT_ADDRESS[2:])),
                input_bytes=input_bytes,
                logs=logs,
            )
        elif variant == 1:  # 100% fees diverted to the buyer
            price = self.d.uniform(ns + ":price", 1, 20) * 10**18
            input_bytes = self._blur_input(
                victim, scammer, collection, token_id, price, [(10_000, scammer)], ns
            )
            tx = self._add_tx(
                base + 2,
                ns + ":execute",
                scammer,
                Address(bytes.fromhex(BLUR_ADDRESS[2:])),
                value_wei=price,
                input_bytes=input_bytes,
                logs=logs,
            )
        else:  # consideration diverted to a third address
            diverted = self.d.uniform(ns + ":price", 1, 20) * 10**18
            input_bytes = self._seaport_input(
                victim,
                [(collection, token_id)],
                [(0, Address(b"\x00" * 20), 0, diverted, scammer)],
                scammer,
                ns,
            )
            tx = self._add_tx(
                base + 2,
                ns + ":fulfill",
                scammer,
                Address(bytes.fromhex(SEAPORT_ADDRESS[2:])),
                input_bytes=input_bytes,
                logs=logs,
            )
        self._label_verdict(tx, "FreeBuyOrder", victim, [scammer], floor)

    # -- address poisoning scenarios --------------------------------------------

    def _poison_setup(self, ns: str, base: int, i: int) -> tuple:
        victim = self.d.address(ns + ":victim")
        genuine = self.d.address(ns + ":genuine")
        fake = self.d.similar_address(genuine, ns + ":fake")
        token, symbol, decimals = self._token(i)
        units = self.d.uniform(ns + ":units", 1_000, 500_000)
        raw = units * 10**decimals
        transfer_input = abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (genuine, raw))
        self._add_tx(
            base,
            ns + ":genuine",
            victim,
            token,
            input_bytes=transfer_input,
            logs=[self._erc20_log(token, victim, genuine, raw)],
        )
        return victim, genuine, fake, token, symbol, decimals

    def _poison_trigger(
        self, ns: str, block: int, victim: Address, fake: Address,
        token: Address, symbol: str, decimals: int, i: int,
    ) -> tuple[bytes, Decimal]:
        units = self.d.uniform(ns + ":lost-units", 2_000, 800_000)
        raw = units * 10**decimals
        transfer_input = abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (fake, raw))
        tx = self._add_tx(
            block,
            ns + ":mistake",
            victim,
            token,
            input_bytes=transfer_input,
            logs=[self._erc20_log(token, victim, fake, raw)],
        )
        return tx, self._usd(symbol, raw, decimals)

    def poison_zero_value(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"poi_z:{i}"
        victim, genuine, fake, token, symbol, decimals = self._poison_setup(ns, base, i)
        attacker = self.d.address(ns + ":attacker")
        logs = [self._erc20_log(token, victim, fake, 0)]
        victims = [victim]
        if i % 10 == 0:  # occasional batch: one attack tx poisons many wallets
            for j in range(self.d.uniform(ns + ":batch", 5, 30)):
                extra = self.d.address(f"{ns}:extra:{j}")
                extra_fake = self.d.address(f"{ns}:extra-fake:{j}")
                logs.append(self._erc20_log(token, extra, extra_fake, 0))
                victims.append(extra)
        attack_input = abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (victim, fake, 0)
        )
        attack = self._add_tx(
            base + 1, ns + ":attack", attacker, token, input_bytes=attack_input, logs=logs
        )
        self._label_attack(attack, "ZeroValue", attacker, victims)
        trigger, loss = self._poison_trigger(ns, base + 2, victim, fake, token, symbol, decimals, i)
        self._label_verdict(trigger, "ZeroValue", victim, [fake], loss)

    def poison_fake_token(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"poi_f:{i}"
        victim, genuine, fake, token, symbol, decimals = self._poison_setup(ns, base, i)
        attacker = self.d.address(ns + ":attacker")
        fake_token, _sym = self.fake_tokens[i % len(self.fake_tokens)]
        forged_raw = self.d.uniform(ns + ":forged", 1_000, 10_000_000) * 10**decimals
        attack_input = abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (victim, fake, forged_raw)
        )
        attack = self._add_tx(
            base + 1,
            ns + ":attack",
            attacker,
            fake_token,
            input_bytes=attack_input,
            logs=[self._erc20_log(fake_token, victim, fake, forged_raw)],
        )
        self._label_attack(attack, "FakeToken", attacker, [victim])
        trigger, loss = self._poison_trigger(ns, base + 2, victim, fake, token, symbol, decimals, i)
        self._label_verdict(trigger, "FakeToken", victim, [fake], loss)

    def poison_dust(self, i: int) -> None:
        base = self._next_chunk()
        ns = f"poi_d:{i}"
        victim, genuine, fake, token, symbol, decimals = self._poison_setup(ns, base, i)
        if i % 2 == 0:  # token dust: fractions of a cent
            dust_raw = self.d.uniform(ns + ":dust", 1, 9) * 10 ** max(decimals - 3, 0)
            dust_input = abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (victim, dust_raw))
            attack = self._add_tx(
                base + 1,
                ns + ":attack",
                fake,
                token,
                input_bytes=dust_input,
                logs=[self._erc20_log(token, fake, victim, dust_raw)],
            )
        else:  # native dust well under a cent at the fixture ETH price
            dust_wei = self.d.uniform(ns + ":dust", 1, 4) * 10**12
            attack = self._add_tx(base + 1, ns + ":attack", fake, victim, value_wei=dust_wei)
        self._label_attack(attack, "DustValue", fake, [victim])
        trigger, loss = self._poison_trigger(ns, base + 2, victim, fake, token, symbol, decimals, i)
        self._label_verdict(trigger, "DustValue", victim, [fake], loss)

    # -- payable function scenarios ----------------------------------------------

    def _payable(self, i: int, ns: str, rows: list[tuple[str, str]], sub_category: str) -> None:
        base = self._next_chunk()
        victim = self.d.address(ns + ":victim")
        scam_contract = self.d.address(ns + ":contract")
        self.contracts.append(scam_contract.hex)
        selector_hex, _name = rows[i % len(rows)]
        value = self.d.uniform(ns + ":value", 5, 200) * 10**16  # 0.05 - 2 ETH
        tx = self._add_tx(
            base + 2,
            ns + ":call",
            victim,
            scam_contract,
            value_wei=value,
            input_bytes=bytes.fromhex(selector_hex[2:]),
        )
        loss = (Decimal(value) * PRICES_USD["ETH"] / Decimal(10) ** 18).quantize(Decimal("0.01"))
        self._label_verdict(tx, sub_category, victim, [scam_contract], loss)

    def payable_airdrop(self, i: int) -> None:
        self._payable(i, f"pay_a:{i}", AIRDROP_SELECTOR_ROWS, "AirdropFunction")

    def payable_wallet(self, i: int) -> None:
        self._payable(i, f"pay_w:{i}", WALLET_SELECTOR_ROWS, "WalletFunction")

    # -- benign traffic, including the near-miss suite ----------------------------

    def benign(self, i: int) -> None:
        variant = i % _BENIGN_VARIANTS
        base = self._next_chunk()
        ns = f"ben:{variant}:{i}"
        self._counts["benign"] += 1
        user = self.d.address(ns + ":user")
        peer = self.d.address(ns + ":peer")
        token, symbol, decimals = self._token(i)
        raw = self.d.uniform(ns + ":units", 10, 5_000) * 10**decimals

        if variant == 0:  # plain native transfer between EOAs
            self._add_tx(base + 2, ns, user, peer, value_wei=self.d.uniform(ns + ":wei", 1, 50) * 10**17)
        elif variant == 1:  # self-approval then self-initiated transferFrom
            self._add_tx(
                base,
                ns + ":approve",
                user,
                token,
                input_bytes=abi.encode_call(SEL_APPROVE, ["address", "uint256"], (user, MAX_UINT256)),
            )
            self.balances.append((token.hex, user.hex, base, raw))
            self._add_tx(
                base + 2,
                ns + ":move",
                user,
                token,
                input_bytes=abi.encode_call(
                    SEL_TRANSFER_FROM, ["address", "address", "uint256"], (user, peer, raw)
                ),
                logs=[self._erc20_log(token, user, peer, raw)],
            )
        elif variant == 2:  # payable claim against a verified-source contract
            self._add_tx(
                base + 2,
                ns,
                user,
                self.verified_contract,
                value_wei=3 * 10**17,
                input_bytes=bytes.fromhex(AIRDROP_SELECTOR_ROWS[i % 10][0][2:]),
            )
        elif variant == 3:  # bulk transfer to self
            collection = self.collections[i % len(self.collections)]
            token_id = self.d.uniform(ns + ":id", 1, 9_999)
            self._add_tx(
                base + 2,
                ns,
                user,
                self.helper_market,
                input_bytes=abi.encode_call(
                    BULK_TRANSFER_SELECTOR,
                    ["(address,uint256)[]", "address"],
                    ([(collection, token_id)], user),
                ),
                logs=[self._erc721_log(collection, user, user, token_id)],
            )
        elif variant == 4:  # fairly priced Blur sale with a small platform fee
            collection = self.collections[i % len(self.collections)]
            token_id = self.d.uniform(ns + ":id", 1, 9_999)
            price = self.d.uniform(ns + ":price", 1, 10) * 10**18
            self._add_tx(
                base,
                ns + ":operator",
                user,
                collection,
                input_bytes=abi.encode_call(
                    SEL_SET_APPROVAL_FOR_ALL,
                    ["address", "bool"],
                    (Address(bytes.fromhex(BLUR_ADDRESS[2:])), True),
                ),
            )
            self._add_tx(
                base + 2,
                ns + ":sale",
                peer,
                Address(bytes.fromhex(BLUR_ADDRESS[2:])),
                value_wei=price,
                input_bytes=self._blur_input(
                    user, peer, collection, token_id, price, [(250, self.fee_collector)], ns
                ),
                logs=[self._erc721_log(collection, user, peer, token_id)],
            )
        elif variant == 5:  # valuable transfer to a never-poisoned address
            self._add_tx(
                base + 2,
                ns,
                user,
                token,
                input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (peer, raw)),
                logs=[self._erc20_log(token, user, peer, raw)],
            )
        elif variant == 6:  # router swap: pool pays out far less than its reserves
            out_token = Address(bytes.fromhex(CANONICAL_TOKENS[3][1][2:]))
            out_raw = self.d.uniform(ns + ":out", 1, 40) * 10**17
            self.balances.append((out_token.hex, self.pool.hex, base, 10**27))
            self._add_tx(
                base + 2,
                ns,
                user,
                self.router,
                input_bytes=bytes.fromhex("38ed1739") + self.d.word(ns + ":args"),
                logs=[
                    self._erc20_log(token, user, self.pool, raw),
                    self._erc20_log(out_token, self.pool, user, out_raw),
                ],
            )
        elif variant == 7:  # granted spender takes only part of the balance
            spender = self.d.address(ns + ":spender")
            self._add_tx(
                base,
                ns + ":approve",
                user,
                token,
                input_bytes=abi.encode_call(SEL_APPROVE, ["address", "uint256"], (spender, raw)),
            )
            self.balances.append((token.hex, user.hex, base, raw))
            part = raw * 2 // 5
            self._add_tx(
                base + 2,
                ns + ":spend",
                spender,
                token,
                input_bytes=abi.encode_call(
                    SEL_TRANSFER_FROM, ["address", "address", "uint256"], (user, spender, part)
                ),
                logs=[self._erc20_log(token, user, spender, part)],
            )
        elif variant == 8:  # authorized relayer moving the full balance
            self._add_tx(
                base,
                ns + ":approve",
                user,
                token,
                input_bytes=abi.encode_call(SEL_APPROVE, ["address", "uint256"], (self.relayer, MAX_UINT256)),
            )
            self.balances.append((token.hex, user.hex, base, raw))
            self._add_tx(
                base + 2,
                ns + ":relay",
                self.relayer,
                token,
                input_bytes=abi.encode_call(
                    SEL_TRANSFER_FROM, ["address", "address", "uint256"], (user, peer, raw)
                ),
                logs=[self._erc20_log(token, user, peer, raw)],
            )
        elif variant == 9:  # fully paid Seaport order: proceeds reach the offerer
            collection = self.collections[i % len(self.collections)]
            token_id = self.d.uniform(ns + ":id", 1, 9_999)
            price = self.d.uniform(ns + ":price", 1, 10) * 10**18
            fee = price // 40
            self._add_tx(
                base + 2,
                ns,
                peer,
                Address(bytes.fromhex(SEAPORT_ADDRESS[2:])),
                value_wei=price + fee,
                input_bytes=self._seaport_input(
                    user,
                    [(collection, token_id)],
                    [
                        (0, Address(b"\x00" * 20), 0, price, user),
                        (0, Address(b"\x00" * 20), 0, fee, self.fee_collector),
                    ],
                    peer,
                    ns,
                ),
                logs=[self._erc721_log(collection, user, peer, token_id)],
            )
        elif variant == 10:  # repeat payment to a known counterparty
            self._add_tx(
                base,
                ns + ":first",
                user,
                token,
                input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (peer, raw)),
                logs=[self._erc20_log(token, user, peer, raw)],
            )
            self._add_tx(
                base + 2,
                ns + ":second",
                user,
                token,
                input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (peer, raw // 2)),
                logs=[self._erc20_log(token, user, peer, raw // 2)],
            )
        elif variant == 11:  # owner upgrading their own proxy
            proxy = self.d.address(ns + ":proxy")
            self.market_rows.append((proxy.hex, "OpenSea", "openseaFactory"))
            self.proxies.append((proxy.hex, user.hex))
            self.contracts.append(proxy.hex)
            self._add_tx(
                base + 2,
                ns,
                user,
                proxy,
                input_bytes=abi.encode_call(
                    UPGRADE_TO_SELECTOR, ["address"], (self.d.address(ns + ":impl"),)
                ),
            )
        else:  # closed-source bot hit with value but an unlisted selector
            self._add_tx(
                base + 2,
                ns,
                user,
                self.mev_contract,
                value_wei=10**17,
                input_bytes=bytes.fromhex("deadbeef") + self.d.word(ns + ":args")[:8],
            )

    def bench_tx(self, i: int, block: int) -> None:
        """One self-contained benign tx pinned to `block` (for benchmarking)."""
        ns = f"bench:{i}"
        user = self.d.address(ns + ":user")
        peer = self.d.address(ns + ":peer")
        token, _symbol, decimals = self._token(i)
        raw = self.d.uniform(ns + ":units", 10, 5_000) * 10**decimals
        variant = i % 7
        if variant == 0:
            self._add_tx(block, ns, user, peer, value_wei=self.d.uniform(ns + ":wei", 1, 90) * 10**16)
        elif variant == 1:
            self._add_tx(
                block,
                ns,
                user,
                token,
                input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (peer, raw)),
                logs=[self._erc20_log(token, user, peer, raw)],
            )
        elif variant == 2:
            self._add_tx(
                block,
                ns,
                user,
                self.verified_contract,
                value_wei=2 * 10**17,
                input_bytes=bytes.fromhex(AIRDROP_SELECTOR_ROWS[i % 10][0][2:]),
            )
        elif variant == 3:
            collection = self.collections[i % len(self.collections)]
            token_id = self.d.uniform(ns + ":id", 1, 9_999)
            self._add_tx(
                block,
                ns,
                user,
                self.helper_market,
                input_bytes=abi.encode_call(
                    BULK_TRANSFER_SELECTOR,
                    ["(address,uint256)[]", "address"],
                    ([(collection, token_id)], user),
                ),
                logs=[self._erc721_log(collection, user, user, token_id)],
            )
        elif variant == 4:
            collection = self.collections[i % len(self.collections)]
            token_id = self.d.uniform(ns + ":id", 1, 9_999)
            price = self.d.uniform(ns + ":price", 1, 10) * 10**18
            self._add_tx(
                block,
                ns,
                peer,
                Address(bytes.fromhex(SEAPORT_ADDRESS[2:])),
                value_wei=price,
                input_bytes=self._seaport_input(
                    user,
                    [(collection, token_id)],
                    [(0, Address(b"\x00" * 20), 0, price, user)],
                    peer,
                    ns,
                ),
                logs=[self._erc721_log(collection, user, peer, token_id)],
            )
        elif variant == 5:
            out_token = Address(bytes.fromhex(CANONICAL_TOKENS[3][1][2:]))
            out_raw = self.d.uniform(ns + ":out", 1, 40) * 10**17
            self._add_tx(
                block,
                ns,
                user,
                self.router,
                input_bytes=bytes.fromhex("38ed1739") + self.d.word(ns + ":args"),
                logs=[
                    self._erc20_log(token, user, self.pool, raw),
                    self._erc20_log(out_token, self.pool, user, out_raw),
                ],
            )
        else:
            self._add_tx(
                block,
                ns,
                user,
                token,
                input_bytes=abi.encode_call(SEL_APPROVE, ["address", "uint256"], (peer, raw)),
            )

    # -- output -------------------------------------------------------------------

    def write(self) -> CorpusSummary:
        self.out.mkdir(parents=True, exist_ok=True)
        registry_dir = self.out / "registry"
        registry_dir.mkdir(exist_ok=True)

        max_block = max(self.blocks) if self.blocks else START_BLOCK
        with (self.out / "blocks.jsonl").open("w") as fh:
            for number in range(START_BLOCK, max_block + 1):
                block = {
                    "number": number,
                    "timestamp": BASE_TIMESTAMP + (number - START_BLOCK) * BLOCK_SECONDS,
                    "txs": self.blocks.get(number, []),
                }
                fh.write(json.dumps(block, separators=(",", ":")) + "\n")

        with (self.out / "balances.csv").open("w") as fh:
            fh.write("token,holder,block,amount\n")
            for token, holder, block, amount in self.balances:
                fh.write(f"{token},{holder},{block},{amount}\n")
        with (self.out / "proxies.csv").open("w") as fh:
            fh.write("proxy,owner\n")
            for proxy, owner in self.proxies:
                fh.write(f"{proxy},{owner}\n")
        with (self.out / "labels.jsonl").open("w") as fh:
            for label in self.labels:
                fh.write(json.dumps(label, separators=(",", ":")) + "\n")

        self._write_registry(registry_dir)
        return CorpusSummary(
            out_dir=self.out,
            positive_txs=self._counts["positive"],
            attack_txs=self._counts["attack"],
            benign_txs=self._counts["benign"],
            blocks=max_block - START_BLOCK + 1,
        )

    def _write_registry(self, registry_dir: Path) -> None:
        def write_csv(name: str, header: str, rows) -> None:
            with (registry_dir / name).open("w") as fh:
                fh.write(header + "\n")
                for row in rows:
                    fh.write(",".join(str(c) for c in row) + "\n")

        write_csv("authorized.csv", "address,label", self.authorized)
        write_csv("cex.csv", "address,exchange", self.cex_rows)
        write_csv("markets.csv", "address,market,adapter", self.market_rows)
        write_csv(
            "tokens.csv", "symbol,address,decimals",
            [(s, a, d) for s, a, d in CANONICAL_TOKENS],
        )
        write_csv(
            "selectors.csv", "selector,class,name",
            [(sel, "Airdrop", name) for sel, name in AIRDROP_SELECTOR_ROWS]
            + [(sel, "Wallet", name) for sel, name in WALLET_SELECTOR_ROWS],
        )
        write_csv("verified.csv", "address", [(a,) for a in dict.fromkeys(self.verified)])
        write_csv("symbols.csv", "address,symbol", self.symbol_rows)
        write_csv("contracts.csv", "address", [(a,) for a in dict.fromkeys(self.contracts)])
        write_csv("permit2.csv", "address,selector,name", [(PERMIT2_ADDRESS, PERMIT2_SINGLE_SELECTOR, "permit")])
        write_csv("routers.csv", "address,name", self.router_rows)
        write_csv(
            "prices.csv", "token,block,usd",
            [(symbol, 0, str(price)) for symbol, price in sorted(PRICES_USD.items())],
        )
        write_csv(
            "floors.csv", "collection,block,usd",
            [
                (self.collections[i].hex, 0, str(floor))
                for i, floor in enumerate(NFT_COLLECTION_FLOORS)
            ],
        )


def generate_corpus(
    out_dir: str | Path, per_subcategory: int = 200, benign: int = 2000, seed: int = 7
) -> CorpusSummary:
    """Generate the labeled corpus: N scenarios per sub-category plus benign
    traffic, interleaved across blocks."""
    builder = CorpusBuilder(out_dir, seed=seed)
    builders = [
        builder.ice_approve,
        builder.ice_permit,
        builder.ice_set_approval,
        builder.nft_bulk,
        builder.nft_proxy_upgrade,
        builder.nft_free_order,
        builder.poison_zero_value,
        builder.poison_fake_token,
        builder.poison_dust,
        builder.payable_airdrop,
        builder.payable_wallet,
    ]
    positives: list[tuple[int, int]] = [
        (b, i) for i in range(per_subcategory) for b in range(len(builders))
    ]
    # merge benign traffic evenly between the planted scenarios
    total = len(positives) + benign
    pi = bi = 0
    for k in range(total):
        want_benign = benign and bi * total <= k * benign and bi < benign
        if want_benign or pi >= len(positives):
            builder.benign(bi)
            bi += 1
        else:
            b, i = positives[pi]
            builders[b](i)
            pi += 1
    return builder.write()


def generate_bench_corpus(
    out_dir: str | Path, blocks: int = 100, txs_per_block: int = 150, seed: int = 1
) -> CorpusSummary:
    """Dense single-stage traffic for latency benchmarking."""
    builder = CorpusBuilder(out_dir, seed=seed)
    counter = 0
    for b in range(blocks):
        number = START_BLOCK + b
        for _t in range(txs_per_block):
            builder.bench_tx(counter, number)
            counter += 1
    builder._counts["benign"] = counter
    return builder.write()


# ---------------------------------------------------------------------------
# flagship incident fixtures


FLAGSHIP_GENUINE_DEPOSIT = "0xa7b4bac8f0f9692e56750aefb5f6cb5516e90570"
FLAGSHIP_FAKE_DEPOSIT = "0xa7bf48749d2e4aa29e3209879956b9baa9e90570"
FLAGSHIP_MISTAKE_TX = "0x08255ca0e42a872559437141fa46980e66d907f7668922467d67515b1ebb4b7f"
FLAGSHIP_FLOOR_USD = Decimal("10000.00")  # 5 ETH at the fixture price


def write_flagship_fixtures(out_dir: str | Path) -> Path:
    """Two real-incident shapes: a 5 ETH / 100%-fee Blur order and the
    10M-genuine / forged-fake / 20M-mistake deposit poisoning sequence."""
    builder = CorpusBuilder(out_dir, seed=99)
    d = builder.d

    # scene 1: free buy order, 5 ETH nominal price fully diverted to the buyer
    seller = d.address("flagship:seller")
    buyer = d.address("flagship:buyer")
    collection = builder.collections[0]
    token_id = 1404
    price = 5 * 10**18
    builder._add_tx(
        START_BLOCK,
        "flagship:execute",
        buyer,
        Address(bytes.fromhex(BLUR_ADDRESS[2:])),
        value_wei=price,
        input_bytes=builder._blur_input(
            seller, buyer, collection, token_id, price, [(10_000, buyer)], "flagship"
        ),
        logs=[builder._erc721_log(collection, seller, buyer, token_id)],
    )
    builder._label_verdict(
        d.tx_hash("flagship:execute"), "FreeBuyOrder", seller, [buyer], FLAGSHIP_FLOOR_USD
    )

    # scene 2: exchange hot wallet poisoned by a forged 10M fake-token record
    exchange = d.address("flagship:exchange")
    genuine = Address(bytes.fromhex(FLAGSHIP_GENUINE_DEPOSIT[2:]))
    fake = Address(bytes.fromhex(FLAGSHIP_FAKE_DEPOSIT[2:]))
    attacker = d.address("flagship:attacker")
    usdt = Address(bytes.fromhex(CANONICAL_TOKENS[0][1][2:]))
    fake_usdt = builder.fake_tokens[0][0]
    ten_million = 10_000_000 * 10**6
    twenty_million = 20_000_000 * 10**6
    builder._add_tx(
        START_BLOCK + 1,
        "flagship:genuine-deposit",
        exchange,
        usdt,
        input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (genuine, ten_million)),
        logs=[builder._erc20_log(usdt, exchange, genuine, ten_million)],
    )
    attack_hash = builder._add_tx(
        START_BLOCK + 2,
        "flagship:forge",
        attacker,
        fake_usdt,
        input_bytes=abi.encode_call(
            SEL_TRANSFER_FROM, ["address", "address", "uint256"], (exchange, fake, ten_million)
        ),
        logs=[builder._erc20_log(fake_usdt, exchange, fake, ten_million)],
    )
    builder._label_attack(attack_hash, "FakeToken", attacker, [exchange])
    mistake_hash = bytes.fromhex(FLAGSHIP_MISTAKE_TX[2:])
    builder._add_tx(
        START_BLOCK + 3,
        "flagship:mistake",
        exchange,
        usdt,
        input_bytes=abi.encode_call(SEL_TRANSFER, ["address", "uint256"], (fake, twenty_million)),
        logs=[builder._erc20_log(usdt, exchange, fake, twenty_million)],
        tx_hash=mistake_hash,
    )
    builder._label_verdict(
        mistake_hash, "FakeToken", exchange, [fake], Decimal("20000000.00")
    )

    builder.write()
    # pin the flagship collection's floor to the incident value
    floors = (Path(out_dir) / "registry" / "floors.csv").read_text().splitlines()
    floors[1] = f"{collection.hex},0,{FLAGSHIP_FLOOR_USD}"
    (Path(out_dir) / "registry" / "floors.csv").write_text("\n".join(floors) + "\n")
    return Path(out_dir)

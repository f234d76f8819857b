"""Static registries and price oracles consulted by the detection rules.

Everything loads from header-row CSV files and is immutable afterwards;
a refresh builds a new registry and swaps it in atomically. Price and
floor-price lookups use the nearest point at-or-before the queried block,
which keeps replays reproducible.

Required files: authorized.csv, cex.csv, markets.csv, tokens.csv,
selectors.csv. Optional extensions: verified.csv, symbols.csv,
contracts.csv, permit2.csv, routers.csv, prices.csv, floors.csv.
"""

from __future__ import annotations

import csv
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from .model import Address, normalize_address

logger = logging.getLogger(__name__)

# Tokens with oracle pricing support; everything else is unpriceable and
# excluded from loss sums.
SUPPORTED_PRICE_SYMBOLS = frozenset(
    {"ETH", "USDT", "USDC", "DAI", "WETH", "stETH", "WBTC", "BUSD"}
)

NATIVE_SYMBOL = "ETH"

KNOWN_ADAPTERS = frozenset(
    {
        "seaport11",
        "seaport12",
        "seaport13",
        "seaport14",
        "blur1",
        "blur2",
        "openseaHelper",
        "openseaFactory",
    }
)


class ConfigError(Exception):
    """A required registry/fixture file is missing or unreadable."""


class ValidationError(Exception):
    """Registry contents violate an invariant (e.g. selector in two classes)."""


class UnpriceableError(Exception):
    """No USD price can be produced for the asset at the requested block."""


@dataclass(frozen=True, slots=True)
class MarketEntry:
    address: Address
    market: str  # display name, e.g. "Blur"
    adapter: str  # adapter id binding the contract to a decoder


@dataclass(frozen=True, slots=True)
class PricePoint:
    token: str  # price symbol (ETH for native)
    block_number: int
    usd_per_unit: Decimal

    def __post_init__(self) -> None:
        if self.usd_per_unit < 0:
            raise ValidationError("price points must be >= 0")


@dataclass(frozen=True)
class LabelRegistry:
    """All static label sets the rules consult."""

    authorized_set: frozenset[Address] = frozenset()
    cex_set: frozenset[Address] = frozenset()
    nft_markets: dict[Address, MarketEntry] = field(default_factory=dict)
    canonical_tokens: dict[str, tuple[Address, int]] = field(default_factory=dict)
    airdrop_selectors: frozenset[bytes] = frozenset()
    wallet_selectors: frozenset[bytes] = frozenset()
    verified_sources: frozenset[Address] = frozenset()
    token_symbols: dict[Address, str] = field(default_factory=dict)
    contract_set: frozenset[Address] = frozenset()
    permit2_contracts: frozenset[Address] = frozenset()
    permit2_selectors: frozenset[bytes] = frozenset()
    dex_routers: frozenset[Address] = frozenset()

    def __post_init__(self) -> None:
        overlap = self.airdrop_selectors & self.wallet_selectors
        if overlap:
            listed = ", ".join("0x" + s.hex() for s in sorted(overlap))
            raise ValidationError(f"selectors listed as both Airdrop and Wallet: {listed}")
        for symbol, (_, decimals) in self.canonical_tokens.items():
            if decimals > 36:
                raise ValidationError(f"token {symbol} has implausible decimals {decimals}")

    @property
    def nft_market_set(self) -> frozenset[Address]:
        return frozenset(self.nft_markets)

    def canonical_address(self, symbol: str) -> Address | None:
        entry = self.canonical_tokens.get(symbol)
        return entry[0] if entry else None

    def symbol_of(self, token: Address) -> str | None:
        """On-chain symbol of a token address (from the symbols fixture)."""
        return self.token_symbols.get(token)

    def price_symbol_of(self, token: Address) -> str | None:
        """Symbol to use for oracle pricing, only for canonical addresses."""
        for symbol, (addr, _) in self.canonical_tokens.items():
            if addr == token:
                return symbol
        return None

    def decimals_of(self, token: Address) -> int | None:
        for _, (addr, decimals) in self.canonical_tokens.items():
            if addr == token:
                return decimals
        return None

    def is_fake_token(self, token: Address) -> bool:
        """True when the token's symbol collides with a canonical token at a different address."""
        symbol = self.token_symbols.get(token)
        if symbol is None:
            return False
        entry = self.canonical_tokens.get(symbol)
        return entry is not None and entry[0] != token

    def is_verified_source(self, contract: Address) -> bool:
        return contract in self.verified_sources

    def is_contract(self, address: Address) -> bool:
        return address in self.contract_set


def _read_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    if not path.exists():
        raise ConfigError(f"missing registry file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"registry file has no header row: {path}") from None
        if [h.strip() for h in header] != expected_header:
            raise ConfigError(
                f"{path.name}: expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        return [row for row in reader if row and any(cell.strip() for cell in row)]


def _read_optional(path: Path, expected_header: list[str]) -> list[list[str]]:
    if not path.exists():
        return []
    return _read_rows(path, expected_header)


def _parse_selector(text: str, where: str) -> bytes:
    text = text.strip()
    if not text.startswith("0x") or len(text) != 10:
        raise ValidationError(f"{where}: selector must be 0x + 8 hex chars, got {text!r}")
    try:
        return bytes.fromhex(text[2:])
    except ValueError as exc:
        raise ValidationError(f"{where}: non-hex selector {text!r}") from exc


def load_registry(
    authorized_file: str | Path,
    cex_file: str | Path,
    markets_file: str | Path,
    tokens_file: str | Path,
    selectors_file: str | Path,
    *,
    verified_file: str | Path | None = None,
    symbols_file: str | Path | None = None,
    contracts_file: str | Path | None = None,
    permit2_file: str | Path | None = None,
    routers_file: str | Path | None = None,
) -> LabelRegistry:
    """Load and validate all registry CSVs; duplicates are deduplicated."""
    authorized = frozenset(
        normalize_address(row[0]) for row in _read_rows(Path(authorized_file), ["address", "label"])
    )
    cex = frozenset(
        normalize_address(row[0]) for row in _read_rows(Path(cex_file), ["address", "exchange"])
    )

    markets: dict[Address, MarketEntry] = {}
    for row in _read_rows(Path(markets_file), ["address", "market", "adapter"]):
        addr = normalize_address(row[0])
        adapter = row[2].strip()
        if adapter not in KNOWN_ADAPTERS:
            raise ValidationError(f"markets.csv: unknown adapter {adapter!r} for {row[0]}")
        markets[addr] = MarketEntry(address=addr, market=row[1].strip(), adapter=adapter)

    tokens: dict[str, tuple[Address, int]] = {}
    for row in _read_rows(Path(tokens_file), ["symbol", "address", "decimals"]):
        symbol = row[0].strip()
        entry = (normalize_address(row[1]), int(row[2]))
        if symbol in tokens and tokens[symbol] != entry:
            raise ValidationError(f"tokens.csv: conflicting rows for symbol {symbol}")
        tokens[symbol] = entry

    airdrop: set[bytes] = set()
    wallet: set[bytes] = set()
    for row in _read_rows(Path(selectors_file), ["selector", "class", "name"]):
        sel = _parse_selector(row[0], "selectors.csv")
        cls = row[1].strip()
        if cls == "Airdrop":
            airdrop.add(sel)
        elif cls == "Wallet":
            wallet.add(sel)
        else:
            raise ValidationError(f"selectors.csv: class must be Airdrop or Wallet, got {cls!r}")

    verified = frozenset(
        normalize_address(row[0])
        for row in (_read_optional(Path(verified_file), ["address"]) if verified_file else [])
    )
    symbols = {
        normalize_address(row[0]): row[1].strip()
        for row in (_read_optional(Path(symbols_file), ["address", "symbol"]) if symbols_file else [])
    }
    contracts = frozenset(
        normalize_address(row[0])
        for row in (_read_optional(Path(contracts_file), ["address"]) if contracts_file else [])
    )
    permit2_contracts: set[Address] = set()
    permit2_selectors: set[bytes] = set()
    for row in (
        _read_optional(Path(permit2_file), ["address", "selector", "name"]) if permit2_file else []
    ):
        permit2_contracts.add(normalize_address(row[0]))
        permit2_selectors.add(_parse_selector(row[1], "permit2.csv"))
    routers = frozenset(
        normalize_address(row[0])
        for row in (_read_optional(Path(routers_file), ["address", "name"]) if routers_file else [])
    )

    registry = LabelRegistry(
        authorized_set=authorized,
        cex_set=cex,
        nft_markets=markets,
        canonical_tokens=tokens,
        airdrop_selectors=frozenset(airdrop),
        wallet_selectors=frozenset(wallet),
        verified_sources=verified,
        token_symbols=symbols,
        contract_set=contracts,
        permit2_contracts=frozenset(permit2_contracts),
        permit2_selectors=frozenset(permit2_selectors),
        dex_routers=routers,
    )
    logger.info(
        "registry loaded: %d authorized, %d cex, %d markets, %d tokens, %d+%d selectors",
        len(authorized), len(cex), len(markets), len(tokens), len(airdrop), len(wallet),
    )
    return registry


REGISTRY_FILENAMES = {
    "authorized_file": "authorized.csv",
    "cex_file": "cex.csv",
    "markets_file": "markets.csv",
    "tokens_file": "tokens.csv",
    "selectors_file": "selectors.csv",
    "verified_file": "verified.csv",
    "symbols_file": "symbols.csv",
    "contracts_file": "contracts.csv",
    "permit2_file": "permit2.csv",
    "routers_file": "routers.csv",
}


def load_registry_dir(directory: str | Path) -> LabelRegistry:
    """Load a registry from a directory using the canonical file names."""
    directory = Path(directory)
    kwargs = {}
    for key, name in REGISTRY_FILENAMES.items():
        path = directory / name
        if key.endswith(("verified_file", "symbols_file", "contracts_file", "permit2_file", "routers_file")):
            kwargs[key] = path if path.exists() else None
        else:
            kwargs[key] = path
    return load_registry(**kwargs)


class PriceOracle:
    """USD prices per whole token unit, keyed by symbol, at-or-before a block."""

    def __init__(self, points: list[PricePoint]):
        self._by_token: dict[str, tuple[list[int], list[Decimal]]] = {}
        grouped: dict[str, list[PricePoint]] = {}
        for p in points:
            if p.token not in SUPPORTED_PRICE_SYMBOLS:
                raise ValidationError(
                    f"price point for unsupported token {p.token!r}; supported: "
                    + ", ".join(sorted(SUPPORTED_PRICE_SYMBOLS))
                )
            grouped.setdefault(p.token, []).append(p)
        for token, pts in grouped.items():
            pts.sort(key=lambda p: p.block_number)
            self._by_token[token] = ([p.block_number for p in pts], [p.usd_per_unit for p in pts])

    @classmethod
    def from_csv(cls, path: str | Path) -> "PriceOracle":
        rows = _read_rows(Path(path), ["token", "block", "usd"])
        return cls([PricePoint(row[0].strip(), int(row[1]), Decimal(row[2])) for row in rows])

    def price_usd_symbol(self, symbol: str, block_number: int) -> Decimal:
        if symbol not in SUPPORTED_PRICE_SYMBOLS:
            raise UnpriceableError(f"token {symbol!r} is outside the supported price set")
        entry = self._by_token.get(symbol)
        if entry is None:
            raise UnpriceableError(f"no price points for {symbol}")
        blocks, prices = entry
        idx = bisect_right(blocks, block_number)
        if idx == 0:
            raise UnpriceableError(f"no {symbol} price at or before block {block_number}")
        return prices[idx - 1]

    def price_usd(self, token: Address, block_number: int, registry: LabelRegistry) -> Decimal:
        """USD per whole unit of a canonical token address."""
        symbol = registry.price_symbol_of(token)
        if symbol is None:
            raise UnpriceableError(f"token {token.hex} is not in the supported set")
        return self.price_usd_symbol(symbol, block_number)

    def native_price_usd(self, block_number: int) -> Decimal:
        return self.price_usd_symbol(NATIVE_SYMBOL, block_number)


class FloorOracle:
    """USD floor prices per NFT collection, at-or-before a block."""

    def __init__(self, points: list[tuple[Address, int, Decimal]]):
        self._by_collection: dict[Address, tuple[list[int], list[Decimal]]] = {}
        grouped: dict[Address, list[tuple[int, Decimal]]] = {}
        for collection, block, usd in points:
            if usd < 0:
                raise ValidationError("floor prices must be >= 0")
            grouped.setdefault(collection, []).append((block, usd))
        for collection, pts in grouped.items():
            pts.sort(key=lambda p: p[0])
            self._by_collection[collection] = ([b for b, _ in pts], [u for _, u in pts])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FloorOracle":
        rows = _read_rows(Path(path), ["collection", "block", "usd"])
        return cls([(normalize_address(r[0]), int(r[1]), Decimal(r[2])) for r in rows])

    def floor_price_usd(self, collection: Address, block_number: int) -> Decimal:
        entry = self._by_collection.get(collection)
        if entry is None:
            raise UnpriceableError(f"unknown collection {collection.hex}")
        blocks, prices = entry
        idx = bisect_right(blocks, block_number)
        if idx == 0:
            raise UnpriceableError(
                f"no floor for {collection.hex} at or before block {block_number}"
            )
        return prices[idx - 1]


def load_oracles(directory: str | Path) -> tuple[PriceOracle, FloorOracle]:
    """Load prices.csv and floors.csv from a registry directory (empty if absent)."""
    directory = Path(directory)
    prices_path = directory / "prices.csv"
    floors_path = directory / "floors.csv"
    prices = PriceOracle.from_csv(prices_path) if prices_path.exists() else PriceOracle([])
    floors = FloorOracle.from_csv(floors_path) if floors_path.exists() else FloorOracle([])
    return prices, floors

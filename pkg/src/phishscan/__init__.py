"""phishscan: rule-based detection of payload-level phishing scams on
EVM-style chains, with loss valuation and cash-out organization discovery."""

from .model import (
    Address,
    Category,
    DecodedCall,
    Evidence,
    Log,
    SubCategory,
    Transaction,
    TransferEvent,
    TransferKind,
    Verdict,
    normalize_address,
    verdict_from_json,
    verdict_to_json,
)
from .rules import RuleConfig, SimilarityConfig, addresses_similar, detect_tx

__version__ = "0.1.0"

__all__ = [
    "Address",
    "Category",
    "DecodedCall",
    "Evidence",
    "Log",
    "RuleConfig",
    "SimilarityConfig",
    "SubCategory",
    "Transaction",
    "TransferEvent",
    "TransferKind",
    "Verdict",
    "addresses_similar",
    "detect_tx",
    "normalize_address",
    "verdict_from_json",
    "verdict_to_json",
    "__version__",
]

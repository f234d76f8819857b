import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phishscan import corpus
from phishscan.ingest import FixtureProvider
from phishscan.refdata import load_oracles, load_registry_dir


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("corpus") / "small"
    corpus.generate_corpus(out, per_subcategory=12, benign=80, seed=7)
    return out


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir):
    provider = FixtureProvider(small_corpus_dir)
    registry = load_registry_dir(small_corpus_dir / "registry")
    prices, floors = load_oracles(small_corpus_dir / "registry")
    return provider, registry, prices, floors


@pytest.fixture(scope="session")
def flagship_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("flagship") / "fixtures"
    corpus.write_flagship_fixtures(out)
    return out


@pytest.fixture(scope="session")
def registry(small_corpus):
    return small_corpus[1]


@pytest.fixture(scope="session")
def oracles(small_corpus):
    return small_corpus[2], small_corpus[3]

from __future__ import annotations

from pathlib import Path

import pytest

from sumeta.corpus import TokenizerConfig, load_corpus

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_CORPUS = REPO_ROOT / "fixtures" / "sample_corpus.jsonl"


@pytest.fixture(scope="session")
def default_cfg() -> TokenizerConfig:
    return TokenizerConfig()


@pytest.fixture(scope="session")
def sample_corpus(default_cfg):
    return load_corpus(FIXTURE_CORPUS, default_cfg)

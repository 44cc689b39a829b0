from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pytest

from slime.models import AttributedCorpus, AttributedDocument, StatsConfig, TokenRecord
from slime.pipeline.corpus import load_corpus
from slime.pipeline.tagging import parse_dictionary

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "data" / "fixture"

MINI_DIC = "%\n1\tpronoun\n2\tppron\n3\tmotion\n4\tWC\n%\nshe\t1 2\nit\t1\nrun*\t3\nthe\t4\n"


def write_dic(path: Path, content: str = MINI_DIC) -> Path:
    path.write_text(content, encoding="utf-8")
    return path


def make_records(docs: Sequence[tuple]) -> List[TokenRecord]:
    """docs: (doc_id, label, [(surface, attribution, {categories}), ...])"""
    records = []
    for doc_id, label, tokens in docs:
        for position, (surface, attribution, categories) in enumerate(tokens):
            records.append(TokenRecord(
                doc_id=doc_id, position=position, surface=surface,
                attribution=attribution, categories=frozenset(categories), doc_label=label,
            ))
    return records


def planted_attributions(corpus, weights: Dict[str, float]) -> AttributedCorpus:
    """Attribution ``weights[token]`` for listed surfaces, 0 for every other token."""
    return AttributedCorpus(documents=[
        AttributedDocument(
            id=doc.id, label=doc.label, tokens=doc.tokens,
            attributions=[weights.get(t, 0.0) for t in doc.tokens],
        )
        for doc in corpus.documents
    ])


@pytest.fixture
def fixture_corpus():
    return load_corpus(FIXTURE_DIR / "corpus.jsonl")


@pytest.fixture
def fixture_dictionary():
    return parse_dictionary(FIXTURE_DIR / "mini.dic")


@pytest.fixture
def mini_dictionary(tmp_path):
    return parse_dictionary(write_dic(tmp_path / "mini.dic"))


@pytest.fixture
def stats_cfg():
    return StatsConfig(n_subsamples=1000, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import logging

import pytest

from slime.errors import CorpusError
from slime.pipeline.corpus import (
    Corpus,
    Document,
    export_corpus,
    kfold_split,
    load_corpus,
    summarize_corpus,
    tokenize,
)


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("She washes dishes.") == ["she", "washes", "dishes", "."]
    assert tokenize("cookie-jar") == ["cookie", "-", "jar"]
    assert tokenize("Um,  the JAR!") == ["um", ",", "the", "jar", "!"]
    assert tokenize("") == []


def test_tokenize_is_idempotent_on_joined_tokens():
    for text in ("The boy, um, takes a cookie-jar!", "She's on the STOOL...", ""):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens


def test_document_rejects_inconsistent_tokens():
    with pytest.raises(ValueError):
        Document(id="a", label=1, text="one two", tokens=["one"])
    assert Document(id="a", label=1, text="One two").tokens == ["one", "two"]


def test_corpus_sorted_and_unique():
    corpus = Corpus(documents=[Document(id="b", label=0, text="x"), Document(id="a", label=1, text="y")])
    assert [d.id for d in corpus.documents] == ["a", "b"]
    with pytest.raises(ValueError, match="duplicate"):
        Corpus(documents=[Document(id="a", label=0, text="x"), Document(id="a", label=1, text="y")])


def test_load_fixture(fixture_corpus):
    assert len(fixture_corpus.documents) == 60
    assert fixture_corpus.class_counts == {0: 30, 1: 30}
    ids = [d.id for d in fixture_corpus.documents]
    assert ids == sorted(ids)
    assert "um" in fixture_corpus.by_id()["ad_00"].tokens


@pytest.mark.parametrize(
    "lines, message",
    [
        (['{"id": "a", "label": 1, "text": "x"}', "{not json"], "line 2"),
        (['{"id": "a", "text": "x"}'], "line 1: missing label"),
        (['{"id": "a", "label": 2, "text": "x"}'], "not 0 or 1"),
        (['{"id": "a", "label": 1, "text": "x"}', '{"id": "a", "label": 0, "text": "y"}'], "duplicate id"),
    ],
)
def test_jsonl_errors_name_the_line(tmp_path, lines, message):
    path = tmp_path / "c.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=message):
        load_corpus(path)


def test_empty_corpus(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="empty corpus"):
        load_corpus(path)


def test_unknown_format(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "label": 1, "text": "x"}\n', encoding="utf-8")
    with pytest.raises(CorpusError, match="unknown corpus format"):
        load_corpus(path, "xml")


def _plain_dir(tmp_path, labels: str):
    root = tmp_path / "plain"
    root.mkdir()
    (root / "s1.txt").write_text("The boy, um, falls.", encoding="utf-8")
    (root / "s2.txt").write_text("The mother dries dishes.", encoding="utf-8")
    (root / "labels.csv").write_text(labels, encoding="utf-8")
    return root


def test_plain_dir_with_demographics(tmp_path, caplog):
    root = _plain_dir(tmp_path, "id,label,age,sex\ns1,1,71,f\ns2,0,68,m\ns3,0,70,f\n")
    with caplog.at_level(logging.WARNING, logger="corpus"):
        corpus = load_corpus(root, "plain-dir")
    assert [d.id for d in corpus.documents] == ["s1", "s2"]
    assert corpus.by_id()["s1"].meta.age == 71
    assert "labels without a text file" in caplog.text


def test_plain_dir_missing_label(tmp_path):
    root = _plain_dir(tmp_path, "id,label\ns1,1\n")
    with pytest.raises(CorpusError, match="missing label for document 's2'"):
        load_corpus(root, "plain-dir")


def test_export_round_trip(tmp_path, fixture_corpus):
    path = export_corpus(fixture_corpus, tmp_path / "copy.jsonl")
    assert load_corpus(path) == fixture_corpus


def test_kfold_split_is_stratified_and_deterministic(fixture_corpus):
    plan = kfold_split(fixture_corpus, 5, seed=7)
    assert plan == kfold_split(fixture_corpus, 5, seed=7)
    assert plan.fold_sizes() == [12] * 5
    labels = {d.id: d.label for d in fixture_corpus.documents}
    for fold in range(5):
        val = plan.validation_ids(fold)
        assert sum(labels[i] for i in val) == 6
        assert set(val).isdisjoint(plan.training_ids(fold))
        assert len(plan.training_ids(fold)) == 48
    assert plan != kfold_split(fixture_corpus, 5, seed=8)


def test_kfold_split_uneven_sizes_differ_by_one():
    docs = [Document(id=f"d{i:02d}", label=i % 2, text="x") for i in range(23)]
    plan = kfold_split(Corpus(documents=docs), 4, seed=0)
    sizes = plan.fold_sizes()
    assert max(sizes) - min(sizes) <= 1 and sum(sizes) == 23


def test_kfold_split_156_documents():
    docs = [Document(id=f"d{i:03d}", label=i % 2, text="x") for i in range(156)]
    plan = kfold_split(Corpus(documents=docs), 5, seed=0)
    assert sorted(plan.fold_sizes(), reverse=True) == [32, 31, 31, 31, 31]
    for fold in range(5):
        ad = sum(int(i[1:]) % 2 for i in plan.validation_ids(fold))
        for count in (ad, len(plan.validation_ids(fold)) - ad):
            assert abs(count - 15.6) <= 1


def test_kfold_split_one_document_per_class_per_fold():
    docs = [Document(id=f"d{i}", label=i % 2, text="x") for i in range(10)]
    plan = kfold_split(Corpus(documents=docs), 5, seed=3)
    for fold in range(5):
        labels = sorted(int(i[1:]) % 2 for i in plan.validation_ids(fold))
        assert labels == [0, 1]


def test_kfold_split_preconditions(fixture_corpus):
    with pytest.raises(CorpusError, match="at least 2"):
        kfold_split(fixture_corpus, 1, seed=0)
    small = Corpus(documents=[Document(id=f"d{i}", label=int(i < 2), text="x") for i in range(10)])
    with pytest.raises(CorpusError, match="fewer than k=5"):
        kfold_split(small, 5, seed=0)


def test_summarize_corpus(fixture_corpus):
    summary = summarize_corpus(fixture_corpus)
    ad = summary.groups[1]
    assert ad.n == 30
    assert ad.sex_f == 15 and ad.sex_m == 15
    assert 60 <= ad.age_mean <= 74
    assert summary.groups[0].n == 30

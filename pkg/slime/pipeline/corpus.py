"""Labeled transcripts: ingestion, tokenization and stratified folds."""

import csv
import json
import logging
import re
import statistics
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from slime.errors import CorpusError
from slime.models import Label

logger = logging.getLogger("corpus")

# A word is a run of word characters; any other non-space character stands alone.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, isolate punctuation marks.

    >>> tokenize("She washes dishes.")
    ['she', 'washes', 'dishes', '.']
    """
    return _TOKEN_RE.findall(text.lower())


class DocumentMeta(BaseModel):
    model_config = ConfigDict(extra="ignore")

    age: Optional[float] = None
    sex: Optional[Literal["f", "m"]] = None


class Document(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    label: Label
    text: str
    tokens: List[str] = []
    meta: Optional[DocumentMeta] = None

    @model_validator(mode="before")
    @classmethod
    def _tokenize(cls, data):
        if isinstance(data, dict):
            expected = tokenize(data.get("text", ""))
            given = data.get("tokens")
            if given is not None and list(given) != expected:
                raise ValueError("tokens do not match tokenize(text)")
            data = {**data, "tokens": expected}
        return data


class Corpus(BaseModel):
    """Documents in lexicographic id order."""

    model_config = ConfigDict(frozen=True)

    documents: List[Document]

    @model_validator(mode="after")
    def _unique_sorted(self):
        ids = [d.id for d in self.documents]
        seen = set()
        for doc_id in ids:
            if doc_id in seen:
                raise ValueError(f"duplicate document id {doc_id!r}")
            seen.add(doc_id)
        if ids != sorted(ids):
            object.__setattr__(self, "documents", sorted(self.documents, key=lambda d: d.id))
        return self

    @property
    def class_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for doc in self.documents:
            counts[doc.label] = counts.get(doc.label, 0) + 1
        return dict(sorted(counts.items()))

    @property
    def labels(self) -> np.ndarray:
        return np.array([d.label for d in self.documents], dtype=int)

    def by_id(self) -> Dict[str, Document]:
        return {d.id: d for d in self.documents}

    def subset(self, ids) -> "Corpus":
        wanted = set(ids)
        return Corpus(documents=[d for d in self.documents if d.id in wanted])


class FoldPlan(BaseModel):
    k: int = Field(ge=2)
    assignments: Dict[str, int]

    @model_validator(mode="after")
    def _in_range(self):
        bad = [doc_id for doc_id, fold in self.assignments.items() if not 0 <= fold < self.k]
        if bad:
            raise ValueError(f"fold index out of range for {bad[:3]}")
        return self

    def validation_ids(self, fold: int) -> List[str]:
        return sorted(doc_id for doc_id, f in self.assignments.items() if f == fold)

    def training_ids(self, fold: int) -> List[str]:
        return sorted(doc_id for doc_id, f in self.assignments.items() if f != fold)

    def fold_sizes(self) -> List[int]:
        sizes = [0] * self.k
        for f in self.assignments.values():
            sizes[f] += 1
        return sizes


class GroupSummary(BaseModel):
    n: int
    age_mean: Optional[float] = None
    age_sd: Optional[float] = None
    sex_f: int = 0
    sex_m: int = 0


class CorpusSummary(BaseModel):
    groups: Dict[int, GroupSummary]


def _build_corpus(documents: List[Document], source: Path) -> Corpus:
    if not documents:
        raise CorpusError(f"empty corpus: {source}")
    try:
        corpus = Corpus(documents=documents)
    except ValidationError as e:
        raise CorpusError(f"{source}: {e.errors()[0]['msg']}") from None
    logger.info(f"Loaded {len(corpus.documents)} documents from {source} (class counts {corpus.class_counts})")
    return corpus


def _check_label(raw, where: str) -> int:
    try:
        label = int(raw)
    except (TypeError, ValueError):
        raise CorpusError(f"{where}: label {raw!r} is not 0 or 1") from None
    if label not in (0, 1) or str(raw).strip() not in ("0", "1"):
        raise CorpusError(f"{where}: label {raw!r} is not 0 or 1")
    return label


def _load_jsonl(path: Path) -> Corpus:
    documents: List[Document] = []
    seen = set()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise CorpusError(f"cannot read {path}: {e}") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}: line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{where}: malformed json ({e.msg})") from None
        if not isinstance(obj, dict):
            raise CorpusError(f"{where}: expected an object")
        if "label" not in obj:
            raise CorpusError(f"{where}: missing label")
        label = _check_label(obj["label"], where)
        doc_id = str(obj.get("id", ""))
        if doc_id in seen:
            raise CorpusError(f"{where}: duplicate id {doc_id!r}")
        seen.add(doc_id)
        try:
            documents.append(Document(id=doc_id, label=label, text=obj.get("text", ""), meta=obj.get("meta")))
        except ValidationError as e:
            raise CorpusError(f"{where}: {e.errors()[0]['msg']}") from None
    return _build_corpus(documents, path)


def _load_plain_dir(path: Path) -> Corpus:
    labels_path = path / "labels.csv"
    files = sorted(path.glob("*.txt"))
    if not files:
        raise CorpusError(f"empty corpus: {path}")
    if not labels_path.exists():
        raise CorpusError(f"missing labels table: {labels_path}")

    rows: Dict[str, dict] = {}
    with open(labels_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"id", "label"} <= set(reader.fieldnames):
            raise CorpusError(f"{labels_path}: header must contain id,label")
        for lineno, row in enumerate(reader, start=2):
            doc_id = (row.get("id") or "").strip()
            if doc_id in rows:
                raise CorpusError(f"{labels_path}: line {lineno}: duplicate id {doc_id!r}")
            row["_line"] = lineno
            rows[doc_id] = row

    documents = []
    for file in files:
        doc_id = file.stem
        row = rows.get(doc_id)
        if row is None:
            raise CorpusError(f"missing label for document {doc_id!r} ({file})")
        label = _check_label(row["label"], f"{labels_path}: line {row['_line']}")
        try:
            text = file.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise CorpusError(f"cannot read {file}: {e}") from None
        meta = None
        if row.get("age") or row.get("sex"):
            try:
                meta = DocumentMeta(age=row.get("age") or None, sex=row.get("sex") or None)
            except ValidationError as e:
                raise CorpusError(f"{labels_path}: line {row['_line']}: {e.errors()[0]['msg']}") from None
        documents.append(Document(id=doc_id, label=label, text=text, meta=meta))

    orphans = sorted(set(rows) - {f.stem for f in files})
    if orphans:
        logger.warning(f"{len(orphans)} labels without a text file, e.g. {orphans[:3]}")
    return _build_corpus(documents, path)


def load_corpus(path, format: str = "jsonl") -> Corpus:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus path does not exist: {path}")
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "plain-dir":
        if not path.is_dir():
            raise CorpusError(f"plain-dir corpus must be a directory: {path}")
        return _load_plain_dir(path)
    raise CorpusError(f"unknown corpus format {format!r}")


def export_corpus(corpus: Corpus, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in corpus.documents:
            obj = {"id": doc.id, "label": doc.label, "text": doc.text}
            if doc.meta is not None:
                obj["meta"] = doc.meta.model_dump(exclude_none=True)
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return path


def kfold_split(corpus: Corpus, k: int, seed: int) -> FoldPlan:
    """Stratified k-fold assignment.

    Each class is shuffled and dealt round-robin; the deal continues across
    classes so total fold sizes also differ by at most one.
    """
    if k < 2:
        raise CorpusError(f"k must be at least 2, got {k}")
    rng = np.random.default_rng(seed)
    assignments: Dict[str, int] = {}
    cursor = 0
    for label, count in corpus.class_counts.items():
        if count < k:
            raise CorpusError(f"class {label} has {count} documents, fewer than k={k}")
        ids = [d.id for d in corpus.documents if d.label == label]
        for doc_id in (ids[i] for i in rng.permutation(len(ids))):
            assignments[doc_id] = cursor % k
            cursor += 1
    plan = FoldPlan(k=k, assignments=dict(sorted(assignments.items())))
    logger.info(f"Split {len(assignments)} documents into {k} folds of sizes {plan.fold_sizes()}")
    return plan


def summarize_corpus(corpus: Corpus) -> CorpusSummary:
    groups = {}
    for label in sorted(corpus.class_counts):
        docs = [d for d in corpus.documents if d.label == label]
        ages = [d.meta.age for d in docs if d.meta and d.meta.age is not None]
        sexes = [d.meta.sex for d in docs if d.meta and d.meta.sex]
        groups[label] = GroupSummary(
            n=len(docs),
            age_mean=statistics.fmean(ages) if ages else None,
            age_sd=statistics.stdev(ages) if len(ages) > 1 else None,
            sex_f=sexes.count("f"),
            sex_m=sexes.count("m"),
        )
    return CorpusSummary(groups=groups)

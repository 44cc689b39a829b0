"""LIWC-format dictionaries and per-token category tagging."""

import logging
import re
from collections import Counter
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Set

from pydantic import ValidationError

from slime.errors import DictionaryError, InterchangeError
from slime.models import DEFAULT_EXCLUDED, AttributedCorpus, CategoryDictionary, TokenRecord

logger = logging.getLogger("tagging")

_ID_RE = re.compile(r"^\d+$")


def parse_dictionary(path, excluded: Iterable[str] = DEFAULT_EXCLUDED) -> CategoryDictionary:
    """Read a ``%``-delimited dic file.

    Layout::

        %
        1<TAB>pronoun
        2<TAB>ppron
        %
        she<TAB>1 2
        run*<TAB>3
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise DictionaryError(f"cannot read {path}: {e}") from None

    categories: Dict[int, str] = {}
    entries: Dict[str, Set[int]] = {}
    section = 0  # 0 before the first %, 1 in the header, 2 in the entries

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or (line.startswith("#") and "\t" not in line):
            continue
        where = f"{path}: line {lineno}"
        if line == "%":
            section += 1
            if section > 2:
                raise DictionaryError(f"{where}: unexpected third '%' delimiter")
            continue
        if section == 0:
            raise DictionaryError(f"{where}: content before the opening '%'")

        parts = line.split("\t")
        if section == 1:
            if len(parts) != 2 or not _ID_RE.match(parts[0].strip()) or not parts[1].strip():
                raise DictionaryError(f"{where}: malformed header line {line!r}, expected id<TAB>name")
            cat_id = int(parts[0])
            if cat_id in categories:
                raise DictionaryError(f"{where}: duplicate category id {cat_id}")
            categories[cat_id] = parts[1].strip()
            continue

        if len(parts) < 2:
            raise DictionaryError(f"{where}: malformed entry {line!r}, expected pattern<TAB>ids")
        pattern = parts[0].strip().lower()
        if not pattern or " " in pattern or "(" in pattern or ")" in pattern:
            raise DictionaryError(f"{where}: only single-token patterns are supported, got {parts[0]!r}")
        if "*" in pattern[:-1] or pattern == "*":
            raise DictionaryError(f"{where}: wildcard allowed only at the end of {pattern!r}")
        ids = " ".join(parts[1:]).split()
        if not ids or not all(_ID_RE.match(i) for i in ids):
            raise DictionaryError(f"{where}: category ids must be integers, got {' '.join(parts[1:])!r}")
        for cat_id in map(int, ids):
            if categories and cat_id not in categories:
                raise DictionaryError(f"{where}: unknown category id {cat_id}")
        entries.setdefault(pattern, set()).update(map(int, ids))

    if not categories:
        raise DictionaryError(f"{path}: empty header, no categories defined")
    if section < 2:
        raise DictionaryError(f"{path}: missing closing '%' after the header")

    try:
        dictionary = CategoryDictionary(
            categories=categories,
            entries={p: frozenset(ids) for p, ids in entries.items()},
            excluded=frozenset(excluded),
        )
    except ValidationError as e:
        raise DictionaryError(f"{path}: {e.errors()[0]['msg']}") from None
    logger.info(
        f"Parsed {len(categories)} categories and {len(entries)} patterns from {path} "
        f"({len(dictionary.analyzed_categories())} analyzed)"
    )
    return dictionary


def tag_token(dictionary: CategoryDictionary, token: str) -> FrozenSet[str]:
    """Union of categories over every literal and wildcard entry that matches."""
    token = token.lower()
    found: Set[str] = set(dictionary.literal_index.get(token, ()))
    prefixes = dictionary.prefix_index
    if prefixes:
        for i in range(len(token) + 1):
            cats = prefixes.get(token[:i])
            if cats:
                found.update(cats)
    return frozenset(name for name in found if not dictionary.is_excluded(name))


def tag_corpus(attributed: AttributedCorpus, dictionary: CategoryDictionary) -> List[TokenRecord]:
    records: List[TokenRecord] = []
    cache: Dict[str, FrozenSet[str]] = {}
    for doc in attributed.documents:
        if len(doc.tokens) != len(doc.attributions):
            raise InterchangeError(f"{doc.id}: {len(doc.tokens)} tokens but {len(doc.attributions)} attributions")
        for position, (token, attr) in enumerate(zip(doc.tokens, doc.attributions)):
            if token not in cache:
                cache[token] = tag_token(dictionary, token)
            records.append(TokenRecord(
                doc_id=doc.id, position=position, surface=token,
                attribution=attr, categories=cache[token], doc_label=doc.label,
            ))
    tagged = sum(1 for r in records if r.categories)
    logger.info(f"Tagged {len(records)} tokens from {len(attributed.documents)} documents ({tagged} in some category)")
    return records


def category_token_counts(records: Iterable[TokenRecord]) -> Dict[str, int]:
    counts: Counter = Counter()
    for record in records:
        counts.update(record.categories)
    return dict(sorted(counts.items()))

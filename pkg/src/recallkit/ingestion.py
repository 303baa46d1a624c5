"""Turning raw corpus records into item vectors.

A corpus file is UTF-8 JSON lines, one record per line. Every record carries
an "id" plus either "text" (tokenized here and weighted by term frequency
times inverse document frequency) or "features" (a ready-made name-to-weight
map for callers that vectorize elsewhere). The two record styles cannot be
mixed within one file.

The tokenizer is deliberately minimal: lowercase, split on anything that is
not alphanumeric, drop single-character tokens. No stemming and no stopword
lists; terms that appear in every document get an idf of zero and vanish from
the vectors on their own.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .vectors import FeatureDictionary, ItemVector

_TOKEN_RE = re.compile(r"[^\W_]{2,}", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on any non-alphanumeric codepoint, keep tokens of length >= 2."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    text: str


@dataclass
class TfIdfModel:
    """Feature dictionary plus the document-frequency statistics behind idf."""

    dictionary: FeatureDictionary
    doc_freq: dict[int, int]
    corpus_size: int

    def idf(self, fid: int) -> float:
        return math.log(self.corpus_size / self.doc_freq[fid])

    def vectorize(self, doc: Document) -> ItemVector:
        """Weight = raw term count * ln(corpus_size / doc_freq).

        Zero weights (terms present in every document) are not stored and
        tokens outside the dictionary are ignored.
        """
        weights: dict[int, float] = {}
        for token, tf in Counter(tokenize(doc.text)).items():
            fid = self.dictionary.get(token)
            if fid is None:
                continue
            w = tf * self.idf(fid)
            if w != 0.0:
                weights[fid] = w
        return ItemVector(doc.id, weights)


def build_tfidf_model(corpus: Sequence[Document]) -> TfIdfModel:
    """Scan a corpus once: dictionary ids in first-appearance order, df counts."""
    if not corpus:
        raise ValidationError("empty corpus: need at least one document")
    dictionary = FeatureDictionary()
    doc_freq: dict[int, int] = {}
    for doc in corpus:
        seen = set()
        for token in tokenize(doc.text):
            fid = dictionary.add(token)
            if fid not in seen:
                seen.add(fid)
                doc_freq[fid] = doc_freq.get(fid, 0) + 1
    return TfIdfModel(dictionary=dictionary, doc_freq=doc_freq, corpus_size=len(corpus))


def vectorize(doc: Document, model: TfIdfModel) -> ItemVector:
    return model.vectorize(doc)


def vectorize_features(
    item_id: str,
    features: Mapping[str, float],
    dictionary: FeatureDictionary,
) -> tuple[ItemVector, list[str]]:
    """Map a name-to-weight record onto an existing dictionary.

    Returns the vector and the sorted list of names the dictionary does not
    know; those weights are dropped, they cannot be represented.
    """
    weights: dict[int, float] = {}
    unknown: list[str] = []
    for name, value in features.items():
        fid = dictionary.get(name)
        if fid is None:
            unknown.append(name)
        else:
            weights[fid] = value
    return ItemVector(item_id, weights), sorted(unknown)


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    text: str | None = None
    features: dict[str, float] | None = None


def _reject_constant(value: str):
    raise ValueError(f"non-finite number {value!r} is not allowed")


def parse_feature_map(raw: object, where: str) -> dict[str, float]:
    if not isinstance(raw, dict) or not raw:
        raise ValidationError(f"{where}: 'features' must be a non-empty object")
    features: dict[str, float] = {}
    for name, value in raw.items():
        if not isinstance(name, str) or not name:
            raise ValidationError(f"{where}: feature names must be non-empty strings")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where}: weight for {name!r} must be a number")
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError(f"{where}: weight for {name!r} is not finite")
        features[name] = value
    return features


def read_corpus(path: str | Path) -> tuple[str, list[CorpusRecord]]:
    """Read a JSONL corpus; returns the mode ("text" or "features") and records.

    Rejects: empty files, malformed lines, records missing exactly one of
    text/features, duplicate ids, and files mixing the two record styles.
    Every complaint names the file and line.
    """
    path = Path(path)
    mode: str | None = None
    records: list[CorpusRecord] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            where = f"{path}:{line_no}"
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{where}: invalid JSON ({exc.msg})") from None
            except ValueError as exc:  # the parse_constant rejection
                raise ValidationError(f"{where}: {exc}") from None
            if not isinstance(obj, dict):
                raise ValidationError(f"{where}: record must be a JSON object")
            doc_id = obj.get("id")
            if not isinstance(doc_id, str) or not doc_id:
                raise ValidationError(f"{where}: record needs a non-empty string 'id'")
            if doc_id in seen_ids:
                raise ValidationError(f"{where}: duplicate document id {doc_id!r}")
            seen_ids.add(doc_id)
            has_text = "text" in obj
            has_features = "features" in obj
            if has_text == has_features:
                raise ValidationError(f"{where}: record needs exactly one of 'text' or 'features'")
            record_mode = "text" if has_text else "features"
            if mode is None:
                mode = record_mode
            elif record_mode != mode:
                raise ValidationError(
                    f"{where}: mixed corpus, file started with {mode!r} records "
                    f"but this one is {record_mode!r}"
                )
            if has_text:
                text = obj["text"]
                if not isinstance(text, str):
                    raise ValidationError(f"{where}: 'text' must be a string")
                records.append(CorpusRecord(id=doc_id, text=text))
            else:
                records.append(CorpusRecord(id=doc_id, features=parse_feature_map(obj["features"], where)))
    if mode is None:
        raise ValidationError(f"{path}: empty corpus: need at least one record")
    return mode, records


@dataclass
class IngestResult:
    dictionary: FeatureDictionary
    model: TfIdfModel | None  # None for pre-weighted ("features") corpora
    items: list[ItemVector]

    @property
    def weighting(self) -> str:
        return "tfidf" if self.model is not None else "pregiven"


def ingest_corpus(path: str | Path) -> IngestResult:
    """Read, (maybe) weight, and vectorize a whole corpus file."""
    mode, records = read_corpus(path)
    if mode == "text":
        docs = [Document(r.id, r.text or "") for r in records]
        model = build_tfidf_model(docs)
        items = [model.vectorize(doc) for doc in docs]
        return IngestResult(dictionary=model.dictionary, model=model, items=items)
    dictionary = FeatureDictionary()
    items = []
    for record in records:
        assert record.features is not None
        weights = {dictionary.add(name): w for name, w in record.features.items()}
        items.append(ItemVector(record.id, weights))
    return IngestResult(dictionary=dictionary, model=None, items=items)

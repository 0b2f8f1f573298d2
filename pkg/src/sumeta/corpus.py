"""Corpus data model: pre-segmented documents, references, tokenization, n-grams.

The corpus file is JSON Lines, one record per line with fields ``id``
(string), ``sentences`` (array of strings) and ``reference`` (string).
Sentence segmentation is assumed to have happened upstream; this module never
splits sentences itself.
"""

from __future__ import annotations

import json
import logging
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import SumetaError
from ._porter import stem as porter_stem

logger = logging.getLogger(__name__)

_PUNCT = string.punctuation


class CorpusError(SumetaError):
    pass


@dataclass(frozen=True)
class TokenizerConfig:
    """Deterministic tokenizer switches.

    Tokenization splits on whitespace, then optionally strips punctuation
    from token edges, lowercases, and Porter-stems (stemmed tokens are
    lowercased as a side effect since the stemmer is defined over lowercase
    words). Identical config + identical text always yields the identical
    token sequence.
    """

    lowercase: bool = True
    strip_punctuation: bool = True
    stemming: bool = False

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "stemming": self.stemming,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        return cls(**d)


def tokenize(text: str, cfg: TokenizerConfig) -> list[str]:
    """Split ``text`` into tokens under ``cfg``. Empty text gives []."""
    out = []
    for tok in text.split():
        if cfg.strip_punctuation:
            tok = tok.strip(_PUNCT)
        if cfg.lowercase:
            tok = tok.lower()
        if not tok:
            continue
        if cfg.stemming:
            tok = porter_stem(tok)
        out.append(tok)
    return out


@dataclass(frozen=True)
class NGramBag:
    """Multiset of contiguous n-token windows."""

    n: int
    counts: Counter
    total: int


def ngrams(tokens, n: int) -> NGramBag:
    """All contiguous n-grams of ``tokens``; total = max(0, len - n + 1)."""
    if n < 1:
        raise CorpusError(f"n-gram order must be >= 1, got {n}")
    toks = tuple(tokens)
    counts = Counter(toks[i : i + n] for i in range(len(toks) - n + 1))
    return NGramBag(n=n, counts=counts, total=max(0, len(toks) - n + 1))


@dataclass
class Document:
    id: str
    sentences: list[str]
    token_cache: list[list[str]]

    @property
    def all_tokens(self) -> list[str]:
        return [t for sent in self.token_cache for t in sent]

    @property
    def sentence_lengths(self) -> list[int]:
        return [len(sent) for sent in self.token_cache]

    @property
    def vocab(self) -> frozenset:
        return frozenset(self.all_tokens)


@dataclass
class Reference:
    doc_id: str
    text: str
    tokens: list[str]

    @property
    def vocab(self) -> frozenset:
        return frozenset(self.tokens)


@dataclass
class Corpus:
    tokenizer: TokenizerConfig
    documents: dict = field(default_factory=dict)   # doc_id -> Document
    references: dict = field(default_factory=dict)  # doc_id -> Reference
    dropped_sentences: int = 0

    def doc_ids(self) -> list[str]:
        return list(self.documents)

    def __len__(self) -> int:
        return len(self.documents)


def from_records(records, cfg: TokenizerConfig) -> Corpus:
    """Build a Corpus from (line_no, record-dict) pairs.

    Each record needs a non-empty string ``id``, a list of sentence strings,
    and a ``reference`` string. Sentences that tokenize to nothing are
    dropped (counted, warned); a document losing every sentence, a reference
    with no tokens, or a duplicate id is an error.
    """
    corpus = Corpus(tokenizer=cfg)
    for line_no, rec in records:
        where = f"line {line_no}"
        if not isinstance(rec, dict):
            raise CorpusError(f"{where}: record is not an object")
        doc_id = rec.get("id")
        sentences = rec.get("sentences")
        reference = rec.get("reference")
        if not isinstance(doc_id, str) or not doc_id:
            raise CorpusError(f"{where}: missing or empty 'id'")
        if (
            not isinstance(sentences, list)
            or not sentences
            or not all(isinstance(s, str) for s in sentences)
        ):
            raise CorpusError(f"{where}: 'sentences' must be a non-empty list of strings")
        if not isinstance(reference, str):
            raise CorpusError(f"{where}: missing 'reference'")
        if doc_id in corpus.documents:
            raise CorpusError(f"duplicate document id {doc_id!r} ({where})")

        kept_sentences, token_cache = [], []
        for sent in sentences:
            toks = tokenize(sent, cfg)
            if toks:
                kept_sentences.append(sent)
                token_cache.append(toks)
            else:
                corpus.dropped_sentences += 1
        if not kept_sentences:
            raise CorpusError(f"document {doc_id!r} has no sentence with tokens ({where})")

        ref_tokens = tokenize(reference, cfg)
        if not ref_tokens:
            raise CorpusError(f"document {doc_id!r} has an empty reference ({where})")

        corpus.documents[doc_id] = Document(doc_id, kept_sentences, token_cache)
        corpus.references[doc_id] = Reference(doc_id, reference, ref_tokens)

    if not corpus.documents:
        raise CorpusError("corpus is empty")
    if corpus.dropped_sentences:
        logger.warning("dropped %d sentence(s) that tokenized to nothing", corpus.dropped_sentences)
    return corpus


def load_corpus(path, cfg: TokenizerConfig) -> Corpus:
    """Load a JSON Lines corpus file. See module docstring for the format."""
    path = Path(path)

    def records():
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield line_no, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {line_no}: malformed JSON ({exc.msg})") from exc

    return from_records(records(), cfg)

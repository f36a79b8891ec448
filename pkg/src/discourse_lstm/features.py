"""Leaf featurization: lexicon sentiment scores and averaged word embeddings."""

from __future__ import annotations

import logging
import math
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np
from nltk.stem.porter import PorterStemmer

from .tree import DiscourseTree

log = logging.getLogger(__name__)

# NLTK_EXTENSIONS keeps "enjoy" intact (the strict 1980 rules give "enjoi")
_porter = PorterStemmer(mode=PorterStemmer.NLTK_EXTENSIONS)


class FeaturizationError(ValueError):
    pass


def _is_punct(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat.startswith("P") or cat.startswith("S")


def _strip_punct(tok: str) -> str:
    i, j = 0, len(tok)
    while i < j and _is_punct(tok[i]):
        i += 1
    while j > i and _is_punct(tok[j - 1]):
        j -= 1
    return tok[i:j]


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace split, then trim punctuation from both ends of each token."""
    out = []
    for raw in text.split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok.lower() if lowercase else tok)
    return out


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    return _porter.stem(word)


@dataclass(frozen=True)
class Pipeline:
    mode: str = "lexicon"  # "lexicon" | "embedding"
    lowercase: bool = True
    stem: bool = True

    def __post_init__(self):
        if self.mode not in ("lexicon", "embedding"):
            raise ValueError(f"unknown featurization mode {self.mode!r}")

    def keys(self, text: str, stemmed_resource: bool) -> list[str]:
        toks = tokenize(text, self.lowercase)
        if self.stem and stemmed_resource:
            toks = [stem(t) for t in toks]
        return toks


class Lexicon:
    """word -> (pos, neg) with both scores in [0, 1].

    ``stemmed`` marks a lexicon whose keys are Porter stems; token lookups
    are then stemmed too (when the pipeline stems).
    """

    def __init__(self, scores: dict[str, tuple[float, float]], stemmed: bool = False):
        for w, (p, n) in scores.items():
            if not (np.isfinite(p) and np.isfinite(n) and 0.0 <= p <= 1.0 and 0.0 <= n <= 1.0):
                raise ValueError(f"lexicon entry {w!r} has scores outside [0, 1]: {(p, n)}")
        self.scores = dict(scores)
        self.stemmed = stemmed

    def __len__(self) -> int:
        return len(self.scores)

    def net(self, word: str) -> float:
        p, n = self.scores.get(word, (0.0, 0.0))
        return p - n

    @classmethod
    def from_tsv(cls, path: Union[str, Path], stem_keys: bool = False) -> Lexicon:
        """Read ``word<TAB>pos<TAB>neg`` lines; a non-numeric first line is a header.

        With ``stem_keys`` the words are stemmed on load and colliding stems
        get the mean of their scores.
        """
        acc: dict[str, list[tuple[float, float]]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
                try:
                    p, n = float(parts[1]), float(parts[2])
                except ValueError:
                    if lineno == 1:
                        continue
                    raise ValueError(f"{path}:{lineno}: non-numeric score") from None
                w = parts[0].strip()
                if stem_keys:
                    w = stem(w.lower())
                acc.setdefault(w, []).append((p, n))
        scores = {w: (float(np.mean([v[0] for v in vs])), float(np.mean([v[1] for v in vs])))
                  for w, vs in acc.items()}
        return cls(scores, stemmed=stem_keys)


class EmbeddingTable:
    def __init__(self, vectors: dict[str, np.ndarray], dim: int, stemmed: bool = False):
        for w, v in vectors.items():
            if v.shape != (dim,):
                raise ValueError(f"embedding for {w!r} has shape {v.shape}, expected ({dim},)")
        self.vectors = vectors
        self.dim = dim
        self.stemmed = stemmed

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    @classmethod
    def from_text(cls, path: Union[str, Path], stem_keys: bool = False) -> EmbeddingTable:
        """Read the usual ``word v1 ... vd`` text format (GloVe style).

        A leading ``<count> <dim>`` header line (word2vec style) is skipped.
        """
        vectors: dict[str, list[np.ndarray]] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip().split(" ")
                if len(parts) < 2:
                    continue
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    dim = int(parts[1])
                    continue
                vec = np.asarray(parts[1:], dtype=np.float64)
                if dim is None:
                    dim = vec.shape[0]
                elif vec.shape[0] != dim:
                    raise ValueError(f"{path}:{lineno}: dimension {vec.shape[0]} != {dim}")
                w = stem(parts[0].lower()) if stem_keys else parts[0]
                vectors.setdefault(w, []).append(vec)
        if dim is None:
            raise ValueError(f"{path}: no vectors found")
        table = {w: (vs[0] if len(vs) == 1 else np.mean(vs, axis=0)) for w, vs in vectors.items()}
        return cls(table, dim, stemmed=stem_keys)


def sentiment_score(edu_text: str, lexicon: Lexicon, pipeline: Pipeline = Pipeline()) -> np.ndarray:
    """Mean of pos(w) - neg(w) over all tokens; misses count in the denominator."""
    words = pipeline.keys(edu_text, lexicon.stemmed)
    if not words:
        return np.zeros(1)
    # fsum is correctly rounded, so word order cannot change the result
    return np.array([math.fsum(lexicon.net(w) for w in words) / len(words)])


def embed_average(edu_text: str, table: EmbeddingTable, pipeline: Pipeline = Pipeline(mode="embedding")) -> np.ndarray:
    """Mean embedding of in-vocabulary tokens; all-OOV gives the zero vector."""
    hits = [table.vectors[w] for w in pipeline.keys(edu_text, table.stemmed) if w in table.vectors]
    if not hits:
        return np.zeros(table.dim)
    stacked = np.stack(hits)
    return np.array([math.fsum(col) for col in stacked.T]) / len(hits)


Resource = Union[Lexicon, EmbeddingTable]


def featurize_tree(tree: DiscourseTree, pipeline: Pipeline, resource: Resource) -> DiscourseTree:
    """Return a copy of ``tree`` with ``features`` set on every leaf."""
    if pipeline.mode == "lexicon" and not isinstance(resource, Lexicon):
        raise FeaturizationError("lexicon mode needs a Lexicon")
    if pipeline.mode == "embedding" and not isinstance(resource, EmbeddingTable):
        raise FeaturizationError("embedding mode needs an EmbeddingTable")
    out = tree.copy()
    for node in out.nodes.values():
        if node.children:
            continue
        if node.edu_text is None:
            raise FeaturizationError(f"leaf {node.id} in {tree.doc_id!r} has no text")
        if pipeline.mode == "lexicon":
            node.features = sentiment_score(node.edu_text, resource, pipeline)
        else:
            node.features = embed_average(node.edu_text, resource, pipeline)
    return out

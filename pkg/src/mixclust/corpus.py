"""Corpus handling: tokenization, vocabularies, sparse count matrices, folds.

Documents are bags of words.  A corpus is fully described by its sparse
document-by-word count matrix together with the vocabulary that maps word
strings to column ids.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError

__all__ = [
    "Document",
    "Vocabulary",
    "CountMatrix",
    "FoldSplit",
    "KeepMostFrequent",
    "DropMostFrequent",
    "tokenize",
    "build_vocabulary",
    "count_matrix",
    "reduce_vocabulary",
    "restrict_counts",
    "split_folds",
    "read_corpus_tsv",
    "read_corpus_dir",
    "save_counts",
    "load_counts",
    "save_vocabulary",
    "load_vocabulary",
]

# Maximal runs of alphabetic characters; digits, punctuation and symbols
# separate tokens.  \w minus decimal digits minus underscore still admits
# exotic numerics (vulgar fractions, roman numerals), so candidates that are
# not purely alphabetic get split once more on the slow path.
_TOKEN_RE = re.compile(r"[^\W\d_]+")

COUNTS_MAGIC = "MIXCLUST-COUNTS v1"


def _alpha_runs(chunk: str):
    run = []
    for ch in chunk:
        if ch.isalpha():
            run.append(ch)
        elif run:
            yield "".join(run)
            run = []
    if run:
        yield "".join(run)


def tokenize(raw_text: str) -> list[str]:
    """Lowercase `raw_text` and split it into alphabetic tokens."""
    out = []
    for tok in _TOKEN_RE.findall(raw_text.lower()):
        if tok.isalpha():
            out.append(tok)
        else:
            out.extend(_alpha_runs(tok))
    return out


@dataclass
class Document:
    """A tokenized document.  `label` is None for unlabeled corpora.

    Documents whose text yields no tokens are kept (they get a zero count
    column) rather than dropped.
    """

    id: str
    label: str | None
    tokens: list[str]

    @property
    def is_empty(self) -> bool:
        return not self.tokens


@dataclass
class Vocabulary:
    """An ordered set of words; position in `words` is the word id.

    The canonical ordering is by descending total corpus frequency with
    lexicographic tie-breaking, which makes vocabulary reduction by
    frequency rank a simple prefix/suffix operation.
    """

    words: list[str]
    index: dict[str, int] = field(repr=False)

    def __post_init__(self):
        if len(self.words) != len(set(self.words)):
            raise InputError("vocabulary contains duplicate words")
        if self.index != {w: i for i, w in enumerate(self.words)}:
            raise InputError("vocabulary index is not the word -> position map")

    @classmethod
    def from_words(cls, words) -> "Vocabulary":
        words = list(words)
        return cls(words=words, index={w: i for i, w in enumerate(words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word) -> bool:
        return word in self.index


def build_vocabulary(docs: list[Document]) -> Vocabulary:
    """Collect every distinct token of `docs` into a Vocabulary.

    Ordering: descending total frequency, ties broken lexicographically.
    """
    freq = Counter()
    for doc in docs:
        freq.update(doc.tokens)
    if not freq:
        raise InputError("no tokens in any document; cannot build a vocabulary")
    words = sorted(freq, key=lambda w: (-freq[w], w))
    return Vocabulary.from_words(words)


@dataclass
class CountMatrix:
    """Sparse document-by-word occurrence counts.

    `matrix` is CSR with strictly positive integer entries; `dropped_tokens`
    counts tokens discarded because they were missing from the vocabulary.
    """

    matrix: sp.csr_matrix
    dropped_tokens: int = 0
    doc_lengths: np.ndarray = field(init=False, repr=False)
    _csr64: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        if not np.issubdtype(m.dtype, np.integer):
            if m.size and np.any(m.data != np.floor(m.data)):
                raise InputError("count matrix entries must be integers")
            m = m.astype(np.int64)
        else:
            m = m.astype(np.int64)
        m.eliminate_zeros()
        m.sum_duplicates()
        if m.nnz and m.data.min() <= 0:
            raise InputError("count matrix entries must be positive in sparse storage")
        self.matrix = m
        self.doc_lengths = np.asarray(m.sum(axis=1)).ravel().astype(np.int64)

    @property
    def n_docs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_words(self) -> int:
        return self.matrix.shape[1]

    @property
    def total_length(self) -> int:
        return int(self.doc_lengths.sum())

    def doc(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Word ids and counts of document `d`."""
        row = self.matrix.getrow(d)
        return row.indices.astype(np.int64), row.data.astype(np.int64)

    def csr_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR (indptr, indices, data) as int64 arrays, cached; this is the
        layout the compiled sweep kernels consume."""
        if self._csr64 is None:
            m = self.matrix
            self._csr64 = (
                m.indptr.astype(np.int64),
                m.indices.astype(np.int64),
                m.data,
            )
        return self._csr64


def count_matrix(docs: list[Document], vocab: Vocabulary,
                 allow_empty_corpus: bool = False) -> CountMatrix:
    """Count vocabulary words per document.

    Tokens absent from `vocab` are silently dropped; the number of dropped
    tokens is reported on the returned CountMatrix.
    """
    if not docs and not allow_empty_corpus:
        raise InputError("empty document list (pass allow_empty_corpus=True to permit)")
    rows, cols, vals = [], [], []
    dropped = 0
    for d, doc in enumerate(docs):
        counts = Counter(doc.tokens)
        for word, c in counts.items():
            w = vocab.index.get(word)
            if w is None:
                dropped += c
            else:
                rows.append(d)
                cols.append(w)
                vals.append(c)
    m = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(docs), len(vocab)), dtype=np.int64
    )
    return CountMatrix(matrix=m, dropped_tokens=dropped)


@dataclass(frozen=True)
class KeepMostFrequent:
    """Keep the `n` most frequent words."""

    n: int


@dataclass(frozen=True)
class DropMostFrequent:
    """Drop the `n` most frequent words, keeping the rare tail."""

    n: int


def _frequency_order(vocab: Vocabulary, counts: CountMatrix) -> list[int]:
    totals = np.asarray(counts.matrix.sum(axis=0)).ravel()
    return sorted(range(len(vocab)), key=lambda w: (-totals[w], vocab.words[w]))


def reduce_vocabulary(vocab: Vocabulary, counts: CountMatrix,
                      policy: KeepMostFrequent | DropMostFrequent) -> Vocabulary:
    """Select words by frequency rank (computed from `counts`) and re-index."""
    n_w = len(vocab)
    if counts.n_words != n_w:
        raise InputError("counts and vocabulary disagree on vocabulary size")
    order = _frequency_order(vocab, counts)
    if isinstance(policy, KeepMostFrequent):
        if not 0 < policy.n <= n_w:
            raise InputError(f"keep_most_frequent n={policy.n} out of range (1..{n_w})")
        kept = order[: policy.n]
    elif isinstance(policy, DropMostFrequent):
        if not 0 <= policy.n < n_w:
            raise InputError(f"drop_most_frequent n={policy.n} out of range (0..{n_w - 1})")
        kept = order[policy.n:]
    else:
        raise InputError(f"unknown vocabulary policy: {policy!r}")
    # Preserve the canonical frequency ordering among the survivors.
    return Vocabulary.from_words([vocab.words[w] for w in kept])


def restrict_counts(counts: CountMatrix, vocab: Vocabulary,
                    new_vocab: Vocabulary) -> CountMatrix:
    """Project `counts` onto the columns of `new_vocab` (a subset of `vocab`)."""
    try:
        cols = [vocab.index[w] for w in new_vocab.words]
    except KeyError as exc:
        raise InputError(f"word {exc.args[0]!r} not present in the source vocabulary")
    return CountMatrix(matrix=counts.matrix[:, cols], dropped_tokens=counts.dropped_tokens)


@dataclass
class FoldSplit:
    """A balanced random partition of document ids into `k` folds."""

    k: int
    assignments: dict

    def fold(self, i: int) -> list:
        return [doc_id for doc_id, f in self.assignments.items() if f == i]


def split_folds(doc_ids, k: int, seed) -> FoldSplit:
    """Randomly partition `doc_ids` into `k` folds of near-equal size."""
    doc_ids = list(doc_ids)
    if k < 2 or k > len(doc_ids):
        raise InputError(f"fold count k={k} out of range (2..{len(doc_ids)})")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(doc_ids))
    assignments = {doc_ids[int(p)]: i % k for i, p in enumerate(perm)}
    return FoldSplit(k=k, assignments=assignments)


# ---------------------------------------------------------------------------
# corpus readers


def read_corpus_tsv(path) -> list[Document]:
    """Read a corpus file with one `label<TAB>text` document per line.

    An empty label field marks an unlabeled document.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"cannot decode corpus file {path} as UTF-8: {exc}")
    docs = []
    for i, line in enumerate(text.splitlines()):
        if "\t" not in line:
            raise InputError(f"{path}: line {i + 1} has no label<TAB>text separator")
        label, _, body = line.partition("\t")
        docs.append(Document(id=str(i), label=label or None, tokens=tokenize(body)))
    return docs


def read_corpus_dir(path) -> list[Document]:
    """Read a `<label>/<docid>.txt` directory tree."""
    path = Path(path)
    if not path.is_dir():
        raise InputError(f"corpus directory {path} does not exist")
    docs = []
    for label_dir in sorted(p for p in path.iterdir() if p.is_dir()):
        for doc_file in sorted(label_dir.glob("*.txt")):
            try:
                body = doc_file.read_text(encoding="utf-8")
            except UnicodeDecodeError as exc:
                raise InputError(f"cannot decode document {doc_file}: {exc}")
            docs.append(
                Document(
                    id=f"{label_dir.name}/{doc_file.stem}",
                    label=label_dir.name,
                    tokens=tokenize(body),
                )
            )
    return docs


# ---------------------------------------------------------------------------
# persistence


def save_counts(counts: CountMatrix, path) -> None:
    """Write the `MIXCLUST-COUNTS v1` text format, triplets ascending (d, w)."""
    m = counts.matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    lines = [COUNTS_MAGIC, f"{counts.n_docs} {counts.n_words} {counts.total_length}"]
    lines.extend(
        f"{m.row[i]} {m.col[i]} {m.data[i]}" for i in order
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_counts(path) -> CountMatrix:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != COUNTS_MAGIC:
        raise InputError(f"{path}: not a {COUNTS_MAGIC} file")
    try:
        n_d, n_w, total = (int(x) for x in lines[1].split())
        triplets = [tuple(int(x) for x in line.split()) for line in lines[2:] if line]
    except (IndexError, ValueError) as exc:
        raise InputError(f"{path}: malformed counts file: {exc}")
    rows = [t[0] for t in triplets]
    cols = [t[1] for t in triplets]
    vals = [t[2] for t in triplets]
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n_d, n_w), dtype=np.int64)
    cm = CountMatrix(matrix=m)
    if cm.total_length != total:
        raise InputError(f"{path}: header total_length {total} != sum of counts {cm.total_length}")
    return cm


def save_vocabulary(vocab: Vocabulary, path) -> None:
    """One word per line; line number is the word id."""
    Path(path).write_text("\n".join(vocab.words) + "\n", encoding="utf-8")


def load_vocabulary(path) -> Vocabulary:
    words = Path(path).read_text(encoding="utf-8").splitlines()
    return Vocabulary.from_words(words)

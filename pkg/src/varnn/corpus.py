"""CoNLL-style IOB corpora: parsing, vocabularies, splits and chunk scoring."""

import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import make_rng

UNK = "<unk>"
OUTSIDE = "O"

_LABEL_RE = re.compile(r"^([BI])-(.+)$")


class CorpusError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class LabelFormatError(ValueError):
    pass


class Sequence(NamedTuple):
    tokens: np.ndarray
    labels: np.ndarray


def parse_conll(text):
    """Parse ``word<whitespace>label`` lines; blank lines separate sentences.

    Returns a list of sentences, each a list of ``(word, label)`` pairs.
    """
    sentences = []
    current = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            if current:
                sentences.append(current)
                current = []
            continue
        if len(fields) != 2:
            raise CorpusError(f"line {lineno}: expected 'word label', got {len(fields)} field(s)")
        current.append((fields[0], fields[1]))
    if current:
        sentences.append(current)
    if not sentences:
        raise CorpusError("empty corpus")
    return sentences


def read_conll(path):
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh.read())


def format_conll(sentences):
    return "".join("".join(f"{w}\t{l}\n" for w, l in s) + "\n" for s in sentences)


@dataclass
class Vocabulary:
    words: list   # index -> word; index 0 is <unk>
    labels: list  # index -> label
    lowercase: bool = False

    def __post_init__(self):
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.label_index = {l: i for i, l in enumerate(self.labels)}

    def encode_words(self, words):
        if self.lowercase:
            words = [w.lower() for w in words]
        return np.array([self.word_index.get(w, 0) for w in words], dtype=np.int64)

    def encode_labels(self, labels):
        try:
            return np.array([self.label_index[l] for l in labels], dtype=np.int64)
        except KeyError as e:
            raise CorpusError(f"label {e.args[0]!r} not in vocabulary") from None

    def encode(self, sentence):
        words, labels = zip(*sentence)
        return Sequence(self.encode_words(words), self.encode_labels(labels))

    def decode_words(self, tokens):
        return [self.words[i] for i in tokens]

    def decode_labels(self, indices):
        return [self.labels[i] for i in indices]


def build_vocab(corpus, min_count=1, lowercase=False):
    """Index words seen at least ``min_count`` times, in first-seen order.

    Labels are indexed in first-seen order too, starting with ``O`` so the
    outside label is always index 0.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = {}
    labels = {OUTSIDE: None}
    for sentence in corpus:
        for w, l in sentence:
            if lowercase:
                w = w.lower()
            counts[w] = counts.get(w, 0) + 1
            labels.setdefault(l, None)
    words = [UNK] + [w for w, c in counts.items() if c >= min_count and w != UNK]
    return Vocabulary(words, list(labels), lowercase)


def split_train_val(corpus, fraction=0.8, seed=0):
    """Seeded shuffle, then the first floor(n * fraction) sentences train."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    n = len(corpus)
    if n < 2:
        raise CorpusError(f"need at least 2 sentences to split, got {n}")
    order = make_rng(seed).permutation(n)
    k = int(np.floor(n * fraction))
    return [corpus[i] for i in order[:k]], [corpus[i] for i in order[k:]]


class Chunk(NamedTuple):
    type: str
    start: int
    end: int  # inclusive


def parse_label(label):
    if label == OUTSIDE:
        return OUTSIDE, ""
    m = _LABEL_RE.match(label)
    if m is None:
        raise LabelFormatError(f"not an IOB label: {label!r}")
    return m.group(1), m.group(2)


def extract_chunks(labels):
    """Chunks from an IOB label sequence (0-based, inclusive spans).

    An ``I-X`` that does not continue a chunk of type X opens a new one.
    """
    chunks = set()
    cur_type, cur_start = None, None
    for i, label in enumerate(labels):
        tag, typ = parse_label(label)
        if tag == "I" and cur_type == typ:
            continue
        if cur_type is not None:
            chunks.add(Chunk(cur_type, cur_start, i - 1))
            cur_type = None
        if tag in ("B", "I"):
            cur_type, cur_start = typ, i
    if cur_type is not None:
        chunks.add(Chunk(cur_type, cur_start, len(labels) - 1))
    return chunks


def render_chunks(chunks, length):
    labels = [OUTSIDE] * length
    for c in chunks:
        labels[c.start] = f"B-{c.type}"
        for j in range(c.start + 1, c.end + 1):
            labels[j] = f"I-{c.type}"
    return labels


@dataclass
class EvalReport:
    true_positives: int
    predicted_count: int
    gold_count: int
    precision: float
    recall: float
    f_measure: float
    token_accuracy: float

    def line(self):
        return (f"{self.precision:.4f}\t{self.recall:.4f}\t"
                f"{self.f_measure:.4f}\t{self.token_accuracy:.4f}")


def _ratio(a, b):
    return a / b if b else 0.0


def score(gold, predicted):
    """Exact-match chunk precision/recall/F over aligned label sequences."""
    if len(gold) != len(predicted):
        raise AlignmentError(f"{len(gold)} gold sentences vs {len(predicted)} predicted")
    tp = n_pred = n_gold = 0
    correct_tokens = total_tokens = 0
    for k, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise AlignmentError(f"sentence {k}: {len(g)} gold labels vs {len(p)} predicted")
        gc, pc = extract_chunks(g), extract_chunks(p)
        tp += len(gc & pc)
        n_gold += len(gc)
        n_pred += len(pc)
        correct_tokens += sum(a == b for a, b in zip(g, p))
        total_tokens += len(g)
    precision = _ratio(tp, n_pred)
    recall = _ratio(tp, n_gold)
    f = _ratio(2 * precision * recall, precision + recall)
    return EvalReport(tp, n_pred, n_gold, precision, recall, f,
                      _ratio(correct_tokens, total_tokens))

"""Character tokenizer, dataset readers and the vendored fixtures."""
from dataclasses import dataclass
import logging
import os

import torch

from .exceptions import InputDomainError


logger = logging.getLogger(__name__)

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "fixtures")
SENTIMENT_FIXTURE = os.path.join(FIXTURE_DIR, "sentiment.tsv")
CORPUS_FIXTURE = os.path.join(FIXTURE_DIR, "fables.txt")

UNKNOWN_ID = 0
UNKNOWN_SYMBOL = "\ufffd"


class Vocab:
    """Character vocabulary. Id 0 is reserved for characters it has not
    seen.

    :param stoi: Mapping from character to id.
    :type stoi: dict

    """

    def __init__(self, stoi):
        self.stoi = dict(stoi)
        self.itos = {i: s for s, i in self.stoi.items()}
        if len(self.itos) != len(self.stoi):
            raise InputDomainError("Vocabulary ids must be unique")

    @classmethod
    def from_text(cls, text):
        symbols = [UNKNOWN_SYMBOL] + sorted(set(text) - {UNKNOWN_SYMBOL})
        return cls({s: i for i, s in enumerate(symbols)})

    @classmethod
    def from_symbols(cls, symbols):
        return cls({s: i for i, s in enumerate(symbols)})

    def symbols(self):
        return [self.itos[i] for i in sorted(self.itos)]

    def __len__(self):
        return len(self.stoi)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.stoi == other.stoi


def tokenize(text, vocab):
    return [vocab.stoi.get(ch, UNKNOWN_ID) for ch in text]


def detokenize(ids, vocab):
    try:
        return "".join(vocab.itos[int(i)] for i in ids)
    except KeyError as e:
        raise InputDomainError(f"Token id {e} is not in the vocabulary")


@dataclass
class ClassificationSet:
    """Labelled token sequences."""

    sequences: list
    labels: list

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        return ClassificationSet(
            [self.sequences[i] for i in indices],
            [self.labels[i] for i in indices],
        )

    def batches(self, batch_size):
        for start in range(0, len(self), batch_size):
            stop = start + batch_size
            yield pad_batch(self.sequences[start:stop]), torch.tensor(
                self.labels[start:stop], dtype=torch.long
            )


def pad_batch(sequences):
    """Right-pad with the unknown id; returns ``(tokens, lengths)``."""
    lengths = [len(s) for s in sequences]
    tokens = torch.full(
        (len(sequences), max(lengths)), UNKNOWN_ID, dtype=torch.long
    )
    for row, seq in enumerate(sequences):
        tokens[row, : len(seq)] = torch.as_tensor(seq, dtype=torch.long)
    return tokens, torch.tensor(lengths, dtype=torch.long)


def read_text(path):
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except FileNotFoundError:
        raise InputDomainError(f"Dataset {path} does not exist")


def parse_classification(text):
    """Parse ``text<TAB>label`` lines into ``[(text, label)]``."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            sentence, label = line.rsplit("\t", 1)
            rows.append((sentence, int(label)))
        except ValueError:
            raise InputDomainError(
                f"Line {lineno}: expected text<TAB>integer-label"
            )
    if not rows:
        raise InputDomainError("Classification dataset is empty")
    return rows


def load_classification(path, vocab=None, context_len=None):
    """Read a classification file.

    :returns: ``(ClassificationSet, Vocab)``; the vocabulary is built from
              the file when not given.

    """
    rows = parse_classification(read_text(path))
    if vocab is None:
        vocab = Vocab.from_text("".join(sentence for sentence, _ in rows))

    sequences = []
    for sentence, _ in rows:
        ids = tokenize(sentence, vocab)
        if not ids:
            raise InputDomainError("Classification example is empty")
        if context_len is not None and len(ids) > context_len:
            logger.warning(
                "Truncating a %d-character example to %d",
                len(ids),
                context_len,
            )
            ids = ids[:context_len]
        sequences.append(ids)
    return ClassificationSet(sequences, [label for _, label in rows]), vocab


def load_corpus(path, vocab=None):
    """Read raw text as one token sequence; returns ``(ids, Vocab)``."""
    text = read_text(path)
    if vocab is None:
        vocab = Vocab.from_text(text)
    ids = torch.tensor(tokenize(text, vocab), dtype=torch.long)
    if ids.numel() < 2:
        raise InputDomainError("A corpus needs at least two tokens")
    return ids, vocab


def split_classification(dataset, holdout_fraction, seed):
    """Deterministic shuffled split into ``(train, held_out)``."""
    generator = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(dataset), generator=generator).tolist()
    n_held = max(1, int(round(len(dataset) * holdout_fraction)))
    return dataset.subset(order[n_held:]), dataset.subset(order[:n_held])


def split_corpus(ids, holdout_fraction):
    """The tail of the corpus is held out."""
    n_held = max(2, int(round(len(ids) * holdout_fraction)))
    return ids[:-n_held], ids[-n_held:]

"""Synthetic multimodal triplet generation, deterministic sharding into
disjoint client datasets, and answer-bank construction.

Each class c has a fixed image prototype and a question template; a triplet
is (prototype + noise, templated question with one random filler word,
answer string "ans<c>").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .components import DimConfig, Vocab, tokenize
from .exceptions import DataError

_FILLERS = ["really", "exactly", "probably", "actually",
            "simply", "mostly", "quite", "rather"]


@dataclass
class Triplet:
    x_i: np.ndarray           # (V,)
    x_q: np.ndarray           # (Q,) token indices
    answer: str
    class_id: int


@dataclass
class Shard:
    client_id: int
    triplets: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.triplets)


@dataclass
class Dataset:
    triplets: list
    answers: list             # the C distinct answer strings, index = class id
    vocab: Vocab
    dims: DimConfig


def synth_generate(seed: int, n: int, C: int, dims: DimConfig,
                   noise: float = 0.1) -> Dataset:
    """Deterministic synthetic dataset of n triplets over C classes."""
    if n < 1:
        raise DataError("need n >= 1 samples")
    vocab = Vocab(dims.vocab_size)
    answers = [f"ans{c}" for c in range(C)]
    for w in ["what", "is", "object", "kind"] + _FILLERS:
        vocab.add(w)
    for c in range(C):
        vocab.add(f"thing{c}")
        vocab.add(answers[c])
    if len(vocab) > dims.vocab_size:
        raise DataError(f"C={C} needs vocab_size >= {len(vocab)}")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA7A]))
    prototypes = rng.uniform(-1.0, 1.0, size=(C, dims.V))
    triplets = []
    for _ in range(n):
        c = int(rng.integers(C))
        x_i = prototypes[c] + noise * rng.standard_normal(dims.V)
        filler = _FILLERS[int(rng.integers(len(_FILLERS)))]
        question = f"what kind is {filler} thing{c}"
        x_q = tokenize(question, dims.Q, vocab)
        triplets.append(Triplet(x_i=x_i, x_q=x_q, answer=answers[c], class_id=c))
    return Dataset(triplets=triplets, answers=answers, vocab=vocab, dims=dims)


def shard_dataset(dataset: Dataset, K: int, seed: int,
                  label_skew: bool = False) -> list[Shard]:
    """Random permutation then contiguous near-equal split (sizes differ <= 1).

    With label_skew=True the permuted samples are stable-sorted by class id
    first, so each shard covers a contiguous band of classes (non-IID split
    for sensitivity experiments; the IID split is the default).
    """
    n = len(dataset.triplets)
    if K < 1:
        raise DataError("need K >= 1")
    if K > n:
        raise DataError(f"cannot split {n} samples into {K} shards")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5AAD]))
    perm = rng.permutation(n)
    if label_skew:
        classes = np.array([dataset.triplets[i].class_id for i in perm])
        perm = perm[np.argsort(classes, kind="stable")]
    base, extra = divmod(n, K)
    shards, off = [], 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        idxs = perm[off:off + size]
        off += size
        shards.append(Shard(client_id=k, triplets=[dataset.triplets[i] for i in idxs]))
    return shards


def batch_arrays(triplets, answer_index: dict):
    """Stack a list of triplets into (x_i, x_q, answer token matrix is not
    needed here) plus class targets; answer tokenization happens per model."""
    x_i = np.stack([t.x_i for t in triplets])
    x_q = np.stack([t.x_q for t in triplets])
    classes = np.array([answer_index[t.answer] for t in triplets], dtype=np.int64)
    return x_i, x_q, classes


def answer_token_matrix(answers, dims: DimConfig, vocab: Vocab) -> np.ndarray:
    return np.stack([tokenize(a, dims.A, vocab) for a in answers])


# line format: class_id;answer;space-separated token indices;comma-separated reals
def export_dataset(dataset: Dataset, path):
    with open(path, "w") as fh:
        for t in dataset.triplets:
            q = " ".join(str(int(i)) for i in t.x_q)
            v = ",".join(repr(float(x)) for x in t.x_i)
            fh.write(f"{t.class_id};{t.answer};{q};{v}\n")


def import_triplets(path) -> list[Triplet]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cid, answer, q, v = line.split(";")
            out.append(Triplet(
                x_i=np.array([float(x) for x in v.split(",")]),
                x_q=np.array([int(x) for x in q.split()], dtype=np.int64),
                answer=answer,
                class_id=int(cid),
            ))
    return out

"""Similarity-based prediction, validation accuracy, similarity-matrix
diagnostics, and a paired two-tailed t statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import DimConfig, Vocab
from .data import answer_token_matrix, batch_arrays
from .exceptions import DataError, DegenerateInputError, ShapeError


@dataclass
class AnswerBank:
    """Cached tail representations of the C candidate answers."""

    answers: list
    reps: np.ndarray          # (C, S)
    version: int = 0

    def __post_init__(self):
        if len(self.answers) < 2:
            raise DataError("answer bank needs C >= 2 options")
        if self.reps.shape[0] != len(self.answers):
            raise ShapeError("bank rep count != answer count")


def build_answer_bank(answers, dims: DimConfig, vocab: Vocab, apn, lta,
                      version: int = 0) -> AnswerBank:
    if not answers:
        raise DataError("empty answer list")
    tokens = answer_token_matrix(answers, dims, vocab)
    v_apn, _ = apn.forward(tokens)
    reps, _ = lta.forward(v_apn)
    return AnswerBank(answers=list(answers), reps=reps, version=version)


def predict_answer(v_head: np.ndarray, bank: AnswerBank) -> int:
    """argmax over dot-product similarity; ties break to the lowest index."""
    v_head = np.asarray(v_head, dtype=np.float64).reshape(-1)
    scores = bank.reps @ v_head
    return int(np.argmax(scores))


def val_accuracy(vqa, nha, validation, bank: AnswerBank) -> float:
    """Fraction of exact answer matches; head adapter runs in eval mode."""
    answer_index = {a: i for i, a in enumerate(bank.answers)}
    for t in validation:
        if t.answer not in answer_index:
            raise DataError(f"validation answer {t.answer!r} not in bank")
    x_i, x_q, targets = batch_arrays(validation, answer_index)
    v_vqa, _ = vqa.forward(x_i, x_q)
    v_head, _ = nha.forward(v_vqa, train=False)
    preds = np.argmax(v_head @ bank.reps.T, axis=1)
    return float((preds == targets).mean())


def similarity_matrix(v_head: np.ndarray, v_tail: np.ndarray):
    """M[i, j] = v_head[i] . v_tail[j], plus diagonal/off-diagonal means."""
    v_head = np.asarray(v_head, dtype=np.float64)
    v_tail = np.asarray(v_tail, dtype=np.float64)
    if v_head.shape != v_tail.shape:
        raise ShapeError("similarity inputs must have equal shapes")
    M = v_head @ v_tail.T
    B = M.shape[0]
    diag = np.trace(M) / B
    off = (M.sum() - np.trace(M)) / (B * (B - 1)) if B > 1 else 0.0
    return M, {"mean_diag": float(diag), "mean_offdiag": float(off)}


def paired_t_test(a, b):
    """Paired two-tailed t statistic: t = mean(d) / (sd(d)/sqrt(n)), df = n-1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise DataError("need two equal-length vectors with n >= 2")
    d = a - b
    n = d.size
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateInputError("zero variance of paired differences")
    t = float(d.mean() / (sd / np.sqrt(n)))
    return {"t": t, "df": n - 1}

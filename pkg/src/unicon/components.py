"""The four model components at configurable desk-scale dimensions:

* a toy VQA fusion backbone (image + question -> fused representation),
* the answer projection network (tokenize -> embed -> linear+ReLU -> max-pool),
* the nonlinear head adapter (linear -> ReLU -> linear -> batch norm),
* the linear tail adapter (single linear map),

each with explicit forward/backward, plus tokenization, vocab, and the flat
binary checkpoint format for parameter sets.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .exceptions import DataError, ShapeError
from .numerics import ParamSet

PAD_IDX = 0
UNK_IDX = 1


@dataclass
class DimConfig:
    """All component dimensions in one place.

    Defaults are desk scale; the full-scale values (E_dim=300, P=512, S=256)
    are reachable by overriding fields.
    """

    V: int = 16           # image vector dim
    Q: int = 8            # max question tokens
    A: int = 8            # max answer tokens
    E_dim: int = 16       # word embedding dim
    P: int = 32           # answer-projection output dim
    H: int = 32           # backbone output dim (must be even)
    S: int = 16           # shared projection dim
    vocab_size: int = 64

    def __post_init__(self):
        for f in ("V", "Q", "A", "E_dim", "P", "H", "S", "vocab_size"):
            if getattr(self, f) < 1:
                raise ValueError(f"DimConfig.{f} must be >= 1")
        if self.H % 2 != 0:
            raise ValueError("DimConfig.H must be even (two fused half-branches)")


class Vocab:
    """token -> index map; 0 is padding, 1 is the unknown token."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._index = {}

    def add(self, token: str) -> int:
        if token in self._index:
            return self._index[token]
        idx = 2 + len(self._index)
        if idx >= self.capacity:
            raise DataError(f"vocab capacity {self.capacity} exhausted")
        self._index[token] = idx
        return idx

    def lookup(self, token: str) -> int:
        return self._index.get(token, UNK_IDX)

    def __len__(self):
        return 2 + len(self._index)


_TOKEN_CLEAN = re.compile(r"[^a-z0-9]+")


def tokenize(text: str, max_tokens: int, vocab: Vocab) -> np.ndarray:
    """Lowercase, strip non-alphanumerics, split, truncate/pad to max_tokens."""
    words = _TOKEN_CLEAN.sub(" ", text.lower()).split()
    idxs = [vocab.lookup(w) for w in words[:max_tokens]]
    idxs += [PAD_IDX] * (max_tokens - len(idxs))
    return np.array(idxs, dtype=np.int64)


# ---------------------------------------------------------------------------
# initialization helpers


def _linear(ps: ParamSet, name: str, fan_in: int, fan_out: int, rng):
    bound = np.sqrt(1.0 / fan_in)
    ps.add(f"{name}.W", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    ps.add(f"{name}.b", np.zeros((1, fan_out)))


def _embedding(ps: ParamSet, name: str, vocab_size: int, dim: int, rng):
    table = rng.uniform(-0.1, 0.1, size=(vocab_size, dim))
    table[PAD_IDX] = 0.0  # pad row stays zero; its gradient is never written
    ps.add(name, table)


# ---------------------------------------------------------------------------
# answer projection network


class ApnModel:
    """embed A tokens -> per-token linear+ReLU -> max-pool over tokens."""

    def __init__(self, dims: DimConfig, rng, mask_pad_in_pool: bool = False):
        self.dims = dims
        self.mask_pad_in_pool = mask_pad_in_pool
        ps = ParamSet()
        _embedding(ps, "embed", dims.vocab_size, dims.E_dim, rng)
        _linear(ps, "proj", dims.E_dim, dims.P, rng)
        self.params = ps

    def forward(self, answers: np.ndarray):
        d = self.dims
        answers = np.asarray(answers, dtype=np.int64)
        if answers.ndim != 2 or answers.shape[1] != d.A:
            raise ShapeError(f"answers must be B x {d.A}, got {answers.shape}")
        if answers.max(initial=0) >= d.vocab_size:
            raise DataError("token index out of vocab range")
        B = answers.shape[0]
        emb = self.params["embed"].value[answers.reshape(-1)]        # (B*A, E)
        z, mm_cache = nm.matmul_bias(emb, self.params["proj.W"].value,
                                     self.params["proj.b"].value.reshape(-1))
        act, relu_cache = nm.relu(z)                                 # (B*A, P)
        act3 = act.reshape(B, d.A, d.P)
        if self.mask_pad_in_pool:
            pad = (answers == PAD_IDX)
            # keep at least the first token so the pool is never empty
            pad[:, 0] = False
            act3 = np.where(pad[:, :, None], -np.inf, act3)
        idx = np.argmax(act3, axis=1)                                # (B, P)
        out = np.take_along_axis(act3, idx[:, None, :], axis=1)[:, 0, :]
        return out, (answers, mm_cache, relu_cache, idx, B)

    def backward(self, cache, d_out):
        d = self.dims
        answers, mm_cache, relu_cache, idx, B = cache
        d_act3 = np.zeros((B, d.A, d.P))
        np.put_along_axis(d_act3, idx[:, None, :], d_out[:, None, :], axis=1)
        d_act = d_act3.reshape(B * d.A, d.P)
        d_z = nm.relu_backward(relu_cache, d_act)
        d_emb, d_W, d_b = nm.matmul_bias_backward(mm_cache, d_z)
        self.params["proj.W"].grad += d_W
        self.params["proj.b"].grad += d_b.reshape(1, -1)
        flat = answers.reshape(-1)
        live = flat != PAD_IDX
        np.add.at(self.params["embed"].grad, flat[live], d_emb[live])


# ---------------------------------------------------------------------------
# toy VQA backbone


class ToyVqaModel:
    """Image linear+ReLU and mean-pooled question embedding linear+ReLU,
    concatenated and fused with one more linear+ReLU."""

    def __init__(self, dims: DimConfig, rng):
        self.dims = dims
        half = dims.H // 2
        ps = ParamSet()
        _embedding(ps, "embed", dims.vocab_size, dims.E_dim, rng)
        _linear(ps, "img", dims.V, half, rng)
        _linear(ps, "qst", dims.E_dim, half, rng)
        _linear(ps, "fuse", dims.H, dims.H, rng)
        self.params = ps

    def forward(self, x_i: np.ndarray, x_q: np.ndarray):
        d = self.dims
        x_i = nm.as_matrix(x_i)
        x_q = np.asarray(x_q, dtype=np.int64)
        if x_i.shape[1] != d.V or x_q.shape != (x_i.shape[0], d.Q):
            raise ShapeError(
                f"bad input shapes {x_i.shape} / {x_q.shape} for dims V={d.V} Q={d.Q}")
        B = x_i.shape[0]

        zi, img_mm = nm.matmul_bias(x_i, self.params["img.W"].value,
                                    self.params["img.b"].value.reshape(-1))
        ai, img_relu = nm.relu(zi)

        emb = self.params["embed"].value[x_q.reshape(-1)].reshape(B, d.Q, d.E_dim)
        live = (x_q != PAD_IDX).astype(np.float64)                   # (B, Q)
        counts = live.sum(axis=1)
        inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
        pooled = (emb * live[:, :, None]).sum(axis=1) * inv[:, None]  # (B, E)
        zq, qst_mm = nm.matmul_bias(pooled, self.params["qst.W"].value,
                                    self.params["qst.b"].value.reshape(-1))
        aq, qst_relu = nm.relu(zq)

        cat = np.concatenate([ai, aq], axis=1)
        zf, fuse_mm = nm.matmul_bias(cat, self.params["fuse.W"].value,
                                     self.params["fuse.b"].value.reshape(-1))
        out, fuse_relu = nm.relu(zf)
        cache = (x_q, live, inv, img_mm, img_relu, qst_mm, qst_relu,
                 fuse_mm, fuse_relu)
        return out, cache

    def backward(self, cache, d_out):
        d = self.dims
        (x_q, live, inv, img_mm, img_relu, qst_mm, qst_relu,
         fuse_mm, fuse_relu) = cache
        half = d.H // 2

        d_zf = nm.relu_backward(fuse_relu, d_out)
        d_cat, d_Wf, d_bf = nm.matmul_bias_backward(fuse_mm, d_zf)
        self.params["fuse.W"].grad += d_Wf
        self.params["fuse.b"].grad += d_bf.reshape(1, -1)

        d_ai, d_aq = d_cat[:, :half], d_cat[:, half:]

        d_zi = nm.relu_backward(img_relu, d_ai)
        _, d_Wi, d_bi = nm.matmul_bias_backward(img_mm, d_zi)
        self.params["img.W"].grad += d_Wi
        self.params["img.b"].grad += d_bi.reshape(1, -1)

        d_zq = nm.relu_backward(qst_relu, d_aq)
        d_pooled, d_Wq, d_bq = nm.matmul_bias_backward(qst_mm, d_zq)
        self.params["qst.W"].grad += d_Wq
        self.params["qst.b"].grad += d_bq.reshape(1, -1)

        d_emb = d_pooled[:, None, :] * (live * inv[:, None])[:, :, None]
        flat = x_q.reshape(-1)
        keep = flat != PAD_IDX
        np.add.at(self.params["embed"].grad, flat[keep],
                  d_emb.reshape(-1, d.E_dim)[keep])


# ---------------------------------------------------------------------------
# adapters


class NhaModel:
    """Two-layer head: linear -> ReLU -> linear -> batch norm, into dim S."""

    def __init__(self, dims: DimConfig, rng):
        self.dims = dims
        hidden = dims.P  # paper-scale head hidden width tracks the projection dim
        ps = ParamSet()
        _linear(ps, "fc1", dims.H, hidden, rng)
        _linear(ps, "fc2", hidden, dims.S, rng)
        ps.add("bn.gamma", np.ones((1, dims.S)))
        ps.add("bn.beta", np.zeros((1, dims.S)))
        ps.add("bn.running_mean", np.zeros((1, dims.S)), trainable=False)
        ps.add("bn.running_var", np.ones((1, dims.S)), trainable=False)
        self.params = ps

    def forward(self, v_in: np.ndarray, train: bool):
        v_in = nm.as_matrix(v_in)
        if v_in.shape[1] != self.dims.H:
            raise ShapeError(f"head adapter expects B x {self.dims.H}, got {v_in.shape}")
        z1, mm1 = nm.matmul_bias(v_in, self.params["fc1.W"].value,
                                 self.params["fc1.b"].value.reshape(-1))
        a1, rl = nm.relu(z1)
        z2, mm2 = nm.matmul_bias(a1, self.params["fc2.W"].value,
                                 self.params["fc2.b"].value.reshape(-1))
        out, bn = nm.batchnorm1d(
            z2,
            self.params["bn.gamma"].value.reshape(-1),
            self.params["bn.beta"].value.reshape(-1),
            self.params["bn.running_mean"].value.reshape(-1),
            self.params["bn.running_var"].value.reshape(-1),
            train=train,
        )
        return out, (mm1, rl, mm2, bn)

    def backward(self, cache, d_out):
        mm1, rl, mm2, bn = cache
        d_z2, d_gamma, d_beta = nm.batchnorm1d_backward(bn, d_out)
        self.params["bn.gamma"].grad += d_gamma.reshape(1, -1)
        self.params["bn.beta"].grad += d_beta.reshape(1, -1)
        d_a1, d_W2, d_b2 = nm.matmul_bias_backward(mm2, d_z2)
        self.params["fc2.W"].grad += d_W2
        self.params["fc2.b"].grad += d_b2.reshape(1, -1)
        d_z1 = nm.relu_backward(rl, d_a1)
        d_in, d_W1, d_b1 = nm.matmul_bias_backward(mm1, d_z1)
        self.params["fc1.W"].grad += d_W1
        self.params["fc1.b"].grad += d_b1.reshape(1, -1)
        return d_in


class LtaModel:
    """Single linear map from the answer-projection space into dim S."""

    def __init__(self, dims: DimConfig, rng):
        self.dims = dims
        ps = ParamSet()
        _linear(ps, "fc", dims.P, dims.S, rng)
        self.params = ps

    def forward(self, v_in: np.ndarray):
        v_in = nm.as_matrix(v_in)
        if v_in.shape[1] != self.dims.P:
            raise ShapeError(f"tail adapter expects B x {self.dims.P}, got {v_in.shape}")
        out, mm = nm.matmul_bias(v_in, self.params["fc.W"].value,
                                 self.params["fc.b"].value.reshape(-1))
        return out, mm

    def backward(self, cache, d_out):
        d_in, d_W, d_b = nm.matmul_bias_backward(cache, d_out)
        self.params["fc.W"].grad += d_W
        self.params["fc.b"].grad += d_b.reshape(1, -1)
        return d_in


# ---------------------------------------------------------------------------
# checkpoint format: per entry u32 name-length, name, u32 rows, u32 cols,
# little-endian f64 payload


def paramset_to_bytes(ps: ParamSet) -> bytes:
    chunks = []
    for name, p in ps:
        raw = name.encode("utf-8")
        val = np.atleast_2d(p.value)
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<II", val.shape[0], val.shape[1]))
        chunks.append(val.astype("<f8").tobytes())
    return b"".join(chunks)


def paramset_from_bytes(buf: bytes) -> ParamSet:
    ps = ParamSet()
    off = 0
    while off < len(buf):
        (nlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        rows, cols = struct.unpack_from("<II", buf, off)
        off += 8
        n = rows * cols * 8
        val = np.frombuffer(buf[off:off + n], dtype="<f8").reshape(rows, cols).copy()
        off += n
        ps.add(name, val)
    return ps


def save_paramset(ps: ParamSet, path):
    with open(path, "wb") as fh:
        fh.write(paramset_to_bytes(ps))


def load_paramset(path) -> ParamSet:
    with open(path, "rb") as fh:
        return paramset_from_bytes(fh.read())

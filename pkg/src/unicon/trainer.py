"""Centralized (no-protocol) reference trainers.

These run the exact same forward/backward/optimizer sequence as a single
client plus the server, without any transport, and serve as the equivalence
oracle for the distributed protocols."""

from __future__ import annotations

import numpy as np

from .components import ApnModel, DimConfig, LtaModel, NhaModel, ToyVqaModel
from .data import answer_token_matrix
from .losses import InfoNceConfig, info_nce, softmax_nll
from .numerics import LrSchedule, ParamSetOptimizer, lr_at
from .protocol import LinearHead, MlpGlobal, epoch_batches


class CentralizedContrastiveTrainer:
    """All four components in one process, trained jointly."""

    def __init__(self, dims: DimConfig, shard, vocab, answers,
                 client_rng, server_rng, nce_cfg: InfoNceConfig,
                 schedule: LrSchedule, adam_kw=None):
        kw = adam_kw or {}
        self.dims = dims
        self.shard = shard
        self.vocab = vocab
        self.answers = answers
        self.nce_cfg = nce_cfg
        self.vqa = ToyVqaModel(dims, client_rng)
        self.apn = ApnModel(dims, client_rng)
        self.nha = NhaModel(dims, server_rng)
        self.lta = LtaModel(dims, server_rng)
        self.opts = [ParamSetOptimizer(m.params, **kw)
                     for m in (self.vqa, self.apn, self.nha, self.lta)]
        self.schedule = schedule
        self.step = 0
        self.last_sim = None

    def train_batch(self, triplets) -> float:
        x_i = np.stack([t.x_i for t in triplets])
        x_q = np.stack([t.x_q for t in triplets])
        y_tok = answer_token_matrix([t.answer for t in triplets],
                                    self.dims, self.vocab)
        v_vqa, vqa_cache = self.vqa.forward(x_i, x_q)
        v_apn, apn_cache = self.apn.forward(y_tok)
        v_head, nha_cache = self.nha.forward(v_vqa, train=True)
        v_tail, lta_cache = self.lta.forward(v_apn)
        loss, d_head, d_tail = info_nce(v_head, v_tail, self.nce_cfg)
        self.last_sim = (v_head, v_tail)
        for m in (self.vqa, self.apn, self.nha, self.lta):
            m.params.zero_grad()
        d_v_vqa = self.nha.backward(nha_cache, d_head)
        d_v_apn = self.lta.backward(lta_cache, d_tail)
        self.vqa.backward(vqa_cache, d_v_vqa)
        self.apn.backward(apn_cache, d_v_apn)
        lr = lr_at(self.schedule, self.step)
        for opt in self.opts:
            opt.step(lr)
        self.step += 1
        return loss

    def train_round(self, t: int, E: int, batch_size: int, seed: int):
        losses = []
        for e in range(E):
            for idxs in epoch_batches(self.shard.n, batch_size, seed, 0, t, e):
                losses.append(self.train_batch(
                    [self.shard.triplets[i] for i in idxs]))
        return float(np.mean(losses)) if losses else float("nan")


class CentralizedSupervisedTrainer:
    """Head backbone + middle MLP + linear classifier, trained jointly."""

    def __init__(self, dims: DimConfig, n_classes: int, shard, vocab, answers,
                 client_rng, server_rng, schedule: LrSchedule, adam_kw=None):
        kw = adam_kw or {}
        self.dims = dims
        self.shard = shard
        self.answer_index = {a: i for i, a in enumerate(answers)}
        self.head = ToyVqaModel(dims, client_rng)
        self.tail = LinearHead(dims, n_classes, client_rng)
        self.mid = MlpGlobal(dims, server_rng)
        self.opt_head = ParamSetOptimizer(self.head.params, **kw)
        self.opt_tail = ParamSetOptimizer(self.tail.params, **kw)
        self.opt_mid = ParamSetOptimizer(self.mid.params, **kw)
        self.schedule = schedule
        self.step = 0

    def train_batch(self, triplets) -> float:
        x_i = np.stack([t.x_i for t in triplets])
        x_q = np.stack([t.x_q for t in triplets])
        targets = np.array([self.answer_index[t.answer] for t in triplets],
                           dtype=np.int64)
        lr = lr_at(self.schedule, self.step)
        v, head_cache = self.head.forward(x_i, x_q)
        v_g, mid_cache = self.mid.forward(v)
        logits, tail_cache = self.tail.forward(v_g)
        loss, d_logits = softmax_nll(logits, targets)
        # mirror the split protocol's update order: tail first, then middle,
        # then head, each with the same learning rate
        self.tail.params.zero_grad()
        d_v_g = self.tail.backward(tail_cache, d_logits)
        self.opt_tail.step(lr)
        self.mid.params.zero_grad()
        d_v = self.mid.backward(mid_cache, d_v_g)
        self.opt_mid.step(lr)
        self.head.params.zero_grad()
        self.head.backward(head_cache, d_v)
        self.opt_head.step(lr)
        self.step += 1
        return loss

    def train_round(self, t: int, E: int, batch_size: int, seed: int):
        losses = []
        for e in range(E):
            for idxs in epoch_batches(self.shard.n, batch_size, seed, 0, t, e):
                losses.append(self.train_batch(
                    [self.shard.triplets[i] for i in idxs]))
        return float(np.mean(losses)) if losses else float("nan")

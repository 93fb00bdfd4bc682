"""Client/server state machines for the unidirectional contrastive protocol
and the classical split-learning baseline, over an in-process transport that
logs every message (and every local forward) for counting and ordering
assertions."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import aggregation as agg
from .components import (ApnModel, DimConfig, LtaModel, NhaModel, ParamSet,
                         ToyVqaModel)
from .data import answer_token_matrix
from .exceptions import ProtocolOrderError, ShapeError
from .losses import InfoNceConfig, info_nce, softmax_nll
from .numerics import ParamSetOptimizer, as_matrix, check_finite, matmul_bias, \
    matmul_bias_backward, relu, relu_backward

log = logging.getLogger(__name__)

MAIN = "main"
AUX = "aux"


def client_name(k: int) -> str:
    return f"client{k}"


# ---------------------------------------------------------------------------
# transport


@dataclass
class LogRecord:
    ordinal: int
    kind: str
    sender: str
    receiver: str
    rows: int
    cols: int
    nbytes: int
    batch_key: tuple = None


# kinds that are actual wire messages (local forward events are excluded)
TRAINING_KINDS = {"UniconRepUp", "UniconGradDown",
                  "SlRepUp", "SlRepDown", "SlGradUp", "SlGradDown"}
AGGREGATION_KINDS = {"DeltaUp", "ParamDown"}
MESSAGE_KINDS = TRAINING_KINDS | AGGREGATION_KINDS


class TransportLog:
    def __init__(self):
        self.records: list[LogRecord] = []

    def append(self, kind, sender, receiver, rows, cols, nbytes, batch_key=None):
        rec = LogRecord(len(self.records), kind, sender, receiver,
                        rows, cols, nbytes, batch_key)
        self.records.append(rec)
        return rec

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ordinal", "kind", "sender", "receiver", "rows", "cols"])
            for r in self.records:
                w.writerow([r.ordinal, r.kind, r.sender, r.receiver, r.rows, r.cols])


@dataclass
class Message:
    kind: str
    sender: str
    receiver: str
    batch_key: tuple = None
    seq: int = None


class Transport:
    """Assigns per-channel sequence numbers and logs every message."""

    def __init__(self):
        self.log = TransportLog()
        self._seq: dict[tuple, int] = {}

    def send(self, msg: Message, rows: int, cols: int, nbytes: int) -> Message:
        chan = (msg.sender, msg.receiver)
        msg.seq = self._seq.get(chan, 0)
        self._seq[chan] = msg.seq + 1
        self.log.append(msg.kind, msg.sender, msg.receiver, rows, cols,
                        nbytes, msg.batch_key)
        return msg

    def note_compute(self, kind: str, party: str, batch_key, rows, cols):
        # local events; not messages, but logged for ordering assertions
        self.log.append(kind, party, party, rows, cols, 0, batch_key)


def _mat_bytes(*mats) -> int:
    return sum(int(np.asarray(m).size) * 8 for m in mats)


def _paramset_elems(ps: ParamSet) -> int:
    return sum(int(p.value.size) for _, p in ps)


# ---------------------------------------------------------------------------
# messages


@dataclass
class UniconRepUp(Message):
    v_vqa: np.ndarray = None
    v_apn: np.ndarray = None


@dataclass
class UniconGradDown(Message):
    d_v_vqa: np.ndarray = None
    d_v_apn: np.ndarray = None
    loss: float = 0.0


@dataclass
class SlRepUp(Message):
    v: np.ndarray = None


@dataclass
class SlRepDown(Message):
    v_g: np.ndarray = None


@dataclass
class SlGradUp(Message):
    d_v_g: np.ndarray = None
    loss: float = 0.0


@dataclass
class SlGradDown(Message):
    d_v: np.ndarray = None


@dataclass
class DeltaUp(Message):
    record: agg.DeltaRecord = None


@dataclass
class ParamDown(Message):
    component: str = None
    avg_delta: ParamSet = None


# ---------------------------------------------------------------------------
# round report


@dataclass
class RoundReport:
    t: int
    mean_loss: float = float("nan")
    val_acc: float = float("nan")
    mean_diag: float = float("nan")
    mean_offdiag: float = float("nan")
    msgs_up: int = 0
    msgs_down: int = 0
    ms: float = 0.0


# ---------------------------------------------------------------------------
# deterministic batch stream shared by the protocol and the centralized
# reference trainers


def epoch_batches(n: int, batch_size: int, seed: int, client_id: int,
                  round_idx: int, epoch_idx: int):
    """Shuffled index batches for one local epoch; partial batches of size < 2
    are dropped (in-batch negatives and batch norm need B >= 2)."""
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 0x0B, client_id, round_idx, epoch_idx]))
    perm = rng.permutation(n)
    out = []
    for off in range(0, n, batch_size):
        idxs = perm[off:off + batch_size]
        if len(idxs) < 2:
            log.warning("dropping undersized batch (size %d) for client %d",
                        len(idxs), client_id)
            continue
        out.append(idxs)
    return out


# ---------------------------------------------------------------------------
# unidirectional protocol parties


class UniconClient:
    """Holds the backbone and the answer-projection network; never sees the
    adapter parameters."""

    def __init__(self, client_id: int, dims: DimConfig, shard, vocab,
                 answers, rng, adam_kw=None):
        self.k = client_id
        self.name = client_name(client_id)
        self.dims = dims
        self.shard = shard
        self.vocab = vocab
        self.answers = answers
        self.vqa = ToyVqaModel(dims, rng)
        self.apn = ApnModel(dims, rng)
        kw = adam_kw or {}
        self.opt_vqa = ParamSetOptimizer(self.vqa.params, **kw)
        self.opt_apn = ParamSetOptimizer(self.apn.params, **kw)
        self.step = 0
        self._pending = None
        self._round_start: dict[str, ParamSet] = {}

    def begin_round(self):
        self._round_start = {"vqa": self.vqa.params.copy(),
                             "apn": self.apn.params.copy()}

    def batch_upload(self, transport: Transport, triplets, t: int, e: int,
                     b: int) -> UniconRepUp:
        key = (self.k, t, e, b)
        x_i = np.stack([tr.x_i for tr in triplets])
        x_q = np.stack([tr.x_q for tr in triplets])
        y_tok = answer_token_matrix([tr.answer for tr in triplets],
                                    self.dims, self.vocab)
        v_vqa, vqa_cache = self.vqa.forward(x_i, x_q)
        transport.note_compute("ComputeVqa", self.name, key, *v_vqa.shape)
        v_apn, apn_cache = self.apn.forward(y_tok)
        transport.note_compute("ComputeApn", self.name, key, *v_apn.shape)
        self._pending = (key, vqa_cache, apn_cache)
        msg = UniconRepUp(kind="UniconRepUp", sender=self.name, receiver=MAIN,
                          batch_key=key, v_vqa=v_vqa, v_apn=v_apn)
        return transport.send(msg, v_vqa.shape[0], v_vqa.shape[1],
                              _mat_bytes(v_vqa, v_apn))

    def apply_grads(self, grads: UniconGradDown, lr: float):
        if self._pending is None or grads.batch_key != self._pending[0]:
            raise ProtocolOrderError(
                f"gradient message for batch {grads.batch_key} does not match "
                f"pending batch {None if self._pending is None else self._pending[0]}")
        _, vqa_cache, apn_cache = self._pending
        self._pending = None
        self.vqa.params.zero_grad()
        self.apn.params.zero_grad()
        self.vqa.backward(vqa_cache, grads.d_v_vqa)
        self.apn.backward(apn_cache, grads.d_v_apn)
        self.opt_vqa.step(lr)
        self.opt_apn.step(lr)
        self.step += 1

    def end_round_deltas(self, transport: Transport, t: int) -> list[DeltaUp]:
        msgs = []
        self._own_delta = {}
        for comp, model in (("vqa", self.vqa), ("apn", self.apn)):
            delta = agg.param_delta(model.params, self._round_start[comp])
            self._own_delta[comp] = delta
            rec = agg.DeltaRecord(component=comp, client_id=self.k,
                                  round_idx=t, delta=delta)
            msg = DeltaUp(kind="DeltaUp", sender=self.name, receiver=AUX,
                          record=rec)
            msgs.append(transport.send(msg, _paramset_elems(delta), 1,
                                       _paramset_elems(delta) * 8))
        return msgs

    def apply_param_down(self, msg: ParamDown):
        model = self.vqa if msg.component == "vqa" else self.apn
        agg.apply_aggregate_anchored(model.params,
                                     self._own_delta[msg.component],
                                     msg.avg_delta)


class UniconMainServer:
    """Holds the two adapters; per-client parameter snapshots within a round,
    per-client optimizer state persisted across rounds."""

    def __init__(self, dims: DimConfig, K: int, rng, nce_cfg: InfoNceConfig,
                 adam_kw=None):
        self.dims = dims
        self.K = K
        self.nce_cfg = nce_cfg
        self.nha_global = NhaModel(dims, rng)
        self.lta_global = LtaModel(dims, rng)
        self._adam_kw = adam_kw or {}
        # per-client working copies; globals stay untouched within a round
        self._nha = {k: NhaModel(dims, np.random.default_rng(0)) for k in range(K)}
        self._lta = {k: LtaModel(dims, np.random.default_rng(0)) for k in range(K)}
        self._opt_nha = {k: ParamSetOptimizer(self._nha[k].params, **self._adam_kw)
                         for k in range(K)}
        self._opt_lta = {k: ParamSetOptimizer(self._lta[k].params, **self._adam_kw)
                         for k in range(K)}
        self.last_sim = None

    def begin_round(self):
        self._nha_start = self.nha_global.params.copy()
        self._lta_start = self.lta_global.params.copy()
        for k in range(self.K):
            self._nha[k].params.copy_values_from(self.nha_global.params)
            self._lta[k].params.copy_values_from(self.lta_global.params)

    def handle(self, transport: Transport, msg: UniconRepUp,
               lr: float) -> UniconGradDown:
        k = int(msg.sender.removeprefix("client"))
        if msg.v_vqa.shape[1] != self.dims.H or msg.v_apn.shape[1] != self.dims.P:
            raise ShapeError("uploaded representation shapes disagree with config")
        check_finite(msg.v_vqa, "uploaded backbone output")
        check_finite(msg.v_apn, "uploaded answer projection")
        nha, lta = self._nha[k], self._lta[k]
        v_head, nha_cache = nha.forward(msg.v_vqa, train=True)
        v_tail, lta_cache = lta.forward(msg.v_apn)
        loss, d_head, d_tail = info_nce(v_head, v_tail, self.nce_cfg)
        self.last_sim = (v_head, v_tail)
        nha.params.zero_grad()
        lta.params.zero_grad()
        d_v_vqa = nha.backward(nha_cache, d_head)
        d_v_apn = lta.backward(lta_cache, d_tail)
        self._opt_nha[k].step(lr)
        self._opt_lta[k].step(lr)
        down = UniconGradDown(kind="UniconGradDown", sender=MAIN,
                              receiver=msg.sender, batch_key=msg.batch_key,
                              d_v_vqa=d_v_vqa, d_v_apn=d_v_apn, loss=loss)
        return transport.send(down, d_v_vqa.shape[0], d_v_vqa.shape[1],
                              _mat_bytes(d_v_vqa, d_v_apn))

    def end_round_aggregate(self, transport: Transport, t: int):
        """Average per-client snapshot deltas into the globals (logged as
        delta uploads to the main server itself)."""
        for comp, start, snaps, base in (
                ("nha", self._nha_start, self._nha, self.nha_global),
                ("lta", self._lta_start, self._lta, self.lta_global)):
            records = []
            for k in range(self.K):
                delta = agg.param_delta(snaps[k].params, start)
                rec = agg.DeltaRecord(component=comp, client_id=k,
                                      round_idx=t, delta=delta)
                msg = DeltaUp(kind="DeltaUp", sender=MAIN, receiver=MAIN,
                              record=rec)
                transport.send(msg, _paramset_elems(delta), 1,
                               _paramset_elems(delta) * 8)
                records.append(rec)
            avg = agg.aggregate_deltas(records, self.K)
            # anchor the refresh at client 0's snapshot (exact when all
            # client deltas coincide)
            base.params.copy_values_from(snaps[0].params)
            agg.apply_aggregate_anchored(base.params, records[0].delta, avg)


class AuxServer:
    """Aggregates client-component deltas; never sees adapter parameters."""

    def __init__(self, K: int):
        self.K = K
        self._buffer: dict[str, list] = {}

    def receive(self, msg: DeltaUp):
        self._buffer.setdefault(msg.record.component, []).append(msg.record)

    def broadcast_aggregates(self, transport: Transport) -> list[ParamDown]:
        out = []
        for comp in sorted(self._buffer):
            records = self._buffer[comp]
            avg = agg.aggregate_deltas(records, self.K)
            for k in range(self.K):
                msg = ParamDown(kind="ParamDown", sender=AUX,
                                receiver=client_name(k), component=comp,
                                avg_delta=avg)
                out.append(transport.send(msg, _paramset_elems(avg), 1,
                                          _paramset_elems(avg) * 8))
        self._buffer = {}
        return out


def unicon_round(clients: list[UniconClient], main: UniconMainServer,
                 aux: AuxServer, transport: Transport, t: int, E: int,
                 batch_size: int, seed: int, schedule) -> RoundReport:
    from .numerics import lr_at

    start_len = len(transport.log.records)
    main.begin_round()
    losses = []
    for client in clients:
        client.begin_round()
        for e in range(E):
            batches = epoch_batches(client.shard.n, batch_size, seed,
                                    client.k, t, e)
            for b, idxs in enumerate(batches):
                triplets = [client.shard.triplets[i] for i in idxs]
                up = client.batch_upload(transport, triplets, t, e, b)
                lr = lr_at(schedule, client.step)
                down = main.handle(transport, up, lr)
                client.apply_grads(down, lr)
                losses.append(down.loss)
    for client in clients:
        for msg in client.end_round_deltas(transport, t):
            aux.receive(msg)
    for msg in aux.broadcast_aggregates(transport):
        clients[int(msg.receiver.removeprefix("client"))].apply_param_down(msg)
    main.end_round_aggregate(transport, t)

    new = transport.log.records[start_len:]
    report = RoundReport(t=t)
    report.mean_loss = float(np.mean(losses)) if losses else float("nan")
    report.msgs_up = sum(1 for r in new if r.kind in MESSAGE_KINDS
                         and r.receiver in (MAIN, AUX) and r.sender not in (MAIN, AUX))
    report.msgs_down = sum(1 for r in new if r.kind in MESSAGE_KINDS
                           and r.sender in (MAIN, AUX) and r.receiver not in (MAIN, AUX))
    return report


# ---------------------------------------------------------------------------
# classical split-learning baseline (no label sharing)


class MlpGlobal:
    """The server-held middle component: linear -> ReLU -> linear."""

    def __init__(self, dims: DimConfig, rng):
        from .components import _linear
        self.dims = dims
        ps = ParamSet()
        _linear(ps, "fc1", dims.H, dims.H, rng)
        _linear(ps, "fc2", dims.H, dims.H, rng)
        self.params = ps

    def forward(self, v):
        z1, mm1 = matmul_bias(v, self.params["fc1.W"].value,
                              self.params["fc1.b"].value.reshape(-1))
        a1, rl = relu(z1)
        out, mm2 = matmul_bias(a1, self.params["fc2.W"].value,
                               self.params["fc2.b"].value.reshape(-1))
        return out, (mm1, rl, mm2)

    def backward(self, cache, d_out):
        mm1, rl, mm2 = cache
        d_a1, d_W2, d_b2 = matmul_bias_backward(mm2, d_out)
        self.params["fc2.W"].grad += d_W2
        self.params["fc2.b"].grad += d_b2.reshape(1, -1)
        d_z1 = relu_backward(rl, d_a1)
        d_in, d_W1, d_b1 = matmul_bias_backward(mm1, d_z1)
        self.params["fc1.W"].grad += d_W1
        self.params["fc1.b"].grad += d_b1.reshape(1, -1)
        return d_in


class LinearHead:
    """The client-held classifier tail: one linear map to C answer classes."""

    def __init__(self, dims: DimConfig, n_classes: int, rng):
        from .components import _linear
        ps = ParamSet()
        _linear(ps, "fc", dims.H, n_classes, rng)
        self.params = ps

    def forward(self, v):
        out, mm = matmul_bias(v, self.params["fc.W"].value,
                              self.params["fc.b"].value.reshape(-1))
        return out, mm

    def backward(self, cache, d_out):
        d_in, d_W, d_b = matmul_bias_backward(cache, d_out)
        self.params["fc.W"].grad += d_W
        self.params["fc.b"].grad += d_b.reshape(1, -1)
        return d_in


class SlClient:
    def __init__(self, client_id: int, dims: DimConfig, n_classes: int,
                 shard, vocab, answers, rng, adam_kw=None):
        self.k = client_id
        self.name = client_name(client_id)
        self.dims = dims
        self.shard = shard
        self.vocab = vocab
        self.answer_index = {a: i for i, a in enumerate(answers)}
        self.head = ToyVqaModel(dims, rng)
        self.tail = LinearHead(dims, n_classes, rng)
        kw = adam_kw or {}
        self.opt_head = ParamSetOptimizer(self.head.params, **kw)
        self.opt_tail = ParamSetOptimizer(self.tail.params, **kw)
        self.step = 0
        self._pending = None
        self._round_start = {}

    def begin_round(self):
        self._round_start = {"sl_head": self.head.params.copy(),
                             "sl_tail": self.tail.params.copy()}

    def forward_up(self, transport: Transport, triplets, t, e, b) -> SlRepUp:
        key = (self.k, t, e, b)
        x_i = np.stack([tr.x_i for tr in triplets])
        x_q = np.stack([tr.x_q for tr in triplets])
        targets = np.array([self.answer_index[tr.answer] for tr in triplets],
                           dtype=np.int64)
        v, head_cache = self.head.forward(x_i, x_q)
        transport.note_compute("ComputeHead", self.name, key, *v.shape)
        self._pending = (key, head_cache, targets)
        msg = SlRepUp(kind="SlRepUp", sender=self.name, receiver=MAIN,
                      batch_key=key, v=v)
        return transport.send(msg, v.shape[0], v.shape[1], _mat_bytes(v))

    def loss_backward(self, transport: Transport, msg: SlRepDown,
                      lr: float) -> SlGradUp:
        if self._pending is None or msg.batch_key != self._pending[0]:
            raise ProtocolOrderError("server reply does not match pending batch")
        key, _, targets = self._pending
        logits, tail_cache = self.tail.forward(msg.v_g)
        transport.note_compute("ComputeTail", self.name, key, *logits.shape)
        loss, d_logits = softmax_nll(logits, targets)
        self.tail.params.zero_grad()
        d_v_g = self.tail.backward(tail_cache, d_logits)
        self.opt_tail.step(lr)
        up = SlGradUp(kind="SlGradUp", sender=self.name, receiver=MAIN,
                      batch_key=key, d_v_g=d_v_g, loss=loss)
        return transport.send(up, d_v_g.shape[0], d_v_g.shape[1],
                              _mat_bytes(d_v_g))

    def apply_grads(self, msg: SlGradDown, lr: float):
        if self._pending is None or msg.batch_key != self._pending[0]:
            raise ProtocolOrderError("gradient reply does not match pending batch")
        _, head_cache, _ = self._pending
        self._pending = None
        self.head.params.zero_grad()
        self.head.backward(head_cache, msg.d_v)
        self.opt_head.step(lr)
        self.step += 1

    def end_round_deltas(self, transport: Transport, t: int):
        msgs = []
        self._own_delta = {}
        for comp, model in (("sl_head", self.head), ("sl_tail", self.tail)):
            delta = agg.param_delta(model.params, self._round_start[comp])
            self._own_delta[comp] = delta
            rec = agg.DeltaRecord(component=comp, client_id=self.k,
                                  round_idx=t, delta=delta)
            msg = DeltaUp(kind="DeltaUp", sender=self.name, receiver=AUX,
                          record=rec)
            msgs.append(transport.send(msg, _paramset_elems(delta), 1,
                                       _paramset_elems(delta) * 8))
        return msgs

    def apply_param_down(self, msg: ParamDown):
        model = self.head if msg.component == "sl_head" else self.tail
        agg.apply_aggregate_anchored(model.params,
                                     self._own_delta[msg.component],
                                     msg.avg_delta)


class SlServer:
    def __init__(self, dims: DimConfig, K: int, rng, adam_kw=None):
        self.dims = dims
        self.K = K
        self.global_mlp = MlpGlobal(dims, rng)
        self._snap = {k: MlpGlobal(dims, np.random.default_rng(0))
                      for k in range(K)}
        self._opt = {k: ParamSetOptimizer(self._snap[k].params, **(adam_kw or {}))
                     for k in range(K)}
        self._cache = {}

    def begin_round(self):
        self._start = self.global_mlp.params.copy()
        for k in range(self.K):
            self._snap[k].params.copy_values_from(self.global_mlp.params)

    def forward(self, transport: Transport, msg: SlRepUp) -> SlRepDown:
        k = int(msg.sender.removeprefix("client"))
        v_g, cache = self._snap[k].forward(msg.v)
        self._cache[k] = (msg.batch_key, cache)
        down = SlRepDown(kind="SlRepDown", sender=MAIN, receiver=msg.sender,
                         batch_key=msg.batch_key, v_g=v_g)
        return transport.send(down, v_g.shape[0], v_g.shape[1], _mat_bytes(v_g))

    def backprop(self, transport: Transport, msg: SlGradUp,
                 lr: float) -> SlGradDown:
        k = int(msg.sender.removeprefix("client"))
        if k not in self._cache or self._cache[k][0] != msg.batch_key:
            raise ProtocolOrderError("gradient upload does not match cached batch")
        _, cache = self._cache.pop(k)
        mlp = self._snap[k]
        mlp.params.zero_grad()
        d_v = mlp.backward(cache, msg.d_v_g)
        self._opt[k].step(lr)
        down = SlGradDown(kind="SlGradDown", sender=MAIN, receiver=msg.sender,
                          batch_key=msg.batch_key, d_v=d_v)
        return transport.send(down, d_v.shape[0], d_v.shape[1], _mat_bytes(d_v))

    def end_round_aggregate(self, transport: Transport, t: int):
        records = []
        for k in range(self.K):
            delta = agg.param_delta(self._snap[k].params, self._start)
            rec = agg.DeltaRecord(component="sl_global", client_id=k,
                                  round_idx=t, delta=delta)
            msg = DeltaUp(kind="DeltaUp", sender=MAIN, receiver=MAIN, record=rec)
            transport.send(msg, _paramset_elems(delta), 1,
                           _paramset_elems(delta) * 8)
            records.append(rec)
        avg = agg.aggregate_deltas(records, self.K)
        self.global_mlp.params.copy_values_from(self._snap[0].params)
        agg.apply_aggregate_anchored(self.global_mlp.params, records[0].delta, avg)


def sl_round(clients: list[SlClient], server: SlServer, aux: AuxServer,
             transport: Transport, t: int, E: int, batch_size: int,
             seed: int, schedule) -> RoundReport:
    from .numerics import lr_at

    start_len = len(transport.log.records)
    server.begin_round()
    losses = []
    for client in clients:
        client.begin_round()
        for e in range(E):
            batches = epoch_batches(client.shard.n, batch_size, seed,
                                    client.k, t, e)
            for b, idxs in enumerate(batches):
                triplets = [client.shard.triplets[i] for i in idxs]
                lr = lr_at(schedule, client.step)
                up = client.forward_up(transport, triplets, t, e, b)
                rep_down = server.forward(transport, up)
                grad_up = client.loss_backward(transport, rep_down, lr)
                grad_down = server.backprop(transport, grad_up, lr)
                client.apply_grads(grad_down, lr)
                losses.append(grad_up.loss)
    for client in clients:
        for msg in client.end_round_deltas(transport, t):
            aux.receive(msg)
    for msg in aux.broadcast_aggregates(transport):
        clients[int(msg.receiver.removeprefix("client"))].apply_param_down(msg)
    server.end_round_aggregate(transport, t)

    new = transport.log.records[start_len:]
    report = RoundReport(t=t)
    report.mean_loss = float(np.mean(losses)) if losses else float("nan")
    report.msgs_up = sum(1 for r in new if r.kind in MESSAGE_KINDS
                         and r.receiver in (MAIN, AUX) and r.sender not in (MAIN, AUX))
    report.msgs_down = sum(1 for r in new if r.kind in MESSAGE_KINDS
                           and r.sender in (MAIN, AUX) and r.receiver not in (MAIN, AUX))
    return report


# ---------------------------------------------------------------------------
# transport statistics


def transport_stats(log: TransportLog) -> dict:
    msgs = [r for r in log.records if r.kind in MESSAGE_KINDS]
    training = [r for r in msgs if r.kind in TRAINING_KINDS]
    up = [r for r in msgs if r.receiver in (MAIN, AUX)
          and r.sender not in (MAIN, AUX)]
    down = [r for r in msgs if r.sender in (MAIN, AUX)
            and r.receiver not in (MAIN, AUX)]
    n_batches = sum(1 for r in training if r.kind in ("UniconRepUp", "SlRepUp"))
    training_down = sum(1 for r in training
                        if r.kind in ("UniconGradDown", "SlRepDown", "SlGradDown")
                        and r.sender in (MAIN, AUX))
    # one round trip = one down-message the client must wait for mid-batch
    trips = training_down / n_batches if n_batches else 0.0
    return {
        "messages_up": len(up),
        "messages_down": len(down),
        "training_messages": len(training),
        "n_batches": n_batches,
        "round_trips_per_batch": trips,
        "bytes": sum(r.nbytes for r in msgs),
    }

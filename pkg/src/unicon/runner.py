"""Experiment runner: parses a TOML config, executes one of the three
training modes (unidirectional protocol, split-learning baseline, or
centralized reference), and writes metrics, transport, similarity-matrix,
and checkpoint artifacts."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import protocol as proto
from .components import DimConfig, save_paramset
from .data import Dataset, shard_dataset, synth_generate
from .evaluation import build_answer_bank, similarity_matrix, val_accuracy
from .exceptions import ConfigError
from .losses import InfoNceConfig
from .numerics import LrSchedule
from .trainer import CentralizedContrastiveTrainer, CentralizedSupervisedTrainer


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 1e-4
    warmup_steps: int = 0
    decay_rate: float = 0.2
    decay_epochs: list = field(default_factory=lambda: [10, 15])


@dataclass
class DatasetConfig:
    n: int = 2048
    C: int = 16
    noise: float = 0.1
    val_n: int = 256


@dataclass
class ExperimentConfig:
    protocol: str = "unicon"          # unicon | sl_baseline | centralized
    seed: int = 0
    K: int = 2
    T: int = 30
    E: int = 1
    B: int = 32
    eval_every: int = 1
    out_dir: str = "runs/out"
    dims: DimConfig = field(default_factory=DimConfig)
    loss: InfoNceConfig = field(default_factory=InfoNceConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def validate(self):
        if self.protocol not in ("unicon", "sl_baseline", "centralized"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.protocol == "centralized" and self.K != 1:
            raise ConfigError("centralized mode requires K = 1")
        if self.B < 2:
            raise ConfigError("batch size must be >= 2 (in-batch negatives)")
        if self.T < 0 or self.E < 0:
            raise ConfigError("T and E must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    cfg = ExperimentConfig()
    for key in ("protocol", "seed", "K", "T", "E", "B", "eval_every", "out_dir"):
        if key in raw:
            setattr(cfg, key, raw[key])
    if "dims" in raw:
        cfg.dims = DimConfig(**raw["dims"])
    if "loss" in raw:
        cfg.loss = InfoNceConfig(**raw["loss"])
    if "optimizer" in raw:
        cfg.optimizer = OptimizerConfig(**raw["optimizer"])
    if "dataset" in raw:
        cfg.dataset = DatasetConfig(**raw["dataset"])
    cfg.validate()
    return cfg


# deterministic seed fan-out tags
_INIT_CLIENT = 0xC11
_INIT_SERVER = 0x5E4


def client_init_rng(seed: int):
    return np.random.default_rng(np.random.SeedSequence([seed, _INIT_CLIENT]))


def server_init_rng(seed: int):
    return np.random.default_rng(np.random.SeedSequence([seed, _INIT_SERVER]))


def make_schedule(opt: OptimizerConfig, steps_per_epoch: int) -> LrSchedule:
    return LrSchedule(base_lr=opt.base_lr, warmup_steps=opt.warmup_steps,
                      decay_rate=opt.decay_rate, decay_epochs=list(opt.decay_epochs),
                      steps_per_epoch=max(steps_per_epoch, 1))


METRICS_HEADER = "t,loss,val_acc,mean_diag,mean_offdiag,msgs_up,msgs_down,ms"


def emit_metrics(report: proto.RoundReport, sink):
    sink.write(f"{report.t},{report.mean_loss!r},{report.val_acc!r},"
               f"{report.mean_diag!r},{report.mean_offdiag!r},"
               f"{report.msgs_up},{report.msgs_down},{report.ms!r}\n")
    sink.flush()


def _write_simmatrix(M: np.ndarray, path):
    with open(path, "w") as fh:
        for row in M:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


class ExperimentRun:
    """All mutable state of one experiment execution."""

    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        ds = cfg.dataset
        full = synth_generate(cfg.seed, ds.n + ds.val_n, ds.C, cfg.dims,
                              noise=ds.noise)
        self.train_triplets = full.triplets[:ds.n]
        self.val_triplets = full.triplets[ds.n:]
        self.answers = full.answers
        self.vocab = full.vocab
        train_ds = Dataset(triplets=self.train_triplets, answers=full.answers,
                           vocab=full.vocab, dims=cfg.dims)
        self.shards = shard_dataset(train_ds, cfg.K, cfg.seed)
        steps_per_epoch = max(len(self.shards[0].triplets) // cfg.B, 1)
        self.schedule = make_schedule(cfg.optimizer, steps_per_epoch)
        self.adam_kw = dict(beta1=cfg.optimizer.beta1, beta2=cfg.optimizer.beta2,
                            eps=cfg.optimizer.eps)
        self.transport = proto.Transport()
        self._build_parties()
        # fixed probe batch for similarity diagnostics
        self.probe = self.val_triplets[:min(cfg.B, len(self.val_triplets))]

    def _build_parties(self):
        cfg = self.cfg
        if cfg.protocol in ("unicon", "centralized"):
            if cfg.protocol == "unicon":
                self.clients = [
                    proto.UniconClient(k, cfg.dims, self.shards[k], self.vocab,
                                       self.answers, client_init_rng(cfg.seed),
                                       adam_kw=self.adam_kw)
                    for k in range(cfg.K)
                ]
                self.main = proto.UniconMainServer(cfg.dims, cfg.K,
                                                   server_init_rng(cfg.seed),
                                                   cfg.loss, adam_kw=self.adam_kw)
                self.aux = proto.AuxServer(cfg.K)
            else:
                self.central = CentralizedContrastiveTrainer(
                    cfg.dims, self.shards[0], self.vocab, self.answers,
                    client_init_rng(cfg.seed), server_init_rng(cfg.seed),
                    cfg.loss, self.schedule, adam_kw=self.adam_kw)
        else:
            self.clients = [
                proto.SlClient(k, cfg.dims, cfg.dataset.C, self.shards[k],
                               self.vocab, self.answers,
                               client_init_rng(cfg.seed), adam_kw=self.adam_kw)
                for k in range(cfg.K)
            ]
            self.main = proto.SlServer(cfg.dims, cfg.K, server_init_rng(cfg.seed),
                                       adam_kw=self.adam_kw)
            self.aux = proto.AuxServer(cfg.K)

    # current "global" components for evaluation
    def eval_components(self):
        cfg = self.cfg
        if cfg.protocol == "unicon":
            return (self.clients[0].vqa, self.clients[0].apn,
                    self.main.nha_global, self.main.lta_global)
        if cfg.protocol == "centralized":
            c = self.central
            return (c.vqa, c.apn, c.nha, c.lta)
        return None

    def probe_similarity(self):
        comps = self.eval_components()
        if comps is None or not self.probe:
            return None, {"mean_diag": float("nan"),
                          "mean_offdiag": float("nan")}
        vqa, apn, nha, lta = comps
        from .data import answer_token_matrix
        x_i = np.stack([t.x_i for t in self.probe])
        x_q = np.stack([t.x_q for t in self.probe])
        y_tok = answer_token_matrix([t.answer for t in self.probe],
                                    self.cfg.dims, self.vocab)
        v_vqa, _ = vqa.forward(x_i, x_q)
        v_head, _ = nha.forward(v_vqa, train=False)
        v_apn, _ = apn.forward(y_tok)
        v_tail, _ = lta.forward(v_apn)
        return similarity_matrix(v_head, v_tail)

    def evaluate(self) -> float:
        cfg = self.cfg
        if cfg.protocol in ("unicon", "centralized"):
            vqa, apn, nha, lta = self.eval_components()
            bank = build_answer_bank(self.answers, cfg.dims, self.vocab,
                                     apn, lta)
            return val_accuracy(vqa, nha, self.val_triplets, bank)
        # classification accuracy for the split-learning baseline
        client = self.clients[0]
        x_i = np.stack([t.x_i for t in self.val_triplets])
        x_q = np.stack([t.x_q for t in self.val_triplets])
        targets = np.array([client.answer_index[t.answer]
                            for t in self.val_triplets])
        v, _ = client.head.forward(x_i, x_q)
        v_g, _ = self.main.global_mlp.forward(v)
        logits, _ = client.tail.forward(v_g)
        return float((np.argmax(logits, axis=1) == targets).mean())

    def run_round(self, t: int) -> proto.RoundReport:
        cfg = self.cfg
        start = time.perf_counter()
        if cfg.protocol == "unicon":
            report = proto.unicon_round(self.clients, self.main, self.aux,
                                        self.transport, t, cfg.E, cfg.B,
                                        cfg.seed, self.schedule)
        elif cfg.protocol == "sl_baseline":
            report = proto.sl_round(self.clients, self.main, self.aux,
                                    self.transport, t, cfg.E, cfg.B,
                                    cfg.seed, self.schedule)
        else:
            loss = self.central.train_round(t, cfg.E, cfg.B, cfg.seed)
            report = proto.RoundReport(t=t, mean_loss=loss)
        report.ms = (time.perf_counter() - start) * 1000.0
        return report

    def final_paramsets(self) -> dict:
        cfg = self.cfg
        if cfg.protocol in ("unicon", "centralized"):
            vqa, apn, nha, lta = self.eval_components()
            return {"vqa": vqa.params, "apn": apn.params,
                    "nha": nha.params, "lta": lta.params}
        return {"sl_head": self.clients[0].head.params,
                "sl_tail": self.clients[0].tail.params,
                "sl_global": self.main.global_mlp.params}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Execute the configured protocol for T rounds and write all artifacts.
    Returns the output directory."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = ExperimentRun(cfg)

    M0, sim0 = run.probe_similarity()
    if M0 is not None:
        _write_simmatrix(M0, out / "simmatrix_first.csv")

    with open(out / "metrics.csv", "w") as sink:
        sink.write(METRICS_HEADER + "\n")
        for t in range(cfg.T):
            report = run.run_round(t)
            if (t + 1) % cfg.eval_every == 0 or t == cfg.T - 1:
                report.val_acc = run.evaluate()
                _, sim = run.probe_similarity()
                report.mean_diag = sim["mean_diag"]
                report.mean_offdiag = sim["mean_offdiag"]
            emit_metrics(report, sink)

    M1, _ = run.probe_similarity()
    if M1 is not None:
        _write_simmatrix(M1, out / "simmatrix_last.csv")
    run.transport.log.export_csv(out / "transport.csv")
    for name, ps in run.final_paramsets().items():
        save_paramset(ps, out / f"checkpoint_{name}.bin")
    return out

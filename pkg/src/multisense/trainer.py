"""Fold training, prediction and full cross-validation runs.

Run directory layout::

    manifest.json
    history/fold_XX.jsonl        epoch, train_loss, dev_macro_f1
    snapshots/fold_XX.pt         best-dev state dict
    predictions/fold_XX.jsonl    header line + one PredictionRecord per test instance
    metrics/fold_XX.json         MetricsReport (method's own criterion)
    metrics/fold_XX.single.json  single-label criterion (m1/m2 only)
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import torch
from torch import nn

from multisense import metrics
from multisense.corpus import NUM_LABELS, SENSES, Instance, corpus_digest, duplicate_expansion, to_label_vector
from multisense.encoder import EncoderConfig, EncoderOutput, build_encoder, slice_batch
from multisense.folds import FoldSpec, SplitPlan
from multisense.heads import (
    BaselineHead,
    Method1Head,
    Method2Head,
    Method3Decoder,
    PredictionRecord,
    argmax_predict,
    gold_sequence,
    m3_beam_search,
    threshold_predict,
)
from multisense.losses import (
    FocalConfig,
    bce_sigmoid_logits,
    focal_logits,
    multiclass_ce_logits,
    per_label_softmax_ce,
    sequence_ce,
)
from multisense.reporting import evaluate_fold, fold_name, write_report
from multisense.runio import atomic_write_text, digest_of, write_jsonl, write_predictions

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Flat training configuration; every key can appear in a config file."""

    method: str = "m2"
    loss_variant: str = "ce"
    learning_rate: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 20
    patience: int = 10  # 0 disables early stopping
    max_seq_len: int = 512
    seed: int = 0
    grad_clip: float = 1.0
    gamma_pos: float = 1.0
    gamma_neg: float = 4.0
    threshold: float = 0.5
    beam_size: int = 4
    max_decode_len: int = 4
    encoder: str = "toy"
    hidden_dim: int = 64
    vocab_hash_buckets: int = 4096
    encoder_trainable: bool = True
    model_name: str | None = None
    revision: str | None = None

    def __post_init__(self):
        if self.method not in ("m1", "m2", "m3", "baseline"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.loss_variant not in ("ce", "focal"):
            raise ValueError(f"unknown loss_variant {self.loss_variant!r}")
        if self.loss_variant == "focal" and self.method not in ("m1", "m2"):
            raise ValueError("focal loss needs per-label probabilities (m1 or m2)")
        for name in ("learning_rate", "batch_size", "max_epochs", "max_seq_len", "beam_size", "max_decode_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience < 0 or self.grad_clip < 0:
            raise ValueError("patience and grad_clip must be >= 0")
        self.encoder_config()  # validates encoder fields

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            kind=self.encoder,
            hidden_dim=self.hidden_dim,
            vocab_hash_buckets=self.vocab_hash_buckets,
            trainable=self.encoder_trainable,
            seed=self.seed,
            max_seq_len=self.max_seq_len,
            model_name=self.model_name,
            revision=self.revision,
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return digest_of(self.to_dict())

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> TrainConfig:
        """Build from a flat mapping; string values (CLI overrides) are coerced."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(value, cls.__dataclass_fields__[key].default)
        return cls(**kwargs)


def _coerce(value: Any, default: Any) -> Any:
    if not isinstance(value, str):
        if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if default is None and value.lower() in ("none", "null", ""):
        return None
    return value


class MultiSenseModel(nn.Module):
    """Encoder plus the head selected by ``config.method``."""

    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        self.encoder = build_encoder(config.encoder_config())
        hidden = self.encoder.hidden_dim
        head_cls = {"m1": Method1Head, "m2": Method2Head, "m3": Method3Decoder, "baseline": BaselineHead}
        self.head = head_cls[config.method](hidden)
        self.label_frequency = [0] * NUM_LABELS

    def encode(self, batch: dict[str, torch.Tensor]) -> EncoderOutput:
        return self.encoder(batch)

    def batch_loss(self, batch: dict[str, torch.Tensor], targets: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        enc = self.encode(batch)
        focal_cfg = FocalConfig(cfg.gamma_pos, cfg.gamma_neg)
        if cfg.method == "m1":
            logits = self.head.logits(enc.pooled)
            if cfg.loss_variant == "focal":
                return focal_logits(logits, targets, focal_cfg)
            return bce_sigmoid_logits(logits, targets)
        if cfg.method == "m2":
            logits = self.head.logits(enc.pooled)
            if cfg.loss_variant == "focal":
                return focal_logits(logits[..., 0] - logits[..., 1], targets, focal_cfg)
            return per_label_softmax_ce(logits, targets)
        if cfg.method == "baseline":
            return multiclass_ce_logits(self.head.logits(enc.pooled), targets)
        return sequence_ce(self.head.teacher_forced(enc, targets))

    @torch.no_grad()
    def predict(self, instances: Sequence[Instance], batch_size: int | None = None) -> list[PredictionRecord]:
        cfg = self.config
        if not instances:
            return []
        was_training = self.training
        self.eval()
        batch_size = batch_size or cfg.batch_size
        prepared = self.encoder.prepare([(i.arg1, i.arg2) for i in instances])
        out: list[PredictionRecord] = []
        for start in range(0, len(instances), batch_size):
            index = torch.arange(start, min(start + batch_size, len(instances)))
            enc = self.encode(slice_batch(prepared, index))
            chunk = instances[start : start + len(index)]
            if cfg.method == "m3":
                for k, inst in enumerate(chunk):
                    single = EncoderOutput(enc.pooled[k], enc.tokens[k], enc.mask[k])
                    labels = m3_beam_search(single, self.head, cfg.beam_size, cfg.max_decode_len)
                    out.append(PredictionRecord(inst.id, cfg.method, frozenset(labels)))
                continue
            probs = self.head(enc.pooled).double()
            for k, inst in enumerate(chunk):
                p = probs[k]
                if cfg.method == "baseline":
                    predicted = frozenset({argmax_predict(p)})
                else:
                    predicted = threshold_predict(p, cfg.threshold)
                out.append(PredictionRecord(inst.id, cfg.method, predicted, tuple(p.tolist())))
        self.train(was_training)
        return out


@dataclass
class ModelState:
    model: MultiSenseModel
    optimizer_state: dict
    epoch: int
    best_epoch: int
    best_score: float

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        torch.save({
            "config": self.model.config.to_dict(),
            "model": self.model.state_dict(),
            "label_frequency": self.model.label_frequency,
            "optimizer": self.optimizer_state,
            "epoch": self.epoch,
            "best_epoch": self.best_epoch,
            "best_score": self.best_score,
        }, tmp)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> ModelState:
        blob = torch.load(path, weights_only=False)
        model = MultiSenseModel(TrainConfig.from_mapping(blob["config"]))
        model.load_state_dict(blob["model"])
        model.label_frequency = blob["label_frequency"]
        return cls(model, blob["optimizer"], blob["epoch"], blob["best_epoch"], blob["best_score"])


@dataclass
class EarlyStopping:
    """Tracks the best dev score; strictly greater scores reset the wait counter."""

    patience: int
    best: float = -math.inf
    best_epoch: int = 0
    wait: int = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record ``score``; True when it is a new best."""
        if score > self.best:
            self.best, self.best_epoch, self.wait = score, epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.patience > 0 and self.wait >= self.patience


def batch_order(n: int, seed: int, epoch: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=gen)


def build_targets(model: MultiSenseModel, instances: Sequence[Instance]) -> torch.Tensor:
    method = model.config.method
    if method == "baseline":
        return torch.tensor([min(i.label_ids) for i in instances], dtype=torch.long)
    if method == "m3":
        seqs = [gold_sequence(i.label_ids, model.label_frequency) for i in instances]
        width = max(len(s) for s in seqs)
        return torch.tensor([s + [-1] * (width - len(s)) for s in seqs], dtype=torch.long)
    return torch.from_numpy(np.stack([to_label_vector(i.label_ids) for i in instances])).float()


def dev_score(model: MultiSenseModel, instances: Sequence[Instance]) -> float:
    records = model.predict(instances)
    criterion = metrics.SINGLE_LABEL if model.config.method == "baseline" else metrics.MULTI_LABEL
    return metrics.evaluate_records(records, instances, criterion).macro_f1


def train_fold(fold: FoldSpec, config: TrainConfig, corpus: Sequence[Instance]) -> tuple[ModelState, list[dict]]:
    """Train on ``fold.train`` with dev-F1 early stopping; returns the best snapshot.

    The baseline trains on the duplicated expansion of the training split; all
    methods are scored on the original dev instances.
    """
    by_id = {inst.id: inst for inst in corpus}
    train = [by_id[i] for i in fold.train]
    if not train:
        raise TrainingError(f"fold {fold.fold_id}: empty train split")
    dev = [by_id[i] for i in fold.dev]
    if not dev:
        logger.warning("fold %d: empty dev split, selecting on the training split", fold.fold_id)
        dev = train
    if config.method == "baseline":
        train = duplicate_expansion(train)

    model = MultiSenseModel(config)
    freq = [0] * NUM_LABELS
    for inst in train:
        for i in inst.label_ids:
            freq[i] += 1
    model.label_frequency = freq

    prepared = model.encoder.prepare([(i.arg1, i.arg2) for i in train])
    targets = build_targets(model, train)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS)
    stopper = EarlyStopping(config.patience)
    best_state = copy.deepcopy(model.state_dict())
    best_opt = copy.deepcopy(optimizer.state_dict())
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = batch_order(len(train), config.seed, epoch)
        total, seen = 0.0, 0
        for start in range(0, len(train), config.batch_size):
            index = order[start : start + config.batch_size]
            loss = model.batch_loss(slice_batch(prepared, index), targets[index])
            if not torch.isfinite(loss):
                raise TrainingError(f"fold {fold.fold_id}: non-finite loss at epoch {epoch}, batch at {start}")
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            optimizer.step()
            total += float(loss.detach()) * len(index)
            seen += len(index)
        score = dev_score(model, dev)
        history.append({"epoch": epoch, "train_loss": total / seen, "dev_macro_f1": score})
        logger.info("fold %d epoch %d loss %.4f dev F1 %.4f", fold.fold_id, epoch, total / seen, score)
        if stopper.update(epoch, score):
            best_state = copy.deepcopy(model.state_dict())
            best_opt = copy.deepcopy(optimizer.state_dict())
        if stopper.should_stop:
            break
    model.load_state_dict(best_state)
    return ModelState(model, best_opt, epoch, stopper.best_epoch, stopper.best), history


def predict_fold(state: ModelState, instances: Sequence[Instance]) -> list[PredictionRecord]:
    return state.model.predict(instances)


DECISIONS = {
    "threshold": "strictly greater than 0.5",
    "argmax_tie_break": "lowest canonical index",
    "truncation": "drop from the longer argument, arg2 on ties",
    "pair_template": "<s> arg1 <sep> arg2 </s>",
    "m3_target_order": "descending training frequency, ties by canonical index",
    "m3_decoding": "beam 4, max length 4, no repeated labels, nonempty fallback to first-step argmax",
    "m3_output_layer": "concatenated hidden state and attention context",
    "m3_embed_dim": "equal to hidden_dim",
    "early_stopping": "dev macro-F1, strictly greater resets patience",
    "focal_sign": "negated, loss >= 0",
    "focal_on_m2": "applied to positive-class probability",
    "std": "population; sample std reported alongside",
    "single_criterion_fn": "one false negative per gold label",
    "section_rotation": "fold i tests sections 2i,2i+1 and develops on 2i+2,2i+3 (mod 25)",
    "example_pairing": "test portion i, dev portion i+1 (mod 12)",
}


def build_manifest(config: TrainConfig, corpus_hash: str, plan: SplitPlan, encoder_identity: dict) -> dict:
    manifest = {
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "corpus_digest": corpus_hash,
        "split_plan": {"mode": plan.mode, "seed": plan.seed, "digest": digest_of(plan.to_json())},
        "label_order": list(SENSES),
        "decisions": DECISIONS,
        "seed": config.seed,
        "encoder": encoder_identity,
        "optimizer": {"name": "adam", "lr": config.learning_rate, "betas": list(ADAM_BETAS), "eps": ADAM_EPS},
    }
    manifest["digest"] = digest_of(manifest)
    return manifest


def run_experiment(plan: SplitPlan, config: TrainConfig, corpus: Sequence[Instance], run_dir: str | Path,
                   folds: Sequence[int] | None = None) -> metrics.AggregateReport | None:
    """Train and evaluate every fold (or the ``folds`` subset); write all artifacts.

    Returns the aggregate report when at least two folds were evaluated.
    """
    run_dir = Path(run_dir)
    corpus_hash = corpus_digest(corpus)
    if plan.corpus_digest != corpus_hash:
        raise TrainingError("split plan was built for a different corpus")
    encoder_identity = MultiSenseModel(config).encoder.identity()
    manifest = build_manifest(config, corpus_hash, plan, encoder_identity)
    atomic_write_text(run_dir / "manifest.json", _dump(manifest))
    by_id = {inst.id: inst for inst in corpus}
    reports = []
    for fold in plan.folds:
        if folds is not None and fold.fold_id not in folds:
            continue
        try:
            state, history = train_fold(fold, config, corpus)
            test = [by_id[i] for i in fold.test]
            records = predict_fold(state, test)
        except Exception as exc:
            raise TrainingError(f"fold {fold.fold_id} failed: {exc}") from exc
        name = fold_name(fold.fold_id)
        state.save(run_dir / "snapshots" / f"{name}.pt")
        write_jsonl(run_dir / "history" / f"{name}.jsonl", history)
        header = {"manifest_digest": manifest["digest"], "fold": fold.fold_id, "method": config.method}
        write_predictions(run_dir / "predictions" / f"{name}.jsonl", records, header)
        reports.append(evaluate_fold(records, test, config.method, manifest["digest"], fold.fold_id, run_dir))
    if len(reports) < 2:
        return None
    agg = metrics.aggregate(reports)
    write_report(agg, run_dir / "report")
    return agg


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"

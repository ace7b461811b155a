"""Argument-pair encoders.

Both encoders share one contract: ``prepare`` turns argument pairs into padded index
tensors once, and calling the module on a (sliced) prepared batch returns an
:class:`EncoderOutput`. The token stream is ``<s> arg1 <sep> arg2 </s>``, cut to
``max_seq_len`` by :func:`truncate_pair`.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
from torch import nn

MAX_SEQ_LEN = 512
BOS, SEP, EOS = "<s>", "<sep>", "</s>"
NUM_SPECIAL = 3

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class EncoderUnavailable(RuntimeError):
    """The external pretrained encoder could not be loaded."""


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "toy"  # "toy" or "external-adapter"
    hidden_dim: int = 64
    vocab_hash_buckets: int = 4096
    trainable: bool = True
    seed: int = 0
    max_seq_len: int = MAX_SEQ_LEN
    model_name: str | None = None
    revision: str | None = None

    def __post_init__(self):
        if self.kind not in ("toy", "external-adapter"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.hidden_dim < 2:
            raise ValueError("hidden_dim must be >= 2")
        if self.max_seq_len < NUM_SPECIAL + 2 or self.max_seq_len > MAX_SEQ_LEN:
            raise ValueError(f"max_seq_len must lie in [{NUM_SPECIAL + 2}, {MAX_SEQ_LEN}]")


@dataclass
class EncoderOutput:
    """Pooled vector, token rows and validity mask; batched or single."""

    pooled: torch.Tensor  # (..., H)
    tokens: torch.Tensor  # (..., T, H)
    mask: torch.Tensor  # (..., T) bool


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def truncate_pair(tokens1: Sequence, tokens2: Sequence, budget: int) -> tuple[list, list]:
    """Drop trailing tokens of the longer argument (arg2 on ties) until within budget."""
    if budget < 2:
        raise ValueError("budget must be >= 2")
    a, b = list(tokens1), list(tokens2)
    excess = len(a) + len(b) - budget
    while excess > 0:
        if len(a) > len(b):
            a.pop()
        else:
            b.pop()
        excess -= 1
    return a, b


def _check_texts(arg1: str, arg2: str) -> None:
    if not arg1.strip() or not arg2.strip():
        raise ValueError("empty text")


def _pad(rows: list[list[int]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(r) for r in rows)
    ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(rows), width), dtype=torch.bool)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = torch.tensor(r, dtype=torch.long)
        mask[i, : len(r)] = True
    return ids, mask


def slice_batch(prepared: dict[str, torch.Tensor], index: torch.Tensor) -> dict[str, torch.Tensor]:
    """Rows ``index`` of a prepared batch, with all-padding columns trimmed."""
    mask = prepared["mask"][index]
    width = int(mask.sum(dim=1).max())
    return {k: v[index][:, :width] for k, v in prepared.items()}


class ToyEncoder(nn.Module):
    """Hashed-embedding encoder for desk-scale runs and tests.

    Tokens map to rows of a seeded ``vocab_hash_buckets x H`` table via a stable
    hash. The pooled vector is the masked mean of every row after the begin marker,
    since this encoder has no trained aggregation token.
    """

    def __init__(self, config: EncoderConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        if config.kind != "toy":
            raise ValueError("ToyEncoder needs kind='toy'")
        self.config = config
        gen = torch.Generator().manual_seed(config.seed)
        table = torch.randn(config.vocab_hash_buckets, config.hidden_dim, generator=gen, dtype=torch.float64)
        self.embedding = nn.Parameter(table.to(dtype), requires_grad=config.trainable)

    @property
    def hidden_dim(self) -> int:
        return self.config.hidden_dim

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.config.vocab_hash_buckets

    def toy_embed(self, token: str) -> torch.Tensor:
        return self.embedding[self.bucket(token)]

    def token_stream(self, arg1: str, arg2: str) -> list[str]:
        _check_texts(arg1, arg2)
        t1, t2 = truncate_pair(tokenize(arg1), tokenize(arg2), self.config.max_seq_len - NUM_SPECIAL)
        return [BOS, *t1, SEP, *t2, EOS]

    def prepare(self, pairs: Sequence[tuple[str, str]]) -> dict[str, torch.Tensor]:
        rows = [[self.bucket(tok) for tok in self.token_stream(a1, a2)] for a1, a2 in pairs]
        ids, mask = _pad(rows, 0)
        return {"ids": ids, "mask": mask}

    def forward(self, batch: dict[str, torch.Tensor]) -> EncoderOutput:
        mask = batch["mask"]
        tokens = self.embedding[batch["ids"]] * mask.unsqueeze(-1)
        pool_mask = mask.clone()
        pool_mask[..., 0] = False
        weights = pool_mask.to(tokens.dtype).unsqueeze(-1)
        pooled = (tokens * weights).sum(dim=-2) / weights.sum(dim=-2)
        return EncoderOutput(pooled=pooled, tokens=tokens, mask=mask)

    def identity(self) -> dict:
        return {"kind": "toy", **asdict(self.config), "template": "<s> arg1 <sep> arg2 </s>", "pooling": "mean"}


class PretrainedEncoder(nn.Module):
    """Adapter over a Hugging Face encoder; pooled vector is the begin-marker row."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        if config.kind != "external-adapter":
            raise ValueError("PretrainedEncoder needs kind='external-adapter'")
        if not config.model_name:
            raise EncoderUnavailable("external-adapter encoder requires model_name")
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderUnavailable(f"transformers is not importable: {exc}") from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(config.model_name, revision=config.revision)
            self.model = AutoModel.from_pretrained(config.model_name, revision=config.revision)
        except (OSError, ValueError) as exc:
            raise EncoderUnavailable(f"cannot load {config.model_name!r}: {exc}") from exc
        hidden = self.model.config.hidden_size
        if hidden != config.hidden_dim:
            raise ValueError(f"model hidden size {hidden} != configured hidden_dim {config.hidden_dim}")
        self.config = config

    @property
    def hidden_dim(self) -> int:
        return self.config.hidden_dim

    def prepare(self, pairs: Sequence[tuple[str, str]]) -> dict[str, torch.Tensor]:
        tok = self.tokenizer
        budget = self.config.max_seq_len - tok.num_special_tokens_to_add(pair=True)
        rows = []
        for a1, a2 in pairs:
            _check_texts(a1, a2)
            t1, t2 = truncate_pair(tok.tokenize(a1), tok.tokenize(a2), budget)
            rows.append(tok.build_inputs_with_special_tokens(tok.convert_tokens_to_ids(t1), tok.convert_tokens_to_ids(t2)))
        ids, mask = _pad(rows, tok.pad_token_id)
        return {"ids": ids, "mask": mask}

    def forward(self, batch: dict[str, torch.Tensor]) -> EncoderOutput:
        mask = batch["mask"]
        hidden = self.model(input_ids=batch["ids"], attention_mask=mask.long()).last_hidden_state
        hidden = hidden * mask.unsqueeze(-1)
        return EncoderOutput(pooled=hidden[:, 0], tokens=hidden, mask=mask)

    def identity(self) -> dict:
        return {
            "kind": "external-adapter",
            "model_name": self.config.model_name,
            "revision": self.config.revision,
            "hidden_dim": self.config.hidden_dim,
            "template": "tokenizer pair template",
            "pooling": "begin-marker",
            "fine_tuning": "full",
        }


def build_encoder(config: EncoderConfig) -> ToyEncoder | PretrainedEncoder:
    if config.kind == "toy":
        return ToyEncoder(config)
    return PretrainedEncoder(config)


def encode_pair(arg1: str, arg2: str, encoder: ToyEncoder | PretrainedEncoder) -> EncoderOutput:
    """Encode a single pair; the batch dimension is removed."""
    out = encoder(encoder.prepare([(arg1, arg2)]))
    return EncoderOutput(pooled=out.pooled[0], tokens=out.tokens[0], mask=out.mask[0])

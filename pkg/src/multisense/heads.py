"""Prediction heads and label-sequence decoding.

Label ``i`` of the decoder vocabulary is sense ``i``; ``num_labels`` is the end
symbol and ``num_labels + 1`` the begin symbol (input side only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
from torch import nn

from multisense.corpus import NUM_LABELS
from multisense.encoder import EncoderOutput
from multisense.predictions import METHODS, THRESHOLD, PredictionRecord, argmax_predict, threshold_predict

__all__ = [
    "METHODS", "THRESHOLD", "PredictionRecord", "argmax_predict", "threshold_predict",
    "Method1Head", "Method2Head", "Method3Decoder", "BaselineHead",
    "m1_forward", "m2_forward", "baseline_forward", "attention", "m3_step",
    "m3_teacher_forced_logprobs", "m3_beam_search", "beam_search", "gold_sequence",
]

BEAM_SIZE = 4
MAX_DECODE_LEN = 4


class Method1Head(nn.Module):
    """One linear layer producing an independent logit per label."""

    def __init__(self, hidden_dim: int, num_labels: int = NUM_LABELS):
        super().__init__()
        self.linear = nn.Linear(hidden_dim, num_labels)

    def logits(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.linear(pooled)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(pooled))


class Method2Head(nn.Module):
    """A two-way classifier per label; column 0 of each is the positive class."""

    def __init__(self, hidden_dim: int, num_labels: int = NUM_LABELS):
        super().__init__()
        bound = 1.0 / hidden_dim**0.5
        self.weight = nn.Parameter(torch.empty(num_labels, hidden_dim, 2).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.empty(num_labels, 2).uniform_(-bound, bound))

    def logits(self, pooled: torch.Tensor) -> torch.Tensor:
        """(..., H) -> (..., num_labels, 2)."""
        return torch.einsum("...h,lhk->...lk", pooled, self.weight) + self.bias

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(pooled), dim=-1)[..., 0]


class BaselineHead(nn.Module):
    """Single-label softmax over all senses."""

    def __init__(self, hidden_dim: int, num_labels: int = NUM_LABELS):
        super().__init__()
        self.linear = nn.Linear(hidden_dim, num_labels)

    def logits(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.linear(pooled)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(pooled), dim=-1)


def _check_dim(pooled: torch.Tensor, expected: int) -> None:
    if pooled.shape[-1] != expected:
        raise ValueError(f"pooled dimension {pooled.shape[-1]} != head input {expected}")


def m1_forward(pooled: torch.Tensor, head: Method1Head) -> torch.Tensor:
    _check_dim(pooled, head.linear.in_features)
    return head(pooled)


def m2_forward(pooled: torch.Tensor, head: Method2Head) -> torch.Tensor:
    _check_dim(pooled, head.weight.shape[1])
    return head(pooled)


def baseline_forward(pooled: torch.Tensor, head: BaselineHead) -> torch.Tensor:
    _check_dim(pooled, head.linear.in_features)
    return head(pooled)


def attention(hidden: torch.Tensor, tokens: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Dot-product attention of ``hidden`` (..., H) over masked ``tokens`` (..., T, H)."""
    if not bool(mask.any(dim=-1).all()):
        raise ValueError("attention over an all-masked input")
    scores = (tokens @ hidden.unsqueeze(-1)).squeeze(-1)
    scores = scores.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return (weights.unsqueeze(-1) * tokens).sum(dim=-2)


class Method3Decoder(nn.Module):
    """GRU label-sequence decoder with dot-product attention over encoder tokens.

    The cell input is ``[embedding(prev); context]`` where the context is computed
    from the previous hidden state; the output layer reads ``[new hidden; context]``.
    """

    def __init__(self, hidden_dim: int, num_labels: int = NUM_LABELS, embed_dim: int | None = None):
        super().__init__()
        embed_dim = embed_dim or hidden_dim
        self.num_labels = num_labels
        self.hidden_dim = hidden_dim
        self.embedding = nn.Embedding(num_labels + 2, embed_dim)
        self.cell = nn.GRUCell(embed_dim + hidden_dim, hidden_dim)
        self.output = nn.Linear(2 * hidden_dim, num_labels + 1)

    @property
    def end(self) -> int:
        return self.num_labels

    @property
    def begin(self) -> int:
        return self.num_labels + 1

    def step(self, prev: torch.Tensor, hidden: torch.Tensor, encoder_out: EncoderOutput):
        """One decoding step -> (log-probs over labels + end, new hidden)."""
        if hidden.shape[-1] != self.hidden_dim:
            raise ValueError(f"hidden dimension {hidden.shape[-1]} != decoder {self.hidden_dim}")
        context = attention(hidden, encoder_out.tokens, encoder_out.mask)
        new_hidden = self.cell(torch.cat([self.embedding(prev), context], dim=-1), hidden)
        logits = self.output(torch.cat([new_hidden, context], dim=-1))
        return torch.log_softmax(logits, dim=-1), new_hidden

    def teacher_forced(self, encoder_out: EncoderOutput, targets: torch.Tensor) -> torch.Tensor:
        """Gold-symbol log-probs for padded targets (B, S); padding must be ``-1``.

        Returns (B, S) with zeros at padded positions.
        """
        batch, steps = targets.shape
        valid = targets >= 0
        safe = targets.clamp(min=0)
        prev = torch.full((batch,), self.begin, dtype=torch.long)
        hidden = encoder_out.pooled
        out = []
        for t in range(steps):
            logp, hidden = self.step(prev, hidden, encoder_out)
            out.append(logp.gather(-1, safe[:, t : t + 1]).squeeze(-1))
            prev = safe[:, t]
        return torch.stack(out, dim=1) * valid


def m3_step(prev_symbol: int, hidden: torch.Tensor, encoder_out: EncoderOutput, decoder: Method3Decoder):
    """Unbatched single step."""
    batched = EncoderOutput(encoder_out.pooled[None], encoder_out.tokens[None], encoder_out.mask[None])
    logp, new_hidden = decoder.step(torch.tensor([prev_symbol]), hidden[None], batched)
    return logp[0], new_hidden[0]


def gold_sequence(labels: Iterable[int], frequency: Sequence[int], end: int = NUM_LABELS) -> list[int]:
    """Target order: descending training frequency, ties by index, then end."""
    ordered = sorted(set(labels), key=lambda i: (-frequency[i], i))
    return ordered + [end]


def m3_teacher_forced_logprobs(encoder_out: EncoderOutput, gold: Sequence[int], decoder: Method3Decoder) -> torch.Tensor:
    """Log-probability of each gold symbol given the gold prefix (unbatched)."""
    if not gold:
        raise ValueError("empty gold sequence")
    batched = EncoderOutput(encoder_out.pooled[None], encoder_out.tokens[None], encoder_out.mask[None])
    return decoder.teacher_forced(batched, torch.tensor([list(gold)]))[0]


@dataclass
class BeamResult:
    labels: list[int]
    score: float  # negated summed log-prob of the chosen path
    ended: bool


def beam_search(encoder_out: EncoderOutput, decoder: Method3Decoder, beam: int = BEAM_SIZE,
                max_len: int = MAX_DECODE_LEN) -> BeamResult:
    """Beam search over duplicate-free label sequences terminated by the end symbol.

    Every end-expansion of a live path becomes a candidate; live paths are pruned
    to ``beam``. Search stops once the best candidate is no worse than every live
    path, since scores only grow along a path. Falls back to the best live path if
    nothing ended within ``max_len`` steps.
    """
    end = decoder.end
    n_out = decoder.num_labels + 1
    live: list[tuple[float, list[int], int, torch.Tensor]] = [(0.0, [], decoder.begin, encoder_out.pooled)]
    finished: list[tuple[float, list[int]]] = []
    with torch.no_grad():
        for _ in range(max_len):
            k = len(live)
            enc = EncoderOutput(
                encoder_out.pooled.expand(k, -1),
                encoder_out.tokens.expand(k, -1, -1),
                encoder_out.mask.expand(k, -1),
            )
            prev = torch.tensor([p[2] for p in live])
            hidden = torch.stack([p[3] for p in live])
            logp, new_hidden = decoder.step(prev, hidden, enc)
            logp = logp.tolist()
            candidates = []
            for j, (score, labels, _, _) in enumerate(live):
                for sym in range(n_out):
                    if sym != end and sym in labels:
                        continue
                    s = score - logp[j][sym]
                    if s == float("inf"):  # zero-probability expansion
                        continue
                    if sym == end:
                        finished.append((s, labels))
                    else:
                        candidates.append((s, labels + [sym], sym, new_hidden[j]))
            candidates.sort(key=lambda c: c[0])
            live = candidates[:beam]
            best_done = min((f[0] for f in finished), default=float("inf"))
            if not live or best_done <= live[0][0]:
                break
    if finished:
        score, labels = min(finished, key=lambda f: f[0])
        return BeamResult(labels, score, True)
    score, labels = live[0][0], live[0][1]
    return BeamResult(labels, score, False)


def m3_beam_search(encoder_out: EncoderOutput, decoder: Method3Decoder, beam: int = BEAM_SIZE,
                   max_len: int = MAX_DECODE_LEN) -> list[int]:
    """Decoded label list, never empty.

    A bare end symbol as the best path is replaced by the most probable first-step
    label.
    """
    result = beam_search(encoder_out, decoder, beam, max_len)
    if result.labels:
        return result.labels
    with torch.no_grad():
        logp, _ = m3_step(decoder.begin, encoder_out.pooled, encoder_out, decoder)
    return [int(torch.argmax(logp[: decoder.num_labels]))]

import string

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from multisense.encoder import (
    MAX_SEQ_LEN, EncoderConfig, EncoderUnavailable, ToyEncoder, build_encoder, encode_pair, slice_batch, tokenize,
    truncate_pair,
)
from oracles import central_difference, relative_error


def toy(**kw) -> ToyEncoder:
    return ToyEncoder(EncoderConfig(**kw))


# frozen from a direct simulation of the removal loop
@pytest.mark.parametrize("lengths, expected", [((300, 300), (255, 254)), ((10, 10), (10, 10)), ((600, 1), (508, 1))])
def test_truncate_pair(lengths, expected):
    a, b = truncate_pair(list(range(lengths[0])), list(range(lengths[1])), 509)
    assert (len(a), len(b)) == expected
    assert a == list(range(len(a))) and b == list(range(len(b)))


def test_truncate_budget_too_small():
    with pytest.raises(ValueError):
        truncate_pair([1], [2], 1)


def test_tokenize():
    assert tokenize("The Market, fell.") == ["the", "market", ",", "fell", "."]


def test_same_input_twice_identical():
    enc = toy(hidden_dim=8)
    a, b = encode_pair("prices rose", "sales fell", enc), encode_pair("prices rose", "sales fell", enc)
    assert torch.equal(a.pooled, b.pooled) and torch.equal(a.tokens, b.tokens) and torch.equal(a.mask, b.mask)


def test_long_pair_truncated_to_512():
    enc = toy(hidden_dim=4)
    out = encode_pair(" ".join(["w"] * 400), " ".join(["v"] * 197), enc)
    assert out.tokens.shape[0] == MAX_SEQ_LEN
    assert int(out.mask.sum()) == MAX_SEQ_LEN


def test_pooled_is_mean_of_four_rows_for_single_token_args():
    enc = toy(hidden_dim=8)
    out = encode_pair("alpha", "beta", enc)
    assert out.tokens.shape[0] == 5
    table = enc.embedding.detach()
    rows = [table[enc.bucket(t)] for t in ("alpha", "<sep>", "beta", "</s>")]
    assert torch.allclose(out.pooled, torch.stack(rows).mean(0), atol=1e-7)


def test_same_token_same_seed():
    assert torch.equal(toy(seed=3).toy_embed("x"), toy(seed=3).toy_embed("x"))


def test_different_seeds_differ():
    for s in range(100):
        assert not torch.equal(toy(seed=2 * s, vocab_hash_buckets=64).embedding,
                               toy(seed=2 * s + 1, vocab_hash_buckets=64).embedding)


def test_trainable_flag():
    assert toy(trainable=True).embedding.requires_grad
    assert not toy(trainable=False).embedding.requires_grad


def test_embedding_gradient_matches_finite_differences():
    enc = ToyEncoder(EncoderConfig(hidden_dim=4, vocab_hash_buckets=8), dtype=torch.float64)
    batch = enc.prepare([("one two", "three"), ("four", "five six seven")])
    weight = torch.randn(4, dtype=torch.float64, generator=torch.Generator().manual_seed(1))

    def loss(table):
        enc.embedding.data.copy_(table)
        out = enc(batch)
        return torch.tanh(out.pooled @ weight).sum() + (out.tokens ** 2).sum() * 0.01

    start = enc.embedding.detach().clone()
    enc.embedding.grad = None
    loss(start).backward()
    analytic = enc.embedding.grad.clone()
    numeric = central_difference(lambda t: loss(t).detach(), start)
    assert relative_error(analytic, numeric) < 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(hidden_dim=1)
    with pytest.raises(ValueError):
        EncoderConfig(kind="bert")
    with pytest.raises(ValueError):
        EncoderConfig(max_seq_len=600)


def test_empty_text_rejected():
    with pytest.raises(ValueError, match="empty text"):
        encode_pair("  ", "x", toy())


def test_adapter_without_model_name_is_unavailable():
    with pytest.raises(EncoderUnavailable):
        build_encoder(EncoderConfig(kind="external-adapter"))


def test_slice_batch_trims_padding():
    enc = toy(hidden_dim=4)
    prep = enc.prepare([("a", "b"), ("a b c d e", "f g h")])
    sub = slice_batch(prep, torch.tensor([0]))
    assert sub["ids"].shape == (1, 5)
    out_full = enc(prep)
    out_sub = enc(sub)
    assert torch.allclose(out_full.pooled[0], out_sub.pooled[0])


printable = st.text(string.printable, min_size=1, max_size=60).filter(lambda s: s.strip())


@settings(max_examples=60, deadline=None)
@given(printable, printable)
def test_forward_backward_finite_and_mask_counts_tokens(a1, a2):
    enc = toy(hidden_dim=6, vocab_hash_buckets=64)
    batch = enc.prepare([(a1, a2), ("x", "y")])
    out = enc(batch)
    assert torch.isfinite(out.pooled).all() and torch.isfinite(out.tokens).all()
    assert int(out.mask[0].sum()) == len(enc.token_stream(a1, a2))
    assert (out.tokens[~out.mask] == 0).all()
    out.pooled.sum().backward()
    assert torch.isfinite(enc.embedding.grad).all()

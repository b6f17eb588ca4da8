"""Shared fixtures-in-code for model-level tests."""

import numpy as np

from diaphon.corpus import CognatePair, build_corpus
from diaphon.model import EmbeddingMode, ModelConfig, TransducerModel

IN_SYMS = ["p", "t", "k", "a", "u"]
OUT_SYMS = ["b", "d", "o", "i"]


def tiny_corpus(languages=("l1", "l2")):
    pairs = []
    for lang in languages:
        pairs.append(CognatePair(lang, tuple(IN_SYMS), tuple(OUT_SYMS)))
    return build_corpus(pairs)


def tiny_model(seed=0, mode=EmbeddingMode.DENSE, languages=("l1", "l2"),
               lang_dim=3, emb_dim=4, hidden_dim=5, max_decode_len=16):
    config = ModelConfig(
        lang_dim=lang_dim, emb_dim=emb_dim, hidden_dim=hidden_dim,
        mode=mode, max_decode_len=max_decode_len, seed=seed,
    )
    return TransducerModel.create(config, tiny_corpus(languages))


def random_pair(rng, model, max_x=4, max_y=4, min_x=1, min_y=1):
    nx = int(rng.integers(min_x, max_x + 1))
    ny = int(rng.integers(min_y, max_y + 1))
    x = rng.integers(0, len(model.input_vocab), size=nx)
    # output ids must be real segments, not the reserved markers
    lo = 3
    y = rng.integers(lo, len(model.output_vocab), size=ny)
    return x.astype(np.int64), y.astype(np.int64)

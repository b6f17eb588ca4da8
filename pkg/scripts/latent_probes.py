#!/usr/bin/env python3
"""Latent-space probes on a binary-embedding model: activation heatmap,
single-bit-flip neighborhoods, sampling regimes, and the echo experiment.

Trains a small straight-through model on the synthetic benchmark, then
runs every probe and prints compact summaries.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from diaphon.benchmarks import accuracy_benchmark_corpus
from diaphon.latent import (
    SampleFamily,
    SamplingRegime,
    activity_heatmap,
    echo_experiment,
    make_echo_cohorts,
    nearest_neighbors,
    sample_latent,
)
from diaphon.model import EmbeddingMode, ModelConfig
from diaphon.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--words", type=int, default=300)
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--lang-dim", type=int, default=16)
    args = ap.parse_args()

    corpus = accuracy_benchmark_corpus(n_words=args.words, seed=1)
    mcfg = ModelConfig(lang_dim=args.lang_dim, emb_dim=28, hidden_dim=44,
                       mode=EmbeddingMode.STRAIGHT_THROUGH, seed=args.seed)
    model = train(corpus, mcfg, TrainConfig(epochs=args.epochs, seed=args.seed))

    heat = activity_heatmap(model)
    print("active dims per language:",
          {l: n for l, n in heat.active_per_language.items()},
          f"({heat.inactive_dimensions} dims inactive everywhere)")

    etymon = corpus.pairs[0].etymon
    report = nearest_neighbors(model, corpus.pairs[0].language, etymon)
    print(f"bit-flip neighborhood of {' '.join(etymon)!r}: "
          f"{report.unique_outputs} unique outputs of {len(report.outputs)} flips")

    etyma = [p.etymon for p in corpus.pairs[:50:5]]
    for p_val in (0.2, 0.4, 0.6, 0.8):
        regime = SamplingRegime(SampleFamily.BINOMIAL, p_val)
        sample = sample_latent(model, regime, etyma, seed=args.seed)
        print(f"binomial p={p_val}: mean unique outputs {sample.mean_unique:.2f}")

    cohorts = make_echo_cohorts(
        [p.etymon for p in corpus.pairs[:36:6]],
        ["p", "t", "k", "b", "d", "g"],
        exclude=lambda v: v[0] in ("k", "g") and len(v) > 1 and v[1] in ("i", "e"),
    )
    echo = echo_experiment(model, cohorts, [0.2, 0.4, 0.6, 0.8], seed=args.seed)
    for r in echo.results:
        print(f"echo p={r.p:g}: {r.proportion_agreeing:.3f} of {r.n_pairs} "
              f"output pairs agree at the word end")


if __name__ == "__main__":
    main()

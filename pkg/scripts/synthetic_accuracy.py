#!/usr/bin/env python3
"""Accuracy benchmark on the synthetic three-language corpus.

Runs the stratified K-fold protocol for each embedding mode and prints a
WER/PER table; with --out, also writes the per-mode reports.

    python scripts/synthetic_accuracy.py --words 500 --epochs 200 --jobs 2
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from diaphon.benchmarks import accuracy_benchmark_corpus
from diaphon.model import EmbeddingMode, ModelConfig
from diaphon.training import TrainConfig, decoded_report, metrics_report, run_kfold


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--words", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--lang-dim", type=int, default=16)
    ap.add_argument("--emb-dim", type=int, default=28)
    ap.add_argument("--hidden-dim", type=int, default=44)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    corpus = accuracy_benchmark_corpus(n_words=args.words, seed=1)
    print(f"corpus: {len(corpus)} pairs, {len(corpus.languages)} languages, "
          f"{len(corpus.input_vocab)} input segments")

    print(f"{'mode':<10}{'WER':>8}{'PER':>8}{'minutes':>10}")
    for mode in EmbeddingMode:
        mcfg = ModelConfig(lang_dim=args.lang_dim, emb_dim=args.emb_dim,
                           hidden_dim=args.hidden_dim, mode=mode, seed=args.seed)
        tcfg = TrainConfig(epochs=args.epochs, seed=args.seed, k=args.k, jobs=args.jobs)
        t0 = time.perf_counter()
        result = run_kfold(corpus, mcfg, tcfg)
        minutes = (time.perf_counter() - t0) / 60
        print(f"{mode.value:<10}{result.overall.wer:>8.3f}"
              f"{result.overall.per:>8.3f}{minutes:>10.1f}")
        if args.out:
            outdir = args.out / mode.value
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "metrics.tsv").write_text(metrics_report(result), encoding="utf-8")
            (outdir / "decoded.tsv").write_text(decoded_report(result.records), encoding="utf-8")


if __name__ == "__main__":
    main()

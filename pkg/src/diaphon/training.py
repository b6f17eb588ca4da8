"""Mini-batch maximum-likelihood training and the K-fold experiment driver."""

from __future__ import annotations

import concurrent.futures
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import tensor as T
from .corpus import Corpus, FoldSplit, make_folds, subset
from .metrics import ErrorRates, EvalRecord, evaluate
from .model import ModelConfig, TransducerModel


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 0.001
    seed: int = 0
    k: int = 10
    train_on_all: bool = False  # analysis runs: fit every form, no folds
    clip_norm: float | None = None  # opt-in; off reproduces the plain recipe
    jobs: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch size and learning rate positive")

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingDiverged(RuntimeError):
    pass


def _encode_pairs(corpus: Corpus, pairs):
    items = []
    for p in pairs:
        items.append(
            (
                corpus.input_vocab.encode(p.etymon),
                corpus.output_vocab.encode(p.reflex),
                p.language,
            )
        )
    return items


def train(corpus: Corpus, model_config: ModelConfig, train_config: TrainConfig,
          indices=None, log=None) -> TransducerModel:
    """Train a fresh model on the given pairs (all of them by default).

    Loss per batch is the negative marginal log-likelihood summed over
    pairs, divided by the batch's total output-token count (terminator
    included), i.e. mean per-token cross-entropy under the alignment-
    marginalized model. Batch order reshuffles every epoch from the seed.
    """
    pairs = corpus.pairs if indices is None else subset(corpus, indices)
    if not pairs:
        raise ValueError("empty training set")
    model = TransducerModel.create(model_config, corpus)
    items = _encode_pairs(corpus, pairs)
    params = model.parameters()
    state = T.AdamState.for_params(params, learning_rate=train_config.learning_rate)
    order_rng = T.seeded_rng(("batch-order", train_config.seed))
    n = len(items)
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        perm = order_rng.permutation(n)
        epoch_nll, epoch_tokens = 0.0, 0
        for start in range(0, n, bs):
            batch = [items[i] for i in perm[start : start + bs]]
            logp, tokens = model.log_likelihood_batch(batch)
            loss = T.sum_all(logp) * (-1.0 / tokens)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingDiverged(
                    f"non-finite loss {loss_value} at epoch {epoch}, "
                    f"batch {start // bs} (batch size {len(batch)})"
                )
            T.zero_grads(params)
            T.backward(loss)
            if train_config.clip_norm is not None:
                T.clip_gradients(params, train_config.clip_norm)
            T.adam_step(params, state)
            epoch_nll += loss_value * tokens
            epoch_tokens += tokens
        if log is not None:
            log(epoch, epoch_nll / max(epoch_tokens, 1))
    T.zero_grads(params)
    return model


def batch_loss(model: TransducerModel, corpus: Corpus, pairs) -> float:
    """Mean per-token negative log-likelihood of the pairs under the model."""
    items = _encode_pairs(corpus, pairs)
    with T.no_grad():
        logp, tokens = model.log_likelihood_batch(items)
    return float(-logp.data.sum() / tokens)


def decode_pairs(model: TransducerModel, corpus: Corpus, pairs,
                 chunk: int = 512) -> list[EvalRecord]:
    records = []
    for start in range(0, len(pairs), chunk):
        block = pairs[start : start + chunk]
        xs = [corpus.input_vocab.encode(p.etymon) for p in block]
        langs = [p.language for p in block]
        outs = model.decode_batch(xs, langs)
        for p, out in zip(block, outs):
            records.append(EvalRecord(p.language, p.etymon, p.reflex, tuple(out)))
    return records


@dataclass
class FoldResult:
    fold: int
    records: list[EvalRecord]
    overall: ErrorRates
    by_language: dict[str, ErrorRates]


@dataclass
class KFoldResult:
    folds: list[FoldResult]
    overall: ErrorRates
    by_language: dict[str, ErrorRates]

    @property
    def records(self) -> list[EvalRecord]:
        out = []
        for f in self.folds:
            out.extend(f.records)
        return out


def fold_seed(master_seed: int, fold: int) -> int:
    """Deterministic per-fold seed (independent of process hash salts)."""
    mixed = np.random.SeedSequence([master_seed & ((1 << 64) - 1), fold])
    return int(mixed.generate_state(1, np.uint32)[0])


def _run_fold(corpus: Corpus, model_config: ModelConfig, train_config: TrainConfig,
              split: FoldSplit) -> FoldResult:
    seed_value = fold_seed(train_config.seed, split.fold)
    mcfg = replace(model_config, seed=seed_value)
    tcfg = replace(train_config, seed=seed_value)
    model = train(corpus, mcfg, tcfg, indices=split.train_indices)
    records = decode_pairs(model, corpus, subset(corpus, split.test_indices))
    overall, by_language = evaluate(records)
    return FoldResult(split.fold, records, overall, by_language)


def _single_threaded_blas() -> None:
    # workers each own one core; nested BLAS threading only adds contention
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def run_kfold(corpus: Corpus, model_config: ModelConfig,
              train_config: TrainConfig) -> KFoldResult:
    """K independent train/decode rounds over stratified held-out splits.

    Fold models use independent seeds derived from the master seed; folds
    run in parallel when train_config.jobs > 1 (they share no state).
    Aggregates pool every held-out pair across folds.
    """
    splits = make_folds(corpus, train_config.k, train_config.seed)
    if train_config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=train_config.jobs, initializer=_single_threaded_blas
        ) as ex:
            futures = [
                ex.submit(_run_fold, corpus, model_config, train_config, split)
                for split in splits
            ]
            results = [f.result() for f in futures]
    else:
        results = [_run_fold(corpus, model_config, train_config, split) for split in splits]
    results.sort(key=lambda r: r.fold)
    pooled = [r for fr in results for r in fr.records]
    overall, by_language = evaluate(pooled)
    return KFoldResult(results, overall, by_language)


# ---------------------------------------------------------------------------
# reports


def metrics_report(result: KFoldResult) -> str:
    """TSV: language, fold, WER, PER; per-fold rows then pooled aggregates.

    Aggregate rows use fold = 'all'; the pooled-over-languages row uses
    language = 'ALL'.
    """
    lines = ["language\tfold\twer\tper"]
    for fr in result.folds:
        for lang, rates in sorted(fr.by_language.items()):
            lines.append(f"{lang}\t{fr.fold}\t{rates.wer:.6f}\t{rates.per:.6f}")
        lines.append(f"ALL\t{fr.fold}\t{fr.overall.wer:.6f}\t{fr.overall.per:.6f}")
    for lang, rates in sorted(result.by_language.items()):
        lines.append(f"{lang}\tall\t{rates.wer:.6f}\t{rates.per:.6f}")
    lines.append(f"ALL\tall\t{result.overall.wer:.6f}\t{result.overall.per:.6f}")
    return "\n".join(lines) + "\n"


def decoded_report(records) -> str:
    """TSV: language, etymon, gold, predicted, correct?"""
    lines = ["language\tetymon\tgold\tpredicted\tcorrect"]
    for r in records:
        lines.append(
            "\t".join(
                (
                    r.language,
                    " ".join(r.etymon),
                    " ".join(r.gold),
                    " ".join(r.predicted),
                    "1" if r.correct else "0",
                )
            )
        )
    return "\n".join(lines) + "\n"

"""Latent embedding-space probes: activation heatmaps, single-bit
perturbation neighborhoods, random sampling across distribution regimes,
and the echo-cohort final-agreement experiment."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import EmbeddingMode, TransducerModel
from .tensor import seeded_rng


class ModeMismatchError(ValueError):
    """An experiment was asked to run against the wrong embedding mode."""


def _require_mode(model: TransducerModel, mode: EmbeddingMode, what: str) -> None:
    if model.config.mode is not mode:
        raise ModeMismatchError(
            f"{what} needs a {mode.value} model, got {model.config.mode.value}"
        )


# ---------------------------------------------------------------------------
# activation heatmap


@dataclass(frozen=True)
class HeatmapReport:
    languages: tuple[str, ...]
    matrix: np.ndarray  # (|L|, lang_dim) of {0, 1}
    active_per_language: dict[str, int]
    inactive_dimensions: int  # columns that are zero for every language

    def to_tsv(self) -> str:
        dims = self.matrix.shape[1]
        lines = ["language\t" + "\t".join(f"d{j}" for j in range(dims))]
        for lang, row in zip(self.languages, self.matrix):
            lines.append(lang + "\t" + "\t".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def activity_heatmap(model: TransducerModel) -> HeatmapReport:
    """Binary activation matrix of the language embeddings (one row per
    language) plus per-language active counts and globally dark columns."""
    _require_mode(model, EmbeddingMode.STRAIGHT_THROUGH, "activity heatmap")
    matrix = model.language_matrix()
    languages = tuple(model.languages)
    active = {lang: int(row.sum()) for lang, row in zip(languages, matrix)}
    inactive = int((matrix.sum(axis=0) == 0).sum())
    return HeatmapReport(languages, matrix, active, inactive)


# ---------------------------------------------------------------------------
# single-bit perturbation neighborhoods


@dataclass(frozen=True)
class PerturbationReport:
    language: str
    etymon: tuple[str, ...]
    outputs: tuple[tuple[int, tuple[str, ...]], ...]  # (flipped dim, decode)
    unique_outputs: int

    def to_tsv(self) -> str:
        lines = ["flipped_dimension\toutput"]
        for dim, out in self.outputs:
            lines.append(f"{dim}\t{' '.join(out)}")
        return "\n".join(lines) + "\n"


def nearest_neighbors(model: TransducerModel, language: str, etymon) -> PerturbationReport:
    """Decode the etymon under every single-bit flip of the language's
    binarized embedding."""
    _require_mode(model, EmbeddingMode.STRAIGHT_THROUGH, "bit-flip neighborhoods")
    etymon = tuple(etymon)
    base = model.language_matrix()[model.language_row(language)]
    x = model.input_vocab.encode(etymon)
    dims = base.shape[0]
    variants = np.tile(base, (dims, 1))
    variants[np.arange(dims), np.arange(dims)] = 1.0 - variants.diagonal()
    outs = model.decode_batch([x] * dims, z_override=variants)
    outputs = tuple((d, tuple(o)) for d, o in enumerate(outs))
    return PerturbationReport(language, etymon, outputs, len({o for _, o in outputs}))


# ---------------------------------------------------------------------------
# random sampling regimes


class SampleFamily(str, Enum):
    GAUSSIAN = "gaussian"
    BETA = "beta"
    BINOMIAL = "binomial"


_FAMILY_MODE = {
    SampleFamily.GAUSSIAN: EmbeddingMode.DENSE,
    SampleFamily.BETA: EmbeddingMode.SIGMOID,
    SampleFamily.BINOMIAL: EmbeddingMode.STRAIGHT_THROUGH,
}


@dataclass(frozen=True)
class SamplingRegime:
    family: SampleFamily
    parameter: float  # sigma, alpha = beta, or p
    count: int = 100

    def __post_init__(self):
        if self.family is SampleFamily.GAUSSIAN and self.parameter <= 0:
            raise ValueError("gaussian sigma must be positive")
        if self.family is SampleFamily.BETA and self.parameter <= 0:
            raise ValueError("beta shape must be positive")
        if self.family is SampleFamily.BINOMIAL and not 0 < self.parameter < 1:
            raise ValueError("binomial p must lie in (0, 1)")


def sample_embeddings(regime: SamplingRegime, dims: int, rng) -> np.ndarray:
    """Draw embeddings directly in the activated space of the matching mode."""
    n = regime.count
    if regime.family is SampleFamily.GAUSSIAN:
        return rng.normal(0.0, regime.parameter, size=(n, dims))
    if regime.family is SampleFamily.BETA:
        return rng.beta(regime.parameter, regime.parameter, size=(n, dims))
    return (rng.random((n, dims)) < regime.parameter).astype(np.float64)


@dataclass(frozen=True)
class SampleReport:
    regime: SamplingRegime
    unique_per_etymon: tuple[int, ...]
    mean_unique: float
    outputs: tuple[tuple[tuple[str, ...], ...], ...] = field(repr=False)

    def to_tsv(self) -> str:
        lines = ["etymon_index\tunique_outputs"]
        for i, u in enumerate(self.unique_per_etymon):
            lines.append(f"{i}\t{u}")
        lines.append(f"mean\t{self.mean_unique:.6f}")
        return "\n".join(lines) + "\n"


def sample_latent(model: TransducerModel, regime: SamplingRegime, etyma,
                  seed: int) -> SampleReport:
    """Decode each etymon under `regime.count` sampled embeddings.

    Samples live in the activated embedding space and bypass the mode
    activation; the regime family must match the model's mode
    (gaussian -> dense, beta -> sigmoid, binomial -> binary).
    """
    wanted = _FAMILY_MODE[regime.family]
    if model.config.mode is not wanted:
        raise ModeMismatchError(
            f"{regime.family.value} samples pair with {wanted.value} models, "
            f"got {model.config.mode.value}"
        )
    rng = seeded_rng(("latent-sample", seed))
    z = sample_embeddings(regime, model.config.lang_dim, rng)
    all_outputs = []
    unique = []
    for etymon in etyma:
        x = model.input_vocab.encode(tuple(etymon))
        outs = [tuple(o) for o in model.decode_batch([x] * regime.count, z_override=z)]
        all_outputs.append(tuple(outs))
        unique.append(len(set(outs)))
    return SampleReport(
        regime, tuple(unique), float(np.mean(unique)), tuple(all_outputs)
    )


# ---------------------------------------------------------------------------
# echo-form experiment


@dataclass(frozen=True)
class EchoCohort:
    """Variants of a base etymon differing only in the initial segment."""

    base: tuple[str, ...]
    variants: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        for v in self.variants:
            if len(v) != len(self.base) or v[1:] != self.base[1:]:
                raise ValueError("cohort variants must differ from the base "
                                 "only at the initial segment")


def make_echo_cohorts(bases, initials, exclude=None) -> list[EchoCohort]:
    """Substitute each initial consonant into each base; `exclude` is a
    predicate over the variant segment tuple (True drops the variant)."""
    cohorts = []
    for base in bases:
        base = tuple(base)
        variants = []
        for c in initials:
            variant = (c,) + base[1:]
            if exclude is not None and exclude(variant):
                continue
            variants.append(variant)
        if variants:
            cohorts.append(EchoCohort(base, tuple(variants)))
    return cohorts


def common_suffix_length(a, b) -> int:
    n = 0
    for x, y in zip(reversed(a), reversed(b)):
        if x != y:
            break
        n += 1
    return n


def final_agreement(a, b) -> float:
    """Length of the common suffix over the mean length; 1.0 when both are
    empty (identical outputs agree by definition)."""
    mean_len = (len(a) + len(b)) / 2.0
    if mean_len == 0:
        return 1.0
    return common_suffix_length(a, b) / mean_len


@dataclass(frozen=True)
class EchoRegimeResult:
    p: float
    proportion_agreeing: float
    n_pairs: int
    ratios: tuple[float, ...] = field(repr=False)


@dataclass(frozen=True)
class EchoReport:
    results: tuple[EchoRegimeResult, ...]
    skipped_cohorts: int

    def to_tsv(self) -> str:
        lines = ["p\tproportion_agreeing\tn_pairs"]
        for r in self.results:
            lines.append(f"{r.p:g}\t{r.proportion_agreeing:.6f}\t{r.n_pairs}")
        return "\n".join(lines) + "\n"


def echo_experiment(model: TransducerModel, cohorts, p_values, seed: int) -> EchoReport:
    """For each Bernoulli density regime, decode every cohort member under a
    fresh sampled binary embedding and measure within-cohort final
    agreement.

    Outputs are stripped of suprasegmental marks before comparison. For
    each unordered output pair the agreement ratio is the common suffix
    length over the mean length; the reported proportion counts ratios
    above 0.5, pooled over cohorts.
    """
    _require_mode(model, EmbeddingMode.STRAIGHT_THROUGH, "echo experiment")
    rng = seeded_rng(("echo", seed))
    skipped = sum(1 for c in cohorts if not c.variants)
    live = [c for c in cohorts if c.variants]
    results = []
    vocab = model.output_vocab
    for p in p_values:
        ratios: list[float] = []
        for cohort in live:
            # one fresh embedding per decoded form
            zs = sample_embeddings(
                SamplingRegime(SampleFamily.BINOMIAL, p, count=len(cohort.variants)),
                model.config.lang_dim, rng,
            )
            xs = [model.input_vocab.encode(v) for v in cohort.variants]
            decoded = model.decode_batch(xs, z_override=zs)
            outs = [
                tuple(s for s in out if not vocab.is_suprasegmental(s))
                for out in decoded
            ]
            for i in range(len(outs)):
                for j in range(i + 1, len(outs)):
                    ratios.append(final_agreement(outs[i], outs[j]))
        agreeing = sum(1 for r in ratios if r > 0.5)
        results.append(
            EchoRegimeResult(
                p,
                agreeing / len(ratios) if ratios else 0.0,
                len(ratios),
                tuple(ratios),
            )
        )
    return EchoReport(tuple(results), skipped)

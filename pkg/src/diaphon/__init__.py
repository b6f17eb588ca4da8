"""Sound-change transduction across related languages with dense, sigmoid,
and binary language embeddings, plus analysis tooling for accuracy, error
provenance, genetic signal, and the latent embedding space."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CognatePair,
    Corpus,
    FoldSplit,
    RewriteRule,
    Segment,
    Vocabulary,
    build_corpus,
    generate_synthetic,
    load_corpus,
    make_folds,
    random_lexicon,
    save_corpus,
    syllabic_lexicon,
)
from .metrics import EvalRecord, evaluate, levenshtein, per, wer  # noqa: F401
from .model import (  # noqa: F401
    EmbeddingMode,
    ModelConfig,
    TransducerModel,
    load_model,
    save_model,
)
from .training import TrainConfig, run_kfold, train  # noqa: F401

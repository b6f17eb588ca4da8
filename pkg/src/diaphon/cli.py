"""Command-line pipeline: corpus synthesis, training, evaluation, and the
embedding-space analyses, each writing TSV outputs plus a run manifest.

Exit codes: 0 success, 2 usage, 3 missing/unreadable input, 4 incompatible
configuration (e.g. a binary-only probe on a dense model), 1 anything else.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    CorpusFormatError,
    load_corpus,
    load_rules,
    generate_synthetic,
    save_corpus,
    syllabic_lexicon,
)
from .error_analysis import (
    agreement_report,
    breakdown_report,
    classify_errors,
    error_agreement,
    extract_rules,
)
from .latent import (
    ModeMismatchError,
    SampleFamily,
    SamplingRegime,
    activity_heatmap,
    echo_experiment,
    make_echo_cohorts,
    nearest_neighbors,
    sample_latent,
)
from .metrics import EvalRecord
from .model import (
    CheckpointError,
    EmbeddingMode,
    ModelConfig,
    load_model,
    save_model,
)
from .phylo import (
    cosine_distance_matrix,
    emit_newick,
    generalized_quartet_distance,
    neighbor_join,
    parse_newick,
)
from .training import (
    TrainConfig,
    decode_pairs,
    decoded_report,
    metrics_report,
    run_kfold,
    train,
)

OUT_DIR_ENV = "DIAPHON_OUT"

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONFIG = 4


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifest


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Path, command: str, options: dict, inputs: dict) -> None:
    """Everything needed to reproduce the run bit for bit: resolved options,
    seeds, input digests, and the artifact/numpy versions. No timestamps."""
    manifest = {
        "artifact": {"name": "diaphon", "version": __version__},
        "numpy_version": np.__version__,
        "command": command,
        "options": options,
        "inputs": {
            name: {"path": str(p), "sha256": file_digest(p)} for name, p in inputs.items()
        },
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def ensure_outdir(args) -> Path:
    out = args.out or os.environ.get(OUT_DIR_ENV)
    if not out:
        raise UsageError("no output directory: pass --out or set $" + OUT_DIR_ENV)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolved_options(args, skip=("config", "func", "out")) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        out[key] = value if not isinstance(value, Path) else str(value)
    return out


# ---------------------------------------------------------------------------
# shared loading helpers


def need_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def load_eval_records(path) -> list[EvalRecord]:
    """Read a decoded-outputs TSV (language, etymon, gold, predicted, correct)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:4] != ["language", "etymon", "gold", "predicted"]:
            raise CorpusFormatError(f"{path}: not a decoded-outputs TSV")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 4:
                raise CorpusFormatError(f"{path}: line {line_no}: bad row")
            lang, ety, gold, pred = cols[:4]
            records.append(
                EvalRecord(
                    lang,
                    tuple(ety.split()) if ety else (),
                    tuple(gold.split()) if gold else (),
                    tuple(pred.split()) if pred else (),
                )
            )
    if not records:
        raise CorpusFormatError(f"{path}: no records")
    return records


def load_lexicon(path) -> list[tuple[str, ...]]:
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                words.append(tuple(line.split()))
    if not words:
        raise CorpusFormatError(f"{path}: empty lexicon")
    return words


def load_cohorts(path):
    """Cohort file: base_segments TAB initials TAB optional exclusion regex
    (matched against the space-joined variant)."""
    bases, initials_per, excludes = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise CorpusFormatError(f"{path}: line {line_no}: need base and initials")
            bases.append(tuple(cols[0].split()))
            initials_per.append(cols[1].split())
            excludes.append(re.compile(cols[2]) if len(cols) > 2 and cols[2] else None)
    cohorts = []
    for base, initials, pattern in zip(bases, initials_per, excludes):
        exclude = None
        if pattern is not None:
            exclude = lambda v, pat=pattern: bool(pat.search(" ".join(v)))
        cohorts.extend(make_echo_cohorts([base], initials, exclude=exclude))
    if not cohorts:
        raise CorpusFormatError(f"{path}: no cohorts")
    return cohorts


def model_config_from(args, seed: int) -> ModelConfig:
    return ModelConfig(
        lang_dim=args.lang_dim,
        emb_dim=args.emb_dim,
        hidden_dim=args.hidden_dim,
        mode=EmbeddingMode.parse(args.mode),
        max_decode_len=args.max_decode_len,
        seed=seed,
        bidirectional_encoder=not args.unidirectional,
    )


def train_config_from(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        k=getattr(args, "k", 10),
        clip_norm=args.clip_norm,
        jobs=getattr(args, "jobs", 1),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    outdir = ensure_outdir(args)
    rules_path = need_file(args.rules, "rule file")
    rules = load_rules(rules_path)
    inputs = {"rules": rules_path}
    if args.lexicon:
        lex_path = need_file(args.lexicon, "lexicon file")
        lexicon = load_lexicon(lex_path)
        inputs["lexicon"] = lex_path
    else:
        lexicon = syllabic_lexicon(
            args.consonants.split(), args.vowels.split(), args.words,
            seed=args.seed, min_syllables=args.min_syllables,
            max_syllables=args.max_syllables, coda_prob=args.coda_prob,
        )
    corpus = generate_synthetic(lexicon, rules, seed=args.seed)
    save_corpus(corpus, outdir / "corpus.tsv")
    write_manifest(outdir, "synth", resolved_options(args), inputs)
    print(f"wrote {len(corpus)} pairs over {len(corpus.languages)} languages "
          f"to {outdir / 'corpus.tsv'}")


def cmd_train(args):
    outdir = ensure_outdir(args)
    corpus_path = need_file(args.corpus, "corpus")
    corpus = load_corpus(corpus_path)
    model = train(corpus, model_config_from(args, args.seed), train_config_from(args))
    save_model(model, outdir / "model.ckpt")
    write_manifest(outdir, "train", resolved_options(args), {"corpus": corpus_path})
    print(f"wrote {outdir / 'model.ckpt'}")


def cmd_kfold(args):
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    outdir = ensure_outdir(args)
    corpus_path = need_file(args.corpus, "corpus")
    corpus = load_corpus(corpus_path)
    result = run_kfold(corpus, model_config_from(args, args.seed), train_config_from(args))
    (outdir / "metrics.tsv").write_text(metrics_report(result), encoding="utf-8")
    (outdir / "decoded.tsv").write_text(decoded_report(result.records), encoding="utf-8")
    write_manifest(outdir, "kfold", resolved_options(args), {"corpus": corpus_path})
    print(f"aggregate WER {result.overall.wer:.4f} PER {result.overall.per:.4f} "
          f"over {result.overall.n} held-out pairs")


def cmd_decode(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    corpus_path = need_file(args.corpus, "corpus")
    corpus = load_corpus(corpus_path)
    records = decode_pairs(model, corpus, corpus.pairs)
    (outdir / "decoded.tsv").write_text(decoded_report(records), encoding="utf-8")
    write_manifest(outdir, "decode", resolved_options(args),
                   {"corpus": corpus_path, "model": Path(args.model)})
    print(f"decoded {len(records)} pairs to {outdir / 'decoded.tsv'}")


def cmd_errors(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    corpus_path = need_file(args.corpus, "corpus")
    corpus = load_corpus(corpus_path)
    inventory = extract_rules(model, corpus.pairs)
    (outdir / "inventory.tsv").write_text(inventory.to_tsv(), encoding="utf-8")
    inputs = {"corpus": corpus_path, "model": Path(args.model)}
    preds = {}
    for spec in args.pred or []:
        name, _, path = spec.partition("=")
        if not path:
            raise UsageError(f"--pred wants NAME=PATH, got {spec!r}")
        preds[name] = load_eval_records(need_file(path, f"predictions {name}"))
        inputs[f"pred:{name}"] = Path(path)
    if preds:
        breakdowns = {
            name: classify_errors(model, inventory, records)
            for name, records in preds.items()
        }
        (outdir / "breakdown.tsv").write_text(breakdown_report(breakdowns), encoding="utf-8")
    if len(preds) >= 2:
        names, matrix = error_agreement(preds)
        (outdir / "agreement.tsv").write_text(agreement_report(names, matrix), encoding="utf-8")
    write_manifest(outdir, "errors", resolved_options(args), inputs)
    print(f"wrote rule inventory ({len(inventory.all_rules())} rules)"
          + (f", breakdowns for {len(preds)} prediction sets" if preds else ""))


def cmd_tree(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    emb = model.language_matrix()
    dmat = cosine_distance_matrix(
        {lang: emb[i] for i, lang in enumerate(model.languages)}
    )
    tree = neighbor_join(dmat)
    (outdir / "distances.tsv").write_text(dmat.to_tsv(), encoding="utf-8")
    (outdir / "tree.nwk").write_text(emit_newick(tree) + "\n", encoding="utf-8")
    inputs = {"model": Path(args.model)}
    if args.reference:
        ref_path = need_file(args.reference, "reference tree")
        reference = parse_newick(ref_path.read_text(encoding="utf-8").strip())
        gqd = generalized_quartet_distance(tree, reference)
        (outdir / "gqd.txt").write_text(f"{gqd:.6f}\n", encoding="utf-8")
        inputs["reference"] = ref_path
        print(f"GQD vs reference: {gqd:.6f}")
    write_manifest(outdir, "tree", resolved_options(args), inputs)
    print(f"wrote {outdir / 'tree.nwk'}")


def cmd_heatmap(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    report = activity_heatmap(model)
    (outdir / "heatmap.tsv").write_text(report.to_tsv(), encoding="utf-8")
    summary = ["language\tactive_dimensions"]
    for lang, n in report.active_per_language.items():
        summary.append(f"{lang}\t{n}")
    summary.append(f"(inactive everywhere)\t{report.inactive_dimensions}")
    (outdir / "summary.tsv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    write_manifest(outdir, "heatmap", resolved_options(args), {"model": Path(args.model)})
    print(f"active dims per language: "
          f"{min(report.active_per_language.values())}"
          f"-{max(report.active_per_language.values())}; "
          f"{report.inactive_dimensions} dims inactive everywhere")


def cmd_neighbors(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    report = nearest_neighbors(model, args.language, tuple(args.etymon.split()))
    (outdir / "neighbors.tsv").write_text(report.to_tsv(), encoding="utf-8")
    write_manifest(outdir, "neighbors", resolved_options(args), {"model": Path(args.model)})
    print(f"{report.unique_outputs} unique outputs across "
          f"{len(report.outputs)} single-bit flips")


def cmd_sample(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    regime = SamplingRegime(SampleFamily(args.family), args.param, count=args.count)
    inputs = {"model": Path(args.model)}
    if args.etyma:
        ety_path = need_file(args.etyma, "etyma file")
        etyma = load_lexicon(ety_path)
        inputs["etyma"] = ety_path
    else:
        corpus_path = need_file(args.corpus, "corpus")
        corpus = load_corpus(corpus_path)
        rng = np.random.default_rng(args.seed)
        picks = rng.choice(len(corpus.pairs), size=min(args.n_etyma, len(corpus.pairs)),
                           replace=False)
        etyma = [corpus.pairs[i].etymon for i in sorted(picks)]
        inputs["corpus"] = corpus_path
    report = sample_latent(model, regime, etyma, seed=args.seed)
    (outdir / "sample.tsv").write_text(report.to_tsv(), encoding="utf-8")
    write_manifest(outdir, "sample", resolved_options(args), inputs)
    print(f"mean unique outputs per etymon: {report.mean_unique:.2f}")


def cmd_echo(args):
    outdir = ensure_outdir(args)
    model = load_model(need_file(args.model, "checkpoint"))
    cohort_path = need_file(args.cohorts, "cohort file")
    cohorts = load_cohorts(cohort_path)
    p_values = [float(p) for p in args.p_list.split(",")]
    report = echo_experiment(model, cohorts, p_values, seed=args.seed)
    (outdir / "echo.tsv").write_text(report.to_tsv(), encoding="utf-8")
    write_manifest(outdir, "echo", resolved_options(args),
                   {"model": Path(args.model), "cohorts": cohort_path})
    for r in report.results:
        print(f"p={r.p:g}: {r.proportion_agreeing:.3f} of {r.n_pairs} pairs agree")
    if report.skipped_cohorts:
        print(f"warning: {report.skipped_cohorts} cohorts had no variants",
              file=sys.stderr)


# ---------------------------------------------------------------------------
# argument plumbing


def add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--mode", default=None, help="dense | sigmoid | st")
    p.add_argument("--lang-dim", type=int, default=None)
    p.add_argument("--emb-dim", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--max-decode-len", type=int, default=None)
    p.add_argument("--unidirectional", action="store_true", default=None,
                   help="drop the backward encoder direction")


def add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)


DEFAULTS = {
    "mode": "dense",
    "lang_dim": 128,
    "emb_dim": 128,
    "hidden_dim": 256,
    "max_decode_len": 64,
    "unidirectional": False,
    "epochs": 200,
    "batch_size": 256,
    "learning_rate": 0.001,
    "clip_norm": None,
    "seed": 0,
    "k": 10,
    "jobs": 1,
    "count": 100,
    "n_etyma": 100,
    "p_list": "0.2,0.4,0.6,0.8",
    "words": 500,
    "consonants": "p t k b d g s m n l r",
    "vowels": "a e i o u",
    "min_syllables": 1,
    "max_syllables": 2,
    "coda_prob": 0.5,
}


def apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset options from a key=value file, then from the defaults
    table. Command-line flags always win."""
    from_file = {}
    if getattr(args, "config", None):
        path = need_file(args.config, "config file")
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {line_no}: expected key=value")
            key, _, value = line.partition("=")
            from_file[key.strip().replace("-", "_")] = value.strip()
    for key, value in vars(args).items():
        if value is not None:
            continue
        if key in from_file:
            raw = from_file[key]
            default = DEFAULTS.get(key)
            if isinstance(default, bool):
                setattr(args, key, raw.lower() in ("1", "true", "yes"))
            elif isinstance(default, int):
                setattr(args, key, int(raw))
            elif isinstance(default, float):
                setattr(args, key, float(raw))
            else:
                setattr(args, key, raw)
        elif key in DEFAULTS:
            setattr(args, key, DEFAULTS[key])
    unknown = set(from_file) - set(vars(args))
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diaphon",
        description="Sound-change transduction across related languages, with "
                    "error-provenance and embedding-space analysis.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def new(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV})")
        p.add_argument("--config", default=None, help="key=value defaults file")
        p.set_defaults(func=func)
        return p

    p = new("synth", cmd_synth, "generate a rule-derived synthetic corpus")
    p.add_argument("--rules", required=True, help="rewrite-rule file")
    p.add_argument("--lexicon", default=None, help="proto lexicon file (one word per line)")
    p.add_argument("--words", type=int, default=None)
    p.add_argument("--consonants", default=None)
    p.add_argument("--vowels", default=None)
    p.add_argument("--min-syllables", type=int, default=None)
    p.add_argument("--max-syllables", type=int, default=None)
    p.add_argument("--coda-prob", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = new("train", cmd_train, "train one model on a full corpus")
    p.add_argument("--corpus", required=True)
    add_model_flags(p)
    add_train_flags(p)

    p = new("kfold", cmd_kfold, "stratified K-fold train/decode/evaluate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel fold workers")
    add_model_flags(p)
    add_train_flags(p)

    p = new("decode", cmd_decode, "decode a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)

    p = new("errors", cmd_errors, "rule inventories, error provenance, agreement")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, help="gold corpus for inventories")
    p.add_argument("--pred", action="append", default=None,
                   help="NAME=decoded.tsv; repeat for agreement matrices")

    p = new("tree", cmd_tree, "neighbor-joined tree from language embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", default=None, help="reference Newick for GQD")

    p = new("heatmap", cmd_heatmap, "binary activation heatmap (st mode)")
    p.add_argument("--model", required=True)

    p = new("neighbors", cmd_neighbors, "single-bit-flip decode neighborhood")
    p.add_argument("--model", required=True)
    p.add_argument("--language", required=True)
    p.add_argument("--etymon", required=True, help="space-separated segments")

    p = new("sample", cmd_sample, "decode under sampled latent embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--family", required=True, choices=[f.value for f in SampleFamily])
    p.add_argument("--param", type=float, required=True)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--etyma", default=None, help="etyma file (one per line)")
    p.add_argument("--corpus", default=None, help="corpus to draw etyma from")
    p.add_argument("--n-etyma", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = new("echo", cmd_echo, "echo-cohort final-agreement experiment (st mode)")
    p.add_argument("--model", required=True)
    p.add_argument("--cohorts", required=True)
    p.add_argument("--p-list", default=None, help="comma-separated densities")
    p.add_argument("--seed", type=int, default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config_file(args)
        if getattr(args, "command", None) == "sample" and not (args.etyma or args.corpus):
            raise UsageError("sample needs --etyma or --corpus")
        args.func(args)
    except UsageError as e:
        print(f"diaphon: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"diaphon: {e}", file=sys.stderr)
        return EXIT_IO
    except (ModeMismatchError, CheckpointError) as e:
        print(f"diaphon: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusFormatError, ValueError) as e:
        print(f"diaphon: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

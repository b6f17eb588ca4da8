"""Segmented cognate corpora: loading, vocabularies, K-fold splits, and a
rule-driven synthetic corpus generator.

Corpus file format (UTF-8, one pair per line):

    language_id<TAB>etymon_segments<TAB>reflex_segments

Segments are separated by single spaces and may be multi-codepoint. Lines
beginning with ``#`` are comments. Inside a field, ``\\\\`` escapes a
backslash and ``\\#`` a literal hash; any other backslash sequence is a
format error.

Rewrite-rule file format (one rule per line):

    lhs -> rhs / left _ right

where the context part is optional, ``#`` marks a word boundary, ``[a b c]``
is a segment class, and an empty rhs (or the symbol ``∅``) deletes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import seeded_rng

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
RESERVED = (PAD, BOS, EOS)

#: Symbols flagged as suprasegmental (stress/pitch marks) by default.
DEFAULT_SUPRASEGMENTALS = frozenset({"ˈ", "ˌ", "ˊ", "ˋ", "ˆ", "ˇ"})


class CorpusFormatError(ValueError):
    """Malformed corpus or rule file; message carries the line number."""


@dataclass(frozen=True)
class Segment:
    """One phonological segment; suprasegmental marks are standalone segments."""

    symbol: str
    suprasegmental: bool = False

    def __post_init__(self):
        if not self.symbol or any(ch.isspace() for ch in self.symbol):
            raise ValueError(f"bad segment symbol: {self.symbol!r}")


@dataclass(frozen=True)
class CognatePair:
    language: str
    etymon: tuple[str, ...]
    reflex: tuple[str, ...]

    def __post_init__(self):
        if not self.etymon or not self.reflex:
            raise ValueError("etymon and reflex must be non-empty")


class Vocabulary:
    """Dense symbol <-> id table; optionally seeded with reserved tokens."""

    def __init__(self, reserved: tuple[str, ...] = (), suprasegmentals=DEFAULT_SUPRASEGMENTALS):
        self.segments: list[Segment] = []
        self._index: dict[str, int] = {}
        self._suprasegmentals = frozenset(suprasegmentals)
        for sym in reserved:
            self.add(sym)

    def add(self, symbol: str) -> int:
        idx = self._index.get(symbol)
        if idx is None:
            idx = len(self.segments)
            self._index[symbol] = idx
            self.segments.append(
                Segment(symbol, suprasegmental=symbol in self._suprasegmentals)
            )
        return idx

    def id(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise KeyError(f"symbol not in vocabulary: {symbol!r}") from None

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def __len__(self) -> int:
        return len(self.segments)

    def symbols(self) -> list[str]:
        return [s.symbol for s in self.segments]

    def encode(self, symbols) -> np.ndarray:
        return np.array([self.id(s) for s in symbols], dtype=np.int64)

    def is_suprasegmental(self, symbol: str) -> bool:
        return self.segments[self.id(symbol)].suprasegmental

    def to_dict(self) -> dict:
        return {
            "symbols": self.symbols(),
            "suprasegmental": [s.suprasegmental for s in self.segments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        v = cls()
        for sym, supra in zip(d["symbols"], d["suprasegmental"]):
            v._index[sym] = len(v.segments)
            v.segments.append(Segment(sym, suprasegmental=bool(supra)))
        return v


@dataclass
class Corpus:
    """Immutable after construction; safe to share across threads."""

    pairs: list[CognatePair]
    languages: dict[str, str]  # id -> display name, insertion-ordered
    input_vocab: Vocabulary
    output_vocab: Vocabulary

    @property
    def language_ids(self) -> list[str]:
        return list(self.languages)

    def language_index(self, language: str) -> int:
        try:
            return self.language_ids.index(language)
        except ValueError:
            raise KeyError(f"unknown language: {language!r}") from None

    def counts_by_language(self) -> dict[str, int]:
        counts = {lang: 0 for lang in self.languages}
        for p in self.pairs:
            counts[p.language] += 1
        return counts

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]


def _unescape(text: str, line_no: int) -> str:
    if "\\" not in text:
        return text
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in ("\\", "#"):
                bad = text[i : i + 2]
                raise CorpusFormatError(f"line {line_no}: unknown escape {bad!r}")
            out.append(text[i + 1])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _escape(text: str) -> str:
    text = text.replace("\\", "\\\\")
    if text.startswith("#"):
        text = "\\" + text
    return text


def build_corpus(pairs, language_names=None, suprasegmentals=DEFAULT_SUPRASEGMENTALS) -> Corpus:
    """Intern vocabularies for a list of CognatePair, preserving order."""
    languages: dict[str, str] = {}
    in_vocab = Vocabulary(suprasegmentals=suprasegmentals)
    out_vocab = Vocabulary(reserved=RESERVED, suprasegmentals=suprasegmentals)
    for p in pairs:
        languages.setdefault(p.language, (language_names or {}).get(p.language, p.language))
        for s in p.etymon:
            in_vocab.add(s)
        for s in p.reflex:
            out_vocab.add(s)
    return Corpus(list(pairs), languages, in_vocab, out_vocab)


def load_corpus(path, suprasegmentals=DEFAULT_SUPRASEGMENTALS) -> Corpus:
    """Parse a corpus file; duplicates and line order are preserved."""
    pairs: list[CognatePair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise CorpusFormatError(
                    f"line {line_no}: expected 3 tab-separated columns, got {len(cols)}"
                )
            lang, ety, refl = (_unescape(c, line_no) for c in cols)
            etymon = tuple(s for s in ety.split(" ") if s)
            reflex = tuple(s for s in refl.split(" ") if s)
            if not lang or not etymon or not reflex:
                raise CorpusFormatError(f"line {line_no}: empty field")
            pairs.append(CognatePair(lang, etymon, reflex))
    if not pairs:
        raise CorpusFormatError(f"{path}: no data rows")
    return build_corpus(pairs, suprasegmentals=suprasegmentals)


def serialize_corpus(corpus: Corpus) -> str:
    lines = []
    for p in corpus.pairs:
        lines.append(
            "\t".join(
                (_escape(p.language), " ".join(map(_escape, p.etymon)), " ".join(map(_escape, p.reflex)))
            )
        )
    return "\n".join(lines) + "\n"


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_corpus(corpus))


def make_folds(corpus: Corpus, k: int, seed: int) -> list[FoldSplit]:
    """Stratified K-fold splits: per-language shuffle, then K contiguous chunks.

    Test set k holds roughly 1/K of each language's forms (chunk sizes differ
    by at most one). Languages with fewer than K forms are distributed best
    effort, leaving some folds without test items for that language.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    rng = seeded_rng(("folds", seed))
    test_sets: list[list[int]] = [[] for _ in range(k)]
    by_language: dict[str, list[int]] = {lang: [] for lang in corpus.languages}
    for i, p in enumerate(corpus.pairs):
        by_language[p.language].append(i)
    for lang in corpus.language_ids:
        idx = np.array(by_language[lang], dtype=np.int64)
        rng.shuffle(idx)
        for fold, chunk in enumerate(np.array_split(idx, k)):
            test_sets[fold].extend(int(i) for i in chunk)
    folds = []
    all_indices = set(range(len(corpus.pairs)))
    for fold, test in enumerate(test_sets):
        test_sorted = tuple(sorted(test))
        train_sorted = tuple(sorted(all_indices.difference(test)))
        folds.append(FoldSplit(fold, train_sorted, test_sorted))
    return folds


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class RewriteRule:
    """Replace `target` by `replacement` when the contexts match.

    Contexts are frozensets of admissible symbols, with the word boundary
    spelled ``#``; None means unconditioned. Application is one full
    left-to-right pass, restarting after each replacement site.
    """

    target: tuple[str, ...]
    replacement: tuple[str, ...]
    left: frozenset[str] | None = None
    right: frozenset[str] | None = None

    def __post_init__(self):
        if not self.target:
            raise ValueError("rule target must be non-empty")

    def apply(self, word: tuple[str, ...]) -> tuple[str, ...]:
        out: list[str] = []
        i = 0
        n = len(self.target)
        while i < len(word):
            if tuple(word[i : i + n]) == self.target:
                left_sym = out[-1] if out else "#"
                right_sym = word[i + n] if i + n < len(word) else "#"
                if (self.left is None or left_sym in self.left) and (
                    self.right is None or right_sym in self.right
                ):
                    out.extend(self.replacement)
                    i += n
                    continue
            out.append(word[i])
            i += 1
        return tuple(out)


def _parse_context(token: str, line_no: int) -> frozenset[str] | None:
    token = token.strip()
    if not token:
        return None
    if token.startswith("[") and token.endswith("]"):
        syms = tuple(token[1:-1].split())
        if not syms:
            raise CorpusFormatError(f"line {line_no}: empty segment class")
        return frozenset(syms)
    return frozenset({token})


def parse_rule(line: str, line_no: int = 0) -> RewriteRule:
    body, _, ctx = line.partition("/")
    lhs, arrow, rhs = body.partition("->")
    if not arrow:
        raise CorpusFormatError(f"line {line_no}: missing '->'")
    target = tuple(lhs.split())
    rhs = rhs.strip()
    replacement = () if rhs in ("", "∅") else tuple(rhs.split())
    left = right = None
    if ctx.strip():
        if "_" not in ctx:
            raise CorpusFormatError(f"line {line_no}: context must contain '_'")
        left_part, _, right_part = ctx.partition("_")
        left = _parse_context(left_part, line_no)
        right = _parse_context(right_part, line_no)
    if not target:
        raise CorpusFormatError(f"line {line_no}: empty rule target")
    return RewriteRule(target, replacement, left, right)


def load_rules(path) -> dict[str, list[RewriteRule]]:
    """Rule file with language sections: a ``[language_id]`` header line
    starts each language's ordered rule list."""
    rules: dict[str, list[RewriteRule]] = {}
    current: str | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                rules.setdefault(current, [])
                continue
            if current is None:
                raise CorpusFormatError(f"line {line_no}: rule before any [language] header")
            rules[current].append(parse_rule(line, line_no))
    if not rules:
        raise CorpusFormatError(f"{path}: no language sections")
    return rules


def generate_synthetic(proto_lexicon, language_rules: dict[str, list], seed: int = 0) -> Corpus:
    """Derive one reflex per (proto word, language) by cascading rules.

    Rules run in list order, each as a full left-to-right pass over the
    current form. A pure function of (lexicon, rules, seed); the seed is
    reserved for stochastic rule variants and does not currently perturb
    the output.
    """
    del seed
    if not proto_lexicon:
        raise ValueError("proto lexicon is empty")
    pairs: list[CognatePair] = []
    for word in proto_lexicon:
        word = tuple(word)
        for lang, rules in language_rules.items():
            form = word
            for rule in rules:
                for sym in rule.replacement:
                    if sym in RESERVED:
                        raise ValueError(f"rule replacement uses reserved token {sym!r}")
                form = rule.apply(form)
            if not form:
                raise ValueError(
                    f"rules deleted every segment of {' '.join(word)!r} in {lang}"
                )
            pairs.append(CognatePair(lang, word, form))
    return build_corpus(pairs)


def random_lexicon(inventory, n_words: int, min_len: int, max_len: int, seed: int,
                   onsets=None) -> list[tuple[str, ...]]:
    """Uniform random proto words over a segment inventory (deduplicated)."""
    rng = seeded_rng(("lexicon", seed))
    inventory = list(inventory)
    words: list[tuple[str, ...]] = []
    seen = set()
    while len(words) < n_words:
        length = int(rng.integers(min_len, max_len + 1))
        word = tuple(inventory[int(i)] for i in rng.integers(0, len(inventory), size=length))
        if onsets is not None and word[0] not in onsets:
            continue
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def syllabic_lexicon(consonants, vowels, n_words: int, seed: int,
                     min_syllables: int = 2, max_syllables: int = 3,
                     coda_prob: float = 0.4) -> list[tuple[str, ...]]:
    """Random proto words built from CV(C) syllables (deduplicated).

    Phonotactically constrained words make desk-scale rule learning behave
    like a vocabulary rather than arbitrary symbol strings.
    """
    rng = seeded_rng(("syllables", seed))
    consonants, vowels = list(consonants), list(vowels)
    words: list[tuple[str, ...]] = []
    seen = set()
    while len(words) < n_words:
        syllables = int(rng.integers(min_syllables, max_syllables + 1))
        word: list[str] = []
        for _ in range(syllables):
            word.append(consonants[int(rng.integers(0, len(consonants)))])
            word.append(vowels[int(rng.integers(0, len(vowels)))])
            if rng.random() < coda_prob:
                word.append(consonants[int(rng.integers(0, len(consonants)))])
        key = tuple(word)
        if key not in seen:
            seen.add(key)
            words.append(key)
    return words


def subset(corpus: Corpus, indices) -> list[CognatePair]:
    return [corpus.pairs[i] for i in indices]

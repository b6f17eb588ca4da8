"""Synthetic benchmark families: deterministic rule systems over a small
segment inventory, used by the test suite and the experiment scripts.

Two setups:
  * a three-language accuracy benchmark (independent rule sets), and
  * a six-language family whose rule sets nest along a known binary tree
    (shared innovations per clade), for genetic-signal recovery.
"""

from __future__ import annotations

from .corpus import Corpus, generate_synthetic, parse_rule, syllabic_lexicon

CONSONANTS = ["p", "t", "k", "b", "d", "g", "s", "m", "n", "l", "r"]
VOWELS = ["a", "e", "i", "o", "u"]
_V = "[a e i o u]"


def accuracy_benchmark_rules() -> dict[str, list]:
    """Three pseudo-languages with independent deterministic rule sets:
    plain substitutions, a word-final change, and context-sensitive
    lenition between vowels."""
    return {
        "L1": [
            parse_rule("p -> f"),
            parse_rule("d -> t / _ #"),
            parse_rule("a -> o"),
        ],
        "L2": [
            parse_rule(f"k -> g / {_V} _ {_V}"),
            parse_rule("u -> y"),
            parse_rule("r -> l"),
        ],
        "L3": [
            parse_rule(f"s -> z / {_V} _ {_V}"),
            parse_rule("o -> u"),
            parse_rule("g -> k / _ #"),
        ],
    }


def accuracy_benchmark_corpus(n_words: int = 500, seed: int = 1) -> Corpus:
    lexicon = syllabic_lexicon(
        CONSONANTS, VOWELS, n_words, seed=seed,
        min_syllables=1, max_syllables=2, coda_prob=0.5,
    )
    return generate_synthetic(lexicon, accuracy_benchmark_rules(), seed=seed)


#: Unrooted topology of the nested family: two four-language inner clades.
FAMILY_REFERENCE_NEWICK = "(((A,B),(C,D)),(E,F));"


def nested_family_rules() -> dict[str, list]:
    """Six languages whose innovations nest along FAMILY_REFERENCE_NEWICK:
    {A,B,C,D} share one change, {A,B}, {C,D} and {E,F} each share another,
    and every language adds one private change."""
    abcd = [parse_rule("a -> o")]
    ab = [parse_rule("p -> f")]
    cd = [parse_rule("k -> g")]
    ef = [parse_rule("s -> x")]
    return {
        "A": abcd + ab + [parse_rule("r -> l")],
        "B": abcd + ab + [parse_rule("d -> t / _ #")],
        "C": abcd + cd + [parse_rule("u -> y")],
        "D": abcd + cd + [parse_rule("m -> n / _ #")],
        "E": ef + [parse_rule(f"t -> d / {_V} _ {_V}")],
        "F": ef + [parse_rule("o -> u")],
    }


def nested_family_corpus(n_words: int = 350, seed: int = 20) -> Corpus:
    lexicon = syllabic_lexicon(
        CONSONANTS, VOWELS, n_words, seed=seed,
        min_syllables=1, max_syllables=2, coda_prob=0.5,
    )
    return generate_synthetic(lexicon, nested_family_rules(), seed=seed)


def rules_file_text(rules: dict[str, list]) -> str:
    """Serialize a rule table in the CLI's rule-file format."""
    lines = []
    for lang, lang_rules in rules.items():
        lines.append(f"[{lang}]")
        for r in lang_rules:
            body = " ".join(r.target) + " -> " + (" ".join(r.replacement) or "∅")
            if r.left is not None or r.right is not None:
                left = _ctx(r.left)
                right = _ctx(r.right)
                body += f" / {left} _ {right}".rstrip()
            lines.append(body)
    return "\n".join(lines) + "\n"


def _ctx(side) -> str:
    if side is None:
        return ""
    if len(side) == 1:
        return next(iter(side))
    return "[" + " ".join(sorted(side)) + "]"

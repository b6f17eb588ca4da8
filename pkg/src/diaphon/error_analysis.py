"""Alignment-based sound-change extraction and error provenance.

Rules are environment-free single-segment correspondences read off the
best monotone alignment: each input position maps to the (possibly empty)
group of output segments aligned to it. Erroneous edits in a prediction
are classified by where the same correspondence is attested: the form's
own language, any other language, or nowhere.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus import CognatePair
from .metrics import EvalRecord
from .model import TransducerModel

Rule = tuple[str, tuple[str, ...]]  # source segment -> aligned output group


@dataclass(frozen=True)
class SoundChangeRule:
    language: str
    source: str
    target: tuple[str, ...]  # empty tuple = deletion


class RuleInventory:
    """Per-language attested correspondence sets built from gold data."""

    def __init__(self):
        self._by_language: dict[str, set[Rule]] = {}

    def add(self, language: str, source: str, target: tuple[str, ...]) -> None:
        self._by_language.setdefault(language, set()).add((source, tuple(target)))

    def attested(self, language: str, rule: Rule) -> bool:
        return rule in self._by_language.get(language, ())

    def attested_elsewhere(self, language: str, rule: Rule) -> bool:
        return any(
            rule in rules
            for lang, rules in self._by_language.items()
            if lang != language
        )

    def languages(self) -> list[str]:
        return sorted(self._by_language)

    def rules(self, language: str) -> set[Rule]:
        return set(self._by_language.get(language, ()))

    def all_rules(self) -> list[SoundChangeRule]:
        out = []
        for lang in self.languages():
            for source, target in sorted(self._by_language[lang]):
                out.append(SoundChangeRule(lang, source, target))
        return out

    def to_tsv(self) -> str:
        lines = ["language\tsource\ttarget"]
        for r in self.all_rules():
            lines.append(f"{r.language}\t{r.source}\t{' '.join(r.target) or '∅'}")
        return "\n".join(lines) + "\n"


def alignment_rules(model: TransducerModel, etymon, output, language: str) -> list[Rule]:
    """Per-input-position rules from the best alignment of output to etymon.

    Position j maps to the concatenation, in order, of output segments
    aligned to j; positions receiving nothing yield deletions. Concatenating
    all targets in position order reconstructs the output exactly.
    """
    if not output:  # an empty output deletes every input position
        return [(seg, ()) for seg in etymon]
    x = model.input_vocab.encode(etymon)
    y = model.output_vocab.encode(output)
    path = model.viterbi_alignment(x, y, language)
    groups: list[list[str]] = [[] for _ in etymon]
    for t, j in enumerate(path):
        groups[j].append(output[t])
    return [(seg, tuple(group)) for seg, group in zip(etymon, groups)]


def extract_rules(model: TransducerModel, pairs: list[CognatePair]) -> RuleInventory:
    """Attested inventory: align every gold pair and pool rules per language."""
    inventory = RuleInventory()
    for p in pairs:
        for source, target in alignment_rules(model, p.etymon, p.reflex, p.language):
            inventory.add(p.language, source, target)
    return inventory


@dataclass(frozen=True)
class ErrorBreakdown:
    same_language: float
    other_language: float
    unmotivated: float
    n_edits: int

    @property
    def has_errors(self) -> bool:
        return self.n_edits > 0


def classify_errors(model: TransducerModel, inventory: RuleInventory,
                    records: list[EvalRecord]) -> ErrorBreakdown:
    """Proportions of erroneous edits attested in the same language, another
    language, or nowhere.

    An edit of a mispredicted form is erroneous iff it does not appear in
    that same pair's gold rule multiset (pair-local definition: the right
    correspondence applied at the right position is never an error, even if
    the rest of the form is wrong).
    """
    counts = Counter()
    for r in records:
        if r.correct:
            continue
        gold_rules = Counter(alignment_rules(model, r.etymon, r.gold, r.language))
        pred_rules = Counter(alignment_rules(model, r.etymon, r.predicted, r.language))
        for rule, k in (pred_rules - gold_rules).items():
            if inventory.attested(r.language, rule):
                counts["same_language"] += k
            elif inventory.attested_elsewhere(r.language, rule):
                counts["other_language"] += k
            else:
                counts["unmotivated"] += k
    total = sum(counts.values())
    if total == 0:
        return ErrorBreakdown(0.0, 0.0, 0.0, 0)
    return ErrorBreakdown(
        counts["same_language"] / total,
        counts["other_language"] / total,
        counts["unmotivated"] / total,
        total,
    )


def breakdown_report(breakdowns: dict[str, ErrorBreakdown]) -> str:
    lines = ["model\tsame_language\tother_language\tunmotivated\tn_edits"]
    for name, b in breakdowns.items():
        lines.append(
            f"{name}\t{b.same_language:.6f}\t{b.other_language:.6f}"
            f"\t{b.unmotivated:.6f}\t{b.n_edits}"
        )
    return "\n".join(lines) + "\n"


def error_agreement(records_by_model: dict[str, list[EvalRecord]]):
    """Share of each model's errors also made by every other model.

    All record lists must cover the same pairs in the same order; a pair's
    identity is its list position. Cell (A, B) = |errors(A) n errors(B)| /
    |errors(A)|; a model with no errors gets an undefined (None) row.
    """
    names = list(records_by_model)
    lists = [records_by_model[n] for n in names]
    length = {len(l) for l in lists}
    if len(length) != 1:
        raise ValueError("models were evaluated on different numbers of pairs")
    for other in lists[1:]:
        for a, b in zip(lists[0], other):
            if (a.language, a.etymon, a.gold) != (b.language, b.etymon, b.gold):
                raise ValueError("models were evaluated on different held-out pairs")
    errors = {n: {i for i, r in enumerate(rs) if not r.correct}
              for n, rs in records_by_model.items()}
    matrix: dict[str, dict[str, float | None]] = {}
    for a in names:
        row: dict[str, float | None] = {}
        for b in names:
            if not errors[a]:
                row[b] = None
            elif a == b:
                row[b] = 1.0
            else:
                row[b] = len(errors[a] & errors[b]) / len(errors[a])
        matrix[a] = row
    return names, matrix


def agreement_report(names, matrix) -> str:
    lines = ["model\t" + "\t".join(names)]
    for a in names:
        cells = []
        for b in names:
            v = matrix[a][b]
            if a == b:
                cells.append("—")
            elif v is None:
                cells.append("n/a")
            else:
                cells.append(f"{v:.6f}")
        lines.append(a + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"

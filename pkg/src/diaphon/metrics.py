"""String metrics over segment sequences: edit distance, WER, PER."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalRecord:
    language: str
    etymon: tuple[str, ...]
    gold: tuple[str, ...]
    predicted: tuple[str, ...]

    @property
    def correct(self) -> bool:
        return self.gold == self.predicted


def levenshtein(a, b) -> int:
    """Unit-cost insert/delete/substitute distance at segment granularity."""
    a, b = tuple(a), tuple(b)
    if len(a) < len(b):
        a, b = b, a
    prev = np.arange(len(b) + 1)
    for i, sa in enumerate(a, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, sb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if sa == sb else 1),
            )
        prev = cur
    return int(prev[-1])


def per(gold, predicted) -> float:
    """Edit distance divided by the length of the longer form."""
    gold, predicted = tuple(gold), tuple(predicted)
    longer = max(len(gold), len(predicted))
    if longer == 0:
        raise ValueError("per: both sequences are empty")
    return levenshtein(gold, predicted) / longer


@dataclass(frozen=True)
class ErrorRates:
    wer: float
    per: float
    n: int


def evaluate(records) -> tuple[ErrorRates, dict[str, ErrorRates]]:
    """Pooled and per-language WER (exact-match errors) and mean PER."""
    records = list(records)
    if not records:
        raise ValueError("evaluate: empty record list")
    by_language: dict[str, list[EvalRecord]] = {}
    for r in records:
        by_language.setdefault(r.language, []).append(r)

    def rates(rs) -> ErrorRates:
        wrong = sum(1 for r in rs if not r.correct)
        mean_per = sum(per(r.gold, r.predicted) for r in rs) / len(rs)
        return ErrorRates(wer=wrong / len(rs), per=mean_per, n=len(rs))

    return rates(records), {lang: rates(rs) for lang, rs in sorted(by_language.items())}


def wer(records) -> float:
    return evaluate(records)[0].wer

"""ASR evaluation metrics.

Word error rate with a full substitution/insertion/deletion decomposition
via minimum-edit-distance alignment, relative improvement metrics, sentence
error rate, per-error-type relative rates, and domain-normalized (macro)
aggregation alongside the usual by-utterance (micro) figures.

Token normalization before alignment is lowercasing plus whitespace
collapsing, nothing deeper, so scores stay deterministic and
corpus-agnostic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "ErrorCounts",
    "AlignmentStep",
    "MetricReport",
    "ErrorTypeRates",
    "DomainComparison",
    "tokenize",
    "align",
    "wer",
    "werr",
    "ser",
    "serr",
    "score_pairs",
    "domain_normalized",
    "error_type_rates",
]


@dataclass(frozen=True)
class ErrorCounts:
    """Substitution/insertion/deletion counts against a reference length."""

    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_len: int = 0

    def __post_init__(self):
        if min(self.substitutions, self.insertions, self.deletions, self.ref_len) < 0:
            raise ValueError("counts must be non-negative")
        if self.substitutions + self.deletions > self.ref_len:
            raise ValueError("substitutions + deletions cannot exceed the reference length")

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    def __add__(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_len + other.ref_len,
        )


@dataclass(frozen=True)
class AlignmentStep:
    """One step of the backtraced alignment: op is 'ok', 'sub', 'ins', or 'del'."""

    op: str
    ref: str | None
    hyp: str | None


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace."""
    return text.lower().split()


def _as_tokens(x: str | Sequence[str]) -> list[str]:
    if isinstance(x, str):
        return tokenize(x)
    return [t.lower() for t in x]


def align(ref: str | Sequence[str], hyp: str | Sequence[str]) -> tuple[ErrorCounts, list[AlignmentStep]]:
    """Minimum-edit-distance alignment with unit costs.

    Ties between equal-cost predecessors resolve substitution first, then
    deletion, then insertion, so the error decomposition is deterministic
    and reproducible. The counts always satisfy S + I + D = edit distance.
    """
    r = _as_tokens(ref)
    h = _as_tokens(hyp)
    n, m = len(r), len(h)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        row, prev = dp[i], dp[i - 1]
        ri = r[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ri == h[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, prev[j] + 1, row[j - 1] + 1)

    steps: list[AlignmentStep] = []
    i, j = n, m
    subs = ins = dels = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (0 if r[i - 1] == h[j - 1] else 1):
            if r[i - 1] == h[j - 1]:
                steps.append(AlignmentStep("ok", r[i - 1], h[j - 1]))
            else:
                steps.append(AlignmentStep("sub", r[i - 1], h[j - 1]))
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            steps.append(AlignmentStep("del", r[i - 1], None))
            dels += 1
            i -= 1
        else:
            steps.append(AlignmentStep("ins", None, h[j - 1]))
            ins += 1
            j -= 1
    steps.reverse()
    return ErrorCounts(subs, ins, dels, n), steps


def wer(counts: ErrorCounts) -> float:
    """(S + I + D) / N. Undefined for an empty reference."""
    if counts.ref_len == 0:
        raise ValueError("WER undefined for ref_len 0")
    return counts.total / counts.ref_len


def werr(base_wer: float, new_wer: float) -> float:
    """Relative error-rate reduction in percent; negative when new is worse."""
    if base_wer <= 0:
        raise ValueError("werr requires a positive baseline error rate")
    return 100.0 * (base_wer - new_wer) / base_wer


def ser(pairs: Sequence[tuple[str | Sequence[str], str | Sequence[str]]]) -> float:
    """Fraction of (ref, hyp) pairs with any error at all."""
    if not pairs:
        raise ValueError("ser requires a non-empty pair list")
    wrong = sum(1 for ref, hyp in pairs if align(ref, hyp)[0].total > 0)
    return wrong / len(pairs)


def serr(base_ser: float, new_ser: float) -> float:
    """Relative sentence-error-rate reduction in percent."""
    return werr(base_ser, new_ser)


@dataclass(frozen=True)
class MetricReport:
    """Aggregate scores for one system, with optional per-domain rows.

    The per-domain counts recombine exactly to the global counts.
    """

    wer: float
    ser: float
    counts: ErrorCounts
    utterances: int
    per_domain: dict


def score_pairs(
    pairs: Sequence[tuple[str | Sequence[str], str | Sequence[str]]],
    domains: Sequence[str] | None = None,
) -> MetricReport:
    """Score a system's (ref, hyp) pairs, optionally tagged with domains."""
    if not pairs:
        raise ValueError("score_pairs requires a non-empty pair list")
    if domains is not None and len(domains) != len(pairs):
        raise ValueError("domains must align one-to-one with pairs")
    total = ErrorCounts()
    per_domain: dict[str, dict] = {}
    wrong = 0
    for idx, (ref, hyp) in enumerate(pairs):
        counts, _ = align(ref, hyp)
        total = total + counts
        erred = counts.total > 0
        wrong += erred
        if domains is not None:
            slot = per_domain.setdefault(
                domains[idx], {"counts": ErrorCounts(), "utterances": 0, "wrong": 0}
            )
            slot["counts"] = slot["counts"] + counts
            slot["utterances"] += 1
            slot["wrong"] += erred
    per_domain_rows = {
        domain: {
            "wer": wer(slot["counts"]),
            "ser": slot["wrong"] / slot["utterances"],
            "utterances": slot["utterances"],
            "counts": slot["counts"],
        }
        for domain, slot in per_domain.items()
    }
    return MetricReport(
        wer=wer(total),
        ser=wrong / len(pairs),
        counts=total,
        utterances=len(pairs),
        per_domain=per_domain_rows,
    )


@dataclass(frozen=True)
class DomainComparison:
    """Macro (domain-normalized) and micro (by-utterance) comparison."""

    werr_macro: float
    serr_macro: float | None
    werr_micro: float
    serr_micro: float | None
    per_domain: dict


def domain_normalized(
    base: Mapping[str, Sequence[tuple]],
    new: Mapping[str, Sequence[tuple]],
) -> DomainComparison:
    """Compare two systems with every domain weighted equally.

    ``base`` and ``new`` map each domain to that system's (ref, hyp) pairs.
    Improvements are computed per domain and then averaged unweighted
    (macro); the by-utterance micro figures are returned for contrast.
    A SERR is None wherever its baseline sentence error rate is zero.
    """
    if set(base) != set(new):
        only = sorted(set(base).symmetric_difference(new))
        raise ValueError(f"domains present in one system only: {only}")
    if not base:
        raise ValueError("at least one domain is required")

    per_domain = {}
    werr_values = []
    serr_values = []
    base_total, new_total = ErrorCounts(), ErrorCounts()
    base_wrong = new_wrong = base_utts = new_utts = 0
    for domain in sorted(base):
        base_report = score_pairs(base[domain])
        new_report = score_pairs(new[domain])
        d_werr = werr(base_report.wer, new_report.wer)
        d_serr = serr(base_report.ser, new_report.ser) if base_report.ser > 0 else None
        per_domain[domain] = {
            "base_wer": base_report.wer,
            "new_wer": new_report.wer,
            "werr": d_werr,
            "base_ser": base_report.ser,
            "new_ser": new_report.ser,
            "serr": d_serr,
            "utterances": (base_report.utterances, new_report.utterances),
        }
        werr_values.append(d_werr)
        if d_serr is not None:
            serr_values.append(d_serr)
        base_total = base_total + base_report.counts
        new_total = new_total + new_report.counts
        base_wrong += round(base_report.ser * base_report.utterances)
        new_wrong += round(new_report.ser * new_report.utterances)
        base_utts += base_report.utterances
        new_utts += new_report.utterances

    micro_base_ser = base_wrong / base_utts
    micro_new_ser = new_wrong / new_utts
    return DomainComparison(
        werr_macro=sum(werr_values) / len(werr_values),
        serr_macro=sum(serr_values) / len(serr_values) if serr_values else None,
        werr_micro=werr(wer(base_total), wer(new_total)),
        serr_micro=serr(micro_base_ser, micro_new_ser) if micro_base_ser > 0 else None,
        per_domain=per_domain,
    )


@dataclass(frozen=True)
class ErrorTypeRates:
    """Relative reduction per error type, in percent; None when the baseline
    has no errors of that type (undefined, not zero)."""

    subr: float | None
    insr: float | None
    delr: float | None


def error_type_rates(base: ErrorCounts, new: ErrorCounts) -> ErrorTypeRates:
    """Per-type relative rate reduction, mirroring WERR's form.

    Each rate is 100 * (base_rate - new_rate) / base_rate where a type's
    rate is its count over the system's reference length.
    """
    if base.ref_len == 0 or new.ref_len == 0:
        raise ValueError("error_type_rates requires non-empty references")

    def one(base_count: int, new_count: int, label: str) -> float | None:
        if base_count == 0:
            warnings.warn(f"{label} undefined: baseline has no errors of that type", RuntimeWarning)
            return None
        base_rate = base_count / base.ref_len
        new_rate = new_count / new.ref_len
        return 100.0 * (base_rate - new_rate) / base_rate

    return ErrorTypeRates(
        subr=one(base.substitutions, new.substitutions, "SUBR"),
        insr=one(base.insertions, new.insertions, "INSR"),
        delr=one(base.deletions, new.deletions, "DELR"),
    )

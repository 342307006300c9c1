"""Risk ranking of neighborhoods and ordinal validation against observation.

Predictions are min-max normalized to [0, 1] and dense-ranked descending.
Agreement with an observed ordering is reported three ways — Spearman's rho
(average-rank ties), concordant-pair percentage (ties excluded), and top-k
overlap — because a single "match in relative order" number is ambiguous.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DimensionError, JoinError

TOP_K_LEVELS = (5, 10, 20)


@dataclass(frozen=True)
class RankEntry:
    neighborhood_id: str
    raw_prediction: float
    normalized_score: float
    rank: int


@dataclass(frozen=True)
class RiskRanking:
    """Entries ordered by rank, ties in deterministic id order."""

    entries: tuple[RankEntry, ...]

    def as_mapping(self) -> dict[str, float]:
        return {e.neighborhood_id: e.raw_prediction for e in self.entries}

    def top(self, k: int) -> list[str]:
        return [e.neighborhood_id for e in self.entries[:k]]


@dataclass(frozen=True)
class AgreementReport:
    spearman_rho: float
    concordant_pair_pct: float
    top_k_overlap: dict[int, float]


def build_ranking(predictions: dict[str, float]) -> RiskRanking:
    """Normalize and dense-rank per-neighborhood predictions.

    All-equal predictions map to score 0.5 and rank 1 for every entry (with
    a warning) so degenerate pipelines still emit artifacts.
    """
    if len(predictions) < 2:
        raise DimensionError("ranking needs at least 2 neighborhoods")
    values = np.array([float(v) for v in predictions.values()])
    if not np.all(np.isfinite(values)):
        raise DimensionError("predictions contain non-finite values")

    lo, hi = float(values.min()), float(values.max())
    degenerate = hi == lo
    if degenerate:
        warnings.warn("all predictions equal; scores set to 0.5", stacklevel=2)

    ordered = sorted(predictions.items(), key=lambda kv: (-kv[1], kv[0]))
    distinct_rank: dict[float, int] = {}
    for _, value in ordered:
        distinct_rank.setdefault(value, len(distinct_rank) + 1)
    entries = tuple(
        RankEntry(
            neighborhood_id=nid,
            raw_prediction=float(value),
            normalized_score=0.5 if degenerate else (value - lo) / (hi - lo),
            rank=distinct_rank[value],
        )
        for nid, value in ordered
    )
    return RiskRanking(entries=entries)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ascending ranks 1..n with ties assigned their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of average ranks."""
    ra, rb = average_ranks(a), average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    denom = np.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise DegenerateDataError("rank variance is zero")
    return float(da @ db) / denom


def concordant_pair_pct(a: np.ndarray, b: np.ndarray) -> float:
    """100 * concordant / (concordant + discordant); tied pairs excluded."""
    n = a.size
    concordant = discordant = 0
    for i in range(n - 1):
        da = a[i] - a[i + 1 :]
        db = b[i] - b[i + 1 :]
        prod = np.sign(da) * np.sign(db)
        concordant += int(np.sum(prod > 0))
        discordant += int(np.sum(prod < 0))
    total = concordant + discordant
    if total == 0:
        warnings.warn("all pairs tied; concordance undefined", stacklevel=2)
        return float("nan")
    return 100.0 * concordant / total


def rank_agreement(predicted: RiskRanking, observed: dict[str, float]) -> AgreementReport:
    """Ordinal agreement between a ranking and observed per-id values.

    Key sets must match exactly. Top-k overlap is reported for each k in
    TOP_K_LEVELS not exceeding n, with top-k sets delimited by the same
    deterministic (-value, id) order used for ranking emission.
    """
    pred_map = predicted.as_mapping()
    missing = set(pred_map) - set(observed)
    extra = set(observed) - set(pred_map)
    if missing or extra:
        raise JoinError(
            f"key sets differ; only-predicted={sorted(missing)}, "
            f"only-observed={sorted(extra)}"
        )
    ids = sorted(pred_map)
    p = np.array([pred_map[i] for i in ids])
    o = np.array([observed[i] for i in ids])

    obs_order = [nid for nid, _ in sorted(observed.items(), key=lambda kv: (-kv[1], kv[0]))]
    overlaps = {}
    for k in TOP_K_LEVELS:
        if k > len(ids):
            continue
        overlaps[k] = len(set(predicted.top(k)) & set(obs_order[:k])) / k
    return AgreementReport(
        spearman_rho=spearman_rho(p, o),
        concordant_pair_pct=concordant_pair_pct(p, o),
        top_k_overlap=overlaps,
    )

"""Memorization baseline, ranking metrics, and the leak-inflation model.

The baseline performs no learning: a validation molecule found verbatim in
the training actives scores a fixed 2.0, one found in the training inactives
scores -1.0, and everything else scores the mean of its maximum Tanimoto
similarity to the training actives and to the query ligands.  Since
2.0 > [0, 1] > -1.0, memorized actives always head the ranking, which is the
whole point of the exercise.

Enrichment factors use k = floor(f * N).  Ties are handled explicitly:
``expected`` distributes the straddling tie group proportionally
(hypergeometric expectation), ``optimistic``/``pessimistic`` place its
actives first/last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import SplitRole, TargetDataset
from .fingerprints import Fingerprint
from .simsearch import MismatchedParams


class DegenerateInput(ValueError):
    """Metric undefined for this input (k = 0, no actives, ...)."""


class Provenance(str, Enum):
    EXACT_ACTIVE = "exact_active"
    EXACT_INACTIVE = "exact_inactive"
    SIMILARITY = "similarity"
    UNPARSEABLE = "unparseable"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class BaselineScore:
    value: float
    provenance: Provenance
    max_tc_actives: float | None = None
    max_tc_queries: float | None = None

    def __post_init__(self):
        if self.provenance is Provenance.EXACT_ACTIVE and self.value != 2.0:
            raise ValueError("exact_active score must be 2.0")
        if self.provenance is Provenance.EXACT_INACTIVE and self.value != -1.0:
            raise ValueError("exact_inactive score must be -1.0")
        if self.provenance is Provenance.SIMILARITY \
                and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"similarity score out of range: {self.value}")


class _GroupMax:
    """Max Tanimoto against a fixed fingerprint collection."""

    def __init__(self, fps: list[Fingerprint]):
        self.empty = not fps
        if self.empty:
            return
        if len({f.n_bits for f in fps}) > 1:
            raise MismatchedParams("mixed widths in comparison group")
        self.n_bits = fps[0].n_bits
        self.mat = np.stack([f.words for f in fps])
        self.pops = np.array([f.popcount for f in fps], dtype=np.int64)

    def max_tc(self, fp: Fingerprint) -> float | None:
        if self.empty:
            return None
        if fp.n_bits != self.n_bits:
            raise MismatchedParams("query fingerprint width differs")
        inter = np.bitwise_count(self.mat & fp.words).sum(axis=1,
                                                          dtype=np.int64)
        union = fp.popcount + self.pops - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            tc = np.where(union > 0, inter / union, 0.0)
        return float(tc.max())


class MemorizationBaseline:
    """Per-target scorer over prebuilt training/query indexes.

    When a molecule appears in both training actives and training inactives
    the active rule wins (rules are checked in order) and the conflict is
    recorded in ``conflicts``.
    """

    def __init__(self, target: TargetDataset):
        self.active_keys = {r.canonical for r in
                            target.unique[SplitRole.TRAIN_ACTIVE]}
        self.inactive_keys = {r.canonical for r in
                              target.unique[SplitRole.TRAIN_INACTIVE]}
        self.actives = _GroupMax([r.fingerprint for r in
                                  target.unique[SplitRole.TRAIN_ACTIVE]
                                  if r.fingerprint is not None])
        self.queries = _GroupMax([r.fingerprint for r in
                                  target.unique[SplitRole.QUERY]
                                  if r.fingerprint is not None])
        self.conflicts = sorted(self.active_keys & self.inactive_keys)

    def score(self, canonical: str | None,
              fingerprint: Fingerprint | None) -> BaselineScore:
        if canonical is None or fingerprint is None:
            return BaselineScore(float("-inf"), Provenance.UNPARSEABLE)
        if canonical in self.active_keys:
            return BaselineScore(2.0, Provenance.EXACT_ACTIVE)
        if canonical in self.inactive_keys:
            return BaselineScore(-1.0, Provenance.EXACT_INACTIVE)
        tc_act = self.actives.max_tc(fingerprint)
        tc_qry = self.queries.max_tc(fingerprint)
        value = ((tc_act or 0.0) + (tc_qry or 0.0)) / 2.0
        return BaselineScore(value, Provenance.SIMILARITY, tc_act, tc_qry)


def baseline_score(record, train_actives, train_inactives,
                   queries) -> BaselineScore:
    """Score one record against explicit record groups.

    Convenience wrapper over :class:`MemorizationBaseline` for callers that
    have not built an index; the groups are lists of MoleculeRecords.
    """
    index = object.__new__(MemorizationBaseline)
    index.active_keys = {r.canonical for r in train_actives
                         if r.canonical is not None}
    index.inactive_keys = {r.canonical for r in train_inactives
                           if r.canonical is not None}
    index.actives = _GroupMax([r.fingerprint for r in train_actives
                               if r.fingerprint is not None])
    index.queries = _GroupMax([r.fingerprint for r in queries
                               if r.fingerprint is not None])
    index.conflicts = sorted(index.active_keys & index.inactive_keys)
    return index.score(record.canonical, record.fingerprint)


@dataclass(frozen=True)
class RankEntry:
    record_id: str
    score: float
    active: bool
    provenance: Provenance | None = None


class Ranking:
    """Validation entries sorted by score descending; ties left intact."""

    def __init__(self, entries: list[RankEntry]):
        self.entries = sorted(entries,
                              key=lambda e: (-e.score, e.record_id))
        self.scores = np.array([e.score for e in self.entries], dtype=float)
        self.labels = np.array([e.active for e in self.entries], dtype=bool)

    @property
    def n_total(self) -> int:
        return len(self.entries)

    @property
    def n_active(self) -> int:
        return int(self.labels.sum())


def score_target(target: TargetDataset) -> tuple[Ranking, list[str], MemorizationBaseline]:
    """Score every validation record (duplicates included) for one target.

    Returns the ranking, the record ids that failed to parse (scored -inf),
    and the baseline index (whose ``conflicts`` list is worth reporting).
    """
    baseline = MemorizationBaseline(target)
    entries = []
    unparseable = []
    for role, label in ((SplitRole.VAL_ACTIVE, True),
                        (SplitRole.VAL_INACTIVE, False)):
        for rec in target.records[role]:
            s = baseline.score(rec.canonical, rec.fingerprint)
            if s.provenance is Provenance.UNPARSEABLE:
                unparseable.append(rec.record_id)
            entries.append(RankEntry(rec.record_id, s.value, label,
                                     s.provenance))
    return Ranking(entries), sorted(unparseable), baseline


def rank_validation(scored: list[RankEntry]) -> Ranking:
    return Ranking(scored)


@dataclass(frozen=True)
class EnrichmentResult:
    fraction: float
    k: int
    hits: float
    ef: float
    tie_mode: str


TIE_MODES = ("expected", "optimistic", "pessimistic")


def enrichment_factor(ranking: Ranking, fraction: float,
                      tie_mode: str = "expected") -> EnrichmentResult:
    """EF@fraction with explicit tie handling over the top-k boundary."""
    if tie_mode not in TIE_MODES:
        raise ValueError(f"tie_mode must be one of {TIE_MODES}")
    if not 0.0 < fraction < 1.0:
        raise DegenerateInput(f"fraction must be in (0, 1), got {fraction}")
    n = ranking.n_total
    a = ranking.n_active
    k = math.floor(fraction * n)
    if k < 1:
        raise DegenerateInput(
            f"top fraction {fraction} of {n} entries is empty (k=0)")
    if a < 1:
        raise DegenerateInput("ranking contains no actives")

    hits = 0.0
    taken = 0
    i = 0
    scores, labels = ranking.scores, ranking.labels
    while taken < k and i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        group = j - i
        group_actives = int(labels[i:j].sum())
        slots = min(group, k - taken)
        if slots == group:
            hits += group_actives
        elif tie_mode == "expected":
            hits += group_actives * slots / group
        elif tie_mode == "optimistic":
            hits += min(group_actives, slots)
        else:
            hits += max(0, slots - (group - group_actives))
        taken += slots
        i = j
    ef = (hits / k) / (a / n)
    return EnrichmentResult(fraction, k, hits, ef, tie_mode)


def auroc(ranking: Ranking) -> float:
    """Probability a random active outranks a random inactive; ties at 0.5."""
    n = ranking.n_total
    a = ranking.n_active
    if a == 0 or a == n:
        raise DegenerateInput("need at least one active and one inactive")
    order = np.argsort(ranking.scores, kind="stable")
    sorted_scores = ranking.scores[order]
    ranks = np.empty(n, dtype=float)
    i = 0
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[i:j] = (i + 1 + j) / 2.0   # midrank of positions i+1 .. j
        i = j
    rank_of = np.empty(n, dtype=float)
    rank_of[order] = ranks
    r_active = rank_of[ranking.labels].sum()
    return float((r_active - a * (a + 1) / 2.0) / (a * (n - a)))


# ---------------------------------------------------------------------------
# leak-inflation model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InflationParams:
    n_total: int
    n_active: int
    k: int
    guaranteed: int

    def __post_init__(self):
        if not 0 <= self.guaranteed <= min(self.n_active, self.k) \
                <= self.n_total:
            raise ValueError(
                "need 0 <= guaranteed <= min(actives, k) <= total")
        if self.k < 1 or self.n_active < 1:
            raise ValueError("k and active count must be positive")


def analytic_inflated_ef(p: InflationParams) -> float:
    """Expected EF when g actives are guaranteed into the top k.

    The remaining A-g actives fall uniformly over the other N-g entries:
    expected hits = g + (A-g) * (k-g) / (N-g), normalized by the random
    baseline k * A / N.
    """
    n, a, k, g = p.n_total, p.n_active, p.k, p.guaranteed
    rest = (a - g) * (k - g) / (n - g) if n > g else 0.0
    return (g + rest) / (k * a / n)


def simulate_planted_ef(p: InflationParams, trials: int,
                        seed: int = 0) -> np.ndarray:
    """Monte-Carlo counterpart of :func:`analytic_inflated_ef`.

    Each trial draws uniform random scores for all entries, pins the first
    ``guaranteed`` actives to a fixed top score, and evaluates the expected
    tie mode EF over the top k.  Trial t consumes the t-th consecutive block
    of ``n_total`` draws from ``numpy.random.default_rng(seed)``, which lets
    callers reproduce any single trial.
    """
    n, a, k, g = p.n_total, p.n_active, p.k, p.guaranteed
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=bool)
    labels[:a] = True
    efs = np.empty(trials, dtype=float)
    active_rate = a / n
    for t in range(trials):
        scores = rng.random(n)
        scores[:g] = 2.0
        kth = np.partition(scores, n - k)[n - k]
        above = scores > kth
        n_above = int(above.sum())
        hits = float(labels[above].sum())
        tie = scores == kth
        n_tie = int(tie.sum())
        if n_tie and n_above < k:
            hits += labels[tie].sum() * (k - n_above) / n_tie
        efs[t] = (hits / k) / active_rate
    return efs

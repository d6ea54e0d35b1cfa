"""Tanimoto similarity, thresholded pair search and common-substructure size.

Pair search prunes on popcount bounds: for threshold t a pair with popcounts
(p, q) can only reach t when t*p <= q <= p/t, so records sorted by popcount
are scanned over a window.  Surviving candidates get an exact word-wise
AND/OR popcount, which keeps the output identical to the brute-force double
loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chemgraph import Molecule, canonical_smiles
from .fingerprints import Fingerprint

# slack applied to the popcount window so float rounding can never prune a
# candidate whose exact Tanimoto would pass the threshold
_WINDOW_EPS = 1e-9


class MismatchedParams(ValueError):
    """Fingerprints built with different widths cannot be compared."""


@dataclass(frozen=True)
class SimilarityPair:
    id_a: str
    id_b: str
    tc: float
    mcs_ratio: float | None = None


@dataclass(frozen=True)
class McsResult:
    mcs_atom_count: int
    ratio: float
    exact: bool


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; 0.0 when both fingerprints are empty."""
    if a.n_bits != b.n_bits:
        raise MismatchedParams(
            f"fingerprint widths differ: {a.n_bits} vs {b.n_bits}")
    inter = int(np.bitwise_count(a.words & b.words).sum())
    union = a.popcount + b.popcount - inter
    return inter / union if union else 0.0


def _prep(records: Sequence[tuple[str, Fingerprint]]):
    ids = [r[0] for r in records]
    fps = [r[1] for r in records]
    widths = {f.n_bits for f in fps}
    if len(widths) > 1:
        raise MismatchedParams(f"mixed fingerprint widths: {sorted(widths)}")
    order = sorted(range(len(ids)), key=lambda i: (fps[i].popcount, ids[i]))
    if not order:
        return [], np.zeros((0, 1), dtype=np.uint64), np.zeros(0, dtype=np.int64)
    ids = [ids[i] for i in order]
    mat = np.stack([fps[i].words for i in order])
    pops = np.array([fps[i].popcount for i in order], dtype=np.int64)
    return ids, mat, pops


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")


def _sorted_pairs(found: dict[tuple[str, str], float]) -> list[SimilarityPair]:
    return [SimilarityPair(a, b, tc) for (a, b), tc in
            sorted(found.items(), key=lambda kv: (-kv[1], kv[0]))]


def find_cross_pairs(set_a: Sequence[tuple[str, Fingerprint]],
                     set_b: Sequence[tuple[str, Fingerprint]],
                     threshold: float) -> list[SimilarityPair]:
    """All pairs (x in A, y in B) with Tanimoto >= threshold.

    Output is sorted by (tc descending, id_a, id_b) with ids normalized so
    id_a < id_b, independent of input order or sharding.
    """
    _check_threshold(threshold)
    if not set_a or not set_b:
        return []
    ids_a, mat_a, pops_a = _prep(set_a)
    ids_b, mat_b, pops_b = _prep(set_b)
    if mat_a.shape[1] != mat_b.shape[1]:
        raise MismatchedParams("fingerprint widths differ between sets")
    found: dict[tuple[str, str], float] = {}
    for i, p in enumerate(pops_a.tolist()):
        lo = np.searchsorted(pops_b, threshold * p - _WINDOW_EPS, side="left")
        hi = np.searchsorted(pops_b, p / threshold + _WINDOW_EPS, side="right")
        if lo >= hi:
            continue
        inter = np.bitwise_count(mat_b[lo:hi] & mat_a[i]).sum(axis=1,
                                                              dtype=np.int64)
        union = p + pops_b[lo:hi] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            tc = np.where(union > 0, inter / union, 0.0)
        for j in np.flatnonzero(tc >= threshold).tolist():
            ia, ib = ids_a[i], ids_b[lo + j]
            if ia == ib:
                continue
            key = (ia, ib) if ia < ib else (ib, ia)
            found[key] = float(tc[j])
    return _sorted_pairs(found)


def find_self_pairs(records: Sequence[tuple[str, Fingerprint]],
                    threshold: float) -> list[SimilarityPair]:
    """Unordered within-set pairs with Tanimoto >= threshold (no self-pairs)."""
    _check_threshold(threshold)
    if len(records) < 2:
        return []
    ids, mat, pops = _prep(records)
    found: dict[tuple[str, str], float] = {}
    n = len(ids)
    for i, p in enumerate(pops.tolist()):
        hi = np.searchsorted(pops, p / threshold + _WINDOW_EPS, side="right")
        lo = i + 1
        if lo >= hi:
            continue
        inter = np.bitwise_count(mat[lo:hi] & mat[i]).sum(axis=1,
                                                          dtype=np.int64)
        union = p + pops[lo:hi] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            tc = np.where(union > 0, inter / union, 0.0)
        for j in np.flatnonzero(tc >= threshold).tolist():
            ia, ib = ids[i], ids[lo + j]
            if ia == ib:
                continue
            key = (ia, ib) if ia < ib else (ib, ia)
            found[key] = float(tc[j])
    return _sorted_pairs(found)


# ---------------------------------------------------------------------------
# maximum common substructure
# ---------------------------------------------------------------------------

class _BudgetExceeded(Exception):
    pass


class _Optimal(Exception):
    """Search hit min(|a|, |b|); nothing larger exists."""


def _order_matrix(mol: Molecule) -> list[list[int]]:
    n = len(mol)
    m = [[0] * n for _ in range(n)]
    for b in mol.bonds:
        m[b.a][b.b] = b.order
        m[b.b][b.a] = b.order
    return m


def mcs_atom_count(a: Molecule, b: Molecule,
                   budget: int = 1_000_000) -> tuple[int, bool]:
    """Size of the largest connected common induced subgraph, in atoms.

    Maximum clique over the modular product of the two graphs, restricted to
    cliques whose bond-matching edges form a connected subgraph (so the
    common substructure itself is connected).  Atoms match on (atomic number,
    aromatic flag); bonds match on identical order.  Returns (count, exact);
    when the node-expansion budget runs out the count is a lower bound and
    exact is False.
    """
    na, nb = len(a), len(b)
    oa, ob = _order_matrix(a), _order_matrix(b)
    pairs = [(u, v) for u in range(na) for v in range(nb)
             if a.atoms[u].atomic_number == b.atoms[v].atomic_number
             and a.atoms[u].aromatic == b.atoms[v].aromatic]
    if not pairs:
        return 0, True
    best = 0
    steps = 0
    cap = min(na, nb)

    def bound(size: int, cand: list[int]) -> int:
        us = {pairs[p][0] for p in cand}
        vs = {pairs[p][1] for p in cand}
        return size + min(len(us), len(vs))

    def expand(size: int, p_c: list[int], p_d: list[int]) -> None:
        nonlocal best, steps
        steps += 1
        if steps > budget:
            raise _BudgetExceeded
        if size > best:
            best = size
            if best >= cap:
                raise _Optimal
        work = list(p_c)
        while work:
            if bound(size, work + p_d) <= best:
                return
            v = work.pop(0)
            u1, v1 = pairs[v]
            new_c, new_d = [], []
            # survivors of P_c stay c-connected through the existing clique;
            # P_d members migrate to P_c only via a bond-matching edge to v
            for q in work:
                u2, v2 = pairs[q]
                if u2 == u1 or v2 == v1:
                    continue
                x, y = oa[u1][u2], ob[v1][v2]
                if (x and y and x == y) or (not x and not y):
                    new_c.append(q)
            for q in p_d:
                u2, v2 = pairs[q]
                if u2 == u1 or v2 == v1:
                    continue
                x, y = oa[u1][u2], ob[v1][v2]
                if x and y:
                    if x == y:
                        new_c.append(q)
                elif not x and not y:
                    new_d.append(q)
            expand(size + 1, new_c, new_d)

    try:
        for s, (u0, v0) in enumerate(pairs):
            p_c, p_d = [], []
            for q in range(s + 1, len(pairs)):
                u2, v2 = pairs[q]
                if u2 == u0 or v2 == v0:
                    continue
                x, y = oa[u0][u2], ob[v0][v2]
                if x and y:
                    if x == y:
                        p_c.append(q)
                elif not x and not y:
                    p_d.append(q)
            if bound(1, p_c + p_d) > best:
                expand(1, p_c, p_d)
        return best, True
    except _Optimal:
        return best, True
    except _BudgetExceeded:
        return best, False


def mcs_ratio(a: Molecule, b: Molecule, budget: int = 1_000_000) -> McsResult:
    """Connected-MCS size over the larger heavy-atom count.

    The denominator is max(|a|, |b|), so a small fragment of a large molecule
    scores low.  ``exact`` is False when the search budget truncated and the
    reported count is only a lower bound.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    na, nb = len(a), len(b)
    if na == nb and len(a.bonds) == len(b.bonds) \
            and canonical_smiles(a) == canonical_smiles(b):
        return McsResult(na, 1.0, True)
    count, exact = mcs_atom_count(a, b, budget)
    return McsResult(count, count / max(na, nb), exact)

"""Folded circular fingerprints over molecular graphs.

The default configuration is a 4096-bit fingerprint of diameter 2, i.e.
radius 1: every atom contributes its immediate environment and its
one-bond neighbourhood.  Identifiers are 64-bit hashes built with the
splitmix64 finalizer (test vectors in the README); the bit index is the
identifier modulo the width, and duplicate identifiers are folded once
(set semantics, no counts).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chemgraph import Molecule

_MASK64 = (1 << 64) - 1
_SEED = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer: a fixed 64-bit avalanche permutation."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def hash_ints(values) -> int:
    """Chain mix64 over a sequence of integers, starting from a fixed seed."""
    h = _SEED
    for v in values:
        h = mix64(h ^ (v & _MASK64))
    return h


@dataclass(frozen=True)
class FingerprintParams:
    radius: int = 1
    n_bits: int = 4096

    def __post_init__(self):
        if self.radius < 0 or self.radius > 8:
            raise ValueError(f"radius must be in [0, 8], got {self.radius}")
        if self.n_bits <= 0 or self.n_bits & (self.n_bits - 1):
            raise ValueError(f"n_bits must be a power of two, got {self.n_bits}")


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Fixed-width bitset stored as uint64 words, with cached popcount."""

    words: np.ndarray
    n_bits: int
    popcount: int = field(default=-1)

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        words.flags.writeable = False
        object.__setattr__(self, "words", words)
        if self.popcount < 0:
            object.__setattr__(self, "popcount",
                               int(np.bitwise_count(words).sum()))

    @classmethod
    def from_bit_indices(cls, indices, n_bits: int) -> "Fingerprint":
        words = np.zeros(n_bits // 64, dtype=np.uint64)
        for idx in indices:
            if not 0 <= idx < n_bits:
                raise ValueError(f"bit index {idx} out of range")
            words[idx >> 6] |= np.uint64(1) << np.uint64(idx & 63)
        return cls(words, n_bits)

    def bit_indices(self) -> list[int]:
        out = []
        for w, word in enumerate(self.words.tolist()):
            base = w << 6
            while word:
                low = word & -word
                out.append(base + low.bit_length() - 1)
                word ^= low
        return out

    def same_bits(self, other: "Fingerprint") -> bool:
        return self.n_bits == other.n_bits and \
            bool(np.array_equal(self.words, other.words))


def atom_invariants(mol: Molecule) -> list[tuple]:
    """Initial per-atom invariant tuples feeding iteration 0."""
    in_ring = mol.ring_atom_flags()
    out = []
    for i, a in enumerate(mol.atoms):
        out.append((a.atomic_number, mol.degree(i), a.implicit_h,
                    a.formal_charge, 1 if a.aromatic else 0,
                    1 if in_ring[i] else 0))
    return out


def environment_identifiers(mol: Molecule, radius: int) -> set[int]:
    """Distinct atom-environment identifiers for iterations 0..radius.

    An atom with no neighbours keeps its previous identifier, so an isolated
    atom contributes exactly one identifier regardless of radius.
    """
    ids = [hash_ints(inv) for inv in atom_invariants(mol)]
    seen = set(ids)
    for it in range(1, radius + 1):
        nxt = []
        for i in range(len(mol.atoms)):
            nbrs = mol.neighbors(i)
            if not nbrs:
                nxt.append(ids[i])
                continue
            parts = [it, ids[i]]
            for order, nid in sorted((order, ids[j]) for j, order in nbrs):
                parts.append(order)
                parts.append(nid)
            nxt.append(hash_ints(parts))
        ids = nxt
        seen.update(ids)
    return seen


def ecfp(mol: Molecule, params: FingerprintParams = FingerprintParams()) -> Fingerprint:
    """Fold the environment identifiers of ``mol`` into a fixed-width bitset."""
    words = np.zeros(params.n_bits // 64, dtype=np.uint64)
    for ident in environment_identifiers(mol, params.radius):
        idx = ident % params.n_bits
        words[idx >> 6] |= np.uint64(1) << np.uint64(idx & 63)
    return Fingerprint(words, params.n_bits)

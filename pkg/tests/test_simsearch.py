import random
from itertools import combinations

import networkx as nx
import pytest

from screenaudit.chemgraph import Bond, Molecule, parse_smiles
from screenaudit.fingerprints import Fingerprint, ecfp
from screenaudit.simsearch import (MismatchedParams, find_cross_pairs,
                                   find_self_pairs, mcs_atom_count, mcs_ratio,
                                   tanimoto)

from molgen import random_molecule


# --- independent oracles ----------------------------------------------------

def oracle_tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    inter = sum((int(x) & int(y)).bit_count()
                for x, y in zip(a.words.tolist(), b.words.tolist()))
    union = sum((int(x) | int(y)).bit_count()
                for x, y in zip(a.words.tolist(), b.words.tolist()))
    return inter / union if union else 0.0


def oracle_cross(set_a, set_b, threshold):
    out = set()
    for ia, fa in set_a:
        for ib, fb in set_b:
            if ia == ib:
                continue
            tc = oracle_tanimoto(fa, fb)
            if tc >= threshold:
                out.add(((ia, ib) if ia < ib else (ib, ia), round(tc, 12)))
    return out


def oracle_self(records, threshold):
    out = set()
    for (ia, fa), (ib, fb) in combinations(records, 2):
        tc = oracle_tanimoto(fa, fb)
        if tc >= threshold:
            out.add(((ia, ib) if ia < ib else (ib, ia), round(tc, 12)))
    return out


def mol_to_nx(mol: Molecule) -> nx.Graph:
    g = nx.Graph()
    for i, a in enumerate(mol.atoms):
        g.add_node(i, key=(a.atomic_number, a.aromatic))
    for b in mol.bonds:
        g.add_edge(b.a, b.b, order=b.order)
    return g


def oracle_mcs(a: Molecule, b: Molecule) -> int:
    """Largest connected induced common subgraph by exhaustive enumeration.

    Every connected node subset of the smaller graph is tested for induced
    embeddability into the other graph via VF2.
    """
    if len(a) > len(b):
        a, b = b, a
    ga, gb = mol_to_nx(a), mol_to_nx(b)
    node_eq = lambda x, y: x["key"] == y["key"]
    edge_eq = lambda x, y: x["order"] == y["order"]
    for size in range(len(a), 0, -1):
        for nodes in combinations(range(len(a)), size):
            sub = ga.subgraph(nodes)
            if not nx.is_connected(sub):
                continue
            gm = nx.algorithms.isomorphism.GraphMatcher(
                gb, sub, node_match=node_eq, edge_match=edge_eq)
            if gm.subgraph_is_isomorphic():
                return size
    return 0


def random_fp(rng: random.Random, n_bits=512, max_pop=80) -> Fingerprint:
    pop = rng.randint(0, max_pop)
    return Fingerprint.from_bit_indices(
        sorted(rng.sample(range(n_bits), pop)), n_bits)


# --- tanimoto ---------------------------------------------------------------

class TestTanimoto:
    def test_identity(self):
        fp = random_fp(random.Random(1))
        assert tanimoto(fp, fp) == 1.0

    def test_disjoint(self):
        a = Fingerprint.from_bit_indices([1, 2, 3], 256)
        b = Fingerprint.from_bit_indices([10, 11], 256)
        assert tanimoto(a, b) == 0.0

    def test_half(self):
        a = Fingerprint.from_bit_indices([0, 1, 2], 256)
        b = Fingerprint.from_bit_indices([1, 2, 3], 256)
        assert tanimoto(a, b) == 0.5

    def test_both_empty_is_zero(self):
        a = Fingerprint.from_bit_indices([], 256)
        assert tanimoto(a, a) == 0.0

    def test_symmetric(self):
        rng = random.Random(2)
        for _ in range(50):
            a, b = random_fp(rng), random_fp(rng)
            assert tanimoto(a, b) == tanimoto(b, a)
            assert tanimoto(a, b) == pytest.approx(oracle_tanimoto(a, b), abs=0)

    def test_width_mismatch(self):
        a = Fingerprint.from_bit_indices([0], 256)
        b = Fingerprint.from_bit_indices([0], 512)
        with pytest.raises(MismatchedParams):
            tanimoto(a, b)


# --- pair search ------------------------------------------------------------

def as_found(pairs):
    return {((p.id_a, p.id_b), round(p.tc, 12)) for p in pairs}


class TestPairSearch:
    def test_identical_molecule_across_sets(self):
        a = [("x", ecfp(parse_smiles("CCO")))]
        b = [("y", ecfp(parse_smiles("OCC")))]
        pairs = find_cross_pairs(a, b, 0.6)
        assert len(pairs) == 1 and pairs[0].tc == 1.0

    def test_empty_inputs(self):
        fp = ecfp(parse_smiles("CCO"))
        assert find_cross_pairs([], [("a", fp)], 0.6) == []
        assert find_cross_pairs([("a", fp)], [], 0.6) == []
        assert find_self_pairs([("a", fp)], 0.6) == []

    def test_duplicate_molecules_within_set(self):
        recs = [("a", ecfp(parse_smiles("CCO"))),
                ("b", ecfp(parse_smiles("OCC")))]
        pairs = find_self_pairs(recs, 0.85)
        assert len(pairs) == 1 and pairs[0].tc == 1.0

    @pytest.mark.parametrize("threshold", [0.6, 0.85])
    def test_cross_matches_oracle(self, threshold):
        rng = random.Random(33)
        set_a = [(f"a{i:03d}", random_fp(rng)) for i in range(200)]
        set_b = [(f"b{i:03d}", random_fp(rng)) for i in range(200)]
        assert as_found(find_cross_pairs(set_a, set_b, threshold)) == \
            oracle_cross(set_a, set_b, threshold)

    @pytest.mark.parametrize("threshold", [0.6, 0.85])
    def test_self_matches_oracle(self, threshold):
        rng = random.Random(34)
        records = [(f"r{i:03d}", random_fp(rng)) for i in range(500)]
        assert as_found(find_self_pairs(records, threshold)) == \
            oracle_self(records, threshold)

    def test_order_and_sharding_independent(self):
        rng = random.Random(35)
        set_a = [(f"a{i}", random_fp(rng)) for i in range(60)]
        set_b = [(f"b{i}", random_fp(rng)) for i in range(60)]
        ref = find_cross_pairs(set_a, set_b, 0.6)
        rng.shuffle(set_a)
        rng.shuffle(set_b)
        assert find_cross_pairs(set_a, set_b, 0.6) == ref

    def test_output_sorted(self):
        rng = random.Random(36)
        records = [(f"r{i}", random_fp(rng)) for i in range(120)]
        pairs = find_self_pairs(records, 0.4)
        keys = [(-p.tc, p.id_a, p.id_b) for p in pairs]
        assert keys == sorted(keys)
        assert all(p.id_a < p.id_b for p in pairs)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            find_self_pairs([], 0.0)
        with pytest.raises(ValueError):
            find_self_pairs([], 1.5)


# --- maximum common substructure ---------------------------------------------

class TestMcs:
    def test_identical(self):
        mol = parse_smiles("Cn1cnc2c1c(=O)n(C)c(=O)n2C")
        res = mcs_ratio(mol, mol)
        assert res.exact and res.ratio == 1.0
        assert res.mcs_atom_count == len(mol)

    def test_ethane_propane(self):
        res = mcs_ratio(parse_smiles("CC"), parse_smiles("CCC"))
        assert res.mcs_atom_count == 2
        assert res.ratio == pytest.approx(2 / 3)
        assert res.exact

    def test_aromatic_never_matches_aliphatic(self):
        res = mcs_ratio(parse_smiles("c1ccccc1"), parse_smiles("C1CCCCC1"))
        assert res.mcs_atom_count == 0

    def test_symmetric(self):
        a = parse_smiles("CC(=O)Nc1ccccc1")
        b = parse_smiles("CC(=O)Nc1ccccc1C")
        assert mcs_ratio(a, b).mcs_atom_count == mcs_ratio(b, a).mcs_atom_count
        assert mcs_ratio(a, b).ratio == mcs_ratio(b, a).ratio

    def test_induced_semantics(self):
        # all six ring atoms would map onto hexane if partial subgraphs
        # counted; induced matching caps the overlap at a 5-chain
        res = mcs_ratio(parse_smiles("C1CCCCC1"), parse_smiles("CCCCCC"))
        assert res.mcs_atom_count == 5

    def test_budget_flags_truncation(self):
        a = parse_smiles("C" * 18)
        b = parse_smiles("C1" + "C" * 16 + "1")
        res = mcs_ratio(a, b, budget=30)
        assert not res.exact
        assert res.mcs_atom_count <= 17

    def test_bad_budget(self):
        with pytest.raises(ValueError):
            mcs_ratio(parse_smiles("C"), parse_smiles("C"), budget=0)

    def test_matches_exhaustive_oracle(self):
        rng = random.Random(41)
        for _ in range(30):
            a = random_molecule(rng, max_atoms=9, allow_isotope=False)
            b = random_molecule(rng, max_atoms=9, allow_isotope=False)
            count, exact = mcs_atom_count(a, b)
            assert exact
            assert count == oracle_mcs(a, b)

    def test_subgraph_monotone(self):
        rng = random.Random(42)
        for _ in range(25):
            big = random_molecule(rng, max_atoms=12, allow_isotope=False)
            comp = max(big.components(), key=len)
            size = rng.randint(1, len(comp))
            # random connected subset grown from a seed
            seed = rng.choice(comp)
            chosen = {seed}
            frontier = [j for j, _ in big.neighbors(seed)]
            while len(chosen) < size and frontier:
                nxt = rng.choice(frontier)
                chosen.add(nxt)
                frontier = [j for c in chosen for j, _ in big.neighbors(c)
                            if j not in chosen]
            idx = sorted(chosen)
            remap = {old: new for new, old in enumerate(idx)}
            sub = Molecule(
                [big.atoms[i] for i in idx],
                [Bond(remap[b.a], remap[b.b], b.order) for b in big.bonds
                 if b.a in chosen and b.b in chosen])
            count, exact = mcs_atom_count(sub, big)
            assert exact
            assert count == len(sub)

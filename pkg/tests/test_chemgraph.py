import random

import networkx as nx
import pytest

from screenaudit.chemgraph import (AROMATIC, DOUBLE, ParseError, SINGLE,
                                   canonical_smiles, parse_smiles, permuted,
                                   randomized_smiles, same_molecule)

from molgen import random_molecule


def mol_to_nx(mol):
    g = nx.Graph()
    for i, a in enumerate(mol.atoms):
        g.add_node(i, key=(a.atomic_number, a.formal_charge, a.isotope,
                           a.aromatic, a.implicit_h))
    for b in mol.bonds:
        g.add_edge(b.a, b.b, order=b.order)
    return g


def isomorphic(m1, m2):
    return nx.is_isomorphic(
        mol_to_nx(m1), mol_to_nx(m2),
        node_match=lambda x, y: x["key"] == y["key"],
        edge_match=lambda x, y: x["order"] == y["order"])


class TestParse:
    def test_ethanol(self):
        mol = parse_smiles("CCO")
        assert len(mol) == 3
        assert [(b.a, b.b, b.order) for b in mol.bonds] == \
            [(0, 1, SINGLE), (1, 2, SINGLE)]
        assert [a.implicit_h for a in mol.atoms] == [3, 2, 1]

    def test_stereo_markers_stripped(self):
        assert isomorphic(parse_smiles("C[C@H](N)O"), parse_smiles("CC(N)O"))
        assert same_molecule(parse_smiles("C[C@H](N)O"),
                             parse_smiles("C[C@@H](N)O"))
        assert same_molecule(parse_smiles("F/C=C/F"), parse_smiles("FC=CF"))

    def test_benzene(self):
        mol = parse_smiles("c1ccccc1")
        assert len(mol) == 6
        assert all(a.aromatic for a in mol.atoms)
        assert all(b.order == AROMATIC for b in mol.bonds)
        assert all(a.implicit_h == 1 for a in mol.atoms)

    def test_branches_and_rings(self):
        mol = parse_smiles("CC(C)C1CCC1")
        assert len(mol) == 7
        assert sum(1 for b in mol.bonds) == 7

    def test_two_digit_ring_closure(self):
        a = parse_smiles("C%12CCCCC%12")
        b = parse_smiles("C1CCCCC1")
        assert same_molecule(a, b)

    def test_bracket_atom_fields(self):
        mol = parse_smiles("[13CH3-]")
        atom = mol.atoms[0]
        assert atom.isotope == 13
        assert atom.implicit_h == 3
        assert atom.formal_charge == -1

    def test_charge_forms(self):
        assert parse_smiles("[O-]").atoms[0].formal_charge == -1
        assert parse_smiles("[Fe+2]").atoms[0].formal_charge == 2
        assert parse_smiles("[Fe++]").atoms[0].formal_charge == 2
        assert parse_smiles("[N+](C)(C)(C)C").atoms[0].formal_charge == 1

    def test_components(self):
        mol = parse_smiles("[Na+].[Cl-]")
        assert len(mol.components()) == 2

    def test_empty_component_tolerated(self):
        assert same_molecule(parse_smiles("CCO."), parse_smiles("CCO"))
        assert same_molecule(parse_smiles(".CCO"), parse_smiles("CCO"))

    def test_explicit_hydrogens_folded(self):
        mol = parse_smiles("C([H])([H])([H])[H]")
        assert len(mol) == 1
        assert mol.atoms[0].implicit_h == 4

    def test_isotopic_hydrogen_kept(self):
        mol = parse_smiles("[2H]O[2H]")
        assert len(mol) == 3

    def test_aromatic_default_bond_not_in_ring_is_single(self):
        biphenyl = parse_smiles("c1ccccc1c1ccccc1")
        explicit = parse_smiles("c1ccccc1-c1ccccc1")
        assert same_molecule(biphenyl, explicit)
        singles = [b for b in biphenyl.bonds if b.order == SINGLE]
        assert len(singles) == 1

    def test_pyridine_vs_pyrrole_h(self):
        assert parse_smiles("c1ccncc1").atoms[3].implicit_h == 0
        pyrrole = parse_smiles("c1cc[nH]c1")
        ns = [a for a in pyrrole.atoms if a.atomic_number == 7]
        assert ns[0].implicit_h == 1

    def test_atom_class_ignored(self):
        assert same_molecule(parse_smiles("[CH3:7]O"), parse_smiles("CO"))


class TestParseErrors:
    @pytest.mark.parametrize("bad", [
        "", "   ", "C(", "C(C", "C)", "C1CC", "C=#C", "C=", "=C", "[Zz]",
        "[C", "C%1C", "*", "cc", "c1ccc1c", "C11", "C(=O)(=O)(=O)(=O)O",
        "N(C)(C)(C)C", "NOT_A_SMILES( x9", "C.=C", "C:C", "[]",
    ])
    def test_rejects(self, bad):
        with pytest.raises(ParseError):
            parse_smiles(bad)

    def test_offset_reported(self):
        with pytest.raises(ParseError) as err:
            parse_smiles("CCX")
        assert err.value.offset == 2
        assert "offset 2" in str(err.value)

    def test_valence_error_names_element(self):
        with pytest.raises(ParseError, match="valence"):
            parse_smiles("O(C)(C)C")


class TestCanonical:
    def test_traversal_independent(self):
        assert canonical_smiles(parse_smiles("OCC")) == \
            canonical_smiles(parse_smiles("CCO"))

    def test_idempotent(self):
        s = "Cn1cnc2c1c(=O)n(C)c(=O)n2C"
        once = canonical_smiles(parse_smiles(s))
        assert canonical_smiles(parse_smiles(once)) == once

    def test_kekule_and_aromatic_converge(self):
        assert canonical_smiles(parse_smiles("C1=CC=CC=C1")) == \
            canonical_smiles(parse_smiles("c1ccccc1"))

    def test_kekule_pyridine(self):
        assert canonical_smiles(parse_smiles("C1=CC=CC=N1")) == \
            canonical_smiles(parse_smiles("c1ccncc1"))

    def test_component_order_fixed(self):
        assert canonical_smiles(parse_smiles("[Na+].[Cl-]")) == \
            canonical_smiles(parse_smiles("[Cl-].[Na+]"))

    def test_same_molecule(self):
        assert same_molecule(parse_smiles("CCO"), parse_smiles("OCC"))
        assert not same_molecule(parse_smiles("CCO"), parse_smiles("CCN"))

    def test_permutation_invariance_random(self):
        rng = random.Random(11)
        for _ in range(150):
            mol = random_molecule(rng)
            ref = canonical_smiles(mol)
            for _ in range(6):
                perm = list(range(len(mol)))
                rng.shuffle(perm)
                assert canonical_smiles(permuted(mol, perm)) == ref

    def test_random_serializations_agree(self):
        rng = random.Random(12)
        for _ in range(150):
            mol = random_molecule(rng)
            ref = canonical_smiles(mol)
            for _ in range(6):
                text = randomized_smiles(mol, rng)
                assert canonical_smiles(parse_smiles(text)) == ref

    def test_round_trip_isomorphic(self):
        rng = random.Random(13)
        for _ in range(120):
            mol = random_molecule(rng, max_atoms=12)
            back = parse_smiles(canonical_smiles(mol))
            assert isomorphic(mol, back)

    def test_stereo_erasure_pairs(self):
        pairs = [
            ("N[C@@H](C)C(=O)O", "N[C@H](C)C(=O)O"),
            ("F/C=C\\F", "F/C=C/F"),
            ("C[C@]1(O)CC[C@H](N)C1", "CC1(O)CCC(N)C1"),
        ]
        for left, right in pairs:
            assert same_molecule(parse_smiles(left), parse_smiles(right))

    def test_symmetric_molecules(self):
        # heavy automorphism groups still canonicalize consistently
        for s in ["CC(C)(C)C", "c1ccccc1", "C1CCCCC1", "FC(F)(F)F",
                  "C(N)(N)(N)N", "O=C(O)c1ccc(C(=O)O)cc1"]:
            mol = parse_smiles(s)
            ref = canonical_smiles(mol)
            rng = random.Random(99)
            for _ in range(10):
                perm = list(range(len(mol)))
                rng.shuffle(perm)
                assert canonical_smiles(permuted(mol, perm)) == ref

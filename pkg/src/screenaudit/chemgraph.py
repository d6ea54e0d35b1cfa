"""Molecular graphs parsed from SMILES, with a permutation-invariant canonical form.

The parser covers the organic subset (B, C, N, O, P, S, F, Cl, Br, I and
aromatic b, c, n, o, p, s), bracket atoms with isotope / charge / explicit
hydrogen counts, branches, ring closures (including %nn), disconnected
components and the bond symbols - = # : / \\.  Stereo markers (@, @@, /, \\)
are parsed and then discarded, so two inputs differing only in stereo
annotations produce the same graph.

Identity of a molecule is the canonical SMILES string: atoms are ranked by
iterative neighbourhood refinement and remaining ties are broken by
exhaustively serializing each candidate and keeping the lexicographically
smallest string, which makes the output independent of the input atom order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

# Bond order codes; AROMATIC doubles as the bond code used by fingerprint
# hashing and MCS matching, so the values are part of the on-disk behaviour.
SINGLE = 1
DOUBLE = 2
TRIPLE = 3
AROMATIC = 4

_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC,
                 "/": SINGLE, "\\": SINGLE}

_ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co "
    "Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb "
    "Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re "
    "Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es "
    "Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og"
).split()

ATOMIC_NUMBERS = {sym: i + 1 for i, sym in enumerate(_ELEMENTS)}
SYMBOLS = {z: sym for sym, z in ATOMIC_NUMBERS.items()}

# Bare (unbracketed) atoms are restricted to the organic subset.
ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}

# Fixed default valences by atomic number. Charged atoms are shifted to the
# isoelectronic element (Z - charge) before lookup, which reproduces the
# usual behaviour: [N+] bonds like C, [O-] like F, [S+] like P, and so on.
_DEFAULT_VALENCES = {
    5: (3,),            # B
    6: (4,),            # C
    7: (3,),            # N
    8: (2,),            # O
    9: (1,),            # F
    13: (3,),           # Al
    14: (4,),           # Si
    15: (3, 5),         # P
    16: (2, 4, 6),      # S
    17: (1,),           # Cl
    32: (4,),           # Ge
    33: (3, 5),         # As
    34: (2, 4, 6),      # Se
    35: (1,),           # Br
    50: (4,),           # Sn
    51: (3, 5),         # Sb
    52: (2, 4, 6),      # Te
    53: (1,),           # I
}


class ParseError(ValueError):
    """SMILES rejected; carries the byte offset of the offending token."""

    def __init__(self, reason: str, offset: int):
        super().__init__(f"offset {offset}: {reason}")
        self.reason = reason
        self.offset = offset


@dataclass(frozen=True)
class Atom:
    atomic_number: int
    formal_charge: int = 0
    isotope: int | None = None
    aromatic: bool = False
    implicit_h: int = 0


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: int


class Molecule:
    """Immutable hydrogen-suppressed molecular graph.

    Plain hydrogens written explicitly (e.g. ``C([H])``) are folded into the
    heavy neighbour's implicit count; isotopic or charged hydrogens are kept
    as real atoms.
    """

    __slots__ = ("atoms", "bonds", "source_id", "_adjacency")

    def __init__(self, atoms: Sequence[Atom], bonds: Sequence[Bond],
                 source_id: str | None = None):
        norm = []
        seen = set()
        for bond in bonds:
            a, b = (bond.a, bond.b) if bond.a < bond.b else (bond.b, bond.a)
            if a == b:
                raise ValueError(f"self-bond on atom {a}")
            if (a, b) in seen:
                raise ValueError(f"duplicate bond {a}-{b}")
            seen.add((a, b))
            norm.append(Bond(a, b, bond.order))
        norm.sort(key=lambda x: (x.a, x.b))
        self.atoms = tuple(atoms)
        self.bonds = tuple(norm)
        self.source_id = source_id
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        self._adjacency = tuple(tuple(sorted(n)) for n in adj)

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, int], ...]:
        """(neighbor index, bond order) pairs for one atom."""
        return self._adjacency[idx]

    def degree(self, idx: int) -> int:
        return len(self._adjacency[idx])

    def components(self) -> list[list[int]]:
        seen = [False] * len(self.atoms)
        out = []
        for start in range(len(self.atoms)):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v, _ in self._adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            out.append(sorted(comp))
        return out

    def ring_bond_flags(self) -> set[tuple[int, int]]:
        """Unordered index pairs of bonds that lie on at least one cycle."""
        return _cycle_edges(len(self.atoms),
                            [(b.a, b.b) for b in self.bonds])

    def ring_atom_flags(self) -> list[bool]:
        cyc = self.ring_bond_flags()
        flags = [False] * len(self.atoms)
        for a, b in cyc:
            flags[a] = True
            flags[b] = True
        return flags


def _cycle_edges(n: int, edges: list[tuple[int, int]]) -> set[tuple[int, int]]:
    """Edges on cycles = all edges that are not bridges (iterative Tarjan)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i, (a, b) in enumerate(edges):
        adj[a].append((b, i))
        adj[b].append((a, i))
    disc = [-1] * n
    low = [0] * n
    bridges = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            u, pedge, it = stack[-1]
            advanced = False
            for v, eidx in it:
                if eidx == pedge:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, eidx, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[u])
                    if low[u] > disc[parent]:
                        bridges.add(pedge)
    out = set()
    for i, (a, b) in enumerate(edges):
        if i not in bridges:
            out.add((a, b) if a < b else (b, a))
    return out


def allowed_valences(atomic_number: int, charge: int) -> tuple[int, ...]:
    """Default valences for the element, shifted isoelectronically by charge.

    Returns an empty tuple when the model has nothing to say (exotic
    elements), in which case no implicit hydrogens are assigned and no
    valence check is applied.
    """
    return _DEFAULT_VALENCES.get(atomic_number - charge, ())


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class _PendingAtom:
    __slots__ = ("symbol", "aromatic", "charge", "isotope", "h_count",
                 "bracket", "offset", "implicit_h")

    def __init__(self, symbol, aromatic, charge, isotope, h_count, bracket,
                 offset):
        self.symbol = symbol
        self.aromatic = aromatic
        self.charge = charge
        self.isotope = isotope
        self.h_count = h_count      # explicit H count for bracket atoms
        self.bracket = bracket
        self.offset = offset
        self.implicit_h = 0


def _parse_bracket(text: str, start: int,
                   base: int = 0) -> tuple[_PendingAtom, int]:
    """Parse a [...] atom starting at the '[' and return (atom, next index)."""

    def fail(reason: str, at: int) -> ParseError:
        return ParseError(reason, base + at)

    end = text.find("]", start)
    if end < 0:
        raise fail("unclosed bracket atom", start)
    i = start + 1
    isotope = None
    if i < end and text[i].isdigit():
        j = i
        while j < end and text[j].isdigit():
            j += 1
        isotope = int(text[i:j])
        i = j
    if i >= end:
        raise fail("bracket atom missing element symbol", start)
    aromatic = False
    if text[i].islower():
        # aromatic symbols inside brackets: se/as allowed in full SMILES,
        # here the organic aromatic subset plus se.
        two = text[i:i + 2]
        if two == "se" and i + 2 <= end:
            symbol, aromatic, i = "Se", True, i + 2
        elif text[i] in AROMATIC_ORGANIC:
            symbol, aromatic, i = text[i].upper(), True, i + 1
        else:
            raise fail(f"unknown aromatic symbol {text[i]!r}", i)
    else:
        if i + 1 < end and text[i + 1].islower() \
                and text[i:i + 2] in ATOMIC_NUMBERS:
            symbol, i = text[i:i + 2], i + 2
        elif text[i] in ATOMIC_NUMBERS:
            symbol, i = text[i], i + 1
        else:
            raise fail(f"unknown element symbol {text[i]!r}", i)
    # chirality: parsed, validated loosely, discarded
    while i < end and text[i] == "@":
        i += 1
        if i < end and text[i] == "@":
            i += 1
        else:
            for tag in ("TH1", "TH2", "AL1", "AL2", "SP1", "SP2", "SP3"):
                if text.startswith(tag, i):
                    i += len(tag)
                    break
    h_count = 0
    if i < end and text[i] == "H":
        i += 1
        if i < end and text[i].isdigit():
            j = i
            while j < end and text[j].isdigit():
                j += 1
            h_count = int(text[i:j])
            i = j
        else:
            h_count = 1
    charge = 0
    if i < end and text[i] in "+-":
        sign = 1 if text[i] == "+" else -1
        i += 1
        if i < end and text[i].isdigit():
            j = i
            while j < end and text[j].isdigit():
                j += 1
            charge = sign * int(text[i:j])
            i = j
        else:
            charge = sign
            while i < end and text[i] == ("+" if sign > 0 else "-"):
                charge += sign
                i += 1
    if i < end and text[i] == ":":
        # atom class: legal SMILES, irrelevant to the graph
        i += 1
        j = i
        while j < end and text[j].isdigit():
            j += 1
        if j == i:
            raise fail("atom class ':' without digits", i)
        i = j
    if i != end:
        raise fail(f"unexpected {text[i]!r} in bracket atom", i)
    return _PendingAtom(symbol, aromatic, charge, isotope, h_count, True,
                        start), end + 1


def parse_smiles(text: str, source_id: str | None = None) -> Molecule:
    """Parse a SMILES string into a normalized :class:`Molecule`.

    Normalization: stereo markers dropped, implicit hydrogens assigned from
    the fixed valence table, plain explicit hydrogens folded, and alternating
    single/double six-rings of C/N/O/S rewritten as aromatic so the Kekulé
    and aromatic spellings of common rings converge.

    Raises :class:`ParseError` (with byte offset) on malformed input or on
    valences the model cannot satisfy.
    """
    stripped = text.strip()
    if not stripped:
        raise ParseError("empty SMILES", 0)
    base = text.index(stripped[0])
    atoms: list[_PendingAtom] = []
    bonds: list[list] = []          # [a, b, explicit symbol or None, offset]
    ring_open: dict[int, tuple[int, str | None, int]] = {}
    prev = -1
    stack: list[int] = []
    pending_bond: str | None = None
    pending_offset = 0

    def add_bond(a: int, b: int, symbol: str | None, offset: int) -> None:
        bonds.append([a, b, symbol, offset])

    def new_atom(atom: _PendingAtom) -> None:
        nonlocal prev, pending_bond
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev >= 0:
            add_bond(prev, idx, pending_bond, atom.offset)
        elif pending_bond is not None:
            raise ParseError("bond symbol with no preceding atom",
                             pending_offset)
        pending_bond = None
        prev = idx

    i = 0
    n = len(stripped)
    while i < n:
        ch = stripped[i]
        off = base + i
        if ch == "[":
            atom, nxt = _parse_bracket(stripped, i, base)
            atom.offset = off
            new_atom(atom)
            i = nxt
        elif ch in "([)":
            if ch == "(":
                if prev < 0:
                    raise ParseError("branch with no preceding atom", off)
                if pending_bond is not None:
                    raise ParseError("bond symbol before '('", pending_offset)
                stack.append(prev)
                i += 1
            else:  # ")"
                if not stack:
                    raise ParseError("unmatched ')'", off)
                if pending_bond is not None:
                    raise ParseError("dangling bond symbol before ')'",
                                     pending_offset)
                prev = stack.pop()
                i += 1
        elif ch in _BOND_SYMBOLS:
            if pending_bond is not None:
                raise ParseError("two consecutive bond symbols", off)
            pending_bond = ch
            pending_offset = off
            i += 1
        elif ch == ".":
            if pending_bond is not None:
                raise ParseError("bond symbol before '.'", pending_offset)
            if stack:
                raise ParseError("'.' inside branch", off)
            prev = -1
            i += 1
        elif ch.isdigit() or ch == "%":
            if prev < 0:
                raise ParseError("ring closure with no preceding atom", off)
            if ch == "%":
                digits = stripped[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise ParseError("'%' needs two digits", off)
                num = int(digits)
                i += 3
            else:
                num = int(ch)
                i += 1
            if num in ring_open:
                other, sym, _ = ring_open.pop(num)
                if other == prev:
                    raise ParseError(f"ring closure {num} bonds atom to "
                                     "itself", off)
                if sym is not None and pending_bond is not None \
                        and sym != pending_bond:
                    raise ParseError(f"conflicting bond symbols on ring "
                                     f"closure {num}", off)
                add_bond(other, prev, sym if sym is not None else pending_bond,
                         off)
            else:
                ring_open[num] = (prev, pending_bond, off)
            pending_bond = None
        elif ch == "*":
            raise ParseError("wildcard atoms not supported", off)
        else:
            # bare organic-subset atom
            two = stripped[i:i + 2]
            if two in ("Cl", "Br"):
                new_atom(_PendingAtom(two, False, 0, None, 0, False, off))
                i += 2
            elif ch in ORGANIC_SUBSET:
                new_atom(_PendingAtom(ch, False, 0, None, 0, False, off))
                i += 1
            elif ch in AROMATIC_ORGANIC:
                new_atom(_PendingAtom(ch.upper(), True, 0, None, 0, False,
                                      off))
                i += 1
            else:
                raise ParseError(f"unexpected character {ch!r}", off)

    if stack:
        raise ParseError("unclosed '('", base + n - 1)
    if pending_bond is not None:
        raise ParseError("dangling bond symbol at end", pending_offset)
    if ring_open:
        num, (_, _, roff) = sorted(ring_open.items())[0]
        raise ParseError(f"unresolved ring-closure digit {num}", roff)
    if not atoms:
        raise ParseError("no atoms in input", base)

    return _finalize(atoms, bonds, source_id)


def _finalize(atoms: list[_PendingAtom], raw_bonds: list[list],
              source_id: str | None) -> Molecule:
    n = len(atoms)
    # resolve bond orders; default between two aromatic atoms is aromatic
    # only when the bond sits on an aromatic ring, otherwise single
    orders: list[int | None] = []
    maybe_aromatic = []
    for k, (a, b, sym, off) in enumerate(raw_bonds):
        if sym is None:
            if atoms[a].aromatic and atoms[b].aromatic:
                orders.append(None)
                maybe_aromatic.append(k)
            else:
                orders.append(SINGLE)
        elif sym == ":":
            if not (atoms[a].aromatic and atoms[b].aromatic):
                raise ParseError("':' bond between non-aromatic atoms", off)
            orders.append(AROMATIC)
            maybe_aromatic.append(k)
        else:
            orders.append(_BOND_SYMBOLS[sym])

    cyc = _cycle_edges(n, [(raw_bonds[k][0], raw_bonds[k][1])
                           for k in maybe_aromatic])
    for k in maybe_aromatic:
        a, b, sym, off = raw_bonds[k]
        key = (a, b) if a < b else (b, a)
        if key in cyc:
            orders[k] = AROMATIC
        elif sym == ":":
            raise ParseError("':' bond outside an aromatic ring", off)
        else:
            orders[k] = SINGLE

    # every aromatic atom must sit on an aromatic ring
    on_ring = [False] * n
    for k, (a, b, _, _) in enumerate(raw_bonds):
        if orders[k] == AROMATIC:
            key = (a, b) if a < b else (b, a)
            if key in cyc:
                on_ring[a] = on_ring[b] = True
    for idx, atom in enumerate(atoms):
        if atom.aromatic and not on_ring[idx]:
            raise ParseError("aromatic atom not in an aromatic ring",
                             atom.offset)

    _assign_implicit_h(atoms, raw_bonds, orders)

    final_bonds = [Bond(a, b, orders[k])
                   for k, (a, b, _, _) in enumerate(raw_bonds)]
    out_atoms = [Atom(ATOMIC_NUMBERS[p.symbol], p.charge, p.isotope,
                      p.aromatic, p.implicit_h) for p in atoms]
    out_atoms, final_bonds = _fold_explicit_h(out_atoms, final_bonds,
                                              [p.offset for p in atoms])
    out_atoms, final_bonds = _aromatize_kekule_rings(out_atoms, final_bonds)
    try:
        return Molecule(out_atoms, final_bonds, source_id)
    except ValueError as exc:
        raise ParseError(str(exc), 0) from exc


def _assign_implicit_h(atoms: list[_PendingAtom], raw_bonds: list[list],
                       orders: list[int | None]) -> None:
    sums = [0.0] * len(atoms)
    for k, (a, b, _, _) in enumerate(raw_bonds):
        contrib = 1 if orders[k] == AROMATIC else orders[k]
        sums[a] += contrib
        sums[b] += contrib
    for idx, atom in enumerate(atoms):
        s = int(sums[idx])
        z = ATOMIC_NUMBERS[atom.symbol]
        if atom.bracket:
            atom.implicit_h = atom.h_count
            allowed = allowed_valences(z, atom.charge)
            if allowed and s + atom.h_count > max(allowed):
                raise ParseError(
                    f"valence {s + atom.h_count} impossible for "
                    f"{atom.symbol} (charge {atom.charge:+d})", atom.offset)
        elif atom.aromatic:
            # bare aromatic atoms: c/b may carry hydrogens, n/p/o/s never
            # (pyrrole-type NH must be written [nH])
            if atom.symbol in ("C", "B"):
                if s > 4:
                    raise ParseError(f"valence {s} impossible for aromatic "
                                     f"{atom.symbol.lower()}", atom.offset)
                atom.implicit_h = max(0, 3 - s)
            else:
                cap = max(allowed_valences(z, 0))
                if s > cap:
                    raise ParseError(f"valence {s} impossible for aromatic "
                                     f"{atom.symbol.lower()}", atom.offset)
                atom.implicit_h = 0
        else:
            allowed = allowed_valences(z, 0)
            target = next((v for v in allowed if v >= s), None)
            if target is None:
                raise ParseError(
                    f"valence {s} impossible for {atom.symbol}", atom.offset)
            atom.implicit_h = target - s


def _fold_explicit_h(atoms: list[Atom], bonds: list[Bond],
                     offsets: list[int]) -> tuple[list[Atom], list[Bond]]:
    """Fold plain [H] atoms into the heavy neighbour's implicit count."""
    incident: dict[int, list[Bond]] = {}
    for bond in bonds:
        incident.setdefault(bond.a, []).append(bond)
        incident.setdefault(bond.b, []).append(bond)
    drop = set()
    extra_h = [0] * len(atoms)
    for idx, atom in enumerate(atoms):
        if atom.atomic_number != 1 or atom.isotope is not None \
                or atom.formal_charge != 0 or atom.implicit_h != 0:
            continue
        inc = incident.get(idx, [])
        if len(inc) != 1 or inc[0].order != SINGLE:
            continue
        other = inc[0].a if inc[0].b == idx else inc[0].b
        if atoms[other].atomic_number == 1:
            continue
        drop.add(idx)
        extra_h[other] += 1
    if not drop:
        return atoms, bonds
    remap = {}
    new_atoms = []
    for idx, atom in enumerate(atoms):
        if idx in drop:
            continue
        remap[idx] = len(new_atoms)
        if extra_h[idx]:
            atom = Atom(atom.atomic_number, atom.formal_charge, atom.isotope,
                        atom.aromatic, atom.implicit_h + extra_h[idx])
        new_atoms.append(atom)
    new_bonds = [Bond(remap[b.a], remap[b.b], b.order) for b in bonds
                 if b.a not in drop and b.b not in drop]
    return new_atoms, new_bonds


_AROMATIZABLE = {6, 7, 8, 16}  # C, N, O, S


def _aromatize_kekule_rings(atoms: list[Atom],
                            bonds: list[Bond]) -> tuple[list[Atom], list[Bond]]:
    """Rewrite alternating single/double six-rings of C/N/O/S as aromatic.

    All qualifying rings are located on the original bond orders before any
    conversion, so the result does not depend on ring discovery order.  Only
    the simple benzene-like pattern is recognized; other Kekulé spellings
    (e.g. the second Kekulé structure of a fused system) are left alone.
    """
    order_of = {}
    adj: dict[int, list[int]] = {}
    for bond in bonds:
        order_of[(bond.a, bond.b)] = bond.order
        order_of[(bond.b, bond.a)] = bond.order
        adj.setdefault(bond.a, []).append(bond.b)
        adj.setdefault(bond.b, []).append(bond.a)

    def ok_atom(i: int) -> bool:
        return not atoms[i].aromatic \
            and atoms[i].atomic_number in _AROMATIZABLE

    ring_atoms: set[int] = set()
    ring_bonds: set[tuple[int, int]] = set()
    seen_rings = set()
    for start in sorted(adj):
        if not ok_atom(start):
            continue
        # DFS for simple 6-cycles anchored at their smallest atom index
        path = [start]

        def walk(u: int) -> None:
            if len(path) == 6:
                if start in adj.get(u, ()):
                    key = frozenset(path)
                    if key not in seen_rings:
                        seen_rings.add(key)
                        ring = list(path)
                        orders = [order_of[(ring[i], ring[(i + 1) % 6])]
                                  for i in range(6)]
                        if sorted(set(orders)) == [SINGLE, DOUBLE] and \
                                all(orders[i] != orders[(i + 1) % 6]
                                    for i in range(6)):
                            ring_atoms.update(ring)
                            for i in range(6):
                                a, b = ring[i], ring[(i + 1) % 6]
                                ring_bonds.add((a, b) if a < b else (b, a))
                return
            for v in adj[u]:
                if v > start and v not in path and ok_atom(v):
                    path.append(v)
                    walk(v)
                    path.pop()

        walk(start)

    if not ring_atoms:
        return atoms, bonds
    new_atoms = [Atom(a.atomic_number, a.formal_charge, a.isotope, True,
                      a.implicit_h) if i in ring_atoms else a
                 for i, a in enumerate(atoms)]
    new_bonds = [Bond(b.a, b.b, AROMATIC)
                 if ((b.a, b.b) if b.a < b.b else (b.b, b.a)) in ring_bonds
                 else b for b in bonds]
    return new_atoms, new_bonds


# ---------------------------------------------------------------------------
# canonicalization
# ---------------------------------------------------------------------------

def _initial_keys(mol: Molecule, comp: list[int]):
    keys = {}
    for i in comp:
        a = mol.atoms[i]
        keys[i] = (a.atomic_number, a.formal_charge, a.isotope or 0,
                   a.aromatic, a.implicit_h, mol.degree(i))
    return keys


def _refine(mol: Molecule, comp: list[int], ranks: dict[int, int]) -> dict[int, int]:
    while True:
        keys = {i: (ranks[i],
                    tuple(sorted((order, ranks[j])
                                 for j, order in mol.neighbors(i)
                                 if j in ranks)))
                for i in comp}
        ordered = sorted(set(keys.values()))
        lookup = {k: r for r, k in enumerate(ordered)}
        new_ranks = {i: lookup[keys[i]] for i in comp}
        if new_ranks == ranks:
            return ranks
        ranks = new_ranks


def _rank_from_keys(keys) -> dict[int, int]:
    ordered = sorted(set(keys.values()))
    lookup = {k: r for r, k in enumerate(ordered)}
    return {i: lookup[k] for i, k in keys.items()}


def _canonical_component(mol: Molecule, comp: list[int]) -> str:
    ranks = _refine(mol, comp, _rank_from_keys(_initial_keys(mol, comp)))

    def solve(ranks: dict[int, int]) -> str:
        cells: dict[int, list[int]] = {}
        for i, r in ranks.items():
            cells.setdefault(r, []).append(i)
        tied = sorted(r for r, members in cells.items() if len(members) > 1)
        if not tied:
            return _serialize_component(mol, comp, ranks)
        cell = cells[tied[0]]
        best = None
        for pick in cell:
            keys = {i: (ranks[i], 1 if i == pick else 2) for i in comp}
            candidate = solve(_refine(mol, comp, _rank_from_keys(keys)))
            if best is None or candidate < best:
                best = candidate
        return best

    return solve(ranks)


def _serialize_component(mol: Molecule, comp: list[int],
                         priority: dict[int, int]) -> str:
    """Write one connected component; priority fully orders its atoms."""
    start = min(comp, key=lambda i: priority[i])
    visited = {start}
    tree: dict[int, list[int]] = {i: [] for i in comp}
    ring_pairs: list[tuple[int, int]] = []
    # explicit DFS mirrors the writer below so non-tree edges are stable
    order_stack = [start]
    iter_stack = [iter(sorted((j for j, _ in mol.neighbors(start)),
                              key=lambda j: priority[j]))]
    parent = {start: -1}
    while iter_stack:
        u = order_stack[-1]
        advanced = False
        for v in iter_stack[-1]:
            if v not in visited:
                visited.add(v)
                parent[v] = u
                tree[u].append(v)
                order_stack.append(v)
                iter_stack.append(iter(sorted(
                    (j for j, _ in mol.neighbors(v)),
                    key=lambda j: priority[j])))
                advanced = True
                break
            elif v != parent[u]:
                pair = (u, v) if u < v else (v, u)
                if pair not in ring_pairs:
                    ring_pairs.append(pair)
        if not advanced:
            order_stack.pop()
            iter_stack.pop()

    bond_order = {}
    for b in mol.bonds:
        bond_order[(b.a, b.b)] = b.order
        bond_order[(b.b, b.a)] = b.order

    # ring-closure digits: openings in writer order, digits reused after close
    ring_at: dict[int, list[int]] = {}
    for a, b in ring_pairs:
        ring_at.setdefault(a, []).append(b)
        ring_at.setdefault(b, []).append(a)

    digit_of: dict[tuple[int, int], int] = {}
    free_digits = list(range(1, 100))
    opened: set[tuple[int, int]] = set()
    out: list[str] = []

    def bond_token(u: int, v: int) -> str:
        order = bond_order[(u, v)]
        if order == SINGLE:
            if mol.atoms[u].aromatic and mol.atoms[v].aromatic:
                return "-"
            return ""
        if order == DOUBLE:
            return "="
        if order == TRIPLE:
            return "#"
        return ""  # aromatic between aromatic atoms is the default bond

    def write(u: int, from_atom: int) -> None:
        if from_atom >= 0:
            out.append(bond_token(from_atom, u))
        out.append(_atom_token(mol, u))
        for v in sorted(ring_at.get(u, []), key=lambda j: priority[j]):
            pair = (u, v) if u < v else (v, u)
            if pair in opened:
                digit = digit_of.pop(pair)
                free_digits.append(digit)
                free_digits.sort()
                out.append(str(digit) if digit < 10 else f"%{digit:02d}")
                opened.discard(pair)
            else:
                digit = free_digits.pop(0)
                digit_of[pair] = digit
                opened.add(pair)
                out.append(bond_token(u, v))
                out.append(str(digit) if digit < 10 else f"%{digit:02d}")
        children = tree[u]
        for child in children[:-1]:
            out.append("(")
            write(child, u)
            out.append(")")
        if children:
            write(children[-1], u)

    write(start, -1)
    return "".join(out)


def _bare_h_count(mol: Molecule, idx: int) -> int | None:
    """Implicit H a parser would infer for this atom written bare, or None."""
    atom = mol.atoms[idx]
    s = sum(1 if order == AROMATIC else order
            for _, order in mol.neighbors(idx))
    if atom.aromatic:
        sym = SYMBOLS[atom.atomic_number]
        if sym in ("C", "B"):
            return max(0, 3 - s) if s <= 4 else None
        allowed = allowed_valences(atom.atomic_number, 0)
        return 0 if allowed and s <= max(allowed) else None
    allowed = allowed_valences(atom.atomic_number, 0)
    target = next((v for v in allowed if v >= s), None)
    return None if target is None else target - s


def _atom_token(mol: Molecule, idx: int) -> str:
    atom = mol.atoms[idx]
    sym = SYMBOLS[atom.atomic_number]
    body = sym.lower() if atom.aromatic else sym
    bare_ok = (atom.formal_charge == 0 and atom.isotope is None
               and atom.atomic_number != 1
               and ((atom.aromatic and sym.lower() in AROMATIC_ORGANIC)
                    or (not atom.aromatic and sym in ORGANIC_SUBSET)))
    if bare_ok and _bare_h_count(mol, idx) == atom.implicit_h:
        return body
    parts = ["["]
    if atom.isotope is not None:
        parts.append(str(atom.isotope))
    parts.append(body)
    if atom.implicit_h == 1:
        parts.append("H")
    elif atom.implicit_h > 1:
        parts.append(f"H{atom.implicit_h}")
    if atom.formal_charge == 1:
        parts.append("+")
    elif atom.formal_charge == -1:
        parts.append("-")
    elif atom.formal_charge > 1:
        parts.append(f"+{atom.formal_charge}")
    elif atom.formal_charge < -1:
        parts.append(str(atom.formal_charge))
    parts.append("]")
    return "".join(parts)


def canonical_smiles(mol: Molecule) -> str:
    """Canonical SMILES: invariant under any permutation of atom input order.

    Disconnected components are serialized separately and joined with '.' in
    sorted string order.
    """
    if not mol.atoms:
        raise ValueError("cannot canonicalize an empty molecule")
    parts = [_canonical_component(mol, comp) for comp in mol.components()]
    return ".".join(sorted(parts))


def same_molecule(a: Molecule, b: Molecule) -> bool:
    return canonical_smiles(a) == canonical_smiles(b)


# ---------------------------------------------------------------------------
# helpers used by tests and tooling
# ---------------------------------------------------------------------------

def permuted(mol: Molecule, perm: Sequence[int]) -> Molecule:
    """Relabel atoms: new index of old atom i is perm[i]."""
    inverse = [0] * len(perm)
    for old, new in enumerate(perm):
        inverse[new] = old
    atoms = [mol.atoms[inverse[new]] for new in range(len(perm))]
    bonds = [Bond(perm[b.a], perm[b.b], b.order) for b in mol.bonds]
    return Molecule(atoms, bonds, mol.source_id)


def randomized_smiles(mol: Molecule, rng: random.Random) -> str:
    """Serialize with random start atoms and branch orders.

    Useful for exercising canonicalization: every output parses back to the
    same molecule.
    """
    comps = mol.components()
    rng.shuffle(comps)
    parts = []
    for comp in comps:
        priority = {i: r for r, i in
                    enumerate(rng.sample(comp, len(comp)))}
        parts.append(_serialize_component(mol, comp, priority))
    return ".".join(parts)

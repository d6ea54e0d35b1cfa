"""Benchmark ingestion: molecule files, the run manifest, and deduplication.

Molecule files are UTF-8 text with one record per line in the form
``SMILES [whitespace] ID``; lines whose first non-blank character is ``#``
and blank lines are skipped.  When the ID column is missing the record id is
synthesized as ``<filename>:<line>``.  Query files use the same format with
the ligand code as the ID; the same code may appear on several lines (one
per crystal structure), which is exactly what the intra-set identity
detector needs to see.

Parse failures never abort ingestion: the offending record is kept with an
error marker and surfaces in the ingest report.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .chemgraph import ParseError, canonical_smiles, parse_smiles
from .fingerprints import Fingerprint, FingerprintParams, ecfp


logger = logging.getLogger(__name__)


class ManifestError(ValueError):
    pass


class SplitRole(str, Enum):
    QUERY = "query"
    TRAIN_ACTIVE = "train_active"
    TRAIN_INACTIVE = "train_inactive"
    VAL_ACTIVE = "val_active"
    VAL_INACTIVE = "val_inactive"

    def __str__(self) -> str:
        return self.value


ALL_ROLES = tuple(SplitRole)

# JSON schema for the manifest; kept in sync with load_manifest's checks and
# pinned by a test.
MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["targets"],
    "additionalProperties": False,
    "properties": {
        "fingerprint": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "radius": {"type": "integer", "minimum": 0, "maximum": 8},
                "n_bits": {"type": "integer", "minimum": 64},
            },
        },
        "targets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "query", "train_active",
                             "train_inactive", "val_active", "val_inactive"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "query": {"type": ["string", "null"]},
                    "train_active": {"type": "string"},
                    "train_inactive": {"type": "string"},
                    "val_active": {"type": "string"},
                    "val_inactive": {"type": "string"},
                    "allow_empty_query": {"type": "boolean"},
                },
            },
        },
    },
}


@dataclass
class MoleculeRecord:
    record_id: str
    raw_smiles: str
    role: SplitRole
    target: str
    line: int = 0
    provided_id: str | None = None
    canonical: str | None = None
    fingerprint: Fingerprint | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.canonical is not None


@dataclass(frozen=True)
class DuplicateGroup:
    canonical: str
    record_ids: tuple[str, ...]   # sorted; first entry is the representative

    @property
    def representative(self) -> str:
        return self.record_ids[0]

    @property
    def size(self) -> int:
        return len(self.record_ids)


def dedup(records: list[MoleculeRecord]) -> tuple[list[MoleculeRecord],
                                                  list[DuplicateGroup]]:
    """Collapse records by canonical SMILES.

    Returns (unique records, duplicate groups).  The representative of each
    canonical string is the record with the smallest record_id; groups of
    size >= 2 are reported.  Records that failed to parse are ignored here.
    """
    by_canonical: dict[str, list[MoleculeRecord]] = {}
    for rec in records:
        if rec.canonical is None:
            continue
        by_canonical.setdefault(rec.canonical, []).append(rec)
    unique = []
    groups = []
    for canonical, members in by_canonical.items():
        members.sort(key=lambda r: r.record_id)
        unique.append(members[0])
        if len(members) > 1:
            groups.append(DuplicateGroup(
                canonical, tuple(r.record_id for r in members)))
    unique.sort(key=lambda r: r.record_id)
    groups.sort(key=lambda g: g.record_ids[0])
    return unique, groups


def load_molecule_file(path: str | Path, role: SplitRole, target: str,
                       params: FingerprintParams = FingerprintParams(),
                       ) -> list[MoleculeRecord]:
    """One record per non-comment, non-blank line; failures are not fatal."""
    path = Path(path)
    records: list[MoleculeRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            smiles = tokens[0]
            provided = tokens[1] if len(tokens) > 1 else None
            rid = provided if provided else f"{path.name}:{lineno}"
            if rid in seen_ids:
                rid = f"{rid}#{lineno}"
            seen_ids.add(rid)
            rec = MoleculeRecord(rid, smiles, role, target, lineno, provided)
            try:
                mol = parse_smiles(smiles, source_id=rid)
                rec.canonical = canonical_smiles(mol)
                rec.fingerprint = ecfp(mol, params)
            except ParseError as exc:
                rec.error = str(exc)
            records.append(rec)
    if not records:
        logger.warning("no molecule records in %s", path)
    return records


@dataclass
class TargetDataset:
    name: str
    records: dict[SplitRole, list[MoleculeRecord]]
    unique: dict[SplitRole, list[MoleculeRecord]] = field(default_factory=dict)
    dup_groups: dict[SplitRole, list[DuplicateGroup]] = field(default_factory=dict)

    def __post_init__(self):
        for role in ALL_ROLES:
            self.records.setdefault(role, [])
        if not self.unique:
            for role in ALL_ROLES:
                self.unique[role], self.dup_groups[role] = \
                    dedup(self.records[role])

    def parse_failures(self, role: SplitRole) -> list[MoleculeRecord]:
        return [r for r in self.records[role] if r.error is not None]

    def dedup_map(self, role: SplitRole) -> dict[str, list[str]]:
        """canonical SMILES -> all record ids carrying it, within one role."""
        out: dict[str, list[str]] = {}
        for rec in self.records[role]:
            if rec.canonical is not None:
                out.setdefault(rec.canonical, []).append(rec.record_id)
        for ids in out.values():
            ids.sort()
        return out

    def counts(self) -> dict[str, dict[str, int]]:
        out = {}
        for role in ALL_ROLES:
            out[role.value] = {
                "records": len(self.records[role]),
                "unique": len(self.unique[role]),
                "duplicate_groups": len(self.dup_groups[role]),
                "parse_failures": len(self.parse_failures(role)),
            }
        return out


@dataclass
class Benchmark:
    targets: list[TargetDataset]
    manifest_path: str
    params: FingerprintParams

    def __post_init__(self):
        names = [t.name for t in self.targets]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ManifestError(f"duplicate target name(s): {dupes}")

    def target(self, name: str) -> TargetDataset:
        for t in self.targets:
            if t.name == name:
                return t
        raise KeyError(name)

    def ingest_report(self) -> dict:
        return {
            "manifest": self.manifest_path,
            "fingerprint": {"radius": self.params.radius,
                            "n_bits": self.params.n_bits},
            "targets": {t.name: t.counts() for t in self.targets},
        }


def load_manifest(path: str | Path, workers: int = 1) -> Benchmark:
    """Load a benchmark manifest (JSON) and all molecule files it names."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc

    if not isinstance(raw, dict) or "targets" not in raw:
        raise ManifestError("manifest must be an object with a 'targets' list")
    fp_cfg = raw.get("fingerprint", {})
    params = FingerprintParams(radius=fp_cfg.get("radius", 1),
                               n_bits=fp_cfg.get("n_bits", 4096))

    entries = raw["targets"]
    if not isinstance(entries, list) or not entries:
        raise ManifestError("'targets' must be a non-empty list")

    jobs: list[tuple[str, SplitRole, Path | None]] = []
    names: list[str] = []
    for entry in entries:
        name = entry.get("name")
        if not name:
            raise ManifestError("target entry without a name")
        if name in names:
            raise ManifestError(f"duplicate target name: {name}")
        names.append(name)
        for role in ALL_ROLES:
            if role.value not in entry:
                raise ManifestError(
                    f"target {name}: missing role entry '{role.value}'")
            rel = entry[role.value]
            if rel is None:
                if role is SplitRole.QUERY and entry.get("allow_empty_query"):
                    jobs.append((name, role, None))
                    continue
                raise ManifestError(
                    f"target {name}: role '{role.value}' is null "
                    "(only query may be, with allow_empty_query)")
            file_path = (path.parent / rel).resolve()
            if not file_path.is_file():
                raise ManifestError(
                    f"target {name}: missing file for role "
                    f"'{role.value}': {file_path}")
            jobs.append((name, role, file_path))

    work = [(name, role, file_path, params) for name, role, file_path in jobs]
    if workers > 1 and len(work) > 1:
        # parsing is CPU-bound pure Python, so real parallelism needs
        # processes; results are reassembled by key, not completion order
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_load_job, work))
    else:
        results = [_load_job(job) for job in work]

    per_target: dict[str, dict[SplitRole, list[MoleculeRecord]]] = \
        {name: {} for name in names}
    for name, role, records in results:
        per_target[name][role] = records

    targets = [TargetDataset(name, per_target[name]) for name in names]
    return Benchmark(targets, str(path), params)


def _load_job(job) -> tuple[str, SplitRole, list[MoleculeRecord]]:
    name, role, file_path, params = job
    if file_path is None:
        return name, role, []
    return name, role, load_molecule_file(file_path, role, name, params)

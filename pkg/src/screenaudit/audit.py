"""The four dataset-integrity detectors and the audit summary.

Categories:

* ``inter_identity``  - identical molecules shared across splits
* ``inter_analog``    - similar molecules (Tc >= tc_inter) across splits
* ``intra_identity``  - identical molecules repeated within one split
* ``intra_analog``    - similar molecules (Tc >= tc_intra or MCS ratio >=
  mcs_intra) within one split

Both analog passes run on deduplicated records, and the inter-analog pass
excludes canonical strings already reported as identity leaks, so no record
pair can appear in two categories and the per-category counts stay additive.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

from . import __version__
from .chemgraph import parse_smiles
from .dataset import ALL_ROLES, Benchmark, SplitRole, TargetDataset
from .fingerprints import FingerprintParams
from .simsearch import find_cross_pairs, find_self_pairs, mcs_ratio, tanimoto

REPORT_SCHEMA_VERSION = 1


class Category(str, Enum):
    INTER_IDENTITY = "inter_identity"
    INTER_ANALOG = "inter_analog"
    INTRA_IDENTITY = "intra_identity"
    INTRA_ANALOG = "intra_analog"

    def __str__(self) -> str:
        return self.value


# Cross-split comparisons run by default; chosen to match the comparisons a
# leakage report actually cites rather than all 10 role pairs.
DEFAULT_IDENTITY_PAIRS = (
    (SplitRole.QUERY, SplitRole.TRAIN_ACTIVE),
    (SplitRole.QUERY, SplitRole.VAL_ACTIVE),
    (SplitRole.TRAIN_INACTIVE, SplitRole.VAL_INACTIVE),
    (SplitRole.TRAIN_ACTIVE, SplitRole.VAL_ACTIVE),
)


@dataclass(frozen=True)
class AuditConfig:
    tc_inter: float = 0.6
    tc_intra: float = 0.85
    mcs_intra: float = 0.9
    # role-pair policy flags; the defaults mirror the standard comparisons
    analog_active_active: bool = True
    analog_inactive_inactive: bool = False
    analog_query_vs_all: bool = False
    mcs_prefilter: bool = True
    mcs_prefilter_margin: float = 0.25
    mcs_budget: int = 1_000_000
    params: FingerprintParams = field(default_factory=FingerprintParams)
    workers: int = 1

    def __post_init__(self):
        for name in ("tc_inter", "tc_intra", "mcs_intra"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {val}")

    def identity_pairs(self) -> tuple[tuple[SplitRole, SplitRole], ...]:
        pairs = list(DEFAULT_IDENTITY_PAIRS)
        if self.analog_query_vs_all:
            for role in (SplitRole.TRAIN_INACTIVE, SplitRole.VAL_INACTIVE):
                pairs.append((SplitRole.QUERY, role))
        return tuple(pairs)

    def analog_pairs(self) -> tuple[tuple[SplitRole, SplitRole], ...]:
        pairs = []
        if self.analog_active_active:
            pairs.append((SplitRole.TRAIN_ACTIVE, SplitRole.VAL_ACTIVE))
        if self.analog_inactive_inactive:
            pairs.append((SplitRole.TRAIN_INACTIVE, SplitRole.VAL_INACTIVE))
        if self.analog_query_vs_all:
            for role in (SplitRole.TRAIN_ACTIVE, SplitRole.TRAIN_INACTIVE,
                         SplitRole.VAL_ACTIVE, SplitRole.VAL_INACTIVE):
                pairs.append((SplitRole.QUERY, role))
        return tuple(pairs)

    def to_dict(self) -> dict:
        return {
            "tc_inter": self.tc_inter,
            "tc_intra": self.tc_intra,
            "mcs_intra": self.mcs_intra,
            "analog_active_active": self.analog_active_active,
            "analog_inactive_inactive": self.analog_inactive_inactive,
            "analog_query_vs_all": self.analog_query_vs_all,
            "mcs_prefilter": self.mcs_prefilter,
            "mcs_prefilter_margin": self.mcs_prefilter_margin,
            "mcs_budget": self.mcs_budget,
            "fingerprint": {"radius": self.params.radius,
                            "n_bits": self.params.n_bits},
            "workers": self.workers,
        }


@dataclass(frozen=True)
class LeakFinding:
    category: Category
    target: str
    role_a: SplitRole
    role_b: SplitRole
    ids_a: tuple[str, ...]
    ids_b: tuple[str, ...]
    canonical_a: str
    canonical_b: str
    tc: float | None = None
    mcs: float | None = None
    mcs_exact: bool | None = None

    def to_dict(self) -> dict:
        out = {
            "category": self.category.value,
            "target": self.target,
            "role_a": self.role_a.value,
            "role_b": self.role_b.value,
            "ids_a": list(self.ids_a),
            "ids_b": list(self.ids_b),
            "canonical_a": self.canonical_a,
            "canonical_b": self.canonical_b,
        }
        if self.tc is not None:
            out["tc"] = self.tc
        if self.mcs is not None:
            out["mcs"] = self.mcs
            out["mcs_exact"] = self.mcs_exact
        return out


def detect_inter_identity(target: TargetDataset,
                          config: AuditConfig = AuditConfig(),
                          ) -> list[LeakFinding]:
    """One finding per canonical string shared between two splits."""
    findings = []
    for role_a, role_b in config.identity_pairs():
        map_a = target.dedup_map(role_a)
        map_b = target.dedup_map(role_b)
        for canonical in sorted(set(map_a) & set(map_b)):
            findings.append(LeakFinding(
                Category.INTER_IDENTITY, target.name, role_a, role_b,
                tuple(map_a[canonical]), tuple(map_b[canonical]),
                canonical, canonical))
    return findings


def detect_inter_analog(target: TargetDataset,
                        config: AuditConfig = AuditConfig(),
                        ) -> list[LeakFinding]:
    """Cross-split pairs at Tc >= tc_inter, identity matches excluded."""
    findings = []
    for role_a, role_b in config.analog_pairs():
        shared = set(target.dedup_map(role_a)) & set(target.dedup_map(role_b))
        recs_a = [r for r in target.unique[role_a]
                  if r.fingerprint is not None and r.canonical not in shared]
        recs_b = [r for r in target.unique[role_b]
                  if r.fingerprint is not None and r.canonical not in shared]
        # qualify ids so the two sides can never collide
        side_a = [(f"a\x1f{r.record_id}", r.fingerprint) for r in recs_a]
        side_b = [(f"b\x1f{r.record_id}", r.fingerprint) for r in recs_b]
        lookup_a = {r.record_id: r for r in recs_a}
        lookup_b = {r.record_id: r for r in recs_b}
        for pair in find_cross_pairs(side_a, side_b, config.tc_inter):
            first, second = pair.id_a, pair.id_b
            if first.startswith("b\x1f"):
                first, second = second, first
            rec_a = lookup_a[first.split("\x1f", 1)[1]]
            rec_b = lookup_b[second.split("\x1f", 1)[1]]
            findings.append(LeakFinding(
                Category.INTER_ANALOG, target.name, role_a, role_b,
                (rec_a.record_id,), (rec_b.record_id,),
                rec_a.canonical, rec_b.canonical, tc=pair.tc))
    findings.sort(key=lambda f: (f.role_a.value, f.role_b.value,
                                 -(f.tc or 0.0), f.ids_a, f.ids_b))
    return findings


def detect_intra_identity(target: TargetDataset,
                          config: AuditConfig = AuditConfig(),
                          ) -> list[LeakFinding]:
    """One finding per duplicate group within a single split."""
    findings = []
    for role in ALL_ROLES:
        for group in target.dup_groups[role]:
            findings.append(LeakFinding(
                Category.INTRA_IDENTITY, target.name, role, role,
                group.record_ids, (), group.canonical, group.canonical))
    return findings


def detect_intra_analog(target: TargetDataset,
                        config: AuditConfig = AuditConfig(),
                        ) -> list[LeakFinding]:
    """Within-split near-duplicate pairs, evaluated after deduplication.

    A pair is reported when Tc >= tc_intra or its MCS ratio >= mcs_intra.
    With the prefilter enabled (default) the MCS is only computed for pairs
    with Tc >= tc_intra - mcs_prefilter_margin, which bounds cost but can
    miss pairs whose similarity is visible only to the MCS; the report
    header discloses this.
    """
    findings = []
    for role in ALL_ROLES:
        recs = [r for r in target.unique[role] if r.fingerprint is not None]
        by_id = {r.record_id: r for r in recs}
        mols: dict[str, object] = {}

        def mol_of(rid: str):
            if rid not in mols:
                mols[rid] = parse_smiles(by_id[rid].canonical)
            return mols[rid]

        if config.mcs_prefilter:
            floor = max(config.tc_intra - config.mcs_prefilter_margin, 1e-9)
            candidates = [(p.id_a, p.id_b, p.tc) for p in find_self_pairs(
                [(r.record_id, r.fingerprint) for r in recs], floor)]
        else:
            ordered = sorted(by_id)
            candidates = []
            for i, ra in enumerate(ordered):
                for rb in ordered[i + 1:]:
                    candidates.append((ra, rb, tanimoto(
                        by_id[ra].fingerprint, by_id[rb].fingerprint)))
        for id_a, id_b, tc in candidates:
            result = mcs_ratio(mol_of(id_a), mol_of(id_b), config.mcs_budget)
            if tc >= config.tc_intra or result.ratio >= config.mcs_intra:
                findings.append(LeakFinding(
                    Category.INTRA_ANALOG, target.name, role, role,
                    (id_a,), (id_b,),
                    by_id[id_a].canonical, by_id[id_b].canonical,
                    tc=tc, mcs=result.ratio, mcs_exact=result.exact))
    findings.sort(key=lambda f: (f.role_a.value, -(f.tc or 0.0),
                                 f.ids_a, f.ids_b))
    return findings


_DETECTORS = {
    Category.INTER_IDENTITY: detect_inter_identity,
    Category.INTER_ANALOG: detect_inter_analog,
    Category.INTRA_IDENTITY: detect_intra_identity,
    Category.INTRA_ANALOG: detect_intra_analog,
}


@dataclass
class AuditSummary:
    findings: dict[Category, dict[str, list[LeakFinding]]]
    parse_failures: dict[str, dict[str, int]]
    config: AuditConfig
    tool_version: str = __version__

    @property
    def total_findings(self) -> int:
        return sum(len(per_target)
                   for by_target in self.findings.values()
                   for per_target in by_target.values())

    def count(self, category: Category, target: str | None = None) -> int:
        by_target = self.findings[category]
        if target is not None:
            return len(by_target.get(target, []))
        return sum(len(v) for v in by_target.values())

    def counts_by_role_pair(self, category: Category,
                            target: str | None = None) -> dict[str, int]:
        out: dict[str, int] = {}
        for tname, items in sorted(self.findings[category].items()):
            if target is not None and tname != target:
                continue
            for f in items:
                key = f"{f.role_a.value}|{f.role_b.value}"
                out[key] = out.get(key, 0) + 1
        return dict(sorted(out.items()))

    def distinct_canonicals(self, category: Category) -> int:
        """Benchmark-wide rollup: distinct offending structures, all targets.

        Complements the per-target counts for identity categories, where one
        inactive may be shared in several targets.
        """
        seen = set()
        for items in self.findings[category].values():
            for f in items:
                seen.add(f.canonical_a)
        return len(seen)

    def to_report_dict(self) -> dict:
        categories = {}
        for category in Category:
            categories[category.value] = {
                tname: [f.to_dict() for f in items]
                for tname, items in sorted(self.findings[category].items())
                if items
            }
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "config": self.config.to_dict(),
            "caveats": self.caveats(),
            "totals": {
                category.value: {
                    "findings": self.count(category),
                    "by_role_pair": self.counts_by_role_pair(category),
                    "distinct_canonicals": self.distinct_canonicals(category),
                }
                for category in Category
            },
            "parse_failures": self.parse_failures,
            "categories": categories,
        }

    def caveats(self) -> list[str]:
        out = []
        if self.config.mcs_prefilter:
            floor = self.config.tc_intra - self.config.mcs_prefilter_margin
            out.append(
                "intra-set analog MCS computed only for pairs with "
                f"Tc >= {floor:g} (prefilter); pairs similar only under MCS "
                "below that Tc are not searched")
        out.append("multi-component (salt) inputs are kept whole; identity "
                   "matching treats the full canonical string as the key")
        return out

    def format_table(self) -> str:
        lines = []
        lines.append("dataset integrity audit")
        lines.append(f"tool version {self.tool_version}; "
                     f"tc_inter={self.config.tc_inter:g} "
                     f"tc_intra={self.config.tc_intra:g} "
                     f"mcs_intra={self.config.mcs_intra:g} "
                     f"bits={self.config.params.n_bits} "
                     f"radius={self.config.params.radius}")
        for caveat in self.caveats():
            lines.append(f"note: {caveat}")
        lines.append("")
        header = f"{'category':<16} {'role pair':<34} {'target':<12} {'count':>5}"
        lines.append(header)
        lines.append("-" * len(header))
        for category in Category:
            by_target = self.findings[category]
            total = self.count(category)
            for tname, items in sorted(by_target.items()):
                pairs: dict[str, int] = {}
                for f in items:
                    key = f"{f.role_a.value} x {f.role_b.value}" \
                        if f.role_a != f.role_b else f"within {f.role_a.value}"
                    pairs[key] = pairs.get(key, 0) + 1
                for key, count in sorted(pairs.items()):
                    lines.append(f"{category.value:<16} {key:<34} "
                                 f"{tname:<12} {count:>5}")
            lines.append(f"{category.value:<16} {'TOTAL':<34} {'ALL':<12} "
                         f"{total:>5}")
            if category in (Category.INTER_IDENTITY, Category.INTRA_IDENTITY):
                lines.append(f"{category.value:<16} "
                             f"{'distinct structures':<34} {'ALL':<12} "
                             f"{self.distinct_canonicals(category):>5}")
        fail_total = sum(sum(v.values()) for v in self.parse_failures.values())
        lines.append("")
        lines.append(f"parse failures: {fail_total}")
        for tname, roles in sorted(self.parse_failures.items()):
            for role, count in sorted(roles.items()):
                if count:
                    lines.append(f"  {tname} {role}: {count}")
        return "\n".join(lines) + "\n"


def audit_target(target: TargetDataset, config: AuditConfig,
                 ) -> dict[Category, list[LeakFinding]]:
    return {category: detector(target, config)
            for category, detector in _DETECTORS.items()}


def summarize(benchmark: Benchmark,
              config: AuditConfig = AuditConfig()) -> AuditSummary:
    """Run every detector on every target and assemble the summary.

    Targets are processed in parallel when config.workers > 1; results are
    keyed by target name so the output does not depend on scheduling.
    """
    config = replace(config, params=benchmark.params)
    targets = benchmark.targets
    if config.workers > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda t: audit_target(t, config),
                                    targets))
    else:
        results = [audit_target(t, config) for t in targets]

    findings: dict[Category, dict[str, list[LeakFinding]]] = \
        {category: {} for category in Category}
    for target, result in zip(targets, results):
        for category, items in result.items():
            findings[category][target.name] = items
    failures = {
        t.name: {role.value: len(t.parse_failures(role)) for role in ALL_ROLES}
        for t in targets
    }
    return AuditSummary(findings, failures, config)

import json

import pytest

from screenaudit.audit import (AuditConfig, Category, detect_inter_analog,
                               detect_inter_identity, detect_intra_analog,
                               detect_intra_identity, summarize)
from screenaudit.chemgraph import parse_smiles
from screenaudit.dataset import (MoleculeRecord, SplitRole, TargetDataset,
                                 load_manifest)
from screenaudit.fingerprints import ecfp
from screenaudit.simsearch import tanimoto

from planted import EXPECTED_CELLS, write_planted_benchmark


def rec(rid, smiles, role, target="T"):
    mol = parse_smiles(smiles)
    from screenaudit.chemgraph import canonical_smiles
    return MoleculeRecord(rid, smiles, role, target,
                          canonical=canonical_smiles(mol),
                          fingerprint=ecfp(mol))


def make_target(**roles):
    records = {}
    for key, items in roles.items():
        role = SplitRole(key)
        records[role] = [rec(rid, smi, role) for rid, smi in items]
    return TargetDataset("T", records)


@pytest.fixture(scope="module")
def planted_bench(tmp_path_factory):
    manifest = write_planted_benchmark(tmp_path_factory.mktemp("planted"))
    return load_manifest(manifest)


class TestInterIdentity:
    def test_query_ligand_in_train(self):
        target = make_target(
            query=[("DZG", "Cn1cnc2c1c(=O)n(C)c(=O)n2C")],
            train_active=[("t1", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"),
                          ("t2", "CCO")])
        findings = detect_inter_identity(target)
        assert len(findings) == 1
        f = findings[0]
        assert f.role_a is SplitRole.QUERY
        assert f.role_b is SplitRole.TRAIN_ACTIVE
        assert f.ids_a == ("DZG",) and f.ids_b == ("t1",)

    def test_disjoint_sets(self):
        target = make_target(query=[("q", "CCO")],
                             train_active=[("t", "CCN")])
        assert detect_inter_identity(target) == []

    def test_planted_shared_inactives(self):
        shared = [("s1", "FC(F)(F)c1ccccc1"), ("s2", "O=[N+]([O-])c1ccccc1"),
                  ("s3", "CSc1ccccc1")]
        target = make_target(
            train_inactive=shared + [("t4", "CCO")],
            val_inactive=[(f"v_{rid}", smi) for rid, smi in shared])
        findings = detect_inter_identity(target)
        assert len(findings) == 3
        assert all(f.role_a is SplitRole.TRAIN_INACTIVE for f in findings)


class TestInterAnalog:
    def test_identical_pair_excluded(self):
        target = make_target(train_active=[("a", "CCO")],
                             val_active=[("b", "OCC")])
        assert detect_inter_analog(target) == []
        assert len(detect_inter_identity(target)) == 1

    def test_analog_pair_found_with_tc(self):
        a, b = "CCCc1ccncc1", "CCCCc1ccncc1"
        target = make_target(train_active=[("a", a)], val_active=[("b", b)])
        findings = detect_inter_analog(target)
        assert len(findings) == 1
        expected = tanimoto(ecfp(parse_smiles(a)), ecfp(parse_smiles(b)))
        assert expected >= 0.6
        assert findings[0].tc == pytest.approx(expected, abs=0)
        assert findings[0].ids_a == ("a",)

    def test_threshold_respected(self):
        a, b = "NC(=O)c1cccs1", "NC(=O)c1ccc(C)s1"   # tc ~0.611
        target = make_target(train_active=[("a", a)], val_active=[("b", b)])
        assert len(detect_inter_analog(target)) == 1
        strict = AuditConfig(tc_inter=0.7)
        assert detect_inter_analog(target, strict) == []


class TestIntraIdentity:
    def test_repeated_ligand_code(self):
        smi = "CC(C)Cc1ccc(cc1)C(C)C(=O)O"
        target = make_target(query=[(f"RAP#{i}", smi) for i in range(5)]
                             + [("OTHER", "CCO")])
        findings = detect_intra_identity(target)
        assert len(findings) == 1
        assert len(findings[0].ids_a) == 5

    def test_all_unique(self):
        target = make_target(query=[("a", "CCO"), ("b", "CCN")])
        assert detect_intra_identity(target) == []

    def test_scaled_plant(self):
        items = []
        for i in range(12):
            items.append((f"d{i}a", f"{'C' * (i + 1)}O"))
            items.append((f"d{i}b", f"{'C' * (i + 1)}O"))
        target = make_target(train_inactive=items)
        assert len(detect_intra_identity(target)) == 12


class TestIntraAnalog:
    def test_identical_pair_is_identity_not_analog(self):
        target = make_target(query=[("a", "CCO"), ("b", "OCC")])
        assert detect_intra_analog(target) == []
        assert len(detect_intra_identity(target)) == 1

    def test_tc_pair(self):
        a, b = "CCCc1ccncc1", "CCCCc1ccncc1"   # tc ~0.923
        target = make_target(query=[("a", a), ("b", b)])
        findings = detect_intra_analog(target)
        assert len(findings) == 1
        assert findings[0].tc >= 0.85
        assert findings[0].mcs is not None

    def test_mcs_only_pair(self):
        # tc 0.625 (below 0.85, above the prefilter floor), MCS 0.941
        a, b = "Clc1ccc(CCCCCCCCCC)cc1", "Brc1ccc(CCCCCCCCCC)cc1"
        target = make_target(val_active=[("a", a), ("b", b)])
        findings = detect_intra_analog(target)
        assert len(findings) == 1
        assert findings[0].tc < 0.85
        assert findings[0].mcs >= 0.9
        assert findings[0].mcs_exact

    def test_no_prefilter_finds_low_tc_mcs_pair(self):
        # cyclohexanol/cyclopentanol analog seen only without the prefilter
        target = make_target(query=[("a", "OC1CCCCC1CCCCCCCCCCCCCC"),
                                    ("b", "OC1CCCC1CCCCCCCCCCCCCC")])
        tc = tanimoto(target.unique[SplitRole.QUERY][0].fingerprint,
                      target.unique[SplitRole.QUERY][1].fingerprint)
        with_pre = detect_intra_analog(target)
        exhaustive = detect_intra_analog(
            target, AuditConfig(mcs_prefilter=False))
        if tc < 0.6:
            assert with_pre == []
        if exhaustive:
            assert exhaustive[0].mcs >= 0.9


class TestSummary:
    def test_planted_cells(self, planted_bench):
        summary = summarize(planted_bench)
        for category in Category:
            for target in ("T1", "T2"):
                got = summary.counts_by_role_pair(category, target)
                assert got == EXPECTED_CELLS[category.value][target], \
                    f"{category} {target}"

    def test_parallel_levels_identical(self, planted_bench):
        reports = []
        for workers in (1, 2, 4):
            summary = summarize(planted_bench, AuditConfig(workers=workers))
            report = summary.to_report_dict()
            report["config"].pop("workers")   # the only legitimate difference
            reports.append(json.dumps(report, sort_keys=True))
        assert reports[0] == reports[1] == reports[2]

    def test_category_disjointness(self, planted_bench):
        summary = summarize(planted_bench)
        identity_pairs = set()
        analog_pairs = set()
        for by_target, sink in (
                (summary.findings[Category.INTER_IDENTITY], identity_pairs),
                (summary.findings[Category.INTRA_IDENTITY], identity_pairs)):
            for items in by_target.values():
                for f in items:
                    ids = sorted(f.ids_a + f.ids_b)
                    for i, x in enumerate(ids):
                        for y in ids[i + 1:]:
                            sink.add((x, y))
        for by_target in (summary.findings[Category.INTER_ANALOG],
                          summary.findings[Category.INTRA_ANALOG]):
            for items in by_target.values():
                for f in items:
                    analog_pairs.add(tuple(sorted(f.ids_a + f.ids_b)))
        assert identity_pairs.isdisjoint(analog_pairs)

    def test_threshold_monotonicity(self, planted_bench):
        counts = []
        for tc_inter, tc_intra in ((0.6, 0.85), (0.7, 0.9), (0.95, 0.99)):
            config = AuditConfig(tc_inter=tc_inter, tc_intra=tc_intra,
                                 mcs_intra=0.95)
            summary = summarize(planted_bench, config)
            counts.append((summary.count(Category.INTER_ANALOG),
                           summary.count(Category.INTRA_ANALOG)))
        assert counts[0] >= counts[1] >= counts[2]

    def test_counts_match_finding_lists(self, planted_bench):
        summary = summarize(planted_bench)
        report = summary.to_report_dict()
        for category in Category:
            listed = sum(len(v)
                         for v in report["categories"][category.value].values())
            assert report["totals"][category.value]["findings"] == listed

    def test_report_schema_fields(self, planted_bench):
        report = summarize(planted_bench).to_report_dict()
        assert report["schema_version"] == 1
        assert "tool_version" in report
        assert "config" in report
        assert report["parse_failures"]["T1"]["query"] == 0

    def test_empty_benchmark_all_zero(self, tmp_path):
        for role in ("query", "train_active", "train_inactive",
                     "val_active", "val_inactive"):
            (tmp_path / f"{role}.smi").write_text("")
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps({"targets": [{
            "name": "E", "query": "query.smi",
            "train_active": "train_active.smi",
            "train_inactive": "train_inactive.smi",
            "val_active": "val_active.smi",
            "val_inactive": "val_inactive.smi"}]}))
        summary = summarize(load_manifest(manifest))
        assert summary.total_findings == 0

    def test_config_rejects_bad_thresholds(self):
        with pytest.raises(ValueError):
            AuditConfig(tc_inter=0.0)
        with pytest.raises(ValueError):
            AuditConfig(mcs_intra=1.5)

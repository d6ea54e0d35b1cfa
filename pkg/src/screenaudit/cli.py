"""Command-line front end.

Subcommands: ``audit``, ``baseline``, ``metrics``, ``canonicalize``, ``fp``.
Every artifact embeds the resolved run configuration and the tool version,
and contains no timestamps, so a rerun with identical inputs is
byte-identical.  Exit codes: 0 clean, 3 when the audit found integrity
failures (so CI can gate on cleanliness), 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from . import __version__
from .audit import AuditConfig, summarize
from .chemgraph import ParseError, canonical_smiles, parse_smiles
from .dataset import ManifestError, SplitRole, load_manifest
from .fingerprints import FingerprintParams, ecfp
from .screen import (DegenerateInput, InflationParams, Provenance, RankEntry,
                     Ranking, TIE_MODES, analytic_inflated_ef, auroc,
                     enrichment_factor, score_target, simulate_planted_ef)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 3


def _fp_params(args) -> FingerprintParams:
    return FingerprintParams(radius=args.radius, n_bits=args.bits)


def _run_config(args, command: str) -> dict:
    cfg = {"command": command, "tool_version": __version__}
    for key in ("manifest", "tc_inter", "tc_intra", "mcs_intra", "bits",
                "radius", "tie_mode", "no_mcs_prefilter", "out", "seed",
                "workers", "ef", "scores", "trials", "inflation"):
        if hasattr(args, key):
            value = getattr(args, key)
            if isinstance(value, Path):
                value = str(value)
            cfg[key] = value
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_audit(args) -> int:
    try:
        benchmark = load_manifest(args.manifest, workers=args.workers)
    except (ManifestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    config = AuditConfig(
        tc_inter=args.tc_inter, tc_intra=args.tc_intra,
        mcs_intra=args.mcs_intra, mcs_prefilter=not args.no_mcs_prefilter,
        params=_fp_params(args), workers=args.workers)
    summary = summarize(benchmark, config)
    report = {"run_config": _run_config(args, "audit"),
              "ingest": benchmark.ingest_report()}
    report.update(summary.to_report_dict())
    out = Path(args.out)
    _write_json(out / "audit_report.json", report)
    _write_text(out / "audit_summary.txt", summary.format_table())
    print(summary.format_table(), end="")
    print(f"report written to {out / 'audit_report.json'}")
    return EXIT_FINDINGS if summary.total_findings else EXIT_OK


def _score_lines(ranking: Ranking, config_echo: dict) -> str:
    lines = [f"# screenaudit {__version__}",
             f"# config {json.dumps(config_echo, sort_keys=True)}",
             "record_id\tscore\tprovenance\tlabel"]
    for e in ranking.entries:
        prov = e.provenance.value if e.provenance else ""
        label = "active" if e.active else "inactive"
        lines.append(f"{e.record_id}\t{e.score!r}\t{prov}\t{label}")
    return "\n".join(lines) + "\n"


def _ef_block(ranking: Ranking, fractions, default_mode: str) -> dict:
    block = {}
    for f in fractions:
        per_mode = {mode: enrichment_factor(ranking, f, mode).ef
                    for mode in TIE_MODES}
        entry = {"k": enrichment_factor(ranking, f, default_mode).k,
                 default_mode: per_mode[default_mode]}
        spread = max(per_mode.values()) - min(per_mode.values())
        if spread > 1e-9:
            entry.update({m: per_mode[m] for m in TIE_MODES})
        block[f"{f:g}"] = entry
    return block


def cmd_baseline(args) -> int:
    try:
        benchmark = load_manifest(args.manifest, workers=args.workers)
    except (ManifestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    fractions = args.ef or [0.01]
    run_cfg = _run_config(args, "baseline")
    out = Path(args.out)
    per_target = {}
    table_rows = []
    for target in benchmark.targets:
        n_val = len(target.records[SplitRole.VAL_ACTIVE]) \
            + len(target.records[SplitRole.VAL_INACTIVE])
        if n_val == 0:
            print(f"error: target {target.name} has an empty validation set",
                  file=sys.stderr)
            return EXIT_ERROR
        ranking, unparseable, baseline = score_target(target)
        if ranking.n_active == 0:
            print(f"error: target {target.name} has no validation actives",
                  file=sys.stderr)
            return EXIT_ERROR
        _write_text(out / f"scores_{target.name}.tsv",
                    _score_lines(ranking, run_cfg))
        try:
            efs = _ef_block(ranking, fractions, args.tie_mode)
        except DegenerateInput as exc:
            print(f"error: target {target.name}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        entry = {
            "n_total": ranking.n_total,
            "n_active": ranking.n_active,
            "ef": efs,
            "auroc": auroc(ranking),
            "unparseable": unparseable,
            "train_label_conflicts": baseline.conflicts,
        }
        per_target[target.name] = entry
        table_rows.append((target.name, ranking.n_total, ranking.n_active,
                           efs, entry["auroc"]))

    payload = {"run_config": run_cfg, "tool_version": __version__,
               "targets": per_target}
    _write_json(out / "baseline_metrics.json", payload)

    lines = [f"memorization baseline (tool {__version__})",
             f"tie mode: {args.tie_mode}; fractions: "
             + ", ".join(f"{f:g}" for f in fractions), ""]
    frac_headers = "".join(f"  EF@{f:g}".ljust(12) for f in fractions)
    lines.append(f"{'target':<14}{'N':>8}{'A':>6}{frac_headers}  {'AUROC':>7}")
    collected = {f"{f:g}": [] for f in fractions}
    any_spread = False
    for name, n, a, efs, roc in table_rows:
        cells = ""
        for f in fractions:
            val = efs[f"{f:g}"][args.tie_mode]
            collected[f"{f:g}"].append(val)
            spread = len(efs[f"{f:g}"]) > 2
            any_spread = any_spread or spread
            cells += f"{val:>10.2f}{'*' if spread else '':<2}"
        lines.append(f"{name:<14}{n:>8}{a:>6}{cells}  {roc:>7.3f}")
    for label, fn in (("mean", statistics.fmean), ("median", statistics.median)):
        cells = "".join(f"{fn(collected[f'{f:g}']):>10.2f}  " for f in fractions)
        lines.append(f"{label:<14}{'':>8}{'':>6}{cells}")
    if any_spread:
        lines.append("")
        lines.append("* tie modes disagree by more than 1e-9; see the JSON "
                     "report for the optimistic/pessimistic values")
    table = "\n".join(lines) + "\n"
    _write_text(out / "baseline_table.txt", table)
    print(table, end="")
    return EXIT_OK


def _read_scores(path: Path) -> Ranking:
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#") \
                    or line.startswith("record_id\t"):
                continue
            rid, score, prov, label = line.split("\t")
            entries.append(RankEntry(
                rid, float(score), label == "active",
                Provenance(prov) if prov else None))
    return Ranking(entries)


def cmd_metrics(args) -> int:
    payload: dict = {"run_config": _run_config(args, "metrics"),
                     "tool_version": __version__}
    if args.scores is None and args.inflation is None:
        print("error: metrics needs --scores and/or --inflation",
              file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.scores is not None:
            ranking = _read_scores(Path(args.scores))
            fractions = args.ef or [0.01]
            payload["scores"] = {
                "n_total": ranking.n_total,
                "n_active": ranking.n_active,
                "ef": _ef_block(ranking, fractions, args.tie_mode),
                "auroc": auroc(ranking),
            }
        if args.inflation is not None:
            n, a, k, g = args.inflation
            params = InflationParams(n, a, k, g)
            analytic = analytic_inflated_ef(params)
            efs = simulate_planted_ef(params, args.trials, seed=args.seed)
            payload["inflation"] = {
                "params": {"n_total": n, "n_active": a, "k": k,
                           "guaranteed": g},
                "analytic_ef": analytic,
                "simulated_mean_ef": float(efs.mean()),
                "simulated_std_ef": float(efs.std(ddof=1)) if len(efs) > 1 else 0.0,
                "trials": args.trials,
                "seed": args.seed,
            }
    except (DegenerateInput, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out:
        _write_json(Path(args.out) / "metrics.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_canonicalize(args) -> int:
    path = Path(args.input)
    try:
        text = sys.stdin.read() if args.input == "-" \
            else path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    failed = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        smiles = tokens[0]
        rid = tokens[1] if len(tokens) > 1 else ""
        try:
            canonical = canonical_smiles(parse_smiles(smiles))
        except ParseError as exc:
            print(f"line {lineno}: {smiles}: {exc}", file=sys.stderr)
            failed = True
            continue
        print(f"{canonical}\t{rid}" if rid else canonical)
    return EXIT_ERROR if failed else EXIT_OK


def cmd_fp(args) -> int:
    try:
        mol = parse_smiles(args.smiles)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    fp = ecfp(mol, _fp_params(args))
    print(" ".join(str(i) for i in fp.bit_indices()))
    return EXIT_OK


def _add_fp_flags(parser) -> None:
    parser.add_argument("--bits", type=int, default=4096,
                        help="fingerprint width (default 4096)")
    parser.add_argument("--radius", type=int, default=1,
                        help="fingerprint radius; diameter-2 == radius 1 "
                             "(default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screenaudit",
        description="Integrity audits and a memorization baseline for "
                    "ligand-based screening benchmarks")
    parser.add_argument("--version", action="version",
                        version=f"screenaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="run the four integrity detectors")
    p_audit.add_argument("--manifest", required=True)
    p_audit.add_argument("--tc-inter", type=float, default=0.6, dest="tc_inter")
    p_audit.add_argument("--tc-intra", type=float, default=0.85, dest="tc_intra")
    p_audit.add_argument("--mcs-intra", type=float, default=0.9, dest="mcs_intra")
    p_audit.add_argument("--no-mcs-prefilter", action="store_true",
                         dest="no_mcs_prefilter",
                         help="exhaustive MCS on all within-split pairs")
    p_audit.add_argument("--workers", type=int, default=1)
    p_audit.add_argument("--out", default="audit_out")
    _add_fp_flags(p_audit)
    p_audit.set_defaults(func=cmd_audit)

    p_base = sub.add_parser("baseline", help="memorization baseline scores "
                                             "and EF/AUROC table")
    p_base.add_argument("--manifest", required=True)
    p_base.add_argument("--tie-mode", choices=TIE_MODES, default="expected",
                        dest="tie_mode")
    p_base.add_argument("--ef", type=float, action="append",
                        help="EF fraction, repeatable (default 0.01)")
    p_base.add_argument("--workers", type=int, default=1)
    p_base.add_argument("--out", default="baseline_out")
    _add_fp_flags(p_base)
    p_base.set_defaults(func=cmd_baseline)

    p_met = sub.add_parser("metrics", help="EF/AUROC from a score file, "
                                           "and the leak-inflation model")
    p_met.add_argument("--scores", help="score TSV from the baseline command")
    p_met.add_argument("--ef", type=float, action="append")
    p_met.add_argument("--tie-mode", choices=TIE_MODES, default="expected",
                       dest="tie_mode")
    p_met.add_argument("--inflation", nargs=4, type=int,
                       metavar=("N", "A", "K", "G"),
                       help="analytic + Monte-Carlo EF with G guaranteed hits")
    p_met.add_argument("--trials", type=int, default=10000)
    p_met.add_argument("--seed", type=int, default=0)
    p_met.add_argument("--out")
    p_met.set_defaults(func=cmd_metrics)

    p_can = sub.add_parser("canonicalize",
                           help="canonical SMILES for each input line")
    p_can.add_argument("input", help="molecule file, or - for stdin")
    p_can.set_defaults(func=cmd_canonicalize)

    p_fp = sub.add_parser("fp", help="set-bit indices for one SMILES")
    p_fp.add_argument("smiles")
    _add_fp_flags(p_fp)
    p_fp.set_defaults(func=cmd_fp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

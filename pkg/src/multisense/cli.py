"""Command-line driver.

Exit codes: 0 success, 1 usage, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from multisense import metrics
from multisense.corpus import (
    PDTB3_LEVEL2_COUNTS,
    RecordError,
    compute_stats,
    dump_records,
    filter_vocabulary,
    parse_records,
    read_records,
)
from multisense.folds import EXAMPLE_LEVEL, SECTION_LEVEL, SplitPlan, make_plan
from multisense.metrics import AlignmentError
from multisense.runio import ManifestMismatch, atomic_write_text, check_digest, read_manifest, read_predictions

logger = logging.getLogger("multisense")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_ingest(args) -> int:
    src = Path(args.source)
    fmt = args.format
    if fmt == "auto":
        fmt = "pdtb3" if src.is_dir() else "records"
    errors: list[RecordError] = []
    problems: list[str] = []
    if fmt == "records":
        instances = read_records(src, errors=errors if args.lenient else None)
    else:
        from multisense.pdtb import convert_tree

        lines = []
        for item in convert_tree(src):
            if isinstance(item, str):
                problems.append(item)
            else:
                lines.append(json.dumps(item, ensure_ascii=False))
        instances = parse_records(lines, errors=errors if args.lenient else None)
    kept, drops = filter_vocabulary(instances)
    out = Path(args.output)
    atomic_write_text(out, dump_records(kept))
    report = drops.to_text()
    report += f"malformed {len(errors)}\n" + "".join(f"malformed\t{e}\n" for e in errors)
    report += f"unconverted {len(problems)}\n" + "".join(f"unconverted\t{p}\n" for p in problems)
    atomic_write_text(out.with_suffix(".drops.txt"), report)
    print(f"wrote {len(kept)} records to {out} (dropped {len(drops.dropped)}, malformed {len(errors)})")
    return EXIT_OK


def cmd_stats(args) -> int:
    instances = read_records(args.records)
    kept, _ = filter_vocabulary(instances)
    stats = compute_stats(kept)
    text = stats.label_table() + "\n" + stats.pair_table()
    text += f"\ntotal {stats.total}\nmultilabel_share {stats.multilabel_share:.4f}\n"
    if args.compare_pdtb3:
        diffs = [f"{k}: {stats.label_counts[k]} vs {v}" for k, v in PDTB3_LEVEL2_COUNTS.items()
                 if stats.label_counts[k] != v]
        text += "pdtb3 label counts: " + ("match\n" if not diffs else "differ\n  " + "\n  ".join(diffs) + "\n")
    if args.output:
        atomic_write_text(args.output, text)
    print(text, end="")
    return EXIT_OK


def cmd_split(args) -> int:
    instances = read_records(args.records)
    plan = make_plan(instances, args.mode, args.seed)
    atomic_write_text(args.output, plan.to_json())
    for note in plan.notes:
        print(f"note: {note}")
    sizes = ", ".join(f"{len(f.train)}/{len(f.dev)}/{len(f.test)}" for f in plan.folds)
    print(f"{plan.mode} plan, 12 folds (train/dev/test): {sizes}")
    return EXIT_OK


def load_config(path: str | None, overrides: list[str]):
    from multisense.trainer import TrainConfig

    values = {}
    if path:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise DataError(f"{path}: config must be a flat key-value mapping")
        values.update(loaded)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"override {item!r} is not key=value")
        values[key.strip()] = value.strip()
    try:
        return TrainConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid config: {exc}") from exc


def cmd_train(args) -> int:
    from multisense.trainer import run_experiment

    config = load_config(args.config, args.set or [])
    instances = read_records(args.records)
    plan = SplitPlan.load(args.plan)
    folds = [int(x) for x in args.folds.split(",")] if args.folds else None
    agg = run_experiment(plan, config, instances, args.run_dir, folds)
    if agg is not None:
        print(metrics.format_aggregate(agg), end="")
    print(f"run written to {args.run_dir}")
    return EXIT_OK


def _prediction_files(args) -> list[Path]:
    files = [Path(p) for p in args.predictions]
    if args.run_dir:
        files += sorted((Path(args.run_dir) / "predictions").glob("fold_*.jsonl"))
    if not files:
        raise UsageError("no prediction files given")
    return files


def cmd_evaluate(args) -> int:
    from multisense.reporting import evaluate_fold

    instances = read_records(args.records)
    by_id = {inst.id: inst for inst in instances}
    expected = read_manifest(args.run_dir)["digest"] if args.run_dir else None
    out_dir = Path(args.output) if args.output else (Path(args.run_dir) if args.run_dir else None)
    for k, path in enumerate(_prediction_files(args)):
        header, records = read_predictions(path)
        header = header or {}
        check_digest(expected, header.get("manifest_digest"), str(path))
        if expected is not None and "manifest_digest" not in header:
            raise ManifestMismatch(f"{path} carries no manifest digest")
        try:
            test = [by_id[r.instance_id] for r in records]
        except KeyError as exc:
            raise AlignmentError(f"{path}: prediction for unknown instance {exc.args[0]!r}") from None
        method = header.get("method") or (records[0].method if records else "m2")
        if args.criterion:
            report = metrics.evaluate_records(records, test, args.criterion,
                                              manifest_digest=header.get("manifest_digest"),
                                              fold_id=header.get("fold", k))
            if out_dir:
                atomic_write_text(out_dir / "metrics" / f"{path.stem}.{args.criterion}.json", report.to_json())
        else:
            report = evaluate_fold(records, test, method, header.get("manifest_digest"), header.get("fold", k),
                                   out_dir)
        print(f"{path.name}: macro P {100 * report.macro_precision:.2f} R {100 * report.macro_recall:.2f} "
              f"F1 {100 * report.macro_f1:.2f}"
              + (f" Hamming {100 * report.hamming:.2f}" if report.hamming is not None else ""))
    return EXIT_OK


def cmd_analyze(args) -> int:
    instances = read_records(args.records)
    by_id = {inst.id: inst for inst in instances}
    preds, golds = [], []
    digest = read_manifest(args.run_dir)["digest"] if args.run_dir else None
    for path in _prediction_files(args):
        header, records = read_predictions(path)
        check_digest(digest, (header or {}).get("manifest_digest"), str(path))
        for r in records:
            if r.instance_id not in by_id:
                raise AlignmentError(f"{path}: prediction for unknown instance {r.instance_id!r}")
            preds.append(r.predicted)
            golds.append(by_id[r.instance_id].label_ids)
    out = Path(args.output or Path(args.run_dir or ".") / "analysis")
    atomic_write_text(out / "cooccurrence_gold.txt",
                      metrics.format_matrix(metrics.cooccurrence(i.label_ids for i in instances).tolist(), digest))
    atomic_write_text(out / "cooccurrence_pred.txt", metrics.format_matrix(metrics.cooccurrence(preds).tolist(), digest))
    under = [[*k, v] for k, v in sorted(metrics.underprediction_matrix(preds, golds).items())]
    over = [[*k, v] for k, v in sorted(metrics.overprediction_matrix(preds, golds).items())]
    atomic_write_text(out / "underprediction.txt", metrics.format_pair_map(under, True, digest))
    atomic_write_text(out / "overprediction.txt", metrics.format_pair_map(over, False, digest))
    atomic_write_text(out / "count_table.txt",
                      metrics.format_count_table(metrics.count_table(preds, golds).tolist(), digest))
    atomic_write_text(out / "breakdown.txt",
                      metrics.format_breakdown(metrics.multilabel_breakdown(preds, golds).as_dict(), digest))
    print(f"analysis written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from multisense.reporting import write_report

    run_dir = Path(args.run_dir)
    digest = read_manifest(run_dir)["digest"]
    out = Path(args.output) if args.output else run_dir / "report"
    all_paths = sorted((run_dir / "metrics").glob("fold_*.json"))
    groups = (
        ("", [p for p in all_paths if not p.name.endswith(".single.json")]),
        ("single_", [p for p in all_paths if p.name.endswith(".single.json")]),
    )
    for prefix, paths in groups:
        if not paths:
            continue
        reports = [metrics.MetricsReport.from_json(p.read_text(encoding="utf-8")) for p in paths]
        for p, r in zip(paths, reports):
            check_digest(digest, r.manifest_digest, str(p))
        agg = metrics.aggregate(reports)
        write_report(agg, out, prefix)
        if not prefix:
            print(metrics.format_aggregate(agg), end="")
    print(f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multisense", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate records or convert a PDTB-3 tree")
    p.add_argument("source")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("auto", "records", "pdtb3"), default="auto")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="label and label-pair counts")
    p.add_argument("records")
    p.add_argument("-o", "--output")
    p.add_argument("--compare-pdtb3", action="store_true", help="diff label counts against published PDTB-3 counts")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="build a 12-fold plan")
    p.add_argument("records")
    p.add_argument("--mode", choices=(SECTION_LEVEL, EXAMPLE_LEVEL), default=SECTION_LEVEL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train and evaluate every fold of a plan")
    p.add_argument("records")
    p.add_argument("--plan", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--folds", help="comma-separated fold ids (default: all)")
    p.set_defaults(func=cmd_train)

    for verb, func, text in (("evaluate", cmd_evaluate, "score prediction files"),
                             ("analyze", cmd_analyze, "co-occurrence and error matrices")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("records")
        p.add_argument("predictions", nargs="*")
        p.add_argument("--run-dir")
        p.add_argument("-o", "--output")
        if verb == "evaluate":
            p.add_argument("--criterion", choices=(metrics.MULTI_LABEL, metrics.SINGLE_LABEL))
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="aggregate fold metrics into mean/std tables")
    p.add_argument("--run-dir", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RecordError, AlignmentError, ManifestMismatch, DataError, FileNotFoundError, json.JSONDecodeError,
            yaml.YAMLError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``ssfl partition | run | report``.

Exit codes: 0 success, 2 config error, 3 dataset or capacity error,
4 training divergence, 5 unreadable run metrics.
"""
import argparse
import csv
import json
import logging
import os
import sys

from .config import apply_seed_overrides, load_config
from .datasets import load_dataset
from .errors import CapacityError, ConfigError, DatasetError, InvalidInputError, TrainingDivergedError
from .orchestrator import write_run
from .partitioner import compute_noniid_R, make_plan, rounding_slack, synthesize_assignment

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_REPORT = 0, 2, 3, 4, 5

log = logging.getLogger("ssfl")


class ReportError(Exception):
    pass


def _load(args):
    cfg = load_config(args.config)
    cfg = apply_seed_overrides(cfg, args.seed_override)
    if getattr(args, "workers", None):
        cfg = cfg.replace(run={"workers": args.workers})
    return cfg


def cmd_partition(args):
    cfg = _load(args)
    xtr, ytr, _, _ = load_dataset(cfg.dataset)
    fed = cfg.federation
    plan = make_plan(ytr, cfg.dataset.num_classes, fed.K, fed.R, fed.Ns)
    asg = synthesize_assignment(ytr, plan, cfg.seeds.partition)
    realized = compute_noniid_R(asg.user_histograms)
    doc = asg.to_dict(labels=ytr)
    doc.update({"target_R": fed.R, "realized_R": realized, "rounding_slack": rounding_slack(plan)})
    out = args.out
    if os.path.isdir(out) or out.endswith(os.sep):
        os.makedirs(out, exist_ok=True)
        out = os.path.join(out, "assignment.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    d = cfg.dataset.num_classes
    print("user  main  " + " ".join(f"{j:>5d}" for j in range(d)) + "  total")
    for k, counts in enumerate(doc["user_counts"]):
        print(f"{k:4d}  {asg.main_class[k]:4d}  " + " ".join(f"{c:5d}" for c in counts) + f"  {sum(counts):5d}")
    print("server      " + " ".join(f"{c:5d}" for c in doc["server_counts"]))
    print(f"target R = {fed.R:.6f}  realized R = {realized:.6f}  slack = {doc['rounding_slack']:.6f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_run(args):
    cfg = _load(args)
    records, _ = write_run(cfg, args.out)
    last = next((r.test_accuracy for r in reversed(records) if r.test_accuracy is not None), None)
    print(f"{len(records)} rounds written to {args.out}; final test accuracy = {last}")
    return EXIT_OK


def read_metrics(run_dir):
    path = os.path.join(run_dir, "metrics.jsonl")
    if not os.path.isfile(path):
        raise ReportError(f"{run_dir}: no metrics.jsonl")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                int(rec["round"])
                dict(rec["diversity"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ReportError(f"{path}:{lineno}: corrupt record ({exc})") from None
            records.append(rec)
    if not records:
        raise ReportError(f"{path}: no records")
    return records


def cmd_report(args):
    runs = []
    for run_dir in args.runs:
        run_id = os.path.basename(os.path.normpath(run_dir))
        runs.append((run_id, read_metrics(run_dir)))
    os.makedirs(args.out, exist_ok=True)
    header = ["run_id", "round", "metric", "value"]
    families = {
        "accuracy": lambda r: [("test_accuracy", r["test_accuracy"])] if r.get("test_accuracy") is not None else [],
        "diversity": lambda r: sorted(r["diversity"].items()),
        "training": lambda r: [(k, r[k]) for k in ("lr", "mean_user_loss", "server_loss", "active_fraction")],
    }
    for family, rows_of in families.items():
        path = os.path.join(args.out, f"{family}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for run_id, records in runs:
                for rec in records:
                    for metric, value in rows_of(rec):
                        w.writerow([run_id, rec["round"], metric, value])
        print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ssfl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="INI or JSON experiment config")
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed-override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a [seeds] entry (partition, weights, schedule); repeatable")

    sp = sub.add_parser("partition", help="synthesize and write the data assignment")
    common(sp)
    sp.set_defaults(func=cmd_partition)
    sp = sub.add_parser("run", help="run an experiment into a run directory")
    common(sp)
    sp.add_argument("--workers", type=int, default=None, help="threads for per-user updates")
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("report", help="collect run directories into long-format CSVs")
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CapacityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_REPORT
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

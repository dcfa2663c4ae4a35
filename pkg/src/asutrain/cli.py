"""Command line entry points.

Exit codes: 0 success, 1 configuration or usage error, 2 training diverged,
3 I/O failure. Set ``ASUTRAIN_LOG_LEVEL`` (e.g. ``DEBUG``) for more output.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .agemodel import load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .data import SyntheticAgeDataset, read_dataset_csv, synthetic_records, write_dataset_csv
from .filters import FilterKind
from .label_dist import AgeClassSet
from .metrics import DEFAULT_GAPS, evaluate_model
from .netmodel import IterationTiming, LinkModel, communication_reduction, iteration_time, speedup_ratio
from .ps import DivergenceError, TrainingLog, read_log_csv, train, with_filter
from .stream import read_records, run_demographics, write_records

log = logging.getLogger("asutrain")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3
TIMING_COLUMNS = ("iteration", "compute_s", "push_s", "pull_s", "total_s")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def timing_rows(rows: list[dict], link: LinkModel, compute_seconds: float):
    """Per-iteration modeled timing from TrainingLog CSV rows.

    Workers push in parallel over their own links, so an iteration waits for
    the largest push; every worker receives the same pull.
    """
    by_iter: dict[int, list[dict]] = {}
    for r in rows:
        by_iter.setdefault(int(r["iteration"]), []).append(r)
    for it in sorted(by_iter):
        group = by_iter[it]
        push = max(int(r["push_bytes"]) for r in group)
        pull = int(group[0]["pull_bytes"])
        yield it, iteration_time(compute_seconds, push, pull, link)


def timing_csv(rows: list[dict], link: LinkModel, compute_seconds: float,
               preamble=()) -> str:
    buf = io.StringIO()
    for line in preamble:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for it, t in timing_rows(rows, link, compute_seconds):
        w.writerow([it, repr(t.compute_seconds), repr(t.push_seconds),
                    repr(t.pull_seconds), repr(t.total_seconds)])
    return buf.getvalue()


def comparison_csv(logs: dict, preamble=()) -> str:
    buf = io.StringIO()
    for line in preamble:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "filter", "train_loss", "drop_fraction", "test_loss"])
    for kind, lg in logs.items():
        for r in lg.rows:
            w.writerow([r.iteration, kind.value, repr(float(np.mean(r.train_loss))),
                        repr(float(np.mean(r.drop_fraction))),
                        "" if r.test_loss is None else repr(r.test_loss)])
    return buf.getvalue()


def _mean_timing(rows, link, compute_seconds) -> IterationTiming:
    ts = [t for _, t in timing_rows(rows, link, compute_seconds)]
    return IterationTiming(compute_seconds,
                           float(np.mean([t.push_seconds for t in ts])),
                           float(np.mean([t.pull_seconds for t in ts])))


def run_experiment(cfg: ExperimentConfig, out_dir, threaded: bool = True) -> dict:
    """Train every configured filter on the same data and write all CSV artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    preamble = [f"{k} = {v}" for k, v in cfg.resolved().items()]
    train_set, test_set = cfg.data.generate()
    logs: dict[FilterKind, TrainingLog] = {}
    for kind in cfg.filters:
        tc = with_filter(cfg.train, kind, cfg.delta_for(kind))
        params, lg = train(tc, train_set, test_set, threaded=threaded)
        logs[kind] = lg
        _write_text(out / f"log_{kind.value}.csv", lg.to_csv(preamble=preamble))
        save_checkpoint(out / f"model_{kind.value}.ckpt", params, tc.spec,
                        cfg.data.classes.min_age)
        log.info("%s: final test loss %.5f, mean drop %.4f", kind.value,
                 lg.final_test_loss, lg.mean_drop_fraction())
    _write_text(out / "comparison.csv", comparison_csv(logs, preamble))

    summary = io.StringIO()
    w = csv.writer(summary, lineterminator="\n")
    w.writerow(["link", "filter", "compute_s", "comm_s", "total_s",
                "comm_reduction_vs_RAW", "speedup_vs_RAW"])
    for nl in cfg.links:
        means = {}
        for kind, lg in logs.items():
            rows = read_log_csv(out / f"log_{kind.value}.csv")
            _write_text(out / f"timing_{kind.value}_{nl.name}.csv",
                        timing_csv(rows, nl.link, cfg.compute_seconds, preamble))
            means[kind] = _mean_timing(rows, nl.link, cfg.compute_seconds)
        base = means.get(FilterKind.RAW)
        for kind, t in means.items():
            red = spd = ""
            if base is not None:
                spd = repr(speedup_ratio(base, t))
                if t.communication_seconds > 0:
                    red = repr(communication_reduction(base, t))
            w.writerow([nl.name, kind.value, repr(t.compute_seconds),
                        repr(t.communication_seconds), repr(t.total_seconds), red, spd])
    if cfg.links:
        _write_text(out / "speedup.csv",
                    "".join(f"# {p}\n" for p in preamble) + summary.getvalue())
    return logs


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.dry_run:
        for k, v in cfg.resolved().items():
            print(f"{k} = {v}")
        return EXIT_OK
    run_experiment(cfg, args.out, threaded=not args.inline)
    return EXIT_OK


def cmd_generate_data(args) -> int:
    if args.config:
        src = load_config(args.config).data
    else:
        src = SyntheticAgeDataset(args.n, args.input_dim, AgeClassSet(args.min_age, args.max_age),
                                  args.theta, args.noise, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set, test_set = src.generate()
    write_dataset_csv(out / "train.csv", train_set)
    write_dataset_csv(out / "test.csv", test_set)
    if args.stream:
        records, _ = synthetic_records(src, args.stream, args.rate, args.seed)
        write_records(out / "records.csv", records)
    return EXIT_OK


def cmd_eval(args) -> int:
    params, spec, min_age = load_checkpoint(args.model)
    classes = AgeClassSet(min_age, min_age + spec.c - 1)
    data = read_dataset_csv(args.data, classes, args.theta)
    gaps = tuple(float(g) for g in args.gaps.split(","))
    report = evaluate_model(params, spec, data, classes, args.predictor, gaps=gaps,
                            bin_width=args.bin_width, rule=args.rule)
    text = report.to_csv()
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate_comm(args) -> int:
    rows = read_log_csv(args.log)
    link = LinkModel(args.bandwidth, args.latency)
    text = timing_csv(rows, link, args.compute_seconds)
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_demographics(args) -> int:
    params, spec, min_age = load_checkpoint(args.model)
    classes = AgeClassSet(min_age, min_age + spec.c - 1)
    summary = run_demographics(params, spec, classes, read_records(args.input), args.out,
                               args.interval_seconds, args.group_width, args.lateness)
    log.info("scored %d records in %d intervals (%d rejected)",
             summary.scored, summary.intervals, summary.rejected)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="asutrain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run the filter comparison experiment from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default="runs")
    t.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    t.add_argument("--inline", action="store_true", help="single-threaded execution")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate-data", help="write a synthetic train/test set (and record stream)")
    g.add_argument("--config")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--input-dim", type=int, default=32)
    g.add_argument("--min-age", type=int, default=1)
    g.add_argument("--max-age", type=int, default=70)
    g.add_argument("--theta", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--stream", type=int, default=0, help="also write this many stream records")
    g.add_argument("--rate", type=float, default=50.0, help="stream records per second")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_data)

    e = sub.add_parser("eval", help="MAE, age-group accuracy and error histogram of a checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--theta", type=float, default=1.0)
    e.add_argument("--gaps", default=",".join(str(g) for g in DEFAULT_GAPS))
    e.add_argument("--bin-width", type=float, default=5.0)
    e.add_argument("--rule", choices=("centered", "bins"), default="centered")
    e.add_argument("--predictor", choices=("expectation", "argmax"), default="expectation")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate-comm", help="model per-iteration time from a training log")
    s.add_argument("--log", required=True)
    s.add_argument("--bandwidth", type=float, default=1e9, help="bits per second")
    s.add_argument("--latency", type=float, default=0.0, help="seconds per message")
    s.add_argument("--compute-seconds", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate_comm)

    d = sub.add_parser("demographics", help="score a record stream into an age-group histogram")
    d.add_argument("--model", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--interval-seconds", type=float, default=1.0)
    d.add_argument("--group-width", type=int, default=10)
    d.add_argument("--lateness", type=float, default=0.0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_demographics)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ASUTRAIN_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

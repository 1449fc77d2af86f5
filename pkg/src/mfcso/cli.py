"""Command-line entry point: rank, run, experiment, synth."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .data import DataError, load_dataset, min_max_apply, min_max_fit, save_dataset
from .engine import AlgorithmConfig, Variant, run
from .filters import ReliefFParams, generate_tasks
from .harness import ExperimentConfig, SyntheticSpec, run_experiment, synth_dataset

log = logging.getLogger("mfcso")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
DEFAULTS = AlgorithmConfig()
# variants whose update rules never consult p_trans
NO_TRANSFER = (Variant.EMT_noKT, Variant.CSO_FS_single_task, Variant.FULL_no_selection)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, data_required: bool = True, fmt: str = "json") -> None:
    p.add_argument("--data", required=data_required, help="label-last CSV dataset")
    p.add_argument("--out", help="output file (stdout when omitted); figures and traces go next to it")
    p.add_argument("--format", choices=("json", "csv"), default=fmt, help="output format")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")


def _algorithm(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=[v.value for v in Variant], default=DEFAULTS.variant.value,
                   help="algorithm variant")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--pop", type=int, default=DEFAULTS.population, help="total population")
    p.add_argument("--iters", type=int, default=DEFAULTS.iterations, help="generations")
    p.add_argument("--ptrans", type=float, default=DEFAULTS.p_trans,
                   help="probability of the plain (no-transfer) update")
    p.add_argument("--delta", type=float, default=DEFAULTS.delta, help="selection threshold")
    p.add_argument("--alpha", type=float, default=DEFAULTS.alpha, help="error weight in fitness")
    p.add_argument("--inner-folds", type=int, default=DEFAULTS.inner_folds,
                   help="folds of the inner cross-validation")
    p.add_argument("--relieff-h", type=int, default=DEFAULTS.relieff.h,
                   help="Relief-F neighbours per class")
    p.add_argument("--trace", action="store_true", help="write per-generation best fitness CSV")
    p.add_argument("--plot", action="store_true", help="render convergence figure (needs --out)")
    p.add_argument("--timings", action="store_true", help="include wall-clock times in output")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="mfcso", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rank", help="filter weights and knee selections per feature",
                       formatter_class=fmt)
    _common(p, fmt="csv")
    p.add_argument("--relieff-h", type=int, default=DEFAULTS.relieff.h,
                   help="Relief-F neighbours per class")
    p.add_argument("--seed", type=int, default=0, help="Relief-F sampling seed")
    p.add_argument("--plot", action="store_true", help="render knee figure (needs --out)")

    p = sub.add_parser("run", help="one optimisation run on the whole dataset",
                       formatter_class=fmt)
    _common(p)
    _algorithm(p)

    p = sub.add_parser("experiment", help="repeated outer cross-validation",
                       formatter_class=fmt)
    _common(p, data_required=False)
    _algorithm(p)
    p.add_argument("--runs", type=int, default=30, help="independent runs")
    p.add_argument("--folds", type=int, default=10, help="outer folds")
    _synth_flags(p, prefix="synth-")

    p = sub.add_parser("synth", help="write a synthetic dataset CSV", formatter_class=fmt)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    _synth_flags(p, prefix="")
    return parser


def _synth_flags(p, prefix: str) -> None:
    d = SyntheticSpec()
    if prefix:
        p.add_argument("--synthetic", action="store_true",
                       help="use a generated dataset instead of --data")
    p.add_argument(f"--{prefix}features", type=int, default=d.n_features, help="feature count")
    p.add_argument(f"--{prefix}informative", type=int, default=d.n_informative,
                   help="informative feature count")
    p.add_argument(f"--{prefix}samples", type=int, default=d.n_samples, help="sample count")
    p.add_argument(f"--{prefix}classes", type=int, default=d.n_classes, help="class count")
    p.add_argument(f"--{prefix}noise", type=float, default=d.noise, help="within-class spread")
    if not prefix:
        p.add_argument("--seed", type=int, default=d.seed, help="generator seed")


def _algorithm_config(args) -> AlgorithmConfig:
    variant = Variant(args.variant)
    if variant in NO_TRANSFER and args.ptrans != DEFAULTS.p_trans:
        raise DataError(f"--ptrans does not apply to {variant.value}")
    return AlgorithmConfig(
        variant=variant,
        population=args.pop,
        iterations=args.iters,
        p_trans=args.ptrans,
        delta=args.delta,
        alpha=args.alpha,
        inner_folds=args.inner_folds,
        relieff=ReliefFParams(h=args.relieff_h),
        seed=args.seed,
    )


def _sidecar(out: str | None, suffix: str) -> Path:
    if out is None:
        raise DataError("--trace/--plot need --out to place their files")
    p = Path(out)
    return p.with_name(f"{p.stem}{suffix}")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _normalized(path):
    d = load_dataset(path)
    return min_max_apply(min_max_fit(d), d)


def cmd_rank(args) -> None:
    d = _normalized(args.data)
    tasks = generate_tasks(d, relieff=ReliefFParams(h=args.relieff_h, seed=args.seed))
    w = tasks.weights
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if args.format == "json":
        rows = []
    else:
        writer.writerow(["feature_id", "relieff", "tv", "pcc", "selected_by"])
    members = [(t.name, set(t.feature_indices.tolist())) for t in tasks.tasks[1:]]
    for j, fid in enumerate(d.feature_ids):
        by = [name for name, idx in members if j in idx]
        vals = [float(fw.weights[j]) for fw in w.values()]
        if args.format == "json":
            rows.append({"feature_id": int(fid), "relieff": vals[0], "tv": vals[1],
                         "pcc": vals[2], "selected_by": by})
        else:
            writer.writerow([int(fid)] + [repr(v) for v in vals] + [";".join(by)])
    text = buf.getvalue() if args.format == "csv" else json.dumps(rows, indent=2) + "\n"
    _emit(text, args.out)
    if args.plot:
        from .plotting import plot_knee

        plot_knee(w, _sidecar(args.out, "_knee.png"))


def cmd_run(args) -> None:
    cfg = _algorithm_config(args)
    d = _normalized(args.data)
    res = run(cfg, d)
    log.info("best task %s, %d features, cv error %.4f",
             res.task_names[res.best_task], res.selected.size, res.error)
    if args.format == "json":
        out = {"dataset": d.name, "variant": cfg.variant.value, "seed": cfg.seed}
        out.update(res.to_dict(timings=args.timings))
        text = json.dumps(out, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "variant", "seed", "best_task", "fitness", "cv_error",
                    "n_selected", "selected"])
        w.writerow([d.name, cfg.variant.value, cfg.seed, res.task_names[res.best_task],
                    repr(res.fitness), repr(res.error), res.selected.size,
                    ";".join(str(int(i)) for i in res.selected_ids)])
        text = buf.getvalue()
    _emit(text, args.out)
    if args.trace:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation"] + res.task_names)
        for g, row in enumerate(res.trace):
            w.writerow([g] + [repr(float(v)) for v in row])
        _sidecar(args.out, "_trace.csv").write_text(buf.getvalue(), encoding="utf-8")
    if args.plot:
        from .plotting import plot_convergence

        plot_convergence(res.trace, res.task_names, _sidecar(args.out, "_convergence.png"),
                         title=f"{d.name} / {cfg.variant.value}")


def cmd_experiment(args) -> None:
    cfg_alg = _algorithm_config(args)
    if args.synthetic == (args.data is not None):
        raise DataError("give exactly one of --data or --synthetic")
    synthetic = None
    if args.synthetic:
        synthetic = SyntheticSpec(args.synth_features, args.synth_informative,
                                  args.synth_samples, args.synth_classes, args.synth_noise,
                                  args.seed)
    cfg = ExperimentConfig(cfg_alg, args.data, synthetic, args.folds, args.runs, args.seed)
    report = run_experiment(cfg)
    agg = report.aggregates
    log.info("mean error %.2f%%, mean size %.1f", agg["mean_error_pct"], agg["mean_size"])
    text = report.to_json(args.timings) if args.format == "json" else report.to_csv()
    _emit(text, args.out)
    if args.trace:
        _sidecar(args.out, "_trace.csv").write_text(report.trace_csv(), encoding="utf-8")
    if args.plot:
        from .plotting import plot_convergence

        plot_convergence([r.trace for r in report.records], report.records[0].task_names,
                         _sidecar(args.out, "_convergence.png"),
                         title=f"{report.name} / {report.variant}")


def cmd_synth(args) -> None:
    spec = SyntheticSpec(args.features, args.informative, args.samples, args.classes,
                         args.noise, args.seed)
    d, informative = synth_dataset(spec)
    save_dataset(d, args.out)
    sys.stdout.write(json.dumps({"spec": asdict(spec),
                                 "informative": informative.tolist()}) + "\n")


COMMANDS = {"rank": cmd_rank, "run": cmd_run, "experiment": cmd_experiment, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except (DataError, ValueError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

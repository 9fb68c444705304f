"""Command line entry point: ``kinn <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 computation
failure, 3 I/O failure (including unreadable or malformed input files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import experiments as ex
from . import nn
from .config import ConfigError, RunConfig, dump_config, load_config
from .experts import ConvergenceWarning, ExpertError, SarimaModel, load_expert, save_expert
from .residual import ConditioningMode, SeriesSplit, kinn_train, save_bundle, train_plain
from .timeseries import SeriesError, split, write_csv

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("kinn")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _setup_logging(out_dir: Path, verbose: bool) -> None:
    """Console messages plus a timestamped sidecar log; result files never carry timestamps."""
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_kinn", False):
            root.removeHandler(h)
            h.close()
    root.setLevel(logging.DEBUG)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if verbose else logging.INFO)
    console.setFormatter(logging.Formatter("%(message)s"))
    console._kinn = True
    root.addHandler(console)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        side = logging.FileHandler(out_dir / "kinn.log", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write to {out_dir}: {exc}", EXIT_IO) from exc
    side.setLevel(logging.DEBUG)
    side.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    side._kinn = True
    root.addHandler(side)


def _load_series(cfg: RunConfig):
    try:
        return ex.load_dataset(cfg)
    except (OSError, SeriesError) as exc:
        raise CliError(f"cannot load dataset: {exc}", EXIT_IO) from exc


def _out(args, name: str | None) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    return p if p.is_absolute() else args.out_path / p


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg: RunConfig) -> int:
    series = _load_series(cfg)
    path = _out(args, args.output)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_csv(series, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    v = series.values
    print(f"wrote {len(series)} rows to {path}")
    print(f"mean {v.mean():.4f}  std {v.std():.4f}  min {v.min():.4f}  max {v.max():.4f}")
    return EXIT_OK


def cmd_fit_expert(args, cfg: RunConfig) -> int:
    series = _load_series(cfg)
    train, _, _ = split(series, ex.split_spec(cfg))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        try:
            model = ex.fit_expert(cfg, train.values)
        except (ExpertError, SeriesError, FloatingPointError) as exc:
            raise CliError(f"expert fit failed: {exc}", EXIT_COMPUTE) from exc
    for w in caught:
        logger.warning("%s", w.message)
    path = _out(args, args.output)
    diag = {"kind": model.to_dict()["kind"], "n_train": len(train)}
    if isinstance(model, SarimaModel):
        diag.update(model.fit_metadata)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_expert(model, path)
        _dump(diag, path.with_name(path.stem + "-fit.json"))
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    print(f"wrote {path}")
    if isinstance(model, SarimaModel):
        print(f"css {diag['css']:.6g}  iterations {diag['iterations']}  converged {diag['converged']}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    p = cfg.network.window
    settings = ex._settings(cfg)
    expert = None
    if args.model == "kinn":
        epath = _out(args, args.expert)
        if not epath.is_file():
            raise CliError(f"missing expert model {epath}: run 'kinn fit-expert' first or pass --expert",
                           EXIT_USAGE)
        try:
            expert = load_expert(epath)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot load expert {epath}: {exc}", EXIT_IO) from exc
    series = _load_series(cfg)
    data = SeriesSplit.from_splits(*split(series, ex.split_spec(cfg)))
    dest = _out(args, args.output or args.model)
    try:
        if expert is None:
            model, report = train_plain(ex.network_config(cfg), data, p, settings)
        else:
            mode = ConditioningMode(cfg.kinn.mode)
            model, report = kinn_train(ex.network_config(cfg), expert, data, mode, p, settings)
    except (nn.TrainingDiverged, nn.NonFiniteError, SeriesError, ExpertError) as exc:
        raise CliError(f"training failed: {exc}", EXIT_COMPUTE) from exc
    try:
        dest.mkdir(parents=True, exist_ok=True)
        if expert is None:
            nn.save_checkpoint(model.params, dest / "network.ckpt")
            _dump(model.scaler.to_dict(), dest / "scaler.json")
        else:
            save_bundle(model, dest)
        _dump(report.to_dict(), dest / "report.json")
    except OSError as exc:
        raise CliError(f"cannot write {dest}: {exc}", EXIT_IO) from exc
    print(f"wrote {dest}")
    if report.best_epoch > 0:
        print(f"best epoch {report.best_epoch}  train loss {report.train_loss[report.best_epoch - 1]:.6g}  "
              f"val loss {report.best_val_loss:.6g}")
    return EXIT_OK


def cmd_experiment(args, cfg: RunConfig) -> int:
    ids = None if args.all else sorted(set(args.id))
    try:
        specs = ex.table_specs(cfg, ids)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    _load_series(cfg)  # fail fast on unreadable data
    results = ex.run_all(cfg, specs, args.jobs)
    try:
        ex.write_results(results, args.out_path, plots=not args.no_plots)
    except OSError as exc:
        raise CliError(f"cannot write results: {exc}", EXIT_IO) from exc
    print(ex.summary_table(results))
    failed = [r.row for r in results if r.status != "ok"]
    if failed:
        logger.error("failed rows: %s", ", ".join(failed))
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    src = _out(args, args.results) if args.results else args.out_path
    if not (src / "results.json").is_file():
        raise CliError(f"no results.json in {src}", EXIT_IO)
    try:
        results = ex.load_results(src)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read results: {exc}", EXIT_IO) from exc
    if not results:
        raise CliError(f"{src}/results.json holds no results", EXIT_IO)
    try:
        for r in results:
            if r.status == "ok":
                ex.plot_result(r, src, None if args.steps <= 0 else args.steps)
    except OSError as exc:
        raise CliError(f"cannot write plots: {exc}", EXIT_IO) from exc
    print(ex.summary_table(results))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out-dir", help="directory for outputs (overrides output_dir)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kinn", description="Residual fusion of a recurrent network with a SARIMA expert.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write the configured series to CSV")
    s.add_argument("--output", default="series.csv")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit-expert", parents=[common], help="fit the expert on the train split")
    s.add_argument("--output", default="expert.json")
    s.set_defaults(func=cmd_fit_expert)

    s = sub.add_parser("train", parents=[common], help="train the plain or fused network")
    s.add_argument("--model", choices=("nn", "kinn"), required=True)
    s.add_argument("--expert", default="expert.json", help="fitted expert JSON (kinn only)")
    s.add_argument("--output", help="output directory (default: the model name)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("experiment", parents=[common], help="run experiment rows and write results")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--id", type=int, action="append", choices=(1, 2, 3, 4, 5))
    g.add_argument("--all", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], help="summarize results and render SVG plots")
    s.add_argument("--results", help="results directory (default: the output directory)")
    s.add_argument("--steps", type=int, default=100, help="test steps to plot (0 = all)")
    s.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.out_dir is not None:
            cfg.output_dir = args.out_dir
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        args.out_path = Path(cfg.output_dir)
        _setup_logging(args.out_path, args.verbose)
        logger.debug("configuration:\n%s", dump_config(cfg))
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"kinn: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CliError as exc:
        print(f"kinn: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"kinn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

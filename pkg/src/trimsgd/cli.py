"""Command-line front end: ``trimsgd {train,compare,sweep,histogram,plot}``."""

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from trimsgd import harness
from trimsgd.errors import DivergenceError, TrimSGDError, UsageError
from trimsgd.models import load_checkpoint
from trimsgd.plotting import emit_histogram, emit_plot
from trimsgd.regularize import loss_histogram, write_histogram_csv
from trimsgd.rng import Rng

SUBCOMMANDS = ("train", "compare", "sweep", "histogram", "plot")
# config fields whose value is a dict addressable with dotted keys
NESTED_KEYS = ("methods",)


@dataclass
class CliConfig:
    subcommand: str
    config_path: str | None = None
    data_dir: str | None = None
    out_dir: str = "out"
    overrides: list = field(default_factory=list)
    trials: int | None = None
    seed: int | None = None
    jobs: int = 1
    inputs: list = field(default_factory=list)
    verbose: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(token):
    """``key=value`` -> (dotted key parts, value); values are JSON when they parse as JSON."""
    key, sep, raw = token.partition("=")
    if not sep or not key:
        raise UsageError(f"--set expects key=value, got {token!r}")
    parts = key.split(".")
    known = harness.config_keys()
    if parts[0] not in known:
        raise UsageError(f"unknown config key {key!r} (in --set {token})")
    if len(parts) > 1:
        if parts[0] not in NESTED_KEYS or len(parts) != 3 or parts[2] not in known:
            raise UsageError(f"unknown config key {key!r} (in --set {token})")
    return parts, _parse_value(raw)


def _build_parser():
    p = _Parser(prog="trimsgd", description="Label-noised trimmed SGD experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("inputs", nargs="*", help="results CSV files (plot only)")
    p.add_argument("--config", dest="config_path", metavar="PATH")
    p.add_argument("--data-dir", metavar="PATH")
    p.add_argument("--out", dest="out_dir", default="out", metavar="DIR")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_cli(argv):
    ns = _build_parser().parse_args(argv)
    if ns.inputs and ns.subcommand != "plot":
        raise UsageError(f"unexpected argument {ns.inputs[0]!r}")
    if ns.jobs < 1:
        raise UsageError(f"--jobs must be at least 1, got {ns.jobs}")
    overrides = [parse_override(tok) for tok in ns.overrides]
    return CliConfig(ns.subcommand, ns.config_path, ns.data_dir, ns.out_dir, overrides,
                     ns.trials, ns.seed, ns.jobs, list(ns.inputs), ns.verbose)


def load_config(cli):
    """JSON file (if any), then ``--set`` overrides, then the dedicated flags."""
    data = {}
    if cli.config_path is not None:
        path = Path(cli.config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        unknown = sorted(set(data) - set(harness.config_keys()))
        if unknown:
            raise UsageError(f"{path}: unknown config key(s) {', '.join(unknown)}")
    for parts, value in cli.overrides:
        if len(parts) == 1:
            data[parts[0]] = value
        else:
            if parts[0] not in data:
                data[parts[0]] = json.loads(json.dumps(getattr(harness.ExperimentConfig(), parts[0])))
            data[parts[0]].setdefault(parts[1], {})[parts[2]] = value
    for name in ("data_dir", "trials", "seed"):
        if getattr(cli, name) is not None:
            data[name] = getattr(cli, name)
    return harness.config_from_dict(data)


def _overridden(cli, key):
    return any(parts == [key] for parts, _ in cli.overrides)


# -- subcommands ------------------------------------------------------------------


def _curve_plot(curves, path, title, log_y):
    emit_plot(curves, path, title=title, x_label="epoch", y_label="test loss", log_y=log_y)


def cmd_train(cli, config):
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results, agg = harness.run_experiment(config, cli.jobs, model_dir=out)
    harness.write_experiment(out, config, results, agg)
    curves = {"train": agg.mean_train_curve, "test": agg.mean_test_curve}
    emit_plot(curves, out / "curves.svg", title=f"{config.dataset} {config.arch}",
              y_label="loss", log_y=config.log_y)
    print(f"mean test loss {agg.mean_test_loss:.4f}  min {agg.min_test_loss:.4f}  "
          f"final acc {agg.mean_acc_curve[-1]:.4f}")


def _summary_row(agg):
    return [repr(agg.mean_test_loss), repr(agg.min_test_loss), repr(agg.mean_acc_curve[-1])]


def cmd_compare(cli, config):
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], {}
    for name, results, agg in harness.compare(config, jobs=cli.jobs):
        method_cfg = config.replace(**config.methods[name])
        harness.write_experiment(out / name, method_cfg, results, agg)
        rows.append([name] + _summary_row(agg))
        curves[name] = agg.mean_test_curve
        print(f"{name:10s} mean {agg.mean_test_loss:.4f}  min {agg.min_test_loss:.4f}")
    _write_rows(out / "compare.csv", ["method", "mean_test_loss", "min_test_loss", "final_test_acc"], rows)
    _curve_plot(curves, out / "compare_test_loss.svg", f"{config.dataset} {config.arch}", config.log_y)


def cmd_sweep(cli, config):
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # an explicit --set rho/eps pins that axis to the single value
    rhos = [config.rho] if _overridden(cli, "rho") else config.rho_grid
    epss = [config.eps] if _overridden(cli, "eps") else config.eps_grid
    rows, table = [], {}
    for rho, eps, results, agg in harness.sweep(config, rhos, epss, jobs=cli.jobs):
        cell = config.replace(rho=rho, eps=eps)
        harness.write_experiment(out / f"rho{rho:g}_eps{eps:g}", cell, results, agg)
        rows.append([repr(rho), repr(eps)] + _summary_row(agg))
        table.setdefault(f"eps={eps:g}", []).append(agg.mean_test_loss)
        print(f"rho {rho:<6g} eps {eps:<5g} mean {agg.mean_test_loss:.4f}  min {agg.min_test_loss:.4f}")
    _write_rows(out / "sweep.csv", ["rho", "eps", "mean_test_loss", "min_test_loss", "final_test_acc"], rows)
    emit_plot(table, out / "sweep.svg", title="mean test loss", x_label="rho",
              y_label="mean test loss", x_values=rhos)


def cmd_histogram(cli, config):
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, _ = harness.load_splits(config)
    if config.checkpoint is not None:
        ckpt = config.checkpoint
    else:
        ckpt = out / "model.tgm"
        harness.run_trial(config, 0, model_out=ckpt)
    model = load_checkpoint(ckpt)
    hist = loss_histogram(model, train, config.hist_rho, config.hist_bins, Rng(config.seed, "histogram"))
    write_histogram_csv(hist, out / "histogram.csv")
    emit_histogram(hist, out / "histogram.svg", title=f"example loss, rho={config.hist_rho:g}")
    top_o, top_n = float(hist.losses_original.max()), float(hist.losses_noised.max())
    summary = {"examples": len(train), "rho": config.hist_rho, "max_loss_original": top_o,
               "max_loss_noised": top_n, "checkpoint": str(ckpt)}
    with open(out / "histogram.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"max loss original {top_o:.4g}  noised {top_n:.4g}  ratio {top_n / top_o:.3g}")


def cmd_plot(cli, config):
    if not cli.inputs:
        raise UsageError("plot needs at least one results CSV")
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = {}
    for path in cli.inputs:
        rows = harness.read_results_csv(path)
        by_epoch = {}
        for row in rows:
            by_epoch.setdefault(row["epoch"], []).append(row["test_loss"])
        name = Path(path).parent.name if Path(path).stem == "results" else Path(path).stem
        curves[name or Path(path).stem] = [sum(v) / len(v) for _, v in sorted(by_epoch.items())]
    _curve_plot(curves, out / "test_loss.svg", "mean test loss", config.log_y)


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "sweep": cmd_sweep,
            "histogram": cmd_histogram, "plot": cmd_plot}


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run(cli):
    config = load_config(cli)
    COMMANDS[cli.subcommand](cli, config)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cli = parse_cli(argv)
    except UsageError as exc:
        print(f"trimsgd: usage error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if cli.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run(cli)
    except UsageError as exc:
        print(f"trimsgd: usage error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"trimsgd: {exc}", file=sys.stderr)
        return 3
    except (TrimSGDError, OSError) as exc:
        print(f"trimsgd: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

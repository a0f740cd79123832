"""Command-line entry points: search, evaluate, minimize, report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 simulation fault.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import yaml

from .config import ConfigError, DatasetSpec, RunConfig, _build, load_config
from .encoding import (
    DataError,
    Dataset,
    load_feature_csv,
    load_idx,
    load_spike_csv,
    split_dataset,
    synthetic_two_class,
)
from .genome import (
    GenomeError,
    LsmGenome,
    connection_reduction,
    interlayer_connection_count,
    potential_connection_count,
)
from .objective import EncodedSplit, LsmObjective, derive_seed, encode_split
from .search import best_record, minimize_neurons, read_history, three_step_search
from .simulator import SimulationFault

log = logging.getLogger("lsmnas")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SIM = 0, 2, 3, 4


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_splits(spec: DatasetSpec, config: RunConfig) -> tuple[EncodedSplit, EncodedSplit]:
    """Load, truncate and rate-code the train and test sets."""
    sim = config.sim
    if spec.format == "spikes":
        tr, ytr = load_spike_csv(spec.train_spikes, spec.train_labels, spec.channels, sim.duration_ms)
        te, yte = load_spike_csv(spec.test_spikes, spec.test_labels, spec.channels, sim.duration_ms)
        n, m = spec.train_limit or len(tr), spec.test_limit or len(te)
        return EncodedSplit(tr[:n], ytr[:n]), EncodedSplit(te[:m], yte[:m])
    if spec.format == "idx":
        train = load_idx(spec.train_images, spec.train_labels)
        test = load_idx(spec.test_images, spec.test_labels)
    elif spec.format == "csv":
        if spec.path:
            train, test = split_dataset(load_feature_csv(spec.path), spec.train_fraction)
        else:
            train = load_feature_csv(spec.train_path)
            test = load_feature_csv(spec.test_path, affine=tuple(train.meta["affine"]))
    elif spec.format == "synthetic":
        channels = spec.channels or 20
        seed = derive_seed(config.seed, "synthetic") % 2**32
        train = synthetic_two_class(spec.n_train, channels, seed)
        test = synthetic_two_class(spec.n_test, channels, seed + 1)
    else:
        raise ConfigError("dataset.format", f"unknown format {spec.format!r}")
    train, test = train.head(spec.train_limit), test.head(spec.test_limit)
    return (encode_split(train, config.seed, "train", spec.max_rate_hz, sim),
            encode_split(test, config.seed, "test", spec.max_rate_hz, sim))


def build_objective(config: RunConfig) -> LsmObjective:
    train, test = load_splits(config.dataset, config)
    if not train.trains or not test.trains:
        raise DataError("train and test sets must both be non-empty")
    return LsmObjective(train, test, config.seed, config.topology, config.weights, config.lif,
                        config.sim, config.readout, workers=config.workers)


def genome_file_text(genome: LsmGenome, input_channels: int | None = None) -> str:
    data = genome.to_dict()
    if input_channels is not None:
        data["input_channels"] = input_channels
    return json.dumps(data, indent=2) + "\n"


def load_genome_file(path: str | Path) -> tuple[LsmGenome, int | None]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read genome file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    channels = data.pop("input_channels", None)
    return LsmGenome.from_dict(data), channels


def connection_summary(genome: LsmGenome) -> dict:
    return {
        "intra_potential": potential_connection_count(genome),
        "interlayer_potential": interlayer_connection_count(genome),
        "single_liquid_potential": genome.total_neurons**2,
        "reduction_pct": round(100 * connection_reduction(genome), 4),
        "reduction_with_interlayer_pct": round(100 * connection_reduction(genome, True), 4),
    }


def _resolve(args) -> RunConfig:
    config = load_config(args.config)
    if getattr(args, "dataset", None):
        try:
            data = yaml.safe_load(Path(args.dataset).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError("--dataset", str(exc)) from None
        config = replace(config, dataset=_build(DatasetSpec, data, "dataset"))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "out", None):
        config = replace(config, out=args.out)
    return config.validate()


def cmd_search(args) -> int:
    config = _resolve(args)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "config.yaml", config.dumps())
    objective = build_objective(config)
    started = time.perf_counter()
    result = three_step_search(
        objective, config.total_neurons, config.group_count, config.sa_configs(),
        seed=derive_seed(config.seed, "architecture") % 2**63, params=config.liquid_params(),
        max_disturb=config.search.max_disturb, history_path=out / "history.jsonl",
        resume=args.resume,
    )
    best = result.best
    write_atomic(out / "best_genome.json", genome_file_text(best.genome, objective.train_set.channels))
    summary = {
        "best_accuracy": best.accuracy,
        "best_step": best.step,
        "best_iteration": best.iteration,
        "step_best_accuracy": {str(s): r.accuracy for s, r in result.step_bests.items()},
        "evaluations": len(result.history),
        "distinct_genomes": objective.evaluations,
        "faults": sum(r.fault is not None for r in result.history),
        "connections": connection_summary(best.genome),
        "architecture": best.genome.describe(),
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    write_atomic(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _resolve(args)
    genome, channels = load_genome_file(args.genome)
    objective = build_objective(config)
    if channels is not None and channels != objective.train_set.channels:
        raise DataError(
            f"genome was searched with {channels} input channels, dataset has "
            f"{objective.train_set.channels}"
        )
    acc = objective(genome)
    report = {
        "genome": str(args.genome),
        "accuracy": acc,
        "seed": config.seed,
        "network_seed": objective.network_seed(genome),
        "train_examples": len(objective.train_set.trains),
        "test_examples": len(objective.test_set.trains),
        "connections": connection_summary(genome),
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        write_atomic(Path(args.out) / "evaluation.json", text)
    print(text, end="")
    return EXIT_OK


def cmd_minimize(args) -> int:
    config = _resolve(args)
    genome, _ = load_genome_file(args.genome)
    fractions = config.minimize_fractions
    if args.fractions:
        try:
            fractions = tuple(float(f) for f in args.fractions.split(","))
        except ValueError:
            raise ConfigError("--fractions", "expected comma-separated numbers") from None
        for f in fractions:
            if not 0 < f <= 1:
                raise ConfigError("--fractions", f"{f} outside (0, 1]")
    objective = build_objective(config)
    rows = minimize_neurons(genome, objective, fractions)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fraction", "neurons", "accuracy", "error"])
    for r in rows:
        w.writerow([r.fraction, "" if r.neurons is None else r.neurons,
                    "" if r.accuracy is None else r.accuracy, r.error or ""])
    if args.out:
        write_atomic(Path(args.out) / "minimize.csv", buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        history = read_history(args.history)
    except OSError as exc:
        raise DataError(f"cannot read history: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.history}: malformed history ({exc})") from None
    if not history:
        raise DataError(f"{args.history}: empty history")
    best = best_record(history)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "iteration", "temperature", "accuracy", "accepted", "step_best",
                "is_best", "architecture", "neurons", "groups", "intra_potential",
                "reduction_pct", "fault"])
    running: dict[int, float] = {}
    for r in history:
        if r.fault is None:
            running[r.step] = max(running.get(r.step, 0.0), r.accuracy)
        w.writerow([
            r.step, r.iteration, r.temperature, r.accuracy, int(r.accepted),
            running.get(r.step, ""), int(r is best), r.genome.describe(),
            r.genome.total_neurons, r.genome.group_count,
            potential_connection_count(r.genome),
            round(100 * connection_reduction(r.genome), 2), r.fault or "",
        ])
    analytics = {
        "records": len(history),
        "best_accuracy": best.accuracy,
        "best_step": best.step,
        "best_iteration": best.iteration,
        "architecture": best.genome.describe(),
        "connections": connection_summary(best.genome),
    }
    out = Path(args.out) if args.out else Path(args.history).parent
    write_atomic(out / "report.csv", buf.getvalue())
    write_atomic(out / "report.json", json.dumps(analytics, indent=2) + "\n")
    print(json.dumps(analytics, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsmnas", description="Three-step SA search for multi-liquid LSMs.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, genome=False):
        sp.add_argument("--config", help="run configuration (YAML)")
        sp.add_argument("--dataset", help="dataset spec (YAML), overrides the config's dataset")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output directory")
        if genome:
            sp.add_argument("--genome", required=True, help="genome JSON file")

    s = sub.add_parser("search", help="run the three-step search")
    common(s)
    s.add_argument("--resume", action="store_true", help="replay an existing history.jsonl")
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("evaluate", help="accuracy of one genome")
    common(e, genome=True)
    e.set_defaults(func=cmd_evaluate)

    m = sub.add_parser("minimize", help="accuracy versus neuron keep-fraction")
    common(m, genome=True)
    m.add_argument("--fractions", help="comma-separated keep fractions, e.g. 1.0,0.9,0.8,0.6")
    m.set_defaults(func=cmd_minimize)

    r = sub.add_parser("report", help="CSV and connection analytics from a history file")
    r.add_argument("history")
    r.add_argument("--out", help="output directory (default: next to the history)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GenomeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())

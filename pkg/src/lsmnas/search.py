"""Simulated-annealing search over LSM genomes.

Each of the three steps runs the same annealing loop with a different move:

    parent <- initial; evaluate; record
    T <- T_initial
    while T > T_min:
        repeat k times:
            child <- move(parent); evaluate; record
            accept if child.acc > parent.acc, else with prob exp(-(parent.acc - child.acc) / T)
        t += 1; T <- T_initial / (t + 1)
    return the best record in the history
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .genome import (
    GenomeError,
    LsmGenome,
    Mutation,
    mutate_architecture,
    mutate_neuron_counts,
    mutate_parameters,
    random_architecture,
    scale_neuron_counts,
)

log = logging.getLogger(__name__)

Objective = Callable[[LsmGenome], float]
Mutator = Callable[[LsmGenome, np.random.Generator], Mutation]


@dataclass(frozen=True)
class SaConfig:
    t_initial: float = 0.05
    t_min: float = 0.005
    k: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.t_initial <= 0 or self.t_min <= 0:
            raise ValueError("temperatures must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def levels(self) -> list[float]:
        """Temperatures visited by the outer loop."""
        temps, t = [], 0
        temp = self.t_initial
        while temp > self.t_min:
            temps.append(temp)
            t += 1
            temp = temperature_schedule(self.t_initial, t)
        return temps


@dataclass
class SearchRecord:
    genome: LsmGenome
    accuracy: float
    step: int
    temperature: float
    iteration: int
    seed: int
    accepted: bool = True
    detail: str = ""
    fault: str | None = None
    wall_time: float = 0.0

    def to_json(self) -> str:
        # wall time stays out of the file so reruns are byte-identical
        return json.dumps({
            "step": self.step,
            "iteration": self.iteration,
            "temperature": self.temperature,
            "accuracy": self.accuracy,
            "accepted": self.accepted,
            "seed": self.seed,
            "detail": self.detail,
            "fault": self.fault,
            "genome": self.genome.to_dict(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SearchRecord":
        d = json.loads(line)
        return cls(LsmGenome.from_dict(d["genome"]), d["accuracy"], d["step"], d["temperature"],
                   d["iteration"], d["seed"], d["accepted"], d.get("detail", ""), d.get("fault"))


class HistoryWriter:
    """Append-only JSON-lines history; earlier records can be replayed on resume."""

    def __init__(self, path: str | Path | None, resume: bool = False):
        self.path = Path(path) if path is not None else None
        self.pending: list[SearchRecord] = []
        if self.path is not None:
            if resume and self.path.exists():
                self.pending = read_history(self.path)
                # rewritten record by record as the chain replays
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def replay(self, step: int, iteration: int, genome: LsmGenome) -> SearchRecord | None:
        if not self.pending:
            return None
        rec = self.pending[0]
        if (rec.step, rec.iteration) != (step, iteration) or rec.genome != genome:
            raise RuntimeError(
                f"history does not match this run at step {step}, iteration {iteration}; "
                "was it produced with a different config or seed?"
            )
        return self.pending.pop(0)

    def append(self, record: SearchRecord) -> None:
        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(record.to_json() + "\n")


def read_history(path: str | Path) -> list[SearchRecord]:
    return [SearchRecord.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def temperature_schedule(t_initial: float, t: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    return t_initial / (t + 1)


def sa_accept(parent_acc: float, child_acc: float, temperature: float,
              rng: np.random.Generator) -> bool:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if child_acc > parent_acc:
        return True
    p = math.exp(-(parent_acc - child_acc) / temperature)
    return rng.random() < p


def best_record(history: Sequence[SearchRecord]) -> SearchRecord:
    """Highest accuracy; the earliest record wins ties."""
    usable = [r for r in history if r.fault is None]
    if not usable:
        raise RuntimeError("every evaluation in the history faulted")
    return max(usable, key=lambda r: r.accuracy)


def _evaluate(objective, genome, step, temperature, iteration, seed, writer, detail=""):
    if writer is not None:
        old = writer.replay(step, iteration, genome)
        if old is not None:
            return old
    start = time.perf_counter()
    try:
        acc, fault = float(objective(genome)), None
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"objective returned {acc}, outside [0, 1]")
    except Exception as exc:  # a faulty candidate is recorded and skipped
        log.warning("step %d iteration %d faulted: %s", step, iteration, exc)
        acc, fault = 0.0, f"{type(exc).__name__}: {exc}"
    return SearchRecord(genome, acc, step, temperature, iteration, seed, detail=detail,
                        fault=fault, wall_time=time.perf_counter() - start)


def run_sa(
    initial: LsmGenome,
    mutate: Mutator,
    objective: Objective,
    config: SaConfig,
    step: int = 1,
    writer: HistoryWriter | None = None,
) -> tuple[SearchRecord, list[SearchRecord]]:
    """Anneal from ``initial``; returns (history argmax, full history)."""
    rng = np.random.default_rng([config.seed, step])
    parent = _evaluate(objective, initial, step, config.t_initial, 0, config.seed, writer, "initial")
    if parent.fault is not None:
        raise RuntimeError(f"initial model of step {step} could not be evaluated: {parent.fault}")
    if writer is not None:
        writer.append(parent)
    history = [parent]
    t = 0
    temperature = config.t_initial
    iteration = 0
    while temperature > config.t_min:
        for _ in range(config.k):
            iteration += 1
            move = mutate(parent.genome, rng)
            child = _evaluate(objective, move.genome, step, temperature, iteration, config.seed,
                              writer, "no-op: " + move.detail if move.noop else move.detail)
            history.append(child)
            if child.fault is None:
                child.accepted = sa_accept(parent.accuracy, child.accuracy, temperature, rng)
            else:
                child.accepted = False
            if writer is not None:
                writer.append(child)
            if child.accepted:
                parent = child
        t += 1
        temperature = temperature_schedule(config.t_initial, t)
        log.info("step %d: T=%.5f best=%.4f", step, temperature, best_record(history).accuracy)
    return best_record(history), history


@dataclass
class SearchResult:
    best: SearchRecord
    step_bests: dict[int, SearchRecord]
    history: list[SearchRecord] = field(repr=False)


def default_max_disturb(genome: LsmGenome) -> int:
    """Half of the equal share, which sits inside the open range (0, N_total / N_group)."""
    return max(1, genome.total_neurons // (2 * genome.group_count))


def three_step_search(
    objective: Objective,
    total_neurons: int,
    group_count: int,
    configs: Sequence[SaConfig],
    seed: int = 0,
    params: dict | None = None,
    max_disturb: int | None = None,
    history_path: str | Path | None = None,
    resume: bool = False,
    initial: LsmGenome | None = None,
) -> SearchResult:
    """Architecture, then neuron counts, then liquid parameters.

    Each step starts from the previous step's best. Steps 2 and 3 never
    change the layer shape chosen by step 1.
    """
    if len(configs) != 3:
        raise ValueError("need one SaConfig per step")
    writer = HistoryWriter(history_path, resume=resume)
    if initial is None:
        initial = random_architecture(total_neurons, group_count,
                                      np.random.default_rng([seed, 0]), params)
    best1, hist1 = run_sa(initial, mutate_architecture, objective, configs[0], 1, writer)

    m = max_disturb or default_max_disturb(best1.genome)
    best2, hist2 = run_sa(best1.genome, lambda g, rng: mutate_neuron_counts(g, m, rng),
                          objective, configs[1], 2, writer)
    best3, hist3 = run_sa(best2.genome, mutate_parameters, objective, configs[2], 3, writer)
    history = hist1 + hist2 + hist3
    if writer.pending:
        raise RuntimeError("history file has more records than this run produced")
    return SearchResult(best_record(history), {1: best1, 2: best2, 3: best3}, history)


@dataclass
class MinimizeRow:
    fraction: float
    neurons: int | None
    accuracy: float | None
    error: str | None = None


def minimize_neurons(genome: LsmGenome, objective: Objective,
                     fractions: Iterable[float]) -> list[MinimizeRow]:
    """Accuracy after shrinking every liquid by the same keep fraction."""
    rows = []
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fraction {f} outside (0, 1]")
        try:
            scaled = scale_neuron_counts(genome, f)
        except GenomeError as exc:
            rows.append(MinimizeRow(f, None, None, str(exc)))
            continue
        rows.append(MinimizeRow(f, scaled.total_neurons, objective(scaled)))
    return rows

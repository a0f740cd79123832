"""Genome -> test accuracy: build the network, simulate, train and test the readout."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoding import Dataset, SpikeTrain, encode_dataset
from .genome import LsmGenome
from .netgen import TopologyConfig, WeightInitConfig, instantiate
from .readout import ReadoutConfig, evaluate, train
from .simulator import LifParams, SimConfig, run_batch

log = logging.getLogger(__name__)


def derive_seed(master: int, *tags) -> int:
    """64-bit seed from a master seed and any hashable tags."""
    text = ":".join(str(t) for t in (master, *tags))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


@dataclass
class EncodedSplit:
    trains: list[SpikeTrain]
    labels: np.ndarray

    @property
    def channels(self) -> int:
        return self.trains[0].n_channels if self.trains else 0


def encode_split(ds: Dataset, master_seed: int, name: str, max_rate_hz: float,
                 sim: SimConfig) -> EncodedSplit:
    trains = encode_dataset(ds, derive_seed(master_seed, "encode", name), max_rate_hz,
                            sim.duration_ms, sim.dt)
    return EncodedSplit(trains, ds.labels)


@dataclass
class LsmObjective:
    """Callable genome -> accuracy that is a pure function of the genome.

    Network weights are seeded from the master seed and the genome hash; the
    input encoding and readout shuffling are seeded from the master seed only,
    so every candidate sees identical spike inputs. Results are memoized by
    genome hash.
    """

    train_set: EncodedSplit
    test_set: EncodedSplit
    master_seed: int = 0
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    weights: WeightInitConfig = field(default_factory=WeightInitConfig)
    lif: LifParams = field(default_factory=LifParams)
    sim: SimConfig = field(default_factory=SimConfig)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    workers: int = 1
    n_classes: int | None = None
    cache: dict[str, float] = field(default_factory=dict, repr=False)
    evaluations: int = 0

    def __post_init__(self):
        if self.train_set.channels != self.test_set.channels:
            raise ValueError("train and test inputs have different channel counts")
        if self.n_classes is None:
            self.n_classes = int(max(self.train_set.labels.max(), self.test_set.labels.max())) + 1

    def network_seed(self, genome: LsmGenome) -> int:
        return derive_seed(self.master_seed, "network", genome.key())

    def states(self, genome: LsmGenome, split: EncodedSplit) -> np.ndarray:
        net = instantiate(genome, self.topology, self.weights, split.channels,
                          self.network_seed(genome))
        return run_batch(net, split.trains, self.lif, self.sim, workers=self.workers)

    def __call__(self, genome: LsmGenome) -> float:
        key = genome.key()
        if key in self.cache:
            return self.cache[key]
        self.evaluations += 1
        net = instantiate(genome, self.topology, self.weights, self.train_set.channels,
                          self.network_seed(genome))
        x_train = run_batch(net, self.train_set.trains, self.lif, self.sim, workers=self.workers)
        x_test = run_batch(net, self.test_set.trains, self.lif, self.sim, workers=self.workers)
        model = train(x_train, self.train_set.labels, self.readout,
                      seed=derive_seed(self.master_seed, "readout") % 2**32,
                      n_classes=self.n_classes)
        acc = evaluate(model, x_test, self.test_set.labels)
        log.debug("evaluated %s -> %.4f", genome.describe(), acc)
        self.cache[key] = acc
        return acc

"""Realize a concrete spiking network from a genome.

Neurons are numbered globally in (layer, liquid) order; inside a liquid the
excitatory neurons come first. Input channels have their own id space and
appear as ``pre`` ids of the ``input_*`` synapse classes.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .genome import LsmGenome

# Weights are snapped to this grid so that sums of a few thousand of them are
# exact in float64, which makes the simulator independent of summation order.
WEIGHT_QUANTUM = 2.0**-16

SNAPSHOT_MAGIC = b"LSMNET"
SNAPSHOT_VERSION = 1

SYNAPSE_CLASSES = (
    "input_e", "input_i",
    "ee", "ei", "ie", "ii",
    "inter_ee", "inter_ei", "inter_ie", "inter_ii",
)
CLASS_CODE = {name: i for i, name in enumerate(SYNAPSE_CLASSES)}
INPUT_CLASSES = frozenset({CLASS_CODE["input_e"], CLASS_CODE["input_i"]})
INHIBITORY_PRE = frozenset(CLASS_CODE[c] for c in ("ie", "ii", "inter_ie", "inter_ii"))


@dataclass(frozen=True)
class TopologyConfig:
    p_input_to_e: float = 0.1
    p_input_to_i: float = 0.0
    p_interlayer_ee: float = 0.1
    p_interlayer_ei: float = 0.0
    p_interlayer_ie: float = 0.1
    p_interlayer_ii: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} must be a probability")


@dataclass(frozen=True)
class WeightInitConfig:
    """Normal (mean, sd) per connection class, in conductance units."""

    input_e: tuple[float, float] = (0.6, 0.15)
    input_i: tuple[float, float] = (0.6, 0.15)
    ee: tuple[float, float] = (0.5, 0.1)
    ei: tuple[float, float] = (0.5, 0.1)
    ie: tuple[float, float] = (1.0, 0.2)
    ii: tuple[float, float] = (1.0, 0.2)
    inter_ee: tuple[float, float] = (0.5, 0.1)
    inter_ei: tuple[float, float] = (0.5, 0.1)
    inter_ie: tuple[float, float] = (1.0, 0.2)
    inter_ii: tuple[float, float] = (1.0, 0.2)

    def __post_init__(self):
        for name in SYNAPSE_CLASSES:
            mean, sd = getattr(self, name)
            if sd < 0:
                raise ValueError(f"{name}: standard deviation must be >= 0")
            object.__setattr__(self, name, (float(mean), float(sd)))


@dataclass(frozen=True)
class NeuronPopulation:
    liquid_index: int
    layer_index: int
    excitatory_count: int
    inhibitory_count: int
    offset: int  # global id of the first neuron

    @property
    def size(self) -> int:
        return self.excitatory_count + self.inhibitory_count

    @property
    def excitatory_ids(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.excitatory_count)

    @property
    def inhibitory_ids(self) -> np.ndarray:
        return np.arange(self.offset + self.excitatory_count, self.offset + self.size)


@dataclass(frozen=True)
class SynapseList:
    pre: np.ndarray      # int32; input channel for input classes, else neuron id
    post: np.ndarray     # int32 neuron id
    weight: np.ndarray   # float64 magnitude, >= 0
    cls: np.ndarray      # uint8 code into SYNAPSE_CLASSES

    def __len__(self) -> int:
        return len(self.pre)

    @property
    def sign(self) -> np.ndarray:
        return np.where(np.isin(self.cls, list(INHIBITORY_PRE)), -1, 1).astype(np.int8)


@dataclass(frozen=True)
class NetworkInstance:
    genome: LsmGenome
    input_channels: int
    seed: int
    populations: tuple[NeuronPopulation, ...]
    synapses: SynapseList
    topology: TopologyConfig = field(default_factory=TopologyConfig)

    @property
    def n_neurons(self) -> int:
        return sum(p.size for p in self.populations)

    @property
    def is_excitatory(self) -> np.ndarray:
        mask = np.zeros(self.n_neurons, dtype=bool)
        for p in self.populations:
            mask[p.excitatory_ids] = True
        return mask

    @property
    def readout_ids(self) -> np.ndarray:
        """Excitatory neurons in (layer, liquid, id) order."""
        return np.concatenate([p.excitatory_ids for p in self.populations])

    def layer_of_neuron(self) -> np.ndarray:
        out = np.empty(self.n_neurons, dtype=np.int32)
        for p in self.populations:
            out[p.offset : p.offset + p.size] = p.layer_index
        return out

    def dense_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """(input x neuron, neuron x neuron) non-negative weight matrices."""
        s = self.synapses
        is_input = np.isin(s.cls, list(INPUT_CLASSES))
        w_in = np.zeros((self.input_channels, self.n_neurons))
        w_in[s.pre[is_input], s.post[is_input]] = s.weight[is_input]
        w_rec = np.zeros((self.n_neurons, self.n_neurons))
        w_rec[s.pre[~is_input], s.post[~is_input]] = s.weight[~is_input]
        return w_in, w_rec


def _populations(genome: LsmGenome) -> tuple[NeuronPopulation, ...]:
    pops, offset, idx = [], 0, 0
    for layer_index, layer in enumerate(genome.layers):
        for liquid in layer:
            pops.append(
                NeuronPopulation(idx, layer_index, liquid.excitatory_count,
                                 liquid.inhibitory_count, offset)
            )
            offset += liquid.neuron_count
            idx += 1
    return tuple(pops)


def _block(rng, pre_ids, post_ids, p, cls, weights: WeightInitConfig, same: bool):
    """Bernoulli(p) over every ordered (pre, post) pair; no self-pairs if ``same``."""
    n_pre, n_post = len(pre_ids), len(post_ids)
    # always consume the draws so one block's probability never shifts the others
    u = rng.random((n_pre, n_post))
    mask = u < p
    if same:
        np.fill_diagonal(mask, False)
    i, j = np.nonzero(mask)
    mean, sd = getattr(weights, cls)
    w = rng.normal(mean, sd, size=len(i)) if len(i) else np.empty(0)
    w = np.round(np.maximum(w, 0.0) / WEIGHT_QUANTUM) * WEIGHT_QUANTUM
    return (
        np.asarray(pre_ids, dtype=np.int32)[i],
        np.asarray(post_ids, dtype=np.int32)[j],
        w,
        np.full(len(i), CLASS_CODE[cls], dtype=np.uint8),
    )


def instantiate(
    genome: LsmGenome,
    topology: TopologyConfig | None = None,
    weights: WeightInitConfig | None = None,
    input_channels: int = 784,
    seed: int = 0,
) -> NetworkInstance:
    """Sample synapses and weights; a pure function of its arguments."""
    if input_channels < 1:
        raise ValueError("input_channels must be >= 1")
    topology = topology or TopologyConfig()
    weights = weights or WeightInitConfig()
    rng = np.random.default_rng(seed)
    pops = _populations(genome)
    liquids = genome.liquids
    channels = np.arange(input_channels)
    blocks = []

    for pop in pops:
        blocks.append(_block(rng, channels, pop.excitatory_ids, topology.p_input_to_e,
                             "input_e", weights, same=False))
        blocks.append(_block(rng, channels, pop.inhibitory_ids, topology.p_input_to_i,
                             "input_i", weights, same=False))

    for pop, liquid in zip(pops, liquids):
        e, i = pop.excitatory_ids, pop.inhibitory_ids
        blocks.append(_block(rng, e, e, liquid.p_ee, "ee", weights, same=True))
        blocks.append(_block(rng, e, i, liquid.p_ei, "ei", weights, same=False))
        blocks.append(_block(rng, i, e, liquid.p_ie, "ie", weights, same=False))
        blocks.append(_block(rng, i, i, liquid.p_ii, "ii", weights, same=True))

    inter = (
        ("inter_ee", "excitatory_ids", "excitatory_ids", topology.p_interlayer_ee),
        ("inter_ei", "excitatory_ids", "inhibitory_ids", topology.p_interlayer_ei),
        ("inter_ie", "inhibitory_ids", "excitatory_ids", topology.p_interlayer_ie),
        ("inter_ii", "inhibitory_ids", "inhibitory_ids", topology.p_interlayer_ii),
    )
    for src in pops:
        for dst in pops:
            if dst.layer_index <= src.layer_index:
                continue
            for cls, pre_attr, post_attr, p in inter:
                blocks.append(_block(rng, getattr(src, pre_attr), getattr(dst, post_attr),
                                     p, cls, weights, same=False))

    pre, post, w, cls = (np.concatenate(parts) for parts in zip(*blocks))
    return NetworkInstance(genome, input_channels, seed, pops,
                           SynapseList(pre, post, w, cls), topology)


def realized_connection_count(net: NetworkInstance) -> dict[str, int]:
    """Synapse counts per class plus ``intra``, ``interlayer`` and ``total``."""
    codes = np.bincount(net.synapses.cls, minlength=len(SYNAPSE_CLASSES))
    counts = {name: int(codes[i]) for i, name in enumerate(SYNAPSE_CLASSES)}
    counts["intra"] = sum(counts[c] for c in ("ee", "ei", "ie", "ii"))
    counts["interlayer"] = sum(counts[c] for c in ("inter_ee", "inter_ei", "inter_ie", "inter_ii"))
    counts["input"] = counts["input_e"] + counts["input_i"]
    counts["total"] = len(net.synapses)
    return counts


def save_snapshot(net: NetworkInstance, path: str | Path) -> None:
    """Binary replay file: magic, version, header, genome JSON, synapse arrays."""
    genome_blob = json.dumps(net.genome.to_dict(), sort_keys=True).encode()
    topo_blob = json.dumps(asdict(net.topology), sort_keys=True).encode()
    s = net.synapses
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<HQIIQII", SNAPSHOT_VERSION, net.seed, net.input_channels,
                          net.n_neurons, len(s), len(genome_blob), len(topo_blob)))
    buf.write(genome_blob)
    buf.write(topo_blob)
    for arr, dtype in ((s.pre, "<i4"), (s.post, "<i4"), (s.weight, "<f8"), (s.cls, "u1")):
        buf.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_snapshot(path: str | Path) -> NetworkInstance:
    data = Path(path).read_bytes()
    if not data.startswith(SNAPSHOT_MAGIC):
        raise ValueError(f"{path}: not a network snapshot")
    head = struct.Struct("<HQIIQII")
    pos = len(SNAPSHOT_MAGIC)
    version, seed, channels, n_neurons, n_syn, g_len, t_len = head.unpack_from(data, pos)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    pos += head.size
    genome = LsmGenome.from_dict(json.loads(data[pos : pos + g_len]))
    pos += g_len
    topology = TopologyConfig(**json.loads(data[pos : pos + t_len]))
    pos += t_len
    arrays = []
    for dtype, size in (("<i4", 4), ("<i4", 4), ("<f8", 8), ("u1", 1)):
        arrays.append(np.frombuffer(data, dtype=dtype, count=n_syn, offset=pos).copy())
        pos += n_syn * size
    pre, post, weight, cls = arrays
    net = NetworkInstance(genome, channels, seed, _populations(genome),
                          SynapseList(pre.astype(np.int32), post.astype(np.int32),
                                      weight.astype(np.float64), cls), topology)
    if net.n_neurons != n_neurons:
        raise ValueError(f"{path}: header says {n_neurons} neurons, genome has {net.n_neurons}")
    return net

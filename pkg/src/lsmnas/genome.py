"""Multi-liquid LSM architectures: representation, search-space moves and
connection analytics.

A genome is an ordered list of layers. Each layer holds one or more liquids
that are not connected to each other; every liquid feeds all liquids in later
layers. The search mutates genomes with three operators, one per search step:
moving a liquid between layers, moving neurons between liquids, and nudging a
single liquid parameter by one grid step.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MIN_LIQUID_NEURONS = 10

PARAM_NAMES = ("excitatory_ratio", "p_ee", "p_ei", "p_ie", "p_ii")
PARAM_MIN = 0.0
PARAM_MAX = 0.9
PARAM_STEP = 0.1

GENOME_FORMAT = "lsm-genome/1"

# enumeration guard; 2**11 signatures is the most we materialize
MAX_ENUMERATED_GROUPS = 12


class GenomeError(ValueError):
    """Raised for genomes or genome operations that violate an invariant."""


def _on_grid(x: float) -> float:
    return round(round(x / PARAM_STEP) * PARAM_STEP, 1)


@dataclass(frozen=True)
class LiquidSpec:
    """One liquid: its size plus the five searchable parameters."""

    neuron_count: int
    excitatory_ratio: float = 0.8
    p_ee: float = 0.4
    p_ei: float = 0.4
    p_ie: float = 0.5
    p_ii: float = 0.1

    def __post_init__(self):
        if not isinstance(self.neuron_count, (int, np.integer)) or isinstance(self.neuron_count, bool):
            raise GenomeError(f"neuron_count must be an integer, got {self.neuron_count!r}")
        if self.neuron_count < MIN_LIQUID_NEURONS:
            raise GenomeError(
                f"neuron_count {self.neuron_count} is below the floor of {MIN_LIQUID_NEURONS}"
            )
        object.__setattr__(self, "neuron_count", int(self.neuron_count))
        for name in PARAM_NAMES:
            value = float(getattr(self, name))
            if not PARAM_MIN - 1e-9 <= value <= PARAM_MAX + 1e-9:
                raise GenomeError(f"{name}={value} outside [{PARAM_MIN}, {PARAM_MAX}]")
            gridded = _on_grid(value)
            if abs(gridded - value) > 1e-9:
                raise GenomeError(f"{name}={value} is not a multiple of {PARAM_STEP}")
            object.__setattr__(self, name, gridded)

    @property
    def params(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @property
    def excitatory_count(self) -> int:
        # floor; the ratio is on a 0.1 grid so guard against 0.7*10 == 6.999...
        return int(np.floor(self.neuron_count * self.excitatory_ratio + 1e-9))

    @property
    def inhibitory_count(self) -> int:
        return self.neuron_count - self.excitatory_count

    def to_dict(self) -> dict:
        return {"neuron_count": self.neuron_count, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "LiquidSpec":
        unknown = set(d) - {"neuron_count", *PARAM_NAMES}
        if unknown:
            raise GenomeError(f"unknown liquid fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LsmGenome:
    layers: tuple[tuple[LiquidSpec, ...], ...]
    total_neurons: int = field(init=False)
    group_count: int = field(init=False)

    def __init__(self, layers: Iterable[Iterable[LiquidSpec]]):
        # empty layers are compacted away
        packed = tuple(tuple(layer) for layer in layers)
        packed = tuple(layer for layer in packed if layer)
        if not packed:
            raise GenomeError("a genome needs at least one liquid")
        for layer in packed:
            for liquid in layer:
                if not isinstance(liquid, LiquidSpec):
                    raise GenomeError(f"expected LiquidSpec, got {type(liquid).__name__}")
        object.__setattr__(self, "layers", packed)
        object.__setattr__(self, "total_neurons", sum(l.neuron_count for l in self.liquids))
        object.__setattr__(self, "group_count", sum(len(layer) for layer in packed))

    @property
    def liquids(self) -> list[LiquidSpec]:
        """Liquids in (layer, position) order."""
        return [liquid for layer in self.layers for liquid in layer]

    @property
    def signature(self) -> tuple[int, ...]:
        """Layer shape: number of liquids in each layer."""
        return tuple(len(layer) for layer in self.layers)

    @property
    def neuron_counts(self) -> list[int]:
        return [l.neuron_count for l in self.liquids]

    def layer_of(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) for _ in layer]

    def with_liquids(self, liquids: Sequence[LiquidSpec]) -> "LsmGenome":
        """Same layer shape, liquids replaced in flat order."""
        if len(liquids) != self.group_count:
            raise GenomeError("liquid count does not match the layer shape")
        it = iter(liquids)
        return LsmGenome([[next(it) for _ in layer] for layer in self.layers])

    def to_dict(self) -> dict:
        return {
            "format": GENOME_FORMAT,
            "total_neurons": self.total_neurons,
            "group_count": self.group_count,
            "layers": [[l.to_dict() for l in layer] for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LsmGenome":
        if d.get("format", GENOME_FORMAT) != GENOME_FORMAT:
            raise GenomeError(f"unsupported genome format {d.get('format')!r}")
        if "layers" not in d:
            raise GenomeError("genome is missing 'layers'")
        genome = cls([[LiquidSpec.from_dict(l) for l in layer] for layer in d["layers"]])
        if "total_neurons" in d and d["total_neurons"] != genome.total_neurons:
            raise GenomeError(
                f"total_neurons={d['total_neurons']} but liquids sum to {genome.total_neurons}"
            )
        if "group_count" in d and d["group_count"] != genome.group_count:
            raise GenomeError(
                f"group_count={d['group_count']} but genome has {genome.group_count} liquids"
            )
        return genome

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LsmGenome":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GenomeError(f"genome file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def key(self) -> str:
        """Stable content hash, used to derive per-genome seeds."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def describe(self) -> str:
        return " | ".join(
            "+".join(str(l.neuron_count) for l in layer) for layer in self.layers
        )


class Mutation(NamedTuple):
    genome: LsmGenome
    noop: bool
    detail: str


def uniform_genome(
    total_neurons: int, group_count: int, params: dict | None = None
) -> LsmGenome:
    """Split ``total_neurons`` into ``group_count`` parallel liquids.

    Counts differ by at most one; the remainder goes to the first liquids.
    """
    if group_count < 1:
        raise GenomeError(f"group_count must be >= 1, got {group_count}")
    if total_neurons < group_count * MIN_LIQUID_NEURONS:
        raise GenomeError(
            f"{total_neurons} neurons cannot fill {group_count} liquids of at least "
            f"{MIN_LIQUID_NEURONS}"
        )
    base, rem = divmod(total_neurons, group_count)
    params = params or {}
    return LsmGenome(
        [[LiquidSpec(base + (1 if i < rem else 0), **params) for i in range(group_count)]]
    )


def reshape(genome: LsmGenome, signature: Sequence[int]) -> LsmGenome:
    """Lay the genome's liquids out in flat order according to ``signature``."""
    if sum(signature) != genome.group_count or any(s < 1 for s in signature):
        raise GenomeError(f"signature {tuple(signature)} does not fit {genome.group_count} liquids")
    liquids = genome.liquids
    layers, start = [], 0
    for size in signature:
        layers.append(liquids[start : start + size])
        start += size
    return LsmGenome(layers)


def enumerate_layerings(group_count: int) -> list[tuple[int, ...]]:
    """All ordered compositions of ``group_count``: one per layer shape."""
    if not 1 <= group_count <= MAX_ENUMERATED_GROUPS:
        raise GenomeError(
            f"group_count must be within 1..{MAX_ENUMERATED_GROUPS} for enumeration"
        )
    shapes = []
    # each bit of the mask says whether to cut between liquid i and i+1
    for mask in range(2 ** (group_count - 1)):
        shape, run = [], 1
        for i in range(group_count - 1):
            if mask >> i & 1:
                shape.append(run)
                run = 1
            else:
                run += 1
        shape.append(run)
        shapes.append(tuple(shape))
    return sorted(shapes, key=lambda s: (len(s), s))


def random_architecture(
    total_neurons: int, group_count: int, rng: np.random.Generator, params: dict | None = None
) -> LsmGenome:
    """Equal split over a layer shape drawn uniformly from the search space."""
    shapes = enumerate_layerings(group_count)
    shape = shapes[int(rng.integers(len(shapes)))]
    return reshape(uniform_genome(total_neurons, group_count, params), shape)


def move_liquid(genome: LsmGenome, layer: int, position: int, target_layer: int) -> LsmGenome:
    """Move one liquid to ``target_layer``; ``len(layers)`` appends a new layer."""
    layers = [list(l) for l in genome.layers]
    if not 0 <= layer < len(layers) or not 0 <= position < len(layers[layer]):
        raise GenomeError(f"no liquid at layer {layer}, position {position}")
    if target_layer == layer or not 0 <= target_layer <= len(layers):
        raise GenomeError(f"invalid target layer {target_layer}")
    liquid = layers[layer].pop(position)
    if target_layer == len(layers):
        layers.append([liquid])
    else:
        layers[target_layer].append(liquid)
    return LsmGenome(layers)


def mutate_architecture(parent: LsmGenome, rng: np.random.Generator) -> Mutation:
    """Step-1 move: one liquid goes to another existing layer or a new last layer."""
    if parent.group_count < 2:
        return Mutation(parent, True, "single liquid cannot move")
    positions = [(i, j) for i, layer in enumerate(parent.layers) for j in range(len(layer))]
    layer, pos = positions[int(rng.integers(len(positions)))]
    n_layers = len(parent.layers)
    targets = [t for t in range(n_layers + 1) if t != layer]
    # a lone liquid re-appended as a new layer can reproduce the same shape
    targets = [
        t for t in targets
        if move_liquid(parent, layer, pos, t).signature != parent.signature
    ]
    target = targets[int(rng.integers(len(targets)))]
    child = move_liquid(parent, layer, pos, target)
    where = "new layer" if target == n_layers else f"layer {target}"
    return Mutation(child, False, f"liquid {layer}.{pos} -> {where}")


def transfer_neurons(genome: LsmGenome, donor: int, recipient: int, m: int) -> LsmGenome:
    """Move up to ``m`` neurons between liquids, keeping the donor at the floor."""
    liquids = genome.liquids
    if donor == recipient:
        raise GenomeError("donor and recipient must differ")
    m = min(m, liquids[donor].neuron_count - MIN_LIQUID_NEURONS)
    if m < 0:
        raise GenomeError("donor is already below the neuron floor")
    liquids[donor] = replace(liquids[donor], neuron_count=liquids[donor].neuron_count - m)
    liquids[recipient] = replace(
        liquids[recipient], neuron_count=liquids[recipient].neuron_count + m
    )
    return genome.with_liquids(liquids)


def max_neuron_disturbance(genome: LsmGenome) -> int:
    """Largest admissible step-2 range M, i.e. strictly below N_total / N_group."""
    return max(1, -(-genome.total_neurons // genome.group_count) - 1)


def mutate_neuron_counts(
    parent: LsmGenome, max_disturb: int, rng: np.random.Generator
) -> Mutation:
    """Step-2 move: shift m ~ U{1..max_disturb} neurons from one liquid to another."""
    if parent.group_count < 2:
        return Mutation(parent, True, "single liquid has nowhere to send neurons")
    if not 0 < max_disturb < parent.total_neurons / parent.group_count:
        raise GenomeError(
            f"max_disturb must satisfy 0 < M < {parent.total_neurons / parent.group_count:g}"
        )
    counts = parent.neuron_counts
    donors = [i for i, n in enumerate(counts) if n > MIN_LIQUID_NEURONS]
    if not donors:
        return Mutation(parent, True, "every liquid is at the neuron floor")
    donor = donors[int(rng.integers(len(donors)))]
    m = int(rng.integers(1, max_disturb + 1))
    others = [i for i in range(len(counts)) if i != donor]
    recipient = others[int(rng.integers(len(others)))]
    child = transfer_neurons(parent, donor, recipient, m)
    moved = counts[donor] - child.neuron_counts[donor]
    return Mutation(child, False, f"{moved} neurons liquid {donor} -> {recipient}")


def perturb_parameter(genome: LsmGenome, liquid: int, name: str, delta: float) -> LsmGenome:
    """Add ``delta`` to one parameter, clamping to the allowed range."""
    if name not in PARAM_NAMES:
        raise GenomeError(f"unknown parameter {name!r}")
    liquids = genome.liquids
    old = getattr(liquids[liquid], name)
    new = _on_grid(min(PARAM_MAX, max(PARAM_MIN, old + delta)))
    liquids[liquid] = replace(liquids[liquid], **{name: new})
    return genome.with_liquids(liquids)


def mutate_parameters(parent: LsmGenome, rng: np.random.Generator) -> Mutation:
    """Step-3 move: one liquid, one parameter, plus or minus one grid step."""
    liquid = int(rng.integers(parent.group_count))
    name = PARAM_NAMES[int(rng.integers(len(PARAM_NAMES)))]
    delta = PARAM_STEP if rng.random() < 0.5 else -PARAM_STEP
    child = perturb_parameter(parent, liquid, name, delta)
    return Mutation(child, False, f"liquid {liquid} {name} {delta:+.1f}")


def potential_connection_count(genome: LsmGenome) -> int:
    """Ordered neuron pairs inside liquids: sum of n_i squared."""
    return sum(n * n for n in genome.neuron_counts)


def interlayer_connection_count(genome: LsmGenome) -> int:
    """Ordered neuron pairs between liquids of earlier and later layers."""
    sizes = [sum(l.neuron_count for l in layer) for layer in genome.layers]
    return sum(a * b for i, a in enumerate(sizes) for b in sizes[i + 1 :])


def connection_reduction(genome: LsmGenome, include_interlayer: bool = False) -> float:
    """Fractional reduction against one liquid holding every neuron."""
    count = potential_connection_count(genome)
    if include_interlayer:
        count += interlayer_connection_count(genome)
    return 1.0 - count / genome.total_neurons**2


def largest_remainder(counts: Sequence[int], target: int) -> list[int]:
    """Apportion ``target`` proportionally to ``counts`` with exact total."""
    total = sum(counts)
    quotas = [Fraction(n * target, total) for n in counts]
    floors = [q.numerator // q.denominator for q in quotas]
    short = target - sum(floors)
    # ties go to the earlier liquid
    order = sorted(range(len(counts)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:short]:
        floors[i] += 1
    return floors


def scale_neuron_counts(genome: LsmGenome, keep_fraction: float) -> LsmGenome:
    """Shrink every liquid by the same ratio, preserving an exact rounded total."""
    if not 0 < keep_fraction <= 1:
        raise GenomeError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    frac = Fraction(keep_fraction).limit_denominator(10**6)
    target = int(genome.total_neurons * frac + Fraction(1, 2))
    counts = largest_remainder(genome.neuron_counts, target)
    low = [i for i, n in enumerate(counts) if n < MIN_LIQUID_NEURONS]
    if low:
        raise GenomeError(
            f"scaling by {keep_fraction} leaves liquids {low} below {MIN_LIQUID_NEURONS} neurons"
        )
    return genome.with_liquids(
        [replace(l, neuron_count=n) for l, n in zip(genome.liquids, counts)]
    )

"""Published optimal LSM models, kept as fixtures for replays and analytics.

Rows are (layer, neuron_count, excitatory_ratio, p_ee, p_ei, p_ie, p_ii).
"""
from __future__ import annotations

from .genome import LiquidSpec, LsmGenome

_TABLES = {
    "mnist": [
        (1, 382, 0.9, 0.4, 0.4, 0.6, 0.0),
        (1, 99, 0.9, 0.4, 0.4, 0.5, 0.0),
        (1, 388, 0.8, 0.3, 0.4, 0.5, 0.1),
        (1, 131, 0.8, 0.4, 0.4, 0.5, 0.0),
    ],
    "nmnist": [
        (1, 75, 0.9, 0.5, 0.5, 0.5, 0.1),
        (1, 505, 0.8, 0.4, 0.3, 0.4, 0.0),
        (1, 420, 0.8, 0.2, 0.4, 0.3, 0.0),
    ],
    "fsdd": [
        (1, 134, 0.9, 0.4, 0.4, 0.4, 0.1),
        (1, 382, 0.9, 0.5, 0.6, 0.6, 0.1),
        (1, 484, 0.9, 0.4, 0.2, 0.4, 0.0),
    ],
    "nmnist-8": [
        (1, 62, 0.9, 0.5, 0.5, 0.6, 0.0),
        (1, 126, 0.8, 0.4, 0.6, 0.5, 0.0),
        (1, 70, 0.9, 0.3, 0.5, 0.5, 0.1),
        (1, 230, 0.9, 0.4, 0.5, 0.6, 0.0),
        (1, 98, 0.8, 0.4, 0.4, 0.4, 0.1),
        (1, 104, 0.9, 0.4, 0.4, 0.7, 0.0),
        (2, 152, 0.7, 0.4, 0.4, 0.5, 0.1),
        (2, 158, 0.9, 0.3, 0.4, 0.4, 0.0),
    ],
    "fsdd-8": [
        (1, 134, 0.9, 0.4, 0.4, 0.6, 0.0),
        (1, 129, 0.9, 0.4, 0.4, 0.5, 0.0),
        (1, 148, 0.9, 0.4, 0.4, 0.5, 0.0),
        (1, 208, 0.9, 0.4, 0.4, 0.5, 0.0),
        (1, 42, 0.9, 0.4, 0.4, 0.5, 0.0),
        (1, 110, 0.9, 0.4, 0.4, 0.5, 0.0),
        (2, 66, 0.9, 0.4, 0.4, 0.5, 0.0),
        (2, 163, 0.9, 0.3, 0.4, 0.5, 0.0),
    ],
}

REFERENCE_NAMES = tuple(_TABLES)

# published connection reductions against a single 1000-neuron liquid, in percent
PUBLISHED_REDUCTIONS = {"mnist": 67.7, "nmnist": 56.3, "fsdd": 60.2}


def reference_genome(name: str) -> LsmGenome:
    try:
        rows = _TABLES[name]
    except KeyError:
        raise KeyError(f"unknown reference model {name!r}; choose from {REFERENCE_NAMES}") from None
    n_layers = max(r[0] for r in rows)
    layers: list[list[LiquidSpec]] = [[] for _ in range(n_layers)]
    for layer, n, ratio, ee, ei, ie, ii in rows:
        layers[layer - 1].append(LiquidSpec(n, ratio, ee, ei, ie, ii))
    return LsmGenome(layers)

"""Clock-driven conductance-based LIF simulation of a liquid.

Membrane dynamics per neuron (conductances are dimensionless, i.e. measured
relative to the leak conductance):

    tau_m dV/dt = (E_rest - V) + g_e (E_exc - V) + g_i (E_inh - V)
    dg_e/dt = -g_e / tau_ge,    dg_i/dt = -g_i / tau_gi

Each step first adds the weights of spikes from the previous step (one-step
synaptic delay) to the conductances, then advances V with an exponential-Euler
update that holds g at its mean over the step, then detects threshold
crossings, and finally decays g exactly. Using the step mean keeps the charge
delivered per synaptic event equal to ``w * tau_g`` whatever dt is. Since V
relaxes towards a convex combination of the reversal potentials it can never
fall below E_inh.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .encoding import SpikeTrain
from .netgen import NetworkInstance

log = logging.getLogger(__name__)


class SimulationFault(RuntimeError):
    """Non-finite state; exit code 4 on the command line."""

    def __init__(self, message: str, neuron: int | None = None, step: int | None = None,
                 example: int | None = None):
        super().__init__(message)
        self.neuron, self.step, self.example = neuron, step, example


@dataclass(frozen=True)
class NeuronParams:
    tau_m: float       # ms
    v_rest: float      # mV
    v_reset: float
    v_thresh: float
    t_ref: float       # ms

    def __post_init__(self):
        if self.v_thresh <= self.v_rest:
            raise ValueError("threshold must lie above the resting potential")
        if self.tau_m <= 0:
            raise ValueError("tau_m must be positive")
        if self.t_ref < 0:
            raise ValueError("refractory period must be >= 0")


EXCITATORY_DEFAULTS = NeuronParams(tau_m=100.0, v_rest=-65.0, v_reset=-65.0, v_thresh=-52.0, t_ref=5.0)
INHIBITORY_DEFAULTS = NeuronParams(tau_m=10.0, v_rest=-60.0, v_reset=-45.0, v_thresh=-40.0, t_ref=2.0)


@dataclass(frozen=True)
class LifParams:
    exc: NeuronParams = EXCITATORY_DEFAULTS
    inh: NeuronParams = INHIBITORY_DEFAULTS
    tau_ge: float = 1.0
    tau_gi: float = 2.0
    e_exc: float = 0.0
    e_inh: float = -100.0

    def __post_init__(self):
        if self.tau_ge <= 0 or self.tau_gi <= 0:
            raise ValueError("synaptic time constants must be positive")
        for p in (self.exc, self.inh):
            if not self.e_inh <= p.v_reset <= self.e_exc:
                raise ValueError("reset potential must lie between the reversal potentials")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.5            # ms
    duration_ms: float = 350.0
    rest_ms: float = 0.0       # input-free tail; its spikes are counted too

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("duration_ms", "rest_ms"):
            value = getattr(self, name)
            steps = value / self.dt
            if value < 0 or abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"{name} must be a non-negative multiple of dt")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")

    @property
    def stimulus_steps(self) -> int:
        return int(round(self.duration_ms / self.dt))

    @property
    def total_steps(self) -> int:
        return int(round((self.duration_ms + self.rest_ms) / self.dt))


@dataclass
class LifKernel:
    """Per-neuron constants and the single-step update shared by all runs."""

    tau_m: np.ndarray
    v_rest: np.ndarray
    v_reset: np.ndarray
    v_thresh: np.ndarray
    ref_steps: np.ndarray
    dt: float
    e_exc: float
    e_inh: float
    decay_ge: float
    decay_gi: float
    mean_ge: float   # mean of exp(-t / tau_ge) over one step
    mean_gi: float

    @classmethod
    def build(cls, is_excitatory: np.ndarray, lif: LifParams, dt: float) -> "LifKernel":
        def pick(attr):
            return np.where(is_excitatory, getattr(lif.exc, attr), getattr(lif.inh, attr)).astype(float)

        ref = np.where(is_excitatory, lif.exc.t_ref, lif.inh.t_ref) / dt
        de, di = np.exp(-dt / lif.tau_ge), np.exp(-dt / lif.tau_gi)
        return cls(
            tau_m=pick("tau_m"), v_rest=pick("v_rest"), v_reset=pick("v_reset"),
            v_thresh=pick("v_thresh"), ref_steps=np.round(ref).astype(np.int64), dt=dt,
            e_exc=lif.e_exc, e_inh=lif.e_inh,
            decay_ge=float(de), decay_gi=float(di),
            mean_ge=float(lif.tau_ge / dt * (1 - de)), mean_gi=float(lif.tau_gi / dt * (1 - di)),
        )

    def initial_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        v = np.broadcast_to(self.v_rest, (batch, len(self.v_rest))).copy()
        return v, np.zeros_like(v, dtype=np.int64)

    def advance(self, v, refractory, ge, gi):
        """One step of V in place for conductances ``ge``, ``gi`` held over the step."""
        g_tot = 1.0 + ge + gi
        v_inf = (self.v_rest + ge * self.e_exc + gi * self.e_inh) / g_tot
        v_new = v_inf + (v - v_inf) * np.exp(-self.dt * g_tot / self.tau_m)
        resting = refractory > 0
        np.copyto(v, v_new)
        np.copyto(v, self.v_reset, where=resting)
        np.subtract(refractory, 1, out=refractory, where=resting)
        spikes = v >= self.v_thresh
        spikes &= ~resting
        np.copyto(v, self.v_reset, where=spikes)
        np.copyto(refractory, self.ref_steps, where=spikes)
        return spikes


def _input_matrix(trains: Sequence[SpikeTrain], n_channels: int, dt: float, steps: int):
    """CSR of shape (steps * batch, channels); row ``k * batch + b`` is step k of example b."""
    batch = len(trains)
    rows, cols = [], []
    for b, train in enumerate(trains):
        if train.n_channels != n_channels:
            raise ValueError(
                f"input has {train.n_channels} channels, network expects {n_channels}"
            )
        k = np.floor(train.time_ms / dt + 1e-9).astype(np.int64)
        keep = k < steps
        rows.append(k[keep] * batch + b)
        cols.append(train.channel[keep])
    r = np.concatenate(rows) if rows else np.empty(0, np.int64)
    c = np.concatenate(cols) if cols else np.empty(0, np.int64)
    return sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(steps * batch, n_channels))


@dataclass
class _Compiled:
    kernel: LifKernel
    w_in: np.ndarray
    w_exc: np.ndarray
    w_inh: np.ndarray
    n_channels: int
    readout: np.ndarray = field(repr=False)


_compiled_cache: dict[int, tuple[NetworkInstance, LifParams, float, _Compiled]] = {}


def _compile(net: NetworkInstance, lif: LifParams, dt: float) -> _Compiled:
    hit = _compiled_cache.get(id(net))
    if hit is not None and hit[0] is net and hit[1] == lif and hit[2] == dt:
        return hit[3]
    is_exc = net.is_excitatory
    w_in, w_rec = net.dense_weights()
    w_exc = np.where(is_exc[:, None], w_rec, 0.0)
    w_inh = np.where(is_exc[:, None], 0.0, w_rec)
    compiled = _Compiled(LifKernel.build(is_exc, lif, dt), w_in, w_exc, w_inh,
                         net.input_channels, net.readout_ids)
    _compiled_cache.clear()
    _compiled_cache[id(net)] = (net, lif, dt, compiled)
    return compiled


def _simulate_chunk(c: _Compiled, trains, sim: SimConfig, offset: int, monitor=None):
    batch, n = len(trains), len(c.kernel.v_rest)
    stim = sim.stimulus_steps
    drive = _input_matrix(trains, c.n_channels, sim.dt, stim)
    v, refractory = c.kernel.initial_state(batch)
    ge = np.zeros((batch, n))
    gi = np.zeros((batch, n))
    spikes = np.zeros((batch, n), dtype=bool)
    counts = np.zeros((batch, n), dtype=np.int64)
    for k in range(sim.total_steps):
        if spikes.any():
            s = spikes.astype(np.float64)
            ge += s @ c.w_exc
            gi += s @ c.w_inh
        if k < stim:
            block = drive[k * batch : (k + 1) * batch]
            if block.nnz:
                ge += block @ c.w_in
        spikes = c.kernel.advance(v, refractory, ge * c.kernel.mean_ge, gi * c.kernel.mean_gi)
        if monitor is not None:
            monitor(k, v, ge, gi, spikes)
        ge *= c.kernel.decay_ge
        gi *= c.kernel.decay_gi
        counts += spikes
        if not np.isfinite(v).all():
            b, i = np.argwhere(~np.isfinite(v))[0]
            raise SimulationFault(
                f"non-finite membrane potential in neuron {i} at step {k} of example {offset + b}",
                neuron=int(i), step=k, example=int(offset + b),
            )
    return counts


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Divide each row by its maximum; all-zero rows stay zero."""
    counts = np.asarray(counts, dtype=np.float64)
    peak = counts.max(axis=1, keepdims=True)
    return np.divide(counts, peak, out=np.zeros_like(counts), where=peak > 0)


def spike_counts(
    net: NetworkInstance,
    trains: Sequence[SpikeTrain],
    lif: LifParams | None = None,
    sim: SimConfig | None = None,
    workers: int = 1,
    chunk_size: int = 32,
) -> np.ndarray:
    """Raw spike counts, shape (examples, all liquid neurons)."""
    lif = lif or LifParams()
    sim = sim or SimConfig()
    compiled = _compile(net, lif, sim.dt)
    chunks = [(i, trains[i : i + chunk_size]) for i in range(0, len(trains), chunk_size)]

    def work(item):
        offset, part = item
        return _simulate_chunk(compiled, part, sim, offset)

    if not chunks:
        return np.zeros((0, net.n_neurons), dtype=np.int64)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(item) for item in chunks]
    return np.concatenate(parts)


def run_batch(
    net: NetworkInstance,
    trains: Sequence[SpikeTrain],
    lif: LifParams | None = None,
    sim: SimConfig | None = None,
    workers: int = 1,
    chunk_size: int = 32,
) -> np.ndarray:
    """Liquid states, one row per example, columns = excitatory readout neurons."""
    counts = spike_counts(net, trains, lif, sim, workers, chunk_size)
    return normalize_counts(counts[:, net.readout_ids])


def run_example(
    net: NetworkInstance,
    train: SpikeTrain,
    lif: LifParams | None = None,
    sim: SimConfig | None = None,
    raster_path: str | Path | None = None,
    monitor=None,
) -> np.ndarray:
    """Liquid state for one example.

    ``raster_path`` dumps ``neuron_id,time_ms`` rows for every liquid spike.
    ``monitor(step, v, ge, gi, spikes)`` is called after each membrane update
    with (1, neurons) views of the state; it must not modify them.
    """
    lif = lif or LifParams()
    sim = sim or SimConfig()
    compiled = _compile(net, lif, sim.dt)
    events = []

    def observe(k, v, ge, gi, spikes):
        if raster_path is not None and spikes.any():
            events.append((k * sim.dt, np.nonzero(spikes[0])[0]))
        if monitor is not None:
            monitor(k, v, ge, gi, spikes)

    counts = _simulate_chunk(compiled, [train], sim, 0, observe)
    if raster_path is not None:
        with open(raster_path, "w") as f:
            f.write("neuron_id,time_ms\n")
            for t, ids in events:
                for i in ids:
                    f.write(f"{i},{t:g}\n")
    return normalize_counts(counts[:, net.readout_ids])[0]

import math

import numpy as np
import pytest

from lsmnas.encoding import SpikeTrain, load_idx, poisson_encode
from lsmnas.genome import LiquidSpec, LsmGenome, uniform_genome
from lsmnas.netgen import instantiate
from lsmnas.simulator import (
    LifKernel,
    LifParams,
    SimConfig,
    SimulationFault,
    normalize_counts,
    run_batch,
    run_example,
    spike_counts,
)

LIF = LifParams()


def closed_form_isi(g_e, p=LIF.exc, e_exc=LIF.e_exc):
    """Reset-to-threshold time under constant conductance, plus refractory period."""
    g_tot = 1.0 + g_e
    v_inf = (p.v_rest + g_e * e_exc) / g_tot
    tau = p.tau_m / g_tot
    return tau * math.log((v_inf - p.v_reset) / (v_inf - p.v_thresh)) + p.t_ref


def drive_kernel(g_e, steps, dt=0.5, excitatory=True):
    kernel = LifKernel.build(np.array([excitatory]), LIF, dt)
    v, ref = kernel.initial_state(1)
    ge = np.full((1, 1), g_e)
    gi = np.zeros((1, 1))
    times = [k * dt for k in range(steps) if kernel.advance(v, ref, ge, gi)[0, 0]]
    return np.diff(times)


@pytest.fixture(scope="module")
def mnist_train():
    from conftest import MNIST
    return load_idx(MNIST / "train-images-idx3-ubyte.gz", MNIST / "train-labels-idx1-ubyte.gz")


@pytest.mark.parametrize("g_e", [0.3, 0.5, 1.0])
def test_isi_matches_closed_form(g_e):
    isi = drive_kernel(g_e, 4000)
    expected = closed_form_isi(g_e)
    assert len(isi) >= 5
    assert np.mean(isi) == pytest.approx(expected, rel=0.02)


def test_subthreshold_conductance_never_fires():
    # v_inf = -65 / 1.2 = -54.2 mV, below threshold
    assert len(drive_kernel(0.2, 4000)) == 0


def test_zero_input_gives_zero_state():
    net = instantiate(uniform_genome(100, 2), input_channels=10, seed=0)
    silent = SpikeTrain([], [], 10, 350.0)
    state = run_example(net, silent)
    assert state.shape == (80,)
    assert not state.any()


def test_state_is_normalized(mnist_train):
    net = instantiate(uniform_genome(200, 2), seed=1)
    state = run_example(net, poisson_encode(mnist_train.features[0], seed=3))
    assert state.max() == 1.0 and state.min() >= 0.0
    assert len(state) == sum(p.excitatory_count for p in net.populations)


def test_normalize_all_zero_row():
    out = normalize_counts(np.array([[0, 0], [2, 4]]))
    assert out.tolist() == [[0.0, 0.0], [0.5, 1.0]]


def test_dt_convergence_feedforward(mnist_train):
    """Without recurrence, halving dt moves each neuron's count by at most one spike."""
    g = LsmGenome([[LiquidSpec(200, p_ee=0.0, p_ei=0.0, p_ie=0.0, p_ii=0.0)]])
    net = instantiate(g, seed=1)
    trains = [poisson_encode(mnist_train.features[i], seed=i) for i in range(3)]
    ref = spike_counts(net, trains, sim=SimConfig(dt=0.125))
    for dt in (0.5, 0.25):
        counts = spike_counts(net, trains, sim=SimConfig(dt=dt))
        assert np.abs(counts - ref).max() <= 1


def test_dt_convergence_recurrent_population(mnist_train):
    net = instantiate(uniform_genome(200, 1), seed=1)
    trains = [poisson_encode(mnist_train.features[i], seed=i) for i in range(3)]
    ref = spike_counts(net, trains, sim=SimConfig(dt=0.125)).sum()
    coarse = spike_counts(net, trains, sim=SimConfig(dt=0.5)).sum()
    assert coarse == pytest.approx(ref, rel=0.05)


def test_invariants_inside_a_network(mnist_train):
    net = instantiate(uniform_genome(200, 2), seed=2)
    kernel = LifKernel.build(net.is_excitatory, LIF, 0.5)
    last_spike = np.full(net.n_neurons, -np.inf)
    ref_ms = np.where(net.is_excitatory, LIF.exc.t_ref, LIF.inh.t_ref)
    seen = {"spikes": 0}

    def check(k, v, ge, gi, spikes):
        assert np.all(v[0] < kernel.v_thresh)
        assert np.all(v[0] >= LIF.e_inh)
        assert np.all(ge >= 0) and np.all(gi >= 0)
        t = k * 0.5
        fired = spikes[0]
        assert np.all(t - last_spike[fired] > ref_ms[fired])
        last_spike[fired] = t
        seen["spikes"] += fired.sum()

    run_example(net, poisson_encode(mnist_train.features[1], seed=5), monitor=check)
    assert seen["spikes"] > 0


def test_batch_of_one_equals_example(mnist_train):
    net = instantiate(uniform_genome(120, 2), seed=3)
    train = poisson_encode(mnist_train.features[2], seed=9)
    assert np.array_equal(run_batch(net, [train])[0], run_example(net, train))


def test_permutation_and_reset(mnist_train):
    net = instantiate(uniform_genome(120, 2), seed=3)
    trains = [poisson_encode(mnist_train.features[i], seed=i) for i in range(6)]
    base = run_batch(net, trains)
    perm = [4, 2, 0, 5, 1, 3]
    assert np.array_equal(run_batch(net, [trains[i] for i in perm]), base[perm])
    # running B after A is the same as running B alone
    assert np.array_equal(run_batch(net, trains[3:4])[0], base[3])


def test_parallel_matches_serial_bitwise(mnist_train):
    net = instantiate(uniform_genome(150, 3), seed=4)
    trains = [poisson_encode(mnist_train.features[i], seed=i) for i in range(20)]
    serial = spike_counts(net, trains, workers=1, chunk_size=32)
    parallel = spike_counts(net, trains, workers=4, chunk_size=3)
    assert serial.tobytes() == parallel.tobytes()
    a = run_batch(net, trains, workers=1, chunk_size=7)
    b = run_batch(net, trains, workers=3, chunk_size=5)
    assert a.tobytes() == b.tobytes()


def test_channel_mismatch_rejected():
    net = instantiate(uniform_genome(100, 1), input_channels=4)
    with pytest.raises(ValueError):
        run_example(net, SpikeTrain([0], [1.0], 5, 350.0))


def test_non_finite_state_faults():
    net = instantiate(uniform_genome(100, 1), input_channels=4, seed=0)
    net.synapses.weight[:] = np.nan
    train = SpikeTrain([0, 1, 2, 3], [1.0, 1.0, 1.0, 1.0], 4, 350.0)
    with pytest.raises(SimulationFault) as info:
        spike_counts(net, [train])
    assert info.value.step is not None and info.value.neuron is not None


def test_monotone_drive():
    """Doubling every input rate does not lower total liquid activity."""
    pattern = np.random.default_rng(0).uniform(0, 120, size=100)
    for seed in range(10):
        net = instantiate(uniform_genome(100, 1), input_channels=100, seed=seed)
        base = poisson_encode(pattern, seed=seed + 100)
        doubled = poisson_encode(pattern * 2, seed=seed + 100)
        low, high = spike_counts(net, [base, doubled]).sum(axis=1)
        assert high >= low


def test_raster_dump(tmp_path, mnist_train):
    net = instantiate(uniform_genome(100, 1), seed=0)
    path = tmp_path / "raster.csv"
    train = poisson_encode(mnist_train.features[0], seed=1)
    run_example(net, train, raster_path=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "neuron_id,time_ms"
    ids = [int(l.split(",")[0]) for l in lines[1:]]
    counts = spike_counts(net, [train])[0]
    assert len(ids) == counts.sum()
    assert np.array_equal(np.bincount(ids, minlength=100), counts)


def test_rest_interval_adds_steps(mnist_train):
    net = instantiate(uniform_genome(100, 1), seed=0)
    train = poisson_encode(mnist_train.features[0], seed=1)
    short = spike_counts(net, [train], sim=SimConfig())
    longer = spike_counts(net, [train], sim=SimConfig(rest_ms=50.0))
    assert np.all(longer >= short)


@pytest.mark.parametrize("kwargs", [{"dt": 0}, {"duration_ms": 100.3}, {"rest_ms": -1.0}])
def test_sim_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)

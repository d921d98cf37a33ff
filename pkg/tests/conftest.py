"""Shared instance builders for the test suite."""

from edgealloc.core import DeviceSet, EdgeDevice, Task, TaskSet

PI_SPEED = 4.75e-7       # s/bit
PI_PROC_ENERGY = 3.25e-7  # J/bit
PI_RADIO_ENERGY = 1.42e-7  # J/bit, both transmit and receive


def make_tasks(triples, data_bits=0, losses=None):
    """TaskSet from (exec_time, resource, importance) triples."""
    losses = losses or [0.0] * len(triples)
    return TaskSet(tuple(
        Task(j, t, v, imp, data_bits, losses[j])
        for j, (t, v, imp) in enumerate(triples)
    ))


def make_devices(capacities, bandwidth=2e6):
    return DeviceSet(tuple(
        EdgeDevice(p, c, PI_SPEED, PI_PROC_ENERGY, PI_RADIO_ENERGY,
                   PI_RADIO_ENERGY, bandwidth)
        for p, c in enumerate(capacities)
    ))


def random_instance(rng, n, m, importance_low=0.0, data_bits=False):
    tasks = TaskSet(tuple(
        Task(j,
             float(rng.uniform(0.1, 2.0)),
             float(rng.uniform(0.1, 2.0)),
             float(rng.uniform(importance_low, 5.0)),
             int(rng.integers(10_000, 1_000_000)) if data_bits else 0)
        for j in range(n)
    ))
    devices = make_devices([float(rng.uniform(1.0, 4.0)) for _ in range(m)])
    deadline = float(rng.uniform(1.0, 4.0))
    return tasks, devices, deadline

import unittest.mock as mock

import numpy as np
import pytest

from covthresh.compgraph import threshold_partition
from covthresh.exceptions import DegenerateDrawError, InputError
from covthresh.synth import SynthSpec, generate, planted_partition, planted_interval


def _off_block_max(instance, spec):
    labels = planted_partition(spec).labels()
    off_block = labels[:, None] != labels[None, :]
    return np.max(np.abs(instance.S.values[off_block]))


def test_synth_spec_validation():
    assert SynthSpec(K=3, p1=4).p == 12
    with pytest.raises(InputError):
        SynthSpec(K=0, p1=4)
    with pytest.raises(InputError):
        SynthSpec(K=2, p1=0)
    with pytest.raises(InputError):
        SynthSpec(K=2, p1=2, noise_rule='2.0')


def test_planted_partition():
    assert planted_partition(SynthSpec(K=2, p1=2)).blocks == ((0, 1), (2, 3))
    assert planted_partition(SynthSpec(K=1, p1=4)).blocks == ((0, 1, 2, 3),)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_calibration(seed):
    spec = SynthSpec(K=2, p1=2, seed=seed)
    instance = generate(spec)
    assert abs(1.25 * _off_block_max(instance, spec) - 1.0) <= 1e-12
    assert abs(_off_block_max(instance, spec) - 0.8) <= 1e-12


def test_calibration_larger_instance():
    spec = SynthSpec(K=4, p1=6, seed=3)
    instance = generate(spec)
    assert abs(1.25 * _off_block_max(instance, spec) - 1.0) <= 1e-12


def test_planted_partition_recovered_at_lambda_I():
    spec = SynthSpec(K=5, p1=20, seed=0)
    instance = generate(spec)
    assert threshold_partition(instance.S, instance.lambda_I) == planted_partition(spec)


@pytest.mark.parametrize("seed", range(10))
def test_interval_over_seeds(seed):
    spec = SynthSpec(K=3, p1=5, seed=seed)
    instance = generate(spec)
    assert instance.lambda_min <= instance.lambda_I <= instance.lambda_max
    assert instance.lambda_II == instance.lambda_max
    planted = planted_partition(spec)
    assert threshold_partition(instance.S, instance.lambda_I) == planted
    assert threshold_partition(instance.S, instance.lambda_II) == planted
    assert threshold_partition(instance.S, instance.lambda_min) == planted


def test_single_block():
    spec = SynthSpec(K=1, p1=6, seed=4)
    instance = generate(spec)
    # every entry is one plus noise bounded by 0.8
    assert np.min(instance.S.values) >= 0.2 - 1e-12
    assert threshold_partition(instance.S, instance.lambda_I).num_blocks == 1
    assert threshold_partition(instance.S, 0.1).num_blocks == 1


def test_same_seed_is_bitwise_reproducible():
    a = generate(SynthSpec(K=3, p1=4, seed=7))
    b = generate(SynthSpec(K=3, p1=4, seed=7))
    np.testing.assert_array_equal(a.S.values, b.S.values)
    assert a.to_dict() == b.to_dict()


def test_sidecar_fields():
    instance = generate(SynthSpec(K=2, p1=3, seed=5))
    sidecar = instance.to_dict()
    assert set(sidecar) == {'sigma', 'lambda_min', 'lambda_max', 'lambda_I', 'lambda_II', 'seed_used'}
    assert sidecar['seed_used'] >= 5


def test_degenerate_draws_are_redrawn():
    spec = SynthSpec(K=2, p1=3, seed=10)
    real = planted_interval
    calls = []

    def fail_first(S, s):
        calls.append(1)
        return None if len(calls) == 1 else real(S, s)

    with mock.patch('covthresh.synth.planted_interval', side_effect=fail_first):
        instance = generate(spec)
    assert instance.seed_used == generate(SynthSpec(K=2, p1=3, seed=11)).seed_used


def test_degenerate_draws_give_up():
    with mock.patch('covthresh.synth.planted_interval', return_value=None):
        with pytest.raises(DegenerateDrawError):
            generate(SynthSpec(K=2, p1=3))

import numpy as np
import pytest

from ergo.noise import BLOCK, StepNoise


def test_deterministic_and_keyed():
    a = StepNoise(7, 3).normal("bm", 100, 2)
    assert np.array_equal(a, StepNoise(7, 3).normal("bm", 100, 2))
    assert not np.array_equal(a, StepNoise(7, 4).normal("bm", 100, 2))
    assert not np.array_equal(a, StepNoise(8, 3).normal("bm", 100, 2))
    assert not np.array_equal(a, StepNoise(7, 3).normal("other", 100, 2))


def test_particle_draws_independent_of_population_size():
    big = StepNoise(1, 1).normal("bm", 3 * BLOCK + 5, 1)
    small = StepNoise(1, 1).normal("bm", BLOCK + 10, 1)
    assert np.array_equal(big[: BLOCK + 10], small)


@pytest.mark.parametrize("workers", [2, 4])
def test_worker_count_irrelevant(workers):
    n = 3 * BLOCK + 17
    assert np.array_equal(StepNoise(5, 2).normal("bm", n, 3), StepNoise(5, 2, workers=workers).normal("bm", n, 3))
    f = lambda g, lo, hi: g.poisson(1.0, hi - lo)  # noqa: E731
    one = np.concatenate(StepNoise(5, 2).per_block("p", n, f))
    many = np.concatenate(StepNoise(5, 2, workers=workers).per_block("p", n, f))
    assert np.array_equal(one, many)


def test_refined_increments_sum_to_coarse():
    nz = StepNoise(3, 1, refine=8)
    fine = nz.brownian_fine("bm", 1000, 2, 0.5)
    assert fine.shape == (8, 1000, 2)
    assert np.array_equal(nz.brownian("bm", 1000, 2, 0.5), fine.sum(axis=0))


def test_brownian_variance():
    dw = StepNoise(0, 1).brownian("bm", 200_000, 1, 0.25)
    se = 0.25 * np.sqrt(2 / dw.size)
    assert abs(dw.var() - 0.25) < 3 * se


def test_uniform_range_and_cache():
    nz = StepNoise(0, 0)
    u = nz.uniform("u", 1000)
    assert u.min() >= 0 and u.max() < 1
    assert nz.uniform("u", 1000) is u
    with pytest.raises(ValueError):
        u[0] = 0


def test_invalid_arguments():
    with pytest.raises(ValueError):
        StepNoise(-1, 0)
    with pytest.raises(ValueError):
        StepNoise(0, -1)
    with pytest.raises(ValueError):
        StepNoise(0, 0, refine=0)

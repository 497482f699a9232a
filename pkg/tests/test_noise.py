import math

import numpy as np
import pytest

from gsid import NoiseSpec, gaussian, make_generator, student_t, uniform_symmetric

FAMILIES = [
    uniform_symmetric(1.0),
    gaussian(0.5),
    student_t(df=12.0, scale=0.3),
]


@pytest.mark.parametrize("noise", FAMILIES, ids=lambda n: n.family)
def test_sample_moments(noise):
    gen = make_generator(2024)
    draws = noise.draw(gen, 10 ** 6)
    sigma = math.sqrt(noise.variance)
    assert abs(draws.mean()) <= 4.0 * sigma / 1e3
    assert draws.var() == pytest.approx(noise.variance, rel=0.01)


@pytest.mark.parametrize("noise", FAMILIES, ids=lambda n: n.family)
def test_same_seed_same_draws(noise):
    a = noise.draw(make_generator(5, 1), 256)
    b = noise.draw(make_generator(5, 1), 256)
    assert np.array_equal(a, b)
    c = noise.draw(make_generator(5, 2), 256)
    assert not np.array_equal(a, c)


def test_w2_variance_against_monte_carlo():
    gen = make_generator(77)
    for noise in FAMILIES:
        draws = noise.draw(gen, 10 ** 6)
        empirical = np.var(draws ** 2 - noise.variance)
        assert empirical == pytest.approx(noise.w2_variance, rel=0.05)


def test_support_properties():
    assert uniform_symmetric(2.0).bounded
    assert uniform_symmetric(2.0).c_w == 2.0
    assert not gaussian(1.0).bounded
    assert math.isinf(student_t(10.0, 1.0, kappa=8.0).c_w)


def test_uniform_draws_stay_in_support():
    noise = uniform_symmetric(0.75)
    draws = noise.draw(make_generator(3), 10_000)
    assert np.all(np.abs(draws) <= 0.75)


def test_zero_width_uniform_is_noiseless():
    noise = uniform_symmetric(0.0)
    assert np.all(noise.draw(make_generator(0), 100) == 0.0)
    assert noise.variance == 0.0


def test_validation():
    with pytest.raises(ValueError):
        NoiseSpec(family="uniform", c_w=math.inf)
    with pytest.raises(ValueError):
        gaussian(0.0)
    with pytest.raises(ValueError, match="df > kappa"):
        student_t(df=6.0, scale=1.0, kappa=8.0)
    with pytest.raises(ValueError, match="kappa"):
        gaussian(1.0, kappa=4.0)
    with pytest.raises(ValueError, match="unknown noise family"):
        NoiseSpec(family="levy")

import numpy as np
import pytest

from oelab.potential import GAUSSIAN, QUARTIC, Potential, PotentialError, c_v_bound, derivative, evaluate


def naive_eval(pot, z):
    # independent oracle: plain power summation, no Horner
    return sum(c * z ** (2 * j) for j, c in enumerate(pot.even_coeffs))


def test_eval_examples():
    assert evaluate(GAUSSIAN, 2.0) == 2.0
    assert evaluate(QUARTIC, 0.0) == 0.0
    z = 1.0 + 1.0j
    assert abs(evaluate(QUARTIC, z) - naive_eval(QUARTIC, z)) < 1e-14


def test_eval_even_bit_identical():
    rng = np.random.default_rng(7)
    xs = rng.uniform(-3, 3, 200)
    pot = Potential((0.3, -0.2, 0.05, 1.0 / 7.0))
    assert np.array_equal(evaluate(pot, xs), evaluate(pot, -xs))


def test_derivative_examples():
    assert derivative(GAUSSIAN, 3.0) == 3.0
    assert abs(derivative(QUARTIC, 2.0) - 8.0 / 3.0) < 1e-15
    pot = Potential((1.0, 0.4, 0.1, 0.02))
    assert derivative(pot, 0.0) == 0.0


def test_derivative_is_odd():
    rng = np.random.default_rng(11)
    xs = rng.uniform(-2.5, 2.5, 100)
    assert np.array_equal(derivative(QUARTIC, xs), -derivative(QUARTIC, -xs))


@pytest.mark.parametrize("pot,x", [(GAUSSIAN, 1.3), (QUARTIC, 1.5), (Potential((0.0, 0.2, 0.0, 0.01)), 0.9)])
def test_derivative_matches_central_differences(pot, x):
    errs = {}
    for h in (1e-4, 1e-5):
        fd = (evaluate(pot, x + h) - evaluate(pot, x - h)) / (2 * h)
        errs[h] = abs(fd - derivative(pot, x))
    # second-order stencil: error ~ C h^2 until roundoff
    assert errs[1e-4] <= 1e-6
    assert errs[1e-5] <= 1e-8 + 1e-10
    if errs[1e-4] > 1e-9:  # truncation-dominated regime: the h^2 ratio is visible
        assert 20 <= errs[1e-4] / errs[1e-5] <= 500


def test_c_v_bound_quadratic():
    pot = Potential((0.0, 0.5), d1=1.0)
    assert abs(c_v_bound(pot) - 2.5) < 1e-10


def test_c_v_bound_quartic():
    pot = Potential((0.0, 0.0, 1.0 / 12.0), d1=1.0)
    assert abs(c_v_bound(pot) - 2.5**3 / 3.0) < 1e-9


def test_c_v_bound_mixed_against_grid_oracle():
    pot = Potential((0.0, 0.1, 1.0 / 12.0), d1=0.5)
    xs = np.linspace(-2.25, 2.25, 1_000_001)
    oracle = np.max(np.abs(derivative(pot, xs)))
    assert abs(c_v_bound(pot) - oracle) < 1e-9


def test_validation():
    with pytest.raises(PotentialError):
        Potential((1.0,))
    with pytest.raises(PotentialError):
        Potential((0.0, -1.0))
    with pytest.raises(PotentialError):
        Potential((0.0, 1.0), d1=0.0)


def test_rescaled():
    pot = QUARTIC.rescaled(2.0)
    assert pot.even_coeffs == (0.0, 0.0, 16.0 / 12.0)

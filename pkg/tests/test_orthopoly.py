import math

import numpy as np
import pytest
from scipy.special import erf

from oelab.orthopoly import (
    BasisError,
    apply_epsilon,
    build_basis,
    build_grid,
    coupling_matrix,
    paired_epsilon_norm_constant,
    parity_bound_check,
    psi_at,
    eps_psi_at,
    recurrence_residual,
)
from oelab.potential import GAUSSIAN, Potential


class TestGrid:
    def test_two_point_rule(self):
        g = build_grid(2.5, 1, 2)
        assert np.allclose(np.sort(g.nodes), [-2.5 / math.sqrt(3), 2.5 / math.sqrt(3)], atol=1e-14, rtol=0)

    def test_weight_sum(self):
        g = build_grid(2.5, 64, 12)
        assert abs(g.weights.sum() - 5.0) < 1e-12

    def test_nodes_increasing_and_negation_symmetric(self):
        g = build_grid(3.0, 17, 8)  # odd panel count exercises the middle panel
        assert np.all(np.diff(g.nodes) > 0)
        assert np.array_equal(g.nodes, -g.nodes[::-1])
        assert np.array_equal(g.weights, g.weights[::-1])

    def test_polynomial_exactness(self):
        g = build_grid(2.5, 1, 3)
        exact = 2 * 2.5**5 / 5
        assert abs(g.integrate(g.nodes**4) - exact) < 1e-13 * exact

    def test_gaussian_integral_matches_erf(self):
        g = build_grid(2.5, 8, 12)
        val = g.integrate(np.exp(-g.nodes**2))
        assert abs(val - math.sqrt(math.pi) * erf(2.5)) < 1e-13

    def test_cumulative_against_closed_form(self):
        g = build_grid(2.0, 16, 10)
        f = np.cos(g.nodes)
        cum = g.cumulative_many(f)
        exact = np.sin(g.nodes) + math.sin(2.0)
        assert np.max(np.abs(cum - exact)) < 1e-12

    def test_interpolation_and_offgrid_cumulative(self):
        g = build_grid(2.0, 16, 10)
        f = np.exp(g.nodes / 3.0)
        xs = np.array([-1.7, -0.3, 0.0, 0.9, 1.99])
        assert np.max(np.abs(g.interpolate_many(f, xs) - np.exp(xs / 3.0))) < 1e-12
        cum = g.cumulative_at(f, xs)
        exact = 3.0 * (np.exp(xs / 3.0) - np.exp(-2.0 / 3.0))
        assert np.max(np.abs(cum - exact)) < 1e-12


class TestBasis:
    def test_hermite_jacobi_closed_form(self, basis_factory):
        # weight exp(-n x^2 / 2) on a wide window: J_k = sqrt((k+1)/n)
        b = basis_factory("gauss_wide", 40)
        ks = np.arange(51)
        exact = np.sqrt((ks + 1.0) / 40.0)
        assert np.max(np.abs(b.jacobi_j[ks] - exact)) < 1e-6

    @pytest.mark.parametrize("name", ["gauss", "quartic"])
    def test_q_vanishes_for_even_weight(self, name, basis_factory):
        b = basis_factory(name, 32)
        assert np.max(np.abs(b.jacobi_q)) < 1e-8

    @pytest.mark.parametrize("name", ["gauss", "quartic"])
    def test_orthonormality_defect(self, name, basis_factory):
        assert basis_factory(name, 32).orth_defect < 1e-10

    @pytest.mark.parametrize("name", ["gauss", "quartic"])
    def test_recurrence_residual(self, name, basis_factory):
        assert recurrence_residual(basis_factory(name, 32)).max() < 1e-8

    def test_parity_of_functions(self, basis_factory):
        b = basis_factory("quartic", 32)
        signs = (-1.0) ** np.arange(b.kmax + 1)
        flipped = b.psi[:, ::-1] * signs[:, None]
        assert np.max(np.abs(b.psi - flipped)) < 1e-12

    def test_odd_n_rejected(self):
        with pytest.raises(BasisError):
            build_basis(GAUSSIAN, 15)

    def test_tail_enforcement_triggers_on_shrunken_domain(self):
        # n = 64 Gaussian leaks visibly at +-L when the domain is cut to L = 2.1
        with pytest.raises(BasisError):
            build_basis(Potential((0.0, 0.5), d1=0.2), 64)

    def test_tail_profile_improves_exponentially(self, basis_factory):
        tails = [basis_factory("gauss", n).tail_profile[: n + 1].max() for n in (32, 64, 128)]
        assert tails[0] > tails[1] > tails[2]
        assert tails[1] < 1e-6  # enforced regime
        assert tails[2] < 1e-12

    def test_extended_precision_path_agrees(self):
        b64 = build_basis(GAUSSIAN, 16)
        bext = build_basis(GAUSSIAN, 16, extended=True)
        assert np.max(np.abs(b64.psi - bext.psi)) < 1e-12


class TestEpsilonTransform:
    def test_even_function_vanishes_at_origin(self, basis_factory):
        b = basis_factory("quartic", 32)
        for k in (0, 10, 32):
            val = eps_psi_at(b, np.array([0.0]))[k, 0]
            assert abs(val) < 1e-12

    def test_derivative_recovers_function(self, basis_factory):
        b = basis_factory("gauss", 32)
        h = 1e-5
        for k in (3, 17, 32):
            xs = b.grid.nodes[200:3000:377]
            dplus = eps_psi_at(b, xs + h)[k]
            dminus = eps_psi_at(b, xs - h)[k]
            deriv = (dplus - dminus) / (2 * h)
            assert np.max(np.abs(deriv - psi_at(b, xs)[k])) < 1e-6

    def test_norm_scaling_one_over_sqrt_n(self, basis_factory):
        b40, b80 = basis_factory("gauss", 40), basis_factory("gauss", 80)
        for offset in (0, 1):
            r = b40.grid.norm(apply_epsilon(b40, 40 + offset)) / b80.grid.norm(
                apply_epsilon(b80, 80 + offset)
            )
            assert math.sqrt(2.0) * 0.75 <= r <= math.sqrt(2.0) * 1.25

    def test_parity_bound_ratios(self, basis_factory):
        rep = parity_bound_check(basis_factory("gauss", 40), basis_factory("gauss", 80), delta=0.5)
        assert rep.all_pass, rep

    def test_parity_bound_vacuous_interval(self, basis_factory):
        rep = parity_bound_check(basis_factory("gauss", 40), basis_factory("gauss", 80), delta=2.0)
        assert rep.all_pass

    def test_paired_norm_constant_bounded(self, basis_factory):
        vals = [paired_epsilon_norm_constant(basis_factory("quartic", n)) for n in (16, 32, 64)]
        assert vals[1] <= vals[0]
        assert vals[2] <= vals[0]


class TestCouplingMatrix:
    def test_skew_and_banded(self, basis_factory):
        b = basis_factory("quartic", 32)
        rows = np.arange(20, 45)
        v = coupling_matrix(b, rows, rows)
        assert np.max(np.abs(v + v.T)) < 1e-14
        off = np.abs(np.subtract.outer(rows, rows)) > 3  # half-bandwidth 2m-1 = 3
        assert np.max(np.abs(v[off])) < 1e-13

    def test_gaussian_offdiagonal_is_jacobi(self, basis_factory):
        b = basis_factory("gauss", 32)
        rows = np.arange(10, 40)
        v = coupling_matrix(b, rows, rows)
        for i, j in enumerate(rows[:-1]):
            assert abs(v[i, i + 1] - b.jacobi_j[j]) < 1e-12

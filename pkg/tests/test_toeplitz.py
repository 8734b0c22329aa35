import math

import numpy as np
import pytest
from scipy.integrate import quad

from oelab.equilibrium import compute_equilibrium
from oelab.potential import GAUSSIAN, QUARTIC
from oelab.toeplitz import (
    BandOperator,
    ToeplitzError,
    boundary_sensitivity_rate,
    corner_row_sum_identity,
    correction_matrices,
    decay_rate,
    density_symbol_coeffs,
    density_toeplitz,
    difference_toeplitz,
    factor_symbol,
    factorization_check,
    factorization_reconstruction_error,
    finite_section_inverse,
    interior_max_abs,
    jacobi_free,
    polynomial_of_band,
    reciprocal_coeffs,
    reciprocal_toeplitz,
    section_spectrum,
    vprime_model_toeplitz,
    vprime_symbol_coeffs,
)

EQ_GAUSS = compute_equilibrium(GAUSSIAN)
EQ_QUARTIC = compute_equilibrium(QUARTIC)
WIN = (0, 64)


def fourier_oracle(f, o):
    re, _ = quad(lambda x: f(x) * math.cos(o * x), -math.pi, math.pi, limit=200)
    return re / (2 * math.pi)


class TestBandOperator:
    def test_symbol_construction_and_toeplitz_invariance(self):
        op = BandOperator.from_symbol({0: 2.0, 2: 0.5, -2: 0.5}, (3, 20))
        assert op.entry(5, 7) == 0.5
        assert op.entry(5, 6) == 0.0
        assert op.toeplitz_defect() == 0.0
        dense = op.to_dense()
        assert np.array_equal(np.diagonal(dense, 2), np.full(15, 0.5))

    def test_matmul_windows_and_band_growth(self):
        a = BandOperator.from_symbol({1: 1.0, -1: -1.0}, WIN)
        b = BandOperator.from_symbol({0: 2.0, 2: 1.0, -2: 1.0}, WIN)
        prod = a @ b
        assert prod.band == 3
        assert np.allclose(prod.to_dense(), a.to_dense() @ b.to_dense())

    def test_from_dense_band_detection(self):
        dense = np.diag(np.ones(9), 1) + np.diag(np.ones(9), -1)
        op = BandOperator.from_dense(dense, (0, 10))
        assert op.band == 1


class TestDensityToeplitz:
    def test_gaussian_identity(self):
        op = density_toeplitz(EQ_GAUSS, WIN)
        assert np.array_equal(op.to_dense(), np.eye(64))

    def test_quartic_band(self):
        # symbol (2 cos 2x + 4)/3: diagonal 4/3, offsets +-2 carry 1/3
        op = density_toeplitz(EQ_QUARTIC, WIN)
        assert abs(op.entry(10, 10) - 4.0 / 3.0) < 1e-15
        assert abs(op.entry(10, 12) - 1.0 / 3.0) < 1e-15
        assert abs(op.entry(10, 8) - 1.0 / 3.0) < 1e-15
        assert op.entry(10, 11) == 0.0
        assert op.entry(10, 13) == 0.0

    @pytest.mark.parametrize("o", [0, 1, 2, 3, 4])
    def test_quartic_against_quadrature_oracle(self, o):
        val = density_symbol_coeffs(EQ_QUARTIC).get(o, 0.0)
        oracle = fourier_oracle(lambda x: EQ_QUARTIC.poly(2 * math.cos(x)), o)
        assert abs(val - oracle) < 1e-12

    def test_spectral_theorem_polynomial_of_free_jacobi(self):
        win = (0, 80)
        jf = jacobi_free(win)
        applied = polynomial_of_band(jf, EQ_QUARTIC.poly_even)
        direct = density_toeplitz(EQ_QUARTIC, win)
        margin = applied.band + 1
        assert interior_max_abs(applied.to_dense() - direct.to_dense(), margin) < 1e-12


class TestReciprocalToeplitz:
    def test_gaussian_delta(self):
        op = reciprocal_toeplitz(EQ_GAUSS, WIN)
        assert np.array_equal(op.to_dense(), np.eye(64))

    def test_quartic_r0_value(self):
        # (1/2pi) int 3/(4 + 2 cos 2x) dx = 3/sqrt(16-4) = sqrt(3)/2
        r = reciprocal_coeffs(EQ_QUARTIC)
        assert abs(r[0] - math.sqrt(3.0) / 2.0) < 1e-13
        oracle = fourier_oracle(lambda x: 1.0 / EQ_QUARTIC.poly(2 * math.cos(x)), 0)
        assert abs(r[0] - oracle) < 1e-10

    def test_odd_coefficients_vanish(self):
        r = reciprocal_coeffs(EQ_QUARTIC)
        assert np.max(np.abs(r[1::2])) < 1e-15

    def test_neumann_inverse(self):
        win = (0, 140)  # reciprocal entries reach the 1e-14 cutoff near offset 50
        p = density_toeplitz(EQ_QUARTIC, win)
        r = reciprocal_toeplitz(EQ_QUARTIC, win)
        prod = (p @ r).to_dense()
        margin = p.band + r.band + 1
        assert interior_max_abs(prod - np.eye(140), margin) < 1e-8

    def test_total_sum_is_reciprocal_at_edge(self):
        # 2 * sum_j R_j = 2 / poly(2) = 1 for the quartic
        r = reciprocal_coeffs(EQ_QUARTIC)
        total = 2.0 * (r[0] + 2.0 * np.sum(r[1:]))
        assert abs(total / 2.0 - 1.0 / EQ_QUARTIC.poly(2.0)) < 1e-12
        assert abs(total - 1.0) < 1e-12


class TestModelOperator:
    def test_gaussian_equals_difference(self):
        vs = vprime_model_toeplitz(GAUSSIAN, WIN)
        d = difference_toeplitz(WIN)
        assert np.array_equal(vs.to_dense(), d.to_dense())

    def test_skew_symmetry_exact(self):
        vs = vprime_model_toeplitz(QUARTIC, WIN).to_dense()
        assert np.array_equal(vs, -vs.T)

    def test_symbol_identity(self):
        # odd Fourier part of V'(2 cos x) equals 2 sin(x) poly(2 cos x)
        xs = np.linspace(-math.pi, math.pi, 512, endpoint=False)
        vc = vprime_symbol_coeffs(QUARTIC)
        series = sum(2.0 * c * np.sin(o * xs) for o, c in vc.items() if o > 0)
        target = 2.0 * np.sin(xs) * EQ_QUARTIC.poly(2.0 * np.cos(xs))
        assert np.max(np.abs(series - target)) < 1e-10

    @pytest.mark.parametrize("pot,eq", [(GAUSSIAN, EQ_GAUSS), (QUARTIC, EQ_QUARTIC)])
    def test_factorization(self, pot, eq):
        report = factorization_check(pot, eq, WIN)
        assert report.max_err_product < 1e-10
        assert report.max_err_commutator < 1e-10


class TestFiniteSection:
    def test_identity(self):
        inv = finite_section_inverse(BandOperator.identity(WIN))
        assert np.array_equal(inv, np.eye(64))

    def test_reciprocal_section_spectrum_in_range(self):
        # poly ranges over [2/3, 2] on the support, so 1/poly over [1/2, 3/2]
        spec = section_spectrum(reciprocal_toeplitz(EQ_QUARTIC, WIN))
        assert spec.min() >= 0.5 - 1e-12
        assert spec.max() <= 1.5 + 1e-12
        assert abs(EQ_QUARTIC.delta1 - 0.5) < 1e-12
        assert abs(EQ_QUARTIC.delta2 - 1.5) < 1e-12

    def test_singular_section_reported(self):
        op = BandOperator.from_symbol({1: 1.0, -1: 1.0}, (0, 3))  # singular odd section
        with pytest.raises(ToeplitzError):
            finite_section_inverse(op)

    def test_section_inverse_close_to_infinite_inverse_with_edge_decay(self):
        sec_inv = finite_section_inverse(reciprocal_toeplitz(EQ_QUARTIC, WIN))
        reference = density_toeplitz(EQ_QUARTIC, WIN).to_dense()
        rate, _ = boundary_sensitivity_rate(sec_inv, reference)
        assert rate > 0.1
        center = 32
        assert abs(sec_inv[center, center] - reference[center, center]) < 1e-10


class TestDecay:
    def test_polynomial_of_band_is_band_limited(self):
        applied = polynomial_of_band(jacobi_free(WIN), EQ_QUARTIC.poly_even)
        assert decay_rate(applied.to_dense()) == math.inf

    def test_reciprocal_entries_decay_at_root_rate(self):
        # interior roots sit at |z|^2 = 2 - sqrt(3); entries fall like |z|^distance
        r = reciprocal_coeffs(EQ_QUARTIC)
        dense = reciprocal_toeplitz(EQ_QUARTIC, WIN).to_dense()
        rate = decay_rate(dense)
        expected = -0.5 * math.log(2.0 - math.sqrt(3.0))
        assert rate > 0.1
        assert abs(rate - expected) / expected < 0.05
        # cross-check the section against the direct coefficients
        assert abs(dense[30, 32] - r[2]) < 1e-14

    def test_perturbation_sensitivity(self):
        # perturbing one Jacobi entry moves the inverse symbol by O(perturbation),
        # with the effect decaying away from the perturbed site
        def poly_of(jac):
            acc = np.eye(80) * EQ_QUARTIC.poly_even[-1]
            for c in reversed(EQ_QUARTIC.poly_even[:-1]):
                acc = acc @ (jac @ jac) + np.eye(80) * c
            return acc

        win = (0, 80)
        jf = jacobi_free(win).to_dense()
        inv0 = np.linalg.inv(poly_of(jf))
        j0, amp = 40, 1e-3
        jf[j0, j0 + 1] += amp
        jf[j0 + 1, j0] += amp
        delta = np.abs(np.linalg.inv(poly_of(jf)) - inv0)
        assert delta.max() < 50 * amp
        assert delta[5, 70] < amp * 1e-2  # far from the site and off-diagonal


class TestSymbolFactorization:
    def test_gaussian_trivial(self):
        fact = factor_symbol(EQ_GAUSS)
        assert fact.roots_inside.size == 0
        assert fact.leading == 1.0
        assert factorization_reconstruction_error(fact, EQ_GAUSS) < 1e-12

    def test_quartic_roots(self):
        fact = factor_symbol(EQ_QUARTIC)
        assert fact.roots_inside.size == 2
        mods = np.abs(fact.roots_inside) ** 2
        assert np.max(np.abs(mods - (2.0 - math.sqrt(3.0)))) < 1e-10
        assert abs(fact.leading - 1.0 / 3.0) < 1e-12

    def test_reconstruction_on_circle(self):
        assert factorization_reconstruction_error(factor_symbol(EQ_QUARTIC), EQ_QUARTIC) < 1e-10

    def test_edge_value_identity(self):
        fact = factor_symbol(EQ_QUARTIC)
        lhs = fact.leading * fact.p1(1.0) ** 2 * fact.p2(0.0)
        assert abs(lhs - EQ_QUARTIC.poly(2.0)) < 1e-10

    def test_corner_row_sum_identity_quartic(self):
        lhs, rhs, rel = corner_row_sum_identity(EQ_QUARTIC, factor_symbol(EQ_QUARTIC))
        assert rel < 1e-8
        # closed form: both sides equal sqrt((2+sqrt3)/3) * sqrt(2) = 1 + sqrt(3)/3
        assert abs(lhs - (1.0 + math.sqrt(3.0) / 3.0)) < 1e-8

    def test_corner_row_entries_match_factor_coefficients(self):
        # inverse corner row reproduces leading * P2(0) * (coeffs of P1)
        fact = factor_symbol(EQ_QUARTIC)
        buffer = 80
        sec = reciprocal_toeplitz(EQ_QUARTIC, (0, buffer + 1))
        inv = finite_section_inverse(sec)
        row = inv[buffer]
        scale = fact.leading * fact.p2(0.0)
        c = fact.p1_coeffs  # highest degree first: c[j] multiplies z**(2m-2-j)
        for j in range(c.size):
            assert abs(row[buffer - j] - scale * c[j]) < 1e-10


class TestCommutatorIdentity:
    def test_half_line_commutator_is_corner_rank_two(self):
        # [D, R] on a window ending at n equals -(e_{n-1} r*^T + r* e_{n-1}^T)
        # up to far-edge terms, with r*_j = R_{n-j}
        win = (0, 96)
        nloc = 96
        r_op = reciprocal_toeplitz(EQ_QUARTIC, win)
        d_op = difference_toeplitz(win)
        comm = d_op.to_dense() @ r_op.to_dense() - r_op.to_dense() @ d_op.to_dense()
        r = reciprocal_coeffs(EQ_QUARTIC)
        rstar = np.zeros(nloc)
        for j in range(nloc):
            dist = nloc - j
            if dist < r.size:
                rstar[j] = r[dist]
        model = np.zeros((nloc, nloc))
        model[nloc - 1, :] += rstar
        model[:, nloc - 1] += rstar
        err = np.abs(comm + model)
        assert np.max(err[40:, 40:]) < 1e-12  # away from the far (left) edge


class TestCorrections:
    @pytest.mark.parametrize("name", ["gauss", "quartic"])
    def test_construction_identities(self, name, basis_factory, equilibrium_factory):
        basis = basis_factory(name, 64)
        rep = correction_matrices(basis, equilibrium_factory(name))
        assert rep.identity_residual < 1e-12
        assert rep.telescope_error < 1e-12

    def test_gaussian_scales_like_one_over_n(self, basis_factory):
        rep64 = correction_matrices(basis_factory("gauss", 64), EQ_GAUSS)
        rep128 = correction_matrices(basis_factory("gauss", 128), EQ_GAUSS)
        assert rep64.max_d < 5.0 / 64
        assert rep128.max_d < 5.0 / 128
        ratio = rep64.max_d / rep128.max_d
        assert 1.0 <= ratio <= 3.0

    def test_gaussian_coupling_defect_is_small(self, basis_factory):
        rep = correction_matrices(basis_factory("gauss", 64), EQ_GAUSS)
        assert rep.max_delta_v < 0.1
        assert rep.max_eps_tilde < rep.max_d  # quadratically small leftover

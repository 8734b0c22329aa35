"""Scaling-limit experiments: sine-kernel convergence, uniform invertibility,
cluster functions.

Every convergence statement is asserted as an ordering along increasing matrix
sizes, never against theoretical rates, whose constants are unknown.  The
limit for the 2x2 kernel is checked blockwise after removing the local-density
conjugation: with reference density rho0 at the chosen bulk point the four
blocks are rescaled as S/(n rho0), Sd/(n rho0^2), IS/n - eps, so that each
converges to the same dimensionless limit matrix regardless of the point.
Traces of kernel products are invariant under that conjugation, so cluster
functions need no such adjustment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumData, compute_equilibrium, density
from .kernels import (
    MomentMatrix,
    epsilon_kernel,
    kernel_k2,
    matrix_kernel_blocks,
    moment_matrix,
)
from .orthopoly import OrthoBasis, build_basis
from .potential import Potential

_GL128 = np.polynomial.legendre.leggauss(128)


@dataclass(frozen=True)
class ScalingWindow:
    """Bulk reference point, dimensionless offsets, and the size ladder."""

    lambda0: float
    s_grid: np.ndarray
    n_list: tuple[int, ...]

    def __post_init__(self):
        if abs(self.lambda0) > 1.8:
            raise ValueError("reference point must stay away from the spectrum edges")
        if list(self.n_list) != sorted(self.n_list) or len(self.n_list) < 2:
            raise ValueError("need at least two increasing sizes")
        object.__setattr__(self, "s_grid", np.asarray(self.s_grid, dtype=float))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))

    def validate_density(self, eq: EquilibriumData):
        rho0 = float(density(eq, self.lambda0))
        if rho0 <= 0.05:
            raise ValueError(f"density {rho0:.3g} at {self.lambda0} too small for scaling")
        return rho0


def default_window(lambda0: float, n_list=(16, 32, 64, 128), count: int = 41) -> ScalingWindow:
    return ScalingWindow(lambda0, np.linspace(-2.0, 2.0, count), tuple(n_list))


def sine_kernel(s):
    """sin(pi s) / (pi s), with the removable singularity filled."""
    s = np.asarray(s, dtype=float)
    tiny = np.abs(s) < 1e-12
    safe = np.where(tiny, 1.0, s)
    out = np.where(tiny, 1.0, np.sin(np.pi * safe) / (np.pi * safe))
    return out if out.ndim else float(out)


def sine_kernel_derivative(s):
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-6
    safe = np.where(small, 1.0, s)
    exact = (np.cos(np.pi * safe) - sine_kernel(safe)) / safe
    out = np.where(small, -(np.pi**2) * s / 3.0, exact)
    return out if out.ndim else float(out)


def sine_kernel_integral(s):
    """integral of the sine kernel from 0 to s, by fixed-order quadrature."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t, w = _GL128
    xs = 0.5 * s[:, None] * (t[None, :] + 1.0)
    vals = 0.5 * s[:, None] * sine_kernel(xs)
    out = vals @ w
    return out if np.asarray(s).ndim else float(out[0])


def limit_blocks(s_diff: np.ndarray) -> np.ndarray:
    """The dimensionless 2x2 limit matrix as a (2, 2, ...) array over s1 - s2."""
    k = sine_kernel(s_diff)
    kd = sine_kernel_derivative(s_diff)
    ki = sine_kernel_integral(s_diff.ravel()).reshape(s_diff.shape) - epsilon_kernel(s_diff)
    return np.array([[k, kd], [ki, k]])


@dataclass(frozen=True)
class ConvergenceTable:
    n_list: tuple[int, ...]
    errors: tuple[float, ...]

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def decreasing_with_slack(self, slack: float = 0.1) -> bool:
        """Strict decrease except the last step, which may sit on a noise floor."""
        head = all(b < a for a, b in zip(self.errors[:-1], self.errors[1:-1]))
        return head and self.errors[-1] < self.errors[-2] * (1.0 + slack)


def bulk_convergence_beta2(window: ScalingWindow, pot: Potential,
                           basis_provider=None) -> ConvergenceTable:
    """Sup error of the rescaled projection kernel against the sine kernel."""
    eq = compute_equilibrium(pot)
    rho0 = window.validate_density(eq)
    target = sine_kernel(window.s_grid[:, None] - window.s_grid[None, :])
    errors = []
    for n in window.n_list:
        basis = basis_provider(pot, n) if basis_provider else build_basis(pot, n)
        pts = window.lambda0 + window.s_grid / (n * rho0)
        scaled = kernel_k2(basis, pts, pts) / (n * rho0)
        errors.append(float(np.max(np.abs(scaled - target))))
    return ConvergenceTable(window.n_list, tuple(errors))


@dataclass(frozen=True)
class BlockConvergence:
    n_list: tuple[int, ...]
    block_errors: dict[str, tuple[float, ...]]
    sd_sign: float

    def table(self, name: str) -> ConvergenceTable:
        return ConvergenceTable(self.n_list, self.block_errors[name])

    @property
    def all_decreasing(self) -> bool:
        return all(self.table(k).strictly_decreasing for k in self.block_errors)


def scaled_blocks(basis: OrthoBasis, M: MomentMatrix, eq: EquilibriumData,
                  lambda0: float, s_grid: np.ndarray, sd_sign: float = 1.0) -> dict[str, np.ndarray]:
    """The four blocks of the matrix kernel, de-conjugated to dimensionless form."""
    n = basis.n
    rho0 = float(density(eq, lambda0))
    pts = lambda0 + np.asarray(s_grid, dtype=float) / (n * rho0)
    raw = matrix_kernel_blocks(basis, M, pts, pts, sd_sign=sd_sign)
    sdiff = np.subtract.outer(s_grid, s_grid)
    return {
        "11": raw["s"] / (n * rho0),
        "12": raw["sd"] / (n * rho0 * rho0),
        "21": raw["is"] / n - epsilon_kernel(sdiff),
        "22": raw["s_swap"] / (n * rho0),
    }


def resolve_sd_sign(basis: OrthoBasis, M: MomentMatrix, eq: EquilibriumData,
                    lambda0: float, s_grid: np.ndarray) -> float:
    """Pick the derivative-block sign that matches the sine-kernel derivative."""
    target = sine_kernel_derivative(np.subtract.outer(s_grid, s_grid))
    errs = {}
    for sign in (1.0, -1.0):
        blocks = scaled_blocks(basis, M, eq, lambda0, s_grid, sd_sign=sign)
        errs[sign] = float(np.max(np.abs(blocks["12"] - target)))
    return min(errs, key=errs.get)


def bulk_convergence_beta1(window: ScalingWindow, pot: Potential, basis_provider=None,
                           smin_tol: float = 1e-8) -> BlockConvergence:
    """Blockwise sup error of the rescaled 2x2 kernel against its limit matrix."""
    eq = compute_equilibrium(pot)
    window.validate_density(eq)
    limits = limit_blocks(np.subtract.outer(window.s_grid, window.s_grid))
    names = {"11": (0, 0), "12": (0, 1), "21": (1, 0), "22": (1, 1)}
    errors = {k: [] for k in names}
    sd_sign = None
    for n in window.n_list:
        basis = basis_provider(pot, n) if basis_provider else build_basis(pot, n)
        M = moment_matrix(basis)
        if M.smin < smin_tol:
            raise RuntimeError(f"moment matrix collapsed at n={n}: smin={M.smin:.2e}")
        if sd_sign is None:
            sd_sign = resolve_sd_sign(basis, M, eq, window.lambda0, window.s_grid)
        blocks = scaled_blocks(basis, M, eq, window.lambda0, window.s_grid, sd_sign=sd_sign)
        for k, (i, j) in names.items():
            errors[k].append(float(np.max(np.abs(blocks[k] - limits[i, j]))))
    return BlockConvergence(window.n_list, {k: tuple(v) for k, v in errors.items()}, sd_sign)


@dataclass(frozen=True)
class InvertibilityTable:
    rows: tuple[tuple[int, float, float], ...]  # (n, smin, norm of the inverse)
    odd_smin: float

    @property
    def no_collapse(self) -> bool:
        smin0 = self.rows[0][1]
        return all(s >= 0.5 * smin0 for _, s, _ in self.rows)


def invertibility_scan(pot: Potential, n_list=(16, 32, 64, 128), basis_provider=None,
                       odd_at: int | None = None) -> InvertibilityTable:
    """Track the smallest singular value of the moment matrix along sizes.

    Also builds one odd-dimension moment matrix, which must be numerically
    singular (a real skew matrix of odd size has a zero eigenvalue)."""
    rows = []
    for n in n_list:
        basis = basis_provider(pot, n) if basis_provider else build_basis(pot, n)
        M = moment_matrix(basis)
        rows.append((n, M.smin, 1.0 / M.smin))
    n_odd_base = odd_at if odd_at is not None else n_list[0]
    basis = basis_provider(pot, n_odd_base) if basis_provider else build_basis(pot, n_odd_base)
    modd = moment_matrix(basis, size=n_odd_base + 1)
    return InvertibilityTable(tuple(rows), odd_smin=modd.smin)


@dataclass(frozen=True)
class ClusterTable:
    k: int
    n_list: tuple[int, ...]
    errors: tuple[float, ...]


def cluster_functions(window: ScalingWindow, pot: Potential, k: int = 2,
                      basis_provider=None) -> ClusterTable:
    """Traces of k-fold products of the scaled matrix kernel against the limit.

    Conjugation-invariant, so the de-conjugated blocks can be multiplied
    directly.  k = 1 compares to the constant 2; k >= 2 compares to the trace
    of the product of limit matrices over pairs from the s-grid."""
    if k not in (1, 2, 3):
        raise ValueError("cluster order must be 1, 2, or 3")
    eq = compute_equilibrium(pot)
    window.validate_density(eq)
    s = window.s_grid[:: max(1, len(window.s_grid) // 12)]
    errors = []
    for n in window.n_list:
        basis = basis_provider(pot, n) if basis_provider else build_basis(pot, n)
        M = moment_matrix(basis)
        blocks = scaled_blocks(basis, M, eq, window.lambda0, s, sd_sign=1.0)
        kmat = np.array([[blocks["11"], blocks["12"]], [blocks["21"], blocks["22"]]])
        kmat = np.moveaxis(kmat, (0, 1), (2, 3))      # (s, s, 2, 2)
        lim = limit_blocks(np.subtract.outer(s, s))
        lim = np.moveaxis(lim, (0, 1), (2, 3))
        if k == 1:
            vals = np.trace(kmat[np.arange(s.size), np.arange(s.size)], axis1=1, axis2=2)
            errors.append(float(np.max(np.abs(vals - 2.0))))
        elif k == 2:
            prod = np.einsum("ijab,jibc->ijac", kmat, kmat)
            ref = np.einsum("ijab,jibc->ijac", lim, lim)
            errors.append(float(np.max(np.abs(np.trace(prod, axis1=2, axis2=3)
                                               - np.trace(ref, axis1=2, axis2=3)))))
        else:
            prod = np.einsum("ijab,jkbc,kicd->ijkad", kmat, kmat, kmat)
            ref = np.einsum("ijab,jkbc,kicd->ijkad", lim, lim, lim)
            errors.append(float(np.max(np.abs(np.trace(prod, axis1=3, axis2=4)
                                               - np.trace(ref, axis1=3, axis2=4)))))
    return ClusterTable(k, window.n_list, tuple(errors))

"""Limiting eigenvalue density on [-2, 2] and structural checks on the potential.

For an even polynomial potential the density has the form
rho(x) = poly(x) * sqrt(4 - x**2) / (2*pi) on [-2, 2], where ``poly`` is an
even polynomial obtained by averaging the divided difference of V' over the
angular measure; for polynomial input that average is a finite sum of central
binomial coefficients and is computed exactly here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .potential import Potential, derivative, evaluate


class EquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class EquilibriumData:
    """Density polynomial and derived constants for a one-cut potential.

    ``poly_even`` holds the coefficients of z**0, z**2, ..., z**(2m-2).
    ``delta1``/``delta2`` are inf and sup of 1/poly over [-2, 2]; the spectrum
    of the reciprocal-symbol Toeplitz operator lies in [delta1, delta2].
    ``gamma`` is the fitted slope of the Jacobi coefficients near index n;
    it has no closed form here and stays None until fitted.
    """

    poly_even: tuple[float, ...]
    delta1: float
    delta2: float
    gamma: float | None = None

    support = (-2.0, 2.0)

    @property
    def degree_half(self) -> int:
        return len(self.poly_even) - 1

    def poly(self, z):
        """The density polynomial, evaluated by Horner in z**2."""
        w = np.asarray(z) * np.asarray(z) if not np.isscalar(z) else z * z
        acc = self.poly_even[-1]
        for c in reversed(self.poly_even[:-1]):
            acc = acc * w + c
        return acc + 0.0 * w  # broadcast a constant polynomial over array input

    def with_gamma(self, gamma: float) -> "EquilibriumData":
        return replace(self, gamma=gamma)


def _angular_moment(p: int) -> int:
    """Mean of (2*cos y)**p over a period: central binomial for even p, else 0."""
    return math.comb(p, p // 2) if p % 2 == 0 else 0


def compute_equilibrium(pot: Potential) -> EquilibriumData:
    """Density polynomial via the exact angular average of the divided difference.

    (V'(z) - V'(w))/(z - w) expands over monomials as sum_i z**i w**(k-1-i);
    averaging w = 2*cos y term by term leaves an even polynomial in z.
    Raises if that polynomial has a real zero in [-2 - d1/2, 2 + d1/2],
    which breaks positivity of the density.
    """
    m = pot.degree_half
    p = np.zeros(2 * m - 1)
    for j, a in enumerate(pot.derivative_odd_coeffs()):
        k = 2 * j + 1  # V' monomial degree
        for i in range(0, k, 2):
            p[i] += a * _angular_moment(k - 1 - i)
    poly_even = tuple(float(c) for c in p[0::2])

    full = np.zeros(2 * m - 1)
    full[0::2] = p[0::2]
    roots = np.polynomial.Polynomial(full).roots() if m > 1 else np.array([])
    hw = 2.0 + pot.d1 / 2.0
    for r in roots:
        if abs(r.imag) < 1e-9 and abs(r.real) <= hw:
            raise EquilibriumError(
                f"density polynomial has a real zero at {r.real:.6g}; "
                "potential is not one-cut on [-2, 2]"
            )

    vals = _poly_range(poly_even)
    if vals[0] <= 0:
        raise EquilibriumError("density polynomial not strictly positive on [-2, 2]")
    return EquilibriumData(poly_even, delta1=1.0 / vals[1], delta2=1.0 / vals[0])


def _poly_range(poly_even: tuple[float, ...]) -> tuple[float, float]:
    """(min, max) of the even polynomial over [-2, 2], grid plus critical points."""
    xs = np.linspace(0.0, 2.0, 4001)  # even: positive half suffices
    eq = EquilibriumData(poly_even, 1.0, 1.0)
    vals = eq.poly(xs)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    full = np.zeros(2 * len(poly_even) - 1)
    full[0::2] = poly_even
    for r in np.polynomial.Polynomial(full).deriv().roots():
        if abs(r.imag) < 1e-12 and abs(r.real) <= 2.0:
            v = float(eq.poly(float(r.real)))
            lo, hi = min(lo, v), max(hi, v)
    return lo, hi


def density(eq: EquilibriumData, lam):
    """rho(x) = poly(x) * sqrt(4 - x**2) / (2*pi) inside [-2, 2], zero outside."""
    x = np.asarray(lam, dtype=float)
    inside = np.abs(x) < 2.0
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = eq.poly(xi) * np.sqrt(4.0 - xi * xi) / (2.0 * np.pi)
    return out if out.ndim else float(out)


def normalization(eq: EquilibriumData) -> float:
    """Exact integral of the density: sum of poly coefficients times Catalan numbers."""
    total = 0.0
    for k, c in enumerate(eq.poly_even):
        total += c * math.comb(2 * k, k) / (k + 1)
    return total


# --- effective potential -----------------------------------------------------

_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def _graded_intervals(a: float, b: float, grade_a: bool, grade_b: bool, levels: int):
    """Subintervals of [a, b], geometrically refined toward graded endpoints."""
    if not grade_a and not grade_b:
        return [(a, b)]
    if grade_a and grade_b:
        mid = 0.5 * (a + b)
        return _graded_intervals(a, mid, True, False, levels) + _graded_intervals(
            mid, b, False, True, levels
        )
    out = []
    if grade_a:
        cuts = a + (b - a) * 0.5 ** np.arange(levels, -1, -1.0)
        out.append((a, cuts[0]))
        out.extend(zip(cuts[:-1], cuts[1:]))
    else:
        cuts = b - (b - a) * 0.5 ** np.arange(0, levels + 1.0)
        out.extend(zip(cuts[:-1], cuts[1:]))
        out.append((cuts[-1], b))
    return out


def _integrate_graded(f, a: float, b: float, grade_a: bool, grade_b: bool, levels: int = 48) -> float:
    if b <= a:
        return 0.0
    pieces = np.array(_graded_intervals(a, b, grade_a, grade_b, levels))
    h = 0.5 * (pieces[:, 1] - pieces[:, 0])
    mid = 0.5 * (pieces[:, 0] + pieces[:, 1])
    xs = (mid[:, None] + h[:, None] * _GL_NODES[None, :]).ravel()
    ws = (h[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return float(np.dot(ws, f(xs)))


def log_potential(eq: EquilibriumData, lam: float) -> float:
    """integral of log|mu - lam| * rho(mu) over the support.

    Inside the support the integral is split at mu = lam and mapped by
    mu = lam -+ t**2, which turns the logarithm into t*log(t) terms handled
    by geometric grading; the sqrt edge factor is graded directly.
    """
    lam = float(lam)

    def rho(mu):
        return density(eq, mu)

    if abs(lam) < 2.0:
        def left(t):
            return 4.0 * t * np.log(t) * rho(lam - t * t)

        def right(t):
            return 4.0 * t * np.log(t) * rho(lam + t * t)

        return _integrate_graded(left, 0.0, math.sqrt(lam + 2.0), True, True) + _integrate_graded(
            right, 0.0, math.sqrt(2.0 - lam), True, True
        )

    def g(mu):
        # no mass where rho vanishes; guards log(0) when a graded node
        # rounds onto lam at the support edge
        r = rho(mu)
        out = np.zeros_like(r)
        mask = r != 0.0
        out[mask] = np.log(np.abs(mu[mask] - lam)) * r[mask]
        return out

    return _integrate_graded(g, -2.0, 2.0, True, True)


def effective_potential(eq: EquilibriumData, pot: Potential, lam: float) -> float:
    """u(x) = 2 * log-potential(x) - V(x); constant on the support for one-cut data."""
    return 2.0 * log_potential(eq, lam) - float(evaluate(pot, lam))


# --- condition checks ---------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    c1_even_confining: bool
    c2_normalized: bool
    c3_positive_density: bool
    c4_max_on_support: bool
    normalization: float
    poly_min: float
    outside_gap: float | None

    @property
    def all_pass(self) -> bool:
        return (
            self.c1_even_confining
            and self.c2_normalized
            and self.c3_positive_density
            and self.c4_max_on_support
        )


def check_conditions(pot: Potential, grid_points: int = 2001, norm_tol: float = 1e-8) -> ConditionReport:
    """Pass/fail for the structural conditions; failures are data, not errors."""
    try:
        eq = compute_equilibrium(pot)
    except EquilibriumError:
        return ConditionReport(True, False, False, False, math.nan, math.nan, None)

    norm = normalization(eq)
    poly_min = _poly_range(eq.poly_even)[0]
    c2 = abs(norm - 1.0) <= norm_tol
    c3 = poly_min > 0.0

    hw = 2.0 + pot.d1 / 2.0
    xs = np.linspace(-hw, hw, grid_points)
    u = np.array([effective_potential(eq, pot, x) for x in xs])
    inside = np.abs(xs) <= 2.0
    u_in = float(np.max(u[inside]))
    if np.any(~inside):
        gap = float(u_in - np.max(u[~inside]))
        c4 = gap > 0.0 and abs(xs[int(np.argmax(u))]) <= 2.0
    else:
        gap, c4 = None, True
    return ConditionReport(True, c2, c3, c4, norm, poly_min, gap)


def rescale_to_standard_support(pot: Potential, s_lo: float = 1e-3, s_hi: float = 1e3) -> Potential:
    """Scale x -> s*x so the density integrates to one and all conditions pass."""

    def excess(s: float) -> float:
        return normalization(compute_equilibrium(pot.rescaled(s))) - 1.0

    grid = np.logspace(math.log10(s_lo), math.log10(s_hi), 241)
    vals = []
    for s in grid:
        try:
            vals.append(excess(float(s)))
        except EquilibriumError:
            vals.append(math.nan)
    bracket = None
    for (s0, v0), (s1, v1) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if math.isnan(v0) or math.isnan(v1):
            continue
        if v0 == 0.0:
            bracket = (s0, s0)
            break
        if v0 * v1 < 0:
            bracket = (s0, s1)
            break
    if bracket is None:
        raise EquilibriumError("no scale in [1e-3, 1e3] normalizes the density")
    s = bracket[0] if bracket[0] == bracket[1] else brentq(excess, *bracket, xtol=1e-14, rtol=1e-15)
    scaled = pot.rescaled(float(s))
    report = check_conditions(scaled)
    if not report.all_pass:
        raise EquilibriumError(f"rescaled potential fails conditions: {report}")
    return scaled


# --- Jacobi slope -----------------------------------------------------------

@dataclass(frozen=True)
class GammaFit:
    gamma: float
    max_residual: float
    k_half_range: int


def estimate_gamma(eq: EquilibriumData, basis) -> GammaFit:
    """Least-squares slope of J_{n+k} - 1 against k/n over |k| <= sqrt(n).

    The fit is through the origin; the returned residual is the sup deviation
    from the fitted line over the window.
    """
    n = basis.n
    s = math.isqrt(n)
    if s * s < n:
        s += 1
    ks = np.arange(-s, s + 1)
    if n + s > len(basis.jacobi_j):
        raise ValueError("basis too small: need Jacobi coefficients up to n + sqrt(n)")
    y = basis.jacobi_j[n + ks] - 1.0
    x = ks / n
    gamma = float(np.dot(x, y) / np.dot(x, x))
    resid = float(np.max(np.abs(y - gamma * x)))
    return GammaFit(gamma=gamma, max_residual=resid, k_half_range=s)

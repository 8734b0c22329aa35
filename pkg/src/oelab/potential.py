"""Even polynomial confining potentials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """Even polynomial V(x) = sum_j c[j] * x**(2j) with positive leading coefficient.

    ``even_coeffs`` lists the coefficients of x**0, x**2, ..., x**(2m).
    ``d1`` and ``d2`` are the margins of the closed rectangle
    [-2-d1, 2+d1] x [-d2, d2] in the complex plane on which downstream
    constructions are allowed to evaluate V; any positive values are valid
    for a polynomial.
    """

    even_coeffs: tuple[float, ...]
    d1: float = 1.0
    d2: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.even_coeffs)
        if len(coeffs) < 2:
            raise PotentialError("need degree >= 2, give at least (c0, c2)")
        if coeffs[-1] <= 0:
            raise PotentialError("leading coefficient must be positive (confinement)")
        if self.d1 <= 0 or self.d2 <= 0:
            raise PotentialError("domain margins d1, d2 must be positive")
        object.__setattr__(self, "even_coeffs", coeffs)

    @property
    def degree_half(self) -> int:
        return len(self.even_coeffs) - 1

    @property
    def degree(self) -> int:
        return 2 * (len(self.even_coeffs) - 1)

    def rescaled(self, s: float) -> "Potential":
        """Potential x -> V(s*x)."""
        return Potential(
            tuple(c * s ** (2 * j) for j, c in enumerate(self.even_coeffs)),
            d1=self.d1,
            d2=self.d2,
        )

    def derivative_odd_coeffs(self) -> tuple[float, ...]:
        """Coefficients a[j] of V'(x) = sum_j a[j] * x**(2j+1)."""
        return tuple(2 * (j + 1) * c for j, c in enumerate(self.even_coeffs[1:]))

    def __call__(self, z):
        return evaluate(self, z)


def evaluate(pot: Potential, z):
    """V(z) by Horner's scheme in z**2; exactly even, works on scalars and arrays."""
    w = np.asarray(z) * np.asarray(z) if not np.isscalar(z) else z * z
    acc = pot.even_coeffs[-1]
    for c in reversed(pot.even_coeffs[:-1]):
        acc = acc * w + c
    return acc


def derivative(pot: Potential, z):
    """V'(z) = sum 2j c_{2j} z**(2j-1); odd in z by construction."""
    a = pot.derivative_odd_coeffs()
    w = np.asarray(z) * np.asarray(z) if not np.isscalar(z) else z * z
    acc = a[-1]
    for c in reversed(a[:-1]):
        acc = acc * w + c
    return acc * z


def c_v_bound(pot: Potential, grid_points: int = 200_001) -> float:
    """max |V'| over [-2-d1/2, 2+d1/2], from a dense grid plus the roots of V''."""
    hw = 2.0 + pot.d1 / 2.0
    xs = np.linspace(-hw, hw, grid_points)
    best = float(np.max(np.abs(derivative(pot, xs))))
    # stationary points of V' are roots of V''
    full = np.zeros(pot.degree)
    a = pot.derivative_odd_coeffs()
    for j, c in enumerate(a):
        full[2 * j + 1] = c
    vpp = np.polynomial.Polynomial(full).deriv()
    for r in vpp.roots():
        if abs(r.imag) < 1e-12 and abs(r.real) <= hw:
            best = max(best, abs(float(derivative(pot, float(r.real)))))
    return best


GAUSSIAN = Potential((0.0, 0.5))
QUARTIC = Potential((0.0, 0.0, 1.0 / 12.0))

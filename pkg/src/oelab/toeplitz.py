"""Banded operators on integer index windows: Toeplitz symbols, sections, inverses.

Three translation-invariant operators drive everything here, all built from
exact Fourier coefficients of trigonometric polynomial symbols:

* the symmetric operator with symbol poly(2 cos x) (``density_toeplitz``),
* its inverse with symbol 1/poly(2 cos x) (``reciprocal_toeplitz``), whose
  entries decay exponentially,
* the skew two-diagonal difference operator and the skew model operator with
  entries sign(l - j) * Fourier[V'(2 cos x)].

Semi-infinite windows are realized as finite windows with a buffer of
8m + 64 indices; exponential decay of everything involved makes the far
boundary invisible to the entries actually used, and the helpers assert that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumData
from .orthopoly import OrthoBasis, coupling_matrix
from .potential import Potential


class ToeplitzError(RuntimeError):
    pass


class SingularSectionError(ToeplitzError):
    def __init__(self, smin: float):
        super().__init__(f"section numerically singular, smallest singular value {smin:.3e}")
        self.smin = smin


def default_buffer(m: int) -> int:
    return 8 * m + 64


@dataclass(frozen=True, eq=False)
class BandOperator:
    """Banded matrix on the index window [n1, n2), diagonal-ordered storage.

    data[band + o, i] holds the entry A[n1+i, n1+i+o] for offsets |o| <= band;
    slots that fall outside the window are zero.
    """

    window: tuple[int, int]
    band: int
    data: np.ndarray

    @property
    def size(self) -> int:
        return self.window[1] - self.window[0]

    @classmethod
    def from_dense(cls, dense: np.ndarray, window: tuple[int, int], band: int | None = None,
                   leak_tol: float = 0.0) -> "BandOperator":
        size = window[1] - window[0]
        if dense.shape != (size, size):
            raise ValueError("dense block does not match window")
        if band is None:
            band = 0
            for o in range(size - 1, 0, -1):
                if np.max(np.abs(np.diagonal(dense, o))) > leak_tol or np.max(
                    np.abs(np.diagonal(dense, -o))
                ) > leak_tol:
                    band = o
                    break
        data = np.zeros((2 * band + 1, size))
        for o in range(-band, band + 1):
            d = np.diagonal(dense, o)
            data[band + o, : d.size] = d if o >= 0 else 0.0
            if o < 0:
                data[band + o, -o : -o + d.size] = d
        return cls(window=tuple(window), band=band, data=data)

    @classmethod
    def from_symbol(cls, coeffs: dict[int, float], window: tuple[int, int]) -> "BandOperator":
        """Toeplitz operator A[j, k] = coeffs[k - j] restricted to the window."""
        band = max((abs(o) for o in coeffs), default=0)
        size = window[1] - window[0]
        band = min(band, size - 1)
        data = np.zeros((2 * band + 1, size))
        for o, c in coeffs.items():
            if abs(o) > band or c == 0.0:
                continue
            if o >= 0:
                data[band + o, : size - o] = c
            else:
                data[band + o, -o:] = c
        return cls(window=tuple(window), band=band, data=data)

    @classmethod
    def identity(cls, window: tuple[int, int]) -> "BandOperator":
        return cls.from_symbol({0: 1.0}, window)

    def to_dense(self) -> np.ndarray:
        size = self.size
        out = np.zeros((size, size))
        for o in range(-self.band, self.band + 1):
            if o >= 0:
                idx = np.arange(size - o)
                out[idx, idx + o] = self.data[self.band + o, :size - o]
            else:
                idx = np.arange(size + o)
                out[idx - o, idx] = self.data[self.band + o, -o:]
        return out

    def entry(self, j: int, k: int) -> float:
        n1, n2 = self.window
        if not (n1 <= j < n2 and n1 <= k < n2):
            raise IndexError("index outside window")
        if abs(k - j) > self.band:
            return 0.0
        return float(self.data[self.band + (k - j), j - n1])

    def diagonal(self, o: int) -> np.ndarray:
        """Entries A[j, j+o] for j ranging over the valid part of the window."""
        if abs(o) > self.band:
            return np.zeros(max(self.size - abs(o), 0))
        if o >= 0:
            return self.data[self.band + o, : self.size - o].copy()
        return self.data[self.band + o, -o:].copy()

    def toeplitz_defect(self) -> float:
        """Max variation along any stored diagonal; zero for a pure Toeplitz section."""
        worst = 0.0
        for o in range(-self.band, self.band + 1):
            d = self.diagonal(o)
            if d.size > 1:
                worst = max(worst, float(np.max(d) - np.min(d)))
        return worst

    def transpose(self) -> "BandOperator":
        return BandOperator.from_dense(self.to_dense().T, self.window, self.band)

    def __matmul__(self, other: "BandOperator") -> "BandOperator":
        if self.window != other.window:
            raise ValueError("windows must agree")
        band = min(self.band + other.band, self.size - 1)
        return BandOperator.from_dense(self.to_dense() @ other.to_dense(), self.window, band)

    def __add__(self, other: "BandOperator") -> "BandOperator":
        if self.window != other.window:
            raise ValueError("windows must agree")
        band = max(self.band, other.band)
        return BandOperator.from_dense(self.to_dense() + other.to_dense(), self.window, band)

    def __sub__(self, other: "BandOperator") -> "BandOperator":
        return self + (-1.0) * other

    def __rmul__(self, c: float) -> "BandOperator":
        return BandOperator(self.window, self.band, c * self.data)


# --- exact Fourier coefficients of the polynomial symbols ---------------------

def _cos_power_fourier(coeff_by_degree: dict[int, float]) -> dict[int, float]:
    """Fourier coefficients of sum_p c_p (2 cos x)**p via binomial expansion."""
    out: dict[int, float] = {}
    for p, c in coeff_by_degree.items():
        for i in range(p + 1):
            f = p - 2 * i
            out[f] = out.get(f, 0.0) + c * math.comb(p, i)
    return {o: v for o, v in out.items() if v != 0.0}


def density_symbol_coeffs(eq: EquilibriumData) -> dict[int, float]:
    """Fourier coefficients of poly(2 cos x); support |o| <= 2m - 2, even offsets."""
    by_degree = {2 * j: c for j, c in enumerate(eq.poly_even)}
    return _cos_power_fourier(by_degree)


def vprime_symbol_coeffs(pot: Potential) -> dict[int, float]:
    """Fourier coefficients of V'(2 cos x); support odd |o| <= 2m - 1."""
    by_degree = {2 * j + 1: a for j, a in enumerate(pot.derivative_odd_coeffs())}
    return _cos_power_fourier(by_degree)


def density_toeplitz(eq: EquilibriumData, window: tuple[int, int]) -> BandOperator:
    """Symmetric banded Toeplitz operator with symbol poly(2 cos x)."""
    return BandOperator.from_symbol(density_symbol_coeffs(eq), window)


def reciprocal_coeffs(eq: EquilibriumData, tol: float = 1e-14, nfft: int = 2**14) -> np.ndarray:
    """Fourier coefficients R_d of 1/poly(2 cos x), d = 0, 1, ..., truncated at |R| < tol.

    Computed by dense trigonometric sampling and an FFT; a length-doubling
    recomputation must agree to 1e-12, which validates the truncation."""
    def coeffs(npts: int) -> np.ndarray:
        x = 2.0 * np.pi * np.arange(npts) / npts
        f = 1.0 / np.asarray(
            EquilibriumData(eq.poly_even, eq.delta1, eq.delta2).poly(2.0 * np.cos(x))
        )
        return np.fft.rfft(f).real / npts

    c1, c2 = coeffs(nfft), coeffs(2 * nfft)
    keep = min(c1.size, c2.size)
    if np.max(np.abs(c1[:keep] - c2[:keep])) > 1e-12:
        raise ToeplitzError("reciprocal symbol coefficients unstable under length doubling")
    c = c2
    cutoff = None
    for d in range(c.size):
        if np.all(np.abs(c[d:]) < tol):
            cutoff = d
            break
    if cutoff is None:
        raise ToeplitzError("reciprocal symbol coefficients do not decay below tolerance")
    c = c[: max(cutoff, 1)].copy()
    c[np.abs(c) < tol] = 0.0  # sub-tolerance noise, incl. exact parity zeros
    return c


def reciprocal_toeplitz(eq: EquilibriumData, window: tuple[int, int], tol: float = 1e-14) -> BandOperator:
    """Toeplitz operator with symbol 1/poly(2 cos x); numerically banded by decay."""
    r = reciprocal_coeffs(eq, tol=tol)
    if r.size - 1 >= window[1] - window[0]:
        raise ToeplitzError("entries of the reciprocal symbol do not decay within the window")
    coeffs = {0: float(r[0])}
    for d in range(1, r.size):
        coeffs[d] = coeffs[-d] = float(r[d])
    return BandOperator.from_symbol(coeffs, window)


def difference_toeplitz(window: tuple[int, int]) -> BandOperator:
    """Skew operator D[j, k] = delta_{j+1,k} - delta_{j-1,k}."""
    return BandOperator.from_symbol({1: 1.0, -1: -1.0}, window)


def vprime_model_toeplitz(pot: Potential, window: tuple[int, int]) -> BandOperator:
    """Skew banded Toeplitz with entries sign(l - j) * Fourier[V'(2 cos x)]_{j-l}."""
    vc = vprime_symbol_coeffs(pot)
    coeffs = {o: math.copysign(1.0, o) * c for o, c in vc.items() if o != 0}
    return BandOperator.from_symbol(coeffs, window)


def jacobi_free(window: tuple[int, int]) -> BandOperator:
    """Constant Jacobi operator with entries delta_{j+1,k} + delta_{j-1,k}."""
    return BandOperator.from_symbol({1: 1.0, -1: 1.0}, window)


def polynomial_of_band(op: BandOperator, even_coeffs: tuple[float, ...]) -> BandOperator:
    """Even polynomial of a banded operator, by Horner in op @ op."""
    sq = op @ op
    acc = BandOperator.from_symbol({0: even_coeffs[-1]}, op.window)
    for c in reversed(even_coeffs[:-1]):
        acc = acc @ sq + BandOperator.from_symbol({0: c}, op.window)
    return acc


def interior_max_abs(dense: np.ndarray, margin: int) -> float:
    """Max |entry| at least ``margin`` away from the window edges."""
    if 2 * margin >= dense.shape[0]:
        raise ValueError("margin swallows the whole window")
    core = dense[margin:-margin, margin:-margin] if margin else dense
    return float(np.max(np.abs(core)))


@dataclass(frozen=True)
class FactorizationReport:
    max_err_product: float     # skew model minus symmetric*difference, interior
    max_err_commutator: float  # difference and symmetric operators commute, interior


def factorization_check(pot: Potential, eq: EquilibriumData, window: tuple[int, int]) -> FactorizationReport:
    """The skew model operator factorizes through the difference operator."""
    vstar = vprime_model_toeplitz(pot, window)
    p = density_toeplitz(eq, window)
    d = difference_toeplitz(window)
    margin = p.band + d.band + 1
    pd = (p @ d).to_dense()
    dp = (d @ p).to_dense()
    return FactorizationReport(
        max_err_product=interior_max_abs(vstar.to_dense() - pd, margin),
        max_err_commutator=interior_max_abs(pd - dp, margin),
    )


# --- finite sections -----------------------------------------------------------

def finite_section_inverse(op: BandOperator) -> np.ndarray:
    """Dense inverse of the windowed section (zero outside the window)."""
    dense = op.to_dense()
    svals = np.linalg.svd(dense, compute_uv=False)
    if svals[-1] <= svals[0] * 1e-13:
        raise SingularSectionError(float(svals[-1]))
    return np.linalg.inv(dense)


def section_spectrum(op: BandOperator) -> np.ndarray:
    return np.linalg.eigvalsh(op.to_dense())


def decay_rate(dense: np.ndarray, floor: float = 1e-280) -> float:
    """Fitted exponential decay rate of |entries| against distance from the diagonal.

    Returns the positive rate d in |A_jk| ~ exp(-d |j-k|); structural zeros
    (below ``floor``) are excluded so parity-sparse operators fit cleanly.
    Returns inf when everything off the diagonal is below the floor."""
    size = dense.shape[0]
    dist, logs = [], []
    for o in range(size):
        vals = np.abs(np.diagonal(dense, o))
        v = float(np.max(vals)) if vals.size else 0.0
        if v > floor:
            dist.append(o)
            logs.append(math.log(v))
    if len(dist) < 3:
        return math.inf
    slope = np.polyfit(np.asarray(dist, dtype=float), np.asarray(logs), 1)[0]
    return float(-slope)


def boundary_sensitivity_rate(section_inv: np.ndarray, reference: np.ndarray) -> tuple[float, float]:
    """Fit |section_inv - reference| ~ C exp(-d * dist-to-nearest-edge).

    Returns (d, C).  The reference is the doubly-infinite inverse restricted
    to the window; deviations live near the window edges."""
    size = section_inv.shape[0]
    err = np.abs(section_inv - reference)
    i = np.arange(size)
    dist = np.minimum(np.minimum(i[:, None], i[None, :]),
                      np.minimum(size - 1 - i[:, None], size - 1 - i[None, :]))
    ds, logs = [], []
    for d in range(size // 2):
        vals = err[dist == d]
        v = float(np.max(vals)) if vals.size else 0.0
        if v > 1e-15:
            ds.append(d)
            logs.append(math.log(v))
    if len(ds) < 3:
        return math.inf, 0.0
    slope, intercept = np.polyfit(np.asarray(ds, dtype=float), np.asarray(logs), 1)
    return float(-slope), float(math.exp(intercept))


# --- Lemma-style corrections to the factorization near index n ----------------

@dataclass(frozen=True)
class CorrectionReport:
    n: int
    half_window: int           # N = 2 ceil(n**(1/4))
    d: np.ndarray               # diagonal correction, index offset d_offset
    d_offset: int
    max_d: float
    max_ptilde: float
    max_eps_tilde: float
    identity_residual: float    # defect of the telescoped difference identity
    telescope_error: float      # re-verified boundary rows of the cumulative sums
    max_delta_v: float


def correction_matrices(basis: OrthoBasis, eq: EquilibriumData, N: int | None = None) -> CorrectionReport:
    """Corrections turning the model factorization into the true coupling matrix.

    The true coupling matrix differs from its translation-invariant model by
    O(1/n) near index n.  The defect is absorbed into a diagonal correction d_j
    (obtained by inverting a section of the symmetric operator against the
    row sums of the defect) plus a cumulative-sum correction with forced zero
    boundary rows; the leftover is quadratically small."""
    n = basis.n
    pot = basis.potential
    m = pot.degree_half
    if N is None:
        N = 2 * math.ceil(n ** 0.25)
    lo, hi = n - 2 * N, n + 2 * N + 1          # section indices for the solve
    rows = np.arange(lo - 2 * m, hi + 2 * m)
    if rows[-1] > basis.kmax:
        raise ValueError("basis kmax too small for the correction window")

    v_true = coupling_matrix(basis, rows, rows)
    vstar = vprime_model_toeplitz(pot, (int(rows[0]), int(rows[-1]) + 1))
    delta_v = v_true - vstar.to_dense()

    def dv(j: int, k: int) -> float:
        return float(delta_v[j - rows[0], k - rows[0]])

    p_coeffs = density_symbol_coeffs(eq)

    # row sums of the defect drive the diagonal correction
    ks = np.arange(lo, hi)
    vtilde = np.array([sum(dv(k + j, k) for j in range(-(2 * m - 1), 2 * m)) for k in ks])
    p_section = density_toeplitz(eq, (lo, hi))
    p_inv = finite_section_inverse(p_section)
    d_vals = p_inv @ vtilde
    cond = np.linalg.cond(p_section.to_dense())
    if cond > 1e8:
        raise ToeplitzError(f"symmetric-operator section ill-conditioned: cond={cond:.2e}")

    def d_of(j: int) -> float:
        return float(d_vals[j - lo]) if lo <= j < hi else 0.0

    # cumulative sums along the odd-offset parity chain, zero boundary rows:
    # the coupling defect lives on odd offsets j - k, its antiderivative on even
    ptilde: dict[tuple[int, int], float] = {}
    telescope = 0.0
    for k in range(n - N, n + N + 1):
        acc = 0.0
        for j in range(k - 2 * m + 1, k + 2 * m, 2):
            acc += dv(j, k) - p_coeffs.get(k - j - 1, 0.0) * d_of(j + 1)
            ptilde[(j + 1, k)] = acc
        telescope = max(telescope, abs(ptilde[(k + 2 * m, k)]))

    def pt(j: int, k: int) -> float:
        return ptilde.get((j, k), 0.0)

    # residual of the telescoped identity:
    # (D ptilde + dtilde P)[j, k] should equal delta_v[j, k] on the inner window
    resid = 0.0
    max_eps = 0.0
    for k in range(n - N, n + N + 1):
        for j in range(k - 2 * m + 1, k + 2 * m):
            lhs = pt(j + 1, k) - pt(j - 1, k) + d_of(j + 1) * p_coeffs.get(k - j - 1, 0.0)
            resid = max(resid, abs(lhs - dv(j, k)))
            max_eps = max(max_eps, abs(d_of(j + 1) * pt(j + 1, k)))

    inner = np.abs(ks - n) <= N
    jj = np.abs(rows - n) <= N + 2 * m
    kk = np.abs(rows - n) <= N
    return CorrectionReport(
        n=n,
        half_window=N,
        d=d_vals,
        d_offset=lo,
        max_d=float(np.max(np.abs(d_vals[inner]))),
        max_ptilde=float(max(abs(v) for v in ptilde.values())),
        max_eps_tilde=float(max_eps),
        identity_residual=float(resid),
        telescope_error=float(telescope),
        max_delta_v=float(np.max(np.abs(delta_v[np.ix_(jj, kk)]))),
    )


# --- root factorization of the symbol ------------------------------------------

@dataclass(frozen=True)
class SymbolFactorization:
    """Splitting of poly(z + 1/z) * z**(2m-2) by root location.

    ``p1_coeffs``/``p2_coeffs`` are monic coefficient arrays (highest degree
    first) of the factors with roots inside and outside the unit circle;
    ``leading`` rescales the product back to the symbol."""

    roots_inside: np.ndarray
    leading: float
    p1_coeffs: np.ndarray
    p2_coeffs: np.ndarray

    def p1(self, z):
        return np.polyval(self.p1_coeffs, z)

    def p2(self, z):
        return np.polyval(self.p2_coeffs, z)


def factor_symbol(eq: EquilibriumData, boundary_tol: float = 1e-8) -> SymbolFactorization:
    """Factor the Laurent lift of the density polynomial by companion-matrix roots."""
    m = eq.degree_half + 1
    deg = 4 * (m - 1)
    lift = np.zeros(deg + 1)
    for j, c in enumerate(eq.poly_even):
        p = 2 * j
        for i in range(p + 1):
            lift[p - 2 * i + 2 * (m - 1)] += c * math.comb(p, i)
    leading = float(lift[-1]) if deg > 0 else float(eq.poly_even[0])
    if deg == 0:
        one = np.array([1.0])
        return SymbolFactorization(np.array([], dtype=complex), leading, one, one)
    roots = np.roots(lift[::-1])
    mods = np.abs(roots)
    if np.any(np.abs(mods - 1.0) <= boundary_tol):
        raise ToeplitzError("symbol root on the unit circle: density polynomial not positive")
    inside = roots[mods < 1.0]
    outside = roots[mods > 1.0]
    if inside.size != deg // 2:
        raise ToeplitzError("root splitting failed: unexpected number of interior roots")
    p1 = np.real_if_close(np.poly(inside), tol=1e6)
    p2 = np.real_if_close(np.poly(outside), tol=1e6)
    return SymbolFactorization(inside, leading, np.real(p1), np.real(p2))


def factorization_reconstruction_error(fact: SymbolFactorization, eq: EquilibriumData, npts: int = 512) -> float:
    """Max |leading * z**(2-2m) * P1(z) P2(z) - poly(z + 1/z)| on the unit circle."""
    m = eq.degree_half + 1
    z = np.exp(1j * np.linspace(0.0, 2.0 * np.pi, npts, endpoint=False))
    lhs = fact.leading * z ** (2 - 2 * m) * fact.p1(z) * fact.p2(z)
    rhs = eq.poly(z + 1.0 / z)
    return float(np.max(np.abs(lhs - rhs)))


def corner_row_sum_identity(eq: EquilibriumData, fact: SymbolFactorization,
                            buffer: int | None = None) -> tuple[float, float, float]:
    """Row sums of the inverted semi-infinite reciprocal section near its corner.

    Returns (lhs, rhs, relative error) for the identity
    sum_i inv[n, n-2i] = sqrt(inv[n, n]) * sqrt(poly(2)), i = 0..m."""
    m = eq.degree_half + 1
    if buffer is None:
        buffer = default_buffer(m)
    n = buffer  # window (0, n+1); translation invariance makes the origin arbitrary
    sec = reciprocal_toeplitz(eq, (0, n + 1))
    inv = finite_section_inverse(sec)
    row = inv[n]
    if abs(row[0]) > 1e-10 or abs(row[1]) > 1e-10:
        raise ToeplitzError("buffer too small: corner row has not decayed at the far edge")
    lhs = float(sum(row[n - 2 * i] for i in range(m + 1)))
    rhs = math.sqrt(float(inv[n, n])) * math.sqrt(float(eq.poly(2.0)))
    return lhs, rhs, abs(lhs - rhs) / abs(rhs)

"""Orthonormal functions psi_k = p_k * exp(-n*V/2) on a truncated interval.

The functions are built by discretized Stieltjes iteration: Lanczos applied to
multiplication by x on a composite Gauss-Legendre grid over [-L, L] with
L = 2 + d1/2, with full reorthogonalization at every step.  Classical
moment-based constructions are hopelessly ill-conditioned for the varying
weight exp(-n*V), while the grid operator keeps every intermediate bounded.

The grid carries exact node symmetry under negation, spectral interpolation
within each panel, and a cumulative-integral operator used for the
half-line transform (eps f)(x) = (int_{-L}^{x} f - int_{x}^{L} f) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .potential import Potential, derivative, evaluate


class BasisError(RuntimeError):
    pass


# Orthonormality in double precision stays ~1e3*eps through n = 128 with full
# two-pass reorthogonalization; the long-double path is kept for larger runs.
EXTENDED_PRECISION_THRESHOLD = 512

# Hard tail enforcement only where the truncation tail is in the asymptotic
# regime; below this the tail is recorded and surfaced, not fatal.
TAIL_ENFORCE_MIN_N = 64


@dataclass(frozen=True, eq=False)
class QuadGrid:
    """Composite Gauss-Legendre grid on [-L, L], symmetric under negation."""

    L: float
    panels: int
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    # reference-panel machinery
    ref_nodes: np.ndarray
    ref_weights: np.ndarray
    ref_bary: np.ndarray
    coef_from_vals: np.ndarray   # nodal values -> Legendre coefficients
    cum_matrix: np.ndarray       # nodal values -> cumulative integral at nodes
    panel_lo: np.ndarray
    panel_width: float = field(default=0.0)

    @property
    def size(self) -> int:
        return self.nodes.size

    # -- discrete inner product ------------------------------------------------

    def dot(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.dot(self.weights, f * g))

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def norm(self, f: np.ndarray) -> float:
        return math.sqrt(max(self.dot(f, f), 0.0))

    # -- cumulative integration -------------------------------------------------

    def cumulative_many(self, values: np.ndarray) -> np.ndarray:
        """int_{-L}^{x_i} of the panelwise interpolant, rows of ``values`` at once."""
        vals = np.atleast_2d(values)
        k = vals.shape[0]
        v = vals.reshape(k, self.panels, self.order)
        panel_ints = 0.5 * self.panel_width * np.einsum("o,kpo->kp", self.ref_weights, v)
        prefix = np.concatenate(
            [np.zeros((k, 1)), np.cumsum(panel_ints, axis=1)[:, :-1]], axis=1
        )
        within = 0.5 * self.panel_width * np.einsum("io,kpo->kpi", self.cum_matrix, v)
        out = (prefix[:, :, None] + within).reshape(k, self.size)
        return out if values.ndim == 2 else out[0]

    def epsilon_many(self, values: np.ndarray) -> np.ndarray:
        """(eps f)(x_i) = cumulative(x_i) - total/2 for every row."""
        vals = np.atleast_2d(values)
        cum = np.atleast_2d(self.cumulative_many(vals))
        total = np.einsum("n,kn->k", self.weights, vals)
        out = cum - 0.5 * total[:, None]
        return out if values.ndim == 2 else out[0]

    # -- off-grid evaluation -----------------------------------------------------

    def _locate(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = np.clip(
            np.floor((xs + self.L) / self.panel_width).astype(int), 0, self.panels - 1
        )
        t = 2.0 * (xs - self.panel_lo[idx]) / self.panel_width - 1.0
        return idx, t

    def interpolate_many(self, values: np.ndarray, xs) -> np.ndarray:
        """Barycentric evaluation of the panelwise interpolant at arbitrary points."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        vals = np.atleast_2d(values)
        v = vals.reshape(vals.shape[0], self.panels, self.order)
        idx, t = self._locate(xs)
        out = np.empty((vals.shape[0], xs.size))
        diff = t[:, None] - self.ref_nodes[None, :]
        exact = np.abs(diff) < 1e-14
        for j in range(xs.size):
            pv = v[:, idx[j], :]
            if exact[j].any():
                out[:, j] = pv[:, int(np.argmax(exact[j]))]
                continue
            w = self.ref_bary / diff[j]
            out[:, j] = pv @ w / np.sum(w)
        return out if values.ndim == 2 else out[0]

    def cumulative_at(self, values: np.ndarray, xs) -> np.ndarray:
        """int_{-L}^{x} of the interpolant at arbitrary points."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        vals = np.atleast_2d(values)
        v = vals.reshape(vals.shape[0], self.panels, self.order)
        panel_ints = 0.5 * self.panel_width * np.einsum("o,kpo->kp", self.ref_weights, v)
        prefix = np.concatenate(
            [np.zeros((vals.shape[0], 1)), np.cumsum(panel_ints, axis=1)], axis=1
        )
        idx, t = self._locate(xs)
        order = self.order
        legv = np.polynomial.legendre.legvander(t, order)
        cum = np.empty((xs.size, order))
        cum[:, 0] = t + 1.0
        for l in range(1, order):
            cum[:, l] = (legv[:, l + 1] - legv[:, l - 1]) / (2 * l + 1)
        out = np.empty((vals.shape[0], xs.size))
        for j in range(xs.size):
            coef = v[:, idx[j], :] @ self.coef_from_vals.T
            out[:, j] = prefix[:, idx[j]] + 0.5 * self.panel_width * coef @ cum[j]
        return out if values.ndim == 2 else out[0]

    def epsilon_at(self, values: np.ndarray, xs) -> np.ndarray:
        vals = np.atleast_2d(values)
        total = np.einsum("n,kn->k", self.weights, vals)
        out = np.atleast_2d(self.cumulative_at(vals, xs)) - 0.5 * total[:, None]
        return out if values.ndim == 2 else out[0]


def build_grid(L: float, panels: int, order: int) -> QuadGrid:
    """Composite Gauss-Legendre rule with exactly negation-symmetric nodes."""
    if panels < 1 or order < 2:
        raise ValueError("need panels >= 1 and order >= 2")
    t, v = roots_legendre(order)
    t = 0.5 * (t - t[::-1])     # enforce exact antisymmetry of the reference rule
    v = 0.5 * (v + v[::-1])
    bounds = np.linspace(-L, L, panels + 1)
    bounds = 0.5 * (bounds - bounds[::-1])
    h = 2.0 * L / panels
    centers = 0.5 * (bounds[:-1] + bounds[1:])
    nodes = (centers[:, None] + 0.5 * h * t[None, :]).ravel()
    weights = np.tile(0.5 * h * v, panels)

    legv = np.polynomial.legendre.legvander(t, order)
    coef_from_vals = ((2 * np.arange(order) + 1) / 2.0)[:, None] * (legv[:, :order].T * v)
    cum = np.empty((order, order))
    cum[:, 0] = t + 1.0
    for l in range(1, order):
        cum[:, l] = (legv[:, l + 1] - legv[:, l - 1]) / (2 * l + 1)
    cum_matrix = cum @ coef_from_vals

    bary = np.ones(order)
    for i in range(order):
        bary[i] = 1.0 / np.prod(t[i] - np.delete(t, i))

    return QuadGrid(
        L=L,
        panels=panels,
        order=order,
        nodes=nodes,
        weights=weights,
        ref_nodes=t,
        ref_weights=v,
        ref_bary=bary,
        coef_from_vals=coef_from_vals,
        cum_matrix=cum_matrix,
        panel_lo=bounds[:-1].copy(),
        panel_width=h,
    )


def default_grid(pot: Potential, n: int) -> QuadGrid:
    """Sizing rule: panels = max(64, 4n), order 12, so the 1/n oscillation of
    the highest functions is resolved by tens of nodes per wavelength."""
    return build_grid(2.0 + pot.d1 / 2.0, max(64, 4 * n), 12)


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """psi_k sampled on the grid plus Jacobi coefficients and the eps transforms."""

    potential: Potential
    grid: QuadGrid
    n: int
    kmax: int
    psi: np.ndarray        # (kmax+1, grid.size)
    jacobi_j: np.ndarray   # (kmax,)
    jacobi_q: np.ndarray   # (kmax+1,)
    eps_psi: np.ndarray    # (kmax+1, grid.size)
    orth_defect: float
    tail_profile: np.ndarray  # max(|psi_k(-L)|, |psi_k(L)|) per k
    tail_enforced_upto: int


def build_basis(
    pot: Potential,
    n: int,
    grid: QuadGrid | None = None,
    kmax: int | None = None,
    *,
    extended: bool | None = None,
    defect_tol: float = 1e-8,
    tail_tol: float = 1e-6,
) -> OrthoBasis:
    """Stieltjes/Lanczos construction with full two-pass reorthogonalization.

    ``kmax`` defaults to n + 2*ceil(sqrt(n)) + 2m + 2, which covers the widest
    index window any downstream check uses.  Fails when the discrete
    orthonormality defect exceeds ``defect_tol`` (grid too coarse), or when
    the truncation tail |psi_k(+-L)| exceeds ``tail_tol`` for k <= n with
    n >= TAIL_ENFORCE_MIN_N; below that size the tail is genuinely non-small
    at desk scale, and is recorded instead of enforced.
    """
    if n % 2 != 0:
        raise BasisError("matrix size n must be even")
    if grid is None:
        grid = default_grid(pot, n)
    m = pot.degree_half
    if kmax is None:
        s = math.isqrt(n)
        if s * s < n:
            s += 1
        kmax = n + 2 * s + 2 * m + 2
    if kmax + 1 >= grid.size:
        raise BasisError("grid has fewer nodes than requested functions")
    if extended is None:
        extended = n > EXTENDED_PRECISION_THRESHOLD

    lam = grid.nodes
    w = grid.weights
    work = np.longdouble if extended else np.float64
    lam_w = lam.astype(work)
    w_w = w.astype(work)

    psi = np.zeros((kmax + 1, grid.size), dtype=work)
    v0 = np.exp(-0.5 * n * np.asarray(evaluate(pot, lam), dtype=work))
    v0 /= np.sqrt(np.dot(w_w, v0 * v0))
    psi[0] = v0
    for k in range(kmax):
        t = lam_w * psi[k]
        for _ in range(2):  # full reorthogonalization, two passes
            coeffs = psi[: k + 1] @ (w_w * t)
            t = t - psi[: k + 1].T @ coeffs
        nrm = np.sqrt(np.dot(w_w, t * t))
        if not nrm > 0:
            raise BasisError(f"Lanczos breakdown at step {k}")
        psi[k + 1] = t / nrm

    psi = psi.astype(np.float64)
    jac_j = np.einsum("kn,kn->k", psi[:-1] * (w * lam), psi[1:])
    jac_q = np.einsum("kn,kn->k", psi * (w * lam), psi)

    gram = (psi * w) @ psi.T
    defect = float(np.max(np.abs(gram - np.eye(kmax + 1))))
    if defect > defect_tol:
        raise BasisError(f"orthonormality defect {defect:.3e} exceeds {defect_tol:.1e}")

    tails = np.max(np.abs(grid.interpolate_many(psi, np.array([-grid.L, grid.L]))), axis=1)
    enforced_upto = n if n >= TAIL_ENFORCE_MIN_N else -1
    if enforced_upto >= 0:
        worst = float(np.max(tails[: enforced_upto + 1]))
        if worst > tail_tol:
            raise BasisError(
                f"truncation tail {worst:.3e} at the interval ends exceeds {tail_tol:.1e}; "
                "enlarge d1 or the grid"
            )

    eps_psi = grid.epsilon_many(psi)
    return OrthoBasis(
        potential=pot,
        grid=grid,
        n=n,
        kmax=kmax,
        psi=psi,
        jacobi_j=jac_j,
        jacobi_q=jac_q,
        eps_psi=eps_psi,
        orth_defect=defect,
        tail_profile=tails,
        tail_enforced_upto=enforced_upto,
    )


def apply_epsilon(basis: OrthoBasis, k: int) -> np.ndarray:
    """(eps psi_k) on the grid nodes."""
    if k > basis.kmax:
        raise IndexError(f"k={k} exceeds kmax={basis.kmax}")
    return basis.eps_psi[k]


def psi_at(basis: OrthoBasis, xs) -> np.ndarray:
    """All psi_k at arbitrary points, via panelwise interpolation."""
    return basis.grid.interpolate_many(basis.psi, xs)


def eps_psi_at(basis: OrthoBasis, xs) -> np.ndarray:
    """All (eps psi_k) at arbitrary points, by the same cumulative rule."""
    return basis.grid.epsilon_at(basis.psi, xs)


def recurrence_residual(basis: OrthoBasis) -> np.ndarray:
    """Grid 2-norm of J_k psi_{k+1} + q_k psi_k + J_{k-1} psi_{k-1} - x psi_k."""
    res = np.empty(basis.kmax)
    lam = basis.grid.nodes
    for k in range(basis.kmax):
        r = basis.jacobi_j[k] * basis.psi[k + 1] + basis.jacobi_q[k] * basis.psi[k] - lam * basis.psi[k]
        if k > 0:
            r += basis.jacobi_j[k - 1] * basis.psi[k - 1]
        res[k] = basis.grid.norm(r)
    return res


def coupling_matrix(basis: OrthoBasis, rows, cols) -> np.ndarray:
    """Skew coupling entries sign(k - j) * <psi_j, V' psi_k> for j in rows, k in cols."""
    vp = np.asarray(derivative(basis.potential, basis.grid.nodes))
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if rows.max() > basis.kmax or cols.max() > basis.kmax:
        raise IndexError("requested coupling index beyond kmax")
    left = basis.psi[rows] * (basis.grid.weights * vp)
    inner = left @ basis.psi[cols].T
    sign = np.sign(cols[None, :] - rows[:, None]).astype(float)
    return sign * inner


@dataclass(frozen=True)
class ParityScalingReport:
    ratio_even: float | None
    ratio_odd: float | None
    even_ok: bool
    odd_ok: bool

    @property
    def all_pass(self) -> bool:
        return self.even_ok and self.odd_ok


def parity_bound_check(
    basis_small: OrthoBasis, basis_large: OrthoBasis, delta: float, rel_tol: float = 0.35
) -> ParityScalingReport:
    """Sup of |eps psi_k| on [-2+delta, 2-delta] scales like 1/n for even k near n
    and 1/sqrt(n) for odd k; checked as ratios between two sizes (ideally 2x)."""
    if delta >= 2.0:
        return ParityScalingReport(None, None, True, True)
    scale = basis_large.n / basis_small.n

    def sup_eps(basis: OrthoBasis, k: int) -> float:
        xs = basis.grid.nodes
        mask = np.abs(xs) <= 2.0 - delta
        return float(np.max(np.abs(basis.eps_psi[k][mask])))

    r_even = sup_eps(basis_small, basis_small.n) / sup_eps(basis_large, basis_large.n)
    r_odd = sup_eps(basis_small, basis_small.n + 1) / sup_eps(basis_large, basis_large.n + 1)
    even_ok = scale * (1 - rel_tol) <= r_even <= scale * (1 + rel_tol)
    odd_ok = math.sqrt(scale) * (1 - rel_tol) <= r_odd <= math.sqrt(scale) * (1 + rel_tol)
    return ParityScalingReport(r_even, r_odd, even_ok, odd_ok)


def paired_epsilon_norm_constant(basis: OrthoBasis) -> float:
    """N * min over j in [n, n + N/2) of ||eps psi_j||^2 + ||eps psi_{j-1}||^2,
    with N = 2*ceil(n**(1/4)); bounded uniformly in n."""
    n = basis.n
    N = 2 * math.ceil(n ** 0.25)
    best = math.inf
    for j in range(n, n + max(N // 2, 1)):
        val = basis.grid.dot(basis.eps_psi[j], basis.eps_psi[j]) + basis.grid.dot(
            basis.eps_psi[j - 1], basis.eps_psi[j - 1]
        )
        best = min(best, val)
    return N * best

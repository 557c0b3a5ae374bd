"""Annulus corrections, truncated-disk comparisons and weight perturbations.

``correction_solve`` splits ``dbar(chi_n u)`` with the partition on ``A_n``,
solves each piece minimally after recentring it at the origin and pushes the
solutions back.  Rectangles with the same ``k`` are rotations of each other
and every recentring transform is the conjugate rotation, so for a monomial
``u = z^j`` the sum is ``(chi_n + C_j) z^j`` exactly; only ``C_j`` has to be
computed, from one representative per ``k``.  The constant is measured twice,
once inside the annulus (where ``chi_n = 1``) and once outside (where
``chi_n = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dbar import (
    WeightSpec,
    PerturbedWeight,
    bergman_coefficients,
    cauchy_transform,
    minimal_solution,
    polyval,
)
from .exceptions import ConfigError, DomainError
from .grid import Grid, polar_quadrature
from .hyperbolic import MobiusTransform, annulus_bounds
from .partition import (
    RectangleIndex,
    X_DIVISIONS,
    _tilde_alpha_extended,
    rectangle_points,
    tilde_chi,
    tilde_chi_dbar,
)

# rectangles whose x-range meets the transition zone (1/4, 3/4) of chi
ACTIVE_K = tuple(k for k in range(X_DIVISIONS - 1) if (k + 2) / X_DIVISIONS > 0.25 and k / X_DIVISIONS < 0.75)


# --------------------------------------------------------------------------
# one rectangle


@dataclass
class RectanglePiece:
    """Minimal solution of one localized piece, in recentred coordinates."""

    index: RectangleIndex
    phi: MobiusTransform
    solution: object
    q: float
    j: int

    def __call__(self, z):
        """``u_{k,l}(z) = u*(phi^-1 z) (phi^-1)'(z)^q``."""
        inv = self.phi.inverse()
        z = np.asarray(z, dtype=complex)
        return self.solution(inv(z)) * inv.derivative(z) ** self.q

    def norm_sq(self, weight, n_r=32, n_theta=256):
        """``int_D |u_{k,l}|^2 w dV`` computed in recentred coordinates."""
        s = weight.s
        edges = [0.0, min(3 * self.solution.support_radius, 0.3), 0.5, 0.8, 0.95, 0.99, 0.999, 1.0]
        total = 0.0
        for r0, r1 in zip(edges[:-1], edges[1:]):
            xi, wq = polar_quadrature(r0, r1, n_r, n_theta)
            d = np.abs(self.phi.derivative(xi))
            f = np.abs(self.solution(xi)) ** 2 * d ** (2 - s) * weight.density(xi)
            total += float(np.sum(wq * f))
        return total

    def rectangle_norm_sq(self, weight):
        """``int_{S_{k,l}} |z^j|^2 w dV`` (radial integrand, exact angular width)."""
        n = self.index.n
        inner, _ = annulus_bounds(n)
        step = 0.5 ** (n + 1)
        ra = inner + self.index.k / X_DIVISIONS * step
        rb = inner + (self.index.k + 2) / X_DIVISIONS * step
        width = 2 * 2 * math.pi / RectangleIndex.l_count(n)
        return width / (2 * math.pi) * weight.radial_moment(self.j, ra, rb)


def recentring_transform(idx):
    return MobiusTransform.centered_at(idx.center())


def solve_piece(idx, j, weight=None, degree=24, cells=48):
    """Pull back ``alpha_{k,l} dbar(chi_n z^j)``, solve, keep the recentred solution."""
    weight = WeightSpec() if weight is None else weight
    if j < 0:
        raise DomainError("monomial degree must be non-negative")
    phi = recentring_transform(idx)
    q = weight.bundle_power
    inv = phi.inverse()
    R = float(np.abs(inv(rectangle_points(idx, per_side=16, margin=0.0))).max())
    h = R / cells
    grid = Grid(h, R + 6 * h)
    n = idx.n

    def form(xi):
        z = phi(xi)
        d = phi.derivative(xi)
        v = _tilde_alpha_extended(idx, z) * tilde_chi_dbar(n, z) * z**j
        return v * np.conj(d) * d**q

    v = grid.sample(form, "form")
    sol = minimal_solution(v, weight, degree, "radial", 1.0)
    return RectanglePiece(idx, phi, sol, q, j)


# --------------------------------------------------------------------------
# the annulus correction


@dataclass
class CorrectionResult:
    """``u_n = sum_j a_j (chi_n + C_j) z^j``."""

    n: int
    coeffs: np.ndarray
    constants: np.ndarray
    constants_outer: np.ndarray
    weight: WeightSpec
    pieces: dict = field(repr=False, default_factory=dict)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        chi = tilde_chi(self.n, z)
        out = np.zeros_like(z)
        for j, a in enumerate(self.coeffs):
            if a != 0:
                out = out + a * (chi + self.constants[j]) * z**j
        return out

    def field(self, grid):
        return grid.sample(self)

    @property
    def constant_gap(self):
        """Disagreement between the inner and outer determinations of ``C_j``."""
        return float(np.max(np.abs(self.constants - self.constants_outer)))

    def norm_sq(self):
        """``||u_n||_w^2`` on the disk (modes are orthogonal)."""
        inner, outer = annulus_bounds(self.n)
        total = 0.0
        W = self.weight
        for j, a in enumerate(self.coeffs):
            if a == 0:
                continue
            C = self.constants[j]
            total += abs(a * (1 + C)) ** 2 * W.radial_moment(j, 0.0, inner)
            total += abs(a * C) ** 2 * W.radial_moment(j, outer, 1.0)
            total += _band_integral(lambda r: np.abs(tilde_chi(self.n, r) + C) ** 2, j, inner, outer, W) * abs(a) ** 2
        return total

    def data_norm_sq(self):
        """``||u||_{w, A_n}^2`` of the holomorphic input."""
        inner, outer = annulus_bounds(self.n)
        return sum(abs(a) ** 2 * self.weight.radial_moment(j, inner, outer) for j, a in enumerate(self.coeffs))

    @property
    def c1(self):
        d = self.data_norm_sq()
        return self.norm_sq() / d if d > 0 else 0.0


def _band_integral(g, j, r0, r1, weight, nodes=96):
    x, wx = np.polynomial.legendre.leggauss(nodes)
    # chi is C^1 piecewise cubic with kinks at x = 1/4, 3/4 of the band
    total = 0.0
    cuts = [r0, r0 + 0.25 * (r1 - r0), r0 + 0.75 * (r1 - r0), r1]
    for a, b in zip(cuts[:-1], cuts[1:]):
        r = 0.5 * (b - a) * x + 0.5 * (b + a)
        f = g(r.astype(complex)) * r ** (2 * j + 1) * (1 - r * r) ** weight.p
        total += 2 * math.pi * 0.5 * (b - a) * float(np.sum(wx * f))
    return total


def _mode_coefficient(pieces, j, radius, samples):
    """``j``-th angular Fourier coefficient of ``sum_k u_{k,0}`` on ``|z| = radius``."""
    th = 2 * np.pi * np.arange(samples) / samples
    z = radius * np.exp(1j * th)
    g = sum(p(z) for p in pieces)
    return complex(np.mean(g * np.exp(-1j * j * th)))


def mode_constant(n, j, weight=None, degree=24, cells=48, pieces=None):
    """``(C_j measured inside, C_j measured outside, pieces)`` for ``u = z^j``."""
    weight = WeightSpec() if weight is None else weight
    if pieces is None:
        pieces = [solve_piece(RectangleIndex(k, 0, n), j, weight, degree, cells) for k in ACTIVE_K]
    M = RectangleIndex.l_count(n)
    inner, outer = annulus_bounds(n)
    r_in = 1.0 - 2.0 * (1.0 - inner)
    r_out = 0.5 * (1.0 + outer)
    g_in = _mode_coefficient(pieces, j, r_in, 2 ** (n + 6))
    g_out = _mode_coefficient(pieces, j, r_out, 2 ** (n + 8))
    c_in = M * g_in / r_in**j - 1.0
    c_out = M * g_out / r_out**j
    return c_in, c_out, pieces


def correction_solve(u_hol, n, weight=None, degree=24, cells=48):
    """Annulus correction of the holomorphic polynomial ``sum a_j z^j``.

    ``u_hol`` holds Taylor coefficients; the input is holomorphic by
    construction.  Returns a :class:`CorrectionResult` with
    ``dbar u_n = dbar(chi_n u)``.
    """
    weight = WeightSpec() if weight is None else weight
    a = np.atleast_1d(np.asarray(u_hol, dtype=complex))
    if a.ndim != 1:
        raise DomainError("u_hol must be a 1-d array of Taylor coefficients")
    if n < 1:
        raise DomainError("annulus index must be >= 1")
    C = np.zeros(a.size, dtype=complex)
    C_out = np.zeros(a.size, dtype=complex)
    pieces = {}
    for j, aj in enumerate(a):
        if aj == 0:
            continue
        C[j], C_out[j], pieces[j] = mode_constant(n, j, weight, degree, cells)
    return CorrectionResult(n, a, C, C_out, weight, pieces)


def direct_sum(result, j, z):
    """``sum_{k,l} u_{k,l}(z)`` by explicit summation over every rotation ``l``."""
    pieces = result.pieces[j]
    M = RectangleIndex.l_count(result.n)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    rot = np.exp(2j * np.pi * np.arange(M) / M)
    out = np.empty(z.shape, dtype=complex)
    for i, zi in enumerate(z.ravel()):
        pts = zi / rot
        g = sum(p(pts) for p in pieces)
        out.flat[i] = np.sum(rot**j * g)
    return out


def piece_constants(result, j, l_values=(0,)):
    """Per-rectangle ratios ``||u_{k,l}||^2 / int_S |u|^2 w``."""
    out = {}
    for p in result.pieces[j]:
        for l in l_values:
            piece = p
            if l != 0:
                piece = solve_piece(RectangleIndex(p.index.k, l, p.index.n), j, result.weight)
            out[(p.index.k, l)] = piece.norm_sq(result.weight) / piece.rectangle_norm_sq(result.weight)
    return out


# --------------------------------------------------------------------------
# truncated versus global minimal solutions


@dataclass
class TruncationReport:
    n: int
    difference: float
    annulus_norm: float
    c2: float


def _outer_mode_norm_sq(moments, coeffs, weight, r0, r1):
    total = 0.0
    for k, mk in enumerate(moments):
        if mk != 0:
            total += abs(mk) ** 2 * weight.radial_moment(-k - 1, r0, r1)
    for j, cj in enumerate(coeffs):
        total += abs(cj) ** 2 * weight.radial_moment(j, r0, r1)
    return total


def restricted_vs_global(v, n, weight=None, degree=48):
    """Compare the minimal solution on ``D(n)`` (extended by zero) with the one on the disk.

    Everything is evaluated in the monomial/Laurent basis, exact for radial
    weights once ``v`` has been reduced to its moments.
    """
    weight = WeightSpec() if weight is None else weight
    inner, outer = annulus_bounds(n)
    if v.support_radius >= inner:
        raise DomainError(f"support of v meets A_m for some m >= {n}")
    u_glob = minimal_solution(v, weight, degree, "radial", 1.0)
    u_n = minimal_solution(v, weight, degree, "radial", outer)
    dc = u_glob.coeffs - u_n.coeffs
    diff = sum(abs(c) ** 2 * weight.radial_moment(j, 0.0, outer) for j, c in enumerate(dc))
    diff += _outer_mode_norm_sq(u_glob.moments, u_glob.coeffs, weight, outer, 1.0)
    ann = _outer_mode_norm_sq(u_n.moments, u_n.coeffs, weight, inner, outer)
    if ann == 0:
        return TruncationReport(n, math.sqrt(diff), 0.0, 0.0)
    return TruncationReport(n, math.sqrt(diff), math.sqrt(ann), math.sqrt(diff / ann))


# --------------------------------------------------------------------------
# weight perturbation and continuity in families


def _check_curvature(weight):
    if isinstance(weight, PerturbedWeight) and not weight.curvature_ok():
        raise DomainError("perturbed weight violates the curvature lower bound")


def _grid_solution(v, weight, degree):
    u0 = cauchy_transform(v)
    c = bergman_coefficients(u0, weight, degree)
    return u0.values - polyval(c, v.grid.z) * v.grid.mask


@dataclass
class PerturbationReport:
    difference: float
    data_term: float
    epsilon: float
    curvature_constant: float


def metric_perturbation(v1, v2, w1, w2, degree=24):
    """Both sides of the two-weight stability estimate for minimal solutions."""
    for w in (w1, w2):
        _check_curvature(w)
    base = w1.base if isinstance(w1, PerturbedWeight) else w1
    c = base.curvature - 4 * base.s
    g = v1.grid
    d1 = w1.density(g.z) * g.mask
    d2 = w2.density(g.z) * g.mask
    u1 = _grid_solution(v1, w1, degree)
    u2 = _grid_solution(v2, w2, degree)
    area = g.cell_area
    lhs = math.sqrt(area * float(np.sum(np.abs(u1 - u2) ** 2 * d1)))
    data = math.sqrt(area * float(np.sum(np.abs(v1.values - v2.values) ** 2 * d1))) / c
    n2 = math.sqrt(area * float(np.sum(np.abs(v2.values) ** 2 * d2)))
    eps = max(lhs - data, 0.0) / n2 if n2 > 0 else 0.0
    return PerturbationReport(lhs, data, eps, c)


def perturbation_sweep(v, deltas, base=None, degree=24, **bump):
    """``||u_0 - u_delta||`` against ``delta`` and the fitted log-log slope."""
    base = WeightSpec() if base is None else base
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas <= 0):
        raise ConfigError("deltas must be positive")
    u_ref = _grid_solution(v, base, degree)
    g = v.grid
    d1 = base.density(g.z) * g.mask
    diffs = []
    for d in deltas:
        w = PerturbedWeight(base, float(d), **bump)
        _check_curvature(w)
        u = _grid_solution(v, w, degree)
        diffs.append(math.sqrt(g.cell_area * float(np.sum(np.abs(u - u_ref) ** 2 * d1))))
    diffs = np.array(diffs)
    slope = float(np.polyfit(np.log(deltas), np.log(diffs), 1)[0])
    return diffs, slope


@dataclass
class ContinuityReport:
    steps: np.ndarray
    distances: np.ndarray
    modulus: np.ndarray
    lipschitz: float


def family_continuity(vf, wf, t0, offsets, degree=24):
    """``||u_t - u_t0||`` in the ``t0`` weight for ``t = t0 + offset``.

    ``vf(t)`` returns a form GridField and ``wf(t)`` a weight; the modulus at
    step ``d`` is the worst distance over offsets with ``|offset| <= d``.
    """
    offsets = np.asarray(offsets, dtype=float)
    v0 = vf(t0)
    w0 = wf(t0)
    _check_curvature(w0)
    g = v0.grid
    d0 = w0.density(g.z) * g.mask
    u0 = _grid_solution(v0, w0, degree)
    dist = []
    for dt in offsets:
        w = wf(t0 + dt)
        _check_curvature(w)
        u = _grid_solution(vf(t0 + dt), w, degree)
        dist.append(math.sqrt(g.cell_area * float(np.sum(np.abs(u - u0) ** 2 * d0))))
    dist = np.array(dist)
    steps = np.unique(np.abs(offsets))
    modulus = np.array([dist[np.abs(offsets) <= s].max() for s in steps])
    nz = offsets != 0
    lip = float(np.max(dist[nz] / np.abs(offsets[nz]))) if np.any(nz) else 0.0
    return ContinuityReport(steps, dist, modulus, lip)

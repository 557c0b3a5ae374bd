"""Weighted L^2-minimal solutions of ``dbar u = v`` on the unit disk.

A particular solution is the Cauchy transform
``u0(z) = (1/pi) int v(zeta) / (z - zeta) dA``, discretised as a midpoint
sum on a cell-centred grid (the singular cell is dropped; a centred square
cell contributes nothing to the principal value).  The minimal solution is
``u0 - P u0`` where ``P`` is the weighted Bergman projection onto
polynomials of degree ``<= D``.

Two realisations of ``P`` are provided:

* ``mode="grid"``: QR of the weighted Vandermonde matrix over the grid
  cells, so the discrete residual is orthogonal to machine precision and any
  density (radial or not) can be used;
* ``mode="radial"``: for radial densities ``(1-|z|^2)^p`` on a disk of
  radius ``rho``.  Monomials are orthogonal with closed-form norms and
  ``<u0, z^j> = int v(zeta) F_j(zeta) dA`` with
  ``F_j(zeta) = -conj(zeta)^(j+1) sum_i C(p,i) (-|zeta|^2)^i / (j+i+1)``,
  so only the support of ``v`` is ever integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import fftconvolve
from scipy.special import betainc, betaln, comb

from .exceptions import ConfigError, DomainError, NumericalCheckError
from .grid import Grid, GridField
from .hyperbolic import MobiusTransform

DEFAULT_DEGREE = 24
MOMENT_TERMS = 64


@dataclass(frozen=True)
class WeightSpec:
    """Bundle weight ``exp(-sigma) = (1-|z|^2)^m`` twisted by ``s psi``.

    The working density is ``(1-|z|^2)^(m-s)``; with ``dd^c`` read as the
    Laplacian the curvature constant is ``c = 4m`` and ``c - 4s = 4(m-s)``.
    """

    m: int = 6
    s: int = 5

    def __post_init__(self):
        if int(self.m) != self.m or int(self.s) != self.s:
            raise ConfigError("weight exponents m and s must be integers")
        if self.s < 0 or self.m < 1:
            raise ConfigError("need m >= 1 and s >= 0")
        if not self.m > self.s:
            raise ConfigError(f"need m > s for an integrable weight (m={self.m}, s={self.s})")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "s", int(self.s))

    @property
    def p(self):
        return self.m - self.s

    @property
    def curvature(self):
        return 4.0 * self.m

    @property
    def hormander_constant(self):
        """``1 / (c - 4s)``."""
        return 1.0 / (self.curvature - 4.0 * self.s)

    @property
    def bundle_power(self):
        """Power ``q`` of ``phi'`` that makes ``|u|^2 exp(-sigma)`` invariant."""
        return self.m / 2

    def density(self, z):
        r2 = np.minimum(np.abs(np.asarray(z)) ** 2, 1.0)
        return (1.0 - r2) ** self.p

    def sigma_density(self, z):
        r2 = np.minimum(np.abs(np.asarray(z)) ** 2, 1.0)
        return (1.0 - r2) ** self.m

    def monomial_norm(self, j, radius=1.0):
        """``int_{|z|<radius} |z|^(2j) (1-|z|^2)^p dA``."""
        j = np.asarray(j, dtype=float)
        a, b = j + 1.0, self.p + 1.0
        full = math.pi * np.exp(betaln(a, b))
        if radius >= 1.0:
            return full
        return full * betainc(a, b, radius * radius)

    def radial_moment(self, k, r0, r1):
        """``int_{r0<|z|<r1} |z|^(2k) (1-|z|^2)^p dA`` for any real ``k``."""
        x, wx = np.polynomial.legendre.leggauss(64)
        r = 0.5 * (r1 - r0) * x + 0.5 * (r1 + r0)
        return float(2 * np.pi * np.sum(0.5 * (r1 - r0) * wx * r ** (2 * k + 1) * (1 - r * r) ** self.p))

    def laplacian_check(self, points, step=1e-4):
        """Worst relative gap between a difference Laplacian of ``s psi`` and ``-4s/(1-|z|^2)^2``."""
        z = np.asarray(points, dtype=complex)

        def spsi(x):
            return self.s * np.log1p(-np.abs(x) ** 2)

        lap = (spsi(z + step) + spsi(z - step) + spsi(z + 1j * step) + spsi(z - 1j * step) - 4 * spsi(z)) / step**2
        exact = -4.0 * self.s / (1 - np.abs(z) ** 2) ** 2
        if self.s == 0:
            return float(np.max(np.abs(lap)))
        return float(np.max(np.abs(lap - exact) / np.abs(exact)))


@dataclass(frozen=True)
class PerturbedWeight:
    """Non-radial density ``(1-|z|^2)^p (1 + delta * bump(z))``.

    ``bump`` is ``Re(((z - c)/r)^k) (1 - |z - c|^2 / r^2)^3`` on its disk, a
    cos-modulated C^2 bump.
    """

    base: WeightSpec = WeightSpec()
    delta: float = 0.0
    center: complex = 0.3 + 0.1j
    radius: float = 0.4
    harmonic: int = 2

    def profile(self, z):
        d = (np.asarray(z, dtype=complex) - self.center) / self.radius
        q = np.abs(d) ** 2
        return np.where(q < 1, np.real(d**self.harmonic) * (1 - q) ** 3, 0.0)

    def density(self, z):
        return self.base.density(z) * (1.0 + self.delta * self.profile(z))

    def log_laplacian(self, z, step=1e-4):
        """Difference Laplacian of ``-log density``."""

        def f(x):
            return -np.log(self.density(x))

        return (f(z + step) + f(z - step) + f(z + 1j * step) + f(z - 1j * step) - 4 * f(z)) / step**2

    def curvature_ratio(self, radius=0.9, samples=4000, seed=0):
        """Smallest ``dd^c(-log density) (1-|z|^2)^2 / (4p)`` over sampled points."""
        rng = np.random.default_rng(seed)
        z = radius * np.sqrt(rng.uniform(size=samples)) * np.exp(2j * np.pi * rng.uniform(size=samples))
        lap = self.log_laplacian(z) * (1 - np.abs(z) ** 2) ** 2
        return float(lap.min() / (4 * self.base.p))

    def curvature_ok(self, margin=0.5, **kw):
        """The perturbed weight keeps at least ``margin`` of the radial curvature."""
        return self.curvature_ratio(**kw) >= margin


def _density(weight, z):
    if hasattr(weight, "density"):
        return weight.density(z)
    if callable(weight):
        return weight(z)
    raise ConfigError("weight must be a WeightSpec, a PerturbedWeight or a callable density")


# --------------------------------------------------------------------------
# Cauchy transform


def _support_box(v):
    nz = np.nonzero(v.values)
    if nz[0].size == 0:
        return None
    return nz[0].min(), nz[0].max(), nz[1].min(), nz[1].max()


def _check_support(v, margin=2):
    r = v.support_radius
    if r + margin * v.grid.h >= v.grid.rho_max:
        raise DomainError(
            f"support radius {r:.4g} touches the grid boundary {v.grid.rho_max:.4g}"
        )


def cauchy_transform(v, target=None):
    """``u0 = (1/pi) sum h^2 v_j / (z - zeta_j)`` at the cell centres of ``target``.

    The result solves ``dbar u0 = v`` up to the quadrature error.
    """
    if v.kind != "form":
        raise DomainError("the Cauchy transform acts on (0,1)-form coefficients")
    target = v.grid if target is None else target
    if abs(target.h - v.grid.h) > 1e-15:
        raise DomainError("target grid must have the same spacing")
    _check_support(v)
    box = _support_box(v)
    if box is None:
        return target.zeros("section")
    y0, y1, x0, x1 = box
    crop = v.values[y0 : y1 + 1, x0 : x1 + 1]
    H = v.grid.half
    ay, by = y0 - H, y1 - H
    ax, bx = x0 - H, x1 - H
    T = target.half
    dx = np.arange(-T - bx, T - ax + 1)
    dy = np.arange(-T - by, T - ay + 1)
    denom = dx[None, :] + 1j * dy[:, None]
    kernel = np.zeros_like(denom)
    nzk = denom != 0
    kernel[nzk] = 1.0 / denom[nzk]
    full = fftconvolve(crop, kernel, mode="full")
    sy, sx = by - ay, bx - ax
    u = full[sy : sy + 2 * T + 1, sx : sx + 2 * T + 1] * (v.grid.h / math.pi)
    return GridField(target, u * target.mask, "section")


def laurent_moments(v, terms=MOMENT_TERMS):
    """``M_k = (h^2/pi) sum v_j zeta_j^k``; outside the support ``u0 = sum M_k z^-(k+1)``."""
    z = v.grid.z
    nz = v.values != 0
    zeta = z[nz]
    vals = v.values[nz] * v.grid.cell_area / math.pi
    out = np.empty(terms, dtype=complex)
    p = np.ones_like(zeta)
    for k in range(terms):
        out[k] = np.sum(vals * p)
        p = p * zeta
    return out


def laurent_eval(moments, z):
    z = np.asarray(z, dtype=complex)
    w = 1.0 / z
    acc = np.zeros_like(z)
    for mk in moments[::-1]:
        acc = acc * w + mk
    return acc * w


def polyval(coeffs, z):
    z = np.asarray(z, dtype=complex)
    acc = np.zeros_like(z)
    for c in coeffs[::-1]:
        acc = acc * z + c
    return acc


# --------------------------------------------------------------------------
# Bergman projection


@lru_cache(maxsize=16)
def _qr_basis(grid, weight, degree):
    z = grid.z[grid.mask]
    sw = np.sqrt(_density(weight, z) * grid.cell_area)
    A = sw[:, None] * z[:, None] ** np.arange(degree + 1)[None, :]
    Q, R = np.linalg.qr(A)
    return sw, Q, R


def _projection_basis(grid, weight, degree):
    try:
        return _qr_basis(grid, weight, degree)
    except TypeError:  # unhashable weight
        return _qr_basis.__wrapped__(grid, weight, degree)


def bergman_coefficients(u, weight, degree=DEFAULT_DEGREE):
    """Monomial coefficients of the discrete weighted projection of ``u``."""
    if degree < 0:
        raise DomainError("degree must be >= 0")
    if isinstance(weight, WeightSpec) and weight.m <= weight.s:
        raise ConfigError("non-integrable weight")
    sw, Q, R = _projection_basis(u.grid, weight, int(degree))
    y = sw * u.values[u.grid.mask]
    return solve_triangular(R, Q.conj().T @ y)


def bergman_project(u, weight, degree=DEFAULT_DEGREE):
    """Weighted L^2 projection of a section onto polynomials of degree ``<= D``."""
    c = bergman_coefficients(u, weight, degree)
    vals = polyval(c, u.grid.z) * u.grid.mask
    return GridField(u.grid, vals, "section")


def radial_kernel(j, p, zeta):
    """``F_j(zeta) = (1/pi) int_D conj(z)^j (1-|z|^2)^p / (z - zeta) dA(z)``."""
    zeta = np.asarray(zeta, dtype=complex)
    x = np.abs(zeta) ** 2
    g = np.zeros_like(x)
    for i in range(p + 1):
        g = g + comb(p, i, exact=True) * (-x) ** i / (j + i + 1)
    return -np.conj(zeta) ** (j + 1) * g


def radial_inner_products(v, p, degree):
    """``<u0, z^j>`` for ``j <= degree`` computed from the data ``v`` alone."""
    nz = v.values != 0
    zeta = v.grid.z[nz]
    vals = v.values[nz] * v.grid.cell_area
    return np.array([np.sum(vals * radial_kernel(j, p, zeta)) for j in range(degree + 1)])


# --------------------------------------------------------------------------
# minimal solutions


@dataclass
class MinimalSolution:
    """``u = u0 - sum_j c_j z^j`` with ``u0`` known on a grid and as a Laurent series."""

    u0: GridField
    moments: np.ndarray
    coeffs: np.ndarray
    support_radius: float
    weight: object
    mode: str
    domain_radius: float = 1.0
    degree_converged: bool = True
    _field: GridField = field(default=None, init=False, repr=False)

    @property
    def grid(self):
        return self.u0.grid

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def switch_radius(self):
        h = self.grid.h
        return min(1.5 * self.support_radius + 4 * h, self.grid.half * h - 4 * h)

    def field(self):
        """The solution sampled on the grid of ``u0``."""
        if self._field is None:
            vals = (self.u0.values - polyval(self.coeffs, self.grid.z)) * self.grid.mask
            self._field = GridField(self.grid, vals, "section")
        return self._field

    def particular(self, z):
        """``u0`` at arbitrary points: spline near the support, Laurent series beyond."""
        z = np.asarray(z, dtype=complex)
        out = np.empty_like(z)
        near = np.abs(z) < self.switch_radius
        if np.any(near):
            out[near] = self.u0.evaluate(z[near])
        if np.any(~near):
            out[~near] = laurent_eval(self.moments, z[~near])
        return out

    def __call__(self, z):
        return self.particular(z) - polyval(self.coeffs, z)

    def holomorphic_part(self, z):
        return polyval(self.coeffs, z)


def minimal_solution(
    v,
    weight=None,
    degree=DEFAULT_DEGREE,
    mode="grid",
    domain_radius=1.0,
    check_degree=False,
):
    """Weighted L^2-minimal solution of ``dbar u = v`` (polynomial projection of degree ``D``).

    ``mode="grid"`` projects over the cells of ``v.grid``; ``mode="radial"``
    uses exact radial inner products on the disk of radius ``domain_radius``
    and only needs ``v`` on a grid covering its support.
    """
    weight = WeightSpec() if weight is None else weight
    if v.kind != "form":
        raise DomainError("minimal_solution expects a (0,1)-form")
    if isinstance(weight, WeightSpec) and weight.m <= weight.s:
        raise ConfigError("need m > s")
    _check_support(v)
    support = v.support_radius
    h = v.grid.h
    moments = laurent_moments(v)
    if mode == "grid":
        u0 = cauchy_transform(v)
        coeffs = bergman_coefficients(u0, weight, degree)
        converged = True
        if check_degree:
            c2 = bergman_coefficients(u0, weight, degree + 8)
            du = np.abs(polyval(c2, u0.grid.z) - polyval(coeffs, u0.grid.z))[u0.grid.mask]
            scale = max(np.abs(u0.values).max(), 1e-300)
            converged = bool(du.max() <= 1e-6 * scale)
        return MinimalSolution(u0, moments, coeffs, support, weight, mode, v.grid.rho_max, converged)
    if mode == "radial":
        if not isinstance(weight, WeightSpec):
            raise ConfigError("radial mode needs a radial WeightSpec")
        if support >= domain_radius:
            raise DomainError("support must lie inside the projection domain")
        eval_radius = min(v.grid.rho_max, 2.0 * support + 10 * h)
        u0 = cauchy_transform(v, Grid(h, eval_radius))
        b = radial_inner_products(v, weight.p, degree + (8 if check_degree else 0))
        norms = weight.monomial_norm(np.arange(len(b)), domain_radius)
        c_all = b / norms
        coeffs = c_all[: degree + 1]
        converged = True
        if check_degree:
            tail = np.abs(c_all[degree + 1 :]) * domain_radius ** np.arange(degree + 1, len(b))
            scale = max(np.abs(u0.values).max(), 1e-300)
            converged = bool(tail.sum() <= 1e-6 * scale)
        return MinimalSolution(u0, moments, coeffs, support, weight, mode, domain_radius, converged)
    raise ConfigError(f"unknown projection mode {mode!r}")


# --------------------------------------------------------------------------
# residuals, norms and transforms


def dbar_field(u):
    """Centred-difference ``dbar`` of grid samples; edge cells are NaN."""
    a = u.values if isinstance(u, GridField) else np.asarray(u)
    h = u.grid.h
    out = np.full(a.shape, np.nan + 0j)
    dx = (a[1:-1, 2:] - a[1:-1, :-2]) / (2 * h)
    dy = (a[2:, 1:-1] - a[:-2, 1:-1]) / (2 * h)
    out[1:-1, 1:-1] = 0.5 * (dx + 1j * dy)
    return out


def dbar_residual(u, v, region=None):
    """Relative ``dbar u - v`` in the max norm and the plain L^2 norm over ``region``."""
    if region is None:
        region = np.abs(u.grid.z) < u.grid.rho_max - 2 * u.grid.h
    d = dbar_field(u)
    ok = region & np.isfinite(d)
    res = d[ok] - v.values[ok]
    vmax = np.abs(v.values[ok]).max()
    vl2 = np.sqrt(np.sum(np.abs(v.values[ok]) ** 2))
    if vmax == 0:
        return {"max_rel": float(np.abs(res).max()), "l2_rel": float(np.sqrt(np.sum(np.abs(res) ** 2)))}
    return {
        "max_rel": float(np.abs(res).max() / vmax),
        "l2_rel": float(np.sqrt(np.sum(np.abs(res) ** 2)) / vl2),
    }


def weighted_norm(f, weight, region=None):
    return f.norm(_density(weight, f.grid.z), region)


def hormander_ratio(u, v, weight):
    """``||u||_w^2 / ||v||_w^2`` on the common grid."""
    nv = weighted_norm(v, weight) ** 2
    if nv == 0:
        return 0.0
    return weighted_norm(u, weight) ** 2 / nv


def orthogonality_defect(u, weight, degree=DEFAULT_DEGREE):
    """``max_j |<u, z^j>_w| / (||u||_w ||z^j||_w)`` in the grid inner product."""
    g = u.grid
    z = g.z[g.mask]
    w = _density(weight, z) * g.cell_area
    uu = u.values[g.mask]
    nu = math.sqrt(float(np.sum(np.abs(uu) ** 2 * w)))
    if nu == 0:
        return 0.0
    worst = 0.0
    zj = np.ones_like(z)
    for _ in range(degree + 1):
        ip = np.sum(uu * np.conj(zj) * w)
        nz = math.sqrt(float(np.sum(np.abs(zj) ** 2 * w)))
        worst = max(worst, abs(ip) / (nu * nz))
        zj = zj * z
    return worst


def weighted_cauchy_plane(v, k, z):
    """``u(z) = z^-k (1/pi) int v(zeta) zeta^k / (z - zeta) dA``; ``dbar u = v`` off 0.

    Direct midpoint sum; a target that coincides with a cell centre skips that
    cell.  ``k = 0`` is the plain Cauchy transform.
    """
    if v.kind != "form":
        raise DomainError("expects a (0,1)-form")
    k = int(k)
    if k < 0:
        raise DomainError("k must be non-negative")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if k > 0 and np.any(z == 0):
        raise DomainError("z = 0 is excluded when k > 0")
    nz = v.values != 0
    zeta = v.grid.z[nz]
    g = v.values[nz] * zeta**k * v.grid.cell_area / math.pi
    out = np.empty(z.shape, dtype=complex)
    flat = z.ravel()
    res = np.empty(flat.shape, dtype=complex)
    for s in range(0, flat.size, 2048):
        blk = flat[s : s + 2048]
        d = blk[:, None] - zeta[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ker = np.where(np.abs(d) > 1e-14, 1.0 / d, 0.0)
        res[s : s + 2048] = ker @ g
    out[...] = (res / flat**k).reshape(z.shape) if k else res.reshape(z.shape)
    return out


def pullback(phi, f, kind, q=0, grid=None):
    """Pull a section or form back by ``phi``.

    Sections: ``f(phi(xi)) phi'(xi)^q``; forms additionally pick up
    ``conj(phi'(xi))``.  ``f`` is a GridField (interpolated) or a callable.
    ``q = 0`` is plain composition; ``q = m/2`` is the bundle ``K^(m/2)``
    for which ``|u|^2 (1-|z|^2)^m`` is invariant.
    """
    if not isinstance(phi, MobiusTransform):
        raise TypeError("phi must be a MobiusTransform")
    if kind not in ("section", "form"):
        raise DomainError("kind must be 'section' or 'form'")
    if grid is None:
        if not isinstance(f, GridField):
            raise DomainError("a target grid is needed for callable input")
        grid = f.grid
    xi = grid.z[grid.mask]
    y = phi(xi)
    d = phi.derivative(xi)
    if isinstance(f, GridField):
        vals = np.zeros(y.shape, dtype=complex)
        rs = f.support_radius
        inside = np.abs(y) <= rs + 2 * f.grid.h
        if np.any(inside):
            vals[inside] = f.evaluate(y[inside])
    else:
        vals = np.asarray(f(y), dtype=complex)
    factor = d**q if q else np.ones_like(d)
    if kind == "form":
        factor = factor * np.conj(d)
    out = np.zeros(grid.shape, dtype=complex)
    out[grid.mask] = vals * factor
    return GridField(grid, out, kind)


def c1_bump(center=0j, radius=0.25, amplitude=1.0):
    """``F = A (1 - |z-c|^2/r^2)^2`` on its disk and its exact ``dbar``."""

    def F(z):
        q = np.abs(z - center) ** 2 / radius**2
        return np.where(q < 1, amplitude * (1 - q) ** 2, 0.0)

    def dF(z):
        q = np.abs(z - center) ** 2 / radius**2
        return np.where(q < 1, -2 * amplitude * (1 - q) * (z - center) / radius**2, 0.0)

    return F, dF


def require(condition, message, witness=None):
    if not condition:
        raise NumericalCheckError(message, witness)

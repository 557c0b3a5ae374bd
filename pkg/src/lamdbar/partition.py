"""Dyadic strip rectangles, annulus maps and C^1 partitions of unity.

The strip ``0 < x < 1`` is cut into overlapping rectangles
``S_{k,l} = (k/32, (k+2)/32) x (l/256, (l+2)/256)``.  The partition
functions are tensor products of a piecewise-cubic smoothstep profile whose
integer translates sum to one, so the partition is exact and translation
invariant in ``y`` by construction.  ``f_n`` wraps the strip onto the
annulus ``A_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .hyperbolic import (
    MobiusTransform,
    annulus_bounds,
    annulus_to_strip,
    poincare_distance,
    strip_to_annulus,
)

X_DIVISIONS = 2**5
Y_DIVISIONS = 2**8
N_K = X_DIVISIONS - 1  # k = 0, ..., 2^5 - 2


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def smoothstep_deriv(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


def bump(u):
    """C^1 bump on ``(0, 2)`` with ``sum_j bump(u - j) == 1``."""
    u = np.asarray(u, dtype=float)
    return np.where(u <= 1.0, smoothstep(u), 1.0 - smoothstep(u - 1.0))


def bump_deriv(u):
    u = np.asarray(u, dtype=float)
    return np.where(u <= 1.0, smoothstep_deriv(u), -smoothstep_deriv(u - 1.0))


def x_profile(k, x):
    """The ``x`` factor of ``alpha_{k,l}``; flattened to 1 at the strip edges."""
    u = X_DIVISIONS * np.asarray(x, dtype=float) - k
    val = bump(u)
    k = np.asarray(k)
    val = np.where((k == 0) & (u <= 1.0) & (u > -1.0), 1.0, val)
    val = np.where((k == N_K - 1) & (u >= 1.0) & (u < 3.0), 1.0, val)
    return val


def x_profile_deriv(k, x):
    u = X_DIVISIONS * np.asarray(x, dtype=float) - k
    d = X_DIVISIONS * bump_deriv(u)
    k = np.asarray(k)
    d = np.where((k == 0) & (u <= 1.0), 0.0, d)
    d = np.where((k == N_K - 1) & (u >= 1.0), 0.0, d)
    return d


def chi(x):
    """Decreasing cutoff: 1 on ``(0, 1/4)``, 0 on ``(3/4, 1)``."""
    return 1.0 - smoothstep((np.asarray(x, dtype=float) - 0.25) / 0.5)


def chi_deriv(x):
    return -smoothstep_deriv((np.asarray(x, dtype=float) - 0.25) / 0.5) / 0.5


def alpha(k, l, x, y):
    """Strip partition function ``alpha_{k,l}(x, y)``."""
    return x_profile(k, x) * bump(Y_DIVISIONS * np.asarray(y, dtype=float) - l)


@dataclass(frozen=True)
class RectangleIndex:
    k: int
    l: int
    n: int

    def __post_init__(self):
        if not 0 <= self.k <= N_K - 1:
            raise DomainError(f"k must lie in [0, {N_K - 1}]")
        if self.n < 1:
            raise DomainError("rectangles are defined for annulus index n >= 1")
        if not 0 <= self.l < self.l_count(self.n):
            raise DomainError(f"l must lie in [0, {self.l_count(self.n) - 1}]")

    @staticmethod
    def l_count(n):
        return 2 ** (n + 9)

    def strip_center(self):
        return (self.k + 1) / X_DIVISIONS, (self.l + 1) / Y_DIVISIONS

    def center(self):
        """Image of the rectangle centre under ``f_n``."""
        x, y = self.strip_center()
        return complex(strip_to_annulus(x, y, self.n))


def f_n(x, y, n):
    return strip_to_annulus(x, y, n)


def f_n_inverse(z, n):
    return annulus_to_strip(z, n)


def _strip_coords_closed(z, n):
    """Strip coordinates of points in the closed annulus ``A_n``."""
    z = np.asarray(z)
    inner, outer = annulus_bounds(n)
    r = np.abs(z)
    if np.any((r < inner - 1e-15) | (r > outer + 1e-15)):
        raise DomainError(f"point outside the closed annulus A_{n}")
    return annulus_to_strip(z, n)


def _wrapped_offset(y, l, n):
    period = 2.0 ** (n + 1)
    return np.mod(y - np.asarray(l) / Y_DIVISIONS, period) * Y_DIVISIONS


def tilde_alpha(idx, z):
    """``alpha_{k,l} o f_n^{-1}`` on the closed annulus; zero off its support."""
    x, y = _strip_coords_closed(z, idx.n)
    return x_profile(idx.k, x) * bump(_wrapped_offset(y, idx.l, idx.n))


def _tilde_alpha_extended(idx, z):
    # Same formula with the radial coordinate allowed slightly past the
    # annulus edges, so difference stencils at the edges stay C^1.
    z = np.asarray(z, dtype=complex)
    inner, _ = annulus_bounds(idx.n)
    x = (np.abs(z) - inner) * 2.0 ** (idx.n + 1)
    y = np.mod(np.angle(z) / (2 * np.pi), 1.0) * 2.0 ** (idx.n + 1)
    return x_profile(idx.k, x) * bump(_wrapped_offset(y, idx.l, idx.n))


def partition_values(n, z):
    """All (at most four) nonzero partition functions at each point.

    Returns ``(k, l, values)`` arrays of shape ``z.shape + (4,)``; unused slots
    carry value 0.
    """
    x, y = _strip_coords_closed(z, n)
    x = np.asarray(x)[..., None]
    y = np.asarray(y)[..., None]
    kx = np.floor(X_DIVISIONS * x).astype(np.int64)
    ly = np.floor(Y_DIVISIONS * y).astype(np.int64)
    dk = np.array([-1, -1, 0, 0])
    dl = np.array([-1, 0, -1, 0])
    k = kx + dk
    l = np.mod(ly + dl, RectangleIndex.l_count(n))
    valid = (k >= 0) & (k <= N_K - 1)
    kc = np.clip(k, 0, N_K - 1)
    vals = np.where(valid, x_profile(kc, x) * bump(_wrapped_offset(y, l, n)), 0.0)
    return kc, l, vals


def tilde_chi(n, z):
    """``chi o f_n^{-1}`` extended by 1 inside ``A_n`` and by 0 outside it."""
    z = np.asarray(z)
    inner, outer = annulus_bounds(n)
    r = np.abs(z)
    x = (r - inner) * 2.0 ** (n + 1)
    return np.where(r < inner, 1.0, np.where(r >= outer, 0.0, chi(np.clip(x, 0, 1))))


def tilde_chi_dbar(n, z):
    """``d/dzbar`` of :func:`tilde_chi` (a radial function)."""
    z = np.asarray(z, dtype=complex)
    inner, outer = annulus_bounds(n)
    r = np.abs(z)
    x = (r - inner) * 2.0 ** (n + 1)
    dr = np.where((r > inner) & (r < outer), chi_deriv(x) * 2.0 ** (n + 1), 0.0)
    # d/dzbar g(|z|) = g'(r) z / (2 r)
    return np.where(r > 0, dr * z / (2 * np.where(r > 0, r, 1.0)), 0.0)


def c1_norm(func, points, spacing):
    """``sup(|g|, |g_x|, |g_y|)`` over ``points`` by central differences."""
    points = np.asarray(points, dtype=complex)
    g = np.abs(func(points))
    gx = np.abs(func(points + spacing) - func(points - spacing)) / (2 * spacing)
    gy = np.abs(func(points + 1j * spacing) - func(points - 1j * spacing)) / (2 * spacing)
    return float(max(g.max(), gx.max(), gy.max()))


def rectangle_points(idx, per_side=24, margin=1e-6):
    """A uniform strip-coordinate grid over ``S_{k,l}`` pushed into ``A_n``."""
    x0 = idx.k / X_DIVISIONS
    y0 = idx.l / Y_DIVISIONS
    xs = np.linspace(x0 + margin, x0 + 2 / X_DIVISIONS - margin, per_side)
    ys = np.linspace(y0 + margin, y0 + 2 / Y_DIVISIONS - margin, per_side)
    X, Y = np.meshgrid(xs, ys)
    return strip_to_annulus(X, Y, idx.n).ravel()


def tilde_alpha_c1_norm(idx, per_side=24):
    """Measured C^1 norm of ``tilde_alpha`` over its rectangle."""
    spacing = 1e-4 * 0.5 ** (idx.n + 1)
    pts = rectangle_points(idx, per_side, margin=4 * spacing * 2 ** (idx.n + 1))
    return c1_norm(lambda z: _tilde_alpha_extended(idx, z), pts, spacing)


def composed_regularity_check(idx, phi, per_side=24):
    """C^1 norms of ``tilde_alpha o phi`` and ``tilde_chi_n o phi`` on ``phi^{-1}(S)``.

    Requires ``phi(0)`` inside the rectangle ``f_n(S_{k,l})``.
    """
    if not isinstance(phi, MobiusTransform):
        raise TypeError("phi must be a MobiusTransform")
    c = phi.center
    if abs(c) >= 1:
        raise DomainError("phi(0) outside the disk")
    inner, outer = annulus_bounds(idx.n)
    if not inner <= abs(c) < outer:
        raise DomainError("phi(0) is not in the annulus of the rectangle")
    x, y = annulus_to_strip(c, idx.n)
    xo = X_DIVISIONS * x - idx.k
    yo = float(_wrapped_offset(y, idx.l, idx.n))
    if not (0 < xo < 2 and 0 < yo < 2):
        raise DomainError("phi(0) is not inside the rectangle")
    inv = phi.inverse()
    margin = 1e-3
    pts = inv(rectangle_points(idx, per_side, margin=margin / X_DIVISIONS))
    spacing = 1e-4
    a_norm = c1_norm(lambda xi: _tilde_alpha_extended(idx, phi(xi)), pts, spacing)
    c_norm = c1_norm(lambda xi: tilde_chi(idx.n, phi(xi)), pts, spacing)
    return {"alpha": a_norm, "chi": c_norm}


def separated_count_bound(points, r, n=None):
    """Count an ``r``-separated set in ``A_n``; returns ``(count, count / 2^n)``."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    if pts.size == 0:
        raise DomainError("empty point set")
    rad = np.abs(pts)
    if n is None:
        from .hyperbolic import annulus_index

        n = int(annulus_index(pts[0]))
    inner, outer = annulus_bounds(n)
    if np.any((rad < inner) | (rad >= outer)):
        raise DomainError(f"all points must lie in A_{n}")
    for s in range(0, pts.size, 512):
        block = pts[s : s + 512]
        d = poincare_distance(block[:, None], pts[None, :])
        ii = np.arange(s, s + block.size)
        d[np.arange(block.size), ii] = np.inf
        if np.any(d < r):
            i, j = np.argwhere(d < r)[0]
            raise DomainError(
                f"separation violated by points {int(ii[i])} and {int(j)}: "
                f"d = {float(d[i, j]):.6g} < {r}"
            )
    return pts.size, pts.size / 2.0**n


def _annulus_sample(rng, n, count):
    inner, outer = annulus_bounds(n)
    r = inner + (outer - inner) * rng.uniform(1e-9, 1, count)
    r = np.minimum(r, np.nextafter(outer, 0))
    return r * np.exp(2j * np.pi * rng.uniform(size=count))


def partition_invariants(n_values=range(1, 9), points=10_000, seed=0, regularity_samples=100):
    """Sum, overlap, gradient-scaling and pullback checks, one row per annulus.

    The overlap count evaluates every rectangle within three indices of the
    point in both directions, not just the four that can be nonzero.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n in n_values:
        z = _annulus_sample(rng, n, points)
        x, y = annulus_to_strip(z, n)
        kx = np.floor(X_DIVISIONS * x).astype(int)
        ly = np.floor(Y_DIVISIONS * y).astype(int)
        period = RectangleIndex.l_count(n)
        count = np.zeros(z.size, int)
        total = np.zeros(z.size)
        for dk in range(-3, 4):
            k = kx + dk
            ok = (k >= 0) & (k < N_K)
            for dl in range(-3, 4):
                l = np.mod(ly + dl, period)
                v = np.where(ok, x_profile(np.clip(k, 0, N_K - 1), x), 0.0)
                v = v * bump(np.mod(Y_DIVISIONS * y - l, period))
                count += v > 0
                total += v
        grads = [tilde_alpha_c1_norm(RectangleIndex(k, 3, n)) / 2**n for k in (0, 15, N_K - 1)]
        comp_a, comp_c = [], []
        for _ in range(regularity_samples):
            idx = RectangleIndex(int(rng.integers(0, N_K)), int(rng.integers(0, period)), n)
            xs = (idx.k + rng.uniform(0.05, 1.95)) / X_DIVISIONS
            ys = (idx.l + rng.uniform(0.05, 1.95)) / Y_DIVISIONS
            c = complex(strip_to_annulus(xs, ys, n))
            beta = rng.uniform(0, 2 * np.pi)
            norms = composed_regularity_check(idx, MobiusTransform(-np.exp(-1j * beta) * c, beta), per_side=12)
            comp_a.append(norms["alpha"])
            comp_c.append(norms["chi"])
        rows.append(
            {
                "n": n,
                "sum_error": float(np.abs(total - 1).max()),
                "max_overlap": int(count.max()),
                "gradient_ratio_min": float(min(grads)),
                "gradient_ratio_max": float(max(grads)),
                "composed_alpha_max": float(max(comp_a)) if comp_a else 0.0,
                "composed_chi_max": float(max(comp_c)) if comp_c else 0.0,
            }
        )
    return rows

"""Closed-form geometry of the Poincare disk.

The disk carries the metric ``|dz| / (1 - |z|^2)``, so the distance from the
origin is ``atanh(|a|)``.  Automorphisms are stored as ``(a, beta)`` with
``phi(z) = exp(i beta) (z - a) / (1 - conj(a) z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NumericalCheckError

__all__ = [
    "psi",
    "poincare_density",
    "poincare_distance",
    "annulus_index",
    "annulus_bounds",
    "strip_to_annulus",
    "annulus_to_strip",
    "mobius_apply",
    "mobius_derivative",
    "MobiusTransform",
    "verify_disk_lemmas",
    "DiskLemmaReport",
    "LemmaCheck",
]


def _check_in_disk(z, name="z"):
    z = np.asarray(z)
    if np.any(~np.isfinite(z)) or np.any(np.abs(z) >= 1.0):
        raise DomainError(f"{name} must lie in the open unit disk")
    return z


def psi(z):
    """``log(1 - |z|^2)``; the Poincare density is ``exp(-psi)``."""
    z = _check_in_disk(z)
    r2 = np.abs(z) ** 2
    return np.log1p(-r2)


def poincare_density(z):
    """``exp(-psi(z)) = 1 / (1 - |z|^2)``."""
    z = _check_in_disk(z)
    return 1.0 / (1.0 - np.abs(z) ** 2)


def pseudo_distance(z, w):
    """``|z - w| / |1 - conj(w) z|``, the Mobius-invariant chordal quantity."""
    return np.abs(z - w) / np.abs(1 - np.conj(w) * z)


def poincare_distance(z, w):
    """Poincare distance; ``d(0, a) = 1/2 log((1+|a|)/(1-|a|))``.

    General pairs are reduced to the origin by the automorphism sending ``w``
    to 0, which leaves the distance unchanged.
    """
    z = _check_in_disk(z, "z")
    w = _check_in_disk(w, "w")
    rho = pseudo_distance(z, w)
    return np.arctanh(np.minimum(rho, 1.0))


def annulus_bounds(n):
    """Return ``(inner, outer)`` radii of ``A_n``; ``inner`` is included."""
    if n < 0:
        raise DomainError("annulus index must be non-negative")
    return 1.0 - 0.5**n, 1.0 - 0.5 ** (n + 1)


def _annulus_index_scalar(r):
    if r == 0.0:
        return 0
    n = max(int(math.floor(-math.log2(1.0 - r))), 0)
    while n > 0 and r < 1.0 - 0.5**n:
        n -= 1
    while r >= 1.0 - 0.5 ** (n + 1):
        n += 1
    return n


def annulus_index(z):
    """Index ``n`` with ``1 - 2^-n <= |z| < 1 - 2^-(n+1)``.

    Returns an int for scalar input and an integer array otherwise.
    """
    z = _check_in_disk(z)
    r = np.abs(z)
    if r.ndim == 0:
        return _annulus_index_scalar(float(r))
    out = np.floor(-np.log2(1.0 - r)).astype(np.int64)
    out = np.maximum(out, 0)
    # exact fix-up at the dyadic boundaries
    low = r < 1.0 - 0.5**out.astype(float)
    out = np.where(low & (out > 0), out - 1, out)
    high = r >= 1.0 - 0.5 ** (out + 1).astype(float)
    out = np.where(high, out + 1, out)
    return out


def strip_to_annulus(x, y, n):
    """The strip map ``f_n``: ``(x, y) -> (1 - 2^-n + x 2^-(n+1)) exp(2 pi i y 2^-(n+1))``."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("strip coordinate x must lie in (0, 1)")
    scale = 0.5 ** (n + 1)
    radius = 1.0 - 0.5**n + x * scale
    return radius * np.exp(2j * np.pi * np.asarray(y, dtype=float) * scale)


def annulus_to_strip(z, n):
    """Inverse of :func:`strip_to_annulus`; ``y`` is returned in ``[0, 2^(n+1))``."""
    z = _check_in_disk(z)
    period = 2.0 ** (n + 1)
    x = (np.abs(z) - 1.0 + 0.5**n) * period
    y = np.mod(np.angle(z) / (2 * np.pi) * period, period)
    return x, y


def mobius_apply(a, beta, z):
    """Vectorised ``exp(i beta) (z - a) / (1 - conj(a) z)``."""
    rot = np.exp(1j * np.asarray(beta))
    return rot * (z - a) / (1 - np.conj(a) * z)


def mobius_derivative(a, beta, z):
    """Vectorised ``exp(i beta) (1 - |a|^2) / (1 - conj(a) z)^2``."""
    rot = np.exp(1j * np.asarray(beta))
    return rot * (1 - np.abs(a) ** 2) / (1 - np.conj(a) * z) ** 2


@dataclass(frozen=True)
class MobiusTransform:
    """A holomorphic automorphism of the unit disk.

    ``a`` is the zero of the map and ``beta`` the rotation angle in
    ``[0, 2 pi)``.  Composition goes through the SU(1,1) matrix.
    """

    a: complex = 0j
    beta: float = 0.0

    def __post_init__(self):
        a = complex(self.a)
        if not abs(a) < 1.0:
            raise DomainError("Mobius parameter a must satisfy |a| < 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", float(self.beta) % (2 * math.pi))

    @classmethod
    def identity(cls):
        return cls(0j, 0.0)

    @classmethod
    def sending_to_origin(cls, z0):
        """The transform ``z -> (z - z0) / (1 - conj(z0) z)``."""
        return cls(complex(z0), 0.0)

    @classmethod
    def centered_at(cls, c):
        """The transform ``xi -> (xi + c) / (1 + conj(c) xi)`` sending 0 to ``c``."""
        return cls(-complex(c), 0.0)

    @classmethod
    def from_matrix(cls, m):
        """Build from ``[[A, B], [C, D]]`` acting by ``(A z + B) / (C z + D)``."""
        A, B = complex(m[0][0]), complex(m[0][1])
        D = complex(m[1][1])
        return cls(-B / A, math.atan2((A / D).imag, (A / D).real))

    def matrix(self):
        """SU(1,1) representative."""
        half = np.exp(0.5j * self.beta)
        s = 1.0 / math.sqrt(1.0 - abs(self.a) ** 2)
        return s * np.array(
            [[half, -self.a * half], [-np.conj(self.a) / half, 1.0 / half]]
        )

    def __call__(self, z):
        return mobius_apply(self.a, self.beta, z)

    def derivative(self, z):
        return mobius_derivative(self.a, self.beta, z)

    @property
    def center(self):
        """``phi(0)``."""
        return -np.exp(1j * self.beta) * self.a

    def compose(self, other):
        """``self o other``."""
        if not isinstance(other, MobiusTransform):
            raise TypeError("can only compose with another MobiusTransform")
        return MobiusTransform.from_matrix(self.matrix() @ other.matrix())

    def inverse(self):
        # phi^{-1}(w) = (w + a e^{i beta}) / (e^{i beta} + conj(a) w)
        rot = np.exp(1j * self.beta)
        return MobiusTransform(-self.a * rot, -self.beta)

    def boundary_angle(self, t):
        """Action on the circle: the angle of ``phi(exp(i t))``."""
        return np.mod(np.angle(self(np.exp(1j * np.asarray(t)))), 2 * np.pi)

    def boundary_speed(self, t):
        """``|phi'(exp(i t))|``, the derivative of :meth:`boundary_angle`."""
        return np.abs(self.derivative(np.exp(1j * np.asarray(t))))


# --------------------------------------------------------------------------
# seeded verification of the automorphism lemmas


@dataclass
class LemmaCheck:
    name: str
    n_checked: int = 0
    n_violations: int = 0
    worst_ratio: float = 0.0
    witness: dict | None = None

    @property
    def passed(self):
        return self.n_violations == 0

    def update(self, ratio, witness_fn, tol):
        ratio = np.asarray(ratio, dtype=float)
        self.n_checked += ratio.size
        if ratio.size == 0:
            return
        flat = ratio.ravel()
        i = int(np.argmax(flat))
        if flat[i] > self.worst_ratio:
            self.worst_ratio = float(flat[i])
        bad = flat > 1.0 + tol
        nbad = int(bad.sum())
        if nbad and self.witness is None:
            self.witness = witness_fn(int(np.flatnonzero(bad)[0]))
        self.n_violations += nbad


@dataclass
class DiskLemmaReport:
    checks: dict
    lemma_constants: dict
    sample_count: int
    seed: int
    n_max: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def raise_for_violations(self):
        for c in self.checks.values():
            if not c.passed:
                raise NumericalCheckError(
                    f"{c.name}: {c.n_violations} violations", witness=c.witness
                )

    def to_dict(self):
        return {
            "sample_count": self.sample_count,
            "seed": self.seed,
            "n_max": self.n_max,
            "checks": {
                k: {
                    "n_checked": c.n_checked,
                    "n_violations": c.n_violations,
                    "worst_ratio": c.worst_ratio,
                    "witness": c.witness,
                }
                for k, c in self.checks.items()
            },
            "lemma_constants": {str(k): v for k, v in self.lemma_constants.items()},
        }


def _sample_centers(rng, count, n_max):
    """Sample ``phi(0)`` uniformly in strip coordinates of a random ``A_n``."""
    n = rng.integers(0, n_max + 1, size=count)
    x = rng.uniform(0.0, 1.0, size=count)
    x = np.clip(x, 1e-12, 1 - 1e-12)
    y = rng.uniform(0.0, 1.0, size=count) * 2.0 ** (n + 1)
    scale = 0.5 ** (n + 1)
    c = (1.0 - 0.5**n + x * scale) * np.exp(2j * np.pi * y * scale)
    beta = rng.uniform(0.0, 2 * np.pi, size=count)
    a = -np.exp(-1j * beta) * c
    return n, a, beta


def _sample_disk(rng, count, radius=1.0):
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=count))
    return r * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=count))


def verify_disk_lemmas(
    sample_count=100_000,
    seed=0,
    n_max=10,
    distortion_radii=(0.25, 0.5, 0.75),
    boundary_points=256,
    tol=1e-12,
):
    """Check the automorphism lemmas on seeded random instances.

    Each inequality ``lhs <= rhs`` is recorded as the ratio ``lhs / rhs``; a
    sample violates when the ratio exceeds ``1 + tol``.  The identities
    (Schwarz-Pick, invariance of the distance) are evaluated in extended
    precision with ``z`` drawn from ``|z| < 0.99`` so that ``1 - |phi(z)|^2``
    stays well conditioned.
    """
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    rng = np.random.default_rng(seed)
    checks = {
        name: LemmaCheck(name)
        for name in (
            "annulus_i",
            "annulus_ii",
            "annulus_iii",
            "schwarz_pick",
            "distance_invariance",
            "lemma_psi_aut",
            "lemma_cover",
            "lemma_derivative_upper",
            "lemma_derivative_r",
            "lemma_mean_value",
            "lemma_mean_value_chord",
        )
    }
    N = sample_count

    def wit(n, a, beta, z):
        return lambda i: {
            "n": int(n[i]),
            "a": [float(a[i].real), float(a[i].imag)],
            "beta": float(beta[i]),
            "zeta": [float(np.real(z[i])), float(np.imag(z[i]))],
        }

    # annulus facts for a in A_n
    n, a, beta = _sample_centers(rng, N, n_max)
    r2 = np.abs(a) ** 2
    w = wit(n, a, beta, a)
    checks["annulus_i"].update(
        np.maximum(0.5 ** (n + 1) / (1 - r2), (1 - r2) / 0.5 ** (n - 1)), w, tol
    )
    checks["annulus_ii"].update(
        np.maximum(2.0 ** (n - 1) * (1 - r2), 1 / ((1 - r2) * 2.0 ** (n + 1))), w, tol
    )
    checks["annulus_iii"].update(np.arctanh(np.abs(a)) / (n + 2), w, tol)

    # identities in extended precision
    n, a, beta = _sample_centers(rng, N, n_max)
    z = _sample_disk(rng, N, 0.99)
    zl = z.astype(np.clongdouble)
    al = a.astype(np.clongdouble)
    rot = np.exp(1j * beta.astype(np.longdouble))
    phi = rot * (zl - al) / (1 - np.conj(al) * zl)
    dphi = rot * (1 - np.abs(al) ** 2) / (1 - np.conj(al) * zl) ** 2
    lhs = np.abs(dphi) * (1 - np.abs(zl) ** 2)
    rhs = 1 - np.abs(phi) ** 2
    checks["schwarz_pick"].update(1.0 + np.abs(lhs - rhs) / rhs, wit(n, a, beta, z), tol)
    z2 = _sample_disk(rng, N, 0.99).astype(np.clongdouble)
    phi2 = rot * (z2 - al) / (1 - np.conj(al) * z2)

    def dist(p, q):
        return np.arctanh(np.abs(p - q) / np.abs(1 - np.conj(q) * p))

    d0 = dist(zl, z2)
    d1 = dist(phi, phi2)
    checks["distance_invariance"].update(
        1.0 + np.abs(d1 - d0) / np.maximum(d0, 1e-300), wit(n, a, beta, z), tol
    )

    # psi-aut lemma on the whole disk
    n, a, beta = _sample_centers(rng, N, n_max)
    z = _sample_disk(rng, N)
    phi = mobius_apply(a, beta, z)
    ratio = (1 / (1 - np.abs(phi) ** 2)) / (2.0 ** (n + 3) / (1 - np.abs(z) ** 2))
    checks["lemma_psi_aut"].update(ratio, wit(n, a, beta, z), tol)

    # derivative upper bound on the whole disk
    ratio = np.abs(mobius_derivative(a, beta, z)) / 2.0 ** (n + 2)
    checks["lemma_derivative_upper"].update(ratio, wit(n, a, beta, z), tol)

    # covering lemma: boundary circle of the small disk maps into D_{2^-k}
    n, a, beta = _sample_centers(rng, N, n_max)
    k = rng.integers(1, 7, size=N)
    theta = 2 * np.pi * np.arange(boundary_points) / boundary_points
    circle = np.exp(1j * theta)
    chunk = 4096
    for s in range(0, N, chunk):
        sl = slice(s, s + chunk)
        center = -np.exp(1j * beta[sl]) * a[sl]
        rad = 0.5 ** (n[sl] + k[sl] + 3)
        pts = center[:, None] + rad[:, None] * circle[None, :]
        # phi^{-1}(w) = (w + a e^{i beta}) / (e^{i beta} + conj(a) w)
        e = np.exp(1j * beta[sl])[:, None]
        pre = (pts + a[sl, None] * e) / (e + np.conj(a[sl, None]) * pts)
        ratio = np.abs(pre).max(axis=1) / 0.5 ** k[sl]
        idx = np.arange(s, min(s + chunk, N))
        checks["lemma_cover"].update(
            ratio, lambda i, idx=idx: {**wit(n, a, beta, a)(idx[i]), "k": int(k[idx[i]])}, tol
        )

    # derivative and mean value bounds on D_r
    n, a, beta = _sample_centers(rng, N, n_max)
    r = rng.uniform(0.0, 1.0, size=N)
    z = r * np.sqrt(rng.uniform(0, 1, size=N)) * np.exp(2j * np.pi * rng.uniform(0, 1, size=N))
    bound_d = (1 - r) ** -2 * 0.5 ** (n - 1)
    checks["lemma_derivative_r"].update(
        np.abs(mobius_derivative(a, beta, z)) / bound_d, wit(n, a, beta, z), tol
    )
    phi = mobius_apply(a, beta, z)
    lower = 1 - 0.5**n * (1 + 2 * r / (1 - r) ** 2)
    # |phi(z)| >= lower  <=>  lower / |phi| <= 1 (trivial when lower <= 0)
    ratio = np.where(lower > 0, lower / np.abs(phi), 0.0)
    checks["lemma_mean_value"].update(ratio, wit(n, a, beta, z), tol)
    chord = np.abs(phi - mobius_apply(a, beta, 0.0)) / (np.abs(z) * bound_d)
    checks["lemma_mean_value_chord"].update(
        np.where(np.abs(z) > 0, chord, 0.0), wit(n, a, beta, z), tol
    )

    # empirical constant for exp(-psi(phi(z))) >= c 2^n on D_r
    constants = {}
    for rr in distortion_radii:
        n, a, beta = _sample_centers(rng, N, n_max)
        z = rr * np.sqrt(rng.uniform(0, 1, size=N)) * np.exp(
            2j * np.pi * rng.uniform(0, 1, size=N)
        )
        phi = mobius_apply(a, beta, z)
        constants[float(rr)] = float(np.min(1 / (1 - np.abs(phi) ** 2) / 2.0**n))

    return DiskLemmaReport(checks, constants, sample_count, seed, n_max)

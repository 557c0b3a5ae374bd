"""Equivariant leafwise solutions on the suspension by summing over deck elements.

The right-hand side on the leaf through ``t`` is the lift of one radial bump
``B`` placed at the orbit origin, modulated transversally:

    v_t = sum_g mod(act(g^-1, t)) * g_* B,    mod(tau) = 1 + A cos(tau - phase).

Deck elements act isometrically and the bundle ``K^(m/2)`` makes the weight
``(1-|z|^2)^m`` invariant, so every recentred piece is a multiple of ``B`` and
its minimal solution is the same ``U*`` times the modulation.  The leaf
solution is ``u_t = sum_g mod(act(g^-1, t)) * g_* U*``.

On the evaluation disk ``D_r`` every piece except the identity is holomorphic
(the bump images sit near the boundary), so those pieces are stored as
Taylor coefficients on ``D_r``; the identity piece is kept on the grid.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dbar import WeightSpec, dbar_field, minimal_solution, polyval
from .exceptions import ConfigError, DomainError, NumericalCheckError
from .fuchsian import (
    SuspensionModel,
    circle_distance,
    enumerate_deck,
    invert_word,
    octagon_generators,
)
from .grid import Grid, GridField
from .hyperbolic import psi

TAYLOR_RADIUS = 0.7
TAYLOR_SAMPLES = 256
TAYLOR_TERMS = 96


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that determines a family of leaf solutions."""

    action: str = "rotation"
    angles: tuple = (1.0, math.sqrt(2.0), math.sqrt(3.0), math.sqrt(5.0))
    m: int = 6
    s: int = 5
    bump_radius: float = 0.2
    kobayashi_radius: float = 0.25
    amplitude: float = 0.5
    phase: float = 0.0
    scale: float = 1.0
    n_max: int = 8
    word_cap: int = 12
    h: float = 1 / 256
    radius: float = 0.5
    degree: int = 24
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        self.validate()

    def validate(self):
        if self.action not in ("rotation", "boundary"):
            raise ConfigError(f"unknown action {self.action!r}")
        if not self.m > self.s:
            raise ConfigError(f"need m > s (m={self.m}, s={self.s})")
        if not 4 * self.m > 20:
            raise ConfigError(f"need curvature 4m > 20 (m={self.m})")
        if not 0 < self.bump_radius < 1:
            raise ConfigError("bump radius must lie in (0, 1)")
        if math.atanh(self.bump_radius) > self.kobayashi_radius:
            raise ConfigError(
                f"bump of Euclidean radius {self.bump_radius} exceeds the Kobayashi radius {self.kobayashi_radius}"
            )
        if self.n_max < 1:
            raise ConfigError("truncation N must be >= 1")
        if self.word_cap < 0:
            raise ConfigError("word cap must be >= 0")
        if not 0 < self.radius < TAYLOR_RADIUS:
            raise ConfigError(f"evaluation radius must lie in (0, {TAYLOR_RADIUS})")
        if not self.h > 0:
            raise ConfigError("grid spacing must be positive")

    @property
    def weight(self):
        return WeightSpec(self.m, self.s)

    def model(self):
        return SuspensionModel(octagon_generators(), self.action, self.angles)

    def modulation(self, tau):
        return self.scale * (1.0 + self.amplitude * np.cos(np.asarray(tau) - self.phase))

    def modulation_derivative(self, tau):
        return -self.scale * self.amplitude * np.sin(np.asarray(tau) - self.phase)

    def bump(self, z):
        q = np.abs(np.asarray(z)) ** 2 / self.bump_radius**2
        return np.where(q < 1, (1 - q) ** 2, 0.0).astype(complex)

    def to_dict(self):
        d = asdict(self)
        d["angles"] = list(self.angles)
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ProblemSpec(**d)


def corpus(size=20, seed=0):
    """Seeded family of problem instances (transversal point, bump, modulation, angles)."""
    out = []
    for i in range(size):
        rng = np.random.default_rng([seed, i])
        spec = ProblemSpec(
            angles=tuple(rng.uniform(0.3, 3.0, 4)),
            bump_radius=float(rng.uniform(0.1, 0.2)),
            amplitude=float(rng.uniform(0.2, 0.8)),
            phase=float(rng.uniform(0, 2 * np.pi)),
            seed=seed * 1000 + i,
        )
        out.append((spec, float(rng.uniform(0, 2 * np.pi))))
    return out


def _disk_moments(terms, r, m):
    """``int_{|z|<r} |z|^(2j) (1-|z|^2)^m dA`` for ``j < terms``."""
    x, wx = np.polynomial.legendre.leggauss(64)
    rr = 0.5 * r * (x + 1)
    base = 2 * np.pi * 0.5 * r * wx * rr * (1 - rr * rr) ** m
    return np.array([np.sum(base * rr ** (2 * j)) for j in range(terms)])


@dataclass
class LeafSolution:
    t: float
    u: GridField
    annulus_norms: dict
    truncation: int
    tail_bound: float
    residual: float
    config_hash: str

    def to_dict(self):
        return {
            "t": self.t,
            "truncation": self.truncation,
            "annulus_norms": {str(k): v for k, v in self.annulus_norms.items()},
            "tail_bound": self.tail_bound,
            "residual": self.residual,
            "spec_hash": self.config_hash,
        }


@dataclass
class ConstantsReport:
    c1: float
    c2: float
    c3: float
    c4: float
    k: int
    s: int
    hormander_ratio: float
    hormander_constant: float
    c1_by_annulus: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    @property
    def tail_coefficient(self):
        return 4 * self.c1 * self.c2 * self.c4 * self.c3 ** (-self.s / 2)

    def predicted_tail(self, N, n_last=None):
        """``coefficient * sum_{N < n <= n_last} (1/2)^(n(s-4)/2)`` (infinite if ``n_last`` is None)."""
        q = 0.5 ** ((self.s - 4) / 2)
        if n_last is None:
            return self.tail_coefficient * q ** (N + 1) / (1 - q)
        return self.tail_coefficient * sum(q**n for n in range(N + 1, n_last + 1))

    def to_dict(self):
        d = asdict(self)
        d["tail_coefficient"] = self.tail_coefficient
        d["c1_by_annulus"] = {str(k): v for k, v in self.c1_by_annulus.items()}
        d["counts"] = {str(k): v for k, v in self.counts.items()}
        return d


class DeckSumSolver(BaseEstimator):
    """Estimator wrapper: ``fit`` prepares the deck pieces, ``transform`` solves leaves.

    ``transform(T)`` returns the leaf solutions at transversal points ``T``
    as rows of grid values on ``D_r`` (cells inside the disk, row-major).
    """

    def __init__(
        self,
        action="rotation",
        angles=(1.0, math.sqrt(2.0), math.sqrt(3.0), math.sqrt(5.0)),
        m=6,
        s=5,
        bump_radius=0.2,
        kobayashi_radius=0.25,
        amplitude=0.5,
        phase=0.0,
        scale=1.0,
        n_max=8,
        word_cap=12,
        h=1 / 256,
        radius=0.5,
        degree=24,
        seed=0,
        threads=1,
    ):
        self.action = action
        self.angles = angles
        self.m = m
        self.s = s
        self.bump_radius = bump_radius
        self.kobayashi_radius = kobayashi_radius
        self.amplitude = amplitude
        self.phase = phase
        self.scale = scale
        self.n_max = n_max
        self.word_cap = word_cap
        self.h = h
        self.radius = radius
        self.degree = degree
        self.seed = seed
        self.threads = threads

    @classmethod
    def from_spec(cls, spec, threads=1):
        return cls(**spec.to_dict(), threads=threads)

    @property
    def spec(self):
        params = self.get_params()
        params.pop("threads")
        return ProblemSpec(**params)

    # preparation -----------------------------------------------------------

    def fit(self, X=None, y=None):
        spec = self.spec
        self.spec_ = spec
        self.model_ = spec.model()
        self.enumeration_ = enumerate_deck(self.model_.group, spec.word_cap, spec.n_max)
        self.elements_ = list(self.enumeration_)
        if self.elements_[0].word != "":
            raise NumericalCheckError("enumeration must start with the identity")
        self.inverse_words_ = [invert_word(e.word) for e in self.elements_]
        self.weight_ = spec.weight
        h = spec.h
        local = Grid(h, spec.bump_radius + 8 * h)
        self.rhs_ = local.sample(spec.bump, "form")
        self.unit_solution_ = minimal_solution(self.rhs_, self.weight_, spec.degree, "radial", 1.0)
        self.grid_ = Grid(h, spec.radius)
        self.q_ = self.weight_.m / 2
        self._check_supports()
        g = self.grid_
        self.identity_values_ = self.unit_solution_(g.z) * g.mask
        self.identity_rhs_ = spec.bump(g.z) * g.mask
        others = self.elements_[1:]
        if self.threads and self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                coeffs = list(pool.map(self._taylor, others))
        else:
            coeffs = [self._taylor(e) for e in others]
        self.taylor_ = np.array(coeffs).reshape(len(others), TAYLOR_TERMS)
        self.annulus_of_ = np.array([e.n for e in others], dtype=int)
        self.moments_ = _disk_moments(TAYLOR_TERMS, spec.radius, self.weight_.m)
        return self

    def _check_supports(self):
        # every non-identity bump image must stay clear of the Taylor circle
        th = 2 * np.pi * np.arange(64) / 64
        circle = self.spec.bump_radius * np.exp(1j * th)
        worst = np.inf
        for e in self.elements_[1:]:
            worst = min(worst, float(np.abs(e.transform(circle)).min()))
        self.closest_support_ = worst
        if worst <= TAYLOR_RADIUS + 0.05:
            raise DomainError(f"a deck image of the bump reaches |z| = {worst:.3f}, too close to D_r")

    def piece(self, element, z):
        """``g_* U*`` at points ``z``."""
        inv = element.transform.inverse()
        z = np.asarray(z, dtype=complex)
        return self.unit_solution_(inv(z)) * inv.derivative(z) ** self.q_

    def _taylor(self, element):
        th = 2 * np.pi * np.arange(TAYLOR_SAMPLES) / TAYLOR_SAMPLES
        vals = self.piece(element, TAYLOR_RADIUS * np.exp(1j * th))
        c = np.fft.fft(vals)[:TAYLOR_TERMS] / TAYLOR_SAMPLES
        return c / TAYLOR_RADIUS ** np.arange(TAYLOR_TERMS)

    # modulation ------------------------------------------------------------

    def _params(self, t):
        """Transversal parameter ``act(g^-1, t)`` of every enumerated piece."""
        return np.array([float(self.model_.act(w, t)) for w in self.inverse_words_])

    def coefficients(self, t, derivative=False):
        """Scalar weight of every piece at ``t`` (or its ``t``-derivative)."""
        tau = self._params(t)
        if not derivative:
            return self.spec_.modulation(tau)
        speed = np.array([float(self.model_.action_speed(w, t)) for w in self.inverse_words_])
        return self.spec_.modulation_derivative(tau) * speed

    def _mask(self, N):
        return self.annulus_of_ <= N

    def _holomorphic(self, coef, N):
        sel = self._mask(N)
        return coef[1:][sel] @ self.taylor_[sel]

    def _field(self, coef, N):
        g = self.grid_
        vals = coef[0] * self.identity_values_ + polyval(self._holomorphic(coef, N), g.z) * g.mask
        return GridField(g, vals, "section")

    def _hol_norm(self, c):
        return math.sqrt(float(np.sum(np.abs(c) ** 2 * self.moments_)))

    def weighted_norm(self, f):
        return f.norm(self.weight_.sigma_density(f.grid.z))

    # solving ---------------------------------------------------------------

    def annulus_norms(self, t, N=None, derivative=False):
        """``||sum_{g in E_n} piece_g||`` on ``D_r`` for every annulus ``n <= N``."""
        check_is_fitted(self, "taylor_")
        N = self.spec_.n_max if N is None else N
        coef = self.coefficients(t, derivative)
        out = {0: self.weighted_norm(GridField(self.grid_, coef[0] * self.identity_values_))}
        for n in range(1, N + 1):
            sel = self.annulus_of_ == n
            out[n] = self._hol_norm(coef[1:][sel] @ self.taylor_[sel]) if np.any(sel) else 0.0
        return out

    def solve(self, t, N=None, constants=None):
        """Leaf solution at ``t`` truncated at annulus ``N``."""
        check_is_fitted(self, "taylor_")
        spec = self.spec_
        N = spec.n_max if N is None else int(N)
        if not 1 <= N <= spec.n_max:
            raise ConfigError(f"truncation must lie in [1, {spec.n_max}]")
        coef = self.coefficients(t)
        u = self._field(coef, N)
        norms = self.annulus_norms(t, N)
        _check_convergence(norms)
        tail = constants.predicted_tail(N) if constants is not None else float("nan")
        return LeafSolution(float(t), u, norms, N, tail, self.residual(t, u, coef), spec.config_hash())

    def rhs(self, t):
        """``v_t`` on ``D_r``; only the identity piece reaches the evaluation disk."""
        coef = self.coefficients(t)
        return GridField(self.grid_, coef[0] * self.identity_rhs_, "form")

    def residual(self, t, u=None, coef=None):
        """``||dbar u_t - v_t|| / ||v_t||`` on the interior of ``D_r`` (weight ``(1-|z|^2)^m``)."""
        if coef is None:
            coef = self.coefficients(t)
        if u is None:
            u = self._field(coef, self.spec_.n_max)
        g = self.grid_
        v = coef[0] * self.identity_rhs_
        d = dbar_field(u)
        region = g.mask & (np.abs(g.z) < g.rho_max - 2 * g.h) & np.isfinite(d)
        w = self.weight_.sigma_density(g.z)
        num = np.sum(np.abs(d[region] - v[region]) ** 2 * w[region])
        den = np.sum(np.abs(v[region]) ** 2 * w[region])
        return float(math.sqrt(num / den)) if den > 0 else float(math.sqrt(num))

    def transform(self, T):
        check_is_fitted(self, "taylor_")
        T = np.atleast_1d(np.asarray(T, dtype=float))
        if not np.all(np.isfinite(T)):
            raise DomainError("transversal points must be finite")
        return np.stack([self._field(self.coefficients(t), self.spec_.n_max).values[self.grid_.mask] for t in T])

    def predict(self, T):
        return self.transform(T)

    # pieces ------------------------------------------------------------------

    def localize_rhs(self, t, element):
        """The recentred piece ``g^* v_t`` near ``g(0)``: the bump at parameter ``act(g^-1, t)``."""
        check_is_fitted(self, "taylor_")
        tau = float(self.model_.base_point_shift(element.word, t))
        v = self.rhs_ * complex(self.spec_.modulation(tau))
        limit = math.tanh(self.spec_.kobayashi_radius)
        if v.support_radius > limit + v.grid.h:
            raise DomainError("localized piece leaks outside the Kobayashi disk")
        return v

    def piece_norm(self, element):
        """``||g_* U*||`` on ``D_r`` (unit modulation)."""
        if element.word == "":
            return self.weighted_norm(GridField(self.grid_, self.identity_values_))
        i = self.elements_.index(element) - 1
        return self._hol_norm(self.taylor_[i])

    # checks ------------------------------------------------------------------

    def evaluate(self, t, z, N=None):
        """Truncated ``u_t`` at arbitrary points by direct summation over pieces."""
        N = self.spec_.n_max if N is None else N
        coef = self.coefficients(t)
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c, e in zip(coef, self.elements_):
            if e.n <= N:
                out = out + c * self.piece(e, z)
        return out

    def equivariance_defect(self, t, word, N=None, n_r=24, n_theta=96):
        """``||u_t - w^* u_{act(w,t)}|| / ||u_t||`` on ``D_r`` at matched truncation ``N``."""
        check_is_fitted(self, "taylor_")
        N = self.spec_.n_max if N is None else N
        if not 1 <= N <= self.spec_.n_max:
            raise ConfigError("truncation mismatch: both solves must use N <= the fitted cap")
        if word == "":
            return 0.0
        w = self.model_.group.word_transform(word)
        t2 = float(self.model_.act(word, t))
        z, wq = _disk_quadrature(self.spec_.bump_radius, self.spec_.radius, n_r, n_theta)
        wq = wq * self.weight_.sigma_density(z)
        lhs = self.evaluate(t, z, N)
        rhs = self.evaluate(t2, w(z), N) * w.derivative(z) ** self.q_
        num = math.sqrt(float(np.sum(np.abs(lhs - rhs) ** 2 * wq)))
        den = math.sqrt(float(np.sum(np.abs(lhs) ** 2 * wq)))
        return num / den

    def lipschitz_profile(self, t1, t2):
        """Per-annulus envelope of ``||u_{g,t2} - u_{g,t1}|| / d0(t1, t2)``."""
        check_is_fitted(self, "taylor_")
        k = self.distortion_exponent()
        if not self.spec_.s > 2 * (k + 1):
            raise ConfigError(f"s <= 2(k+1) for {self.spec_.action} action (s={self.spec_.s}, k={k})")
        d0 = float(circle_distance(t1, t2))
        if d0 == 0:
            raise DomainError("t1 and t2 must differ")
        dm = np.abs(self.coefficients(t2) - self.coefficients(t1))
        env = {}
        for c, e in zip(dm, self.elements_):
            r = float(c * self.piece_norm(e) / d0)
            env[e.n] = max(env.get(e.n, 0.0), r)
        return env

    def lipschitz_constant(self, t1, t2):
        """``||u_{t2} - u_{t1}|| / d0(t1, t2)`` for the full truncated sum."""
        d0 = float(circle_distance(t1, t2))
        if d0 == 0:
            raise DomainError("t1 and t2 must differ")
        N = self.spec_.n_max
        diff = self._field(self.coefficients(t2), N) - self._field(self.coefficients(t1), N)
        return self.weighted_norm(diff) / d0

    def derivative_defects(self, t, deltas):
        """``||(u_{t+d} - u_{t-d}) / 2d - u'_t||`` where ``u'_t`` solves the differentiated data."""
        N = self.spec_.n_max
        exact = self._field(self.coefficients(t, derivative=True), N)
        scale = self.weighted_norm(exact)
        out = []
        for d in deltas:
            fd = (self._field(self.coefficients(t + d), N) - self._field(self.coefficients(t - d), N)) * (1 / (2 * d))
            out.append(self.weighted_norm(fd - exact))
        return np.array(out), scale

    def distortion_exponent(self):
        if not hasattr(self, "distortion_"):
            self.distortion_ = self.model_.fit_distortion_exponent(self.elements_, samples=32, seed=self.spec_.seed)
        return self.distortion_

    def measure_constants(self, samples=500):
        """Assemble ``c1 .. c4`` and ``k`` for the tail estimate."""
        check_is_fitted(self, "taylor_")
        spec = self.spec_
        rng = np.random.default_rng(spec.seed)
        wdens = self.weight_.density(self.rhs_.grid.z)
        base = self.rhs_.norm(wdens)
        # stratified over non-empty annuli so that every annulus is probed
        groups = {}
        for e in self.elements_:
            groups.setdefault(e.n, []).append(e)
        by_n = {}
        per = max(samples // len(groups), 1)
        for n in sorted(groups):
            members = groups[n]
            picks = rng.integers(0, len(members), per)
            ts = rng.uniform(0, 2 * np.pi, per)
            vals = [abs(float(spec.modulation(self.model_.base_point_shift(members[i].word, t)))) for i, t in zip(picks, ts)]
            by_n[n] = max(vals) * base
        # the sup over t of the modulation is attained exactly
        c1 = abs(spec.scale) * (1 + abs(spec.amplitude)) * base
        u_norm = self.unit_solution_norm()
        c2 = u_norm / base if base > 0 else 0.0
        th = 2 * np.pi * np.arange(256) / 256
        circle = spec.radius * np.exp(1j * th)
        c3 = np.inf
        for e in self.elements_:
            zeta = e.transform(circle)
            c3 = min(c3, float(np.min(np.exp(-psi(zeta)))) / 2.0**e.n)
        counts = dict(self.enumeration_.counts)
        c4 = max(c / 2.0**n for n, c in counts.items())
        return ConstantsReport(
            c1=float(c1),
            c2=float(c2),
            c3=float(c3),
            c4=float(c4),
            k=int(self.distortion_exponent()),
            s=spec.s,
            hormander_ratio=float(c2**2),
            hormander_constant=self.weight_.hormander_constant,
            c1_by_annulus=by_n,
            counts=counts,
        )

    def unit_solution_norm(self):
        """``||U*||`` in ``(1-|xi|^2)^(m-s)`` over the whole disk."""
        sol = self.unit_solution_
        g = sol.grid
        inside = sol.field().integral(self.weight_.density(g.z))
        R = g.rho_max
        outside = 0.0
        for k, mk in enumerate(sol.moments):
            if mk != 0:
                outside += abs(mk) ** 2 * self.weight_.radial_moment(-k - 1, R, 1.0)
        for j, cj in enumerate(sol.coeffs):
            outside += abs(cj) ** 2 * self.weight_.radial_moment(j, R, 1.0)
        return math.sqrt(inside + outside)


def _check_convergence(norms):
    vals = [v for n, v in sorted(norms.items()) if n >= 1 and v > 0]
    rises = 0
    for a, b in zip(vals[:-1], vals[1:]):
        rises = rises + 1 if b > a else 0
        if rises >= 3:
            raise NumericalCheckError("partial sums fail to converge: norm rose across 3 consecutive annuli", norms)


def _disk_quadrature(a, r, n_r, n_theta):
    from .grid import polar_quadrature

    z1, w1 = polar_quadrature(0.0, a, n_r, n_theta)
    z2, w2 = polar_quadrature(a, r, n_r, n_theta)
    return np.concatenate([z1, z2]), np.concatenate([w1, w2])


def fitted_ratio(norms, n_min=1):
    """Per-annulus decay ratio from a log-linear fit over non-empty annuli."""
    ns = np.array([n for n, v in sorted(norms.items()) if n >= n_min and v > 0], dtype=float)
    vs = np.array([norms[int(n)] for n in ns])
    if ns.size < 2:
        raise NumericalCheckError("need at least two non-empty annuli to fit a rate")
    slope = np.polyfit(ns, np.log(vs), 1)[0]
    return float(np.exp(slope))


def measured_tail(solver, t, N):
    """``||sum_{N < n <= n_max} pieces||`` on ``D_r``."""
    coef = solver.coefficients(t)
    sel = solver.annulus_of_ > N
    if not np.any(sel):
        return 0.0
    return solver._hol_norm(coef[1:][sel] @ solver.taylor_[sel])

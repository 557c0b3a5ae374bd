"""The genus-2 octagon group, deck-orbit enumeration and the circle suspension.

The four side pairings of the regular octagon with interior angles pi/4 are
hyperbolic translations through the origin toward the directions
``j pi / 4``.  Words are strings over ``abcd`` (generators) and ``ABCD``
(inverses); the word ``"ab"`` is the transform ``a o b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError, NumericalCheckError
from .hyperbolic import MobiusTransform, annulus_index, poincare_distance

LETTERS = "abcdABCD"
_LETTER_RANK = {c: i for i, c in enumerate(LETTERS)}

# cosh of the octagon inradius (curvature -1); also cot(pi/8)
COSH_INRADIUS = 1.0 + math.sqrt(2.0)
# cosh of the circumradius: cot(pi/8)^2
COSH_CIRCUMRADIUS = (1.0 + math.sqrt(2.0)) ** 2

SIDE_RELATION = "aBcDAbCd"
# a1 = a, b1 = d, a2 = cB, b2 = adC satisfy [a1, b1][a2, b2] = 1
COMMUTATOR_BASIS = ("a", "d", "cB", "adC")


def invert_word(word):
    return "".join(c.swapcase() for c in reversed(word))


def reduce_word(word):
    """Free reduction (cancel adjacent ``xX`` pairs)."""
    out = []
    for c in word:
        if out and out[-1] == c.swapcase():
            out.pop()
        else:
            out.append(c)
    return "".join(out)


def word_key(word):
    return (len(word), tuple(_LETTER_RANK[c] for c in word))


def commutator(x, y):
    return x + y + invert_word(x) + invert_word(y)


def _matrix_residual(m):
    """Distance of an SU(1,1) matrix from +-identity."""
    eye = np.eye(2)
    return float(min(np.abs(m - eye).max(), np.abs(m + eye).max()))


@dataclass(frozen=True)
class SurfaceGroup:
    """Side pairings of the regular octagon plus a commutator basis."""

    side_pairings: tuple
    translation_length: float
    relation: str = SIDE_RELATION
    basis_words: tuple = COMMUTATOR_BASIS

    @property
    def generators(self):
        """``(a1, b1, a2, b2)`` with ``[a1, b1][a2, b2] = id``."""
        return tuple(self.word_transform(w) for w in self.basis_words)

    @property
    def commutator_relation(self):
        a1, b1, a2, b2 = self.basis_words
        return commutator(a1, b1) + commutator(a2, b2)

    def letter(self, c):
        g = self.side_pairings["abcd".index(c.lower())]
        return g if c.islower() else g.inverse()

    def word_matrix(self, word):
        m = np.eye(2, dtype=complex)
        for c in word:
            if c not in _LETTER_RANK:
                raise DomainError(f"unknown letter {c!r} in word {word!r}")
            m = m @ self.letter(c).matrix()
        return m

    def word_transform(self, word):
        if word == "":
            return MobiusTransform.identity()
        return MobiusTransform.from_matrix(self.word_matrix(word))

    def relation_residual(self, word=None):
        """Residual of a relation word in ``(a, beta)`` parameters."""
        word = self.relation if word is None else word
        g = self.word_transform(word)
        beta = min(g.beta, 2 * math.pi - g.beta)
        return max(abs(g.a), beta, _matrix_residual(self.word_matrix(word)))

    @property
    def orbit_separation(self):
        """Minimal ``d_P(0, g 0)``: half the translation length in these units."""
        return 0.5 * self.translation_length

    def is_hyperbolic(self, g):
        m = g.matrix()
        return abs(np.trace(m).real) > 2.0


def octagon_generators():
    """Side pairings of the regular octagon with vertex angles pi/4.

    Side ``j`` has its midpoint at distance ``r`` (``cosh r = 1 + sqrt 2``,
    curvature -1) in direction ``j pi / 4``; the pairing of the opposite
    side to side ``j`` is the translation of length ``2 r`` along that axis.
    """
    r_in = math.acosh(COSH_INRADIUS)
    t = math.tanh(r_in)  # image of 0; curvature -1 distance 2 atanh(t) = 2 r
    gens = []
    for j in range(4):
        e = complex(math.cos(j * math.pi / 4), math.sin(j * math.pi / 4))
        gens.append(MobiusTransform(-t * e, 0.0))
    group = SurfaceGroup(tuple(gens), 2 * r_in)
    res = group.relation_residual()
    if res > 1e-10:
        raise NumericalCheckError("octagon relation not satisfied", {"residual": res})
    return group


def octagon_vertex_radius():
    """Euclidean radius of the octagon vertices, from the side geodesics.

    Independent of the closed forms above: the side through the midpoint
    ``m`` perpendicular to the real axis is the circle orthogonal to the
    unit circle through ``m``; the vertex is its intersection with the ray
    at angle pi/8.
    """
    m = math.tanh(0.5 * math.acosh(COSH_INRADIUS))
    # circle centre c on the real axis with c^2 - rho^2 = 1 passing through m
    c = (1 + m * m) / (2 * m)
    rho = c - m
    # |s e^{i pi/8} - c| = rho  ->  s^2 - 2 s c cos + c^2 - rho^2 = 0
    cs = math.cos(math.pi / 8)
    s = c * cs - math.sqrt((c * cs) ** 2 - 1.0)
    return s


@dataclass(frozen=True)
class DeckElement:
    word: str
    transform: MobiusTransform
    n: int

    @property
    def orbit_point(self):
        return self.transform.center


@dataclass
class DeckEnumeration:
    elements: list
    duplicates_merged: int
    max_word_len: int
    n_cap: int
    counts: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    def in_annulus(self, n):
        return [e for e in self.elements if e.n == n]

    def ratios(self):
        return {n: c / 2.0**n for n, c in sorted(self.counts.items())}


def enumerate_deck(group, max_word_len, n_cap, margin=4, tol=1e-9):
    """Breadth-first enumeration of deck elements up to a word length.

    Each orbit point keeps the first word that reaches it in (length,
    lexicographic) order.  Words whose orbit point lies beyond annulus
    ``n_cap + margin`` are not extended: a geodesic from 0 to an orbit point
    only crosses tiles whose centres are within one circumradius of it, so
    the margin covers every shortest path to points with ``n <= n_cap``.
    """
    if max_word_len < 0:
        raise DomainError("max_word_len must be >= 0")
    if n_cap < 0:
        raise DomainError("n_cap must be >= 0")
    prune = n_cap + margin
    scale = 1.0 / tol
    seen = {}

    def lookup(z):
        kx, ky = int(round(z.real * scale)), int(round(z.imag * scale))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                hit = seen.get((kx + dx, ky + dy))
                if hit is not None and abs(hit - z) <= tol:
                    return True
        return False

    def insert(z):
        seen[(int(round(z.real * scale)), int(round(z.imag * scale)))] = z

    letters = [group.letter(c).matrix() for c in LETTERS]
    ident = np.eye(2, dtype=complex)
    insert(0j)
    found = [("", ident)]
    frontier = [("", ident)]
    duplicates = 0
    for _ in range(max_word_len):
        nxt = []
        for word, m in frontier:
            for c, lm in zip(LETTERS, letters):
                if word and word[-1] == c.swapcase():
                    continue
                mm = m @ lm
                z = mm[0, 1] / mm[1, 1]  # image of 0
                if abs(z) >= 1.0 - 0.5 ** (prune + 1):
                    continue
                if lookup(z):
                    duplicates += 1
                    continue
                insert(z)
                nxt.append((word + c, mm))
        nxt.sort(key=lambda p: word_key(p[0]))
        found.extend(nxt)
        frontier = nxt
    elements = []
    for word, m in found:
        g = MobiusTransform.from_matrix(m) if word else MobiusTransform.identity()
        n = int(annulus_index(g.center))
        if n <= n_cap:
            elements.append(DeckElement(word, g, n))
    elements.sort(key=lambda e: word_key(e.word))
    counts = {}
    for e in elements:
        counts[e.n] = counts.get(e.n, 0) + 1
    return DeckEnumeration(elements, duplicates, max_word_len, n_cap, counts)


def min_orbit_separation(elements):
    pts = np.array([e.orbit_point for e in elements])
    best = np.inf
    for i in range(len(pts) - 1):
        d = poincare_distance(pts[i], pts[i + 1 :])
        best = min(best, float(d.min()))
    return best


DEFAULT_ROTATION_ANGLES = (1.0, math.sqrt(2.0), math.sqrt(3.0), math.sqrt(5.0))


@dataclass(frozen=True)
class SuspensionModel:
    """Suspension of the octagon group over the circle ``T = R / 2 pi``.

    ``action`` is ``"rotation"`` (generator ``j`` rotates by ``angles[j]``)
    or ``"boundary"`` (each generator acts by its own boundary map).
    """

    group: SurfaceGroup
    action: str = "rotation"
    angles: tuple = DEFAULT_ROTATION_ANGLES

    def __post_init__(self):
        if self.action not in ("rotation", "boundary"):
            raise ConfigError(f"unknown transversal action {self.action!r}")
        if len(self.angles) != 4:
            raise ConfigError("rotation action needs four angles")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))

    def word_angle(self, word):
        total = 0.0
        for c in word:
            a = self.angles["abcd".index(c.lower())]
            total += a if c.islower() else -a
        return total

    def act(self, word, t):
        """Transversal action of the deck element with the given word."""
        if isinstance(word, DeckElement):
            word = word.word
        t = np.asarray(t, dtype=float)
        if self.action == "rotation":
            return np.mod(t + self.word_angle(word), 2 * np.pi)
        g = self.group.word_transform(word)
        return g.boundary_angle(t)

    def act_inverse(self, word, t):
        if isinstance(word, DeckElement):
            word = word.word
        return self.act(invert_word(word), t)

    def base_point_shift(self, word, t):
        """Transversal parameter of the orbit point ``w(0)`` on the leaf through ``t``.

        ``(w(0), t) = w . (0, act(w^-1, t))`` in the suspension.
        """
        return self.act_inverse(word, t)

    def action_speed(self, word, t):
        """Derivative of ``t -> act(word, t)``."""
        if isinstance(word, DeckElement):
            word = word.word
        if self.action == "rotation":
            return np.ones_like(np.asarray(t, dtype=float))
        return self.group.word_transform(word).boundary_speed(t)

    def homomorphism_residual(self, w1, w2, t):
        lhs = self.act(w1 + w2, t)
        rhs = self.act(w1, self.act(w2, t))
        return float(np.max(circle_distance(lhs, rhs)))

    def relation_residual(self, samples=256):
        t = 2 * np.pi * np.arange(samples) / samples
        out = 0.0
        for rel in (self.group.relation, self.group.commutator_relation):
            out = max(out, float(np.max(circle_distance(self.act(rel, t), t))))
        return out

    def lift_distortion(self, word, t1, t2):
        """``d0(act(w^-1, t1), act(w^-1, t2)) / d0(t1, t2)``."""
        d = circle_distance(t1, t2)
        if np.any(d == 0):
            raise DomainError("transversal points must be distinct")
        return circle_distance(self.act_inverse(word, t1), self.act_inverse(word, t2)) / d

    def fit_distortion_exponent(self, elements, samples=64, seed=0):
        """Smallest integer ``k`` with distortion ``<= 2^(k n)`` on all samples."""
        rng = np.random.default_rng(seed)
        k = 0
        for e in elements:
            if e.word == "":
                continue
            t1 = rng.uniform(0, 2 * np.pi, samples)
            t2 = np.mod(t1 + rng.uniform(1e-6, 0.5, samples), 2 * np.pi)
            ratio = float(np.max(self.lift_distortion(e.word, t1, t2)))
            if ratio > 1.0 + 1e-9:
                k = max(k, math.ceil(math.log2(ratio) / max(e.n, 1) - 1e-12))
        return k

    def kobayashi_in_chart(self, t, zeta):
        """Leafwise Kobayashi density in the global chart: ``1 / (1 - |zeta|^2)``.

        Independent of ``t``: every leaf is uniformised by the same disk.
        """
        zeta = np.asarray(zeta)
        if np.any(np.abs(zeta) >= 1):
            raise DomainError("zeta must lie in the unit disk")
        shape = np.broadcast(np.asarray(t), zeta).shape
        return np.broadcast_to(1.0 / (1.0 - np.abs(zeta) ** 2), shape).copy()


def circle_distance(s, t):
    """Arc-length distance on ``R / 2 pi``."""
    d = np.mod(np.asarray(s) - np.asarray(t), 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def group_report(word_cap=12, n_cap=8, action="rotation", seed=0):
    """Relation residuals, radii and orbit counts for the octagon group."""
    group = octagon_generators()
    enum = enumerate_deck(group, word_cap, n_cap)
    model = SuspensionModel(group, action)
    v = octagon_vertex_radius()
    return {
        "relation_residual": group.relation_residual(),
        "commutator_residual": group.relation_residual(group.commutator_relation),
        "cosh_inradius": math.cosh(group.translation_length / 2),
        "cosh_circumradius": math.cosh(2 * math.atanh(v)),
        "orbit_separation": group.orbit_separation,
        "min_orbit_distance": min_orbit_separation(enum.elements),
        "counts": {n: enum.counts.get(n, 0) for n in range(n_cap + 1)},
        "ratios": {n: enum.counts.get(n, 0) / 2.0**n for n in range(n_cap + 1)},
        "elements": len(enum),
        "duplicates_merged": enum.duplicates_merged,
        "action_relation_residual": model.relation_residual(),
        "distortion_exponent": model.fit_distortion_exponent(enum.elements, samples=32, seed=seed),
    }

"""Cartesian cell-centred grids on a disk and complex fields sampled on them.

Cell centres sit at ``h * (i + 1j * k)`` for integers ``|i|, |k| <= half``;
every grid with the same spacing is therefore aligned with every other,
which is what the convolution-based Cauchy transform relies on.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .exceptions import DomainError

MAGIC = b"GFLD1\n"
KINDS = ("section", "form")


@dataclass(frozen=True)
class Grid:
    h: float
    rho_max: float

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError("grid spacing must be positive")
        if not self.rho_max > 0:
            raise DomainError("grid radius must be positive")

    @classmethod
    def disk(cls, n_grid=6, h=1 / 256):
        """The truncated unit disk ``|z| < 1 - 2^-(n_grid+1)``."""
        return cls(float(h), 1.0 - 0.5 ** (n_grid + 1))

    @property
    def half(self):
        return int(math.floor(self.rho_max / self.h + 1e-9))

    @property
    def shape(self):
        return (2 * self.half + 1, 2 * self.half + 1)

    @property
    def coords(self):
        return self.h * np.arange(-self.half, self.half + 1)

    @property
    def z(self):
        x = self.coords
        return x[None, :] + 1j * x[:, None]

    @property
    def mask(self):
        return np.abs(self.z) < self.rho_max

    @property
    def cell_area(self):
        return self.h * self.h

    def zeros(self, kind="section"):
        return GridField(self, np.zeros(self.shape, dtype=complex), kind)

    def sample(self, func, kind="section"):
        """Evaluate ``func`` at the cell centres inside the disk."""
        z = self.z
        m = self.mask
        values = np.zeros(self.shape, dtype=complex)
        values[m] = func(z[m])
        return GridField(self, values, kind)

    def to_dict(self):
        return {"h": self.h, "rho_max": self.rho_max}


@dataclass
class GridField:
    """Samples of a section, or of the ``dzbar`` coefficient of a form."""

    grid: Grid
    values: np.ndarray
    kind: str = "section"
    _spline: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}")
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise DomainError(f"values have shape {values.shape}, grid needs {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field samples must be finite")
        self.values = values

    @property
    def support_radius(self):
        """Radius of the smallest origin-centred disk holding all nonzero cells."""
        nz = self.values != 0
        if not np.any(nz):
            return 0.0
        return float(np.abs(self.grid.z[nz]).max()) + self.grid.h / math.sqrt(2)

    def __add__(self, other):
        self._check_compatible(other)
        return GridField(self.grid, self.values + other.values, self.kind)

    def __sub__(self, other):
        self._check_compatible(other)
        return GridField(self.grid, self.values - other.values, self.kind)

    def __mul__(self, c):
        return GridField(self.grid, self.values * c, self.kind)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if not isinstance(other, GridField) or other.grid != self.grid or other.kind != self.kind:
            raise DomainError("fields live on different grids or have different kinds")

    def integral(self, density=None, region=None):
        """``sum h^2 |f|^2 density`` over ``region`` (default: the grid disk)."""
        region = self.grid.mask if region is None else region & self.grid.mask
        w = 1.0 if density is None else density
        vals = np.abs(self.values) ** 2 * w
        return float(self.grid.cell_area * np.sum(vals[region]))

    def norm(self, density=None, region=None):
        return math.sqrt(self.integral(density, region))

    def evaluate(self, points):
        """Bicubic interpolation of the samples at arbitrary points."""
        if self._spline is None:
            x = self.grid.coords
            re = RectBivariateSpline(x, x, self.values.real.T, kx=3, ky=3)
            im = RectBivariateSpline(x, x, self.values.imag.T, kx=3, ky=3)
            self._spline = (re, im)
        pts = np.asarray(points, dtype=complex)
        lim = self.grid.half * self.grid.h
        if np.any((np.abs(pts.real) > lim) | (np.abs(pts.imag) > lim)):
            raise DomainError("evaluation point outside the grid box")
        re, im = self._spline
        flat = pts.ravel()
        out = re.ev(flat.real, flat.imag) + 1j * im.ev(flat.real, flat.imag)
        return out.reshape(pts.shape)

    def restrict(self, grid):
        """Copy onto a smaller aligned grid with the same spacing."""
        if abs(grid.h - self.grid.h) > 1e-15 or grid.half > self.grid.half:
            raise DomainError("target grid must be an aligned sub-grid")
        off = self.grid.half - grid.half
        sl = slice(off, off + grid.shape[0])
        vals = self.values[sl, sl] * grid.mask
        return GridField(grid, vals, self.kind)

    # serialisation ---------------------------------------------------------

    def header(self, extra=None):
        head = {
            "rho_max": self.grid.rho_max,
            "h": self.grid.h,
            "kind": self.kind,
            "shape": list(self.grid.shape),
            "dtype": "complex128-le",
            "order": "row-major, row = imaginary part index",
        }
        if extra:
            head.update(extra)
        return head

    def to_bytes(self, extra=None):
        head = json.dumps(self.header(extra), sort_keys=True, separators=(",", ":"))
        body = np.ascontiguousarray(self.values, dtype="<c16").tobytes()
        return MAGIC + head.encode() + b"\n" + body

    def save(self, path, extra=None):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(extra))

    @classmethod
    def from_bytes(cls, data):
        buf = io.BytesIO(data)
        if buf.readline() != MAGIC:
            raise DomainError("not a grid-field file")
        head = json.loads(buf.readline())
        grid = Grid(head["h"], head["rho_max"])
        if list(grid.shape) != head["shape"]:
            raise DomainError("header shape does not match grid parameters")
        values = np.frombuffer(buf.read(), dtype="<c16").reshape(grid.shape)
        return cls(grid, values.astype(complex), head["kind"])

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def polar_quadrature(r0, r1, n_r=48, n_theta=128):
    """Gauss-Legendre in ``r`` times trapezoid in ``theta`` on an annulus.

    Returns points and weights with ``sum w f(z) ~ int f dA``.
    """
    x, wx = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (r1 - r0) * x + 0.5 * (r1 + r0)
    wr = 0.5 * (r1 - r0) * wx * r
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    z = r[:, None] * np.exp(1j * th[None, :])
    w = wr[:, None] * (2 * np.pi / n_theta) * np.ones_like(th)[None, :]
    return z.ravel(), w.ravel()

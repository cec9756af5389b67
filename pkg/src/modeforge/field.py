"""Sampled scalar fields, Laguerre-Gaussian modes and angular-spectrum propagation.

Fields live on a square-pixel grid centred between the four middle pixels.
Amplitudes are stored in physical units, so the L2 norm of a field is
``sum(|a|**2) * pitch**2`` and a unit-norm mode has amplitudes of order
``1 / waist``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from . import _fft


class GridMismatchError(ValueError):
    pass


class ApertureTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Sampling grid: ``nx`` x ``ny`` pixels of size ``pitch`` at ``wavelength``."""

    nx: int = 128
    ny: int = 128
    pitch: float = 24e-6
    wavelength: float = 1550e-9

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even integers >= 8, got {n}")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def k(self):
        return 2 * np.pi / self.wavelength

    @property
    def extent(self):
        """Physical width and height of the aperture in meters."""
        return self.nx * self.pitch, self.ny * self.pitch

    def coords(self):
        """Return ``(X, Y)`` coordinate arrays of shape ``(ny, nx)``."""
        x = (np.arange(self.nx) - (self.nx - 1) / 2) * self.pitch
        y = (np.arange(self.ny) - (self.ny - 1) / 2) * self.pitch
        return np.meshgrid(x, y)

    def polar(self):
        X, Y = self.coords()
        return np.hypot(X, Y), np.arctan2(Y, X)

    def with_size(self, nx, ny=None, pitch=None):
        return GridSpec(nx, nx if ny is None else ny,
                        self.pitch if pitch is None else pitch, self.wavelength)


PAPER_GRID = GridSpec(384, 384, 8e-6, 1550e-9)
DESK_GRID = GridSpec(128, 128, 24e-6, 1550e-9)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: GridSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != self.grid.shape:
            raise GridMismatchError(
                f"amplitude shape {a.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field amplitudes must be finite")
        object.__setattr__(self, "amplitudes", a)

    @property
    def power(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.pitch ** 2)

    def norm(self):
        return math.sqrt(self.power)

    def normalized(self):
        return ComplexField(self.grid, self.amplitudes / self.norm())

    def intensity(self):
        return np.abs(self.amplitudes) ** 2

    def __add__(self, other):
        _check_grid(self, other)
        return ComplexField(self.grid, self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        _check_grid(self, other)
        return ComplexField(self.grid, self.amplitudes - other.amplitudes)

    def __mul__(self, scalar):
        return ComplexField(self.grid, self.amplitudes * scalar)

    __rmul__ = __mul__

    def to_bytes(self):
        header = {"nx": self.grid.nx, "ny": self.grid.ny,
                  "pitch_m": self.grid.pitch, "wavelength_m": self.grid.wavelength}
        body = np.ascontiguousarray(self.amplitudes, dtype="<c16").tobytes()
        return (json.dumps(header) + "\n").encode() + body

    @classmethod
    def from_bytes(cls, data):
        line, _, body = data.partition(b"\n")
        h = json.loads(line)
        grid = GridSpec(h["nx"], h["ny"], h["pitch_m"], h["wavelength_m"])
        a = np.frombuffer(body, dtype="<c16").reshape(grid.shape)
        return cls(grid, a.astype(complex))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _check_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True)
class ModeSpec:
    """Laguerre-Gaussian mode LG_p^l with waist ``waist`` (meters)."""

    l: int
    p: int = 0
    waist: float = 0.3e-3
    family: str = "LaguerreGaussian"

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("radial order p must be non-negative")
        if not self.waist > 0:
            raise ValueError("waist must be positive")
        if self.family != "LaguerreGaussian":
            raise ValueError(f"unsupported mode family {self.family!r}")

    @property
    def label(self):
        return f"LG_{self.p}^{self.l}"


def lg_amplitude(l, p, waist, r, phi):
    """Analytic unit-power LG_p^l amplitude at the waist plane."""
    al = abs(l)
    log_c = 0.5 * (math.log(2.0) + gammaln(p + 1) - math.log(math.pi) - gammaln(p + al + 1))
    rho2 = 2.0 * r ** 2 / waist ** 2
    radial = (np.sqrt(rho2) ** al) * eval_genlaguerre(p, al, rho2) * np.exp(-r ** 2 / waist ** 2)
    return math.exp(log_c) / waist * radial * np.exp(1j * l * phi)


def lg_mode(spec, grid, clip_tol=1e-3):
    """Sample ``spec`` on ``grid`` and normalise it to unit L2 norm.

    Raises ApertureTooSmallError when more than ``clip_tol`` of the
    analytic mode energy falls outside the grid.
    """
    r, phi = grid.polar()
    a = lg_amplitude(spec.l, spec.p, spec.waist, r, phi)
    captured = float(np.sum(np.abs(a) ** 2) * grid.pitch ** 2)
    if captured < 1.0 - clip_tol:
        raise ApertureTooSmallError(
            f"{spec.label} with waist {spec.waist:g} m keeps only {captured:.6f} "
            f"of its energy on a {grid.nx}x{grid.ny} grid of pitch {grid.pitch:g} m")
    return ComplexField(grid, a / math.sqrt(captured))


def gaussian_beam(grid, waist):
    return lg_mode(ModeSpec(0, 0, waist), grid)


def overlap(a, b):
    """Discrete inner product <a|b> = sum(conj(a) * b) * pitch**2."""
    _check_grid(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.pitch ** 2)


def _padded_size(n, pad):
    m = int(round(n * pad))
    return m + (m % 2)


@lru_cache(maxsize=64)
def transfer_function(ny, nx, pitch, wavelength, distance):
    """Angular-spectrum transfer function on an (ny, nx) FFT grid.

    Evanescent components are removed.
    """
    k = 2 * np.pi / wavelength
    kx = 2 * np.pi * _fft.fftfreq(nx, pitch)
    ky = 2 * np.pi * _fft.fftfreq(ny, pitch)
    kz2 = k ** 2 - kx[None, :] ** 2 - ky[:, None] ** 2
    prop = kz2 > 0
    kz = np.sqrt(np.where(prop, kz2, 0.0))
    h = np.where(prop, np.exp(1j * distance * kz), 0.0)
    h.setflags(write=False)
    return h


def _transfer(ny, nx, grid, distance, dtype):
    h = transfer_function(ny, nx, grid.pitch, grid.wavelength, float(distance))
    return h if dtype is complex else _single_transfer(ny, nx, grid.pitch, grid.wavelength, float(distance))


@lru_cache(maxsize=64)
def _single_transfer(ny, nx, pitch, wavelength, distance):
    h = transfer_function(ny, nx, pitch, wavelength, distance).astype(np.complex64)
    h.setflags(write=False)
    return h


def propagate_array(a, grid, distance, pad=2.0):
    """Propagate raw amplitudes ``a`` (shape ``(..., ny, nx)``) by ``distance``.

    ``pad`` is the zero-padding factor applied before the FFT; 1 disables it.
    The padded-then-cropped operator for ``-distance`` is the exact adjoint of
    the one for ``distance``.
    """
    dtype = np.complex64 if np.asarray(a).dtype in (np.complex64, np.float32) else complex
    if distance == 0:
        return np.array(a, dtype=dtype, copy=True)
    ny, nx = grid.shape
    if pad <= 1:
        h = _transfer(ny, nx, grid, distance, dtype)
        return _fft.ifft2(_fft.fft2(a) * h)
    my, mx = _padded_size(ny, pad), _padded_size(nx, pad)
    oy, ox = (my - ny) // 2, (mx - nx) // 2
    buf = np.zeros(a.shape[:-2] + (my, mx), dtype=dtype)
    buf[..., oy:oy + ny, ox:ox + nx] = a
    h = _transfer(my, mx, grid, distance, dtype)
    out = _fft.ifft2(_fft.fft2(buf) * h)
    return out[..., oy:oy + ny, ox:ox + nx]


def propagate(f, distance, pad=2.0):
    """Free-space propagation of a field by ``distance`` meters (negative = backwards)."""
    return ComplexField(f.grid, propagate_array(f.amplitudes, f.grid, distance, pad))


def beam_radius(f):
    """1/e^2 intensity radius from the second moment, ``w = 2 sqrt(<x^2>)``.

    The x and y moments are averaged about the intensity centroid.
    """
    X, Y = f.grid.coords()
    inten = f.intensity()
    total = inten.sum()
    cx = (inten * X).sum() / total
    cy = (inten * Y).sum() / total
    var = 0.5 * ((inten * ((X - cx) ** 2 + (Y - cy) ** 2)).sum() / total)
    return 2.0 * math.sqrt(var)


def rayleigh_range(waist, wavelength):
    return math.pi * waist ** 2 / wavelength

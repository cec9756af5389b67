"""Cascaded phase layers and the imperfections applied to them."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from . import _fft
from .field import ComplexField, GridMismatchError, GridSpec, propagate_array

STACK_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class PhaseLayer:
    grid: GridSpec
    phase: np.ndarray


@dataclass(frozen=True, eq=False)
class PhaseLayerStack:
    """Phase layers ``phases[i]`` separated by ``spacings`` (len = layers + 1).

    ``spacings[0]`` is the gap from the input plane to the first layer and
    ``spacings[-1]`` the gap from the last layer to the output plane.
    ``pad`` is the zero-padding factor used for every propagation step.
    """

    grid: GridSpec
    phases: np.ndarray
    spacings: tuple
    pad: float = 2.0

    def __post_init__(self):
        ph = np.array(self.phases, dtype=float)
        if ph.ndim == 2:
            ph = ph[None]
        if ph.shape[1:] != self.grid.shape:
            raise GridMismatchError(f"layer shape {ph.shape[1:]} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phases must be finite")
        sp = tuple(float(s) for s in self.spacings)
        if len(sp) != ph.shape[0] + 1:
            raise ValueError(f"need {ph.shape[0] + 1} spacings for {ph.shape[0]} layers, got {len(sp)}")
        if any(s <= 0 for s in sp):
            raise ValueError("all spacings must be positive")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)
        object.__setattr__(self, "spacings", sp)

    @classmethod
    def zeros(cls, grid, n_layers=4, spacing=41e-3, pad=2.0):
        return cls(grid, np.zeros((n_layers,) + grid.shape), (spacing,) * (n_layers + 1), pad)

    @classmethod
    def random(cls, grid, n_layers=4, spacing=41e-3, pad=2.0, seed=0):
        rng = np.random.default_rng(seed)
        ph = rng.uniform(0, 2 * np.pi, (n_layers,) + grid.shape)
        return cls(grid, ph, (spacing,) * (n_layers + 1), pad)

    @property
    def n_layers(self):
        return self.phases.shape[0]

    @property
    def layers(self):
        return tuple(PhaseLayer(self.grid, p) for p in self.phases)

    @property
    def total_length(self):
        return sum(self.spacings)

    def replace(self, **kw):
        args = dict(grid=self.grid, phases=self.phases, spacings=self.spacings, pad=self.pad)
        args.update(kw)
        return PhaseLayerStack(**args)

    def wrapped(self):
        return np.mod(self.phases, 2 * np.pi)

    def save(self, directory):
        """Write ``stack.json`` plus one raw float64 file per layer."""
        os.makedirs(directory, exist_ok=True)
        files = []
        for i, ph in enumerate(self.phases):
            name = f"layer_{i:02d}.f64"
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(np.ascontiguousarray(ph, dtype="<f8").tobytes())
            files.append(name)
        manifest = {
            "version": STACK_FORMAT_VERSION,
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny, "pitch_m": self.grid.pitch},
            "wavelength_m": self.grid.wavelength,
            "spacings_m": list(self.spacings),
            "pad": self.pad,
            "layers": files,
        }
        path = os.path.join(directory, "stack.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2)
        return path

    @classmethod
    def load(cls, path):
        if os.path.isdir(path):
            path = os.path.join(path, "stack.json")
        with open(path) as fh:
            m = json.load(fh)
        if m.get("version") != STACK_FORMAT_VERSION:
            raise ValueError(f"unsupported stack manifest version {m.get('version')!r}")
        g = m["grid"]
        grid = GridSpec(g["nx"], g["ny"], g["pitch_m"], m["wavelength_m"])
        base = os.path.dirname(path)
        phases = []
        for name in m["layers"]:
            with open(os.path.join(base, name), "rb") as fh:
                phases.append(np.frombuffer(fh.read(), dtype="<f8").reshape(grid.shape))
        return cls(grid, np.array(phases), tuple(m["spacings_m"]), m.get("pad", 2.0))


# -- modulation model ---------------------------------------------------------

def blur(a, sigma):
    """Gaussian blur (in pixels) over the last two axes, periodic boundaries.

    With periodic boundaries and a symmetric kernel the operator is
    self-adjoint, which the trainer relies on.
    """
    if sigma <= 0:
        return a
    sig = (0,) * (a.ndim - 2) + (sigma, sigma)
    if np.iscomplexobj(a):
        return gaussian_filter(a.real, sig, mode="wrap") + 1j * gaussian_filter(a.imag, sig, mode="wrap")
    return gaussian_filter(a, sig, mode="wrap")


def modulation(phases, blur_sigma=0.0):
    m = np.exp(1j * phases)
    return blur(m, blur_sigma) if blur_sigma > 0 else m


def forward_array(stack, a, blur_sigma=0.0, keep_planes=False, phases=None):
    """Run a batch of input amplitudes ``a`` (S, ny, nx) through the stack.

    With ``keep_planes`` also returns the list of fields arriving at each
    layer (before modulation) and the list of modulations; both are what the
    adjoint gradient needs.
    """
    phases = stack.phases if phases is None else phases
    u = np.asarray(a)
    if u.dtype != np.complex64:
        u = u.astype(complex)
    mods = modulation(phases, blur_sigma).astype(u.dtype, copy=False)
    arriving = []
    for gap, m in zip(stack.spacings[:-1], mods):
        u = propagate_array(u, stack.grid, gap, stack.pad)
        if keep_planes:
            arriving.append(u)
        u = u * m
    out = propagate_array(u, stack.grid, stack.spacings[-1], stack.pad)
    if keep_planes:
        return out, arriving, mods
    return out


def forward(stack, f, blur_sigma=0.0):
    """Propagate a single field through the cascade."""
    if f.grid != stack.grid:
        raise GridMismatchError(f"field grid {f.grid} differs from stack grid {stack.grid}")
    return ComplexField(stack.grid, forward_array(stack, f.amplitudes[None], blur_sigma)[0])


# -- perturbations -------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """Physical imperfections: lateral/axial offsets, grayscale, fringe blur, Zernike.

    ``dx`` and ``dz`` are in meters, ``blur_sigma`` in pixels and the Zernike
    terms are ``(noll_index, rms_radians)`` pairs.
    """

    dx: float = 0.0
    dz: float = 0.0
    gray_levels: Optional[int] = None
    blur_sigma: float = 0.0
    zernike: Sequence = field(default=())

    def __post_init__(self):
        if self.gray_levels is not None and self.gray_levels < 1:
            raise ValueError("gray_levels must be >= 1")
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")

    @property
    def is_identity(self):
        return (self.dx == 0 and self.dz == 0 and self.gray_levels is None
                and self.blur_sigma == 0 and not any(c for _, c in self.zernike))


def shift_array(a, shift_px, axis=-1):
    """Sub-pixel periodic shift of real arrays along ``axis`` via the Fourier shift theorem.

    The Nyquist bin uses ``cos`` so the output stays real; as a result the
    transpose of a shift by ``s`` is exactly the shift by ``-s``.
    """
    if shift_px == 0:
        return np.array(a, copy=True)
    n = a.shape[axis]
    k = 2 * np.pi * _fft.fftfreq(n, 1.0)
    ramp = np.exp(-1j * k * shift_px)
    if n % 2 == 0:
        ramp[n // 2] = math.cos(np.pi * shift_px)
    shape = [1] * a.ndim
    shape[axis] = n
    spec = np.fft.fft(a, axis=axis) * ramp.reshape(shape)
    return np.fft.ifft(spec, axis=axis).real


def quantize(phases, levels):
    """Snap wrapped phase to the nearest of ``levels`` uniform values ``k * 2pi / L``."""
    w = np.mod(phases, 2 * np.pi)
    idx = np.mod(np.rint(w * levels / (2 * np.pi)), levels)
    return idx * (2 * np.pi / levels)


def fringe(phases, sigma):
    """Phase left after blurring the unimodular modulation ``exp(i phi)``."""
    return np.angle(blur(np.exp(1j * phases), sigma))


def perturb(stack, p):
    """Apply a PerturbationSpec and return the perturbed stack.

    Effects are applied in the order dz, dx, blur, zernike, gray so that the
    grayscale lookup is the last step, as on an SLM.
    """
    if p.is_identity:
        return stack
    width = min(stack.grid.extent)
    if abs(p.dx) >= width / 4:
        raise ValueError(f"|dx| must be below a quarter aperture ({width / 4:g} m)")
    spacings = list(stack.spacings)
    if p.dz:
        for i in range(1, len(spacings) - 1):
            spacings[i] += p.dz
        if any(s <= 0 for s in spacings):
            raise ValueError("dz makes a spacing non-positive")
    ph = stack.phases
    if p.dx:
        ph = shift_array(ph, p.dx / stack.grid.pitch, axis=-1)
    if p.blur_sigma:
        ph = fringe(ph, p.blur_sigma)
    if p.zernike:
        ph = ph + zernike_surface(stack.grid, p.zernike)[None]
    if p.gray_levels is not None:
        ph = quantize(ph, p.gray_levels)
    return stack.replace(phases=ph, spacings=tuple(spacings))


def scale_pixels(stack, mode, new_n):
    """Resample the layers onto ``new_n`` x ``new_n`` pixels.

    ``fix_aperture`` keeps the physical size and changes the pitch
    (nearest-neighbour); ``fix_pitch`` crops or zero-pads about the centre.
    """
    if int(new_n) != new_n or new_n < 8 or new_n % 2:
        raise ValueError("new_n must be an even integer >= 8")
    g = stack.grid
    if new_n == g.nx and new_n == g.ny:
        return stack
    if mode == "fix_aperture":
        grid = GridSpec(new_n, new_n, g.pitch * g.nx / new_n, g.wavelength)
        if g.nx != g.ny:
            raise ValueError("fix_aperture scaling needs a square grid")
        src = np.floor((np.arange(new_n) + 0.5) * g.nx / new_n).astype(int)
        ph = stack.phases[:, src][:, :, src]
    elif mode == "fix_pitch":
        grid = GridSpec(new_n, new_n, g.pitch, g.wavelength)
        ph = np.zeros((stack.n_layers, new_n, new_n))
        sy = _centre_slices(g.ny, new_n)
        sx = _centre_slices(g.nx, new_n)
        ph[:, sy[1], sx[1]] = stack.phases[:, sy[0], sx[0]]
    else:
        raise ValueError(f"unknown scaling mode {mode!r}")
    return PhaseLayerStack(grid, ph, stack.spacings, stack.pad)


def _centre_slices(old, new):
    """(source slice, destination slice) for centred crop/pad along one axis."""
    if new <= old:
        o = (old - new) // 2
        return slice(o, o + new), slice(0, new)
    o = (new - old) // 2
    return slice(0, old), slice(o, o + old)


# -- Zernike polynomials (Noll indexing) --------------------------------------

def noll_to_nm(j):
    """Radial order n and signed azimuthal frequency m for Noll index ``j`` (>= 1)."""
    if j < 1:
        raise ValueError("Noll indices start at 1")
    n = 0
    while (n + 1) * (n + 2) // 2 < j:
        n += 1
    # position within row n
    k = j - n * (n + 1) // 2 - 1
    m_abs = [m for m in range(n % 2, n + 1, 2) for _ in ((0,) if m == 0 else (0, 1))][k]
    if m_abs == 0:
        return n, 0
    return n, m_abs if j % 2 == 0 else -m_abs


def zernike_radial(n, m, r):
    m = abs(m)
    out = np.zeros_like(r)
    for s in range((n - m) // 2 + 1):
        c = ((-1) ** s * math.factorial(n - s)
             / (math.factorial(s) * math.factorial((n + m) // 2 - s) * math.factorial((n - m) // 2 - s)))
        out = out + c * r ** (n - 2 * s)
    return out


def zernike(j, r, theta):
    """Noll-normalised Zernike Z_j: unit RMS over the unit disk."""
    n, m = noll_to_nm(j)
    rad = zernike_radial(n, m, r)
    if m == 0:
        return math.sqrt(n + 1) * rad
    ang = np.cos(m * theta) if m > 0 else np.sin(-m * theta)
    return math.sqrt(2 * (n + 1)) * rad * ang


def zernike_surface(grid, terms):
    """Sum of ``c * Z_j`` with the radius normalised to the aperture half-width."""
    r, theta = grid.polar()
    r = r / (min(grid.extent) / 2)
    out = np.zeros(grid.shape)
    for j, c in terms:
        if c:
            out += c * zernike(int(j), r, theta)
    return out

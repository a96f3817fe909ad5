"""Advanced-wave (Klyshko) engine on a 1D transverse grid.

The setup is unfolded: a wave leaves the bucket detector at wavelength
``lambda1``, crosses the double slit, reaches the pair source, is reflected
there with its transverse wavevector kept and its wavelength relabeled to
``lambda2``, and finally passes a lens of focal length ``f`` onto the
scanned detector. The source sits in the front focal plane of the lens, so
the detector plane holds the angular spectrum of the reflected wave.

Imperfect momentum correlation at the source is an incoherent mixture of
tilted copies of the reflected wave (a Gaussian kernel of standard deviation
``1/corr_sigma`` in transverse wavevector), discretized by Gauss-Legendre
quadrature. The finite bucket aperture is a second incoherent sum, over
launch points. All accumulation happens in a fixed order, so threaded and
serial runs give identical arrays.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import CoincidenceProfile, ExperimentConfig, scan_positions

__all__ = [
    "SamplingError",
    "Grid1D",
    "Field1D",
    "Slit",
    "DoubleSlit",
    "OpenAperture",
    "SourceMirror",
    "Quadrature",
    "point_source",
    "plane_wave",
    "gaussian_beam",
    "fresnel_propagate",
    "apply_lens",
    "apply_aperture",
    "kernel_quadrature",
    "source_reflect",
    "bucket_nodes",
    "box_average",
    "detector_intensity",
    "coincidence_profile",
    "singles_profile",
    "grid_from_config",
    "default_mask",
]

# Fraction of spectral power allowed outside the alias-free band of the
# transfer function before fresnel_propagate refuses to run.
ALIAS_TOLERANCE = 0.05
# Half-width of the truncated Gaussian kernel, in standard deviations.
KERNEL_HALF_WIDTH = 7.0


class SamplingError(ValueError):
    """The grid cannot represent a propagation leg faithfully."""

    def __init__(self, message, min_samples=None):
        super().__init__(message)
        self.min_samples = min_samples


def _next_pow2(n: float) -> int:
    return 1 << max(6, int(math.ceil(math.log2(max(n, 1.0)))))


@dataclass(frozen=True)
class Grid1D:
    n_samples: int = 4096
    extent: float = 20e-3

    def __post_init__(self):
        n = self.n_samples
        if n < 64 or n & (n - 1):
            raise ValueError(f"n_samples must be a power of two >= 64 (got {n})")
        if not self.extent > 0:
            raise ValueError("extent > 0 violated")

    @property
    def spacing(self) -> float:
        return self.extent / self.n_samples

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n_samples) - self.n_samples // 2) * self.spacing

    @property
    def fx(self) -> np.ndarray:
        """Spatial frequencies (cycles/m) in FFT order."""
        return np.fft.fftfreq(self.n_samples, self.spacing)

    def check_apertures(self, *widths: float) -> None:
        widest = max(widths, default=0.0)
        if self.extent < 4 * widest:
            raise SamplingError(
                f"grid extent {self.extent:g} m is below 4x the widest aperture "
                f"({widest:g} m)"
            )


@dataclass(frozen=True, eq=False)
class Field1D:
    grid: Grid1D
    wavelength: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", samples)
        if samples.shape != (self.grid.n_samples,):
            raise ValueError("sample count must equal grid.n_samples")
        if not math.isfinite(self.power()):
            raise ValueError("field power is not finite")
        if not self.wavelength > 0:
            raise ValueError("wavelength > 0 violated")

    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.grid.spacing)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def with_samples(self, samples, wavelength=None) -> "Field1D":
        return Field1D(self.grid, self.wavelength if wavelength is None else wavelength, samples)


# --------------------------------------------------------------------------
# sources


def plane_wave(grid: Grid1D, wavelength: float, angle: float = 0.0) -> Field1D:
    k = 2 * np.pi / wavelength
    return Field1D(grid, wavelength, np.exp(1j * k * np.sin(angle) * grid.x))


def gaussian_beam(grid: Grid1D, wavelength: float, waist: float, center: float = 0.0) -> Field1D:
    """Gaussian at its waist, intensity ``exp(-2 (x - center)^2 / waist^2)``."""
    return Field1D(grid, wavelength, np.exp(-(((grid.x - center) / waist) ** 2)))


def point_source(grid: Grid1D, wavelength: float, x0: float, distance: float) -> Field1D:
    """Wave of a point emitter at ``x0`` observed ``distance`` downstream.

    This is the paraxial Fresnel impulse response, evaluated in closed form
    because a delta cannot be sampled on the grid.
    """
    if not distance > 0:
        raise ValueError("point_source needs distance > 0")
    x = grid.x
    reach = float(np.max(np.abs(x - x0)))
    # local chirp frequency must stay below Nyquist
    needed_spacing = wavelength * distance / (2 * reach)
    if grid.spacing > needed_spacing:
        n_min = _next_pow2(grid.extent / needed_spacing)
        raise SamplingError(
            f"point-source chirp undersampled over {distance:g} m; "
            f"need n_samples >= {n_min} at extent {grid.extent:g} m",
            min_samples=n_min,
        )
    phase = np.pi * (x - x0) ** 2 / (wavelength * distance)
    amp = 1.0 / np.sqrt(1j * wavelength * distance)
    return Field1D(grid, wavelength, amp * np.exp(1j * phase))


# --------------------------------------------------------------------------
# propagation


def _aliased_fraction(power_spectrum: np.ndarray, fx: np.ndarray, band: float) -> float:
    total = power_spectrum.sum()
    if total == 0:
        return 0.0
    return float(power_spectrum[np.abs(fx) > band].sum() / total)


def _check_transfer_sampling(power_spectrum, grid: Grid1D, wavelength, distance, tolerance):
    # The chirp exp(-i pi lambda z fx^2) is sampled at dfx = 1/extent; it
    # aliases above |fx| = extent / (2 lambda |z|).
    band = grid.extent / (2 * wavelength * abs(distance))
    fx = grid.fx
    frac = _aliased_fraction(power_spectrum, fx, band)
    if frac <= tolerance:
        return
    order = np.argsort(np.abs(fx))
    cumulative = np.cumsum(power_spectrum[order]) / power_spectrum.sum()
    idx = min(int(np.searchsorted(cumulative, 1 - tolerance)), fx.size - 1)
    f_needed = abs(fx[order][idx])
    n_min = _next_pow2(2 * wavelength * abs(distance) * f_needed / grid.spacing)
    raise SamplingError(
        f"transfer function undersampled for z = {distance:g} m "
        f"({frac:.1%} of power beyond the alias-free band); "
        f"need n_samples >= {n_min} at spacing {grid.spacing:g} m",
        min_samples=n_min,
    )


def _propagate_rows(rows: np.ndarray, grid: Grid1D, wavelength: float, distance: float,
                    weights=None, tolerance=ALIAS_TOLERANCE) -> np.ndarray:
    spectra = np.fft.fft(rows, axis=-1)
    power = np.abs(spectra) ** 2
    if power.ndim == 2:
        w = np.ones(power.shape[0]) if weights is None else np.asarray(weights)
        power = w @ power
    _check_transfer_sampling(power, grid, wavelength, distance, tolerance)
    transfer = np.exp(-1j * np.pi * wavelength * distance * grid.fx ** 2)
    return np.fft.ifft(spectra * transfer, axis=-1)


def fresnel_propagate(field: Field1D, distance: float, tolerance: float = ALIAS_TOLERANCE) -> Field1D:
    """Paraxial free-space propagation by the Fresnel transfer function.

    The spectral method is unitary, so power is conserved to rounding and a
    negative ``distance`` undoes a positive one. Raises
    :class:`SamplingError` when more than ``tolerance`` of the field's power
    lies where the transfer function is undersampled; the error names the
    smallest grid (same spacing) that would pass.
    """
    if distance == 0:
        return field.with_samples(field.samples.copy())
    out = _propagate_rows(field.samples, field.grid, field.wavelength, distance,
                          tolerance=tolerance)
    return field.with_samples(out)


def _lens_phase(grid: Grid1D, wavelength: float, f: float) -> np.ndarray:
    return np.exp(-1j * np.pi * grid.x ** 2 / (wavelength * f))


def apply_lens(field: Field1D, f: float) -> Field1D:
    """Thin lens: multiply by ``exp(-i pi x^2 / (lambda f))``."""
    if f == 0:
        raise ValueError("focal length must be non-zero")
    return field.with_samples(field.samples * _lens_phase(field.grid, field.wavelength, f))


# --------------------------------------------------------------------------
# apertures


@dataclass(frozen=True)
class Slit:
    width: float
    center: float = 0.0

    @property
    def outer_extent(self) -> float:
        return self.width

    def transmission(self, x):
        return (np.abs(np.asarray(x) - self.center) <= 0.5 * self.width).astype(float)


@dataclass(frozen=True)
class DoubleSlit:
    width: float
    separation: float
    center: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("slit width > 0 violated")
        if not self.separation > self.width:
            raise ValueError("d > a violated: slits overlap")

    @property
    def outer_extent(self) -> float:
        return self.separation + self.width

    @property
    def slits(self):
        half = 0.5 * self.separation
        return (Slit(self.width, self.center - half), Slit(self.width, self.center + half))

    def transmission(self, x):
        left, right = self.slits
        return np.maximum(left.transmission(x), right.transmission(x))


@dataclass(frozen=True)
class OpenAperture:
    outer_extent: float = 0.0

    def transmission(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


Aperture = Union[Slit, DoubleSlit, OpenAperture]


def apply_aperture(field: Field1D, mask: Aperture) -> Field1D:
    grid = field.grid
    reach = abs(getattr(mask, "center", 0.0)) + 0.5 * mask.outer_extent
    if 2 * reach > grid.extent:
        raise ValueError("mask wider than grid extent")
    return field.with_samples(field.samples * mask.transmission(grid.x))


# --------------------------------------------------------------------------
# source


@dataclass(frozen=True)
class SourceMirror:
    """Two-color reflection at the pair source.

    ``corr_sigma`` sets the momentum-correlation kernel (``inf`` is a perfect
    mirror). ``pump_envelope_width`` optionally multiplies the reflected wave
    by a Gaussian field envelope ``exp(-x^2/w^2)``; ``None`` leaves it off.
    """

    corr_sigma: float
    lambda_in: float
    lambda_out: float
    pump_envelope_width: Optional[float] = None

    def __post_init__(self):
        if not self.corr_sigma > 0:
            raise ValueError("corr_sigma > 0 violated")
        if self.pump_envelope_width is not None and not self.pump_envelope_width > 0:
            raise ValueError("pump_envelope_width > 0 violated")


def _kernel_error(z, w, t_max) -> float:
    ts = np.linspace(0.0, t_max, 256)
    approx = np.exp(1j * np.outer(ts, z)) @ w
    return float(np.max(np.abs(approx - np.exp(-0.5 * ts ** 2))))


def kernel_quadrature(corr_sigma: float, n_modes: int, span: float = 0.0,
                      tol: float = 1e-6, max_modes: int = 8193):
    """Nodes (rad/m) and weights for the Gaussian momentum kernel.

    Gauss-Legendre on ``+-7`` standard deviations, weights normalized to one.
    When ``span > 0`` the node count is raised until the mixture reproduces
    the kernel's coherence factor ``exp(-s^2 / (2 corr_sigma^2))`` within
    ``tol`` for every separation ``s <= span``.
    """
    if math.isinf(corr_sigma):
        return np.zeros(1), np.ones(1)
    if n_modes < 3:
        raise ValueError("quadrature too coarse: n_source_modes >= 3 needed for finite corr_sigma")
    t_max = span / corr_sigma
    n = int(n_modes)
    while True:
        u, v = np.polynomial.legendre.leggauss(n)
        z = KERNEL_HALF_WIDTH * u
        w = v * np.exp(-0.5 * z ** 2)
        w /= w.sum()
        if t_max == 0 or _kernel_error(z, w, t_max) <= tol:
            return z / corr_sigma, w
        if n >= max_modes:
            raise ValueError(f"kernel quadrature did not converge with {n} modes")
        n = min(max_modes, int(math.ceil(1.5 * n)) | 1)


def source_reflect(field: Field1D, mirror: SourceMirror, n_modes: int = 15,
                   span: float = 0.0) -> list:
    """Reflect ``field`` at the source; returns ``[(weight, Field1D), ...]``.

    Samples are kept and the wavelength relabeled, so each transverse
    wavevector survives the color change. Finite correlation yields tilted
    copies ``exp(i q x)`` weighted by the kernel.
    """
    if not math.isclose(field.wavelength, mirror.lambda_in, rel_tol=1e-9):
        raise ValueError(
            f"wavelength mismatch: field at {field.wavelength:g} m, mirror expects "
            f"{mirror.lambda_in:g} m"
        )
    q, w = kernel_quadrature(mirror.corr_sigma, n_modes, span)
    base = field.samples
    if mirror.pump_envelope_width is not None:
        base = base * np.exp(-((field.grid.x / mirror.pump_envelope_width) ** 2))
    x = field.grid.x
    return [
        (float(wi), Field1D(field.grid, mirror.lambda_out, base * np.exp(1j * qi * x)))
        for qi, wi in zip(q, w)
    ]


# --------------------------------------------------------------------------
# end-to-end


@dataclass(frozen=True)
class Quadrature:
    n_source_modes: int = 15
    n_bucket_points: int = 11


def grid_from_config(cfg: ExperimentConfig) -> Grid1D:
    return Grid1D(cfg.grid_samples, cfg.grid_extent)


def default_mask(cfg: ExperimentConfig) -> DoubleSlit:
    return DoubleSlit(cfg.slit_width_a, cfg.slit_separation_d)


def bucket_nodes(width: float, n: int):
    """Gauss-Legendre launch points across a uniform bucket aperture."""
    if n < 1:
        raise ValueError("n_bucket_points >= 1 needed")
    u, v = np.polynomial.legendre.leggauss(n)
    return 0.5 * width * u, 0.5 * v


def box_average(values: np.ndarray, grid: Grid1D, width: float) -> np.ndarray:
    """Circular moving average over a window ``width`` wide (partial edge
    samples weighted by overlap)."""
    if width <= 0:
        return np.asarray(values, dtype=float).copy()
    dx = grid.spacing
    half = 0.5 * width
    offsets = grid.x
    lo = np.clip(offsets - 0.5 * dx, -half, half)
    hi = np.clip(offsets + 0.5 * dx, -half, half)
    kernel = np.clip(hi - lo, 0.0, None)
    kernel /= kernel.sum()
    kernel = np.fft.ifftshift(kernel)
    out = np.fft.ifft(np.fft.fft(values) * np.fft.fft(kernel)).real
    return np.clip(out, 0.0, None)


def _bucket_contribution(x1, cfg, grid, mask, mirror, n_modes, span):
    u = point_source(grid, cfg.lambda1, x1, cfg.z_slit_bucket)
    u = apply_aperture(u, mask)
    u = fresnel_propagate(u, cfg.z_source_slit)
    modes = source_reflect(u, mirror, n_modes, span)
    weights = np.array([w for w, _ in modes])
    rows = np.stack([m.samples for _, m in modes])
    f = cfg.focal_length_f
    lam = cfg.lambda2
    # source sits in the front focal plane: propagate f, lens, propagate f
    rows = _propagate_rows(rows, grid, lam, f, weights)
    rows = rows * _lens_phase(grid, lam, f)
    rows = _propagate_rows(rows, grid, lam, f, weights)
    return weights @ (np.abs(rows) ** 2), len(modes)


def detector_intensity(cfg: ExperimentConfig, grid: Optional[Grid1D] = None,
                       quadrature: Optional[Quadrature] = None,
                       mask: Optional[Aperture] = None, pump_envelope: bool = False,
                       workers: int = 1):
    """Coincidence intensity on the full detector-plane grid.

    Returns ``(x, intensity, info)`` with the intensity normalized to unit
    maximum after averaging over the point-detector width.
    """
    grid = grid or grid_from_config(cfg)
    quadrature = quadrature or Quadrature(cfg.n_source_modes, cfg.n_bucket_points)
    mask = default_mask(cfg) if mask is None else mask
    grid.check_apertures(mask.outer_extent, cfg.point_width)
    mirror = SourceMirror(
        corr_sigma=cfg.corr_sigma,
        lambda_in=cfg.lambda1,
        lambda_out=cfg.lambda2,
        pump_envelope_width=cfg.pump_waist_2 if pump_envelope else None,
    )
    nodes, node_weights = bucket_nodes(cfg.bucket_width, quadrature.n_bucket_points)
    span = mask.outer_extent

    def task(x1):
        return _bucket_contribution(x1, cfg, grid, mask, mirror,
                                    quadrature.n_source_modes, span)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(task, nodes))
    else:
        parts = [task(x1) for x1 in nodes]

    total = np.zeros(grid.n_samples)
    for wb, (part, _) in zip(node_weights, parts):
        total += wb * part
    intensity = box_average(total, grid, cfg.point_width)
    peak = intensity.max()
    if peak > 0:
        intensity = intensity / peak
    info = {
        "n_source_modes_used": parts[0][1],
        "n_bucket_points": quadrature.n_bucket_points,
    }
    return grid.x, intensity, info


def coincidence_profile(cfg: ExperimentConfig, grid: Optional[Grid1D] = None,
                        quadrature: Optional[Quadrature] = None,
                        positions=None, mask: Optional[Aperture] = None,
                        pump_envelope: bool = False, workers: int = 1) -> CoincidenceProfile:
    """Simulated coincidence rate at the scan positions (unit peak)."""
    x, intensity, info = detector_intensity(cfg, grid, quadrature, mask, pump_envelope, workers)
    positions = scan_positions(cfg) if positions is None else np.asarray(positions, dtype=float)
    if positions.min() < x[0] or positions.max() > x[-1]:
        raise ValueError("scan positions fall outside the detector grid")
    values = np.interp(positions, x, intensity)
    return CoincidenceProfile(positions, values, meta=info)


def singles_profile(cfg: ExperimentConfig, grid: Optional[Grid1D] = None,
                    positions=None, n_modes: int = 41) -> np.ndarray:
    """Unconditioned signal-2 intensity at the scan positions (unit peak).

    The source is modeled as a Gaussian Schell-model emitter: the pump-2
    waist bounds its size and ``divergence_theta`` is the 1/e^2 half-angle
    of its emission. It is an incoherent sum of tilted, pump-limited waves
    sent through the same lens; no slit is involved, so no fringes appear.
    """
    grid = grid or grid_from_config(cfg)
    positions = scan_positions(cfg) if positions is None else np.asarray(positions, dtype=float)
    lam = cfg.lambda2
    f = cfg.focal_length_f
    k = 2 * np.pi / lam
    x = grid.x
    envelope = np.exp(-((x / cfg.pump_waist_2) ** 2))
    sigma_angle = 0.5 * cfg.divergence_theta
    if sigma_angle > 0:
        u, v = np.polynomial.legendre.leggauss(n_modes)
        angles = 4.0 * sigma_angle * u
        weights = v * np.exp(-0.5 * (angles / sigma_angle) ** 2)
        weights /= weights.sum()
    else:
        angles, weights = np.zeros(1), np.ones(1)
    rows = envelope * np.exp(1j * k * np.outer(angles, x))
    rows = _propagate_rows(rows, grid, lam, f, weights)
    rows = rows * _lens_phase(grid, lam, f)
    rows = _propagate_rows(rows, grid, lam, f, weights)
    intensity = box_average(weights @ (np.abs(rows) ** 2), grid, cfg.point_width)
    intensity /= intensity.max()
    return np.interp(positions, x, intensity)

"""Estimators over tag streams and scan profiles.

Lag bins are centred on integer multiples of the bin width: bin ``k`` holds
lags in ``[(k - 1/2) w, (k + 1/2) w)``. A lag is ``t1 - t2`` (channel 1
minus channel 2), so the fiber delay shows up at a positive lag.

Correlations are normalized by ``N1 N2 w / T``, the expected count per bin
for independent streams of the observed sizes. Counting errors are Poisson.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numba
import numpy as np
from scipy.optimize import minimize

from .model import CoincidenceProfile
from .timetags import PS, TagStream

__all__ = [
    "Histogram",
    "CorrelationReport",
    "CSResult",
    "coincidence_histogram",
    "g2_cross",
    "g2_auto",
    "cs_factor",
    "estimate_tau_c",
    "correlation_report",
    "visibility",
    "fringe_component",
]

LagRange = Union[float, Tuple[float, float]]


@numba.njit(cache=False)
def _sweep(t1, t2, lo, hi, width, n_bins, k_lo, exclude_self):
    # two-pointer sweep: `start` only ever moves forward as t2 increases
    counts = np.zeros(n_bins, dtype=np.int64)
    start = 0
    n1 = t1.size
    for j in range(t2.size):
        base = t2[j]
        while start < n1 and t1[start] - base < lo:
            start += 1
        i = start
        while i < n1 and t1[i] - base < hi:
            if not (exclude_self and i == j):
                lag = t1[i] - base
                k = (lag + width // 2) // width - k_lo
                if 0 <= k < n_bins:
                    counts[k] += 1
            i += 1
    return counts


@dataclass(frozen=True)
class Histogram:
    """Lag-bin centres (seconds) and raw pair counts."""

    lags: np.ndarray
    counts: np.ndarray
    bin_width: float

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _lag_bounds(lag_range: LagRange):
    if np.ndim(lag_range) == 0:
        half = abs(float(lag_range))
        return -half, half
    lo, hi = (float(v) for v in lag_range)
    if not lo <= hi:
        raise ValueError("lag_range must satisfy low <= high")
    return lo, hi


def _histogram(t1, t2, bin_width, lag_range, exclude_self):
    if not bin_width > 0:
        raise ValueError("bin_width > 0 violated")
    width = int(round(bin_width / PS))
    if width < 1:
        raise ValueError("bin_width below the 1 ps timestamp resolution")
    lo_s, hi_s = _lag_bounds(lag_range)
    k_lo = int(math.floor(lo_s / bin_width + 0.5))
    k_hi = int(math.floor(hi_s / bin_width + 0.5))
    n_bins = k_hi - k_lo + 1
    lo = k_lo * width - width // 2
    hi = lo + n_bins * width
    counts = _sweep(np.ascontiguousarray(t1, dtype=np.int64),
                    np.ascontiguousarray(t2, dtype=np.int64),
                    np.int64(lo), np.int64(hi), np.int64(width),
                    n_bins, np.int64(k_lo), exclude_self)
    lags = (k_lo + np.arange(n_bins)) * width * PS
    return Histogram(lags, counts, width * PS)


def coincidence_histogram(s1: TagStream, s2: TagStream, bin_width: float,
                          lag_range: LagRange) -> Histogram:
    """Count pairs by lag ``t1 - t2`` over ``lag_range`` (a half-width or a
    ``(low, high)`` pair, seconds)."""
    return _histogram(s1.timestamps, s2.timestamps, bin_width, lag_range, False)


def _common_duration(*streams: TagStream) -> float:
    return min(s.duration for s in streams)


def _normalize(hist: Histogram, n1: int, n2: int, duration: float, lag_range):
    if n1 == 0 or n2 == 0:
        raise ValueError("correlation of an empty stream is undefined")
    lo, hi = _lag_bounds(lag_range)
    if duration <= max(abs(lo), abs(hi)):
        raise ValueError("run duration must exceed the lag range")
    norm = n1 * n2 * hist.bin_width / duration
    return hist.counts / norm, np.sqrt(hist.counts) / norm


def g2_cross(s1: TagStream, s2: TagStream, bin_width: float, lag_range: LagRange):
    """Normalized cross-correlation ``(lags, g, g_err)``; independent streams
    give ``g = 1``."""
    if len(s1) == 0 or len(s2) == 0:
        raise ValueError("correlation of an empty stream is undefined")
    hist = coincidence_histogram(s1, s2, bin_width, lag_range)
    g, err = _normalize(hist, len(s1), len(s2), _common_duration(s1, s2), lag_range)
    return hist.lags, g, err


def g2_auto(s: TagStream, bin_width: float, lag_range: LagRange):
    """Autocorrelation ``(lags, g, g_err)`` with self-pairs removed.

    In the zero-lag bin every unordered pair is counted at ``+lag`` and
    ``-lag``, so its error is inflated by ``sqrt(2)``.
    """
    if len(s) < 2:
        raise ValueError("autocorrelation needs at least two events")
    hist = _histogram(s.timestamps, s.timestamps, bin_width, lag_range, True)
    g, err = _normalize(hist, len(s), len(s), s.duration, lag_range)
    zero = np.isclose(hist.lags, 0.0, atol=0.25 * hist.bin_width)
    err = np.where(zero, err * math.sqrt(2.0), err)
    return hist.lags, g, err


@dataclass(frozen=True)
class CSResult:
    R: float
    R_err: float

    @property
    def verdict(self) -> str:
        return "non-classical" if self.R - self.R_err > 1.0 else "classical-compatible"


def cs_factor(g_cross: float, g_auto1: float, g_auto2: float,
              g_cross_err: float = 0.0, g_auto1_err: float = 0.0,
              g_auto2_err: float = 0.0) -> CSResult:
    """Cauchy-Schwarz ratio ``g_cross^2 / (g_auto1 g_auto2)``.

    The error is first-order propagation of independent input errors.
    """
    if not (g_auto1 > 0 and g_auto2 > 0):
        raise ZeroDivisionError("autocorrelations must be positive")
    R = g_cross ** 2 / (g_auto1 * g_auto2)
    rel = math.hypot(2 * g_cross_err / g_cross if g_cross else 0.0,
                     math.hypot(g_auto1_err / g_auto1, g_auto2_err / g_auto2))
    return CSResult(R, R * rel)


def _binned_two_sided_exp(theta, t, w):
    """Mean counts per bin of ``A exp(-|t - t0| / s) + B``, integrated
    exactly over each bin. Units: counts/bin, ns, ns, counts/bin."""
    amplitude, center, scale, floor = theta
    lo = t - 0.5 * w - center
    hi = t + 0.5 * w - center

    def cumulative(u):
        return np.where(u < 0, scale * np.exp(np.minimum(u, 0) / scale),
                        2 * scale - scale * np.exp(-np.maximum(u, 0) / scale))

    return amplitude * (cumulative(hi) - cumulative(lo)) / w + floor


def estimate_tau_c(s1: TagStream, s2: TagStream, center: float,
                   bin_width: float = 100e-12, half_window: float = 20e-9):
    """Correlation time from the shape of the cross-correlation peak.

    Fits ``A exp(-|t - t0| / s) + B`` to a fine coincidence histogram around
    ``center`` by Poisson maximum likelihood and reports ``tau_c = 2 s`` (the
    generator draws delays with scale ``tau_c / 2``). The error comes from
    the Fisher information. Returns ``(tau_c, tau_c_err)`` in seconds.
    """
    ns = 1e-9
    hist = coincidence_histogram(s1, s2, bin_width, (center - half_window, center + half_window))
    y = hist.counts.astype(float)
    if y.sum() == 0:
        raise ValueError("no coincidences near the expected lag")
    w = hist.bin_width / ns
    t = (hist.lags - center) / ns
    edge = max(y.size // 8, 1)
    floor0 = max(float(np.median(np.concatenate([y[:edge], y[-edge:]]))), 1e-3)
    start = np.array([max(y.max() - floor0, 1.0), t[np.argmax(y)], 1.0, floor0])

    def nll(theta):
        m = _binned_two_sided_exp(theta, t, w)
        return float(np.sum(m - y * np.log(np.maximum(m, 1e-300))))

    bounds = [(1e-9, None), (t[0], t[-1]), (w / 10, 0.5 * (t[-1] - t[0])), (0.0, None)]
    result = minimize(nll, start, method="L-BFGS-B", bounds=bounds)
    theta = result.x
    if not np.all(np.isfinite(theta)):
        raise ValueError("correlation-time fit failed")
    jac = np.empty((t.size, 4))
    for j in range(4):
        h = 1e-6 * max(abs(theta[j]), 1e-3)
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        jac[:, j] = (_binned_two_sided_exp(up, t, w) - _binned_two_sided_exp(down, t, w)) / (2 * h)
    m = np.maximum(_binned_two_sided_exp(theta, t, w), 1e-12)
    covariance = np.linalg.pinv((jac / m[:, None]).T @ jac)
    scale_err = float(np.sqrt(max(covariance[2, 2], 0.0)))
    return float(2.0 * theta[2] * ns), 2.0 * scale_err * ns


@dataclass(frozen=True)
class CorrelationReport:
    g_cross_peak: float
    g_cross_err: float
    g_auto1: float
    g_auto1_err: float
    g_auto2: float
    g_auto2_err: float
    R: float
    R_err: float
    verdict: str
    peak_lag: float
    tau_c_est: float
    tau_c_err: float
    bin_width: float
    auto_bin_width: float
    n1: int
    n2: int
    duration: float
    histogram: Histogram = field(repr=False, compare=False)

    def as_dict(self) -> dict:
        keys = ("g_cross_peak", "g_cross_err", "g_auto1", "g_auto1_err", "g_auto2",
                "g_auto2_err", "R", "R_err", "verdict", "peak_lag", "tau_c_est",
                "tau_c_err", "bin_width", "auto_bin_width", "n1", "n2", "duration")
        return {k: getattr(self, k) for k in keys}


def correlation_report(s1: TagStream, s2: TagStream, bin_width: float = 2e-9,
                       lag_range: Optional[LagRange] = None, fiber_delay: float = 1000e-9,
                       auto_bin_width: float = 1e-6,
                       tau_bin_width: float = 100e-12) -> CorrelationReport:
    """End-to-end Cauchy-Schwarz analysis of a pair of streams.

    ``g_cross_peak`` is read in the bin containing ``fiber_delay``, where
    correlated pairs land; picking the largest bin instead would bias
    uncorrelated data upward. ``peak_lag`` is the centre of the largest bin
    in ``lag_range`` (default: ``fiber_delay`` +/- 50 bins), a check that
    the pairs really sit at the expected delay. Autocorrelations are read
    at the bin nearest zero lag, with bin width ``auto_bin_width``; they are
    only meaningful for ungated streams. If the peak fit fails the
    correlation time is NaN.
    """
    if lag_range is None:
        lag_range = (fiber_delay - 50 * bin_width, fiber_delay + 50 * bin_width)
    lags, g, g_err = g2_cross(s1, s2, bin_width, lag_range)
    hist = coincidence_histogram(s1, s2, bin_width, lag_range)
    peak = int(np.argmax(g))
    k = int(np.argmin(np.abs(lags - fiber_delay)))
    auto = []
    for s in (s1, s2):
        a_lags, a, a_err = g2_auto(s, auto_bin_width, 0.5 * auto_bin_width)
        i0 = int(np.argmin(np.abs(a_lags)))
        auto.append((float(a[i0]), float(a_err[i0])))
    (a1, a1e), (a2, a2e) = auto
    cs = cs_factor(float(g[k]), a1, a2, float(g_err[k]), a1e, a2e)
    try:
        tau, tau_err = estimate_tau_c(s1, s2, fiber_delay, tau_bin_width)
    except ValueError:
        tau, tau_err = math.nan, math.nan
    return CorrelationReport(
        g_cross_peak=float(g[k]), g_cross_err=float(g_err[k]),
        g_auto1=a1, g_auto1_err=a1e, g_auto2=a2, g_auto2_err=a2e,
        R=cs.R, R_err=cs.R_err, verdict=cs.verdict, peak_lag=float(lags[peak]),
        tau_c_est=tau, tau_c_err=tau_err, bin_width=hist.bin_width,
        auto_bin_width=auto_bin_width, n1=len(s1), n2=len(s2),
        duration=_common_duration(s1, s2), histogram=hist,
    )


# --------------------------------------------------------------------------
# profile estimators


def _parabolic_extremum(x, y, i):
    """Vertex ``(position, value, value_variance)`` of the parabola through
    samples ``i-1, i, i+1``; the variance assumes Poisson samples."""
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    var = np.maximum([y0, y1, y2], 1.0)
    curvature = y0 - 2 * y1 + y2
    if curvature == 0:
        return x[i], y1, var[1]
    slope = y0 - y2
    shift = 0.5 * slope / curvature
    step = 0.5 * (x[i + 1] - x[i - 1])
    value = y1 - slope ** 2 / (8 * curvature)
    q = slope / (4 * curvature)
    grad = np.array([-q + 0.5 * q ** 2, 1 - q ** 2, q + 0.5 * q ** 2])
    return x[i] + shift * step, value, float(grad ** 2 @ var)


def _local_extrema(y, sign):
    z = sign * y
    return np.where((z[1:-1] >= z[:-2]) & (z[1:-1] > z[2:]))[0] + 1


def visibility(profile: CoincidenceProfile, region: Optional[Tuple[float, float]] = None):
    """Fringe visibility ``(Imax - Imin) / (Imax + Imin)`` and its error.

    ``Imax`` is the tallest interior maximum in ``region``; ``Imin`` averages
    the nearest minimum on each side of it. Extrema are refined by
    parabolic interpolation. The error assumes raw Poisson counts and carries
    them through the interpolation to first order; at low counts, noise
    that shifts an extremum to a neighbouring sample adds scatter it does
    not capture.
    """
    x = profile.positions
    y = profile.coincidences
    if region is not None:
        keep = (x >= region[0]) & (x <= region[1])
        x, y = x[keep], y[keep]
    if not np.all(np.isfinite(y)):
        raise ValueError("profile contains non-finite values")
    if x.size < 5:
        raise ValueError("window too small: need at least five samples")
    if np.ptp(y) == 0:
        return 0.0, 0.0
    maxima = _local_extrema(y, +1)
    minima = _local_extrema(y, -1)
    if maxima.size == 0 or minima.size == 0:
        raise ValueError("window too small: no full fringe inside it")
    i_max = maxima[np.argmax(y[maxima])]
    left = minima[minima < i_max]
    right = minima[minima > i_max]
    sides = list(left[-1:]) + list(right[:1])
    _, top, var_top = _parabolic_extremum(x, y, i_max)
    vertices = [_parabolic_extremum(x, y, int(i)) for i in sides]
    bottom = float(np.mean([max(v[1], 0.0) for v in vertices]))
    var_bottom = sum(v[2] for v in vertices) / len(vertices) ** 2
    total = top + bottom
    if total <= 0:
        raise ValueError("visibility undefined for an all-zero window")
    V = (top - bottom) / total
    err = 2.0 * math.sqrt(bottom ** 2 * var_top + top ** 2 * var_bottom) / total ** 2
    return float(V), float(err)


def fringe_component(profile: Union[CoincidenceProfile, Tuple[np.ndarray, np.ndarray]],
                     spatial_frequency: float, values: str = "coincidences") -> float:
    """Fourier amplitude at ``spatial_frequency`` (1/m) relative to the DC
    term, computed on the mean-subtracted values.

    ``values`` picks the profile column. A unit-contrast cosine at the probed
    frequency over whole periods gives 0.5.
    """
    if isinstance(profile, CoincidenceProfile):
        x = profile.positions
        y = getattr(profile, values)
        if y is None:
            raise ValueError(f"profile has no {values} column")
    else:
        x, y = (np.asarray(v, dtype=float) for v in profile)
    if x.size > 2:
        steps = np.diff(x)
        if np.ptp(steps) > 1e-6 * abs(steps.mean()):
            raise ValueError("fringe_component needs uniformly spaced positions")
    dc = abs(np.sum(y))
    if dc == 0:
        raise ValueError("profile has zero mean")
    # removing the mean keeps a flat profile at exactly zero even when the
    # window does not hold a whole number of periods
    ac = y - y.mean()
    return float(abs(np.sum(ac * np.exp(-2j * np.pi * spatial_frequency * x))) / dc)

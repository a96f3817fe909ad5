"""Levenberg-Marquardt fit of coincidence profiles to the two-slit pattern.

Slit width and separation are fitted as logarithms so they stay positive;
visibility is kept in ``[0, 1]`` by projecting each trial step. Residuals
are Poisson-weighted, ``sigma_i^2 = max(y_i, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytic import PatternParams, fringe_period, ghost_pattern
from .model import CoincidenceProfile

__all__ = [
    "FitError",
    "DegenerateFitError",
    "FitResult",
    "FIT_PARAMETERS",
    "fit_ghost_pattern",
    "seed_fringe_period",
    "initial_guess",
    "fit_profile",
]

FIT_PARAMETERS = ("a", "d", "x0", "amplitude", "baseline", "visibility")
_LOG_PARAMS = ("a", "d")

REL_DECREASE_TOL = 1e-9
GRADIENT_TOL = 1e-4
MAX_ITERATIONS = 200
RANK_TOL = 1e-9
# slit width / separation ratios tried when no width is given
_WIDTH_RATIOS = (0.25, 0.4, 0.6)


class FitError(ValueError):
    pass


class DegenerateFitError(FitError):
    """Jacobian is rank-deficient; ``parameters`` names the degenerate set."""

    def __init__(self, parameters):
        self.parameters = tuple(parameters)
        super().__init__("rank-deficient Jacobian; degenerate parameters: "
                         + ", ".join(self.parameters))


@dataclass
class FitResult:
    params: PatternParams
    free: tuple
    covariance: Optional[np.ndarray]
    errors: dict
    residual_norm: float
    chi2_per_dof: float
    iterations: int
    converged: bool
    gradient_norm: float
    trace: list = field(default_factory=list)

    def error(self, name: str) -> float:
        return self.errors.get(name, float("nan"))


def _to_internal(p: PatternParams, free) -> np.ndarray:
    return np.array([np.log(getattr(p, n)) if n in _LOG_PARAMS else getattr(p, n)
                     for n in free], dtype=float)


def _from_internal(theta, template: PatternParams, free) -> PatternParams:
    # clipped so a wild trial step yields an invalid length, not an overflow
    values = {n: (float(np.exp(min(t, 700.0))) if n in _LOG_PARAMS else float(t))
              for n, t in zip(free, theta)}
    return _build(template, values)


def _build(template, values):
    merged = {**template.__dict__, **values}
    # keep the object constructible while a trial step wanders
    merged["visibility"] = min(max(merged["visibility"], 0.0), 1.0)
    return PatternParams(**merged)


def _project(theta, free):
    theta = theta.copy()
    if "visibility" in free:
        i = free.index("visibility")
        theta[i] = min(max(theta[i], 0.0), 1.0)
    return theta


def _typical_scales(p: PatternParams, free, y) -> np.ndarray:
    yscale = max(float(np.max(np.abs(y))), 1e-12)
    table = {
        "a": 1.0,
        "d": 1.0,
        "x0": fringe_period(p),
        "amplitude": yscale,
        "baseline": yscale,
        "visibility": 1.0,
    }
    return np.array([table[n] for n in free])


def _degenerate_names(jac, free) -> list:
    norms = np.linalg.norm(jac, axis=0)
    zero = [n for n, c in zip(free, norms) if c == 0]
    if zero:
        return zero
    _, s, vt = np.linalg.svd(jac / norms, full_matrices=False)
    null = vt[s < RANK_TOL * s[0]]
    if null.size == 0:
        return []
    involved = np.max(np.abs(null), axis=0)
    return [n for n, c in zip(free, involved) if c > 0.1]


def fit_ghost_pattern(profile: CoincidenceProfile, initial: PatternParams,
                      free: Sequence[str] = FIT_PARAMETERS,
                      max_iterations: int = MAX_ITERATIONS) -> FitResult:
    """Weighted least-squares fit of :func:`ghost_pattern` to ``profile``.

    Parameters not listed in ``free`` stay at their ``initial`` values.
    Raises :class:`DegenerateFitError` if the Jacobian at the solution is
    rank-deficient; returns ``converged=False`` with the best point found if
    the iteration budget runs out.
    """
    free = tuple(free)
    unknown = set(free) - set(FIT_PARAMETERS)
    if unknown:
        raise FitError(f"cannot fit {sorted(unknown)}")
    x = profile.positions
    y = profile.coincidences
    if not np.all(np.isfinite(y)):
        raise FitError("profile contains non-finite values")
    if x.size < 2 * len(free):
        raise FitError(f"need at least {2 * len(free)} points for {len(free)} free parameters")
    inv_sigma = 1.0 / np.sqrt(np.maximum(y, 1.0))

    def residuals(theta):
        try:
            p = _from_internal(theta, initial, free)
        except ValueError:
            # trial step left the valid region (e.g. a >= d); reject it
            return np.full(x.size, np.inf)
        return (ghost_pattern(x, p) - y) * inv_sigma

    scales = _typical_scales(initial, free, y)

    def jacobian(theta, r0):
        jac = np.empty((x.size, len(free)))
        for j in range(len(free)):
            h = np.sqrt(np.finfo(float).eps) * max(abs(theta[j]), scales[j])
            step = theta.copy()
            step[j] += h
            if free[j] == "visibility" and step[j] > 1.0:
                h = -h
                step[j] = theta[j] + h
            r_step = residuals(step)
            if not np.all(np.isfinite(r_step)):
                # forward step crossed a validity boundary
                h = -h
                step[j] = theta[j] + h
                r_step = residuals(step)
            jac[:, j] = (r_step - r0) / h
        return jac

    def projected_gradient(theta, g):
        g = g.copy()
        if "visibility" in free:
            i = free.index("visibility")
            if (theta[i] <= 0.0 and g[i] > 0) or (theta[i] >= 1.0 and g[i] < 0):
                g[i] = 0.0
        return g

    def gradient_measure(theta, jac, r):
        # largest cosine between the residual and a Jacobian column
        g = projected_gradient(theta, jac.T @ r)
        denom = np.linalg.norm(jac, axis=0) * max(np.linalg.norm(r), 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = np.where(denom > 0, np.abs(g) / denom, 0.0)
        return float(np.max(cos))

    theta = _project(_to_internal(initial, free), free)
    r = residuals(theta)
    cost = float(r @ r)
    data_scale = float(np.sum((y * inv_sigma) ** 2)) or 1.0
    jac = jacobian(theta, r)
    normal = jac.T @ jac
    # damping is relative to the Marquardt diagonal, so mu is dimensionless
    mu = 1e-3
    nu = 2.0
    trace = [cost]
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        g = jac.T @ r
        diag = np.maximum(np.diag(normal), 1e-300)
        try:
            delta = np.linalg.solve(normal + mu * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2
            continue
        trial = _project(theta + delta, free)
        step = trial - theta
        r_new = residuals(trial)
        with np.errstate(over="ignore", invalid="ignore"):
            cost_new = float(r_new @ r_new)
        predicted = -(2 * step @ g + step @ normal @ step)
        if cost_new < cost:
            decrease = (cost - cost_new) / cost
            rho = (cost - cost_new) / predicted if predicted > 0 else 0.0
            theta, r, cost = trial, r_new, cost_new
            trace.append(cost)
            jac = jacobian(theta, r)
            normal = jac.T @ jac
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if cost <= 1e-26 * data_scale:
                converged = True
                break
            if decrease < REL_DECREASE_TOL and gradient_measure(theta, jac, r) < GRADIENT_TOL:
                converged = True
                break
        else:
            mu *= nu
            nu *= 2.0
            if mu > 1e20:
                converged = gradient_measure(theta, jac, r) < GRADIENT_TOL
                break

    gmeasure = 0.0 if cost <= 1e-26 * data_scale else gradient_measure(theta, jac, r)
    degenerate = _degenerate_names(jac, free)
    if degenerate:
        raise DegenerateFitError(degenerate)

    params = _from_internal(theta, initial, free)
    covariance = None
    errors = {}
    try:
        cov_internal = np.linalg.inv(normal)
    except np.linalg.LinAlgError:
        cov_internal = None
    if cov_internal is not None:
        # internal -> physical: a = exp(log a)
        scale = np.array([getattr(params, n) if n in _LOG_PARAMS else 1.0 for n in free])
        covariance = cov_internal * np.outer(scale, scale)
        errors = {n: float(np.sqrt(max(covariance[i, i], 0.0))) for i, n in enumerate(free)}
    dof = max(x.size - len(free), 1)
    return FitResult(
        params=params,
        free=free,
        covariance=covariance,
        errors=errors,
        residual_norm=float(np.sqrt(cost)),
        chi2_per_dof=cost / dof,
        iterations=iterations,
        converged=converged,
        gradient_norm=gmeasure,
        trace=trace,
    )


def _spectral_peaks(profile: CoincidenceProfile, oversample: int = 16):
    x = profile.positions
    steps = np.diff(x)
    if not np.allclose(steps, steps[0], rtol=1e-6):
        raise FitError("Fourier seeding needs uniformly spaced positions")
    y = profile.coincidences - profile.coincidences.mean()
    n = oversample * x.size
    spectrum = np.abs(np.fft.rfft(y, n))
    freqs = np.fft.rfftfreq(n, steps[0])
    # at least two fringes must fit in the window; lower frequencies belong
    # to the envelope
    window = x[-1] - x[0] + steps[0]
    inner = spectrum[1:-1]
    is_peak = (inner >= spectrum[:-2]) & (inner > spectrum[2:]) & (freqs[1:-1] >= 2.0 / window)
    idx = np.flatnonzero(is_peak) + 1
    if idx.size == 0:
        raise FitError("no fringe peak in the profile spectrum")
    idx = idx[np.argsort(spectrum[idx])[::-1]]
    return 1.0 / freqs[idx]


def seed_fringe_period(profile: CoincidenceProfile, oversample: int = 16) -> float:
    """Fringe period from the strongest spectral peak of the profile,
    ignoring frequencies below two cycles per scan window."""
    return float(_spectral_peaks(profile, oversample)[0])


def initial_guess(profile: CoincidenceProfile, lambda2: float, f: float,
                  a: Optional[float] = None, d: Optional[float] = None) -> PatternParams:
    """Starting point for :func:`fit_ghost_pattern`.

    ``d`` defaults to the Fourier-seeded value; ``a`` to ``0.4 d``.
    """
    if d is None:
        d = lambda2 * f / seed_fringe_period(profile)
    if a is None or a >= d:
        a = 0.4 * d
    y = profile.coincidences
    x = profile.positions
    weights = np.clip(y - y.min(), 0, None)
    x0 = float(np.sum(weights * x) / np.sum(weights)) if weights.sum() > 0 else 0.0
    return PatternParams(
        a=a, d=d, lambda2=lambda2, f=f, x0=x0,
        amplitude=float(max(y.max() - y.min(), 1e-12)) * 1.5,
        baseline=float(max(y.min(), 0.0)),
        visibility=0.7,
    )


def fit_profile(profile: CoincidenceProfile, lambda2: float, f: float,
                a: Optional[float] = None, d: Optional[float] = None,
                free: Sequence[str] = FIT_PARAMETERS, n_starts: int = 3) -> FitResult:
    """Fit with Fourier-seeded starting points.

    Each of the ``n_starts`` strongest spectral peaks seeds the separation
    (an explicit ``d`` gives a single seed). Without an explicit ``a`` each
    separation seed is tried with several width-to-separation ratios, since
    the envelope alone has competing minima. The lowest residual wins.
    """
    if d is not None:
        periods = [lambda2 * f / d]
    else:
        try:
            periods = list(_spectral_peaks(profile)[:n_starts])
        except FitError:
            # featureless data: still run LM so the rank check names the
            # degenerate parameters
            periods = [0.25 * (profile.positions[-1] - profile.positions[0])]
    step = float(np.min(np.diff(profile.positions)))
    best = None
    failure = FitError("every seeded fit failed")
    starts = []
    for period in periods:
        seed_d = lambda2 * f / period
        widths = [a] if a is not None else [r * seed_d for r in _WIDTH_RATIOS]
        starts.extend((seed_d, w) for w in widths)
    for seed_d, seed_a in starts:
        guess = initial_guess(profile, lambda2, f, a=seed_a, d=seed_d)
        try:
            result = fit_ghost_pattern(profile, guess, free)
        except FitError as exc:
            failure = exc
            continue
        # on a uniform scan, periods below two samples alias onto real ones
        if fringe_period(result.params) < 2 * step:
            continue
        if best is None or result.residual_norm < best.residual_norm:
            best = result
    if best is None:
        raise failure
    return best

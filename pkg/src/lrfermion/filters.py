"""Time-domain filter functions whose Fourier transforms approximate sgn(w) and 1/(z - w).

The transform convention is F[f](w) = int dt/(2 pi) f(t) e^{-iwt}.

erf_sign:  f(t) = 2i e^{-sigma^2 t^2/4} / t,        F[f](w) = erf(w/sigma)
green:     f(t) = i pi e^{izt} [erf(sigma t/2 + gamma/sigma) - sgn t],  gamma = -Im z,
           F[f](w) = (1 - e^{-|w - z|^2/sigma^2}) / (z - w)

The green filter is evaluated through erfc/erfcx so that the product of the
growing e^{gamma t} and the vanishing complementary error function never
overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

FILTER_KINDS = ("erf_sign", "green")
TAIL_CUTOFF = 1e-14


@dataclass(frozen=True)
class FilterEvaluation:
    kind: str
    sigma: float
    z: complex | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.kind == "green" and self.z is None:
            raise ValueError("green filter needs z")

    @property
    def gamma(self) -> float:
        return -float(np.imag(self.z)) if self.z is not None else 0.0

    def __call__(self, t):
        return filter_eval(self.kind, self.sigma, t, self.z)

    def fourier_target(self, omega):
        return fourier_target(self.kind, self.sigma, omega, self.z)


def erf_filter(t, sigma: float):
    """2i e^{-sigma^2 t^2/4}/t, with the odd-function value 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t == 0, 1.0, t)
    return np.where(t == 0, 0.0, 2j * np.exp(-0.25 * sigma**2 * t**2) / safe)


def green_filter_log_abs(t, sigma: float, gamma: float):
    """log |f(t)| of the green filter for t != 0 (t = 0 gives the 0+ limit)."""
    t = np.asarray(t, dtype=float)
    u = 0.5 * sigma * t + gamma / sigma
    # t >= 0: pi e^{gamma t} erfc(u);  t < 0: pi e^{gamma t} erfc(-u)
    w = np.where(t >= 0, u, -u)
    with np.errstate(divide="ignore"):
        big = np.log(special.erfcx(np.maximum(w, 0.0))) - 0.25 * sigma**2 * t**2 - gamma**2 / sigma**2
        small = gamma * t + np.log(special.erfc(np.minimum(w, 0.0)))
    return math.log(math.pi) + np.where(w > 0, big, small)


def green_filter(t, sigma: float, z: complex):
    """i pi e^{izt} [erf(sigma t/2 + gamma/sigma) - sgn t]; t = 0 returns the mean of the 0+/0- limits."""
    t = np.asarray(t, dtype=float)
    gamma = -float(np.imag(z))
    mag = np.exp(green_filter_log_abs(t, sigma, gamma))
    # erf(u) - sgn t is negative for t > 0 and positive for t < 0
    signed = np.where(t > 0, -mag, mag)
    out = 1j * signed * np.exp(1j * float(np.real(z)) * t)
    if np.any(t == 0):
        lo, hi = green_filter_jumps(sigma, z)
        out = np.where(t == 0, 0.5j * (hi - lo), out)
    return out


def green_filter_jumps(sigma: float, z: complex) -> tuple[float, float]:
    """(|f(0+)|, |f(0-)|) = (pi [1 - erf(gamma/sigma)], pi [1 + erf(gamma/sigma)])."""
    g = -float(np.imag(z)) / sigma
    return math.pi * float(special.erfc(g)), math.pi * float(special.erfc(-g))


def filter_eval(kind: str, sigma: float, t, z: complex | None = None):
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if kind == "erf_sign":
        return erf_filter(t, sigma)
    if kind == "green":
        if z is None:
            raise ValueError("green filter needs z")
        return green_filter(t, sigma, z)
    raise ValueError(f"unknown filter kind {kind!r}")


def fourier_target(kind: str, sigma: float, omega, z: complex | None = None):
    omega = np.asarray(omega, dtype=float)
    if kind == "erf_sign":
        return special.erf(omega / sigma)
    diff = z - omega
    safe = np.where(diff == 0, 1.0, diff)
    # the removable singularity at omega = z has limit 0
    return np.where(diff == 0, 0.0, -np.expm1(-np.abs(diff) ** 2 / sigma**2) / safe)


def time_cutoff(kind: str, sigma: float, z: complex | None = None, cutoff: float = TAIL_CUTOFF) -> float:
    """Smallest T (up to a factor 2) with |f(t)| < cutoff for all |t| >= T."""
    if kind == "erf_sign":
        # 2 e^{-sigma^2 T^2/4}/T < cutoff is implied by e^{-sigma^2 T^2/4} < cutoff
        return 2.0 * math.sqrt(math.log(1.0 / cutoff)) / sigma
    gamma = -float(np.imag(z))
    T = 1.0 / sigma + 2.0 * abs(gamma) / sigma**2
    while max(green_filter_log_abs([T, -T], sigma, gamma)) > math.log(cutoff):
        T *= 2.0
    return T


def fourier_quadrature(kind: str, sigma: float, omega: float, z: complex | None = None) -> complex:
    """int dt/(2 pi) f(t) e^{-i omega t} by adaptive Gauss-Kronrod, truncated at the filter tail."""
    T = time_cutoff(kind, sigma, z)
    opts = dict(limit=2000, epsabs=1e-13, epsrel=1e-12)
    if kind == "erf_sign":
        # odd filter: the transform reduces to (2/pi) int_0^T e^{-s^2 t^2/4} sin(wt)/t dt
        g = lambda t: math.exp(-0.25 * sigma**2 * t * t) * omega * np.sinc(omega * t / math.pi)
        val, _ = integrate.quad(g, 0.0, T, **opts)
        return complex(2.0 / math.pi * val)

    def part(fn, a, b):
        re, _ = integrate.quad(lambda t: fn(t).real, a, b, **opts)
        im, _ = integrate.quad(lambda t: fn(t).imag, a, b, **opts)
        return complex(re, im)

    integrand = lambda t: complex(green_filter(t, sigma, z)) * complex(math.cos(omega * t), -math.sin(omega * t))
    return (part(integrand, -T, 0.0) + part(integrand, 0.0, T)) / (2.0 * math.pi)


def filter_fourier_check(kind: str, sigma: float, omega: float, z: complex | None = None) -> float:
    """|quadrature transform - closed-form target| at frequency ``omega``."""
    return abs(fourier_quadrature(kind, sigma, omega, z) - complex(fourier_target(kind, sigma, omega, z)))


def green_filter_monotone(sigma: float, z: complex, points: int = 400, span: float = 10.0) -> bool:
    """|f| strictly decreasing on (0, span/sigma] and strictly increasing on [-span/sigma, 0)."""
    gamma = -float(np.imag(z))
    t = np.linspace(0.0, span / sigma, points + 1)[1:]
    pos = green_filter_log_abs(t, sigma, gamma)
    neg = green_filter_log_abs(-t[::-1], sigma, gamma)
    return bool(np.all(np.diff(pos) < 0) and np.all(np.diff(neg) > 0))


def sign_transform_by_quadrature(energies: np.ndarray, sigma: float, T: float | None = None, order: int = 24) -> np.ndarray:
    """F(e) = (2/pi) int_0^T e^{-sigma^2 t^2/4} sin(e t)/t dt for each energy.

    Composite Gauss-Legendre with panels short enough to resolve the fastest
    oscillation; this is the eigenbasis form of int dt/(2 pi) f(t) e^{-iHt}.
    """
    energies = np.asarray(energies, dtype=float)
    T = T if T is not None else time_cutoff("erf_sign", sigma)
    emax = float(np.max(np.abs(energies))) if energies.size else 0.0
    panels = int(math.ceil(T * (emax + sigma) / 2.0)) + 8
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, T, panels + 1)
    half = 0.5 * np.diff(edges)
    t = (edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)).reshape(-1)
    wt = (half[:, None] * w[None, :]).reshape(-1) * np.exp(-0.25 * sigma**2 * t**2) / t
    out = np.empty_like(energies)
    for start in range(0, energies.size, 256):
        e = energies[start : start + 256]
        out[start : start + 256] = np.sin(np.outer(e, t)) @ wt
    return 2.0 / math.pi * out

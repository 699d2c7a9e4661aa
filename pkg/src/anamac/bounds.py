"""Numerical security bounds.

Capacity of the binary-input AWGN channel, the key-equivocation lower bound
it implies, Shannon's 1959 sphere-packing bound on block decoding error,
the D(alpha, beta) deception function, distance-spectrum based equivocation
approximations and a few code-theoretic utilities.

Quadrature notes
----------------
* ``bi_awgn_capacity`` integrates over ``y ~ N(beta, 1)`` with
  ``scipy.integrate.quad`` (epsabs 1e-10) on ``beta +- 40``.
* The sphere-packing auxiliary ``f_l`` is evaluated in log space: the
  integrand of ``int_0^inf z^(l-1) exp(-z^2/2 + z x) dz`` is centred on its
  mode and summed with the trapezoid rule on a 1201-point grid spanning
  +-40 standard deviations of the Laplace approximation (log-sum-exp).
* The cone angle ``theta`` is found by bisection on ``(0, pi)`` from the
  log solid-angle fraction, itself an adaptive integral of ``sin^(l-2)``
  rescaled by its maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp, ndtr

from .mac_core import coding_rate

LN2 = math.log(2.0)


class SolverError(ArithmeticError):
    """A numerical solver failed to converge."""


@dataclass(frozen=True)
class BoundReport:
    name: str
    params: Mapping[str, float]
    value: float
    units: str

    def __post_init__(self):
        if self.units == "probability" and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"{self.name}: probability {self.value} outside [0, 1]")
        if self.units == "bits" and "n" in self.params:
            if not (-1e-9 <= self.value <= self.params["n"] + 1e-9):
                raise ValueError(f"{self.name}: equivocation {self.value} outside [0, n]")


@dataclass(frozen=True, eq=False)
class DistanceDistribution:
    """Mean number ``A_d`` of codewords at distance ``d`` from a fixed codeword.

    Weights are held as natural logs so codes with 2^n far beyond float range
    still work; ``counts`` keeps the raw histogram when the distribution was
    measured rather than derived.
    """

    l: int
    log_weights: np.ndarray
    counts: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=np.float64)
        if lw.shape != (self.l + 1,):
            raise ValueError(f"expected {self.l + 1} weights, got shape {lw.shape}")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_weights(cls, weights, counts=None) -> "DistanceDistribution":
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("distance weights must be non-negative")
        with np.errstate(divide="ignore"):
            return cls(len(w) - 1, np.log(w), counts)

    @classmethod
    def point_mass(cls, l: int, d: int, n: int) -> "DistanceDistribution":
        """Equidistant code of 2^n words: one word at 0, the rest at ``d``."""
        lw = np.full(l + 1, -np.inf)
        lw[0] = 0.0
        lw[d] = np.logaddexp(lw[d], math.log(2.0 ** n - 1.0) if n < 1000 else n * LN2)
        return cls(l, lw)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def log_size(self) -> float:
        return float(logsumexp(self.log_weights))

    def pmf(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_size())

    def mean_distance(self, n: int) -> float:
        """``2^-n * sum_d d A_d``."""
        d = np.arange(1, self.l + 1)
        lw = self.log_weights[1:]
        if np.all(np.isneginf(lw)):
            return 0.0
        return float(np.exp(logsumexp(lw, b=d) - n * LN2))


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def _log_binom(l: int, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    return gammaln(l + 1.0) - gammaln(d + 1.0) - gammaln(l - d + 1.0)


def random_code_distribution(l: int, n: int) -> DistanceDistribution:
    """``A_d = C(l, d) 2^{-l(1 - R_c)}`` with ``R_c = n / l``."""
    if l < 1 or n < 0:
        raise ValueError("need l >= 1 and n >= 0")
    d = np.arange(l + 1)
    return DistanceDistribution(l, _log_binom(l, d) + (n - l) * LN2)


# -- capacity and equivocation -------------------------------------------------

def _capacity_scalar(gamma_t: float) -> float:
    if gamma_t < 0:
        raise ValueError("gamma_t must be non-negative")
    if gamma_t == 0:
        return 0.0
    beta = math.sqrt(2.0 * gamma_t)
    if beta > 40.0:
        return 1.0

    def integrand(y):
        return math.exp(-0.5 * (y - beta) ** 2) * np.logaddexp(0.0, -2.0 * beta * y)

    val, _ = integrate.quad(integrand, beta - 40.0, beta + 40.0, points=[0.0, beta],
                            epsabs=1e-10, epsrel=1e-10, limit=200)
    c = 1.0 - val / (math.sqrt(2.0 * math.pi) * LN2)
    return min(1.0, max(0.0, c))


def bi_awgn_capacity(gamma_t):
    """Capacity (bits per channel use) of the bipolar-input AWGN channel."""
    if np.ndim(gamma_t) == 0:
        return _capacity_scalar(float(gamma_t))
    return np.array([_capacity_scalar(float(g)) for g in np.ravel(gamma_t)]).reshape(np.shape(gamma_t))


def normalized_equivocation_bound(n: int, l: int, r: int, gamma_t: float) -> float:
    """``max(0, 1 - C2(gamma_t) / R_c(r))``."""
    return max(0.0, 1.0 - bi_awgn_capacity(gamma_t) / coding_rate(n, r, l))


def equivocation_lower_bound(n: int, l: int, r: int, gamma_t: float) -> float:
    """Lower bound (bits) on H(K | r noisy tags)."""
    return n * normalized_equivocation_bound(n, l, r, gamma_t)


def equivocation_approx(n: int, l: int, gamma_t: float, dist: DistanceDistribution) -> float:
    """Heuristic equivocation ``n - 4 gamma_t dbar / ln 2`` from a distance spectrum."""
    if dist.l != l:
        raise ValueError(f"distribution is for l={dist.l}, expected {l}")
    return n - 4.0 * gamma_t * dist.mean_distance(n) / LN2


def deception_D(alpha: float, beta: float) -> float:
    """``alpha log2(alpha/(1-beta)) + (1-alpha) log2((1-alpha)/beta)``, 0 log 0 = 0."""
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ValueError("alpha and beta must be probabilities")

    def term(p, q):
        if p == 0.0:
            return 0.0
        if q == 0.0:
            return math.inf
        return p * math.log2(p / q)

    return term(alpha, 1.0 - beta) + term(1.0 - alpha, beta)


# -- sphere packing ------------------------------------------------------------

def _log_sin_power_integral(l: int, theta: float) -> float:
    """``log int_0^theta sin(phi)^(l-2) dphi``."""
    if theta <= 0.0:
        return -math.inf
    m = l - 2
    if m == 0:
        return math.log(theta)
    peak = min(theta, math.pi / 2)
    log_peak = m * math.log(math.sin(peak))

    def f(phi):
        s = math.sin(phi)
        return 0.0 if s <= 0.0 else math.exp(m * math.log(s) - log_peak)

    # Below the peak the integrand is concentrated near the upper end.
    width = 1.0 / math.sqrt(m)
    pts = [p for p in (peak - 10 * width, peak - width, peak) if 0.0 < p < theta]
    val, _ = integrate.quad(f, 0.0, theta, points=pts or None, epsabs=0.0,
                            epsrel=1e-12, limit=400)
    return log_peak + math.log(val)


def _log_sin_power_full(l: int) -> float:
    """``log int_0^pi sin(phi)^(l-2) dphi`` (Wallis)."""
    m = l - 2
    return 0.5 * math.log(math.pi) + gammaln((m + 1) / 2.0) - gammaln(m / 2.0 + 1.0)


def log_solid_angle_fraction(l: int, theta: float) -> float:
    """``log(Omega_l(theta) / Omega_l(pi))``: cone of half-angle theta on the l-sphere."""
    if l < 2:
        raise ValueError("need l >= 2")
    if theta >= math.pi:
        return 0.0
    if theta > math.pi / 2:
        # Complement is a cone around the opposite pole.
        rest = _log_sin_power_integral(l, math.pi - theta) - _log_sin_power_full(l)
        return math.log1p(-math.exp(rest))
    return _log_sin_power_integral(l, theta) - _log_sin_power_full(l)


def sp59_theta(l: int, rate: float, tol: float = 1e-9) -> float:
    """Cone half-angle whose solid-angle fraction equals ``2^(-l rate)``."""
    if not 0.0 < rate:
        raise ValueError("rate must be positive")
    target = -l * rate * LN2
    lo, hi = 0.0, math.pi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = log_solid_angle_fraction(l, mid)
        if abs(val - target) <= tol:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    val = log_solid_angle_fraction(l, 0.5 * (lo + hi))
    if abs(val - target) > 1e-6:
        raise SolverError(f"theta bisection did not converge (l={l}, rate={rate})")
    return 0.5 * (lo + hi)


_ZGRID = np.linspace(-40.0, 40.0, 1201)


def log_f_l(l: int, x) -> np.ndarray:
    """``log f_l(x)`` with ``f_l(x) = int_0^inf z^(l-1) e^(-z^2/2+zx) dz / (2^((l-1)/2) Gamma((l+1)/2))``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    m = l - 1
    mode = 0.5 * (x + np.sqrt(x * x + 4.0 * m))
    scale = 1.0 / np.sqrt(m / mode ** 2 + 1.0)
    z = mode[:, None] + scale[:, None] * _ZGRID[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(z > 0, m * np.log(np.where(z > 0, z, 1.0)) - 0.5 * z * z + z * x[:, None], -np.inf)
    dz = scale * (_ZGRID[1] - _ZGRID[0])
    # Trapezoid in log space; endpoints are negligible or at z <= 0.
    w = np.ones_like(_ZGRID)
    w[0] = w[-1] = 0.5
    log_int = logsumexp(g, b=w[None, :], axis=1) + np.log(dz)
    return log_int - 0.5 * m * LN2 - gammaln((l + 1) / 2.0)


def _log_angle_density(l: int, gamma_t: float, phi: np.ndarray) -> np.ndarray:
    """Log density of the angle between a noisy codeword and its noiseless copy."""
    amp = math.sqrt(2.0 * l * gamma_t)
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    s = np.sin(phi)
    with np.errstate(divide="ignore"):
        log_s = np.where(s > 0, np.log(np.where(s > 0, s, 1.0)), -np.inf)
    base = math.log(l - 1) - 0.5 * math.log(2 * math.pi) - l * gamma_t
    return base + (l - 2) * log_s + log_f_l(l, amp * np.cos(phi))


def _angle_mass(l: int, gamma_t: float, a: float, b: float) -> float:
    """``int_a^b`` of the angle density, with ``0 <= a <= b <= pi``."""
    if b <= a:
        return 0.0
    grid = np.linspace(a, b, 257)
    shift = float(np.max(_log_angle_density(l, gamma_t, grid)))
    if not math.isfinite(shift):
        return 0.0

    def f(phi):
        return float(np.exp(_log_angle_density(l, gamma_t, phi)[0] - shift))

    peak = float(grid[np.argmax(_log_angle_density(l, gamma_t, grid))])
    pts = [peak] if a < peak < b else None
    val, _ = integrate.quad(f, a, b, points=pts, epsabs=0.0, epsrel=1e-9, limit=400)
    return val * math.exp(shift)


def sp59_from_theta(l: int, theta: float, gamma_t: float) -> float:
    """``Q(sqrt(2 l gamma_t)) + int_theta^(pi/2) (angle density)``.

    This is the probability that the noisy word leaves the cone of
    half-angle ``theta`` around the transmitted word.
    """
    if l < 2:
        raise ValueError("need l >= 2")
    if gamma_t == 0:
        return float(1.0 - math.exp(log_solid_angle_fraction(l, theta)))
    q = float(ndtr(-math.sqrt(2.0 * l * gamma_t)))
    if theta <= math.pi / 2:
        p = q + _angle_mass(l, gamma_t, theta, math.pi / 2)
    else:
        # Same expression; the pi/2..theta piece is subtracted, written without
        # cancellation as the mass beyond theta.
        p = _angle_mass(l, gamma_t, theta, math.pi)
    return min(1.0, max(0.0, p))


def sp59_bound(l: int, rate: float, gamma_t: float) -> float:
    """Sphere-packing lower bound on the block error probability of any decoder."""
    if l < 2:
        raise ValueError("need l >= 2")
    if not 0.0 < rate <= 1.0:
        raise ValueError("rate must lie in (0, 1]")
    if gamma_t < 0:
        raise ValueError("gamma_t must be non-negative")
    return sp59_from_theta(l, sp59_theta(l, rate), gamma_t)


# -- code-theoretic utilities --------------------------------------------------

def delsarte_bound(l: int, s: int) -> int:
    """Maximum size of a length-l binary code with ``s`` distinct distances."""
    if not 1 <= s <= l:
        raise ValueError("need 1 <= s <= l")
    return sum(math.comb(l, i) for i in range(s + 1))


def equidistant_design(l: int, M: int, n: int, rho: float) -> tuple[float, float]:
    """Optimal equidistant distance and the normalized distance balancing alpha = beta."""
    if M < 2:
        raise ValueError("need at least two codewords")
    d_opt = M * l / (2.0 * (M - 1))
    return d_opt, math.sqrt((1.0 - rho) ** 2 / n)


def bound_reports(n: int, l: int, r: int, gamma_t: float) -> list[BoundReport]:
    rate = coding_rate(n, r, l)
    params = {"n": n, "l": l, "r": r, "gamma_t": gamma_t, "rate": rate}
    return [
        BoundReport("bi_awgn_capacity", params, bi_awgn_capacity(gamma_t), "dimensionless"),
        BoundReport("equivocation_lower_bound", params,
                    equivocation_lower_bound(n, l, r, gamma_t), "bits"),
        BoundReport("sp59_bound", params, sp59_bound(r * l, min(rate, 1.0), gamma_t),
                    "probability"),
    ]

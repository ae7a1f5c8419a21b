"""Stochastic-geometry model of the ultra-dense caching network.

Base stations and users form independent homogeneous Poisson point processes
on a rectangular region. A user hears every base station inside a reception
ball of radius ``R``; signals decay with a bounded power law
``min(1, d^-alpha)`` and Rayleigh fading of unit mean. Only stations that
currently serve a user transmit, which thins the interferer process by the
active probability ``p_a``. The module provides both the closed-form
density-normalized interference / average-rate expressions used by the
solver and a Monte-Carlo path used to validate them.

All powers are converted from dBm to linear milliwatts before entering any
formula; distances are kilometres.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "GeometryConfig",
    "PointPattern",
    "RateModel",
    "dbm_to_mw",
    "sample_ppp",
    "active_probability",
    "path_loss",
    "normalized_interference",
    "monte_carlo_interference",
    "average_rate",
    "average_rate_monte_carlo",
    "nearest_sbs_distance",
    "request_region_count",
    "rate_model_from_config",
]


def dbm_to_mw(dbm: float) -> float:
    """Convert a dBm power to linear milliwatts."""
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class GeometryConfig:
    """Geometry and radio parameters of one network realization.

    Densities are per km^2, radii and region extent in km, powers in dBm.
    ``request_radius_km`` bounds the set of stations that can serve a given
    user (and whose caches can overlap); ``search_radius_km`` bounds the
    region whose request stream drives a station's popularity estimate.
    """

    lambda_b: float = 0.03
    lambda_u: float = 0.001
    reception_radius_km: float = 10.0 / math.sqrt(math.pi)
    request_radius_km: float = 4.0
    search_radius_km: float = 4.0
    path_loss_alpha: float = 4.0
    tx_power_dbm: float = 23.0
    noise_dbm: float = -70.0
    num_antennas: int = 1
    region_km: tuple[float, float] = (20.0, 20.0)

    def __post_init__(self) -> None:
        for name in ("lambda_b", "lambda_u", "reception_radius_km",
                     "request_radius_km", "search_radius_km",
                     "path_loss_alpha", "tx_power_dbm", "noise_dbm"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"geometry.{name} must be finite")
        if self.lambda_b <= 0:
            raise ConfigurationError("geometry.lambda_b must be > 0")
        if self.lambda_u < 0:
            raise ConfigurationError("geometry.lambda_u must be >= 0")
        if self.lambda_u > self.lambda_b:
            # Ultra-dense regime assumes more stations than users; still usable.
            warnings.warn(
                "geometry: lambda_u exceeds lambda_b; outside the ultra-dense "
                "regime the density-normalized interference model is a rough "
                "approximation",
                stacklevel=2,
            )
        if self.path_loss_alpha <= 2:
            raise ConfigurationError("geometry.path_loss_alpha must be > 2")
        if self.num_antennas < 1:
            raise ConfigurationError("geometry.num_antennas must be >= 1")
        for name in ("reception_radius_km", "request_radius_km", "search_radius_km"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"geometry.{name} must be > 0")
        w, h = self.region_km
        if not (w > 0 and h > 0):
            raise ConfigurationError("geometry.region_km sides must be > 0")

    @property
    def tx_power_mw(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_dbm)

    @property
    def beam_gain_factor(self) -> float:
        """Sectored-array factor multiplying interference in the SINR:
        (beamwidth / 2 pi) * main-lobe gain = sqrt(num_antennas)."""
        return float(np.sqrt(self.num_antennas))


@dataclass(frozen=True)
class PointPattern:
    """A realization of a planar point process on a rectangular region."""

    points: np.ndarray  # shape (n, 2), km
    intensity: float    # per km^2, generating density
    region: tuple[float, float]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        w, h = self.region
        if pts.size and not (
            (pts[:, 0] >= 0).all() and (pts[:, 0] <= w).all()
            and (pts[:, 1] >= 0).all() and (pts[:, 1] <= h).all()
        ):
            raise ConfigurationError("point pattern contains points outside its region")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class RateModel:
    """Inputs of the average-rate formula, all in linear units.

    ``noise_term`` is the noise power already normalized by antenna count and
    station density; ``interference_normalized`` is the density-normalized
    mean interference.
    """

    interference_normalized: float
    noise_term: float
    serving_distance_km: float
    fading_mean: float = 1.0

    def __post_init__(self) -> None:
        for name in ("interference_normalized", "noise_term",
                     "serving_distance_km", "fading_mean"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigurationError(f"rate model field {name} must be finite and >= 0")


def sample_ppp(intensity: float, region: tuple[float, float],
               rng: np.random.Generator) -> PointPattern:
    """Draw a homogeneous Poisson point pattern on ``[0,w] x [0,h]``.

    The count is Poisson(intensity * area) and positions are i.i.d. uniform.
    Deterministic given the generator state.
    """
    if not np.isfinite(intensity) or intensity < 0:
        raise ConfigurationError("ppp intensity must be finite and >= 0")
    w, h = region
    area = w * h
    if area <= 0:
        raise ConfigurationError("ppp region area must be > 0")
    n = int(rng.poisson(intensity * area))
    pts = np.column_stack((rng.uniform(0.0, w, n), rng.uniform(0.0, h, n)))
    return PointPattern(points=pts, intensity=intensity, region=(w, h))


def active_probability(lambda_u: float, lambda_b: float) -> float:
    """Probability that a station has at least one associated user.

    Uses the standard Poisson-Voronoi load approximation
    ``1 - (1 + lambda_u / (3.5 lambda_b))^-3.5``; increases with user density,
    decreases with station density.
    """
    if lambda_b <= 0:
        raise ConfigurationError("active_probability requires lambda_b > 0")
    if lambda_u < 0:
        raise ConfigurationError("active_probability requires lambda_u >= 0")
    return float(1.0 - (1.0 + lambda_u / (3.5 * lambda_b)) ** -3.5)


def path_loss(distance_km, alpha: float):
    """Bounded power-law gain ``min(1, d^-alpha)``; equals 1 within unit distance."""
    if alpha <= 2:
        raise ConfigurationError("path loss exponent must be > 2")
    d = np.asarray(distance_km, dtype=float)
    if np.any(d < 0):
        raise ConfigurationError("distance must be >= 0")
    with np.errstate(divide="ignore"):
        gain = np.minimum(1.0, np.where(d > 0, d, 1.0) ** (-alpha))
    return float(gain) if np.isscalar(distance_km) else gain


def normalized_interference(cfg: GeometryConfig) -> float:
    """Mean aggregate interference normalized by station density and antennas.

    ``(lambda_u pi R)^2 * Na^-1/2 * lambda_b^-alpha/2
    * (1 + (1 - R^(2-alpha)) / (alpha - 2)) * P * E|g|^2`` in milliwatts,
    with the transmit power converted from dBm. Singular as alpha -> 2.
    """
    a = cfg.path_loss_alpha
    if a <= 2:
        raise ConfigurationError("normalized interference undefined for alpha <= 2")
    R = cfg.reception_radius_km
    geom = (cfg.lambda_u * np.pi * R) ** 2
    geom *= cfg.num_antennas ** -0.5 * cfg.lambda_b ** (-a / 2.0)
    geom *= 1.0 + (1.0 - R ** (2.0 - a)) / (a - 2.0)
    return float(geom * cfg.tx_power_mw * 1.0)


def monte_carlo_interference(pattern: PointPattern, user_xy, cfg: GeometryConfig,
                             p_a: float, rng: np.random.Generator) -> float:
    """One sample of the aggregate interference power at ``user_xy``.

    Stations inside the reception ball are kept independently with
    probability ``p_a`` (dormant stations do not transmit); each retained
    station contributes ``P * min(1, d^-alpha) * g`` with ``g ~ Exp(1)``
    Rayleigh power fading. Returns raw milliwatts; the sectored-beam factor
    is applied downstream when forming an SINR.
    """
    if not 0.0 <= p_a <= 1.0:
        raise ConfigurationError("p_a must lie in [0, 1]")
    if len(pattern) == 0:
        return 0.0
    user = np.asarray(user_xy, dtype=float)
    d = np.hypot(pattern.points[:, 0] - user[0], pattern.points[:, 1] - user[1])
    inside = d <= cfg.reception_radius_km
    if not inside.any():
        return 0.0
    d = d[inside]
    active = rng.random(d.size) < p_a
    if not active.any():
        return 0.0
    gains = path_loss(d[active], cfg.path_loss_alpha)
    fading = rng.exponential(1.0, gains.size)
    return float(cfg.tx_power_mw * np.sum(gains * fading))


_LAGUERRE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _laguerre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _LAGUERRE_CACHE:
        _LAGUERRE_CACHE[n] = np.polynomial.laguerre.laggauss(n)
    return _LAGUERRE_CACHE[n]


def average_rate(model: RateModel, cfg: GeometryConfig, quad_nodes: int = 32) -> float:
    """Average downlink rate per unit bandwidth, in nats.

    ``E_g[log(1 + Na * P * l(d0) * g / (noise_term + Ihat * sqrt(Na)))]``
    with ``g ~ Exp(1)`` scaled by the fading mean, evaluated by fixed
    Gauss-Laguerre quadrature so the result is deterministic. Strictly
    positive and strictly decreasing in the interference term.
    """
    if quad_nodes < 32:
        raise ConfigurationError("average_rate requires at least 32 quadrature nodes")
    denom = model.noise_term + model.interference_normalized * cfg.beam_gain_factor
    if denom <= 0:
        raise ConfigurationError("degenerate SINR: zero noise and interference")
    signal = (cfg.num_antennas * cfg.tx_power_mw
              * path_loss(model.serving_distance_km, cfg.path_loss_alpha)
              * model.fading_mean)
    nodes, weights = _laguerre(quad_nodes)
    return float(np.sum(weights * np.log1p(signal * nodes / denom)))


def average_rate_monte_carlo(model: RateModel, cfg: GeometryConfig,
                             rng: np.random.Generator, n_samples: int = 10 ** 6) -> float:
    """Monte-Carlo estimate of :func:`average_rate` over fading draws.

    Validation path for the quadrature; same SINR structure, random fading.
    """
    denom = model.noise_term + model.interference_normalized * cfg.beam_gain_factor
    if denom <= 0:
        raise ConfigurationError("degenerate SINR: zero noise and interference")
    signal = (cfg.num_antennas * cfg.tx_power_mw
              * path_loss(model.serving_distance_km, cfg.path_loss_alpha)
              * model.fading_mean)
    g = rng.exponential(1.0, n_samples)
    return float(np.mean(np.log1p(signal * g / denom)))


def nearest_sbs_distance(lambda_b: float) -> float:
    """Expected distance to the nearest station of a density-``lambda_b`` PPP,
    ``1 / (2 sqrt(lambda_b))``; used as the representative serving distance."""
    if lambda_b <= 0:
        raise ConfigurationError("lambda_b must be > 0")
    return float(1.0 / (2.0 * np.sqrt(lambda_b)))


def request_region_count(cfg: GeometryConfig) -> int:
    """Expected number of stations able to serve a typical user, at least 1."""
    return max(1, int(round(np.pi * cfg.request_radius_km ** 2 * cfg.lambda_b)))


def rate_model_from_config(cfg: GeometryConfig) -> RateModel:
    """Assemble the deterministic rate-formula inputs from the geometry."""
    noise_term = cfg.noise_mw / (cfg.num_antennas
                                 * cfg.lambda_b ** (cfg.path_loss_alpha / 2.0))
    return RateModel(
        interference_normalized=normalized_interference(cfg),
        noise_term=noise_term,
        serving_distance_km=nearest_sbs_distance(cfg.lambda_b),
        fading_mean=1.0,
    )

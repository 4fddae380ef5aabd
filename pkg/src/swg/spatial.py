"""Spatial geometry shared by the occurrence and intensity models.

Station coordinates live on a projected plane in kilometres.  Correlation is
isotropic Matern; the spatially varying part of each day's mean surface is a
linear combination of Gaussian-kernel basis functions anchored at knots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

EARTH_RADIUS_KM = 6371.0088

KNOT_GRID_DEFAULT = 5  # 5x5 = 25 knots unless the caller says otherwise

_JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


class SingularCorrelationError(np.linalg.LinAlgError):
    """Correlation matrix failed Cholesky even after jitter escalation."""


@dataclass(frozen=True)
class MaternParams:
    """Matern correlation parameters: range (km) and smoothness."""

    range_km: float
    smoothness: float

    def __post_init__(self):
        if not (np.isfinite(self.range_km) and self.range_km > 0):
            raise ValueError(f"range must be positive, got {self.range_km}")
        if not (np.isfinite(self.smoothness) and self.smoothness > 0):
            raise ValueError(f"smoothness must be positive, got {self.smoothness}")


def matern_correlation(h, params: MaternParams):
    """Matern correlation at distance(s) ``h`` (km).

    Uses the sqrt(2 nu) scaling so ``range_km`` is comparable across
    smoothness values.  Smoothness 0.5 and 1.5 are evaluated in closed form
    (exponential and once-differentiable cases); other smoothness values go
    through the modified Bessel function.
    """
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)) or np.any(h < 0):
        raise ValueError("distances must be finite and nonnegative")
    rho, nu = params.range_km, params.smoothness
    x = np.sqrt(2.0 * nu) * h / rho
    if nu == 0.5:
        out = np.exp(-x)
    elif nu == 1.5:
        out = (1.0 + x) * np.exp(-x)
    else:
        out = np.ones_like(x)
        pos = x > 1e-10
        xp = x[pos]
        out[pos] = (2.0 ** (1.0 - nu) / gamma_fn(nu)) * xp**nu * kv(nu, xp)
    # guard against Bessel roundoff pushing values a hair outside (0, 1]
    return np.clip(out, 0.0, 1.0) if out.ndim else float(min(max(out, 0.0), 1.0))


def pairwise_distances(locations: np.ndarray) -> np.ndarray:
    """Symmetric Euclidean distance matrix for (n, 2) planar coordinates."""
    d = cdist(locations, locations)
    np.fill_diagonal(d, 0.0)
    return 0.5 * (d + d.T)


def project_latlon(lat, lon, origin=None, radius_km=EARTH_RADIUS_KM):
    """Equirectangular projection of lat/lon degrees to planar km.

    ``origin`` is the (lat0, lon0) projection centre; defaults to the
    centroid of the inputs.  Isotropic Matern correlation assumes planar
    distances, so gauge coordinates are projected before any model use.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if origin is None:
        origin = (float(np.mean(lat)), float(np.mean(lon)))
    lat0, lon0 = origin
    x = radius_km * np.cos(np.deg2rad(lat0)) * np.deg2rad(lon - lon0)
    y = radius_km * np.deg2rad(lat - lat0)
    return np.column_stack([x, y]), origin


def unproject_xy(xy, origin, radius_km=EARTH_RADIUS_KM):
    """Inverse of :func:`project_latlon` for (n, 2) km coordinates."""
    lat0, lon0 = origin
    xy = np.asarray(xy, dtype=float)
    lat = lat0 + np.rad2deg(xy[:, 1] / radius_km)
    lon = lon0 + np.rad2deg(xy[:, 0] / (radius_km * np.cos(np.deg2rad(lat0))))
    return lat, lon


def knot_grid(locations: np.ndarray, nx=KNOT_GRID_DEFAULT, ny=KNOT_GRID_DEFAULT):
    """Regular knot grid over the station bounding box.

    Returns (knots, spacing); the spacing doubles as the default kernel
    bandwidth.  Degenerate (zero-extent) axes fall back to a unit spacing.
    """
    lo = locations.min(axis=0)
    hi = locations.max(axis=0)
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], ny)
    gx, gy = np.meshgrid(xs, ys)
    knots = np.column_stack([gx.ravel(), gy.ravel()])
    spacings = []
    if nx > 1 and hi[0] > lo[0]:
        spacings.append((hi[0] - lo[0]) / (nx - 1))
    if ny > 1 and hi[1] > lo[1]:
        spacings.append((hi[1] - lo[1]) / (ny - 1))
    spacing = float(np.mean(spacings)) if spacings else 1.0
    return knots, spacing


@dataclass
class SpatialDomain:
    """Station geometry shared by both models.

    locations : (n, 2) projected km coordinates
    knots     : (L, 2) basis knot coordinates
    bandwidth : Gaussian-kernel bandwidth Delta (km)
    """

    locations: np.ndarray
    knots: np.ndarray
    bandwidth: float
    distances: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.knots = np.atleast_2d(np.asarray(self.knots, dtype=float))
        if self.locations.shape[0] < 1:
            raise ValueError("need at least one location")
        if self.bandwidth <= 0 or not np.isfinite(self.bandwidth):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.distances is None:
            self.distances = pairwise_distances(self.locations)
        self._check_distances()

    def _check_distances(self, n_triples=64, rtol=1e-9):
        d = self.distances
        n = d.shape[0]
        if d.shape != (n, n) or n != self.locations.shape[0]:
            raise ValueError("distance matrix does not match locations")
        if np.any(d < 0) or not np.allclose(d, d.T):
            raise ValueError("distance matrix must be symmetric and nonnegative")
        if np.any(np.abs(np.diag(d)) > 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if n >= 3:
            # triangle inequality on spot-checked triples
            rng = np.random.default_rng(0)
            for _ in range(n_triples):
                i, j, k = rng.choice(n, size=3, replace=False)
                if d[i, j] > d[i, k] + d[k, j] + rtol * max(1.0, d[i, j]):
                    raise ValueError(
                        f"triangle inequality violated on triple ({i},{j},{k})"
                    )

    @property
    def n_locations(self) -> int:
        return self.locations.shape[0]

    @property
    def n_basis(self) -> int:
        return self.knots.shape[0]

    @property
    def distance_bounds(self):
        """(min, max) positive pairwise distance; the Matern range prior support."""
        off = self.distances[~np.eye(self.n_locations, dtype=bool)]
        if off.size == 0:
            return 1e-3, 1.0
        return float(off.min()), float(off.max())

    @classmethod
    def from_locations(cls, locations, nx=KNOT_GRID_DEFAULT, ny=KNOT_GRID_DEFAULT,
                       bandwidth=None):
        locations = np.atleast_2d(np.asarray(locations, dtype=float))
        knots, spacing = knot_grid(locations, nx, ny)
        return cls(locations, knots, bandwidth if bandwidth else spacing)

    @classmethod
    def from_latlon(cls, lat, lon, origin=None, **kwargs):
        xy, origin = project_latlon(lat, lon, origin)
        dom = cls.from_locations(xy, **kwargs)
        dom.origin = origin
        return dom


def correlation_matrix(domain: SpatialDomain, params: MaternParams) -> np.ndarray:
    """Matern correlation matrix over the domain's locations.

    The matrix is checked positive definite via :func:`cholesky_jitter`;
    failure after the jitter ladder raises :class:`SingularCorrelationError`.
    """
    c = matern_correlation(domain.distances, params)
    c = np.asarray(c, dtype=float)
    np.fill_diagonal(c, 1.0)
    cholesky_jitter(c, params=params)  # PD check only
    return c


def cholesky_jitter(mat: np.ndarray, ladder=_JITTER_LADDER, params=None):
    """Lower Cholesky factor with diagonal jitter escalation.

    Tries each jitter in ``ladder`` in order; raises
    :class:`SingularCorrelationError` naming the offending parameters once
    the ladder is exhausted.  Near-singularity shows up for large smoothness
    or tightly clustered stations.
    """
    for jitter in ladder:
        try:
            m = mat if jitter == 0.0 else mat + jitter * np.eye(mat.shape[0])
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            continue
    raise SingularCorrelationError(
        f"correlation matrix not positive definite (params={params}, "
        f"max jitter={ladder[-1]})"
    )


def basis_vector(s, domain: SpatialDomain) -> np.ndarray:
    """Gaussian-kernel basis evaluation psi(s), length n_basis.

    Entry l is the standard normal density of the scaled distance to knot l,
    maximal (= 1/sqrt(2 pi)) when ``s`` sits on the knot.
    """
    s = np.asarray(s, dtype=float).reshape(1, 2)
    z = cdist(s, domain.knots)[0] / domain.bandwidth
    return np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi)


def basis_matrix(points, domain: SpatialDomain) -> np.ndarray:
    """Rows of :func:`basis_vector` for (m, 2) points: (m, n_basis)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = cdist(pts, domain.knots) / domain.bandwidth
    return np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi)

"""Random-number primitives behind the samplers.

Everything takes an explicit ``numpy.random.Generator`` so chains are
reproducible bit-exactly; :class:`RngStream` maps (seed, stream id) to a
generator and hands out child streams for parallel work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

TAIL_SWITCH = 6.0  # standardized bound beyond which inverse-CDF precision dies


@dataclass(frozen=True)
class RngStream:
    """Deterministic (seed, stream) handle for one chain or replicate."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, (self.stream << 16) + k + 1)


@dataclass
class BoundsVec:
    """Per-site truncation interval (lower, upper), extended reals."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound arrays must share a shape")
        if np.any(self.lower >= self.upper):
            raise ValueError("lower bounds must be strictly below upper bounds")

    @classmethod
    def from_occurrence(cls, occurrence, missing=None):
        """Sign orthant implied by a day's wet/dry indicators.

        Wet sites constrain the latent field to (0, inf), dry sites to
        (-inf, 0); missing sites are unconstrained.
        """
        o = np.asarray(occurrence)
        lower = np.where(o == 1, 0.0, -np.inf)
        upper = np.where(o == 1, np.inf, 0.0)
        if missing is not None:
            m = np.asarray(missing, dtype=bool)
            lower = np.where(m, -np.inf, lower)
            upper = np.where(m, np.inf, upper)
        return cls(lower, upper)

    def contains(self, x) -> bool:
        return bool(np.all((x > self.lower) | np.isneginf(self.lower))
                    and np.all((x < self.upper) | np.isposinf(self.upper)))


def _tail_reject(a, b, rng):
    """Standard-normal draw on [a, b] for a > TAIL_SWITCH (exponential proposal)."""
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    while True:
        z = a + rng.standard_exponential() / alpha
        if z > b:
            continue
        if rng.uniform() <= np.exp(-0.5 * (z - alpha) ** 2):
            return z


def truncated_normal(mean, sd, lower, upper, rng):
    """Draws from N(mean, sd^2) truncated to [lower, upper], elementwise.

    Inverse-CDF on the side of the distribution where the CDF is well
    conditioned; truncation regions beyond TAIL_SWITCH conditional standard
    deviations switch to an exponential-proposal rejection sampler.  Exactly
    one uniform is consumed per element on the inverse-CDF path, so draw
    sequences are reproducible.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.broadcast_shapes(mean.shape, np.shape(sd), np.shape(lower), np.shape(upper))
    mean, sd, lower, upper = (np.broadcast_to(np.asarray(v, dtype=float), shape).ravel()
                              for v in (mean, sd, lower, upper))
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    u = rng.uniform(size=a.size)
    z = np.empty(a.size)

    hi = a > TAIL_SWITCH
    lo = b < -TAIL_SWITCH
    mid = ~(hi | lo)
    up = mid & (a >= 0)          # region in the upper half: use complementary CDF
    dn = mid & (b <= 0) & ~up    # lower half: mirror
    ct = mid & ~up & ~dn         # straddles zero

    if np.any(up):
        qa, qb = ndtr(-a[up]), ndtr(-b[up])
        z[up] = -ndtri(qb + u[up] * (qa - qb))
    if np.any(dn):
        qa, qb = ndtr(b[dn]), ndtr(a[dn])
        z[dn] = ndtri(qb + u[dn] * (qa - qb))
    if np.any(ct):
        pa, pb = ndtr(a[ct]), ndtr(b[ct])
        z[ct] = ndtri(pa + u[ct] * (pb - pa))
    for i in np.flatnonzero(hi):
        z[i] = _tail_reject(a[i], b[i], rng)
    for i in np.flatnonzero(lo):
        z[i] = -_tail_reject(-b[i], -a[i], rng)

    out = mean + sd * z
    # keep draws strictly inside finite bounds (sign checks downstream)
    at_lo = out <= lower
    if np.any(at_lo):
        out[at_lo] = np.nextafter(lower[at_lo], np.inf)
    at_hi = out >= upper
    if np.any(at_hi):
        out[at_hi] = np.nextafter(upper[at_hi], -np.inf)
    return out.reshape(shape) if shape else float(out[0])


def sample_mvn(mean, cov_chol, rng):
    """mean + L z for lower-triangular L and iid standard normal z."""
    mean = np.asarray(mean, dtype=float)
    cov_chol = np.atleast_2d(np.asarray(cov_chol, dtype=float))
    if cov_chol.shape[0] != cov_chol.shape[1] or cov_chol.shape[0] != mean.size:
        raise ValueError("dimension mismatch between mean and Cholesky factor")
    return mean + cov_chol @ rng.standard_normal(mean.size)


def sample_truncated_mvn_gibbs(current, mean, precision, bounds: BoundsVec,
                               sweeps, rng):
    """Coordinate-wise Gibbs sweeps over a truncated multivariate normal.

    ``precision`` is the inverse covariance (precomputed by the caller so
    repeated sweeps cost O(n) per coordinate).  The chain state must start
    inside the truncation box.
    """
    x = np.array(current, dtype=float)
    mean = np.asarray(mean, dtype=float)
    q = np.asarray(precision, dtype=float)
    if sweeps < 1:
        raise ValueError("need at least one sweep")
    if not bounds.contains(x):
        raise ValueError("initial point violates the truncation bounds")
    qd = np.diag(q)
    r = q @ (x - mean)
    for _ in range(sweeps):
        for i in range(x.size):
            cond_sd = 1.0 / np.sqrt(qd[i])
            cond_mean = mean[i] - (r[i] - qd[i] * (x[i] - mean[i])) / qd[i]
            new = truncated_normal(np.array(cond_mean), cond_sd,
                                   bounds.lower[i], bounds.upper[i], rng)
            delta = float(new) - x[i]
            if delta != 0.0:
                x[i] += delta
                r += q[:, i] * delta
    return x


def sample_inverse_gamma(shape, scale, rng, size=None):
    """Inverse-Gamma(shape a, scale b) draw(s); mean b/(a-1) for a > 1.

    Draws are clamped to [1e-300, 1e300]: for shapes well under one (the
    degrees-of-freedom prior allows them) the distribution has mass beyond
    float64 range, and an overflowed scale would poison every downstream
    likelihood.
    """
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(scale) <= 0):
        raise ValueError("inverse-gamma parameters must be positive")
    with np.errstate(divide="ignore", over="ignore"):
        out = scale / rng.gamma(shape, 1.0, size=size)
    return np.clip(out, 1e-300, 1e300)


def sample_t_process(location, scale, dof, corr_chol, rng):
    """Forward Student-t process draw via its Gaussian scale mixture.

    Draws sigma^2 ~ IG(dof/2, dof*scale/2) and then a correlated Gaussian
    field scaled by sigma; marginals are location-shifted t with ``dof``
    degrees of freedom and scale sqrt(scale).
    """
    if dof <= 0 or scale <= 0:
        raise ValueError("dof and scale must be positive")
    sigma2 = sample_inverse_gamma(dof / 2.0, dof * scale / 2.0, rng)
    location = np.asarray(location, dtype=float)
    corr_chol = np.atleast_2d(np.asarray(corr_chol, dtype=float))
    return location + np.sqrt(sigma2) * (corr_chol @ rng.standard_normal(location.size))

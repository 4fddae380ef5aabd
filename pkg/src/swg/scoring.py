"""Forecast verification: tail-weighted CRPS, F-madogram, empirical tail
dependence, and posterior summaries.

The TWCRPS integrand (F_hat(x) - 1{y <= x})^2 w(x) is piecewise constant in
everything except the weight between consecutive sorted ensemble members, so
the indicator weight integrates in closed form and the smooth weight by
adaptive quadrature per piece.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata


@dataclass
class EnsembleForecast:
    """Per-day ensemble members (T, M) with matched observations (T,)."""

    members: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        self.members = np.atleast_2d(np.asarray(self.members, dtype=float))
        self.observations = np.asarray(self.observations, dtype=float)
        if self.members.shape[0] != self.observations.size:
            raise ValueError("need one observation per forecast day")
        if self.members.shape[1] < 2:
            raise ValueError("need at least two ensemble members per day")
        if not (np.all(np.isfinite(self.members))
                and np.all(np.isfinite(self.observations))):
            raise ValueError("ensemble values must be finite")

    @property
    def n_days(self):
        return self.members.shape[0]


@dataclass(frozen=True)
class IndicatorWeight:
    """w(x) = 1{x >= threshold}; threshold = -inf recovers the plain CRPS."""

    threshold: float = -np.inf

    def segment_mass(self, a, b):
        lo = max(a, self.threshold)
        return max(0.0, b - lo)


@dataclass(frozen=True)
class SmoothWeight:
    """w(x) = Phi((x - threshold) / scale)."""

    threshold: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.threshold) and self.scale > 0):
            raise ValueError("smooth weight needs finite threshold and scale > 0")

    def segment_mass(self, a, b):
        val, _ = quad(lambda x: ndtr((x - self.threshold) / self.scale), a, b,
                      epsabs=1e-8, limit=200)
        return val


def twcrps_single(members, y, weight) -> float:
    """Weighted CRPS of one ensemble against one observation.

    Exact piecewise evaluation over the sorted members: on each interval
    between consecutive knots the squared bracket is constant and only the
    weight mass of the interval is needed.
    """
    x = np.sort(np.asarray(members, dtype=float))
    m = x.size
    knots = np.unique(np.concatenate([x, [y]]))
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        fhat = np.searchsorted(x, a, side="right") / m
        bracket = (fhat - (1.0 if y <= a else 0.0)) ** 2
        if bracket > 0:
            total += bracket * weight.segment_mass(a, b)
    return total


def twcrps(forecast: EnsembleForecast, weight, n_boot=1000, seed=0):
    """Average TWCRPS over days plus a percentile-bootstrap interval.

    Returns (score, (lo, hi)) with the interval from ``n_boot`` day
    resamples at the 2.5/97.5 percentiles.
    """
    if forecast.n_days == 0:
        raise ValueError("empty forecast set")
    per_day = np.array([twcrps_single(forecast.members[t], forecast.observations[t],
                                      weight)
                        for t in range(forecast.n_days)])
    score = float(per_day.mean())
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, per_day.size, size=(n_boot, per_day.size))
    boot = per_day[idx].mean(axis=1)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return score, (float(lo), float(hi))


def f_madogram(block_maxima, distances, bin_edges, n_boot=200, seed=0):
    """Rank-based F-madogram per distance bin.

    block_maxima : (B, S) maxima per block and station
    distances    : (S, S) station separations
    bin_edges    : increasing bin edges over distance

    Returns a dict with bin centers, estimates, bootstrap intervals, and an
    ``empty`` mask; empty bins are flagged, never interpolated.  Perfectly
    dependent pairs give 0 and independent pairs 1/6.
    """
    w = np.asarray(block_maxima, dtype=float)
    b, s = w.shape
    if s < 2:
        raise ValueError("need at least two stations")
    edges = np.asarray(bin_edges, dtype=float)
    pair_i, pair_j = np.triu_indices(s, k=1)
    pair_d = distances[pair_i, pair_j]
    which = np.digitize(pair_d, edges) - 1
    n_bins = edges.size - 1

    def estimate(blocks):
        f = np.apply_along_axis(rankdata, 0, w[blocks]) / (blocks.size + 1.0)
        lam_pair = 0.5 * np.abs(f[:, pair_i] - f[:, pair_j]).mean(axis=0)
        out = np.full(n_bins, np.nan)
        for k in range(n_bins):
            sel = which == k
            if np.any(sel):
                out[k] = lam_pair[sel].mean()
        return out

    est = estimate(np.arange(b))
    rng = np.random.default_rng(seed)
    boots = np.array([estimate(rng.integers(0, b, size=b)) for _ in range(n_boot)])
    lo = np.nanpercentile(boots, 2.5, axis=0)
    hi = np.nanpercentile(boots, 97.5, axis=0)
    return {
        "bin_centers": 0.5 * (edges[:-1] + edges[1:]),
        "estimate": est,
        "lower": lo,
        "upper": hi,
        "empty": np.isnan(est),
    }


@dataclass
class ChiEstimate:
    value: float
    level: float
    n_joint: int
    wide_ci: bool


def chi_u_empirical(x, y, u) -> ChiEstimate:
    """Empirical tail-dependence at level u via per-margin empirical ranks.

    chi_u = P(F_y(Y) > u | F_x(X) > u); fewer than 20 joint exceedances set
    the wide-CI flag.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0.0 < u < 1.0:
        raise ValueError("level u must lie in (0, 1)")
    if x.size != y.size or x.size < 2:
        raise ValueError("need paired samples")
    fx = rankdata(x) / (x.size + 1.0)
    fy = rankdata(y) / (y.size + 1.0)
    cond = fx > u
    n_cond = int(cond.sum())
    if n_cond == 0:
        return ChiEstimate(np.nan, u, 0, True)
    joint = int(np.sum(cond & (fy > u)))
    return ChiEstimate(joint / n_cond, u, joint, joint < 20)


# ---------------------------------------------------------------------------
# posterior summaries: rank-normalized split-Rhat and ESS
# ---------------------------------------------------------------------------

def _split_chains(chains):
    c, n = chains.shape
    half = n // 2
    return np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)


def _rank_normalize(chains):
    flat = rankdata(chains.reshape(-1))
    z = ndtri((flat - 0.375) / (flat.size + 0.25))
    return z.reshape(chains.shape)


def _rhat(chains):
    z = _rank_normalize(_split_chains(chains))
    m, n = z.shape
    means = z.mean(axis=1)
    b = n * means.var(ddof=1)
    w = z.var(axis=1, ddof=1).mean()
    if w == 0:
        return 1.0
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def _autocovariance(x):
    n = x.size
    xc = x - x.mean()
    size = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    return acov


def _ess(chains):
    """Effective sample size via Geyer's initial monotone sequence."""
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    acovs = np.array([_autocovariance(c) for c in chains])
    chain_var = acovs[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    mean_acov = acovs.mean(axis=0)
    if m > 1:
        var_plus = w * (n - 1.0) / n + chains.mean(axis=1).var(ddof=1)
    else:
        var_plus = w * (n - 1.0) / n
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (w - mean_acov) / var_plus
    # paired sums, truncated at the first negative pair, forced monotone
    max_pairs = (n - 1) // 2
    pair_sums = []
    for k in range(max_pairs):
        p = rho[2 * k + 1] + rho[2 * k + 2] if 2 * k + 2 < n else rho[2 * k + 1]
        if p < 0:
            break
        pair_sums.append(p)
    running = np.inf
    tau = 1.0
    for p in pair_sums:
        running = min(running, p)
        tau += 2.0 * running
    return float(m * n / tau)


def posterior_summaries(chains_by_param, quantiles=(0.05, 0.5, 0.95),
                        rhat_flag=1.05):
    """Per-parameter mean, quantiles, ESS, and rank-normalized split-Rhat.

    ``chains_by_param`` maps names to (n_chains, n_draws) arrays; a 1-D array
    counts as a single chain, for which Rhat is omitted with a notice.
    Returns a dict of row dicts; rows with Rhat above ``rhat_flag`` carry
    flagged=True.
    """
    out = {}
    for name, arr in chains_by_param.items():
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        row = {
            "mean": float(arr.mean()),
            "quantiles": {q: float(np.quantile(arr, q)) for q in quantiles},
            "ess": _ess(arr),
            "n_chains": arr.shape[0],
        }
        if arr.shape[0] >= 2:
            row["rhat"] = _rhat(arr)
            row["flagged"] = row["rhat"] > rhat_flag
        else:
            row["rhat"] = None
            row["notice"] = "single chain: split-Rhat omitted"
            row["flagged"] = False
        out[name] = row
    return out


def score_table(rows, column_models):
    """Plain-text/CSV score table: rows = (mode, weight), columns = models.

    ``rows`` maps (mode, weight_name) to {model: (score, (lo, hi))}.
    Returns CSV text with one bootstrap interval per cell.
    """
    lines = ["mode,weight," + ",".join(
        f"{m},{m}_lo,{m}_hi" for m in column_models)]
    for (mode, wname), cells in rows.items():
        parts = [mode, wname]
        for model in column_models:
            if model in cells:
                score, (lo, hi) = cells[model]
                parts += [f"{score:.6g}", f"{lo:.6g}", f"{hi:.6g}"]
            else:
                parts += ["", "", ""]
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"

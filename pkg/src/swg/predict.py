"""Posterior-predictive machinery.

In-sample kriging conditions each retained draw's latent day field (or the
observed wet-site values) on the fitted covariance to predict at new sites;
out-of-sample forecasting rebuilds analogue weights for future days from
projected atmospheric covariates, draws the day offsets from their analogue
prior, and simulates both processes forward.  Occurrence and intensity
compose per draw: an amount is positive exactly where the occurrence
indicator is one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .analogue import AnalogueInputs, analogue_weights, cross_distances
from .mcmc import PosteriorDraws
from .recordfile import read_blocks, write_blocks
from .sampling import sample_inverse_gamma
from .spatial import MaternParams, SpatialDomain, basis_matrix, cholesky_jitter, \
    matern_correlation

_TINY_AMOUNT = 1e-300  # keeps "amount > 0 iff occurrence" exact under underflow


@dataclass
class PredictionGrid:
    """Cell centers (projected km), per-cell area (km^2), and basin labels."""

    cells: np.ndarray
    area: np.ndarray
    basin: np.ndarray

    def __post_init__(self):
        self.cells = np.atleast_2d(np.asarray(self.cells, dtype=float))
        self.area = np.broadcast_to(np.asarray(self.area, dtype=float),
                                    (self.cells.shape[0],)).copy()
        self.basin = np.asarray(self.basin)
        if np.any(self.area <= 0):
            raise ValueError("cell areas must be positive")
        if self.basin.shape[0] != self.cells.shape[0]:
            raise ValueError("need one basin id per cell")

    @property
    def basin_ids(self):
        return np.unique(self.basin)

    @classmethod
    def regular(cls, lo, hi, spacing, basin_fn=None):
        """Square grid of cell centers with area spacing^2 covering a box."""
        xs = np.arange(lo[0] + spacing / 2, hi[0], spacing)
        ys = np.arange(lo[1] + spacing / 2, hi[1], spacing)
        gx, gy = np.meshgrid(xs, ys)
        cells = np.column_stack([gx.ravel(), gy.ravel()])
        basin = (np.zeros(cells.shape[0], dtype=int) if basin_fn is None
                 else np.asarray([basin_fn(c) for c in cells]))
        return cls(cells, spacing ** 2, basin)


@dataclass
class ForecastSet:
    """Composed occurrence/intensity forecasts for a set of draws and days.

    amounts  : (n_draws, n_days, n_targets) mm; exactly 0 where dry
    targets  : (n_targets, 2) projected km
    day_ids  : per-day labels (indices or date strings)
    fallback : (n_days,) True where no in-threshold analogue existed
    """

    amounts: np.ndarray
    targets: np.ndarray
    day_ids: list
    fallback: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.amounts = np.asarray(self.amounts, dtype=float)
        if self.fallback is None:
            self.fallback = np.zeros(self.amounts.shape[1], dtype=bool)
        if np.any(~np.isfinite(self.amounts)) or np.any(self.amounts < 0):
            raise ValueError("forecast amounts must be finite and nonnegative")

    @property
    def occurrence(self):
        return self.amounts > 0

    @property
    def n_draws(self):
        return self.amounts.shape[0]

    def save(self, path):
        meta = {"n_draws": self.amounts.shape[0],
                "n_days": self.amounts.shape[1],
                "n_targets": self.amounts.shape[2],
                "day_ids": ",".join(str(d) for d in self.day_ids)}
        meta.update({k: str(v) for k, v in self.meta.items()})
        write_blocks(path, "forecast", meta,
                     {"amounts": self.amounts,
                      "occurrence": self.occurrence.astype("|u1"),
                      "fallback": self.fallback.astype("|u1"),
                      "targets": self.targets})

    @classmethod
    def load(cls, path):
        kind, meta, blocks = read_blocks(path)
        if kind != "forecast":
            raise ValueError(f"{path}: expected a forecast file, got {kind!r}")
        day_ids = meta.pop("day_ids").split(",")
        for key in ("n_draws", "n_days", "n_targets"):
            meta.pop(key, None)
        return cls(blocks["amounts"], blocks["targets"], day_ids,
                   blocks["fallback"].astype(bool), meta)

    def to_csv(self, path):
        """Flat (draw, day, cell, amount) table for plotting."""
        with open(path, "w") as fh:
            fh.write("draw,day,cell,amount\n")
            d, t, m = self.amounts.shape
            for i in range(d):
                for j in range(t):
                    row = self.amounts[i, j]
                    for c in range(m):
                        fh.write(f"{i},{self.day_ids[j]},{c},{row[c]:.10g}\n")


def softplus_amounts(y, occurrence):
    amounts = np.where(occurrence, np.logaddexp(0.0, y), 0.0)
    return np.where(occurrence, np.maximum(amounts, _TINY_AMOUNT), 0.0)


def kriging_conditionals(params: MaternParams, obs_locations, targets, unit_diag=True):
    """(weights, conditional correlation) of targets given observation sites.

    weights @ field gives the conditional-mean adjustment; the conditional
    matrix is C_** - C_*s C_ss^-1 C_s*.  Zero nugget: a target on a station
    reproduces it exactly with zero conditional variance.
    """
    obs_locations = np.atleast_2d(obs_locations)
    targets = np.atleast_2d(targets)
    c_ss = matern_correlation(cdist(obs_locations, obs_locations), params)
    if unit_diag:
        np.fill_diagonal(c_ss, 1.0)
    c_ts = matern_correlation(cdist(targets, obs_locations), params)
    c_tt = matern_correlation(cdist(targets, targets), params)
    if unit_diag:
        np.fill_diagonal(c_tt, 1.0)
    chol = cholesky_jitter(c_ss, params=params)
    half = np.linalg.solve(chol, c_ts.T)            # L^-1 C_s*
    weights = np.linalg.solve(chol.T, half).T        # C_*s C_ss^-1
    cond = c_tt - half.T @ half
    return weights, 0.5 * (cond + cond.T)


def _draw_field(mean, cond_corr_chol, scale, rng):
    return mean + scale * (cond_corr_chol @ rng.standard_normal(mean.size))


def _chol_for_draws(cond):
    return cholesky_jitter(cond, ladder=(1e-12, 1e-10, 1e-8, 1e-6))


def krige_insample(occ_draws: PosteriorDraws, int_draws: PosteriorDraws,
                   domain: SpatialDomain, int_data, targets, days, rng,
                   day_ids=None) -> ForecastSet:
    """Conditional predictive draws at new sites for training-period days.

    Per retained draw: the occurrence field conditions the latent day field
    on the stored latent draw; the intensity field conditions on that day's
    observed wet-site values under the draw's class covariance and day scale.
    Draw pairing is by index, so both chains must retain equally many draws.
    """
    if occ_draws.n_draws != int_draws.n_draws:
        raise ValueError("occurrence and intensity draws must pair by index")
    if "z" not in occ_draws.fields:
        raise ValueError("occurrence draws were saved without latent fields")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    days = np.asarray(days, dtype=int)
    t_max = occ_draws["gamma"].shape[1]
    if np.any(days < 0) or np.any(days >= t_max):
        raise ValueError(f"kriging days must lie in the training period [0, {t_max})")
    psi_s = basis_matrix(domain.locations, domain)
    psi_t = basis_matrix(targets, domain)
    n_draws = occ_draws.n_draws
    amounts = np.zeros((n_draws, days.size, targets.shape[0]))

    for i in range(n_draws):
        o_params = MaternParams(occ_draws["rho"][i], occ_draws["nu"][i])
        w_occ, cond_occ = kriging_conditionals(o_params, domain.locations, targets)
        chol_occ = _chol_for_draws(cond_occ)
        int_chol_cache = {}
        for j, t in enumerate(days):
            gamma_o = occ_draws["gamma"][i, t]
            beta_o = occ_draws["beta"][i, t]
            mu_s = gamma_o + psi_s @ beta_o
            mu_t = gamma_o + psi_t @ beta_o
            z_s = occ_draws["z"][i, t]
            z_t = _draw_field(mu_t + w_occ @ (z_s - mu_s), chol_occ, 1.0, rng)
            occ = z_t > 0

            k = int(int_draws["labels"][i, t])
            i_params = MaternParams(int_draws["rho"][i, k], int_draws["nu"][i, k])
            sigma = np.sqrt(int_draws["sigma2_day"][i, t])
            gamma_i = int_draws["gamma"][i, t]
            beta_i = int_draws["beta"][i, t]
            mu_t_int = gamma_i + psi_t @ beta_i
            wet = int_data.wet_idx[t]
            if wet.size:
                key = (k, t)
                if key not in int_chol_cache:
                    int_chol_cache[key] = kriging_conditionals(
                        i_params, domain.locations[wet], targets)
                w_int, cond_int = int_chol_cache[key]
                mu_wet = gamma_i + psi_s[wet] @ beta_i
                mean = mu_t_int + w_int @ (int_data.y[t, wet] - mu_wet)
                y_t = _draw_field(mean, _chol_for_draws(cond_int), sigma, rng)
            else:
                corr = matern_correlation(cdist(targets, targets), i_params)
                np.fill_diagonal(corr, 1.0)
                y_t = _draw_field(mu_t_int, _chol_for_draws(corr), sigma, rng)
            amounts[i, j] = softplus_amounts(y_t, occ)

    ids = list(days) if day_ids is None else day_ids
    return ForecastSet(amounts, targets, ids, np.zeros(days.size, dtype=bool),
                       {"mode": "insample"})


def forecast_outsample(occ_draws: PosteriorDraws, int_draws: PosteriorDraws,
                       inputs: AnalogueInputs, future_stacks,
                       domain: SpatialDomain, targets, rng,
                       day_ids=None, n_warmup=0) -> ForecastSet:
    """Out-of-sample predictive draws driven by projected future covariates.

    Per retained draw (including its bandwidth): project the future fields
    on the stored EOF bases, lag-embed, take distances to the training
    trajectories, and weight them with the frozen threshold.  Day offsets
    come from the analogue prior over that draw's training offsets; basis
    coefficients from their prior; labels from the mixture probabilities at
    the future covariates.  Days with no in-threshold analogue fall back to
    the independence prior and are flagged.

    The first ``n_warmup`` days of ``future_stacks`` only provide lag
    context (e.g. the tail of the training period) and are not forecast.
    """
    if occ_draws.n_draws != int_draws.n_draws:
        raise ValueError("occurrence and intensity draws must pair by index")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    loadings_all = inputs.project_days(future_stacks)
    emb_new = inputs.embed_new(loadings_all)
    keep = np.arange(n_warmup, loadings_all.shape[0])
    dist = cross_distances(emb_new, inputs.embedding)[keep]
    loadings_new = loadings_all[keep]
    tau = inputs.graph.tau
    u_new = np.column_stack([np.ones(loadings_new.shape[0]), loadings_new])
    psi_t = basis_matrix(targets, domain)
    n_new = loadings_new.shape[0]
    n_draws = occ_draws.n_draws
    n_classes = int_draws["rho"].shape[1]
    amounts = np.zeros((n_draws, n_new, targets.shape[0]))
    fallback = np.zeros(n_new, dtype=bool)
    tdist = cdist(targets, targets)

    for i in range(n_draws):
        occ_corr = matern_correlation(
            tdist, MaternParams(occ_draws["rho"][i], occ_draws["nu"][i]))
        np.fill_diagonal(occ_corr, 1.0)
        occ_chol = _chol_for_draws(occ_corr)
        int_chols = []
        for k in range(n_classes):
            corr = matern_correlation(
                tdist, MaternParams(int_draws["rho"][i, k], int_draws["nu"][i, k]))
            np.fill_diagonal(corr, 1.0)
            int_chols.append(_chol_for_draws(corr))
        alpha_full = np.vstack([int_draws["alpha"][i],
                                np.zeros(int_draws["alpha"].shape[2])])
        eta = u_new @ alpha_full.T
        eta -= eta.max(axis=1, keepdims=True)
        pis = np.exp(eta)
        pis /= pis.sum(axis=1, keepdims=True)

        for j in range(n_new):
            w = analogue_weights(dist[j], occ_draws["theta"][i], tau)
            if w is None:
                fallback[j] = True
                gamma_o = np.sqrt(occ_draws["sigma2_gamma"][i]) * rng.standard_normal()
            else:
                gamma_o = (w @ occ_draws["gamma"][i]
                           + np.sqrt(occ_draws["sigma2_gamma"][i]) * rng.standard_normal())
            beta_o = np.sqrt(occ_draws["sigma2_beta"][i]) \
                * rng.standard_normal(psi_t.shape[1])
            z = _draw_field(gamma_o + psi_t @ beta_o, occ_chol, 1.0, rng)
            occ = z > 0

            w_i = analogue_weights(dist[j], int_draws["theta"][i], tau)
            if w_i is None:
                gamma_i = np.sqrt(int_draws["sigma2_gamma"][i]) * rng.standard_normal()
            else:
                gamma_i = (w_i @ int_draws["gamma"][i]
                           + np.sqrt(int_draws["sigma2_gamma"][i]) * rng.standard_normal())
            beta_i = np.sqrt(int_draws["sigma2_beta"][i]) \
                * rng.standard_normal(psi_t.shape[1])
            k = int(rng.choice(n_classes, p=pis[j]))
            a_k = int_draws["dof"][i, k]
            b_k = int_draws["scale"][i, k]
            sigma2 = sample_inverse_gamma(a_k / 2.0, a_k * b_k / 2.0, rng)
            y = _draw_field(gamma_i + psi_t @ beta_i, int_chols[k],
                            np.sqrt(sigma2), rng)
            amounts[i, j] = softplus_amounts(y, occ)

    ids = list(range(n_new)) if day_ids is None else day_ids
    return ForecastSet(amounts, targets, ids, fallback, {"mode": "outsample"})


def basin_aggregate(forecast: ForecastSet, grid: PredictionGrid, window):
    """Distribution of windowed maxima of daily total volume per basin.

    Daily total volume over a basin is sum(amount * cell area) in mm km^2;
    the maximum is taken over the ``window`` day indices per draw.  Returns
    per-basin quantile summaries plus the raw (n_draws, n_basins) maxima.
    """
    window = np.asarray(window, dtype=int)
    if window.size == 0:
        raise ValueError("aggregation window is empty")
    if forecast.amounts.shape[2] != grid.cells.shape[0]:
        raise ValueError("forecast targets do not match the grid cells")
    ids = grid.basin_ids
    maxima = np.zeros((forecast.n_draws, ids.size))
    for b, bid in enumerate(ids):
        sel = grid.basin == bid
        if not np.any(sel):
            raise ValueError(f"basin {bid!r} has no cells")
        vol = (forecast.amounts[:, :, sel][:, window, :]
               * grid.area[sel][None, None, :]).sum(axis=2)
        maxima[:, b] = vol.max(axis=1)
    summary = {}
    for b, bid in enumerate(ids):
        q = np.percentile(maxima[:, b], [2.5, 25, 50, 75, 97.5])
        summary[bid] = {"quantiles": dict(zip([2.5, 25, 50, 75, 97.5], q)),
                        "mean": float(maxima[:, b].mean()),
                        "ci95": (float(q[0]), float(q[-1]))}
    return {"basin_ids": ids, "maxima": maxima, "summary": summary}

"""Metropolis-within-Gibbs sampler for the Student-t mixture intensity model.

Transformed positive accumulations on each day's wet stations follow one of
K latent classes; a class is a Gaussian process scale mixture (inverse-gamma
day scale), so marginally each class is a Student-t process with its own
degrees of freedom, scale, and Matern correlation.  Class membership follows
a multinomial-logistic model driven by synoptic covariates, and the daily
offsets share the analogue prior construction with the occurrence model.

Likelihood evaluations only ever touch the wet-station rows/columns of each
day's covariance.  The wet patterns are fixed by the data, so per-day blocks
are padded to a common size (identity padding changes neither log
determinants nor quadratic forms) and factorized in stacked batches; the
triangular solves of [1 | y_t | Psi_t] are cached per class and refreshed
only when that class's Matern parameters move.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .analogue import AnalogueGraph
from .mcmc import AdaptiveStep, IntervalTransform, PosteriorDraws, config_hash, \
    random_walk_update, thinned_count
from .sampling import RngStream, sample_inverse_gamma
from .spatial import MaternParams, SpatialDomain, basis_matrix, cholesky_jitter, \
    matern_correlation
from .transforms import softplus_inv


@dataclass
class IntensityData:
    """Wet-day accumulations and their transformed values.

    amounts : (T, n) precipitation in mm, exactly 0 where dry/missing
    wet     : (T, n) bool mask; the transformed field y is defined there only
    """

    amounts: np.ndarray
    wet: np.ndarray
    y: np.ndarray = None

    def __post_init__(self):
        self.amounts = np.asarray(self.amounts, dtype=float)
        self.wet = np.asarray(self.wet, dtype=bool)
        if self.amounts.shape != self.wet.shape:
            raise ValueError("amounts and wet mask must share a shape")
        if self.y is None:
            if np.any(self.amounts[self.wet] <= 0):
                raise ValueError("wet accumulations must be strictly positive")
            self.y = np.zeros_like(self.amounts)
            self.y[self.wet] = softplus_inv(self.amounts[self.wet])
        self.wet_idx = [np.flatnonzero(self.wet[t]) for t in range(self.wet.shape[0])]

    @classmethod
    def from_transformed(cls, y, wet):
        """Build from already-transformed values (validation runs redraw y
        directly; very negative fields would underflow the softplus map)."""
        y = np.where(wet, y, 0.0)
        return cls(np.logaddexp(0.0, y) * wet, np.asarray(wet, dtype=bool), y)

    @property
    def n_days(self):
        return self.amounts.shape[0]

    @property
    def n_sites(self):
        return self.amounts.shape[1]


@dataclass
class IntensityConfig:
    n_classes: int = 3
    iterations: int = 100_000
    burnin: int = 50_000
    thin: int = 10
    seed: int = 0
    a_gamma: float = 1.0
    b_gamma: float = 1.0
    a_beta: float = 1.0
    b_beta: float = 1.0
    sigma2_alpha: float = 25.0
    dof_bounds: tuple = (0.0, 30.0)
    scale_gamma_shape: float = 0.1   # Gamma prior on the class scale b_k
    scale_gamma_scale: float = 10.0
    nu_bounds: tuple = (0.0, 2.0)
    rho_bounds: tuple = None         # defaults to the domain's distance extremes
    step_class: float = 0.8
    step_alpha: float = 0.3
    step_theta: float = 0.8

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("mixture needs K >= 2 classes")
        if not (self.iterations >= self.burnin >= 0):
            raise ValueError("need iterations >= burnin >= 0")

    def pairs(self):
        return [(k, v) for k, v in self.__dict__.items() if not k.startswith("_")]


@dataclass
class IntensityState:
    labels: np.ndarray        # (T,) in {0..K-1}
    sigma2_day: np.ndarray    # (T,)
    gamma: np.ndarray         # (T,)
    beta: np.ndarray          # (T, L)
    dof: np.ndarray           # (K,) a_k
    scale: np.ndarray         # (K,) b_k
    rho: np.ndarray           # (K,)
    nu: np.ndarray            # (K,)
    alpha: np.ndarray         # (K-1, p)
    theta: float
    sigma2_gamma: float
    sigma2_beta: float


def inverse_gamma_logpdf(x, shape, scale):
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x


class _ClassCache:
    """Stacked whitened blocks for one class correlation over a set of days.

    sol_* are the padded triangular solves of [1 | y_t | Psi_t] against the
    day's Cholesky factor; padded rows are exactly zero, so quadratic forms
    and log determinants need no masking.
    """

    __slots__ = ("sol_ones", "sol_y", "sol_basis", "logdet")

    def __init__(self, sols, logdet):
        self.sol_ones = np.ascontiguousarray(sols[:, :, 0])
        self.sol_y = np.ascontiguousarray(sols[:, :, 1])
        self.sol_basis = np.ascontiguousarray(sols[:, :, 2:])
        self.logdet = logdet

    def whitened_residual(self, rows, gamma, beta):
        """(len(rows), m) residual solves for given per-day gamma/beta."""
        return (self.sol_y[rows] - gamma[:, None] * self.sol_ones[rows]
                - np.einsum("tml,tl->tm", self.sol_basis[rows], beta))


def _stacked_cholesky(mats, params):
    """Stacked lower Cholesky; only blocks that genuinely fail get jitter."""
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        pass
    out = np.empty_like(mats)
    for i in range(mats.shape[0]):
        out[i] = cholesky_jitter(mats[i], params=params)
    return out


class IntensityChain:
    """One chain for the intensity model; owns per-class covariance caches."""

    def __init__(self, data: IntensityData, domain: SpatialDomain,
                 graph: AnalogueGraph, covariates, config: IntensityConfig,
                 rng=None):
        if data.n_sites != domain.n_locations:
            raise ValueError("data and domain disagree on station count")
        if data.n_days != graph.n_days:
            raise ValueError("data and analogue graph disagree on day count")
        self.data = data
        self.domain = domain
        self.graph = graph
        self.config = config
        self.covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
        if self.covariates.shape[0] != data.n_days:
            raise ValueError("covariate rows must match the day count")
        self.rng = rng if rng is not None else RngStream(config.seed).generator()
        self.psi = basis_matrix(domain.locations, domain)

        k, p = config.n_classes, self.covariates.shape[1]
        lo, hi = config.rho_bounds or domain.distance_bounds
        self.rho_tr = IntervalTransform(lo, hi)
        self.nu_tr = IntervalTransform(*config.nu_bounds)
        self.dof_tr = IntervalTransform(*config.dof_bounds)
        th_lo, th_hi = graph.theta_bounds
        self.theta_tr = IntervalTransform(np.log(th_lo), np.log(th_hi))
        self.steps = {}
        for j in range(k):
            for name in ("dof", "scale", "rho", "nu"):
                self.steps[f"{name}_{j}"] = AdaptiveStep(config.step_class)
        for j in range(k - 1):
            self.steps[f"alpha_{j}"] = AdaptiveStep(config.step_alpha)
        self.steps["theta"] = AdaptiveStep(config.step_theta)
        self.steps["labels"] = AdaptiveStep(1.0)  # rate bookkeeping only

        t, n, L = data.n_days, data.n_sites, domain.n_basis
        self.state = IntensityState(
            labels=self.rng.integers(0, k, size=t), sigma2_day=np.ones(t),
            gamma=np.zeros(t), beta=np.zeros((t, L)),
            dof=np.full(k, 10.0), scale=np.ones(k),
            rho=np.full(k, 0.5 * (lo + hi)), nu=np.full(k, 1.0),
            alpha=np.zeros((k - 1, p)),
            theta=float(np.sqrt(th_lo * th_hi)),
            sigma2_gamma=1.0, sigma2_beta=1.0,
        )
        self._init_padding()
        self._corr = [None] * k
        self._cache = [None] * k
        self._log_pi = None
        self._weights_cache = (None, None)

    # -- padded-block plumbing ------------------------------------------------

    def _init_padding(self):
        """Pad each day's wet-site block to a common size.

        Each padding slot points at its own virtual station, mutually
        uncorrelated with everything, so one fancy-index gather yields
        exactly block-diag(C[wet, wet], I) for every day at once.
        """
        t, n, L = self.data.n_days, self.data.n_sites, self.domain.n_basis
        self.n_wet = np.array([idx.size for idx in self.data.wet_idx])
        self.max_wet = max(1, int(self.n_wet.max()) if t else 1)
        self._pad_idx = np.empty((t, self.max_wet), dtype=int)
        self._rhs_pad = np.zeros((t, self.max_wet, 2 + L))
        for i, idx in enumerate(self.data.wet_idx):
            self._pad_idx[i, : idx.size] = idx
            self._pad_idx[i, idx.size :] = n + np.arange(self.max_wet - idx.size)
            self._rhs_pad[i, : idx.size, 0] = 1.0
            self._rhs_pad[i, : idx.size, 1] = self.data.y[i, idx]
            self._rhs_pad[i, : idx.size, 2:] = self.psi[idx]

    def _class_corr(self, rho, nu):
        corr = matern_correlation(self.domain.distances, MaternParams(rho, nu))
        np.fill_diagonal(corr, 1.0)
        return corr

    def _build_cache(self, corr, days):
        """Stacked factorizations + whitened blocks for the given days."""
        n = self.data.n_sites
        ext = np.zeros((n + self.max_wet, n + self.max_wet))
        ext[:n, :n] = corr
        ext[n:, n:] = np.eye(self.max_wet)
        idxp = self._pad_idx[days]
        blocks = ext[idxp[:, :, None], idxp[:, None, :]]
        chols = _stacked_cholesky(blocks, params="intensity class blocks")
        sols = np.linalg.solve(chols, self._rhs_pad[days])
        diag = np.einsum("tii->ti", chols)
        logdet = 2.0 * np.sum(np.log(diag), axis=1)
        return _ClassCache(sols, logdet)

    def class_cache(self, k) -> _ClassCache:
        """Full-chronology cache for class k, built lazily."""
        if self._cache[k] is None:
            st = self.state
            if self._corr[k] is None:
                self._corr[k] = self._class_corr(st.rho[k], st.nu[k])
            self._cache[k] = self._build_cache(self._corr[k], np.arange(self.data.n_days))
        return self._cache[k]

    def _label_gather(self):
        """Current-label rows of every per-day whitened quantity."""
        st = self.state
        base = self.class_cache(0)
        ones = base.sol_ones.copy()
        ys = base.sol_y.copy()
        basis = base.sol_basis.copy()
        logdet = base.logdet.copy()
        for k in range(1, self.config.n_classes):
            mask = st.labels == k
            if not np.any(mask):
                continue
            ck = self.class_cache(k)
            ones[mask] = ck.sol_ones[mask]
            ys[mask] = ck.sol_y[mask]
            basis[mask] = ck.sol_basis[mask]
            logdet[mask] = ck.logdet[mask]
        return ones, ys, basis, logdet

    # -- probability caches -----------------------------------------------------

    def log_pi(self, alpha=None):
        """(T, K) log class probabilities; cached for the current loadings."""
        if alpha is None and self._log_pi is not None:
            return self._log_pi
        a = self.state.alpha if alpha is None else alpha
        eta = np.concatenate([self.covariates @ a.T,
                              np.zeros((self.data.n_days, 1))], axis=1)
        eta -= eta.max(axis=1, keepdims=True)
        out = eta - np.log(np.exp(eta).sum(axis=1, keepdims=True))
        if alpha is None:
            self._log_pi = out
        return out

    def day_weights(self, theta):
        if self._weights_cache[0] != theta:
            pairs = [self.graph.weight_pairs(t, theta) for t in range(self.data.n_days)]
            self._weights_cache = (theta, pairs)
        return self._weights_cache[1]

    def day_loglik(self, t, k, sigma2):
        """log N(y_t; mu_t, sigma2 * C_k) on day t's wet sites."""
        if self.n_wet[t] == 0:
            return 0.0
        st = self.state
        cache = self.class_cache(k)
        sol = (cache.sol_y[t] - st.gamma[t] * cache.sol_ones[t]
               - cache.sol_basis[t] @ st.beta[t])
        return -0.5 * (self.n_wet[t] * np.log(2.0 * np.pi * sigma2)
                       + cache.logdet[t] + float(sol @ sol) / sigma2)

    # -- Gibbs updates -------------------------------------------------------

    def update_labels(self):
        """Discrete-uniform independence proposals, one day at a time."""
        st = self.state
        kk = self.config.n_classes
        log_pi = self.log_pi()
        props = self.rng.integers(0, kk, size=self.data.n_days)
        log_us = np.log(self.rng.uniform(size=self.data.n_days))
        half_dof = st.dof / 2.0
        ig_scale = st.dof * st.scale / 2.0
        caches = [self.class_cache(k) for k in range(kk)]
        resid = {k: caches[k].whitened_residual(np.arange(self.data.n_days),
                                                st.gamma, st.beta)
                 for k in range(kk)}
        quad = {k: np.einsum("tm,tm->t", resid[k], resid[k]) for k in range(kk)}
        track = self.steps["labels"]
        for t in range(self.data.n_days):
            cur, new = int(st.labels[t]), int(props[t])
            if new == cur:
                track.record(1.0, True, False)
                continue
            s2 = st.sigma2_day[t]
            log_ratio = (log_pi[t, new] - log_pi[t, cur]
                         - 0.5 * (caches[new].logdet[t] - caches[cur].logdet[t])
                         - 0.5 * (quad[new][t] - quad[cur][t]) / s2
                         + inverse_gamma_logpdf(s2, half_dof[new], ig_scale[new])
                         - inverse_gamma_logpdf(s2, half_dof[cur], ig_scale[cur]))
            accepted = log_us[t] < log_ratio
            track.record(float(np.exp(min(0.0, log_ratio))), accepted, False)
            if accepted:
                st.labels[t] = new

    def sigma2_conditional(self, t):
        """(shape, scale) of the conjugate inverse-gamma day-scale update."""
        st = self.state
        k = int(st.labels[t])
        if self.n_wet[t] == 0:
            return st.dof[k] / 2.0, st.dof[k] * st.scale[k] / 2.0
        cache = self.class_cache(k)
        sol = (cache.sol_y[t] - st.gamma[t] * cache.sol_ones[t]
               - cache.sol_basis[t] @ st.beta[t])
        quad = float(sol @ sol)
        return (st.dof[k] + self.n_wet[t]) / 2.0, \
            (st.dof[k] * st.scale[k] + quad) / 2.0

    def update_sigma2_day(self):
        st = self.state
        ones, ys, basis, _ = self._label_gather()
        resid = ys - st.gamma[:, None] * ones - np.einsum("tml,tl->tm", basis, st.beta)
        quad = np.einsum("tm,tm->t", resid, resid)
        shapes = (st.dof[st.labels] + self.n_wet) / 2.0
        scales = (st.dof[st.labels] * st.scale[st.labels] + quad) / 2.0
        with np.errstate(divide="ignore", over="ignore"):
            draws = scales / self.rng.gamma(shapes, 1.0)
        st.sigma2_day = np.clip(draws, 1e-300, 1e300)

    def gamma_conditional(self, t, prior_mean):
        """(mean, variance) of gamma_t | rest with the day-scaled covariance."""
        st = self.state
        prior_prec = 1.0 / st.sigma2_gamma
        if self.n_wet[t] == 0:
            return prior_mean, st.sigma2_gamma
        cache = self.class_cache(int(st.labels[t]))
        resid = cache.sol_y[t] - cache.sol_basis[t] @ st.beta[t]
        like_prec = float(cache.sol_ones[t] @ cache.sol_ones[t]) / st.sigma2_day[t]
        like_num = float(cache.sol_ones[t] @ resid) / st.sigma2_day[t]
        prec = like_prec + prior_prec
        return (like_num + prior_mean * prior_prec) / prec, 1.0 / prec

    def update_gamma(self):
        st = self.state
        pairs = self.day_weights(st.theta)
        ones, ys, basis, _ = self._label_gather()
        resid = ys - np.einsum("tml,tl->tm", basis, st.beta)
        like_prec = np.einsum("tm,tm->t", ones, ones) / st.sigma2_day
        like_num = np.einsum("tm,tm->t", ones, resid) / st.sigma2_day
        prior_prec = 1.0 / st.sigma2_gamma
        prec = like_prec + prior_prec
        sds = np.sqrt(1.0 / prec)
        noise = self.rng.standard_normal(self.data.n_days)
        for t in range(self.data.n_days):
            pm = 0.0 if pairs[t] is None else float(pairs[t][1] @ st.gamma[pairs[t][0]])
            mean = (like_num[t] + pm * prior_prec) / prec[t]
            st.gamma[t] = mean + sds[t] * noise[t]

    def beta_conditional(self, t):
        """(mean, chol of precision) for beta_t | rest; None on dry days."""
        st = self.state
        if self.n_wet[t] == 0:
            return None
        cache = self.class_cache(int(st.labels[t]))
        b = cache.sol_basis[t]
        s2 = st.sigma2_day[t]
        a = b.T @ b / s2 + np.eye(self.domain.n_basis) / st.sigma2_beta
        chol_a = np.linalg.cholesky(a)
        resid = cache.sol_y[t] - st.gamma[t] * cache.sol_ones[t]
        mean = np.linalg.solve(a, b.T @ resid / s2)
        return mean, chol_a

    def update_beta(self):
        st = self.state
        L = self.domain.n_basis
        ones, ys, basis, _ = self._label_gather()
        resid = ys - st.gamma[:, None] * ones
        gram = np.einsum("tml,tmj->tlj", basis, basis) / st.sigma2_day[:, None, None]
        prec = gram + np.eye(L) / st.sigma2_beta
        rhs = np.einsum("tml,tm->tl", basis, resid) / st.sigma2_day[:, None]
        chols = _stacked_cholesky(prec, params="intensity beta precision")
        means = np.linalg.solve(prec, rhs[:, :, None])[:, :, 0]
        noise = np.linalg.solve(np.transpose(chols, (0, 2, 1)),
                                self.rng.standard_normal((self.data.n_days, L, 1)))
        st.beta = means + noise[:, :, 0]

    # -- Metropolis updates ---------------------------------------------------

    def _class_scale_loglik(self, k, dof, scale):
        st = self.state
        days = np.flatnonzero(st.labels == k)
        if days.size == 0:
            return 0.0
        return float(np.sum(inverse_gamma_logpdf(st.sigma2_day[days],
                                                 dof / 2.0, dof * scale / 2.0)))

    def _field_loglik_from(self, cache, rows, days):
        st = self.state
        resid = cache.whitened_residual(rows, st.gamma[days], st.beta[days])
        quad = np.einsum("tm,tm->t", resid, resid)
        return -0.5 * float(np.sum(
            self.n_wet[days] * np.log(2.0 * np.pi * st.sigma2_day[days])
            + cache.logdet[rows] + quad / st.sigma2_day[days]))

    def _class_field_loglik(self, k, rho=None, nu=None):
        """Field likelihood over class-k wet days.

        With (rho, nu) supplied this evaluates a proposal: a fresh
        correlation and stacked cache are built for the class's days and
        returned for install on acceptance.
        """
        days = np.flatnonzero((self.state.labels == k) & (self.n_wet > 0))
        if rho is None:
            if days.size == 0:
                return 0.0, None
            cache = self.class_cache(k)
            return self._field_loglik_from(cache, days, days), None
        corr = self._class_corr(rho, nu)
        if days.size == 0:
            return 0.0, corr
        cache = self._build_cache(corr, days)
        return self._field_loglik_from(cache, np.arange(days.size), days), corr

    def update_class_params(self, adapting):
        st = self.state
        cfg = self.config
        for k in range(cfg.n_classes):
            # degrees of freedom a_k (uniform prior on a bounded interval)
            def target_dof(z, k=k):
                dof = self.dof_tr.to_value(z)
                return (self._class_scale_loglik(k, dof, st.scale[k])
                        + self.dof_tr.log_jacobian(z)), dof

            z = self.dof_tr.to_unconstrained(st.dof[k])
            lt = (self._class_scale_loglik(k, st.dof[k], st.scale[k])
                  + self.dof_tr.log_jacobian(z))
            z, _, aux, acc = random_walk_update(z, lt, self.steps[f"dof_{k}"],
                                                self.rng, target_dof, adapting)
            if acc:
                st.dof[k] = aux

            # scale b_k: log-scale walk, Gamma prior plus the log Jacobian
            def target_scale(z, k=k):
                b = float(np.exp(z))
                prior = (cfg.scale_gamma_shape - 1.0) * np.log(b) - b / cfg.scale_gamma_scale
                return self._class_scale_loglik(k, st.dof[k], b) + prior + z, b

            z = float(np.log(st.scale[k]))
            lt = target_scale(z)[0]
            z, _, aux, acc = random_walk_update(z, lt, self.steps[f"scale_{k}"],
                                                self.rng, target_scale, adapting)
            if acc:
                st.scale[k] = aux

            # Matern range and smoothness
            def target_rho(z, k=k):
                rho = self.rho_tr.to_value(z)
                try:
                    ll, corr = self._class_field_loglik(k, rho, st.nu[k])
                except np.linalg.LinAlgError:
                    return -np.inf, None
                return ll + self.rho_tr.log_jacobian(z), (rho, st.nu[k], corr)

            cur_ll = self._class_field_loglik(k)[0]
            z = self.rho_tr.to_unconstrained(st.rho[k])
            z, _, aux, acc = random_walk_update(
                z, cur_ll + self.rho_tr.log_jacobian(z),
                self.steps[f"rho_{k}"], self.rng, target_rho, adapting)
            if acc:
                st.rho[k] = aux[0]
                self._corr[k] = aux[2]
                self._cache[k] = None
                cur_ll = None

            def target_nu(z, k=k):
                nu = self.nu_tr.to_value(z)
                try:
                    ll, corr = self._class_field_loglik(k, st.rho[k], nu)
                except np.linalg.LinAlgError:
                    return -np.inf, None
                return ll + self.nu_tr.log_jacobian(z), (st.rho[k], nu, corr)

            if cur_ll is None:
                cur_ll = self._class_field_loglik(k)[0]
            z = self.nu_tr.to_unconstrained(st.nu[k])
            z, _, aux, acc = random_walk_update(
                z, cur_ll + self.nu_tr.log_jacobian(z),
                self.steps[f"nu_{k}"], self.rng, target_nu, adapting)
            if acc:
                st.nu[k] = aux[1]
                self._corr[k] = aux[2]
                self._cache[k] = None

    def update_alpha(self, adapting):
        """Per-class random walks on the logit loadings; the last class stays 0."""
        st = self.state
        log_pi = self.log_pi()
        labels = st.labels
        t_idx = np.arange(self.data.n_days)
        cur_ll = float(log_pi[t_idx, labels].sum())
        prior_prec = 1.0 / self.config.sigma2_alpha
        for j in range(self.config.n_classes - 1):
            step = self.steps[f"alpha_{j}"]
            prop = st.alpha[j] + step.step * self.rng.standard_normal(st.alpha.shape[1])
            alpha_prop = st.alpha.copy()
            alpha_prop[j] = prop
            log_pi_prop = self.log_pi(alpha_prop)
            prop_ll = float(log_pi_prop[t_idx, labels].sum())
            log_ratio = (prop_ll - cur_ll
                         - 0.5 * prior_prec * (float(prop @ prop)
                                               - float(st.alpha[j] @ st.alpha[j])))
            accept_prob = float(np.exp(min(0.0, log_ratio)))
            accepted = np.log(self.rng.uniform()) < log_ratio
            step.record(accept_prob, accepted, adapting)
            if accepted:
                st.alpha[j] = prop
                cur_ll = prop_ll
                self._log_pi = log_pi_prop

    def _gamma_prior_loglik(self, theta):
        st = self.state
        total = 0.0
        for t in range(self.data.n_days):
            pair = self.graph.weight_pairs(t, theta)
            if pair is None:
                continue  # fallback days are theta-independent, they cancel
            mean = float(pair[1] @ st.gamma[pair[0]])
            total += -0.5 * (st.gamma[t] - mean) ** 2 / st.sigma2_gamma
        return total

    def update_theta(self, adapting):
        st = self.state

        def target(z):
            theta = float(np.exp(self.theta_tr.to_value(z)))
            return (self._gamma_prior_loglik(theta)
                    + self.theta_tr.log_jacobian(z)), theta

        z = self.theta_tr.to_unconstrained(np.log(st.theta))
        lt = self._gamma_prior_loglik(st.theta) + self.theta_tr.log_jacobian(z)
        z, _, aux, acc = random_walk_update(z, lt, self.steps["theta"], self.rng,
                                            target, adapting)
        if acc:
            st.theta = aux

    def prior_mean_vector(self):
        st = self.state
        pairs = self.day_weights(st.theta)
        return np.array([0.0 if p is None else float(p[1] @ st.gamma[p[0]])
                         for p in pairs])

    def variance_conditionals(self):
        """((shape, scale) for sigma2_gamma, (shape, scale) for sigma2_beta)."""
        st = self.state
        cfg = self.config
        resid = st.gamma - self.prior_mean_vector()
        gpair = (cfg.a_gamma + self.data.n_days / 2.0,
                 cfg.b_gamma + 0.5 * float(resid @ resid))
        bpair = (cfg.a_beta + self.data.n_days * self.domain.n_basis / 2.0,
                 cfg.b_beta + 0.5 * float(np.sum(st.beta ** 2)))
        return gpair, bpair

    def update_variances(self):
        st = self.state
        gpair, bpair = self.variance_conditionals()
        st.sigma2_gamma = float(sample_inverse_gamma(*gpair, self.rng))
        st.sigma2_beta = float(sample_inverse_gamma(*bpair, self.rng))

    # -- orchestration ---------------------------------------------------------

    def iterate(self, adapting):
        self.update_labels()
        self.update_sigma2_day()
        self.update_gamma()
        self.update_beta()
        self.update_class_params(adapting)
        self.update_alpha(adapting)
        self.update_theta(adapting)
        self.update_variances()

    def regenerate_data(self):
        """Redraw labels, day scales, and wet-site fields given parameters."""
        st = self.state
        pi = np.exp(self.log_pi())
        y_new = np.zeros_like(self.data.y)
        for t in range(self.data.n_days):
            st.labels[t] = int(self.rng.choice(self.config.n_classes, p=pi[t]))
            k = st.labels[t]
            st.sigma2_day[t] = float(sample_inverse_gamma(
                st.dof[k] / 2.0, st.dof[k] * st.scale[k] / 2.0, self.rng))
            idx = self.data.wet_idx[t]
            if idx.size == 0:
                continue
            if self._corr[k] is None:
                self._corr[k] = self._class_corr(st.rho[k], st.nu[k])
            block = self._corr[k][np.ix_(idx, idx)]
            chol = _stacked_cholesky(block[None], params=(st.rho[k], st.nu[k]))[0]
            y_new[t, idx] = (st.gamma[t] + self.psi[idx] @ st.beta[t]
                             + np.sqrt(st.sigma2_day[t])
                             * (chol @ self.rng.standard_normal(idx.size)))
        self.data = IntensityData.from_transformed(y_new, self.data.wet)
        self._init_padding()
        self._cache = [None] * self.config.n_classes

    def draw_params_from_prior(self):
        st, cfg, rng = self.state, self.config, self.rng
        kk = cfg.n_classes
        st.dof = rng.uniform(*cfg.dof_bounds, size=kk)
        st.scale = rng.gamma(cfg.scale_gamma_shape, cfg.scale_gamma_scale, size=kk)
        st.rho = rng.uniform(self.rho_tr.lo, self.rho_tr.hi, size=kk)
        st.nu = rng.uniform(*cfg.nu_bounds, size=kk)
        st.alpha = np.sqrt(cfg.sigma2_alpha) * rng.standard_normal(st.alpha.shape)
        st.theta = float(np.exp(rng.uniform(self.theta_tr.lo, self.theta_tr.hi)))
        st.sigma2_gamma = float(sample_inverse_gamma(cfg.a_gamma, cfg.b_gamma, rng))
        st.sigma2_beta = float(sample_inverse_gamma(cfg.a_beta, cfg.b_beta, rng))
        st.gamma = np.sqrt(st.sigma2_gamma) * rng.standard_normal(self.data.n_days)
        st.beta = np.sqrt(st.sigma2_beta) * rng.standard_normal(st.beta.shape)
        self._log_pi = None
        self._corr = [None] * kk
        self._cache = [None] * kk

    def record_fields(self):
        st = self.state
        return {"theta": st.theta, "sigma2_gamma": st.sigma2_gamma,
                "sigma2_beta": st.sigma2_beta,
                "dof": st.dof.copy(), "scale": st.scale.copy(),
                "rho": st.rho.copy(), "nu": st.nu.copy(),
                "alpha": st.alpha.copy(), "gamma": st.gamma.copy(),
                "beta": st.beta.copy(), "sigma2_day": st.sigma2_day.copy(),
                "labels": st.labels.astype(float)}

    def run(self) -> PosteriorDraws:
        cfg = self.config
        n_rec = thinned_count(cfg.iterations, cfg.burnin, cfg.thin)
        store = None
        rec = 0
        for it in range(cfg.iterations):
            self.iterate(adapting=it < cfg.burnin)
            if it >= cfg.burnin and (it - cfg.burnin) % cfg.thin == 0:
                fields = self.record_fields()
                if store is None:
                    store = {k: np.zeros((n_rec,) + np.shape(v)) for k, v in fields.items()}
                for key, val in fields.items():
                    store[key][rec] = val
                rec += 1
        if store is None:
            store = {k: np.zeros((0,) + np.shape(v)) for k, v in self.record_fields().items()}
        meta = {
            "seed": cfg.seed, "config_hash": config_hash(cfg.pairs()),
            "n_days": self.data.n_days, "n_sites": self.data.n_sites,
            "n_basis": self.domain.n_basis, "n_classes": cfg.n_classes,
            "n_covariates": self.covariates.shape[1],
            "rho_bounds": f"{self.rho_tr.lo},{self.rho_tr.hi}",
            "theta_bounds": f"{np.exp(self.theta_tr.lo)},{np.exp(self.theta_tr.hi)}",
        }
        acc = {name: step.acceptance_rate for name, step in self.steps.items()}
        return PosteriorDraws("intensity", meta, store, acc)


def run_intensity_chain(data, domain, graph, covariates, config, rng=None):
    """Fit the intensity model; deterministic given config.seed."""
    return IntensityChain(data, domain, graph, covariates, config, rng).run()


def relabel_by_range(draws: PosteriorDraws) -> PosteriorDraws:
    """Post-hoc relabeling of mixture classes by ascending Matern range.

    The chain itself is label-unidentified; reporting sorts classes per draw
    so class-parameter posteriors are comparable across draws.  The logit
    loadings are re-pivoted so the sorted last class is the zero row.
    """
    if draws.model != "intensity":
        raise ValueError("relabeling applies to intensity draws")
    fields = {k: v.copy() for k, v in draws.fields.items()}
    order = np.argsort(fields["rho"], axis=1)
    for name in ("rho", "nu", "dof", "scale"):
        fields[name] = np.take_along_axis(fields[name], order, axis=1)
    inverse = np.argsort(order, axis=1)
    labels = fields["labels"].astype(int)
    n_classes = order.shape[1]
    for i in range(draws.n_draws):
        fields["labels"][i] = inverse[i][labels[i]]
        full = np.vstack([fields["alpha"][i], np.zeros(fields["alpha"][i].shape[1])])
        permuted = full[order[i]]
        fields["alpha"][i] = (permuted - permuted[-1])[: n_classes - 1]
    return PosteriorDraws(draws.model, dict(draws.meta), fields, dict(draws.acceptance))

"""Metropolis-within-Gibbs sampler for the clipped-GP occurrence model.

Wet/dry indicators are the signs of a latent Gaussian field whose daily mean
is an offset (with the analogue prior) plus a Gaussian-kernel basis surface.
The latent field gets truncated-normal Gibbs sweeps; offsets, basis
coefficients, and prior variances have conjugate updates; the Matern
parameters and the analogue bandwidth move by random-walk Metropolis on
transformed scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .analogue import AnalogueGraph
from .mcmc import AdaptiveStep, IntervalTransform, PosteriorDraws, config_hash, \
    random_walk_update, thinned_count
from .sampling import RngStream, sample_inverse_gamma, truncated_normal
from .spatial import MaternParams, SpatialDomain, basis_matrix, cholesky_jitter, \
    matern_correlation


@dataclass
class OccurrenceData:
    """Binary wet/dry indicators, (T, n), with a missingness mask."""

    occurrence: np.ndarray
    missing: np.ndarray = None

    def __post_init__(self):
        self.occurrence = np.asarray(self.occurrence)
        if self.missing is None:
            self.missing = np.zeros(self.occurrence.shape, dtype=bool)
        self.missing = np.asarray(self.missing, dtype=bool)
        obs = self.occurrence[~self.missing]
        if not np.all((obs == 0) | (obs == 1)):
            raise ValueError("occurrence entries must be 0/1 where observed")

    @property
    def n_days(self):
        return self.occurrence.shape[0]

    @property
    def n_sites(self):
        return self.occurrence.shape[1]


@dataclass
class OccurrenceConfig:
    iterations: int = 100_000
    burnin: int = 50_000
    thin: int = 10
    seed: int = 0
    latent_sweeps: int = 1
    a_gamma: float = 1.0
    b_gamma: float = 1.0
    a_beta: float = 1.0
    b_beta: float = 1.0
    nu_bounds: tuple = (0.0, 2.0)
    rho_bounds: tuple = None      # defaults to the domain's distance extremes
    step_rho: float = 0.8
    step_nu: float = 0.8
    step_theta: float = 0.8
    save_latent: bool = True
    _mutation: str = None         # test hook; see validation.getting_it_right

    def __post_init__(self):
        if not (self.iterations >= self.burnin >= 0):
            raise ValueError("need iterations >= burnin >= 0")
        if self.latent_sweeps < 1:
            raise ValueError("need at least one latent sweep per iteration")

    def pairs(self):
        return [(k, v) for k, v in self.__dict__.items() if not k.startswith("_")]


@dataclass
class OccurrenceState:
    """All latent variables and parameters of one chain at one iteration."""

    z: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    rho: float
    nu: float
    theta: float
    sigma2_gamma: float
    sigma2_beta: float


class OccurrenceChain:
    """One chain: owns its state, RNG stream, and covariance caches."""

    def __init__(self, data: OccurrenceData, domain: SpatialDomain,
                 graph: AnalogueGraph, config: OccurrenceConfig, rng=None):
        if data.n_sites != domain.n_locations:
            raise ValueError("data and domain disagree on station count")
        if data.n_days != graph.n_days:
            raise ValueError("data and analogue graph disagree on day count")
        self.data = data
        self.domain = domain
        self.graph = graph
        self.config = config
        self.rng = rng if rng is not None else RngStream(config.seed).generator()
        self.psi = basis_matrix(domain.locations, domain)

        lo, hi = config.rho_bounds or domain.distance_bounds
        self.rho_tr = IntervalTransform(lo, hi)
        self.nu_tr = IntervalTransform(*config.nu_bounds)
        th_lo, th_hi = graph.theta_bounds
        self.theta_tr = IntervalTransform(np.log(th_lo), np.log(th_hi))
        self.steps = {"rho": AdaptiveStep(config.step_rho),
                      "nu": AdaptiveStep(config.step_nu),
                      "theta": AdaptiveStep(config.step_theta)}

        t, n, L = data.n_days, data.n_sites, domain.n_basis
        self.state = OccurrenceState(
            z=np.zeros((t, n)), gamma=np.zeros(t), beta=np.zeros((t, L)),
            rho=0.5 * (lo + hi), nu=1.0,
            theta=float(np.sqrt(th_lo * th_hi)),
            sigma2_gamma=1.0, sigma2_beta=1.0,
        )
        self._set_bounds()
        self.state.z = np.where(self.lower > -np.inf, 0.5, 0.0) \
            + np.where(self.upper < np.inf, -0.5, 0.0)
        self._set_matern(self.state.rho, self.state.nu)
        self._weights_cache = (None, None)

    # -- caches ------------------------------------------------------------

    def _set_bounds(self):
        o, miss = self.data.occurrence, self.data.missing
        self.lower = np.where((o == 1) & ~miss, 0.0, -np.inf)
        self.upper = np.where((o == 0) & ~miss, 0.0, np.inf)

    def _matern_quantities(self, rho, nu):
        corr = matern_correlation(self.domain.distances, MaternParams(rho, nu))
        np.fill_diagonal(corr, 1.0)
        chol = cholesky_jitter(corr, params=(rho, nu))
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        prec = cho_solve((chol, True), np.eye(corr.shape[0]))
        return chol, prec, logdet

    def _set_matern(self, rho, nu, quantities=None):
        chol, prec, logdet = quantities or self._matern_quantities(rho, nu)
        self.chol = chol
        self.prec = prec
        self.logdet = logdet
        self.prec_diag = np.diag(prec).copy()
        self.ones_prec = prec.sum(axis=0)
        self.sum_prec = float(self.ones_prec.sum())
        self.prec_psi = prec @ self.psi
        self.psi_prec_psi = self.psi.T @ self.prec_psi

    def day_weights(self, theta):
        """Per-day (idx, weights) pairs at a bandwidth, cached per theta."""
        if self._weights_cache[0] != theta:
            pairs = [self.graph.weight_pairs(t, theta) for t in range(self.data.n_days)]
            self._weights_cache = (theta, pairs)
        return self._weights_cache[1]

    def mean_surface(self):
        return self.state.gamma[:, None] + self.state.beta @ self.psi.T

    # -- conditional evaluations (shared with the formula oracle tests) -----

    def gamma_conditional(self, t, prior_mean):
        """(mean, variance) of gamma_t | rest under the printed conditional."""
        st = self.state
        resid = st.z[t] - self.psi @ st.beta[t]
        prec = self.sum_prec + 1.0 / st.sigma2_gamma
        mean = (self.ones_prec @ resid + prior_mean / st.sigma2_gamma) / prec
        if self.config._mutation == "gamma-drop-prior-precision":
            prec = self.sum_prec
            mean = (self.ones_prec @ resid + prior_mean / st.sigma2_gamma) / prec
        return mean, 1.0 / prec

    def beta_conditional_cholA(self, sigma2_beta):
        a = self.psi_prec_psi + np.eye(self.domain.n_basis) / sigma2_beta
        return cholesky_jitter(a, params="beta precision")

    def beta_conditional(self, t):
        """(mean, covariance) of beta_t | rest under the printed conditional."""
        st = self.state
        chol_a = self.beta_conditional_cholA(st.sigma2_beta)
        rhs = self.prec_psi.T @ (st.z[t] - st.gamma[t])
        mean = cho_solve((chol_a, True), rhs)
        inv_l = solve_triangular(chol_a, np.eye(chol_a.shape[0]), lower=True)
        return mean, inv_l.T @ inv_l

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

    # -- Gibbs updates -------------------------------------------------------

    def update_z(self):
        """Truncated-MVN Gibbs sweep(s) on the latent field, all days at once.

        Coordinate conditionals come from the precomputed precision matrix;
        each coordinate update is vectorized across days.
        """
        st = self.state
        m = self.mean_surface()
        d = st.z - m
        v = d @ self.prec
        qd = self.prec_diag
        for _ in range(self.config.latent_sweeps):
            for i in range(self.data.n_sites):
                cond_mean = m[:, i] - (v[:, i] - qd[i] * d[:, i]) / qd[i]
                cond_sd = 1.0 / np.sqrt(qd[i])
                new = truncated_normal(cond_mean, cond_sd,
                                       self.lower[:, i], self.upper[:, i], self.rng)
                delta = new - st.z[:, i]
                st.z[:, i] = new
                d[:, i] += delta
                v += delta[:, None] * self.prec[i][None, :]

    def update_gamma(self):
        st = self.state
        pairs = self.day_weights(st.theta)
        resid0 = (st.z - st.beta @ self.psi.T) @ self.ones_prec
        for t in range(self.data.n_days):
            pm = 0.0 if pairs[t] is None else float(pairs[t][1] @ st.gamma[pairs[t][0]])
            if self.config._mutation == "gamma-drop-prior-precision":
                prec = self.sum_prec
            else:
                prec = self.sum_prec + 1.0 / st.sigma2_gamma
            mean = (resid0[t] + pm / st.sigma2_gamma) / prec
            st.gamma[t] = mean + np.sqrt(1.0 / prec) * self.rng.standard_normal()

    def update_beta(self):
        st = self.state
        chol_a = self.beta_conditional_cholA(st.sigma2_beta)
        rhs = (st.z - st.gamma[:, None]) @ self.prec_psi          # (T, L)
        means = cho_solve((chol_a, True), rhs.T)                  # (L, T)
        noise = solve_triangular(chol_a.T, self.rng.standard_normal(means.shape),
                                 lower=False)
        st.beta = (means + noise).T

    def prior_mean_vector(self):
        st = self.state
        pairs = self.day_weights(st.theta)
        return np.array([0.0 if p is None else float(p[1] @ st.gamma[p[0]])
                         for p in pairs])

    def update_variances(self):
        st = self.state
        gpair, bpair = self.variance_conditionals()
        st.sigma2_gamma = float(sample_inverse_gamma(*gpair, self.rng))
        st.sigma2_beta = float(sample_inverse_gamma(*bpair, self.rng))

    # -- Metropolis updates ---------------------------------------------------

    def _field_loglik(self, chol, logdet):
        resid = self.state.z - self.mean_surface()
        sol = solve_triangular(chol, resid.T, lower=True)
        return -0.5 * (self.data.n_days * logdet + float(np.sum(sol ** 2)))

    def update_matern(self, adapting):
        st = self.state

        def target_rho(z):
            rho = self.rho_tr.to_value(z)
            try:
                quant = self._matern_quantities(rho, st.nu)
            except np.linalg.LinAlgError:
                return -np.inf, None
            ll = self._field_loglik(quant[0], quant[2])
            return ll + self.rho_tr.log_jacobian(z), (rho, st.nu, quant)

        z = self.rho_tr.to_unconstrained(st.rho)
        lt = self._field_loglik(self.chol, self.logdet) + self.rho_tr.log_jacobian(z)
        z, _, aux, acc = random_walk_update(z, lt, self.steps["rho"], self.rng,
                                            target_rho, adapting)
        if acc:
            st.rho = aux[0]
            self._set_matern(aux[0], aux[1], aux[2])

        def target_nu(z):
            nu = self.nu_tr.to_value(z)
            try:
                quant = self._matern_quantities(st.rho, nu)
            except np.linalg.LinAlgError:
                return -np.inf, None
            ll = self._field_loglik(quant[0], quant[2])
            return ll + self.nu_tr.log_jacobian(z), (st.rho, nu, quant)

        z = self.nu_tr.to_unconstrained(st.nu)
        lt = self._field_loglik(self.chol, self.logdet) + self.nu_tr.log_jacobian(z)
        z, _, aux, acc = random_walk_update(z, lt, self.steps["nu"], self.rng,
                                            target_nu, adapting)
        if acc:
            st.nu = aux[1]
            self._set_matern(aux[0], aux[1], aux[2])

    def _gamma_prior_loglik(self, theta):
        st = self.state
        pairs = [self.graph.weight_pairs(t, theta) for t in range(self.data.n_days)]
        total = 0.0
        for t, pair in enumerate(pairs):
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

    # -- orchestration ---------------------------------------------------------

    def iterate(self, adapting):
        self.update_z()
        self.update_gamma()
        self.update_beta()
        self.update_variances()
        self.update_matern(adapting)
        self.update_theta(adapting)
        self._check_feasible()

    def _check_feasible(self):
        st = self.state
        if np.any(st.z <= self.lower) or np.any(st.z >= self.upper):
            raise RuntimeError("latent field violates its sign bounds; "
                               "bookkeeping bug in the truncated update")

    def regenerate_data(self):
        """Redraw (Z, O) from the model given current parameters (validation)."""
        st = self.state
        noise = self.rng.standard_normal(st.z.shape)
        st.z = self.mean_surface() + noise @ self.chol.T
        occ = (st.z > 0).astype(np.int8)
        self.data = OccurrenceData(occ, np.zeros_like(occ, dtype=bool))
        self._set_bounds()

    def draw_params_from_prior(self):
        """Initialize every parameter from its prior (validation runs)."""
        st, cfg, rng = self.state, self.config, self.rng
        st.rho = float(rng.uniform(self.rho_tr.lo, self.rho_tr.hi))
        st.nu = float(rng.uniform(*cfg.nu_bounds))
        st.theta = float(np.exp(rng.uniform(self.theta_tr.lo, self.theta_tr.hi)))
        st.sigma2_gamma = float(sample_inverse_gamma(cfg.a_gamma, cfg.b_gamma, rng))
        st.sigma2_beta = float(sample_inverse_gamma(cfg.a_beta, cfg.b_beta, rng))
        st.gamma = np.sqrt(st.sigma2_gamma) * rng.standard_normal(self.data.n_days)
        st.beta = np.sqrt(st.sigma2_beta) * rng.standard_normal(st.beta.shape)
        self._set_matern(st.rho, st.nu)

    def record_fields(self):
        st = self.state
        fields = {"rho": st.rho, "nu": st.nu, "theta": st.theta,
                  "sigma2_gamma": st.sigma2_gamma, "sigma2_beta": st.sigma2_beta,
                  "gamma": st.gamma.copy(), "beta": st.beta.copy()}
        if self.config.save_latent:
            fields["z"] = st.z.copy()
        return fields

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
                for k, v in fields.items():
                    store[k][rec] = v
                rec += 1
        if store is None:
            store = {k: np.zeros((0,) + np.shape(v)) for k, v in self.record_fields().items()}
        meta = {
            "seed": cfg.seed, "config_hash": config_hash(cfg.pairs()),
            "n_days": self.data.n_days, "n_sites": self.data.n_sites,
            "n_basis": self.domain.n_basis,
            "rho_bounds": f"{self.rho_tr.lo},{self.rho_tr.hi}",
            "theta_bounds": f"{np.exp(self.theta_tr.lo)},{np.exp(self.theta_tr.hi)}",
        }
        acc = {name: step.acceptance_rate for name, step in self.steps.items()}
        return PosteriorDraws("occurrence", meta, store, acc)


def run_occurrence_chain(data, domain, graph, config, rng=None) -> PosteriorDraws:
    """Fit the occurrence model; deterministic given config.seed."""
    return OccurrenceChain(data, domain, graph, config, rng).run()

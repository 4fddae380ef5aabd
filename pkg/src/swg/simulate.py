"""Forward generative simulator.

Builds synthetic datasets with known parameters: latent synoptic loadings
follow a smooth autoregression, drive both the atmospheric field stacks
(through fixed orthonormal patterns, so EOF analysis recovers the loading
subspace) and, at a configurable signal strength, the daily offsets of the
occurrence and intensity processes.  Outputs use exactly the ingestion
formats, plus a key=value truth record per replicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .analogue import FieldStack
from .io import GaugeTable
from .sampling import RngStream, sample_inverse_gamma
from .spatial import MaternParams, SpatialDomain, basis_matrix, cholesky_jitter, \
    matern_correlation, unproject_xy
from .transforms import softmax_rows, softplus_inv

_ORIGIN = (41.0, -76.5)  # projection centre for synthetic gauge coordinates


@dataclass
class SimDesign:
    """True parameter set and shape of one synthetic dataset."""

    seed: int = 0
    n_stations: int = 15
    train_days: int = 120
    test_days: int = 45
    domain_km: float = 100.0
    knots: tuple = (2, 2)
    # analogue signal
    signal_strength: float = 0.8
    grid_shape: tuple = (10, 10)
    n_variables: int = 2
    components: int = 3
    lags: int = 2
    target_analogues: int = 10
    ar_coefficient: float = 0.85
    # occurrence truth
    rho_occ: float = 35.0
    nu_occ: float = 0.8
    sigma2_gamma_occ: float = 1.0
    sigma2_beta_occ: float = 0.25
    # intensity truth
    n_classes: int = 2
    dof: tuple = (4.0, 20.0)
    scale: tuple = (1.0, 0.6)
    rho_int: tuple = (20.0, 55.0)
    nu_int: tuple = (0.6, 1.2)
    sigma2_gamma_int: float = 1.0
    sigma2_beta_int: float = 0.25
    alpha_scale: float = 1.2
    start_date: str = "2001-01-01"

    def __post_init__(self):
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal strength must lie in [0, 1]")
        if not 0 < self.nu_occ < 2 or any(not 0 < v < 2 for v in self.nu_int):
            raise ValueError("smoothness truth outside the prior support (0, 2)")
        if any(not 0 < a < 30 for a in self.dof):
            raise ValueError("degrees-of-freedom truth outside (0, 30)")
        if len(self.dof) != self.n_classes or len(self.scale) != self.n_classes \
                or len(self.rho_int) != self.n_classes or len(self.nu_int) != self.n_classes:
            raise ValueError("per-class truth tuples must have n_classes entries")

    @property
    def n_days(self):
        return self.train_days + self.test_days


@dataclass
class SimulatedData:
    table: GaugeTable
    stacks: list
    truth: dict
    domain: SpatialDomain
    design: SimDesign = field(repr=False, default=None)

    @property
    def train_dates(self):
        return self.table.dates[: self.design.train_days]

    @property
    def test_dates(self):
        return self.table.dates[self.design.train_days :]


def _ar1_loadings(rng, n_days, q, phi):
    """Stationary AR(1) loadings with decreasing per-component variance."""
    sds = 1.25 ** (-np.arange(q))
    x = np.zeros((n_days, q))
    x[0] = sds * rng.standard_normal(q)
    innov_sd = sds * np.sqrt(1.0 - phi ** 2)
    for t in range(1, n_days):
        x[t] = phi * x[t - 1] + innov_sd * rng.standard_normal(q)
    return x


def _orthonormal_patterns(rng, q, n_cells):
    m = rng.standard_normal((n_cells, q))
    qmat, _ = np.linalg.qr(m)
    return qmat.T  # (q, n_cells), orthonormal rows


def simulate_dataset(design: SimDesign) -> SimulatedData:
    """Generate gauge data, field stacks, and the truth record."""
    rng = RngStream(design.seed).generator()
    nd, n = design.n_days, design.n_stations

    # stations on the projected plane, centred so lat/lon round-trip exactly
    xy = rng.uniform(0.0, design.domain_km, size=(n, 2))
    xy -= xy.mean(axis=0)
    domain = SpatialDomain.from_locations(xy, nx=design.knots[0], ny=design.knots[1])
    lat, lon = unproject_xy(xy, _ORIGIN)
    psi = basis_matrix(domain.locations, domain)
    lo_d, hi_d = domain.distance_bounds
    for rho in (design.rho_occ, *design.rho_int):
        if not lo_d < rho < hi_d:
            raise ValueError(f"range truth {rho} outside the realized prior "
                             f"support ({lo_d:.2f}, {hi_d:.2f})")

    # latent synoptic loadings and the field stacks they generate
    n_cells = design.grid_shape[0] * design.grid_shape[1]
    loadings = []
    stacks = []
    dates = [(date.fromisoformat(design.start_date) + timedelta(days=i)).isoformat()
             for i in range(nd)]
    for v in range(design.n_variables):
        x_v = _ar1_loadings(rng, nd, design.components, design.ar_coefficient)
        patterns = _orthonormal_patterns(rng, design.components, n_cells)
        meanf = rng.standard_normal(n_cells) * 2.0
        fields = (meanf[None, :] + x_v @ patterns).reshape((nd,) + design.grid_shape)
        stacks.append(FieldStack(f"var{v}", fields, dates))
        loadings.append(x_v)
    x_all = np.concatenate(loadings, axis=1)
    x_std = x_all / x_all[: design.train_days].std(axis=0, ddof=1)

    # analogue signal: a lag-weighted functional of the loadings
    direction = rng.standard_normal(x_all.shape[1])
    direction /= np.linalg.norm(direction)
    lag_w = 0.6 ** np.arange(design.lags + 1)
    sig = np.zeros(nd)
    proj = x_std @ direction
    for l, wl in enumerate(lag_w):
        sig[l:] += wl * proj[: nd - l if l else nd]
    sig = (sig - sig.mean()) / sig.std(ddof=1)

    def offsets(sigma2, noise):
        s = design.signal_strength
        return np.sqrt(sigma2) * (np.sqrt(s) * sig + np.sqrt(1.0 - s) * noise)

    gamma_occ = offsets(design.sigma2_gamma_occ, rng.standard_normal(nd))
    gamma_int = offsets(design.sigma2_gamma_int, rng.standard_normal(nd))

    # occurrence: clipped Gaussian field
    corr_occ = matern_correlation(domain.distances,
                                  MaternParams(design.rho_occ, design.nu_occ))
    np.fill_diagonal(corr_occ, 1.0)
    chol_occ = cholesky_jitter(corr_occ, params="occurrence truth")
    beta_occ = np.sqrt(design.sigma2_beta_occ) \
        * rng.standard_normal((nd, domain.n_basis))
    z = (gamma_occ[:, None] + beta_occ @ psi.T
         + rng.standard_normal((nd, n)) @ chol_occ.T)
    occ = z > 0

    # intensity: labelled t-process mixture on wet sites
    kk = design.n_classes
    alpha = np.zeros((kk - 1, 1 + x_all.shape[1]))
    alpha[:, 1] = design.alpha_scale * np.linspace(1.0, -1.0, kk - 1) \
        if kk > 2 else design.alpha_scale
    u = np.column_stack([np.ones(nd), x_std])
    eta = np.concatenate([u @ alpha.T, np.zeros((nd, 1))], axis=1)
    pis = softmax_rows(eta)
    labels = np.array([rng.choice(kk, p=pis[t]) for t in range(nd)])
    chols_int = []
    for k in range(kk):
        c = matern_correlation(domain.distances,
                               MaternParams(design.rho_int[k], design.nu_int[k]))
        np.fill_diagonal(c, 1.0)
        chols_int.append(cholesky_jitter(c, params=f"intensity truth {k}"))
    beta_int = np.sqrt(design.sigma2_beta_int) \
        * rng.standard_normal((nd, domain.n_basis))
    sigma2_day = np.empty(nd)
    y = np.zeros((nd, n))
    for t in range(nd):
        k = labels[t]
        sigma2_day[t] = sample_inverse_gamma(design.dof[k] / 2.0,
                                             design.dof[k] * design.scale[k] / 2.0,
                                             rng)
        eps = chols_int[k] @ rng.standard_normal(n)
        y[t] = gamma_int[t] + psi @ beta_int[t] + np.sqrt(sigma2_day[t]) * eps
    # clamp so a wet site's amount never underflows to exactly zero
    y = np.maximum(y, -700.0)
    amounts = np.where(occ, np.logaddexp(0.0, y), 0.0)

    table = GaugeTable([f"s{i:03d}" for i in range(n)], lat, lon, dates, amounts)
    # the loader recomputes y from the written amounts; store that version so
    # simulate -> save -> load is bit-exact
    y_roundtrip = np.where(occ, softplus_inv(np.where(occ, amounts, 1.0)), 0.0)

    truth = {
        "seed": design.seed, "signal_strength": design.signal_strength,
        "rho_occ": design.rho_occ, "nu_occ": design.nu_occ,
        "sigma2_gamma_occ": design.sigma2_gamma_occ,
        "sigma2_beta_occ": design.sigma2_beta_occ,
        "n_classes": kk,
        "dof": np.asarray(design.dof, dtype=float),
        "scale": np.asarray(design.scale, dtype=float),
        "rho_int": np.asarray(design.rho_int, dtype=float),
        "nu_int": np.asarray(design.nu_int, dtype=float),
        "sigma2_gamma_int": design.sigma2_gamma_int,
        "sigma2_beta_int": design.sigma2_beta_int,
        "gamma_occ": gamma_occ, "gamma_int": gamma_int,
        "labels": labels, "sigma2_day": sigma2_day,
        "occurrence": occ.astype(np.int8), "y_transformed": y_roundtrip,
        "alpha": alpha, "stations_xy": xy,
    }
    return SimulatedData(table, stacks, truth, domain, design)


def save_truth(truth: dict, path):
    """Key=value truth record; arrays flattened with full-precision repr."""
    with open(path, "w") as fh:
        for key, val in truth.items():
            arr = np.asarray(val)
            if arr.ndim == 0:
                fh.write(f"{key} = {val!r}\n")
            else:
                flat = ",".join(repr(float(v)) for v in arr.reshape(-1))
                shape = "x".join(str(s) for s in arr.shape)
                fh.write(f"{key} [{shape}] = {flat}\n")


def load_truth(path):
    import ast

    out = {}
    with open(path) as fh:
        for line in fh:
            key, _, val = line.strip().partition(" = ")
            if "[" in key:
                name, shape_s = key.split(" [")
                shape = tuple(int(s) for s in shape_s.rstrip("]").split("x"))
                arr = np.array([float(v) for v in val.split(",")]).reshape(shape)
                out[name] = arr
            else:
                out[key] = ast.literal_eval(val)
    return out

"""Analogue prior machinery.

Synoptic-scale atmospheric fields are reduced to EOF loadings, lag-embedded
into short trajectories, and compared by Euclidean distance; days whose
trajectories are close are analogues.  A compact Gaussian kernel over those
distances supplies per-day weight vectors that carry temporal dependence
into the daily offset terms of both precipitation models.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .recordfile import read_blocks, write_blocks


class NoAnalogueError(ValueError):
    """Raised when a day has no in-threshold analogue and no fallback is allowed."""


# ---------------------------------------------------------------------------
# atmospheric field stacks and their on-disk layout
# ---------------------------------------------------------------------------

@dataclass
class FieldStack:
    """Time-indexed gridded atmospheric variable (one variable per stack)."""

    variable: str
    values: np.ndarray          # (T, nrow, ncol)
    days: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("values must be (days, rows, cols)")
        if len(self.days) != self.values.shape[0]:
            raise ValueError("day list does not match the number of snapshots")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"field stack {self.variable!r} has missing snapshots")

    @property
    def n_days(self):
        return self.values.shape[0]

    @property
    def grid_shape(self):
        return self.values.shape[1:]


def save_field_stacks(dirpath, stacks):
    """Write stacks to a directory: text header + one f64-LE file per variable."""
    os.makedirs(dirpath, exist_ok=True)
    first = stacks[0]
    for st in stacks:
        if st.grid_shape != first.grid_shape or list(st.days) != list(first.days):
            raise ValueError("all stacks must share grid and day axis")
    lines = [
        f"nrows = {first.grid_shape[0]}",
        f"ncols = {first.grid_shape[1]}",
        f"ndays = {first.n_days}",
        "variables = " + ",".join(st.variable for st in stacks),
        "days = " + ",".join(str(d) for d in first.days),
    ]
    with open(os.path.join(dirpath, "header.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for st in stacks:
        st.values.astype("<f8").tofile(os.path.join(dirpath, f"{st.variable}.f64"))


def load_field_stacks(dirpath):
    header = os.path.join(dirpath, "header.txt")
    if not os.path.exists(header):
        raise FileNotFoundError(f"no field-stack header at {header}")
    meta = {}
    with open(header) as fh:
        for line in fh:
            key, _, val = line.strip().partition(" = ")
            meta[key] = val
    shape = (int(meta["ndays"]), int(meta["nrows"]), int(meta["ncols"]))
    days = meta["days"].split(",")
    stacks = []
    for var in meta["variables"].split(","):
        path = os.path.join(dirpath, f"{var}.f64")
        vals = np.fromfile(path, dtype="<f8").reshape(shape)
        stacks.append(FieldStack(var, vals, days))
    return stacks


# ---------------------------------------------------------------------------
# EOF bases
# ---------------------------------------------------------------------------

@dataclass
class EofBasis:
    """Leading EOF patterns of one variable, plus the centering mean."""

    variable: str
    patterns: np.ndarray         # (q, ncells), orthonormal rows
    singular_values: np.ndarray  # (q,), non-increasing
    mean: np.ndarray             # (ncells,)
    grid_shape: tuple

    @property
    def n_components(self):
        return self.patterns.shape[0]


def compute_eof_basis(stack: FieldStack, q: int) -> EofBasis:
    """Leading ``q`` EOFs of a field stack.

    Snapshots are centered by their temporal mean per grid cell; patterns are
    the leading right singular vectors of the centered (T, cells) matrix.
    """
    t = stack.n_days
    if q < 1:
        raise ValueError("need at least one component")
    if t <= q:
        raise ValueError(f"need more than q={q} snapshots, have {t}")
    flat = stack.values.reshape(t, -1)
    mean = flat.mean(axis=0)
    centered = flat - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(svals > svals[0] * 1e-12)) if svals[0] > 0 else 0
    if q > rank:
        raise ValueError(f"q={q} exceeds the data rank {rank}")
    return EofBasis(stack.variable, vt[:q], svals[:q], mean, stack.grid_shape)


def project_loadings(snapshot, basis: EofBasis) -> np.ndarray:
    """Loadings of one gridded snapshot on a basis: (centered field) . patterns."""
    snap = np.asarray(snapshot, dtype=float)
    if snap.shape != basis.grid_shape and snap.size != basis.mean.size:
        raise ValueError(f"snapshot grid {snap.shape} does not match basis")
    return (snap.reshape(-1) - basis.mean) @ basis.patterns.T


def stack_loadings(stack: FieldStack, basis: EofBasis) -> np.ndarray:
    """(T, q) loadings of every snapshot in a stack."""
    flat = stack.values.reshape(stack.n_days, -1)
    return (flat - basis.mean) @ basis.patterns.T


def save_eof_basis(path, bases):
    blocks = {}
    meta = {"variables": ",".join(b.variable for b in bases)}
    for b in bases:
        meta[f"grid_{b.variable}"] = f"{b.grid_shape[0]}x{b.grid_shape[1]}"
        blocks[f"patterns_{b.variable}"] = b.patterns
        blocks[f"singular_values_{b.variable}"] = b.singular_values
        blocks[f"mean_{b.variable}"] = b.mean
    write_blocks(path, "eofbasis", meta, blocks)


def load_eof_basis(path):
    kind, meta, blocks = read_blocks(path)
    if kind != "eofbasis":
        raise ValueError(f"{path}: expected an eofbasis file, got {kind!r}")
    bases = []
    for var in meta["variables"].split(","):
        rows, cols = (int(v) for v in meta[f"grid_{var}"].split("x"))
        bases.append(EofBasis(var, blocks[f"patterns_{var}"],
                              blocks[f"singular_values_{var}"],
                              blocks[f"mean_{var}"], (rows, cols)))
    return bases


# ---------------------------------------------------------------------------
# lag embedding and distances
# ---------------------------------------------------------------------------

@dataclass
class Embedding:
    """Per-day trajectory matrices X_t = [x_t, x_{t-1}, ..., x_{t-r}].

    The first ``lags`` days have no complete trajectory and are masked out.
    """

    matrices: np.ndarray   # (T, dim, lags+1); zeros on invalid days
    lags: int
    valid: np.ndarray      # (T,) bool

    @property
    def n_days(self):
        return self.matrices.shape[0]

    def flattened(self):
        """(T, dim*(lags+1)) row view used for Euclidean distances."""
        return self.matrices.reshape(self.n_days, -1)


def lag_embed(loadings: np.ndarray, lags: int) -> Embedding:
    """Stack each day's loading vector with its ``lags`` predecessors."""
    x = np.atleast_2d(np.asarray(loadings, dtype=float))
    t, dim = x.shape
    if lags < 0:
        raise ValueError("lag count must be nonnegative")
    if lags >= t:
        raise ValueError(f"lag count {lags} requires more than {t} days")
    mats = np.zeros((t, dim, lags + 1))
    for j in range(lags + 1):
        mats[lags:, :, j] = x[lags - j : t - j]
    if lags == 0:
        mats[:, :, 0] = x
    valid = np.ones(t, dtype=bool)
    valid[:lags] = False
    return Embedding(mats, lags, valid)


def embedding_distances(emb: Embedding) -> np.ndarray:
    """Frobenius-norm distances between day trajectories.

    Pairs involving an invalid day get +inf so they can never fall under the
    analogue threshold; the diagonal is zero.
    """
    flat = emb.flattened()
    d = cdist(flat, flat)
    d = 0.5 * (d + d.T)
    bad = ~emb.valid
    d[bad, :] = np.inf
    d[:, bad] = np.inf
    np.fill_diagonal(d, 0.0)
    return d


def cross_distances(emb_new: Embedding, emb_train: Embedding) -> np.ndarray:
    """(T_new, T_train) trajectory distances; invalid days map to +inf."""
    d = cdist(emb_new.flattened(), emb_train.flattened())
    d[~emb_new.valid, :] = np.inf
    d[:, ~emb_train.valid] = np.inf
    return d


# ---------------------------------------------------------------------------
# threshold calibration and kernel weights
# ---------------------------------------------------------------------------

def calibrate_tau(distances: np.ndarray, m: int) -> float:
    """Threshold tau such that on average ``m`` analogues fall inside it.

    Bisection on the average (over days with any finite distance) number of
    neighbours strictly inside tau; deterministic given inputs.  Raises if
    ties in the distances make the +-0.5 target unattainable.
    """
    d = np.asarray(distances, dtype=float)
    t = d.shape[0]
    finite_rows = np.isfinite(d).sum(axis=1) > 1  # beyond the zero diagonal
    n_rows = int(finite_rows.sum())
    if n_rows == 0:
        raise ValueError("no finite distances to calibrate against")
    if not 1 <= m < t - 1:
        raise ValueError(f"target analogue count m={m} must be in [1, T-2]")
    mask = ~np.eye(t, dtype=bool)[finite_rows]
    flat = d[finite_rows][mask]
    flat = flat[np.isfinite(flat)]
    if flat.size == 0:
        raise ValueError("no finite off-diagonal distances")

    def mean_count(tau):
        return np.count_nonzero(flat < tau) / n_rows

    lo, hi = 0.0, float(flat.max()) * (1.0 + 1e-9) + 1e-12
    if mean_count(hi) < m:       # m close to T-1: open the threshold fully
        tau = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mean_count(mid) >= m:
                hi = mid
            else:
                lo = mid
        tau = hi if abs(mean_count(hi) - m) <= abs(mean_count(lo) - m) else lo
    err = abs(mean_count(tau) - m)
    if err > 0.5:
        ties = np.isclose(flat, np.median(flat)).mean()
        raise ValueError(
            f"cannot hit an average of {m} analogues within +-0.5 "
            f"(closest: {mean_count(tau):.2f}; tied distances fraction {ties:.2f})"
        )
    return float(tau)


def analogue_weights(d_row, theta, tau, self_index=None):
    """Normalized compact-Gaussian kernel weights for one day.

    Unnormalized weight exp(-d^2 / (2 theta)) for distances strictly under
    ``tau``, zero otherwise; the self distance is forced to zero weight
    before normalization.  Returns None when no distance falls inside the
    threshold: the caller must fall back to the independence prior.
    """
    if theta <= 0:
        raise ValueError("bandwidth theta must be positive")
    d = np.asarray(d_row, dtype=float)
    inside = d < tau
    if self_index is not None:
        inside = inside.copy()
        inside[self_index] = False
    w = np.zeros_like(d)
    w[inside] = np.exp(-d[inside] ** 2 / (2.0 * theta))
    total = w.sum()
    if total <= 0.0:
        return None
    return w / total


@dataclass
class AnalogueGraph:
    """Per-day analogue neighbourhood: distances, threshold, weight support.

    Weights are a function of the kernel bandwidth, which is sampled, so the
    graph precomputes the in-threshold neighbour indices and squared
    distances and evaluates weight vectors on demand.
    """

    distances: np.ndarray
    tau: float
    target_count: int
    theta_bounds: tuple
    neighbor_idx: list = field(repr=False, default=None)
    neighbor_d2: list = field(repr=False, default=None)

    def __post_init__(self):
        if self.neighbor_idx is None:
            t = self.distances.shape[0]
            self.neighbor_idx, self.neighbor_d2 = [], []
            for i in range(t):
                row = self.distances[i].copy()
                row[i] = np.inf
                idx = np.flatnonzero(row < self.tau)
                self.neighbor_idx.append(idx)
                self.neighbor_d2.append(row[idx] ** 2)

    @property
    def n_days(self):
        return self.distances.shape[0]

    @property
    def has_neighbors(self):
        return np.array([idx.size > 0 for idx in self.neighbor_idx])

    def weight_pairs(self, t, theta):
        """(neighbour indices, weights) for day t, or None on fallback."""
        idx = self.neighbor_idx[t]
        if idx.size == 0:
            return None
        w = np.exp(-self.neighbor_d2[t] / (2.0 * theta))
        return idx, w / w.sum()

    def weights_matrix(self, theta):
        """(T, T) dense weight matrix; all-zero rows are fallback days."""
        out = np.zeros_like(self.distances)
        for t in range(self.n_days):
            pair = self.weight_pairs(t, theta)
            if pair is not None:
                out[t, pair[0]] = pair[1]
        return out

    def prior_mean(self, t, theta, gamma):
        """Analogue prior mean w_t' gamma_{-t}; 0.0 on fallback days."""
        pair = self.weight_pairs(t, theta)
        if pair is None:
            return 0.0
        idx, w = pair
        return float(w @ gamma[idx])

    @classmethod
    def from_distances(cls, distances, m, theta_bounds=None):
        tau = calibrate_tau(distances, m)
        if theta_bounds is None:
            theta_bounds = default_theta_bounds(distances)
        return cls(np.asarray(distances, dtype=float), tau, m, theta_bounds)

    @classmethod
    def independence(cls, n_days, theta_bounds=(0.5, 2.0)):
        """Graph with no analogues: every day uses the independence prior."""
        d = np.full((n_days, n_days), np.inf)
        np.fill_diagonal(d, 0.0)
        return cls(d, 0.0, 0, theta_bounds)


def default_theta_bounds(distances):
    """Bandwidth prior support: 1st-99th percentile of squared distances."""
    d = np.asarray(distances, dtype=float)
    mask = ~np.eye(d.shape[0], dtype=bool)
    flat = d[mask]
    flat = flat[np.isfinite(flat)] ** 2
    if flat.size == 0:
        return (0.5, 2.0)
    lo, hi = np.percentile(flat, [1.0, 99.0])
    lo = max(float(lo), 1e-12)
    hi = max(float(hi), lo * (1.0 + 1e-9))
    return (lo, hi)


# ---------------------------------------------------------------------------
# end-to-end construction from field stacks
# ---------------------------------------------------------------------------

@dataclass
class AnalogueInputs:
    """Everything the samplers and forecaster need from the atmosphere.

    Loadings are standardized per dimension by their training standard
    deviations before variables are concatenated, so no single variable
    dominates the trajectory distances.  ``covariates`` is the mixture-model
    design matrix: intercept + the same day's standardized loading vector.
    """

    bases: list
    loading_sds: np.ndarray
    loadings: np.ndarray       # (T, D) standardized, concatenated
    embedding: Embedding
    graph: AnalogueGraph
    lags: int

    @property
    def covariates(self):
        return np.column_stack([np.ones(self.loadings.shape[0]), self.loadings])

    def project_days(self, stacks):
        """Standardized concatenated loadings for new field stacks."""
        parts = []
        for st, basis in zip(stacks, self.bases):
            if st.variable != basis.variable:
                raise ValueError(f"stack order mismatch: {st.variable} vs {basis.variable}")
            parts.append(stack_loadings(st, basis))
        raw = np.concatenate(parts, axis=1)
        return raw / self.loading_sds

    def embed_new(self, loadings_std):
        return lag_embed(loadings_std, self.lags)


def build_analogue_inputs(stacks, q, lags, m, theta_bounds=None) -> AnalogueInputs:
    """EOFs -> standardized loadings -> lag embedding -> calibrated graph."""
    bases, parts = [], []
    for st in stacks:
        basis = compute_eof_basis(st, q)
        bases.append(basis)
        parts.append(stack_loadings(st, basis))
    raw = np.concatenate(parts, axis=1)
    sds = raw.std(axis=0, ddof=1)
    sds[sds == 0] = 1.0
    loadings = raw / sds
    emb = lag_embed(loadings, lags)
    dist = embedding_distances(emb)
    graph = AnalogueGraph.from_distances(dist, m, theta_bounds)
    return AnalogueInputs(bases, sds, loadings, emb, graph, lags)

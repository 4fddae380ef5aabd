"""Scalar transforms: the softplus pair and mixture-class probabilities.

Positive precipitation accumulations are mapped to the real line before
modelling; ``softplus_inv`` is that map (log(exp(y) - 1)) and
``softplus_fwd`` (log(1 + exp(x))) takes modelled values back to positive
amounts.  Both leave moderate-to-large values effectively unchanged and are
evaluated in log1p/expm1 form so arguments up to ~700 stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softplus_fwd(x):
    """log(1 + exp(x)); maps the real line to positive amounts."""
    x = np.asarray(x, dtype=float)
    out = np.logaddexp(0.0, x)
    return float(out) if out.ndim == 0 else out


def softplus_inv(y):
    """log(exp(y) - 1); maps positive amounts to the real line."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("softplus_inv requires strictly positive finite input")
    small = y < 20.0
    out = np.empty_like(y)
    # below ~20: log(expm1(y)); above: y + log(1 - exp(-y)) avoids overflow
    out[small] = np.log(np.expm1(y[small]))
    ylarge = y[~small]
    out[~small] = ylarge + np.log1p(-np.exp(-ylarge))
    return float(out) if out.ndim == 0 else out


@dataclass
class MixtureLogit:
    """Multinomial-logistic class-membership model.

    loadings   : (K-1, p) coefficients; the final class is pinned to zero
    covariates : (T, p) per-day covariate vectors
    """

    loadings: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        self.loadings = np.atleast_2d(np.asarray(self.loadings, dtype=float))
        self.covariates = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        if self.loadings.shape[1] != self.covariates.shape[1]:
            raise ValueError("loadings and covariates disagree on p")
        if not np.all(np.isfinite(self.covariates)):
            raise ValueError("covariates must be finite")

    @property
    def n_classes(self) -> int:
        return self.loadings.shape[0] + 1

    def linear_predictor(self, t=None) -> np.ndarray:
        """eta_{t,k} = u_t' alpha_k with eta_{t,K} = 0."""
        u = self.covariates if t is None else self.covariates[t : t + 1]
        eta = u @ self.loadings.T
        return np.concatenate([eta, np.zeros((eta.shape[0], 1))], axis=1)


def softmax_rows(eta: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    shifted = eta - eta.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mixture_probabilities(logit: MixtureLogit, t=None) -> np.ndarray:
    """Class-membership probabilities pi_t.

    Returns the length-K vector for day ``t`` or the full (T, K) matrix when
    ``t`` is None.  Rows sum to one and are invariant to adding a common
    constant to every linear predictor.
    """
    pis = softmax_rows(logit.linear_predictor(t))
    return pis[0] if t is not None else pis

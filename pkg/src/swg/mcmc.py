"""Shared Metropolis-within-Gibbs plumbing.

Random-walk proposals run on unconstrained transformed scales (hard prior
bounds kill naive walks near the edges), with the transform Jacobian folded
into the acceptance ratio.  Step sizes adapt by Robbins-Monro toward a 0.4
acceptance rate during burn-in only and are frozen afterwards.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .recordfile import read_blocks, write_blocks

ACCEPT_TARGET = 0.4


@dataclass(frozen=True)
class IntervalTransform:
    """Bijection between an open interval (lo, hi) and the real line."""

    lo: float
    hi: float

    def to_unconstrained(self, x):
        p = (x - self.lo) / (self.hi - self.lo)
        p = min(max(p, 1e-12), 1.0 - 1e-12)
        return float(np.log(p) - np.log1p(-p))

    def to_value(self, z):
        return self.lo + (self.hi - self.lo) / (1.0 + np.exp(-z))

    def log_jacobian(self, z):
        # d value / d z = (hi-lo) * sigmoid(z) * (1 - sigmoid(z))
        return float(np.log(self.hi - self.lo)
                     - np.logaddexp(0.0, -z) - np.logaddexp(0.0, z))


@dataclass
class AdaptiveStep:
    """Random-walk step size with burn-in-only Robbins-Monro tuning."""

    step: float
    target: float = ACCEPT_TARGET
    n_proposed: int = 0
    n_accepted: int = 0

    def record(self, accept_prob, accepted, adapting):
        self.n_proposed += 1
        self.n_accepted += int(accepted)
        if adapting:
            rate = 1.0 / (1.0 + self.n_proposed) ** 0.6
            self.step = float(np.clip(self.step * np.exp(rate * (accept_prob - self.target)),
                                      1e-5, 1e4))

    @property
    def acceptance_rate(self):
        return self.n_accepted / self.n_proposed if self.n_proposed else float("nan")


def random_walk_update(z, log_target, step: AdaptiveStep, rng, target_fn, adapting):
    """One Gaussian random-walk Metropolis update on an unconstrained scale.

    ``target_fn(z)`` returns (log target incl. Jacobian, aux); aux from the
    accepted evaluation is handed back so callers can install caches.
    """
    z_prop = z + step.step * rng.standard_normal()
    lt_prop, aux = target_fn(z_prop)
    log_ratio = lt_prop - log_target
    accept_prob = float(np.exp(min(0.0, log_ratio)))
    accepted = np.log(rng.uniform()) < log_ratio
    step.record(accept_prob, accepted, adapting)
    if accepted:
        return z_prop, lt_prop, aux, True
    return z, log_target, None, False


def config_hash(pairs) -> str:
    """Stable hash of an iterable of (key, value) config pairs."""
    joined = "\n".join(f"{k}={v}" for k, v in sorted(pairs))
    return hashlib.sha256(joined.encode()).hexdigest()[:16]


@dataclass
class PosteriorDraws:
    """Thinned chain output: the contract between fit and predict/score.

    ``fields`` maps parameter names to (n_draws, ...) arrays; the on-disk
    header documents the field order and shapes.  Acceptance rates go to a
    plain-text manifest next to the draws file.
    """

    model: str
    meta: dict
    fields: dict
    acceptance: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        for arr in self.fields.values():
            return arr.shape[0]
        return 0

    def __getitem__(self, name):
        return self.fields[name]

    def save(self, path):
        meta = {"model": self.model, "n_draws": str(self.n_draws)}
        meta.update({k: str(v) for k, v in self.meta.items()})
        write_blocks(path, "draws", meta, self.fields)
        with open(str(path) + ".manifest", "w") as fh:
            fh.write(f"model = {self.model}\n")
            fh.write(f"n_draws = {self.n_draws}\n")
            for key, val in sorted(self.acceptance.items()):
                fh.write(f"acceptance_{key} = {val:.4f}\n")

    @classmethod
    def load(cls, path):
        kind, meta, blocks = read_blocks(path)
        if kind != "draws":
            raise ValueError(f"{path}: expected a draws file, got {kind!r}")
        model = meta.pop("model")
        meta.pop("n_draws", None)
        return cls(model, meta, blocks)


def thinned_count(iterations, burnin, thin):
    """Number of retained draws for a run plan."""
    if burnin < 0 or iterations < burnin:
        raise ValueError("need iterations > burnin >= 0")
    if thin < 1:
        raise ValueError("thinning must be >= 1")
    post = iterations - burnin
    return (post + thin - 1) // thin

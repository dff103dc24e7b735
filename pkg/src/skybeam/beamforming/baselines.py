"""Non-learned beamformers: matched filter, random, and a cross-entropy
search that serves as a small-instance near-optimal reference.

All of them expose the same ``predict(list of csi) -> list of precoders``
surface as the GNN estimator, so they drop into the environment and the
sweep harness interchangeably.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ..radio import ClusterSnapshot, cluster_sum_rate
from ..validation import ValidationError, check_csi_matrix

__all__ = ["MrtBeamformer", "RandomBeamformer", "CemBeamformer", "OracleConfig",
           "mrt", "random_precoder", "cem_oracle", "project_power"]


def project_power(w: np.ndarray, p_max: float, eps: float = 1e-12) -> np.ndarray:
    """Scale a complex precoder onto the power ball: alpha = min(1, sqrt(Pmax/(P+eps)))."""
    power = float(np.sum(np.abs(w) ** 2))
    return w * min(1.0, np.sqrt(p_max / (power + eps)))


def mrt(csi: np.ndarray, p_max: float) -> np.ndarray:
    """Maximum-ratio transmission with an equal power split across users."""
    csi = check_csi_matrix(csi)
    norms = np.linalg.norm(csi, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("degenerate zero-norm channel row")
    k = csi.shape[0]
    return np.sqrt(p_max / k) * csi / norms


def random_precoder(csi: np.ndarray, p_max: float, rng: np.random.Generator,
                    eps: float = 1e-12) -> np.ndarray:
    """Complex Gaussian beams projected onto the power budget."""
    csi = check_csi_matrix(csi)
    w = rng.normal(size=csi.shape) + 1j * rng.normal(size=csi.shape)
    return project_power(w, p_max, eps)


@dataclass(frozen=True)
class OracleConfig:
    """Cross-entropy search settings. Intended for small instances; the
    search space has 2 * users * antennas real dimensions."""

    population: int = 64
    elite_fraction: float = 0.125
    iterations: int = 60
    init_scale: float = 1.0
    seed: int = 0
    min_sigma: float = 1e-4

    def __post_init__(self):
        elites = max(1, int(round(self.elite_fraction * self.population)))
        if self.population < 2 * elites or elites < 1:
            raise ValidationError("population must be at least twice the elite count")

    @property
    def n_elites(self) -> int:
        return max(1, int(round(self.elite_fraction * self.population)))


def cem_oracle(csi: np.ndarray, p_max: float, noise_power: float,
               cfg: OracleConfig) -> tuple[np.ndarray, float]:
    """Derivative-free sum-rate maximization for one cluster.

    Samples precoders from a diagonal Gaussian over the stacked real/imag
    entries, projects each onto the power budget, refits the sampler to the
    elites, and tracks the best feasible precoder found. Best-so-far is
    monotone in the iteration count for a fixed seed.
    """
    csi = check_csi_matrix(csi)
    k, l = csi.shape
    dim = 2 * k * l
    rng = np.random.default_rng(cfg.seed)
    mean = np.zeros(dim)
    sigma = np.full(dim, cfg.init_scale * np.sqrt(p_max / (k * l)))

    def decode(x: np.ndarray) -> np.ndarray:
        w = x[:k * l].reshape(k, l) + 1j * x[k * l:].reshape(k, l)
        return project_power(w, p_max)

    best_w = decode(mean)
    best_rate = cluster_sum_rate(csi, best_w, noise_power)
    for _ in range(cfg.iterations + 1):  # +1: score the initial population too
        pop = mean[None, :] + sigma[None, :] * rng.normal(size=(cfg.population, dim))
        rates = np.empty(cfg.population)
        for i in range(cfg.population):
            rates[i] = cluster_sum_rate(csi, decode(pop[i]), noise_power)
        elite_idx = np.argsort(rates, kind="stable")[-cfg.n_elites:]
        if rates[elite_idx[-1]] > best_rate:
            best_rate = float(rates[elite_idx[-1]])
            best_w = decode(pop[elite_idx[-1]])
        elites = pop[elite_idx]
        mean = elites.mean(axis=0)
        sigma = np.maximum(elites.std(axis=0), cfg.min_sigma)
    return best_w, float(best_rate)


class MrtBeamformer(BaseEstimator):
    """Matched-filter baseline with an equal per-user power split."""

    def __init__(self, p_max_w: float = 1.0):
        self.p_max_w = p_max_w

    def fit(self, X=None, y=None):
        return self

    def predict(self, X, p_max_w: float | None = None):
        p = self.p_max_w if p_max_w is None else p_max_w
        return [mrt(x.csi if isinstance(x, ClusterSnapshot) else x, p) for x in X]


class RandomBeamformer(BaseEstimator):
    """Seeded random Gaussian beams; a floor for any learned method."""

    def __init__(self, p_max_w: float = 1.0, seed: int = 0):
        self.p_max_w = p_max_w
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def predict(self, X, p_max_w: float | None = None):
        p = self.p_max_w if p_max_w is None else p_max_w
        rng = np.random.default_rng(self.seed)
        return [random_precoder(x.csi if isinstance(x, ClusterSnapshot) else x, p, rng)
                for x in X]


class CemBeamformer(BaseEstimator):
    """Cross-entropy search wrapper; near-upper-bound on small clusters."""

    def __init__(self, p_max_w: float = 1.0, noise_w: float = 1e-12,
                 population: int = 64, elite_fraction: float = 0.125,
                 iterations: int = 60, init_scale: float = 1.0, seed: int = 0):
        self.p_max_w = p_max_w
        self.noise_w = noise_w
        self.population = population
        self.elite_fraction = elite_fraction
        self.iterations = iterations
        self.init_scale = init_scale
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def _cfg(self, idx: int) -> OracleConfig:
        # Offset per-cluster seeds so batches are reproducible yet uncorrelated.
        return OracleConfig(population=self.population, elite_fraction=self.elite_fraction,
                            iterations=self.iterations, init_scale=self.init_scale,
                            seed=self.seed + idx)

    def predict(self, X, p_max_w: float | None = None):
        p = self.p_max_w if p_max_w is None else p_max_w
        out = []
        for i, x in enumerate(X):
            csi = x.csi if isinstance(x, ClusterSnapshot) else x
            w, _ = cem_oracle(csi, p, self.noise_w, self._cfg(i))
            out.append(w)
        return out

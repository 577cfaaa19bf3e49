"""One-dimensional multi-modal Gaussian densities.

Fitting is plain EM on a 1-D Gaussian mixture. Evaluation works in log space:
each component contributes ``alpha - 0.5 * ((x - mu) / sigma)**2`` with the
constant ``alpha = log(gamma) - log(sigma) - 0.5 * log(2 * pi)``, and the
components are combined with a max-shifted log-sum-exp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIGMA_FLOOR = 1e-9
MAX_ITER = 200
TOL = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: float
    std: float
    alpha: float


def component_alpha(gamma, sigma):
    return np.log(gamma) - np.log(sigma) - HALF_LOG_2PI


@dataclass(frozen=True, eq=False)
class MmgDensity:
    gamma: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    rep_index: int = 0
    class_index: int = 1
    flags: tuple[str, ...] = ()
    history: tuple[float, ...] = field(default=(), repr=False)

    @classmethod
    def from_params(cls, gamma, mu, sigma, rep_index: int = 0, class_index: int = 1,
                    flags: tuple[str, ...] = (), history: tuple[float, ...] = ()) -> "MmgDensity":
        gamma = np.asarray(gamma, dtype=np.float64)
        mu = np.asarray(mu, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        if not (gamma.shape == mu.shape == sigma.shape) or gamma.ndim != 1 or gamma.size == 0:
            raise ValueError("gamma, mu and sigma must be equal-length non-empty vectors")
        if np.any(gamma <= 0) or np.any(sigma <= 0):
            raise ValueError("component weights and deviations must be positive")
        if abs(gamma.sum() - 1.0) > 1e-9:
            raise ValueError(f"component weights sum to {gamma.sum()!r}, not 1")
        return cls(gamma, mu, sigma, component_alpha(gamma, sigma),
                   rep_index, class_index, tuple(flags), tuple(history))

    @property
    def n_modes(self) -> int:
        return len(self.gamma)

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(g), float(m), float(s), float(a))
                for g, m, s, a in zip(self.gamma, self.mu, self.sigma, self.alpha)]

    def log_pdf(self, x) -> np.ndarray:
        return log_pdf(self, x)

    def pdf(self, x) -> np.ndarray:
        return np.exp(log_pdf(self, x))


def _log_terms(x: np.ndarray, mu, sigma, alpha) -> np.ndarray:
    z = (x[:, None] - mu[None, :]) / sigma[None, :]
    return alpha[None, :] - 0.5 * z * z


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def log_pdf(density: MmgDensity, x) -> np.ndarray:
    """Vectorized log density, stable far into the tails."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    if not np.all(np.isfinite(flat)):
        raise ValueError("log-likelihood of a non-finite value")
    out = _logsumexp_rows(_log_terms(flat, density.mu, density.sigma, density.alpha))
    return out.reshape(x.shape)


def rep_log_likelihood(density: MmgDensity, value: float) -> float:
    return float(log_pdf(density, np.array([value], dtype=np.float64))[0])


def _initial_params(x: np.ndarray, modes: int, rng: np.random.Generator):
    std = float(x.std())
    q = (np.arange(modes) + 0.5) / modes
    mu = np.quantile(x, q)
    if modes > 1 and std > 0:
        # coinciding quantiles (discrete-valued data) would stay glued together
        _, first = np.unique(mu, return_index=True)
        dup = np.setdiff1d(np.arange(modes), first)
        if dup.size:
            mu[dup] += rng.normal(0.0, 1e-3 * std, size=dup.size)
    sigma = np.full(modes, max(std / modes, SIGMA_FLOOR))
    gamma = np.full(modes, 1.0 / modes)
    return gamma, mu, sigma


def em_fit(values, modes: int, seed: int = 0, rep_index: int = 0, class_index: int = 1,
           max_iter: int = MAX_ITER, tol: float = TOL) -> MmgDensity:
    """Fit an ``modes``-component 1-D Gaussian mixture by EM.

    Stops when the mean per-sample log-likelihood improves by less than
    ``tol`` or after ``max_iter`` iterations. ``history`` on the result holds
    the total data log-likelihood before each M-step and after the last one.
    Components that lose all responsibility are dropped (flag ``pruned``);
    deviations below the floor are clamped (flag ``sigma_floor``).
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if modes < 1:
        raise ValueError(f"need at least one mode, got {modes}")
    if x.size < 2 * modes:
        raise InsufficientDataError(f"{x.size} values cannot support {modes} modes (need {2 * modes})")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in EM input")
    rng = np.random.default_rng(seed)
    n = x.size
    gamma, mu, sigma = _initial_params(x, modes, rng)
    clamped = False
    history: list[float] = []
    prev = -np.inf
    for _ in range(max_iter + 1):
        with np.errstate(divide="ignore"):
            alpha = component_alpha(gamma, sigma)
        terms = _log_terms(x, mu, sigma, alpha)
        norm = _logsumexp_rows(terms)
        ll = float(norm.sum())
        history.append(ll)
        if (ll - prev) / n < tol or len(history) > max_iter:
            break
        prev = ll
        resp = np.exp(terms - norm[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 0
        gamma = nk / n
        mu = np.where(alive, (resp * x[:, None]).sum(axis=0) / np.where(alive, nk, 1.0), mu)
        d = x[:, None] - mu[None, :]
        var = np.where(alive, (resp * d * d).sum(axis=0) / np.where(alive, nk, 1.0), sigma ** 2)
        low = var < SIGMA_FLOOR ** 2
        clamped = clamped or bool(np.any(low & alive))
        sigma = np.sqrt(np.maximum(var, SIGMA_FLOOR ** 2))
    flags = []
    if clamped or np.any(sigma <= SIGMA_FLOOR):
        flags.append("sigma_floor")
    keep = gamma > 0
    if not keep.all():
        flags.append("pruned")
        gamma, mu, sigma = gamma[keep], mu[keep], sigma[keep]
    gamma = gamma / gamma.sum()
    return MmgDensity.from_params(gamma, mu, sigma, rep_index, class_index,
                                  tuple(flags), tuple(history))


@dataclass(frozen=True, eq=False)
class ClassLikelihood:
    class_index: int
    per_rep: np.ndarray
    total: float


@dataclass(frozen=True, eq=False)
class Explanation:
    projected: np.ndarray          # C x k, row c projected with class c's factor model
    per_class: tuple[ClassLikelihood, ...]
    label: int
    margin: float
    flags: tuple[str, ...] = ()

    @property
    def totals(self) -> np.ndarray:
        return np.array([c.total for c in self.per_class])

    @property
    def per_rep(self) -> np.ndarray:
        """C x k per-representative log-likelihoods."""
        return np.vstack([c.per_rep for c in self.per_class])


def argmax_label(totals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1-based, lowest class on ties) and margins for an n x C totals array."""
    totals = np.atleast_2d(totals)
    best = np.argmax(totals, axis=1)
    if totals.shape[1] < 2:
        return best + 1, np.zeros(len(totals))
    top2 = np.sort(totals, axis=1)[:, -2:]
    return best + 1, top2[:, 1] - top2[:, 0]


def per_rep_log_likelihoods(densities: Sequence[Sequence[MmgDensity]], projected: np.ndarray) -> np.ndarray:
    """``densities[i][c]`` applied to ``projected[..., c, i]``; same shape out."""
    projected = np.asarray(projected, dtype=np.float64)
    out = np.empty_like(projected)
    k = len(densities)
    n_classes = len(densities[0]) if k else 0
    for i in range(k):
        for c in range(n_classes):
            out[..., c, i] = log_pdf(densities[i][c], projected[..., c, i])
    return out


def explain(densities: Sequence[Sequence[MmgDensity]], weights, projected,
            flags: tuple[str, ...] = ()) -> Explanation:
    """Explain one sample: weighted log-likelihood per class, then argmax.

    ``densities[i][c]`` is the density of representative i for class c
    (0-based c); ``projected`` is C x k.
    """
    projected = np.asarray(projected, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    per_rep = per_rep_log_likelihoods(densities, projected)
    totals = per_rep @ weights
    label, margin = argmax_label(totals[None, :])
    per_class = tuple(ClassLikelihood(c + 1, per_rep[c].copy(), float(totals[c]))
                      for c in range(per_rep.shape[0]))
    return Explanation(projected, per_class, int(label[0]), float(margin[0]), tuple(flags))

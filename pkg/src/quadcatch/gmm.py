"""Gaussian mixture model of the reachable catch space.

EM with k-means++ seeding, eigenvalue-floored covariances and BIC model
selection.  Also provides the synthetic demonstration generator and the
plain-text dataset / mixture file formats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDataError, InvalidInputError

COV_FLOOR = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(3)
        cov = np.asarray(self.covariance, dtype=float).reshape(3, 3)
        if not 0.0 < self.weight <= 1.0 + 1e-12:
            raise InvalidInputError(f"component weight must be in (0, 1], got {self.weight}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise InvalidInputError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvalidInputError("covariance must be positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "precision", np.linalg.inv(cov))
        object.__setattr__(self, "_log_norm", -0.5 * (3 * _LOG_2PI) - np.log(np.diag(chol)).sum())

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Gaussian log-density at one point (shape (3,)) or many (shape (n, 3))."""
        diff = np.atleast_2d(x) - self.mean
        sol = np.linalg.solve(self._chol, diff.T)
        out = self._log_norm - 0.5 * np.sum(sol * sol, axis=0)
        return out if np.ndim(x) > 1 else out[0]


@dataclass(frozen=True)
class GaussianMixture:
    components: tuple
    log_likelihood_history: tuple = ()
    converged: bool = True

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidInputError("a mixture needs at least one component")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"component weights sum to {total}, not 1")
        object.__setattr__(self, "components", comps)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.array([c.covariance for c in self.components])

    def shifted(self, v) -> "GaussianMixture":
        v = np.asarray(v, dtype=float)
        return GaussianMixture(
            tuple(GaussianComponent(c.weight, c.mean + v, c.covariance) for c in self.components)
        )

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "means": [[float(v) for v in c.mean] for c in self.components],
            "covariances": [[[float(v) for v in row] for row in c.covariance] for c in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        try:
            comps = tuple(
                GaussianComponent(float(w), np.asarray(m, float), np.asarray(c, float))
                for w, m, c in zip(d["weights"], d["means"], d["covariances"], strict=True)
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidInputError(f"malformed mixture description: {exc}") from None
        return cls(comps)

    @classmethod
    def single(cls, mean, covariance) -> "GaussianMixture":
        return cls((GaussianComponent(1.0, np.asarray(mean, float), np.asarray(covariance, float)),))


@dataclass
class DemoDataset:
    points: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("demonstration points must be finite")

    def __len__(self) -> int:
        return len(self.points)


def _component_log_pdfs(mix: GaussianMixture, X: np.ndarray) -> np.ndarray:
    """Return (n, K) array of log(pi_k) + log N(x_i | mu_k, Sigma_k)."""
    return np.stack([math.log(c.weight) + c.log_pdf(X) for c in mix.components], axis=1)


def log_density(mix: GaussianMixture, x) -> Union[float, np.ndarray]:
    """Log of the mixture density at one point or at each row of an (n, 3) array."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if mix.K == 1:
        out = mix.components[0].log_pdf(X)
    else:
        out = logsumexp(_component_log_pdfs(mix, X), axis=1)
    return float(out[0]) if np.ndim(x) == 1 else out


def log_likelihood(mix: GaussianMixture, data: DemoDataset) -> float:
    return float(np.sum(log_density(mix, data.points)))


def _floor_covariance(cov: np.ndarray, floor: float = COV_FLOOR) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _kmeanspp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    for _ in range(1, K):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        idx = rng.choice(len(X), p=d2 / total) if total > 0 else rng.integers(len(X))
        centers.append(X[idx])
    return np.array(centers)


def _m_step(X: np.ndarray, resp: np.ndarray) -> GaussianMixture:
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / nk.sum()
    comps = []
    for k in range(resp.shape[1]):
        mu = resp[:, k] @ X / nk[k]
        diff = X - mu
        cov = (resp[:, k, None] * diff).T @ diff / nk[k]
        comps.append(GaussianComponent(float(weights[k]), mu, _floor_covariance(cov)))
    # renormalise exactly so the weight invariant holds to rounding
    total = sum(c.weight for c in comps)
    return GaussianMixture(tuple(GaussianComponent(c.weight / total, c.mean, c.covariance) for c in comps))


def fit_em(
    data: DemoDataset,
    K: int,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: Optional[int] = 0,
) -> GaussianMixture:
    """Fit a K-component full-covariance mixture by expectation maximisation.

    The returned mixture records the training log-likelihood after every
    iteration in ``log_likelihood_history``; iteration stops once the change
    drops below ``tol`` or after ``max_iter`` iterations.

    Raises:
        DegenerateDataError: fewer than K+1 distinct points.
    """
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    X = data.points
    n_distinct = len(np.unique(X, axis=0))
    if n_distinct < K + 1:
        raise DegenerateDataError(f"{n_distinct} distinct points cannot support {K} components")
    rng = np.random.default_rng(seed)

    centers = _kmeanspp(X, K, rng)
    # hard assignment to the seeds gives the first M-step
    d2 = np.stack([np.sum((X - c) ** 2, axis=1) for c in centers], axis=1)
    resp = np.zeros((len(X), K))
    resp[np.arange(len(X)), np.argmin(d2, axis=1)] = 1.0
    if np.any(resp.sum(axis=0) == 0):
        resp = np.full((len(X), K), 1.0 / K)
    mix = _m_step(X, resp)

    history: List[float] = []
    converged = False
    for _ in range(max_iter):
        logp = _component_log_pdfs(mix, X)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        if history and abs(ll - history[-1]) < tol:
            history.append(ll)
            converged = True
            break
        history.append(ll)
        mix = _m_step(X, np.exp(logp - norm[:, None]))
    else:
        history.append(log_likelihood(mix, data))
    return GaussianMixture(mix.components, tuple(history), converged)


def n_parameters(K: int, dim: int = 3) -> int:
    """Free parameters of a full-covariance mixture: weights, means, covariances."""
    return (K - 1) + K * dim + K * dim * (dim + 1) // 2


def bic(mix: GaussianMixture, data: DemoDataset) -> float:
    """Bayesian information criterion; lower is better."""
    return n_parameters(mix.K) * math.log(len(data)) - 2.0 * log_likelihood(mix, data)


def select_k(
    data: DemoDataset,
    k_range: Iterable[int] = range(1, 5),
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: Optional[int] = 0,
) -> GaussianMixture:
    """Fit each K and keep the lowest BIC; ties go to the smaller K."""
    ks = sorted(set(k_range))
    if not ks:
        raise InvalidInputError("K range is empty")
    best, best_score = None, math.inf
    for k in ks:
        mix = fit_em(data, k, tol=tol, max_iter=max_iter, seed=seed)
        score = bic(mix, data)
        if score < best_score:
            best, best_score = mix, score
    return best


def synthetic_demos(
    mean, std, n: int = 100, seed: Optional[int] = 0, accept: Optional[Callable] = None
) -> DemoDataset:
    """Draw ``n`` catch positions from an axis-aligned Gaussian.

    Args:
        accept: optional vectorised predicate on (m, 3) arrays; rejected
            draws are replaced (a demonstrator can only catch where the feet reach).
    """
    rng = np.random.default_rng(seed)
    mean, std = np.asarray(mean, float), np.asarray(std, float)
    kept = np.empty((0, 3))
    for _ in range(1000):
        draw = mean + rng.standard_normal((n, 3)) * std
        if accept is not None:
            draw = draw[np.asarray(accept(draw), dtype=bool)]
        kept = np.concatenate([kept, draw])
        if len(kept) >= n:
            return DemoDataset(kept[:n], source=f"synthetic(n={n}, seed={seed})")
    raise DegenerateDataError("acceptance region rejects almost every demonstration draw")


def write_dataset(data: DemoDataset, path: Union[str, Path]) -> None:
    lines = [f"# source: {data.source}"] + [f"{x!r} {y!r} {z!r}" for x, y, z in data.points.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path: Union[str, Path]) -> DemoDataset:
    """Read ``x y z`` records, one per line; ``#`` starts a comment."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        fields = body.split()
        if len(fields) != 3:
            raise InvalidInputError(f"{path}:{lineno}: expected 3 fields (x y z), got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from None
    return DemoDataset(np.array(rows).reshape(-1, 3), source=str(path))


def write_mixture(mix: GaussianMixture, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(mix.to_dict(), indent=2) + "\n")


def read_mixture(path: Union[str, Path]) -> GaussianMixture:
    return GaussianMixture.from_dict(json.loads(Path(path).read_text()))

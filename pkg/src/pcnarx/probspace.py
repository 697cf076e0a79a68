"""Uncertain input vectors: marginals, Gaussian-copula dependence and LHS designs.

Physical samples ``xi`` are mapped to independent standard normal variables
``u`` through ``u = L^-1 Phi^-1(F(xi))`` where ``L`` is the Cholesky factor of
the copula correlation matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, stats

KINDS = ("gaussian", "uniform", "lognormal", "beta", "gamma", "two_sided_exponential")


class DomainError(ValueError):
    """A value lies outside the admissible domain of a distribution."""


def _truncated_laplace_moments(loc: float, scale: float, a: float, b: float):
    base = stats.laplace(loc=loc, scale=scale)
    mass = base.cdf(b) - base.cdf(a)
    pdf = lambda x: base.pdf(x) / mass  # noqa: E731
    pts = [loc] if a < loc < b else None
    m1 = integrate.quad(lambda x: x * pdf(x), a, b, points=pts, limit=200)[0]
    m2 = integrate.quad(lambda x: (x - m1) ** 2 * pdf(x), a, b, points=pts, limit=200)[0]
    return m1, math.sqrt(m2)


def _fit_truncated_laplace(mean: float, std: float, a: float, b: float):
    def residual(theta):
        loc, log_scale = theta
        m, s = _truncated_laplace_moments(loc, math.exp(log_scale), a, b)
        return [(m - mean) / std, (s - std) / std]

    sol = optimize.root(residual, x0=[mean, math.log(std / math.sqrt(2.0))], method="hybr")
    if not sol.success or max(abs(r) for r in residual(sol.x)) > 1e-8:
        raise ValueError(
            f"cannot match a truncated Laplace on [{a}, {b}] to mean={mean}, std={std}"
        )
    return float(sol.x[0]), float(math.exp(sol.x[1]))


class _TruncatedLaplace:
    """Laplace distribution restricted to ``[a, b]`` (frozen, scipy-like)."""

    def __init__(self, loc: float, scale: float, a: float, b: float):
        self._base = stats.laplace(loc=loc, scale=scale)
        self.a, self.b = a, b
        self._fa = float(self._base.cdf(a))
        self._mass = float(self._base.cdf(b)) - self._fa

    def cdf(self, x):
        x = np.clip(x, self.a, self.b)
        return (self._base.cdf(x) - self._fa) / self._mass

    def ppf(self, u):
        return np.clip(self._base.ppf(self._fa + np.asarray(u) * self._mass), self.a, self.b)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, self._base.pdf(x) / self._mass, 0.0)


@dataclass(frozen=True)
class Marginal:
    """One-dimensional input distribution.

    ``params`` holds the user-facing description (``mean``/``std`` for moment
    parameterised kinds, nothing for ``uniform``); ``support`` is the closed
    interval of admissible values, with infinite bounds where unbounded.
    Use the class-method constructors rather than the raw initializer.
    """

    kind: str
    params: dict = field(default_factory=dict)
    support: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown marginal kind {self.kind!r}")
        lo, hi = (float(s) for s in self.support)
        if not lo < hi:
            raise ValueError(f"empty support [{lo}, {hi}]")
        object.__setattr__(self, "support", (lo, hi))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "_dist", self._build())

    # -- constructors ---------------------------------------------------
    @classmethod
    def gaussian(cls, mean: float, std: float) -> "Marginal":
        return cls("gaussian", {"mean": mean, "std": std})

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "Marginal":
        return cls("uniform", {}, (lower, upper))

    @classmethod
    def lognormal(cls, mean: float, std: float) -> "Marginal":
        return cls("lognormal", {"mean": mean, "std": std}, (0.0, math.inf))

    @classmethod
    def gamma(cls, mean: float, std: float) -> "Marginal":
        return cls("gamma", {"mean": mean, "std": std}, (0.0, math.inf))

    @classmethod
    def beta(cls, mean: float, std: float, lower: float, upper: float) -> "Marginal":
        return cls("beta", {"mean": mean, "std": std}, (lower, upper))

    @classmethod
    def two_sided_exponential(
        cls, mean: float, std: float, lower: float, upper: float
    ) -> "Marginal":
        return cls("two_sided_exponential", {"mean": mean, "std": std}, (lower, upper))

    # -- internals ------------------------------------------------------
    def _build(self):
        lo, hi = self.support
        p = self.params
        if self.kind == "uniform":
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("uniform marginal needs a bounded support")
            return stats.uniform(loc=lo, scale=hi - lo)
        mean, std = p["mean"], p["std"]
        if not std > 0:
            raise ValueError(f"{self.kind} marginal needs std > 0, got {std}")
        if self.kind == "gaussian":
            return stats.norm(loc=mean, scale=std)
        if self.kind == "lognormal":
            if mean <= 0:
                raise ValueError("lognormal mean must be positive")
            s2 = math.log1p((std / mean) ** 2)
            return stats.lognorm(s=math.sqrt(s2), scale=math.exp(math.log(mean) - s2 / 2))
        if self.kind == "gamma":
            if mean <= 0:
                raise ValueError("gamma mean must be positive")
            return stats.gamma(a=(mean / std) ** 2, scale=std**2 / mean)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < mean < hi:
            raise ValueError(f"{self.kind} marginal needs a bounded support containing its mean")
        if self.kind == "beta":
            width = hi - lo
            m, v = (mean - lo) / width, (std / width) ** 2
            common = m * (1 - m) / v - 1
            if common <= 0:
                raise ValueError("beta std too large for its support")
            return stats.beta(m * common, (1 - m) * common, loc=lo, scale=width)
        loc, scale = _fit_truncated_laplace(mean, std, lo, hi)
        return _TruncatedLaplace(loc, scale, lo, hi)

    # -- public API -----------------------------------------------------
    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * sum(self.support)
        return self.params["mean"]

    def cdf(self, x):
        return self._dist.cdf(x)

    def pdf(self, x):
        return self._dist.pdf(x)

    def quantile(self, u):
        """Inverse CDF; ``u`` must lie strictly inside (0, 1)."""
        u_arr = np.asarray(u, dtype=float)
        if np.any(~(u_arr > 0) | ~(u_arr < 1)):
            raise DomainError("quantile probability must lie in the open interval (0, 1)")
        out = self._dist.ppf(u_arr)
        return float(out) if np.ndim(out) == 0 else out

    def check_support(self, x) -> None:
        lo, hi = self.support
        x = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"{self.kind} value outside support [{lo}, {hi}]")

    def to_dict(self) -> dict:
        lo, hi = self.support
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "support": [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Marginal":
        lo, hi = d.get("support") or (None, None)
        lo = -math.inf if lo is None else lo
        hi = math.inf if hi is None else hi
        return cls(d["kind"], d.get("params", {}), (lo, hi))


def marginal_quantile(m: Marginal, u: float) -> float:
    return m.quantile(u)


# Probabilities are clipped this far from 0/1 before the normal inverse so that
# points on a bounded support edge map to finite standard coordinates.
_PROB_EPS = 1e-15


@dataclass(frozen=True)
class InputModel:
    """Marginals plus a Gaussian-copula correlation matrix (identity by default)."""

    marginals: tuple
    correlation: np.ndarray = None
    names: tuple = None

    def __post_init__(self):
        marginals = tuple(self.marginals)
        M = len(marginals)
        if M == 0:
            raise ValueError("input model needs at least one marginal")
        R = np.eye(M) if self.correlation is None else np.array(self.correlation, dtype=float)
        if R.shape != (M, M):
            raise ValueError(f"correlation must be {M}x{M}, got {R.shape}")
        if not np.allclose(R, R.T, atol=1e-12) or not np.allclose(np.diag(R), 1.0):
            raise ValueError("correlation must be symmetric with unit diagonal")
        try:
            L = np.linalg.cholesky(R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("correlation matrix is not positive definite") from exc
        R.setflags(write=False)
        L.setflags(write=False)
        names = tuple(self.names) if self.names is not None else tuple(f"xi{i + 1}" for i in range(M))
        if len(names) != M:
            raise ValueError("one name per marginal required")
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "correlation", R)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "cholesky", L)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def independent(self) -> bool:
        return bool(np.array_equal(self.correlation, np.eye(self.dim)))

    def uncorrelated_dims(self) -> np.ndarray:
        """Mask of coordinates whose copula row/column is that of the identity."""
        off = self.correlation - np.eye(self.dim)
        return ~np.any(off != 0.0, axis=1)

    # -- transforms -----------------------------------------------------
    def to_standard(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        X = np.atleast_2d(xi)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected samples of dimension {self.dim}, got {X.shape[1]}")
        Z = np.empty_like(X)
        for i, m in enumerate(self.marginals):
            m.check_support(X[:, i])
            p = np.clip(m.cdf(X[:, i]), _PROB_EPS, 1.0 - _PROB_EPS)
            Z[:, i] = stats.norm.ppf(p)
        U = Z if self.independent else np.linalg.solve(self.cholesky, Z.T).T
        return U[0] if single else U

    def from_standard(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        U = np.atleast_2d(u)
        if U.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {U.shape[1]}")
        Z = U if self.independent else U @ self.cholesky.T
        X = np.empty_like(Z)
        for i, m in enumerate(self.marginals):
            p = stats.norm.cdf(Z[:, i])
            X[:, i] = m._dist.ppf(np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS))
        return X[0] if single else X

    # -- sampling -------------------------------------------------------
    def sample_lhs(self, n: int, seed) -> np.ndarray:
        return sample_lhs(self, n, seed)

    def sample_random(self, n: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.from_standard(rng.standard_normal((n, self.dim)))

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        variables = []
        for name, m in zip(self.names, self.marginals):
            d = m.to_dict()
            d["name"] = name
            variables.append(d)
        return {"variables": variables, "correlation": self.correlation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "InputModel":
        variables = d["variables"]
        return cls(
            tuple(Marginal.from_dict(v) for v in variables),
            d.get("correlation"),
            tuple(v.get("name", f"xi{i + 1}") for i, v in enumerate(variables)),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "InputModel":
        return cls.from_dict(load_json(source))


def load_json(source):
    """Parse JSON text, or the file at ``source`` when it is a path."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith(("{", "["))):
        source = Path(source).read_text()
    return json.loads(source)


def to_standard(im: InputModel, xi) -> np.ndarray:
    return im.to_standard(xi)


def from_standard(im: InputModel, u) -> np.ndarray:
    return im.from_standard(u)


def lhs_unit(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube in ``[0, 1)^dim``: one point per stratum ``[k/n, (k+1)/n)``."""
    if n < 1:
        raise ValueError("LHS size must be at least 1")
    U = np.empty((n, dim))
    for j in range(dim):
        U[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return U


def sample_lhs(im: InputModel, n: int, seed) -> np.ndarray:
    """LHS design of ``n`` physical samples (stratified in standard space)."""
    rng = np.random.default_rng(seed)
    P = np.clip(lhs_unit(n, im.dim, rng), _PROB_EPS, 1.0 - _PROB_EPS)
    return im.from_standard(stats.norm.ppf(P))


def independent(marginals: Sequence[Marginal], names=None) -> InputModel:
    return InputModel(tuple(marginals), None, names)

"""Orthonormal Legendre/Hermite polynomials and truncated multi-index sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LEGENDRE = "legendre_on_uniform"
HERMITE = "hermite_on_gaussian"
FAMILIES = (LEGENDRE, HERMITE)


def univariate_table(family: str, max_degree: int, x) -> np.ndarray:
    """Evaluate ``psi_0 .. psi_max_degree`` at the points ``x``.

    Returns an array of shape ``x.shape + (max_degree + 1,)``. Polynomials are
    orthonormal w.r.t. the uniform law on [-1, 1] (Legendre) or the standard
    normal law (Hermite) and are built with the normalized three-term
    recurrence.
    """
    if max_degree < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree == 0:
        return out
    if family == LEGENDRE:
        out[..., 1] = math.sqrt(3.0) * x
        for n in range(1, max_degree):
            a = math.sqrt((2 * n + 1) * (2 * n + 3)) / (n + 1)
            b = n / (n + 1) * math.sqrt((2 * n + 3) / (2 * n - 1))
            out[..., n + 1] = a * x * out[..., n] - b * out[..., n - 1]
    elif family == HERMITE:
        out[..., 1] = x
        for n in range(1, max_degree):
            out[..., n + 1] = (x * out[..., n] - math.sqrt(n) * out[..., n - 1]) / math.sqrt(n + 1)
    else:
        raise ValueError(f"unknown polynomial family {family!r}")
    return out


def eval_univariate(family: str, degree: int, x):
    return univariate_table(family, degree, x)[..., degree]


@dataclass(frozen=True)
class MultiIndexSet:
    """Truncated set ``{alpha : ||alpha||_q <= p, ||alpha||_0 <= r}``.

    ``indices`` is an integer array with one multi-index per row, in graded
    lexicographic order (the zero index first).
    """

    M: int
    p: int
    q: float
    r: int | None
    indices: np.ndarray

    def __len__(self) -> int:
        return self.indices.shape[0]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.indices, fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path, p=None, q=1.0, r=None) -> "MultiIndexSet":
        idx = np.atleast_2d(np.loadtxt(Path(path), delimiter=",", dtype=int, ndmin=2))
        p = int(idx.sum(axis=1).max()) if p is None else p
        return cls(idx.shape[1], p, q, r, idx)


def q_norm(alpha, q: float) -> float:
    alpha = np.asarray(alpha, dtype=float)
    return float(np.sum(alpha**q) ** (1.0 / q))


def graded_lex_key(alpha) -> tuple:
    return (int(sum(alpha)),) + tuple(-int(a) for a in alpha)


def generate_multi_indices(M: int, p: int, q: float = 1.0, r: int | None = None) -> MultiIndexSet:
    if M < 1 or p < 0:
        raise ValueError("need M >= 1 and p >= 0")
    if not 0 < q <= 1:
        raise ValueError(f"hyperbolic exponent q must lie in (0, 1], got {q}")
    if r is not None and r < 0:
        raise ValueError("rank bound r must be non-negative")
    rank = M if r is None else min(r, M)
    budget = float(p) ** q * (1 + 1e-12)
    found = []
    alpha = [0] * M

    def visit(dim: int, used: float, nonzero: int) -> None:
        if dim == M:
            found.append(tuple(alpha))
            return
        visit(dim + 1, used, nonzero)
        if nonzero >= rank:
            return
        d = 1
        while d <= p and used + d**q <= budget:
            alpha[dim] = d
            visit(dim + 1, used + d**q, nonzero + 1)
            d += 1
        alpha[dim] = 0

    visit(0, 0.0, 0)
    found.sort(key=graded_lex_key)
    return MultiIndexSet(M, p, q, r, np.array(found, dtype=int).reshape(len(found), M))


def basis_families_for(input_model) -> tuple:
    """Legendre for independent uniform inputs, Hermite for everything else."""
    free = input_model.uncorrelated_dims()
    return tuple(
        LEGENDRE if m.kind == "uniform" and free[i] else HERMITE
        for i, m in enumerate(input_model.marginals)
    )


def reduced_coordinates(input_model, families, xi) -> np.ndarray:
    """Map physical samples to the coordinates the polynomial families live on."""
    from scipy.stats import norm

    U = np.atleast_2d(input_model.to_standard(xi))
    for i, fam in enumerate(families):
        if fam == LEGENDRE:
            U[:, i] = 2.0 * norm.cdf(U[:, i]) - 1.0
    return U


def design_matrix(families, indices: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Information matrix ``A[i, j] = psi_{alpha_j}(U_i)``."""
    U = np.atleast_2d(U)
    indices = np.atleast_2d(indices)
    if U.shape[1] != indices.shape[1] or len(families) != U.shape[1]:
        raise ValueError("dimension mismatch between families, indices and points")
    A = np.ones((U.shape[0], indices.shape[0]))
    for d, fam in enumerate(families):
        deg = indices[:, d]
        if not deg.any():
            continue
        table = univariate_table(fam, int(deg.max()), U[:, d])
        A *= table[:, deg]
    return A


def eval_multivariate(families, alpha, u) -> float:
    alpha = np.asarray(alpha, dtype=int)
    u = np.asarray(u, dtype=float)
    if alpha.shape != u.shape or len(families) != alpha.size:
        raise ValueError("multi-index and point dimensions differ")
    return float(design_matrix(families, alpha[None, :], u[None, :])[0, 0])

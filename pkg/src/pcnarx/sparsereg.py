"""Least squares, leave-one-out error and least angle regression.

``lars_path`` follows the equiangular LARS path of Efron et al. to decide the
order in which regressors become active, but the coefficients and the LOO
error reported for each step come from an ordinary least-squares refit on the
active set (hybrid LARS-OLS). The refits and their leverages are obtained
incrementally from a Gram-Schmidt factorization that grows by one column per
step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

RCOND_MIN = 1e-12
LEVERAGE_MAX = 1.0 - 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """The information matrix is (numerically) rank deficient."""


class DegenerateLeverageError(ValueError):
    """Some observation has leverage ~1, so its LOO residual is undefined."""


def _as_problem(A, y):
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or y.ndim != 1 or A.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes A{A.shape} and y{y.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError("regression problem needs N >= 1 and P >= 1")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
        raise ValueError("regression problem contains non-finite entries")
    return A, y


def _qr_equilibrated(A):
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise SingularMatrixError("information matrix has an all-zero column")
    Q, R = np.linalg.qr(A / scale)
    sv = np.linalg.svd(R, compute_uv=False)
    rcond = sv[-1] / sv[0]
    if not rcond >= RCOND_MIN:
        raise SingularMatrixError(
            f"information matrix is rank deficient (reciprocal condition estimate {rcond:.3e})"
        )
    return Q, R, scale


def ols_fit(A, y) -> np.ndarray:
    """Least-squares coefficients ``argmin ||y - A c||`` via a QR factorization."""
    A, y = _as_problem(A, y)
    if A.shape[0] < A.shape[1]:
        raise SingularMatrixError(f"underdetermined problem: N={A.shape[0]} < P={A.shape[1]}")
    Q, R, scale = _qr_equilibrated(A)
    return solve_triangular(R, Q.T @ y) / scale


def ols_fit_with_variance(A, y):
    """OLS coefficients and their sampling variances ``s^2 diag((A^T A)^-1)``.

    ``s^2`` is the residual variance with ``N - P`` degrees of freedom.
    """
    A, y = _as_problem(A, y)
    N, P = A.shape
    if N <= P:
        raise SingularMatrixError(f"need N > P for variances: N={N}, P={P}")
    Q, R, scale = _qr_equilibrated(A)
    c = solve_triangular(R, Q.T @ y) / scale
    res = y - A @ c
    s2 = float(res @ res) / (N - P)
    Rinv = solve_triangular(R, np.eye(P))
    return c, s2 * np.sum(Rinv**2, axis=1) / scale**2


def leverages(A) -> np.ndarray:
    """Diagonal of the hat matrix ``A (A^T A)^-1 A^T``."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    Q, _, _ = _qr_equilibrated(A)
    return np.einsum("ij,ij->i", Q, Q)


def loo_from_residuals(residuals, h) -> float:
    if np.max(h, initial=0.0) >= LEVERAGE_MAX:
        raise DegenerateLeverageError(
            f"leverage {np.max(h):.12f} too close to 1; LOO error undefined"
        )
    return float(np.mean((residuals / (1.0 - h)) ** 2))


def loo_error(A, y, coefficients=None) -> float:
    """Leave-one-out error of a linear least-squares fit from a single fit.

    ``mean(((y - A c) / (1 - h))**2)`` with ``h`` the hat-matrix diagonal.
    When ``coefficients`` is omitted the OLS solution is used.
    """
    A, y = _as_problem(A, y)
    if A.shape[0] <= A.shape[1]:
        raise DegenerateLeverageError("LOO needs more observations than regressors")
    c = ols_fit(A, y) if coefficients is None else np.asarray(coefficients, dtype=float)
    return loo_from_residuals(y - A @ c, leverages(A))


@dataclass(frozen=True)
class LarsStep:
    active: tuple
    coefficients: np.ndarray
    loo: float
    # small-sample factor T(P, N) = N / (N - P) * (1 + tr(C^-1) / N), C = A^T A / N
    correction: float = 1.0

    @property
    def corrected_loo(self) -> float:
        return self.loo * self.correction


@dataclass
class LarsPath:
    """Steps of a hybrid LARS-OLS path.

    ``steps[k].active`` lists the active column indices in order of entry
    (the intercept first, when present); ``coefficients`` align with it.
    """

    steps: list = field(default_factory=list)
    intercept: int | None = None
    response_variance: float = 0.0

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def entry_order(self) -> list:
        return list(self.steps[-1].active) if self.steps else []

    def best_index(self, tie_tol: float = 1e-12, corrected: bool = False) -> int:
        """Step minimizing LOO; steps within ``tie_tol * Var(y)`` of the
        minimum count as ties and the sparsest one wins. With ``corrected``
        the LOO errors are multiplied by their small-sample factors."""
        if not self.steps:
            raise ValueError("empty LARS path")
        loos = np.array([s.corrected_loo if corrected else s.loo for s in self.steps])
        if not np.any(np.isfinite(loos)):
            raise ValueError("no LARS step has a finite LOO error")
        bound = np.nanmin(loos) + tie_tol * self.response_variance
        return int(np.flatnonzero(loos <= bound)[0])

    def best(self, tie_tol: float = 1e-12, corrected: bool = False) -> LarsStep:
        return self.steps[self.best_index(tie_tol, corrected)]


def lars_path(
    A,
    y,
    max_steps: int | None = None,
    intercept: int | None = None,
    collinear_tol: float = 1e-8,
    corr_tol: float = 1e-12,
    loo_correction: bool = False,
) -> LarsPath:
    """Hybrid LARS-OLS selection path.

    Parameters
    ----------
    A : (N, P) array
        Candidate regressors.
    y : (N,) array
        Response.
    max_steps : int, optional
        Maximum number of LARS entries (the intercept does not count).
    intercept : int, optional
        Column holding the constant regressor. It is active from the first
        step on and is left out of the centering/normalization applied to the
        other columns.
    collinear_tol : float
        A column whose unit-normalized residual against the active set is
        shorter than this is dropped as linearly dependent.
    corr_tol : float
        The path stops once every correlation with the residual falls below
        ``corr_tol`` times the initial maximum correlation.
    loo_correction : bool
        Also compute the small-sample factor ``T(P, N)`` of every step
        (``LarsStep.correction``); otherwise it is left at 1.
    """
    A, y = _as_problem(A, y)
    if max_steps is not None and max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    N, P = A.shape
    path = LarsPath(intercept=intercept, response_variance=float(np.var(y)))
    if not np.any(y):
        return path

    cols = np.array([j for j in range(P) if j != intercept], dtype=int)
    X = A[:, cols]
    if intercept is not None:
        if not np.allclose(A[:, intercept], A[0, intercept]) or A[0, intercept] == 0:
            raise ValueError("intercept column must be a non-zero constant")
        ybar = float(np.mean(y))
        yc = y - ybar
        means = X.mean(axis=0)
        X = X - means
    else:
        ybar = 0.0
        yc = y
        means = np.zeros(len(cols))
    norms = np.linalg.norm(X, axis=0)
    eligible = norms > 1e-12 * max(float(norms.max(initial=0.0)), 1e-300)
    X = X / np.where(eligible, norms, 1.0)

    limit_active = min(N - 1, P)
    max_entries = limit_active - (intercept is not None)
    if max_steps is not None:
        max_entries = min(max_entries, max_steps)

    res = yc.copy()
    h = np.full(N, 1.0 / N if intercept is not None else 0.0)
    icpt = A[0, intercept] if intercept is not None else 1.0

    def correction(active_pos):
        # tr((A^T A)^-1) for the raw active columns from the centered,
        # normalized factor X_active = Q R
        k = len(active_pos)
        P = k + (intercept is not None)
        if P >= N:
            return np.inf
        if k:
            Rinv_t = solve_triangular(R[:k, :k], np.eye(k), trans="T")  # R^-T
            Wt = Rinv_t / norms[active_pos][None, :]  # R^-T D^-1
            tr = float(np.sum(Wt**2))
        else:
            tr = 0.0
        if intercept is not None:
            tr += 1.0 / (N * icpt**2)
            if k:
                tr += float(np.sum((Wt @ means[active_pos]) ** 2)) / icpt**2
        return N / (N - P) * (1.0 + tr)

    def record(active_pos, b):
        raw = b / norms[active_pos]
        try:
            loo = loo_from_residuals(res, h)
        except DegenerateLeverageError:
            loo = np.inf
        corr = correction(active_pos) if loo_correction else 1.0
        if intercept is None:
            path.steps.append(LarsStep(tuple(int(cols[i]) for i in active_pos), raw, loo, corr))
        else:
            c0 = (ybar - float(raw @ means[active_pos])) / icpt
            path.steps.append(
                LarsStep(
                    (intercept,) + tuple(int(cols[i]) for i in active_pos),
                    np.concatenate(([c0], raw)),
                    loo,
                    corr,
                )
            )

    if intercept is not None and N >= 2:
        record(np.array([], dtype=int), np.array([]))
    if max_entries < 1 or not np.any(eligible):
        return path

    c = X.T @ yc
    c[~eligible] = 0.0
    C0 = float(np.max(np.abs(c)))
    if C0 <= 1e-300 or C0 <= 1e-13 * np.linalg.norm(yc):
        return path

    kmax = max_entries
    Q = np.empty((N, kmax))
    R = np.zeros((kmax, kmax))
    qty = np.empty(kmax)
    active: list[int] = []
    is_active = np.zeros(len(cols), dtype=bool)
    j = int(np.argmax(np.abs(c)))

    while True:
        # add column j to the Gram-Schmidt factorization
        k = len(active)
        v = X[:, j].copy()
        coef = np.zeros(k)
        for _ in range(2):
            if k:
                proj = Q[:, :k].T @ v
                v -= Q[:, :k] @ proj
                coef += proj
        rkk = float(np.linalg.norm(v))
        if rkk < collinear_tol:
            eligible[j] = False
        else:
            Q[:, k] = v / rkk
            R[:k, k] = coef
            R[k, k] = rkk
            qty[k] = Q[:, k] @ yc
            res -= qty[k] * Q[:, k]
            h += Q[:, k] ** 2
            active.append(j)
            is_active[j] = True
            k += 1
            b = solve_triangular(R[:k, :k], qty[:k])
            record(np.array(active), b)
            if k >= kmax:
                break

        candidates = eligible & ~is_active
        if not np.any(candidates) or not active:
            break
        # equiangular direction for the active set
        s = np.sign(c[active])
        s[s == 0] = 1.0
        Rk = R[:k, :k]
        Ginv_s = solve_triangular(Rk, solve_triangular(Rk, s, trans="T"))
        AA = 1.0 / np.sqrt(float(s @ Ginv_s))
        u = X[:, active] @ (AA * Ginv_s)
        a = X.T @ u
        C = float(np.max(np.abs(c[active])))

        idx = np.flatnonzero(candidates)
        with np.errstate(divide="ignore", invalid="ignore"):
            g1 = (C - c[idx]) / (AA - a[idx])
            g2 = (C + c[idx]) / (AA + a[idx])
        tiny = 1e-14 * C
        g1 = np.where(g1 > tiny, g1, np.inf)
        g2 = np.where(g2 > tiny, g2, np.inf)
        gam = np.minimum(g1, g2)
        pick = int(np.argmin(gam))
        if not np.isfinite(gam[pick]):
            break
        gamma = min(float(gam[pick]), C / AA)
        c = c - gamma * a
        c[~eligible] = 0.0
        if np.max(np.abs(c)) <= corr_tol * C0:
            break
        j = int(idx[pick])

    return path

"""Adaptive sparse polynomial chaos expansions (LARS + LOO degree selection)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .orthopoly import (
    basis_families_for,
    generate_multi_indices,
    reduced_coordinates,
    univariate_table,
)
from .probspace import InputModel, load_json
from .sparsereg import lars_path

DEFAULT_P_RANGE = tuple(range(1, 21))


class PceFitError(RuntimeError):
    """No candidate basis produced a usable fit."""


def _design_from_tables(tables, indices):
    A = np.ones((tables[0].shape[0], indices.shape[0]))
    for d, table in enumerate(tables):
        deg = indices[:, d]
        if deg.any():
            A *= table[:, deg]
    return A


@dataclass(frozen=True)
class PceModel:
    input_model: InputModel
    families: tuple
    indices: np.ndarray
    coefficients: np.ndarray
    loo: float
    relative_loo: float
    degree: int
    q: float = 1.0
    r: int | None = 2

    def __post_init__(self):
        idx = np.atleast_2d(np.asarray(self.indices, dtype=int))
        coef = np.asarray(self.coefficients, dtype=float).ravel()
        if idx.shape[0] != coef.size:
            raise ValueError("one coefficient per retained multi-index required")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coefficients", coef)

    def basis(self, xi) -> np.ndarray:
        U = reduced_coordinates(self.input_model, self.families, xi)
        max_deg = int(self.indices.max(initial=0))
        tables = [univariate_table(f, max_deg, U[:, d]) for d, f in enumerate(self.families)]
        return _design_from_tables(tables, self.indices)

    def __call__(self, xi):
        return evaluate(self, xi)

    def moments(self):
        return moments(self)

    def to_dict(self) -> dict:
        return {
            "families": list(self.families),
            "indices": self.indices.tolist(),
            "coefficients": self.coefficients.tolist(),
            "loo": self.loo,
            "relative_loo": self.relative_loo,
            "degree": self.degree,
            "q": self.q,
            "r": self.r,
        }

    @classmethod
    def from_dict(cls, d: dict, input_model: InputModel) -> "PceModel":
        return cls(
            input_model,
            tuple(d["families"]),
            np.array(d["indices"], dtype=int),
            np.array(d["coefficients"], dtype=float),
            float(d["loo"]),
            float(d["relative_loo"]),
            int(d["degree"]),
            float(d.get("q", 1.0)),
            d.get("r"),
        )

    def to_json(self, path=None) -> str:
        doc = {"input_model": self.input_model.to_dict(), "pce": self.to_dict()}
        text = json.dumps(doc, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "PceModel":
        doc = load_json(source)
        return cls.from_dict(doc["pce"], InputModel.from_dict(doc["input_model"]))


def evaluate(model: PceModel, xi):
    """Surrogate value(s) at physical sample(s) ``xi``."""
    xi = np.asarray(xi, dtype=float)
    out = model.basis(xi) @ model.coefficients
    return float(out[0]) if xi.ndim == 1 else out


def moments(model: PceModel):
    """Mean and variance from the coefficients of the orthonormal basis."""
    zero = ~np.any(model.indices, axis=1)
    mean = float(model.coefficients[zero].sum())
    variance = float(np.sum(model.coefficients[~zero] ** 2))
    return mean, variance


class _BasisCache:
    """Design matrices per total degree for one fixed experimental design."""

    def __init__(self, input_model, families, X, max_degree):
        U = reduced_coordinates(input_model, families, X)
        self.tables = [univariate_table(f, max_degree, U[:, d]) for d, f in enumerate(families)]
        self._mats = {}

    def get(self, M, p, q, r):
        key = (p, q, r)
        if key not in self._mats:
            idx = generate_multi_indices(M, p, q, r).indices
            self._mats[key] = (idx, _design_from_tables(self.tables, idx))
        return self._mats[key]


def fit_adaptive(
    X,
    Y,
    input_model: InputModel,
    p_range=DEFAULT_P_RANGE,
    q: float = 1.0,
    r: int | None = 2,
    families=None,
    patience: int = 2,
    tie_tol: float = 1e-12,
    loo_correction: bool = False,
    weights=None,
    _cache: _BasisCache | None = None,
) -> PceModel:
    """Sparse PCE with the degree and LARS step chosen by minimum LOO error.

    Degrees in ``p_range`` are tried in ascending order; the sweep stops once
    the best LOO per degree has increased ``patience`` times in a row. With
    ``loo_correction`` the selection uses the LOO error inflated by the
    small-sample factor ``T(P, N)``, which penalizes large bases fitted on few
    samples; the stored ``loo`` is always the plain estimate.

    ``weights`` (one positive value per sample) turn the regression into a
    weighted least-squares fit; LOO errors are then weighted as well.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    if X.shape[0] != Y.size or Y.size < 3:
        raise ValueError("need at least 3 samples with one response each")
    p_range = sorted(int(p) for p in p_range)
    if not p_range:
        raise ValueError("empty degree range")
    families = basis_families_for(input_model) if families is None else tuple(families)
    cache = _cache or _BasisCache(input_model, families, X, p_range[-1])
    M = input_model.dim
    if weights is None:
        sw = None
        var_y = float(np.var(Y, ddof=1))
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != Y.size or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite, positive and one per sample")
        w = w / w.mean()
        sw = np.sqrt(w)
        mu = float(np.sum(w * Y) / Y.size)
        var_y = float(np.sum(w * (Y - mu) ** 2) / (Y.size - 1))
    scale = var_y if var_y > 0 else 1.0

    best = None
    previous = np.inf
    worse = 0
    for p in p_range:
        idx, A = cache.get(M, p, q, r)
        if sw is None:
            path = lars_path(A, Y, intercept=0, loo_correction=loo_correction)
        else:
            path = lars_path(A * sw[:, None], Y * sw, loo_correction=loo_correction)
        if not path.steps:  # identically zero response
            return PceModel(input_model, families, np.zeros((1, M), int), [0.0], 0.0, 0.0, 0, q, r)
        try:
            step = path.steps[path.best_index(tie_tol, loo_correction)]
        except ValueError:
            continue
        crit = step.corrected_loo if loo_correction else step.loo
        if best is None or crit < best[0] - tie_tol * scale:
            best = (crit, step.loo, p, idx[list(step.active)], step.coefficients)
        worse = worse + 1 if crit > previous else 0
        previous = crit
        if worse >= patience:
            break
    if best is None:
        raise PceFitError("every candidate basis gave a degenerate LOO estimate")
    _, loo, p, retained, coef = best
    return PceModel(input_model, families, retained, coef, loo, loo / scale, p, q, r)


@dataclass
class TimeFrozenPce:
    """Independent sparse PCEs of the response at selected time instants."""

    times: np.ndarray
    instants: np.ndarray
    models: list = field(default_factory=list)

    @property
    def loo(self) -> np.ndarray:
        return np.array([m.loo for m in self.models])

    def predict(self, xi) -> np.ndarray:
        """Response at the fitted instants, shape (n_samples, n_instants)."""
        return np.column_stack([np.atleast_1d(evaluate(m, np.atleast_2d(xi))) for m in self.models])

    def mean(self) -> np.ndarray:
        return np.array([moments(m)[0] for m in self.models])

    def std(self) -> np.ndarray:
        return np.sqrt([moments(m)[1] for m in self.models])

    def to_json(self, path=None) -> str:
        doc = {
            "input_model": self.models[0].input_model.to_dict() if self.models else None,
            "times": self.times.tolist(),
            "instants": self.instants.tolist(),
            "pces": [m.to_dict() for m in self.models],
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "TimeFrozenPce":
        doc = load_json(source)
        im = InputModel.from_dict(doc["input_model"]) if doc["input_model"] else None
        models = [PceModel.from_dict(d, im) for d in doc["pces"]]
        return cls(np.array(doc["times"], float), np.array(doc["instants"], int), models)


def fit_time_frozen(
    X,
    Y,
    input_model: InputModel,
    times=None,
    instants=None,
    p_range=DEFAULT_P_RANGE,
    q: float = 1.0,
    r: int | None = 2,
    **kwargs,
) -> TimeFrozenPce:
    """One ``fit_adaptive`` per time instant of the trajectories ``Y`` (N, T).

    ``instants`` restricts the fit to a subset of column indices.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if Y.shape[0] != X.shape[0]:
        raise ValueError("one trajectory per design sample required")
    T = Y.shape[1]
    times = np.arange(T, dtype=float) if times is None else np.asarray(times, dtype=float)
    instants = np.arange(T) if instants is None else np.asarray(instants, dtype=int)
    families = basis_families_for(input_model)
    cache = _BasisCache(input_model, families, X, max(p_range))
    models = []
    for k in instants:
        try:
            models.append(
                fit_adaptive(X, Y[:, k], input_model, p_range, q, r, families, _cache=cache, **kwargs)
            )
        except (PceFitError, ValueError) as exc:
            raise PceFitError(f"time-frozen fit failed at instant {k}: {exc}") from exc
    return TimeFrozenPce(times[instants], instants, models)

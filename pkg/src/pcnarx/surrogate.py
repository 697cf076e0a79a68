"""PC-NARX surrogates: NARX structure selection, then sparse PCEs of its coefficients.

Phase 1 picks a common NARX structure and estimates its coefficients on each
experiment of the design. Phase 2 expands every coefficient as a sparse PCE
of the uncertain parameters, so that a new parameter sample yields a NARX
model to be run on its own excitation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .narx import (
    DIVERGENCE_FACTOR,
    Experiment,
    InstabilityError,
    NarxDictionary,
    NarxModel,
    NarxStructure,
    free_run,
    relative_error,
    reconstruct,
    select_best_structure,
    select_candidates,
)
from .pce import DEFAULT_P_RANGE, PceFitError, PceModel, _BasisCache, evaluate, fit_adaptive
from .orthopoly import basis_families_for
from .probspace import InputModel, load_json

UNSTABLE_WARN_FRACTION = 0.01


class CoefficientFitError(RuntimeError):
    """The PCE of one NARX coefficient could not be fitted."""


@dataclass(frozen=True)
class NarxSettings:
    threshold: float | None = None
    top_k: int = 5
    tolerance: float = 1e-3
    candidate_mode: str = "prefixes"
    divergence_factor: float = DIVERGENCE_FACTOR


@dataclass(frozen=True)
class PceSettings:
    p_range: tuple = DEFAULT_P_RANGE
    q: float = 1.0
    r: int | None = 2
    # "loo": each coefficient picks its own degree by LOO error;
    # "ed_reconstruction": one common degree minimizing the ED free-run error
    degree_selection: str = "loo"
    patience: int = 2
    loo_correction: bool = True
    # "none" or "inverse_variance": weight experiment k by 1 / Var(theta_k,i)
    weighting: str = "none"


@dataclass
class PcNarxModel:
    structure: NarxStructure
    coefficient_pces: list
    input_model: InputModel
    y_scale: float
    divergence_factor: float = DIVERGENCE_FACTOR
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.coefficient_pces) != len(self.structure):
            raise ValueError("one coefficient PCE per NARX term required")

    @property
    def limit(self) -> float:
        return self.divergence_factor * self.y_scale

    @property
    def coefficient_loo(self) -> np.ndarray:
        return np.array([m.loo for m in self.coefficient_pces])

    def coefficients(self, xi) -> np.ndarray:
        """NARX coefficients at parameter sample(s), shape (n, n_terms) or (n_terms,)."""
        xi = np.asarray(xi, dtype=float)
        X = np.atleast_2d(xi)
        theta = np.column_stack([np.atleast_1d(evaluate(m, X)) for m in self.coefficient_pces])
        return theta[0] if xi.ndim == 1 else theta

    def predict(self, xi, x, y0=None) -> np.ndarray:
        return predict(self, xi, x, y0)

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "structure": {"dictionary": self.structure.dictionary.to_list(), "indices": list(self.structure.indices)},
            "terms": self.structure.labels(),
            "input_model": self.input_model.to_dict(),
            "coefficient_pces": [m.to_dict() for m in self.coefficient_pces],
            "y_scale": self.y_scale,
            "divergence_factor": self.divergence_factor,
            "info": self.info,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, allow_nan=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "PcNarxModel":
        im = InputModel.from_dict(d["input_model"])
        s = d["structure"]
        structure = NarxStructure(NarxDictionary.from_list(s["dictionary"]), tuple(s["indices"]))
        pces = [PceModel.from_dict(m, im) for m in d["coefficient_pces"]]
        return cls(structure, pces, im, float(d["y_scale"]), float(d["divergence_factor"]), d.get("info", {}))

    @classmethod
    def from_json(cls, source) -> "PcNarxModel":
        return cls.from_dict(load_json(source))


def _initial_values(structure, y0) -> np.ndarray:
    n0 = structure.max_lag
    if y0 is None:
        return np.zeros(n0)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.size < n0:
        raise ValueError(f"need {n0} initial values, got {y0.size}")
    return y0[:n0]


def predict(model: PcNarxModel, xi, x, y0=None) -> np.ndarray:
    """Free-run prediction for one parameter sample and its excitation.

    ``y0`` seeds the first ``max_lag`` instants (zeros, i.e. rest, by default).
    Raises ``InstabilityError`` when the recursion diverges.
    """
    theta = model.coefficients(np.asarray(xi, dtype=float))
    return free_run(model.structure, theta, x, _initial_values(model.structure, y0), model.limit)


def inverse_variance_weights(variances) -> np.ndarray:
    """``1 / v`` with non-finite or vanishing variances clipped to the observed range."""
    v = np.asarray(variances, dtype=float)
    good = np.isfinite(v) & (v > 0)
    if not np.any(good):
        return np.ones_like(v)
    lo, hi = v[good].min(), v[good].max()
    v = np.where(np.isfinite(v), np.clip(v, lo, hi), hi)
    return 1.0 / v


def _fit_coefficients(X, Theta, input_model, structure, pce: PceSettings, p_range, cache, W=None):
    models = []
    for i, label in enumerate(structure.labels()):
        try:
            models.append(
                fit_adaptive(
                    X, Theta[:, i], input_model, p_range, pce.q, pce.r, cache.families,
                    patience=pce.patience, loo_correction=pce.loo_correction,
                    weights=None if W is None else W[:, i], _cache=cache.cache,
                )
            )
        except (PceFitError, ValueError, np.linalg.LinAlgError) as exc:
            raise CoefficientFitError(f"PCE of coefficient of term {label} failed: {exc}") from exc
    return models


@dataclass
class _SharedCache:
    families: tuple
    cache: _BasisCache


def ed_errors(model: PcNarxModel, experiments: Sequence[Experiment]) -> np.ndarray:
    """Free-run error of the surrogate on each design experiment."""
    errs = np.empty(len(experiments))
    theta = model.coefficients(np.array([e.xi for e in experiments]))
    for k, exp in enumerate(experiments):
        errs[k] = reconstruct(model.structure, theta[k], exp, model.limit)[1]
    return errs


def fit(
    experiments: Sequence[Experiment],
    input_model: InputModel,
    dictionary: NarxDictionary,
    narx: NarxSettings = NarxSettings(),
    pce: PceSettings = PceSettings(),
) -> PcNarxModel:
    """Two-phase PC-NARX fit on a set of experiments sharing one time grid."""
    experiments = list(experiments)
    if not experiments:
        raise ValueError("no experiments")
    grids = {(e.T, e.dt) for e in experiments}
    if len(grids) != 1:
        raise ValueError("experiments must share one time grid")

    candidates = select_candidates(
        experiments, dictionary, narx.threshold, narx.top_k, mode=narx.candidate_mode
    )
    phase1: NarxModel = select_best_structure(
        candidates, experiments, narx.tolerance, narx.divergence_factor
    )
    X = np.array([e.xi for e in experiments])
    Theta = phase1.coefficients
    usable = np.all(np.isfinite(Theta), axis=1)
    if usable.sum() < 3:
        raise CoefficientFitError("fewer than 3 experiments with finite NARX coefficients")
    X, Theta = X[usable], Theta[usable]
    if pce.weighting == "inverse_variance":
        W = np.column_stack([inverse_variance_weights(v) for v in phase1.variances[usable].T])
    elif pce.weighting == "none":
        W = None
    else:
        raise ValueError(f"unknown weighting {pce.weighting!r}")

    families = basis_families_for(input_model)
    p_all = sorted(pce.p_range)
    shared = _SharedCache(families, _BasisCache(input_model, families, X, p_all[-1]))
    info = {
        "n_experiments": len(experiments),
        "dt": experiments[0].dt,
        "n_samples": experiments[0].T,
        "n_candidates": len(candidates),
        "phase1_qualified": phase1.qualified,
        "phase1_mean_error": phase1.mean_error,
        "phase1_errors": phase1.errors.tolist(),
        "candidate_ledger": [r.row() for r in phase1.ledger],
        "narx_settings": narx.__dict__,
        "pce_settings": {**pce.__dict__, "p_range": list(pce.p_range)},
    }

    def build(models):
        return PcNarxModel(phase1.structure, models, input_model, phase1.y_scale, narx.divergence_factor, dict(info))

    if pce.degree_selection == "loo":
        model = build(_fit_coefficients(X, Theta, input_model, phase1.structure, pce, p_all, shared, W))
    elif pce.degree_selection == "ed_reconstruction":
        model, trace = None, []
        best_err, previous, worse = np.inf, np.inf, 0
        for p in p_all:
            cand = build(_fit_coefficients(X, Theta, input_model, phase1.structure, pce, [p], shared, W))
            err = float(np.mean(ed_errors(cand, experiments)))
            trace.append({"p": p, "mean_error": err})
            if model is None or err < best_err:
                model, best_err = cand, err
            worse = worse + 1 if err > previous else 0
            previous = err
            if worse >= pce.patience:
                break
        model.info["degree_trace"] = trace
    else:
        raise ValueError(f"unknown degree selection {pce.degree_selection!r}")

    model.info["coefficient_loo"] = model.coefficient_loo.tolist()
    model.info["coefficient_degree"] = [m.degree for m in model.coefficient_pces]
    model.info["ed_errors"] = ed_errors(model, experiments).tolist()
    return model


# -- validation -----------------------------------------------------------------

def quantity_error(y, y_hat) -> float:
    """Relative error of a scalar quantity over an ensemble of runs."""
    return relative_error(y, y_hat)


@dataclass
class ValidationReport:
    errors: np.ndarray  # per trajectory, inf when the prediction diverged
    predictions: np.ndarray  # (n, T), NaN rows for diverged runs
    references: np.ndarray  # (n, T)
    dt: float

    @property
    def n(self) -> int:
        return self.errors.size

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors))

    @property
    def stable(self) -> np.ndarray:
        return np.isfinite(self.errors)

    @property
    def n_unstable(self) -> int:
        return int(np.sum(~self.stable))

    @property
    def finite_mean_error(self) -> float:
        return float(np.mean(self.errors[self.stable])) if np.any(self.stable) else np.inf

    def fraction_above(self, level: float = 0.1) -> float:
        return float(np.mean(self.errors > level))

    def _pairs(self):
        s = self.stable
        return self.references[s], self.predictions[s]

    def max_error(self) -> float:
        """Error on ``max|y|`` over the stable runs."""
        Y, P = self._pairs()
        return quantity_error(np.max(np.abs(Y), axis=1), np.max(np.abs(P), axis=1))

    def instant_error(self, k: int) -> float:
        Y, P = self._pairs()
        return quantity_error(Y[:, k], P[:, k])

    def mean_trajectory_error(self) -> float:
        Y, P = self._pairs()
        return relative_error(Y.mean(axis=0), P.mean(axis=0))

    def std_trajectory_error(self) -> float:
        Y, P = self._pairs()
        return relative_error(Y.std(axis=0, ddof=1), P.std(axis=0, ddof=1))

    def summary(self) -> dict:
        return {
            "n": self.n,
            "mean_error": self.mean_error,
            "finite_mean_error": self.finite_mean_error,
            "n_unstable": self.n_unstable,
            "fraction_above_0.1": self.fraction_above(0.1),
            "max_error": self.max_error(),
            "mean_trajectory_error": self.mean_trajectory_error(),
            "std_trajectory_error": self.std_trajectory_error(),
        }


def validate(model: PcNarxModel, experiments: Sequence[Experiment], channel: str | None = None) -> ValidationReport:
    """Compare surrogate predictions with reference experiments.

    ``channel`` names an ``extra`` series to compare against after integrating
    the prediction in time (e.g. displacement from a velocity model).
    """
    experiments = list(experiments)
    if not experiments:
        raise ValueError("no validation experiments")
    T = experiments[0].T
    preds = np.full((len(experiments), T), np.nan)
    refs = np.empty((len(experiments), T))
    errors = np.empty(len(experiments))
    theta = model.coefficients(np.array([e.xi for e in experiments]))
    for i, exp in enumerate(experiments):
        if exp.T != T:
            raise ValueError("validation experiments must share one time grid")
        ref = exp.y if channel is None else exp.extra[channel]
        refs[i] = ref
        try:
            y_hat = free_run(model.structure, theta[i], exp.x, exp.y[: model.structure.max_lag], model.limit)
        except InstabilityError:
            errors[i] = np.inf
            continue
        if channel is not None:
            y_hat = integrate_series(y_hat, exp.dt, ref[0])
        preds[i] = y_hat
        errors[i] = relative_error(ref, y_hat)
    return ValidationReport(errors, preds, refs, experiments[0].dt)


def integrate_series(v, dt: float, initial: float = 0.0) -> np.ndarray:
    """Cumulative trapezoidal integral, e.g. displacement from velocity."""
    return initial + integrate.cumulative_trapezoid(v, dx=dt, initial=0.0)


# -- Monte Carlo statistics -------------------------------------------------------

@dataclass
class McsStatistics:
    mean: np.ndarray
    std: np.ndarray
    max_response: np.ndarray  # max|y| of the stable runs
    density_grid: np.ndarray
    density: np.ndarray
    n_unstable: int
    warning: bool

    def to_csv(self, directory, dt: float) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        t = np.arange(self.mean.size) * dt
        np.savetxt(d / "statistics.csv", np.column_stack([t, self.mean, self.std]),
                   delimiter=",", header="t,mean,std", comments="", fmt="%.17g")
        np.savetxt(d / "max_response_density.csv", np.column_stack([self.density_grid, self.density]),
                   delimiter=",", header="max_abs_y,density", comments="", fmt="%.17g")
        np.savetxt(d / "max_response_samples.csv", self.max_response[:, None],
                   delimiter=",", header="max_abs_y", comments="", fmt="%.17g")


def max_response_density(samples, n_grid: int = 256):
    """Gaussian kernel density of the samples with Silverman's bandwidth."""
    samples = np.asarray(samples, dtype=float)
    lo, hi = samples.min(), samples.max()
    pad = 0.1 * (hi - lo) if hi > lo else 1.0
    grid = np.linspace(lo - pad, hi + pad, n_grid)
    if samples.size < 2 or np.ptp(samples) == 0:
        return grid, np.zeros_like(grid)
    kde = stats.gaussian_kde(samples, bw_method="silverman")
    return grid, kde(grid)


def mcs_statistics(
    model: PcNarxModel,
    input_model: InputModel,
    excitation: Callable,
    n: int,
    seed: int,
    y0=None,
    chunk: int = 1000,
) -> McsStatistics:
    """Mean/std trajectories and max-response density from ``n`` surrogate runs.

    ``excitation(xi, index, seed)`` returns the input series of run ``index``.
    Parameters are drawn by plain Monte Carlo from ``SeedSequence(seed)``.
    """
    if n < 100:
        raise ValueError("mcs_statistics needs n >= 100")
    X = input_model.sample_random(n, np.random.SeedSequence(seed))
    mean = m2 = None
    count = 0
    maxima = []
    n_bad = 0
    y_init = _initial_values(model.structure, y0)
    for start in range(0, n, chunk):
        block = X[start : start + chunk]
        theta = model.coefficients(block)
        for j, xi in enumerate(block):
            x = excitation(xi, start + j, seed)
            try:
                y = free_run(model.structure, theta[j], x, y_init, model.limit)
            except InstabilityError:
                n_bad += 1
                continue
            # Welford update: exact zeros when every run is identical
            if mean is None:
                mean, m2 = np.zeros(y.size), np.zeros(y.size)
            count += 1
            delta = y - mean
            mean += delta / count
            m2 += delta * (y - mean)
            maxima.append(np.max(np.abs(y)))
    if count < 2:
        raise RuntimeError("fewer than two stable surrogate runs")
    var = m2 / (count - 1)
    maxima = np.array(maxima)
    grid, dens = max_response_density(maxima)
    warn = n_bad > UNSTABLE_WARN_FRACTION * n
    if warn:
        warnings.warn(f"{n_bad} of {n} surrogate runs diverged", RuntimeWarning, stacklevel=2)
    return McsStatistics(mean, np.sqrt(var), maxima, grid, dens, n_bad, warn)

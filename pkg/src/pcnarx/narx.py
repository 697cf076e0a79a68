"""Polynomial NARX models: dictionaries, regression, prediction and structure selection.

A NARX term is a product of factors ``c(t - lag) ** exponent`` where the
channel ``c`` is the excitation ``x`` or the response ``y`` and a factor may
act on the absolute value of the signal. The constant term has no factors.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .sparsereg import SingularMatrixError, lars_path, ols_fit, ols_fit_with_variance

DIVERGENCE_FACTOR = 1e6
MIN_EXTRA_ROWS = 10


class DegenerateDenominatorError(ValueError):
    """Relative error requested for a constant reference series."""


class InstabilityError(RuntimeError):
    """A free-run simulation left the admissible range."""

    def __init__(self, instant: int, value: float):
        super().__init__(f"free-run diverged at instant {instant} (value {value:.3e})")
        self.instant = instant
        self.value = value


class SelectionError(RuntimeError):
    """Every candidate structure failed on every experiment."""


class Factor(NamedTuple):
    channel: str  # "x" or "y"
    lag: int
    exponent: int = 1
    absolute: bool = False

    def label(self) -> str:
        s = f"{self.channel}(t)" if self.lag == 0 else f"{self.channel}(t-{self.lag})"
        if self.absolute:
            s = f"|{s}|"
        return s if self.exponent == 1 else f"{s}^{self.exponent}"


@dataclass(frozen=True)
class NarxTerm:
    """Product of lagged, possibly absolute-valued, integer powers of x and y."""

    factors: tuple = ()

    def __post_init__(self):
        facs = []
        for f in self.factors:
            f = Factor(*f)
            if f.channel not in ("x", "y"):
                raise ValueError(f"unknown channel {f.channel!r}")
            if f.lag < 0 or f.exponent < 1:
                raise ValueError("lags must be >= 0 and exponents >= 1")
            if f.channel == "y" and f.lag == 0:
                raise ValueError("a response factor needs a lag of at least 1")
            facs.append(Factor(f.channel, int(f.lag), int(f.exponent), bool(f.absolute)))
        object.__setattr__(self, "factors", tuple(sorted(facs, key=lambda f: (f.channel != "y", f.absolute, f.lag))))

    @property
    def is_constant(self) -> bool:
        return not self.factors

    @property
    def degree(self) -> int:
        return sum(f.exponent for f in self.factors)

    def max_lag(self, channel: str) -> int:
        return max((f.lag for f in self.factors if f.channel == channel), default=0)

    def label(self) -> str:
        return "*".join(f.label() for f in self.factors) or "1"

    def __str__(self) -> str:
        return self.label()

    def to_list(self) -> list:
        return [list(f) for f in self.factors]

    @classmethod
    def from_list(cls, factors) -> "NarxTerm":
        return cls(tuple(Factor(*f) for f in factors))

    @classmethod
    def parse(cls, text: str) -> "NarxTerm":
        """Inverse of ``label``, e.g. ``"y(t-1)^3*x(t)"`` or ``"1"``."""
        text = text.strip().replace(" ", "")
        if text == "1":
            return cls(())
        factors = []
        for part in text.split("*"):
            exponent = 1
            if "^" in part:
                part, e = part.split("^")
                exponent = int(e)
            absolute = part.startswith("|")
            part = part.strip("|")
            channel, inner = part[0], part[2:-1]
            lag = 0 if inner == "t" else int(inner.split("-")[1])
            factors.append(Factor(channel, lag, exponent, absolute))
        return cls(tuple(factors))


def _term_sort_key(term: NarxTerm):
    y = [f for f in term.factors if f.channel == "y" and not f.absolute]
    x = [f for f in term.factors if f.channel == "x"]
    a = [f for f in term.factors if f.absolute]
    ly = sum(f.exponent for f in y)
    return (
        term.degree,
        -ly,
        [f.lag for f in y],
        [f.lag for f in x],
        [(f.lag, f.exponent) for f in a],
        [-f.exponent for f in term.factors],
    )


@dataclass(frozen=True)
class NarxDictionary:
    """Ordered collection of distinct candidate terms; the constant comes first."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(t if isinstance(t, NarxTerm) else NarxTerm(t) for t in self.terms)
        if len(set(terms)) != len(terms):
            raise ValueError("dictionary contains duplicate terms")
        if NarxTerm(()) not in terms:
            raise ValueError("dictionary must contain the constant term")
        object.__setattr__(self, "terms", terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __getitem__(self, i):
        return self.terms[i]

    @property
    def n_x(self) -> int:
        return max(t.max_lag("x") for t in self.terms)

    @property
    def n_y(self) -> int:
        return max(t.max_lag("y") for t in self.terms)

    @property
    def max_lag(self) -> int:
        return max(self.n_x, self.n_y)

    @property
    def constant_index(self) -> int:
        return self.terms.index(NarxTerm(()))

    def index(self, term) -> int:
        if isinstance(term, str):
            term = NarxTerm.parse(term)
        return self.terms.index(term)

    def labels(self) -> list:
        return [t.label() for t in self.terms]

    def to_list(self) -> list:
        return [t.to_list() for t in self.terms]

    @classmethod
    def from_list(cls, data) -> "NarxDictionary":
        return cls(tuple(NarxTerm.from_list(t) for t in data))


def build_dictionary(
    y_lags: Sequence[int],
    x_lags: Sequence[int],
    max_degree: int = 3,
    max_y_exponent: int = 3,
    max_x_exponent: int = 1,
    cross_terms: bool = True,
) -> NarxDictionary:
    """Terms ``y(t-j)^l * x(t-k)^m`` with ``l + m <= max_degree``.

    Every term involves at most one response lag and one excitation lag.
    Without ``cross_terms`` a term depends on a single signal only.
    Order: constant, then by total degree, then by the response exponent
    (descending) and the lags.
    """
    y_lags = sorted(set(int(j) for j in y_lags))
    x_lags = sorted(set(int(k) for k in x_lags))
    if any(j < 1 for j in y_lags) or any(k < 0 for k in x_lags):
        raise ValueError("response lags start at 1 and excitation lags at 0")
    terms = [NarxTerm(())]
    for l in range(0, max_y_exponent + 1):
        for m in range(0, max_x_exponent + 1):
            if l + m == 0 or l + m > max_degree or (l and m and not cross_terms):
                continue
            for j in y_lags if l else [None]:
                for k in x_lags if m else [None]:
                    facs = []
                    if l:
                        facs.append(Factor("y", j, l))
                    if m:
                        facs.append(Factor("x", k, m))
                    terms.append(NarxTerm(tuple(facs)))
    if len(terms) == 1:
        raise ValueError("constraints admit no term besides the constant")
    return NarxDictionary(tuple([terms[0]] + sorted(terms[1:], key=_term_sort_key)))


def build_monomial_dictionary(
    y_lags: Sequence[int], x_lags: Sequence[int], max_degree: int = 3, max_x_degree: int = 1
) -> NarxDictionary:
    """Every monomial of the lagged signals with total degree <= ``max_degree``.

    Unlike :func:`build_dictionary`, products of several lags are included,
    e.g. ``y(t-1) * y(t-2) * x(t)``.
    """
    y_lags = sorted(set(int(j) for j in y_lags))
    x_lags = sorted(set(int(k) for k in x_lags))
    if any(j < 1 for j in y_lags) or any(k < 0 for k in x_lags):
        raise ValueError("response lags start at 1 and excitation lags at 0")
    variables = [("y", j) for j in y_lags] + [("x", k) for k in x_lags]
    terms = [NarxTerm(())]
    for d in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(variables, d):
            if sum(ch == "x" for ch, _ in combo) > max_x_degree:
                continue
            counts = Counter(combo)
            terms.append(NarxTerm(tuple(Factor(ch, lag, e) for (ch, lag), e in counts.items())))
    return NarxDictionary(tuple([terms[0]] + sorted(terms[1:], key=_term_sort_key)))


def build_absolute_dictionary(y_lags: Sequence[int], x_lags: Sequence[int], abs_lag: int = 1) -> NarxDictionary:
    """Terms ``s(t-i) * |y(t-abs_lag)|^m`` for ``s`` in {x, y}, ``m`` in {0, 1}, plus the constant.

    Suited to hysteretic responses where the restoring force depends on the
    sign of the velocity.
    """
    terms = [NarxTerm(())]
    for m in (0, 1):
        extra = (Factor("y", abs_lag, 1, True),) if m else ()
        for k in sorted(set(x_lags)):
            terms.append(NarxTerm((Factor("x", k),) + extra))
        for j in sorted(set(y_lags)):
            terms.append(NarxTerm((Factor("y", j),) + extra))
    return NarxDictionary(tuple([terms[0]] + sorted(terms[1:], key=_term_sort_key)))


def quarter_car_dictionary() -> NarxDictionary:
    return build_dictionary(range(1, 5), range(0, 5))


def duffing_dictionary() -> NarxDictionary:
    return build_dictionary(range(1, 3), range(0, 3), cross_terms=False)


def boucwen_dictionary() -> NarxDictionary:
    return build_absolute_dictionary(range(1, 5), range(0, 5))


@dataclass(frozen=True)
class NarxStructure:
    """Subset of a dictionary, kept in dictionary order."""

    dictionary: NarxDictionary
    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if not idx:
            raise ValueError("a structure needs at least one term")
        if idx[0] < 0 or idx[-1] >= len(self.dictionary):
            raise ValueError("structure indices outside the dictionary")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def terms(self) -> tuple:
        return tuple(self.dictionary.terms[i] for i in self.indices)

    def labels(self) -> list:
        return [t.label() for t in self.terms]

    @property
    def max_lag(self) -> int:
        return self.dictionary.max_lag

    @classmethod
    def from_terms(cls, dictionary: NarxDictionary, terms) -> "NarxStructure":
        return cls(dictionary, tuple(dictionary.index(t) for t in terms))

    def to_list(self) -> list:
        return [t.to_list() for t in self.terms]


@dataclass
class Experiment:
    """One simulated input/output record on a uniform grid.

    ``extra`` holds additional recorded channels (e.g. displacement when the
    model target is velocity).
    """

    xi: np.ndarray
    x: np.ndarray
    y: np.ndarray
    dt: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.y = np.ascontiguousarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-D series of equal length")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def T(self) -> int:
        return self.y.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.T) * self.dt


def _check_length(T: int, max_lag: int):
    if T <= max_lag + MIN_EXTRA_ROWS:
        raise ValueError(f"series of length {T} too short for maximum lag {max_lag}")


def _evaluate_terms(terms, x, y, n0: int) -> np.ndarray:
    T = y.size
    Phi = np.ones((T - n0, len(terms)))
    for i, term in enumerate(terms):
        for f in term.factors:
            s = x if f.channel == "x" else y
            v = s[n0 - f.lag : T - f.lag]
            if f.absolute:
                v = np.abs(v)
            Phi[:, i] *= v if f.exponent == 1 else v**f.exponent
    return Phi


@dataclass
class RegressionProblem:
    """Information matrix ``Phi`` (rows t = first_row .. T-1) and target ``y[first_row:]``."""

    Phi: np.ndarray
    target: np.ndarray
    first_row: int


def assemble_regression(exp: Experiment, terms) -> RegressionProblem:
    """Regressors evaluated on recorded data for every usable instant.

    ``terms`` is a dictionary or a structure; the first usable row is the
    dictionary's maximum lag so all structures of one dictionary share rows.
    """
    dictionary = terms.dictionary if isinstance(terms, NarxStructure) else terms
    term_list = terms.terms if isinstance(terms, (NarxStructure, NarxDictionary)) else tuple(terms)
    n0 = dictionary.max_lag if isinstance(dictionary, NarxDictionary) else max(
        max(t.max_lag("x"), t.max_lag("y")) for t in term_list
    )
    _check_length(exp.T, n0)
    Phi = _evaluate_terms(term_list, exp.x, exp.y, n0)
    return RegressionProblem(Phi, exp.y[n0:].copy(), n0)


def one_step_ahead(coefficients, structure: NarxStructure, exp: Experiment) -> np.ndarray:
    """Predictions using recorded past outputs; the first ``max_lag`` values are copied."""
    prob = assemble_regression(exp, structure)
    out = exp.y.copy()
    out[prob.first_row :] = prob.Phi @ np.asarray(coefficients, dtype=float)
    return out


def _encode(terms):
    nf = max((len(t.factors) for t in terms), default=0)
    nf = max(nf, 1)
    K = len(terms)
    chan = np.zeros((K, nf), np.int64)
    lag = np.zeros((K, nf), np.int64)
    expo = np.zeros((K, nf), np.int64)
    absf = np.zeros((K, nf), np.bool_)
    nfac = np.zeros(K, np.int64)
    for i, t in enumerate(terms):
        nfac[i] = len(t.factors)
        for k, f in enumerate(t.factors):
            chan[i, k] = 0 if f.channel == "x" else 1
            lag[i, k] = f.lag
            expo[i, k] = f.exponent
            absf[i, k] = f.absolute
    return chan, lag, expo, absf, nfac


@numba.njit(cache=True)
def _free_run_kernel(chan, lag, expo, absf, nfac, coef, x, y_seed, n0, limit):
    T = x.size
    y = np.zeros(T)
    for t in range(min(n0, T)):
        y[t] = y_seed[t]
    K = coef.size
    for t in range(n0, T):
        acc = 0.0
        for i in range(K):
            v = coef[i]
            for f in range(nfac[i]):
                s = x[t - lag[i, f]] if chan[i, f] == 0 else y[t - lag[i, f]]
                if absf[i, f]:
                    s = abs(s)
                p = s
                for _ in range(expo[i, f] - 1):
                    p *= s
                v *= p
            acc += v
        y[t] = acc
        if not np.isfinite(acc) or abs(acc) > limit:
            return y, t
    return y, -1


def free_run(structure: NarxStructure, coefficients, x, y0, limit: float = np.inf) -> np.ndarray:
    """Simulate the model feeding back its own predictions.

    ``y0`` seeds the first ``structure.max_lag`` instants. Raises
    ``InstabilityError`` when ``|y|`` exceeds ``limit`` or turns non-finite.
    """
    coef = np.ascontiguousarray(coefficients, dtype=float)
    if coef.size != len(structure):
        raise ValueError("one coefficient per structure term required")
    x = np.ascontiguousarray(x, dtype=float)
    n0 = structure.max_lag
    seed = np.zeros(max(n0, 1))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.size < n0:
        raise ValueError(f"need {n0} initial values, got {y0.size}")
    seed[:n0] = y0[:n0]
    y, bad = _free_run_kernel(*_encode(structure.terms), coef, x, seed, n0, float(limit))
    if bad >= 0:
        raise InstabilityError(int(bad), float(y[bad]))
    return y


def relative_error(y, y_hat) -> float:
    """``sum((y - y_hat)^2) / sum((y - mean(y))^2)``."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("series lengths differ")
    den = float(np.sum((y - y.mean()) ** 2))
    if den <= 0.0:
        raise DegenerateDenominatorError("reference series is constant")
    return float(np.sum((y - y_hat) ** 2)) / den


@dataclass
class Candidate:
    structure: NarxStructure
    sources: list = field(default_factory=list)  # experiments whose LARS cut gave it


def response_scale(experiments) -> float:
    return max(float(np.max(np.abs(e.y))) for e in experiments)


def select_candidates(
    experiments: Sequence[Experiment],
    dictionary: NarxDictionary,
    threshold: float | None = None,
    top_k: int = 5,
    tie_tol: float = 1e-12,
    mode: str = "prefixes",
) -> list:
    """Candidate structures from LARS on the most nonlinear experiments.

    Experiments whose ``max|y|`` exceeds ``threshold`` are used; if none do
    (or no threshold is given) the ``top_k`` largest ones are. Each LARS path
    is cut at its minimum one-step-ahead LOO error. With ``mode="cut"`` the
    cut structure is the candidate; with ``mode="prefixes"`` every leading
    part of the cut path (in entry order) is a candidate too. Identical
    structures are merged in discovery order.
    """
    if mode not in ("cut", "prefixes"):
        raise ValueError("mode must be 'cut' or 'prefixes'")
    peaks = np.array([np.max(np.abs(e.y)) for e in experiments])
    chosen = np.flatnonzero(peaks > threshold) if threshold is not None else np.array([], int)
    if chosen.size == 0:
        chosen = np.argsort(-peaks, kind="stable")[:top_k]
    c0 = dictionary.constant_index
    found: dict = {}
    for k in chosen:
        prob = assemble_regression(experiments[k], dictionary)
        path = lars_path(prob.Phi, prob.target, intercept=c0)
        if not path.steps:
            continue
        cut = path.best_index(tie_tol)
        steps = range(1, cut + 1) if mode == "prefixes" else [cut]
        for s in steps:
            key = tuple(sorted(path.steps[s].active))
            if key not in found:
                found[key] = Candidate(NarxStructure(dictionary, key))
            if int(k) not in found[key].sources:
                found[key].sources.append(int(k))
    return list(found.values())


@dataclass
class CandidateReport:
    """Ledger row: how one candidate structure reconstructs the ED.

    ``errors`` is None for candidates skipped because a sparser one had
    already qualified.
    """

    structure: NarxStructure
    errors: np.ndarray | None
    sources: list = field(default_factory=list)

    @property
    def n_terms(self) -> int:
        return len(self.structure)

    @property
    def evaluated(self) -> bool:
        return self.errors is not None

    @property
    def mean_error(self) -> float:
        return _mean_error(self.errors) if self.evaluated else np.nan

    @property
    def n_failed(self) -> int:
        return int(np.sum(np.isinf(self.errors))) if self.evaluated else 0

    def row(self) -> dict:
        return {
            "n_terms": self.n_terms,
            "mean_error": self.mean_error,
            "n_failed": self.n_failed,
            "evaluated": self.evaluated,
            "sources": list(self.sources),
            "terms": self.structure.labels(),
        }


@dataclass
class NarxModel:
    """Selected structure with per-experiment OLS coefficients and free-run errors."""

    structure: NarxStructure
    coefficients: np.ndarray  # (N, n_terms)
    errors: np.ndarray
    qualified: bool = True
    tolerance: float = 1e-3
    ledger: list = field(default_factory=list)
    y_scale: float = 1.0
    variances: np.ndarray | None = None  # OLS sampling variances, same shape as coefficients

    @property
    def mean_error(self) -> float:
        return _mean_error(self.errors)


def _mean_error(errors) -> float:
    # NaN marks runs skipped after a failure; any failure makes the mean infinite
    errors = np.asarray(errors, dtype=float)
    if np.any(np.isinf(errors)):
        return np.inf
    return float(np.mean(errors))


def fit_experiment(structure: NarxStructure, exp: Experiment) -> np.ndarray:
    """OLS coefficients of ``structure`` on one experiment (one-step-ahead fit)."""
    prob = assemble_regression(exp, structure)
    return ols_fit(prob.Phi, prob.target)


def coefficient_variances(structure: NarxStructure, experiments) -> np.ndarray:
    """Sampling variances of the per-experiment OLS coefficients, shape (N, n_terms)."""
    out = np.full((len(experiments), len(structure)), np.nan)
    for k, exp in enumerate(experiments):
        prob = assemble_regression(exp, structure)
        try:
            out[k] = ols_fit_with_variance(prob.Phi, prob.target)[1]
        except SingularMatrixError:
            pass
    return out


def reconstruct(structure, coefficients, exp: Experiment, limit: float = np.inf) -> tuple:
    """Free-run over the recorded excitation; returns (series or None, relative error)."""
    try:
        y_hat = free_run(structure, coefficients, exp.x, exp.y[: structure.max_lag], limit)
    except InstabilityError:
        return None, np.inf
    return y_hat, relative_error(exp.y, y_hat)


def evaluate_candidate(structure, experiments, limit: float, stop_on_failure: bool = False):
    """OLS coefficients and free-run errors of one structure on every experiment.

    A singular fit or a diverging free-run gives an infinite error. With
    ``stop_on_failure`` the remaining experiments are skipped (left NaN).
    """
    N = len(experiments)
    errors = np.full(N, np.nan)
    coefs = np.full((N, len(structure)), np.nan)
    for k, exp in enumerate(experiments):
        try:
            theta = fit_experiment(structure, exp)
        except SingularMatrixError:
            errors[k] = np.inf
            if stop_on_failure:
                break
            continue
        coefs[k] = theta
        errors[k] = reconstruct(structure, theta, exp, limit)[1]
        if stop_on_failure and not np.isfinite(errors[k]):
            break
    return coefs, errors


def select_best_structure(
    candidates,
    experiments: Sequence[Experiment],
    tolerance: float = 1e-3,
    divergence_factor: float = DIVERGENCE_FACTOR,
    exhaustive: bool = False,
) -> NarxModel:
    """Fewest-term candidate whose mean free-run error is below ``tolerance``.

    Ties go to the smaller mean error, then to the earlier candidate. When no
    candidate qualifies the one with the smallest mean error is returned with
    ``qualified = False``. Candidates are evaluated by increasing size and,
    unless ``exhaustive``, larger ones are skipped once some size qualifies
    (this does not change the outcome).
    """
    candidates = [c if isinstance(c, Candidate) else Candidate(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidates to evaluate")
    limit = divergence_factor * response_scale(experiments)
    order = sorted(range(len(candidates)), key=lambda i: (len(candidates[i].structure), i))
    results: dict = {}
    qualified_size = None
    for i in order:
        size = len(candidates[i].structure)
        if qualified_size is not None and size > qualified_size and not exhaustive:
            break
        results[i] = evaluate_candidate(candidates[i].structure, experiments, limit, stop_on_failure=not exhaustive)
        if _mean_error(results[i][1]) < tolerance and qualified_size is None:
            qualified_size = size
    ledger = [
        CandidateReport(c.structure, results[i][1] if i in results else None, c.sources)
        for i, c in enumerate(candidates)
    ]
    means = np.array([r.mean_error if r.evaluated else np.inf for r in ledger])
    ok = np.flatnonzero(means < tolerance)
    if ok.size:
        best = min(ok, key=lambda i: (len(candidates[i].structure), means[i], i))
    elif np.any(np.isfinite(means)):
        best = int(np.argmin(means))
    else:
        if not exhaustive:
            # failures were cut short; redo the full evaluation for a fair fallback
            return select_best_structure(candidates, experiments, tolerance, divergence_factor, True)
        if not any(np.any(np.isfinite(r.errors)) for r in ledger):
            raise SelectionError("every candidate failed on every experiment:\n" + format_ledger(ledger))
        fails = np.array([r.n_failed for r in ledger])
        med = np.array([np.nanmedian(r.errors) for r in ledger])
        best = min(range(len(ledger)), key=lambda i: (fails[i], med[i], i))
    coefs, errors = results[best]
    return NarxModel(
        candidates[best].structure,
        coefs,
        errors,
        qualified=bool(ok.size),
        tolerance=tolerance,
        ledger=ledger,
        y_scale=response_scale(experiments),
        variances=coefficient_variances(candidates[best].structure, experiments),
    )


def format_ledger(ledger) -> str:
    """Text table of a candidate ledger.

    Accepts ``CandidateReport`` objects or their ``row()`` dicts (as stored in
    a fitted surrogate's ``info["candidate_ledger"]``).
    """
    lines = [f"{'#':>3} {'terms':>5} {'mean_err':>12} {'failed':>6}  structure"]
    for i, r in enumerate(ledger):
        r = r if isinstance(r, dict) else r.row()
        err = f"{r['mean_error']:>12.4e}" if r["evaluated"] else f"{'skipped':>12}"
        lines.append(f"{i:>3} {r['n_terms']:>5} {err} {r['n_failed']:>6}  {', '.join(r['terms'])}")
    return "\n".join(lines)


def structure_to_json(structure: NarxStructure) -> str:
    return json.dumps({"dictionary": structure.dictionary.to_list(), "indices": list(structure.indices)})


def structure_from_json(text: str) -> NarxStructure:
    d = json.loads(text)
    return NarxStructure(NarxDictionary.from_list(d["dictionary"]), tuple(d["indices"]))


# -- experiment I/O ---------------------------------------------------------

def write_experiment(exp: Experiment, path) -> None:
    """CSV with columns t, x, y (plus extra channels) and a JSON sidecar."""
    path = Path(path)
    cols = [exp.t, exp.x, exp.y] + [np.asarray(v) for v in exp.extra.values()]
    header = ",".join(["t", "x", "y"] + list(exp.extra))
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")
    sidecar = {"xi": exp.xi.tolist(), "dt": exp.dt}
    path.with_suffix(".json").write_text(json.dumps(sidecar))


def read_experiment(path, xi=None, dt=None) -> Experiment:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = path.with_suffix(".json")
    if side.exists() and (xi is None or dt is None):
        meta = json.loads(side.read_text())
        xi = meta["xi"] if xi is None else xi
        dt = meta["dt"] if dt is None else dt
    if dt is None:
        dt = float(data[1, 0] - data[0, 0])
    cols = {h: data[:, i] for i, h in enumerate(header)}
    extra = {h: cols[h] for h in header if h not in ("t", "x", "y")}
    return Experiment(np.asarray(xi if xi is not None else [], float), cols["x"], cols["y"], float(dt), extra)


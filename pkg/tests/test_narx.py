import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcnarx.narx import (
    DegenerateDenominatorError,
    Experiment,
    Factor,
    InstabilityError,
    NarxDictionary,
    NarxStructure,
    NarxTerm,
    SelectionError,
    assemble_regression,
    boucwen_dictionary,
    build_dictionary,
    build_monomial_dictionary,
    duffing_dictionary,
    fit_experiment,
    format_ledger,
    free_run,
    one_step_ahead,
    quarter_car_dictionary,
    read_experiment,
    relative_error,
    select_best_structure,
    select_candidates,
    structure_from_json,
    structure_to_json,
    write_experiment,
)
from pcnarx.sparsereg import ols_fit

T = NarxTerm.parse


def simulate(structure, coef, x, n0=None):
    """Reference recursion written term by term in plain Python."""
    n0 = structure.max_lag if n0 is None else n0
    y = np.zeros_like(x)
    for t in range(n0, len(x)):
        acc = 0.0
        for c, term in zip(coef, structure.terms):
            v = c
            for f in term.factors:
                s = x[t - f.lag] if f.channel == "x" else y[t - f.lag]
                v *= (abs(s) if f.absolute else s) ** f.exponent
            acc += v
        y[t] = acc
    return y


class TestTerms:
    @pytest.mark.parametrize("label", ["1", "x(t)", "y(t-1)^3", "y(t-4)*x(t-4)^2", "y(t-2)*|y(t-1)|", "|y(t-1)|*x(t-3)"])
    def test_parse_roundtrip(self, label):
        assert T(label).label() == label

    def test_unique_identity(self):
        assert T("x(t)*y(t-1)") == T("y(t-1)*x(t)")
        assert len({T("y(t-1)"), T("y(t-1)^1"), T("y(t-2)")}) == 2

    @pytest.mark.parametrize("factor", [("z", 1), ("y", 0), ("x", -1), ("x", 1, 0)])
    def test_invalid(self, factor):
        with pytest.raises(ValueError):
            NarxTerm((factor,))

    def test_dictionary_rejects_duplicates(self):
        with pytest.raises(ValueError):
            NarxDictionary((T("1"), T("x(t)"), T("x(t)")))


def brute_force_count(y_lags, x_lags, cross=True):
    terms = {()}
    for l, m in itertools.product(range(4), range(2)):
        if 0 < l + m <= 3 and (cross or not (l and m)):
            for j in y_lags if l else [None]:
                for k in x_lags if m else [None]:
                    terms.add((l, j, m, k))
    return len(terms)


class TestDictionaries:
    def test_quarter_car_size(self):
        d = quarter_car_dictionary()
        assert len(d) == brute_force_count(range(1, 5), range(5)) == 58

    def test_duffing_size(self):
        assert len(duffing_dictionary()) == brute_force_count(range(1, 3), range(3), cross=False) == 10

    def test_boucwen_size(self):
        d = boucwen_dictionary()
        assert len(d) == 19
        assert sum(any(f.absolute for f in t.factors) for t in d) == 9

    def test_monomial_size_and_containment(self):
        mono = build_monomial_dictionary(range(1, 5), range(5))
        # monomials of degree <= 3 in 9 variables, at most linear in the 5 x variables
        assert len(mono) == 1 + 9 + (10 + 4 * 5) + (20 + 10 * 5) == 110
        assert set(quarter_car_dictionary().terms) <= set(mono.terms)

    def test_constant_first_and_graded(self):
        d = quarter_car_dictionary()
        assert d.terms[0].is_constant and d.constant_index == 0
        degrees = [t.degree for t in d]
        assert degrees == sorted(degrees)
        assert d.max_lag == 4 and d.n_x == 4 and d.n_y == 4

    def test_empty_admissible_set(self):
        with pytest.raises(ValueError):
            build_dictionary([1], [0], max_degree=0)
        with pytest.raises(ValueError):
            build_dictionary([0], [0])

    def test_deterministic(self):
        assert quarter_car_dictionary().labels() == quarter_car_dictionary().labels()


@pytest.fixture
def arx_exp():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(200)
    y = np.zeros(200)
    for t in range(1, 200):
        y[t] = 0.5 * y[t - 1] + 0.3 * x[t]
    return Experiment([0.0], x, y, 0.01)


class TestRegression:
    def test_constant_dictionary(self, arx_exp):
        d = NarxDictionary((T("1"), T("y(t-3)")))
        prob = assemble_regression(arx_exp, NarxStructure(d, (0,)))
        assert np.all(prob.Phi == 1.0)
        assert ols_fit(prob.Phi, prob.target)[0] == pytest.approx(arx_exp.y[3:].mean())

    def test_row_count(self, arx_exp):
        prob = assemble_regression(arx_exp, quarter_car_dictionary())
        assert prob.Phi.shape == (arx_exp.T - 4, 58)
        assert prob.first_row == 4

    def test_row_contents(self, arx_exp):
        d = NarxDictionary((T("1"), T("y(t-2)^2*x(t-1)"), T("|y(t-1)|")))
        prob = assemble_regression(arx_exp, d)
        x, y = arx_exp.x, arx_exp.y
        t = 10
        np.testing.assert_allclose(prob.Phi[t - 2], [1.0, y[t - 2] ** 2 * x[t - 1], abs(y[t - 1])])
        assert prob.target[t - 2] == y[t]

    def test_arx_recovery(self, arx_exp):
        d = NarxDictionary((T("1"), T("y(t-1)"), T("x(t)")))
        theta = fit_experiment(NarxStructure(d, (0, 1, 2)), arx_exp)
        np.testing.assert_allclose(theta, [0.0, 0.5, 0.3], atol=1e-10)

    def test_too_short(self):
        with pytest.raises(ValueError, match="too short"):
            assemble_regression(Experiment([], np.ones(14), np.ones(14), 1.0), quarter_car_dictionary())

    def test_one_step_ahead_identities(self, arx_exp):
        d = duffing_dictionary()
        s = NarxStructure(d, (0, 1, 3, 8))
        theta = fit_experiment(s, arx_exp)
        prob = assemble_regression(arx_exp, s)
        pred = one_step_ahead(theta, s, arx_exp)
        res = arx_exp.y[2:] - pred[2:]
        np.testing.assert_allclose(res, prob.target - prob.Phi @ theta, atol=1e-14)
        lstsq_ssr = np.linalg.lstsq(prob.Phi, prob.target, rcond=None)[1][0]
        assert np.sum(res**2) == pytest.approx(lstsq_ssr, rel=1e-8, abs=1e-28)

    def test_one_step_exact_model(self, arx_exp):
        d = NarxDictionary((T("1"), T("y(t-1)"), T("x(t)")))
        np.testing.assert_allclose(one_step_ahead([0.5, 0.3], NarxStructure(d, (1, 2)), arx_exp), arx_exp.y, atol=1e-15)


class TestFreeRun:
    def test_geometric_decay(self):
        s = NarxStructure(NarxDictionary((T("1"), T("y(t-1)"))), (1,))
        y = free_run(s, [0.5], np.zeros(30), [1.0])
        np.testing.assert_allclose(y, 0.5 ** np.arange(30), rtol=1e-15)

    def test_reproduces_training(self, arx_exp):
        s = NarxStructure(NarxDictionary((T("1"), T("y(t-1)"), T("x(t)"))), (1, 2))
        y = free_run(s, [0.5, 0.3], arx_exp.x, arx_exp.y[:1])
        np.testing.assert_allclose(y, arx_exp.y, atol=1e-8)

    def test_matches_reference_recursion(self):
        rng = np.random.default_rng(2)
        d = boucwen_dictionary()
        s = NarxStructure(d, (1, 2, 5, 10, 14))
        coef = [0.9, -0.2, 0.1, -0.05, 0.02]
        x = rng.standard_normal(300)
        np.testing.assert_allclose(free_run(s, coef, x, np.zeros(4)), simulate(s, coef, x), rtol=1e-12, atol=1e-15)

    def test_instability(self):
        s = NarxStructure(NarxDictionary((T("1"), T("y(t-1)"))), (1,))
        with pytest.raises(InstabilityError) as err:
            free_run(s, [2.0], np.zeros(50), [1.0], limit=1000.0)
        assert err.value.instant == 10

    def test_overflow_is_instability(self):
        s = NarxStructure(NarxDictionary((T("1"), T("y(t-1)^3"))), (1,))
        with pytest.raises(InstabilityError):
            free_run(s, [10.0], np.zeros(50), [10.0])

    def test_argument_checks(self):
        s = NarxStructure(duffing_dictionary(), (0, 2))
        with pytest.raises(ValueError):
            free_run(s, [1.0], np.zeros(10), [0, 0])
        with pytest.raises(ValueError):
            free_run(s, [1.0, 1.0], np.zeros(10), [0])


class TestRelativeError:
    def test_examples(self):
        y = np.array([1.0, 2.0, 3.0])
        assert relative_error(y, y) == 0.0
        assert relative_error(y, np.full(3, 2.0)) == 1.0
        assert relative_error(y, [1.0, 2.0, 4.0]) == pytest.approx(0.5)

    def test_constant_reference(self):
        with pytest.raises(DegenerateDenominatorError):
            relative_error(np.ones(4), np.zeros(4))

    @given(
        seed=st.integers(0, 10_000),
        a=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3),
        b=st.floats(-1e3, 1e3),
    )
    def test_affine_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        y, yh = rng.standard_normal(20), rng.standard_normal(20)
        assert relative_error(a * y + b, a * yh + b) == pytest.approx(relative_error(y, yh), rel=1e-7)


def nonlinear_ed(n=6, length=400, seed=0):
    """Noise-free experiments of y = 0.01 + 0.5y(t-1) + 0.4x(t) + 0.2x(t-1) - 0.2y(t-1)^3."""
    d = duffing_dictionary()
    coef = {"1": 0.01, "y(t-1)": 0.5, "x(t)": 0.4, "x(t-1)": 0.2, "y(t-1)^3": -0.2}
    true = NarxStructure.from_terms(d, map(T, coef))
    theta = [coef[label] for label in true.labels()]
    rng = np.random.default_rng(seed)
    exps = []
    for k in range(n):
        x = (0.5 + 0.1 * k) * rng.standard_normal(length)
        exps.append(Experiment([k], x, simulate(true, theta, x), 0.05))
    return d, true, theta, exps


class TestSelection:
    @pytest.mark.parametrize("seed", range(3))
    def test_recovers_generating_model(self, seed):
        d, true, theta, exps = nonlinear_ed(seed=seed)
        cands = select_candidates(exps, d, threshold=0.5)
        model = select_best_structure(cands, exps, tolerance=1e-12)
        assert model.structure == true
        assert model.qualified
        assert np.all(model.errors < 1e-12)
        np.testing.assert_allclose(model.coefficients, np.tile(theta, (len(exps), 1)), atol=1e-8)

    def test_cut_mode_contains_true_support(self):
        d, true, _, exps = nonlinear_ed()
        cands = select_candidates(exps, d, threshold=0.5, mode="cut")
        assert any(set(true.indices) <= set(c.structure.indices) for c in cands)

    def test_fallback_to_top_k(self):
        d, _, _, exps = nonlinear_ed()
        peaks = [np.max(np.abs(e.y)) for e in exps]
        cands = select_candidates(exps, d, threshold=1e9, top_k=2)
        used = {k for c in cands for k in c.sources}
        assert used == set(np.argsort(peaks)[-2:])

    def test_deduplicated_in_discovery_order(self):
        d, _, _, exps = nonlinear_ed()
        cands = select_candidates(exps, d, threshold=0.0)
        keys = [c.structure.indices for c in cands]
        assert len(keys) == len(set(keys))
        assert cands[0].sources[0] == 0

    def test_sparser_structure_within_tolerance_wins(self):
        d, true, _, exps = nonlinear_ed()
        cands = select_candidates(exps, d, threshold=0.5)
        loose = select_best_structure(cands, exps, tolerance=1e-3)
        assert len(loose.structure) <= len(true)
        assert loose.mean_error < 1e-3

    def test_single_candidate_unchanged(self):
        d, true, _, exps = nonlinear_ed()
        assert select_best_structure([true], exps).structure == true

    def test_fewest_terms_wins_then_error(self):
        d, true, _, exps = nonlinear_ed()
        bigger = NarxStructure(d, true.indices + (5,))
        model = select_best_structure([bigger, true], exps, tolerance=1e-12, exhaustive=True)
        assert model.structure == true
        assert [r.n_terms for r in model.ledger] == [6, 5]

    def test_lazy_matches_exhaustive(self):
        d, _, _, exps = nonlinear_ed()
        cands = select_candidates(exps, d, threshold=0.0)
        lazy = select_best_structure(cands, exps)
        full = select_best_structure(cands, exps, exhaustive=True)
        assert lazy.structure == full.structure
        assert any(not r.evaluated for r in lazy.ledger) or len(cands) == 1
        assert all(r.evaluated for r in full.ledger)

    def test_non_qualifying_returns_best(self):
        d, _, _, exps = nonlinear_ed()
        weak = [NarxStructure(d, (0, 3)), NarxStructure(d, (1, 3))]
        model = select_best_structure(weak, exps, tolerance=1e-30)
        assert not model.qualified
        assert model.mean_error == min(r.mean_error for r in model.ledger)
        assert "mean_err" in format_ledger(model.ledger)
        assert format_ledger([r.row() for r in model.ledger]) == format_ledger(model.ledger)

    def test_all_unstable(self):
        d, _, _, exps = nonlinear_ed()
        # a tiny divergence factor makes every free-run fail
        with pytest.raises(SelectionError):
            select_best_structure([NarxStructure(d, (1, 3))], exps, divergence_factor=1e-9)

    def test_empty_candidates(self):
        _, _, _, exps = nonlinear_ed()
        with pytest.raises(ValueError):
            select_best_structure([], exps)


class TestIO:
    def test_structure_json(self):
        s = NarxStructure(boucwen_dictionary(), (0, 3, 11))
        assert structure_from_json(structure_to_json(s)) == s

    def test_experiment_csv(self, tmp_path, arx_exp):
        arx_exp.extra["displacement"] = np.cumsum(arx_exp.y)
        write_experiment(arx_exp, tmp_path / "e.csv")
        back = read_experiment(tmp_path / "e.csv")
        np.testing.assert_array_equal(back.y, arx_exp.y)
        np.testing.assert_array_equal(back.x, arx_exp.x)
        np.testing.assert_array_equal(back.extra["displacement"], arx_exp.extra["displacement"])
        assert back.dt == arx_exp.dt
        assert back.xi.tolist() == [0.0]

    def test_experiment_validation(self):
        with pytest.raises(ValueError):
            Experiment([], np.ones(3), np.ones(4), 0.1)
        with pytest.raises(ValueError):
            Experiment([], np.ones(3), np.ones(3), 0.0)

    def test_factor_label(self):
        assert Factor("x", 0, 2).label() == "x(t)^2"

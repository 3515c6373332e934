import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftboost.metrics import MetricsReport, evaluate, mae, mape, mse, r2, rank_models, rmse


# independent brute-force implementations, kept loop-based on purpose
def _oracle_r2(y, p):
    ybar = sum(y) / len(y)
    ss_res = sum((yi - pi) ** 2 for yi, pi in zip(y, p))
    ss_tot = sum((yi - ybar) ** 2 for yi in y)
    return 1.0 - ss_res / ss_tot


def _oracle_mae(y, p):
    return sum(abs(pi - yi) for yi, pi in zip(y, p)) / len(y)


def _oracle_mse(y, p):
    return sum((pi - yi) ** 2 for yi, pi in zip(y, p)) / len(y)


def _oracle_mape(y, p):
    return 100.0 * sum(abs(yi - pi) / abs(yi) for yi, pi in zip(y, p)) / len(y)


def test_hand_case():
    y = np.array([2.0, 4.0])
    p = np.array([3.0, 3.0])
    assert r2(y, p) == 0.0
    assert mae(y, p) == 1.0
    assert mse(y, p) == 1.0
    assert rmse(y, p) == 1.0
    assert mape(y, p) == 37.5


def test_perfect_predictions():
    y = np.array([1.0, 2.0, 5.0])
    assert r2(y, y) == 1.0
    assert mae(y, y) == 0.0
    assert mse(y, y) == 0.0
    assert rmse(y, y) == 0.0
    assert mape(y, y) == 0.0


def test_mean_prediction_gives_zero_r2():
    y = np.array([1.0, 2.0, 3.0, 10.0])
    p = np.full(4, y.mean())
    assert r2(y, p) == pytest.approx(0.0, abs=1e-15)


def test_mae_hand():
    assert mae(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 4.0])) == pytest.approx(1 / 3)


def test_mae_translation_invariant():
    y = np.array([1.0, 5.0, -2.0])
    p = np.array([0.5, 6.0, -1.0])
    assert mae(y + 17.0, p + 17.0) == pytest.approx(mae(y, p))


def test_rmse_scales_homogeneously():
    y = np.array([1.0, 5.0, -2.0])
    p = np.array([0.5, 6.0, -1.0])
    assert rmse(3.0 * y, 3.0 * p) == pytest.approx(3.0 * rmse(y, p))


def test_oracle_agreement_1000_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        y = rng.normal(5.0, 2.0, size=n)
        y[np.abs(y) < 0.5] = 0.5  # keep mape defined
        p = y + rng.normal(0, 1.0, size=n)
        if np.var(y) == 0:
            continue
        assert r2(y, p) == pytest.approx(_oracle_r2(y, p), rel=1e-12, abs=1e-12)
        assert mae(y, p) == pytest.approx(_oracle_mae(y, p), rel=1e-12)
        assert mse(y, p) == pytest.approx(_oracle_mse(y, p), rel=1e-12)
        assert rmse(y, p) == pytest.approx(np.sqrt(_oracle_mse(y, p)), rel=1e-12)
        assert mape(y, p) == pytest.approx(_oracle_mape(y, p), rel=1e-12)


def test_r2_constant_target_errors():
    with pytest.raises(ValueError):
        r2(np.array([2.0, 2.0]), np.array([1.0, 3.0]))


def test_mape_zero_actual_errors():
    with pytest.raises(ValueError):
        mape(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


def test_length_mismatch_errors():
    with pytest.raises(ValueError):
        mae(np.array([1.0, 2.0]), np.array([1.0]))


@given(
    st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
    st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50),
)
@settings(max_examples=200)
def test_mae_never_exceeds_rmse(ys, ps):
    n = min(len(ys), len(ps))
    y = np.array(ys[:n])
    p = np.array(ps[:n])
    assert mae(y, p) <= rmse(y, p) + 1e-9


def test_r2_affine_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y = rng.normal(size=10)
        p = rng.normal(size=10)
        a = rng.uniform(0.5, 3.0) * rng.choice([-1.0, 1.0])
        b = rng.normal()
        assert r2(a * y + b, a * p + b) == pytest.approx(r2(y, p), rel=1e-9, abs=1e-9)


def test_evaluate_bundles_everything():
    y = np.array([2.0, 4.0])
    p = np.array([3.0, 3.0])
    rep = evaluate(p, y, "toy", training_time_s=0.5)
    assert rep.model_name == "toy"
    assert rep.n == 2
    assert (rep.r2, rep.mae, rep.mse, rep.rmse, rep.mape) == (0.0, 1.0, 1.0, 1.0, 37.5)
    assert rep.rmse**2 == pytest.approx(rep.mse, rel=1e-12)
    assert rep.mae <= rep.rmse


def test_report_round_trips_through_dict():
    rep = MetricsReport("m", 10, 0.9, 0.1, 0.02, 0.1414, 12.0, 0.003)
    assert MetricsReport.from_dict(rep.to_dict()) == rep


def _rep(name, r2v, rmsev=1.0):
    return MetricsReport(name, 5, r2v, 0.1, rmsev**2, rmsev, 1.0, 0.0)


def test_rank_models_matches_reference_ordering():
    # headline ordering from the comparison tables: 0.9076 first
    reports = [_rep("GBM", 0.9076), _rep("GBR", 0.8968), _rep("RF", 0.8883)]
    shuffled = [reports[1], reports[2], reports[0]]
    assert [r.model_name for r in rank_models(shuffled)] == ["GBM", "GBR", "RF"]


def test_rank_models_singleton():
    rep = _rep("only", 0.5)
    assert rank_models([rep]) == [rep]


def test_rank_models_ties_alphabetical():
    a, b = _rep("beta", 0.5), _rep("alpha", 0.5)
    assert [r.model_name for r in rank_models([a, b])] == ["alpha", "beta"]


def test_rank_models_rmse_breaks_r2_ties():
    a, b = _rep("worse", 0.5, rmsev=2.0), _rep("better", 0.5, rmsev=1.0)
    assert [r.model_name for r in rank_models([a, b])] == ["better", "worse"]


def test_rank_is_permutation_and_idempotent():
    rng = np.random.default_rng(0)
    reports = [_rep(f"m{i}", float(rng.uniform(-1, 1))) for i in range(10)]
    ranked = rank_models(reports)
    assert sorted(r.model_name for r in ranked) == sorted(r.model_name for r in reports)
    assert rank_models(ranked) == ranked

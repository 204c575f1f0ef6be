import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from immax.data import Dataset, ImbalanceProfile, default_generators, generate_imbalanced
from immax.losses import LossConfigError, LossSpec
from immax.models import MLP, BinaryLinear, MultiLinear, ScorerFormatError, loads_scorer
from immax.training import (
    StratificationError,
    TrainConfig,
    TrainingDiverged,
    build_candidates,
    cross_validate,
    evaluate,
    immax_alpha_grid,
    immax_binary_objective,
    immax_multi_objective,
    immax_rho_grid,
    objective,
    optimal_rho_center,
    stratified_folds,
    train,
    window,
)

HINGE = LossSpec("immax-binary", {"alpha": 0.3})


@pytest.fixture
def binary_data():
    profile = ImbalanceProfile("long-tailed", 10, 2, 200)
    return generate_imbalanced(profile, default_generators(2, separation=2.0), seed=5)


@pytest.fixture
def multi_data():
    profile = ImbalanceProfile("long-tailed", 5, 3, 60)
    return generate_imbalanced(profile, default_generators(3, separation=3.0), seed=6)


def two_point():
    return Dataset(np.array([[1.0], [-1.0]]), np.array([0, 1]), 2)


def test_binary_objective_examples(binary_data):
    zero = BinaryLinear(binary_data.dim)
    assert immax_binary_objective(zero, binary_data, 5.0, 0.3, "hinge") == 1.0
    assert immax_binary_objective(zero, binary_data, 5.0, 0.3, "logistic") == pytest.approx(1.0)
    assert immax_binary_objective(BinaryLinear(1, [1.0]), two_point(), 0.0, 0.5) == 0.0


def test_multi_objective_examples(multi_data, rng):
    zero = MultiLinear(multi_data.dim, 3)
    assert immax_multi_objective(zero, multi_data, 1.0, [0.3, 1, 2]) == pytest.approx(math.log(3))
    sc = MultiLinear(multi_data.dim, 3, rng.normal(size=(3, 2)), rng.normal(size=3))
    np.testing.assert_allclose(
        immax_multi_objective(sc, multi_data, 0.1, [1, 1, 1]),
        objective(sc, multi_data, LossSpec("ce"), 0.1), rtol=1e-14)
    one = Dataset(np.array([[1.0]]), np.array([0]), 2)
    w = MultiLinear(1, 2, [[1.0], [0.0]])
    assert immax_multi_objective(w, one, 0.0, [0.5, 1]) == pytest.approx(math.log1p(math.exp(-2)))


@pytest.mark.parametrize("solver", ["gd", "dual"])
def test_two_point_separable(solver):
    res = train(two_point(), TrainConfig(HINGE, lam=1e-3, solver=solver))
    assert res.trace[-1].train_error == 0
    assert evaluate(res.scorer, two_point()).zero_one_error == 0


def test_huge_lambda_shrinks(binary_data):
    res = train(binary_data, TrainConfig(HINGE, lam=1e6, solver="gd"))
    assert np.linalg.norm(res.scorer.w) < 1e-5
    # with w ~ 0 the best bias leaves objective near Psi(0) = 1
    assert res.final_objective == pytest.approx(1.0, abs=0.2)


def test_gd_objective_monotone(multi_data):
    for loss in (LossSpec("immax", {"rho": [1.0, 0.6, 0.4]}), LossSpec("ce"), LossSpec("ldam", {"C": 0.5})):
        res = train(multi_data, TrainConfig(loss, epochs=100))
        obj = np.array([r.objective for r in res.trace])
        assert np.all(np.diff(obj) <= 1e-12 * np.abs(obj[:-1]))


def test_deterministic_trajectories(multi_data):
    cfg = TrainConfig(LossSpec("equal", {"p": 0.5, "eq_lambda": 0.2}), optimizer="sgd",
                      batch_size=16, lr=0.1, epochs=20, seed=9, schedule="cosine")
    a, b = train(multi_data, cfg), train(multi_data, cfg)
    np.testing.assert_array_equal(a.scorer.get_params(), b.scorer.get_params())
    assert [r.objective for r in a.trace] == [r.objective for r in b.trace]
    c = train(multi_data, replace(cfg, seed=10))
    assert not np.array_equal(a.scorer.get_params(), c.scorer.get_params())


def test_dual_matches_gd_optimum(binary_data):
    cfg = TrainConfig(HINGE, lam=1e-2)
    dual = train(binary_data, replace(cfg, solver="dual"))
    assert dual.converged
    gd = train(binary_data, replace(cfg, solver="gd", epochs=3000))
    # the exact solver is at least as good as long subgradient-free GD
    assert dual.final_objective <= gd.final_objective + 1e-9
    assert dual.final_objective == pytest.approx(gd.final_objective, rel=5e-2)


@given(seed=st.integers(0, 10_000))
def test_dual_solution_is_local_min(seed):
    # convexity: no small perturbation may lower the objective
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    y = (X[:, 0] + 0.5 * rng.normal(size=30) < 0).astype(int)
    y[:2] = [0, 1]
    ds = Dataset(X, y, 2)
    alpha = float(rng.uniform(0.2, 0.8))
    spec = LossSpec("immax-binary", {"alpha": alpha})
    res = train(ds, TrainConfig(spec, lam=0.05, solver="dual"))
    base = objective(res.scorer, ds, spec, 0.05)
    theta = res.scorer.get_params()
    probe = res.scorer.copy()
    for d in rng.normal(size=(20, theta.size)):
        probe.set_params(theta + 1e-4 * d / np.linalg.norm(d))
        assert objective(probe, ds, spec, 0.05) >= base - 1e-9


def test_norm_cap(binary_data):
    res = train(binary_data, TrainConfig(LossSpec("logistic"), lam=0.0, norm_cap=0.5, epochs=200))
    assert res.scorer.norm() <= 0.5 + 1e-12


def test_divergence_raises(binary_data):
    cfg = TrainConfig(LossSpec("exponential"), lam=0.0, line_search=False, lr=1e4, epochs=50,
                      solver="gd")
    with pytest.raises(TrainingDiverged) as info, np.errstate(all="ignore"):
        train(binary_data, cfg)
    assert np.all(np.isfinite(info.value.scorer.get_params()))


def test_loss_scorer_mismatch(multi_data):
    with pytest.raises(LossConfigError):
        train(multi_data, TrainConfig(HINGE))


def test_mlp_trains(multi_data):
    res = train(multi_data, TrainConfig(LossSpec("immax", {"rho": [1, 1, 1]}), model="mlp",
                                        hidden=8, epochs=200))
    assert res.trace[-1].objective < res.trace[0].objective
    assert isinstance(res.scorer, MLP)


def test_evaluate_examples():
    X = np.array([[1.0], [2.0], [-1.0], [-3.0]])
    ds = Dataset(X, np.array([0, 0, 1, 1]), 2)
    assert evaluate(BinaryLinear(1, [1.0]), ds).zero_one_error == 0
    const = evaluate(BinaryLinear(1, [0.0], b=1.0), ds)
    assert const.zero_one_error == 0.5
    assert const.per_class_errors == [0.0, 1.0]
    y = np.array([0, 1, 2, 2, 1, 2])
    multi = Dataset(np.zeros((6, 2)), y, 3)
    rep = evaluate(MultiLinear(2, 3), multi)
    assert rep.zero_one_error == pytest.approx(np.mean(y != 2))
    assert rep.confusion == [[0, 0, 1], [0, 0, 2], [0, 0, 3]]


@pytest.mark.parametrize("scorer, dim", [
    (BinaryLinear(3, [0.1, -2.0, 1e-17], b=0.3, fit_bias=False), 3),
    (MultiLinear(2, 3, np.arange(6.0).reshape(3, 2) / 7, [1, 2, 3]), 2),
    (MLP(2, 5, 3, seed=4), 2),
    (MLP(2, 4, 1, seed=1), 2),
])
def test_scorer_roundtrip(scorer, dim):
    back = loads_scorer(scorer.dumps())
    assert type(back) is type(scorer)
    assert back.fit_bias == scorer.fit_bias
    np.testing.assert_array_equal(back.get_params(), scorer.get_params())
    X = np.random.default_rng(0).normal(size=(10, dim))
    np.testing.assert_array_equal(back.predict(X), scorer.predict(X))


def test_scorer_format_errors():
    with pytest.raises(ScorerFormatError):
        loads_scorer("garbage\n")
    with pytest.raises(ScorerFormatError, match="version"):
        loads_scorer("immax-scorer 9\nkind BinaryLinear\n")


# ---------------------------------------------------------------------------
# grids and cross-validation


def test_rho_center_ratios():
    c = optimal_rho_center([8, 1])
    assert c[0] / c[1] == pytest.approx(2.0, rel=1e-14)
    np.testing.assert_allclose(optimal_rho_center([5, 5, 5]), [1 / 3] * 3)


def test_window_open_interval():
    vals = window(0.9, 0.8, 10, 0.0, 1.0)
    assert all(0 < v < 1 for v in vals)
    assert len(vals) < 10
    assert window(1.0, 0.5, 5, 0.0) == pytest.approx([0.5, 0.75, 1.0, 1.25, 1.5])


def test_alpha_grid_centered():
    grid = immax_alpha_grid([1980, 20])
    np.testing.assert_allclose(grid, [0.164, 0.311, 0.457, 0.603, 0.749, 0.895], atol=1e-3)


def test_rho_grid_balanced_is_uniform():
    grids = immax_rho_grid([10, 10], n_values=5)
    assert len(grids) == 25
    assert [0.5, 0.5] in [[pytest.approx(v) for v in g] for g in grids]
    tied = immax_rho_grid([100, 30, 10, 5], n_values=5, max_configs=100)
    assert len(tied) == 125
    # the two tail classes share one multiplier
    t = np.array(tied) / optimal_rho_center([100, 30, 10, 5])
    np.testing.assert_allclose(t[:, 2], t[:, 3])


def test_stratified_folds(multi_data):
    parts = stratified_folds(multi_data, 3, seed=1)
    joined = np.sort(np.concatenate(parts))
    np.testing.assert_array_equal(joined, np.arange(len(multi_data)))
    for p in parts:
        assert set(multi_data.y[p]) == {0, 1, 2}
    again = stratified_folds(multi_data, 3, seed=1)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))
    with pytest.raises(StratificationError):
        stratified_folds(multi_data, 100, seed=0)


def test_cv_single_config(binary_data):
    base = TrainConfig(HINGE)
    cands = build_candidates(base, {"alpha": [0.4]})
    res = cross_validate(binary_data, cands, folds=3)
    assert res.best.params == {"alpha": 0.4, "lam": base.lam}
    assert res.best_config.loss["alpha"] == 0.4


def test_cv_prefers_on_ties(binary_data):
    base = TrainConfig(HINGE)
    # near-duplicate candidates tie on every fold
    cands = build_candidates(base, {"alpha": [0.3, 0.3000001]})
    res = cross_validate(binary_data, cands, folds=3, prefer=lambda p: abs(p["alpha"] - 0.31))
    assert res.table[0].mean_error == res.table[1].mean_error
    assert res.best.params["alpha"] == 0.3000001
    assert cross_validate(binary_data, cands, folds=3).best.params["alpha"] == 0.3


def test_cv_grid_with_lambda(binary_data):
    cands = build_candidates(TrainConfig(HINGE), {"alpha": [0.2, 0.5]}, lam_grid=[1e-3, 1e-1])
    assert [p for p, _ in cands] == [
        {"alpha": 0.2, "lam": 1e-3}, {"alpha": 0.2, "lam": 1e-1},
        {"alpha": 0.5, "lam": 1e-3}, {"alpha": 0.5, "lam": 1e-1},
    ]
